//! Parameter sweeps over `(S, D)` and the consistency and monotonicity
//! checks run on their output.

use std::fmt::{self, Write as _};
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::assumptions::{validate_assumptions, AssumptionReport};
use crate::config::{write_config, RunConfig};
use crate::error::ExperimentError;
use crate::extinction::{solve_with_diagnostics, ExtinctionProfile};
use crate::simulation::{estimate_survival, SimulationLimits, SurvivalEstimate};
use crate::spectral::{principal_eigenpair, SpectralSolution};

/// Comparison slack for deterministic orderings.
pub const ORDER_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Inconclusive => "INCONCLUSIVE",
        })
    }
}

/// One `(S, D)` cell of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub s: f64,
    pub d: f64,
    pub lambda: f64,
    pub primal_residual: f64,
    pub adjoint_residual: f64,
    pub eigen_converged: bool,
    /// Deterministic extinction probability at `x0`.
    pub p_x0: f64,
    pub generations: usize,
    pub extinction_converged: bool,
    pub fixed_point_residual: f64,
    pub survival: SurvivalEstimate,
    pub consistency: Verdict,
}

impl SweepRow {
    pub fn deterministic_survival(&self) -> f64 {
        1.0 - self.p_x0
    }

    pub fn converged(&self) -> bool {
        self.eigen_converged && self.extinction_converged
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellTiming {
    pub s: f64,
    pub d: f64,
    pub extinction_secs: f64,
    pub simulation_secs: f64,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub config: RunConfig,
    pub assumptions: AssumptionReport,
    /// Row-major: substrate outer, death rate inner.
    pub rows: Vec<SweepRow>,
    /// Extinction profiles aligned with `rows`.
    pub profiles: Vec<ExtinctionProfile>,
    /// One eigen solve per substrate, at the first death rate.
    pub spectra: Vec<SpectralSolution>,
    pub spectral_secs: Vec<f64>,
    pub timings: Vec<CellTiming>,
}

impl SweepResult {
    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(SweepRow::converged)
    }

    fn index(&self, si: usize, di: usize) -> usize {
        si * self.config.environment.death_rates.len() + di
    }
}

pub fn simulation_limits(cfg: &RunConfig) -> SimulationLimits {
    SimulationLimits {
        gen_limit: cfg.simulation.gen_limit,
        pop_cap: cfg.simulation.pop_cap,
        time_horizon: cfg.simulation.time_horizon,
    }
}

/// Spectral solve, extinction solve and Monte Carlo estimate for every cell.
pub fn run_sweep(cfg: &RunConfig) -> SweepResult {
    let model = &cfg.model;
    let env = &cfg.environment;
    let solver = &cfg.solver;
    let sim = &cfg.simulation;
    let assumptions = validate_assumptions(model, env, solver.probe);
    let d0 = env.death_rates[0];

    let spectral: Vec<(SpectralSolution, f64)> = env
        .substrates
        .par_iter()
        .map(|&s| {
            let t = Instant::now();
            let sol = principal_eigenpair(model, s, d0, solver.grid, solver.eigen_tol, solver.max_iterations);
            (sol, t.elapsed().as_secs_f64())
        })
        .collect();

    let cells = env.cells();
    let limits = simulation_limits(cfg);
    let per_cell: Vec<_> = cells
        .par_iter()
        .enumerate()
        .map(|(k, &(s, d))| {
            let t = Instant::now();
            let ext = solve_with_diagnostics(
                model,
                s,
                d,
                solver.grid,
                solver.tol,
                solver.max_generations,
                solver.from_above,
            );
            let t_ext = t.elapsed().as_secs_f64();
            let t = Instant::now();
            // Each cell gets its own key so cells are independent streams.
            let seed = sim.seed.wrapping_add((k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let est = estimate_survival(model, cfg.x0, s, d, sim.trials, limits, seed, solver.ode_rtol);
            (ext, est, t_ext, t.elapsed().as_secs_f64())
        })
        .collect();

    let n_d = env.death_rates.len();
    let mut rows = Vec::with_capacity(cells.len());
    let mut profiles = Vec::with_capacity(cells.len());
    let mut timings = Vec::with_capacity(cells.len());
    for (k, ((s, d), (ext, est, t_ext, t_sim))) in cells.iter().cloned().zip(per_cell).enumerate() {
        let spec = spectral[k / n_d].0.with_death_rate(d);
        let p_x0 = ext.profile.at(cfg.x0);
        let mut row = SweepRow {
            s,
            d,
            lambda: spec.lambda,
            primal_residual: spec.primal_residual,
            adjoint_residual: spec.adjoint_residual,
            eigen_converged: spec.converged,
            p_x0,
            generations: ext.profile.generations,
            extinction_converged: ext.profile.converged(),
            fixed_point_residual: ext.residual,
            survival: est,
            consistency: Verdict::Inconclusive,
        };
        row.consistency = classify(&row, sim.epsilon_lambda, sim.epsilon_p).0;
        rows.push(row);
        profiles.push(ext.profile);
        timings.push(CellTiming {
            s,
            d,
            extinction_secs: t_ext,
            simulation_secs: t_sim,
        });
    }
    let (spectra, spectral_secs) = spectral.into_iter().unzip();
    SweepResult {
        config: cfg.clone(),
        assumptions,
        rows,
        profiles,
        spectra,
        spectral_secs,
        timings,
    }
}

/// The sign rule linking the eigenvalue and the survival probability.
fn classify(row: &SweepRow, eps_lambda: f64, eps_p: f64) -> (Verdict, String) {
    let surv = row.deterministic_survival();
    let mc = &row.survival;
    if row.lambda > eps_lambda {
        let det_ok = surv > eps_p;
        let mc_ok = mc.lower > 0.0;
        if det_ok && mc_ok {
            (Verdict::Pass, String::new())
        } else {
            (
                Verdict::Fail,
                format!(
                    "Lambda = {} > 0 but survival {} (deterministic) / CI [{}, {}]",
                    row.lambda, surv, mc.lower, mc.upper
                ),
            )
        }
    } else if row.lambda < -eps_lambda {
        let det_ok = surv < eps_p;
        let mc_ok = mc.lower <= eps_p;
        if det_ok && mc_ok {
            (Verdict::Pass, String::new())
        } else {
            (
                Verdict::Fail,
                format!(
                    "Lambda = {} < 0 but survival {} (deterministic) / CI [{}, {}]",
                    row.lambda, surv, mc.lower, mc.upper
                ),
            )
        }
    } else {
        (Verdict::Inconclusive, format!("|Lambda| = {} within {eps_lambda}", row.lambda.abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyEntry {
    pub s: f64,
    pub d: f64,
    pub verdict: Verdict,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    pub entries: Vec<ConsistencyEntry>,
}

impl ConsistencyReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.verdict != Verdict::Fail)
    }

    pub fn count(&self, v: Verdict) -> usize {
        self.entries.iter().filter(|e| e.verdict == v).count()
    }
}

impl fmt::Display for ConsistencyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "sign consistency: {} pass, {} fail, {} inconclusive",
            self.count(Verdict::Pass),
            self.count(Verdict::Fail),
            self.count(Verdict::Inconclusive)
        )?;
        for e in &self.entries {
            writeln!(f, "  S={} D={} {} {}", e.s, e.d, e.verdict, e.reason)?;
        }
        Ok(())
    }
}

/// Lambda > 0 must go with positive survival, Lambda < 0 with none.
pub fn check_consistency(rows: &[SweepRow], eps_lambda: f64, eps_p: f64) -> ConsistencyReport {
    ConsistencyReport {
        entries: rows
            .iter()
            .map(|r| {
                let (verdict, reason) = classify(r, eps_lambda, eps_p);
                ConsistencyEntry {
                    s: r.s,
                    d: r.d,
                    verdict,
                    reason,
                }
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClaimResult {
    pub name: &'static str,
    /// Whether the model satisfies the hypotheses of the claim. Violations of
    /// ungated claims are informational.
    pub gated: bool,
    pub passed: bool,
    pub worst_violation: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    pub claims: Vec<ClaimResult>,
}

impl MonotonicityReport {
    /// True when every gated claim passes.
    pub fn passed(&self) -> bool {
        self.claims.iter().all(|c| c.passed || !c.gated)
    }

    pub fn claim(&self, name: &str) -> Option<&ClaimResult> {
        self.claims.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for MonotonicityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "monotonicity claims")?;
        for c in &self.claims {
            let tag = match (c.passed, c.gated) {
                (true, _) => "PASS",
                (false, true) => "FAIL",
                (false, false) => "INFO",
            };
            let gate = if c.gated { "" } else { " [informational]" };
            writeln!(
                f,
                "  {tag}  {}{gate}  worst violation {:e} {}",
                c.name, c.worst_violation, c.detail
            )?;
        }
        Ok(())
    }
}

pub const CLAIM_MASS: &str = "extinction non-increasing in initial mass";
pub const CLAIM_DEATH: &str = "extinction non-decreasing in death rate";
pub const CLAIM_SUBSTRATE: &str = "extinction non-increasing in substrate";
pub const CLAIM_LAMBDA: &str = "eigenvalue non-decreasing in substrate";
pub const CLAIM_SEPARABLE: &str = "separable growth: mu(S) ordering matches eigenvalue and survival ordering";
pub const CLAIM_TEMPLATE: &str = "survival ordering at every death rate implies eigenvalue ordering";
pub const CLAIM_MC: &str = "Monte Carlo survival non-decreasing in substrate up to CI overlap";

struct Tally {
    worst: f64,
    first: Option<String>,
}

impl Tally {
    fn new() -> Self {
        Self {
            worst: 0.0,
            first: None,
        }
    }

    /// Records `excess > slack` as a violation.
    fn see(&mut self, excess: f64, slack: f64, at: impl FnOnce() -> String) {
        if excess > slack {
            self.worst = self.worst.max(excess);
            if self.first.is_none() {
                self.first = Some(at());
            }
        }
    }

    fn claim(self, name: &'static str, gated: bool) -> ClaimResult {
        ClaimResult {
            name,
            gated,
            passed: self.first.is_none(),
            worst_violation: self.worst,
            detail: self.first.map(|s| format!("(first at {s})")).unwrap_or_default(),
        }
    }
}

/// Theorem-derived orderings across the sweep.
pub fn check_monotonicity(result: &SweepResult) -> MonotonicityReport {
    let env = &result.config.environment;
    let a = &result.assumptions;
    let (ns, nd) = (env.substrates.len(), env.death_rates.len());
    let row = |si: usize, di: usize| &result.rows[result.index(si, di)];
    let prof = |si: usize, di: usize| &result.profiles[result.index(si, di)].values;
    let mut claims = Vec::new();

    let mut t = Tally::new();
    for (r, p) in result.rows.iter().zip(&result.profiles) {
        for (i, w) in p.values.windows(2).enumerate() {
            t.see(w[1] - w[0], ORDER_SLACK, || format!("S={} D={} x={}", r.s, r.d, p.grid.xs[i + 1]));
        }
    }
    claims.push(t.claim(CLAIM_MASS, a.mass_monotonicity_gate()));

    let mut t = Tally::new();
    for si in 0..ns {
        for di in 1..nd {
            for (i, (lo, hi)) in prof(si, di - 1).iter().zip(prof(si, di)).enumerate() {
                t.see(lo - hi, ORDER_SLACK, || format!("S={} D={} cell {i}", env.substrates[si], env.death_rates[di]));
            }
        }
    }
    claims.push(t.claim(CLAIM_DEATH, a.standing()));

    let mut t = Tally::new();
    for di in 0..nd {
        for si in 1..ns {
            for (i, (lo, hi)) in prof(si - 1, di).iter().zip(prof(si, di)).enumerate() {
                t.see(hi - lo, ORDER_SLACK, || format!("S={} D={} cell {i}", env.substrates[si], env.death_rates[di]));
            }
        }
    }
    claims.push(t.claim(CLAIM_SUBSTRATE, a.substrate_monotonicity_gate()));

    let mut t = Tally::new();
    for di in 0..nd {
        for si in 1..ns {
            let (l0, l1) = (row(si - 1, di).lambda, row(si, di).lambda);
            t.see(l0 - l1, ORDER_SLACK, || format!("S={} D={}", env.substrates[si], env.death_rates[di]));
        }
    }
    claims.push(t.claim(CLAIM_LAMBDA, a.substrate_monotonicity_gate()));

    // Separable growth with an S-independent division rate: the ordering of
    // mu(S) decides both orderings, in both directions.
    let model = &result.config.model;
    let s_free_division = model.division.s_half_saturation.is_none();
    let mut t = Tally::new();
    let mu: Vec<f64> = env.substrates.iter().map(|&s| model.growth.speed_factor(s)).collect();
    for s1 in 0..ns {
        for s2 in 0..ns {
            if s1 == s2 || mu[s1] > mu[s2] {
                continue;
            }
            for di in 0..nd {
                let (r1, r2) = (row(s1, di), row(s2, di));
                let at = || format!("S={} vs S={} D={}", r1.s, r2.s, r1.d);
                t.see(r1.lambda - r2.lambda, ORDER_SLACK, at);
                for (i, (p1, p2)) in prof(s1, di).iter().zip(prof(s2, di)).enumerate() {
                    t.see(p2 - p1, ORDER_SLACK, || format!("S={} vs S={} D={} cell {i}", r1.s, r2.s, r1.d));
                }
            }
        }
    }
    claims.push(t.claim(CLAIM_SEPARABLE, s_free_division && a.mass_monotonicity_gate()));

    let mut t = Tally::new();
    for s1 in 0..ns {
        for s2 in 0..ns {
            if s1 == s2 {
                continue;
            }
            // Survival at s1 dominates survival at s2 everywhere, at every D.
            let dominates = (0..nd).all(|di| {
                prof(s1, di)
                    .iter()
                    .zip(prof(s2, di))
                    .all(|(p1, p2)| 1.0 - p1 >= 1.0 - p2 - ORDER_SLACK)
            });
            if dominates {
                for di in 0..nd {
                    let (r1, r2) = (row(s1, di), row(s2, di));
                    t.see(r2.lambda - r1.lambda, ORDER_SLACK, || {
                        format!("S={} dominates S={} but Lambda smaller at D={}", r1.s, r2.s, r1.d)
                    });
                }
            }
        }
    }
    claims.push(t.claim(CLAIM_TEMPLATE, a.standing()));

    let mut t = Tally::new();
    for di in 0..nd {
        for si in 1..ns {
            let (lo, hi) = (&row(si - 1, di).survival, &row(si, di).survival);
            t.see(lo.lower - hi.upper, 0.0, || {
                format!("S={} -> S={} D={}", env.substrates[si - 1], env.substrates[si], env.death_rates[di])
            });
        }
    }
    claims.push(t.claim(CLAIM_MC, a.substrate_monotonicity_gate()));

    MonotonicityReport { claims }
}

pub const SWEEP_COLUMNS: &str = "S,D,lambda,primal_residual,adjoint_residual,eigen_converged,p_x0,survival_det,generations,extinction_converged,fixed_point_residual,mc_estimate,mc_lower,mc_upper,mc_trials,mc_survived,censored_generation,censored_population,censored_time,censored_immortal,consistency";

/// Sweep table. Contains no timings, so identical inputs give identical bytes.
pub fn write_sweep_csv<W: Write>(result: &SweepResult, mut w: W) -> std::io::Result<()> {
    writeln!(w, "# config_sha256={}", result.config.hash())?;
    writeln!(w, "# x0={} seed={} trials={}", result.config.x0, result.config.simulation.seed, result.config.simulation.trials)?;
    writeln!(w, "{SWEEP_COLUMNS}")?;
    for r in &result.rows {
        let m = &r.survival;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.s,
            r.d,
            r.lambda,
            r.primal_residual,
            r.adjoint_residual,
            r.eigen_converged,
            r.p_x0,
            r.deterministic_survival(),
            r.generations,
            r.extinction_converged,
            r.fixed_point_residual,
            m.estimate,
            m.lower,
            m.upper,
            m.trials,
            m.survived,
            m.censored[0],
            m.censored[1],
            m.censored[2],
            m.censored[3],
            r.consistency
        )?;
    }
    Ok(())
}

pub fn write_timings_csv<W: Write>(result: &SweepResult, mut w: W) -> std::io::Result<()> {
    writeln!(w, "S,D,spectral_secs,extinction_secs,simulation_secs")?;
    let nd = result.config.environment.death_rates.len();
    for (k, t) in result.timings.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{},{}",
            t.s,
            t.d,
            result.spectral_secs[k / nd],
            t.extinction_secs,
            t.simulation_secs
        )?;
    }
    Ok(())
}

/// Human-readable summary of a sweep and its checks.
pub fn render_report(result: &SweepResult, consistency: &ConsistencyReport, mono: &MonotonicityReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "config sha256 {}", result.config.hash());
    let _ = writeln!(
        out,
        "{} cells, grid {}, {} trials per cell",
        result.rows.len(),
        result.config.solver.grid,
        result.config.simulation.trials
    );
    for line in &result.config.defaults_applied {
        let _ = writeln!(out, "default {line}");
    }
    let _ = writeln!(out, "\n{}", result.assumptions);
    let _ = writeln!(out, "{consistency}");
    let _ = writeln!(out, "{mono}");
    let unconverged: Vec<_> = result.rows.iter().filter(|r| !r.converged()).collect();
    if unconverged.is_empty() {
        let _ = writeln!(out, "all solvers converged");
    } else {
        for r in unconverged {
            let _ = writeln!(
                out,
                "UNCONVERGED S={} D={} (eigen {}, extinction {})",
                r.s, r.d, r.eigen_converged, r.extinction_converged
            );
        }
    }
    out
}

/// Exit status rule: zero iff all gated checks pass and every solve converged.
pub fn exit_code(result: &SweepResult, consistency: &ConsistencyReport, mono: &MonotonicityReport) -> i32 {
    if result.all_converged() && consistency.passed() && mono.passed() {
        0
    } else {
        1
    }
}

fn write_file(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<(), ExperimentError> {
    let mut buf = Vec::new();
    f(&mut buf).and_then(|_| fs::write(path, &buf)).map_err(|source| ExperimentError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `sweep.csv`, `timings.csv`, `report.txt`, `config.ini` and the
/// per-cell profile files into `dir`.
pub fn write_outputs(
    dir: &Path,
    result: &SweepResult,
    consistency: &ConsistencyReport,
    mono: &MonotonicityReport,
) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir).map_err(|source| ExperimentError::Write {
        path: dir.to_path_buf(),
        source,
    })?;
    write_file(&dir.join("sweep.csv"), |b| write_sweep_csv(result, b))?;
    write_file(&dir.join("timings.csv"), |b| write_timings_csv(result, b))?;
    write_file(&dir.join("report.txt"), |b| {
        b.extend_from_slice(render_report(result, consistency, mono).as_bytes());
        Ok(())
    })?;
    write_file(&dir.join("config.ini"), |b| {
        b.extend_from_slice(write_config(&result.config).as_bytes());
        Ok(())
    })?;
    for (r, p) in result.rows.iter().zip(&result.profiles) {
        let name = format!("extinction_S{}_D{}.csv", r.s, r.d);
        write_file(&dir.join(name), |b| p.write_csv(b, r.fixed_point_residual))?;
    }
    for sol in &result.spectra {
        let name = format!("spectral_S{}.csv", sol.s);
        write_file(&dir.join(name), |b| sol.write_csv(b))?;
    }
    Ok(())
}
