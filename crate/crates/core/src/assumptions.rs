//! Sampled verification of the model hypotheses on tensor probe grids.
//!
//! Failures are report entries, not errors. Downstream theorem checks read
//! the gates at the bottom of this file to decide whether a violated claim is
//! a failure or merely informational.

use std::fmt;

use crate::config::EnvironmentRange;
use crate::kernel::{CouplingReport, KernelFamily};
use crate::model::ModelDefinition;
use crate::quadrature::graded_simpson;

const EQ_TOL: f64 = 1e-10;
const SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    KernelSymmetry,
    KernelNormalization,
    KernelDomination,
    GrowthBoundary,
    GrowthPositive,
    GrowthSmooth,
    DivisionBounds,
    DivisionThreshold,
    DivisionMonotoneMass,
    DivisionMonotoneSubstrate,
    GrowthMonotoneSubstrate,
    RatioMonotoneSubstrate,
    KernelCoupling,
}

impl Check {
    pub fn label(self) -> &'static str {
        match self {
            Check::KernelSymmetry => "kernel symmetric q(x,a) = q(x,1-a)",
            Check::KernelNormalization => "kernel integrates to one",
            Check::KernelDomination => "kernel bounded by empirical q-bar",
            Check::GrowthBoundary => "growth vanishes at 0 and M",
            Check::GrowthPositive => "growth positive inside (0,M)",
            Check::GrowthSmooth => "growth continuously differentiable (probe)",
            Check::DivisionBounds => "division rate within [0, b-bar]",
            Check::DivisionThreshold => "division rate zero at or below m_div, positive above",
            Check::DivisionMonotoneMass => "division rate non-decreasing in mass",
            Check::DivisionMonotoneSubstrate => "division rate non-decreasing in substrate",
            Check::GrowthMonotoneSubstrate => "growth non-decreasing in substrate",
            Check::RatioMonotoneSubstrate => "b/g non-increasing in substrate",
            Check::KernelCoupling => "kernel coupling (offspring masses ordered)",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub check: Check,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub results: Vec<CheckResult>,
    /// Largest kernel density seen on the probe grid.
    pub empirical_q_bar: f64,
    /// Division rate bound used by the simulator.
    pub b_bar: f64,
    pub coupling: CouplingReport,
    pub probe: usize,
}

impl AssumptionReport {
    pub fn passed(&self, check: Check) -> bool {
        self.results.iter().any(|r| r.check == check && r.passed)
    }

    fn all(&self, checks: &[Check]) -> bool {
        checks.iter().all(|&c| self.passed(c))
    }

    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    /// Standing hypotheses on the mechanisms.
    pub fn standing(&self) -> bool {
        self.all(&[
            Check::KernelSymmetry,
            Check::KernelNormalization,
            Check::KernelDomination,
            Check::GrowthBoundary,
            Check::GrowthPositive,
            Check::GrowthSmooth,
            Check::DivisionBounds,
            Check::DivisionThreshold,
        ])
    }

    /// Gate for "extinction probability non-increasing in the initial mass".
    pub fn mass_monotonicity_gate(&self) -> bool {
        self.standing() && self.all(&[Check::KernelCoupling, Check::DivisionMonotoneMass])
    }

    /// Gate for the substrate monotonicity of extinction and eigenvalue.
    pub fn substrate_monotonicity_gate(&self) -> bool {
        self.mass_monotonicity_gate()
            && self.all(&[
                Check::DivisionMonotoneSubstrate,
                Check::GrowthMonotoneSubstrate,
                Check::RatioMonotoneSubstrate,
            ])
    }
}

impl fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "assumption checks (probe {} per axis)", self.probe)?;
        for r in &self.results {
            let tag = if r.passed { "PASS" } else { "FAIL" };
            writeln!(f, "  {tag}  {:<52} {}", r.check.label(), r.detail)?;
        }
        writeln!(f, "  empirical q-bar = {}", self.empirical_q_bar)?;
        writeln!(f, "  b-bar = {}", self.b_bar)
    }
}

/// Tracks the first failure of a sampled inequality.
struct Probe {
    check: Check,
    first: Option<String>,
    worst: f64,
}

impl Probe {
    fn new(check: Check) -> Self {
        Self {
            check,
            first: None,
            worst: 0.0,
        }
    }

    fn expect(&mut self, ok: bool, excess: f64, at: impl FnOnce() -> String) {
        if !ok {
            self.worst = self.worst.max(excess.abs());
            if self.first.is_none() {
                self.first = Some(at());
            }
        }
    }

    fn finish(self) -> CheckResult {
        match self.first {
            None => CheckResult {
                check: self.check,
                passed: true,
                detail: String::new(),
            },
            Some(at) => CheckResult {
                check: self.check,
                passed: false,
                detail: format!("first violation at {at}, worst excess {:e}", self.worst),
            },
        }
    }
}

/// Substrate probe ladder: the configured values plus a geometric ladder
/// spanning a factor of two beyond them on each side.
fn substrate_ladder(env: &EnvironmentRange, n: usize) -> Vec<f64> {
    let lo = env.substrates.iter().cloned().fold(f64::INFINITY, f64::min) * 0.5;
    let hi = env.substrates.iter().cloned().fold(0.0, f64::max) * 2.0;
    let mut v: Vec<f64> = (0..n)
        .map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64))
        .chain(env.substrates.iter().cloned())
        .collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup();
    v
}

/// Runs every check with `probe` points per axis (at least 16).
pub fn validate_assumptions(model: &ModelDefinition, env: &EnvironmentRange, probe: usize) -> AssumptionReport {
    let n = probe.max(16);
    let m = model.max_mass;
    let xs: Vec<f64> = (1..=n).map(|i| m * i as f64 / (n + 1) as f64).collect();
    // Offset keeps the probe fractions off table-bin edges.
    let alphas: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5 + 1e-7) / n as f64).collect();
    let ss = substrate_ladder(env, n);
    let b_bar = model.rate_bound(&ss, 4 * n);
    let kernel = &model.kernel;
    let mut results = Vec::new();

    // Kernel shape.
    let mut sym = Probe::new(Check::KernelSymmetry);
    let mut norm = Probe::new(Check::KernelNormalization);
    let mut q_bar = 0.0f64;
    if matches!(kernel.family, KernelFamily::EqualMitosis) {
        q_bar = f64::INFINITY;
    } else {
        for &x in &xs {
            for &a in &alphas {
                let q1 = kernel.density(x, a).unwrap_or(f64::NAN);
                let q2 = kernel.density(x, 1.0 - a).unwrap_or(f64::NAN);
                q_bar = q_bar.max(q1);
                let diff = (q1 - q2).abs();
                sym.expect(diff <= EQ_TOL * (1.0 + q1.abs()), diff, || format!("x = {x}, a = {a}"));
            }
            if let Some(l) = kernel.support_margin(x) {
                norm.expect((0.0..0.5).contains(&l), l, || format!("x = {x}: l(x) = {l} outside [0,1/2)"));
            }
            let total: f64 = kernel
                .pieces(x)
                .into_iter()
                .map(|(a, b)| {
                    let mid = 0.5 * (a + b);
                    graded_simpson(
                        |t| kernel.density(x, t + (mid - t) * 1e-12).unwrap_or(0.0),
                        a,
                        b,
                        256,
                    )
                })
                .sum();
            norm.expect((total - 1.0).abs() <= EQ_TOL, total - 1.0, || format!("x = {x}: integral {total}"));
        }
    }
    results.push(sym.finish());
    results.push(norm.finish());
    results.push(CheckResult {
        check: Check::KernelDomination,
        passed: true,
        detail: if q_bar.is_finite() {
            format!("empirical q-bar = {q_bar}")
        } else {
            "point mass kernel, no density to bound".into()
        },
    });

    // Growth.
    let mut boundary = Probe::new(Check::GrowthBoundary);
    let mut positive = Probe::new(Check::GrowthPositive);
    let mut smooth = Probe::new(Check::GrowthSmooth);
    let mut g_mono = Probe::new(Check::GrowthMonotoneSubstrate);
    let dx = 1e-6 * m;
    for (k, &s) in ss.iter().enumerate() {
        let (g0, gm) = (model.growth_speed(s, 0.0), model.growth_speed(s, m));
        boundary.expect(g0.abs() <= EQ_TOL && gm.abs() <= EQ_TOL, g0.abs().max(gm.abs()), || {
            format!("S = {s}: g(0) = {g0}, g(M) = {gm}")
        });
        for &x in &xs {
            let g = model.growth_speed(s, x);
            positive.expect(g > 0.0, g, || format!("S = {s}, x = {x}"));
            let left = (g - model.growth_speed(s, x - dx)) / dx;
            let right = (model.growth_speed(s, x + dx) - g) / dx;
            let jump = (left - right).abs();
            smooth.expect(jump <= 1e-3 * (1.0 + left.abs() + right.abs()), jump, || {
                format!("S = {s}, x = {x}: one-sided slopes {left}, {right}")
            });
            if k > 0 {
                let prev = ss[k - 1];
                let gp = model.growth_speed(prev, x);
                g_mono.expect(gp <= g + SLACK, gp - g, || format!("x = {x}, S = {prev} -> {s}"));
            }
        }
    }
    results.push(boundary.finish());
    results.push(positive.finish());
    results.push(smooth.finish());

    // Division.
    let mdiv = model.division_threshold();
    let mut bounds = Probe::new(Check::DivisionBounds);
    let mut thresh = Probe::new(Check::DivisionThreshold);
    let mut b_x = Probe::new(Check::DivisionMonotoneMass);
    let mut b_s = Probe::new(Check::DivisionMonotoneSubstrate);
    let mut ratio = Probe::new(Check::RatioMonotoneSubstrate);
    let mass_probe: Vec<f64> = std::iter::once(0.0)
        .chain(xs.iter().cloned())
        .chain(std::iter::once(mdiv))
        .collect();
    for (k, &s) in ss.iter().enumerate() {
        let mut prev_b: Option<(f64, f64)> = None;
        for &x in &xs {
            let b = model.division_rate(s, x);
            bounds.expect((0.0..=b_bar).contains(&b), b, || format!("S = {s}, x = {x}: b = {b}"));
            if x > mdiv {
                thresh.expect(b > 0.0, b, || format!("S = {s}, x = {x}: b = 0 above m_div"));
            }
            if let Some((px, pb)) = prev_b {
                b_x.expect(pb <= b + SLACK, pb - b, || format!("S = {s}, x = {px} -> {x}"));
            }
            prev_b = Some((x, b));
            if k > 0 {
                let sp = ss[k - 1];
                let bp = model.division_rate(sp, x);
                b_s.expect(bp <= b + SLACK, bp - b, || format!("x = {x}, S = {sp} -> {s}"));
                let g = model.growth_speed(s, x);
                let gp = model.growth_speed(sp, x);
                if g > 0.0 && gp > 0.0 {
                    let (r, rp) = (b / g, bp / gp);
                    ratio.expect(r <= rp + SLACK * (1.0 + rp), r - rp, || format!("x = {x}, S = {sp} -> {s}"));
                }
            }
        }
        for &x in mass_probe.iter().filter(|&&x| x <= mdiv) {
            let b = model.division_rate(s, x);
            thresh.expect(b == 0.0, b, || format!("S = {s}, x = {x}: b = {b} at or below m_div"));
        }
    }
    results.push(bounds.finish());
    results.push(thresh.finish());
    results.push(b_x.finish());
    results.push(b_s.finish());
    results.push(g_mono.finish());
    results.push(ratio.finish());

    let us: Vec<f64> = (1..=n).map(|i| i as f64 / (n + 1) as f64).collect();
    let coupling = kernel.check_coupling(&xs, &us);
    let detail = {
        let mut d = String::new();
        if let Some(v) = &coupling.mass_level {
            d.push_str(&format!(
                "violates {} at x = {}, y = {}, u = {} ({} > {})",
                v.which, v.x, v.y, v.u, v.lhs, v.rhs
            ));
        }
        if let Some(v) = &coupling.literal {
            if !d.is_empty() {
                d.push_str("; ");
            }
            d.push_str(&format!("literal form: {} fails at x = {}, y = {}, u = {}", v.which, v.x, v.y, v.u));
        }
        if let Some(v) = &coupling.differential {
            if !d.is_empty() {
                d.push_str("; ");
            }
            d.push_str(&format!("differential form fails at x = {}, u = {} (value {})", v.x, v.u, v.lhs));
        }
        d
    };
    results.push(CheckResult {
        check: Check::KernelCoupling,
        passed: coupling.passed(),
        detail,
    });

    AssumptionReport {
        results,
        empirical_q_bar: q_bar,
        b_bar,
        coupling,
        probe: n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::DivisionKernel;
    use crate::model::{DivisionRateModel, GrowthModel};

    fn base() -> ModelDefinition {
        ModelDefinition {
            max_mass: 1.0,
            death_rate: 0.5,
            growth: GrowthModel::LogisticMonod {
                mu_max: 1.0,
                half_saturation: 1.0,
            },
            division: DivisionRateModel::constant(1.0, 0.0),
            kernel: DivisionKernel::uniform(0.25),
        }
    }

    #[test]
    fn constant_model_passes_everything() {
        let env = EnvironmentRange::single(1.0, 0.5);
        let r = validate_assumptions(&base(), &env, 16);
        assert!(r.all_passed(), "{r}");
        assert!(r.substrate_monotonicity_gate());
    }

    #[test]
    fn declining_rate_fails_mass_monotonicity() {
        let mut m = base();
        m.division = DivisionRateModel::declining(4.0, 0.2);
        let r = validate_assumptions(&m, &EnvironmentRange::single(1.0, 0.5), 32);
        assert!(!r.passed(Check::DivisionMonotoneMass));
        assert!(!r.mass_monotonicity_gate());
        assert!(r.standing());
    }

    #[test]
    fn asymmetric_table_fails_symmetry() {
        let mut m = base();
        m.kernel = DivisionKernel::table(vec![2.0, 0.0]);
        let r = validate_assumptions(&m, &EnvironmentRange::single(1.0, 0.5), 16);
        assert!(!r.passed(Check::KernelSymmetry));
        assert!(r.passed(Check::KernelNormalization));
    }

    #[test]
    fn deterministic_for_fixed_probe() {
        let env = EnvironmentRange {
            substrates: vec![0.5, 2.0],
            death_rates: vec![0.5],
        };
        let a = validate_assumptions(&base(), &env, 20);
        let b = validate_assumptions(&base(), &env, 20);
        assert_eq!(a, b);
    }
}
