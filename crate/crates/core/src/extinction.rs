//! Extinction probabilities on a mass grid via the generation recursion.
//!
//! Along the trajectory from `x` the first event (death or division) arrives
//! with hazard `(b + D) / g` per unit mass. Death ends the lineage; division
//! at mass `y` leads to extinction with probability
//! `Phi(y) = integral q(y, a) p(a y) p((1 - a) y) da`. The recursion
//!
//! ```text
//! p_{n+1}(x) = integral_x^M (D + b(y) Phi_n(y)) / g(y) * W(x, y) dy,
//! W(x, y)    = exp(-integral_x^y (b + D) / g)
//! ```
//!
//! is discretized with cell-wise constant coefficients: cell `j` carries the
//! hazard `eta_j = h (b_j + D) / g_j` and the outcome
//! `o_j = (D + b_j Phi_j) / (b_j + D)`. The integral over each cell is then
//! exact, `W` is accumulated multiplicatively (never exponentiating a large
//! exponent) and the last cell, where `g` vanishes at `M`, absorbs all
//! remaining weight. Each generation is a convex combination of outcomes, so
//! bounds `[0, 1]` and the monotone structure of the map are preserved.

use std::fmt;
use std::io::Write;

use crate::error::SolverError;
use crate::grid::MassGrid;
use crate::model::ModelDefinition;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProfileState {
    /// Output of a fixed number of generations.
    Generation,
    /// Converged to the requested tolerance.
    FixedPoint,
    /// `max_generations` reached; carries the last sup-norm change.
    Unconverged,
}

impl fmt::Display for ProfileState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProfileState::Generation => "GENERATION",
            ProfileState::FixedPoint => "FIXED_POINT",
            ProfileState::Unconverged => "UNCONVERGED",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtinctionProfile {
    pub grid: MassGrid,
    pub values: Vec<f64>,
    /// Number of generations applied.
    pub generations: usize,
    pub state: ProfileState,
    /// Sup-norm change of the last generation step.
    pub last_delta: f64,
    pub s: f64,
    pub d: f64,
}

impl ExtinctionProfile {
    /// `p_0 = 0`.
    pub fn zero(grid: MassGrid, s: f64, d: f64) -> Self {
        Self::constant(grid, s, d, 0.0)
    }

    pub fn constant(grid: MassGrid, s: f64, d: f64, value: f64) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![value; n],
            generations: 0,
            state: ProfileState::Generation,
            last_delta: f64::INFINITY,
            s,
            d,
        }
    }

    pub fn converged(&self) -> bool {
        self.state == ProfileState::FixedPoint
    }

    /// Extinction probability at an arbitrary mass by interpolation.
    pub fn at(&self, x: f64) -> f64 {
        self.grid.interpolate(&self.values, x)
    }

    pub fn write_csv<W: Write>(&self, mut w: W, residual: f64) -> std::io::Result<()> {
        writeln!(
            w,
            "# S={} D={} generations={} state={} last_delta={} residual={}",
            self.s, self.d, self.generations, self.state, self.last_delta, residual
        )?;
        writeln!(w, "x,p")?;
        for (x, p) in self.grid.xs.iter().zip(&self.values) {
            writeln!(w, "{x},{p}")?;
        }
        Ok(())
    }
}

/// One quadrature node of `Phi_j`: weight and two interpolation stencils.
#[derive(Debug, Clone, Copy)]
struct PairNode {
    w: f64,
    i1: u32,
    w1: f64,
    i2: u32,
    w2: f64,
}

/// Precomputed discretization of the recursion for one `(S, D)`.
#[derive(Debug, Clone)]
pub struct ExtinctionSolver {
    grid: MassGrid,
    s: f64,
    d: f64,
    g: Vec<f64>,
    b: Vec<f64>,
    /// `exp(-eta_j)`.
    decay: Vec<f64>,
    /// `exp(-eta_j / 2)`.
    half_decay: Vec<f64>,
    nodes: Vec<PairNode>,
    /// `nodes[offsets[j]..offsets[j + 1]]` belong to cell `j`.
    offsets: Vec<usize>,
}

impl ExtinctionSolver {
    pub fn new(model: &ModelDefinition, s: f64, d: f64, grid: &MassGrid) -> Self {
        let n = grid.len();
        let mut g = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        let mut decay = Vec::with_capacity(n);
        let mut half_decay = Vec::with_capacity(n);
        let mut nodes = Vec::new();
        let mut offsets = vec![0];
        for (j, &x) in grid.xs.iter().enumerate() {
            let gj = model.growth_speed(s, x);
            let bj = model.division_rate(s, x);
            let eta = if j + 1 == n {
                f64::INFINITY
            } else if gj > 0.0 {
                grid.h * (bj + d) / gj
            } else if bj + d > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            g.push(gj);
            b.push(bj);
            decay.push((-eta).exp());
            half_decay.push((-0.5 * eta).exp());
            for (a, w) in model.kernel.quadrature(x) {
                let (i1, w1) = grid.stencil(a * x);
                let (i2, w2) = grid.stencil((1.0 - a) * x);
                nodes.push(PairNode {
                    w,
                    i1: i1 as u32,
                    w1,
                    i2: i2 as u32,
                    w2,
                });
            }
            offsets.push(nodes.len());
        }
        Self {
            grid: grid.clone(),
            s,
            d,
            g,
            b,
            decay,
            half_decay,
            nodes,
            offsets,
        }
    }

    pub fn grid(&self) -> &MassGrid {
        &self.grid
    }

    #[inline]
    fn interp(p: &[f64], i: u32, w: f64) -> f64 {
        let i = i as usize;
        if w == 0.0 {
            p[i]
        } else {
            p[i] * (1.0 - w) + p[i + 1] * w
        }
    }

    /// `Phi_j = integral q(x_j, a) p(a x_j) p((1 - a) x_j) da` for every cell.
    pub fn division_outcome(&self, p: &[f64]) -> Vec<f64> {
        (0..self.grid.len())
            .map(|j| {
                self.nodes[self.offsets[j]..self.offsets[j + 1]]
                    .iter()
                    .map(|nd| nd.w * Self::interp(p, nd.i1, nd.w1) * Self::interp(p, nd.i2, nd.w2))
                    .sum()
            })
            .collect()
    }

    fn check(&self, prev: &ExtinctionProfile) -> Result<(), SolverError> {
        if prev.values.len() != self.grid.len() || prev.grid != self.grid {
            return Err(SolverError::GridMismatch {
                expected: self.grid.len(),
                found: prev.values.len(),
            });
        }
        if prev.s != self.s || prev.d != self.d {
            return Err(SolverError::EnvironmentMismatch {
                s: self.s,
                d: self.d,
                found_s: prev.s,
                found_d: prev.d,
            });
        }
        Ok(())
    }

    /// One application of the recursion, `p_n -> p_{n+1}`.
    pub fn step(&self, prev: &ExtinctionProfile) -> Result<ExtinctionProfile, SolverError> {
        self.check(prev)?;
        let values = self.apply(&prev.values);
        let delta = sup_diff(&values, &prev.values);
        Ok(ExtinctionProfile {
            grid: self.grid.clone(),
            values,
            generations: prev.generations + 1,
            state: ProfileState::Generation,
            last_delta: delta,
            s: self.s,
            d: self.d,
        })
    }

    fn apply(&self, p: &[f64]) -> Vec<f64> {
        let n = self.grid.len();
        let phi = self.division_outcome(p);
        let outcome = |j: usize| {
            let rate = self.b[j] + self.d;
            if rate > 0.0 {
                (self.d + self.b[j] * phi[j]) / rate
            } else {
                0.0
            }
        };
        let mut out = vec![0.0; n];
        // `next` is the extinction probability of a lineage entering cell j + 1
        // at its left face.
        let mut next = outcome(n - 1);
        out[n - 1] = next;
        for j in (0..n - 1).rev() {
            let o = outcome(j);
            out[j] = ((1.0 - self.half_decay[j]) * o + self.half_decay[j] * next).clamp(0.0, 1.0);
            next = (1.0 - self.decay[j]) * o + self.decay[j] * next;
        }
        out
    }

    /// Iterates from `start` until the sup-norm change drops below `tol`.
    pub fn iterate(&self, start: ExtinctionProfile, tol: f64, max_generations: usize) -> ExtinctionProfile {
        let mut p = start.values;
        let mut delta = f64::INFINITY;
        let mut gens = start.generations;
        for _ in 0..max_generations {
            let next = self.apply(&p);
            delta = sup_diff(&next, &p);
            p = next;
            gens += 1;
            if delta < tol {
                break;
            }
        }
        let state = if delta < tol {
            ProfileState::FixedPoint
        } else {
            log::warn!(
                "extinction recursion unconverged at S = {}, D = {}: last change {delta:e}",
                self.s,
                self.d
            );
            ProfileState::Unconverged
        };
        ExtinctionProfile {
            grid: self.grid.clone(),
            values: p,
            generations: gens,
            state,
            last_delta: delta,
            s: self.s,
            d: self.d,
        }
    }

    /// Minimal fixed point: iteration from `p = 0`.
    pub fn solve(&self, tol: f64, max_generations: usize) -> ExtinctionProfile {
        self.iterate(
            ExtinctionProfile::zero(self.grid.clone(), self.s, self.d),
            tol,
            max_generations,
        )
    }

    /// Sup-norm of `g p' + D (1 - p) + b (Phi(p) - p)` with centred
    /// differences inside the grid and one-sided ones at the two ends.
    pub fn residual(&self, profile: &ExtinctionProfile) -> Result<f64, SolverError> {
        self.check(profile)?;
        let p = &profile.values;
        let n = p.len();
        let h = self.grid.h;
        let phi = self.division_outcome(p);
        let mut worst = 0.0f64;
        for i in 0..n {
            let dp = if n == 1 {
                0.0
            } else if i == 0 {
                (p[1] - p[0]) / h
            } else if i == n - 1 {
                (p[n - 1] - p[n - 2]) / h
            } else {
                (p[i + 1] - p[i - 1]) / (2.0 * h)
            };
            let r = self.g[i] * dp + self.d * (1.0 - p[i]) + self.b[i] * (phi[i] - p[i]);
            worst = worst.max(r.abs());
        }
        Ok(worst)
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Result of [`solve_extinction`] with the optional from-above diagnostic.
#[derive(Debug, Clone)]
pub struct ExtinctionSolution {
    pub profile: ExtinctionProfile,
    pub residual: f64,
    /// Limit of the iteration started at `p = 1`, when requested.
    pub from_above: Option<ExtinctionProfile>,
    /// Sup-norm gap between the two limits, when it exceeds `10 tol`.
    pub limits_differ: Option<f64>,
}

/// `p_{n+1}` from `p_n`.
pub fn generation_step(
    prev: &ExtinctionProfile,
    model: &ModelDefinition,
    s: f64,
    d: f64,
) -> Result<ExtinctionProfile, SolverError> {
    ExtinctionSolver::new(model, s, d, &prev.grid).step(prev)
}

/// Minimal fixed point on a grid with `n` cells.
pub fn solve_extinction(
    model: &ModelDefinition,
    s: f64,
    d: f64,
    n: usize,
    tol: f64,
    max_generations: usize,
) -> ExtinctionProfile {
    ExtinctionSolver::new(model, s, d, &MassGrid::new(model.max_mass, n)).solve(tol, max_generations)
}

/// Solve, residual and (optionally) the iteration from above.
pub fn solve_with_diagnostics(
    model: &ModelDefinition,
    s: f64,
    d: f64,
    n: usize,
    tol: f64,
    max_generations: usize,
    from_above: bool,
) -> ExtinctionSolution {
    let solver = ExtinctionSolver::new(model, s, d, &MassGrid::new(model.max_mass, n));
    let profile = solver.solve(tol, max_generations);
    let residual = solver.residual(&profile).expect("same grid");
    let above = from_above.then(|| {
        solver.iterate(
            ExtinctionProfile::constant(solver.grid.clone(), s, d, 1.0),
            tol,
            max_generations,
        )
    });
    let limits_differ = above.as_ref().and_then(|a| {
        let gap = sup_diff(&a.values, &profile.values);
        (gap > 10.0 * tol).then_some(gap)
    });
    if let Some(gap) = limits_differ {
        log::info!("S = {s}, D = {d}: iteration from above differs from the minimal solution by {gap:e}");
    }
    ExtinctionSolution {
        profile,
        residual,
        from_above: above,
        limits_differ,
    }
}

/// Fixed-point residual for a profile on its own grid.
pub fn fixed_point_residual(profile: &ExtinctionProfile, model: &ModelDefinition, s: f64, d: f64) -> Result<f64, SolverError> {
    ExtinctionSolver::new(model, s, d, &profile.grid).residual(profile)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::DivisionKernel;
    use crate::model::{DivisionRateModel, GrowthModel};

    fn constant(b: f64) -> ModelDefinition {
        ModelDefinition {
            max_mass: 1.0,
            death_rate: 1.0,
            growth: GrowthModel::LogisticMonod {
                mu_max: 1.0,
                half_saturation: 1.0,
            },
            division: DivisionRateModel::constant(b, 0.0),
            kernel: DivisionKernel::uniform(0.25),
        }
    }

    #[test]
    fn first_generation_is_death_share() {
        let m = constant(2.0);
        let grid = MassGrid::new(1.0, 64);
        let p1 = generation_step(&ExtinctionProfile::zero(grid, 1.0, 1.0), &m, 1.0, 1.0).unwrap();
        for v in &p1.values {
            assert!((v - 1.0 / 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn no_death_means_no_extinction() {
        let m = constant(2.0);
        let p = solve_extinction(&m, 1.0, 0.0, 64, 1e-10, 100);
        assert!(p.values.iter().all(|&v| v == 0.0));
        assert!(p.converged());
    }

    #[test]
    fn no_division_means_certain_death() {
        let mut m = constant(2.0);
        m.division.rate = 0.0;
        let grid = MassGrid::new(1.0, 32);
        let p1 = generation_step(&ExtinctionProfile::zero(grid, 1.0, 0.7), &m, 1.0, 0.7).unwrap();
        assert!(p1.values.iter().all(|&v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn galton_watson_fixed_point() {
        let m = constant(2.0);
        let p = solve_extinction(&m, 1.0, 1.0, 128, 1e-10, 10_000);
        assert!(p.converged());
        assert!(p.values.iter().all(|&v| (v - 0.5).abs() < 1e-8));
        let r = fixed_point_residual(&p, &m, 1.0, 1.0).unwrap();
        assert!(r < 1e-8, "{r}");
    }

    #[test]
    fn residual_of_trivial_profiles() {
        let m = constant(2.0);
        let grid = MassGrid::new(1.0, 32);
        let one = ExtinctionProfile::constant(grid.clone(), 1.0, 1.0, 1.0);
        assert!(fixed_point_residual(&one, &m, 1.0, 1.0).unwrap() < 1e-14);
        let zero = ExtinctionProfile::zero(grid, 1.0, 1.0);
        assert!((fixed_point_residual(&zero, &m, 1.0, 1.0).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn mismatched_profiles_are_rejected() {
        let m = constant(2.0);
        let solver = ExtinctionSolver::new(&m, 1.0, 1.0, &MassGrid::new(1.0, 16));
        let other = ExtinctionProfile::zero(MassGrid::new(1.0, 8), 1.0, 1.0);
        assert!(matches!(solver.step(&other), Err(SolverError::GridMismatch { .. })));
        let other = ExtinctionProfile::zero(MassGrid::new(1.0, 16), 2.0, 1.0);
        assert!(matches!(solver.step(&other), Err(SolverError::EnvironmentMismatch { .. })));
    }

    #[test]
    fn iteration_from_above_stays_at_one() {
        let m = constant(2.0);
        let sol = solve_with_diagnostics(&m, 1.0, 1.0, 32, 1e-9, 10_000, true);
        assert!(sol.from_above.unwrap().values.iter().all(|&v| v == 1.0));
        assert!((sol.limits_differ.unwrap() - 0.5).abs() < 1e-6);
    }
}
