//! Finite-volume discretization of the growth-fragmentation operator and its
//! adjoint, and the principal (Perron) eigenpair.
//!
//! The primal operator on cell averages is
//!
//! ```text
//! (A f)_i = -(G_{i+1/2} f_i - G_{i-1/2} f_{i-1}) / h - (D + b_i) f_i
//!           + sum_{j > i} 2 b_j c_ij f_j
//! ```
//!
//! with `G` the growth speed at cell faces (upwind, zero flux at both ends
//! since `g` vanishes at `0` and `M`) and `c_ij = (h / x_j) q(x_j, x_i / x_j)`
//! renormalized so that each column of `c` sums to one. Column sums of `A`
//! are then exactly `b_j - D`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::grid::MassGrid;
use crate::kernel::KernelFamily;
use crate::model::ModelDefinition;

/// Dense row-major operator matrix on a mass grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    pub grid: MassGrid,
    pub data: Vec<f64>,
    /// Factor applied to each fragmentation column to make it sum to one;
    /// `NaN` where the column fell back to cell probabilities.
    pub column_scale: Vec<f64>,
}

impl OperatorMatrix {
    pub fn zeros(grid: &MassGrid) -> Self {
        let n = grid.len();
        Self {
            grid: grid.clone(),
            data: vec![0.0; n * n],
            column_scale: vec![1.0; n],
        }
    }

    pub fn n(&self) -> usize {
        self.grid.len()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n() + j]
    }

    #[inline]
    fn add(&mut self, i: usize, j: usize, v: f64) {
        let n = self.n();
        self.data[i * n + j] += v;
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let n = self.n();
        self.data
            .chunks_exact(n)
            .map(|row| row.iter().zip(f).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn apply_transpose(&self, f: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut out = vec![0.0; n];
        for (row, &fi) in self.data.chunks_exact(n).zip(f) {
            if fi != 0.0 {
                for (o, a) in out.iter_mut().zip(row) {
                    *o += a * fi;
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let n = self.n();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                data[j * n + i] = self.data[i * n + j];
            }
        }
        Self {
            grid: self.grid.clone(),
            data,
            column_scale: self.column_scale.clone(),
        }
    }

    /// `self - delta I`.
    pub fn shifted(&self, delta: f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.n() {
            out.add(i, i, -delta);
        }
        out
    }

    pub fn max_abs_diagonal(&self) -> f64 {
        (0..self.n()).map(|i| self.get(i, i).abs()).fold(0.0, f64::max)
    }

    /// Smallest off-diagonal entry (non-negative for a Metzler matrix).
    pub fn min_off_diagonal(&self) -> f64 {
        let n = self.n();
        let mut m = f64::INFINITY;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    m = m.min(self.get(i, j));
                }
            }
        }
        m
    }

    /// `sum_i h (A f)_i`.
    pub fn weighted_sum(&self, f: &[f64]) -> f64 {
        self.apply(f).iter().sum::<f64>() * self.grid.h
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n(), self.n(), &self.data)
    }
}

/// Primal operator `G_S` with death rate `d`.
pub fn assemble_operator(model: &ModelDefinition, s: f64, d: f64, grid: &MassGrid) -> OperatorMatrix {
    let n = grid.len();
    let h = grid.h;
    let mut a = OperatorMatrix::zeros(grid);
    for j in 0..n {
        let xj = grid.xs[j];
        let bj = model.division_rate(s, xj);
        // Transport: outflow through the right face of cell j into cell j + 1.
        if j + 1 < n {
            let flux = model.growth_speed(s, grid.face(j)) / h;
            a.add(j, j, -flux);
            a.add(j + 1, j, flux);
        }
        a.add(j, j, -(d + bj));
        if bj == 0.0 {
            continue;
        }
        let (weights, scale) = fragmentation_column(model, grid, j);
        a.column_scale[j] = scale;
        for (i, c) in weights {
            a.add(i, j, 2.0 * bj * c);
        }
    }
    a
}

/// Probabilities `c_ij` that a daughter of a mother in cell `j` lands in
/// cell `i`, and the renormalization factor used.
fn fragmentation_column(model: &ModelDefinition, grid: &MassGrid, j: usize) -> (Vec<(usize, f64)>, f64) {
    let xj = grid.xs[j];
    let h = grid.h;
    if let KernelFamily::EqualMitosis = model.kernel.family {
        return (vec![(grid.cell_of(0.5 * xj), 1.0)], 1.0);
    }
    let raw: Vec<(usize, f64)> = (0..j)
        .map(|i| {
            let q = model.kernel.density(xj, grid.xs[i] / xj).unwrap_or(0.0);
            (i, h / xj * q)
        })
        .filter(|&(_, c)| c > 0.0)
        .collect();
    let total: f64 = raw.iter().map(|c| c.1).sum();
    if total > 0.0 {
        let scale = 1.0 / total;
        return (raw.into_iter().map(|(i, c)| (i, c * scale)).collect(), scale);
    }
    // No pointwise sample in the support: integrate the kernel over cells.
    let cdf = |u: f64| model.kernel.cdf(xj, u.min(1.0)).unwrap_or(0.0);
    let cells: Vec<(usize, f64)> = (0..=j)
        .map(|i| (i, cdf(grid.face(i) / xj) - cdf(i as f64 * h / xj)))
        .filter(|&(_, c)| c > 0.0)
        .collect();
    let total: f64 = cells.iter().map(|c| c.1).sum();
    (cells.into_iter().map(|(i, c)| (i, c / total)).collect(), f64::NAN)
}

/// Direct discretization of the adjoint operator
/// `g f' - (D + b) f + 2 b integral q(x, a) f(a x) da`.
pub fn assemble_adjoint(model: &ModelDefinition, s: f64, d: f64, grid: &MassGrid) -> OperatorMatrix {
    let n = grid.len();
    let h = grid.h;
    let mut a = OperatorMatrix::zeros(grid);
    for i in 0..n {
        let x = grid.xs[i];
        let bi = model.division_rate(s, x);
        // Forward difference; the last cell has no outflow (g(M) = 0).
        if i + 1 < n {
            let gi = model.growth_speed(s, x) / h;
            a.add(i, i, -gi);
            a.add(i, i + 1, gi);
        }
        a.add(i, i, -(d + bi));
        if bi == 0.0 {
            continue;
        }
        for (alpha, w) in model.kernel.quadrature(x) {
            let (k, t) = grid.stencil(alpha * x);
            a.add(i, k, 2.0 * bi * w * (1.0 - t));
            if t != 0.0 {
                a.add(i, k + 1, 2.0 * bi * w * t);
            }
        }
    }
    a
}

/// Principal eigenpair `(Lambda, u, v)` with `sum u h = 1`, `sum u v h = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSolution {
    pub grid: MassGrid,
    pub s: f64,
    pub d: f64,
    pub lambda: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub primal_residual: f64,
    pub adjoint_residual: f64,
    pub power_iterations: usize,
    pub polish_iterations: usize,
    pub converged: bool,
}

impl SpectralSolution {
    /// Adjoint eigenfunction at an arbitrary mass.
    pub fn v_at(&self, x: f64) -> f64 {
        self.grid.interpolate(&self.v, x)
    }

    pub fn u_at(&self, x: f64) -> f64 {
        self.grid.interpolate(&self.u, x)
    }

    /// `Lambda + D > 0`.
    pub fn growth_exceeds_death(&self) -> bool {
        self.lambda + self.d > 0.0
    }

    /// The same eigenpair for death rate `d`: only `Lambda` moves.
    pub fn with_death_rate(&self, d: f64) -> Self {
        Self {
            lambda: self.lambda - (d - self.d),
            d,
            ..self.clone()
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "# S={} D={} lambda={} primal_residual={} adjoint_residual={} n={} iterations={} polish={} converged={}",
            self.s,
            self.d,
            self.lambda,
            self.primal_residual,
            self.adjoint_residual,
            self.grid.len(),
            self.power_iterations,
            self.polish_iterations,
            self.converged
        )?;
        writeln!(w, "x,u,v")?;
        for ((x, u), v) in self.grid.xs.iter().zip(&self.u).zip(&self.v) {
            writeln!(w, "{x},{u},{v}")?;
        }
        Ok(())
    }
}

/// Outcome of plain power iteration on `P = I + dt A`.
#[derive(Debug, Clone)]
pub struct PowerIteration {
    pub lambda: f64,
    /// Normalized to `sum h = 1`.
    pub vector: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub dt: f64,
}

fn normalize(v: &mut [f64], h: f64) {
    let s: f64 = v.iter().sum::<f64>() * h;
    if s != 0.0 {
        for x in v.iter_mut() {
            *x /= s;
        }
    }
}

/// Power iteration on `I + dt A` with `dt = 0.9 / max |A_ii|`, which is
/// entrywise non-negative for a Metzler `A`. Stops when the spectral radius
/// estimate changes by less than `tol`.
pub fn power_iteration(op: &OperatorMatrix, start: Option<&[f64]>, tol: f64, max_iterations: usize) -> PowerIteration {
    let n = op.n();
    let h = op.grid.h;
    let dt = 0.9 / op.max_abs_diagonal().max(f64::MIN_POSITIVE);
    let mut u = start.map(|s| s.to_vec()).unwrap_or_else(|| vec![1.0; n]);
    normalize(&mut u, h);
    let mut rho_prev = f64::NAN;
    let mut rho = f64::NAN;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iterations {
        let au = op.apply(&u);
        let mut w: Vec<f64> = u.iter().zip(&au).map(|(x, y)| x + dt * y).collect();
        rho = w.iter().sum::<f64>() * h;
        normalize(&mut w, h);
        u = w;
        iterations += 1;
        if (rho - rho_prev).abs() < tol {
            converged = true;
            break;
        }
        rho_prev = rho;
    }
    PowerIteration {
        lambda: (rho - 1.0) / dt,
        vector: u,
        iterations,
        converged,
        dt,
    }
}

/// Inverse iteration with shift `sigma` above the Perron root. Since
/// `sigma I - A` is then a non-singular M-matrix its inverse is non-negative
/// and positive iterates stay positive.
fn inverse_iteration(a: &DMatrix<f64>, sigma: f64, start: &[f64], h: f64, tol: f64) -> Option<(Vec<f64>, usize, bool)> {
    let n = start.len();
    let m = DMatrix::from_diagonal_element(n, n, sigma) - a;
    let lu = m.lu();
    let mut x = DVector::from_column_slice(start);
    let mut mu_prev = f64::NAN;
    for k in 1..=60 {
        let y = lu.solve(&x)?;
        // Growth factor 1 / (sigma - Lambda) from the weighted sums.
        let mu = y.sum() / x.sum();
        let mut y = y;
        let total = y.sum() * h;
        y /= total;
        x = y;
        if (1.0 / mu - 1.0 / mu_prev).abs() < tol {
            return Some((x.iter().cloned().collect(), k, true));
        }
        mu_prev = mu;
    }
    Some((x.iter().cloned().collect(), 60, false))
}

/// Upper Collatz–Wielandt bound `max_i (A u)_i / u_i` for positive `u`.
fn collatz_upper(op: &OperatorMatrix, u: &[f64]) -> f64 {
    op.apply(u)
        .iter()
        .zip(u)
        .filter(|(_, &ui)| ui > 0.0)
        .map(|(a, &ui)| a / ui)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn sup_residual(op_u: &[f64], lambda: f64, u: &[f64]) -> f64 {
    op_u.iter().zip(u).map(|(a, b)| (a - lambda * b).abs()).fold(0.0, f64::max)
}

/// Principal eigenpair of an arbitrary Metzler operator: power iteration on
/// `I + dt A` for primal and transpose, then inverse-iteration polish.
pub fn solve_eigenpair(op: &OperatorMatrix, s: f64, d: f64, tol: f64, max_iterations: usize) -> SpectralSolution {
    let h = op.grid.h;
    let opt = op.transpose();
    let primal = power_iteration(op, None, tol, max_iterations);
    let adjoint = power_iteration(&opt, None, tol, max_iterations);
    if !primal.converged || !adjoint.converged {
        log::debug!("power iteration stopped at the iteration cap; polishing");
    }
    let a = op.to_nalgebra();
    let at = a.transpose();
    let polish = |m: &DMatrix<f64>, o: &OperatorMatrix, guess: &[f64]| {
        let upper = collatz_upper(o, guess);
        let sigma = upper + 1e-6 * (1.0 + upper.abs());
        inverse_iteration(m, sigma, guess, h, tol)
    };
    let (u, ku, cu) = polish(&a, op, &primal.vector).unwrap_or((primal.vector.clone(), 0, false));
    let (mut v, kv, cv) = polish(&at, &opt, &adjoint.vector).unwrap_or((adjoint.vector.clone(), 0, false));
    let au = op.apply(&u);
    let vu: f64 = v.iter().zip(&u).map(|(a, b)| a * b).sum();
    let lambda = v.iter().zip(&au).map(|(a, b)| a * b).sum::<f64>() / vu;
    let scale = 1.0 / (vu * h);
    for x in v.iter_mut() {
        *x *= scale;
    }
    let atv = opt.apply(&v);
    let primal_residual = sup_residual(&au, lambda, &u);
    let adjoint_residual = sup_residual(&atv, lambda, &v);
    let positive = u.iter().chain(&v).all(|&x| x >= 0.0);
    let converged = cu && cv && positive;
    if !converged {
        log::warn!("eigen solve unconverged at S = {s}, D = {d}");
    }
    SpectralSolution {
        grid: op.grid.clone(),
        s,
        d,
        lambda,
        u,
        v,
        primal_residual,
        adjoint_residual,
        power_iterations: primal.iterations.max(adjoint.iterations),
        polish_iterations: ku.max(kv),
        converged,
    }
}

/// `(Lambda_S, u, v)` for death rate `d` on a grid of `n` cells.
///
/// The death rate enters the operator as `-D I`, so the eigenproblem is
/// solved once at `D = 0` and shifted; the eigenvectors do not depend on `D`.
pub fn principal_eigenpair(
    model: &ModelDefinition,
    s: f64,
    d: f64,
    n: usize,
    tol: f64,
    max_iterations: usize,
) -> SpectralSolution {
    let grid = MassGrid::new(model.max_mass, n);
    let op = assemble_operator(model, s, 0.0, &grid);
    solve_eigenpair(&op, s, 0.0, tol, max_iterations).with_death_rate(d)
}

/// `(||A u - Lambda u||_inf, ||A^T v - Lambda v||_inf)`.
pub fn eigen_residual(sol: &SpectralSolution, op: &OperatorMatrix) -> (f64, f64) {
    let au = op.apply(&sol.u);
    let atv = op.apply_transpose(&sol.v);
    (sup_residual(&au, sol.lambda, &sol.u), sup_residual(&atv, sol.lambda, &sol.v))
}
