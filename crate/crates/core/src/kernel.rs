//! Division kernel `q(x, alpha)`: the law of the mass fraction inherited by
//! one daughter of a mother dividing at mass `x`.
//!
//! The shipped densities are the symmetric ramp family
//!
//! ```text
//! q(x, a) = (a - l(x))^beta(x) / C(x)        on [l(x), 1/2]
//!         = (1 - a - l(x))^beta(x) / C(x)    on [1/2, 1 - l(x)]
//! C(x)    = 2 (1/2 - l(x))^(beta(x) + 1) / (beta(x) + 1)
//! ```
//!
//! with `beta = 0` giving the uniform kernel on `[l, 1 - l]`. Distribution
//! function and its inverse are closed form.

use crate::error::KernelError;
use crate::quadrature::{interp_flat, simpson_rule};

/// Affine function of the mother mass, `intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Profile {
    pub intercept: f64,
    pub slope: f64,
}

impl Profile {
    pub fn constant(v: f64) -> Self {
        Self {
            intercept: v,
            slope: 0.0,
        }
    }

    pub fn linear(intercept: f64, slope: f64) -> Self {
        Self { intercept, slope }
    }

    #[inline]
    pub fn at(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }

    pub fn is_constant(&self) -> bool {
        self.slope == 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelFamily {
    Uniform { l: Profile },
    BetaRamp { l: Profile, beta: Profile },
    /// Point mass at 1/2.
    EqualMitosis,
    /// Piecewise-constant density on equal-width bins of `[0, 1]`, independent
    /// of the mother mass. Lets users plug in arbitrary (even asymmetric)
    /// kernels for validation.
    Table { density: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivisionKernel {
    pub family: KernelFamily,
}

/// Number of Simpson sub-intervals on each half of the kernel support.
pub const HALF_SUPPORT_INTERVALS: usize = 64;

impl DivisionKernel {
    pub fn uniform(l: f64) -> Self {
        Self {
            family: KernelFamily::Uniform {
                l: Profile::constant(l),
            },
        }
    }

    pub fn beta_ramp(l: f64, beta: f64) -> Self {
        Self {
            family: KernelFamily::BetaRamp {
                l: Profile::constant(l),
                beta: Profile::constant(beta),
            },
        }
    }

    pub fn equal_mitosis() -> Self {
        Self {
            family: KernelFamily::EqualMitosis,
        }
    }

    pub fn table(density: Vec<f64>) -> Self {
        Self {
            family: KernelFamily::Table { density },
        }
    }

    pub fn tag(&self) -> &'static str {
        match self.family {
            KernelFamily::Uniform { .. } => "uniform",
            KernelFamily::BetaRamp { .. } => "beta_ramp",
            KernelFamily::EqualMitosis => "equal_mitosis",
            KernelFamily::Table { .. } => "table",
        }
    }

    /// `(l(x), beta(x))` for the ramp families.
    fn ramp_params(&self, x: f64) -> Option<(f64, f64)> {
        match &self.family {
            KernelFamily::Uniform { l } => Some((l.at(x), 0.0)),
            KernelFamily::BetaRamp { l, beta } => Some((l.at(x), beta.at(x))),
            _ => None,
        }
    }

    /// Lower edge `l(x)` of the support for the ramp families.
    pub fn support_margin(&self, x: f64) -> Option<f64> {
        self.ramp_params(x).map(|(l, _)| l)
    }

    /// True when the kernel does not depend on the mother mass.
    pub fn is_mass_independent(&self) -> bool {
        match &self.family {
            KernelFamily::Uniform { l } => l.is_constant(),
            KernelFamily::BetaRamp { l, beta } => l.is_constant() && beta.is_constant(),
            KernelFamily::EqualMitosis | KernelFamily::Table { .. } => true,
        }
    }

    /// Density `q(x, alpha)`.
    pub fn density(&self, x: f64, alpha: f64) -> Result<f64, KernelError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(KernelError::FractionOutOfRange(alpha));
        }
        match &self.family {
            KernelFamily::EqualMitosis => Err(KernelError::NoDensity),
            KernelFamily::Table { density } => {
                let k = density.len();
                let idx = ((alpha * k as f64).floor() as usize).min(k - 1);
                Ok(density[idx])
            }
            _ => {
                let (l, beta) = self.ramp_params(x).expect("ramp family");
                Ok(ramp_density(l, beta, alpha))
            }
        }
    }

    /// Distribution function `F_x(u)`.
    pub fn cdf(&self, x: f64, u: f64) -> Result<f64, KernelError> {
        match &self.family {
            KernelFamily::EqualMitosis => Err(KernelError::NoDensity),
            KernelFamily::Table { density } => Ok(table_cdf(density, u.clamp(0.0, 1.0))),
            _ => {
                let (l, beta) = self.ramp_params(x).expect("ramp family");
                Ok(ramp_cdf(l, beta, u))
            }
        }
    }

    /// Generalised inverse `F_x^{-1}(v)`.
    pub fn inverse_cdf(&self, x: f64, v: f64) -> f64 {
        match &self.family {
            KernelFamily::EqualMitosis => 0.5,
            KernelFamily::Table { density } => table_inverse(density, v),
            _ => {
                let (l, beta) = self.ramp_params(x).expect("ramp family");
                ramp_inverse(l, beta, v)
            }
        }
    }

    /// Inverse-transform sample of the daughter fraction from a uniform variate.
    #[inline]
    pub fn sample(&self, x: f64, u: f64) -> f64 {
        self.inverse_cdf(x, u)
    }

    /// Breakpoints splitting `[0, 1]` into pieces where `q(x, .)` is smooth.
    pub fn pieces(&self, x: f64) -> Vec<(f64, f64)> {
        match &self.family {
            KernelFamily::EqualMitosis => vec![],
            KernelFamily::Table { density } => {
                let k = density.len() as f64;
                (0..density.len())
                    .map(|i| (i as f64 / k, (i + 1) as f64 / k))
                    .collect()
            }
            _ => {
                let (l, _) = self.ramp_params(x).expect("ramp family");
                vec![(l, 0.5), (0.5, 1.0 - l)]
            }
        }
    }

    /// Quadrature rule `(alpha_k, w_k)` for `integral q(x, a) f(a) da`.
    ///
    /// Composite Simpson on each smooth piece of the support (129 nodes for
    /// the ramp families), weighted by the density and renormalised so the
    /// weights sum to one exactly.
    pub fn quadrature(&self, x: f64) -> Vec<(f64, f64)> {
        if let KernelFamily::EqualMitosis = self.family {
            return vec![(0.5, 1.0)];
        }
        let pieces = self.pieces(x);
        let per_piece = match self.family {
            KernelFamily::Table { ref density } => (2 * HALF_SUPPORT_INTERVALS / density.len()).max(2),
            _ => HALF_SUPPORT_INTERVALS,
        };
        let mut nodes: Vec<(f64, f64)> = Vec::with_capacity(pieces.len() * (per_piece + 1));
        for (a, b) in pieces {
            if b <= a {
                continue;
            }
            // Evaluate the density just inside the piece so that table bins
            // and the ramp's closed support edges use the piece's own value.
            let mid = 0.5 * (a + b);
            for (alpha, w) in simpson_rule(a, b, per_piece) {
                let probe = alpha + (mid - alpha) * 1e-12;
                let q = self.density(x, probe.clamp(0.0, 1.0)).unwrap_or(0.0);
                if let Some(last) = nodes.last_mut() {
                    if last.0 == alpha {
                        last.1 += w * q;
                        continue;
                    }
                }
                nodes.push((alpha, w * q));
            }
        }
        let total: f64 = nodes.iter().map(|n| n.1).sum();
        if total > 0.0 {
            for n in &mut nodes {
                n.1 /= total;
            }
        }
        nodes.retain(|n| n.1 > 0.0);
        nodes
    }

    /// `integral_0^1 q(x, a) f(a x) f((1 - a) x) da` for `f` tabulated on a
    /// mass grid and interpolated piecewise-linearly (flat outside the table).
    pub fn monotone_integral(&self, f: &MassTable, x: f64) -> f64 {
        self.quadrature(x)
            .into_iter()
            .map(|(a, w)| w * f.eval(a * x) * f.eval((1.0 - a) * x))
            .sum()
    }

    /// Checks the coupling condition on the given grids.
    pub fn check_coupling(&self, xs: &[f64], us: &[f64]) -> CouplingReport {
        const SLACK: f64 = 1e-12;
        let mut report = CouplingReport::default();
        let inv: Vec<Vec<f64>> = xs
            .iter()
            .map(|&x| us.iter().map(|&u| self.inverse_cdf(x, u)).collect())
            .collect();
        for (i, &x) in xs.iter().enumerate() {
            for (j, &y) in xs.iter().enumerate() {
                if !(x < y) {
                    continue;
                }
                for (k, &u) in us.iter().enumerate() {
                    let fx = inv[i][k];
                    let fy = inv[j][k];
                    report.pairs_checked += 1;
                    if report.mass_level.is_none() {
                        if x * fx > y * fy + SLACK {
                            report.mass_level = Some(CouplingViolation {
                                x,
                                y,
                                u,
                                lhs: x * fx,
                                rhs: y * fy,
                                which: "x F_x^-1(u) <= y F_y^-1(u)",
                            });
                        } else if x * (1.0 - fx) > y * (1.0 - fy) + SLACK {
                            report.mass_level = Some(CouplingViolation {
                                x,
                                y,
                                u,
                                lhs: x * (1.0 - fx),
                                rhs: y * (1.0 - fy),
                                which: "x (1 - F_x^-1(u)) <= y (1 - F_y^-1(u))",
                            });
                        }
                    }
                    if report.literal.is_none() {
                        if x * fx > y * fy + SLACK {
                            report.literal = Some(CouplingViolation {
                                x,
                                y,
                                u,
                                lhs: x * fx,
                                rhs: y * fy,
                                which: "x F_x^-1(u) <= y F_y^-1(u)",
                            });
                        } else if (1.0 - x) * fx > (1.0 - y) * fy + SLACK {
                            report.literal = Some(CouplingViolation {
                                x,
                                y,
                                u,
                                lhs: (1.0 - x) * fx,
                                rhs: (1.0 - y) * fy,
                                which: "(1 - x) F_x^-1(u) <= (1 - y) F_y^-1(u)",
                            });
                        }
                    }
                }
            }
        }
        // Differential form: 0 <= F + x dF/dx <= 1.
        for &x in xs {
            let dx = 1e-6 * x.max(1e-3);
            for &u in us {
                let f = self.inverse_cdf(x, u);
                let df = (self.inverse_cdf(x + dx, u) - self.inverse_cdf((x - dx).max(0.0), u))
                    / (x + dx - (x - dx).max(0.0));
                let v = f + x * df;
                if report.differential.is_none() && !(-1e-8..=1.0 + 1e-8).contains(&v) {
                    report.differential = Some(CouplingViolation {
                        x,
                        y: x,
                        u,
                        lhs: v,
                        rhs: if v < 0.0 { 0.0 } else { 1.0 },
                        which: "0 <= F_x^-1(u) + x d/dx F_x^-1(u) <= 1",
                    });
                }
            }
        }
        report
    }
}

#[inline]
fn ramp_density(l: f64, beta: f64, a: f64) -> f64 {
    if a < l || a > 1.0 - l {
        return 0.0;
    }
    let c = 2.0 * (0.5 - l).powf(beta + 1.0) / (beta + 1.0);
    let d = if a <= 0.5 { a - l } else { 1.0 - a - l };
    if beta == 0.0 {
        1.0 / c
    } else {
        d.max(0.0).powf(beta) / c
    }
}

#[inline]
fn ramp_cdf(l: f64, beta: f64, u: f64) -> f64 {
    if u < l {
        0.0
    } else if u <= 0.5 {
        0.5 * ((u - l) / (0.5 - l)).powf(beta + 1.0)
    } else if u <= 1.0 - l {
        1.0 - 0.5 * ((1.0 - u - l).max(0.0) / (0.5 - l)).powf(beta + 1.0)
    } else {
        1.0
    }
}

#[inline]
fn ramp_inverse(l: f64, beta: f64, v: f64) -> f64 {
    let e = 1.0 / (beta + 1.0);
    if v <= 0.0 {
        l
    } else if v <= 0.5 {
        (0.5 - l) * (2.0 * v).powf(e) + l
    } else if v < 1.0 {
        1.0 - l - (0.5 - l) * (2.0 * (1.0 - v)).powf(e)
    } else {
        1.0 - l
    }
}

fn table_cdf(density: &[f64], u: f64) -> f64 {
    let k = density.len() as f64;
    let pos = u * k;
    let full = (pos.floor() as usize).min(density.len());
    let mut acc: f64 = density[..full].iter().sum::<f64>() / k;
    if full < density.len() {
        acc += density[full] * (pos - full as f64) / k;
    }
    acc
}

fn table_inverse(density: &[f64], v: f64) -> f64 {
    let k = density.len() as f64;
    let total: f64 = density.iter().sum::<f64>() / k;
    let target = v.clamp(0.0, 1.0) * total;
    let mut acc = 0.0;
    for (i, &d) in density.iter().enumerate() {
        let mass = d / k;
        if mass > 0.0 && acc + mass >= target {
            return (i as f64 + (target - acc) / d * k) / k;
        }
        acc += mass;
    }
    1.0
}

/// First failing coordinate of a coupling inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingViolation {
    pub x: f64,
    pub y: f64,
    pub u: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub which: &'static str,
}

/// Outcome of [`DivisionKernel::check_coupling`].
///
/// `mass_level` is the ordering of daughter masses `(x theta_x, x (1 -
/// theta_x))` under the quantile coupling and decides the verdict. The
/// inequality pair as literally written with `(1 - x)` and the differential
/// criterion are reported alongside for comparison.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CouplingReport {
    pub pairs_checked: usize,
    pub mass_level: Option<CouplingViolation>,
    pub literal: Option<CouplingViolation>,
    pub differential: Option<CouplingViolation>,
}

impl CouplingReport {
    pub fn passed(&self) -> bool {
        self.mass_level.is_none()
    }
}

/// A function tabulated on increasing masses, interpolated linearly.
#[derive(Debug, Clone, PartialEq)]
pub struct MassTable {
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
}

impl MassTable {
    pub fn new(xs: Vec<f64>, values: Vec<f64>) -> Self {
        assert_eq!(xs.len(), values.len());
        Self { xs, values }
    }

    pub fn from_fn<F: Fn(f64) -> f64>(xs: &[f64], f: F) -> Self {
        Self::new(xs.to_vec(), xs.iter().map(|&x| f(x)).collect())
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        interp_flat(&self.xs, &self.values, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::simpson;

    #[test]
    fn uniform_density_value() {
        let k = DivisionKernel::uniform(0.25);
        assert_eq!(k.density(0.3, 0.5).unwrap(), 2.0);
        assert_eq!(k.density(0.3, 0.25).unwrap(), 2.0);
        assert_eq!(k.density(0.3, 0.2).unwrap(), 0.0);
        assert_eq!(k.density(0.3, 0.8).unwrap(), 0.0);
    }

    #[test]
    fn beta_ramp_integrates_to_one() {
        let k = DivisionKernel::beta_ramp(0.25, 5.0);
        let lo = simpson(|a| k.density(0.5, a).unwrap(), 0.25, 0.5, 512);
        let hi = simpson(|a| k.density(0.5, a).unwrap(), 0.5, 0.75, 512);
        assert!((lo + hi - 1.0).abs() < 1e-10, "{}", lo + hi);
    }

    #[test]
    fn cdf_anchor_values() {
        for k in [DivisionKernel::uniform(0.25), DivisionKernel::beta_ramp(0.25, 5.0)] {
            assert!((k.cdf(0.4, 0.5).unwrap() - 0.5).abs() < 1e-15);
            assert_eq!(k.cdf(0.4, 0.25).unwrap(), 0.0);
            assert_eq!(k.cdf(0.4, 1.0).unwrap(), 1.0);
            assert!((k.inverse_cdf(0.4, 0.5) - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn uniform_inverse_matches_closed_form() {
        let k = DivisionKernel::uniform(0.25);
        for i in 1..20 {
            let v = i as f64 / 20.0;
            let expected = (1.0 - 2.0 * v) * 0.25 + v;
            assert!((k.inverse_cdf(0.7, v) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn beta_ramp_cdf_matches_quadrature() {
        let k = DivisionKernel::beta_ramp(0.25, 5.0);
        let quad = simpson(|a| k.density(0.5, a).unwrap(), 0.25, 0.4, 512);
        assert!((k.cdf(0.5, 0.4).unwrap() - quad).abs() < 1e-10);
    }

    #[test]
    fn equal_mitosis_has_no_density() {
        let k = DivisionKernel::equal_mitosis();
        assert_eq!(k.density(0.5, 0.5), Err(KernelError::NoDensity));
        assert_eq!(k.cdf(0.5, 0.5), Err(KernelError::NoDensity));
        assert_eq!(k.sample(0.5, 0.1), 0.5);
        let f = MassTable::from_fn(&[0.0, 1.0], |z| 1.0 - z);
        assert!((k.monotone_integral(&f, 0.8) - 0.36).abs() < 1e-15);
    }

    #[test]
    fn quadrature_has_129_nodes_and_unit_mass() {
        let k = DivisionKernel::beta_ramp(0.25, 5.0);
        let rule = k.quadrature(0.5);
        // end nodes carry zero density and are dropped
        assert!(rule.len() <= 129 && rule.len() >= 127);
        let total: f64 = rule.iter().map(|r| r.1).sum();
        assert!((total - 1.0).abs() < 1e-15);
        let u = DivisionKernel::uniform(0.25).quadrature(0.5);
        assert_eq!(u.len(), 129);
    }

    #[test]
    fn table_kernel_roundtrip() {
        let k = DivisionKernel::table(vec![2.0, 0.0]);
        assert_eq!(k.density(0.5, 0.25).unwrap(), 2.0);
        assert_eq!(k.density(0.5, 0.75).unwrap(), 0.0);
        assert!((k.cdf(0.5, 0.25).unwrap() - 0.5).abs() < 1e-15);
        assert!((k.inverse_cdf(0.5, 0.5) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn constant_l_passes_coupling() {
        let xs: Vec<f64> = (1..20).map(|i| i as f64 / 20.0).collect();
        let us: Vec<f64> = (1..16).map(|i| i as f64 / 16.0).collect();
        let r = DivisionKernel::beta_ramp(0.2, 3.0).check_coupling(&xs, &us);
        assert!(r.passed());
        assert!(r.differential.is_none());
    }

    #[test]
    fn single_point_grid_is_vacuous() {
        let r = DivisionKernel::uniform(0.25).check_coupling(&[0.5], &[0.3]);
        assert!(r.passed());
        assert_eq!(r.pairs_checked, 0);
    }

    #[test]
    fn constant_integrand() {
        let k = DivisionKernel::uniform(0.25);
        let f = MassTable::from_fn(&[0.0, 0.5, 1.0], |_| 0.7);
        assert!((k.monotone_integral(&f, 0.6) - 0.49).abs() < 1e-13);
    }
}
