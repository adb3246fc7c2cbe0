//! Model definition: growth speed `g(S, x)`, division rate `b(S, x)`, division
//! kernel `q(x, alpha)`, death rate `D` and maximal mass `M`.

use crate::kernel::DivisionKernel;
use crate::quadrature::interp_flat;

/// Piecewise-linear lookup table with flat extension.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

impl Table {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        Self { xs, ys }
    }

    pub fn eval(&self, x: f64) -> f64 {
        interp_flat(&self.xs, &self.ys, x)
    }
}

/// Growth speed families. Both shipped families are separable,
/// `g(S, x) = mu(S) * shape(x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum GrowthModel {
    /// `g(S, x) = mu_max * S / (K + S) * x * (1 - x / M)`.
    LogisticMonod { mu_max: f64, half_saturation: f64 },
    /// `g(S, x) = mu(S) * shape(x)` from user tables.
    Separable { mu: Table, shape: Table },
}

impl GrowthModel {
    /// The environmental speed factor `mu(S)`.
    pub fn speed_factor(&self, s: f64) -> f64 {
        match self {
            GrowthModel::LogisticMonod {
                mu_max,
                half_saturation,
            } => mu_max * s / (half_saturation + s),
            GrowthModel::Separable { mu, .. } => mu.eval(s),
        }
    }

    pub fn shape(&self, x: f64, max_mass: f64) -> f64 {
        match self {
            GrowthModel::LogisticMonod { .. } => {
                if x <= 0.0 || x >= max_mass {
                    0.0
                } else {
                    x * (1.0 - x / max_mass)
                }
            }
            GrowthModel::Separable { shape, .. } => shape.eval(x).max(0.0),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            GrowthModel::LogisticMonod { .. } => "logistic_monod",
            GrowthModel::Separable { .. } => "separable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DivisionFamily {
    /// `b = rate * 1{x > m_div}`.
    Constant,
    /// `b = rate * ((x - m_div) / (M - m_div))^exponent` above the threshold.
    Ramp { exponent: f64 },
    /// `b = rate * (M - x) / (M - m_div)` above the threshold. Decreasing in
    /// `x`; ships as a counterexample to the monotonicity hypotheses.
    Declining,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivisionRateModel {
    pub family: DivisionFamily,
    pub rate: f64,
    pub threshold: f64,
    /// Optional Monod multiplier `S / (K_b + S)`.
    pub s_half_saturation: Option<f64>,
    /// Certified upper bound on `b`; estimated from a probe grid when absent.
    pub bound: Option<f64>,
}

impl DivisionRateModel {
    pub fn constant(rate: f64, threshold: f64) -> Self {
        Self {
            family: DivisionFamily::Constant,
            rate,
            threshold,
            s_half_saturation: None,
            bound: None,
        }
    }

    pub fn ramp(rate: f64, threshold: f64, exponent: f64) -> Self {
        Self {
            family: DivisionFamily::Ramp { exponent },
            ..Self::constant(rate, threshold)
        }
    }

    pub fn declining(rate: f64, threshold: f64) -> Self {
        Self {
            family: DivisionFamily::Declining,
            ..Self::constant(rate, threshold)
        }
    }

    pub fn eval(&self, s: f64, x: f64, max_mass: f64) -> f64 {
        if x <= self.threshold {
            return 0.0;
        }
        let span = max_mass - self.threshold;
        let base = match self.family {
            DivisionFamily::Constant => self.rate,
            DivisionFamily::Ramp { exponent } => {
                let r = ((x - self.threshold) / span).clamp(0.0, 1.0);
                if exponent == 1.0 {
                    self.rate * r
                } else {
                    self.rate * r.powf(exponent)
                }
            }
            DivisionFamily::Declining => self.rate * ((max_mass - x) / span).clamp(0.0, 1.0),
        };
        match self.s_half_saturation {
            Some(k) => base * s / (k + s),
            None => base,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self.family {
            DivisionFamily::Constant => "constant",
            DivisionFamily::Ramp { .. } => "ramp",
            DivisionFamily::Declining => "declining",
        }
    }
}

/// Complete description of the growth-fragmentation-death mechanisms.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelDefinition {
    pub max_mass: f64,
    pub death_rate: f64,
    pub growth: GrowthModel,
    pub division: DivisionRateModel,
    pub kernel: DivisionKernel,
}

impl ModelDefinition {
    /// `g(S, x)`.
    #[inline]
    pub fn growth_speed(&self, s: f64, x: f64) -> f64 {
        self.growth.speed_factor(s) * self.growth.shape(x, self.max_mass)
    }

    /// `b(S, x)`.
    #[inline]
    pub fn division_rate(&self, s: f64, x: f64) -> f64 {
        self.division.eval(s, x, self.max_mass)
    }

    pub fn division_threshold(&self) -> f64 {
        self.division.threshold
    }

    /// Upper bound on `b` over `[0, M]` and the given environments. Uses the
    /// configured bound when present, else `1.001 * max` over a probe grid.
    pub fn rate_bound(&self, substrates: &[f64], probe: usize) -> f64 {
        if let Some(b) = self.division.bound {
            return b;
        }
        let n = probe.max(2);
        let mut best = 0.0f64;
        for &s in substrates {
            for i in 0..=n {
                let x = self.max_mass * i as f64 / n as f64;
                best = best.max(self.division_rate(s, x));
            }
        }
        best * 1.001
    }

    /// Same model with the death rate replaced.
    pub fn with_death_rate(&self, d: f64) -> Self {
        Self {
            death_rate: d,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::DivisionKernel;

    fn logramp() -> ModelDefinition {
        ModelDefinition {
            max_mass: 1.0,
            death_rate: 0.5,
            growth: GrowthModel::LogisticMonod {
                mu_max: 2.0,
                half_saturation: 1.0,
            },
            division: DivisionRateModel::ramp(4.0, 0.2, 1.0),
            kernel: DivisionKernel::uniform(0.25),
        }
    }

    #[test]
    fn logistic_growth_vanishes_at_both_ends() {
        let m = logramp();
        assert_eq!(m.growth_speed(1.0, 0.0), 0.0);
        assert_eq!(m.growth_speed(1.0, 1.0), 0.0);
        assert!((m.growth_speed(1.0, 0.5) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn ramp_is_zero_below_threshold() {
        let m = logramp();
        assert_eq!(m.division_rate(1.0, 0.2), 0.0);
        assert!((m.division_rate(1.0, 0.6) - 2.0).abs() < 1e-14);
        assert!((m.division_rate(1.0, 1.0) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn estimated_bound_dominates() {
        let m = logramp();
        let b = m.rate_bound(&[1.0], 64);
        assert!((b - 4.004).abs() < 1e-12);
    }

    #[test]
    fn s_multiplier_is_monod() {
        let mut d = DivisionRateModel::constant(2.0, 0.0);
        d.s_half_saturation = Some(1.0);
        assert!((d.eval(1.0, 0.5, 1.0) - 1.0).abs() < 1e-15);
    }
}
