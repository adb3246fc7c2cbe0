//! Uniform cell-centred mass grid on `(0, M)`.

use crate::quadrature::locate_uniform;

#[derive(Debug, Clone, PartialEq)]
pub struct MassGrid {
    pub max_mass: f64,
    /// Cell width `M / n`.
    pub h: f64,
    /// Cell centres `(i + 1/2) h`.
    pub xs: Vec<f64>,
}

impl MassGrid {
    pub fn new(max_mass: f64, n: usize) -> Self {
        assert!(n >= 1 && max_mass > 0.0);
        let h = max_mass / n as f64;
        let xs = (0..n).map(|i| (i as f64 + 0.5) * h).collect();
        Self { max_mass, h, xs }
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Right edge of cell `i`.
    pub fn face(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.h
    }

    /// Linear interpolation stencil `(i, w)` with flat extension beyond the
    /// first and last centres.
    #[inline]
    pub fn stencil(&self, x: f64) -> (usize, f64) {
        locate_uniform(0.5 * self.h, self.h, self.xs.len(), x)
    }

    /// Interpolates grid values at an arbitrary mass.
    #[inline]
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let (i, w) = self.stencil(x);
        if w == 0.0 {
            values[i]
        } else {
            values[i] * (1.0 - w) + values[i + 1] * w
        }
    }

    /// Index of the cell containing `x`.
    pub fn cell_of(&self, x: f64) -> usize {
        ((x / self.h).floor().max(0.0) as usize).min(self.xs.len() - 1)
    }
}
