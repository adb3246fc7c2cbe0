//! Adaptive Dormand–Prince 5(4) integrator for small fixed-size systems.

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b - b* (fifth minus fourth order weights)
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
}

impl Tolerance {
    pub fn relative(rtol: f64) -> Self {
        Self {
            rtol,
            atol: rtol * 1e-3,
        }
    }
}

#[inline]
fn axpy<const N: usize>(y: &[f64; N], terms: &[(f64, &[f64; N])], h: f64) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

/// One Dormand–Prince step of size `h` from `(t, y)`. Returns the fifth-order
/// solution and the embedded error estimate.
pub fn dopri_step<const N: usize, F>(rhs: &F, t: f64, y: &[f64; N], h: f64) -> ([f64; N], [f64; N])
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let k1 = rhs(t, y);
    let k2 = rhs(t + C2 * h, &axpy(y, &[(A21, &k1)], h));
    let k3 = rhs(t + C3 * h, &axpy(y, &[(A31, &k1), (A32, &k2)], h));
    let k4 = rhs(t + C4 * h, &axpy(y, &[(A41, &k1), (A42, &k2), (A43, &k3)], h));
    let k5 = rhs(
        t + C5 * h,
        &axpy(y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], h),
    );
    let k6 = rhs(
        t + h,
        &axpy(
            y,
            &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            h,
        ),
    );
    let y5 = axpy(
        y,
        &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
        h,
    );
    let k7 = rhs(t + h, &y5);
    let mut err = [0.0; N];
    for i in 0..N {
        err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
    (y5, err)
}

fn error_norm<const N: usize>(y0: &[f64; N], y1: &[f64; N], err: &[f64; N], tol: Tolerance) -> f64 {
    let mut acc = 0.0;
    for i in 0..N {
        let sc = tol.atol + tol.rtol * y0[i].abs().max(y1[i].abs());
        let r = err[i] / sc;
        acc += r * r;
    }
    (acc / N as f64).sqrt()
}

/// Step-by-step driver. `post` is applied to every accepted state (used to
/// clamp the mass component below `M`).
pub struct Stepper<const N: usize, F, P> {
    rhs: F,
    post: P,
    tol: Tolerance,
    pub t: f64,
    pub y: [f64; N],
    h: f64,
}

impl<const N: usize, F, P> Stepper<N, F, P>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
    P: Fn(&mut [f64; N]),
{
    pub fn new(rhs: F, post: P, t0: f64, y0: [f64; N], h0: f64, tol: Tolerance) -> Self {
        Self {
            rhs,
            post,
            tol,
            t: t0,
            y: y0,
            h: h0,
        }
    }

    /// Advances by one accepted step, never beyond `t_max`. Returns the
    /// previous `(t, y)` so callers can bracket events inside the step.
    pub fn advance(&mut self, t_max: f64) -> (f64, [f64; N]) {
        let prev = (self.t, self.y);
        loop {
            let h = self.h.min(t_max - self.t);
            let (mut y1, err) = dopri_step(&self.rhs, self.t, &self.y, h);
            let e = error_norm(&self.y, &y1, &err, self.tol);
            let tiny = h <= 1e-14 * self.t.abs().max(1.0);
            if e <= 1.0 || tiny {
                (self.post)(&mut y1);
                self.t = if h == t_max - self.t { t_max } else { self.t + h };
                self.y = y1;
                let fac = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
                // Keep the last proposal if the step was truncated by t_max.
                if h == self.h {
                    self.h = h * fac;
                } else {
                    self.h = self.h.max(h * fac);
                }
                return prev;
            }
            let fac = if e.is_finite() { (0.9 * e.powf(-0.2)).clamp(0.1, 0.9) } else { 0.1 };
            self.h = h * fac;
        }
    }

    /// Single untested step of size `h` from an explicit state.
    pub fn trial(&self, t: f64, y: &[f64; N], h: f64) -> [f64; N] {
        let (mut y1, _) = dopri_step(&self.rhs, t, y, h);
        (self.post)(&mut y1);
        y1
    }
}

/// Integrates from `t0` to `t1` and returns the final state.
pub fn integrate<const N: usize, F, P>(rhs: F, post: P, t0: f64, y0: [f64; N], t1: f64, tol: Tolerance) -> [f64; N]
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
    P: Fn(&mut [f64; N]),
{
    if t1 <= t0 {
        return y0;
    }
    let h0 = initial_step(t1 - t0, tol);
    let mut stepper = Stepper::new(rhs, post, t0, y0, h0, tol);
    while stepper.t < t1 {
        stepper.advance(t1);
    }
    stepper.y
}

pub fn initial_step(span: f64, tol: Tolerance) -> f64 {
    (span * 0.01).min(tol.rtol.powf(0.2) * 0.1).max(1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let y = integrate(
            |_t, y: &[f64; 1]| [-2.0 * y[0]],
            |_y: &mut [f64; 1]| {},
            0.0,
            [1.0],
            3.0,
            Tolerance::relative(1e-10),
        );
        assert!((y[0] - (-6.0f64).exp()).abs() < 1e-11);
    }

    #[test]
    fn non_autonomous_quadrature() {
        let y = integrate(
            |t, _y: &[f64; 1]| [t.cos()],
            |_y: &mut [f64; 1]| {},
            0.0,
            [0.0],
            2.0,
            Tolerance::relative(1e-11),
        );
        assert!((y[0] - 2.0f64.sin()).abs() < 1e-10);
    }
}
