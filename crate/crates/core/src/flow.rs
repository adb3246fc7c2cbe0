//! Deterministic mass transport `d/dt A_t(x) = g(S, A_t(x))`, hitting times and
//! rate integrals along trajectories.

use crate::error::FlowError;
use crate::model::{DivisionFamily, GrowthModel, ModelDefinition};
use crate::ode::{initial_step, integrate, Stepper, Tolerance};

/// Masses are kept below `M (1 - CEILING_GAP)` so that `M` stays an
/// asymptote that trajectories never reach.
const CEILING_GAP: f64 = f64::EPSILON;

/// Beyond this time an event clock that has not rung is declared infinite.
const TIME_CAP: f64 = 1e12;

/// The flow of one environment.
#[derive(Debug, Clone, Copy)]
pub struct GrowthFlow<'a> {
    model: &'a ModelDefinition,
    s: f64,
    tol: Tolerance,
    /// `mu(S)` when the logistic closed form applies.
    logistic_rate: Option<f64>,
}

impl<'a> GrowthFlow<'a> {
    pub fn new(model: &'a ModelDefinition, s: f64, rtol: f64) -> Self {
        let logistic_rate = match model.growth {
            GrowthModel::LogisticMonod { .. } => Some(model.growth.speed_factor(s)),
            GrowthModel::Separable { .. } => None,
        };
        Self {
            model,
            s,
            tol: Tolerance::relative(rtol),
            logistic_rate,
        }
    }

    /// Same flow with the closed form disabled, for cross-validation.
    pub fn numerical(mut self) -> Self {
        self.logistic_rate = None;
        self
    }

    pub fn model(&self) -> &ModelDefinition {
        self.model
    }

    pub fn substrate(&self) -> f64 {
        self.s
    }

    fn ceiling(&self) -> f64 {
        self.model.max_mass * (1.0 - CEILING_GAP)
    }

    fn clamp(&self, x: f64) -> f64 {
        x.clamp(0.0, self.ceiling())
    }

    #[inline]
    fn speed(&self, x: f64) -> f64 {
        self.model.growth_speed(self.s, x)
    }

    #[inline]
    fn division(&self, x: f64) -> f64 {
        self.model.division_rate(self.s, x)
    }

    /// `A_t(x)`.
    pub fn flow(&self, x: f64, t: f64) -> f64 {
        let m = self.model.max_mass;
        if x >= m {
            return m;
        }
        if t <= 0.0 || x <= 0.0 {
            return x.max(0.0);
        }
        match self.logistic_rate {
            Some(r) => {
                let a = m * x / (x + (m - x) * (-r * t).exp());
                a.clamp(x, self.ceiling().max(x))
            }
            None => self.flow_ode(x, t),
        }
    }

    /// `A_t(x)` by adaptive integration regardless of the growth family.
    pub fn flow_ode(&self, x: f64, t: f64) -> f64 {
        let m = self.model.max_mass;
        if x >= m {
            return m;
        }
        if t <= 0.0 || x <= 0.0 {
            return x.max(0.0);
        }
        let cap = self.ceiling();
        let y = integrate(
            |_t, y: &[f64; 1]| [self.speed(y[0])],
            |y: &mut [f64; 1]| y[0] = y[0].clamp(0.0, cap),
            0.0,
            [x],
            t,
            self.tol,
        );
        y[0].max(x)
    }

    /// First time the trajectory from `x` reaches `y`; infinite for `y >= M`.
    pub fn hitting_time(&self, x: f64, y: f64) -> Result<f64, FlowError> {
        let m = self.model.max_mass;
        if !(x > 0.0 && x < m) {
            return Err(FlowError::MassOutOfRange(x));
        }
        if y < x {
            return Err(FlowError::TargetBelowStart { x, y });
        }
        if y >= m {
            return Ok(f64::INFINITY);
        }
        if y == x {
            return Ok(0.0);
        }
        match self.logistic_rate {
            Some(r) => Ok(((y * (m - x)) / (x * (m - y))).ln() / r),
            None => Ok(self.hitting_time_ode(x, y)),
        }
    }

    /// `integral_x^y dz / g(S, z)` by adaptive integration in the mass variable.
    pub fn hitting_time_ode(&self, x: f64, y: f64) -> f64 {
        let out = integrate(
            |z, _: &[f64; 1]| {
                let g = self.speed(z);
                [if g > 0.0 { 1.0 / g } else { f64::INFINITY }]
            },
            |_: &mut [f64; 1]| {},
            x,
            [0.0],
            y,
            self.tol,
        );
        out[0]
    }

    fn augmented(&self) -> impl Fn(f64, &[f64; 2]) -> [f64; 2] + '_ {
        move |_t, y: &[f64; 2]| [self.speed(y[0]), self.division(y[0])]
    }

    /// `(integral_0^t b(A_u) du, integral_0^t (b(A_u) + D) du)`.
    pub fn cumulative_rate(&self, x: f64, t: f64, d: f64) -> (f64, f64) {
        if t <= 0.0 {
            return (0.0, 0.0);
        }
        let cap = self.ceiling();
        let y = integrate(
            self.augmented(),
            |y: &mut [f64; 2]| y[0] = y[0].clamp(0.0, cap),
            0.0,
            [self.clamp(x), 0.0],
            t,
            self.tol,
        );
        (y[1], y[1] + d * t)
    }

    /// Event clock in closed form when the division rate stays constant along
    /// the trajectory: constant family and `x` above the threshold.
    pub fn linear_clock(&self, x: f64, e: f64, d: f64) -> Option<(f64, f64)> {
        if self.model.division.family != DivisionFamily::Constant || x <= self.model.division_threshold() {
            return None;
        }
        let c = self.division(x) + d;
        if c <= 0.0 {
            return Some((f64::INFINITY, self.ceiling().max(x)));
        }
        let t = e / c;
        Some((t, self.flow(x, t)))
    }

    /// Time `T` at which `integral_0^T (b(A_u) + D) du` reaches `e`, and the
    /// mass `A_T(x)`. Returns `T = +inf` when the clock never rings.
    pub fn event_time(&self, x: f64, e: f64, d: f64) -> (f64, f64) {
        if e <= 0.0 {
            return (0.0, x);
        }
        if let Some(hit) = self.linear_clock(x, e, d) {
            return hit;
        }
        let cap = self.ceiling();
        let x = self.clamp(x);
        // Below the division threshold the clock is a pure death clock.
        let threshold = self.model.division_threshold();
        if d > 0.0 && x <= threshold {
            let t = e / d;
            let y = self.flow(x, t);
            if y <= threshold {
                return (t, y);
            }
        }
        let tol = 1e-10 * (1.0 + e);
        let h0 = initial_step(1.0, self.tol).max(1e-3);
        let rhs = self.augmented();
        let post = |y: &mut [f64; 2]| y[0] = y[0].clamp(0.0, cap);
        let mut stepper = Stepper::new(rhs, post, 0.0, [x, 0.0], h0, self.tol);
        let excess = |t: f64, y: &[f64; 2]| y[1] + d * t - e;
        loop {
            let (t0, y0) = stepper.advance(f64::INFINITY);
            let t1 = stepper.t;
            let y1 = stepper.y;
            let f1 = excess(t1, &y1);
            if f1 >= 0.0 {
                return self.refine(&stepper, t0, y0, t1, y1, &excess, tol);
            }
            if t1 > TIME_CAP {
                return (f64::INFINITY, y1[0]);
            }
        }
    }

    /// Illinois root finding of the event inside one accepted step, using
    /// single integrator steps from the step start as the interpolant.
    #[allow(clippy::too_many_arguments)]
    fn refine<F, P, G>(
        &self,
        stepper: &Stepper<2, F, P>,
        t0: f64,
        y0: [f64; 2],
        t1: f64,
        y1: [f64; 2],
        excess: &G,
        tol: f64,
    ) -> (f64, f64)
    where
        F: Fn(f64, &[f64; 2]) -> [f64; 2],
        P: Fn(&mut [f64; 2]),
        G: Fn(f64, &[f64; 2]) -> f64,
    {
        let (mut a, mut fa) = (t0, excess(t0, &y0));
        let (mut b, mut fb) = (t1, excess(t1, &y1));
        let mut yb = y1;
        if fb.abs() <= tol {
            return (t1, y1[0]);
        }
        let mut side = 0i8;
        for _ in 0..100 {
            let mut c = b - fb * (b - a) / (fb - fa);
            if !(c > a && c < b) {
                c = 0.5 * (a + b);
            }
            let yc = stepper.trial(t0, &y0, c - t0);
            let fc = excess(c, &yc);
            if fc.abs() <= tol || (b - a) <= 1e-15 * b.max(1.0) {
                return (c, yc[0]);
            }
            if fc > 0.0 {
                b = c;
                fb = fc;
                yb = yc;
                if side == 1 {
                    fa *= 0.5;
                }
                side = 1;
            } else {
                a = c;
                fa = fc;
                if side == -1 {
                    fb *= 0.5;
                }
                side = -1;
            }
        }
        (b, yb[0])
    }
}

/// Ten-point Gauss–Legendre nodes and weights on `[-1, 1]`.
const GL_NODES: [f64; 5] = [
    0.148_874_338_981_631_2,
    0.433_395_394_129_247_2,
    0.679_409_568_299_024_4,
    0.865_063_366_688_984_5,
    0.973_906_528_517_171_7,
];
const GL_WEIGHTS: [f64; 5] = [
    0.295_524_224_714_752_9,
    0.269_266_719_309_996_4,
    0.219_086_362_515_982_0,
    0.149_451_349_150_580_6,
    0.066_671_344_308_688_1,
];

fn gauss_legendre<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut sum = 0.0;
    for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
        sum += w * (f(c - h * x) + f(c + h * x));
    }
    sum * h
}

/// Event clock of logistic growth, tabulated in `z = ln(x / (M - x))`.
///
/// Along a logistic trajectory `z` grows linearly at rate `mu(S)`, so the
/// division hazard accumulated up to time `T` is
/// `(C(z_x + mu T) - C(z_x)) / mu` with `C(z) = integral b(m(z)) dz`.
/// `C` is stored at panel nodes and completed inside a panel by
/// Gauss–Legendre quadrature; panels are graded towards the division
/// threshold, where `b` may fail to be smooth.
#[derive(Debug, Clone)]
pub struct HazardTable {
    model: ModelDefinition,
    s: f64,
    rate: f64,
    nodes: Vec<f64>,
    cumulative: Vec<f64>,
}

impl HazardTable {
    const Z_LOW: f64 = -23.0;
    const PANEL: f64 = 0.125;
    const GRADING: i32 = 40;

    /// `None` unless growth is logistic.
    pub fn new(model: &ModelDefinition, s: f64) -> Option<Self> {
        let GrowthModel::LogisticMonod { .. } = model.growth else {
            return None;
        };
        let rate = model.growth.speed_factor(s);
        if !(rate > 0.0) {
            return None;
        }
        let m = model.max_mass;
        let z_high = ((1.0 - CEILING_GAP) / CEILING_GAP).ln();
        let mut nodes: Vec<f64> = Vec::new();
        let mut z = Self::Z_LOW;
        while z < z_high {
            nodes.push(z);
            z += Self::PANEL;
        }
        nodes.push(z_high);
        let theta = model.division_threshold();
        if theta > 0.0 && theta < m {
            let zt = (theta / (m - theta)).ln();
            if zt > Self::Z_LOW && zt < z_high {
                nodes.push(zt);
                for j in 1..=Self::GRADING {
                    let off = Self::PANEL * 0.5f64.powi(j);
                    nodes.push(zt - off);
                    nodes.push(zt + off);
                }
            }
        }
        nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        nodes.dedup();
        let mut table = Self {
            model: model.clone(),
            s,
            rate,
            nodes,
            cumulative: Vec::new(),
        };
        let mut acc = 0.0;
        let mut cumulative = vec![0.0];
        for w in table.nodes.windows(2) {
            acc += gauss_legendre(|z| table.b(z), w[0], w[1]);
            cumulative.push(acc);
        }
        table.cumulative = cumulative;
        Some(table)
    }

    fn mass(&self, z: f64) -> f64 {
        self.model.max_mass / (1.0 + (-z).exp())
    }

    #[inline]
    fn b(&self, z: f64) -> f64 {
        self.model.division_rate(self.s, self.mass(z))
    }

    fn range(&self) -> (f64, f64) {
        (self.nodes[0], *self.nodes.last().unwrap())
    }

    fn panel(&self, z: f64) -> usize {
        self.nodes.partition_point(|&n| n <= z).clamp(1, self.nodes.len() - 1) - 1
    }

    /// `C(z)` for `z` inside the table.
    fn integral(&self, z: f64) -> f64 {
        let k = self.panel(z);
        self.cumulative[k] + gauss_legendre(|u| self.b(u), self.nodes[k], z)
    }

    /// Event time and mass, or `None` when `x` lies outside the tabulated
    /// range and the caller must integrate.
    pub fn event_time(&self, x: f64, e: f64, d: f64) -> Option<(f64, f64)> {
        let m = self.model.max_mass;
        if e <= 0.0 {
            return Some((0.0, x));
        }
        if !(x > 0.0 && x < m) {
            return None;
        }
        let (z_low, z_high) = self.range();
        let zx = (x / (m - x)).ln();
        if !(zx >= z_low && zx < z_high) {
            return None;
        }
        let r = self.rate;
        // Solve G(z) = C(z) + d z = G(z_x) + r e.
        let target = self.integral(zx) + d * zx + r * e;
        let g_at = |k: usize| self.cumulative[k] + d * self.nodes[k];
        let last = self.nodes.len() - 1;
        let z = if g_at(last) < target {
            // Past the table the mass is pinned at the ceiling.
            let slope = self.b(z_high) + d;
            if slope <= 0.0 {
                return Some((f64::INFINITY, self.model.max_mass * (1.0 - CEILING_GAP)));
            }
            z_high + (target - g_at(last)) / slope
        } else {
            let (mut a, mut b) = (self.panel(zx) + 1, last);
            while a < b {
                let mid = (a + b) / 2;
                if g_at(mid) < target {
                    a = mid + 1;
                } else {
                    b = mid;
                }
            }
            let k = a;
            let (mut lo, mut hi) = (self.nodes[k - 1].max(zx), self.nodes[k]);
            let base = self.cumulative[k - 1];
            let f = |z: f64| base + gauss_legendre(|u| self.b(u), self.nodes[k - 1], z) + d * z - target;
            let tol = 1e-13 * (1.0 + r * e);
            // Secant start across the panel; G is close to linear on it.
            // f(lo) is known: either a node value or G(z_x) - target = -r e.
            let g0 = if lo > self.nodes[k - 1] { -r * e } else { g_at(k - 1) - target };
            let g1 = g_at(k) - target;
            let mut z = if g1 > g0 { lo - g0 * (hi - lo) / (g1 - g0) } else { 0.5 * (lo + hi) };
            for _ in 0..60 {
                let fz = f(z);
                if fz.abs() <= tol {
                    break;
                }
                if fz > 0.0 {
                    hi = z;
                } else {
                    lo = z;
                }
                let slope = self.b(z) + d;
                let newton = z - fz / slope;
                z = if slope > 0.0 && newton > lo && newton < hi {
                    newton
                } else {
                    0.5 * (lo + hi)
                };
                if hi - lo <= 1e-15 * (1.0 + z.abs()) {
                    break;
                }
            }
            z
        };
        let t = (z - zx) / r;
        if t > TIME_CAP {
            return Some((f64::INFINITY, self.mass(z_high)));
        }
        let y = self.mass(z.min(z_high)).clamp(x, m * (1.0 - CEILING_GAP));
        Some((t, y))
    }
}
