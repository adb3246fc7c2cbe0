//! Composite Simpson rules and monotone piecewise-linear interpolation.

/// Nodes and weights of the composite Simpson rule on `[a, b]` with
/// `intervals` sub-intervals (rounded up to an even count).
pub fn simpson_rule(a: f64, b: f64, intervals: usize) -> Vec<(f64, f64)> {
    let m = intervals.max(2) + intervals % 2;
    let h = (b - a) / m as f64;
    (0..=m)
        .map(|k| {
            let w = if k == 0 || k == m {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            (a + k as f64 * h, w * h / 3.0)
        })
        .collect()
}

/// Composite Simpson integral of `f` over `[a, b]`.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, intervals: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    simpson_rule(a, b, intervals)
        .into_iter()
        .map(|(x, w)| w * f(x))
        .sum()
}

/// Simpson in a graded variable that clusters nodes at both ends of `[a, b]`.
///
/// Uses `x = a + (b - a) s^k / (s^k + (1 - s)^k)` with `k = 4`, which turns
/// algebraic endpoint behaviour like `(x - a)^beta` into a smooth integrand.
pub fn graded_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, intervals: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    const K: i32 = 4;
    let width = b - a;
    let map = |s: f64| {
        let p = s.powi(K);
        let q = (1.0 - s).powi(K);
        let denom = p + q;
        let x = a + width * p / denom;
        let dx = width * f64::from(K) * (s * (1.0 - s)).powi(K - 1) / (denom * denom);
        (x, dx)
    };
    simpson(
        |s| {
            let (x, dx) = map(s);
            if dx == 0.0 {
                0.0
            } else {
                f(x) * dx
            }
        },
        0.0,
        1.0,
        intervals,
    )
}

/// Piecewise-linear interpolation on strictly increasing abscissae with flat
/// extension outside the table. Preserves monotonicity and bounds of `ys`.
pub fn interp_flat(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let (i, w) = locate(xs, x);
    if w == 0.0 {
        ys[i]
    } else {
        ys[i] * (1.0 - w) + ys[i + 1] * w
    }
}

/// Returns `(i, w)` such that the interpolant at `x` is
/// `ys[i] * (1 - w) + ys[i + 1] * w`. Outside the table `w = 0` and `i` is the
/// nearest end.
pub fn locate(xs: &[f64], x: f64) -> (usize, f64) {
    let n = xs.len();
    debug_assert!(n > 0);
    if n == 1 || x <= xs[0] {
        return (0, 0.0);
    }
    if x >= xs[n - 1] {
        return (n - 1, 0.0);
    }
    let i = xs.partition_point(|&v| v <= x) - 1;
    let w = (x - xs[i]) / (xs[i + 1] - xs[i]);
    (i, w)
}

/// Same as [`locate`] for a uniform grid `x_i = first + i * step`.
#[inline]
pub fn locate_uniform(first: f64, step: f64, n: usize, x: f64) -> (usize, f64) {
    if n == 1 || x <= first {
        return (0, 0.0);
    }
    let pos = (x - first) / step;
    if pos >= (n - 1) as f64 {
        return (n - 1, 0.0);
    }
    let i = pos.floor() as usize;
    (i, pos - i as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_is_exact_for_cubics() {
        let v = simpson(|x| x * x * x - 2.0 * x + 1.0, 0.0, 2.0, 2);
        assert!((v - (4.0 - 4.0 + 2.0)).abs() < 1e-14);
    }

    #[test]
    fn odd_interval_count_is_rounded_up() {
        assert_eq!(simpson_rule(0.0, 1.0, 3).len(), 5);
    }

    #[test]
    fn graded_rule_handles_root_singularity() {
        let v = graded_simpson(|x| x.sqrt(), 0.0, 1.0, 256);
        assert!((v - 2.0 / 3.0).abs() < 1e-10, "{v}");
    }

    #[test]
    fn interpolation_extends_flat() {
        let xs = [0.0, 1.0, 2.0];
        let ys = [3.0, 2.0, 0.0];
        assert_eq!(interp_flat(&xs, &ys, -1.0), 3.0);
        assert_eq!(interp_flat(&xs, &ys, 5.0), 0.0);
        assert!((interp_flat(&xs, &ys, 1.5) - 1.0).abs() < 1e-15);
        let (i, w) = locate_uniform(0.0, 1.0, 3, 1.5);
        assert_eq!(i, 1);
        assert!((w - 0.5).abs() < 1e-15);
    }
}
