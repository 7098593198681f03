//! One-dimensional maximization and bracketed root finding shared by the
//! game solvers.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Result of a bounded 1-D maximization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub x: f64,
    pub value: f64,
}

/// Golden-section search for the maximum of `f` on `[lo, hi]`.
pub fn golden_section_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, max_iter: usize) -> Maximum {
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..max_iter {
        if hi - lo <= 1e-13 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        Maximum { x: x1, value: f1 }
    } else {
        Maximum { x: x2, value: f2 }
    }
}

/// Dense grid scan over `[lo, hi]` followed by golden-section refinement of
/// the best grid bracket. Robust to kinks; the returned point is never
/// worse than the best grid point. Ties on the grid keep the smallest `x`.
pub fn grid_golden_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize) -> Maximum {
    assert!(lo <= hi, "empty interval [{lo}, {hi}]");
    if hi - lo <= f64::EPSILON * (1.0 + lo.abs()) {
        return Maximum { x: lo, value: f(lo) };
    }
    let n = points.max(3);
    let step = (hi - lo) / (n - 1) as f64;
    let mut best = Maximum { x: lo, value: f(lo) };
    let mut best_i = 0;
    for i in 1..n {
        let x = if i == n - 1 { hi } else { lo + step * i as f64 };
        let v = f(x);
        if v > best.value {
            best = Maximum { x, value: v };
            best_i = i;
        }
    }
    let a = if best_i == 0 { lo } else { lo + step * (best_i - 1) as f64 };
    let b = if best_i + 1 >= n { hi } else { lo + step * (best_i + 1) as f64 };
    let refined = golden_section_max(&f, a, b, 200);
    if refined.value > best.value {
        refined
    } else {
        best
    }
}

/// Outcome of [`safeguarded_newton`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Newton-Raphson on a sign-changing bracket `[lo, hi]`, falling back to
/// bisection whenever a step leaves the bracket or the derivative is tiny.
///
/// `f` and `df` must be evaluated on `[lo, hi]` only; `f(lo)` and `f(hi)`
/// must differ in sign (zero at either end is accepted as a root).
/// Stops when `|f| <= tol` or the bracket shrinks to a few ulps.
pub fn safeguarded_newton(
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    x0: f64,
    tol: f64,
    max_iter: usize,
) -> Root {
    let f_lo = f(lo);
    if f_lo == 0.0 {
        return Root { x: lo, residual: 0.0, iterations: 0, converged: true };
    }
    let f_hi = f(hi);
    if f_hi == 0.0 {
        return Root { x: hi, residual: 0.0, iterations: 0, converged: true };
    }
    debug_assert!(f_lo.signum() != f_hi.signum(), "bracket does not change sign");
    let lo_positive = f_lo > 0.0;

    let mut x = x0.clamp(lo, hi);
    let mut fx = f(x);
    for it in 1..=max_iter {
        if fx.abs() <= tol {
            return Root { x, residual: fx, iterations: it - 1, converged: true };
        }
        if (fx > 0.0) == lo_positive {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= 4.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) {
            return Root { x, residual: fx, iterations: it, converged: true };
        }
        let d = df(x);
        let newton = if d.abs() > 1e-12 { x - fx / d } else { f64::NAN };
        x = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        fx = f(x);
    }
    Root {
        x,
        residual: fx,
        iterations: max_iter,
        converged: fx.abs() <= tol,
    }
}
