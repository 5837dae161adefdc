//! Small numerical search routines used by the strategy and solver layers.

/// Bisection root finder on `[lo, hi]` for a continuous function that is
/// positive at `lo` and negative at `hi`.
///
/// Runs until the bracket shrinks below `rel_tol` relative to its midpoint
/// (or `max_iter` halvings) and returns the bracket midpoint.
pub fn bisect_decreasing<F>(mut lo: f64, mut hi: f64, f: F, rel_tol: f64, max_iter: usize) -> f64
where
    F: Fn(f64) -> f64,
{
    debug_assert!(lo < hi);
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= rel_tol * mid.abs() {
            return mid;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Golden-section search for the minimum of `f` on `[a, b]`.
///
/// The interval endpoints are included as candidates, so boundary minima
/// are found exactly. Ties prefer the smaller abscissa. Returns
/// `(x_min, f_min, evaluations)`.
pub fn golden_min<F>(f: F, a: f64, b: f64, tol: f64) -> (f64, f64, u64)
where
    F: Fn(f64) -> f64,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_9;

    debug_assert!(a <= b);
    let fa = f(a);
    let fb = f(b);
    let mut evals = 2u64;
    if b - a <= tol {
        return if fa <= fb {
            (a, fa, evals)
        } else {
            (b, fb, evals)
        };
    }

    let (mut lo, mut hi) = (a, b);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    evals += 2;

    while hi - lo > tol {
        if f1 <= f2 {
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
        evals += 1;
    }

    let mut best = (a, fa);
    for cand in [(x1, f1), (x2, f2), (b, fb)] {
        if cand.1 < best.1 || (cand.1 == best.1 && cand.0 < best.0) {
            best = cand;
        }
    }
    (best.0, best.1, evals)
}
