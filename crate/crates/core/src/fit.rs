//! Least-squares line fits used by the decay/slope checks.

use crate::float::Real;

/// Least-squares line `y ~ slope * x + intercept`. Requires at least two
/// distinct abscissae.
pub fn linear_fit<T: Real>(xs: &[T], ys: &[T]) -> (T, T) {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2, "need at least two samples for a line fit");
    let n = T::of_usize(xs.len());
    let mean_x = xs.iter().copied().sum::<T>() / n;
    let mean_y = ys.iter().copied().sum::<T>() / n;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    let slope = sxy / sxx;
    (slope, mean_y - slope * mean_x)
}

/// Slope of `ln y` against `ln x`; all samples must be strictly positive.
pub fn loglog_slope<T: Real>(xs: &[T], ys: &[T]) -> T {
    let lx: Vec<T> = xs.iter().map(|&x| x.ln()).collect();
    let ly: Vec<T> = ys.iter().map(|&y| y.ln()).collect();
    linear_fit(&lx, &ly).0
}
