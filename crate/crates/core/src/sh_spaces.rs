//! Singular Hölder norms on graded time grids.
//!
//! The function classes used throughout the solver are discrete surrogates of
//! three families on `(0, T]`:
//!
//! * the bounded, singularly Hölder functions with norm
//!   `sup_t |u| + [t -> t^gamma u]_beta` (lower index `gamma >= 0`),
//! * their negatively indexed variants where the sup is also weighted,
//! * the regular Hölder functions vanishing at the origin.
//!
//! Seminorms are evaluated by a full pair scan over the time levels, so a
//! grid value is always a lower bound of the continuum seminorm and grows
//! monotonically under refinement. The product-map checks draw random
//! functions with the right singular envelopes and measure the ratio of the
//! product norm to the product of factor norms.

use crate::fit;
use crate::float::Real;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Values that carry a sup norm and allow scaled differences without
/// allocation; implemented for scalars and the array shapes used by fields.
pub trait SupNormed<T: Real> {
    fn sup_norm(&self) -> T;
    /// `sup |a * self - b * other|`
    fn scaled_diff_sup(&self, a: T, other: &Self, b: T) -> T;
}

impl<T: Real> SupNormed<T> for T {
    fn sup_norm(&self) -> T {
        self.abs()
    }
    fn scaled_diff_sup(&self, a: T, other: &Self, b: T) -> T {
        (a * *self - b * *other).abs()
    }
}

impl<T: Real> SupNormed<T> for Vec<T> {
    fn sup_norm(&self) -> T {
        self.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }
    fn scaled_diff_sup(&self, a: T, other: &Self, b: T) -> T {
        self.iter()
            .zip(other)
            .fold(T::zero(), |m, (u, v)| m.max((a * *u - b * *v).abs()))
    }
}

impl<T: Real> SupNormed<T> for Array1<T> {
    fn sup_norm(&self) -> T {
        self.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }
    fn scaled_diff_sup(&self, a: T, other: &Self, b: T) -> T {
        self.iter()
            .zip(other.iter())
            .fold(T::zero(), |m, (u, v)| m.max((a * *u - b * *v).abs()))
    }
}

impl<T: Real> SupNormed<T> for Array2<T> {
    fn sup_norm(&self) -> T {
        self.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }
    fn scaled_diff_sup(&self, a: T, other: &Self, b: T) -> T {
        self.iter()
            .zip(other.iter())
            .fold(T::zero(), |m, (u, v)| m.max((a * *u - b * *v).abs()))
    }
}

/// Plain Hölder seminorm `max_{i<j} |u_j - u_i| / (t_j - t_i)^beta` over all
/// grid pairs.
pub fn holder_seminorm<T: Real, V: SupNormed<T>>(beta: T, ts: &[T], vals: &[V]) -> T {
    assert_eq!(ts.len(), vals.len());
    let one = T::one();
    let mut semi = T::zero();
    for j in 1..ts.len() {
        for i in 0..j {
            let dt = ts[j] - ts[i];
            debug_assert!(dt > T::zero(), "time levels must increase strictly");
            let d = vals[j].scaled_diff_sup(one, &vals[i], one);
            semi = semi.max(d / dt.powf(beta));
        }
    }
    semi
}

/// Components of a weighted Hölder norm on a graded grid.
#[derive(Clone, Copy, Debug)]
pub struct HolderNormReport<T> {
    /// `sup |u|` for `gamma >= 0`, `sup |t^gamma u|` otherwise.
    pub sup: T,
    /// `[t -> t^gamma u]_beta` over all grid pairs.
    pub seminorm: T,
    /// `sup + seminorm`.
    pub total: T,
    /// Fitted log-log slope of `|u(t)|` on the earliest levels.
    pub early_slope: T,
    /// Whether the early slope indicates an unbounded sup as `t -> 0`.
    pub unbounded_sup: bool,
}

/// Weighted Hölder norm `sup + [t^gamma u]_beta` with a blow-up diagnostic.
pub fn singular_holder_norm<T: Real, V: SupNormed<T>>(
    beta: T,
    gamma: T,
    ts: &[T],
    vals: &[V],
) -> HolderNormReport<T> {
    assert_eq!(ts.len(), vals.len());
    assert!(!ts.is_empty());
    let weights: Vec<T> = ts.iter().map(|&t| t.powf(gamma)).collect();
    let mut sup = T::zero();
    for (i, v) in vals.iter().enumerate() {
        let w = if gamma >= T::zero() { T::one() } else { weights[i] };
        sup = sup.max(w * v.sup_norm());
    }
    let mut semi = T::zero();
    for j in 1..ts.len() {
        for i in 0..j {
            let d = vals[j].scaled_diff_sup(weights[j], &vals[i], weights[i]);
            semi = semi.max(d / (ts[j] - ts[i]).powf(beta));
        }
    }
    let (early_slope, unbounded_sup) = early_growth(ts, vals);
    HolderNormReport {
        sup,
        seminorm: semi,
        total: sup + semi,
        early_slope,
        unbounded_sup,
    }
}

/// Log-log slope of `|u(t)|` over the earliest levels; a clearly negative
/// slope flags a sup norm blowing up toward the origin.
fn early_growth<T: Real, V: SupNormed<T>>(ts: &[T], vals: &[V]) -> (T, bool) {
    let take = (ts.len() / 6).max(4).min(ts.len());
    let mut xs = Vec::with_capacity(take);
    let mut ys = Vec::with_capacity(take);
    for i in 0..take {
        let n = vals[i].sup_norm();
        if n <= T::zero() {
            return (T::zero(), false);
        }
        xs.push(ts[i]);
        ys.push(n);
    }
    if xs.len() < 2 {
        return (T::zero(), false);
    }
    let slope = fit::loglog_slope(&xs, &ys);
    (slope, slope <= T::of(-0.1))
}

/// Hölder norm of a function vanishing at the origin: the pair scan includes
/// the sample `(0, 0)`.
pub fn holder_norm_vanishing<T: Real>(beta: T, ts: &[T], vals: &[T]) -> T {
    let mut sup = T::zero();
    let mut semi = T::zero();
    for j in 0..ts.len() {
        sup = sup.max(vals[j].abs());
        // pair with the origin sample
        semi = semi.max(vals[j].abs() / ts[j].powf(beta));
        for i in 0..j {
            semi = semi.max((vals[j] - vals[i]).abs() / (ts[j] - ts[i]).powf(beta));
        }
    }
    sup + semi
}

/// Whether the earliest sample is negligible against the whole history —
/// the discrete stand-in for membership in the vanishing-at-origin class.
pub fn vanishes_at_initial<T: Real, V: SupNormed<T>>(vals: &[V], tol: T) -> bool {
    let first = vals[0].sup_norm();
    let scale = vals.iter().fold(T::zero(), |m, v| m.max(v.sup_norm()));
    first <= tol * scale.max(T::of(1e-300))
}

/// The four multiplication maps between the singular and vanishing classes
/// (`alpha >= beta` throughout): which factor classes are multiplied and
/// where the product lands.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProductMap {
    /// bounded-singular (alpha) x bounded-singular (beta) -> bounded-singular (beta)
    SingTimesSing,
    /// bounded-singular (alpha) x vanishing (beta) -> vanishing (beta)
    SingTimesVanishing,
    /// vanishing (alpha) x vanishing (beta) -> weight `-alpha`
    VanishingTimesVanishing,
    /// vanishing (alpha) x bounded-singular (beta) -> weight `beta - alpha`
    VanishingTimesSing,
}

/// Result of a randomized product-inequality measurement.
#[derive(Clone, Copy, Debug)]
pub struct ProductCheck<T> {
    pub map: ProductMap,
    pub max_ratio: T,
    pub mean_ratio: T,
    pub trials: usize,
}

fn rand_in<T: Real>(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> T {
    T::of(rng.gen_range(lo..hi))
}

/// Random bounded function with `t^gamma`-weighted Hölder regularity:
/// a constant, a bounded log-phase oscillation (which is what the dilated
/// symbol families produce near the origin), and a smooth part.
fn rand_singular<T: Real>(rng: &mut ChaCha8Rng, ts: &[T]) -> Vec<T> {
    let c0: T = rand_in(rng, -1.0, 1.0);
    let c1: T = rand_in(rng, -1.0, 1.0);
    let omega: T = rand_in(rng, 0.3, 3.0);
    let phase: T = rand_in(rng, 0.0, 6.28);
    let c2: T = rand_in(rng, -1.0, 1.0);
    let nu: T = rand_in(rng, 0.3, 4.0);
    ts.iter()
        .map(|&t| c0 + c1 * (omega * t.ln() + phase).sin() + c2 * (nu * t).cos())
        .collect()
}

/// Random Hölder function vanishing at the origin with exponent `mu`:
/// `t^mu` times a bounded slowly varying factor.
fn rand_vanishing<T: Real>(rng: &mut ChaCha8Rng, mu: T, ts: &[T]) -> Vec<T> {
    let c0: T = rand_in(rng, 0.2, 1.0);
    let c1: T = rand_in(rng, -0.5, 0.5);
    let nu: T = rand_in(rng, 0.3, 4.0);
    let phase: T = rand_in(rng, 0.0, 6.28);
    ts.iter()
        .map(|&t| t.powf(mu) * (c0 + c1 * (nu * t + phase).sin()))
        .collect()
}

/// Measure `|fg| / (|f| |g|)` in the norms prescribed by `map` over random
/// draws; the inequality asserts this ratio is bounded by a constant
/// independent of the draw and of the grid.
pub fn product_inequality_check<T: Real>(
    map: ProductMap,
    alpha: T,
    beta: T,
    ts: &[T],
    trials: usize,
    seed: u64,
) -> ProductCheck<T> {
    assert!(beta <= alpha, "the product maps require beta <= alpha");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_ratio = T::zero();
    let mut sum = T::zero();
    for _ in 0..trials {
        let (f, g, lhs, rhs): (Vec<T>, Vec<T>, T, T) = match map {
            ProductMap::SingTimesSing => {
                let f = rand_singular(&mut rng, ts);
                let g = rand_singular(&mut rng, ts);
                let fg = mul(&f, &g);
                (
                    f.clone(),
                    g.clone(),
                    singular_holder_norm(beta, beta, ts, &fg).total,
                    singular_holder_norm(alpha, alpha, ts, &f).total
                        * singular_holder_norm(beta, beta, ts, &g).total,
                )
            }
            ProductMap::SingTimesVanishing => {
                let f = rand_singular(&mut rng, ts);
                let g = rand_vanishing(&mut rng, beta, ts);
                let fg = mul(&f, &g);
                (
                    f.clone(),
                    g.clone(),
                    holder_norm_vanishing(beta, ts, &fg),
                    singular_holder_norm(alpha, alpha, ts, &f).total
                        * holder_norm_vanishing(beta, ts, &g),
                )
            }
            ProductMap::VanishingTimesVanishing => {
                let f = rand_vanishing(&mut rng, alpha, ts);
                let g = rand_vanishing(&mut rng, beta, ts);
                let fg = mul(&f, &g);
                (
                    f.clone(),
                    g.clone(),
                    singular_holder_norm(beta, -alpha, ts, &fg).total,
                    holder_norm_vanishing(alpha, ts, &f) * holder_norm_vanishing(beta, ts, &g),
                )
            }
            ProductMap::VanishingTimesSing => {
                let f = rand_vanishing(&mut rng, alpha, ts);
                let g = rand_singular(&mut rng, ts);
                let fg = mul(&f, &g);
                (
                    f.clone(),
                    g.clone(),
                    singular_holder_norm(beta, beta - alpha, ts, &fg).total,
                    holder_norm_vanishing(alpha, ts, &f)
                        * singular_holder_norm(beta, beta, ts, &g).total,
                )
            }
        };
        let _ = (f, g);
        let ratio = lhs / rhs.max(T::of(1e-300));
        max_ratio = max_ratio.max(ratio);
        sum += ratio;
    }
    ProductCheck {
        map,
        max_ratio,
        mean_ratio: sum / T::of_usize(trials.max(1)),
        trials,
    }
}

fn mul<T: Real>(f: &[T], g: &[T]) -> Vec<T> {
    f.iter().zip(g).map(|(&a, &b)| a * b).collect()
}
