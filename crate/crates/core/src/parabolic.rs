//! Time stepping of the singular evolution problem on the strip.
//!
//! The marched equation is `u_t + L(t)u = f` with the value/flux boundary
//! rows of the elliptic triple, where every coefficient of `L(t)` carries
//! inverse powers of `t`. Two things make this workable:
//!
//! * a step controller keeping each implicit substep below `0.1 t`, so the
//!   `1/t` and `1/t^2` coefficients are resolved on the way down to the
//!   onset time;
//! * the inhomogeneous-boundary reduction: `u = v + R(t)(g, h)` with the
//!   boundary lift solved per substep and its time derivative produced by a
//!   closed formula ([`lift_and_rate`]) rather than by differencing the lift
//!   in `t`, which would lose accuracy exactly where the problem is singular.
//!
//! [`verify_maxreg_hypotheses`] measures the operator facts the stepping
//! relies on (inverse-norm decay `~ t^2`, the relative Lipschitz bound in
//! `(t-s)/t`, spectral positivity) on dense reduced matrices.

use crate::config::{Stepper, MAX_SUBSTEPS_PER_LEVEL};
use crate::elliptic::{
    apply_operator, solve_constant, solve_variable, EllipticProblem, Family, OperatorAction,
    PartitionOfUnity,
};
use crate::error::{Error, Result};
use crate::fft::XTransform;
use crate::fit;
use crate::float::Real;
use crate::grids::{StripField, XGrid, YGrid};
use crate::verify::{assemble_elliptic_dense, DenseLu, ORACLE_CAP};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// The discretized generator family `t -> L(t)` with its solve routing: the
/// mode-decoupled direct path when no partition is supplied (space-constant
/// coefficient), the localized path otherwise.
pub struct Generator<'a, T: Real> {
    pub xgrid: &'a XGrid<T>,
    pub ygrid: &'a YGrid<T>,
    pub xtf: &'a XTransform<T>,
    pub family: Family,
    pub c: &'a Array1<T>,
    pub pou: Option<&'a PartitionOfUnity<T>>,
    /// Residual tolerance of the localized path (relative to the data scale).
    pub tol: T,
    pub max_sweeps: usize,
}

impl<T: Real> Generator<'_, T> {
    /// Solve `(sigma + L(t)) u = f` with boundary rows `u = g`, `(1/t)d_y u = h`.
    pub fn solve(
        &self,
        sigma: T,
        t: T,
        f: &Array2<T>,
        g: &Array1<T>,
        h: &Array1<T>,
    ) -> Result<Array2<T>> {
        match self.pou {
            None => Ok(solve_constant(
                self.xgrid,
                self.ygrid,
                self.xtf,
                self.family,
                sigma,
                t,
                self.c[0],
                f,
                g,
                h,
            )),
            Some(pou) => {
                let prob = EllipticProblem {
                    family: self.family,
                    sigma,
                    t,
                    c: self.c,
                    f,
                    g,
                    h,
                };
                solve_variable(
                    self.xgrid,
                    self.ygrid,
                    self.xtf,
                    pou,
                    &prob,
                    self.tol,
                    self.max_sweeps,
                )
                .map(|(u, _)| u)
            }
        }
    }

    /// Apply the operator triple without solving.
    pub fn apply(&self, sigma: T, t: T, u: &Array2<T>) -> OperatorAction<T> {
        apply_operator(self.xgrid, self.ygrid, self.family, sigma, t, self.c, u)
    }

    fn shape(&self) -> (usize, usize) {
        (self.xgrid.x_len(), self.ygrid.ny())
    }
}

/// Number of uniform implicit substeps needed to cross `[t_a, t_b]` while
/// keeping every substep below `0.1 t_a`; errors out when the interval starts
/// too close to the singular origin for the cap.
pub fn plan_substeps<T: Real>(t_a: T, t_b: T) -> Result<usize> {
    let gap = t_b - t_a;
    assert!(t_a > T::zero() && gap > T::zero());
    let need = ((gap / (T::of(0.1) * t_a)).ceil().as_f64() as usize).max(1);
    if need > MAX_SUBSTEPS_PER_LEVEL {
        return Err(Error::StepRatio {
            dt: gap.as_f64(),
            t: t_a.as_f64(),
            substeps: need,
            cap: MAX_SUBSTEPS_PER_LEVEL,
        });
    }
    Ok(need)
}

/// March `u_t + L(t)u = f` with homogeneous boundary rows from `t_from` to
/// `t_to`, substepping per the ratio rule.
pub fn step_homogeneous<T: Real>(
    gen: &Generator<T>,
    scheme: Stepper,
    u_from: &Array2<T>,
    t_from: T,
    t_to: T,
    f: &dyn Fn(T) -> Array2<T>,
) -> Result<Array2<T>> {
    let (x_len, ny) = gen.shape();
    let zero_b = Array1::zeros(x_len);
    let nsub = plan_substeps(t_from, t_to)?;
    let dt = (t_to - t_from) / T::of_usize(nsub);
    let mut u = u_from.clone();
    let mut t_prev = t_from;
    let mut f_prev = f(t_from);
    for q in 0..nsub {
        let t_next = if q + 1 == nsub {
            t_to
        } else {
            t_from + dt * T::of_usize(q + 1)
        };
        match scheme {
            Stepper::BackwardEuler => {
                let inv_dt = T::one() / dt;
                let f_next = f(t_next);
                let mut rhs = Array2::zeros((x_len, ny));
                for j in 1..ny - 1 {
                    for i in 0..x_len {
                        rhs[(i, j)] = f_next[(i, j)] + u[(i, j)] * inv_dt;
                    }
                }
                u = gen.solve(inv_dt, t_next, &rhs, &zero_b, &zero_b)?;
                f_prev = f_next;
            }
            Stepper::Trapezoid => {
                let two_inv_dt = T::of(2.0) / dt;
                let act = gen.apply(T::zero(), t_prev, &u);
                let f_next = f(t_next);
                let mut rhs = Array2::zeros((x_len, ny));
                for j in 1..ny - 1 {
                    for i in 0..x_len {
                        rhs[(i, j)] = u[(i, j)] * two_inv_dt - act.interior[(i, j)]
                            + f_prev[(i, j)]
                            + f_next[(i, j)];
                    }
                }
                u = gen.solve(two_inv_dt, t_next, &rhs, &zero_b, &zero_b)?;
                f_prev = f_next;
            }
        }
        t_prev = t_next;
    }
    Ok(u)
}

/// Boundary data and their time derivatives as samplers.
pub struct BoundaryData<'a, T: Real> {
    pub g: &'a dyn Fn(T) -> Array1<T>,
    pub gdot: &'a dyn Fn(T) -> Array1<T>,
    pub h: &'a dyn Fn(T) -> Array1<T>,
    pub hdot: &'a dyn Fn(T) -> Array1<T>,
}

/// Solve for the boundary lift `w = R(t)(g, h)` and its time derivative.
///
/// Differentiating the discrete relations `L(t)w = 0`, `w = g` (bottom),
/// `(1/t) d_y w = h` (top) in `t` yields a problem of the same form for
/// `w_t`:
///
/// ```text
/// L(t) w_t = (2/t) lap_x w            (+ (1/t^2) y d_y w, drift family)
/// w_t = g'                            bottom
/// (1/t) d_y w_t = h' + (1/t) h        top
/// ```
///
/// The identity is exact for the discrete operator: the same stencils appear
/// on both sides, so no time differencing enters. Tests pin it against
/// centered differences of `t -> R(t)(g, h)`.
pub fn lift_and_rate<T: Real>(
    gen: &Generator<T>,
    t: T,
    g: &Array1<T>,
    gdot: &Array1<T>,
    h: &Array1<T>,
    hdot: &Array1<T>,
) -> Result<(Array2<T>, Array2<T>)> {
    let (x_len, ny) = gen.shape();
    let zero_f = Array2::zeros((x_len, ny));
    let w = gen.solve(T::zero(), t, &zero_f, g, h)?;
    let two_over_t = T::of(2.0) / t;
    let inv_t2 = T::one() / (t * t);
    let inv_2h = T::one() / (T::of(2.0) * gen.ygrid.h);
    let mut load = Array2::zeros((x_len, ny));
    for j in 1..ny - 1 {
        let col = w.column(j).to_owned();
        let lap = gen.xgrid.lap_h(&col);
        for i in 0..x_len {
            load[(i, j)] = two_over_t * lap[i];
            if gen.family == Family::Modified {
                let dy = (w[(i, j + 1)] - w[(i, j - 1)]) * inv_2h;
                load[(i, j)] += inv_t2 * gen.ygrid.nodes[j] * dy;
            }
        }
    }
    let mut h_row = hdot.clone();
    for (r, &hv) in h_row.iter_mut().zip(h.iter()) {
        *r += hv / t;
    }
    let wdot = gen.solve(T::zero(), t, &load, gdot, &h_row)?;
    Ok((w, wdot))
}

/// Solve the inhomogeneous-boundary evolution problem over the given levels
/// via the lift reduction: `u = v + R(t)(g, h)` where `v` has homogeneous
/// boundary rows and forcing `f - d/dt R(t)(g, h)` built from the
/// [`lift_and_rate`] formula. `u0` defaults to the lift at the first level
/// (quasi-steady onset, `v(t0) = 0`).
pub fn solve_inhomogeneous<T: Real>(
    gen: &Generator<T>,
    scheme: Stepper,
    levels: &[T],
    f: &dyn Fn(T) -> Array2<T>,
    bd: &BoundaryData<T>,
    u0: Option<&Array2<T>>,
) -> Result<StripField<T>> {
    assert!(levels.len() >= 2);
    let (x_len, ny) = gen.shape();
    let zero_b = Array1::zeros(x_len);
    let sample = |t: T| -> Result<(Array2<T>, Array2<T>, Array2<T>)> {
        let (lift, rate) = lift_and_rate(gen, t, &(bd.g)(t), &(bd.gdot)(t), &(bd.h)(t), &(bd.hdot)(t))?;
        Ok((lift, rate, f(t)))
    };
    let t0 = levels[0];
    let (lift0, rate0, f0) = sample(t0)?;
    let mut v = match u0 {
        Some(u) => u - &lift0,
        None => Array2::zeros((x_len, ny)),
    };
    let mut field = StripField::zeros(levels, x_len, ny);
    field.slices[0] = &v + &lift0;
    let mut t_prev = t0;
    let mut lift_prev = lift0;
    let mut rate_prev = rate0;
    let mut f_slice_prev = f0;
    // The quasi-steady start `v(t0) = 0` is incompatible with the forcing in
    // the stiff transverse modes; the trapezoid rule barely damps those
    // (|R(z)| -> 1 as z -> -inf), so the transient would ring through the
    // whole march. A couple of implicit-Euler startup substeps kill it
    // without affecting the global second order (Rannacher smoothing).
    let startup = 2usize;
    let mut steps = 0usize;
    for k in 1..levels.len() {
        let (t_a, t_b) = (levels[k - 1], levels[k]);
        let nsub = plan_substeps(t_a, t_b)?;
        let dt = (t_b - t_a) / T::of_usize(nsub);
        for q in 0..nsub {
            let t_next = if q + 1 == nsub {
                t_b
            } else {
                t_a + dt * T::of_usize(q + 1)
            };
            let (lift_n, rate_n, f_n) = sample(t_next)?;
            let damp_start = scheme == Stepper::Trapezoid && steps < startup;
            match scheme {
                _ if damp_start => {
                    let inv_dt = T::one() / dt;
                    let mut rhs = Array2::zeros((x_len, ny));
                    for j in 1..ny - 1 {
                        for i in 0..x_len {
                            rhs[(i, j)] =
                                v[(i, j)] * inv_dt + f_n[(i, j)] - rate_n[(i, j)];
                        }
                    }
                    v = gen.solve(inv_dt, t_next, &rhs, &zero_b, &zero_b)?;
                }
                Stepper::BackwardEuler => {
                    let inv_dt = T::one() / dt;
                    let mut rhs = Array2::zeros((x_len, ny));
                    for j in 1..ny - 1 {
                        for i in 0..x_len {
                            rhs[(i, j)] =
                                v[(i, j)] * inv_dt + f_n[(i, j)] - rate_n[(i, j)];
                        }
                    }
                    v = gen.solve(inv_dt, t_next, &rhs, &zero_b, &zero_b)?;
                }
                Stepper::Trapezoid => {
                    let two_inv_dt = T::of(2.0) / dt;
                    let act = gen.apply(T::zero(), t_prev, &v);
                    let mut rhs = Array2::zeros((x_len, ny));
                    for j in 1..ny - 1 {
                        for i in 0..x_len {
                            rhs[(i, j)] = v[(i, j)] * two_inv_dt - act.interior[(i, j)]
                                + (f_slice_prev[(i, j)] - rate_prev[(i, j)])
                                + (f_n[(i, j)] - rate_n[(i, j)]);
                        }
                    }
                    v = gen.solve(two_inv_dt, t_next, &rhs, &zero_b, &zero_b)?;
                }
            }
            steps += 1;
            t_prev = t_next;
            lift_prev = lift_n;
            rate_prev = rate_n;
            f_slice_prev = f_n;
        }
        field.slices[k] = &v + &lift_prev;
    }
    Ok(field)
}

/// Measured surrogates for the generator hypotheses the stepping theory
/// needs. Norms are sup-induced matrix norms (max absolute row sum) of dense
/// reduced matrices with both boundary nodes eliminated.
#[derive(Clone, Debug, Serialize)]
#[serde(bound = "T: Serialize")]
pub struct MaxRegReport<T> {
    /// Sample times of the inverse-norm fit.
    pub times: Vec<T>,
    /// `|| L(t)^-1 ||` per sample time.
    pub inv_norms: Vec<T>,
    /// Log-log slope of the inverse norms (the degeneracy rate; ~2).
    pub inv_norm_slope: T,
    /// Smallest-eigenvalue estimate of `L` at the earliest (most singular)
    /// sample time; positivity puts the spectrum of the generator `-L` in
    /// the open left half-plane.
    pub spectral_floor: T,
    /// Worst `||[L(t) - L(s)] L(tau)^-1|| * t / (t - s)` over random triples
    /// `tau <= s < t`.
    pub lipschitz_worst: T,
    pub lipschitz_mean: T,
    pub triples: usize,
}

/// Dense reduced matrix of `L(t)` on the interior unknowns: the bottom value
/// row pins `u = 0` and is dropped; the top flux row `u_top = (4u_{m} -
/// u_{m-1})/3` (homogeneous one-sided flux) is substituted into the rows
/// referencing the top node.
fn reduced_dense<T: Real>(
    xgrid: &XGrid<T>,
    ygrid: &YGrid<T>,
    family: Family,
    t: T,
    c: &Array1<T>,
) -> (usize, Vec<T>) {
    let x_len = xgrid.x_len();
    let ny = ygrid.ny();
    let n = x_len * ny;
    let a = assemble_elliptic_dense(xgrid, ygrid, family, T::zero(), t, c);
    let nred = x_len * (ny - 2);
    let idx = |i: usize, j: usize| i * (ny - 2) + (j - 1);
    let third = T::one() / T::of(3.0);
    let mut b = vec![T::zero(); nred * nred];
    for i in 0..x_len {
        for j in 1..ny - 1 {
            let row = &a[(i * ny + j) * n..(i * ny + j + 1) * n];
            let rr = idx(i, j);
            for ii in 0..x_len {
                for jj in 0..ny {
                    let v = row[ii * ny + jj];
                    if v == T::zero() {
                        continue;
                    }
                    if jj == 0 {
                        // Dirichlet node is zero
                    } else if jj == ny - 1 {
                        b[rr * nred + idx(ii, ny - 2)] += v * T::of(4.0) * third;
                        b[rr * nred + idx(ii, ny - 3)] -= v * third;
                    } else {
                        b[rr * nred + idx(ii, jj)] += v;
                    }
                }
            }
        }
    }
    (nred, b)
}

fn inf_norm<T: Real>(n: usize, a: &[T]) -> T {
    let mut worst = T::zero();
    for r in 0..n {
        let s = a[r * n..(r + 1) * n]
            .iter()
            .fold(T::zero(), |acc, &v| acc + v.abs());
        worst = worst.max(s);
    }
    worst
}

/// Columns of the inverse, via one solve per unit load.
fn dense_inverse<T: Real>(n: usize, a: Vec<T>) -> Result<Vec<T>> {
    let lu = DenseLu::factor(n, a)?;
    let mut inv = vec![T::zero(); n * n];
    let mut col = vec![T::zero(); n];
    for cidx in 0..n {
        col.iter_mut().for_each(|v| *v = T::zero());
        col[cidx] = T::one();
        lu.solve(&mut col);
        for r in 0..n {
            inv[r * n + cidx] = col[r];
        }
    }
    Ok(inv)
}

/// Measure the generator hypotheses on dense reduced matrices: inverse-norm
/// decay over `times`, the relative Lipschitz ratio over `n_triples` random
/// triples inside the time range, and the spectral floor at the earliest
/// time (inverse power iteration).
pub fn verify_maxreg_hypotheses<T: Real>(
    xgrid: &XGrid<T>,
    ygrid: &YGrid<T>,
    family: Family,
    c: &Array1<T>,
    times: &[T],
    n_triples: usize,
    seed: u64,
) -> Result<MaxRegReport<T>> {
    assert!(times.len() >= 2);
    let n_full = xgrid.x_len() * ygrid.ny();
    if n_full > ORACLE_CAP {
        return Err(Error::OracleSize {
            n: n_full,
            cap: ORACLE_CAP,
        });
    }
    let mut ts = times.to_vec();
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut inv_norms = Vec::with_capacity(ts.len());
    let mut nred = 0usize;
    for &t in &ts {
        let (m, a) = reduced_dense(xgrid, ygrid, family, t, c);
        nred = m;
        let inv = dense_inverse(m, a)?;
        inv_norms.push(inf_norm(m, &inv));
    }
    let inv_norm_slope = fit::loglog_slope(&ts, &inv_norms);

    // spectral floor at the most singular sample: power iteration on the
    // inverse converges to 1/lambda_min for these sign-definite matrices
    let (m, a) = reduced_dense(xgrid, ygrid, family, ts[0], c);
    let lu = DenseLu::factor(m, a)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<T> = (0..m).map(|_| T::of(rng.gen_range(-1.0..1.0f64))).collect();
    let mut mu = T::zero();
    for _ in 0..300 {
        let norm = x
            .iter()
            .fold(T::zero(), |acc, &v| acc + v * v)
            .sqrt()
            .max(T::of(1e-300));
        x.iter_mut().for_each(|v| *v /= norm);
        lu.solve(&mut x);
        mu = x.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt();
    }
    let spectral_floor = T::one() / mu.max(T::of(1e-300));

    // relative Lipschitz ratio over random triples tau <= s < t
    let (tmin, tmax) = (ts[0], *ts.last().unwrap());
    let mut worst = T::zero();
    let mut mean = T::zero();
    let mut count = 0usize;
    for _ in 0..n_triples {
        let mut draw: Vec<T> = (0..3)
            .map(|_| tmin + (tmax - tmin) * T::of(rng.gen_range(0.0..1.0f64)))
            .collect();
        draw.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let (tau, s, t) = (draw[0], draw[1], draw[2]);
        if (t - s) < T::of(1e-6) * t {
            continue;
        }
        let (_, at) = reduced_dense(xgrid, ygrid, family, t, c);
        let (_, as_) = reduced_dense(xgrid, ygrid, family, s, c);
        let inv_tau = {
            let (_, a) = reduced_dense(xgrid, ygrid, family, tau, c);
            dense_inverse(nred, a)?
        };
        // P = (A(t) - A(s)) * A(tau)^-1, inf norm row by row
        let mut pnorm = T::zero();
        for r in 0..nred {
            let mut rowsum = T::zero();
            for cidx in 0..nred {
                let mut acc = T::zero();
                for k in 0..nred {
                    let d = at[r * nred + k] - as_[r * nred + k];
                    if d != T::zero() {
                        acc += d * inv_tau[k * nred + cidx];
                    }
                }
                rowsum += acc.abs();
            }
            pnorm = pnorm.max(rowsum);
        }
        let ratio = pnorm * t / (t - s);
        worst = worst.max(ratio);
        mean += ratio;
        count += 1;
    }
    if count > 0 {
        mean /= T::of_usize(count);
    }
    Ok(MaxRegReport {
        times: ts,
        inv_norms,
        inv_norm_slope,
        spectral_floor,
        lipschitz_worst: worst,
        lipschitz_mean: mean,
        triples: count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Stepper;
    use crate::sh_spaces::singular_holder_norm;
    use crate::verify::solve_parabolic_oracle;

    fn setup(nx: usize, m: usize) -> (XGrid<f64>, YGrid<f64>, XTransform<f64>) {
        let xg = XGrid::new(1, nx, std::f64::consts::TAU).unwrap();
        let yg = YGrid::new(m).unwrap();
        let tf = XTransform::new(&xg);
        (xg, yg, tf)
    }

    fn sup2(a: &Array2<f64>) -> f64 {
        a.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    #[test]
    fn zero_data_step_stays_zero() {
        let (xg, yg, tf) = setup(8, 6);
        let c = Array1::from_elem(xg.x_len(), 1.0);
        let gen = Generator {
            xgrid: &xg,
            ygrid: &yg,
            xtf: &tf,
            family: Family::Plain,
            c: &c,
            pou: None,
            tol: 1e-10,
            max_sweeps: 40,
        };
        let u0 = Array2::zeros((xg.x_len(), yg.ny()));
        let f = |_t: f64| Array2::zeros((8, yg.ny()));
        let u = step_homogeneous(&gen, Stepper::BackwardEuler, &u0, 0.2, 0.3, &f).unwrap();
        assert_eq!(sup2(&u), 0.0);
    }

    #[test]
    fn homogeneous_decay_is_monotone_on_random_data() {
        let (xg, yg, tf) = setup(8, 6);
        let c = Array1::from_elem(xg.x_len(), 1.0);
        let gen = Generator {
            xgrid: &xg,
            ygrid: &yg,
            xtf: &tf,
            family: Family::Plain,
            c: &c,
            pou: None,
            tol: 1e-10,
            max_sweeps: 40,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut u = Array2::zeros((xg.x_len(), yg.ny()));
        for j in 1..yg.ny() - 1 {
            for i in 0..xg.x_len() {
                u[(i, j)] = rng.gen_range(-1.0..1.0);
            }
        }
        let f = |_t: f64| Array2::zeros((8, yg.ny()));
        let mut t = 0.2;
        let mut prev = sup2(&u);
        for _ in 0..6 {
            let t_next = t + 0.02;
            u = step_homogeneous(&gen, Stepper::BackwardEuler, &u, t, t_next, &f).unwrap();
            let now = sup2(&u);
            assert!(now <= prev + 1e-14, "sup grew: {prev} -> {now}");
            prev = now;
            t = t_next;
        }
        // and it actually decays, not just stays
        assert!(prev < 0.5);
    }

    #[test]
    fn substep_planner_respects_ratio_and_cap() {
        assert_eq!(plan_substeps(0.2f64, 0.22).unwrap(), 1);
        assert_eq!(plan_substeps(0.2f64, 0.3).unwrap(), 5);
        // starting from t0 = 1e-6 across a gap of 1 needs > 4096 substeps
        let err = plan_substeps(1e-6f64, 1.0).unwrap_err();
        assert!(matches!(err, Error::StepRatio { .. }), "{err}");
    }

    /// The displayed derivative formula for the bottom lift against centered
    /// differences of t -> R(t)g; exact for the discrete operator, so the
    /// only error is the O(delta^2) of the differencing itself.
    #[test]
    fn bottom_lift_rate_matches_centered_difference() {
        let (xg, yg, tf) = setup(32, 10);
        let c = Array1::from_iter(xg.points.iter().map(|p| 1.0 + 0.2 * p[0].sin()));
        let pou = PartitionOfUnity::build(&xg, &c, 0.1).unwrap();
        let gen = Generator {
            xgrid: &xg,
            ygrid: &yg,
            xtf: &tf,
            family: Family::Plain,
            c: &c,
            pou: Some(&pou),
            tol: 1e-10,
            max_sweeps: 80,
        };
        let g = Array1::from_iter(xg.points.iter().map(|p| 1.0 + 0.3 * p[0].cos()));
        let zero = Array1::zeros(xg.x_len());
        let t = 0.2;
        let (_, rate) = lift_and_rate(&gen, t, &g, &zero, &zero, &zero).unwrap();
        let delta = 1e-3;
        let zf = Array2::zeros((xg.x_len(), yg.ny()));
        let wp = gen.solve(0.0, t + delta, &zf, &g, &zero).unwrap();
        let wm = gen.solve(0.0, t - delta, &zf, &g, &zero).unwrap();
        let mut err = 0.0f64;
        let mut scale = 0.0f64;
        for (r, (p, m)) in rate.iter().zip(wp.iter().zip(wm.iter())) {
            let fd = (p - m) / (2.0 * delta);
            err = err.max((r - fd).abs());
            scale = scale.max(fd.abs());
        }
        assert!(err / scale < 1e-3, "rate vs difference quotient: {}", err / scale);
    }

    /// Same check for the flux lift, whose formula carries the extra (1/t)h
    /// term, and for the drift-corrected family, whose interior load carries
    /// the (1/t^2) y d_y correction.
    #[test]
    fn flux_lift_rate_matches_centered_difference_both_families() {
        let (xg, yg, tf) = setup(16, 10);
        let c = Array1::from_elem(xg.x_len(), 1.1);
        let h = Array1::from_iter(xg.points.iter().map(|p| 0.5 + 0.2 * (2.0 * p[0]).sin()));
        let zero = Array1::zeros(xg.x_len());
        let zf = Array2::zeros((xg.x_len(), yg.ny()));
        let t = 0.15;
        let delta = 5e-4;
        for family in [Family::Plain, Family::Modified] {
            let gen = Generator {
                xgrid: &xg,
                ygrid: &yg,
                xtf: &tf,
                family,
                c: &c,
                pou: None,
                tol: 1e-12,
                max_sweeps: 40,
            };
            let (_, rate) = lift_and_rate(&gen, t, &zero, &zero, &h, &zero).unwrap();
            let wp = gen.solve(0.0, t + delta, &zf, &zero, &h).unwrap();
            let wm = gen.solve(0.0, t - delta, &zf, &zero, &h).unwrap();
            let mut err = 0.0f64;
            let mut scale = 0.0f64;
            for (r, (p, m)) in rate.iter().zip(wp.iter().zip(wm.iter())) {
                let fd = (p - m) / (2.0 * delta);
                err = err.max((r - fd).abs());
                scale = scale.max(fd.abs());
            }
            assert!(
                err / scale < 1e-3,
                "{family:?}: rate vs difference quotient {}",
                err / scale
            );
        }
    }

    /// Time-dependent boundary data on a variable coefficient: the lift
    /// reduction against the dense method-of-lines reference.
    #[test]
    fn inhomogeneous_solve_matches_dense_oracle() {
        let (xg, yg, tf) = setup(8, 6);
        let c = Array1::from_iter(xg.points.iter().map(|p| 1.0 + 0.1 * p[0].cos()));
        let pou = PartitionOfUnity::build(&xg, &c, 0.1).unwrap();
        let gen = Generator {
            xgrid: &xg,
            ygrid: &yg,
            xtf: &tf,
            family: Family::Plain,
            c: &c,
            pou: Some(&pou),
            tol: 1e-11,
            max_sweeps: 80,
        };
        let x_len = xg.x_len();
        let points = xg.points.clone();
        let g = move |t: f64| {
            Array1::from_iter(points.iter().map(|p| (1.0 + 0.5 * t) * (1.0 + 0.2 * p[0].sin())))
        };
        let points = xg.points.clone();
        let gdot =
            move |_t: f64| Array1::from_iter(points.iter().map(|p| 0.5 * (1.0 + 0.2 * p[0].sin())));
        let h = move |t: f64| Array1::from_elem(x_len, -0.3 * t);
        let hdot = move |_t: f64| Array1::from_elem(x_len, -0.3);
        let f = |_t: f64| Array2::from_elem((8, yg.ny()), 0.4);
        let bd = BoundaryData {
            g: &g,
            gdot: &gdot,
            h: &h,
            hdot: &hdot,
        };
        let levels: Vec<f64> = (0..=5).map(|k| 0.2 + 0.04 * k as f64).collect();
        let u = solve_inhomogeneous(&gen, Stepper::Trapezoid, &levels, &f, &bd, None).unwrap();
        // reference: same initial state, fine trapezoid substeps, dense solves
        let oracle = solve_parabolic_oracle(
            &xg,
            &yg,
            Family::Plain,
            Stepper::Trapezoid,
            &c,
            &levels,
            40,
            &u.slices[0],
            &f,
            &g,
            &h,
        )
        .unwrap();
        let mut err = 0.0f64;
        let mut scale = 0.0f64;
        for (a, b) in u.slices.iter().zip(oracle.iter()) {
            for (x, y) in a.iter().zip(b.iter()) {
                err = err.max((x - y).abs());
                scale = scale.max(y.abs());
            }
        }
        assert!(err / scale < 1e-3, "lift reduction vs oracle: {}", err / scale);
    }

    /// Measured convergence orders against a fine dense reference: implicit
    /// Euler first order, trapezoid second order.
    #[test]
    fn stepper_orders_against_dense_reference() {
        let (xg, yg, tf) = setup(8, 6);
        let c = Array1::from_elem(xg.x_len(), 1.0);
        let gen = Generator {
            xgrid: &xg,
            ygrid: &yg,
            xtf: &tf,
            family: Family::Plain,
            c: &c,
            pou: None,
            tol: 1e-11,
            max_sweeps: 40,
        };
        let ny = yg.ny();
        // interior-supported forcing varying in t
        let f = move |t: f64| Array2::from_elem((8, ny), 1.0 + (3.0 * t).sin());
        let zero_b = Array1::zeros(xg.x_len());
        // start at the quasi-steady state so the fast 1/t^2 transient does
        // not pollute the asymptotic order measurement
        let u0 = gen.solve(0.0, 0.2, &f(0.2), &zero_b, &zero_b).unwrap();
        let gz = {
            let zb = zero_b.clone();
            move |_t: f64| zb.clone()
        };
        let hz = {
            let zb = zero_b.clone();
            move |_t: f64| zb.clone()
        };
        let reference = solve_parabolic_oracle(
            &xg,
            &yg,
            Family::Plain,
            Stepper::Trapezoid,
            &c,
            &[0.2, 0.4],
            400,
            &u0,
            &f,
            &gz,
            &hz,
        )
        .unwrap()
        .pop()
        .unwrap();
        for (scheme, want_order, tol) in [
            (Stepper::BackwardEuler, 1.0, 0.3),
            (Stepper::Trapezoid, 2.0, 0.4),
        ] {
            let mut dts = Vec::new();
            let mut errs = Vec::new();
            for nlev in [10usize, 20, 40] {
                let levels: Vec<f64> =
                    (0..=nlev).map(|k| 0.2 + 0.2 * k as f64 / nlev as f64).collect();
                let mut u = u0.clone();
                for w in levels.windows(2) {
                    u = step_homogeneous(&gen, scheme, &u, w[0], w[1], &f).unwrap();
                }
                let mut err = 0.0f64;
                for (a, b) in u.iter().zip(reference.iter()) {
                    err = err.max((a - b).abs());
                }
                dts.push(0.2 / nlev as f64);
                errs.push(err);
            }
            let slope = fit::loglog_slope(&dts, &errs);
            assert!(
                (slope - want_order).abs() < tol,
                "{scheme:?}: measured order {slope}"
            );
        }
    }

    /// g = h = 0 reduces the lift to zero, so the inhomogeneous driver and
    /// the bare homogeneous march must agree to round-off.
    #[test]
    fn inhomogeneous_with_zero_data_equals_homogeneous_march() {
        let (xg, yg, tf) = setup(8, 6);
        let c = Array1::from_elem(xg.x_len(), 1.0);
        let gen = Generator {
            xgrid: &xg,
            ygrid: &yg,
            xtf: &tf,
            family: Family::Plain,
            c: &c,
            pou: None,
            tol: 1e-11,
            max_sweeps: 40,
        };
        let ny = yg.ny();
        let f = |t: f64| Array2::from_elem((8, ny), 1.0 + t);
        let zb = Array1::zeros(xg.x_len());
        let gz = {
            let z = zb.clone();
            move |_t: f64| z.clone()
        };
        let bd = BoundaryData {
            g: &gz,
            gdot: &gz,
            h: &gz,
            hdot: &gz,
        };
        let levels = [0.2, 0.25, 0.3];
        let field = solve_inhomogeneous(&gen, Stepper::BackwardEuler, &levels, &f, &bd, None)
            .unwrap();
        let mut u = Array2::zeros((xg.x_len(), ny));
        for (k, w) in levels.windows(2).enumerate() {
            u = step_homogeneous(&gen, Stepper::BackwardEuler, &u, w[0], w[1], &f).unwrap();
            let mut diff = 0.0f64;
            for (a, b) in u.iter().zip(field.slices[k + 1].iter()) {
                diff = diff.max((a - b).abs());
            }
            assert!(diff < 1e-13, "level {}: {diff}", k + 1);
        }
    }

    /// x-independent data with constant coefficient: the strip reduces to a
    /// transverse line problem; a 100x finer march is the reference.
    #[test]
    fn x_independent_data_matches_fine_step_reference() {
        let (xg, yg, tf) = setup(8, 10);
        let c = Array1::from_elem(xg.x_len(), 1.0);
        let gen = Generator {
            xgrid: &xg,
            ygrid: &yg,
            xtf: &tf,
            family: Family::Plain,
            c: &c,
            pou: None,
            tol: 1e-11,
            max_sweeps: 40,
        };
        let ny = yg.ny();
        let f = |_t: f64| Array2::from_elem((8, ny), 1.0);
        let gz = |_t: f64| Array1::zeros(8);
        let hz = |_t: f64| Array1::zeros(8);
        let zero_b = Array1::zeros(xg.x_len());
        // quasi-steady start: the interesting dynamics is the slow drift of
        // the steady state as 1/t^2 relaxes, not a stiff initial transient
        let u0 = gen.solve(0.0, 0.2, &f(0.2), &zero_b, &zero_b).unwrap();
        let mut u = u0.clone();
        for w in [[0.2, 0.25], [0.25, 0.3]] {
            u = step_homogeneous(&gen, Stepper::Trapezoid, &u, w[0], w[1], &f).unwrap();
        }
        let oracle = solve_parabolic_oracle(
            &xg,
            &yg,
            Family::Plain,
            Stepper::Trapezoid,
            &c,
            &[0.2, 0.25, 0.3],
            100,
            &u0,
            &f,
            &gz,
            &hz,
        )
        .unwrap()
        .pop()
        .unwrap();
        let mut err = 0.0f64;
        for (a, b) in u.iter().zip(oracle.iter()) {
            err = err.max((a - b).abs());
        }
        assert!(err < 1e-4, "coarse vs fine-step reference: {err}");
        // and the solution stayed x-independent
        for j in 0..ny {
            for i in 1..xg.x_len() {
                assert!((u[(i, j)] - u[(0, j)]).abs() < 1e-12);
            }
        }
    }

    /// Maximal-regularity surrogate: for bounded singular forcing the graph
    /// norm ||u_t|| + ||L u|| measured in the weighted Hoelder surrogate
    /// stays bounded under time refinement.
    #[test]
    fn graph_norm_stays_bounded_under_refinement() {
        let (xg, yg, tf) = setup(8, 6);
        let c = Array1::from_elem(xg.x_len(), 1.0);
        let gen = Generator {
            xgrid: &xg,
            ygrid: &yg,
            xtf: &tf,
            family: Family::Plain,
            c: &c,
            pou: None,
            tol: 1e-11,
            max_sweeps: 40,
        };
        let ny = yg.ny();
        let points = xg.points.clone();
        let f = move |t: f64| {
            let profile: Vec<f64> = points
                .iter()
                .map(|p| (1.0 + 0.5 * (t.ln()).sin()) * (1.0 + 0.3 * p[0].cos()))
                .collect();
            let mut out = Array2::zeros((8, ny));
            for j in 1..ny - 1 {
                for i in 0..8 {
                    out[(i, j)] = profile[i];
                }
            }
            out
        };
        let beta = 0.5;
        let run = |nlev: usize| -> f64 {
            let levels: Vec<f64> = (0..=nlev)
                .map(|k| 0.02 + (0.3 - 0.02) * k as f64 / nlev as f64)
                .collect();
            let mut u = Array2::zeros((xg.x_len(), ny));
            let mut slices = vec![u.clone()];
            for w in levels.windows(2) {
                u = step_homogeneous(&gen, Stepper::BackwardEuler, &u, w[0], w[1], &f).unwrap();
                slices.push(u.clone());
            }
            // graph norm pieces: Lu per level, u_t by centered differences
            let mut lu = Vec::new();
            for (k, s) in slices.iter().enumerate() {
                let act = gen.apply(0.0, levels[k], s);
                lu.push(act.interior);
            }
            let mut ut = Vec::new();
            let mut ut_ts = Vec::new();
            for k in 1..levels.len() - 1 {
                let dtp = levels[k + 1] - levels[k];
                let dtm = levels[k] - levels[k - 1];
                let mut d = Array2::zeros((xg.x_len(), ny));
                for j in 0..ny {
                    for i in 0..xg.x_len() {
                        // centered difference on a uniform grid
                        d[(i, j)] =
                            (slices[k + 1][(i, j)] - slices[k - 1][(i, j)]) / (dtp + dtm);
                    }
                }
                ut.push(d);
                ut_ts.push(levels[k]);
            }
            let n_lu = singular_holder_norm(beta, beta, &levels, &lu).total;
            let n_ut = singular_holder_norm(beta, beta, &ut_ts, &ut).total;
            n_lu + n_ut
        };
        let coarse = run(40);
        let fine = run(80);
        assert!(coarse.is_finite() && fine.is_finite());
        assert!(
            fine < 1.6 * coarse + 1e-9,
            "graph norm blew up under refinement: {coarse} -> {fine}"
        );
    }

    #[test]
    fn generator_difference_vanishes_at_equal_times() {
        let (xg, yg, _) = setup(8, 6);
        let c = Array1::from_iter(xg.points.iter().map(|p| 1.0 + 0.1 * p[0].sin()));
        let (n, a) = reduced_dense(&xg, &yg, Family::Plain, 0.2, &c);
        let (_, b) = reduced_dense(&xg, &yg, Family::Plain, 0.2, &c);
        let mut diff = vec![0.0f64; n * n];
        for (d, (x, y)) in diff.iter_mut().zip(a.iter().zip(b.iter())) {
            *d = x - y;
        }
        assert_eq!(inf_norm(n, &diff), 0.0);
    }

    #[test]
    fn inverse_norm_decays_quadratically_and_ratios_stay_bounded() {
        let (xg, yg, _) = setup(16, 8);
        let c = Array1::from_iter(xg.points.iter().map(|p| 1.0 + 0.2 * p[0].sin()));
        let times: Vec<f64> = (0..6).map(|k| 0.4 * 0.5f64.powi(k)).rev().collect();
        let report =
            verify_maxreg_hypotheses(&xg, &yg, Family::Plain, &c, &times, 100, 9).unwrap();
        assert!(
            (report.inv_norm_slope - 2.0).abs() < 0.2,
            "inverse norm slope {}",
            report.inv_norm_slope
        );
        assert!(report.spectral_floor > 0.0);
        assert!(report.triples >= 90);
        assert!(
            report.lipschitz_worst.is_finite() && report.lipschitz_worst > 0.0,
            "ratio {}",
            report.lipschitz_worst
        );
        // the measured constant of the (t - s)/t bound; generous cap, the
        // acceptance suite pins the exact value observed
        assert!(report.lipschitz_worst < 100.0, "{}", report.lipschitz_worst);
    }
}
