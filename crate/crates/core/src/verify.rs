//! Dense reference solvers and an independent residual evaluator.
//!
//! Nothing here shares machinery with the production solvers: the reference
//! path assembles full matrices and factors them by pivoted Gaussian
//! elimination instead of lateral transforms and banded line solves, and the
//! residual evaluator re-discretizes the transformed moving-boundary system
//! with its own derivative approximations (spectral lateral derivatives,
//! separate transverse stencils, Lagrange differentiation along the time
//! levels). Agreement between the two paths is therefore a genuine
//! cross-check rather than a tautology.

use crate::config::Stepper;
use crate::elliptic::Family;
use crate::error::{Error, Result};
use crate::fft::{spectral_grad, spectral_lap, XTransform};
use crate::float::Real;
use crate::grids::{StripField, SurfaceField, XGrid, YGrid};
use ndarray::{Array1, Array2};
use rayon::prelude::*;

/// Largest unknown count the dense reference path accepts; beyond this the
/// cubic factorization cost and the quadratic memory stop being "reference"
/// and start being a liability.
pub const ORACLE_CAP: usize = 4096;

/// Dense LU factorization with partial pivoting, row-major storage.
pub struct DenseLu<T> {
    n: usize,
    a: Vec<T>,
    piv: Vec<usize>,
}

impl<T: Real> DenseLu<T> {
    pub fn factor(n: usize, mut a: Vec<T>) -> Result<Self> {
        assert_eq!(a.len(), n * n, "matrix storage must be n*n");
        let mut piv = vec![0usize; n];
        let mut pivot_row: Vec<T> = vec![T::zero(); n];
        for k in 0..n {
            let mut p = k;
            let mut best = a[k * n + k].abs();
            for r in k + 1..n {
                let v = a[r * n + k].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == T::zero() {
                return Err(Error::Invalid(
                    "dense factorization hit a zero pivot".into(),
                ));
            }
            piv[k] = p;
            if p != k {
                for c in 0..n {
                    a.swap(k * n + c, p * n + c);
                }
            }
            let pivval = a[k * n + k];
            let tail = n - k - 1;
            pivot_row[..tail].copy_from_slice(&a[k * n + k + 1..(k + 1) * n]);
            let krow = &pivot_row[..tail];
            let rest = &mut a[(k + 1) * n..];
            let eliminate = |row: &mut [T]| {
                let m = row[k] / pivval;
                row[k] = m;
                if m != T::zero() {
                    for (rv, &kv) in row[k + 1..].iter_mut().zip(krow) {
                        *rv -= m * kv;
                    }
                }
            };
            if n >= 256 {
                rest.par_chunks_mut(n).for_each(eliminate);
            } else {
                rest.chunks_mut(n).for_each(eliminate);
            }
        }
        Ok(DenseLu { n, a, piv })
    }

    /// Solve in place against the factored matrix.
    pub fn solve(&self, b: &mut [T]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        for k in 0..n {
            b.swap(k, self.piv[k]);
        }
        for r in 1..n {
            let mut acc = b[r];
            for (c, &l) in self.a[r * n..r * n + r].iter().enumerate() {
                acc -= l * b[c];
            }
            b[r] = acc;
        }
        for r in (0..n).rev() {
            let mut acc = b[r];
            for (c, &u) in self.a[r * n + r + 1..(r + 1) * n].iter().enumerate() {
                acc -= u * b[r + 1 + c];
            }
            b[r] = acc / self.a[r * n + r];
        }
    }
}

/// Assemble the full matrix of the operator triple
/// `(sigma + L(t), trace at y=0, (1/t) d_y at y=1)` with unknowns in
/// `i * ny + j` order, mirroring the stencils the fast solvers diagonalize.
pub fn assemble_elliptic_dense<T: Real>(
    xgrid: &XGrid<T>,
    ygrid: &YGrid<T>,
    family: Family,
    sigma: T,
    t: T,
    c: &Array1<T>,
) -> Vec<T> {
    let x_len = xgrid.x_len();
    let ny = ygrid.ny();
    let n = x_len * ny;
    let h = ygrid.h;
    let inv_h2 = T::one() / (h * h);
    let inv_2h = T::one() / (T::of(2.0) * h);
    let inv_dx2 = T::one() / (xgrid.dx * xgrid.dx);
    let conv = match family {
        Family::Plain => T::zero(),
        Family::Modified => T::one() / t,
    };
    let mut a = vec![T::zero(); n * n];
    for i in 0..x_len {
        let tau = t * c[i];
        let inv_tau2 = T::one() / (tau * tau);
        for j in 0..ny {
            let r = i * ny + j;
            if j == 0 {
                a[r * n + r] = T::one();
                continue;
            }
            if j == ny - 1 {
                let scale = inv_2h / t;
                a[r * n + (i * ny + j - 2)] += scale;
                a[r * n + (i * ny + j - 1)] -= T::of(4.0) * scale;
                a[r * n + r] += T::of(3.0) * scale;
                continue;
            }
            a[r * n + r] += sigma;
            for axis in 0..xgrid.n_dim {
                let l = xgrid.neighbor(i, axis, -1) * ny + j;
                let rt = xgrid.neighbor(i, axis, 1) * ny + j;
                a[r * n + r] += T::of(2.0) * inv_dx2;
                a[r * n + l] -= inv_dx2;
                a[r * n + rt] -= inv_dx2;
            }
            a[r * n + r] += T::of(2.0) * inv_tau2 * inv_h2;
            a[r * n + (r - 1)] -= inv_tau2 * inv_h2;
            a[r * n + (r + 1)] -= inv_tau2 * inv_h2;
            let w = conv * ygrid.nodes[j] * inv_2h;
            a[r * n + (r + 1)] -= w;
            a[r * n + (r - 1)] += w;
        }
    }
    a
}

fn pack_rhs<T: Real>(
    xgrid: &XGrid<T>,
    ygrid: &YGrid<T>,
    f: &Array2<T>,
    g: &Array1<T>,
    h: &Array1<T>,
) -> Vec<T> {
    let ny = ygrid.ny();
    let mut b = vec![T::zero(); xgrid.x_len() * ny];
    for i in 0..xgrid.x_len() {
        b[i * ny] = g[i];
        b[i * ny + ny - 1] = h[i];
        for j in 1..ny - 1 {
            b[i * ny + j] = f[(i, j)];
        }
    }
    b
}

fn unpack<T: Real>(xgrid: &XGrid<T>, ygrid: &YGrid<T>, b: &[T]) -> Array2<T> {
    let ny = ygrid.ny();
    let mut u = Array2::zeros((xgrid.x_len(), ny));
    for i in 0..xgrid.x_len() {
        for j in 0..ny {
            u[(i, j)] = b[i * ny + j];
        }
    }
    u
}

fn guard_size<T: Real>(xgrid: &XGrid<T>, ygrid: &YGrid<T>) -> Result<usize> {
    let n = xgrid.x_len() * ygrid.ny();
    if n > ORACLE_CAP {
        return Err(Error::OracleSize { n, cap: ORACLE_CAP });
    }
    Ok(n)
}

/// Dense direct solve of one elliptic problem. Reference path only.
#[allow(clippy::too_many_arguments)]
pub fn solve_elliptic_oracle<T: Real>(
    xgrid: &XGrid<T>,
    ygrid: &YGrid<T>,
    family: Family,
    sigma: T,
    t: T,
    c: &Array1<T>,
    f: &Array2<T>,
    g: &Array1<T>,
    h: &Array1<T>,
) -> Result<Array2<T>> {
    let n = guard_size(xgrid, ygrid)?;
    let a = assemble_elliptic_dense(xgrid, ygrid, family, sigma, t, c);
    let lu = DenseLu::factor(n, a)?;
    let mut b = pack_rhs(xgrid, ygrid, f, g, h);
    lu.solve(&mut b);
    Ok(unpack(xgrid, ygrid, &b))
}

/// Interior rows of the dense operator applied to a packed state (boundary
/// rows of the result are zero); used for the explicit half of trapezoid
/// steps so the oracle never leans on the production stencil code.
fn dense_interior_action<T: Real>(n: usize, ny: usize, a: &[T], u: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); n];
    for r in 0..n {
        let j = r % ny;
        if j == 0 || j == ny - 1 {
            continue;
        }
        let mut acc = T::zero();
        for (c, &v) in a[r * n..(r + 1) * n].iter().enumerate() {
            if v != T::zero() {
                acc += v * u[c];
            }
        }
        out[r] = acc;
    }
    out
}

/// Dense method-of-lines reference for the evolution problem
/// `u_t + L(t)u = f`, `u = g` at y=0, `(1/t) d_y u = h` at y=1: march the
/// packed state over `levels` with `substeps` uniform implicit substeps per
/// interval, assembling and factoring the full matrix anew at every substep.
/// Returns one slice per level; the first is `u0`.
#[allow(clippy::too_many_arguments)]
pub fn solve_parabolic_oracle<T: Real>(
    xgrid: &XGrid<T>,
    ygrid: &YGrid<T>,
    family: Family,
    stepper: Stepper,
    c: &Array1<T>,
    levels: &[T],
    substeps: usize,
    u0: &Array2<T>,
    f: &dyn Fn(T) -> Array2<T>,
    g: &dyn Fn(T) -> Array1<T>,
    h: &dyn Fn(T) -> Array1<T>,
) -> Result<Vec<Array2<T>>> {
    let n = guard_size(xgrid, ygrid)?;
    assert!(substeps >= 1 && levels.len() >= 2);
    let ny = ygrid.ny();
    let x_len = xgrid.x_len();
    let mut out = Vec::with_capacity(levels.len());
    out.push(u0.clone());
    let mut state: Vec<T> = {
        let mut b = vec![T::zero(); n];
        for i in 0..x_len {
            for j in 0..ny {
                b[i * ny + j] = u0[(i, j)];
            }
        }
        b
    };
    for w in levels.windows(2) {
        let (t_a, t_b) = (w[0], w[1]);
        let dt = (t_b - t_a) / T::of_usize(substeps);
        for q in 0..substeps {
            let t_prev = t_a + dt * T::of_usize(q);
            let t_next = t_a + dt * T::of_usize(q + 1);
            let f_next = f(t_next);
            let g_next = g(t_next);
            let h_next = h(t_next);
            let mut rhs = pack_rhs(xgrid, ygrid, &f_next, &g_next, &h_next);
            let mat = match stepper {
                Stepper::BackwardEuler => {
                    let inv_dt = T::one() / dt;
                    for i in 0..x_len {
                        for j in 1..ny - 1 {
                            rhs[i * ny + j] += state[i * ny + j] * inv_dt;
                        }
                    }
                    assemble_elliptic_dense(xgrid, ygrid, family, inv_dt, t_next, c)
                }
                Stepper::Trapezoid => {
                    // (2/dt + L(t+)) u+ = (2/dt) u - L(t) u + f(t) + f(t+)
                    let two_inv_dt = T::of(2.0) / dt;
                    let a_prev =
                        assemble_elliptic_dense(xgrid, ygrid, family, T::zero(), t_prev, c);
                    let lu_prev = dense_interior_action(n, ny, &a_prev, &state);
                    let f_prev = f(t_prev);
                    for i in 0..x_len {
                        for j in 1..ny - 1 {
                            let r = i * ny + j;
                            rhs[r] += state[r] * two_inv_dt - lu_prev[r] + f_prev[(i, j)];
                        }
                    }
                    assemble_elliptic_dense(xgrid, ygrid, family, two_inv_dt, t_next, c)
                }
            };
            let lu = DenseLu::factor(n, mat)?;
            lu.solve(&mut rhs);
            state = rhs;
        }
        out.push(unpack(xgrid, ygrid, &state));
    }
    Ok(out)
}

/// Derivative weights of the parabola through `(t0, t1, t2)` evaluated at the
/// middle node.
fn d1_weights<T: Real>(t0: T, t1: T, t2: T) -> [T; 3] {
    [
        (t1 - t2) / ((t0 - t1) * (t0 - t2)),
        (T::of(2.0) * t1 - t0 - t2) / ((t1 - t0) * (t1 - t2)),
        (t1 - t0) / ((t2 - t0) * (t2 - t1)),
    ]
}

/// Per-level sup norms of the four residuals of the transformed
/// moving-boundary system, evaluated at the interior time levels.
#[derive(Clone, Debug)]
pub struct SystemResidual<T> {
    /// The time levels the residuals were evaluated at.
    pub levels: Vec<T>,
    /// Interior equation residual.
    pub interior: Vec<T>,
    /// Bottom value condition `u = g`.
    pub bottom: Vec<T>,
    /// Top flux condition.
    pub flux: Vec<T>,
    /// Front propagation law.
    pub front: Vec<T>,
}

impl<T: Real> SystemResidual<T> {
    fn max(v: &[T]) -> T {
        v.iter().fold(T::zero(), |a, &x| a.max(x))
    }
    pub fn sup_interior(&self) -> T {
        Self::max(&self.interior)
    }
    pub fn sup_bottom(&self) -> T {
        Self::max(&self.bottom)
    }
    pub fn sup_flux(&self) -> T {
        Self::max(&self.flux)
    }
    pub fn sup_front(&self) -> T {
        Self::max(&self.front)
    }
    pub fn sup(&self) -> T {
        self.sup_interior()
            .max(self.sup_bottom())
            .max(self.sup_flux())
            .max(self.sup_front())
    }
}

/// Evaluate the residuals of the transformed system on a computed pair
/// `(u, s)`:
///
/// ```text
/// eps u_t - lap_x u - [(1+y^2|Ds|^2)/s^2] u_yy
///     = eps y (s_t/s) u_y - (2y/s)(Ds | D u_y) - y (s lap s - 2|Ds|^2)/s^2 u_y
/// u = g                                         at y = 0
/// -[(1+|Ds|^2)/s] u_y = (1+eps u) s_t - (Ds|Du) at y = 1
/// s_t = sqrt(1+|Ds|^2) u                        at y = 1
/// ```
///
/// All derivatives are re-approximated independently of the solvers: lateral
/// ones spectrally, transverse ones with centered stencils plus a one-sided
/// third-order stencil for the top derivative, time derivatives (both `u_t`
/// and `s_t`; the surface's stored `dot_values` are deliberately ignored)
/// with three-point Lagrange weights on the graded levels. Residuals are
/// reported at the interior levels `1..len-1`.
pub fn system_residual<T: Real>(
    xgrid: &XGrid<T>,
    ygrid: &YGrid<T>,
    xtf: &XTransform<T>,
    epsilon: u8,
    u: &StripField<T>,
    s: &SurfaceField<T>,
    g: &[Array1<T>],
) -> SystemResidual<T> {
    let x_len = xgrid.x_len();
    let ny = ygrid.ny();
    let hh = ygrid.h;
    let inv_h2 = T::one() / (hh * hh);
    let inv_2h = T::one() / (T::of(2.0) * hh);
    let inv_6h = T::one() / (T::of(6.0) * hh);
    let eps = T::of_usize(epsilon as usize);
    let nlev = u.levels.len();
    assert!(nlev >= 3, "need at least three levels for centered time differences");
    let mut out = SystemResidual {
        levels: Vec::new(),
        interior: Vec::new(),
        bottom: Vec::new(),
        flux: Vec::new(),
        front: Vec::new(),
    };
    for k in 1..nlev - 1 {
        let (t0, t1, t2) = (u.levels[k - 1], u.levels[k], u.levels[k + 1]);
        let w = d1_weights(t0, t1, t2);
        let slice = &u.slices[k];
        let sv = &s.values[k];
        let mut ut = Array2::zeros((x_len, ny));
        for j in 0..ny {
            for i in 0..x_len {
                ut[(i, j)] = w[0] * u.slices[k - 1][(i, j)]
                    + w[1] * slice[(i, j)]
                    + w[2] * u.slices[k + 1][(i, j)];
            }
        }
        let mut sdot = Array1::zeros(x_len);
        for i in 0..x_len {
            sdot[i] =
                w[0] * s.values[k - 1][i] + w[1] * sv[i] + w[2] * s.values[k + 1][i];
        }
        let grad_s = spectral_grad(xgrid, xtf, sv);
        let lap_s = spectral_lap(xgrid, xtf, sv);
        // transverse first derivative at interior nodes, then its lateral
        // gradient row by row
        let mut dyu = Array2::zeros((x_len, ny));
        for j in 1..ny - 1 {
            for i in 0..x_len {
                dyu[(i, j)] = (slice[(i, j + 1)] - slice[(i, j - 1)]) * inv_2h;
            }
        }
        let mut grad_dyu = vec![[T::zero(); 2]; x_len * ny];
        for j in 1..ny - 1 {
            let col = dyu.column(j).to_owned();
            for (i, gv) in spectral_grad(xgrid, xtf, &col).into_iter().enumerate() {
                grad_dyu[i * ny + j] = gv;
            }
        }
        let mut lap_u = Array2::zeros((x_len, ny));
        for j in 1..ny - 1 {
            let col = slice.column(j).to_owned();
            for (i, v) in spectral_lap(xgrid, xtf, &col).into_iter().enumerate() {
                lap_u[(i, j)] = v;
            }
        }
        let mut res_int = T::zero();
        for j in 1..ny - 1 {
            let y = ygrid.nodes[j];
            for i in 0..x_len {
                let si = sv[i];
                let gs = grad_s[i];
                let gs2 = gs[0] * gs[0] + gs[1] * gs[1];
                let dyy =
                    (slice[(i, j - 1)] - T::of(2.0) * slice[(i, j)] + slice[(i, j + 1)])
                        * inv_h2;
                let dy = dyu[(i, j)];
                let gd = grad_dyu[i * ny + j];
                let cross = gs[0] * gd[0] + gs[1] * gd[1];
                let r = eps * ut[(i, j)]
                    - lap_u[(i, j)]
                    - (T::one() + y * y * gs2) / (si * si) * dyy
                    - eps * y * (sdot[i] / si) * dy
                    + T::of(2.0) * y / si * cross
                    + y * (si * lap_s[i] - T::of(2.0) * gs2) / (si * si) * dy;
                res_int = res_int.max(r.abs());
            }
        }
        let top = slice.column(ny - 1).to_owned();
        let grad_top = spectral_grad(xgrid, xtf, &top);
        let mut res_bot = T::zero();
        let mut res_flux = T::zero();
        let mut res_front = T::zero();
        for i in 0..x_len {
            res_bot = res_bot.max((slice[(i, 0)] - g[k][i]).abs());
            let gs = grad_s[i];
            let gs2 = gs[0] * gs[0] + gs[1] * gs[1];
            let dy_top = (T::of(11.0) * slice[(i, ny - 1)]
                - T::of(18.0) * slice[(i, ny - 2)]
                + T::of(9.0) * slice[(i, ny - 3)]
                - T::of(2.0) * slice[(i, ny - 4)])
                * inv_6h;
            let gt = grad_top[i];
            let cross = gs[0] * gt[0] + gs[1] * gt[1];
            let rf = -(T::one() + gs2) / sv[i] * dy_top
                - (T::one() + eps * top[i]) * sdot[i]
                + cross;
            res_flux = res_flux.max(rf.abs());
            let rp = sdot[i] - (T::one() + gs2).sqrt() * top[i];
            res_front = res_front.max(rp.abs());
        }
        out.levels.push(t1);
        out.interior.push(res_int);
        out.bottom.push(res_bot);
        out.flux.push(res_flux);
        out.front.push(res_front);
    }
    out
}
