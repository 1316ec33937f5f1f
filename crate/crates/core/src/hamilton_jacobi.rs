//! Front propagation: solves `s_t = sqrt(1 + |grad s|^2) v`, `s(0) = 0`, by
//! integrating the characteristic system
//!
//! ```text
//!     x' = -p v / sqrt(1 + |p|^2),      x(0) = seed,
//!     p' = sqrt(1 + |p|^2) grad_x v,    p(0) = 0,
//!     z' = v / sqrt(1 + |p|^2),         z(0) = 0,
//! ```
//!
//! with the classic fourth-order one-step scheme; `z` carries the front
//! height along each curve. The front speed `r = s_t` needs no time
//! derivative of `v`: along a curve,
//! `d/dt [sqrt(1 + |p|^2) v(t, x(t))] = sqrt(1 + |p|^2) v_t` exactly (the
//! chain-rule contributions cancel against the `x'` and `p'` equations), so
//! `r = sqrt(1 + |p|^2) v` solves the speed equation with the right initial
//! value and is evaluated, never integrated. Velocities that are merely
//! Hölder in time — sampled traces included — are therefore admissible.
//!
//! The seed-to-position map `X_t` is inverted by damped Newton iteration on
//! trigonometric interpolants of the periodic displacement `X_t - id`, warm
//! started from the nearest seed; then `s(t, x) = z(t, X_t^{-1}(x))` and
//! `grad s(t, x) = p(t, X_t^{-1}(x))`. Two guards fail fast when the front
//! leaves the small-time graph regime: `|p| <= P_GUARD` along every curve,
//! and `|id - D X_t| <= JAC_GUARD` (operator infinity-norm) at every level,
//! which keeps the Newton Jacobian uniformly invertible.

use crate::config::Preset;
use crate::error::{Error, Result};
use crate::fft::{lagrange4_stencil, TrigInterp, XTransform};
use crate::float::Real;
use crate::grids::{SurfaceField, XGrid};
use ndarray::Array1;
use rayon::prelude::*;

/// Slope guard: characteristics abort once |p| exceeds this.
pub const P_GUARD: f64 = 10.0;
/// Flow-map Jacobian guard: levels abort once |id - DX| exceeds this.
pub const JAC_GUARD: f64 = 0.5;
/// Target residual for the flow-map inversion.
pub const INVERT_TOL: f64 = 1e-10;
/// Iteration cap for the flow-map inversion.
pub const INVERT_MAX_ITERS: usize = 50;

/// Velocity field driving the front, either closed-form or sampled per time
/// level on the lateral grid (trigonometric in space, 4-point Lagrange in
/// time). Sampled fields always carry their own `t = 0` slot so evaluation
/// near the initial time interpolates rather than extrapolates.
#[derive(Clone, Debug)]
pub enum VelocityField<T: Real> {
    ClosedForm {
        preset: Preset<T>,
        len: T,
    },
    Sampled {
        times: Vec<T>,
        interps: Vec<TrigInterp<T>>,
    },
}

impl<T: Real> VelocityField<T> {
    pub fn closed_form(preset: Preset<T>, len: T) -> Self {
        VelocityField::ClosedForm { preset, len }
    }

    /// Build from traces sampled at strictly increasing positive `times`,
    /// prepending the initial value `g` at `t = 0`.
    pub fn sampled(
        grid: &XGrid<T>,
        xtf: &XTransform<T>,
        g: &Array1<T>,
        times: &[T],
        traces: &[Array1<T>],
    ) -> Result<Self> {
        if times.len() != traces.len() || times.is_empty() {
            return Err(Error::Invalid(format!(
                "velocity sampling: {} times vs {} traces",
                times.len(),
                traces.len()
            )));
        }
        let mut prev = T::zero();
        for &t in times {
            if t <= prev {
                return Err(Error::Invalid(
                    "velocity sampling times must be positive and increasing".into(),
                ));
            }
            prev = t;
        }
        let mut all_times = Vec::with_capacity(times.len() + 1);
        let mut interps = Vec::with_capacity(times.len() + 1);
        all_times.push(T::zero());
        interps.push(TrigInterp::new(grid, xtf, g));
        for (&t, trace) in times.iter().zip(traces) {
            if trace.len() != grid.x_len() {
                return Err(Error::Invalid(format!(
                    "velocity trace has {} samples, grid has {}",
                    trace.len(),
                    grid.x_len()
                )));
            }
            all_times.push(t);
            interps.push(TrigInterp::new(grid, xtf, trace));
        }
        Ok(VelocityField::Sampled {
            times: all_times,
            interps,
        })
    }

    /// Value and lateral gradient in one pass.
    pub fn eval_grad(&self, t: T, x: [T; 2]) -> (T, [T; 2]) {
        match self {
            VelocityField::ClosedForm { preset, len } => {
                (preset.eval(x, *len, t), preset.grad(x, *len, t))
            }
            VelocityField::Sampled { times, interps } => {
                let (idx, w, _) = lagrange4_stencil(times, t);
                let mut val = T::zero();
                let mut grad = [T::zero(); 2];
                for j in 0..4 {
                    if w[j] == T::zero() {
                        continue;
                    }
                    let (vj, gj) = interps[idx[j]].eval_grad(x);
                    val += w[j] * vj;
                    grad[0] += w[j] * gj[0];
                    grad[1] += w[j] * gj[1];
                }
                (val, grad)
            }
        }
    }

    pub fn eval(&self, t: T, x: [T; 2]) -> T {
        match self {
            VelocityField::ClosedForm { preset, len } => preset.eval(x, *len, t),
            VelocityField::Sampled { times, interps } => {
                let (idx, w, _) = lagrange4_stencil(times, t);
                let mut val = T::zero();
                for j in 0..4 {
                    if w[j] != T::zero() {
                        val += w[j] * interps[idx[j]].eval(x);
                    }
                }
                val
            }
        }
    }
}

/// State of one characteristic curve at a time level: position, transported
/// front slope, accumulated front height, and front speed.
#[derive(Clone, Copy, Debug)]
pub struct CharacteristicState<T> {
    pub x: [T; 2],
    pub p: [T; 2],
    pub z: T,
    pub r: T,
}

/// Flow data at one time level: the states of all curves plus periodic
/// interpolants of displacement, slope, and height over the seed variable.
#[derive(Clone, Debug)]
pub struct LevelMap<T: Real> {
    pub t: T,
    pub states: Vec<CharacteristicState<T>>,
    /// Sup over seeds of the infinity-norm of `D X_t - id`.
    pub jac_dev: T,
    disp: [TrigInterp<T>; 2],
    slope: [TrigInterp<T>; 2],
    height: TrigInterp<T>,
}

/// The characteristic flow recorded at the requested time levels, with seeds
/// on the lateral grid.
#[derive(Clone, Debug)]
pub struct FlowMap<T: Real> {
    pub n_dim: usize,
    pub len: T,
    pub seeds: Vec<[T; 2]>,
    pub levels: Vec<LevelMap<T>>,
}

/// Wrap a coordinate difference into [-len/2, len/2).
fn wrap<T: Real>(d: T, len: T) -> T {
    d - len * (d / len).round()
}

#[derive(Clone, Copy)]
struct Phase<T> {
    x: [T; 2],
    p: [T; 2],
    z: T,
}

/// Right-hand side of the characteristic system at (t, phase).
fn phase_rate<T: Real>(v: &VelocityField<T>, n_dim: usize, t: T, ph: &Phase<T>) -> Phase<T> {
    let (val, grad) = v.eval_grad(t, ph.x);
    let q = (T::one() + ph.p[0] * ph.p[0] + ph.p[1] * ph.p[1]).sqrt();
    let mut dx = [T::zero(); 2];
    let mut dp = [T::zero(); 2];
    for a in 0..n_dim {
        dx[a] = -ph.p[a] * val / q;
        dp[a] = q * grad[a];
    }
    Phase {
        x: dx,
        p: dp,
        z: val / q,
    }
}

fn phase_axpy<T: Real>(base: &Phase<T>, scale: T, rate: &Phase<T>) -> Phase<T> {
    Phase {
        x: [base.x[0] + scale * rate.x[0], base.x[1] + scale * rate.x[1]],
        p: [base.p[0] + scale * rate.p[0], base.p[1] + scale * rate.p[1]],
        z: base.z + scale * rate.z,
    }
}

/// One classic fourth-order step of size dt starting at time t.
fn rk4_step<T: Real>(v: &VelocityField<T>, n_dim: usize, t: T, dt: T, ph: Phase<T>) -> Phase<T> {
    let half = dt * T::of(0.5);
    let k1 = phase_rate(v, n_dim, t, &ph);
    let k2 = phase_rate(v, n_dim, t + half, &phase_axpy(&ph, half, &k1));
    let k3 = phase_rate(v, n_dim, t + half, &phase_axpy(&ph, half, &k2));
    let k4 = phase_rate(v, n_dim, t + dt, &phase_axpy(&ph, dt, &k3));
    let sixth = dt / T::of(6.0);
    let mut out = phase_axpy(&ph, sixth, &k1);
    out = phase_axpy(&out, sixth + sixth, &k2);
    out = phase_axpy(&out, sixth + sixth, &k3);
    phase_axpy(&out, sixth, &k4)
}

/// March one seed from t = 0 through the requested levels, recording the
/// state at each; `substeps` fourth-order steps per level gap.
fn march_seed<T: Real>(
    v: &VelocityField<T>,
    n_dim: usize,
    seed: [T; 2],
    times: &[T],
    substeps: usize,
) -> Result<Vec<CharacteristicState<T>>> {
    let guard = T::of(P_GUARD);
    let mut ph = Phase {
        x: seed,
        p: [T::zero(); 2],
        z: T::zero(),
    };
    let mut t_prev = T::zero();
    let mut out = Vec::with_capacity(times.len());
    for &t_level in times {
        let gap = t_level - t_prev;
        if gap > T::zero() {
            let dt = gap / T::of_usize(substeps);
            for i in 0..substeps {
                let t = t_prev + dt * T::of_usize(i);
                ph = rk4_step(v, n_dim, t, dt, ph);
                let pnorm = (ph.p[0] * ph.p[0] + ph.p[1] * ph.p[1]).sqrt();
                if pnorm > guard {
                    return Err(Error::SlopeGuard {
                        value: pnorm.as_f64(),
                        guard: P_GUARD,
                    });
                }
            }
        }
        t_prev = t_level;
        let speed = (T::one() + ph.p[0] * ph.p[0] + ph.p[1] * ph.p[1]).sqrt()
            * v.eval(t_level, ph.x);
        out.push(CharacteristicState {
            x: ph.x,
            p: ph.p,
            z: ph.z,
            r: speed,
        });
    }
    Ok(out)
}

/// Integrate the characteristic system from t = 0, seeding one curve per
/// lateral grid point, and record the flow at each requested level. Fails
/// with the slope guard during the march or the Jacobian guard once a
/// level's displacement stops being a small perturbation of the identity —
/// both signal that the horizon is too long for the graph description.
pub fn integrate_characteristics<T: Real>(
    grid: &XGrid<T>,
    v: &VelocityField<T>,
    times: &[T],
    substeps: usize,
) -> Result<FlowMap<T>> {
    if times.is_empty() {
        return Err(Error::Invalid("no time levels requested".into()));
    }
    let mut prev = T::zero();
    for (k, &t) in times.iter().enumerate() {
        if t < prev || (k > 0 && t == prev) {
            return Err(Error::Invalid(
                "characteristic levels must be nonnegative and increasing".into(),
            ));
        }
        prev = t;
    }
    if substeps == 0 {
        return Err(Error::Invalid("substeps must be at least 1".into()));
    }
    let n_dim = grid.n_dim;
    let trajectories: Result<Vec<Vec<CharacteristicState<T>>>> = grid
        .points
        .par_iter()
        .map(|&seed| march_seed(v, n_dim, seed, times, substeps))
        .collect();
    let trajectories = trajectories?;

    let xtf = XTransform::new(grid);
    let npts = grid.x_len();
    let mut levels = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        let states: Vec<CharacteristicState<T>> =
            trajectories.iter().map(|traj| traj[k]).collect();
        let mut disp_samples = [Array1::zeros(npts), Array1::zeros(npts)];
        let mut slope_samples = [Array1::zeros(npts), Array1::zeros(npts)];
        let mut height_samples = Array1::zeros(npts);
        for (i, st) in states.iter().enumerate() {
            for a in 0..2 {
                disp_samples[a][i] = st.x[a] - grid.points[i][a];
                slope_samples[a][i] = st.p[a];
            }
            height_samples[i] = st.z;
        }
        let disp = [
            TrigInterp::new(grid, &xtf, &disp_samples[0]),
            TrigInterp::new(grid, &xtf, &disp_samples[1]),
        ];
        let slope = [
            TrigInterp::new(grid, &xtf, &slope_samples[0]),
            TrigInterp::new(grid, &xtf, &slope_samples[1]),
        ];
        let height = TrigInterp::new(grid, &xtf, &height_samples);

        // Deviation of the seed-to-position Jacobian from the identity,
        // measured with the interpolant that the inversion will differentiate.
        let mut dev = T::zero();
        for pt in &grid.points {
            for a in 0..n_dim {
                let (_, g) = disp[a].eval_grad(*pt);
                let mut row = T::zero();
                for gb in g.iter().take(n_dim) {
                    row += gb.abs();
                }
                dev = dev.max(row);
            }
        }
        if dev > T::of(JAC_GUARD) {
            return Err(Error::JacobianGuard { dev: dev.as_f64() });
        }
        levels.push(LevelMap {
            t,
            states,
            jac_dev: dev,
            disp,
            slope,
            height,
        });
    }
    Ok(FlowMap {
        n_dim,
        len: grid.len,
        seeds: grid.points.clone(),
        levels,
    })
}

impl<T: Real> FlowMap<T> {
    /// Position reached at `level` by the curve seeded at `rho`.
    pub fn eval_x(&self, level: usize, rho: [T; 2]) -> [T; 2] {
        let lm = &self.levels[level];
        let mut out = rho;
        for a in 0..self.n_dim {
            out[a] += lm.disp[a].eval(rho);
        }
        out
    }

    /// Transported slope at `level` for the curve seeded at `rho`.
    pub fn eval_p(&self, level: usize, rho: [T; 2]) -> [T; 2] {
        let lm = &self.levels[level];
        let mut out = [T::zero(); 2];
        for a in 0..self.n_dim {
            out[a] = lm.slope[a].eval(rho);
        }
        out
    }

    /// Accumulated front height at `level` for the curve seeded at `rho`.
    pub fn eval_z(&self, level: usize, rho: [T; 2]) -> T {
        self.levels[level].height.eval(rho)
    }

    /// Largest Jacobian deviation across levels.
    pub fn max_jacobian_deviation(&self) -> T {
        self.levels
            .iter()
            .fold(T::zero(), |acc, lm| acc.max(lm.jac_dev))
    }

    /// Find the seed whose curve passes through `x` at `level`: damped Newton
    /// on the interpolated displacement, warm started from the nearest seed,
    /// with coordinate differences wrapped periodically. The returned seed is
    /// reduced into the fundamental cell.
    pub fn invert(&self, level: usize, x: [T; 2]) -> Result<[T; 2]> {
        let lm = &self.levels[level];
        let mut best = T::infinity();
        let mut rho = self.seeds[0];
        for (i, st) in lm.states.iter().enumerate() {
            let mut d2 = T::zero();
            for a in 0..self.n_dim {
                let d = wrap(st.x[a] - x[a], self.len);
                d2 += d * d;
            }
            if d2 < best {
                best = d2;
                rho = self.seeds[i];
            }
        }

        let tol = T::of(INVERT_TOL);
        let mut res = T::infinity();
        for _ in 0..INVERT_MAX_ITERS {
            let (f, jac) = self.residual_jacobian(lm, rho, x);
            res = (f[0] * f[0] + f[1] * f[1]).sqrt();
            if res <= tol {
                for r in rho.iter_mut().take(self.n_dim) {
                    *r -= self.len * (*r / self.len).floor();
                }
                return Ok(rho);
            }
            let Some(delta) = self.newton_direction(jac, f) else {
                break;
            };
            // Backtrack until the residual actually drops.
            let mut scale = T::one();
            let mut accepted = rho;
            let mut improved = false;
            for _ in 0..8 {
                let mut cand = rho;
                for a in 0..self.n_dim {
                    cand[a] -= scale * delta[a];
                }
                let (fc, _) = self.residual_jacobian(lm, cand, x);
                if (fc[0] * fc[0] + fc[1] * fc[1]).sqrt() < res {
                    accepted = cand;
                    improved = true;
                    break;
                }
                scale *= T::of(0.5);
            }
            if !improved {
                break;
            }
            rho = accepted;
        }
        Err(Error::FlowMapInversion {
            residual: res.as_f64(),
            tol: INVERT_TOL,
        })
    }

    fn residual_jacobian(
        &self,
        lm: &LevelMap<T>,
        rho: [T; 2],
        x: [T; 2],
    ) -> ([T; 2], [[T; 2]; 2]) {
        let mut f = [T::zero(); 2];
        let mut jac = [[T::zero(); 2]; 2];
        jac[0][0] = T::one();
        jac[1][1] = T::one();
        for a in 0..self.n_dim {
            let (da, ga) = lm.disp[a].eval_grad(rho);
            f[a] = wrap(rho[a] + da - x[a], self.len);
            for b in 0..self.n_dim {
                jac[a][b] += ga[b];
            }
        }
        (f, jac)
    }

    fn newton_direction(&self, jac: [[T; 2]; 2], f: [T; 2]) -> Option<[T; 2]> {
        if self.n_dim == 1 {
            if jac[0][0].abs() <= T::of(1e-14) {
                return None;
            }
            Some([f[0] / jac[0][0], T::zero()])
        } else {
            let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
            if det.abs() <= T::of(1e-14) {
                return None;
            }
            Some([
                (f[0] * jac[1][1] - f[1] * jac[0][1]) / det,
                (f[1] * jac[0][0] - f[0] * jac[1][0]) / det,
            ])
        }
    }
}

/// Front solution: height and speed per level on the lateral grid, the
/// transported gradient at each grid point, and the flow itself.
#[derive(Clone, Debug)]
pub struct HjSolution<T: Real> {
    pub s: SurfaceField<T>,
    /// Per level, per lateral grid point: the front gradient.
    pub grad: Vec<Vec<[T; 2]>>,
    pub flow: FlowMap<T>,
}

/// Gather the front from an integrated flow: at each grid point invert the
/// flow, read off height and slope at the seed, and evaluate the speed
/// through `r = sqrt(1 + |p|^2) v`.
pub fn reconstruct_s<T: Real>(
    flow: FlowMap<T>,
    v: &VelocityField<T>,
    grid: &XGrid<T>,
) -> Result<HjSolution<T>> {
    let times: Vec<T> = flow.levels.iter().map(|lm| lm.t).collect();
    let mut s = SurfaceField::zeros(&times, grid.x_len());
    let mut grad = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        let rows: Result<Vec<(T, T, [T; 2])>> = grid
            .points
            .par_iter()
            .map(|&xq| {
                let rho = flow.invert(k, xq)?;
                let z = flow.eval_z(k, rho);
                let p = flow.eval_p(k, rho);
                let q = (T::one() + p[0] * p[0] + p[1] * p[1]).sqrt();
                Ok((z, q * v.eval(t, xq), p))
            })
            .collect();
        let rows = rows?;
        let mut level_grad = Vec::with_capacity(rows.len());
        for (i, (z, sdot, p)) in rows.into_iter().enumerate() {
            s.values[k][i] = z;
            s.dot_values[k][i] = sdot;
            level_grad.push(p);
        }
        grad.push(level_grad);
    }
    Ok(HjSolution { s, grad, flow })
}

/// Full front solve: integrate the characteristics through `times` and
/// reconstruct the front on the grid.
pub fn hj_solve<T: Real>(
    grid: &XGrid<T>,
    v: &VelocityField<T>,
    times: &[T],
    substeps: usize,
) -> Result<HjSolution<T>> {
    let flow = integrate_characteristics(grid, v, times, substeps)?;
    reconstruct_s(flow, v, grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fft::spectral_grad;
    use crate::fit::loglog_slope;

    fn grid1(nx: usize) -> XGrid<f64> {
        XGrid::new(1, nx, std::f64::consts::TAU).unwrap()
    }

    fn sin_velocity(base: f64, amp: f64, k1: i64, rate: f64) -> VelocityField<f64> {
        VelocityField::closed_form(
            Preset::Sin {
                base,
                amp,
                k: [k1, 0],
                phase: 0.0,
                rate,
            },
            std::f64::consts::TAU,
        )
    }

    #[test]
    fn constant_velocity_gives_flat_front_with_unit_speed() {
        let grid = grid1(16);
        let v = VelocityField::closed_form(Preset::Constant(1.0), grid.len);
        let times = [0.1, 0.2, 0.3];
        let sol = hj_solve(&grid, &v, &times, 4).unwrap();
        for (k, &t) in times.iter().enumerate() {
            for (i, st) in sol.flow.levels[k].states.iter().enumerate() {
                assert_eq!(st.p[0], 0.0);
                assert_eq!(st.x[0], grid.points[i][0]);
            }
            for i in 0..grid.x_len() {
                assert!((sol.s.values[k][i] - t).abs() < 1e-12);
                assert!((sol.s.dot_values[k][i] - 1.0).abs() < 1e-12);
                assert!(sol.grad[k][i][0].abs() < 1e-12);
            }
        }
        assert!(sol.flow.max_jacobian_deviation() < 1e-12);
    }

    #[test]
    fn characteristics_match_much_finer_step_reference() {
        let grid = grid1(32);
        let v = sin_velocity(1.0, 0.1, 1, 0.0);
        let coarse = integrate_characteristics(&grid, &v, &[0.4], 32).unwrap();
        let fine = integrate_characteristics(&grid, &v, &[0.4], 3200).unwrap();
        let mut worst = 0.0f64;
        for (a, b) in coarse.levels[0].states.iter().zip(&fine.levels[0].states) {
            worst = worst
                .max((a.x[0] - b.x[0]).abs())
                .max((a.p[0] - b.p[0]).abs())
                .max((a.z - b.z).abs());
        }
        assert!(worst <= 1e-8, "coarse vs fine step mismatch {worst:.3e}");
    }

    #[test]
    fn one_step_scheme_is_fourth_order() {
        let grid = grid1(16);
        let v = sin_velocity(1.0, 0.3, 1, 1.0);
        let reference = integrate_characteristics(&grid, &v, &[0.5], 128).unwrap();
        let mut hs = Vec::new();
        let mut errs = Vec::new();
        for &n in &[2usize, 4, 8] {
            let run = integrate_characteristics(&grid, &v, &[0.5], n).unwrap();
            let mut err = 0.0f64;
            for (a, b) in run.levels[0].states.iter().zip(&reference.levels[0].states) {
                err = err
                    .max((a.x[0] - b.x[0]).abs())
                    .max((a.p[0] - b.p[0]).abs())
                    .max((a.z - b.z).abs());
            }
            hs.push(0.5 / n as f64);
            errs.push(err);
        }
        let slope = loglog_slope(&hs, &errs);
        assert!(
            (slope - 4.0).abs() <= 0.3,
            "step order {slope:.2}, errors {errs:?}"
        );
    }

    #[test]
    fn flow_map_is_consistent_under_seed_grid_refinement() {
        let v = sin_velocity(1.0, 0.1, 1, 0.0);
        let coarse = integrate_characteristics(&grid1(32), &v, &[0.3], 16).unwrap();
        let fine = integrate_characteristics(&grid1(64), &v, &[0.3], 16).unwrap();
        for j in 0..20 {
            let rho = [0.05 + 0.31 * j as f64, 0.0];
            let xc = coarse.eval_x(0, rho)[0];
            let xf = fine.eval_x(0, rho)[0];
            let pc = coarse.eval_p(0, rho)[0];
            let pf = fine.eval_p(0, rho)[0];
            assert!(
                (xc - xf).abs() <= 1e-6 && (pc - pf).abs() <= 1e-6,
                "coarse/fine seed grids disagree at rho = {}: dx {:.2e}, dp {:.2e}",
                rho[0],
                (xc - xf).abs(),
                (pc - pf).abs()
            );
        }
    }

    #[test]
    fn inversion_round_trips_and_reduces_to_identity_at_small_times() {
        let grid = grid1(32);
        let v = sin_velocity(1.0, 0.2, 2, 0.3);
        let flow = integrate_characteristics(&grid, &v, &[1e-3, 0.35], 8).unwrap();
        for i in 0..grid.x_len() {
            let xq = grid.points[i];
            // Near t = 0 the map is the identity up to O(t^2) drift.
            let rho0 = flow.invert(0, xq).unwrap();
            assert!(wrap(rho0[0] - xq[0], grid.len).abs() <= 1e-4);
            // At the later level the round trip closes to the Newton target.
            let rho = flow.invert(1, xq).unwrap();
            let back = flow.eval_x(1, rho);
            assert!(wrap(back[0] - xq[0], grid.len).abs() <= 1e-10);
        }
    }

    #[test]
    fn inversion_matches_bisection_search() {
        let grid = grid1(32);
        let v = sin_velocity(1.0, 0.3, 2, 0.7);
        let flow = integrate_characteristics(&grid, &v, &[0.35], 16).unwrap();
        // The guarded map is strictly increasing, so a sign change of the
        // wrapped residual brackets the unique seed.
        let residual = |rho: f64, xq: f64| wrap(flow.eval_x(0, [rho, 0.0])[0] - xq, grid.len);
        for j in 0..17 {
            let xq = 0.11 + 0.36 * j as f64;
            let xq = xq - grid.len * (xq / grid.len).floor();
            let newton = flow.invert(0, [xq, 0.0]).unwrap()[0];
            let m = 4096;
            let mut bracket = None;
            for i in 0..m {
                let a = grid.len * i as f64 / m as f64;
                let b = grid.len * (i + 1) as f64 / m as f64;
                if residual(a, xq) <= 0.0 && residual(b, xq) > 0.0 {
                    bracket = Some((a, b));
                    break;
                }
            }
            let (mut a, mut b) = bracket.expect("residual bracket");
            for _ in 0..60 {
                let mid = 0.5 * (a + b);
                if residual(mid, xq) <= 0.0 {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            let bisected = 0.5 * (a + b);
            assert!(
                wrap(newton - bisected, grid.len).abs() <= 1e-8,
                "newton {newton:.12} vs bisection {bisected:.12}"
            );
        }
    }

    #[test]
    fn front_speed_approaches_data_at_small_times() {
        let grid = grid1(32);
        let g = |x: f64| 1.0 + 0.2 * x.sin();
        let v = sin_velocity(1.0, 0.2, 1, 0.0);
        let t0 = 1e-3;
        let sol = hj_solve(&grid, &v, &[t0, 0.2], 8).unwrap();
        for i in 0..grid.x_len() {
            let gx = g(grid.points[i][0]);
            assert!((sol.s.dot_values[0][i] - gx).abs() <= 1e-3);
            assert!((sol.s.values[0][i] / t0 - gx).abs() <= 1e-3);
        }
    }

    #[test]
    fn front_residual_vanishes_on_interior_levels() {
        let grid = grid1(32);
        let v = sin_velocity(1.0, 0.2, 1, 0.4);
        let n_lev = 21;
        let times: Vec<f64> = (0..n_lev).map(|k| 0.05 + 0.02 * k as f64).collect();
        let sol = hj_solve(&grid, &v, &times, 8).unwrap();
        let dt = 0.02;
        let mut worst = 0.0f64;
        let mut steepest = 0.0f64;
        for k in 1..n_lev - 1 {
            for i in 0..grid.x_len() {
                let st = (sol.s.values[k + 1][i] - sol.s.values[k - 1][i]) / (2.0 * dt);
                let p = sol.grad[k][i][0];
                steepest = steepest.max(p.abs());
                let rhs = (1.0 + p * p).sqrt() * v.eval(times[k], grid.points[i]);
                worst = worst.max((st - rhs).abs());
            }
        }
        assert!(worst <= 1e-4, "front equation residual {worst:.3e}");
        // The slope term must actually matter at this tolerance.
        assert!(steepest >= 0.05);
    }

    #[test]
    fn grid_gradient_matches_transported_slope() {
        let grid = grid1(32);
        let xtf = XTransform::new(&grid);
        let v = sin_velocity(1.0, 0.25, 1, 0.5);
        let sol = hj_solve(&grid, &v, &[0.2, 0.4], 8).unwrap();
        for k in 0..2 {
            let diffed = spectral_grad(&grid, &xtf, &sol.s.values[k]);
            for i in 0..grid.x_len() {
                assert!(
                    (diffed[i][0] - sol.grad[k][i][0]).abs() <= 1e-4,
                    "gradient identity off by {:.3e} at level {k}",
                    (diffed[i][0] - sol.grad[k][i][0]).abs()
                );
            }
        }
    }

    #[test]
    fn two_dimensional_front_keeps_symmetry_and_gradient_identity() {
        let grid = XGrid::new(2, 16, std::f64::consts::TAU).unwrap();
        let xtf = XTransform::new(&grid);
        let v = VelocityField::closed_form(
            Preset::Sin {
                base: 1.0,
                amp: 0.1,
                k: [1, 1],
                phase: 0.0,
                rate: 0.2,
            },
            grid.len,
        );
        let sol = hj_solve(&grid, &v, &[0.3], 8).unwrap();
        for (i, st) in sol.flow.levels[0].states.iter().enumerate() {
            // The data depend on x1 + x2 only, so both slope components agree.
            assert!((st.p[0] - st.p[1]).abs() <= 1e-12);
            let rho = sol.flow.invert(0, st.x).unwrap();
            let back = sol.flow.eval_x(0, rho);
            for a in 0..2 {
                assert!(wrap(back[a] - st.x[a], grid.len).abs() <= 1e-10);
            }
            let _ = i;
        }
        let diffed = spectral_grad(&grid, &xtf, &sol.s.values[0]);
        for i in 0..grid.x_len() {
            for a in 0..2 {
                assert!((diffed[i][a] - sol.grad[0][i][a]).abs() <= 1e-4);
            }
        }
    }

    #[test]
    fn steep_slope_trips_guard() {
        let grid = grid1(16);
        let v = sin_velocity(5.0, 4.9, 1, 0.0);
        let err = integrate_characteristics(&grid, &v, &[2.0], 200).unwrap_err();
        assert!(
            matches!(err, Error::SlopeGuard { .. }),
            "expected slope guard, got {err}"
        );
    }

    #[test]
    fn spreading_characteristics_trip_jacobian_guard() {
        let grid = grid1(32);
        let v = sin_velocity(1.0, 0.5, 3, 0.0);
        let err = integrate_characteristics(&grid, &v, &[0.8], 32).unwrap_err();
        assert!(
            matches!(err, Error::JacobianGuard { .. }),
            "expected Jacobian guard, got {err}"
        );
    }

    #[test]
    fn solution_difference_scales_linearly_with_horizon_and_perturbation() {
        // v2 - v1 vanishes at t = 0 and grows like t, so the front gap
        // should shrink like horizon * perturbation ~ T^2 under halving.
        let grid = grid1(16);
        let v1 = sin_velocity(1.0, 0.1, 1, 0.0);
        let v2 = sin_velocity(1.0, 0.1, 1, 0.5);
        let mut horizons = Vec::new();
        let mut gaps = Vec::new();
        for j in 0..4 {
            let t_final = 0.4 / 2f64.powi(j);
            let times: Vec<f64> = (1..=8).map(|k| t_final * k as f64 / 8.0).collect();
            let s1 = hj_solve(&grid, &v1, &times, 8).unwrap();
            let s2 = hj_solve(&grid, &v2, &times, 8).unwrap();
            let mut gap = 0.0f64;
            for k in 0..times.len() {
                for i in 0..grid.x_len() {
                    gap = gap.max((s1.s.values[k][i] - s2.s.values[k][i]).abs());
                }
            }
            horizons.push(t_final);
            gaps.push(gap);
        }
        let slope = loglog_slope(&horizons, &gaps);
        assert!(
            (slope - 2.0).abs() <= 0.6,
            "continuous dependence slope {slope:.2}, gaps {gaps:?}"
        );
    }

    #[test]
    fn sampled_velocity_reproduces_closed_form_run() {
        let grid = grid1(32);
        let xtf = XTransform::new(&grid);
        let closed = sin_velocity(1.0, 0.1, 1, 0.5);
        let times: Vec<f64> = (1..=8).map(|k| 0.05 * k as f64).collect();
        let g = Array1::from_iter(grid.points.iter().map(|p| closed.eval(0.0, *p)));
        let traces: Vec<Array1<f64>> = times
            .iter()
            .map(|&t| Array1::from_iter(grid.points.iter().map(|p| closed.eval(t, *p))))
            .collect();
        let sampled = VelocityField::sampled(&grid, &xtf, &g, &times, &traces).unwrap();
        let a = hj_solve(&grid, &closed, &times, 8).unwrap();
        let b = hj_solve(&grid, &sampled, &times, 8).unwrap();
        let mut worst = 0.0f64;
        for k in 0..times.len() {
            for i in 0..grid.x_len() {
                worst = worst.max((a.s.values[k][i] - b.s.values[k][i]).abs());
                worst = worst.max((a.s.dot_values[k][i] - b.s.dot_values[k][i]).abs());
            }
        }
        assert!(worst <= 1e-6, "sampled velocity drifts by {worst:.3e}");
    }
}
