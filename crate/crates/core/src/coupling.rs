//! The coupled free-boundary solve on the strip.
//!
//! The bulk unknown `u` and the front `s` are linked through two maps. For a
//! given front, `phi1` produces the bulk solution of
//!
//! ```text
//!     eps u_t + L~(t) u = Abar(s) u      (interior)
//!     u = g                              (y = 0)
//!     (1/t) d_y u = H(s, u)              (y = 1)
//! ```
//!
//! by Picard iteration: each pass solves a linear problem whose interior
//! forcing `Abar(s) u` and flux datum `H(s, u)` come from the previous
//! iterate. `L~` is the drift-modified singular operator with coefficient
//! `c = g`; `Abar(s)` collects exactly the terms by which the true
//! front-dependent operator differs from `L~`, so it vanishes on the onset
//! ansatz `s = t g` and stays small in operator norm on short horizons —
//! which is what makes the iteration contract. For a given bulk solution,
//! `phi2` advances the front with the top trace as velocity (the
//! characteristics solver). The outer loop alternates the two maps starting
//! from `s = t g` and halves the horizon when anything stops contracting.
//!
//! The quasi-stationary variant (`epsilon = 0`) drops the time derivative:
//! `phi1` then solves an elliptic problem level by level with the plain
//! (drift-free) operator, and the same outer loop applies.

use crate::config::Stepper;
use crate::elliptic::{Family, PartitionOfUnity};
use crate::error::{Error, Result};
use crate::fft::{lagrange4_stencil, spectral_grad, spectral_lap, XTransform};
use crate::fit::loglog_slope;
use crate::float::Real;
use crate::grids::{StripField, SurfaceField, XGrid, YGrid};
use crate::hamilton_jacobi::{hj_solve, HjSolution, VelocityField};
use crate::parabolic::{solve_inhomogeneous, BoundaryData, Generator};
use ndarray::{Array1, Array2};
use serde::Serialize;

/// Relative radius of the admissible ball around `g` for the bulk iterates.
pub const U_BALL: f64 = 0.75;
/// Relative radius of the admissible ball around `t g` for front iterates.
pub const S_BALL: f64 = 0.75;
/// Fewest time levels a horizon halving may leave behind.
const MIN_LEVELS: usize = 6;

/// Knobs of the coupled solve, typically derived from a `SolverConfig`.
#[derive(Clone, Debug)]
pub struct CouplingOptions<T> {
    pub epsilon: u8,
    pub stepper: Stepper,
    pub tol_outer: T,
    pub tol_inner: T,
    pub tol_linear: T,
    pub max_outer: usize,
    pub max_inner: usize,
    pub max_sweeps: usize,
    pub max_retries: usize,
    /// Characteristic substeps per level gap in the front solve.
    pub hj_substeps: usize,
    pub u_ball: T,
    pub s_ball: T,
}

impl<T: Real> CouplingOptions<T> {
    pub fn from_config(cfg: &crate::config::SolverConfig<T>) -> Self {
        CouplingOptions {
            epsilon: cfg.epsilon,
            stepper: cfg.stepper,
            tol_outer: cfg.tol_outer,
            tol_inner: cfg.tol_inner,
            tol_linear: cfg.tol_linear,
            max_outer: cfg.max_outer,
            max_inner: cfg.max_inner,
            max_sweeps: cfg.max_sweeps,
            max_retries: cfg.max_retries,
            hj_substeps: cfg.substeps.max(1),
            u_ball: T::of(U_BALL),
            s_ball: T::of(S_BALL),
        }
    }
}

/// Per-level front geometry derived from a surface field: height, speed,
/// lateral gradient and Laplacian (differenced spectrally on the values).
#[derive(Clone, Debug)]
pub struct FrontData<T: Real> {
    pub levels: Vec<T>,
    pub s: Vec<Array1<T>>,
    pub sdot: Vec<Array1<T>>,
    pub grad: Vec<Vec<[T; 2]>>,
    pub lap: Vec<Array1<T>>,
}

/// Differentiate a surface field; fails if the front is not strictly
/// positive anywhere.
pub fn build_front_data<T: Real>(
    xgrid: &XGrid<T>,
    xtf: &XTransform<T>,
    s: &SurfaceField<T>,
) -> Result<FrontData<T>> {
    let mut grad = Vec::with_capacity(s.levels.len());
    let mut lap = Vec::with_capacity(s.levels.len());
    for vals in &s.values {
        if vals.iter().any(|&v| v <= T::zero()) {
            return Err(Error::Invalid(
                "front height must stay positive on every level".into(),
            ));
        }
        grad.push(spectral_grad(xgrid, xtf, vals));
        lap.push(spectral_lap(xgrid, xtf, vals));
    }
    Ok(FrontData {
        levels: s.levels.clone(),
        s: s.values.clone(),
        sdot: s.dot_values.clone(),
        grad,
        lap,
    })
}

/// Apply the front correction operator to one bulk slice at level `k`.
///
/// The terms are the exact difference between the pulled-back diffusion
/// operator for the front `s` and the reference operator with coefficient
/// `1/(t c)^2` (drift `y/t d_y` included when `epsilon = 1`):
///
/// ```text
/// [ (1 + y^2 |grad s|^2)/s^2 - 1/(t c)^2 ] d_y^2 u
///   + eps y [ s_t/s - 1/t ] d_y u
///   - (2 y / s) (grad s | d_y grad u)
///   - y (s lap s - 2 |grad s|^2)/s^2 d_y u
/// ```
///
/// assembled with the centered second-order transverse stencils of the
/// production operator; lateral derivatives use the second-order periodic
/// stencils. The result lives on interior rows only.
pub fn apply_abar<T: Real>(
    xgrid: &XGrid<T>,
    ygrid: &YGrid<T>,
    epsilon: u8,
    c: &Array1<T>,
    front: &FrontData<T>,
    k: usize,
    u: &Array2<T>,
) -> Array2<T> {
    let x_len = xgrid.x_len();
    let ny = ygrid.ny();
    let h = ygrid.h;
    let t = front.levels[k];
    let inv_h2 = T::one() / (h * h);
    let inv_2h = T::one() / (h + h);
    let mut out = Array2::zeros((x_len, ny));

    // Lateral gradient of d_y u per interior row, with the same centered
    // transverse stencil the production operator uses.
    let mut dyu_rows: Vec<Array1<T>> = Vec::with_capacity(ny);
    for j in 0..ny {
        let mut row = Array1::zeros(x_len);
        if j > 0 && j + 1 < ny {
            for i in 0..x_len {
                row[i] = (u[(i, j + 1)] - u[(i, j - 1)]) * inv_2h;
            }
        }
        dyu_rows.push(row);
    }

    for j in 1..ny - 1 {
        let y = ygrid.nodes[j];
        let grad_dyu = xgrid.grad_h(&dyu_rows[j]);
        for i in 0..x_len {
            let sv = front.s[k][i];
            let sd = front.sdot[k][i];
            let gs = front.grad[k][i];
            let gs2 = gs[0] * gs[0] + gs[1] * gs[1];
            let ls = front.lap[k][i];
            let tc = t * c[i];

            let dyy = (u[(i, j + 1)] - u[(i, j)] - u[(i, j)] + u[(i, j - 1)]) * inv_h2;
            let dy = dyu_rows[j][i];

            let coef2 = (T::one() + y * y * gs2) / (sv * sv) - T::one() / (tc * tc);
            let mut acc = coef2 * dyy;
            if epsilon == 1 {
                acc += y * (sd / sv - T::one() / t) * dy;
            }
            let dot = gs[0] * grad_dyu[i][0] + gs[1] * grad_dyu[i][1];
            acc -= (y + y) / sv * dot;
            acc -= y * (sv * ls - (gs2 + gs2)) / (sv * sv) * dy;
            out[(i, j)] = acc;
        }
    }
    out
}

/// Flux datum on the top edge: with the front law substituted into the
/// moving-boundary flux balance,
///
/// ```text
/// H(s, u) = (s/t) [ (grad s | grad u) / (1 + |grad s|^2)
///                   - u (1 + eps u) / sqrt(1 + |grad s|^2) ]
/// ```
///
/// evaluated on the top-trace `u` and its lateral gradient. Near the initial
/// time `s/t ~ g`, so the datum stays order-one.
pub fn build_h<T: Real>(
    epsilon: u8,
    front: &FrontData<T>,
    k: usize,
    trace: &Array1<T>,
    trace_grad: &[[T; 2]],
) -> Array1<T> {
    let t = front.levels[k];
    let n = trace.len();
    let mut out = Array1::zeros(n);
    for i in 0..n {
        let gs = front.grad[k][i];
        let gs2 = gs[0] * gs[0] + gs[1] * gs[1];
        let dot = gs[0] * trace_grad[i][0] + gs[1] * trace_grad[i][1];
        let uv = trace[i];
        let eps_u = if epsilon == 1 { uv } else { T::zero() };
        out[i] = front.s[k][i] / t
            * (dot / (T::one() + gs2) - uv * (T::one() + eps_u) / (T::one() + gs2).sqrt());
    }
    out
}

/// Convergence trace of one inner fixed-point run.
#[derive(Clone, Debug, Serialize)]
#[serde(bound = "T: Serialize")]
pub struct InnerReport<T> {
    pub iterations: usize,
    pub diffs: Vec<T>,
    pub converged: bool,
}

fn blend_profiles<T: Real>(ts: &[T], series: &[Array1<T>], t: T, derivative: bool) -> Array1<T> {
    let (idx, w, dw) = lagrange4_stencil(ts, t);
    let wts = if derivative { dw } else { w };
    let mut out = Array1::zeros(series[0].len());
    for j in 0..4 {
        if wts[j] == T::zero() {
            continue;
        }
        let src = &series[idx[j]];
        for i in 0..out.len() {
            out[i] += wts[j] * src[i];
        }
    }
    out
}

fn blend_slices<T: Real>(ts: &[T], series: &[Array2<T>], t: T) -> Array2<T> {
    let (idx, w, _) = lagrange4_stencil(ts, t);
    let mut out = Array2::zeros(series[0].raw_dim());
    for j in 0..4 {
        if w[j] == T::zero() {
            continue;
        }
        let src = &series[idx[j]];
        for (o, &s) in out.iter_mut().zip(src.iter()) {
            *o += w[j] * s;
        }
    }
    out
}

fn sup_diff_slices<T: Real>(a: &[Array2<T>], b: &[Array2<T>]) -> T {
    let mut worst = T::zero();
    for (sa, sb) in a.iter().zip(b) {
        for (&va, &vb) in sa.iter().zip(sb.iter()) {
            worst = worst.max((va - vb).abs());
        }
    }
    worst
}

/// Inner map: solve the bulk problem for a frozen front by Picard iteration,
/// feeding each pass the correction forcing and flux datum built from the
/// previous iterate. `gen` must carry the drift family for `epsilon = 1`
/// (time stepping) and the plain family for `epsilon = 0` (level-by-level
/// elliptic solves).
pub fn phi1<T: Real>(
    gen: &Generator<T>,
    stepper: Stepper,
    epsilon: u8,
    g: &Array1<T>,
    front: &FrontData<T>,
    tol: T,
    max_iters: usize,
) -> Result<(StripField<T>, InnerReport<T>)> {
    let xgrid = gen.xgrid;
    let levels = &front.levels;
    let n = levels.len();
    let scale = g.iter().fold(T::zero(), |a, &v| a.max(v.abs()));
    let floor = tol * scale * T::of(10.0);

    let trace_data = |field: &StripField<T>| -> (Vec<Array1<T>>, Vec<Array2<T>>) {
        let traces = field.trace_top();
        let h_series: Vec<Array1<T>> = (0..n)
            .map(|k| {
                let tg = spectral_grad(xgrid, gen.xtf, &traces[k]);
                build_h(epsilon, front, k, &traces[k], &tg)
            })
            .collect();
        let f_series: Vec<Array2<T>> = (0..n)
            .map(|k| apply_abar(xgrid, gen.ygrid, epsilon, gen.c, front, k, &field.slices[k]))
            .collect();
        (h_series, f_series)
    };

    let mut diffs: Vec<T> = Vec::new();
    let mut prev: Option<StripField<T>> = None;
    for iter in 0..max_iters {
        let (h_series, f_series) = match &prev {
            // First pass: boundary trace frozen at g, no correction forcing.
            None => {
                let flat: Vec<Array1<T>> = (0..n)
                    .map(|k| {
                        let tg = spectral_grad(xgrid, gen.xtf, g);
                        build_h(epsilon, front, k, g, &tg)
                    })
                    .collect();
                (flat, Vec::new())
            }
            Some(field) => trace_data(field),
        };

        let next = if epsilon == 1 {
            let zeros = Array2::zeros(shape_of(gen));
            let f = |t: T| -> Array2<T> {
                if f_series.is_empty() {
                    zeros.clone()
                } else {
                    blend_slices(levels, &f_series, t)
                }
            };
            let g_fn = |_t: T| g.clone();
            let gdot_fn = |_t: T| Array1::zeros(g.len());
            let h_fn = |t: T| blend_profiles(levels, &h_series, t, false);
            let hdot_fn = |t: T| blend_profiles(levels, &h_series, t, true);
            let bd = BoundaryData {
                g: &g_fn,
                gdot: &gdot_fn,
                h: &h_fn,
                hdot: &hdot_fn,
            };
            solve_inhomogeneous(gen, stepper, levels, &f, &bd, None)?
        } else {
            let mut field = StripField::zeros(levels, xgrid.x_len(), gen.ygrid.ny());
            for k in 0..n {
                let f_k = if f_series.is_empty() {
                    Array2::zeros(shape_of(gen))
                } else {
                    f_series[k].clone()
                };
                field.slices[k] = gen.solve(T::zero(), levels[k], &f_k, g, &h_series[k])?;
            }
            field
        };

        if let Some(p) = &prev {
            let diff = sup_diff_slices(&next.slices, &p.slices);
            diffs.push(diff);
            if diff <= tol * scale {
                return Ok((
                    next,
                    InnerReport {
                        iterations: iter + 1,
                        diffs,
                        converged: true,
                    },
                ));
            }
            // The iteration may oscillate transiently while still descending
            // overall, so flag divergence only when the diff climbs well
            // above the best value seen so far.
            let m = diffs.len();
            if m >= 2 {
                let best = diffs[..m - 1]
                    .iter()
                    .fold(T::infinity(), |a, &d| a.min(d));
                if diffs[m - 1] > (T::of(10.0) * best).max(floor) {
                    return Err(Error::NoContraction {
                        context: "bulk fixed point",
                        ratio: (diffs[m - 1] / diffs[m - 2]).as_f64(),
                        sweeps: iter + 1,
                    });
                }
            }
        }
        prev = Some(next);
    }
    let ratio = if diffs.len() >= 2 {
        (diffs[diffs.len() - 1] / diffs[diffs.len() - 2]).as_f64()
    } else {
        f64::INFINITY
    };
    Err(Error::NoContraction {
        context: "bulk fixed point",
        ratio,
        sweeps: max_iters,
    })
}

fn shape_of<T: Real>(gen: &Generator<T>) -> (usize, usize) {
    (gen.xgrid.x_len(), gen.ygrid.ny())
}

/// Outer map: advance the front with the bulk top trace as velocity. The
/// trace series is interpolated in time by the characteristics solver, with
/// the boundary datum `g` as the compatible initial velocity.
pub fn phi2<T: Real>(
    xgrid: &XGrid<T>,
    xtf: &XTransform<T>,
    g: &Array1<T>,
    u: &StripField<T>,
    substeps: usize,
) -> Result<HjSolution<T>> {
    let traces = u.trace_top();
    let v = VelocityField::sampled(xgrid, xtf, g, &u.levels, &traces)?;
    hj_solve(xgrid, &v, &u.levels, substeps)
}

/// One outer iterate in the run log.
#[derive(Clone, Debug, Serialize)]
#[serde(bound = "T: Serialize")]
pub struct OuterRecord<T> {
    pub iteration: usize,
    pub s_diff: T,
    pub ratio: Option<T>,
    pub inner_iterations: usize,
}

/// Full run log: outer iterates of the final (possibly halved) horizon.
#[derive(Clone, Debug, Serialize)]
#[serde(bound = "T: Serialize")]
pub struct IterationLog<T> {
    pub records: Vec<OuterRecord<T>>,
    pub retries: usize,
    pub horizon: T,
}

/// Per-level sup norms of the three summands `u = R_D g + R_N H + v`.
#[derive(Clone, Debug, Serialize)]
#[serde(bound = "T: Serialize")]
pub struct Decomposition<T> {
    pub levels: Vec<T>,
    pub data_lift: Vec<T>,
    pub flux_lift: Vec<T>,
    pub remainder: Vec<T>,
}

/// Log-log slopes of the decomposition terms near the initial time; the
/// three parts scale like t^0 (order one), t^1, and t^2.
#[derive(Clone, Debug, Serialize)]
#[serde(bound = "T: Serialize")]
pub struct DecompositionReport<T> {
    pub data_slope: T,
    pub flux_slope: T,
    pub remainder_slope: T,
}

/// Converged coupled solution with its bookkeeping.
#[derive(Clone, Debug)]
pub struct CoupledState<T: Real> {
    pub u: StripField<T>,
    pub s: SurfaceField<T>,
    /// Front gradient per level and grid point, from the flow map.
    pub grad_s: Vec<Vec<[T; 2]>>,
    pub decomposition: Decomposition<T>,
    pub log: IterationLog<T>,
}

/// Fit the decomposition slopes over the early levels.
pub fn decomposition_report<T: Real>(state: &CoupledState<T>) -> DecompositionReport<T> {
    let d = &state.decomposition;
    let hi = (d.levels.len() / 2).clamp(2, 8);
    let ts = &d.levels[1..=hi];
    DecompositionReport {
        data_slope: loglog_slope(ts, &d.data_lift[1..=hi]),
        flux_slope: loglog_slope(ts, &d.flux_lift[1..=hi]),
        remainder_slope: loglog_slope(ts, &d.remainder[1..=hi]),
    }
}

fn surface_sup_diff<T: Real>(a: &SurfaceField<T>, b: &SurfaceField<T>) -> T {
    let mut worst = T::zero();
    for k in 0..a.levels.len() {
        for i in 0..a.values[k].len() {
            worst = worst.max((a.values[k][i] - b.values[k][i]).abs());
            worst = worst.max((a.dot_values[k][i] - b.dot_values[k][i]).abs());
        }
    }
    worst
}

fn onset_front<T: Real>(g: &Array1<T>, levels: &[T]) -> SurfaceField<T> {
    let mut s = SurfaceField::zeros(levels, g.len());
    for (k, &t) in levels.iter().enumerate() {
        for i in 0..g.len() {
            s.values[k][i] = t * g[i];
            s.dot_values[k][i] = g[i];
        }
    }
    s
}

fn is_constant<T: Real>(arr: &Array1<T>) -> bool {
    arr.iter().all(|&v| (v - arr[0]).abs() <= T::of(1e-14))
}

/// Whether a failure should trigger a horizon halving rather than bubble up.
fn is_divergence(err: &Error) -> bool {
    matches!(
        err,
        Error::NoContraction { .. }
            | Error::SlopeGuard { .. }
            | Error::JacobianGuard { .. }
            | Error::FlowMapInversion { .. }
    )
}

struct Attempt<'a, T: Real> {
    xgrid: &'a XGrid<T>,
    ygrid: &'a YGrid<T>,
    xtf: &'a XTransform<T>,
    g: &'a Array1<T>,
    opts: &'a CouplingOptions<T>,
    pou: Option<PartitionOfUnity<T>>,
}

impl<T: Real> Attempt<'_, T> {
    fn generator(&self, family: Family) -> Generator<'_, T> {
        Generator {
            xgrid: self.xgrid,
            ygrid: self.ygrid,
            xtf: self.xtf,
            family,
            c: self.g,
            pou: self.pou.as_ref(),
            tol: self.opts.tol_linear,
            max_sweeps: self.opts.max_sweeps,
        }
    }

    fn bulk_family(&self) -> Family {
        if self.opts.epsilon == 1 {
            Family::Modified
        } else {
            Family::Plain
        }
    }

    fn run(&self, levels: &[T], retries: usize) -> Result<CoupledState<T>> {
        let opts = self.opts;
        let gen = self.generator(self.bulk_family());
        let g_sup = self.g.iter().fold(T::zero(), |a, &v| a.max(v.abs()));

        let mut s = onset_front(self.g, levels);
        let mut grad_s: Vec<Vec<[T; 2]>> = Vec::new();
        let mut records = Vec::new();
        let mut prev_diff: Option<T> = None;
        let mut converged = false;

        for outer in 0..opts.max_outer {
            let front = build_front_data(self.xgrid, self.xtf, &s)?;
            let (u, inner) = phi1(
                &gen,
                opts.stepper,
                opts.epsilon,
                self.g,
                &front,
                opts.tol_inner,
                opts.max_inner,
            )?;

            // Neighborhood guard: the bulk iterate must stay near the data.
            let mut u_dev = T::zero();
            for slice in &u.slices {
                for (i, row) in slice.outer_iter().enumerate() {
                    for &v in row.iter() {
                        u_dev = u_dev.max((v - self.g[i]).abs());
                    }
                }
            }
            if u_dev > opts.u_ball * g_sup {
                return Err(Error::NoContraction {
                    context: "bulk iterate left the onset neighborhood",
                    ratio: (u_dev / (opts.u_ball * g_sup)).as_f64(),
                    sweeps: outer,
                });
            }

            let hj = phi2(self.xgrid, self.xtf, self.g, &u, opts.hj_substeps)?;

            // Neighborhood guard: the front must stay positive and near t g.
            let mut s_dev = T::zero();
            for (k, &t) in hj.s.levels.iter().enumerate() {
                for i in 0..self.g.len() {
                    if hj.s.values[k][i] <= T::zero() {
                        return Err(Error::NoContraction {
                            context: "front iterate lost positivity",
                            ratio: f64::INFINITY,
                            sweeps: outer,
                        });
                    }
                    s_dev = s_dev.max((hj.s.values[k][i] - t * self.g[i]).abs() / t);
                }
            }
            if s_dev > opts.s_ball * g_sup {
                return Err(Error::NoContraction {
                    context: "front iterate left the onset neighborhood",
                    ratio: (s_dev / (opts.s_ball * g_sup)).as_f64(),
                    sweeps: outer,
                });
            }

            let diff = surface_sup_diff(&hj.s, &s);
            let ratio = prev_diff.map(|d| diff / d);
            records.push(OuterRecord {
                iteration: outer,
                s_diff: diff,
                ratio,
                inner_iterations: inner.iterations,
            });
            if let Some(r) = ratio {
                if r >= T::one() && diff > opts.tol_outer * g_sup * T::of(10.0) {
                    return Err(Error::NoContraction {
                        context: "outer front iteration",
                        ratio: r.as_f64(),
                        sweeps: outer + 1,
                    });
                }
            }
            s = hj.s;
            grad_s = hj.grad;
            if diff <= opts.tol_outer * g_sup {
                converged = true;
                break;
            }
            prev_diff = Some(diff);
        }
        if !converged {
            let last = records.last().map(|r| r.s_diff.as_f64()).unwrap_or(f64::NAN);
            return Err(Error::NoContraction {
                context: "outer front iteration",
                ratio: last,
                sweeps: opts.max_outer,
            });
        }

        // Re-solve the bulk against the converged front so the returned pair
        // satisfies both maps to inner tolerance.
        let front = build_front_data(self.xgrid, self.xtf, &s)?;
        let (u, inner) = phi1(
            &gen,
            opts.stepper,
            opts.epsilon,
            self.g,
            &front,
            opts.tol_inner,
            opts.max_inner,
        )?;
        let final_iter = records.len();
        records.push(OuterRecord {
            iteration: final_iter,
            s_diff: T::zero(),
            ratio: None,
            inner_iterations: inner.iterations,
        });

        let decomposition = self.decompose(&gen, &front, &u)?;
        Ok(CoupledState {
            u,
            s,
            grad_s,
            decomposition,
            log: IterationLog {
                records,
                retries,
                horizon: *levels.last().unwrap(),
            },
        })
    }

    /// Split the converged bulk into boundary lift, flux lift, and remainder
    /// and record their per-level sup norms.
    fn decompose(
        &self,
        gen: &Generator<T>,
        front: &FrontData<T>,
        u: &StripField<T>,
    ) -> Result<Decomposition<T>> {
        let (x_len, ny) = (self.xgrid.x_len(), self.ygrid.ny());
        let zero_f = Array2::zeros((x_len, ny));
        let zero_b = Array1::zeros(x_len);
        let traces = u.trace_top();
        let mut data_lift = Vec::with_capacity(front.levels.len());
        let mut flux_lift = Vec::with_capacity(front.levels.len());
        let mut remainder = Vec::with_capacity(front.levels.len());
        let sup = |a: &Array2<T>| a.iter().fold(T::zero(), |acc, &v| acc.max(v.abs()));
        for (k, &t) in front.levels.iter().enumerate() {
            let tg = spectral_grad(self.xgrid, self.xtf, &traces[k]);
            let h_k = build_h(self.opts.epsilon, front, k, &traces[k], &tg);
            let rd = gen.solve(T::zero(), t, &zero_f, self.g, &zero_b)?;
            let rn = gen.solve(T::zero(), t, &zero_f, &zero_b, &h_k)?;
            let mut v = u.slices[k].clone();
            for ((vv, &rdv), &rnv) in v.iter_mut().zip(rd.iter()).zip(rn.iter()) {
                *vv -= rdv + rnv;
            }
            data_lift.push(sup(&rd));
            flux_lift.push(sup(&rn));
            remainder.push(sup(&v));
        }
        Ok(Decomposition {
            levels: front.levels.clone(),
            data_lift,
            flux_lift,
            remainder,
        })
    }
}

/// Solve the coupled problem on the given time levels. Starts the front at
/// `t g`, alternates the bulk and front maps, and halves the horizon (up to
/// `max_retries` times) whenever an iteration stops contracting or a guard
/// trips.
pub fn solve_fbp<T: Real>(
    xgrid: &XGrid<T>,
    ygrid: &YGrid<T>,
    xtf: &XTransform<T>,
    g: &Array1<T>,
    levels: &[T],
    opts: &CouplingOptions<T>,
) -> Result<CoupledState<T>> {
    if g.len() != xgrid.x_len() {
        return Err(Error::Invalid(format!(
            "data has {} samples, grid has {}",
            g.len(),
            xgrid.x_len()
        )));
    }
    if g.iter().any(|&v| v <= T::zero()) {
        return Err(Error::Invalid(
            "boundary data must be strictly positive".into(),
        ));
    }
    if levels.len() < 2 {
        return Err(Error::Invalid("need at least two time levels".into()));
    }
    let pou = if is_constant(g) {
        None
    } else {
        Some(PartitionOfUnity::build(xgrid, g, T::of(0.1))?)
    };
    let attempt = Attempt {
        xgrid,
        ygrid,
        xtf,
        g,
        opts,
        pou,
    };

    let mut lv: Vec<T> = levels.to_vec();
    let mut retries = 0usize;
    loop {
        match attempt.run(&lv, retries) {
            Ok(state) => return Ok(state),
            Err(e) if is_divergence(&e) => {
                if retries >= opts.max_retries {
                    let ratio = match &e {
                        Error::NoContraction { ratio, .. } => *ratio,
                        _ => f64::NAN,
                    };
                    return Err(Error::OuterDiverged { retries, ratio });
                }
                let t_half = *lv.last().unwrap() * T::of(0.5);
                let shorter: Vec<T> = lv.iter().copied().filter(|&t| t <= t_half).collect();
                if shorter.len() < MIN_LEVELS {
                    let ratio = match &e {
                        Error::NoContraction { ratio, .. } => *ratio,
                        _ => f64::NAN,
                    };
                    return Err(Error::OuterDiverged { retries, ratio });
                }
                lv = shorter;
                retries += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

/// The drift-family boundary lift agrees with the perturbation identity
/// `R~ = R + L~^{-1}[(y/t) d_y R]`, where `R` is the plain-family lift of the
/// same data; exposed for the verification suite.
pub fn lift_via_identity<T: Real>(
    gen_plain: &Generator<T>,
    gen_drift: &Generator<T>,
    t: T,
    g: &Array1<T>,
    h: &Array1<T>,
) -> Result<Array2<T>> {
    let (x_len, ny) = (gen_plain.xgrid.x_len(), gen_plain.ygrid.ny());
    let zero_f = Array2::zeros((x_len, ny));
    let zero_b = Array1::zeros(x_len);
    let w = gen_plain.solve(T::zero(), t, &zero_f, g, h)?;
    let inv_2h = T::one() / (gen_plain.ygrid.h + gen_plain.ygrid.h);
    let mut load = Array2::zeros((x_len, ny));
    for j in 1..ny - 1 {
        let y = gen_plain.ygrid.nodes[j];
        for i in 0..x_len {
            load[(i, j)] = y / t * (w[(i, j + 1)] - w[(i, j - 1)]) * inv_2h;
        }
    }
    let z = gen_drift.solve(T::zero(), t, &load, &zero_b, &zero_b)?;
    Ok(w + z)
}
