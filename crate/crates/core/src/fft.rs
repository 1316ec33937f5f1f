//! Periodic lateral transforms and trigonometric interpolation.
//!
//! Mode layout follows the FFT bin order of [`crate::grids::XGrid::modes`],
//! so "apply a multiplier per mode" is a plain zip. Forward transforms carry
//! the 1/N normalization; inverse transforms are plain synthesis, so mode
//! coefficients are physical amplitudes.

use crate::float::Real;
use crate::grids::XGrid;
use ndarray::{Array1, Array2};
use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

pub struct XTransform<T: Real> {
    n_dim: usize,
    nx: usize,
    fwd: Arc<dyn Fft<T>>,
    inv: Arc<dyn Fft<T>>,
}

impl<T: Real> XTransform<T> {
    pub fn new(grid: &XGrid<T>) -> Self {
        let mut planner = FftPlanner::new();
        XTransform {
            n_dim: grid.n_dim,
            nx: grid.nx,
            fwd: planner.plan_fft_forward(grid.nx),
            inv: planner.plan_fft_inverse(grid.nx),
        }
    }

    fn x_len(&self) -> usize {
        self.nx.pow(self.n_dim as u32)
    }

    /// Forward transform of a lateral profile (one value per flat point).
    pub fn forward_profile(&self, f: &Array1<T>) -> Array1<Complex<T>> {
        let mut buf: Vec<Complex<T>> = f.iter().map(|&v| v.complex()).collect();
        self.transform_flat(&mut buf, true);
        Array1::from_vec(buf)
    }

    /// Inverse transform of lateral mode coefficients; imaginary residue from
    /// round-off is dropped.
    pub fn inverse_profile(&self, c: &Array1<Complex<T>>) -> Array1<T> {
        let mut buf: Vec<Complex<T>> = c.to_vec();
        self.transform_flat(&mut buf, false);
        Array1::from_iter(buf.into_iter().map(|z| z.re))
    }

    /// Forward transform of a strip slice, lateral direction per transverse
    /// node: (x_flat, y) -> (mode_flat, y).
    pub fn forward_slice(&self, f: &Array2<T>) -> Array2<Complex<T>> {
        let (x_len, ny) = f.dim();
        debug_assert_eq!(x_len, self.x_len());
        let mut out = Array2::zeros((x_len, ny));
        let mut buf: Vec<Complex<T>> = vec![Complex::new(T::zero(), T::zero()); x_len];
        for j in 0..ny {
            for i in 0..x_len {
                buf[i] = f[(i, j)].complex();
            }
            self.transform_flat(&mut buf, true);
            for i in 0..x_len {
                out[(i, j)] = buf[i];
            }
        }
        out
    }

    pub fn inverse_slice(&self, c: &Array2<Complex<T>>) -> Array2<T> {
        let (x_len, ny) = c.dim();
        debug_assert_eq!(x_len, self.x_len());
        let mut out = Array2::zeros((x_len, ny));
        let mut buf: Vec<Complex<T>> = vec![Complex::new(T::zero(), T::zero()); x_len];
        for j in 0..ny {
            for i in 0..x_len {
                buf[i] = c[(i, j)];
            }
            self.transform_flat(&mut buf, false);
            for i in 0..x_len {
                out[(i, j)] = buf[i].re;
            }
        }
        out
    }

    /// In-place flat transform: one FFT for n_dim = 1, row/column passes for
    /// n_dim = 2. Forward includes the 1/total normalization.
    fn transform_flat(&self, buf: &mut [Complex<T>], forward: bool) {
        let nx = self.nx;
        let plan = if forward { &self.fwd } else { &self.inv };
        if self.n_dim == 1 {
            plan.process(buf);
        } else {
            // rows (contiguous)
            for r in 0..nx {
                plan.process(&mut buf[r * nx..(r + 1) * nx]);
            }
            // columns (gather/scatter)
            let mut col: Vec<Complex<T>> = vec![Complex::new(T::zero(), T::zero()); nx];
            for c in 0..nx {
                for r in 0..nx {
                    col[r] = buf[r * nx + c];
                }
                plan.process(&mut col);
                for r in 0..nx {
                    buf[r * nx + c] = col[r];
                }
            }
        }
        if forward {
            let scale = T::one() / T::of_usize(buf.len());
            for z in buf.iter_mut() {
                *z = *z * scale;
            }
        }
    }
}

/// Spectral lateral gradient of a periodic profile: multiply mode `k` by
/// `i k_axis` and synthesize. The unpaired Nyquist mode is dropped for odd
/// derivatives (its contribution has no real-valued derivative on the grid).
pub fn spectral_grad<T: Real>(grid: &XGrid<T>, xf: &XTransform<T>, f: &Array1<T>) -> Vec<[T; 2]> {
    let fhat = xf.forward_profile(f);
    let nyquist = -((grid.nx / 2) as i64);
    let mut out = vec![[T::zero(); 2]; grid.x_len()];
    for axis in 0..grid.n_dim {
        let mut ghat = fhat.clone();
        for (z, m) in ghat.iter_mut().zip(grid.modes.iter()) {
            let k = if m.index[axis] == nyquist {
                T::zero()
            } else {
                m.k[axis]
            };
            *z = Complex::new(-z.im * k, z.re * k);
        }
        let g = xf.inverse_profile(&ghat);
        for (o, v) in out.iter_mut().zip(g.iter()) {
            o[axis] = *v;
        }
    }
    out
}

/// Spectral Laplacian of a periodic profile: multiply each mode by `-|k|^2`.
pub fn spectral_lap<T: Real>(grid: &XGrid<T>, xf: &XTransform<T>, f: &Array1<T>) -> Array1<T> {
    let mut fhat = xf.forward_profile(f);
    for (z, m) in fhat.iter_mut().zip(grid.modes.iter()) {
        *z = *z * (-m.knorm * m.knorm);
    }
    xf.inverse_profile(&fhat)
}

/// Trigonometric interpolant of a real periodic grid function; evaluates the
/// synthesized series (and its gradient) at arbitrary points. Spectrally
/// accurate on smooth data, which the flow-map inversion relies on.
#[derive(Clone, Debug)]
pub struct TrigInterp<T: Real> {
    /// (k vector, coefficient) per mode, from a forward transform.
    terms: Vec<([T; 2], Complex<T>)>,
}

impl<T: Real> TrigInterp<T> {
    pub fn new(grid: &XGrid<T>, xf: &XTransform<T>, samples: &Array1<T>) -> Self {
        let coeffs = xf.forward_profile(samples);
        let terms = grid
            .modes
            .iter()
            .zip(coeffs.iter())
            .filter(|(_, c)| c.norm_sqr() > T::zero())
            .map(|(m, c)| (m.k, *c))
            .collect();
        TrigInterp { terms }
    }

    pub fn eval(&self, x: [T; 2]) -> T {
        let mut acc = T::zero();
        for (k, c) in &self.terms {
            let arg = k[0] * x[0] + k[1] * x[1];
            let (s, co) = (arg.sin(), arg.cos());
            // Re(c * e^{i arg})
            acc += c.re * co - c.im * s;
        }
        acc
    }

    /// Value and spatial gradient in one pass.
    pub fn eval_grad(&self, x: [T; 2]) -> (T, [T; 2]) {
        let mut v = T::zero();
        let mut g = [T::zero(); 2];
        for (k, c) in &self.terms {
            let arg = k[0] * x[0] + k[1] * x[1];
            let (s, co) = (arg.sin(), arg.cos());
            v += c.re * co - c.im * s;
            // Re(i k c e^{i arg}) = -k (c.im cos + c.re sin)
            let d = -(c.im * co + c.re * s);
            g[0] += k[0] * d;
            g[1] += k[1] * d;
        }
        (v, g)
    }
}

/// 4-point Lagrange interpolation stencil on arbitrarily spaced abscissae
/// (used along the graded time axis). Returns sample indices with their value
/// and first-derivative weights; stencils clamp at the ends, and lists
/// shorter than four fall back to the full polynomial through all points.
pub fn lagrange4_stencil<T: Real>(ts: &[T], t: T) -> ([usize; 4], [T; 4], [T; 4]) {
    let n = ts.len();
    debug_assert!(n >= 2);
    // bracketing index
    let mut lo = 0usize;
    while lo + 2 < n && ts[lo + 1] < t {
        lo += 1;
    }
    let width = 4.min(n);
    let start = (lo as isize - 1).clamp(0, (n - width) as isize) as usize;
    let mut idx = [start; 4];
    let mut w = [T::zero(); 4];
    let mut dw = [T::zero(); 4];
    for j in 0..width {
        idx[j] = start + j;
        let xj = ts[start + j];
        let mut lj = T::one();
        for i in 0..width {
            if i != j {
                lj = lj * (t - ts[start + i]) / (xj - ts[start + i]);
            }
        }
        w[j] = lj;
        // derivative of the Lagrange basis: sum over holes
        let mut acc = T::zero();
        for hole in 0..width {
            if hole == j {
                continue;
            }
            let mut prod = T::one() / (xj - ts[start + hole]);
            for i in 0..width {
                if i != j && i != hole {
                    prod = prod * (t - ts[start + i]) / (xj - ts[start + i]);
                }
            }
            acc += prod;
        }
        dw[j] = acc;
    }
    (idx, w, dw)
}
