//! Discretization of the fixed strip: a periodic lateral box, a uniform
//! transverse grid on [0, 1] with both endpoints stored, and a graded time
//! grid clipped away from the degenerate origin.

use crate::config::SolverConfig;
use crate::error::{Error, Result};
use crate::float::Real;
use ndarray::{Array1, Array2};

/// One lateral mode of the periodic box: its integer index per axis, the
/// physical wavenumbers, and the eigenvalue of the (negative) second-order
/// periodic difference Laplacian, which the mode-space solvers diagonalize.
#[derive(Clone, Debug)]
pub struct Mode<T> {
    pub index: [i64; 2],
    pub k: [T; 2],
    /// |k| of the physical wavenumber vector.
    pub knorm: T,
    /// Eigenvalue of -lap_h on this mode: sum over axes of (2-2cos(k dx))/dx^2.
    pub lap_eig: T,
}

/// Periodic lateral grid. Positions and modes are stored flattened
/// (row-major over axes) so fields are 2-d arrays regardless of n_dim.
#[derive(Clone, Debug)]
pub struct XGrid<T> {
    pub n_dim: usize,
    pub nx: usize,
    pub len: T,
    pub dx: T,
    pub points: Vec<[T; 2]>,
    pub modes: Vec<Mode<T>>,
}

impl<T: Real> XGrid<T> {
    pub fn new(n_dim: usize, nx: usize, len: T) -> Result<Self> {
        if !(n_dim == 1 || n_dim == 2) || !nx.is_power_of_two() || nx < 4 {
            return Err(Error::Config(format!(
                "lateral grid needs n_dim in {{1,2}} and nx a power of two >= 4 (got {n_dim}, {nx})"
            )));
        }
        let dx = len / T::of_usize(nx);
        let x_len = nx.pow(n_dim as u32);
        let mut points = Vec::with_capacity(x_len);
        let mut modes = Vec::with_capacity(x_len);
        let half = (nx / 2) as i64;
        let two_pi_over_len = T::TAU() / len;
        for flat in 0..x_len {
            let (i1, i2) = if n_dim == 1 {
                (flat, 0)
            } else {
                (flat / nx, flat % nx)
            };
            points.push([T::of_usize(i1) * dx, T::of_usize(i2) * dx]);
            // FFT bin j corresponds to signed index j - nx for j >= nx/2.
            let signed = |i: usize| -> i64 {
                let i = i as i64;
                if i >= half {
                    i - nx as i64
                } else {
                    i
                }
            };
            let idx = [signed(i1), if n_dim == 2 { signed(i2) } else { 0 }];
            let k = [
                two_pi_over_len * T::of(idx[0] as f64),
                two_pi_over_len * T::of(idx[1] as f64),
            ];
            let eig = |kk: T| (T::of(2.0) - T::of(2.0) * (kk * dx).cos()) / (dx * dx);
            let lap_eig = if n_dim == 1 {
                eig(k[0])
            } else {
                eig(k[0]) + eig(k[1])
            };
            modes.push(Mode {
                index: idx,
                k,
                knorm: (k[0] * k[0] + k[1] * k[1]).sqrt(),
                lap_eig,
            });
        }
        Ok(XGrid {
            n_dim,
            nx,
            len,
            dx,
            points,
            modes,
        })
    }

    pub fn x_len(&self) -> usize {
        self.points.len()
    }

    /// Flat index of the lateral neighbor shifted by one cell along `axis`
    /// (periodic wrap).
    pub fn neighbor(&self, flat: usize, axis: usize, step: i64) -> usize {
        let nx = self.nx as i64;
        if self.n_dim == 1 {
            (((flat as i64 + step).rem_euclid(nx)) as usize) % self.x_len()
        } else {
            let (i1, i2) = ((flat / self.nx) as i64, (flat % self.nx) as i64);
            let (j1, j2) = if axis == 0 {
                ((i1 + step).rem_euclid(nx), i2)
            } else {
                (i1, (i2 + step).rem_euclid(nx))
            };
            (j1 as usize) * self.nx + j2 as usize
        }
    }

    /// Apply the second-order periodic difference Laplacian to a lateral
    /// profile (one value per flat point).
    pub fn lap_h(&self, f: &Array1<T>) -> Array1<T> {
        let mut out = Array1::zeros(self.x_len());
        let inv_dx2 = T::one() / (self.dx * self.dx);
        for i in 0..self.x_len() {
            let mut acc = T::zero();
            for axis in 0..self.n_dim {
                let l = self.neighbor(i, axis, -1);
                let r = self.neighbor(i, axis, 1);
                acc += (f[l] - T::of(2.0) * f[i] + f[r]) * inv_dx2;
            }
            out[i] = acc;
        }
        out
    }

    /// Central-difference gradient of a lateral profile.
    pub fn grad_h(&self, f: &Array1<T>) -> Vec<[T; 2]> {
        let inv_2dx = T::one() / (T::of(2.0) * self.dx);
        (0..self.x_len())
            .map(|i| {
                let mut g = [T::zero(); 2];
                for (axis, gi) in g.iter_mut().enumerate().take(self.n_dim) {
                    let l = self.neighbor(i, axis, -1);
                    let r = self.neighbor(i, axis, 1);
                    *gi = (f[r] - f[l]) * inv_2dx;
                }
                g
            })
            .collect()
    }
}

/// Transverse grid: interior count m, spacing 1/(m+1), nodes 0..=m+1 stored
/// (both endpoints kept because boundary rows live there).
#[derive(Clone, Debug)]
pub struct YGrid<T> {
    pub m: usize,
    pub h: T,
    pub nodes: Vec<T>,
}

impl<T: Real> YGrid<T> {
    pub fn new(m: usize) -> Result<Self> {
        if m < 4 {
            return Err(Error::Config(format!("m must be >= 4, got {m}")));
        }
        let h = T::one() / T::of_usize(m + 1);
        let nodes = (0..=m + 1).map(|j| T::of_usize(j) * h).collect();
        Ok(YGrid { m, h, nodes })
    }

    pub fn ny(&self) -> usize {
        self.m + 2
    }
}

/// Graded time levels t_k = t_final * (k/N)^q, clipped below by t0 and
/// deduplicated, with t0 always the first stored level.
#[derive(Clone, Debug)]
pub struct TimeGrid<T> {
    pub t0: T,
    pub t_final: T,
    pub n_levels: usize,
    pub grading: T,
    pub levels: Vec<T>,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(t0: T, t_final: T, n_levels: usize, grading: T) -> Result<Self> {
        if !(t0 > T::zero() && t_final > t0 && n_levels >= 2 && grading >= T::one()) {
            return Err(Error::Config(format!(
                "time grid needs 0 < t0 < t_final, N >= 2, q >= 1 (got t0={}, T={}, N={n_levels}, q={})",
                t0.as_f64(),
                t_final.as_f64(),
                grading.as_f64()
            )));
        }
        let mut levels = vec![t0];
        for k in 1..=n_levels {
            let t = t_final * (T::of_usize(k) / T::of_usize(n_levels)).powf(grading);
            // Clipping can land a computed level within a few ulps of the
            // previous one (e.g. t_final * (k/N)^q rounding just above t0).
            // Such near-duplicates poison divided differences downstream, so
            // require a relative separation; genuine graded gaps are never
            // smaller than about q/N in relative terms.
            let prev = *levels.last().unwrap();
            if t - prev > prev * T::of(1e-9) {
                levels.push(t);
            }
        }
        // Guard against grading so coarse that everything clipped to t0.
        if levels.len() < 2 {
            return Err(Error::Config(
                "time grid collapsed to a single level; lower t0 or raise N".into(),
            ));
        }
        *levels.last_mut().unwrap() = t_final;
        Ok(TimeGrid {
            t0,
            t_final,
            n_levels,
            grading,
            levels,
        })
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// The full discretization bundle.
#[derive(Clone, Debug)]
pub struct Grids<T> {
    pub x: XGrid<T>,
    pub y: YGrid<T>,
    pub time: TimeGrid<T>,
}

pub fn make_grids<T: Real>(cfg: &SolverConfig<T>) -> Result<Grids<T>> {
    cfg.validate()?;
    Ok(Grids {
        x: XGrid::new(cfg.n_dim, cfg.nx, cfg.len)?,
        y: YGrid::new(cfg.m)?,
        time: TimeGrid::new(cfg.t0, cfg.t_final, cfg.n_levels, cfg.grading)?,
    })
}

/// Scalar field on the strip: one (x_flat, y) slice per time level.
#[derive(Clone, Debug)]
pub struct StripField<T> {
    pub levels: Vec<T>,
    pub slices: Vec<Array2<T>>,
}

impl<T: Real> StripField<T> {
    pub fn zeros(levels: &[T], x_len: usize, ny: usize) -> Self {
        StripField {
            levels: levels.to_vec(),
            slices: levels.iter().map(|_| Array2::zeros((x_len, ny))).collect(),
        }
    }

    pub fn sup(&self) -> T {
        self.slices
            .iter()
            .map(|s| s.iter().fold(T::zero(), |a, &v| a.max(v.abs())))
            .fold(T::zero(), |a, v| a.max(v))
    }

    /// Trace on the moving edge of the strip (y = 1) per level.
    pub fn trace_top(&self) -> Vec<Array1<T>> {
        self.slices
            .iter()
            .map(|s| s.column(s.ncols() - 1).to_owned())
            .collect()
    }

    /// Trace on the fixed edge (y = 0) per level.
    pub fn trace_bottom(&self) -> Vec<Array1<T>> {
        self.slices.iter().map(|s| s.column(0).to_owned()).collect()
    }
}

/// Front height and its time derivative per level, sampled on the lateral grid.
#[derive(Clone, Debug)]
pub struct SurfaceField<T> {
    pub levels: Vec<T>,
    pub values: Vec<Array1<T>>,
    pub dot_values: Vec<Array1<T>>,
}

impl<T: Real> SurfaceField<T> {
    pub fn zeros(levels: &[T], x_len: usize) -> Self {
        SurfaceField {
            levels: levels.to_vec(),
            values: levels.iter().map(|_| Array1::zeros(x_len)).collect(),
            dot_values: levels.iter().map(|_| Array1::zeros(x_len)).collect(),
        }
    }
}

/// Cubic (4-point Lagrange) interpolation of uniformly spaced samples at
/// normalized position `pos` in index units. Interior stencils are centered;
/// boundary stencils are one-sided. O(h^4) on smooth data.
pub fn cubic_interp_uniform<T: Real>(samples: &[T], pos: T) -> T {
    let n = samples.len();
    debug_assert!(n >= 4);
    let pf = pos.as_f64();
    let base_i = (pf.floor() as isize).clamp(0, n as isize - 1);
    let mut start = base_i - 1;
    start = start.clamp(0, n as isize - 4);
    let s = start as usize;
    let mut acc = T::zero();
    for j in 0..4 {
        let xj = T::of_usize(s + j);
        let mut lj = T::one();
        for i in 0..4 {
            if i != j {
                let xi = T::of_usize(s + i);
                lj = lj * (pos - xi) / (xj - xi);
            }
        }
        acc += lj * samples[s + j];
    }
    acc
}

/// Physical-domain samples of one strip slice: for each lateral point the
/// transverse coordinate is scaled by the front height.
#[derive(Clone, Debug)]
pub struct PhysicalSlice<T> {
    /// Physical transverse positions, shape (x_len, ny_out).
    pub y: Array2<T>,
    /// Field values at those positions.
    pub values: Array2<T>,
}

/// Map a strip slice to physical coordinates, resampling each column to
/// `ny_out` uniformly spaced physical positions between 0 and the local front
/// height via cubic interpolation.
pub fn to_physical<T: Real>(
    slice: &Array2<T>,
    front: &Array1<T>,
    ygrid: &YGrid<T>,
    ny_out: usize,
) -> PhysicalSlice<T> {
    let x_len = slice.nrows();
    let ny = slice.ncols();
    let mut y = Array2::zeros((x_len, ny_out));
    let mut values = Array2::zeros((x_len, ny_out));
    let mut colbuf: Vec<T> = Vec::with_capacity(ny);
    for i in 0..x_len {
        colbuf.clear();
        colbuf.extend(slice.row(i).iter().copied());
        for l in 0..ny_out {
            let frac = T::of_usize(l) / T::of_usize(ny_out - 1);
            y[(i, l)] = frac * front[i];
            // eta = frac, in index units eta/h:
            let pos = frac / ygrid.h;
            values[(i, l)] = cubic_interp_uniform(&colbuf, pos);
        }
    }
    PhysicalSlice { y, values }
}

/// Inverse of [`to_physical`]: given uniformly spaced physical samples per
/// column (covering [0, front] so the front height cancels), reconstruct the
/// strip slice on the grid's transverse nodes.
pub fn from_physical<T: Real>(phys: &PhysicalSlice<T>, ygrid: &YGrid<T>) -> Array2<T> {
    let x_len = phys.values.nrows();
    let ny_out = phys.values.ncols();
    let mut out = Array2::zeros((x_len, ygrid.ny()));
    let mut colbuf: Vec<T> = Vec::with_capacity(ny_out);
    for i in 0..x_len {
        colbuf.clear();
        colbuf.extend(phys.values.row(i).iter().copied());
        for (j, &eta) in ygrid.nodes.iter().enumerate() {
            let pos = eta * T::of_usize(ny_out - 1);
            out[(i, j)] = cubic_interp_uniform(&colbuf, pos);
        }
    }
    out
}
