//! Transverse line operators and their direct solver.
//!
//! Every per-mode or per-column solve in the strip reduces to one almost-
//! tridiagonal system over the transverse nodes: a value row at y = 0, the
//! interior stencil, and a second-order one-sided flux row at y = 1 whose
//! (n-1, n-3) entry is the only departure from tridiagonal form. The solver
//! eliminates that entry during the forward pass, so factorizations stay O(n)
//! and can be reused across right-hand sides (real or complex).

use crate::float::Real;
use crate::grids::YGrid;
use num_complex::Complex;

/// Parameters of one transverse line operator
///   L u = shift*u + mu*u - inv_tau2 * d_yy u - conv_scale * y * d_y u
/// with rows: u(0) = g and flux_scale * d_y u(1) = h (one-sided, 2nd order).
#[derive(Clone, Copy, Debug)]
pub struct YLineOp<T> {
    pub shift: T,
    pub mu: T,
    pub inv_tau2: T,
    /// Coefficient of the -y d_y convection term (1/t for the drift-corrected
    /// family, zero otherwise).
    pub conv_scale: T,
    /// Scaling of the flux row (1/t for the singular trace, 1 for the plain
    /// transverse operator).
    pub flux_scale: T,
}

impl<T: Real> YLineOp<T> {
    pub fn plain(mu: T, inv_tau2: T) -> Self {
        YLineOp {
            shift: T::zero(),
            mu,
            inv_tau2,
            conv_scale: T::zero(),
            flux_scale: T::one(),
        }
    }

    /// Band rows of the operator on `ygrid`.
    pub fn assemble(&self, ygrid: &YGrid<T>) -> Band<T> {
        let n = ygrid.ny();
        let h = ygrid.h;
        let inv_h2 = T::one() / (h * h);
        let inv_2h = T::one() / (T::of(2.0) * h);
        let mut sub = vec![T::zero(); n];
        let mut diag = vec![T::zero(); n];
        let mut sup = vec![T::zero(); n];
        diag[0] = T::one(); // value row
        for j in 1..n - 1 {
            let w = self.conv_scale * ygrid.nodes[j];
            sub[j] = -self.inv_tau2 * inv_h2 + w * inv_2h;
            diag[j] = self.shift + self.mu + T::of(2.0) * self.inv_tau2 * inv_h2;
            sup[j] = -self.inv_tau2 * inv_h2 - w * inv_2h;
        }
        // one-sided second-order flux row: (u_{n-3} - 4u_{n-2} + 3u_{n-1})/(2h)
        let extra = self.flux_scale * inv_2h;
        sub[n - 1] = -T::of(4.0) * extra;
        diag[n - 1] = T::of(3.0) * extra;
        Band {
            sub,
            diag,
            sup,
            extra,
        }
    }

    /// Interior rows of L applied to a profile; boundary entries are zero.
    pub fn apply_interior(&self, ygrid: &YGrid<T>, u: &[T]) -> Vec<T> {
        let n = ygrid.ny();
        let h = ygrid.h;
        let inv_h2 = T::one() / (h * h);
        let inv_2h = T::one() / (T::of(2.0) * h);
        let mut out = vec![T::zero(); n];
        for j in 1..n - 1 {
            let w = self.conv_scale * ygrid.nodes[j];
            out[j] = (self.shift + self.mu) * u[j]
                + self.inv_tau2 * (T::of(2.0) * u[j] - u[j - 1] - u[j + 1]) * inv_h2
                - w * (u[j + 1] - u[j - 1]) * inv_2h;
        }
        out
    }
}

/// Scaled one-sided flux trace at y = 1.
pub fn flux_top<T: Real>(ygrid: &YGrid<T>, flux_scale: T, u: &[T]) -> T {
    let n = ygrid.ny();
    flux_scale * (u[n - 3] - T::of(4.0) * u[n - 2] + T::of(3.0) * u[n - 1])
        / (T::of(2.0) * ygrid.h)
}

/// Band rows: tridiagonal plus the single (n-1, n-3) entry.
#[derive(Clone, Debug)]
pub struct Band<T> {
    pub sub: Vec<T>,
    pub diag: Vec<T>,
    pub sup: Vec<T>,
    pub extra: T,
}

impl<T: Real> Band<T> {
    pub fn factor(&self) -> BandFactor<T> {
        let n = self.diag.len();
        debug_assert!(n >= 5, "need at least 5 transverse nodes");
        let mut cp = vec![T::zero(); n];
        let mut invp = vec![T::zero(); n];
        invp[0] = T::one() / self.diag[0];
        cp[0] = self.sup[0] * invp[0];
        for i in 1..=n - 2 {
            let m = self.diag[i] - self.sub[i] * cp[i - 1];
            invp[i] = T::one() / m;
            cp[i] = self.sup[i] * invp[i];
        }
        let alpha = self.sub[n - 1] - self.extra * cp[n - 3];
        let inv_last = T::one() / (self.diag[n - 1] - alpha * cp[n - 2]);
        BandFactor {
            sub: self.sub.clone(),
            cp,
            invp,
            extra: self.extra,
            alpha,
            inv_last,
        }
    }
}

/// Reusable factorization of a [`Band`] matrix.
#[derive(Clone, Debug)]
pub struct BandFactor<T> {
    sub: Vec<T>,
    cp: Vec<T>,
    invp: Vec<T>,
    extra: T,
    alpha: T,
    inv_last: T,
}

impl<T: Real> BandFactor<T> {
    pub fn n(&self) -> usize {
        self.cp.len()
    }

    /// Solve in place. `rhs[0]` must hold the value datum and `rhs[n-1]` the
    /// flux datum; interior entries hold the interior right-hand side.
    pub fn solve(&self, rhs: &mut [T]) {
        let n = self.n();
        rhs[0] = rhs[0] * self.invp[0];
        for i in 1..=n - 2 {
            rhs[i] = (rhs[i] - self.sub[i] * rhs[i - 1]) * self.invp[i];
        }
        rhs[n - 1] = (rhs[n - 1] - self.extra * rhs[n - 3] - self.alpha * rhs[n - 2])
            * self.inv_last;
        for i in (0..=n - 2).rev() {
            rhs[i] = rhs[i] - self.cp[i] * rhs[i + 1];
        }
    }

    /// Complex right-hand side against the same real factorization.
    pub fn solve_complex(&self, rhs: &mut [Complex<T>]) {
        let n = self.n();
        let mut re = vec![T::zero(); n];
        let mut im = vec![T::zero(); n];
        for i in 0..n {
            re[i] = rhs[i].re;
            im[i] = rhs[i].im;
        }
        self.solve(&mut re);
        self.solve(&mut im);
        for i in 0..n {
            rhs[i] = Complex::new(re[i], im[i]);
        }
    }
}
