//! Operator-valued symbols of the constant-coefficient transverse problem.
//!
//! Freezing the lateral operator at a constant `c0` and taking a Fourier mode
//! `e^{i xi . x}` reduces the strip problem to a transverse two-point problem
//! whose solution operators have closed forms:
//!
//! * `a(q, y) = cosh(q(1-y)) / cosh(q)` — propagates the bottom value datum,
//! * `b(q, y) = sinh(q y) / (q cosh q)` — propagates the top flux datum,
//! * `(q^2 + C)^{-1}` — the transverse resolvent for the interior load,
//!
//! where `q = t c0 |xi|` carries the parabolic dilation and `C = -d_yy` with a
//! zero value at `y = 0` and zero flux at `y = 1`. The closed forms are kept
//! independent of the band solver so each can serve as an oracle for the
//! other. All evaluations are overflow-safe for large `q`.

use crate::band::{Band, BandFactor, YLineOp};
use crate::fit;
use crate::float::Real;
use crate::grids::YGrid;

/// Bottom-value symbol `cosh(q(1-y))/cosh(q)`, evaluated without overflow.
pub fn symbol_a<T: Real>(q: T, y: T) -> T {
    let q = q.abs();
    let one = T::one();
    let two = T::of(2.0);
    // cosh(q(1-y))/cosh(q) = e^{-qy} (1 + e^{-2q(1-y)}) / (1 + e^{-2q})
    let num = (-q * y).exp() * (one + (-two * q * (one - y)).exp());
    num / (one + (-two * q).exp())
}

/// Top-flux symbol `sinh(q y)/(q cosh q)`, evaluated without overflow; the
/// removable singularity at `q = 0` is handled by a series.
pub fn symbol_b<T: Real>(q: T, y: T) -> T {
    let q = q.abs();
    let one = T::one();
    let two = T::of(2.0);
    if q < T::of(1e-4) {
        // sinh(qy)/(q cosh q) = y (1 + q^2 (y^2 - 3)/6 + O(q^4))
        return y * (one + q * q * (y * y - T::of(3.0)) / T::of(6.0));
    }
    // e^{-q(1-y)} (1 - e^{-2qy}) / (q (1 + e^{-2q}))
    (-q * (one - y)).exp() * (one - (-two * q * y).exp()) / (q * (one + (-two * q).exp()))
}

/// Logarithmic `q`-derivative factor: `d_q a = a * symbol_d`.
pub fn symbol_d<T: Real>(q: T, y: T) -> T {
    let q = q.abs();
    let one = T::one();
    (one - y) * (q * (one - y)).tanh() - q.tanh()
}

/// Discrete transverse operator `C = -d_yy` with a value row at `y = 0` and a
/// one-sided flux row at `y = 1`.
pub struct OperatorC<T> {
    pub ygrid: YGrid<T>,
}

impl<T: Real> OperatorC<T> {
    pub fn new(m: usize) -> crate::Result<Self> {
        Ok(OperatorC {
            ygrid: YGrid::new(m)?,
        })
    }

    fn band(&self, q2: T) -> Band<T> {
        YLineOp::plain(q2, T::one()).assemble(&self.ygrid)
    }

    /// Factor `(q^2 + C)` once for reuse across right-hand sides.
    pub fn resolvent_factor(&self, q2: T) -> BandFactor<T> {
        self.band(q2).factor()
    }

    /// Solve `(q^2 + C) u = f` with homogeneous boundary rows. Only interior
    /// entries of `f` are read.
    pub fn resolvent_solve(&self, q2: T, f: &[T]) -> Vec<T> {
        let n = self.ygrid.ny();
        assert_eq!(f.len(), n);
        let mut rhs = f.to_vec();
        rhs[0] = T::zero();
        rhs[n - 1] = T::zero();
        self.resolvent_factor(q2).solve(&mut rhs);
        rhs
    }

    /// Interior action of `C` on a profile (boundary entries zero).
    pub fn apply(&self, u: &[T]) -> Vec<T> {
        YLineOp::plain(T::zero(), T::one()).apply_interior(&self.ygrid, u)
    }

    /// Reduced `m x m` tridiagonal matrix acting on interior nodes after the
    /// two boundary rows are eliminated. Returns `(sub, diag, sup)` with
    /// `sub[0]` and `sup[m-1]` unused.
    pub fn reduced_matrix(&self) -> (Vec<T>, Vec<T>, Vec<T>) {
        let m = self.ygrid.m;
        let h = self.ygrid.h;
        let inv_h2 = T::one() / (h * h);
        let two = T::of(2.0);
        let mut sub = vec![-inv_h2; m];
        let mut diag = vec![two * inv_h2; m];
        let mut sup = vec![-inv_h2; m];
        sub[0] = T::zero();
        sup[m - 1] = T::zero();
        // flux row eliminates the ghost value: u_{m+1} = (4 u_m - u_{m-1})/3,
        // turning the last interior row into (2/(3h^2)) (u_m - u_{m-1}).
        let c = two / (T::of(3.0) * h * h);
        sub[m - 1] = -c;
        diag[m - 1] = c;
        (sub, diag, sup)
    }

    /// Symmetric tridiagonal similar to the reduced matrix (diagonal scaling).
    /// Returns `(diag, offdiag)` with `offdiag.len() == m - 1`.
    pub fn reduced_symmetrized(&self) -> (Vec<T>, Vec<T>) {
        let (sub, diag, sup) = self.reduced_matrix();
        let m = diag.len();
        let mut off = vec![T::zero(); m - 1];
        for i in 0..m - 1 {
            let prod = sup[i] * sub[i + 1];
            debug_assert!(prod > T::zero(), "off-diagonal signs must agree");
            off[i] = -prod.sqrt();
        }
        (diag, off)
    }

    /// Number of eigenvalues of the symmetrized reduced matrix strictly below
    /// `x` (Sturm sequence count).
    pub fn eigen_count_below(&self, x: T) -> usize {
        let (diag, off) = self.reduced_symmetrized();
        let mut count = 0usize;
        let mut p = T::one();
        let tiny = T::of(1e-300);
        for i in 0..diag.len() {
            let off2 = if i == 0 { T::zero() } else { off[i - 1] * off[i - 1] };
            p = diag[i] - x - off2 / p;
            if p == T::zero() {
                p = tiny;
            }
            if p < T::zero() {
                count += 1;
            }
        }
        count
    }

    /// Smallest eigenvalue of the reduced matrix by Sturm bisection.
    pub fn smallest_eigenvalue(&self) -> T {
        let (diag, off) = self.reduced_symmetrized();
        // Gershgorin bounds
        let mut hi = T::zero();
        let mut lo = T::zero();
        for i in 0..diag.len() {
            let mut r = T::zero();
            if i > 0 {
                r += off[i - 1].abs();
            }
            if i < off.len() {
                r += off[i].abs();
            }
            hi = hi.max(diag[i] + r);
            lo = lo.min(diag[i] - r);
        }
        for _ in 0..200 {
            let mid = (lo + hi) / T::of(2.0);
            if self.eigen_count_below(mid) == 0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= T::of(1e-13) * hi.abs().max(T::one()) {
                break;
            }
        }
        (lo + hi) / T::of(2.0)
    }

    /// `max` row sum of `|(q^2 + C)^{-1}|` over interior nodes, computed by
    /// solving against every interior unit load.
    pub fn resolvent_inf_norm(&self, q2: T) -> T {
        let n = self.ygrid.ny();
        let factor = self.resolvent_factor(q2);
        let mut row_sum = vec![T::zero(); n];
        let mut rhs = vec![T::zero(); n];
        for j in 1..n - 1 {
            rhs.iter_mut().for_each(|v| *v = T::zero());
            rhs[j] = T::one();
            factor.solve(&mut rhs);
            for (i, rs) in row_sum.iter_mut().enumerate().take(n - 1).skip(1) {
                *rs += rhs[i].abs();
            }
        }
        row_sum
            .into_iter()
            .fold(T::zero(), |acc, v| acc.max(v))
    }
}

/// Which constant-coefficient solution operator a dilated evaluation targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SymbolKind {
    /// Interior load: `(t c0)^2 (q^2 + C)^{-1}` at `q = t c0 |xi|`.
    Resolvent,
    /// Bottom value: `a(q, y)` at `q = t c0 |xi|`.
    BottomValue,
    /// Top flux: `t b(q, y)` at `q = t c0 |xi|`.
    TopFlux,
}

/// Apply one dilated solution operator for the mode `|xi| = xi_norm` at time
/// `t` with frozen coefficient `c0`. For [`SymbolKind::Resolvent`] the full
/// profile `data` is consumed; for the boundary kinds only `data[0]` is read
/// (the scalar datum) and the closed-form symbol is sampled on the grid.
pub fn dilated_apply<T: Real>(
    kind: SymbolKind,
    t: T,
    c0: T,
    xi_norm: T,
    op: &OperatorC<T>,
    data: &[T],
) -> Vec<T> {
    let tau = t * c0;
    let q = tau * xi_norm;
    match kind {
        SymbolKind::Resolvent => {
            let mut u = op.resolvent_solve(q * q, data);
            let s = tau * tau;
            u.iter_mut().for_each(|v| *v *= s);
            u
        }
        SymbolKind::BottomValue => op
            .ygrid
            .nodes
            .iter()
            .map(|&y| symbol_a(q, y) * data[0])
            .collect(),
        SymbolKind::TopFlux => op
            .ygrid
            .nodes
            .iter()
            .map(|&y| t * symbol_b(q, y) * data[0])
            .collect(),
    }
}

/// Discretization-error report for the two defining identities of the
/// boundary symbols at frequency `q` and transverse spacing `h`:
/// `d_y b(q, .) = a(q, 1 - .)` and `d_yy a = q^2 a`, both measured with
/// second-order differences on the grid.
pub struct SymbolIdentityErrors<T> {
    pub err_flux: T,
    pub err_value: T,
}

pub fn symbol_identity_errors<T: Real>(q: T, ygrid: &YGrid<T>) -> SymbolIdentityErrors<T> {
    let h = ygrid.h;
    let n = ygrid.ny();
    let two = T::of(2.0);
    let mut err_flux = T::zero();
    let mut err_value = T::zero();
    for j in 1..n - 1 {
        let y = ygrid.nodes[j];
        let db = (symbol_b(q, y + h) - symbol_b(q, y - h)) / (two * h);
        err_flux = err_flux.max((db - symbol_a(q, T::one() - y)).abs());
        let dda = (symbol_a(q, y + h) - two * symbol_a(q, y) + symbol_a(q, y - h)) / (h * h);
        err_value = err_value.max((dda - q * q * symbol_a(q, y)).abs());
    }
    SymbolIdentityErrors {
        err_flux,
        err_value,
    }
}

/// Estimates of the symbol-class bounds at frequency `q`: the sup of
/// `|d_q a(q, .)|`, where that sup is attained, and the resolvent norm.
pub struct SymbolClassEstimate<T> {
    pub q: T,
    pub sup_dq_a: T,
    pub argmax_y: T,
    pub resolvent_norm: T,
}

/// Scan `|d_q a| = |a d|` on a fine transverse grid (resolving the boundary
/// layer of width `1/q`) and measure the discrete resolvent norm at `q`.
pub fn symbol_class_estimate<T: Real>(q: T, op: &OperatorC<T>) -> SymbolClassEstimate<T> {
    let fine = (q.as_f64() * 40.0).max(2000.0).min(400_000.0) as usize;
    let mut sup = T::zero();
    let mut arg = T::zero();
    for j in 0..=fine {
        let y = T::of_usize(j) / T::of_usize(fine);
        let v = (symbol_a(q, y) * symbol_d(q, y)).abs();
        if v > sup {
            sup = v;
            arg = y;
        }
    }
    SymbolClassEstimate {
        q,
        sup_dq_a: sup,
        argmax_y: arg,
        resolvent_norm: op.resolvent_inf_norm(q * q),
    }
}

/// Fitted log-log decay rate of the resolvent norm over the given
/// frequencies.
pub fn resolvent_decay_slope<T: Real>(op: &OperatorC<T>, qs: &[T]) -> T {
    let norms: Vec<T> = qs.iter().map(|&q| op.resolvent_inf_norm(q * q)).collect();
    fit::loglog_slope(qs, &norms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn frozen_symbol_values() {
        // cosh(0)/cosh(2) and sinh(1)/cosh(1), precomputed independently.
        assert!((symbol_a(2.0f64, 1.0) - 0.265_802_228_834_079_7).abs() < 1e-15);
        assert!((symbol_b(1.0f64, 1.0) - 0.761_594_155_955_764_9).abs() < 1e-15);
        for q in [0.0f64, 0.5, 3.0, 80.0, 1e6] {
            assert_eq!(symbol_a(q, 0.0), 1.0, "a(q,0) at q={q}");
            assert_eq!(symbol_b(q, 0.0), 0.0, "b(q,0) at q={q}");
        }
    }

    #[test]
    fn large_frequency_stays_finite() {
        for q in [1e3f64, 1e6, 1e12] {
            for y in [0.0f64, 0.25, 0.5, 1.0] {
                assert!(symbol_a(q, y).is_finite());
                assert!(symbol_b(q, y).is_finite());
                assert!(symbol_a(q, y) >= 0.0 && symbol_a(q, y) <= 1.0);
            }
        }
        assert!(symbol_a(1e6, 0.5) < 1e-300); // deep in the decay regime
    }

    #[test]
    fn small_frequency_series_is_continuous() {
        for y in [0.1f64, 0.5, 0.9, 1.0] {
            let below = symbol_b(1e-4 - 1e-9, y);
            let above = symbol_b(1e-4 + 1e-9, y);
            assert!((below - above).abs() < 1e-12, "y={y}");
            assert!((symbol_b(0.0, y) - y).abs() < 1e-15);
        }
    }

    #[test]
    fn flux_identity_second_order() {
        // d_y b(q, y) = a(q, 1-y); centered differences converge at rate 2
        // with the constant controlled by q^2/6.
        for q in [0.0, 1.0, 2.0, 10.0] {
            let y = YGrid::<f64>::new(30).unwrap();
            let errs = symbol_identity_errors(q, &y);
            let h = y.h;
            assert!(
                errs.err_flux <= (q * q / 6.0 + 1.0) * h * h,
                "q={q} err={}",
                errs.err_flux
            );
        }
    }

    #[test]
    fn value_identity_second_order() {
        for q in [0.0, 1.0, 2.0, 10.0] {
            let y = YGrid::<f64>::new(30).unwrap();
            let errs = symbol_identity_errors(q, &y);
            let h = y.h;
            assert!(
                errs.err_value <= (q.powi(4) / 12.0 + 1.0) * h * h,
                "q={q} err={}",
                errs.err_value
            );
        }
    }

    #[test]
    fn frequency_derivative_matches_difference_quotient() {
        for q in [0.5f64, 2.0, 20.0] {
            let dq = 1e-5 * (1.0 + q);
            for y in [0.05f64, 0.3, 0.7, 1.0] {
                let fd = (symbol_a(q + dq, y) - symbol_a(q - dq, y)) / (2.0 * dq);
                let closed = symbol_a(q, y) * symbol_d(q, y);
                assert!(
                    (fd - closed).abs() < 1e-7 * (1.0 + closed.abs()),
                    "q={q} y={y}: {fd} vs {closed}"
                );
            }
        }
    }

    #[test]
    fn tanh_tail_bound() {
        // |tanh s - 1| <= 2 e^{-2s}: the constant behind the symbol-class
        // estimates at large frequency.
        // the additive 1e-15 absorbs the rounding of tanh near 1, where the
        // analytic margin 2 e^{-4s} drops below one ulp
        let mut s = 0.0f64;
        while s < 40.0 {
            assert!(
                (s.tanh() - 1.0).abs() <= 2.0 * (-2.0 * s).exp() + 1e-15,
                "s={s}"
            );
            s += 0.37;
        }
    }

    #[test]
    fn resolvent_zero_frequency_exact_on_quadratic() {
        let op = OperatorC::<f64>::new(14).unwrap();
        let n = op.ygrid.ny();
        let u = op.resolvent_solve(0.0, &vec![1.0; n]);
        for (j, &y) in op.ygrid.nodes.iter().enumerate() {
            assert!((u[j] - (y - 0.5 * y * y)).abs() < 1e-12, "node {j}");
        }
    }

    #[test]
    fn resolvent_unit_frequency_matches_closed_form() {
        // (1 + C) u = 1 with u(0)=0, u'(1)=0 has u = 1 - cosh(1-y)/cosh(1).
        let op = OperatorC::<f64>::new(40).unwrap();
        let n = op.ygrid.ny();
        let h = op.ygrid.h;
        let u = op.resolvent_solve(1.0, &vec![1.0; n]);
        let mut worst = 0.0f64;
        for (j, &y) in op.ygrid.nodes.iter().enumerate() {
            let want = 1.0 - ((1.0 - y).cosh()) / 1.0f64.cosh();
            worst = worst.max((u[j] - want).abs());
        }
        assert!(worst < 2.0 * h * h, "worst={worst} h2={}", h * h);
    }

    #[test]
    fn reduced_matrix_is_positive_definite() {
        let op = OperatorC::<f64>::new(24).unwrap();
        let lam = op.smallest_eigenvalue();
        assert!(lam > 0.0);
        // lowest transverse eigenvalue (pi/2)^2, second-order accurate
        let want = std::f64::consts::FRAC_PI_2.powi(2);
        assert!(
            (lam - want).abs() < 5.0 * op.ygrid.h * op.ygrid.h * want,
            "lam={lam} want={want}"
        );
        assert_eq!(op.eigen_count_below(0.0), 0);
        assert_eq!(op.eigen_count_below(1e9), op.ygrid.m);
    }

    #[test]
    fn resolvent_norm_decays_at_rate_two() {
        let op = OperatorC::<f64>::new(256).unwrap();
        let qs = [4.0, 8.0, 16.0, 32.0];
        let slope = resolvent_decay_slope(&op, &qs);
        assert!((slope + 2.0).abs() < 0.1, "slope={slope}");
    }

    #[test]
    fn dilated_pieces_solve_the_mode_problem() {
        // Check (mu + tau^{-2} C) u = f with u(0)=g, (1/t) u'(1) = hflux
        // against the assembled line operator, summing the three pieces.
        let op = OperatorC::<f64>::new(60).unwrap();
        let (t, c0, xi) = (0.37, 1.3, 2.0);
        let tau = t * c0;
        let n = op.ygrid.ny();
        let f: Vec<f64> = op.ygrid.nodes.iter().map(|y| (2.1 * y).cos()).collect();
        let (g, hflux) = (0.8, -0.45);
        let mut u = dilated_apply(SymbolKind::Resolvent, t, c0, xi, &op, &f);
        let ua = dilated_apply(SymbolKind::BottomValue, t, c0, xi, &op, &[g]);
        let ub = dilated_apply(SymbolKind::TopFlux, t, c0, xi, &op, &[hflux]);
        for i in 0..n {
            u[i] += ua[i] + ub[i];
        }
        // residual of the interior rows against f
        let line = YLineOp {
            shift: 0.0,
            mu: xi * xi,
            inv_tau2: 1.0 / (tau * tau),
            conv_scale: 0.0,
            flux_scale: 1.0 / t,
        };
        let lu = line.apply_interior(&op.ygrid, &u);
        let mut worst = 0.0f64;
        for j in 1..n - 1 {
            worst = worst.max((lu[j] - f[j]).abs());
        }
        // the closed-form boundary pieces are not grid-exact; allow O(h^2)
        let h2 = op.ygrid.h * op.ygrid.h;
        assert!(worst < 60.0 * h2, "worst={worst} h2={h2}");
        assert!((u[0] - g).abs() < 1e-12);
        let flux = crate::band::flux_top(&op.ygrid, 1.0 / t, &u);
        assert!((flux - hflux).abs() < 30.0 * h2, "flux={flux}");
    }

    #[test]
    fn class_estimate_peak_tracks_inverse_frequency() {
        let op = OperatorC::<f64>::new(16).unwrap();
        for q in [20.0, 40.0] {
            let est = symbol_class_estimate(q, &op);
            assert!(est.argmax_y > 0.5 / q && est.argmax_y < 2.0 / q,
                "q={q} argmax={}", est.argmax_y);
            let ratio = est.sup_dq_a * q;
            assert!(ratio > 0.2 && ratio < 2.0, "q={q} sup*q={ratio}");
        }
    }

    proptest! {
        #[test]
        fn symbols_stay_in_physical_range(q in 0.0f64..200.0, y in 0.0f64..=1.0) {
            let a = symbol_a(q, y);
            prop_assert!((0.0..=1.0).contains(&a));
            let b = symbol_b(q, y);
            prop_assert!(b >= 0.0 && b <= 1.0 + 1e-12);
        }

        #[test]
        fn bottom_symbol_decreases_in_y(q in 0.01f64..100.0, y in 0.0f64..0.99) {
            let step = 0.01;
            prop_assert!(symbol_a(q, y + step) <= symbol_a(q, y) + 1e-12);
        }
    }
}
