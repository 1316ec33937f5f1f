//! Solver and verification suite for a singular one-phase free boundary
//! problem posed on a fixed strip.
//!
//! The moving-domain problem is pulled back to the strip `R^n x [0, 1]`; the
//! transformed diffusion operator degenerates like `1/t^2` in the transverse
//! direction as the initial time is approached, and the front itself obeys a
//! Hamilton-Jacobi equation driven by the top trace of the bulk solution.
//! The crate provides the pieces of that coupled solve — Fourier-diagonalized
//! constant-coefficient solves, frozen-coefficient localization for variable
//! coefficients, singular-in-time parabolic stepping, characteristics for the
//! front motion — together with independent oracles and norm machinery used
//! by the verification suite.
//!
//! Everything is generic over the scalar type through [`float::Real`];
//! `f64` aliases for the common entry points live at the crate root.

pub mod band;
pub mod config;
pub mod coupling;
pub mod elliptic;
pub mod error;
pub mod fft;
pub mod fit;
pub mod float;
pub mod grids;
pub mod hamilton_jacobi;
pub mod io;
pub mod parabolic;
pub mod sh_spaces;
pub mod symbols;
pub mod verify;

pub use config::{EllipticPath, Preset, SolverConfig, Stepper};
pub use error::{Error, Result};
pub use float::Real;
pub use grids::{Grids, StripField, SurfaceField};

/// Grids specialized to `f64`.
pub type GridsF64 = grids::Grids<f64>;
/// Strip-valued field specialized to `f64`.
pub type StripFieldF64 = grids::StripField<f64>;
/// Surface-valued field specialized to `f64`.
pub type SurfaceFieldF64 = grids::SurfaceField<f64>;
/// Solver configuration specialized to `f64`.
pub type SolverConfigF64 = config::SolverConfig<f64>;
