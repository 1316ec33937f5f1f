//! Run configuration: a plain key = value text format, validated into
//! [`SolverConfig`]. Parsing keeps line numbers so the CLI can point at the
//! offending line.

use crate::error::{Error, Result};
use crate::float::Real;
use serde::Serialize;

/// Closed-form data preset for boundary data and velocity fields.
///
/// `Sin` evaluates `base + amp * sin(2*pi*(k1*x1 + k2*x2)/len + phase)`;
/// the optional `rate` adds an `exp(-rate*t)` factor on the oscillatory part
/// so time-dependent velocities are available to the front solver.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Preset<T: Real> {
    Zero,
    Constant(T),
    Sin {
        base: T,
        amp: T,
        k: [i64; 2],
        phase: T,
        rate: T,
    },
}

impl<T: Real> Preset<T> {
    /// Value at position `x` (only the first `n_dim` coordinates are used)
    /// and time `t`.
    pub fn eval(&self, x: [T; 2], len: T, t: T) -> T {
        match *self {
            Preset::Zero => T::zero(),
            Preset::Constant(c) => c,
            Preset::Sin {
                base,
                amp,
                k,
                phase,
                rate,
            } => {
                let two_pi = T::TAU();
                let arg = two_pi / len * (T::of(k[0] as f64) * x[0] + T::of(k[1] as f64) * x[1])
                    + phase;
                base + amp * arg.sin() * (-rate * t).exp()
            }
        }
    }

    /// Spatial gradient at `x`, `t`.
    pub fn grad(&self, x: [T; 2], len: T, t: T) -> [T; 2] {
        match *self {
            Preset::Zero | Preset::Constant(_) => [T::zero(), T::zero()],
            Preset::Sin {
                amp,
                k,
                phase,
                rate,
                ..
            } => {
                let two_pi = T::TAU();
                let arg = two_pi / len * (T::of(k[0] as f64) * x[0] + T::of(k[1] as f64) * x[1])
                    + phase;
                let common = amp * arg.cos() * (-rate * t).exp() * two_pi / len;
                [common * T::of(k[0] as f64), common * T::of(k[1] as f64)]
            }
        }
    }

    pub fn is_time_constant(&self) -> bool {
        match *self {
            Preset::Zero | Preset::Constant(_) => true,
            Preset::Sin { rate, .. } => rate == T::zero(),
        }
    }

    pub fn is_space_constant(&self) -> bool {
        matches!(self, Preset::Zero | Preset::Constant(_))
            || matches!(self, Preset::Sin { amp, .. } if *amp == T::zero())
    }

    /// Parse `zero`, `const:<v>`, or `sin:<base>:<amp>:<k1>[:<k2>[:<phase>[:<rate>]]]`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |p: &str| -> Result<T> {
            p.trim()
                .parse::<f64>()
                .map(T::of)
                .map_err(|_| Error::Config(format!("bad number `{p}` in preset `{s}`")))
        };
        match parts[0].trim() {
            "zero" => Ok(Preset::Zero),
            "const" if parts.len() == 2 => Ok(Preset::Constant(num(parts[1])?)),
            "sin" if (3..=7).contains(&parts.len()) => {
                let int = |p: &str| -> Result<i64> {
                    p.trim()
                        .parse::<i64>()
                        .map_err(|_| Error::Config(format!("bad integer `{p}` in preset `{s}`")))
                };
                Ok(Preset::Sin {
                    base: num(parts[1])?,
                    amp: num(parts[2])?,
                    k: [
                        if parts.len() > 3 { int(parts[3])? } else { 1 },
                        if parts.len() > 4 { int(parts[4])? } else { 0 },
                    ],
                    phase: if parts.len() > 5 { num(parts[5])? } else { T::zero() },
                    rate: if parts.len() > 6 { num(parts[6])? } else { T::zero() },
                })
            }
            _ => Err(Error::Config(format!(
                "unknown preset `{s}` (expected zero | const:v | sin:base:amp[:k1[:k2[:phase[:rate]]]])"
            ))),
        }
    }
}

/// Which machinery carries the per-level linear solves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum EllipticPath {
    /// Mode-decoupled solves; requires a space-constant coefficient.
    Constant,
    /// Localized frozen-coefficient synthesis with residual correction.
    Variable,
    /// Dense direct solve (the slow reference path; size-guarded).
    Oracle,
}

/// One-step scheme for the time marching.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Stepper {
    BackwardEuler,
    Trapezoid,
}

/// Validated run configuration shared by every subcommand.
#[derive(Clone, Debug, Serialize)]
#[serde(bound = "T: Serialize")]
pub struct SolverConfig<T: Real> {
    /// Spatial dimension of the lateral variable (1 or 2).
    pub n_dim: usize,
    /// Grid points per lateral dimension (power of two).
    pub nx: usize,
    /// Interior node count across the strip; spacing is 1/(m+1).
    pub m: usize,
    /// Lateral period.
    pub len: T,
    /// First computed time level (must be positive: the problem degenerates at 0).
    pub t0: T,
    /// Final time.
    pub t_final: T,
    /// Number of graded time intervals.
    pub n_levels: usize,
    /// Grading exponent: levels at `t_final * (k/N)^q`, clipped below by t0.
    pub grading: T,
    /// Hoelder exponents used by norm reports and contraction metrics.
    pub alpha: T,
    pub beta: T,
    /// 1 = evolution problem, 0 = quasi-stationary diffusion.
    pub epsilon: u8,
    /// Dirichlet datum / propagation coefficient.
    pub g: Preset<T>,
    /// Flux datum for stand-alone strip runs.
    pub h: Preset<T>,
    /// Velocity for stand-alone front runs.
    pub v: Preset<T>,
    pub elliptic_path: EllipticPath,
    pub stepper: Stepper,
    /// Outer fixed-point tolerance (front iteration).
    pub tol_outer: T,
    /// Inner fixed-point tolerance (strip iteration); defaults to outer/10.
    pub tol_inner: T,
    /// Linear-solve residual tolerance.
    pub tol_linear: T,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Residual-correction sweep cap for the localized solver.
    pub max_sweeps: usize,
    /// How many times the final time may be halved when the outer iteration
    /// fails to contract.
    pub max_retries: usize,
    /// Characteristic substeps per time interval.
    pub substeps: usize,
    pub seed: u64,
    /// Worker threads (0 = library default).
    pub threads: usize,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        SolverConfig {
            n_dim: 1,
            nx: 32,
            m: 16,
            len: T::TAU(),
            t0: T::of(1e-3),
            t_final: T::of(0.4),
            n_levels: 48,
            grading: T::of(2.0),
            alpha: T::of(0.5),
            beta: T::of(0.5),
            epsilon: 1,
            g: Preset::Constant(T::one()),
            h: Preset::Zero,
            v: Preset::Constant(T::one()),
            elliptic_path: EllipticPath::Variable,
            stepper: Stepper::BackwardEuler,
            tol_outer: T::of(1e-7),
            tol_inner: T::of(1e-8),
            tol_linear: T::of(1e-10),
            max_outer: 25,
            max_inner: 40,
            max_sweeps: 50,
            max_retries: 3,
            substeps: 2,
            seed: 42,
            threads: 0,
        }
    }
}

/// Cap on implicit substeps needed to honor the step-to-t ratio guard on a
/// single interval; beyond this, t0 is too small for the level count.
pub const MAX_SUBSTEPS_PER_LEVEL: usize = 4096;

impl<T: Real> SolverConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.n_dim == 1 || self.n_dim == 2) {
            return fail(format!("n_dim must be 1 or 2, got {}", self.n_dim));
        }
        if self.nx < 4 || !self.nx.is_power_of_two() {
            return fail(format!("nx must be a power of two >= 4, got {}", self.nx));
        }
        if self.m < 4 {
            return fail(format!("m must be >= 4, got {}", self.m));
        }
        if !(self.len > T::zero()) {
            return fail("len must be positive".into());
        }
        if !(self.t0 > T::zero()) {
            return fail("t0 must be positive (the system is singular at t = 0)".into());
        }
        if !(self.t_final > self.t0) {
            return fail("t_final must exceed t0".into());
        }
        if self.n_levels < 2 {
            return fail("n_levels must be >= 2".into());
        }
        if !(self.grading >= T::one()) {
            return fail("grading exponent must be >= 1".into());
        }
        if !(self.beta > T::zero() && self.beta <= T::one()) {
            return fail("beta must lie in (0, 1]".into());
        }
        if !(self.alpha > T::zero() && self.alpha <= T::one()) {
            return fail("alpha must lie in (0, 1]".into());
        }
        if self.epsilon > 1 {
            return fail(format!("epsilon must be 0 or 1, got {}", self.epsilon));
        }
        for (name, v) in [
            ("tol_outer", self.tol_outer),
            ("tol_inner", self.tol_inner),
            ("tol_linear", self.tol_linear),
        ] {
            if !(v > T::zero()) {
                return fail(format!("{name} must be positive"));
            }
        }
        if self.substeps == 0 {
            return fail("substeps must be >= 1".into());
        }
        if self.elliptic_path == EllipticPath::Constant && !self.g.is_space_constant() {
            return fail(
                "elliptic_path = constant requires a space-constant coefficient preset".into(),
            );
        }
        // Step-ratio guard: the first graded interval must be resolvable with
        // a bounded number of implicit substeps of size <= 0.1 * t.
        let first = self.t_final
            * (T::one() / T::of_usize(self.n_levels)).powf(self.grading);
        let first = if first > self.t0 { first } else { self.t0 };
        let gap = (first - self.t0).max(T::zero());
        let need = (gap / (T::of(0.1) * self.t0)).ceil().as_f64() as usize;
        if need > MAX_SUBSTEPS_PER_LEVEL {
            return Err(Error::StepRatio {
                dt: gap.as_f64(),
                t: self.t0.as_f64(),
                substeps: need,
                cap: MAX_SUBSTEPS_PER_LEVEL,
            });
        }
        Ok(())
    }

    /// Total lateral point count (nx^n_dim).
    pub fn x_len(&self) -> usize {
        self.nx.pow(self.n_dim as u32)
    }

    /// Parse the key = value text format. `#` starts a comment; keys are
    /// case-sensitive; unknown keys are errors. Errors carry 1-based line
    /// numbers.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = SolverConfig::<T>::default();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {lineno}: expected `key = value`, got `{raw}`"))
            })?;
            let key = key.trim();
            let value = value.trim();
            let ctx = |what: &str| Error::Config(format!("line {lineno}: {what} for key `{key}`"));
            let as_usize = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| ctx(&format!("invalid count `{v}`")))
            };
            let as_scalar = |v: &str| {
                v.parse::<f64>()
                    .map(T::of)
                    .map_err(|_| ctx(&format!("invalid number `{v}`")))
            };
            match key {
                "n_dim" => cfg.n_dim = as_usize(value)?,
                "nx" => cfg.nx = as_usize(value)?,
                "m" => cfg.m = as_usize(value)?,
                "len" => cfg.len = as_scalar(value)?,
                "t0" => cfg.t0 = as_scalar(value)?,
                "t_final" => cfg.t_final = as_scalar(value)?,
                "n_levels" => cfg.n_levels = as_usize(value)?,
                "grading" => cfg.grading = as_scalar(value)?,
                "alpha" => cfg.alpha = as_scalar(value)?,
                "beta" => cfg.beta = as_scalar(value)?,
                "epsilon" => {
                    cfg.epsilon = value
                        .parse::<u8>()
                        .map_err(|_| ctx(&format!("invalid flag `{value}` (expected 0 or 1)")))?
                }
                "g" => {
                    cfg.g = Preset::parse(value)
                        .map_err(|e| Error::Config(format!("line {lineno}: {e}")))?
                }
                "h" => {
                    cfg.h = Preset::parse(value)
                        .map_err(|e| Error::Config(format!("line {lineno}: {e}")))?
                }
                "v" => {
                    cfg.v = Preset::parse(value)
                        .map_err(|e| Error::Config(format!("line {lineno}: {e}")))?
                }
                "elliptic_path" => {
                    cfg.elliptic_path = match value {
                        "constant" => EllipticPath::Constant,
                        "variable" => EllipticPath::Variable,
                        "oracle" => EllipticPath::Oracle,
                        other => {
                            return Err(ctx(&format!(
                                "unknown path `{other}` (constant | variable | oracle)"
                            )))
                        }
                    }
                }
                "stepper" => {
                    cfg.stepper = match value {
                        "euler" => Stepper::BackwardEuler,
                        "trapezoid" => Stepper::Trapezoid,
                        other => {
                            return Err(ctx(&format!(
                                "unknown stepper `{other}` (euler | trapezoid)"
                            )))
                        }
                    }
                }
                "tol_outer" => cfg.tol_outer = as_scalar(value)?,
                "tol_inner" => cfg.tol_inner = as_scalar(value)?,
                "tol_linear" => cfg.tol_linear = as_scalar(value)?,
                "max_outer" => cfg.max_outer = as_usize(value)?,
                "max_inner" => cfg.max_inner = as_usize(value)?,
                "max_sweeps" => cfg.max_sweeps = as_usize(value)?,
                "max_retries" => cfg.max_retries = as_usize(value)?,
                "substeps" => cfg.substeps = as_usize(value)?,
                "seed" => {
                    cfg.seed = value
                        .parse::<u64>()
                        .map_err(|_| ctx(&format!("invalid seed `{value}`")))?
                }
                "threads" => cfg.threads = as_usize(value)?,
                other => {
                    return Err(Error::Config(format!(
                        "line {lineno}: unknown key `{other}`"
                    )))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
