use thiserror::Error;

/// Errors surfaced by the solver stack. Iteration failures carry the measured
/// quantities so callers (and the CLI) can report actionable diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration: {0}")]
    Config(String),

    #[error("{context}: iteration did not contract (ratio {ratio:.3e} after {sweeps} sweeps)")]
    NoContraction {
        context: &'static str,
        ratio: f64,
        sweeps: usize,
    },

    #[error(
        "time step {dt:.3e} cannot resolve the 1/t terms at t = {t:.3e} \
         (needs {substeps} substeps > cap {cap}); raise t0 or the level count"
    )]
    StepRatio {
        dt: f64,
        t: f64,
        substeps: usize,
        cap: usize,
    },

    #[error("flow map inversion stalled at residual {residual:.3e} (target {tol:.3e})")]
    FlowMapInversion { residual: f64, tol: f64 },

    #[error("characteristic slope |p| = {value:.3} exceeded guard {guard} (front too steep for graph form)")]
    SlopeGuard { value: f64, guard: f64 },

    #[error("flow map Jacobian deviates from identity by {dev:.3} > 0.5; shrink T or refine the time grid")]
    JacobianGuard { dev: f64 },

    #[error("oracle size guard: {n} unknowns exceeds cap {cap}")]
    OracleSize { n: usize, cap: usize },

    #[error("outer iteration failed to contract after {retries} T-halvings (last ratio {ratio:.3})")]
    OuterDiverged { retries: usize, ratio: f64 },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Invalid(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
