use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown preset `{0}` (expected one of: sr88, sr87)")]
    UnknownPreset(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("integrator step size underflow at t = {t:.6e} s (h = {h:.3e} s); the system is too stiff for explicit relaxation, use the Newton steady-state path")]
    StepUnderflow { t: f64, h: f64 },

    #[error("integrator exceeded its step budget ({steps} steps) at t = {t:.6e} s")]
    StepBudget { steps: usize, t: f64 },

    #[error("steady state not found: Newton diverged and relaxation did not converge (best residual {best_residual:.3e})")]
    SteadyStateFailed { best_residual: f64 },

    #[error("outside the Dicke triangle: {0}")]
    DickeDomain(String),

    #[error("below the mean-field lasing threshold (C·d0 = {c_d0:.6e} ≤ Γ = {big_gamma:.6e})")]
    BelowThreshold { c_d0: f64, big_gamma: f64 },

    #[error("negative radicand {0:.6e} in the crossover linewidth")]
    NegativeRadicand(f64),

    #[error("filter probe: {0}")]
    Probe(String),

    #[error("vanishing polariton denominator at omega_f = {0:.6e} rad/s")]
    PolaritonPole(f64),

    #[error("spectrum point omega_f = {omega_f:.6e} rad/s: {source}")]
    ScanPoint {
        omega_f: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("no line: scan is flat")]
    NoLine,

    #[error("lorentzian fit: {0}")]
    Fit(String),

    #[error("lorentzian fit did not converge after {iterations} iterations (best fwhm {best_fwhm:.6e}, rms {best_rms:.3e})")]
    FitNoConvergence {
        iterations: usize,
        best_fwhm: f64,
        best_rms: f64,
    },

    #[error("linewidth unresolvable: line narrower than {floor:.3e} rad/s")]
    Unresolvable { floor: f64 },

    #[error("oracle space too large: superoperator block of dimension {dim} exceeds the budget {budget}")]
    SpaceTooLarge { dim: usize, budget: usize },

    #[error("oracle: {0}")]
    Oracle(String),

    #[error("oracle cutoff did not converge: relative drift {drift:.3e} at n_max = {n_max}")]
    CutoffDrift { drift: f64, n_max: usize },

    #[error("correlator not decayed by T = {t_max:.6e} s (|g1| = {remaining:.3e} of initial)")]
    CorrelatorNotDecayed { t_max: f64, remaining: f64 },

    #[error("sweep config: {0}")]
    SweepConfig(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Solver and fit failures, as opposed to bad input or IO.
    pub fn is_numerical(&self) -> bool {
        !matches!(
            self,
            Error::UnknownPreset(_)
                | Error::InvalidParams(_)
                | Error::SweepConfig(_)
                | Error::Io { .. }
                | Error::Csv(_)
                | Error::Json(_)
        )
    }
}
