//! Error type shared by all layers.
//!
//! Exit-code classes for the command line: configuration and parameter
//! problems are usage errors (1), anything the physics or numerics can
//! legitimately refuse to do is a run error (2), and I/O failures are 3.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {message}")]
    InvalidParameter { name: &'static str, message: String },

    /// The attractive force gradient exceeds the restoring stiffness,
    /// ω_m² ≤ 2F₂/m_eff: the oscillator snaps to the surface.
    #[error("snap to contact: force gradient {f2:.6e} N/m at or above stability limit {limit:.6e} N/m")]
    SnapToContact { f2: f64, limit: f64 },

    #[error("no solution for target shift {target:.6e} rad/s in bracket [{lo:.3e}, {hi:.3e}] m")]
    Bracket { target: f64, lo: f64, hi: f64 },

    #[error("projection window is not an integer number of drive periods (got {periods} periods)")]
    Alignment { periods: f64 },

    #[error("trajectory diverged at t = {t:.6e} s")]
    Divergence { t: f64 },

    #[error("steady state not converged after {windows} windows (last relative change {last_delta:.3e})")]
    Convergence { windows: u32, last_delta: f64 },

    #[error("near-singular Floquet system at omega = {omega:.6e} rad/s (condition estimate {cond:.3e})")]
    NearSingular { omega: f64, cond: f64 },

    #[error("Fourier component index {m} outside truncation range |m| <= {max}")]
    Range { m: i32, max: i32 },

    #[error("spectral integrand not decayed at grid edges (edge/peak = {ratio:.3e}, limit {limit:.1e})")]
    TruncatedIntegral { ratio: f64, limit: f64 },

    #[error("no usable setpoint: fringe contrast {contrast:.3e} below threshold")]
    NoSetpoint { contrast: f64 },

    #[error("invalid setpoint: {message}")]
    SetpointInvalid { message: String },

    #[error("numerical consistency failure: {message}")]
    Numerics { message: String },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code class: 1 usage, 2 physics/convergence, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter { .. } | Error::Config { .. } => 1,
            Error::Io(_) => 3,
            _ => 2,
        }
    }
}
