//! Simulation of force-gradient sensing with a coherently driven mechanical
//! resonator read out by a two-tone backaction-evading cavity optomechanical
//! measurement.
//!
//! The crate is organized in layers:
//!
//! * [`model`] — physical parameters, tip–surface van der Waals interaction
//!   and every derived scalar (zero-point fluctuation, static force, force
//!   gradient, effective mechanical frequency).
//! * [`classical`] — time-domain integration of the classical equations of
//!   motion and lock-in extraction of the harmonic steady state
//!   ᾱ(t) ≈ ᾱ₋e^{iω_d t} + ᾱ_c + ᾱ₊e^{−iω_d t}, β̄(t) ≈ β̄₀ + β̄₁e^{−iω_d t}.
//! * [`floquet`] — linearized quantum fluctuations solved per frequency as a
//!   truncated Floquet block system, mechanical quadrature variances and
//!   optical output spectra (full matrix path and reduced-susceptibility
//!   path).
//! * [`experiments`] — operating-point logic (mid-fringe setpoint, monotonic
//!   response region) and sweep orchestration.
//! * [`config`] / [`product`] — configuration ingestion and data-product
//!   serialization for the command line front end.
//!
//! All internal quantities are SI with angular frequencies in rad/s;
//! configuration files accept ordinary frequencies in Hz and are converted on
//! load.

pub mod classical;
pub mod config;
pub mod error;
pub mod experiments;
pub mod floquet;
pub mod model;
pub mod product;

pub use error::{Error, Result};

/// Reduced Planck constant [J s].
pub const HBAR: f64 = 1.054_571_817e-34;

/// Complex double, the working scalar of the whole crate.
pub type C64 = num_complex::Complex64;
