//! Classical equations of motion and harmonic steady-state extraction.
//!
//! In the frame rotating at the pump center ω_p (optics, ᾱ) and the lab frame
//! (mechanics, β̄) the classical mean fields obey
//!
//! ```text
//! dᾱ/dt = iΔᾱ + ig₀ᾱ(β̄+β̄*) − (κ/2)ᾱ − √κ(ā_in− e^{iω_d t} + ā_in+ e^{−iω_d t})
//! dβ̄/dt = −iω_eff β̄ + ig₀|ᾱ|² + iF₁x_zpf/ħ − (Γ/2)β̄ − √Γ|β̄_in|e^{−iφ_m}e^{−iω_d t}
//! ```
//!
//! The steady state is periodic with the drive and well approximated by the
//! five-coefficient ansatz ᾱ ≈ ᾱ₋e^{iω_d t} + ᾱ_c + ᾱ₊e^{−iω_d t},
//! β̄ ≈ β̄₀ + β̄₁e^{−iω_d t}; the coefficients are extracted by lock-in
//! projection over an integer number of drive periods.

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{
    derive_quantities, distance_for_shift, DerivedQuantities, DriveConfig, SystemParams,
    TipSurface,
};
use crate::HBAR;

/// Instantaneous classical mean-field state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalState {
    /// Optical amplitude [sqrt(photons)], frame rotating at ω_p.
    pub alpha: C64,
    /// Mechanical amplitude [sqrt(phonons)], lab frame.
    pub beta: C64,
    /// Time [s].
    pub t: f64,
}

impl ClassicalState {
    pub fn zero() -> Self {
        ClassicalState {
            alpha: C64::new(0.0, 0.0),
            beta: C64::new(0.0, 0.0),
            t: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.alpha.is_finite() && self.beta.is_finite()
    }
}

/// Right-hand side of the classical equations of motion.
pub fn classical_rhs(
    state: &ClassicalState,
    sp: &SystemParams,
    dq: &DerivedQuantities,
    dc: &DriveConfig,
) -> (C64, C64) {
    let i = C64::i();
    let two_re_beta = 2.0 * state.beta.re;
    let rot = C64::from_polar(1.0, dc.omega_d * state.t); // e^{+i w_d t}
    let d_alpha = (i * (dc.delta_pump + sp.g0 * two_re_beta) - 0.5 * sp.kappa) * state.alpha
        - sp.kappa.sqrt() * (dc.a_in_minus * rot + dc.a_in_plus * rot.conj());
    let drive_m = C64::from_polar(dc.beta_in_mag, -(dc.phi_m + dc.omega_d * state.t));
    let d_beta = (-i * dq.omega_eff - 0.5 * sp.gamma) * state.beta
        + i * (sp.g0 * state.alpha.norm_sqr() + dq.f1 * dq.x_zpf / HBAR)
        - sp.gamma.sqrt() * drive_m;
    (d_alpha, d_beta)
}

/// Fixed-step integrator settings.
///
/// `dt_fraction_of_period` is the step expressed as a fraction of the drive
/// period, so dt = 2π/(ω_d) · dt_fraction_of_period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub dt_fraction_of_period: f64,
    /// Transient length before the first projection window, in units of 1/Γ.
    pub transient_over_gamma: f64,
    /// Projection window length in drive periods.
    pub window_periods: u32,
    /// Relative change between consecutive window decompositions below which
    /// the steady state counts as converged. Scaled by the largest
    /// coefficient magnitude.
    pub convergence_tol: f64,
    pub max_windows: u32,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            dt_fraction_of_period: 1.0 / 512.0,
            transient_over_gamma: 30.0,
            window_periods: 20,
            convergence_tol: 1e-9,
            max_windows: 2000,
        }
    }
}

impl IntegratorConfig {
    /// dt ≤ T_d/50 keeps the drive well resolved; windows of at least 20
    /// periods keep the lock-in statistics stable.
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_fraction_of_period > 0.0 && self.dt_fraction_of_period <= 0.02) {
            return Err(Error::InvalidParameter {
                name: "dt_fraction_of_period",
                message: format!(
                    "must lie in (0, 0.02] (at least 50 steps per drive period), got {:e}",
                    self.dt_fraction_of_period
                ),
            });
        }
        if self.window_periods < 20 {
            return Err(Error::InvalidParameter {
                name: "window_periods",
                message: format!("must be >= 20, got {}", self.window_periods),
            });
        }
        if !(self.transient_over_gamma >= 0.0) || !(self.convergence_tol > 0.0) {
            return Err(Error::InvalidParameter {
                name: "integrator",
                message: "transient_over_gamma must be >= 0 and convergence_tol > 0".into(),
            });
        }
        Ok(())
    }

    pub fn dt(&self, omega_d: f64) -> f64 {
        std::f64::consts::TAU / omega_d * self.dt_fraction_of_period
    }

    /// A cheaper profile for survey maps where ~1e-3 accuracy suffices.
    pub fn survey() -> Self {
        IntegratorConfig {
            dt_fraction_of_period: 1.0 / 128.0,
            transient_over_gamma: 10.0,
            window_periods: 20,
            convergence_tol: 1e-7,
            max_windows: 2000,
        }
    }
}

/// Uniformly sampled trajectory; `samples[k]` is the state at `t0 + k·dt`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub t0: f64,
    pub dt: f64,
    pub samples: Vec<(C64, C64)>,
}

impl Trajectory {
    pub fn state_at(&self, k: usize) -> ClassicalState {
        let (alpha, beta) = self.samples[k];
        ClassicalState {
            alpha,
            beta,
            t: self.t0 + k as f64 * self.dt,
        }
    }

    pub fn last_state(&self) -> ClassicalState {
        self.state_at(self.samples.len() - 1)
    }
}

fn rk4_step(
    state: &ClassicalState,
    dt: f64,
    sp: &SystemParams,
    dq: &DerivedQuantities,
    dc: &DriveConfig,
) -> (C64, C64) {
    let (k1a, k1b) = classical_rhs(state, sp, dq, dc);
    let mid1 = ClassicalState {
        alpha: state.alpha + 0.5 * dt * k1a,
        beta: state.beta + 0.5 * dt * k1b,
        t: state.t + 0.5 * dt,
    };
    let (k2a, k2b) = classical_rhs(&mid1, sp, dq, dc);
    let mid2 = ClassicalState {
        alpha: state.alpha + 0.5 * dt * k2a,
        beta: state.beta + 0.5 * dt * k2b,
        t: mid1.t,
    };
    let (k3a, k3b) = classical_rhs(&mid2, sp, dq, dc);
    let end = ClassicalState {
        alpha: state.alpha + dt * k3a,
        beta: state.beta + dt * k3b,
        t: state.t + dt,
    };
    let (k4a, k4b) = classical_rhs(&end, sp, dq, dc);
    (
        state.alpha + dt / 6.0 * (k1a + 2.0 * (k2a + k3a) + k4a),
        state.beta + dt / 6.0 * (k1b + 2.0 * (k2b + k3b) + k4b),
    )
}

const DIVERGENCE_CHECK_STRIDE: usize = 128;
const DIVERGENCE_LIMIT: f64 = 1e15;

/// Fixed-step RK4 over `n_steps` steps of size `dt`, recording every sample.
/// Deterministic for fixed inputs.
pub fn integrate(
    initial: &ClassicalState,
    sp: &SystemParams,
    dq: &DerivedQuantities,
    dc: &DriveConfig,
    n_steps: usize,
    dt: f64,
) -> Result<Trajectory> {
    sp.validate()?;
    dc.validate()?;
    let mut samples = Vec::with_capacity(n_steps + 1);
    let mut state = *initial;
    samples.push((state.alpha, state.beta));
    for k in 0..n_steps {
        let (a, b) = rk4_step(&state, dt, sp, dq, dc);
        state.alpha = a;
        state.beta = b;
        state.t = initial.t + (k + 1) as f64 * dt;
        samples.push((a, b));
        if k % DIVERGENCE_CHECK_STRIDE == 0
            && !(state.is_finite()
                && state.alpha.norm_sqr() < DIVERGENCE_LIMIT
                && state.beta.norm_sqr() < DIVERGENCE_LIMIT)
        {
            return Err(Error::Divergence { t: state.t });
        }
    }
    if !state.is_finite() {
        return Err(Error::Divergence { t: state.t });
    }
    Ok(Trajectory {
        t0: initial.t,
        dt,
        samples,
    })
}

/// Complex Fourier coefficients of the periodic steady state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicDecomposition {
    /// Coefficient of e^{+iω_d t} in ᾱ [sqrt(photons)].
    pub alpha_minus: C64,
    /// Static optical component [sqrt(photons)].
    pub alpha_c: C64,
    /// Coefficient of e^{−iω_d t} in ᾱ [sqrt(photons)].
    pub alpha_plus: C64,
    /// Static mechanical displacement [sqrt(phonons)].
    pub beta_0: C64,
    /// Coefficient of e^{−iω_d t} in β̄ [sqrt(phonons)].
    pub beta_1: C64,
    /// Relative power of the signal outside the ansatz.
    pub residual: f64,
}

impl HarmonicDecomposition {
    pub fn zero() -> Self {
        HarmonicDecomposition {
            alpha_minus: C64::new(0.0, 0.0),
            alpha_c: C64::new(0.0, 0.0),
            alpha_plus: C64::new(0.0, 0.0),
            beta_0: C64::new(0.0, 0.0),
            beta_1: C64::new(0.0, 0.0),
            residual: 0.0,
        }
    }

    pub fn coefficients(&self) -> [C64; 5] {
        [
            self.alpha_minus,
            self.alpha_c,
            self.alpha_plus,
            self.beta_0,
            self.beta_1,
        ]
    }

    pub fn max_abs(&self) -> f64 {
        self.coefficients()
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }

    /// 2g₀|β̄₁|/κ, small when the linearized coupling is trustworthy.
    pub fn linearization_ratio(&self, g0: f64, kappa: f64) -> f64 {
        2.0 * g0 * self.beta_1.norm() / kappa
    }
}

/// Lock-in projection of a trajectory onto the harmonic ansatz.
///
/// The trajectory must span an integer number of drive periods (the final
/// sample, which duplicates the phase of the first, is excluded from the
/// projection sums).
pub fn extract_harmonics(traj: &Trajectory, omega_d: f64) -> Result<HarmonicDecomposition> {
    let n = traj.samples.len().saturating_sub(1);
    if n < 2 {
        return Err(Error::Alignment { periods: 0.0 });
    }
    let periods = n as f64 * traj.dt * omega_d / std::f64::consts::TAU;
    if (periods - periods.round()).abs() > 1e-6 || periods.round() < 1.0 {
        return Err(Error::Alignment { periods });
    }

    let mut s_am = C64::new(0.0, 0.0);
    let mut s_ac = C64::new(0.0, 0.0);
    let mut s_ap = C64::new(0.0, 0.0);
    let mut s_b0 = C64::new(0.0, 0.0);
    let mut s_b1 = C64::new(0.0, 0.0);
    for k in 0..n {
        let (alpha, beta) = traj.samples[k];
        let t = traj.t0 + k as f64 * traj.dt;
        let rot = C64::from_polar(1.0, omega_d * t); // e^{+i w_d t}
        s_am += alpha * rot.conj();
        s_ac += alpha;
        s_ap += alpha * rot;
        s_b0 += beta;
        s_b1 += beta * rot;
    }
    let inv = 1.0 / n as f64;
    let (am, ac, ap, b0, b1) = (s_am * inv, s_ac * inv, s_ap * inv, s_b0 * inv, s_b1 * inv);

    let mut power = 0.0;
    let mut err = 0.0;
    for k in 0..n {
        let (alpha, beta) = traj.samples[k];
        let t = traj.t0 + k as f64 * traj.dt;
        let rot = C64::from_polar(1.0, omega_d * t);
        let alpha_fit = am * rot + ac + ap * rot.conj();
        let beta_fit = b0 + b1 * rot.conj();
        power += alpha.norm_sqr() + beta.norm_sqr();
        err += (alpha - alpha_fit).norm_sqr() + (beta - beta_fit).norm_sqr();
    }
    let residual = if power > 0.0 { err / power } else { 0.0 };

    Ok(HarmonicDecomposition {
        alpha_minus: am,
        alpha_c: ac,
        alpha_plus: ap,
        beta_0: b0,
        beta_1: b1,
        residual,
    })
}

/// Integrate from rest through the transient, then project consecutive
/// windows until the decomposition stops changing.
pub fn steady_state(
    sp: &SystemParams,
    dq: &DerivedQuantities,
    dc: &DriveConfig,
    cfg: &IntegratorConfig,
) -> Result<HarmonicDecomposition> {
    cfg.validate()?;
    let dt = cfg.dt(dc.omega_d);
    let steps_per_period = (1.0 / cfg.dt_fraction_of_period).round() as usize;
    let window_steps = steps_per_period * cfg.window_periods as usize;

    let transient_time = cfg.transient_over_gamma / sp.gamma;
    let transient_steps = (transient_time / dt).ceil() as usize;
    let mut state = ClassicalState::zero();
    if transient_steps > 0 {
        let traj = integrate(&state, sp, dq, dc, transient_steps, dt)?;
        state = traj.last_state();
    }

    let mut previous: Option<HarmonicDecomposition> = None;
    let mut last_delta = f64::INFINITY;
    for _ in 0..cfg.max_windows {
        let traj = integrate(&state, sp, dq, dc, window_steps, dt)?;
        state = traj.last_state();
        let current = extract_harmonics(&traj, dc.omega_d)?;
        if let Some(prev) = previous {
            let scale = current.max_abs();
            if scale < 1e-300 {
                return Ok(current);
            }
            last_delta = current
                .coefficients()
                .iter()
                .zip(prev.coefficients())
                .map(|(c, p)| (c - p).norm())
                .fold(0.0, f64::max)
                / scale;
            if last_delta <= cfg.convergence_tol {
                return Ok(current);
            }
        }
        previous = Some(current);
    }
    Err(Error::Convergence {
        windows: cfg.max_windows,
        last_delta,
    })
}

/// Mechanical drive magnitude that produces the target |β̄₁| through the bare
/// Lorentzian response |β̄₁| = √Γ|β̄_in| / |i(ω_eff−ω_d) + Γ/2|.
pub fn drive_for_beta1(target_beta1: f64, omega_eff: f64, omega_d: f64, gamma: f64) -> f64 {
    let denom = C64::new(0.5 * gamma, omega_eff - omega_d).norm();
    target_beta1 * denom / gamma.sqrt()
}

/// Which quantity the map sweeps along its second axis.
#[derive(Debug, Clone, PartialEq)]
pub enum SweepAxis {
    /// Effective mechanical frequencies [rad/s], applied directly to the
    /// equations of motion with the static force held at the reference value.
    OmegaEff(Vec<f64>),
    /// Tip–surface distances [m]; F₁, F₂ and ω_eff are rederived per cell.
    Distance(Vec<f64>),
}

/// Interference map of the coherent optical response.
#[derive(Debug, Clone)]
pub struct ResponseMap {
    pub phi_grid: Vec<f64>,
    /// Resolved ω_eff per sweep cell [rad/s].
    pub omega_eff: Vec<f64>,
    /// Tip–surface distance per sweep cell where the sweep value is reachable
    /// through the interaction, else None.
    pub h: Vec<Option<f64>>,
    /// |ᾱ_c| per cell, row-major phi × omega; None marks a failed cell.
    pub alpha_c_mag: Vec<Option<f64>>,
    /// (|ᾱ_c| − |ᾱ_c,stp|)/|ᾱ_c,max| per cell.
    pub delta_alpha_c: Vec<Option<f64>>,
    pub setpoint_mag: f64,
    pub max_mag: f64,
    /// (flat cell index, error message) for every failed cell.
    pub errors: Vec<(usize, String)>,
}

impl ResponseMap {
    pub fn at(&self, phi_idx: usize, omega_idx: usize) -> Option<f64> {
        self.delta_alpha_c[phi_idx * self.omega_eff.len() + omega_idx]
    }
}

/// Steady-state |ᾱ_c| over a (φ_m, ω_eff-or-h) grid, offset by the setpoint
/// magnitude and normalized to the grid maximum. Cells are independent and
/// evaluated in parallel; failures mark cells invalid instead of aborting.
pub fn response_map(
    sp: &SystemParams,
    ts: &TipSurface,
    dc: &DriveConfig,
    cfg: &IntegratorConfig,
    phi_grid: &[f64],
    axis: &SweepAxis,
    setpoint_mag: f64,
) -> Result<ResponseMap> {
    if phi_grid.is_empty() {
        return Err(Error::InvalidParameter {
            name: "phi_grid",
            message: "must be non-empty".into(),
        });
    }
    let base = derive_quantities(sp, ts)?;

    // Resolve the per-cell derived quantities along the sweep axis.
    let cells: Vec<Result<DerivedQuantities>> = match axis {
        SweepAxis::OmegaEff(ws) => ws
            .iter()
            .map(|&w| {
                if w > 0.0 && w.is_finite() {
                    Ok(DerivedQuantities {
                        omega_eff: w,
                        ..base
                    })
                } else {
                    Err(Error::InvalidParameter {
                        name: "omega_eff",
                        message: format!("sweep value must be positive, got {w:e}"),
                    })
                }
            })
            .collect(),
        SweepAxis::Distance(hs) => hs
            .iter()
            .map(|&h| {
                derive_quantities(
                    sp,
                    &TipSurface {
                        hamaker_radius: ts.hamaker_radius,
                        h,
                    },
                )
            })
            .collect(),
    };
    if cells.is_empty() {
        return Err(Error::InvalidParameter {
            name: "sweep",
            message: "must be non-empty".into(),
        });
    }

    let omega_eff: Vec<f64> = cells
        .iter()
        .map(|c| c.as_ref().map(|d| d.omega_eff).unwrap_or(f64::NAN))
        .collect();
    let h: Vec<Option<f64>> = match axis {
        SweepAxis::Distance(hs) => hs.iter().map(|&h| Some(h)).collect(),
        SweepAxis::OmegaEff(_) => omega_eff
            .iter()
            .map(|&w| {
                let shift = sp.omega_m - w;
                if shift > 1e-9 * sp.omega_m {
                    distance_for_shift(sp, ts, shift).ok()
                } else {
                    None
                }
            })
            .collect(),
    };

    let n_omega = cells.len();
    let results: Vec<std::result::Result<f64, String>> = phi_grid
        .par_iter()
        .flat_map(|&phi| {
            cells.par_iter().map(move |cell| {
                let dq = cell.as_ref().map_err(|e| e.to_string())?;
                let dci = DriveConfig { phi_m: phi, ..*dc };
                let h = steady_state(sp, dq, &dci, cfg).map_err(|e| e.to_string())?;
                Ok(h.alpha_c.norm())
            })
        })
        .collect();

    let max_mag = results
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .fold(0.0_f64, |m, &v| m.max(v));
    if max_mag <= 0.0 {
        return Err(Error::SetpointInvalid {
            message: "response map has no valid cells with nonzero |alpha_c|".into(),
        });
    }

    let mut alpha_c_mag = Vec::with_capacity(results.len());
    let mut delta = Vec::with_capacity(results.len());
    let mut errors = Vec::new();
    for (idx, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => {
                alpha_c_mag.push(Some(v));
                delta.push(Some((v - setpoint_mag) / max_mag));
            }
            Err(msg) => {
                alpha_c_mag.push(None);
                delta.push(None);
                errors.push((idx, msg));
            }
        }
    }
    debug_assert_eq!(alpha_c_mag.len(), phi_grid.len() * n_omega);

    Ok(ResponseMap {
        phi_grid: phi_grid.to_vec(),
        omega_eff,
        h,
        alpha_c_mag,
        delta_alpha_c: delta,
        setpoint_mag,
        max_mag,
        errors,
    })
}
