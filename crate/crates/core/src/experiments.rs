//! Operating-point logic and experiment orchestration.
//!
//! The coherent optical response |ᾱ_c| interferes the two mechanical
//! sidebands; scanning the mechanical drive phase φ_m traces a fringe. The
//! scanning feedback locks to the middle of a fringe on its rising edge,
//! where the response is monotonic in the effective mechanical frequency
//! over an extended region.

use rayon::prelude::*;

use crate::classical::{
    response_map, steady_state, HarmonicDecomposition, IntegratorConfig, SweepAxis,
};
use crate::config::{Config, ResolvedSetup, SweepKind};
use crate::error::{Error, Result};
use crate::floquet::{
    optical_spectrum_full, optical_spectrum_reduced, spectrum_frequency_grid,
    variance_frequency_grid, variance_vs_detuning, variance_vs_drive, FloquetParams,
};
use crate::model::{
    derive_quantities, shifted_detuning, DerivedQuantities, DriveConfig, SystemParams,
};
use crate::product::{Cell, Column, DataProduct, MatrixAxes};

/// Mid-fringe operating point.
#[derive(Debug, Clone, Copy)]
pub struct Setpoint {
    pub phi_m: f64,
    pub alpha_c_mag: f64,
    pub fringe_max: f64,
    pub fringe_min: f64,
}

const MIN_CONTRAST: f64 = 1e-3;

/// Scan φ_m over [0, 2π), locate the rising-edge crossing of
/// (max+min)/2 and refine it by bisection.
pub fn find_setpoint(
    sp: &SystemParams,
    dq: &DerivedQuantities,
    dc: &DriveConfig,
    cfg: &IntegratorConfig,
    n_scan: usize,
) -> Result<Setpoint> {
    let n = n_scan.max(8);
    let phis: Vec<f64> = (0..n)
        .map(|k| k as f64 / n as f64 * std::f64::consts::TAU)
        .collect();
    let mags: Vec<f64> = phis
        .par_iter()
        .map(|&phi| {
            let dci = DriveConfig { phi_m: phi, ..*dc };
            steady_state(sp, dq, &dci, cfg).map(|h| h.alpha_c.norm())
        })
        .collect::<Result<_>>()?;

    let mx = mags.iter().cloned().fold(0.0, f64::max);
    let mn = mags.iter().cloned().fold(f64::INFINITY, f64::min);
    let contrast = if mx > 0.0 { (mx - mn) / mx } else { 0.0 };
    if contrast < MIN_CONTRAST {
        return Err(Error::NoSetpoint { contrast });
    }
    let target = 0.5 * (mx + mn);

    let mut rising = None;
    for k in 0..n {
        let a = mags[k];
        let b = mags[(k + 1) % n];
        if a <= target && target < b {
            rising = Some(k);
            break;
        }
    }
    let k = rising.ok_or(Error::SetpointInvalid {
        message: "no rising-edge crossing of the mid-fringe level".into(),
    })?;

    let eval = |phi: f64| -> Result<f64> {
        let dci = DriveConfig { phi_m: phi, ..*dc };
        Ok(steady_state(sp, dq, &dci, cfg)?.alpha_c.norm())
    };
    let step = std::f64::consts::TAU / n as f64;
    let (mut lo, mut hi) = (phis[k], phis[k] + step);
    let mut mag_at = mags[k];
    for _ in 0..8 {
        let mid = 0.5 * (lo + hi);
        mag_at = eval(mid)?;
        if mag_at < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let phi_m = 0.5 * (lo + hi);
    Ok(Setpoint {
        phi_m,
        alpha_c_mag: mag_at,
        fringe_max: mx,
        fringe_min: mn,
    })
}

/// Detuning interval around ω_d with strictly monotonic response.
#[derive(Debug, Clone, Copy)]
pub struct MonotonicRegion {
    /// Lower bound of ω_eff − ω_d [rad/s] (negative).
    pub lower: f64,
    /// Upper bound [rad/s] (positive).
    pub upper: f64,
    /// Normalized response slope at zero detuning [1/(rad/s)].
    pub slope: f64,
}

const MONOTONIC_NOISE_FLOOR: f64 = 1e-9;

/// Sweep ω_eff about ω_d at the setpoint phase and return the maximal
/// interval around zero detuning on which the response is strictly
/// monotonic (sign-constant normalized first differences above 1e-9).
pub fn monotonic_region(
    sp: &SystemParams,
    dq: &DerivedQuantities,
    dc: &DriveConfig,
    cfg: &IntegratorConfig,
    setpoint: &Setpoint,
    half_span: f64,
    n_points: usize,
) -> Result<MonotonicRegion> {
    let n = if n_points % 2 == 0 { n_points + 1 } else { n_points }.max(9);
    let dets: Vec<f64> = (0..n)
        .map(|k| -half_span + 2.0 * half_span * k as f64 / (n - 1) as f64)
        .collect();
    let dci = DriveConfig {
        phi_m: setpoint.phi_m,
        ..*dc
    };
    let mags: Vec<f64> = dets
        .par_iter()
        .map(|&det| {
            let dqi = DerivedQuantities {
                omega_eff: dc.omega_d + det,
                ..*dq
            };
            steady_state(sp, &dqi, &dci, cfg).map(|h| h.alpha_c.norm())
        })
        .collect::<Result<_>>()?;

    let norm = mags.iter().cloned().fold(0.0, f64::max);
    if norm <= 0.0 {
        return Err(Error::SetpointInvalid {
            message: "response vanishes over the whole sweep".into(),
        });
    }
    let diffs: Vec<f64> = mags.windows(2).map(|w| (w[1] - w[0]) / norm).collect();
    let mid = n / 2; // dets[mid] == 0
    let center = diffs[mid - 1] + diffs[mid];
    if diffs[mid - 1].abs() <= MONOTONIC_NOISE_FLOOR
        || diffs[mid].abs() <= MONOTONIC_NOISE_FLOOR
        || diffs[mid - 1].signum() != diffs[mid].signum()
    {
        return Err(Error::SetpointInvalid {
            message: format!(
                "response is not strictly monotonic at zero detuning (differences {:.3e}, {:.3e})",
                diffs[mid - 1],
                diffs[mid]
            ),
        });
    }
    let sign = center.signum();
    let mut hi_idx = mid; // diffs[mid] covers dets[mid]..dets[mid+1]
    while hi_idx + 1 < diffs.len() && diffs[hi_idx + 1] * sign > MONOTONIC_NOISE_FLOOR {
        hi_idx += 1;
    }
    let mut lo_idx = mid - 1;
    while lo_idx > 0 && diffs[lo_idx - 1] * sign > MONOTONIC_NOISE_FLOOR {
        lo_idx -= 1;
    }
    let d_step = dets[1] - dets[0];
    Ok(MonotonicRegion {
        lower: dets[lo_idx],
        upper: dets[hi_idx + 1],
        slope: (mags[mid + 1] - mags[mid - 1]) / (2.0 * d_step) / norm,
    })
}

const DELTA_CALIBRATION_ITERS: usize = 8;

/// Place the pump center so the shifted detuning vanishes, Δ = −2g₀ Re β̄₀,
/// iterating because β̄₀ itself depends weakly on Δ. Returns the calibrated
/// Δ and the steady state found with it.
pub fn calibrate_pump_center(
    sp: &SystemParams,
    dq: &DerivedQuantities,
    dc: &DriveConfig,
    cfg: &IntegratorConfig,
) -> Result<(f64, HarmonicDecomposition)> {
    let mut delta = dc.delta_pump;
    let tol = 1e-9 * sp.kappa;
    let mut harmonics = HarmonicDecomposition::zero();
    for _ in 0..DELTA_CALIBRATION_ITERS {
        let dci = DriveConfig {
            delta_pump: delta,
            ..*dc
        };
        harmonics = steady_state(sp, dq, &dci, cfg)?;
        let residual = shifted_detuning(delta, sp.g0, harmonics.beta_0);
        delta -= residual;
        if residual.abs() <= tol {
            break;
        }
    }
    Ok((delta, harmonics))
}

/// Experiment selector for [`run_experiment`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Derive,
    Classical,
    ResponseMap,
    NoiseSpectrum,
    VarianceDetuning,
    VarianceDrive,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Derive => "derive",
            ExperimentKind::Classical => "classical",
            ExperimentKind::ResponseMap => "response-map",
            ExperimentKind::NoiseSpectrum => "noise-spectrum",
            ExperimentKind::VarianceDetuning => "variance-detuning",
            ExperimentKind::VarianceDrive => "variance-drive",
        }
    }
}

/// A fully described run: experiment id plus the merged configuration.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub config: Config,
}

/// Dispatch an experiment and package the result with full provenance.
/// Seedless and deterministic: identical specs produce identical products.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<DataProduct> {
    let mut setup = spec.config.resolve()?;
    let mut extras: Vec<(String, String)> = Vec::new();

    // Resolve an automatic pump-center placement before anything else so the
    // provenance reflects the value actually used.
    if setup.delta_auto && spec.kind != ExperimentKind::Derive {
        let (delta, _) = calibrate_pump_center(
            &setup.system,
            &setup.derived,
            &setup.drive,
            &setup.integrator,
        )?;
        setup.drive.delta_pump = delta;
        extras.push(("calibrated_delta_rad_s".into(), format!("{delta:e}")));
    }

    let product = match spec.kind {
        ExperimentKind::Derive => run_derive(&setup)?,
        ExperimentKind::Classical => run_classical(&setup, &mut extras)?,
        ExperimentKind::ResponseMap => run_response_map(&setup, &mut extras)?,
        ExperimentKind::NoiseSpectrum => run_noise_spectrum(&setup, &mut extras)?,
        ExperimentKind::VarianceDetuning => run_variance_detuning(&setup, &mut extras)?,
        ExperimentKind::VarianceDrive => run_variance_drive(&setup, &mut extras)?,
    };

    Ok(product.with_provenance(spec.kind.name(), &spec.config.resolved_document(&setup), extras))
}

fn run_derive(setup: &ResolvedSetup) -> Result<DataProduct> {
    let dq = derive_quantities(&setup.system, &setup.tip)?;
    let columns = vec![
        Column::new("quantity", "1"),
        Column::new("value", "per-row"),
        Column::new("unit", "1"),
    ];
    let rows = vec![
        vec![Cell::text("x_zpf"), Cell::num(dq.x_zpf), Cell::text("m")],
        vec![Cell::text("f1"), Cell::num(dq.f1), Cell::text("N")],
        vec![Cell::text("f2"), Cell::num(dq.f2), Cell::text("N/m")],
        vec![
            Cell::text("omega_eff"),
            Cell::num(dq.omega_eff),
            Cell::text("rad/s"),
        ],
    ];
    Ok(DataProduct::table(columns, rows))
}

fn run_classical(setup: &ResolvedSetup, extras: &mut Vec<(String, String)>) -> Result<DataProduct> {
    let harmonics = steady_state(
        &setup.system,
        &setup.derived,
        &setup.drive,
        &setup.integrator,
    )?;
    extras.push(("residual".into(), format!("{:e}", harmonics.residual)));
    extras.push((
        "linearization_ratio".into(),
        format!(
            "{:e}",
            harmonics.linearization_ratio(setup.system.g0, setup.system.kappa)
        ),
    ));
    extras.push((
        "delta_tilde_rad_s".into(),
        format!(
            "{:e}",
            shifted_detuning(setup.drive.delta_pump, setup.system.g0, harmonics.beta_0)
        ),
    ));
    let columns = vec![
        Column::new("coefficient", "1"),
        Column::new("re", "sqrt(quanta)"),
        Column::new("im", "sqrt(quanta)"),
        Column::new("magnitude", "sqrt(quanta)"),
    ];
    let named = [
        ("alpha_minus", harmonics.alpha_minus),
        ("alpha_c", harmonics.alpha_c),
        ("alpha_plus", harmonics.alpha_plus),
        ("beta_0", harmonics.beta_0),
        ("beta_1", harmonics.beta_1),
    ];
    let rows = named
        .iter()
        .map(|(name, c)| {
            vec![
                Cell::text(name),
                Cell::num(c.re),
                Cell::num(c.im),
                Cell::num(c.norm()),
            ]
        })
        .collect();
    Ok(DataProduct::table(columns, rows))
}

fn run_response_map(
    setup: &ResolvedSetup,
    extras: &mut Vec<(String, String)>,
) -> Result<DataProduct> {
    let g = &setup.grids.response_map;
    let setpoint = find_setpoint(
        &setup.system,
        &setup.derived,
        &setup.drive,
        &setup.integrator,
        g.setpoint_scan_points,
    )?;
    extras.push(("setpoint_phi_m_rad".into(), format!("{:e}", setpoint.phi_m)));
    extras.push((
        "setpoint_alpha_c_mag".into(),
        format!("{:e}", setpoint.alpha_c_mag),
    ));

    let phi_grid: Vec<f64> = (0..g.phi_points)
        .map(|k| k as f64 / g.phi_points as f64 * std::f64::consts::TAU)
        .collect();
    let axis = match g.sweep {
        SweepKind::OmegaEff => {
            let half = g.omega_half_span_gammas * setup.system.gamma;
            SweepAxis::OmegaEff(
                (0..g.omega_points)
                    .map(|k| {
                        setup.drive.omega_d - half
                            + 2.0 * half * k as f64 / (g.omega_points - 1) as f64
                    })
                    .collect(),
            )
        }
        SweepKind::Distance => SweepAxis::Distance(
            (0..g.omega_points)
                .map(|k| {
                    g.h_min_m + (g.h_max_m - g.h_min_m) * k as f64 / (g.omega_points - 1) as f64
                })
                .collect(),
        ),
    };
    let map = response_map(
        &setup.system,
        &setup.tip,
        &setup.drive,
        &setup.integrator,
        &phi_grid,
        &axis,
        setpoint.alpha_c_mag,
    )?;
    extras.push(("max_alpha_c_mag".into(), format!("{:e}", map.max_mag)));
    extras.push(("invalid_cells".into(), map.errors.len().to_string()));

    let region = monotonic_region(
        &setup.system,
        &setup.derived,
        &setup.drive,
        &setup.integrator,
        &setpoint,
        0.5 * setup.system.gamma,
        81,
    );
    match region {
        Ok(r) => {
            extras.push(("monotonic_lower_rad_s".into(), format!("{:e}", r.lower)));
            extras.push(("monotonic_upper_rad_s".into(), format!("{:e}", r.upper)));
            extras.push(("monotonic_slope_per_rad_s".into(), format!("{:e}", r.slope)));
        }
        Err(e) => extras.push(("monotonic_region_error".into(), e.to_string())),
    }

    let columns = vec![
        Column::new("phi_m", "rad"),
        Column::new("omega_eff", "rad/s"),
        Column::new("delta_alpha_c_norm", "1"),
    ];
    let mut rows = Vec::with_capacity(map.phi_grid.len() * map.omega_eff.len());
    for (i, &phi) in map.phi_grid.iter().enumerate() {
        for (j, &w) in map.omega_eff.iter().enumerate() {
            rows.push(vec![
                Cell::num(phi),
                Cell::num(w),
                Cell::opt(map.delta_alpha_c[i * map.omega_eff.len() + j]),
            ]);
        }
    }
    let axes = MatrixAxes {
        row_values: map.phi_grid.clone(),
        col_values: map.omega_eff.clone(),
        col_aux_name: Some("h_m".into()),
        col_aux_values: Some(map.h.iter().map(|h| h.unwrap_or(f64::NAN)).collect()),
    };
    Ok(DataProduct::matrix(columns, rows, axes))
}

fn noise_setup_for_target(
    setup: &ResolvedSetup,
    target: f64,
) -> Result<(DriveConfig, HarmonicDecomposition, FloquetParams)> {
    let mag = crate::classical::drive_for_beta1(
        target,
        setup.derived.omega_eff,
        setup.drive.omega_d,
        setup.system.gamma,
    );
    let dc = DriveConfig {
        beta_in_mag: mag,
        ..setup.drive
    };
    let (delta, harmonics) = if setup.delta_auto {
        calibrate_pump_center(&setup.system, &setup.derived, &dc, &setup.integrator)?
    } else {
        (
            dc.delta_pump,
            steady_state(&setup.system, &setup.derived, &dc, &setup.integrator)?,
        )
    };
    let dc = DriveConfig {
        delta_pump: delta,
        ..dc
    };
    let fp = FloquetParams::from_steady_state(
        &setup.system,
        &setup.derived,
        &dc,
        &harmonics,
        setup.noise.floquet_order,
    )?;
    Ok((dc, harmonics, fp))
}

fn run_noise_spectrum(
    setup: &ResolvedSetup,
    extras: &mut Vec<(String, String)>,
) -> Result<DataProduct> {
    let g = &setup.grids.noise_spectrum;
    let grid = spectrum_frequency_grid(
        setup.drive.omega_d,
        setup.derived.omega_eff,
        setup.system.gamma,
        g.half_span_over_omega_d,
        g.base_points,
        g.feature_points_per_gamma,
        g.feature_halfwidth_gammas,
    );
    extras.push(("grid_points".into(), grid.len().to_string()));

    let columns = vec![
        Column::new("beta1_target", "1"),
        Column::new("omega", "rad/s"),
        Column::new("s_out_full", "1"),
        Column::new("s_out_reduced", "1"),
    ];
    let mut rows = Vec::new();
    for &target in &g.beta1_targets {
        let (_dc, harmonics, fp) = noise_setup_for_target(setup, target)?;
        extras.push((
            format!("beta1_actual_{target:e}"),
            format!("{:e}", harmonics.beta_1.norm()),
        ));
        let full = optical_spectrum_full(&grid, &fp, &setup.noise)?;
        let reduced = optical_spectrum_reduced(&grid, &fp, &setup.noise)?;
        for k in 0..grid.len() {
            rows.push(vec![
                Cell::num(target),
                Cell::num(grid[k]),
                Cell::num(full.values[k]),
                Cell::num(reduced.values[k]),
            ]);
        }
    }
    Ok(DataProduct::table(columns, rows))
}

fn run_variance_detuning(
    setup: &ResolvedSetup,
    extras: &mut Vec<(String, String)>,
) -> Result<DataProduct> {
    let g = &setup.grids.variance_detuning;
    let var_grid = variance_frequency_grid(
        setup.drive.omega_d,
        setup.system.gamma,
        setup.system.kappa,
    );
    extras.push(("variance_grid_points".into(), var_grid.len().to_string()));
    let half = g.half_span_gammas * setup.system.gamma;
    let dets: Vec<f64> = (0..g.points)
        .map(|k| -half + 2.0 * half * k as f64 / (g.points - 1) as f64)
        .collect();
    let points = variance_vs_detuning(
        &setup.system,
        &setup.derived,
        &setup.drive,
        &setup.integrator,
        &setup.noise,
        &dets,
        &var_grid,
    );
    let columns = vec![
        Column::new("detuning", "rad/s"),
        Column::new("omega_eff", "rad/s"),
        Column::new("x2", "x_zpf^2"),
        Column::new("beta1_mag", "1"),
        Column::new("delta_tilde", "rad/s"),
    ];
    let mut rows = Vec::new();
    for p in points {
        match p.result {
            Ok(v) => rows.push(vec![
                Cell::num(p.detuning),
                Cell::num(p.omega_eff),
                Cell::num(v.x2),
                Cell::num(v.beta1_mag),
                Cell::num(v.delta_tilde),
            ]),
            Err(e) => {
                extras.push((format!("error_at_{:e}", p.detuning), e.to_string()));
                rows.push(vec![
                    Cell::num(p.detuning),
                    Cell::num(p.omega_eff),
                    Cell::nan(),
                    Cell::nan(),
                    Cell::nan(),
                ]);
            }
        }
    }
    Ok(DataProduct::table(columns, rows))
}

fn run_variance_drive(
    setup: &ResolvedSetup,
    extras: &mut Vec<(String, String)>,
) -> Result<DataProduct> {
    let g = &setup.grids.variance_drive;
    let var_grid = variance_frequency_grid(
        setup.drive.omega_d,
        setup.system.gamma,
        setup.system.kappa,
    );
    extras.push(("variance_grid_points".into(), var_grid.len().to_string()));
    let points = variance_vs_drive(
        &setup.system,
        &setup.derived,
        &setup.drive,
        &setup.integrator,
        &setup.noise,
        &g.beta1_targets,
        &var_grid,
    );
    let columns = vec![
        Column::new("beta1_target", "1"),
        Column::new("beta1_actual", "1"),
        Column::new("x2", "x_zpf^2"),
        Column::new("coupling_ratio", "1"),
        Column::new("linearization_warning", "1"),
    ];
    let mut rows = Vec::new();
    for p in points {
        match p.result {
            Ok(v) => rows.push(vec![
                Cell::num(p.beta1_target),
                Cell::num(v.beta1_mag),
                Cell::num(v.x2),
                Cell::num(v.coupling_ratio),
                Cell::num(if v.linearization_warning { 1.0 } else { 0.0 }),
            ]),
            Err(e) => {
                extras.push((format!("error_at_{:e}", p.beta1_target), e.to_string()));
                rows.push(vec![
                    Cell::num(p.beta1_target),
                    Cell::nan(),
                    Cell::nan(),
                    Cell::nan(),
                    Cell::nan(),
                ]);
            }
        }
    }
    Ok(DataProduct::table(columns, rows))
}

// The noise-spectrum and variance-drive experiments need the drive resolved
// per beta1 target; keep the pump-center auto flag visible there.
pub use ExperimentKind as Kind;
