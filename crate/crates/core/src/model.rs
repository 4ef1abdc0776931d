//! Physical parameters and derived scalar quantities.
//!
//! The tip–surface interaction is a van der Waals potential between a sphere
//! and a flat surface, U(x) = −HR/(6(h+x)), Taylor expanded to second order
//! in the oscillation x about the equilibrium distance h:
//!
//! * static force        F₁ = −HR/(6h²)
//! * force gradient      F₂ =  HR/(6h³)
//! * effective frequency ω_eff = sqrt(ω_m² − 2F₂/m_eff)
//!
//! The Hamaker constant H and tip radius R only ever enter through the
//! product HR, stored here as `hamaker_radius`.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::HBAR;

/// Fixed rates and masses of the optomechanical device, SI units, angular
/// frequencies in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    /// Cavity resonance ω_c [rad/s].
    pub omega_c: f64,
    /// Bare mechanical resonance ω_m [rad/s].
    pub omega_m: f64,
    /// Total optical decay rate κ [rad/s].
    pub kappa: f64,
    /// Total mechanical decay rate Γ [rad/s].
    pub gamma: f64,
    /// Effective mass [kg].
    pub m_eff: f64,
    /// Single-photon optomechanical coupling g₀ [rad/s], treated as constant
    /// even as ω_eff shifts.
    pub g0: f64,
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("omega_c", self.omega_c),
            ("omega_m", self.omega_m),
            ("kappa", self.kappa),
            ("gamma", self.gamma),
            ("m_eff", self.m_eff),
            ("g0", self.g0),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    message: format!("must be strictly positive and finite, got {v:e}"),
                });
            }
        }
        Ok(())
    }

    /// Zero-point fluctuation of the mechanical mode, sqrt(ħ/(2 m_eff ω_m)).
    pub fn x_zpf(&self) -> f64 {
        zero_point_fluctuation(self)
    }

    /// Resolved-sideband diagnostic, κ < ω_m. Not enforced anywhere.
    pub fn resolved_sideband(&self) -> bool {
        self.kappa < self.omega_m
    }
}

/// Tip–surface interaction inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TipSurface {
    /// Product H·R_tip [J m].
    pub hamaker_radius: f64,
    /// Tip–surface distance h [m].
    pub h: f64,
}

impl TipSurface {
    pub fn validate(&self) -> Result<()> {
        if !(self.hamaker_radius >= 0.0) || !self.hamaker_radius.is_finite() {
            return Err(Error::InvalidParameter {
                name: "hamaker_radius",
                message: format!("must be >= 0 and finite, got {:e}", self.hamaker_radius),
            });
        }
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::InvalidParameter {
                name: "h",
                message: format!("must be > 0 and finite, got {:e}", self.h),
            });
        }
        Ok(())
    }
}

/// Two-tone optical pump and single-tone mechanical drive settings.
///
/// The pumps sit at ω_p ± ω_d where ω_p = ω_c + Δ; in the frame rotating at
/// ω_p they appear as ā_in∓ e^{±iω_d t}. The mechanical drive amplitude is
/// β̄_in = |β̄_in| e^{−iφ_m}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveConfig {
    /// Lower pump amplitude ā_in− [sqrt(photons/s)].
    pub a_in_minus: C64,
    /// Upper pump amplitude ā_in+ [sqrt(photons/s)].
    pub a_in_plus: C64,
    /// Pump-center detuning Δ from ω_c [rad/s].
    pub delta_pump: f64,
    /// Mechanical drive magnitude |β̄_in| [sqrt(phonons/s)].
    pub beta_in_mag: f64,
    /// Mechanical drive phase φ_m [rad].
    pub phi_m: f64,
    /// Mechanical drive angular frequency ω_d [rad/s].
    pub omega_d: f64,
}

impl DriveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega_d > 0.0) || !self.omega_d.is_finite() {
            return Err(Error::InvalidParameter {
                name: "omega_d",
                message: format!("must be > 0 and finite, got {:e}", self.omega_d),
            });
        }
        if !(self.beta_in_mag >= 0.0) || !self.beta_in_mag.is_finite() {
            return Err(Error::InvalidParameter {
                name: "beta_in_mag",
                message: format!("must be >= 0 and finite, got {:e}", self.beta_in_mag),
            });
        }
        for (name, v) in [("delta_pump", self.delta_pump), ("phi_m", self.phi_m)] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    message: format!("must be finite, got {v:e}"),
                });
            }
        }
        if !self.a_in_minus.is_finite() || !self.a_in_plus.is_finite() {
            return Err(Error::InvalidParameter {
                name: "a_in",
                message: "pump amplitudes must be finite".into(),
            });
        }
        Ok(())
    }

    /// Diagnostic: pump center on resonance and drive on the effective
    /// mechanical resonance, the configuration that evades backaction.
    pub fn is_backaction_evading(&self, omega_eff: f64, tol: f64) -> bool {
        self.delta_pump.abs() <= tol && (self.omega_d - omega_eff).abs() <= tol
    }
}

/// Scalars derived from [`SystemParams`] and [`TipSurface`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedQuantities {
    /// Zero-point fluctuation [m].
    pub x_zpf: f64,
    /// Static tip–surface force F₁ [N] (≤ 0 for attractive interaction).
    pub f1: f64,
    /// Force gradient F₂ [N/m] (≥ 0 for attractive interaction).
    pub f2: f64,
    /// Effective mechanical resonance ω_eff [rad/s].
    pub omega_eff: f64,
}

/// Static force and force gradient of the expanded van der Waals potential.
///
/// F₁ = −HR/(6h²), F₂ = HR/(6h³).
pub fn vdw_force_terms(ts: &TipSurface) -> Result<(f64, f64)> {
    ts.validate()?;
    let f1 = -ts.hamaker_radius / (6.0 * ts.h * ts.h);
    let f2 = ts.hamaker_radius / (6.0 * ts.h * ts.h * ts.h);
    Ok((f1, f2))
}

/// Effective mechanical resonance sqrt(ω_m² − 2F₂/m_eff).
///
/// Fails with [`Error::SnapToContact`] when the gradient destabilizes the
/// oscillator.
pub fn effective_frequency(sp: &SystemParams, f2: f64) -> Result<f64> {
    sp.validate()?;
    let arg = sp.omega_m * sp.omega_m - 2.0 * f2 / sp.m_eff;
    if arg <= 0.0 {
        return Err(Error::SnapToContact {
            f2,
            limit: sp.m_eff * sp.omega_m * sp.omega_m / 2.0,
        });
    }
    Ok(arg.sqrt())
}

/// sqrt(ħ/(2 m_eff ω_m)).
pub fn zero_point_fluctuation(sp: &SystemParams) -> f64 {
    (HBAR / (2.0 * sp.m_eff * sp.omega_m)).sqrt()
}

/// Shifted pump-center detuning Δ̃ = Δ + g₀(β̄₀ + β̄₀*) = Δ + 2g₀ Re β̄₀.
///
/// The static mechanical displacement β̄₀ moves the cavity resonance; the
/// pump center can be placed to compensate (Δ̃ = 0).
pub fn shifted_detuning(delta_pump: f64, g0: f64, beta0: C64) -> f64 {
    delta_pump + 2.0 * g0 * beta0.re
}

/// Bundle of all derived scalars at a given tip–surface configuration.
pub fn derive_quantities(sp: &SystemParams, ts: &TipSurface) -> Result<DerivedQuantities> {
    let (f1, f2) = vdw_force_terms(ts)?;
    Ok(DerivedQuantities {
        x_zpf: zero_point_fluctuation(sp),
        f1,
        f2,
        omega_eff: effective_frequency(sp, f2)?,
    })
}

const BISECT_REL_TOL: f64 = 1e-12;
const BISECT_MAX_ITER: usize = 200;

/// Distance h at which the interaction shifts the mechanical resonance down
/// by `target_shift`, i.e. ω_m − ω_eff(F₂(h)) = target_shift.
///
/// The shift is strictly decreasing in h, so a monotone bisection suffices.
/// Inside the snap-to-contact region the shift is treated as +∞ for
/// bracketing purposes.
pub fn distance_for_shift(sp: &SystemParams, ts: &TipSurface, target_shift: f64) -> Result<f64> {
    sp.validate()?;
    ts.validate()?;
    if !(target_shift > 0.0 && target_shift < sp.omega_m) {
        return Err(Error::InvalidParameter {
            name: "target_shift",
            message: format!(
                "must lie in (0, omega_m) = (0, {:e}), got {:e}",
                sp.omega_m, target_shift
            ),
        });
    }
    let shift = |h: f64| -> f64 {
        let f2 = ts.hamaker_radius / (6.0 * h * h * h);
        let arg = sp.omega_m * sp.omega_m - 2.0 * f2 / sp.m_eff;
        if arg <= 0.0 {
            f64::INFINITY
        } else {
            sp.omega_m - arg.sqrt()
        }
    };

    // Fixed search bracket: 1 fm .. 1 mm covers any physically sensible tip.
    let (lo0, hi0) = (1e-15, 1e-3);
    if shift(hi0) > target_shift || shift(lo0) < target_shift {
        return Err(Error::Bracket {
            target: target_shift,
            lo: lo0,
            hi: hi0,
        });
    }
    let (mut lo, mut hi) = (lo0, hi0);
    for _ in 0..BISECT_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if shift(mid) >= target_shift {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= BISECT_REL_TOL * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    pub(crate) fn paper_system() -> SystemParams {
        SystemParams {
            omega_c: TAU * 4.5e9,
            omega_m: TAU * 5.37e6,
            kappa: TAU * 1.0e6,
            gamma: TAU * 2.3e3,
            m_eff: 5.4e-11,
            g0: TAU * 1.0e3,
        }
    }

    fn paper_tip() -> TipSurface {
        TipSurface {
            hamaker_radius: 3.55e-28,
            h: 0.5e-9,
        }
    }

    // Frozen against a separate arithmetic script evaluating the closed
    // forms at the default parameter set.
    const X_ZPF_ORACLE: f64 = 1.7011755241678387e-16;
    const F1_ORACLE: f64 = -2.366666666666666e-10;
    const F2_ORACLE: f64 = 0.47333333333333316;
    const OMEGA_EFF_ORACLE: f64 = 33_740_445.310_500_82;
    const SHIFT_HZ_ORACLE: f64 = 41.34671203394247;
    const H_GAMMA_ORACLE: f64 = 1.3099000736863474e-10;

    #[test]
    fn vdw_terms_match_oracle() {
        let (f1, f2) = vdw_force_terms(&paper_tip()).unwrap();
        assert_relative_eq!(f1, F1_ORACLE, max_relative = 1e-12);
        assert_relative_eq!(f2, F2_ORACLE, max_relative = 1e-12);
    }

    #[test]
    fn vdw_switched_off() {
        let (f1, f2) = vdw_force_terms(&TipSurface {
            hamaker_radius: 0.0,
            h: 1e-9,
        })
        .unwrap();
        assert_eq!((f1, f2), (0.0, 0.0));
    }

    #[test]
    fn vdw_rejects_nonpositive_distance() {
        let r = vdw_force_terms(&TipSurface {
            hamaker_radius: 1e-28,
            h: 0.0,
        });
        assert!(matches!(r, Err(Error::InvalidParameter { name: "h", .. })));
    }

    #[test]
    fn effective_frequency_zero_gradient_identity() {
        let sp = paper_system();
        assert_eq!(effective_frequency(&sp, 0.0).unwrap(), sp.omega_m);
    }

    #[test]
    fn effective_frequency_matches_oracle() {
        let sp = paper_system();
        let w = effective_frequency(&sp, F2_ORACLE).unwrap();
        assert_relative_eq!(w, OMEGA_EFF_ORACLE, max_relative = 1e-12);
        assert_relative_eq!((sp.omega_m - w) / TAU, SHIFT_HZ_ORACLE, max_relative = 1e-9);
    }

    #[test]
    fn effective_frequency_snap_boundary() {
        let sp = paper_system();
        let f2_limit = sp.m_eff * sp.omega_m * sp.omega_m / 2.0;
        assert!(matches!(
            effective_frequency(&sp, f2_limit),
            Err(Error::SnapToContact { .. })
        ));
    }

    #[test]
    fn x_zpf_matches_oracle() {
        assert_relative_eq!(
            zero_point_fluctuation(&paper_system()),
            X_ZPF_ORACLE,
            max_relative = 1e-12
        );
    }

    #[test]
    fn x_zpf_square_root_scaling() {
        let sp = paper_system();
        let x = zero_point_fluctuation(&sp);
        let heavier = SystemParams {
            m_eff: 4.0 * sp.m_eff,
            ..sp
        };
        assert_relative_eq!(zero_point_fluctuation(&heavier), x / 2.0, max_relative = 1e-14);
        let stiffer = SystemParams {
            omega_m: 4.0 * sp.omega_m,
            ..sp
        };
        assert_relative_eq!(zero_point_fluctuation(&stiffer), x / 2.0, max_relative = 1e-14);
    }

    #[test]
    fn shifted_detuning_definition() {
        assert_eq!(shifted_detuning(0.0, TAU * 1e3, C64::new(0.0, 0.0)), 0.0);
        let d = shifted_detuning(0.0, TAU * 1e3, C64::new(1.0, 2.0));
        assert_relative_eq!(d, 2.0 * TAU * 1e3, max_relative = 1e-14);
        // setpoint compensation
        let b0 = C64::new(-3.7, 0.4);
        let delta = -2.0 * (TAU * 1e3) * b0.re;
        assert_relative_eq!(shifted_detuning(delta, TAU * 1e3, b0), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn distance_for_one_linewidth_shift() {
        let sp = paper_system();
        let h = distance_for_shift(&sp, &paper_tip(), sp.gamma).unwrap();
        // Independent oracle: coarse scan plus regula falsi on the closed
        // form, written without reference to the bisection above.
        let shift = |h: f64| sp.omega_m - (sp.omega_m.powi(2) - 3.55e-28 / (3.0 * h.powi(3) * sp.m_eff)).sqrt();
        let (mut a, mut b) = (1e-10, 2e-10);
        for _ in 0..200 {
            let (fa, fb) = (shift(a) - sp.gamma, shift(b) - sp.gamma);
            let c = b - fb * (b - a) / (fb - fa);
            if shift(c) > sp.gamma {
                a = c;
            } else {
                b = c;
            }
        }
        assert_relative_eq!(h, 0.5 * (a + b), max_relative = 1e-9);
        assert_relative_eq!(h, H_GAMMA_ORACLE, max_relative = 1e-9);
    }

    #[test]
    fn distance_for_vanishing_shift_is_a_bracket_error() {
        let sp = paper_system();
        // A shift this small needs h beyond the 1 mm bracket edge.
        let r = distance_for_shift(&sp, &paper_tip(), 1e-30);
        assert!(matches!(r, Err(Error::Bracket { .. })));
    }

    #[test]
    fn derive_quantities_invariants() {
        let dq = derive_quantities(&paper_system(), &paper_tip()).unwrap();
        assert!(dq.x_zpf > 0.0);
        assert!(dq.f1 <= 0.0);
        assert!(dq.f2 >= 0.0);
        assert!(dq.omega_eff <= paper_system().omega_m);
    }

    proptest! {
        // Round trip h -> shift -> h over the working range of distances.
        #[test]
        fn shift_distance_round_trip(h in 1e-10_f64..1e-8) {
            let sp = paper_system();
            let ts = TipSurface { hamaker_radius: 3.55e-28, h };
            let dq = derive_quantities(&sp, &ts).unwrap();
            let shift = sp.omega_m - dq.omega_eff;
            prop_assume!(shift > 1e-6);
            let back = distance_for_shift(&sp, &ts, shift).unwrap();
            prop_assert!((back - h).abs() <= 1e-9 * h);
        }

        #[test]
        fn effective_frequency_strictly_decreasing(f2 in 0.0_f64..30_000.0, df in 1.0_f64..1000.0) {
            let sp = paper_system();
            let w1 = effective_frequency(&sp, f2).unwrap();
            let w2 = effective_frequency(&sp, f2 + df).unwrap();
            prop_assert!(w2 < w1);
        }

        #[test]
        fn x_zpf_normalization_identity(m in 1e-15_f64..1e-6, f in 1e3_f64..1e9) {
            let sp = SystemParams { m_eff: m, omega_m: TAU * f, ..paper_system() };
            let x = zero_point_fluctuation(&sp);
            let unit = x * (2.0 * m * sp.omega_m / crate::HBAR).sqrt();
            prop_assert!((unit - 1.0).abs() < 1e-12);
        }
    }
}
