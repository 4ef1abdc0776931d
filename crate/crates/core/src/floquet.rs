//! Linearized quantum fluctuations of the driven system, solved per
//! frequency as a truncated Floquet block linear system.
//!
//! Operators are expanded in Fourier components rotating at integer
//! multiples of the drive, Ô(t) = Σ_n e^{inω_d t} Ô^{(n)}(t). In the
//! frequency domain the components of the 4-vector
//! x̂^{(n)} = (d̂^{(n)}, ĉ^{(n)}, d̂^{(n)†}, ĉ^{(n)†})ᵀ satisfy a block-banded
//! system: block row n carries −i(ω − nω_d)·I + A⁽⁰⁾ on the diagonal and
//! A⁽∓¹⁾ coupling to x̂^{(n±1)}. The noise inputs
//! (−√κ d̂_in, −√Γ ĉ_in, −√κ d̂_in†, −√Γ ĉ_in†) enter the n = 0 block only.
//!
//! Spectra are assembled from the solved transfer matrices with
//! delta-correlated thermal inputs,
//! ⟨d̂_in(ω) d̂_in†(ω′)⟩ = 2π(n̄_c+1)δ(ω+ω′) and the mechanical analogue,
//! according to
//! S⁽ᵐ⁾_{OO′}(ω) = Σ_n ∫dω′/2π ⟨Ô^{(n)}(ω+nω_d) Ô′^{(m−n)}(ω′)⟩.

use std::collections::HashMap;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::classical::{drive_for_beta1, steady_state, HarmonicDecomposition, IntegratorConfig};
use crate::error::{Error, Result};
use crate::model::{shifted_detuning, DerivedQuantities, DriveConfig, SystemParams};

/// Thermal occupations, truncation order and detection quadrature phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    /// Mean thermal photon occupancy of the cavity bath.
    pub n_th_cavity: f64,
    /// Mean thermal phonon occupancy of the mechanical bath.
    pub n_th_mech: f64,
    /// Floquet truncation N; Fourier indices run over n ∈ [−N, N].
    pub floquet_order: usize,
    /// Additional quadrature phase θ on top of the backaction-evading
    /// reference (see [`FloquetParams::bae_theta`]).
    pub theta: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            n_th_cavity: 0.0,
            n_th_mech: 0.0,
            floquet_order: 1,
            theta: 0.0,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.n_th_cavity >= 0.0) || !(self.n_th_mech >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "n_th",
                message: "thermal occupancies must be >= 0".into(),
            });
        }
        if self.floquet_order < 1 {
            return Err(Error::InvalidParameter {
                name: "floquet_order",
                message: "must be >= 1".into(),
            });
        }
        if !self.theta.is_finite() {
            return Err(Error::InvalidParameter {
                name: "theta",
                message: "must be finite".into(),
            });
        }
        Ok(())
    }
}

/// Everything the block matrix needs: rates, drive frequency, shifted
/// detuning and the classical steady-state coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloquetParams {
    pub kappa: f64,
    pub gamma: f64,
    pub g0: f64,
    pub omega_d: f64,
    pub omega_eff: f64,
    /// Δ̃ = Δ + 2g₀ Re β̄₀.
    pub delta_tilde: f64,
    pub alpha_minus: C64,
    pub alpha_c: C64,
    pub alpha_plus: C64,
    pub beta_1: C64,
    /// Truncation order N ≥ 1.
    pub order: usize,
}

impl FloquetParams {
    pub fn from_steady_state(
        sp: &SystemParams,
        dq: &DerivedQuantities,
        dc: &DriveConfig,
        harmonics: &HarmonicDecomposition,
        order: usize,
    ) -> Result<Self> {
        sp.validate()?;
        if order < 1 {
            return Err(Error::InvalidParameter {
                name: "order",
                message: "Floquet truncation must be >= 1".into(),
            });
        }
        Ok(FloquetParams {
            kappa: sp.kappa,
            gamma: sp.gamma,
            g0: sp.g0,
            omega_d: dc.omega_d,
            omega_eff: dq.omega_eff,
            delta_tilde: shifted_detuning(dc.delta_pump, sp.g0, harmonics.beta_0),
            alpha_minus: harmonics.alpha_minus,
            alpha_c: harmonics.alpha_c,
            alpha_plus: harmonics.alpha_plus,
            beta_1: harmonics.beta_1,
            order,
        })
    }

    pub fn dim(&self) -> usize {
        4 * (2 * self.order + 1)
    }

    /// Quadrature reference angle of the measured (backaction-decoupled)
    /// quadrature, (arg ᾱ₋ − arg ᾱ₊)/2.
    ///
    /// The cavity response rotates the pump phases, so the beat of the
    /// intracavity tones — and with it the quadrature the measurement
    /// couples to — is rotated relative to the inputs. Detection phases are
    /// referenced to this angle; `theta = 0` in [`NoiseConfig`] therefore
    /// always means the measured quadrature. With the pumps off the angle is
    /// defined as zero (the variance is isotropic there anyway).
    pub fn bae_theta(&self) -> f64 {
        if self.alpha_minus.norm() > 0.0 && self.alpha_plus.norm() > 0.0 {
            0.5 * (self.alpha_minus.arg() - self.alpha_plus.arg())
        } else {
            0.0
        }
    }

    /// Stationary 4×4 block A⁽⁰⁾ (row order d, c, d†, c†).
    fn a0(&self) -> [[C64; 4]; 4] {
        let i = C64::i();
        let g = self.g0;
        let ac = self.alpha_c;
        let z = C64::new(0.0, 0.0);
        [
            [
                -i * self.delta_tilde + 0.5 * self.kappa,
                -i * g * ac,
                z,
                -i * g * ac,
            ],
            [
                -i * g * ac.conj(),
                i * self.omega_eff + 0.5 * self.gamma,
                -i * g * ac,
                z,
            ],
            [
                z,
                i * g * ac.conj(),
                i * self.delta_tilde + 0.5 * self.kappa,
                i * g * ac.conj(),
            ],
            [
                i * g * ac.conj(),
                z,
                i * g * ac,
                -i * self.omega_eff + 0.5 * self.gamma,
            ],
        ]
    }

    /// A⁽⁻¹⁾, coupling block row n to x̂^{(n+1)}.
    fn a_minus1(&self) -> [[C64; 4]; 4] {
        let f = -C64::i() * self.g0;
        let (am, ap, b1) = (self.alpha_minus, self.alpha_plus, self.beta_1);
        let z = C64::new(0.0, 0.0);
        [
            [f * b1, f * ap, z, f * ap],
            [f * am.conj(), z, f * ap, z],
            [z, -f * am.conj(), -f * b1, -f * am.conj()],
            [-f * am.conj(), z, -f * ap, z],
        ]
    }

    /// A⁽¹⁾, coupling block row n to x̂^{(n−1)}.
    fn a_plus1(&self) -> [[C64; 4]; 4] {
        let f = -C64::i() * self.g0;
        let (am, ap, b1) = (self.alpha_minus, self.alpha_plus, self.beta_1);
        let z = C64::new(0.0, 0.0);
        [
            [f * b1.conj(), f * am, z, f * am],
            [f * ap.conj(), z, f * am, z],
            [z, -f * ap.conj(), -f * b1.conj(), -f * ap.conj()],
            [-f * ap.conj(), z, -f * am, z],
        ]
    }
}

/// Operator selector within one Fourier block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    /// Optical fluctuation d̂.
    D = 0,
    /// Mechanical fluctuation ĉ.
    C = 1,
    /// d̂†.
    DDag = 2,
    /// ĉ†.
    CDag = 3,
}

/// Assembled block matrix M(ω) together with its provenance.
#[derive(Debug, Clone)]
pub struct FloquetSystem {
    pub omega: f64,
    pub order: usize,
    pub matrix: DMatrix<C64>,
}

/// Build M(ω): banded in Fourier blocks, diagonal −i(ω − nω_d)·I + A⁽⁰⁾.
pub fn build_block_matrix(omega: f64, fp: &FloquetParams) -> FloquetSystem {
    let n_blocks = 2 * fp.order + 1;
    let dim = 4 * n_blocks;
    let a0 = fp.a0();
    let am1 = fp.a_minus1();
    let ap1 = fp.a_plus1();
    let mut m = DMatrix::from_element(dim, dim, C64::new(0.0, 0.0));
    for bi in 0..n_blocks {
        let n = bi as i64 - fp.order as i64;
        let shift = -C64::i() * (omega - n as f64 * fp.omega_d);
        let r = 4 * bi;
        for row in 0..4 {
            for col in 0..4 {
                m[(r + row, r + col)] = a0[row][col];
            }
            m[(r + row, r + row)] += shift;
        }
        if bi + 1 < n_blocks {
            for row in 0..4 {
                for col in 0..4 {
                    m[(r + row, r + 4 + col)] = am1[row][col];
                }
            }
        }
        if bi >= 1 {
            for row in 0..4 {
                for col in 0..4 {
                    m[(r + row, r - 4 + col)] = ap1[row][col];
                }
            }
        }
    }
    FloquetSystem {
        omega,
        order: fp.order,
        matrix: m,
    }
}

/// Condition-number estimates above this are treated as singular.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Transfer matrix T(ω): response of every Fourier operator to the four
/// input channels (d̂_in, ĉ_in, d̂_in†, ĉ_in†).
#[derive(Debug, Clone)]
pub struct TransferMatrix {
    pub omega: f64,
    pub order: usize,
    /// dim × 4.
    t: DMatrix<C64>,
    /// Ratio of extreme |Uِᵢᵢ| from the LU factorization; a cheap lower bound
    /// on the true condition number.
    pub cond_estimate: f64,
}

impl TransferMatrix {
    /// Transfer row of operator `op` in Fourier block `n` as a 4-vector over
    /// the input channels.
    pub fn row(&self, op: Op, n: i32) -> [C64; 4] {
        let bi = (n + self.order as i32) as usize;
        let r = 4 * bi + op as usize;
        [self.t[(r, 0)], self.t[(r, 1)], self.t[(r, 2)], self.t[(r, 3)]]
    }
}

/// Invert the block system at ω for the four input columns, scaled by
/// (−√κ, −√Γ, −√κ, −√Γ) on the n = 0 block.
pub fn solve_fourier_operators(omega: f64, fp: &FloquetParams) -> Result<TransferMatrix> {
    if !(fp.kappa > 0.0) || !(fp.gamma > 0.0) {
        return Err(Error::InvalidParameter {
            name: "rates",
            message: "kappa and gamma must be strictly positive".into(),
        });
    }
    let sys = build_block_matrix(omega, fp);
    let dim = fp.dim();
    let mut rhs = DMatrix::from_element(dim, 4, C64::new(0.0, 0.0));
    let mid = 4 * fp.order;
    rhs[(mid, 0)] = C64::new(-fp.kappa.sqrt(), 0.0);
    rhs[(mid + 1, 1)] = C64::new(-fp.gamma.sqrt(), 0.0);
    rhs[(mid + 2, 2)] = C64::new(-fp.kappa.sqrt(), 0.0);
    rhs[(mid + 3, 3)] = C64::new(-fp.gamma.sqrt(), 0.0);

    let lu = sys.matrix.clone().lu();
    let diag = lu.u().diagonal();
    let (mut dmin, mut dmax) = (f64::INFINITY, 0.0_f64);
    for d in diag.iter() {
        let a = d.norm();
        dmin = dmin.min(a);
        dmax = dmax.max(a);
    }
    let cond = if dmin > 0.0 { dmax / dmin } else { f64::INFINITY };
    if cond > CONDITION_LIMIT {
        return Err(Error::NearSingular { omega, cond });
    }
    let t = lu
        .solve(&rhs)
        .ok_or(Error::NearSingular { omega, cond })?;
    Ok(TransferMatrix {
        omega,
        order: fp.order,
        t,
        cond_estimate: cond,
    })
}

/// Contraction of two transfer rows against the input correlator matrix.
/// `a` is evaluated at +ν, `b` at −ν.
#[inline]
fn contract(a: &[C64; 4], b: &[C64; 4], nc: &NoiseConfig) -> C64 {
    a[0] * b[2] * (nc.n_th_cavity + 1.0)
        + a[2] * b[0] * nc.n_th_cavity
        + a[1] * b[3] * (nc.n_th_mech + 1.0)
        + a[3] * b[1] * nc.n_th_mech
}

/// Per-evaluation cache of transfer matrices at ω + k·ω_d and its negative.
struct TransferCache<'a> {
    fp: &'a FloquetParams,
    base: f64,
    entries: HashMap<i32, (TransferMatrix, TransferMatrix)>,
}

impl<'a> TransferCache<'a> {
    fn new(fp: &'a FloquetParams, base: f64) -> Self {
        TransferCache {
            fp,
            base,
            entries: HashMap::new(),
        }
    }

    fn pair(&mut self, k: i32) -> Result<&(TransferMatrix, TransferMatrix)> {
        if !self.entries.contains_key(&k) {
            let nu = self.base + k as f64 * self.fp.omega_d;
            let pos = solve_fourier_operators(nu, self.fp)?;
            let neg = solve_fourier_operators(-nu, self.fp)?;
            self.entries.insert(k, (pos, neg));
        }
        Ok(self.entries.get(&k).unwrap())
    }

    /// S⁽ᵐ⁾_{AB}(base + k_shift·ω_d).
    fn component(&mut self, a: Op, b: Op, m: i32, k_shift: i32, nc: &NoiseConfig) -> Result<C64> {
        let order = self.fp.order as i32;
        let mut total = C64::new(0.0, 0.0);
        for n in -order..=order {
            if (m - n).abs() > order {
                continue;
            }
            let (pos, neg) = self.pair(k_shift + n)?;
            let ra = pos.row(a, n);
            let rb = neg.row(b, m - n);
            total += contract(&ra, &rb, nc);
        }
        Ok(total)
    }

    /// S⁽ᵐ⁾_{xx}(base + k_shift·ω_d) with x̂ = ĉ + ĉ†.
    fn x_component(&mut self, m: i32, k_shift: i32, nc: &NoiseConfig) -> Result<C64> {
        let order = self.fp.order as i32;
        let mut total = C64::new(0.0, 0.0);
        for n in -order..=order {
            if (m - n).abs() > order {
                continue;
            }
            let (pos, neg) = self.pair(k_shift + n)?;
            let ca = pos.row(Op::C, n);
            let cda = pos.row(Op::CDag, n);
            let ra = [ca[0] + cda[0], ca[1] + cda[1], ca[2] + cda[2], ca[3] + cda[3]];
            let cb = neg.row(Op::C, m - n);
            let cdb = neg.row(Op::CDag, m - n);
            let rb = [cb[0] + cdb[0], cb[1] + cdb[1], cb[2] + cdb[2], cb[3] + cdb[3]];
            total += contract(&ra, &rb, nc);
        }
        Ok(total)
    }
}

/// Power-spectrum component S⁽ᵐ⁾_{OO′}(ω) from delta-correlated inputs.
pub fn spectrum_component(
    o: Op,
    o_prime: Op,
    m: i32,
    omega: f64,
    fp: &FloquetParams,
    nc: &NoiseConfig,
) -> Result<C64> {
    nc.validate()?;
    let max = 2 * fp.order as i32;
    if m.abs() > max {
        return Err(Error::Range { m, max });
    }
    TransferCache::new(fp, omega).component(o, o_prime, m, 0, nc)
}

/// Result of the quadrature variance integral.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureVariance {
    /// ⟨X̂²⟩ in units of x_zpf² (1/2 for vacuum).
    pub value: f64,
    /// |integrand| at the grid edges relative to its peak.
    pub edge_ratio: f64,
    /// Largest pointwise |Im|/peak-|Re| of the assembled integrand.
    pub max_imag_ratio: f64,
}

const EDGE_DECAY_LIMIT: f64 = 1e-6;
const IMAG_RESIDUE_LIMIT: f64 = 1e-8;

/// Variance of the mechanical quadrature
/// X̂ = (ĉ e^{iω_d t + iθ_eff} + ĉ† e^{−iω_d t − iθ_eff})/√2 with
/// θ_eff = θ + θ_bae:
///
/// ```text
/// ⟨X̂²⟩ = ½ ∫ dω/2π [ S⁽⁻²⁾_cc(ω+ω_d) e^{2iθ_eff} + S⁽⁰⁾_{cc†}(ω+ω_d)
///                   + S⁽⁰⁾_{c†c}(ω−ω_d) + S⁽²⁾_{c†c†}(ω−ω_d) e^{−2iθ_eff} ]
/// ```
///
/// integrated by the trapezoid rule over `grid`. The integrand must have
/// decayed at the grid edges and its imaginary part must vanish to rounding.
pub fn quadrature_variance(fp: &FloquetParams, nc: &NoiseConfig, grid: &[f64]) -> Result<QuadratureVariance> {
    nc.validate()?;
    check_grid(grid)?;
    let theta = nc.theta + fp.bae_theta();
    let phase = C64::from_polar(1.0, 2.0 * theta);

    let integrand: Vec<C64> = grid
        .par_iter()
        .map(|&w| -> Result<C64> {
            let mut cache_p = TransferCache::new(fp, w + fp.omega_d);
            let mut cache_m = TransferCache::new(fp, w - fp.omega_d);
            let t1 = cache_p.component(Op::C, Op::C, -2, 0, nc)? * phase;
            let t2 = cache_p.component(Op::C, Op::CDag, 0, 0, nc)?;
            let t3 = cache_m.component(Op::CDag, Op::C, 0, 0, nc)?;
            let t4 = cache_m.component(Op::CDag, Op::CDag, 2, 0, nc)? * phase.conj();
            Ok(0.5 * (t1 + t2 + t3 + t4))
        })
        .collect::<Result<_>>()?;

    let peak = integrand.iter().map(|v| v.re.abs()).fold(0.0, f64::max);
    if peak <= 0.0 {
        return Ok(QuadratureVariance {
            value: 0.0,
            edge_ratio: 0.0,
            max_imag_ratio: 0.0,
        });
    }
    let max_imag = integrand.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    let max_imag_ratio = max_imag / peak;
    if max_imag_ratio > IMAG_RESIDUE_LIMIT {
        return Err(Error::Numerics {
            message: format!(
                "quadrature integrand has imaginary residue {max_imag_ratio:.3e} above {IMAG_RESIDUE_LIMIT:.1e}"
            ),
        });
    }
    let edge_ratio = integrand[0]
        .norm()
        .max(integrand[grid.len() - 1].norm())
        / peak;
    if edge_ratio > EDGE_DECAY_LIMIT {
        return Err(Error::TruncatedIntegral {
            ratio: edge_ratio,
            limit: EDGE_DECAY_LIMIT,
        });
    }

    let mut sum = 0.0;
    for k in 0..grid.len() - 1 {
        sum += 0.5 * (grid[k + 1] - grid[k]) * (integrand[k].re + integrand[k + 1].re);
    }
    Ok(QuadratureVariance {
        value: sum / std::f64::consts::TAU,
        edge_ratio,
        max_imag_ratio,
    })
}

/// Frequency grid with spectral density values.
#[derive(Debug, Clone)]
pub struct SpectrumResult {
    /// Measurement frequencies relative to ω_p [rad/s].
    pub freq: Vec<f64>,
    pub values: Vec<f64>,
    pub label: String,
    pub variance: Option<f64>,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 3 {
        return Err(Error::InvalidParameter {
            name: "freq_grid",
            message: "needs at least 3 points".into(),
        });
    }
    if !grid.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidParameter {
            name: "freq_grid",
            message: "must be strictly increasing".into(),
        });
    }
    Ok(())
}

fn realize_spectrum(freq: &[f64], raw: Vec<C64>, label: &str) -> Result<SpectrumResult> {
    let peak = raw.iter().map(|v| v.re.abs()).fold(0.0, f64::max);
    let floor = 1e-300_f64.max(peak);
    for (w, v) in freq.iter().zip(&raw) {
        if !v.re.is_finite() || v.im.abs() > 1e-10 * floor {
            return Err(Error::Numerics {
                message: format!(
                    "spectrum {label} not real at omega = {w:.6e}: value {v:?} (peak {peak:.3e})"
                ),
            });
        }
    }
    Ok(SpectrumResult {
        freq: freq.to_vec(),
        values: raw.into_iter().map(|v| v.re).collect(),
        label: label.to_string(),
        variance: None,
    })
}

/// Optical output power spectral density κ·S⁽⁰⁾_{d†d}(ω) from the full
/// Floquet transfer matrices.
pub fn optical_spectrum_full(
    grid: &[f64],
    fp: &FloquetParams,
    nc: &NoiseConfig,
) -> Result<SpectrumResult> {
    nc.validate()?;
    check_grid(grid)?;
    let raw: Vec<C64> = grid
        .par_iter()
        .map(|&w| {
            TransferCache::new(fp, w)
                .component(Op::DDag, Op::D, 0, 0, nc)
                .map(|s| fp.kappa * s)
        })
        .collect::<Result<_>>()?;
    realize_spectrum(grid, raw, "s_out_full")
}

/// Optical output spectrum through the reduced path: mechanical spectra
/// S⁽ᵐ⁾_xx from the Floquet solve combined with the dressed susceptibility,
///
/// ```text
/// χ′_c(ω)⁻¹ = χ_c(ω)⁻¹ + g₀²|β̄₁|²[χ_c(ω−ω_d) + χ_c(ω+ω_d)]
/// ᾱ′₋ = ᾱ₋ + ig₀β̄₁*χ_c(ω+ω_d)ᾱ_c      (and the ᾱ′₊, ᾱ′_c analogues)
/// ```
///
/// and the nine-term combination of S⁽ᵐ⁾_xx at shifted arguments, all times
/// κg₀²|χ′_c(ω)|². Valid for fast periodic modulation κ, Γ ≪ ω_d; terms
/// beyond n ± 2 are discarded. With a thermal cavity bath the cross terms
/// between shot noise and mechanics are not represented here, so agreement
/// with the full path is expected for n̄_c = 0.
pub fn optical_spectrum_reduced(
    grid: &[f64],
    fp: &FloquetParams,
    nc: &NoiseConfig,
) -> Result<SpectrumResult> {
    nc.validate()?;
    check_grid(grid)?;
    let chi_c = |w: f64| -> C64 {
        C64::new(0.5 * fp.kappa, -(w + fp.delta_tilde)).finv()
    };
    let i = C64::i();
    let g = fp.g0;
    let b1 = fp.beta_1;

    let raw: Vec<C64> = grid
        .par_iter()
        .map(|&w| -> Result<C64> {
            let mut cache = TransferCache::new(fp, w);
            let chi_p = chi_c(w - fp.omega_d);
            let chi_m = chi_c(w + fp.omega_d);
            let chi_prime =
                (chi_c(w).finv() + g * g * b1.norm_sqr() * (chi_p + chi_m)).finv();
            let a_m = fp.alpha_minus + i * g * b1.conj() * chi_m * fp.alpha_c;
            let a_p = fp.alpha_plus + i * g * b1 * chi_p * fp.alpha_c;
            let a_c = fp.alpha_c
                + i * g * b1 * chi_p * fp.alpha_minus
                + i * g * b1.conj() * chi_m * fp.alpha_plus;

            let s = a_m.norm_sqr() * cache.x_component(0, 1, nc)?
                + a_p.norm_sqr() * cache.x_component(0, -1, nc)?
                + a_m.conj() * a_p * cache.x_component(-2, 1, nc)?
                + a_p.conj() * a_m * cache.x_component(2, -1, nc)?
                + a_c.norm_sqr() * cache.x_component(0, 0, nc)?
                + a_m.conj() * a_c * cache.x_component(-1, 1, nc)?
                + a_p.conj() * a_c * cache.x_component(1, -1, nc)?
                + a_c.conj() * a_m * cache.x_component(1, 0, nc)?
                + a_c.conj() * a_p * cache.x_component(-1, 0, nc)?;
            Ok(fp.kappa * g * g * chi_prime.norm_sqr() * s)
        })
        .collect::<Result<_>>()?;
    realize_spectrum(grid, raw, "s_out_reduced")
}

/// Merge dense windows around spectral features into one sorted grid.
fn merge_segments(mut points: Vec<f64>, min_spacing: f64) -> Vec<f64> {
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out = Vec::with_capacity(points.len());
    for p in points {
        if out.last().is_none_or(|&q| p - q > min_spacing) {
            out.push(p);
        }
    }
    out
}

fn linspace_into(points: &mut Vec<f64>, lo: f64, hi: f64, n: usize) {
    let step = (hi - lo) / (n - 1) as f64;
    for k in 0..n {
        points.push(lo + k as f64 * step);
    }
}

/// Integration grid for [`quadrature_variance`]: Γ-resolved windows around
/// the features at 0, ±ω_d and ±2ω_d, κ-wide surroundings, and coarse
/// coverage far enough out that Lorentzian tails truncate below 1e-6 of the
/// integral.
pub fn variance_frequency_grid(omega_d: f64, gamma: f64, kappa: f64) -> Vec<f64> {
    let mut pts = Vec::new();
    let features = [0.0, omega_d, -omega_d, 2.0 * omega_d, -2.0 * omega_d];
    for &f in &features {
        linspace_into(&mut pts, f - 40.0 * gamma, f + 40.0 * gamma, 1601);
        linspace_into(&mut pts, f - 1.5 * kappa, f + 1.5 * kappa, 301);
    }
    let edge = 2.0 * omega_d + (50.0 * kappa).max(3000.0 * gamma);
    linspace_into(&mut pts, -edge, edge, 1501);
    merge_segments(pts, 1e-6 * gamma)
}

/// Measurement grid for the output spectrum: uniform base over
/// ±`half_span_over_omega_d`·ω_d with Γ-resolved windows on the features at
/// 0, ±ω_d and ±2ω_eff.
pub fn spectrum_frequency_grid(
    omega_d: f64,
    omega_eff: f64,
    gamma: f64,
    half_span_over_omega_d: f64,
    base_points: usize,
    feature_points_per_gamma: f64,
    feature_halfwidth_gammas: f64,
) -> Vec<f64> {
    let mut pts = Vec::new();
    let span = half_span_over_omega_d * omega_d;
    linspace_into(&mut pts, -span, span, base_points.max(2));
    let half = feature_halfwidth_gammas * gamma;
    let n = (2.0 * feature_halfwidth_gammas * feature_points_per_gamma).ceil() as usize + 1;
    for f in [
        0.0,
        omega_d,
        -omega_d,
        2.0 * omega_eff,
        -2.0 * omega_eff,
    ] {
        linspace_into(&mut pts, f - half, f + half, n.max(3));
    }
    merge_segments(pts, 1e-6 * gamma)
}

/// One point of the variance-versus-detuning sweep.
#[derive(Debug, Clone)]
pub struct DetuningPoint {
    /// ω_eff − ω_d [rad/s].
    pub detuning: f64,
    pub omega_eff: f64,
    pub result: Result<DetuningValue>,
}

#[derive(Debug, Clone, Copy)]
pub struct DetuningValue {
    pub x2: f64,
    pub beta1_mag: f64,
    pub alpha_c_mag: f64,
    pub delta_tilde: f64,
}

/// ⟨X̂²⟩ as the effective mechanical frequency detunes from the drive with
/// every other setting held fixed. The classical harmonics are recomputed
/// per point; failures are flagged per point rather than aborting the sweep.
pub fn variance_vs_detuning(
    sp: &SystemParams,
    dq_ref: &DerivedQuantities,
    dc: &DriveConfig,
    integ: &IntegratorConfig,
    nc: &NoiseConfig,
    detunings: &[f64],
    var_grid: &[f64],
) -> Vec<DetuningPoint> {
    detunings
        .par_iter()
        .map(|&det| {
            let omega_eff = dc.omega_d + det;
            let result = (|| -> Result<DetuningValue> {
                let dq = DerivedQuantities {
                    omega_eff,
                    ..*dq_ref
                };
                let harmonics = steady_state(sp, &dq, dc, integ)?;
                let fp = FloquetParams::from_steady_state(sp, &dq, dc, &harmonics, nc.floquet_order)?;
                let var = quadrature_variance(&fp, nc, var_grid)?;
                Ok(DetuningValue {
                    x2: var.value,
                    beta1_mag: harmonics.beta_1.norm(),
                    alpha_c_mag: harmonics.alpha_c.norm(),
                    delta_tilde: fp.delta_tilde,
                })
            })();
            DetuningPoint {
                detuning: det,
                omega_eff,
                result,
            }
        })
        .collect()
}

/// One point of the variance-versus-drive sweep.
#[derive(Debug, Clone)]
pub struct DrivePoint {
    pub beta1_target: f64,
    pub result: Result<DriveValue>,
}

#[derive(Debug, Clone, Copy)]
pub struct DriveValue {
    pub x2: f64,
    pub beta1_mag: f64,
    /// 2g₀|β̄₁|/κ.
    pub coupling_ratio: f64,
    /// Set when the linearization bound 2g₀|β̄₁|/κ < 0.1 is violated.
    pub linearization_warning: bool,
}

/// Linearization bound on 2g₀|β̄₁|/κ beyond which points carry a warning.
pub const LINEARIZATION_BOUND: f64 = 0.1;

/// ⟨X̂²⟩ against coherent oscillation amplitude at fixed detuning. The
/// mechanical drive is set through the Lorentzian inverse for each target
/// |β̄₁|, then verified against the converged steady state and corrected once
/// if off by more than 0.1%.
pub fn variance_vs_drive(
    sp: &SystemParams,
    dq: &DerivedQuantities,
    dc_base: &DriveConfig,
    integ: &IntegratorConfig,
    nc: &NoiseConfig,
    beta1_targets: &[f64],
    var_grid: &[f64],
) -> Vec<DrivePoint> {
    beta1_targets
        .par_iter()
        .map(|&target| {
            let result = (|| -> Result<DriveValue> {
                let mut mag =
                    drive_for_beta1(target, dq.omega_eff, dc_base.omega_d, sp.gamma);
                let mut dc = DriveConfig {
                    beta_in_mag: mag,
                    ..*dc_base
                };
                let mut harmonics = steady_state(sp, dq, &dc, integ)?;
                let achieved = harmonics.beta_1.norm();
                if target > 0.0 && achieved > 0.0 && (achieved - target).abs() > 1e-3 * target {
                    mag *= target / achieved;
                    dc.beta_in_mag = mag;
                    harmonics = steady_state(sp, dq, &dc, integ)?;
                }
                let fp = FloquetParams::from_steady_state(sp, dq, &dc, &harmonics, nc.floquet_order)?;
                let var = quadrature_variance(&fp, nc, var_grid)?;
                let ratio = harmonics.linearization_ratio(sp.g0, sp.kappa);
                Ok(DriveValue {
                    x2: var.value,
                    beta1_mag: harmonics.beta_1.norm(),
                    coupling_ratio: ratio,
                    linearization_warning: ratio >= LINEARIZATION_BOUND,
                })
            })();
            DrivePoint {
                beta1_target: target,
                result,
            }
        })
        .collect()
}
