//! Physical inputs, unit conventions and derived couplings.
//!
//! Every rate, Rabi frequency, detuning and Fourier frequency is an angular
//! frequency in MHz (10^6 rad/s). Lengths are in meters and the speed of
//! light is carried as [`SPEED_OF_LIGHT`] in m·MHz, so `omega / c` is in 1/m.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Speed of light in m·MHz (m per microsecond).
pub const SPEED_OF_LIGHT: f64 = 299.792458;

const SPEED_OF_LIGHT_SI: f64 = 299_792_458.0;
const HBAR: f64 = 1.054_571_817e-34;
const EPSILON_0: f64 = 8.854_187_812_8e-12;
/// MHz -> rad/s.
const MHZ: f64 = 1.0e6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("invalid parameter `{field}` = {value}: {reason}")]
    Invalid {
        field: &'static str,
        value: f64,
        reason: &'static str,
    },
}

/// Raw physical inputs of the triple-Λ medium.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Decay rate 3 -> 1 (MHz).
    pub gamma1: f64,
    /// Decay rate 3 -> 2 (MHz).
    pub gamma2: f64,
    /// Ground-state coherence decay rate of σ12 (MHz).
    pub gamma0: f64,
    /// Probe Rabi frequency on 2-3 (MHz).
    pub omega_p: f64,
    /// Coupling Rabi frequency on 1-3 (MHz).
    pub omega_c: f64,
    /// Detuning of the first scattering field (MHz).
    pub delta1: f64,
    /// Detuning of the second scattering field (MHz).
    pub delta2: f64,
    /// Ground hyperfine splitting (MHz).
    pub omega12: f64,
    /// Atomic number density (1/m^3).
    pub n0: f64,
    /// Beam radius (m).
    pub r: f64,
    /// Medium length (m).
    pub length: f64,
    /// Optical wavelength used for the dipole coupling (m).
    pub lambda_optical: f64,
    /// Coherent amplitude of the scattering input b1.
    pub alpha1: Complex64,
    /// Coherent amplitude of the scattering input b2.
    pub alpha2: Complex64,
    /// Dimensionless factor multiplying g1²N and g2²N.
    pub coupling_scale: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        reference_params()
    }
}

/// The experimental reference set: ⁸⁵Rb D1 line, 6 cm cell.
pub fn reference_params() -> PhysicalParams {
    PhysicalParams {
        gamma1: 3.0,
        gamma2: 3.0,
        gamma0: 0.1,
        omega_p: 400.0,
        omega_c: 400.0,
        delta1: -1000.0,
        delta2: 1000.0,
        omega12: 3036.0,
        n0: 5.0e19,
        r: 1.0e-4,
        length: 0.06,
        lambda_optical: 795.0e-9,
        alpha1: Complex64::new(1.0, 0.0),
        alpha2: Complex64::new(1.0, 0.0),
        coupling_scale: 1.0,
    }
}

impl PhysicalParams {
    /// SHA-256 of the canonical JSON encoding, as lowercase hex.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("params serialize");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let positive = [
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
            ("n0", self.n0),
            ("r", self.r),
            ("length", self.length),
            ("lambda_optical", self.lambda_optical),
        ];
        for (field, value) in positive {
            if !value.is_finite() {
                return Err(ParamError::Invalid {
                    field,
                    value,
                    reason: "must be finite",
                });
            }
            if value <= 0.0 {
                return Err(ParamError::Invalid {
                    field,
                    value,
                    reason: "must be > 0",
                });
            }
        }
        let non_negative = [
            ("gamma0", self.gamma0),
            ("coupling_scale", self.coupling_scale),
        ];
        for (field, value) in non_negative {
            if !value.is_finite() {
                return Err(ParamError::Invalid {
                    field,
                    value,
                    reason: "must be finite",
                });
            }
            if value < 0.0 {
                return Err(ParamError::Invalid {
                    field,
                    value,
                    reason: "must be >= 0",
                });
            }
        }
        let finite = [
            ("omega_p", self.omega_p),
            ("omega_c", self.omega_c),
            ("delta1", self.delta1),
            ("delta2", self.delta2),
            ("omega12", self.omega12),
            ("alpha1", self.alpha1.norm()),
            ("alpha2", self.alpha2.norm()),
        ];
        for (field, value) in finite {
            if !value.is_finite() {
                return Err(ParamError::Invalid {
                    field,
                    value,
                    reason: "must be finite",
                });
            }
        }
        Ok(())
    }

    /// Optical coherence decay rate shared by σ13 and σ23.
    pub fn gamma_optical(&self) -> f64 {
        0.5 * (self.gamma1 + self.gamma2)
    }

    /// Non-fatal warnings about leaving the large-detuning regime the
    /// first-order model assumes.
    pub fn validity_warnings(&self) -> Vec<String> {
        let drive = self.omega_p.abs().max(self.omega_c.abs());
        [("delta1", self.delta1), ("delta2", self.delta2)]
            .into_iter()
            .filter(|(_, d)| d.abs() < 5.0 * drive)
            .map(|(name, d)| {
                format!(
                    "|{name}| = {} MHz is below 5·max(Ω_p, Ω_c) = {} MHz; scattering fields may not be independent",
                    d.abs(),
                    5.0 * drive
                )
            })
            .collect()
    }
}

/// Carrier frequencies of the four field modes (MHz, bookkeeping only).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Carriers {
    pub omega_m1: f64,
    pub omega_1: f64,
    pub omega_m2: f64,
    pub omega_2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub gamma13: f64,
    pub gamma23: f64,
    pub n_atoms: f64,
    /// π r² L (m^3).
    pub quant_volume: f64,
    /// Coupling constant of the 1-3 transition (MHz).
    pub g1: f64,
    /// Coupling constant of the 2-3 transition (MHz).
    pub g2: f64,
    /// Dipole moment of the 1-3 transition (C·m).
    pub dipole13: f64,
    /// Dipole moment of the 2-3 transition (C·m).
    pub dipole23: f64,
    /// Single-photon field amplitude for the Stokes mode (V/m).
    pub photon_field1: f64,
    /// Single-photon field amplitude for the scattering mode (V/m).
    pub photon_field2: f64,
    pub carriers: Carriers,
}

impl DerivedParams {
    pub fn g1_sq_n(&self) -> f64 {
        self.g1 * self.g1 * self.n_atoms
    }

    pub fn g2_sq_n(&self) -> f64 {
        self.g2 * self.g2 * self.n_atoms
    }
}

/// Dipole moment from the spontaneous decay rate (Weisskopf–Wigner),
/// `gamma = mu² ω³ / (3π ε0 ħ c³)`, with `gamma` in MHz and `omega` in rad/s.
fn dipole_from_rate(gamma_mhz: f64, omega_si: f64) -> f64 {
    let gamma_si = gamma_mhz * MHZ;
    (3.0 * PI * EPSILON_0 * HBAR * SPEED_OF_LIGHT_SI.powi(3) * gamma_si / omega_si.powi(3)).sqrt()
}

/// Field of a single photon of angular frequency `omega_si` in `volume`.
fn single_photon_field(omega_si: f64, volume: f64) -> f64 {
    (HBAR * omega_si / (2.0 * EPSILON_0 * volume)).sqrt()
}

pub fn derive(params: &PhysicalParams) -> Result<DerivedParams, ParamError> {
    params.validate()?;

    let gamma13 = params.gamma_optical();
    let quant_volume = PI * params.r * params.r * params.length;
    let n_atoms = params.n0 * quant_volume;

    // Both optical transitions share one wavelength; ω12 is sub-ppm of the
    // optical carrier.
    let omega_opt_si = 2.0 * PI * SPEED_OF_LIGHT_SI / params.lambda_optical;
    let dipole13 = dipole_from_rate(params.gamma1, omega_opt_si);
    let dipole23 = dipole_from_rate(params.gamma2, omega_opt_si);
    let photon_field1 = single_photon_field(omega_opt_si, quant_volume);
    let photon_field2 = photon_field1;

    let scale = params.coupling_scale.sqrt();
    let g1 = scale * dipole13 * photon_field1 / HBAR / MHZ;
    let g2 = scale * dipole23 * photon_field2 / HBAR / MHZ;

    let omega_32 = omega_opt_si / MHZ;
    // Level 1 (F = 3) sits ω12 above level 2 (F = 2).
    let omega_31 = omega_32 - params.omega12;
    let omega_m1 = omega_32 + params.delta1;
    let omega_m2 = omega_31 + params.delta2;
    let carriers = Carriers {
        omega_m1,
        omega_1: omega_m1 - params.omega12,
        omega_m2,
        omega_2: omega_m2 + params.omega12,
    };

    Ok(DerivedParams {
        gamma13,
        gamma23: gamma13,
        n_atoms,
        quant_volume,
        g1,
        g2,
        dipole13,
        dipole23,
        photon_field1,
        photon_field2,
        carriers,
    })
}
