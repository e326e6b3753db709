//! Spin-wave output mode, quadrature covariances and the Duan witness.
//!
//! Quadratures are `x = a + a†` and `p = -i(a - a†)`, so vacuum has unit
//! variance and `V = Var(x_i ± x_j) + Var(p_i ∓ p_j) < 4` witnesses
//! inseparability.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::langevin_noise::{DiffusionMatrix, NoiseChannel};
use crate::linalg::{c, min_hermitian_eigenvalue, zeros, CMat, I};
use crate::params::DerivedParams;
use crate::propagation::{
    ModeCovariance, ModeLayout, NoiseTreatment, TransferSolution, Transition,
};
use crate::steady_state::DensityMatrix3;

pub const SPIN_WAVE: &str = "S";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EntanglementError {
    #[error("unknown mode `{0}`")]
    UnknownMode(String),
    #[error("z-averaged spin wave needs a transfer solution computed with z_average")]
    MissingZAverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SpinWaveDefinition {
    /// Built from the output fields at `z = L`.
    #[default]
    Endpoint,
    /// `(1/L) ∫ σ12(z) dz` over the medium.
    ZAveraged,
}

/// `S = κ/(γ0 + iω) [ -i g1 ⟨σ32⟩ Σ f_13 + i g2 ⟨σ13⟩ Σ f_23† + F12 ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinWaveMode {
    pub definition: SpinWaveDefinition,
    pub kappa: f64,
    pub prefactor: Complex64,
    /// Coefficients of `S` over the doubled field basis.
    pub row: Vec<Complex64>,
    /// `⟨{S_F, S_F†}⟩` of the `F12` part.
    pub noise_sym: f64,
}

pub fn spinwave_output(
    layout: &ModeLayout,
    ss: &DensityMatrix3,
    d: &DerivedParams,
    omega: f64,
    gamma0: f64,
    kappa: f64,
    definition: SpinWaveDefinition,
    diffusion: &DiffusionMatrix,
) -> SpinWaveMode {
    let n = layout.n_modes();
    let prefactor = c(kappa) / Complex64::new(gamma0, omega);
    let on_13 = -I * d.g1 * ss.sigma(3, 2);
    let on_23_dag = I * d.g2 * ss.sigma(1, 3);
    let mut row = vec![c(0.0); 2 * n];
    for (k, mode) in layout.modes.iter().enumerate() {
        match mode.transition {
            Transition::T13 => row[k] = prefactor * on_13,
            Transition::T23 => row[n + k] = prefactor * on_23_dag,
        }
    }
    let f12 = diffusion.two_d(NoiseChannel::F12, NoiseChannel::F21)
        + diffusion.two_d(NoiseChannel::F21, NoiseChannel::F12);
    let noise_sym = prefactor.norm_sqr() * f12.re / d.n_atoms;
    SpinWaveMode {
        definition,
        kappa,
        prefactor,
        row,
        noise_sym,
    }
}

/// Joint covariance of the output fields and, optionally, the spin wave.
pub fn extended_covariance(
    ts: &TransferSolution,
    layout: &ModeLayout,
    spin: Option<&SpinWaveMode>,
    treatment: NoiseTreatment,
) -> Result<ModeCovariance, EntanglementError> {
    let n = layout.n_modes();
    let mut labels: Vec<String> = layout.labels().iter().map(|l| l.to_string()).collect();
    let langevin = treatment == NoiseTreatment::Langevin;

    let Some(spin) = spin else {
        let mut sigma = &ts.t * ts.t.adjoint();
        if langevin {
            sigma += &ts.noise_sym;
        }
        return Ok(ModeCovariance { labels, sigma });
    };

    // Source vector: X(L), plus the depth average Y for the averaged definition.
    let (src_t, src_noise, s_offset) = match spin.definition {
        SpinWaveDefinition::Endpoint => (ts.t.clone(), ts.noise_sym.clone(), 0),
        SpinWaveDefinition::ZAveraged => {
            let za = ts
                .z_average
                .as_ref()
                .ok_or(EntanglementError::MissingZAverage)?;
            let mut t = zeros(4 * n, 2 * n);
            t.view_mut((0, 0), (2 * n, 2 * n)).copy_from(&ts.t);
            t.view_mut((2 * n, 0), (2 * n, 2 * n)).copy_from(&za.t_avg);
            (t, za.noise_sym.clone(), 2 * n)
        }
    };
    let mut src = &src_t * src_t.adjoint();
    if langevin {
        src += &src_noise;
    }

    let m = n + 1;
    let mut r = zeros(2 * m, src.nrows());
    for k in 0..n {
        r[(k, k)] = c(1.0);
        r[(m + k, n + k)] = c(1.0);
    }
    for k in 0..n {
        r[(n, s_offset + k)] = spin.row[k];
        r[(n, s_offset + n + k)] = spin.row[n + k];
        // S† picks the conjugate coefficient on the opposite half.
        r[(2 * m - 1, s_offset + n + k)] = spin.row[k].conj();
        r[(2 * m - 1, s_offset + k)] = spin.row[n + k].conj();
    }
    let mut sigma = &r * src * r.adjoint();
    if langevin {
        sigma[(n, n)] += c(spin.noise_sym);
        sigma[(2 * m - 1, 2 * m - 1)] += c(spin.noise_sym);
    }
    labels.push(SPIN_WAVE.to_string());
    Ok(ModeCovariance { labels, sigma })
}

/// Real covariance of `(x_1, p_1, x_2, p_2, ...)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureCovariance {
    pub labels: Vec<String>,
    pub cov: DMatrix<f64>,
}

impl QuadratureCovariance {
    pub fn from_modes(mc: &ModeCovariance) -> Self {
        let m = mc.n_modes();
        let mut w = zeros(2 * m, 2 * m);
        for k in 0..m {
            w[(2 * k, k)] = c(1.0);
            w[(2 * k, m + k)] = c(1.0);
            w[(2 * k + 1, k)] = -I;
            w[(2 * k + 1, m + k)] = I;
        }
        let full = &w * &mc.sigma * w.adjoint();
        let cov = full.map(|z| 0.5 * z.re);
        Self {
            labels: mc.labels.clone(),
            cov,
        }
    }

    pub fn identity(labels: &[&str]) -> Self {
        let n = labels.len();
        Self {
            labels: labels.iter().map(|s| s.to_string()).collect(),
            cov: DMatrix::identity(2 * n, 2 * n),
        }
    }

    pub fn index_of(&self, label: &str) -> Result<usize, EntanglementError> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| EntanglementError::UnknownMode(label.to_string()))
    }

    /// Smallest eigenvalue of `Cov + iΩ` restricted to `modes`.
    pub fn symplectic_min_eigenvalue(&self, modes: &[usize]) -> f64 {
        let k = modes.len();
        let mut h = zeros(2 * k, 2 * k);
        for (a, &ma) in modes.iter().enumerate() {
            for (b, &mb) in modes.iter().enumerate() {
                for u in 0..2 {
                    for v in 0..2 {
                        h[(2 * a + u, 2 * b + v)] = c(self.cov[(2 * ma + u, 2 * mb + v)]);
                    }
                }
            }
            h[(2 * a, 2 * a + 1)] += I;
            h[(2 * a + 1, 2 * a)] -= I;
        }
        min_hermitian_eigenvalue(&h)
    }

    /// Rotates the quadratures of mode `k` by `θ`: `a -> a e^{-iθ}`.
    pub fn rotated(&self, k: usize, theta: f64) -> Self {
        let n = self.cov.nrows();
        let mut r = DMatrix::<f64>::identity(n, n);
        let (s, co) = theta.sin_cos();
        r[(2 * k, 2 * k)] = co;
        r[(2 * k, 2 * k + 1)] = s;
        r[(2 * k + 1, 2 * k)] = -s;
        r[(2 * k + 1, 2 * k + 1)] = co;
        Self {
            labels: self.labels.clone(),
            cov: &r * &self.cov * r.transpose(),
        }
    }
}

/// `Plus`: `u = x_i + x_j`, `v = p_i - p_j`. `Minus`: the reverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuanWitness {
    pub i: String,
    pub j: String,
    pub sign: Sign,
    pub value: f64,
    pub entangled: bool,
}

pub fn duan_value(
    cov: &QuadratureCovariance,
    i: &str,
    j: &str,
    sign: Sign,
) -> Result<DuanWitness, EntanglementError> {
    let (a, b) = (cov.index_of(i)?, cov.index_of(j)?);
    let value = duan_at(&cov.cov, a, b, sign.value());
    Ok(DuanWitness {
        i: i.into(),
        j: j.into(),
        sign,
        value,
        entangled: value < 4.0,
    })
}

fn duan_at(cov: &DMatrix<f64>, a: usize, b: usize, s: f64) -> f64 {
    let (xa, pa, xb, pb) = (2 * a, 2 * a + 1, 2 * b, 2 * b + 1);
    cov[(xa, xa)] + cov[(xb, xb)] + 2.0 * s * cov[(xa, xb)] + cov[(pa, pa)] + cov[(pb, pb)]
        - 2.0 * s * cov[(pa, pb)]
}

/// Sign convention stated for the named pairs: `-` in u for (a1, S), `+` otherwise.
pub fn preferred_sign(i: &str, j: &str) -> Sign {
    let pair = [i, j];
    if pair.contains(&SPIN_WAVE) && (pair.contains(&"a1") || pair.contains(&"a2")) {
        Sign::Minus
    } else {
        Sign::Plus
    }
}

/// Both sign conventions; ties go to [`preferred_sign`].
pub fn duan_min(
    cov: &QuadratureCovariance,
    i: &str,
    j: &str,
) -> Result<DuanWitness, EntanglementError> {
    let plus = duan_value(cov, i, j, Sign::Plus)?;
    let minus = duan_value(cov, i, j, Sign::Minus)?;
    let tie = (plus.value - minus.value).abs() <= 1e-12 * plus.value.abs().max(1.0);
    Ok(if tie {
        if preferred_sign(i, j) == Sign::Plus {
            plus
        } else {
            minus
        }
    } else if plus.value < minus.value {
        plus
    } else {
        minus
    })
}

/// Minimum over both signs and `samples` relative phases of mode `j`.
pub fn duan_min_over_phase(
    cov: &QuadratureCovariance,
    i: &str,
    j: &str,
    samples: usize,
) -> Result<f64, EntanglementError> {
    let (a, b) = (cov.index_of(i)?, cov.index_of(j)?);
    let mut best = f64::INFINITY;
    for k in 0..samples {
        let theta = 2.0 * PI * k as f64 / samples as f64;
        let rot = cov.rotated(b, theta);
        for s in [1.0, -1.0] {
            best = best.min(duan_at(&rot.cov, a, b, s));
        }
    }
    Ok(best)
}

/// Doubled-basis drift of a two-mode squeezer `da/dz = r b†`, `db/dz = r a†`.
pub fn two_mode_squeezer_drift(r: f64) -> CMat {
    let mut m = zeros(4, 4);
    m[(0, 3)] = c(r);
    m[(1, 2)] = c(r);
    m[(2, 1)] = c(r);
    m[(3, 0)] = c(r);
    m
}
