//! Per-ω evaluation of the full model: steady state, diffusion, transfer,
//! spin wave and quadrature covariance.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entanglement::{
    duan_min, duan_value, extended_covariance, spinwave_output, DuanWitness, EntanglementError,
    QuadratureCovariance, Sign, SpinWaveDefinition, SpinWaveMode,
};
use crate::langevin_noise::{
    diffusion_matrix_with, source_covariances, spatial_scale, DiffusionMatrix, DiffusionModel,
    NoiseError, ReservoirSharing,
};
use crate::params::{derive, DerivedParams, ParamError, PhysicalParams};
use crate::propagation::{
    drift_matrix, transfer, CouplingForm, DriftMatrix, ModeCovariance, ModeLayout, NoiseTreatment,
    PropagationError, SourceCovariance, TransferOptions, TransferSolution, DEFAULT_GAIN_CEILING,
};
use crate::steady_state::{steady_state, DensityMatrix3, SteadyStateError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    SteadyState(#[from] SteadyStateError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Propagation(#[from] PropagationError),
    #[error(transparent)]
    Entanglement(#[from] EntanglementError),
}

impl ModelError {
    /// Frequency at which a numerical failure happened, if any.
    pub fn omega(&self) -> Option<f64> {
        match self {
            ModelError::Propagation(PropagationError::NumericalOverflow { omega, .. }) => {
                Some(*omega)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_pairs: usize,
    pub noise: NoiseTreatment,
    pub diffusion: DiffusionModel,
    pub sharing: ReservoirSharing,
    pub spin_wave: SpinWaveDefinition,
    #[serde(default)]
    pub coupling: CouplingForm,
    /// Spin-wave normalization; `None` means `√N`.
    pub kappa_s: Option<f64>,
    pub gain_ceiling: f64,
    /// Multiplies the diffusion matrix. Only for fault injection.
    pub diffusion_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_pairs: 1,
            noise: NoiseTreatment::Langevin,
            diffusion: DiffusionModel::FirstOrder,
            sharing: ReservoirSharing::Independent,
            spin_wave: SpinWaveDefinition::Endpoint,
            coupling: CouplingForm::AsPrinted,
            kappa_s: None,
            gain_ceiling: DEFAULT_GAIN_CEILING,
            diffusion_scale: 1.0,
        }
    }
}

impl ModelConfig {
    pub fn pairs(mut self, n: usize) -> Self {
        self.n_pairs = n;
        self
    }

    pub fn noise(mut self, noise: NoiseTreatment) -> Self {
        self.noise = noise;
        self
    }

    pub fn kappa(mut self, kappa: f64) -> Self {
        self.kappa_s = Some(kappa);
        self
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    pub params: PhysicalParams,
    pub derived: DerivedParams,
    pub steady: DensityMatrix3,
    pub diffusion: DiffusionMatrix,
    pub layout: ModeLayout,
    pub config: ModelConfig,
    sources: SourceCovariance,
}

/// Everything computed at one Fourier frequency.
#[derive(Debug, Clone)]
pub struct PointResult {
    pub omega: f64,
    pub transfer: TransferSolution,
    pub spin: SpinWaveMode,
    pub modes: ModeCovariance,
    pub quadratures: QuadratureCovariance,
}

impl PointResult {
    pub fn duan(&self, i: &str, j: &str, sign: Sign) -> Result<DuanWitness, EntanglementError> {
        duan_value(&self.quadratures, i, j, sign)
    }

    pub fn duan_min(&self, i: &str, j: &str) -> Result<DuanWitness, EntanglementError> {
        duan_min(&self.quadratures, i, j)
    }

    /// Symplectic positivity over the field modes only.
    pub fn field_symplectic_min(&self) -> f64 {
        let n = self.transfer.n_modes();
        self.quadratures
            .symplectic_min_eigenvalue(&(0..n).collect::<Vec<_>>())
    }
}

impl Model {
    pub fn new(params: &PhysicalParams, config: ModelConfig) -> Result<Self, ModelError> {
        derive(params)?;
        let ss = steady_state(params)?;
        Self::with_steady_state(params, ss, config)
    }

    /// Uses a caller-supplied zeroth-order state instead of solving for it.
    pub fn with_steady_state(
        params: &PhysicalParams,
        steady: DensityMatrix3,
        config: ModelConfig,
    ) -> Result<Self, ModelError> {
        let derived = derive(params)?;
        let layout = ModeLayout::from_params(params, config.n_pairs, config.sharing)?;
        let diffusion =
            diffusion_matrix_with(&steady, params, config.diffusion).scaled(config.diffusion_scale);
        let sources = match config.noise {
            NoiseTreatment::Langevin => {
                let (sym, comm) =
                    source_covariances(&diffusion, &layout.sources, spatial_scale(&derived));
                SourceCovariance { sym, comm }
            }
            NoiseTreatment::Excluded => SourceCovariance::zero(layout.sources.len()),
        };
        Ok(Self {
            params: params.clone(),
            derived,
            steady,
            diffusion,
            layout,
            config,
            sources,
        })
    }

    pub fn kappa(&self) -> f64 {
        self.config
            .kappa_s
            .unwrap_or_else(|| self.derived.n_atoms.sqrt())
    }

    pub fn drift(&self, omega: f64) -> DriftMatrix {
        drift_matrix(omega, &self.steady, &self.derived, &self.layout)
            .with_coupling(self.config.coupling, &self.layout)
    }

    pub fn sources(&self) -> &SourceCovariance {
        &self.sources
    }

    pub fn transfer_options(&self) -> TransferOptions {
        TransferOptions {
            gain_ceiling: self.config.gain_ceiling,
            z_average: self.config.spin_wave == SpinWaveDefinition::ZAveraged,
            profile_points: 0,
        }
    }

    pub fn solve(&self, omega: f64) -> Result<TransferSolution, ModelError> {
        Ok(transfer(
            &self.drift(omega),
            self.params.length,
            &self.sources,
            &self.transfer_options(),
        )?)
    }

    pub fn spin_wave(&self, omega: f64) -> SpinWaveMode {
        spinwave_output(
            &self.layout,
            &self.steady,
            &self.derived,
            omega,
            self.params.gamma0,
            self.kappa(),
            self.config.spin_wave,
            &self.diffusion,
        )
    }

    pub fn evaluate(&self, omega: f64) -> Result<PointResult, ModelError> {
        let ts = self.solve(omega)?;
        let spin = self.spin_wave(omega);
        let modes = extended_covariance(&ts, &self.layout, Some(&spin), self.config.noise)?;
        let quadratures = QuadratureCovariance::from_modes(&modes);
        Ok(PointResult {
            omega,
            transfer: ts,
            spin,
            modes,
            quadratures,
        })
    }
}
