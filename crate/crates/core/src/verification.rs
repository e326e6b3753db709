//! Independent oracles and invariant checks, each reported as a residual
//! against a pinned tolerance.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::linalg::rel_diff;
use crate::params::PhysicalParams;
use crate::pipeline::{Model, ModelConfig, ModelError};
use crate::propagation::transfer_step_oracle;
use crate::steady_state::{dark_state, steady_state};
use crate::sweeps::{
    alpha_grid, linear_grid, map_grid, single_pair_set, sweep_alpha, Execution, SweepError,
};

pub const COMMUTATOR_TOL: f64 = 1e-6;
pub const ORACLE_TOL: f64 = 1e-8;
pub const ORACLE_STEPS: usize = 100_000;
pub const DECOUPLING_TOL: f64 = 1e-9;
pub const ALPHA_SPREAD_TOL: f64 = 1e-9;
pub const DARK_STATE_TOL: f64 = 1e-6;
pub const SYMPLECTIC_TOL: f64 = 1e-8;
/// Factor applied to the diffusion matrix in the negative control.
pub const FAULT_DIFFUSION_SCALE: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckScope {
    pub params_hash: String,
    pub omegas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub scope: CheckScope,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// A fault-injection control; the suite requires it to fail.
    pub negative_control: bool,
}

impl CheckReport {
    pub fn new(name: &str, scope: CheckScope, residual: f64, tolerance: f64) -> Self {
        // NaN residuals fail.
        let pass = residual <= tolerance;
        Self {
            name: name.to_string(),
            scope,
            residual,
            tolerance,
            pass,
            negative_control: false,
        }
    }

    fn control(mut self) -> Self {
        self.negative_control = true;
        self
    }

    /// Passing checks and failing negative controls are both acceptable.
    pub fn acceptable(&self) -> bool {
        self.pass != self.negative_control
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "check={} pass={} control={} residual={:.6e} tolerance={:.1e} points={} params={}",
            self.name,
            self.pass,
            self.negative_control,
            self.residual,
            self.tolerance,
            self.scope.omegas.len(),
            &self.scope.params_hash[..12.min(self.scope.params_hash.len())],
        )
    }
}

/// 64 points over [-3000, 3000] MHz.
pub fn commutator_grid() -> Vec<f64> {
    linear_grid(-3000.0, 3000.0, 64)
}

/// 16 points over [-2900, 2900] MHz kept at least 20 MHz from both detunings.
pub fn oracle_grid(p: &PhysicalParams) -> Vec<f64> {
    let mut out = Vec::with_capacity(16);
    let mut k = 0;
    while out.len() < 16 {
        let w = -2900.0 + 359.0 * k as f64;
        k += 1;
        if (w - p.delta1).abs() >= 20.0 && (w - p.delta2).abs() >= 20.0 {
            out.push(w);
        }
    }
    out
}

fn scope(p: &PhysicalParams, omegas: &[f64]) -> CheckScope {
    CheckScope {
        params_hash: p.hash(),
        omegas: omegas.to_vec(),
    }
}

fn max_of(results: Vec<Result<f64, ModelError>>) -> Result<f64, ModelError> {
    let mut worst: f64 = 0.0;
    for r in results {
        let v = r?;
        worst = if v.is_nan() { f64::NAN } else { worst.max(v) };
    }
    Ok(worst)
}

/// Largest `|[f_k, f_k†] - 1|` over modes and grid.
pub fn check_commutators(
    p: &PhysicalParams,
    config: &ModelConfig,
    grid: &[f64],
    exec: Execution,
) -> Result<CheckReport, ModelError> {
    let model = Model::new(p, config.clone())?;
    let res = max_of(map_grid(exec, grid, |w| {
        Ok(model.solve(w)?.commutator_residual())
    }))?;
    Ok(CheckReport::new(
        "commutators",
        scope(p, grid),
        res,
        COMMUTATOR_TOL,
    ))
}

/// Same check with the diffusion matrix scaled by [`FAULT_DIFFUSION_SCALE`].
pub fn check_commutators_fault(
    p: &PhysicalParams,
    config: &ModelConfig,
    grid: &[f64],
    exec: Execution,
) -> Result<CheckReport, ModelError> {
    let cfg = ModelConfig {
        diffusion_scale: FAULT_DIFFUSION_SCALE,
        ..config.clone()
    };
    let mut r = check_commutators(p, &cfg, grid, exec)?.control();
    r.name = "commutators_fault_injection".into();
    Ok(r)
}

/// Exponential transfer against fixed-step RK4, relative max-abs difference
/// of `T` and of the noise integral.
pub fn check_oracle_equivalence(
    p: &PhysicalParams,
    config: &ModelConfig,
    grid: &[f64],
    n_steps: usize,
    exec: Execution,
) -> Result<CheckReport, ModelError> {
    let model = Model::new(p, config.clone())?;
    let res = max_of(map_grid(exec, grid, |w| {
        let exact = model.solve(w)?;
        let oracle = transfer_step_oracle(&model.drift(w), p.length, model.sources(), n_steps);
        let mut r = rel_diff(&oracle.t, &exact.t);
        if crate::linalg::max_abs(&exact.noise_sym) > 0.0 {
            r = r.max(rel_diff(&oracle.noise_sym, &exact.noise_sym));
        }
        Ok(r)
    }))?;
    Ok(CheckReport::new(
        "oracle_equivalence",
        scope(p, grid),
        res,
        ORACLE_TOL,
    ))
}

/// Limit and invariance bundle: decoupling, α-independence, dark state and
/// symplectic positivity.
pub fn check_limits(
    p: &PhysicalParams,
    config: &ModelConfig,
    grid: &[f64],
    exec: Execution,
) -> Result<Vec<CheckReport>, SweepError> {
    let mut out = Vec::with_capacity(4);

    // Without the probe the ground coherence vanishes and the pair decouples.
    let mut q = p.clone();
    q.omega_p = 0.0;
    let model = Model::new(&q, config.clone())?;
    let res = max_of(map_grid(exec, grid, |w| {
        Ok((model.evaluate(w)?.duan_min("a1", "b1")?.value - 4.0).abs())
    }))?;
    out.push(CheckReport::new(
        "decoupling",
        scope(&q, grid),
        res,
        DECOUPLING_TOL,
    ));

    let spectrum = sweep_alpha(p, config, &single_pair_set(), &alpha_grid(), 0.0, exec)?;
    let mut spread: f64 = 0.0;
    for m in 0..spectrum.pairs.len() {
        let col: Vec<f64> = spectrum.values.iter().map(|r| r[m]).collect();
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        spread = spread.max((hi - lo) / lo.abs().max(f64::MIN_POSITIVE));
    }
    out.push(CheckReport::new(
        "alpha_independence",
        scope(p, &[0.0]),
        spread,
        ALPHA_SPREAD_TOL,
    ));

    let mut d = p.clone();
    d.gamma0 = 0.0;
    d.omega_p = d.omega_c;
    let ss = steady_state(&d).map_err(ModelError::from)?;
    let res = ss.max_abs_diff(&dark_state(&d));
    out.push(CheckReport::new(
        "dark_state",
        scope(&d, &[]),
        res,
        DARK_STATE_TOL,
    ));

    let model = Model::new(p, config.clone())?;
    let res = max_of(map_grid(exec, grid, |w| {
        Ok((-model.evaluate(w)?.field_symplectic_min()).max(0.0))
    }))?;
    out.push(CheckReport::new(
        "symplectic_positivity",
        scope(p, grid),
        res,
        SYMPLECTIC_TOL,
    ));
    Ok(out)
}

/// Every check at `p`, run concurrently. Property checks use the Langevin
/// model regardless of `config.noise`.
pub fn run_all(
    p: &PhysicalParams,
    config: &ModelConfig,
    exec: Execution,
) -> Result<Vec<CheckReport>, SweepError> {
    let cfg = ModelConfig {
        noise: crate::propagation::NoiseTreatment::Langevin,
        ..config.clone()
    };
    let grid = commutator_grid();
    let ogrid = oracle_grid(p);
    let (a, b, c, d) = std::thread::scope(|s| {
        let a = s.spawn(|| check_commutators(p, &cfg, &grid, exec));
        let b = s.spawn(|| check_commutators_fault(p, &cfg, &grid, exec));
        let c = s.spawn(|| check_oracle_equivalence(p, &cfg, &ogrid, ORACLE_STEPS, exec));
        let d = s.spawn(|| check_limits(p, &cfg, &grid, exec));
        (
            a.join().expect("check thread"),
            b.join().expect("check thread"),
            c.join().expect("check thread"),
            d.join().expect("check thread"),
        )
    });
    let mut out = vec![a?, b?, c?];
    out.extend(d?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::reference_params;

    #[test]
    fn report_pass_flag() {
        let s = CheckScope {
            params_hash: "abc".into(),
            omegas: vec![],
        };
        assert!(CheckReport::new("x", s.clone(), 0.5, 1.0).pass);
        assert!(!CheckReport::new("x", s.clone(), 2.0, 1.0).pass);
        assert!(!CheckReport::new("x", s.clone(), f64::NAN, 1.0).pass);
        assert!(!CheckReport::new("x", s, 2.0, 1.0).control().pass);
    }

    #[test]
    fn oracle_grid_avoids_resonances() {
        let p = reference_params();
        let g = oracle_grid(&p);
        assert_eq!(g.len(), 16);
        assert!(g
            .iter()
            .all(|w| (w - p.delta1).abs() >= 20.0 && (w - p.delta2).abs() >= 20.0));
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn free_propagation_commutators_are_exact() {
        let mut p = reference_params();
        p.coupling_scale = 0.0;
        let r = check_commutators(
            &p,
            &ModelConfig::default(),
            &commutator_grid(),
            Execution::default(),
        )
        .unwrap();
        assert!(r.pass && r.residual < 1e-14, "{r}");
    }

    #[test]
    fn fault_injection_is_detected() {
        let p = reference_params();
        let grid = commutator_grid();
        let ok =
            check_commutators(&p, &ModelConfig::default(), &grid, Execution::default()).unwrap();
        let bad = check_commutators_fault(&p, &ModelConfig::default(), &grid, Execution::default())
            .unwrap();
        assert!(ok.pass, "{ok}");
        assert!(!bad.pass && bad.acceptable(), "{bad}");
    }
}
