//! Scalar calibration of the coupling scale η and the spin-wave
//! normalization κ_S against reference correlation values.
//!
//! The fit is a one-time step whose result is written to disk; sweeps only
//! ever read it.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entanglement::SPIN_WAVE;
use crate::params::{derive, PhysicalParams};
use crate::pipeline::{Model, ModelConfig, ModelError};
use crate::propagation::NoiseTreatment;
use crate::sweeps::{map_grid, Execution, GridSpec};

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("target {target} is not bracketed on [{lo}, {hi}] (values {f_lo}, {f_hi})")]
    NoBracket {
        target: f64,
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("calibration file: {0}")]
    Io(#[from] std::io::Error),
    #[error("calibration file: {0}")]
    Json(#[from] serde_json::Error),
}

impl CalibrationError {
    pub fn omega(&self) -> Option<f64> {
        match self {
            CalibrationError::Model(e) => e.omega(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTargets {
    /// Depth of the a1-b1 dip at ω = Δ1.
    pub dip_a1b1: f64,
    /// a1-b1 value at ω = 0 (reported, not fitted).
    pub zero_a1b1: f64,
    /// a1-S value at ω = 0, fitted by κ_S.
    pub zero_a1s: f64,
    pub eta_bracket: (f64, f64),
    /// κ scan starts at this multiple of √N.
    pub kappa_scan_start: f64,
    pub kappa_scan_ratio: f64,
    pub rel_tol: f64,
    pub noise: NoiseTreatment,
}

impl Default for CalibrationTargets {
    fn default() -> Self {
        Self {
            dip_a1b1: 1.11,
            zero_a1b1: 2.0,
            zero_a1s: 1.0,
            eta_bracket: (0.5, 10.0),
            kappa_scan_start: 1e-9,
            kappa_scan_ratio: 10f64.powf(0.25),
            rel_tol: 1e-12,
            noise: NoiseTreatment::Excluded,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorScan {
    pub eta: Vec<f64>,
    pub zero_a1b1: Vec<f64>,
    pub dip_a1b1: Vec<f64>,
}

impl AnchorScan {
    /// Largest |V(0) - target| over the scanned η.
    pub fn zero_spread(&self, target: f64) -> f64 {
        self.zero_a1b1
            .iter()
            .map(|v| (v - target).abs())
            .fold(0.0, f64::max)
    }

    pub fn dip_range(&self) -> f64 {
        let lo = self.dip_a1b1.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self
            .dip_a1b1
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub version: String,
    /// Hash of the base parameters with `coupling_scale` reset to 1.
    pub params_hash: String,
    pub targets: CalibrationTargets,
    pub eta: f64,
    pub kappa_s: f64,
    pub kappa_crossing_found: bool,
    pub noise: NoiseTreatment,
    pub achieved_dip_a1b1: f64,
    pub achieved_zero_a1b1: f64,
    pub achieved_zero_a1s: f64,
    /// η solving V_a1b1(0) = target literally, if bracketed.
    pub zero_anchor_root: Option<f64>,
    pub anchor_scan: AnchorScan,
}

impl Calibration {
    /// Parameters and model configuration with the calibrated scalars applied.
    pub fn apply(
        &self,
        params: &PhysicalParams,
        config: &ModelConfig,
    ) -> (PhysicalParams, ModelConfig) {
        let mut p = params.clone();
        p.coupling_scale = self.eta;
        let cfg = ModelConfig {
            noise: self.noise,
            kappa_s: Some(self.kappa_s),
            ..config.clone()
        };
        (p, cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CalibrationError> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), CalibrationError> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        fs::write(path, s)?;
        Ok(())
    }
}

pub fn base_hash(params: &PhysicalParams) -> String {
    let mut p = params.clone();
    p.coupling_scale = 1.0;
    p.hash()
}

fn model(
    params: &PhysicalParams,
    eta: f64,
    kappa: Option<f64>,
    noise: NoiseTreatment,
) -> Result<Model, ModelError> {
    let mut p = params.clone();
    p.coupling_scale = eta;
    let cfg = ModelConfig {
        noise,
        kappa_s: kappa,
        ..ModelConfig::default()
    };
    Model::new(&p, cfg)
}

/// ω points of the single-pair grid inside the refined patch around Δ1.
pub fn dip_window(params: &PhysicalParams) -> Vec<f64> {
    let spec = GridSpec::single_pair();
    spec.build(params)
        .into_iter()
        .filter(|w| (w - params.delta1).abs() <= spec.refine_halfwidth)
        .collect()
}

/// Minimum of V_a1b1 over the dip window for a given η.
pub fn dip_depth(
    params: &PhysicalParams,
    eta: f64,
    noise: NoiseTreatment,
    exec: Execution,
) -> Result<f64, ModelError> {
    let m = model(params, eta, None, noise)?;
    let window = dip_window(params);
    let vals = map_grid(exec, &window, |w| -> Result<f64, ModelError> {
        Ok(m.evaluate(w)?.duan_min("a1", "b1")?.value)
    });
    let mut best = f64::INFINITY;
    for v in vals {
        best = best.min(v?);
    }
    Ok(best)
}

fn zero_value(m: &Model, i: &str, j: &str) -> Result<f64, ModelError> {
    Ok(m.evaluate(0.0)?.duan_min(i, j)?.value)
}

/// Bisection for `f(x) = target` on `[lo, hi]`, optionally in log x.
fn bisect<F>(
    mut f: F,
    target: f64,
    lo: f64,
    hi: f64,
    log: bool,
    rel_tol: f64,
) -> Result<f64, CalibrationError>
where
    F: FnMut(f64) -> Result<f64, CalibrationError>,
{
    let (mut a, mut b) = if log { (lo.ln(), hi.ln()) } else { (lo, hi) };
    let map = |x: f64| if log { x.exp() } else { x };
    let fa = f(map(a))? - target;
    let fb = f(map(b))? - target;
    if fa == 0.0 {
        return Ok(map(a));
    }
    if fb == 0.0 {
        return Ok(map(b));
    }
    if fa.signum() == fb.signum() {
        return Err(CalibrationError::NoBracket {
            target,
            lo,
            hi,
            f_lo: fa + target,
            f_hi: fb + target,
        });
    }
    let sa = fa.signum();
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (map(b) - map(a)).abs() <= rel_tol * map(m).abs() {
            break;
        }
        let fm = f(map(m))? - target;
        if fm == 0.0 {
            return Ok(map(m));
        }
        if fm.signum() == sa {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(map(0.5 * (a + b)))
}

fn scan_etas(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| (lo.ln() + (hi.ln() - lo.ln()) * k as f64 / (n - 1) as f64).exp())
        .collect()
}

pub fn anchor_scan(
    params: &PhysicalParams,
    targets: &CalibrationTargets,
    n: usize,
    exec: Execution,
) -> Result<AnchorScan, ModelError> {
    let etas = scan_etas(targets.eta_bracket.0, targets.eta_bracket.1, n);
    let mut zero = Vec::with_capacity(n);
    let mut dip = Vec::with_capacity(n);
    for &eta in &etas {
        let m = model(params, eta, None, targets.noise)?;
        zero.push(zero_value(&m, "a1", "b1")?);
        dip.push(dip_depth(params, eta, targets.noise, exec)?);
    }
    Ok(AnchorScan {
        eta: etas,
        zero_a1b1: zero,
        dip_a1b1: dip,
    })
}

/// Walks κ upward geometrically from the scan start and returns the first
/// crossing of the target, refined by bisection in log κ.
fn fit_kappa(
    params: &PhysicalParams,
    eta: f64,
    targets: &CalibrationTargets,
) -> Result<(f64, bool), CalibrationError> {
    let mut p = params.clone();
    p.coupling_scale = eta;
    let root_n = derive(&p).map_err(ModelError::from)?.n_atoms.sqrt();
    let start = targets.kappa_scan_start * root_n;
    let f = |k: f64| -> Result<f64, CalibrationError> {
        Ok(zero_value(
            &model(params, eta, Some(k), targets.noise)?,
            "a1",
            SPIN_WAVE,
        )?)
    };
    let t = targets.zero_a1s;
    let mut prev_k = start;
    let mut prev = f(start)? - t;
    let mut k = start;
    while k < 10.0 * root_n {
        k *= targets.kappa_scan_ratio;
        let cur = f(k)? - t;
        if prev == 0.0 {
            return Ok((prev_k, true));
        }
        if cur.signum() != prev.signum() {
            return Ok((bisect(f, t, prev_k, k, true, targets.rel_tol)?, true));
        }
        prev_k = k;
        prev = cur;
    }
    Ok((start, false))
}

pub fn calibrate(
    params: &PhysicalParams,
    targets: &CalibrationTargets,
    exec: Execution,
) -> Result<Calibration, CalibrationError> {
    let (lo, hi) = targets.eta_bracket;
    let eta = bisect(
        |e| Ok(dip_depth(params, e, targets.noise, exec)?),
        targets.dip_a1b1,
        lo,
        hi,
        true,
        targets.rel_tol,
    )?;
    let (kappa_s, kappa_crossing_found) = fit_kappa(params, eta, targets)?;

    let zero_anchor_root = bisect(
        |e| {
            Ok(zero_value(
                &model(params, e, None, targets.noise)?,
                "a1",
                "b1",
            )?)
        },
        targets.zero_a1b1,
        lo,
        hi,
        true,
        targets.rel_tol,
    )
    .ok();

    let m = model(params, eta, Some(kappa_s), targets.noise)?;
    let r0 = m.evaluate(0.0)?;
    Ok(Calibration {
        version: env!("CARGO_PKG_VERSION").to_string(),
        params_hash: base_hash(params),
        targets: targets.clone(),
        eta,
        kappa_s,
        kappa_crossing_found,
        noise: targets.noise,
        achieved_dip_a1b1: dip_depth(params, eta, targets.noise, exec)?,
        achieved_zero_a1b1: r0.duan_min("a1", "b1").map_err(ModelError::from)?.value,
        achieved_zero_a1s: r0
            .duan_min("a1", SPIN_WAVE)
            .map_err(ModelError::from)?
            .value,
        zero_anchor_root,
        anchor_scan: anchor_scan(params, targets, 9, exec)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_linear_and_log() {
        let r = bisect(|x| Ok(x * x), 2.0, 0.0, 2.0, false, 1e-14).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
        let r = bisect(|x| Ok(x.ln()), 1.0, 1e-3, 1e3, true, 1e-14).unwrap();
        assert!((r - 1f64.exp()).abs() < 1e-12);
        assert!(matches!(
            bisect(Ok, 5.0, 0.0, 1.0, false, 1e-12),
            Err(CalibrationError::NoBracket { .. })
        ));
    }

    #[test]
    fn json_round_trip() {
        let cal = Calibration {
            version: "0".into(),
            params_hash: "h".into(),
            targets: CalibrationTargets::default(),
            eta: 2.9123456789012345,
            kappa_s: 0.0123,
            kappa_crossing_found: true,
            noise: NoiseTreatment::Excluded,
            achieved_dip_a1b1: 1.11,
            achieved_zero_a1b1: 2.0,
            achieved_zero_a1s: 1.0,
            zero_anchor_root: None,
            anchor_scan: AnchorScan {
                eta: vec![1.0],
                zero_a1b1: vec![2.0],
                dip_a1b1: vec![1.6],
            },
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/cal.json");
        cal.save(&path).unwrap();
        assert_eq!(Calibration::load(&path).unwrap(), cal);
    }
}
