//! Parameter sweeps over ω, γ0 and α, and dip analytics on the resulting
//! correlation spectra.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entanglement::{Sign, SPIN_WAVE};
use crate::params::PhysicalParams;
use crate::pipeline::{Model, ModelConfig, ModelError};
use crate::propagation::NoiseTreatment;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SweepError {
    #[error("sweep grid is empty")]
    EmptyGrid,
    #[error("sweep grid is not strictly increasing at index {index}")]
    UnsortedGrid { index: usize },
    #[error("no grid points in window [{lo}, {hi}]")]
    EmptyWindow { lo: f64, hi: f64 },
    #[error("pair `{0}` is not part of the spectrum")]
    UnknownPair(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl SweepError {
    pub fn omega(&self) -> Option<f64> {
        match self {
            SweepError::Model(e) => e.omega(),
            _ => None,
        }
    }
}

/// An ordered mode pair, written `"a1-b1"`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairSpec {
    pub i: String,
    pub j: String,
}

impl PairSpec {
    pub fn new(i: &str, j: &str) -> Self {
        Self {
            i: i.to_string(),
            j: j.to_string(),
        }
    }

    pub fn label(&self) -> String {
        format!("{}-{}", self.i, self.j)
    }

    pub fn parse(s: &str) -> Option<Self> {
        let (i, j) = s.split_once('-')?;
        (!i.is_empty() && !j.is_empty()).then(|| Self::new(i, j))
    }
}

/// Single-pair pairs: scattering-Stokes and the two atom-field pairs.
pub fn single_pair_set() -> Vec<PairSpec> {
    vec![
        PairSpec::new("a1", "b1"),
        PairSpec::new("a1", SPIN_WAVE),
        PairSpec::new(SPIN_WAVE, "b1"),
    ]
}

/// Two-pair pairs: the like-field pairs across pairs plus the atom-field pairs.
pub fn double_pair_set() -> Vec<PairSpec> {
    vec![
        PairSpec::new("a1", "a2"),
        PairSpec::new("b1", "b2"),
        PairSpec::new("a1", SPIN_WAVE),
        PairSpec::new(SPIN_WAVE, "b1"),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Execution {
    Serial,
    /// Uses the rayon pool when the `parallel` feature is on.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Serial
        }
    }
}

/// Evaluates `f` on every grid point, keeping grid order.
pub fn map_grid<T, F>(exec: Execution, xs: &[f64], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(f64) -> T + Sync + Send,
{
    match exec {
        Execution::Serial => xs.iter().map(|&x| f(x)).collect(),
        Execution::Parallel => parallel_map(xs, f),
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, F>(xs: &[f64], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(f64) -> T + Sync + Send,
{
    use rayon::prelude::*;
    xs.par_iter().map(|&x| f(x)).collect()
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, F>(xs: &[f64], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(f64) -> T + Sync + Send,
{
    xs.iter().map(|&x| f(x)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    Omega,
    Gamma0,
    Alpha,
}

impl SweepAxis {
    pub fn column(self) -> &'static str {
        match self {
            SweepAxis::Omega => "omega",
            SweepAxis::Gamma0 => "gamma0",
            SweepAxis::Alpha => "alpha",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMeta {
    pub params_hash: String,
    pub n_pairs: usize,
    pub eta: f64,
    pub kappa_s: f64,
    pub noise: NoiseTreatment,
    /// Frequency at which γ0 and α sweeps are evaluated.
    pub omega: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSpectrum {
    pub axis: SweepAxis,
    pub grid: Vec<f64>,
    pub pairs: Vec<PairSpec>,
    /// `values[k][m]` is the minimal Duan value of pair `m` at `grid[k]`.
    pub values: Vec<Vec<f64>>,
    /// Sign of the minimizing witness, same layout as `values`.
    pub signs: Vec<Vec<Sign>>,
    pub meta: SpectrumMeta,
}

impl CorrelationSpectrum {
    pub fn pair_index(&self, label: &str) -> Result<usize, SweepError> {
        self.pairs
            .iter()
            .position(|p| p.label() == label)
            .ok_or_else(|| SweepError::UnknownPair(label.to_string()))
    }

    pub fn column(&self, label: &str) -> Result<Vec<f64>, SweepError> {
        let m = self.pair_index(label)?;
        Ok(self.values.iter().map(|row| row[m]).collect())
    }

    /// Sign used at the majority of grid points for a pair.
    pub fn dominant_sign(&self, label: &str) -> Result<Sign, SweepError> {
        let m = self.pair_index(label)?;
        let plus = self.signs.iter().filter(|row| row[m] == Sign::Plus).count();
        Ok(if 2 * plus >= self.signs.len() {
            Sign::Plus
        } else {
            Sign::Minus
        })
    }

    /// Value at an exact grid coordinate.
    pub fn value_at(&self, label: &str, x: f64) -> Option<f64> {
        let m = self.pair_index(label).ok()?;
        let k = self.grid.iter().position(|&g| g == x)?;
        Some(self.values[k][m])
    }
}

fn check_grid(grid: &[f64]) -> Result<(), SweepError> {
    if grid.is_empty() {
        return Err(SweepError::EmptyGrid);
    }
    if let Some(k) = grid.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(SweepError::UnsortedGrid { index: k + 1 });
    }
    Ok(())
}

type Row = (Vec<f64>, Vec<Sign>);

fn row(model: &Model, pairs: &[PairSpec], omega: f64) -> Result<Row, ModelError> {
    let r = model.evaluate(omega)?;
    let mut values = Vec::with_capacity(pairs.len());
    let mut signs = Vec::with_capacity(pairs.len());
    for p in pairs {
        let w = r.duan_min(&p.i, &p.j)?;
        values.push(w.value);
        signs.push(w.sign);
    }
    Ok((values, signs))
}

fn assemble(
    axis: SweepAxis,
    grid: &[f64],
    pairs: &[PairSpec],
    rows: Vec<Result<Row, ModelError>>,
    meta: SpectrumMeta,
) -> Result<CorrelationSpectrum, SweepError> {
    let mut values = Vec::with_capacity(rows.len());
    let mut signs = Vec::with_capacity(rows.len());
    for r in rows {
        let (v, s) = r?;
        values.push(v);
        signs.push(s);
    }
    Ok(CorrelationSpectrum {
        axis,
        grid: grid.to_vec(),
        pairs: pairs.to_vec(),
        values,
        signs,
        meta,
    })
}

fn meta_for(model: &Model, omega: Option<f64>) -> SpectrumMeta {
    SpectrumMeta {
        params_hash: model.params.hash(),
        n_pairs: model.layout.n_pairs(),
        eta: model.params.coupling_scale,
        kappa_s: model.kappa(),
        noise: model.config.noise,
        omega,
    }
}

pub fn sweep_omega(
    model: &Model,
    pairs: &[PairSpec],
    grid: &[f64],
    exec: Execution,
) -> Result<CorrelationSpectrum, SweepError> {
    check_grid(grid)?;
    let rows = map_grid(exec, grid, |w| row(model, pairs, w));
    assemble(SweepAxis::Omega, grid, pairs, rows, meta_for(model, None))
}

/// Rebuilds the model (steady state included) for each γ0 and evaluates at ω = 0.
pub fn sweep_gamma0(
    params: &PhysicalParams,
    config: &ModelConfig,
    pairs: &[PairSpec],
    grid: &[f64],
    exec: Execution,
) -> Result<CorrelationSpectrum, SweepError> {
    check_grid(grid)?;
    if let Some(&g) = grid.iter().find(|&&g| g < 0.0) {
        return Err(SweepError::Model(ModelError::Param(
            crate::params::ParamError::Invalid {
                field: "gamma0",
                value: g,
                reason: "must be nonnegative",
            },
        )));
    }
    let rows = map_grid(exec, grid, |g0| {
        let mut p = params.clone();
        p.gamma0 = g0;
        let model = Model::new(&p, config.clone())?;
        row(&model, pairs, 0.0)
    });
    let base = Model::new(params, config.clone())?;
    assemble(
        SweepAxis::Gamma0,
        grid,
        pairs,
        rows,
        meta_for(&base, Some(0.0)),
    )
}

/// Sets both scattering amplitudes to `|α| e^{iφ}` and evaluates at ω = 0.
pub fn sweep_alpha(
    params: &PhysicalParams,
    config: &ModelConfig,
    pairs: &[PairSpec],
    grid: &[f64],
    phase: f64,
    exec: Execution,
) -> Result<CorrelationSpectrum, SweepError> {
    check_grid(grid)?;
    let rows = map_grid(exec, grid, |a| {
        let mut p = params.clone();
        p.alpha1 = Complex64::from_polar(a, phase);
        p.alpha2 = p.alpha1;
        let model = Model::new(&p, config.clone())?;
        row(&model, pairs, 0.0)
    });
    let base = Model::new(params, config.clone())?;
    assemble(
        SweepAxis::Alpha,
        grid,
        pairs,
        rows,
        meta_for(&base, Some(0.0)),
    )
}

/// `n` evenly spaced points on `[lo, hi]`, computed as `lo + k·step`.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (n - 1) as f64;
            (0..n)
                .map(|k| if k == n - 1 { hi } else { lo + k as f64 * step })
                .collect()
        }
    }
}

/// Logarithmic grid, `per_decade` points per decade. Integer decades are
/// exact (`0.1` is the literal `0.1`).
pub fn log_grid(lo_exp: i32, hi_exp: i32, per_decade: usize) -> Vec<f64> {
    let total = (hi_exp - lo_exp) as usize * per_decade;
    (0..=total)
        .map(|k| {
            if k % per_decade == 0 {
                let e = lo_exp + (k / per_decade) as i32;
                format!("1e{e}").parse().expect("decade literal")
            } else {
                10f64.powf(lo_exp as f64 + k as f64 / per_decade as f64)
            }
        })
        .collect()
}

/// Merges a base grid with dense patches `center + k·step` for
/// `|k·step| ≤ halfwidth`, clipped to the base range.
pub fn refined_grid(base: &[f64], centers: &[f64], halfwidth: f64, step: f64) -> Vec<f64> {
    let (lo, hi) = match (base.first(), base.last()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => return Vec::new(),
    };
    let mut all = base.to_vec();
    let kmax = (halfwidth / step).floor() as i64;
    for &c in centers {
        for k in -kmax..=kmax {
            let w = c + k as f64 * step;
            if w >= lo && w <= hi {
                all.push(w);
            }
        }
    }
    all.sort_by(f64::total_cmp);
    all.dedup_by(|b, a| (*b - *a).abs() < 1e-9);
    all
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    /// Half-width of the dense patch around each detuning.
    pub refine_halfwidth: f64,
    /// Patch step in units of the optical linewidth γ13.
    pub refine_step_per_gamma: f64,
}

impl GridSpec {
    pub fn single_pair() -> Self {
        Self {
            lo: -3000.0,
            hi: 1000.0,
            points: 2001,
            refine_halfwidth: 90.0,
            refine_step_per_gamma: 1.0 / 6.0,
        }
    }

    pub fn double_pair() -> Self {
        Self {
            lo: -3000.0,
            hi: 3000.0,
            ..Self::single_pair()
        }
    }

    pub fn refine_step(&self, p: &PhysicalParams) -> f64 {
        self.refine_step_per_gamma * p.gamma_optical()
    }

    pub fn build(&self, p: &PhysicalParams) -> Vec<f64> {
        let base = linear_grid(self.lo, self.hi, self.points);
        if self.refine_halfwidth <= 0.0 {
            return base;
        }
        refined_grid(
            &base,
            &[p.delta1, p.delta2],
            self.refine_halfwidth,
            self.refine_step(p),
        )
    }
}

/// Default γ0 grid: 10^-2 to 10^3 MHz, 40 points per decade.
pub fn gamma0_grid() -> Vec<f64> {
    log_grid(-2, 3, 40)
}

/// Default |α| grid: 0 to 1000, 101 points.
pub fn alpha_grid() -> Vec<f64> {
    linear_grid(0.0, 1000.0, 101)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DipOptions {
    pub window: (f64, f64),
    pub plateau_band: (f64, f64),
    /// Exclusion radius around the dip in half-widths (half of the FWHM).
    pub exclusion_halfwidths: f64,
}

impl Default for DipOptions {
    fn default() -> Self {
        Self {
            window: (f64::NEG_INFINITY, f64::INFINITY),
            plateau_band: (-2600.0, 600.0),
            exclusion_halfwidths: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DipReport {
    pub pair: String,
    pub omega_star: f64,
    pub v_min: f64,
    pub plateau: f64,
    /// Full width at half depth; NaN when undefined.
    pub width: f64,
    pub width_defined: bool,
}

fn median(xs: &mut [f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn crossing(x0: f64, v0: f64, x1: f64, v1: f64, level: f64) -> f64 {
    if v1 == v0 {
        return x1;
    }
    x0 + (level - v0) * (x1 - x0) / (v1 - v0)
}

/// Global minimum in `opts.window` plus a median plateau over the band.
pub fn find_dip(
    spec: &CorrelationSpectrum,
    pair: &str,
    opts: &DipOptions,
) -> Result<DipReport, SweepError> {
    let col = spec.column(pair)?;
    let (lo, hi) = opts.window;
    let idx: Vec<usize> = (0..spec.grid.len())
        .filter(|&k| spec.grid[k] >= lo && spec.grid[k] <= hi)
        .collect();
    let (&first, &last) = match (idx.first(), idx.last()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(SweepError::EmptyWindow { lo, hi }),
    };
    let kmin = idx
        .iter()
        .copied()
        .min_by(|&a, &b| col[a].total_cmp(&col[b]))
        .expect("nonempty window");
    let omega_star = spec.grid[kmin];
    let v_min = col[kmin];

    let band = |exclude: Option<f64>| -> Vec<f64> {
        (0..spec.grid.len())
            .filter(|&k| {
                let w = spec.grid[k];
                w > opts.plateau_band.0
                    && w < opts.plateau_band.1
                    && exclude.is_none_or(|r| (w - omega_star).abs() > r)
            })
            .map(|k| col[k])
            .collect()
    };
    let mut plateau = median(&mut band(None));
    if !plateau.is_finite() {
        plateau = v_min;
    }

    let (width, width_defined) = half_depth_width(&spec.grid, &col, kmin, first, last, plateau);
    if width_defined {
        let radius = opts.exclusion_halfwidths * 0.5 * width;
        let mut rest = band(Some(radius));
        if !rest.is_empty() {
            plateau = median(&mut rest);
        }
    }
    Ok(DipReport {
        pair: pair.to_string(),
        omega_star,
        v_min,
        plateau: plateau.max(v_min),
        width,
        width_defined,
    })
}

fn half_depth_width(
    grid: &[f64],
    col: &[f64],
    kmin: usize,
    first: usize,
    last: usize,
    plateau: f64,
) -> (f64, bool) {
    let depth = plateau - col[kmin];
    if !(depth > 1e-12 * plateau.abs().max(1.0)) {
        return (f64::NAN, false);
    }
    let level = col[kmin] + 0.5 * depth;
    let left = (first..kmin)
        .rev()
        .find(|&k| col[k] >= level)
        .map(|k| crossing(grid[k], col[k], grid[k + 1], col[k + 1], level));
    let right = (kmin + 1..=last)
        .find(|&k| col[k] >= level)
        .map(|k| crossing(grid[k - 1], col[k - 1], grid[k], col[k], level));
    match (left, right) {
        (Some(l), Some(r)) => (r - l, true),
        _ => (f64::NAN, false),
    }
}

/// Indices of local minima whose topographic prominence is at least
/// `min_prominence`. Runs of equal values count once, at their first index.
pub fn local_minima(values: &[f64], min_prominence: f64) -> Vec<usize> {
    let n = values.len();
    let mut out = Vec::new();
    let mut k = 0;
    while k < n {
        let mut end = k;
        while end + 1 < n && values[end + 1] == values[k] {
            end += 1;
        }
        let v = values[k];
        let left_higher = k == 0 || values[k - 1] > v;
        let right_higher = end + 1 == n || values[end + 1] > v;
        if left_higher && right_higher && !(k == 0 && end + 1 == n) {
            let left_peak = side_peak(values[..k].iter().rev(), v);
            let right_peak = side_peak(values[end + 1..].iter(), v);
            let col = match (left_peak, right_peak) {
                (Some(l), Some(r)) => l.min(r),
                (Some(l), None) => l,
                (None, Some(r)) => r,
                (None, None) => v,
            };
            if col - v >= min_prominence {
                out.push(k);
            }
        }
        k = end + 1;
    }
    out
}

/// Highest value walking outward until something lower than `v` appears.
/// `None` if the side is empty.
fn side_peak<'a>(side: impl Iterator<Item = &'a f64>, v: f64) -> Option<f64> {
    let mut peak: Option<f64> = None;
    for &x in side {
        if x < v {
            break;
        }
        peak = Some(peak.map_or(x, |p: f64| p.max(x)));
    }
    peak
}
