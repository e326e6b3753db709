//! Command-line front end: flat config files, experiment dispatch and
//! byte-stable CSV/JSON outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::calibration::{calibrate, Calibration, CalibrationError, CalibrationTargets};
use crate::entanglement::{Sign, SpinWaveDefinition};
use crate::langevin_noise::{DiffusionModel, NoiseChannel, ReservoirSharing};
use crate::params::{derive, reference_params, DerivedParams, ParamError, PhysicalParams};
use crate::pipeline::{Model, ModelConfig, ModelError};
use crate::propagation::{CouplingForm, NoiseTreatment};
use crate::sweeps::{
    double_pair_set, find_dip, linear_grid, log_grid, single_pair_set, sweep_alpha, sweep_gamma0,
    sweep_omega, CorrelationSpectrum, DipOptions, DipReport, Execution, GridSpec, SweepError,
};
use crate::verification::{run_all, CheckReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("numerical failure{}: {source}", at_omega(*.omega))]
    Numerical {
        omega: Option<f64>,
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("calibration: {0}")]
    Calibration(String),
}

fn at_omega(omega: Option<f64>) -> String {
    omega
        .map(|w| format!(" at omega = {w} MHz"))
        .unwrap_or_default()
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical { .. } => EXIT_NUMERICAL,
            _ => EXIT_VALIDATION,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Param(p) => CliError::Param(p),
            other => CliError::Numerical {
                omega: other.omega(),
                source: Box::new(other),
            },
        }
    }
}

impl From<SweepError> for CliError {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::Model(m) => m.into(),
            other => CliError::Parse {
                line: 0,
                message: other.to_string(),
            },
        }
    }
}

impl From<CalibrationError> for CliError {
    fn from(e: CalibrationError) -> Self {
        match e {
            CalibrationError::Model(m) => m.into(),
            CalibrationError::NoBracket { .. } => CliError::Numerical {
                omega: None,
                source: Box::new(e),
            },
            other => CliError::Calibration(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Experiment {
    Steady,
    Noise,
    Spectrum,
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Calibrate,
    Verify,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::Steady,
        Experiment::Noise,
        Experiment::Spectrum,
        Experiment::Fig2,
        Experiment::Fig3,
        Experiment::Fig4,
        Experiment::Fig5,
        Experiment::Calibrate,
        Experiment::Verify,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Steady => "steady",
            Experiment::Noise => "noise",
            Experiment::Spectrum => "spectrum",
            Experiment::Fig2 => "fig2",
            Experiment::Fig3 => "fig3",
            Experiment::Fig4 => "fig4",
            Experiment::Fig5 => "fig5",
            Experiment::Calibrate => "calibrate",
            Experiment::Verify => "verify",
        }
    }

    pub fn parse(s: &str) -> Result<Self, CliError> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| CliError::UnknownExperiment(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridOverrides {
    pub omega_min: Option<f64>,
    pub omega_max: Option<f64>,
    pub omega_points: Option<usize>,
    pub refine_halfwidth: Option<f64>,
    pub gamma0_min_exp: i32,
    pub gamma0_max_exp: i32,
    pub gamma0_per_decade: usize,
    pub alpha_max: f64,
    pub alpha_points: usize,
    pub alpha_phase: f64,
}

impl Default for GridOverrides {
    fn default() -> Self {
        Self {
            omega_min: None,
            omega_max: None,
            omega_points: None,
            refine_halfwidth: None,
            gamma0_min_exp: -2,
            gamma0_max_exp: 3,
            gamma0_per_decade: 40,
            alpha_max: 1000.0,
            alpha_points: 101,
            alpha_phase: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub params: PhysicalParams,
    pub model: ModelConfig,
    pub experiment: Experiment,
    pub grid: GridOverrides,
    pub calibration: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            params: reference_params(),
            model: ModelConfig::default(),
            experiment: Experiment::Spectrum,
            grid: GridOverrides::default(),
            calibration: None,
            out: None,
            format: OutputFormat::Csv,
            threads: None,
        }
    }
}

/// Every accepted config key, in echo order.
pub const KEYS: &[&str] = &[
    "gamma1",
    "gamma2",
    "gamma0",
    "omega_p",
    "omega_c",
    "delta1",
    "delta2",
    "omega12",
    "n0",
    "r",
    "length",
    "lambda",
    "alpha1",
    "alpha1_im",
    "alpha2",
    "alpha2_im",
    "eta",
    "pairs",
    "noise",
    "diffusion",
    "reservoirs",
    "spin_wave",
    "coupling",
    "kappa_s",
    "gain_ceiling",
    "omega_min",
    "omega_max",
    "omega_points",
    "refine_halfwidth",
    "gamma0_min_exp",
    "gamma0_max_exp",
    "gamma0_per_decade",
    "alpha_max",
    "alpha_points",
    "alpha_phase",
    "experiment",
    "calibration",
    "out",
    "format",
    "threads",
];

fn num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T, CliError> {
    v.parse().map_err(|_| CliError::Parse {
        line,
        message: format!("`{key}`: cannot parse `{v}`"),
    })
}

fn choice<T: Copy>(line: usize, key: &str, v: &str, options: &[(&str, T)]) -> Result<T, CliError> {
    options
        .iter()
        .find(|(n, _)| *n == v)
        .map(|(_, t)| *t)
        .ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
            CliError::Parse {
                line,
                message: format!("`{key}`: expected one of {}, got `{v}`", names.join("|")),
            }
        })
}

const NOISE: &[(&str, NoiseTreatment)] = &[
    ("langevin", NoiseTreatment::Langevin),
    ("excluded", NoiseTreatment::Excluded),
];
const DIFFUSION: &[(&str, DiffusionModel)] = &[
    ("first_order", DiffusionModel::FirstOrder),
    ("full_generator", DiffusionModel::FullGenerator),
];
const RESERVOIRS: &[(&str, ReservoirSharing)] = &[
    ("independent", ReservoirSharing::Independent),
    ("shared", ReservoirSharing::Shared),
];
const SPIN_WAVE: &[(&str, SpinWaveDefinition)] = &[
    ("endpoint", SpinWaveDefinition::Endpoint),
    ("z_averaged", SpinWaveDefinition::ZAveraged),
];
const COUPLING: &[(&str, CouplingForm)] = &[
    ("as_printed", CouplingForm::AsPrinted),
    ("parametric", CouplingForm::Parametric),
];
const FORMATS: &[(&str, OutputFormat)] =
    &[("csv", OutputFormat::Csv), ("json", OutputFormat::Json)];

fn name_of<T: PartialEq + Copy>(options: &[(&'static str, T)], t: T) -> &'static str {
    options
        .iter()
        .find(|(_, x)| *x == t)
        .map(|(n, _)| *n)
        .expect("listed option")
}

impl RunConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, line: usize, key: &str, v: &str) -> Result<(), CliError> {
        let p = &mut self.params;
        let g = &mut self.grid;
        match key {
            "gamma1" => p.gamma1 = num(line, key, v)?,
            "gamma2" => p.gamma2 = num(line, key, v)?,
            "gamma0" => p.gamma0 = num(line, key, v)?,
            "omega_p" => p.omega_p = num(line, key, v)?,
            "omega_c" => p.omega_c = num(line, key, v)?,
            "delta1" => p.delta1 = num(line, key, v)?,
            "delta2" => p.delta2 = num(line, key, v)?,
            "omega12" => p.omega12 = num(line, key, v)?,
            "n0" => p.n0 = num(line, key, v)?,
            "r" => p.r = num(line, key, v)?,
            "length" => p.length = num(line, key, v)?,
            "lambda" => p.lambda_optical = num(line, key, v)?,
            "alpha1" => p.alpha1.re = num(line, key, v)?,
            "alpha1_im" => p.alpha1.im = num(line, key, v)?,
            "alpha2" => p.alpha2.re = num(line, key, v)?,
            "alpha2_im" => p.alpha2.im = num(line, key, v)?,
            "eta" => p.coupling_scale = num(line, key, v)?,
            "pairs" => self.model.n_pairs = num(line, key, v)?,
            "noise" => self.model.noise = choice(line, key, v, NOISE)?,
            "diffusion" => self.model.diffusion = choice(line, key, v, DIFFUSION)?,
            "reservoirs" => self.model.sharing = choice(line, key, v, RESERVOIRS)?,
            "spin_wave" => self.model.spin_wave = choice(line, key, v, SPIN_WAVE)?,
            "coupling" => self.model.coupling = choice(line, key, v, COUPLING)?,
            "kappa_s" => {
                self.model.kappa_s = if v == "auto" {
                    None
                } else {
                    Some(num(line, key, v)?)
                }
            }
            "gain_ceiling" => self.model.gain_ceiling = num(line, key, v)?,
            "omega_min" => g.omega_min = Some(num(line, key, v)?),
            "omega_max" => g.omega_max = Some(num(line, key, v)?),
            "omega_points" => g.omega_points = Some(num(line, key, v)?),
            "refine_halfwidth" => g.refine_halfwidth = Some(num(line, key, v)?),
            "gamma0_min_exp" => g.gamma0_min_exp = num(line, key, v)?,
            "gamma0_max_exp" => g.gamma0_max_exp = num(line, key, v)?,
            "gamma0_per_decade" => g.gamma0_per_decade = num(line, key, v)?,
            "alpha_max" => g.alpha_max = num(line, key, v)?,
            "alpha_points" => g.alpha_points = num(line, key, v)?,
            "alpha_phase" => g.alpha_phase = num(line, key, v)?,
            "experiment" => {
                self.experiment = Experiment::parse(v).map_err(|e| CliError::Parse {
                    line,
                    message: e.to_string(),
                })?
            }
            "calibration" => self.calibration = Some(PathBuf::from(v)),
            "out" => self.out = Some(PathBuf::from(v)),
            "format" => self.format = choice(line, key, v, FORMATS)?,
            "threads" => self.threads = Some(num(line, key, v)?),
            _ => {
                return Err(CliError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    /// Value of a key in the same spelling `set` accepts.
    pub fn get(&self, key: &str) -> String {
        let p = &self.params;
        let g = &self.grid;
        let f = |x: f64| format!("{x:e}");
        let opt = |x: Option<f64>| x.map_or("default".to_string(), f);
        match key {
            "gamma1" => f(p.gamma1),
            "gamma2" => f(p.gamma2),
            "gamma0" => f(p.gamma0),
            "omega_p" => f(p.omega_p),
            "omega_c" => f(p.omega_c),
            "delta1" => f(p.delta1),
            "delta2" => f(p.delta2),
            "omega12" => f(p.omega12),
            "n0" => f(p.n0),
            "r" => f(p.r),
            "length" => f(p.length),
            "lambda" => f(p.lambda_optical),
            "alpha1" => f(p.alpha1.re),
            "alpha1_im" => f(p.alpha1.im),
            "alpha2" => f(p.alpha2.re),
            "alpha2_im" => f(p.alpha2.im),
            "eta" => f(p.coupling_scale),
            "pairs" => self.model.n_pairs.to_string(),
            "noise" => name_of(NOISE, self.model.noise).into(),
            "diffusion" => name_of(DIFFUSION, self.model.diffusion).into(),
            "reservoirs" => name_of(RESERVOIRS, self.model.sharing).into(),
            "spin_wave" => name_of(SPIN_WAVE, self.model.spin_wave).into(),
            "coupling" => name_of(COUPLING, self.model.coupling).into(),
            "kappa_s" => self.model.kappa_s.map_or("auto".to_string(), f),
            "gain_ceiling" => f(self.model.gain_ceiling),
            "omega_min" => opt(g.omega_min),
            "omega_max" => opt(g.omega_max),
            "omega_points" => g.omega_points.map_or("default".into(), |n| n.to_string()),
            "refine_halfwidth" => opt(g.refine_halfwidth),
            "gamma0_min_exp" => g.gamma0_min_exp.to_string(),
            "gamma0_max_exp" => g.gamma0_max_exp.to_string(),
            "gamma0_per_decade" => g.gamma0_per_decade.to_string(),
            "alpha_max" => f(g.alpha_max),
            "alpha_points" => g.alpha_points.to_string(),
            "alpha_phase" => f(g.alpha_phase),
            "experiment" => self.experiment.name().into(),
            "calibration" => path_or_none(&self.calibration),
            "out" => path_or_none(&self.out),
            "format" => name_of(FORMATS, self.format).into(),
            "threads" => self.threads.map_or("default".into(), |n| n.to_string()),
            _ => String::new(),
        }
    }

    /// `key = value` lines for every key, in [`KEYS`] order.
    pub fn echo(&self) -> Vec<String> {
        KEYS.iter()
            .map(|k| format!("{k} = {}", self.get(k)))
            .collect()
    }

    pub fn execution(&self) -> Execution {
        match self.threads {
            Some(1) => Execution::Serial,
            _ => Execution::default(),
        }
    }

    pub fn omega_grid(&self, p: &PhysicalParams, n_pairs: usize) -> Vec<f64> {
        let mut spec = if n_pairs == 1 {
            GridSpec::single_pair()
        } else {
            GridSpec::double_pair()
        };
        let g = &self.grid;
        spec.lo = g.omega_min.unwrap_or(spec.lo);
        spec.hi = g.omega_max.unwrap_or(spec.hi);
        spec.points = g.omega_points.unwrap_or(spec.points);
        spec.refine_halfwidth = g.refine_halfwidth.unwrap_or(spec.refine_halfwidth);
        spec.build(p)
    }

    pub fn gamma0_grid(&self) -> Vec<f64> {
        log_grid(
            self.grid.gamma0_min_exp,
            self.grid.gamma0_max_exp,
            self.grid.gamma0_per_decade.max(1),
        )
    }

    pub fn alpha_grid(&self) -> Vec<f64> {
        linear_grid(0.0, self.grid.alpha_max, self.grid.alpha_points)
    }
}

fn path_or_none(p: &Option<PathBuf>) -> String {
    p.as_ref()
        .map_or("none".to_string(), |p| p.display().to_string())
}

/// Parses flat `key = value` lines over the defaults. `#` starts a comment.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    apply_config(&mut cfg, text)?;
    Ok(cfg)
}

pub fn apply_config(cfg: &mut RunConfig, text: &str) -> Result<(), CliError> {
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| CliError::Parse {
            line,
            message: format!("expected `key = value`, got `{content}`"),
        })?;
        cfg.set(line, key.trim(), value.trim())?;
    }
    Ok(())
}

#[derive(Debug, Parser)]
#[command(
    name = "eit-fwm",
    version,
    about = "EIT four-wave-mixing entanglement model"
)]
pub struct Args {
    /// Experiment: steady, noise, spectrum, fig2, fig3, fig4, fig5, calibrate, verify.
    pub experiment_pos: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub experiment: Option<String>,
    /// csv or json.
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Extra `key=value` assignment applied after the config file; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
}

/// Merges the config file and command-line flags, flags last.
pub fn resolve(args: &Args) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        apply_config(&mut cfg, &text)?;
    }
    for s in &args.sets {
        apply_config(&mut cfg, s)?;
    }
    if let Some(e) = args
        .experiment
        .as_deref()
        .or(args.experiment_pos.as_deref())
    {
        cfg.experiment = Experiment::parse(e)?;
    }
    if let Some(o) = &args.out {
        cfg.out = Some(o.clone());
    }
    if let Some(f) = &args.format {
        cfg.format = choice(0, "format", f, FORMATS)?;
    }
    if let Some(t) = args.threads {
        cfg.threads = Some(t);
    }
    Ok(cfg)
}

/// Result of an experiment: the text that goes to `out` (or stdout) and
/// lines for stderr.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub body: String,
    pub exit_code: i32,
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    experiment: &'static str,
    version: &'static str,
    params: &'a PhysicalParams,
    derived: &'a DerivedParams,
    dips: Vec<DipReport>,
    signs: Vec<(String, &'static str)>,
    calibration: Option<&'a Calibration>,
}

fn sci(x: f64) -> String {
    format!("{x:.16e}")
}

fn header(cfg: &RunConfig, p: &PhysicalParams, extra: &[(String, String)]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# eit-fwm {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "# experiment = {}", cfg.experiment.name());
    let _ = writeln!(s, "# params_hash = {}", p.hash());
    for (k, v) in extra {
        let _ = writeln!(s, "# {k} = {v}");
    }
    for line in cfg.echo() {
        let _ = writeln!(s, "# config {line}");
    }
    s
}

fn spectrum_csv(cfg: &RunConfig, p: &PhysicalParams, spec: &CorrelationSpectrum) -> String {
    let mut extra = vec![
        ("eta".to_string(), sci(spec.meta.eta)),
        ("kappa_s".to_string(), sci(spec.meta.kappa_s)),
        (
            "noise".to_string(),
            name_of(NOISE, spec.meta.noise).to_string(),
        ),
        ("n_pairs".to_string(), spec.meta.n_pairs.to_string()),
    ];
    for pair in &spec.pairs {
        let label = pair.label();
        let sign = spec.dominant_sign(&label).map(Sign::symbol).unwrap_or("?");
        extra.push((format!("sign {label}"), sign.to_string()));
    }
    let mut s = header(cfg, p, &extra);
    s.push_str(spec.axis.column());
    for pair in &spec.pairs {
        s.push(',');
        s.push_str(&pair.label());
    }
    s.push('\n');
    for (x, row) in spec.grid.iter().zip(&spec.values) {
        s.push_str(&sci(*x));
        for v in row {
            s.push(',');
            s.push_str(&sci(*v));
        }
        s.push('\n');
    }
    s
}

fn summary_json(
    cfg: &RunConfig,
    p: &PhysicalParams,
    spec: Option<&CorrelationSpectrum>,
    dips: Vec<DipReport>,
    calibration: Option<&Calibration>,
) -> Result<String, CliError> {
    let derived = derive(p)?;
    let signs = spec
        .map(|s| {
            s.pairs
                .iter()
                .map(|pr| {
                    let l = pr.label();
                    let sign = s.dominant_sign(&l).map(Sign::symbol).unwrap_or("?");
                    (l, sign)
                })
                .collect()
        })
        .unwrap_or_default();
    let summary = Summary {
        experiment: cfg.experiment.name(),
        version: env!("CARGO_PKG_VERSION"),
        params: p,
        derived: &derived,
        dips,
        signs,
        calibration,
    };
    let mut s = serde_json::to_string_pretty(&summary).expect("summary serializes");
    s.push('\n');
    Ok(s)
}

/// Dip reports: one global dip, or one per detuning for two pairs.
pub fn dip_reports(
    spec: &CorrelationSpectrum,
    p: &PhysicalParams,
) -> Result<Vec<DipReport>, SweepError> {
    let mid = 0.5 * (p.delta1 + p.delta2);
    let mut out = Vec::new();
    for pair in &spec.pairs {
        let label = pair.label();
        if spec.meta.n_pairs == 1 {
            out.push(find_dip(spec, &label, &DipOptions::default())?);
        } else {
            for window in [(f64::NEG_INFINITY, mid), (mid, f64::INFINITY)] {
                let opts = DipOptions {
                    window,
                    ..DipOptions::default()
                };
                out.push(find_dip(spec, &label, &opts)?);
            }
        }
    }
    Ok(out)
}

/// The config with a calibration file, if any, applied to its parameters
/// and model settings.
pub fn effective(cfg: &RunConfig) -> Result<(RunConfig, Option<Calibration>), CliError> {
    cfg.params.validate()?;
    match &cfg.calibration {
        None => Ok((cfg.clone(), None)),
        Some(path) => {
            let cal = Calibration::load(path)
                .map_err(|e| CliError::Calibration(format!("{}: {e}", path.display())))?;
            let (params, model) = cal.apply(&cfg.params, &cfg.model);
            Ok((
                RunConfig {
                    params,
                    model,
                    ..cfg.clone()
                },
                Some(cal),
            ))
        }
    }
}

fn spectrum_output(
    cfg: &RunConfig,
    p: &PhysicalParams,
    spec: &CorrelationSpectrum,
    dips: Vec<DipReport>,
    calibration: Option<&Calibration>,
) -> Result<String, CliError> {
    match cfg.format {
        OutputFormat::Csv => Ok(spectrum_csv(cfg, p, spec)),
        OutputFormat::Json => summary_json(cfg, p, Some(spec), dips, calibration),
    }
}

/// Runs the configured experiment and returns its output text.
pub fn execute(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let exec = cfg.execution();
    let (eff, cal) = effective(cfg)?;
    let cfg = &eff;
    let (p, model_cfg) = (eff.params.clone(), eff.model.clone());
    for w in p.validity_warnings() {
        log::info!("{w}");
    }
    let ok = |body: String| {
        Ok(RunOutput {
            body,
            exit_code: EXIT_OK,
        })
    };
    match cfg.experiment {
        Experiment::Steady => {
            let model = Model::new(&p, model_cfg)?;
            match cfg.format {
                OutputFormat::Csv => {
                    let mut s = header(cfg, &p, &[]);
                    s.push_str("a,b,re,im\n");
                    for a in 1..=3 {
                        for b in 1..=3 {
                            let z = model.steady.sigma(a, b);
                            let _ = writeln!(s, "{a},{b},{},{}", sci(z.re), sci(z.im));
                        }
                    }
                    ok(s)
                }
                OutputFormat::Json => ok(summary_json(cfg, &p, None, Vec::new(), cal.as_ref())?),
            }
        }
        Experiment::Noise => {
            let model = Model::new(&p, model_cfg)?;
            let mut s = header(
                cfg,
                &p,
                &[(
                    "diffusion".into(),
                    name_of(DIFFUSION, model.diffusion.model).into(),
                )],
            );
            s.push_str("mu,nu,re_2d,im_2d\n");
            for mu in NoiseChannel::ALL {
                for nu in NoiseChannel::ALL {
                    let z: Complex64 = model.diffusion.two_d(mu, nu);
                    let _ = writeln!(
                        s,
                        "{},{},{},{}",
                        mu.label(),
                        nu.label(),
                        sci(z.re),
                        sci(z.im)
                    );
                }
            }
            ok(s)
        }
        Experiment::Spectrum | Experiment::Fig2 | Experiment::Fig3 => {
            let n_pairs = match cfg.experiment {
                Experiment::Fig2 => 1,
                Experiment::Fig3 => 2,
                _ => model_cfg.n_pairs,
            };
            let model_cfg = ModelConfig {
                n_pairs,
                ..model_cfg
            };
            let model = Model::new(&p, model_cfg)?;
            let pairs = if n_pairs == 1 {
                single_pair_set()
            } else {
                double_pair_set()
            };
            let grid = cfg.omega_grid(&p, n_pairs);
            let spec = sweep_omega(&model, &pairs, &grid, exec)?;
            let dips = dip_reports(&spec, &p)?;
            ok(spectrum_output(cfg, &p, &spec, dips, cal.as_ref())?)
        }
        Experiment::Fig4 => {
            let spec = sweep_gamma0(&p, &model_cfg, &single_pair_set(), &cfg.gamma0_grid(), exec)?;
            ok(spectrum_output(cfg, &p, &spec, Vec::new(), cal.as_ref())?)
        }
        Experiment::Fig5 => {
            let spec = sweep_alpha(
                &p,
                &model_cfg,
                &single_pair_set(),
                &cfg.alpha_grid(),
                cfg.grid.alpha_phase,
                exec,
            )?;
            ok(spectrum_output(cfg, &p, &spec, Vec::new(), cal.as_ref())?)
        }
        Experiment::Calibrate => {
            let cal = calibrate(&cfg.params, &CalibrationTargets::default(), exec)?;
            let mut s = serde_json::to_string_pretty(&cal).expect("calibration serializes");
            s.push('\n');
            ok(s)
        }
        Experiment::Verify => {
            let reports = run_all(&p, &model_cfg, exec)?;
            let all_ok = reports.iter().all(CheckReport::acceptable);
            let mut s = String::new();
            for r in &reports {
                let _ = writeln!(s, "{r}");
            }
            let _ = writeln!(s, "suite={}", if all_ok { "ok" } else { "failed" });
            Ok(RunOutput {
                body: s,
                exit_code: if all_ok { EXIT_OK } else { EXIT_VERIFY },
            })
        }
    }
}

fn write_out(path: &Path, body: &str) -> Result<(), CliError> {
    let io = |source| CliError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(io)?;
        }
    }
    fs::write(path, body).map_err(io)
}

/// Runs the experiment, writes `out` or stdout, and returns the exit code.
pub fn run(cfg: &RunConfig) -> i32 {
    #[cfg(feature = "parallel")]
    if let Some(n) = cfg.threads {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    match execute(cfg) {
        Ok(out) => {
            let written = match &cfg.out {
                Some(path) => write_out(path, &out.body),
                None => {
                    use std::io::Write;
                    match std::io::stdout().lock().write_all(out.body.as_bytes()) {
                        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Io {
                            path: "stdout".into(),
                            source: e,
                        }),
                        _ => Ok(()),
                    }
                }
            };
            if let Err(e) = written {
                eprintln!("error: {e}");
                return e.exit_code();
            }
            if out.exit_code == EXIT_VERIFY {
                eprintln!("error: verification failed");
            }
            out.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Entry point for the binary.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_VALIDATION
            } else {
                EXIT_OK
            };
            let _ = e.print();
            return code;
        }
    };
    match resolve(&args) {
        Ok(cfg) => run(&cfg),
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
