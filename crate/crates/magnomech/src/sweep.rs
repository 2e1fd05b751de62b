//! Grid sweeps over parameter-file entries.

use std::fmt;
use std::path::{Path, PathBuf};

use magnomech_core::protocol::{
    find_optimal_pulse_duration, run_protocol, step1_steady_state, Step1,
};
use magnomech_core::Error;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ParamFile, Resolved};
use crate::error::{CliError, ConfigError};

/// Samples kept from a time series.
pub const DEFAULT_SAMPLES: usize = 201;
pub const MAX_AXES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    /// Steady state under the continuous drive.
    Step1,
    /// Step 1 plus the pulse search; values refer to the state at `t_max`.
    Step2,
    /// Step 2 plus free evolution after the pulse.
    Full,
    /// `E_b1b2(t)` and `E_b1m2(t)` over the search window.
    Step2Series,
    /// `E_b1b2` after switch-off at `t_max`.
    FreeSeries,
}

impl Stage {
    pub fn is_series(self) -> bool {
        matches!(self, Stage::Step2Series | Stage::FreeSeries)
    }

    fn provides(self, q: Quantity) -> bool {
        use Quantity::*;
        match self {
            Stage::Step1 => !matches!(q, TMax | DecayTime),
            Stage::Step2 => matches!(q, EB1m2 | EB1b2 | Margin | TMax),
            Stage::Full => matches!(q, EB1m2 | EB1b2 | Margin | TMax | DecayTime),
            Stage::Step2Series => matches!(q, EB1m2 | EB1b2),
            Stage::FreeSeries => q == EB1b2,
        }
    }

    fn default_quantities(self) -> Vec<Quantity> {
        use Quantity::*;
        match self {
            Stage::Step1 => vec![EB1m2, EB1a, EB1m1, EB1b2, Margin],
            Stage::Step2 => vec![EB1b2, TMax, EB1m2, Margin],
            Stage::Full => vec![EB1b2, TMax, EB1m2, DecayTime, Margin],
            Stage::Step2Series => vec![EB1b2, EB1m2],
            Stage::FreeSeries => vec![EB1b2],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Step1 => "step1",
            Stage::Step2 => "step2",
            Stage::Full => "full",
            Stage::Step2Series => "step2-series",
            Stage::FreeSeries => "free-series",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quantity {
    #[serde(rename = "e_b1m2")]
    EB1m2,
    #[serde(rename = "e_b1a")]
    EB1a,
    #[serde(rename = "e_b1m1")]
    EB1m1,
    #[serde(rename = "e_b1b2")]
    EB1b2,
    /// Step-1 stability margin (largest real part of the drift spectrum).
    #[serde(rename = "margin")]
    Margin,
    #[serde(rename = "t_max")]
    TMax,
    /// `1/e` time of `E_b1b2` after switch-off.
    #[serde(rename = "decay_time")]
    DecayTime,
}

impl Quantity {
    pub fn name(self) -> &'static str {
        match self {
            Quantity::EB1m2 => "e_b1m2",
            Quantity::EB1a => "e_b1a",
            Quantity::EB1m1 => "e_b1m1",
            Quantity::EB1b2 => "e_b1b2",
            Quantity::Margin => "margin",
            Quantity::TMax => "t_max",
            Quantity::DecayTime => "decay_time",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

fn one() -> f64 {
    1.0
}

/// One swept parameter. The parameter is set to `unit × coordinate`; the
/// coordinate is what the output table shows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub path: String,
    pub start: f64,
    pub stop: f64,
    pub count: usize,
    #[serde(default)]
    pub scale: Scale,
    #[serde(default = "one")]
    pub unit: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl Axis {
    pub fn label(&self) -> &str {
        self.label.as_deref().unwrap_or(&self.path)
    }

    pub fn coordinates(&self) -> Vec<f64> {
        let n = self.count;
        let last = (n - 1) as f64;
        (0..n)
            .map(|k| {
                if k + 1 == n {
                    return self.stop;
                }
                let f = k as f64 / last;
                match self.scale {
                    Scale::Linear => self.start + (self.stop - self.start) * f,
                    Scale::Log => self.start * (self.stop / self.start).powf(f),
                }
            })
            .collect()
    }

    fn check(&self, base: &ParamFile) -> Result<(), ConfigError> {
        let bad = |reason: &str| ConfigError::Axis {
            path: self.path.clone(),
            reason: reason.to_string(),
        };
        if self.count < 2 {
            return Err(bad("count must be at least 2"));
        }
        if !(self.start.is_finite() && self.stop.is_finite() && self.unit.is_finite()) {
            return Err(bad("start, stop and unit must be finite"));
        }
        if self.unit == 0.0 {
            return Err(bad("unit must be non-zero"));
        }
        if self.scale == Scale::Log && !(self.start * self.stop > 0.0) {
            return Err(bad("log scale needs start and stop of the same sign"));
        }
        base.check_path(&self.path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

/// Sweep file as written on disk. Parameters come either inline (`[params]`)
/// or from `base`, a parameter file path relative to the sweep file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    #[serde(default)]
    base: Option<PathBuf>,
    #[serde(default)]
    params: Option<ParamFile>,
    stage: Stage,
    #[serde(default)]
    quantities: Vec<Quantity>,
    #[serde(default, rename = "axis")]
    axes: Vec<Axis>,
    #[serde(default)]
    samples: Option<usize>,
    #[serde(default)]
    workers: Option<usize>,
    #[serde(default)]
    output: Option<OutputSpec>,
}

/// A validated sweep: base parameters, at most two axes, a stage and the
/// recorded quantities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub params: ParamFile,
    pub stage: Stage,
    pub quantities: Vec<Quantity>,
    pub axes: Vec<Axis>,
    /// Rows kept from a time series.
    pub samples: usize,
    #[serde(skip)]
    pub workers: Option<usize>,
    #[serde(skip)]
    pub output: OutputSpec,
}

impl SweepConfig {
    pub fn new(
        params: ParamFile,
        stage: Stage,
        quantities: Vec<Quantity>,
        axes: Vec<Axis>,
    ) -> Result<Self, ConfigError> {
        let mut cfg = SweepConfig {
            params,
            stage,
            quantities,
            axes,
            samples: DEFAULT_SAMPLES,
            workers: None,
            output: OutputSpec::default(),
        };
        cfg.normalize();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a sweep file; `base` is resolved relative to its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let file: SweepFile = toml::from_str(&text).map_err(ConfigError::from)?;
        let params = match (file.base, file.params) {
            (Some(base), None) => {
                let base = path.parent().unwrap_or(Path::new(".")).join(base);
                let text = std::fs::read_to_string(&base).map_err(|e| CliError::io(&base, e))?;
                ParamFile::from_toml(&text)?
            }
            (None, Some(p)) => p,
            _ => {
                return Err(ConfigError::Invalid(
                    "a sweep needs exactly one of `base` and `[params]`".into(),
                )
                .into())
            }
        };
        let mut cfg = SweepConfig {
            params,
            stage: file.stage,
            quantities: file.quantities,
            axes: file.axes,
            samples: file.samples.unwrap_or(DEFAULT_SAMPLES),
            workers: file.workers,
            output: file.output.unwrap_or_default(),
        };
        cfg.normalize();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Fills in stage defaults; grid stages always carry the margin so that
    /// unstable points are never blank.
    fn normalize(&mut self) {
        if self.quantities.is_empty() {
            self.quantities = self.stage.default_quantities();
        }
        if !self.stage.is_series() && !self.quantities.contains(&Quantity::Margin) {
            self.quantities.push(Quantity::Margin);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.params.resolve()?;
        if self.axes.len() > MAX_AXES {
            return Err(ConfigError::Invalid(format!(
                "at most {MAX_AXES} axes, found {}",
                self.axes.len()
            )));
        }
        if self.stage.is_series() && !self.axes.is_empty() {
            return Err(ConfigError::Invalid(format!(
                "stage {} is a time series and takes no axes",
                self.stage
            )));
        }
        if self.samples < 2 {
            return Err(ConfigError::Invalid("samples must be at least 2".into()));
        }
        for (i, q) in self.quantities.iter().enumerate() {
            if !self.stage.provides(*q) {
                return Err(ConfigError::Invalid(format!(
                    "stage {} does not produce {}",
                    self.stage,
                    q.name()
                )));
            }
            if self.quantities[..i].contains(q) {
                return Err(ConfigError::Invalid(format!("{} listed twice", q.name())));
            }
        }
        for axis in &self.axes {
            axis.check(&self.params)?;
        }
        Ok(())
    }

    pub fn point_count(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    /// Parameters at row-major grid index `index`, with the axis coordinates.
    pub fn point(&self, index: usize) -> Result<(Vec<f64>, ParamFile), ConfigError> {
        let mut rest = index;
        let mut idx = vec![0; self.axes.len()];
        for (k, axis) in self.axes.iter().enumerate().rev() {
            idx[k] = rest % axis.count;
            rest /= axis.count;
        }
        let mut params = self.params.clone();
        let mut coords = Vec::with_capacity(self.axes.len());
        for (axis, &i) in self.axes.iter().zip(&idx) {
            let c = axis.coordinates()[i];
            coords.push(c);
            params = params.with_value(&axis.path, c * axis.unit)?;
        }
        Ok((coords, params))
    }

    pub fn columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = match self.stage {
            Stage::Step2Series => vec!["time_s".into()],
            Stage::FreeSeries => vec!["time_after_pulse_s".into()],
            _ => self.axes.iter().map(|a| a.label().to_string()).collect(),
        };
        cols.extend(self.quantities.iter().map(|q| q.name().to_string()));
        cols.push("stable".into());
        cols.push("error".into());
        cols
    }
}

/// One output row. Missing values are `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub coords: Vec<Option<f64>>,
    pub values: Vec<Option<f64>>,
    /// Step-1 stability; `None` when the point failed before the check.
    pub stable: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub records: Vec<Record>,
}

/// Short, stable code for a per-point failure.
pub fn error_code(e: &Error) -> &'static str {
    match e {
        Error::Unstable { .. } => "unstable",
        Error::Unphysical { .. } => "unphysical",
        Error::NonFinite { .. } => "non_finite",
        Error::StepTooCoarse { .. } => "step_too_coarse",
        Error::FixedPointDiverged { .. } => "fixed_point_diverged",
        Error::Singular { .. } => "singular",
        Error::Overflow { .. } => "overflow",
        Error::InvalidParameter { .. } => "invalid_parameter",
        _ => "internal",
    }
}

/// What a grid stage produced at one point.
#[derive(Debug, Clone, Copy, Default)]
struct Outcome {
    e_b1m2: Option<f64>,
    e_b1a: Option<f64>,
    e_b1m1: Option<f64>,
    e_b1b2: Option<f64>,
    margin: Option<f64>,
    t_max: Option<f64>,
    decay_time: Option<f64>,
}

impl Outcome {
    fn get(&self, q: Quantity) -> Option<f64> {
        match q {
            Quantity::EB1m2 => self.e_b1m2,
            Quantity::EB1a => self.e_b1a,
            Quantity::EB1m1 => self.e_b1m1,
            Quantity::EB1b2 => self.e_b1b2,
            Quantity::Margin => self.margin,
            Quantity::TMax => self.t_max,
            Quantity::DecayTime => self.decay_time,
        }
    }

    fn from_step1(s: &Step1) -> Self {
        let e = s.entanglement;
        Outcome {
            e_b1m2: Some(e.b1_m2),
            e_b1a: Some(e.b1_a),
            e_b1m1: Some(e.b1_m1),
            e_b1b2: Some(e.b1_b2),
            margin: Some(s.margin),
            ..Outcome::default()
        }
    }
}

/// Runs one grid stage on resolved parameters. Physics failures become data.
pub fn run_point(r: &Resolved, stage: Stage, quantities: &[Quantity]) -> Record {
    let pack = |o: Outcome, stable: Option<bool>, error: Option<&str>| Record {
        coords: Vec::new(),
        values: quantities.iter().map(|&q| o.get(q)).collect(),
        stable,
        error: error.map(str::to_string),
    };
    let opts = magnomech_core::protocol::ProtocolOptions {
        output_stride: usize::MAX,
        ..r.options
    };
    let step1 = match step1_steady_state(&r.params, &r.drive1, &opts) {
        Ok(s) => s,
        Err(e @ Error::Unstable { margin }) => {
            let o = Outcome {
                margin: Some(margin),
                ..Outcome::default()
            };
            return pack(o, Some(false), Some(error_code(&e)));
        }
        Err(e) => return pack(Outcome::default(), None, Some(error_code(&e))),
    };
    let base = Outcome::from_step1(&step1);
    match stage {
        Stage::Step1 => pack(base, Some(true), None),
        Stage::Step2 | Stage::Full => {
            let margin_only = Outcome {
                margin: base.margin,
                ..Outcome::default()
            };
            let free = (stage == Stage::Full && r.free_duration > 0.0).then_some(r.free_duration);
            let run = if free.is_some() {
                run_protocol(&r.params, &r.drive1, &r.drive2, r.window, free, &opts)
                    .map(|p| (p.step2, p.optimum, p.free))
            } else {
                find_optimal_pulse_duration(
                    &r.params,
                    &r.drive2,
                    &step1.covariance,
                    &step1.steady.means,
                    r.window,
                    &opts,
                )
                .map(|(s, o)| (s, o, None))
            };
            match run {
                Ok((step2, optimum, free)) => {
                    let mut o = margin_only;
                    o.e_b1b2 = Some(optimum.map_or(0.0, |p| p.negativity));
                    if let Some(p) = optimum {
                        o.t_max = Some(p.duration);
                        let k = step2
                            .times
                            .iter()
                            .position(|&t| t >= p.duration)
                            .unwrap_or(step2.times.len() - 1);
                        o.e_b1m2 = Some(step2.b1_m2[k]);
                    }
                    o.decay_time = free.and_then(|f| f.decay_time());
                    pack(o, Some(true), None)
                }
                Err(e) => pack(margin_only, Some(true), Some(error_code(&e))),
            }
        }
        Stage::Step2Series | Stage::FreeSeries => {
            unreachable!("series stages go through run_series")
        }
    }
}

/// Picks `samples` evenly spaced indices out of `len`, always including both
/// ends.
fn sample_indices(len: usize, samples: usize) -> Vec<usize> {
    if len <= samples {
        return (0..len).collect();
    }
    let last = (len - 1) as f64;
    let mut out: Vec<usize> = (0..samples)
        .map(|i| (i as f64 * last / (samples - 1) as f64).round() as usize)
        .collect();
    out.dedup();
    out
}

/// Time-series stages: one row per sample.
pub fn run_series(
    r: &Resolved,
    stage: Stage,
    quantities: &[Quantity],
    samples: usize,
) -> Vec<Record> {
    let opts = magnomech_core::protocol::ProtocolOptions {
        output_stride: usize::MAX,
        ..r.options
    };
    let fail = |stable: Option<bool>, code: &str| {
        vec![Record {
            coords: vec![None],
            values: vec![None; quantities.len()],
            stable,
            error: Some(code.to_string()),
        }]
    };
    let rows = |times: &[f64], series: &dyn Fn(Quantity, usize) -> Option<f64>| {
        sample_indices(times.len(), samples)
            .into_iter()
            .map(|k| Record {
                coords: vec![Some(times[k])],
                values: quantities.iter().map(|&q| series(q, k)).collect(),
                stable: Some(true),
                error: None,
            })
            .collect::<Vec<_>>()
    };
    let step1 = match step1_steady_state(&r.params, &r.drive1, &opts) {
        Ok(s) => s,
        Err(e @ Error::Unstable { .. }) => return fail(Some(false), error_code(&e)),
        Err(e) => return fail(None, error_code(&e)),
    };
    match stage {
        Stage::Step2Series => {
            match find_optimal_pulse_duration(
                &r.params,
                &r.drive2,
                &step1.covariance,
                &step1.steady.means,
                r.window,
                &opts,
            ) {
                Ok((s, _)) => rows(&s.times, &|q, k| match q {
                    Quantity::EB1b2 => Some(s.b1_b2[k]),
                    Quantity::EB1m2 => Some(s.b1_m2[k]),
                    _ => None,
                }),
                Err(e) => fail(Some(true), error_code(&e)),
            }
        }
        Stage::FreeSeries => {
            if !(r.free_duration > 0.0) {
                return fail(Some(true), "no_free_evolution");
            }
            match run_protocol(
                &r.params,
                &r.drive1,
                &r.drive2,
                r.window,
                Some(r.free_duration),
                &opts,
            ) {
                Ok(p) => match p.free {
                    Some(f) => rows(&f.times, &|q, k| (q == Quantity::EB1b2).then(|| f.b1_b2[k])),
                    None => fail(Some(true), "no_entanglement"),
                },
                Err(e) => fail(Some(true), error_code(&e)),
            }
        }
        _ => unreachable!("grid stages go through run_point"),
    }
}

/// Evaluates every grid point on `workers` threads (all cores when `None`).
/// Rows come back in row-major axis order whatever the completion order.
pub fn run_sweep(cfg: &SweepConfig, workers: Option<usize>) -> Result<SweepResult, CliError> {
    cfg.validate()?;
    if cfg.stage.is_series() {
        let r = cfg.params.resolve()?;
        let records = run_series(&r, cfg.stage, &cfg.quantities, cfg.samples);
        return Ok(SweepResult {
            config: cfg.clone(),
            records,
        });
    }
    let points = (0..cfg.point_count())
        .map(|i| cfg.point(i))
        .collect::<Result<Vec<_>, _>>()?;
    let eval = |(coords, params): &(Vec<f64>, ParamFile)| {
        let coords = coords.iter().map(|&c| Some(c)).collect();
        match params.resolve() {
            Ok(r) => Record {
                coords,
                ..run_point(&r, cfg.stage, &cfg.quantities)
            },
            Err(e) => Record {
                coords,
                values: vec![None; cfg.quantities.len()],
                stable: None,
                error: Some(match e {
                    ConfigError::Model(m) => error_code(&m).to_string(),
                    _ => "invalid_parameter".to_string(),
                }),
            },
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.or(cfg.workers).unwrap_or(0))
        .build()
        .map_err(|e| ConfigError::Invalid(format!("worker pool: {e}")))?;
    let records = pool.install(|| points.par_iter().map(eval).collect());
    Ok(SweepResult {
        config: cfg.clone(),
        records,
    })
}
