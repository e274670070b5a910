//! Run configuration: flat `key = value` lines with dotted section prefixes.
//!
//! ```text
//! # MP model, three spectral points
//! model.type = gaussian_field
//! model.rows = 64
//! model.cols = 64
//! model.taps = 0:0:1
//! command = solve
//! command.z = -1, i, 2i
//! ```
//!
//! Blank lines and `#` comments are skipped. Values may be wrapped in double
//! quotes. Unknown, duplicated or misplaced keys are rejected.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use detequiv_core::io::{format_complex, parse_complex};
use detequiv_core::model::{BlockVariant, ScalarField};
use detequiv_core::montecarlo::Distribution;
use detequiv_core::solver::{check_spectral_point, SolverConfig};
use num_complex::Complex64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SchemaError {
    pub key: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: key '{}': {}", self.key, self.message),
            None => write!(f, "key '{}': {}", self.key, self.message),
        }
    }
}

impl std::error::Error for SchemaError {}

/// Fourier coefficient `c_{k1,k2}` of the field symbol.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tap {
    pub k1: i64,
    pub k2: i64,
    pub value: Complex64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelConfig {
    Explicit {
        field: ScalarField,
        profile: PathBuf,
        centering: Option<PathBuf>,
    },
    Separable {
        field: ScalarField,
        d: Vec<f64>,
        d_tilde: Vec<f64>,
        centering: Option<PathBuf>,
    },
    GaussianField {
        rows: usize,
        cols: usize,
        taps: Vec<Tap>,
        b: Option<PathBuf>,
    },
    BlockExample {
        n: usize,
        variant: BlockVariant,
    },
    Dx {
        lambdas: Vec<f64>,
        cols: usize,
    },
}

impl ModelConfig {
    pub fn type_name(&self) -> &'static str {
        match self {
            ModelConfig::Explicit { .. } => "explicit",
            ModelConfig::Separable { .. } => "separable",
            ModelConfig::GaussianField { .. } => "gaussian_field",
            ModelConfig::BlockExample { .. } => "block_example",
            ModelConfig::Dx { .. } => "dx",
        }
    }

    pub fn field(&self) -> ScalarField {
        match self {
            ModelConfig::Explicit { field, .. } | ModelConfig::Separable { field, .. } => *field,
            ModelConfig::GaussianField { .. } => ScalarField::Complex,
            ModelConfig::BlockExample { .. } | ModelConfig::Dx { .. } => ScalarField::Real,
        }
    }
}

/// `count` evenly spaced points from `start` to `stop`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl GridSpec {
    pub fn points(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let step = (self.stop - self.start) / (self.count - 1) as f64;
        (0..self.count)
            .map(|k| {
                if k + 1 == self.count {
                    self.stop
                } else {
                    self.start + step * k as f64
                }
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CapacityChoice {
    ClosedForm,
    Quadrature,
    Both,
}

impl CapacityChoice {
    fn name(self) -> &'static str {
        match self {
            CapacityChoice::ClosedForm => "closed_form",
            CapacityChoice::Quadrature => "quadrature",
            CapacityChoice::Both => "both",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SampleSettings {
    pub trials: usize,
    pub seed: u64,
    /// `None` picks the Gaussian law of the model's field.
    pub distribution: Option<Distribution>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum CommandConfig {
    Solve {
        z: Vec<Complex64>,
    },
    Density {
        grid: GridSpec,
        eta: Option<f64>,
        intervals: Vec<(f64, f64)>,
    },
    Capacity {
        sigma2: Vec<f64>,
        method: CapacityChoice,
        quad_tol: f64,
    },
    Validate {
        z: Vec<Complex64>,
        sigma2: Vec<f64>,
        points: usize,
        family: Vec<usize>,
        mc_tol: f64,
        sample: SampleSettings,
    },
    Demo {
        sample: SampleSettings,
    },
}

impl CommandConfig {
    pub fn name(&self) -> &'static str {
        match self {
            CommandConfig::Solve { .. } => "solve",
            CommandConfig::Density { .. } => "density",
            CommandConfig::Capacity { .. } => "capacity",
            CommandConfig::Validate { .. } => "validate",
            CommandConfig::Demo { .. } => "demo",
        }
    }

    pub fn sample_mut(&mut self) -> Option<&mut SampleSettings> {
        match self {
            CommandConfig::Validate { sample, .. } | CommandConfig::Demo { sample } => Some(sample),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub command: CommandConfig,
    pub solver: SolverConfig,
    pub output: PathBuf,
}

impl RunConfig {
    /// Resolves relative model file paths against `base`.
    pub fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.model {
            ModelConfig::Explicit {
                profile, centering, ..
            } => {
                fix(profile);
                if let Some(c) = centering {
                    fix(c);
                }
            }
            ModelConfig::Separable {
                centering: Some(c), ..
            } => fix(c),
            ModelConfig::GaussianField { b: Some(b), .. } => fix(b),
            _ => {}
        }
    }
}

pub const DEFAULT_OUTPUT: &str = "out";
const DEFAULT_QUAD_TOL: f64 = 1e-8;
const DEFAULT_POINTS: usize = 20;
const DEFAULT_MC_TOL: f64 = 0.02;
const DEFAULT_VALIDATE_TRIALS: usize = 20;
const DEFAULT_DEMO_TRIALS: usize = 10;

struct Entry {
    value: String,
    line: usize,
    used: bool,
}

struct Entries(BTreeMap<String, Entry>);

fn err(key: &str, line: Option<usize>, message: impl Into<String>) -> SchemaError {
    SchemaError {
        key: key.to_string(),
        line,
        message: message.into(),
    }
}

impl Entries {
    fn parse(text: &str) -> Result<Self, SchemaError> {
        let mut map = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                return Err(err(trimmed, Some(line), "expected 'key = value'"));
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(err(key, Some(line), "empty key"));
            }
            let mut value = value.trim();
            if value.len() >= 2 && value.starts_with('"') && value.ends_with('"') {
                value = &value[1..value.len() - 1];
            }
            if let Some(prev) = map.get(key) {
                let prev: &Entry = prev;
                return Err(err(
                    key,
                    Some(line),
                    format!("duplicate key, first set on line {}", prev.line),
                ));
            }
            map.insert(
                key.to_string(),
                Entry {
                    value: value.to_string(),
                    line,
                    used: false,
                },
            );
        }
        Ok(Entries(map))
    }

    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.0.get_mut(key).map(|e| {
            e.used = true;
            (e.value.clone(), e.line)
        })
    }

    fn required(&mut self, key: &str) -> Result<(String, usize), SchemaError> {
        self.take(key)
            .ok_or_else(|| err(key, None, "required key is missing"))
    }

    fn get<T>(
        &mut self,
        key: &str,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<Option<T>, SchemaError> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => parse(&v).map(Some).map_err(|m| err(key, Some(line), m)),
        }
    }

    fn need<T>(
        &mut self,
        key: &str,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<T, SchemaError> {
        let (v, line) = self.required(key)?;
        parse(&v).map_err(|m| err(key, Some(line), m))
    }

    fn line_of(&self, key: &str) -> Option<usize> {
        self.0.get(key).map(|e| e.line)
    }

    fn reject_unused(&self, context: &str) -> Result<(), SchemaError> {
        match self.0.iter().find(|(_, e)| !e.used) {
            None => Ok(()),
            Some((key, e)) => Err(err(key, Some(e.line), format!("unknown key{context}"))),
        }
    }
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let x: f64 = s
        .trim()
        .parse()
        .map_err(|_| format!("'{s}' is not a number"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("'{s}' is not finite"))
    }
}

fn positive_f64(s: &str) -> Result<f64, String> {
    let x = parse_f64(s)?;
    if x > 0.0 {
        Ok(x)
    } else {
        Err(format!("{x} must be positive"))
    }
}

fn parse_usize(s: &str) -> Result<usize, String> {
    s.trim()
        .parse()
        .map_err(|_| format!("'{s}' is not a nonnegative integer"))
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match parse_usize(s)? {
        0 => Err("must be at least 1".into()),
        n => Ok(n),
    }
}

fn parse_u64(s: &str) -> Result<u64, String> {
    s.trim()
        .parse()
        .map_err(|_| format!("'{s}' is not a 64-bit unsigned integer"))
}

fn list<T>(s: &str, item: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    let items: Vec<T> = s
        .split(',')
        .map(|p| item(p.trim()))
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        Err("list is empty".into())
    } else {
        Ok(items)
    }
}

fn spectral_point(s: &str) -> Result<Complex64, String> {
    let z = parse_complex(s)?;
    check_spectral_point(z).map_err(|_| format!("{s} lies on the nonnegative real axis"))?;
    Ok(z)
}

fn parse_field(s: &str) -> Result<ScalarField, String> {
    match s {
        "real" => Ok(ScalarField::Real),
        "complex" => Ok(ScalarField::Complex),
        _ => Err(format!("field must be 'real' or 'complex', got '{s}'")),
    }
}

fn parse_variant(s: &str) -> Result<BlockVariant, String> {
    match s {
        "upsilon" => Ok(BlockVariant::Upsilon),
        "upsilon_tilde" => Ok(BlockVariant::UpsilonTilde),
        _ => Err(format!(
            "variant must be 'upsilon' or 'upsilon_tilde', got '{s}'"
        )),
    }
}

fn variant_name(v: BlockVariant) -> &'static str {
    match v {
        BlockVariant::Upsilon => "upsilon",
        BlockVariant::UpsilonTilde => "upsilon_tilde",
    }
}

fn parse_tap(s: &str) -> Result<Tap, String> {
    let mut parts = s.splitn(3, ':');
    let (Some(a), Some(b), Some(v)) = (parts.next(), parts.next(), parts.next()) else {
        return Err(format!("tap '{s}' must read k1:k2:value"));
    };
    let int = |t: &str| {
        t.trim()
            .parse::<i64>()
            .map_err(|_| format!("'{t}' is not an integer"))
    };
    Ok(Tap {
        k1: int(a)?,
        k2: int(b)?,
        value: parse_complex(v)?,
    })
}

fn parse_grid(s: &str) -> Result<GridSpec, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, n] = parts.as_slice() else {
        return Err(format!("grid '{s}' must read start:stop:count"));
    };
    let grid = GridSpec {
        start: parse_f64(a)?,
        stop: parse_f64(b)?,
        count: positive_usize(n)?,
    };
    if grid.start < 0.0 {
        return Err("grid must start at a value >= 0".into());
    }
    if grid.count > 1 && grid.stop <= grid.start {
        return Err("grid stop must exceed its start".into());
    }
    Ok(grid)
}

fn parse_interval(s: &str) -> Result<(f64, f64), String> {
    let Some((a, b)) = s.split_once(':') else {
        return Err(format!("interval '{s}' must read a:b"));
    };
    let (a, b) = (parse_f64(a)?, parse_f64(b)?);
    if b <= a {
        return Err(format!("interval {a}:{b} is empty"));
    }
    Ok((a, b))
}

fn parse_distribution(s: &str) -> Result<Distribution, String> {
    s.parse()
}

fn parse_method(s: &str) -> Result<CapacityChoice, String> {
    match s {
        "closed_form" => Ok(CapacityChoice::ClosedForm),
        "quadrature" => Ok(CapacityChoice::Quadrature),
        "both" => Ok(CapacityChoice::Both),
        _ => Err(format!(
            "method must be closed_form, quadrature or both, got '{s}'"
        )),
    }
}

fn parse_model(e: &mut Entries) -> Result<ModelConfig, SchemaError> {
    let (kind, line) = e.required("model.type")?;
    Ok(match kind.as_str() {
        "explicit" => ModelConfig::Explicit {
            field: e.get("model.field", parse_field)?.unwrap_or(ScalarField::Real),
            profile: PathBuf::from(e.required("model.profile")?.0),
            centering: e.take("model.centering").map(|v| PathBuf::from(v.0)),
        },
        "separable" => ModelConfig::Separable {
            field: e.get("model.field", parse_field)?.unwrap_or(ScalarField::Real),
            d: e.need("model.d", |s| list(s, parse_f64))?,
            d_tilde: e.need("model.d_tilde", |s| list(s, parse_f64))?,
            centering: e.take("model.centering").map(|v| PathBuf::from(v.0)),
        },
        "gaussian_field" => ModelConfig::GaussianField {
            rows: e.need("model.rows", positive_usize)?,
            cols: e.need("model.cols", positive_usize)?,
            taps: e.need("model.taps", |s| list(s, parse_tap))?,
            b: e.take("model.b").map(|v| PathBuf::from(v.0)),
        },
        "block_example" => ModelConfig::BlockExample {
            n: e.need("model.n", positive_usize)?,
            variant: e.get("model.variant", parse_variant)?.unwrap_or(BlockVariant::Upsilon),
        },
        "dx" => ModelConfig::Dx {
            lambdas: e.need("model.lambdas", |s| list(s, parse_f64))?,
            cols: e.need("model.cols", positive_usize)?,
        },
        other => {
            return Err(err(
                "model.type",
                Some(line),
                format!("unknown model type '{other}' (expected explicit, separable, gaussian_field, block_example or dx)"),
            ))
        }
    })
}

fn parse_sample(e: &mut Entries, default_trials: usize) -> Result<SampleSettings, SchemaError> {
    Ok(SampleSettings {
        trials: e
            .get("command.trials", positive_usize)?
            .unwrap_or(default_trials),
        seed: e.get("command.seed", parse_u64)?.unwrap_or(0),
        distribution: e.get("command.distribution", parse_distribution)?,
    })
}

fn parse_command(e: &mut Entries, model: &ModelConfig) -> Result<CommandConfig, SchemaError> {
    let (kind, line) = e.required("command")?;
    Ok(match kind.as_str() {
        "solve" => CommandConfig::Solve {
            z: e.need("command.z", |s| list(s, spectral_point))?,
        },
        "density" => CommandConfig::Density {
            grid: e.need("command.grid", parse_grid)?,
            eta: e.get("command.eta", positive_f64)?,
            intervals: e
                .get("command.intervals", |s| list(s, parse_interval))?
                .unwrap_or_default(),
        },
        "capacity" => CommandConfig::Capacity {
            sigma2: e.need("command.sigma2", |s| list(s, positive_f64))?,
            method: e
                .get("command.method", parse_method)?
                .unwrap_or(CapacityChoice::ClosedForm),
            quad_tol: e
                .get("command.quad_tol", positive_f64)?
                .unwrap_or(DEFAULT_QUAD_TOL),
        },
        "validate" => {
            let family = e
                .get("command.family", |s| list(s, positive_usize))?
                .unwrap_or_default();
            let scalable = match model {
                ModelConfig::BlockExample { .. } => true,
                ModelConfig::GaussianField { b, .. } => b.is_none(),
                _ => false,
            };
            if !family.is_empty() && !scalable {
                return Err(err(
                    "command.family",
                    e.line_of("command.family"),
                    "size families need a block_example model or a gaussian_field model without model.b",
                ));
            }
            CommandConfig::Validate {
                z: e.get("command.z", |s| list(s, spectral_point))?
                    .unwrap_or_else(|| vec![Complex64::new(-1.0, 0.0)]),
                sigma2: e
                    .get("command.sigma2", |s| list(s, positive_f64))?
                    .unwrap_or_else(|| vec![0.5, 1.0, 2.0]),
                points: e
                    .get("command.points", parse_usize)?
                    .unwrap_or(DEFAULT_POINTS),
                family,
                mc_tol: e
                    .get("command.mc_tol", positive_f64)?
                    .unwrap_or(DEFAULT_MC_TOL),
                sample: parse_sample(e, DEFAULT_VALIDATE_TRIALS)?,
            }
        }
        "demo" => {
            if !matches!(model, ModelConfig::BlockExample { .. }) {
                return Err(err(
                    "command",
                    Some(line),
                    "demo runs on a block_example model",
                ));
            }
            CommandConfig::Demo {
                sample: parse_sample(e, DEFAULT_DEMO_TRIALS)?,
            }
        }
        other => {
            return Err(err(
                "command",
                Some(line),
                format!(
                "unknown command '{other}' (expected solve, density, capacity, validate or demo)"
            ),
            ))
        }
    })
}

fn parse_solver(e: &mut Entries) -> Result<SolverConfig, SchemaError> {
    let defaults = SolverConfig::default();
    let damping = e
        .get("solver.damping", parse_f64)?
        .unwrap_or(defaults.damping);
    if !(0.0..1.0).contains(&damping) {
        return Err(err(
            "solver.damping",
            e.line_of("solver.damping"),
            "damping must lie in [0, 1)",
        ));
    }
    Ok(SolverConfig {
        tol: e.get("solver.tol", positive_f64)?.unwrap_or(defaults.tol),
        max_iter: e
            .get("solver.max_iter", positive_usize)?
            .unwrap_or(defaults.max_iter),
        damping,
        continuation_start_height: e.get("solver.start_height", positive_f64)?,
    })
}

pub fn parse_config(text: &str) -> Result<RunConfig, SchemaError> {
    let mut e = Entries::parse(text)?;
    let model = parse_model(&mut e)?;
    let command = parse_command(&mut e, &model)?;
    let solver = parse_solver(&mut e)?;
    let output = e
        .take("output.dir")
        .map(|v| PathBuf::from(v.0))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT));
    let context = format!(
        " for model.type = {} and command = {}",
        model.type_name(),
        command.name()
    );
    e.reject_unused(&context)?;
    Ok(RunConfig {
        model,
        command,
        solver,
        output,
    })
}

fn join<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(", ")
}

/// Canonical text form; [`parse_config`] reads it back to an equal value.
pub fn render(config: &RunConfig) -> String {
    let mut lines: Vec<(String, String)> = Vec::new();
    let mut put = |k: &str, v: String| lines.push((k.to_string(), v));
    put("model.type", config.model.type_name().into());
    match &config.model {
        ModelConfig::Explicit {
            field,
            profile,
            centering,
        } => {
            put("model.field", field.name().into());
            put("model.profile", profile.display().to_string());
            if let Some(c) = centering {
                put("model.centering", c.display().to_string());
            }
        }
        ModelConfig::Separable {
            field,
            d,
            d_tilde,
            centering,
        } => {
            put("model.field", field.name().into());
            put("model.d", join(d, f64::to_string));
            put("model.d_tilde", join(d_tilde, f64::to_string));
            if let Some(c) = centering {
                put("model.centering", c.display().to_string());
            }
        }
        ModelConfig::GaussianField {
            rows,
            cols,
            taps,
            b,
        } => {
            put("model.rows", rows.to_string());
            put("model.cols", cols.to_string());
            put(
                "model.taps",
                join(taps, |t| {
                    format!("{}:{}:{}", t.k1, t.k2, format_complex(t.value))
                }),
            );
            if let Some(b) = b {
                put("model.b", b.display().to_string());
            }
        }
        ModelConfig::BlockExample { n, variant } => {
            put("model.n", n.to_string());
            put("model.variant", variant_name(*variant).into());
        }
        ModelConfig::Dx { lambdas, cols } => {
            put("model.lambdas", join(lambdas, f64::to_string));
            put("model.cols", cols.to_string());
        }
    }
    put("command", config.command.name().into());
    let sample = |put: &mut dyn FnMut(&str, String), s: &SampleSettings| {
        put("command.trials", s.trials.to_string());
        put("command.seed", s.seed.to_string());
        if let Some(d) = s.distribution {
            put("command.distribution", d.name().into());
        }
    };
    match &config.command {
        CommandConfig::Solve { z } => put("command.z", join(z, |z| format_complex(*z))),
        CommandConfig::Density {
            grid,
            eta,
            intervals,
        } => {
            put(
                "command.grid",
                format!("{}:{}:{}", grid.start, grid.stop, grid.count),
            );
            if let Some(eta) = eta {
                put("command.eta", eta.to_string());
            }
            if !intervals.is_empty() {
                put(
                    "command.intervals",
                    join(intervals, |(a, b)| format!("{a}:{b}")),
                );
            }
        }
        CommandConfig::Capacity {
            sigma2,
            method,
            quad_tol,
        } => {
            put("command.sigma2", join(sigma2, f64::to_string));
            put("command.method", method.name().into());
            put("command.quad_tol", quad_tol.to_string());
        }
        CommandConfig::Validate {
            z,
            sigma2,
            points,
            family,
            mc_tol,
            sample: s,
        } => {
            put("command.z", join(z, |z| format_complex(*z)));
            put("command.sigma2", join(sigma2, f64::to_string));
            put("command.points", points.to_string());
            if !family.is_empty() {
                put("command.family", join(family, usize::to_string));
            }
            put("command.mc_tol", mc_tol.to_string());
            sample(&mut put, s);
        }
        CommandConfig::Demo { sample: s } => sample(&mut put, s),
    }
    put("solver.tol", config.solver.tol.to_string());
    put("solver.max_iter", config.solver.max_iter.to_string());
    put("solver.damping", config.solver.damping.to_string());
    if let Some(h) = config.solver.continuation_start_height {
        put("solver.start_height", h.to_string());
    }
    put("output.dir", config.output.display().to_string());
    lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MINIMAL: &str =
        "model.type = explicit\nmodel.profile = sigma.csv\ncommand = solve\ncommand.z = -1\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.solver.tol, 1e-12);
        assert_eq!(c.solver.max_iter, 10_000);
        assert_eq!(c.output, PathBuf::from("out"));
        assert_eq!(
            c.model,
            ModelConfig::Explicit {
                field: ScalarField::Real,
                profile: "sigma.csv".into(),
                centering: None
            }
        );
    }

    #[test]
    fn unknown_key_is_named() {
        let text = format!("{MINIMAL}solver.tolrance = 1e-9\n");
        let e = parse_config(&text).unwrap_err();
        assert_eq!(e.key, "solver.tolrance");
        assert_eq!(e.line, Some(5));
        let e = parse_config("model.type = dx\nmodel.lambdas = 1\nmodel.cols = 2\nmodel.profile = x\ncommand = solve\ncommand.z = i\n").unwrap_err();
        assert_eq!(e.key, "model.profile");
    }

    #[test]
    fn malformed_lines() {
        assert_eq!(
            parse_config("model.type explicit\n").unwrap_err().line,
            Some(1)
        );
        let dup = format!("{MINIMAL}command.z = i\n");
        assert_eq!(parse_config(&dup).unwrap_err().key, "command.z");
        assert_eq!(
            parse_config("command = solve\n").unwrap_err().key,
            "model.type"
        );
        let bad = MINIMAL.replace("command = solve", "command = run");
        assert_eq!(parse_config(&bad).unwrap_err().key, "command");
    }

    #[test]
    fn density_without_eta() {
        let text =
            "model.type = block_example\nmodel.n = 4\ncommand = density\ncommand.grid = 0:4:41\n";
        let c = parse_config(text).unwrap();
        match c.command {
            CommandConfig::Density { eta, grid, .. } => {
                assert_eq!(eta, None);
                assert_eq!(grid.points().len(), 41);
                assert_eq!(grid.points()[40], 4.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn value_checks() {
        let cap = "model.type = dx\nmodel.lambdas = 1, 2\nmodel.cols = 3\ncommand = capacity\ncommand.sigma2 = -1\n";
        let e = parse_config(cap).unwrap_err();
        assert_eq!((e.key.as_str(), e.line), ("command.sigma2", Some(5)));
        let z = MINIMAL.replace("command.z = -1", "command.z = 2");
        assert_eq!(parse_config(&z).unwrap_err().key, "command.z");
        let damp = format!("{MINIMAL}solver.damping = 1\n");
        assert_eq!(parse_config(&damp).unwrap_err().key, "solver.damping");
        let fam = "model.type = dx\nmodel.lambdas = 1\nmodel.cols = 3\ncommand = validate\ncommand.family = 10, 20\n";
        assert_eq!(parse_config(fam).unwrap_err().key, "command.family");
        let demo = "model.type = dx\nmodel.lambdas = 1\nmodel.cols = 3\ncommand = demo\n";
        assert_eq!(parse_config(demo).unwrap_err().key, "command");
    }

    #[test]
    fn quoted_values_and_comments() {
        let text = "# comment\nmodel.type = \"gaussian_field\"\nmodel.rows = 4\nmodel.cols = 6\nmodel.taps = \"0:0:1, 1:-1:0.5-0.25i\"\n\ncommand = solve\ncommand.z = \"-1, i, 2i\"\n";
        let c = parse_config(text).unwrap();
        match &c.model {
            ModelConfig::GaussianField { taps, .. } => {
                assert_eq!(
                    taps[1],
                    Tap {
                        k1: 1,
                        k2: -1,
                        value: Complex64::new(0.5, -0.25)
                    }
                );
            }
            other => panic!("{other:?}"),
        }
        match &c.command {
            CommandConfig::Solve { z } => assert_eq!(z[2], Complex64::new(0.0, 2.0)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rebase_model_paths() {
        let mut c = parse_config(MINIMAL).unwrap();
        c.rebase(Path::new("/data"));
        match c.model {
            ModelConfig::Explicit { profile, .. } => {
                assert_eq!(profile, PathBuf::from("/data/sigma.csv"))
            }
            other => panic!("{other:?}"),
        }
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![-1e3f64..1e3, Just(0.0), Just(1e-12)]
    }

    fn positive() -> impl Strategy<Value = f64> {
        prop_oneof![1e-6f64..1e3, Just(1e-12)]
    }

    fn spectral() -> impl Strategy<Value = Complex64> {
        prop_oneof![
            (finite(), 1e-6f64..1e3).prop_map(|(re, im)| Complex64::new(re, im)),
            (finite(), -1e3f64..-1e-6).prop_map(|(re, im)| Complex64::new(re, im)),
            (-1e3f64..-1e-6).prop_map(|re| Complex64::new(re, 0.0)),
        ]
    }

    fn sample() -> impl Strategy<Value = SampleSettings> {
        (
            1usize..100,
            any::<u64>(),
            prop::option::of(prop_oneof![
                Just(Distribution::Gaussian),
                Just(Distribution::Rademacher),
                Just(Distribution::CircularGaussian)
            ]),
        )
            .prop_map(|(trials, seed, distribution)| SampleSettings {
                trials,
                seed,
                distribution,
            })
    }

    fn model() -> impl Strategy<Value = ModelConfig> {
        let field = prop_oneof![Just(ScalarField::Real), Just(ScalarField::Complex)];
        let path = "[a-z]{1,8}(/[a-z]{1,8})?\\.csv".prop_map(PathBuf::from);
        prop_oneof![
            (field.clone(), path.clone(), prop::option::of(path.clone())).prop_map(
                |(field, profile, centering)| ModelConfig::Explicit {
                    field,
                    profile,
                    centering
                }
            ),
            (
                field,
                prop::collection::vec(finite(), 1..5),
                prop::collection::vec(finite(), 1..5),
                prop::option::of(path.clone())
            )
                .prop_map(|(field, d, d_tilde, centering)| ModelConfig::Separable {
                    field,
                    d,
                    d_tilde,
                    centering
                }),
            (
                1usize..50,
                1usize..50,
                prop::collection::vec((-3i64..3, -3i64..3, finite(), finite()), 1..4)
            )
                .prop_map(|(rows, cols, t)| ModelConfig::GaussianField {
                    rows,
                    cols,
                    taps: t
                        .into_iter()
                        .map(|(k1, k2, re, im)| Tap {
                            k1,
                            k2,
                            value: Complex64::new(re, im)
                        })
                        .collect(),
                    b: None,
                }),
            (
                1usize..300,
                prop_oneof![
                    Just(BlockVariant::Upsilon),
                    Just(BlockVariant::UpsilonTilde)
                ]
            )
                .prop_map(|(n, variant)| ModelConfig::BlockExample { n, variant }),
            (prop::collection::vec(finite(), 1..5), 1usize..50)
                .prop_map(|(lambdas, cols)| ModelConfig::Dx { lambdas, cols }),
        ]
    }

    fn command() -> impl Strategy<Value = CommandConfig> {
        prop_oneof![
            prop::collection::vec(spectral(), 1..4).prop_map(|z| CommandConfig::Solve { z }),
            (
                0f64..10.0,
                1e-3f64..10.0,
                1usize..500,
                prop::option::of(positive()),
                prop::collection::vec((finite(), positive()), 0..3)
            )
                .prop_map(|(start, width, count, eta, iv)| CommandConfig::Density {
                    grid: GridSpec {
                        start,
                        stop: start + width,
                        count
                    },
                    eta,
                    intervals: iv.into_iter().map(|(a, w)| (a, a + w)).collect(),
                }),
            (
                prop::collection::vec(positive(), 1..4),
                prop_oneof![
                    Just(CapacityChoice::ClosedForm),
                    Just(CapacityChoice::Quadrature),
                    Just(CapacityChoice::Both)
                ],
                positive()
            )
                .prop_map(|(sigma2, method, quad_tol)| CommandConfig::Capacity {
                    sigma2,
                    method,
                    quad_tol
                }),
            (
                prop::collection::vec(spectral(), 1..3),
                prop::collection::vec(positive(), 1..3),
                0usize..50,
                positive(),
                sample()
            )
                .prop_map(|(z, sigma2, points, mc_tol, sample)| {
                    CommandConfig::Validate {
                        z,
                        sigma2,
                        points,
                        family: vec![],
                        mc_tol,
                        sample,
                    }
                }),
        ]
    }

    proptest! {
        #[test]
        fn render_round_trip(
            model in model(),
            command in command(),
            tol in positive(),
            max_iter in 1usize..100_000,
            damping in 0f64..0.99,
            height in prop::option::of(positive()),
            out in "[a-z]{1,10}",
        ) {
            let config = RunConfig {
                model,
                command,
                solver: SolverConfig { tol, max_iter, damping, continuation_start_height: height },
                output: PathBuf::from(out),
            };
            let text = render(&config);
            prop_assert_eq!(parse_config(&text).unwrap(), config);
        }
    }

    #[test]
    fn round_trip_with_family_and_demo() {
        for text in [
            "model.type = block_example\nmodel.n = 8\ncommand = demo\ncommand.seed = 4\n",
            "model.type = gaussian_field\nmodel.rows = 8\nmodel.cols = 8\nmodel.taps = 0:0:1\ncommand = validate\ncommand.family = 50, 100\n",
        ] {
            let c = parse_config(text).unwrap();
            assert_eq!(parse_config(&render(&c)).unwrap(), c);
        }
    }
}
