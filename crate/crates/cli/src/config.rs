//! Run configuration: a sectioned `key = value` file plus flag overrides.
//!
//! ```toml
//! system = "rough"
//! N = 10000
//! T = 1.0
//! steps = 100
//! seed = 42
//! n = 4
//!
//! [init]
//! kind = "gaussian"
//! scale = 1.0
//!
//! [ladder]
//! axis = "n"
//! levels = [2, 4, 8]
//! ```

use std::path::Path;

use mvsde::coefficients::catalog;
use mvsde::coefficients::validate::SamplerSpec;
use mvsde::coefficients::Coefficients;
use mvsde::diagnostics::{catalog_pairs, FutureFn, LadderAxis, PastFn, StateBlock};
use mvsde::integrator::{InitialLawSpec, SimulationConfig};
use mvsde::meanfield::Subsample;
use mvsde::mollifier::{QuadratureMode, QuadratureSpec};
use serde::{Deserialize, Serialize};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

/// The file format, before defaults are resolved.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    system: String,
    d: Option<usize>,
    #[serde(rename = "N")]
    particles: usize,
    #[serde(rename = "T")]
    horizon: f64,
    steps: usize,
    #[serde(deserialize_with = "seed_value")]
    seed: u64,
    #[serde(default)]
    n: u32,
    #[serde(default = "one")]
    stride: usize,
    #[serde(default)]
    retain_increments: bool,
    #[serde(default)]
    init: InitSection,
    #[serde(default)]
    mollify: MollifySection,
    #[serde(default)]
    meanfield: MeanfieldSection,
    #[serde(default)]
    validate: ValidateSection,
    #[serde(default)]
    diagnostics: DiagnosticsSection,
    #[serde(default)]
    ladder: LadderSection,
    #[serde(default)]
    independence: IndependenceSection,
}

/// Integer seed, or a decimal string for seeds above `i64::MAX`.
fn seed_value<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<u64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(u64),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::Int(v) => Ok(v),
        Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
    }
}

fn one() -> usize {
    1
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitSection {
    kind: Option<String>,
    center: Option<Vec<f64>>,
    scale: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MollifySection {
    mode: Option<String>,
    points: Option<usize>,
    nodes: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeanfieldSection {
    #[serde(default)]
    subsample: Subsample,
    #[serde(default)]
    independent_copy: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ValidateSection {
    points: Option<usize>,
    box_radius: Option<f64>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DiagnosticsSection {
    lags: Option<Vec<f64>>,
    block: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct LadderSection {
    axis: Option<String>,
    levels: Option<Vec<u64>>,
    reference: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndependenceSection {
    times: Option<Vec<f64>>,
    f: Option<Vec<String>>,
    g: Option<Vec<String>>,
}

/// Fully resolved configuration. Everything here is echoed into the report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub simulation: SimulationConfig,
    pub validate: SamplerSpec,
    pub lags: Vec<f64>,
    pub block: StateBlock,
    pub ladder_axis: LadderAxis,
    pub ladder_levels: Vec<u64>,
    pub ladder_reference: Option<u64>,
    pub independence_times: Vec<f64>,
    pub independence_pairs: Vec<(PastFn, FutureFn)>,
}

/// Flags that override file keys.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub retain_increments: bool,
    /// Raw `key=value` pairs; `key` may be dotted (`ladder.levels`).
    pub set: Vec<String>,
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn apply_set(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError(format!("override {assignment:?} is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut t = table;
    for p in &parts[..parts.len() - 1] {
        t = t
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| ConfigError(format!("override key {key:?}: {p} is not a section")))?;
    }
    t.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

fn toml_error(e: toml::de::Error, source: &str, text: &str) -> ConfigError {
    let line = e
        .span()
        .map(|s| format!(" (line {})", text[..s.start.min(text.len())].matches('\n').count() + 1))
        .unwrap_or_default();
    ConfigError(format!("{source}: {}{line}", e.message().trim()))
}

/// Parses `text` (the contents of a config file) and applies overrides.
pub fn parse_config_str(text: &str, overrides: &Overrides) -> Result<RunConfig> {
    // A first pass on the raw text reports errors with file line numbers.
    let mut table: toml::Table = toml::from_str(text).map_err(|e| toml_error(e, "config file", text))?;
    if let Err(e) = toml::from_str::<FileConfig>(text) {
        let fillable = e.message().contains("missing field") && (overrides.seed.is_some() || !overrides.set.is_empty());
        if !fillable {
            return Err(toml_error(e, "config file", text));
        }
    }
    if let Some(seed) = overrides.seed {
        let v = i64::try_from(seed)
            .map(toml::Value::Integer)
            .unwrap_or_else(|_| toml::Value::String(seed.to_string()));
        table.insert("seed".into(), v);
    }
    if overrides.retain_increments {
        table.insert("retain_increments".into(), toml::Value::Boolean(true));
    }
    for s in &overrides.set {
        apply_set(&mut table, s)?;
    }
    let merged = toml::to_string(&table).map_err(|e| ConfigError(e.to_string()))?;
    let file: FileConfig = toml::from_str(&merged).map_err(|e| toml_error(e, "after overrides", &merged))?;
    resolve(file)
}

pub fn parse_config(path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| ConfigError(format!("cannot read {}: {e}", p.display())))?,
        None => String::new(),
    };
    parse_config_str(&text, overrides)
}

fn resolve(f: FileConfig) -> Result<RunConfig> {
    let system = catalog::by_name(&f.system).map_err(|e| ConfigError(e.to_string()))?;
    let d = f.d.unwrap_or(system.dim());
    if d != system.dim() {
        return Err(ConfigError(format!("d = {d} but system {} has d = {}", f.system, system.dim())));
    }
    let center = f.init.center.unwrap_or_else(|| vec![0.0; 2 * d]);
    let scale = f.init.scale.unwrap_or(1.0);
    let init = match f.init.kind.as_deref().unwrap_or("point") {
        "point" => InitialLawSpec::Point { z0: center },
        "gaussian" => InitialLawSpec::Gaussian { mean: center, scale },
        "uniform-ball" => InitialLawSpec::UniformBall { center, radius: scale },
        other => {
            return Err(ConfigError(format!(
                "init.kind = {other:?}; expected point, gaussian or uniform-ball"
            )))
        }
    };
    let mut quadrature = QuadratureSpec::default_for(d);
    match f.mollify.mode.as_deref() {
        None => {}
        Some("tensor") => quadrature.mode = QuadratureMode::TensorMidpoint,
        Some("quasi") => quadrature.mode = QuadratureMode::QuasiRandom,
        Some(other) => return Err(ConfigError(format!("mollify.mode = {other:?}; expected tensor or quasi"))),
    }
    if let Some(p) = f.mollify.points {
        quadrature.points_per_axis = p;
    }
    if let Some(n) = f.mollify.nodes {
        quadrature.total_nodes = n;
    }
    let simulation = SimulationConfig {
        system: f.system,
        level: f.n,
        d,
        particles: f.particles,
        horizon: f.horizon,
        steps: f.steps,
        seed: f.seed,
        init,
        subsample: f.meanfield.subsample,
        stride: f.stride,
        retain_increments: f.retain_increments,
        independent_copy: f.meanfield.independent_copy,
        quadrature,
    };
    simulation.validate().map_err(|e| ConfigError(e.to_string()))?;
    let mut validate = SamplerSpec::default();
    if let Some(p) = f.validate.points {
        validate.num_points = p;
    }
    if let Some(r) = f.validate.box_radius {
        validate.box_radius = r;
    }
    if let Some(s) = f.validate.seed {
        validate.seed = s;
    }
    let h = simulation.step_size();
    let lags = f.diagnostics.lags.unwrap_or_else(|| vec![4.0 * h, 2.0 * h, h]);
    let block = f
        .diagnostics
        .block
        .as_deref()
        .unwrap_or("full")
        .parse()
        .map_err(|e: mvsde::Error| ConfigError(e.to_string()))?;
    let ladder_axis = f
        .ladder
        .axis
        .as_deref()
        .unwrap_or("n")
        .parse()
        .map_err(|e: mvsde::Error| ConfigError(e.to_string()))?;
    let independence_pairs = match (f.independence.f, f.independence.g) {
        (None, None) => catalog_pairs(),
        (Some(fs), Some(gs)) if fs.len() == gs.len() => fs
            .iter()
            .zip(&gs)
            .map(|(a, b)| Ok((a.parse()?, b.parse()?)))
            .collect::<mvsde::Result<Vec<_>>>()
            .map_err(|e| ConfigError(e.to_string()))?,
        _ => return Err(ConfigError("independence.f and independence.g must list the same number of entries".into())),
    };
    let horizon = simulation.horizon;
    Ok(RunConfig {
        simulation,
        validate,
        lags,
        block,
        ladder_axis,
        ladder_levels: f.ladder.levels.unwrap_or_else(|| vec![2, 4, 8]),
        ladder_reference: f.ladder.reference,
        independence_times: f
            .independence
            .times
            .unwrap_or_else(|| vec![horizon / 4.0, horizon / 2.0, 3.0 * horizon / 4.0]),
        independence_pairs,
    })
}
