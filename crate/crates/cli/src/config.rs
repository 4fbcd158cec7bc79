//! Experiment configuration: a TOML file, optional `key=value` overrides,
//! validation diagnostics and the config hash.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Orbit,
    Loglaw,
    Hits,
    Ah,
    Met,
    Qi,
    Spherical,
    Sample,
    Measure,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 9] = [
        ExperimentKind::Orbit,
        ExperimentKind::Loglaw,
        ExperimentKind::Hits,
        ExperimentKind::Ah,
        ExperimentKind::Met,
        ExperimentKind::Qi,
        ExperimentKind::Spherical,
        ExperimentKind::Sample,
        ExperimentKind::Measure,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Orbit => "orbit",
            ExperimentKind::Loglaw => "loglaw",
            ExperimentKind::Hits => "hits",
            ExperimentKind::Ah => "ah",
            ExperimentKind::Met => "met",
            ExperimentKind::Qi => "qi",
            ExperimentKind::Spherical => "spherical",
            ExperimentKind::Sample => "sample",
            ExperimentKind::Measure => "measure",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    fn needs_target(self) -> bool {
        matches!(
            self,
            ExperimentKind::Hits | ExperimentKind::Ah | ExperimentKind::Met | ExperimentKind::Qi | ExperimentKind::Measure
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatticeChoice {
    Modular,
    Picard,
}

impl LatticeChoice {
    pub fn n(self) -> usize {
        match self {
            LatticeChoice::Modular => 2,
            LatticeChoice::Picard => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FlowConfig {
    Diag {
        #[serde(default = "default_step")]
        step: f64,
        /// Matrix entries row by row; complex entries as (re, im) pairs.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        conjugator: Option<Vec<f64>>,
    },
    Unipotent {
        #[serde(default = "default_rank")]
        rank: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        basis: Option<Vec<Vec<f64>>>,
    },
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig::Diag { step: 1.0, conjugator: None }
    }
}

impl FlowConfig {
    pub fn rank(&self) -> usize {
        match self {
            FlowConfig::Diag { .. } => 1,
            FlowConfig::Unipotent { rank, basis } => basis.as_ref().map_or(*rank, Vec::len),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Ball,
    Cusp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Plus,
    Minus,
}

/// Target families. Ball and cusp sets take exactly one schedule:
/// a fixed size, a power schedule of the size, or a measure law
/// μ(B_m) = min(cap, scale·m^{−eta}).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TargetConfig {
    Ball {
        /// [x, y] on the modular surface, [x1, x2, r] on the Picard quotient.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
        /// r(m) = radius·m^{−radius_exponent}.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        radius: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        radius_exponent: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eta: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scale: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cap: Option<f64>,
        /// Monte Carlo sample count for balls beyond the exact-measure radius.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mc_samples: Option<usize>,
    },
    Cusp {
        /// Y(m) = height·m^{height_exponent}.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        height: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        height_exponent: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eta: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scale: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cap: Option<f64>,
    },
    /// r_m = m^{−(1±ε)/n} balls at `center` or cusp sets ln Y_m = (1±ε) ln m/(n−1).
    Loglaw {
        shape: Shape,
        side: Side,
        epsilon: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
    },
    /// B_m = ∅, μ = 0.
    Empty,
    /// B_m = whole space, μ = 1.
    Whole,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_max: Option<u64>,
    /// First dyadic point; defaults to 1 (2 for log-law experiments).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_min: Option<u64>,
    /// Explicit grid; overrides the dyadic default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<u64>>,
}

pub const DEFAULT_M_MAX: u64 = 1000;

impl GridConfig {
    /// Powers of two from m_min below m_max, then m_max; or the explicit points.
    pub fn points(&self, m_min_default: u64) -> Vec<u64> {
        if let Some(p) = &self.points {
            return p.clone();
        }
        let m_max = self.m_max.unwrap_or(DEFAULT_M_MAX);
        let m_min = self.m_min.unwrap_or(m_min_default).max(1);
        let mut g: Vec<u64> =
            (0..64).map(|j| 1u64 << j).skip_while(|&m| m < m_min).take_while(|&m| m < m_max).collect();
        g.push(m_max);
        g
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Jsonl,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Jsonl => "jsonl",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SphericalConfig {
    #[serde(default = "default_s")]
    pub s: [f64; 2],
    /// Dimension of hyperbolic space; defaults to the lattice's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default = "default_t_range")]
    pub t_range: [f64; 2],
    #[serde(default = "default_t_steps")]
    pub t_steps: usize,
}

impl Default for SphericalConfig {
    fn default() -> Self {
        Self { s: default_s(), n: None, t_range: default_t_range(), t_steps: default_t_steps() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    /// Quantiles of per-sample statistics in the aggregate row.
    #[serde(default = "default_quantiles")]
    pub quantiles: Vec<f64>,
    /// Log power in the counting discrepancy |S − E|/(√E·ln^p E).
    #[serde(default = "default_discrepancy_power")]
    pub discrepancy_power: f64,
    /// Exceptional spectral exponents used for the predicted decay rate.
    #[serde(default)]
    pub exceptional_exponents: Vec<f64>,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            quantiles: default_quantiles(),
            discrepancy_power: default_discrepancy_power(),
            exceptional_exponents: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub lattice: LatticeChoice,
    pub seed: u64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetConfig>,
    #[serde(default)]
    pub grid: GridConfig,
    /// [lo, hi] for the always-hitting and quasi-independence experiments.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[u64; 2]>,
    #[serde(default)]
    pub spherical: SphericalConfig,
    #[serde(default)]
    pub report: ReportConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_step() -> f64 {
    1.0
}
fn default_rank() -> usize {
    1
}
fn default_samples() -> usize {
    100
}
fn default_workers() -> usize {
    1
}
fn default_s() -> [f64; 2] {
    [0.0, 1.0]
}
fn default_t_range() -> [f64; 2] {
    [0.0, 20.0]
}
fn default_t_steps() -> usize {
    201
}
fn default_quantiles() -> Vec<f64> {
    vec![0.1, 0.5, 0.9]
}
fn default_discrepancy_power() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Parse a TOML document and apply `key=value` overrides. Keys are dotted
/// paths; values are TOML literals, with bare words taken as strings.
pub fn load(text: &str, overrides: &[String]) -> Result<ExperimentConfig, ConfigError> {
    let mut doc: toml::Table = text.parse().map_err(|e| ConfigError(format!("config parse error: {e}")))?;
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("override `{item}` is not of the form key=value")))?;
        set_path(&mut doc, key.trim(), parse_literal(raw.trim()))?;
    }
    toml::Value::Table(doc).try_into().map_err(|e: toml::de::Error| ConfigError(format!("config error: {e}")))
}

fn parse_literal(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(doc: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), ConfigError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError(format!("override key `{key}` is malformed")));
    }
    let mut table = doc;
    for part in &parts[..parts.len() - 1] {
        let entry = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError(format!("override `{key}`: `{part}` is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    /// SHA-256 of the canonical JSON form, ignoring worker count and output settings.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.workers = 1;
        c.output = OutputConfig::default();
        let canonical = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn grid_points(&self) -> Vec<u64> {
        let m_min = if self.experiment == ExperimentKind::Loglaw { 2 } else { 1 };
        self.grid.points(m_min)
    }

    pub fn m_max(&self) -> u64 {
        *self.grid_points().last().unwrap_or(&DEFAULT_M_MAX)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}", self.message)
    }
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(|d| d.severity == Severity::Error)
}

/// Contract checks that need no numerics. Regime warnings that need the
/// target measures are added in `run::regime_warnings`.
pub fn validate(c: &ExperimentConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut error = |m: String| out.push(Diagnostic { severity: Severity::Error, message: m });
    let n = c.lattice.n();
    let kind = c.experiment;

    if c.samples == 0 {
        error("samples must be ≥ 1".into());
    }
    if c.workers == 0 {
        error("workers must be ≥ 1".into());
    }
    let grid = c.grid_points();
    if grid.is_empty() || grid[0] == 0 || grid.windows(2).any(|w| w[0] >= w[1]) {
        error("grid must be non-empty, positive and strictly increasing".into());
    }
    if let Some(mm) = c.grid.m_max {
        if mm == 0 {
            error("grid.m_max must be ≥ 1".into());
        }
    }
    match &c.flow {
        FlowConfig::Diag { step, conjugator } => {
            if !(*step > 0.0 && step.is_finite()) {
                error(format!("flow.step must be positive, got {step}"));
            }
            if let Some(m) = conjugator {
                let want = if n == 2 { 4 } else { 8 };
                if m.len() != want {
                    error(format!("flow.conjugator needs {want} numbers for this lattice, got {}", m.len()));
                }
            }
        }
        FlowConfig::Unipotent { rank, basis } => {
            let r = basis.as_ref().map_or(*rank, Vec::len);
            if r == 0 || r > n - 1 {
                error(format!("unipotent rank must lie in 1..={} for this lattice, got {r}", n - 1));
            }
            if let Some(b) = basis {
                if b.iter().any(|v| v.len() != n - 1) {
                    error(format!("unipotent basis vectors must have {} entries", n - 1));
                }
            }
        }
    }
    if let Some(t) = &c.target {
        validate_target(t, n, &mut error);
    } else if kind.needs_target() {
        error(format!("experiment `{}` needs a [target] section", kind.name()));
    }
    let rank1 = c.flow.rank() == 1;
    match kind {
        ExperimentKind::Loglaw | ExperimentKind::Orbit if !rank1 => {
            error(format!("experiment `{}` follows a one-parameter orbit; use a rank-1 flow", kind.name()))
        }
        ExperimentKind::Qi if !rank1 => error("experiment `qi` follows a one-parameter orbit; use a rank-1 flow".into()),
        _ => {}
    }
    if kind == ExperimentKind::Loglaw {
        if c.m_max() < 1000 {
            error(format!("log-law experiments need grid.m_max ≥ 1000, got {}", c.m_max()));
        }
        if grid.first().is_some_and(|&g| g < 2) {
            error("log-law grid must start at m ≥ 2".into());
        }
    }
    if matches!(kind, ExperimentKind::Ah | ExperimentKind::Qi) {
        match c.window {
            None => error(format!("experiment `{}` needs window = [lo, hi]", kind.name())),
            Some([lo, hi]) if !(1 <= lo && lo < hi) => error(format!("window needs 1 ≤ lo < hi, got [{lo}, {hi}]")),
            _ => {}
        }
    }
    if kind == ExperimentKind::Qi {
        if let Some(TargetConfig::Empty | TargetConfig::Whole) = &c.target {
            error("experiment `qi` needs a ball or cusp target".into());
        }
    }
    if kind == ExperimentKind::Spherical {
        let s = &c.spherical;
        let [t0, t1] = s.t_range;
        if !(0.0 <= t0 && t0 <= t1 && t1.is_finite()) || s.t_steps == 0 {
            error("spherical.t_range must satisfy 0 ≤ t0 ≤ t1 and t_steps ≥ 1".into());
        }
        if s.n.is_some_and(|n| n < 2) {
            error("spherical.n must be ≥ 2".into());
        }
    }
    if c.report.quantiles.iter().any(|q| !(0.0..=1.0).contains(q)) {
        error("report.quantiles must lie in [0, 1]".into());
    }
    out
}

fn validate_target(t: &TargetConfig, n: usize, error: &mut impl FnMut(String)) {
    let center_ok = |c: &Option<Vec<f64>>| c.as_ref().is_none_or(|v| v.len() == n);
    match t {
        TargetConfig::Ball { center, radius, radius_exponent, eta, scale, cap, .. } => {
            if !center_ok(center) {
                error(format!("target.center needs {n} coordinates"));
            }
            match (radius, eta) {
                (Some(_), Some(_)) | (None, None) => {
                    error("ball target takes exactly one of `radius` or `eta`".into())
                }
                (Some(r), None) => {
                    if !(*r > 0.0) {
                        error(format!("target.radius must be positive, got {r}"));
                    }
                    if scale.is_some() || cap.is_some() {
                        error("`scale` and `cap` apply to `eta` schedules only".into());
                    }
                    if radius_exponent.is_some_and(|e| e < 0.0) {
                        error("target.radius_exponent must be ≥ 0 (radii shrink)".into());
                    }
                }
                (None, Some(e)) => check_law(*e, *scale, *cap, error),
            }
        }
        TargetConfig::Cusp { height, height_exponent, eta, scale, cap } => match (height, eta) {
            (Some(_), Some(_)) | (None, None) => error("cusp target takes exactly one of `height` or `eta`".into()),
            (Some(y), None) => {
                if !(*y > 0.0) {
                    error(format!("target.height must be positive, got {y}"));
                }
                if height_exponent.is_some_and(|e| e < 0.0) {
                    error("target.height_exponent must be ≥ 0 (heights grow)".into());
                }
            }
            (None, Some(e)) => check_law(*e, *scale, *cap, error),
        },
        TargetConfig::Loglaw { epsilon, center, shape, .. } => {
            if !(0.0..1.0).contains(epsilon) {
                error(format!("target.epsilon must lie in [0, 1), got {epsilon}"));
            }
            if *shape == Shape::Cusp && center.is_some() {
                error("cusp log-law targets take no center".into());
            }
            if !center_ok(center) {
                error(format!("target.center needs {n} coordinates"));
            }
        }
        TargetConfig::Empty | TargetConfig::Whole => {}
    }
}

fn check_law(eta: f64, scale: Option<f64>, cap: Option<f64>, error: &mut impl FnMut(String)) {
    if !(eta >= 0.0 && eta.is_finite()) {
        error(format!("target.eta must be ≥ 0, got {eta}"));
    }
    if scale.is_some_and(|s| !(s > 0.0)) {
        error("target.scale must be positive".into());
    }
    if cap.is_some_and(|c| !(c > 0.0 && c <= 1.0)) {
        error("target.cap must lie in (0, 1]".into());
    }
}
