//! Experiment configuration: TOML or JSON files, `ONSET_` environment
//! overrides and command-line flags, merged in that order.

use std::path::{Path, PathBuf};

use onset_core::aimd::{AimdConfig, LossSource};
use onset_core::model::{realize_link, BaseDesign, CriticalitySpread, LinkParams, LoadModel, SpreadShape, WindowSpec};
use onset_core::path::PathEnsemble;
use onset_core::queue::Backend;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

pub const ENV_PREFIX: &str = "ONSET_";
/// Separates nested keys in environment overrides: `ONSET_PATH__GAMMA`.
pub const ENV_SEPARATOR: &str = "__";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    LinkSim,
    AnalyticPdf,
    PathSim,
    RegimeMap,
    Aimd,
    Topology,
    Sweep,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::LinkSim => "link-sim",
            ExperimentKind::AnalyticPdf => "analytic-pdf",
            ExperimentKind::PathSim => "path-sim",
            ExperimentKind::RegimeMap => "regime-map",
            ExperimentKind::Aimd => "aimd",
            ExperimentKind::Topology => "topology",
            ExperimentKind::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default)]
    pub link: LinkSection,
    #[serde(default)]
    pub analytic: AnalyticSection,
    #[serde(default)]
    pub path: PathSection,
    #[serde(default)]
    pub regime: RegimeSection,
    #[serde(default)]
    pub aimd: AimdSection,
    #[serde(default)]
    pub topology: TopologySection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
}

/// One link of base design (c, τ) scaled by its load ℓ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkSection {
    pub ell: f64,
    pub eta: f64,
    pub tau: f64,
    pub c: f64,
    pub t: f64,
    pub windows: usize,
    pub backend: Backend,
    /// Compare against the inverted analytic law.
    pub analytic: bool,
    pub cdf_points: usize,
}

impl Default for LinkSection {
    fn default() -> Self {
        LinkSection {
            ell: 1.0,
            eta: 0.0,
            tau: 1.0,
            c: 1000.0,
            t: 1e4,
            windows: 10_000,
            backend: Backend::Event,
            analytic: true,
            cdf_points: 200,
        }
    }
}

impl LinkSection {
    pub fn link(&self) -> CliResult<LinkParams> {
        Ok(realize_link(&BaseDesign::new(self.c, self.tau)?, self.ell, self.eta)?)
    }

    pub fn window(&self) -> CliResult<WindowSpec> {
        Ok(WindowSpec::new(self.t, self.tau)?)
    }

    fn validate(&self) -> CliResult<()> {
        self.link()?;
        self.window()?;
        positive_count("link.windows", self.windows)?;
        positive_count("link.cdf_points", self.cdf_points)?;
        if let Backend::Diffusion { dt_fraction } = self.backend {
            if !(dt_fraction > 0.0 && dt_fraction <= 0.1) {
                return Err(CliError::config(format!(
                    "link.backend.dt_fraction must lie in (0, 0.1], got {dt_fraction}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticSection {
    pub ell: f64,
    pub eta: f64,
    pub tau: f64,
    pub c: f64,
    pub t: f64,
    pub points: usize,
    /// Upper end of the Λ grid; defaults to ten widths of the loss law.
    pub lambda_max: Option<f64>,
}

impl Default for AnalyticSection {
    fn default() -> Self {
        AnalyticSection {
            ell: 1.0,
            eta: 0.0,
            tau: 1.0,
            c: 1000.0,
            t: 1e4,
            points: 200,
            lambda_max: None,
        }
    }
}

impl AnalyticSection {
    pub fn link(&self) -> CliResult<LinkParams> {
        Ok(realize_link(&BaseDesign::new(self.c, self.tau)?, self.ell, self.eta)?)
    }

    fn validate(&self) -> CliResult<()> {
        let link = self.link()?;
        if !(self.t >= 10.0 * link.tau && self.t.is_finite()) {
            return Err(CliError::config(format!(
                "analytic.t must be at least 10 inter-arrival times of the link ({}), got {}",
                10.0 * link.tau,
                self.t
            )));
        }
        positive_count("analytic.points", self.points)?;
        if let Some(m) = self.lambda_max {
            if !(m > 0.0 && m.is_finite()) {
                return Err(CliError::config(format!(
                    "analytic.lambda_max must be positive, got {m}"
                )));
            }
        }
        Ok(())
    }
}

pub const DEFAULT_PHI0: f64 = 3e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathSection {
    pub a: usize,
    pub delta: f64,
    pub ell_min: f64,
    pub ell_max: Option<f64>,
    pub gamma: f64,
    pub spread: SpreadShape,
    pub c: f64,
    pub tau: f64,
    /// Window given as φ₀ = √(τ/T) or as its length `t`; at most one of
    /// the two, φ₀ = 3×10⁻³ when neither is set.
    pub phi0: Option<f64>,
    pub t: Option<f64>,
    pub samples: usize,
    pub backend: Backend,
    pub bins_per_decade: u32,
    /// Tail-fit window in Φ; defaults to [2φ₀, 0.3φ₀²/γ].
    pub tail_window: Option<[f64; 2]>,
    pub max_moment: usize,
    /// Freeze one draw of (ℓ, η) and resample only the queue noise.
    pub fixed_disorder: bool,
}

impl Default for PathSection {
    fn default() -> Self {
        PathSection {
            a: 10,
            delta: 0.25,
            ell_min: 1.0,
            ell_max: None,
            gamma: 1e-4,
            spread: SpreadShape::Uniform,
            c: 1e4,
            tau: 1.0,
            phi0: None,
            t: None,
            samples: 100_000,
            backend: Backend::LocalTime,
            bins_per_decade: 12,
            tail_window: None,
            max_moment: 3,
            fixed_disorder: false,
        }
    }
}

impl PathSection {
    pub fn window(&self) -> CliResult<WindowSpec> {
        match (self.phi0, self.t) {
            (Some(phi0), None) => Ok(WindowSpec::from_phi0(phi0, self.tau)?),
            (None, Some(t)) => Ok(WindowSpec::new(t, self.tau)?),
            (None, None) => Ok(WindowSpec::from_phi0(DEFAULT_PHI0, self.tau)?),
            (Some(_), Some(_)) => Err(CliError::config("path: give at most one of phi0 and t")),
        }
    }

    pub fn ensemble(&self) -> CliResult<PathEnsemble> {
        let mut load = LoadModel::new(self.delta)?;
        load.ell_min = self.ell_min;
        if let Some(max) = self.ell_max {
            load = load.with_cutoff(max)?;
        }
        load.validate()?;
        let spread = CriticalitySpread {
            gamma: self.gamma,
            shape: self.spread,
        };
        spread.validate()?;
        let ensemble = PathEnsemble {
            a: self.a,
            load,
            spread,
            base: BaseDesign::new(self.c, self.tau)?,
            window: self.window()?,
            backend: self.backend,
        };
        ensemble.validate()?;
        Ok(ensemble)
    }

    pub fn tail_window(&self) -> CliResult<(f64, f64)> {
        match self.tail_window {
            Some([lo, hi]) => Ok((lo, hi)),
            None => {
                let w = self.window()?;
                Ok((2.0 * w.phi0(), 0.3 * w.phi0_sq() / self.gamma))
            }
        }
    }

    fn validate(&self) -> CliResult<()> {
        self.ensemble()?;
        positive_count("path.samples", self.samples)?;
        if self.bins_per_decade == 0 {
            return Err(CliError::config("path.bins_per_decade must be positive"));
        }
        if !(1..=8).contains(&self.max_moment) {
            return Err(CliError::config(format!(
                "path.max_moment must lie in 1..=8, got {}",
                self.max_moment
            )));
        }
        if let Some([lo, hi]) = self.tail_window {
            if !(lo > 0.0 && hi > lo) {
                return Err(CliError::config(format!(
                    "path.tail_window needs 0 < lo < hi, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

/// Logarithmic grid from `min` to `max` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl LogGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.min];
        }
        let (l0, l1) = (self.min.log10(), self.max.log10());
        (0..self.points)
            .map(|k| 10f64.powf(l0 + (l1 - l0) * k as f64 / (self.points - 1) as f64))
            .collect()
    }

    fn validate(&self, name: &str) -> CliResult<()> {
        if !(self.min > 0.0 && self.max >= self.min && self.max.is_finite()) || self.points == 0 {
            return Err(CliError::config(format!(
                "{name} needs 0 < min ≤ max and at least one point, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegimeSection {
    pub a: f64,
    pub t_over_tau: LogGrid,
    pub inv_gamma: LogGrid,
}

impl Default for RegimeSection {
    fn default() -> Self {
        RegimeSection {
            a: 10.0,
            t_over_tau: LogGrid {
                min: 10.0,
                max: 1e8,
                points: 29,
            },
            inv_gamma: LogGrid {
                min: 10.0,
                max: 1e6,
                points: 21,
            },
        }
    }
}

impl RegimeSection {
    fn validate(&self) -> CliResult<()> {
        if !(self.a >= 1.0 && self.a.is_finite()) {
            return Err(CliError::config(format!("regime.a must be at least 1, got {}", self.a)));
        }
        self.t_over_tau.validate("regime.t_over_tau")?;
        self.inv_gamma.validate("regime.inv_gamma")
    }
}

/// Buffer and path data for the protocol-band report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandSection {
    pub c: f64,
    pub a: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AimdSection {
    pub t0: f64,
    pub w_init: u64,
    pub w_max: u64,
    pub additive_step: u64,
    pub md_factor: f64,
    pub n_cycles: usize,
    pub loss: LossSource,
    pub band: Option<BandSection>,
}

impl Default for AimdSection {
    fn default() -> Self {
        let d = AimdConfig::default();
        AimdSection {
            t0: d.t0,
            w_init: d.w_init,
            w_max: d.w_max,
            additive_step: d.additive_step,
            md_factor: d.md_factor,
            n_cycles: d.n_cycles,
            loss: LossSource::Constant { phi: 0.0 },
            band: None,
        }
    }
}

impl AimdSection {
    pub fn config(&self) -> AimdConfig {
        AimdConfig {
            t0: self.t0,
            w_init: self.w_init,
            w_max: self.w_max,
            additive_step: self.additive_step,
            md_factor: self.md_factor,
            n_cycles: self.n_cycles,
        }
    }

    fn validate(&self) -> CliResult<()> {
        self.config().validate()?;
        let values: &[f64] = match &self.loss {
            LossSource::Constant { phi } => std::slice::from_ref(phi),
            LossSource::Scripted { values } | LossSource::Cycled { values } => values,
        };
        if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(CliError::config(format!(
                "aimd.loss values must lie in [0, 1], got {bad}"
            )));
        }
        if matches!(&self.loss, LossSource::Cycled { values } if values.is_empty()) {
            return Err(CliError::config("aimd.loss: a cycled script needs at least one value"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologySection {
    pub nodes: usize,
    /// Edges added per new node.
    pub m: usize,
    /// Read this edge list instead of generating a graph.
    pub edge_list: Option<PathBuf>,
    /// Edges, by descending betweenness, whose path usage is reported.
    pub top_edges: usize,
}

impl Default for TopologySection {
    fn default() -> Self {
        TopologySection {
            nodes: 2000,
            m: 2,
            edge_list: None,
            top_edges: 10,
        }
    }
}

impl TopologySection {
    fn validate(&self) -> CliResult<()> {
        if self.edge_list.is_none() && !(self.m >= 1 && self.nodes > self.m) {
            return Err(CliError::config(format!(
                "topology needs nodes > m ≥ 1, got nodes = {}, m = {}",
                self.nodes, self.m
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    /// Dotted key into the configuration, e.g. `path.gamma`.
    pub param: String,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub base: ExperimentKind,
    pub axes: Vec<SweepAxis>,
    /// Largest total number of simulated draws the sweep may request.
    #[serde(default = "default_budget")]
    pub budget: f64,
    /// Summary metric regressed, on log-log axes, against the first axis.
    #[serde(default)]
    pub fit_metric: Option<String>,
}

fn default_budget() -> f64 {
    1e9
}

impl SweepSection {
    fn validate(&self) -> CliResult<()> {
        if self.base == ExperimentKind::Sweep {
            return Err(CliError::config("sweep.base cannot itself be a sweep"));
        }
        if !(1..=2).contains(&self.axes.len()) {
            return Err(CliError::config(format!(
                "sweep needs one or two axes, got {}",
                self.axes.len()
            )));
        }
        for axis in &self.axes {
            if axis.values.is_empty() {
                return Err(CliError::config(format!("sweep axis {} has an empty grid", axis.param)));
            }
            if axis.param.split('.').count() != 2 {
                return Err(CliError::config(format!(
                    "sweep axis {} must name a section key such as path.gamma",
                    axis.param
                )));
            }
        }
        if !(self.budget > 0.0) {
            return Err(CliError::config(format!(
                "sweep.budget must be positive, got {}",
                self.budget
            )));
        }
        Ok(())
    }
}

fn positive_count(name: &str, n: usize) -> CliResult<()> {
    if n == 0 {
        return Err(CliError::config(format!("{name} must be positive")));
    }
    Ok(())
}

impl ExperimentConfig {
    /// Range checks for the section the experiment uses.
    pub fn validate(&self) -> CliResult<()> {
        if self.workers == Some(0) {
            return Err(CliError::config("workers must be positive"));
        }
        match self.kind {
            ExperimentKind::LinkSim => self.link.validate(),
            ExperimentKind::AnalyticPdf => self.analytic.validate(),
            ExperimentKind::PathSim => self.path.validate(),
            ExperimentKind::RegimeMap => self.regime.validate(),
            ExperimentKind::Aimd => self.aimd.validate(),
            ExperimentKind::Topology => self.topology.validate(),
            ExperimentKind::Sweep => self
                .sweep
                .as_ref()
                .ok_or_else(|| CliError::config("sweep experiments need a [sweep] section"))?
                .validate(),
        }
    }

    /// Rough count of simulated draws, used for sweep budgets.
    pub fn estimated_draws(&self) -> f64 {
        match self.kind {
            ExperimentKind::LinkSim => self.link.windows as f64,
            ExperimentKind::AnalyticPdf => self.analytic.points as f64,
            ExperimentKind::PathSim => self.path.samples as f64 * self.path.a as f64,
            ExperimentKind::RegimeMap => (self.regime.t_over_tau.points * self.regime.inv_gamma.points) as f64,
            ExperimentKind::Aimd => self.aimd.n_cycles as f64,
            ExperimentKind::Topology => (self.topology.nodes as f64).powi(2),
            ExperimentKind::Sweep => f64::INFINITY,
        }
    }
}

/// Values set from the command line, applied after the file and the
/// environment.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub kind: Option<ExperimentKind>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<OutputFormat>,
}

/// Parses a configuration file into a JSON tree; `.json` files as JSON,
/// anything else as TOML.
pub fn read_config_tree(path: &Path) -> CliResult<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    } else {
        let table: toml::Table =
            toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        serde_json::to_value(table).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }
}

/// Sets `value` at the dotted `key`, creating intermediate tables.
pub fn set_path(tree: &mut Value, key: &[&str], value: Value) -> CliResult<()> {
    let (last, parents) = key
        .split_last()
        .ok_or_else(|| CliError::config("empty configuration key"))?;
    let mut node = tree;
    for part in parents {
        if !node.is_object() {
            return Err(CliError::config(format!(
                "key {} crosses a non-table value",
                key.join(".")
            )));
        }
        node = node
            .as_object_mut()
            .expect("checked above")
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    match node.as_object_mut() {
        Some(map) => {
            map.insert(last.to_string(), value);
            Ok(())
        }
        None => Err(CliError::config(format!(
            "key {} crosses a non-table value",
            key.join(".")
        ))),
    }
}

/// Interprets an override string as JSON when it parses, else as a string.
fn override_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Applies `ONSET_SECTION__KEY=value` pairs. Keys are lower-cased.
pub fn apply_env<I: IntoIterator<Item = (String, String)>>(tree: &mut Value, vars: I) -> CliResult<()> {
    let mut pairs: Vec<(String, String)> = vars
        .into_iter()
        .filter_map(|(k, v)| k.strip_prefix(ENV_PREFIX).map(|rest| (rest.to_ascii_lowercase(), v)))
        .collect();
    pairs.sort();
    for (key, raw) in pairs {
        let parts: Vec<&str> = key.split(ENV_SEPARATOR).collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(CliError::config(format!(
                "malformed override {ENV_PREFIX}{}",
                key.to_ascii_uppercase()
            )));
        }
        set_path(tree, &parts, override_value(&raw))?;
    }
    Ok(())
}

pub fn apply_overrides(tree: &mut Value, o: &Overrides) -> CliResult<()> {
    let to_value = |v: serde_json::Result<Value>| v.map_err(|e| CliError::config(e.to_string()));
    if let Some(kind) = o.kind {
        set_path(tree, &["kind"], to_value(serde_json::to_value(kind))?)?;
    }
    if let Some(seed) = o.seed {
        set_path(tree, &["seed"], Value::from(seed))?;
    }
    if let Some(workers) = o.workers {
        set_path(tree, &["workers"], Value::from(workers))?;
    }
    if let Some(out) = &o.out {
        set_path(tree, &["out"], Value::String(out.display().to_string()))?;
    }
    if let Some(format) = o.format {
        set_path(tree, &["format"], to_value(serde_json::to_value(format))?)?;
    }
    Ok(())
}

pub fn from_tree(tree: Value) -> CliResult<ExperimentConfig> {
    let config: ExperimentConfig = serde_json::from_value(tree).map_err(|e| CliError::config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

/// File, then environment, then flags; validated.
pub fn load_config<I>(file: Option<&Path>, env: I, overrides: &Overrides) -> CliResult<ExperimentConfig>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut tree = match file {
        Some(path) => read_config_tree(path)?,
        None => Value::Object(Map::new()),
    };
    if !tree.is_object() {
        return Err(CliError::config("the configuration root must be a table"));
    }
    apply_env(&mut tree, env)?;
    apply_overrides(&mut tree, overrides)?;
    from_tree(tree)
}
