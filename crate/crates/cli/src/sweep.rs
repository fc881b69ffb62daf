//! Grids of one- or two-parameter runs of a base experiment.

use onset_core::rng::StreamKey;
use onset_core::stats::least_squares;
use serde_json::{json, Map, Value};

use crate::config::{from_tree, set_path, ExperimentConfig, SweepSection};
use crate::error::{CliError, CliResult};
use crate::experiments::run_experiment;
use crate::output::{Cell, RunOutput, Table};

/// One configuration of the grid, with the axis values that produced it.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub index: usize,
    pub values: Vec<Value>,
    pub config: ExperimentConfig,
}

/// Expands the grid in row-major order; point `i` runs with the seed of
/// child stream `i` of the sweep seed.
pub fn sweep_points(config: &ExperimentConfig) -> CliResult<Vec<SweepPoint>> {
    let sweep = section(config)?;
    let mut base = serde_json::to_value(config).map_err(|e| CliError::config(e.to_string()))?;
    set_path(
        &mut base,
        &["kind"],
        serde_json::to_value(sweep.base).expect("kind serializes"),
    )?;
    base.as_object_mut().expect("config is a table").remove("sweep");
    let mut combos: Vec<Vec<Value>> = vec![Vec::new()];
    for axis in &sweep.axes {
        combos = combos
            .into_iter()
            .flat_map(|prefix| {
                axis.values.iter().map(move |v| {
                    let mut next = prefix.clone();
                    next.push(v.clone());
                    next
                })
            })
            .collect();
    }
    let key = StreamKey::new(config.seed);
    let mut points = Vec::with_capacity(combos.len());
    for (index, values) in combos.into_iter().enumerate() {
        let mut tree = base.clone();
        for (axis, v) in sweep.axes.iter().zip(&values) {
            let parts: Vec<&str> = axis.param.split('.').collect();
            set_path(&mut tree, &parts, v.clone())?;
        }
        set_path(&mut tree, &["seed"], Value::from(key.child(index as u64).seed()))?;
        let config = from_tree(tree).map_err(|e| CliError::config(format!("sweep point {index}: {e}")))?;
        points.push(SweepPoint { index, values, config });
    }
    Ok(points)
}

fn section(config: &ExperimentConfig) -> CliResult<&SweepSection> {
    config
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::config("sweep experiments need a [sweep] section"))
}

/// Numeric leaves of a summary, keyed by their dotted paths.
pub fn numeric_leaves(value: &Value) -> Vec<(String, f64)> {
    fn walk(prefix: &str, v: &Value, out: &mut Vec<(String, f64)>) {
        match v {
            Value::Number(n) => {
                if let Some(x) = n.as_f64() {
                    out.push((prefix.to_string(), x));
                }
            }
            Value::Object(map) => {
                for (k, child) in map {
                    let key = if prefix.is_empty() {
                        k.clone()
                    } else {
                        format!("{prefix}.{k}")
                    };
                    walk(&key, child, out);
                }
            }
            _ => {}
        }
    }
    let mut out = Vec::new();
    walk("", value, &mut out);
    out
}

fn axis_cell(v: &Value) -> Cell {
    match v {
        Value::Number(n) => match n.as_i64() {
            Some(i) => Cell::Int(i),
            None => Cell::Float(n.as_f64().unwrap_or(f64::NAN)),
        },
        Value::String(s) => Cell::Text(s.clone()),
        Value::Bool(b) => Cell::Bool(*b),
        other => Cell::Text(other.to_string()),
    }
}

pub fn run_sweep(config: &ExperimentConfig) -> CliResult<RunOutput> {
    let sweep = section(config)?;
    let points = sweep_points(config)?;
    let draws: f64 = points.iter().map(|p| p.config.estimated_draws()).sum();
    if draws > sweep.budget {
        return Err(CliError::config(format!(
            "sweep would need about {draws:.3e} draws, above its budget of {:.3e}",
            sweep.budget
        )));
    }
    let mut columns = vec!["point".to_string()];
    columns.extend(sweep.axes.iter().map(|a| a.param.clone()));
    columns.extend(["metric".to_string(), "value".to_string()]);
    let column_refs: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut table = Table::new("sweep", 1, &column_refs);
    let mut summaries = Vec::with_capacity(points.len());
    for p in &points {
        let out = run_experiment(&p.config)?;
        for (metric, value) in numeric_leaves(&out.summary) {
            let mut row = vec![Cell::from(p.index)];
            row.extend(p.values.iter().map(axis_cell));
            row.push(metric.into());
            row.push(value.into());
            table.push(row);
        }
        summaries.push(out.summary);
    }
    let fit = match &sweep.fit_metric {
        Some(metric) => fit_metric(sweep, &points, &summaries, metric)?,
        None => Value::Null,
    };
    let mut point_list = Vec::new();
    for (p, s) in points.iter().zip(&summaries) {
        let mut entry = Map::new();
        entry.insert("point".into(), json!(p.index));
        entry.insert("seed".into(), json!(p.config.seed));
        entry.insert("values".into(), Value::Array(p.values.clone()));
        entry.insert("summary".into(), s.clone());
        point_list.push(Value::Object(entry));
    }
    let summary = json!({
        "kind": "sweep",
        "base": sweep.base.name(),
        "axes": sweep.axes.iter().map(|a| a.param.clone()).collect::<Vec<_>>(),
        "estimated_draws": draws,
        "fit": fit,
        "points": point_list,
    });
    Ok(RunOutput {
        tables: vec![table],
        summary,
    })
}

/// Log-log least-squares slope of `metric` against the first axis.
fn fit_metric(sweep: &SweepSection, points: &[SweepPoint], summaries: &[Value], metric: &str) -> CliResult<Value> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (p, s) in points.iter().zip(summaries) {
        let x = p.values[0].as_f64().ok_or_else(|| {
            CliError::config(format!(
                "sweep.fit_metric needs numeric values on {}",
                sweep.axes[0].param
            ))
        })?;
        let y = numeric_leaves(s)
            .into_iter()
            .find(|(k, _)| k == metric)
            .map(|(_, v)| v)
            .ok_or_else(|| CliError::config(format!("sweep.fit_metric: summary has no numeric {metric}")))?;
        if x > 0.0 && y > 0.0 {
            xs.push(x.ln());
            ys.push(y.ln());
        }
    }
    let fit = least_squares(&xs, &ys)?;
    Ok(json!({
        "metric": metric,
        "against": sweep.axes[0].param,
        "points_used": xs.len(),
        "slope": fit.slope,
        "slope_stderr": fit.slope_stderr,
        "intercept": fit.intercept,
    }))
}
