//! One pipeline per experiment kind, each producing tables and a summary.

use std::cell::RefCell;
use std::fs::File;
use std::io::BufReader;

use onset_core::aimd::{protocol_band, run_aimd};
use onset_core::analytics::{classify, invert_laplace_pdf, loss_cdf, loss_survival, no_loss_weight, RegimeClass};
use onset_core::path::{estimate_pdf, fit_tail_exponent, freeze_path, moments, BinConfig};
use onset_core::queue::sample_ensemble;
use onset_core::rng::StreamKey;
use onset_core::stats::{ks_statistic, MeanEstimate};
use onset_core::topology::{
    affected_paths_fractions, edge_betweenness, fit_load_exponent, generate_sf_graph, loads_from_betweenness, Graph,
};
use onset_core::Error;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{CliError, CliResult};
use crate::output::{RunOutput, Table};
use crate::sweep::run_sweep;

pub fn run_experiment(config: &ExperimentConfig) -> CliResult<RunOutput> {
    config.validate()?;
    match config.kind {
        ExperimentKind::LinkSim => link_sim(config),
        ExperimentKind::AnalyticPdf => analytic_pdf(config),
        ExperimentKind::PathSim => path_sim(config),
        ExperimentKind::RegimeMap => regime_map(config),
        ExperimentKind::Aimd => aimd(config),
        ExperimentKind::Topology => topology(config),
        ExperimentKind::Sweep => run_sweep(config),
    }
}

/// Wraps a fallible CDF so it can feed an infallible statistic; the first
/// error is kept and reported afterwards.
struct CheckedCdf<F> {
    f: F,
    error: RefCell<Option<Error>>,
}

impl<F: Fn(f64) -> onset_core::Result<f64>> CheckedCdf<F> {
    fn new(f: F) -> Self {
        CheckedCdf {
            f,
            error: RefCell::new(None),
        }
    }

    fn eval(&self, x: f64) -> f64 {
        match (self.f)(x) {
            Ok(v) => v,
            Err(e) => {
                self.error.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        }
    }

    fn finish(self) -> onset_core::Result<()> {
        match self.error.into_inner() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

fn link_json(link: &onset_core::model::LinkParams) -> Value {
    json!({"ell": link.ell, "eta": link.eta, "tau": link.tau, "c": link.c})
}

fn link_sim(config: &ExperimentConfig) -> CliResult<RunOutput> {
    let s = &config.link;
    let link = s.link()?;
    let window = s.window()?;
    let samples = sample_ensemble(&link, &window, s.windows, s.backend, config.seed)?;
    let mut windows = Table::new("link_windows", 1, &["window", "lambda", "phi", "lossless"]);
    for (i, w) in samples.iter().enumerate() {
        windows.push(vec![i.into(), w.lambda.into(), w.phi.into(), w.lossless.into()]);
    }
    let phis: Vec<f64> = samples.iter().map(|w| w.phi).collect();
    let lambdas: Vec<f64> = samples.iter().map(|w| w.lambda).collect();
    let mean = MeanEstimate::of(&phis);
    let lossless = samples.iter().filter(|w| w.lossless).count() as f64 / samples.len() as f64;
    let mut summary = json!({
        "kind": "link-sim",
        "backend": s.backend.name(),
        "link": link_json(&link),
        "t": window.t,
        "windows": samples.len(),
        "mean_phi": mean.mean,
        "mean_phi_stderr": mean.stderr,
        "lossless_fraction": lossless,
    });
    let mut tables = vec![windows];
    if s.analytic {
        let a = no_loss_weight(window.t, &link)?;
        let cdf = CheckedCdf::new(|x| loss_cdf(x, window.t, &link));
        let ks = ks_statistic(&lambdas, |x| cdf.eval(x));
        let max = lambdas.iter().copied().fold(0.0, f64::max);
        let mut sorted = lambdas.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let mut table = Table::new("link_cdf", 1, &["lambda", "empirical_cdf", "analytic_cdf"]);
        for k in 0..s.cdf_points {
            let x = max * k as f64 / (s.cdf_points.max(2) - 1) as f64;
            let empirical = sorted.partition_point(|v| *v <= x) as f64 / sorted.len() as f64;
            table.push(vec![x.into(), empirical.into(), cdf.eval(x).into()]);
        }
        cdf.finish()?;
        summary["analytic_no_loss_weight"] = json!(a);
        summary["ks_distance"] = json!(ks);
        tables.push(table);
    }
    Ok(RunOutput { tables, summary })
}

fn analytic_pdf(config: &ExperimentConfig) -> CliResult<RunOutput> {
    let s = &config.analytic;
    let link = s.link()?;
    let steps = s.t / link.tau;
    let width = 2.0 * steps.sqrt() + link.eta.max(0.0) * steps;
    let lambda_max = s.lambda_max.unwrap_or(10.0 * width);
    let mut table = Table::new("analytic_pdf", 1, &["lambda", "phi", "density", "survival"]);
    for k in 0..s.points {
        let lambda = lambda_max * k as f64 / (s.points.max(2) - 1) as f64;
        let density = invert_laplace_pdf(lambda, s.t, &link)?;
        let survival = loss_survival(lambda, s.t, &link)?;
        table.push(vec![
            lambda.into(),
            (lambda / steps).into(),
            density.into(),
            survival.into(),
        ]);
    }
    let a = no_loss_weight(s.t, &link)?;
    let summary = json!({
        "kind": "analytic-pdf",
        "link": link_json(&link),
        "t": s.t,
        "no_loss_weight": a,
        "lossy_mass": loss_survival(0.0, s.t, &link)?,
        "lambda_max": lambda_max,
    });
    Ok(RunOutput {
        tables: vec![table],
        summary,
    })
}

/// Zero-loss atom predicted for the regime, where one is known.
pub fn expected_atom(regime: RegimeClass, a: usize, gamma: f64, phi0: f64) -> Option<f64> {
    match regime {
        RegimeClass::Mesoscopic => Some((1.0 - gamma / phi0).powi(a as i32)),
        RegimeClass::Macroscopic => Some(0.5f64.powi(a as i32)),
        _ => None,
    }
}

fn path_sim(config: &ExperimentConfig) -> CliResult<RunOutput> {
    let s = &config.path;
    let ensemble = s.ensemble()?;
    let key = StreamKey::new(config.seed);
    let samples = if s.fixed_disorder {
        let path = freeze_path(&ensemble, &mut key.child(1).stream(0))?;
        ensemble.sample_fixed(&path, s.samples, key)?
    } else {
        ensemble.sample(s.samples, key)?
    };
    let pdf = estimate_pdf(
        &samples,
        BinConfig {
            bins_per_decade: s.bins_per_decade,
        },
    )?;
    let report = moments(&samples, s.max_moment)?;
    let (lo, hi) = s.tail_window()?;
    let tail = match fit_tail_exponent(&pdf, lo, hi) {
        Ok(fit) => json!({"slope": fit.slope, "stderr": fit.stderr, "bins_used": fit.bins_used}),
        Err(Error::InsufficientData(reason)) => json!({"slope": null, "reason": reason}),
        Err(e) => return Err(e.into()),
    };
    let window = ensemble.window;
    let regime = classify(window.t, s.tau, s.gamma, s.a as f64);
    let mut pdf_table = Table::new("path_pdf", 1, &["bin_lo", "bin_hi", "centre", "count", "density"]);
    for b in &pdf.bins {
        pdf_table.push(vec![
            b.lo.into(),
            b.hi.into(),
            b.centre().into(),
            b.count.into(),
            b.density.into(),
        ]);
    }
    let mut moment_table = Table::new("path_moments", 1, &["order", "raw", "stderr", "ratio"]);
    for (k, (raw, se)) in report.raw.iter().zip(&report.stderr).enumerate() {
        let order = k + 1;
        moment_table.push(vec![
            order.into(),
            (*raw).into(),
            (*se).into(),
            report.ratio_n(order).unwrap_or(f64::NAN).into(),
        ]);
    }
    let summary = json!({
        "kind": "path-sim",
        "regime": regime.name(),
        "a": s.a,
        "gamma": s.gamma,
        "delta": s.delta,
        "phi0": window.phi0(),
        "t": window.t,
        "samples": samples.len(),
        "fixed_disorder": s.fixed_disorder,
        "atom_zero": pdf.atom_zero,
        "lossy_fraction": 1.0 - pdf.atom_zero,
        "expected_atom": expected_atom(regime, s.a, s.gamma, window.phi0()),
        "histogram_mass": pdf.histogram_mass(),
        "phi_range": pdf.phi_range.map(|(a, b)| vec![a, b]),
        "mean_phi": report.mean(),
        "mean_phi_stderr": report.stderr[0],
        "second_moment": report.second(),
        "ratio2": report.ratio2(),
        "tail": {
            "window": [lo, hi],
            "expected_slope": -2.0 * (1.0 + s.delta),
            "fit": tail,
        },
    });
    Ok(RunOutput {
        tables: vec![pdf_table, moment_table],
        summary,
    })
}

fn regime_map(config: &ExperimentConfig) -> CliResult<RunOutput> {
    let s = &config.regime;
    let mut table = Table::new("regime_map", 1, &["t_over_tau", "inv_gamma", "phi0", "regime", "order"]);
    let mut counts = serde_json::Map::new();
    for &steps in &s.t_over_tau.values() {
        for &inv_gamma in &s.inv_gamma.values() {
            let class = classify(steps, 1.0, 1.0 / inv_gamma, s.a);
            table.push(vec![
                steps.into(),
                inv_gamma.into(),
                (1.0 / steps.sqrt()).into(),
                class.name().into(),
                u32::from(class.order()).into(),
            ]);
            let n = counts.entry(class.name()).or_insert(json!(0));
            *n = json!(n.as_u64().unwrap_or(0) + 1);
        }
    }
    let summary = json!({"kind": "regime-map", "a": s.a, "counts": counts});
    Ok(RunOutput {
        tables: vec![table],
        summary,
    })
}

fn aimd(config: &ExperimentConfig) -> CliResult<RunOutput> {
    let s = &config.aimd;
    let cfg = s.config();
    let trace = run_aimd(&cfg, &s.loss, config.seed)?;
    let mut table = Table::new("aimd_trace", 1, &["cycle", "time", "w", "lost", "rate"]);
    for r in &trace.records {
        table.push(vec![
            r.cycle.into(),
            (r.cycle as f64 * cfg.t0).into(),
            r.w.into(),
            r.lost.into(),
            r.rate(cfg.t0).into(),
        ]);
    }
    let band = match &s.band {
        Some(b) => serde_json::to_value(protocol_band(b.c, b.a, cfg.w_max as f64, cfg.t0, b.tau)?)
            .map_err(|e| CliError::config(e.to_string()))?,
        None => Value::Null,
    };
    let summary = json!({
        "kind": "aimd",
        "cycles": trace.records.len(),
        "loss_cycles": trace.summary.loss_cycles,
        "min_w": trace.summary.min_w,
        "recovery_times": trace.summary.recovery_times,
        "band": band,
    });
    Ok(RunOutput {
        tables: vec![table],
        summary,
    })
}

fn topology(config: &ExperimentConfig) -> CliResult<RunOutput> {
    let s = &config.topology;
    let graph = match &s.edge_list {
        Some(path) => {
            let file = File::open(path).map_err(|e| CliError::io(format!("opening {}", path.display()), e))?;
            Graph::read_edge_list(BufReader::new(file))?.largest_component()
        }
        None => generate_sf_graph(s.nodes, s.m, config.seed)?,
    };
    let b = edge_betweenness(&graph)?;
    let loads = loads_from_betweenness(&b);
    let mut edge_table = Table::new("edge_loads", 1, &["edge", "u", "v", "betweenness", "load"]);
    for (i, ((u, v), (bi, li))) in graph.edges().iter().zip(b.iter().zip(&loads)).enumerate() {
        edge_table.push(vec![i.into(), (*u).into(), (*v).into(), (*bi).into(), (*li).into()]);
    }
    let mut order: Vec<usize> = (0..b.len()).collect();
    order.sort_by(|&x, &y| b[y].total_cmp(&b[x]).then(x.cmp(&y)));
    let median_rank = order.len() / 2;
    let mut ranks: Vec<usize> = (0..s.top_edges.min(order.len())).collect();
    if !ranks.contains(&median_rank) {
        ranks.push(median_rank);
    }
    let picked: Vec<usize> = ranks.iter().map(|&r| order[r]).collect();
    let fractions = affected_paths_fractions(&graph, &picked)?;
    let mut usage = Table::new(
        "affected_paths",
        1,
        &["rank", "edge", "u", "v", "betweenness", "fraction"],
    );
    for ((&rank, &e), f) in ranks.iter().zip(&picked).zip(&fractions) {
        let (u, v) = graph.edges()[e];
        usage.push(vec![
            (rank + 1).into(),
            e.into(),
            u.into(),
            v.into(),
            b[e].into(),
            (*f).into(),
        ]);
    }
    let top = fractions[0];
    let median = fractions[ranks
        .iter()
        .position(|&r| r == median_rank)
        .expect("median rank is always picked")];
    let fit = match fit_load_exponent(&loads) {
        Ok(f) => json!({"exponent": f.exponent, "stderr": f.stderr, "x_min": f.x_min, "n_tail": f.n_tail}),
        Err(Error::InsufficientData(reason)) => json!({"exponent": null, "reason": reason}),
        Err(e) => return Err(e.into()),
    };
    let summary = json!({
        "kind": "topology",
        "nodes": graph.node_count(),
        "edges": graph.edge_count(),
        "max_load": loads.iter().copied().fold(0.0, f64::max),
        "load_fit": fit,
        "top_edge_fraction": top,
        "median_edge_fraction": median,
        "top_to_median": top / median,
    });
    Ok(RunOutput {
        tables: vec![edge_table, usage],
        summary,
    })
}
