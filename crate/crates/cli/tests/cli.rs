//! End-to-end runs: golden outputs of tiny configurations, determinism,
//! manifests, overrides, sweeps and exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use onset_cli::config::from_tree;
use onset_cli::execute;
use onset_cli::output::verify_manifest;
use serde_json::{json, Value};

fn golden_dir(case: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(case)
}

/// Relative path and contents of every data file plus the summary.
fn run_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir.join("data"))
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                format!("data/{}", p.file_name().unwrap().to_string_lossy()),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.push(("summary.json".into(), fs::read(dir.join("summary.json")).unwrap()));
    files.sort();
    files
}

fn run_tree(mut tree: Value, dir: &Path) -> Vec<(String, Vec<u8>)> {
    tree["out"] = json!(dir);
    let config = from_tree(tree).unwrap();
    let (written, _) = execute(&config).unwrap();
    assert_eq!(written, dir);
    verify_manifest(dir).unwrap();
    run_files(dir)
}

/// Compares a run against its golden copy; `UPDATE_GOLDEN=1` rewrites it.
fn assert_golden(case: &str, tree: Value) {
    let tmp = tempfile::tempdir().unwrap();
    let files = run_tree(tree, tmp.path());
    let golden = golden_dir(case);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        let _ = fs::remove_dir_all(&golden);
        for (rel, bytes) in &files {
            let path = golden.join(rel);
            fs::create_dir_all(path.parent().unwrap()).unwrap();
            fs::write(path, bytes).unwrap();
        }
        return;
    }
    assert!(golden.exists(), "no golden copy for {case}; rerun with UPDATE_GOLDEN=1");
    let expected = run_files(&golden);
    let names = |f: &[(String, Vec<u8>)]| f.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>();
    assert_eq!(names(&files), names(&expected), "{case}: file set changed");
    for ((name, got), (_, want)) in files.iter().zip(&expected) {
        assert!(
            got == want,
            "{case}/{name} differs from its golden copy:\n{}",
            String::from_utf8_lossy(got)
        );
    }
}

fn regime_tree() -> Value {
    json!({
        "kind": "regime-map",
        "seed": 1,
        "workers": 1,
        "regime": {
            "a": 10.0,
            "t_over_tau": {"min": 10.0, "max": 1e8, "points": 8},
            "inv_gamma": {"min": 10.0, "max": 1e6, "points": 6},
        },
    })
}

fn path_tree() -> Value {
    json!({
        "kind": "path-sim",
        "seed": 4,
        "workers": 2,
        "path": {"a": 3, "gamma": 1e-4, "phi0": 3e-3, "ell_max": 100.0, "samples": 2000, "bins_per_decade": 4},
    })
}

#[test]
fn golden_regime_map() {
    assert_golden("regime-map", regime_tree());
}

#[test]
fn golden_analytic_pdf() {
    assert_golden(
        "analytic-pdf",
        json!({
            "kind": "analytic-pdf",
            "seed": 1,
            "analytic": {"eta": 1e-3, "c": 500.0, "t": 2000.0, "points": 6, "lambda_max": 100.0},
        }),
    );
}

#[test]
fn golden_aimd() {
    assert_golden(
        "aimd",
        json!({
            "kind": "aimd",
            "seed": 9,
            "aimd": {
                "w_init": 10,
                "w_max": 16,
                "n_cycles": 30,
                "loss": {"kind": "constant", "phi": 0.02},
                "band": {"c": 1e6, "a": 10.0, "tau": 2.5e-7},
            },
        }),
    );
}

#[test]
fn golden_topology_from_edge_list() {
    let tmp = tempfile::tempdir().unwrap();
    let list = tmp.path().join("graph.txt");
    fs::write(
        &list,
        "# two triangles joined by a bridge\n0 1\n1 2\n0 2\n2 3\n3 4\n4 5\n3 5\n\n7 8\n",
    )
    .unwrap();
    let tree = json!({
        "kind": "topology",
        "seed": 1,
        "topology": {"edge_list": list, "top_edges": 2},
    });
    let files = run_tree(tree.clone(), &tmp.path().join("run"));
    let loads = String::from_utf8(
        files
            .iter()
            .find(|(n, _)| n == "data/edge_loads.csv")
            .unwrap()
            .1
            .clone(),
    )
    .unwrap();
    // The bridge carries all 9 cross pairs.
    assert!(loads.lines().any(|l| l.starts_with("3,2,3,9,")), "{loads}");
    let mut stable = tree;
    stable["topology"]["edge_list"] = json!(null);
    stable["topology"]["nodes"] = json!(40);
    assert_golden("topology", stable);
}

#[test]
fn golden_path_sim() {
    assert_golden("path-sim", path_tree());
}

#[test]
fn same_seed_same_bytes_across_workers() {
    let tmp = tempfile::tempdir().unwrap();
    let mut one = path_tree();
    one["workers"] = json!(1);
    let mut eight = path_tree();
    eight["workers"] = json!(8);
    let a = run_tree(one.clone(), &tmp.path().join("a"));
    let b = run_tree(one, &tmp.path().join("b"));
    let c = run_tree(eight, &tmp.path().join("c"));
    assert_eq!(a, b);
    assert_eq!(a, c);
    let mut other = path_tree();
    other["seed"] = json!(5);
    assert_ne!(a, run_tree(other, &tmp.path().join("d")));
}

#[test]
fn json_format_writes_json_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let mut tree = regime_tree();
    tree["format"] = json!("json");
    let files = run_tree(tree, tmp.path());
    let (_, bytes) = files.iter().find(|(n, _)| n == "data/regime_map.json").unwrap();
    let doc: Value = serde_json::from_slice(bytes).unwrap();
    assert_eq!(doc["columns"][3], "regime");
    assert_eq!(doc["rows"].as_array().unwrap().len(), 48);
}

#[test]
fn regime_map_has_all_four_regions() {
    let tmp = tempfile::tempdir().unwrap();
    let mut tree = regime_tree();
    tree["regime"]["t_over_tau"]["points"] = json!(29);
    tree["regime"]["inv_gamma"]["points"] = json!(21);
    run_tree(tree, tmp.path());
    let summary: Value = serde_json::from_slice(&fs::read(tmp.path().join("summary.json")).unwrap()).unwrap();
    for region in ["microscopic", "mesoscopic", "crossover", "macroscopic"] {
        assert!(
            summary["counts"][region].as_u64().unwrap() > 0,
            "{region} missing: {summary}"
        );
    }
}

#[test]
fn lossy_fraction_is_linear_in_spread_width() {
    let tmp = tempfile::tempdir().unwrap();
    let tree = json!({
        "kind": "sweep",
        "seed": 2,
        "path": {"a": 1, "c": 1e7, "phi0": 3e-3, "ell_max": 4.0, "samples": 1_000_000},
        "sweep": {
            "base": "path-sim",
            "axes": [{"param": "path.gamma", "values": [1e-5, 2e-5, 5e-5, 1e-4]}],
            "fit_metric": "lossy_fraction",
        },
    });
    let files = run_tree(tree, tmp.path());
    let summary: Value = serde_json::from_slice(&files.iter().find(|(n, _)| n == "summary.json").unwrap().1).unwrap();
    for p in summary["points"].as_array().unwrap() {
        assert_eq!(p["summary"]["regime"], "mesoscopic");
    }
    let slope = summary["fit"]["slope"].as_f64().unwrap();
    assert!((slope - 1.0).abs() <= 0.05, "slope {slope}");
    let csv = String::from_utf8(files.iter().find(|(n, _)| n == "data/sweep.csv").unwrap().1.clone()).unwrap();
    assert!(csv.starts_with("point,path.gamma,metric,value\n"));
}

fn onset(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_onset"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn binary_runs_with_env_and_flag_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "aimd.toml",
        "seed = 3\n[aimd]\nn_cycles = 50\nw_max = 20\n[aimd.loss]\nkind = \"constant\"\nphi = 0.01\n",
    );
    let out = tmp.path().join("run");
    let o = onset(
        &["aimd", "--config", &cfg, "--seed", "8", "--out", out.to_str().unwrap()],
        &[("ONSET_AIMD__N_CYCLES", "12")],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = verify_manifest(&out).unwrap();
    assert_eq!(manifest.seed, 8);
    assert_eq!(manifest.kind, "aimd");
    assert_eq!(manifest.config["aimd"]["n_cycles"], 12);
    let trace = fs::read_to_string(out.join("data/aimd_trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 13);
}

#[test]
fn configuration_errors_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("no-seed.toml", "[path]\na = 3\n", "seed"),
        ("bad-gamma.toml", "seed = 1\n[path]\ngamma = -1.0\n", "gamma"),
        ("unknown.toml", "seed = 1\n[path]\ngama = 1e-4\n", "gama"),
    ];
    for (name, text, needle) in cases {
        let cfg = write_config(tmp.path(), name, text);
        let o = onset(
            &[
                "path-sim",
                "--config",
                &cfg,
                "--out",
                tmp.path().join("x").to_str().unwrap(),
            ],
            &[],
        );
        assert_eq!(o.status.code(), Some(2), "{name}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains(needle), "{name}: {err}");
    }
    let cfg = write_config(
        tmp.path(),
        "empty-sweep.toml",
        "seed = 1\n[sweep]\nbase = \"path-sim\"\naxes = [{ param = \"path.gamma\", values = [] }]\n",
    );
    let o = onset(&["sweep", "--config", &cfg], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("empty grid"));
}

#[test]
fn numerical_failures_exit_with_3() {
    let tmp = tempfile::tempdir().unwrap();
    // A window whose diffusive spread matches the buffer leaves the
    // small-loss regime: the no-loss weight falls outside [0, 1].
    let cfg = write_config(tmp.path(), "wide.toml", "seed = 1\n[analytic]\nc = 100.0\nt = 1e4\n");
    let o = onset(
        &[
            "analytic-pdf",
            "--config",
            &cfg,
            "--out",
            tmp.path().join("x").to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn sweep_budget_is_a_configuration_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "big.toml",
        "seed = 1\n[path]\nsamples = 1000000\n[sweep]\nbase = \"path-sim\"\nbudget = 1e6\n\
         axes = [{ param = \"path.gamma\", values = [1e-5, 1e-4] }]\n",
    );
    let o = onset(&["sweep", "--config", &cfg], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("budget"));
}
