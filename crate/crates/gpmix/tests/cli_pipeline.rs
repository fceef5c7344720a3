//! End-to-end checks of the command-line workflow: file schemas, row
//! counts, id joins, and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn gpmix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gpmix"))
        .args(args)
        .output()
        .expect("failed to launch gpmix")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
        .lines()
        .map(str::to_owned)
        .collect()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn full_pipeline_schemas_and_row_counts() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let fit = dir.path().join("fit");
    let sim_s = sim.to_str().unwrap();

    assert_ok(&gpmix(&["simulate", "--case", "b", "--n", "40", "--seed", "9", "--out", sim_s]));
    let data = lines(&sim.join("data.csv"));
    assert_eq!(data[0], "y,w,e_true,x1,x2,x3,x4,x5");
    assert_eq!(data.len(), 41);
    let truth = lines(&sim.join("truth.csv"));
    assert_eq!(truth[0], "unit,true_cate,y1,y0");
    assert_eq!(truth.len(), 41);
    let manifest = json(&sim.join("manifest.json"));
    assert_eq!(manifest["case"], "b");
    assert_eq!(manifest["n"], 40);
    assert_eq!(manifest["seed"], 9);

    let config = dir.path().join("fit.toml");
    std::fs::write(&config, "[mcmc]\niters = 40\nburn_in = 10\n").unwrap();
    assert_ok(&gpmix(&[
        "fit",
        "--data", sim.join("data.csv").to_str().unwrap(),
        "--config", config.to_str().unwrap(),
        "--mode", "known",
        "--out", fit.to_str().unwrap(),
    ]));
    // 30 retained draws, each (2n + 1) rows: g, h per unit plus sigma2.
    let draws = lines(&fit.join("draws.csv"));
    assert_eq!(draws[0], "iter,quantity,index,value");
    assert_eq!(draws.len(), 1 + 30 * (2 * 40 + 1));
    let summary = lines(&fit.join("summary.csv"));
    assert_eq!(summary[0], "unit,cate_point,cate_lwr,cate_upr");
    assert_eq!(summary.len(), 41);
    let ate = json(&fit.join("ate.json"));
    assert_eq!(ate["level"], 0.95);
    assert!(ate["lwr"].as_f64().unwrap() <= ate["upr"].as_f64().unwrap());
    let meta = json(&fit.join("chain_meta.json"));
    assert_eq!(meta["mode"], "known");
    assert_eq!(meta["retained_per_chain"], 30);
    assert!(meta["acceptance_rate"].is_null());
    assert!(meta["wall_time_ms"].is_u64());

    let thin = dir.path().join("thin");
    assert_ok(&gpmix(&[
        "fit",
        "--data", sim.join("data.csv").to_str().unwrap(),
        "--config", config.to_str().unwrap(),
        "--mode", "known",
        "--thin-output",
        "--out", thin.to_str().unwrap(),
    ]));
    assert_eq!(lines(&thin.join("draws.csv")).len(), 1 + 30 * 40);

    let diag = dir.path().join("diag");
    assert_ok(&gpmix(&[
        "diagnose",
        "--summary", fit.join("summary.csv").to_str().unwrap(),
        "--truth", sim.join("truth.csv").to_str().unwrap(),
        "--out", diag.to_str().unwrap(),
    ]));
    let d = json(&diag.join("diagnostics.json"));
    assert!(d["mse"].as_f64().unwrap() >= 0.0);
    assert!(d["bias"].as_f64().is_some());
    let cov = d["coverage"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&cov));
    let scatter = lines(&diag.join("cate_scatter.csv"));
    assert_eq!(scatter[0], "true_cate,point,lwr,upr");
    assert_eq!(scatter.len(), 41);

    let bins = dir.path().join("bins");
    assert_ok(&gpmix(&[
        "bin",
        "--draws", fit.join("draws.csv").to_str().unwrap(),
        "--data", sim.join("data.csv").to_str().unwrap(),
        "--values-column", "x3",
        "--n-bins", "4",
        "--out", bins.to_str().unwrap(),
    ]));
    let b = lines(&bins.join("bins.csv"));
    assert_eq!(b[0], "bin,mean_value,point,lwr,upr");
    assert_eq!(b.len(), 5);
}

#[test]
fn unknown_mode_row_counts_and_acceptance() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    assert_ok(&gpmix(&["simulate", "--case", "b", "--n", "30", "--seed", "3", "--out", sim.to_str().unwrap()]));
    let config = dir.path().join("fit.toml");
    std::fs::write(&config, "[mcmc]\niters = 60\nburn_in = 20\n").unwrap();
    let fit = dir.path().join("fit");
    assert_ok(&gpmix(&[
        "fit",
        "--data", sim.join("data.csv").to_str().unwrap(),
        "--config", config.to_str().unwrap(),
        "--mode", "unknown",
        "--out", fit.to_str().unwrap(),
    ]));
    // Per retained draw: g, h, e per unit, sigma2, and 6 coefficients.
    let draws = lines(&fit.join("draws.csv"));
    assert_eq!(draws.len(), 1 + 40 * (3 * 30 + 1 + 6));
    assert!(draws.iter().skip(1).any(|l| l.contains(",beta,")));
    let meta = json(&fit.join("chain_meta.json"));
    let rate = meta["acceptance_rate"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&rate));
}

#[test]
fn known_mode_without_propensity_column_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    std::fs::write(&data, "y,w,x1\n1.0,1,0.5\n2.0,0,-0.5\n").unwrap();
    let out = gpmix(&[
        "fit",
        "--data", data.to_str().unwrap(),
        "--mode", "known",
        "--out", dir.path().join("fit").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("e_true"));
}

#[test]
fn diagnose_joins_shuffled_truth_by_unit_id() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    assert_ok(&gpmix(&["simulate", "--case", "b", "--n", "25", "--seed", "8", "--out", sim.to_str().unwrap()]));
    let config = dir.path().join("fit.toml");
    std::fs::write(&config, "[mcmc]\niters = 30\nburn_in = 10\n").unwrap();
    let fit = dir.path().join("fit");
    assert_ok(&gpmix(&[
        "fit",
        "--data", sim.join("data.csv").to_str().unwrap(),
        "--config", config.to_str().unwrap(),
        "--mode", "known",
        "--out", fit.to_str().unwrap(),
    ]));

    let diag = |truth: &Path, out: &Path| {
        assert_ok(&gpmix(&[
            "diagnose",
            "--summary", fit.join("summary.csv").to_str().unwrap(),
            "--truth", truth.to_str().unwrap(),
            "--out", out.to_str().unwrap(),
        ]));
        std::fs::read(out.join("diagnostics.json")).unwrap()
    };

    let original = diag(&sim.join("truth.csv"), &dir.path().join("d1"));

    let mut rows = lines(&sim.join("truth.csv"));
    let header = rows.remove(0);
    rows.reverse();
    let shuffled = dir.path().join("truth_shuffled.csv");
    std::fs::write(&shuffled, format!("{header}\n{}\n", rows.join("\n"))).unwrap();
    let rejoined = diag(&shuffled, &dir.path().join("d2"));

    assert_eq!(original, rejoined);
}

#[test]
fn simulate_is_deterministic_and_validates_case() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_ok(&gpmix(&["simulate", "--case", "a", "--n", "15", "--seed", "4", "--out", a.to_str().unwrap()]));
    assert_ok(&gpmix(&["simulate", "--case", "a", "--n", "15", "--seed", "4", "--out", b.to_str().unwrap()]));
    for name in ["data.csv", "truth.csv", "manifest.json"] {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap(),
            "{name} differs between identical runs"
        );
    }

    let out = gpmix(&["simulate", "--case", "z", "--n", "5", "--seed", "1", "--out", dir.path().join("z").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    std::fs::write(&data, "y,w,e_true,x1\n1.0,1,0.5,0.2\n2.0,0,0.5,-0.2\n").unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "[mcmc]\niterations = 10\n").unwrap();
    let out = gpmix(&[
        "fit",
        "--data", data.to_str().unwrap(),
        "--config", config.to_str().unwrap(),
        "--mode", "known",
        "--out", dir.path().join("fit").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}
