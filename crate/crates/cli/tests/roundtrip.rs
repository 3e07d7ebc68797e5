use std::path::Path;
use std::process::Command;

use hybridsurf::build_grid;
use hybridsurf::synth::write_field_csv;
use hybridsurf_cli::ingest::{ingest_grid, parse_grid};
use proptest::prelude::*;

fn bin(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_hybridsurf")).args(args).output().unwrap()
}

fn grid_strategy() -> impl Strategy<Value = (usize, usize, usize, Vec<f64>)> {
    (2usize..7, 2usize..7, 1usize..4).prop_flat_map(|(nx, ny, k)| {
        (Just(nx), Just(ny), Just(k), prop::collection::vec(-1e6f64..1e6, nx * ny * k))
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn exported_fields_reingest_exactly((nx, ny, k, values) in grid_strategy()) {
        let grid = build_grid(nx, ny).unwrap();
        let members: Vec<&[f64]> = values.chunks(nx * ny).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        write_field_csv(&path, &grid, &members, "seed=0").unwrap();
        let back = ingest_grid(&path).unwrap();
        prop_assert_eq!((back.nx, back.ny), (nx, ny));
        prop_assert_eq!(back.members.len(), k);
        for (a, b) in back.members.iter().zip(&members) {
            prop_assert_eq!(a.as_slice(), *b);
        }
    }
}

#[test]
fn simulate_then_fit_outputs_reingest() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let fit = dir.path().join("fit");
    let s = |p: &Path| p.to_string_lossy().into_owned();
    let o = bin(&["simulate", "--kind", "synthetic", "--grid", "6x5", "--seed", "2", "--out", &s(&sim)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let data = ingest_grid(&sim.join("data.csv")).unwrap();
    assert_eq!((data.nx, data.ny), (6, 5));

    let o = bin(&[
        "fit", "--input", &s(&sim.join("data.csv")), "--grid", "6x5", "--iters", "300", "--burnin", "100",
        "--out", &s(&fit),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["mu_mean.csv", "mu_sd.csv", "gamma_mean.csv", "gamma_sd.csv"] {
        let g = ingest_grid(&fit.join(f)).unwrap();
        assert_eq!((g.nx, g.ny, g.members.len()), (6, 5, 1), "{f}");
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(fit.join("fit.json")).unwrap()).unwrap();
    assert_eq!(report["draws"], 200);
    assert_eq!(report["method"], "nj");
    let cfg = std::fs::read_to_string(fit.join("config.toml")).unwrap();
    assert!(cfg.contains("seed = 1"), "{cfg}");
}

#[test]
fn config_file_is_read_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "schema_version = 1\n[threshold]\nprior = \"cauchy\"\npoints = 5\nout = \"th\"\n").unwrap();
    let o = bin(&["--config", &cfg.to_string_lossy(), "threshold", "--points", "7"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("th/thresholding.csv")).unwrap();
    assert_eq!(text.lines().count(), 8);
    assert!(text.lines().skip(1).all(|l| l.starts_with("cauchy,")));
}

#[test]
fn errors_are_reported_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "row,col,value\n0,0,1\n0,1,2\n1,0,3\n").unwrap();
    let o = bin(&["fit", "--input", &bad.to_string_lossy(), "--out", &dir.path().join("o").to_string_lossy()]);
    assert_eq!(o.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(v["error"], "ingest");
    assert!(v["message"].as_str().unwrap().contains("(1,1)"));

    let ens = dir.path().join("ens.csv");
    std::fs::write(&ens, "row,col,member,value\n0,0,1,1\n0,1,1,2\n1,0,1,3\n1,1,1,4\n0,0,2,1\n0,1,2,2\n1,0,2,3\n1,1,2,5\n")
        .unwrap();
    let o = bin(&["fit", "--input", &ens.to_string_lossy(), "--out", &dir.path().join("o").to_string_lossy()]);
    let v: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(v["error"], "config");
    assert!(parse_grid(&std::fs::read_to_string(&ens).unwrap()).unwrap().is_ensemble());
}
