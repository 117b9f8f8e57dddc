use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use anacont::checkpoint::load_checkpoint;
use anacont::config::ExperimentConfig;
use anacont::maxent::rlista_plus;
use anacont::synthdata::load_dataset;
use anacont::table::{file_sha256, Table};

const SMALL: &str = r#"
seed = 3
[grid]
n_tau = 16
n_omega = 16
[data]
n_train = 120
n_test = 30
[train]
epochs = 2
batch_size = 32
[network]
depth = 2
[benchmark]
methods = ["ista", "lista-2"]
efficiency_methods = ["lista-1", "lista-2"]
reference_depth = 2
neural_default_samples = 3
"#;

fn anacont(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anacont"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = anacont(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    anacont(dir, args).status.code().expect("exit code")
}

fn workspace() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    (dir, cfg)
}

#[test]
fn gen_data_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str, extra: &[&str]| {
        let d = dir.path().join(sub);
        std::fs::create_dir(&d).unwrap();
        ok(&d, &[&["gen-data", "--n", "100", "--out", "d.bin"], extra].concat());
        (file_sha256(&d.join("d.bin")).unwrap(), file_sha256(&d.join("d.manifest.csv")).unwrap())
    };
    let a = run("a", &["--seed", "7", "--deterministic"]);
    assert_eq!(a, run("b", &["--seed", "7", "--deterministic"]));
    assert_eq!(a, run("c", &["--seed", "7", "--jobs", "3"]));
    assert_ne!(a.0, run("e", &["--seed", "8"]).0);
    assert_eq!(load_dataset(&dir.path().join("a/d.bin")).unwrap().len(), 100);
}

#[test]
fn exit_codes() {
    let (dir, cfg) = workspace();
    let d = dir.path();
    let cfg = cfg.to_str().unwrap();
    assert_eq!(code(d, &["gen-data", "--out", "x.bin"]), 2);
    assert_eq!(code(d, &["frobnicate"]), 2);
    assert_eq!(code(d, &["--config", cfg, "gen-data", "--n", "5", "--out", "/dev/null/x.bin"]), 1);
    assert_eq!(code(d, &["--config", cfg, "train", "--variant", "rlista", "--eta", "1.5", "--out", "c.bin"]), 2);
    assert_eq!(code(d, &["--config", cfg, "--set", "train.nonsense=1", "gen-data", "--n", "5", "--out", "x.bin"]), 2);
    assert_eq!(code(d, &["--config", "missing.toml", "gen-data", "--n", "5", "--out", "x.bin"]), 1);
    assert_eq!(code(d, &["--config", cfg, "ista", "--data", "nope.bin", "--out", "x.csv"]), 1);
    assert_eq!(code(d, &["--help"]), 0);
}

#[test]
fn train_infer_and_grid_checks() {
    let (dir, cfg) = workspace();
    let d = dir.path();
    let cfg = cfg.to_str().unwrap();
    ok(d, &["--config", cfg, "gen-data", "--n", "20", "--split", "multi", "--out", "test.bin"]);
    let train = ["--config", cfg, "--deterministic", "train", "--variant", "lista", "--depth", "2", "--test", "test.bin"];
    ok(d, &[&train[..], &["--out", "c1.bin"]].concat());
    ok(d, &[&train[..], &["--out", "c2.bin"]].concat());
    assert_eq!(file_sha256(&d.join("c1.bin")).unwrap(), file_sha256(&d.join("c2.bin")).unwrap());
    assert!(d.join("c1.curve.csv").exists());

    ok(d, &["--config", cfg, "infer", "--checkpoint", "c1.bin", "--data", "test.bin", "--out", "pred.csv"]);
    let pred = Table::parse(&std::fs::read_to_string(d.join("pred.csv")).unwrap()).unwrap();
    assert_eq!(pred.rows.len(), 20);
    assert_eq!(pred.get_meta("model"), Some("LISTA-2"));

    // Default (64 x 64) grid against 16 x 16 files.
    assert_eq!(code(d, &["infer", "--checkpoint", "c1.bin", "--data", "test.bin", "--out", "p.csv"]), 2);

    ok(d, &["--config", cfg, "train", "--variant", "fcn", "--hidden", "8", "--test", "test.bin", "--out", "f.bin"]);
    assert!(load_checkpoint(&d.join("f.bin")).unwrap().model.name().starts_with("FCN"));
    assert_eq!(code(d, &["--config", cfg, "coherence", "--checkpoint", "f.bin", "--out", "x.csv"]), 2);
}

#[test]
fn headers_carry_provenance() {
    let (dir, cfg) = workspace();
    let d = dir.path();
    let cfg = cfg.to_str().unwrap();
    ok(d, &["--config", cfg, "gen-data", "--n", "4", "--split", "single", "--out", "s.bin"]);
    ok(d, &["--config", cfg, "ista", "--data", "s.bin", "--sample", "0", "--out", "i.csv"]);
    let text = std::fs::read_to_string(d.join("i.csv")).unwrap();
    let t = Table::parse(&text).unwrap();
    assert_eq!(t.meta[0].0, "tool");
    assert!(t.meta[0].1.starts_with("anacont "));
    let config_hash = ExperimentConfig::load(Path::new(cfg)).unwrap().hash();
    assert_eq!(t.get_meta("config_sha256"), Some(config_hash.as_str()));
    assert_eq!(t.get_meta("input_s.bin_sha256"), Some(file_sha256(&d.join("s.bin")).unwrap().as_str()));
    assert!(d.join("i.trace.csv").exists());
    let bin = std::fs::read(d.join("s.bin")).unwrap();
    assert!(String::from_utf8_lossy(&bin[..200]).contains("tool = anacont"));
    let manifest = std::fs::read_to_string(d.join("i.manifest.csv")).unwrap();
    assert!(manifest.contains("# config.grid.n_tau: 16"));

    ok(d, &["--config", cfg, "ista", "--data", "s.bin", "--out", "all.csv"]);
    let all = Table::parse(&std::fs::read_to_string(d.join("all.csv")).unwrap()).unwrap();
    assert_eq!(all.rows.len(), 4);
}

#[test]
fn maxent_commands() {
    let (dir, cfg) = workspace();
    let d = dir.path();
    let cfg_path = cfg.to_str().unwrap();
    ok(d, &["--config", cfg_path, "gen-data", "--n", "3", "--split", "multi", "--out", "m.bin"]);
    ok(d, &["--config", cfg_path, "maxent", "--default", "flat", "--alpha", "auto", "--out", "flat.csv", "--data", "m.bin"]);
    let flat = Table::parse(&std::fs::read_to_string(d.join("flat.csv")).unwrap()).unwrap();
    for key in ["chi2", "alpha", "entropy", "converged"] {
        assert!(flat.get_meta(key).is_some(), "{key}");
    }
    ok(d, &["--config", cfg_path, "maxent", "--default", "flat", "--alpha", "0.5", "--out", "fixed.csv", "--data", "m.bin"]);
    let fixed = Table::parse(&std::fs::read_to_string(d.join("fixed.csv")).unwrap()).unwrap();
    assert_eq!(fixed.get_meta("alpha").unwrap().parse::<f64>().unwrap(), 0.5);
    assert_eq!(code(d, &["--config", cfg_path, "maxent", "--default", "neural", "--data", "m.bin", "--out", "n.csv"]), 2);
    assert_eq!(code(d, &["--config", cfg_path, "maxent", "--alpha", "lots", "--data", "m.bin", "--out", "n.csv"]), 2);

    ok(d, &["--config", cfg_path, "train", "--variant", "rlista", "--depth", "2", "--out", "r.bin"]);
    ok(d, &["--config", cfg_path, "maxent", "--default", "neural", "--checkpoint", "r.bin", "--sample", "1", "--data", "m.bin", "--out", "n.csv"]);
    let neural = Table::parse(&std::fs::read_to_string(d.join("n.csv")).unwrap()).unwrap();

    let cfg = ExperimentConfig::load(&cfg).unwrap();
    let data = load_dataset(&d.join("m.bin")).unwrap();
    let ck = load_checkpoint(&d.join("r.bin")).unwrap();
    let kernel = cfg.grid.kernel().unwrap();
    let settings = cfg.maxent.settings(data.config.noise_sigma).unwrap();
    let direct = rlista_plus(data.samples[1].greens_noisy.view(), &kernel, &ck.model, &settings).unwrap();
    let cli: Vec<f64> = neural.column("a").unwrap().iter().map(|s| s.parse().unwrap()).collect();
    assert_eq!(cli, direct.result.spectrum.to_vec());
    let net: Vec<f64> = neural.column("network").unwrap().iter().map(|s| s.parse().unwrap()).collect();
    assert_eq!(net, direct.network_output.to_vec());
}

#[test]
fn weights_and_coherence() {
    let (dir, cfg) = workspace();
    let d = dir.path();
    let cfg = cfg.to_str().unwrap();
    ok(d, &["--config", cfg, "coherence", "--out", "ista.csv"]);
    let t = Table::parse(&std::fs::read_to_string(d.join("ista.csv")).unwrap()).unwrap();
    assert_eq!(t.get_meta("source"), Some("Ista"));
    ok(d, &["--config", cfg, "export-weights", "--layer", "2", "--out", "w"]);
    let wt = Table::parse(&std::fs::read_to_string(d.join("w/w_t.csv")).unwrap()).unwrap();
    assert_eq!((wt.rows.len(), wt.columns.len()), (16, 16));
    assert_eq!(code(d, &["--config", cfg, "export-weights", "--layer", "3", "--out", "w"]), 2);
}

#[test]
fn benchmark_manifest_names_tables() {
    let (dir, cfg) = workspace();
    let d = dir.path();
    let cfg = cfg.to_str().unwrap();
    ok(d, &["--config", cfg, "--deterministic", "benchmark", "--out", "b1"]);
    ok(d, &["--config", cfg, "--deterministic", "benchmark", "--out", "b2"]);
    let manifest = Table::parse(&std::fs::read_to_string(d.join("b1/manifest.csv")).unwrap()).unwrap();
    let labels = manifest.column("label").unwrap();
    for want in ["comparison", "efficiency", "neural-default", "resolved config"] {
        assert!(labels.contains(&want), "{want} missing from {labels:?}");
    }
    for f in manifest.column("file").unwrap() {
        assert_eq!(
            std::fs::read(d.join("b1").join(f)).unwrap(),
            std::fs::read(d.join("b2").join(f)).unwrap(),
            "{f}"
        );
    }
    assert_eq!(
        std::fs::read(d.join("b1/manifest.csv")).unwrap(),
        std::fs::read(d.join("b2/manifest.csv")).unwrap()
    );
    let cmp = Table::parse(&std::fs::read_to_string(d.join("b1/comparison.csv")).unwrap()).unwrap();
    assert_eq!(cmp.rows.len(), 4);
}
