//! A scaled-down end-to-end benchmark: all three experiments on a 32-point
//! grid with a few thousand training samples. Tables go to a temp directory.
//!
//!     cargo run --release --example benchmark

use anacont::benchmark::{run_benchmark, RunOptions};
use anacont::config::ExperimentConfig;
use anacont::kernel::GridSpec;

fn main() -> anacont::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.grid = GridSpec {
        n_tau: 32,
        n_omega: 32,
        ..GridSpec::default()
    };
    cfg.data.n_train = 3000;
    cfg.data.n_test = 300;
    cfg.train.epochs = 15;
    cfg.train.learning_rate = 2e-3;
    cfg.train.lr_decay = 0.9;
    cfg.train.threshold_lr_scale = 0.01;
    cfg.benchmark.efficiency_methods = vec!["lista-2".into(), "lista-6".into(), "rlista-6".into(), "fcn-2".into()];
    cfg.benchmark.neural_default_samples = 20;

    let report = run_benchmark(&cfg, &RunOptions { verbose: true, ..Default::default() })?;
    let dir = std::env::temp_dir().join("anacont-benchmark-example");
    report.write(&cfg, &dir, true)?;

    if let Some(c) = &report.comparison {
        println!("{:<10} {:<7} {:>8} {:>10}", "method", "stratum", "params", "mean rse");
        for r in &c.rows {
            println!("{:<10} {:<7} {:>8} {:>10.4}", r.method, r.stratum, r.parameter_count, r.mean_rse);
        }
    }
    if let Some(e) = &report.efficiency {
        for r in &e.rows {
            println!("{:<10} {:>8} params  multi-peak rse {:.4}", r.method, r.parameter_count, r.mean_rse);
        }
    }
    if let Some(n) = &report.neural_default {
        println!(
            "maxent flat {:.4}, {} {:.4}, rlista+ {:.4}",
            n.mean(|r| r.rse_flat),
            n.network,
            n.mean(|r| r.rse_network),
            n.mean(|r| r.rse_rlista_plus)
        );
    }
    println!("tables in {}", dir.display());
    Ok(())
}
