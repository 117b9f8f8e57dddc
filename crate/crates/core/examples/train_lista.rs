//! Trains a small LISTA and an RLISTA on a 32-point grid and prints their
//! learning curves next to the untrained (ISTA-equivalent) error.
//!
//!     cargo run --release --example train_lista

use anacont::config::{ExperimentConfig, Split};
use anacont::kernel::GridSpec;
use anacont::synthdata::generate_dataset;
use anacont::train::{train, TrainConfig};
use anacont::unrolled::{init_params, Variant};
use anacont::Execution;

fn main() -> anacont::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.grid = GridSpec {
        n_tau: 32,
        n_omega: 32,
        ..GridSpec::default()
    };
    let spec = |split| cfg.data.spectrum_config(cfg.seed, split);
    let train_set = generate_dataset(4000, &spec(Split::Train), &cfg.grid, Execution::Parallel)?;
    let test_set = generate_dataset(500, &spec(Split::TestMulti), &cfg.grid, Execution::Parallel)?;
    let kernel = cfg.grid.kernel()?;
    let tc = TrainConfig {
        epochs: 20,
        learning_rate: 2e-3,
        lr_decay: 0.95,
        threshold_lr_scale: 0.01,
        ..TrainConfig::default()
    };

    for variant in [Variant::Lista, Variant::Rlista] {
        let net = init_params(&kernel, 1e-3, variant, 4, 0.5)?;
        let out = train(net, &train_set, &test_set, &tc)?;
        println!("{variant}-4: untrained test rse {:.4}", out.initial_test_rse);
        for r in out.curve.iter().step_by(5) {
            println!("  epoch {:>3}  train mse {:.3e}  test rse {:.4}", r.epoch, r.train_loss, r.test_rse);
        }
        println!("  final test rse {:.4}", out.final_test_rse());
    }
    Ok(())
}
