//! MaxEnt with a learned default model. A briefly trained RLISTA proposes a
//! spectrum, which is smoothed into the default model for MaxEnt; the result
//! is compared with flat-default MaxEnt and with the raw network.
//!
//!     cargo run --release --example neural_default

use anacont::config::{ExperimentConfig, Split};
use anacont::kernel::GridSpec;
use anacont::maxent::{flat_maxent, rlista_plus, MaxEntSettings};
use anacont::metrics::rse;
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
    let test_set = generate_dataset(20, &spec(Split::TestMulti), &cfg.grid, Execution::Parallel)?;
    let kernel = cfg.grid.kernel()?;
    let tc = TrainConfig {
        epochs: 20,
        learning_rate: 2e-3,
        lr_decay: 0.95,
        threshold_lr_scale: 0.01,
        ..TrainConfig::default()
    };
    let net = train(init_params(&kernel, 1e-3, Variant::Rlista, 6, 0.5)?, &train_set, &test_set, &tc)?.model;

    let settings = MaxEntSettings::auto(cfg.data.noise_sigma);
    let (mut flat_sum, mut net_sum, mut plus_sum) = (0.0, 0.0, 0.0);
    println!("{:>6} {:>10} {:>10} {:>10}", "sample", "flat", "rlista", "rlista+");
    for (i, s) in test_set.samples.iter().enumerate() {
        let flat = flat_maxent(s.greens_noisy.view(), &kernel, &settings)?;
        let plus = rlista_plus(s.greens_noisy.view(), &kernel, &net, &settings)?;
        let e = [
            rse(flat.spectrum.view(), s.spectrum.view())?,
            rse(plus.network_output.view(), s.spectrum.view())?,
            rse(plus.result.spectrum.view(), s.spectrum.view())?,
        ];
        println!("{i:>6} {:>10.4} {:>10.4} {:>10.4}", e[0], e[1], e[2]);
        flat_sum += e[0];
        net_sum += e[1];
        plus_sum += e[2];
    }
    let n = test_set.len() as f64;
    println!("{:>6} {:>10.4} {:>10.4} {:>10.4}", "mean", flat_sum / n, net_sum / n, plus_sum / n);
    Ok(())
}
