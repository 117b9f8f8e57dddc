//! Generates the three dataset splits, writes them to disk and reads them
//! back, checking the round trip is bit-exact.
//!
//!     cargo run --release --example datasets

use anacont::benchmark::Datasets;
use anacont::config::ExperimentConfig;
use anacont::synthdata::{load_dataset, save_dataset};
use anacont::Execution;

fn main() -> anacont::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.data.n_train = 1000;
    cfg.data.n_test = 200;
    let data = Datasets::generate(&cfg, Execution::Parallel)?;
    let dir = std::env::temp_dir().join("anacont-datasets-example");
    std::fs::create_dir_all(&dir).map_err(|e| anacont::Error::Io { path: dir.clone(), source: e })?;

    for (name, set) in [("train", &data.train), ("single", &data.test_single), ("multi", &data.test_multi)] {
        let path = dir.join(format!("{name}.bin"));
        save_dataset(set, &path)?;
        let back = load_dataset(&path)?;
        let mut counts = [0usize; 5];
        for s in &set.samples {
            counts[s.peak_count.min(4)] += 1;
        }
        println!(
            "{name:>6}: {} samples, peaks 1..4 = {:?}, identical after reload: {}, sha256 {}",
            set.len(),
            &counts[1..],
            back.samples == set.samples,
            &set.hash()[..16]
        );
    }
    println!("files in {}", dir.display());
    Ok(())
}
