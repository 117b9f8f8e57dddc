//! Flat-default maximum entropy on one sample: walks the α grid from large
//! to small and stops where χ² first drops to the number of data points.
//!
//!     cargo run --release --example maxent_alpha

use anacont::kernel::GridSpec;
use anacont::maxent::{default_alpha_grid, select_alpha, SolverOptions};
use anacont::metrics::rse;
use anacont::rng::SeededRng;
use anacont::synthdata::{make_sample, sample_spectrum, SpectrumConfig};

fn main() -> anacont::Result<()> {
    let grid = GridSpec::default();
    let (_, freq) = grid.build()?;
    let k = grid.kernel()?;
    let mut rng = SeededRng::new(5);
    let cfg = SpectrumConfig::default().with_peaks(3, 3);
    let sample = make_sample(sample_spectrum(&mut rng, &cfg, &freq), 3, &k, 1e-3, &mut rng)?;

    let flat = freq.flat_density();
    let sel = select_alpha(
        sample.greens_noisy.view(),
        &k,
        1e-3,
        flat.view(),
        &default_alpha_grid(),
        &SolverOptions::default(),
    )?;
    println!("{:>12} {:>14} {}", "alpha", "chi2", "converged");
    for (alpha, chi2, ok) in &sel.path {
        println!("{alpha:>12.4e} {chi2:>14.4e} {ok}");
    }
    println!(
        "selected alpha {:.4e} (target chi2 <= {}, met: {}), rse {:.4}",
        sel.alpha,
        grid.n_tau,
        sel.discrepancy_met,
        rse(sel.result.spectrum.view(), sample.spectrum.view())?
    );
    Ok(())
}
