//! Average coherence of the ISTA matrices on the default kernel, and the
//! normalized first-layer matrices as they would be plotted.
//!
//!     cargo run --release --example coherence

use anacont::kernel::GridSpec;
use anacont::metrics::{layer_coherence, normalize_weight_export, WeightSource};
use anacont::unrolled::{init_params, Variant};

fn main() -> anacont::Result<()> {
    let kernel = GridSpec::default().kernel()?;
    let ista = init_params(&kernel, 1e-3, Variant::Lista, 1, 0.5)?;
    let layer = &ista.layers[0];
    let (nu_wt, nu_we) = layer_coherence(layer.w_t.view(), layer.w_e.view())?;
    println!("ISTA reference coherence: nu(W_t - I) = {nu_wt:.4}, nu(W_e) = {nu_we:.4}");

    let export = normalize_weight_export(layer.w_t.view(), layer.w_e.view(), WeightSource::Ista)?;
    let (wt, _) = export.tables();
    println!("W_t export: {} x {}, norm before scaling {:.4}", wt.rows.len(), wt.columns.len(), export.w_t_norm);
    let diag: Vec<String> = (0..4).map(|i| format!("{:+.4}", export.w_t[(i, i)])).collect();
    println!("first diagonal entries: {}", diag.join(" "));
    Ok(())
}
