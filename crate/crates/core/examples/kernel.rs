//! Builds the default Fermi kernel and checks its symmetries.
//!
//!     cargo run --release --example kernel

use anacont::kernel::{fermi_kernel, GridSpec};
use anacont::linalg::spectral_norm_power;

fn main() -> anacont::Result<()> {
    let grid = GridSpec::default();
    let (time, freq) = grid.build()?;
    let beta = grid.beta;

    let mut worst_sum = 0.0f64;
    let mut worst_mirror = 0.0f64;
    for &w in freq.points() {
        worst_sum = worst_sum.max((fermi_kernel(0.0, w, beta)? + fermi_kernel(beta, w, beta)? - 1.0).abs());
        for &t in time.points() {
            worst_mirror = worst_mirror.max((fermi_kernel(beta - t, -w, beta)? - fermi_kernel(t, w, beta)?).abs());
        }
    }
    println!("max |K(0,w) + K(beta,w) - 1|     = {worst_sum:e}");
    println!("max |K(beta-t,-w) - K(t,w)|      = {worst_mirror:e}");

    // Large |beta * omega| stays finite.
    for w in [-70.0, 70.0] {
        println!("K(beta/2, {w:+}) at beta = 10      = {:e}", fermi_kernel(5.0, w, beta)?);
    }

    let k = grid.kernel()?;
    let norm = spectral_norm_power(k.matrix(), 1e-12, 10_000)?;
    println!("kernel {}x{}, ||K||_2 = {norm:.6}", k.matrix().nrows(), k.matrix().ncols());
    Ok(())
}
