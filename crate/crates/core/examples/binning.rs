//! Uniform depth bins against gamma-spaced height bins.

use bevlift::binning::{BinMode, DepthBinSpec, HeightBinSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let depth = DepthBinSpec::default().edges();
    let height = HeightBinSpec::default().edges();
    println!("depth:  {} bins over [{}, {}]", depth.n_bins(), depth.lo(), depth.hi());
    println!("height: {} bins over [{}, {}]", height.n_bins(), height.lo(), height.hi());

    let hw: Vec<f64> = height.widths().collect();
    println!("height widths: first {:.5}, last {:.5}", hw[0], hw[hw.len() - 1]);

    for h in [-1.5, 0.0, 1.5, 2.99, 5.0] {
        let b = height.value_to_bin(h, BinMode::Clamp)?;
        println!("h = {h:>5}: bin {:>3} center {:.4} clamped {}", b.index, height.bin_center(b.index)?, b.clamped);
    }
    Ok(())
}
