//! Per-bit variance before and after the random rotation. PCA leaves most of
//! the variance in the first few coordinates; the rotation spreads it out.
//!
//!     cargo run --release --example variance_balance

use binhash::hasher;
use binhash::synth::{self, ClusterSpec};
use binhash::PreprocessFlags;

fn variances(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len() as f64;
    (0..rows[0].len())
        .map(|j| {
            let m = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            rows.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n
        })
        .collect()
}

fn main() -> binhash::Result<()> {
    let set = synth::generate(&ClusterSpec::anisotropic(200, 2.0, 11))?;
    let summary = hasher::fit_with_spectrum(&set.embeddings, 16, 0, PreprocessFlags::default())?;
    let m = &summary.model;
    let z = set
        .embeddings
        .rows()
        .map(|r| m.reduce(r))
        .collect::<binhash::Result<Vec<_>>>()?;
    let u = set
        .embeddings
        .rows()
        .map(|r| m.logits(r))
        .collect::<binhash::Result<Vec<_>>>()?;
    let (vz, vu) = (variances(&z), variances(&u));
    println!("{:>4} {:>12} {:>12}", "bit", "PCA", "rotated");
    for j in 0..16 {
        println!("{j:>4} {:>12.3e} {:>12.3e}", vz[j], vu[j]);
    }
    let ratio = |v: &[f64]| {
        v.iter().copied().fold(0.0, f64::max) / v.iter().copied().fold(f64::MAX, f64::min)
    };
    println!(
        "max/min ratio: PCA {:.1}, rotated {:.1}",
        ratio(&vz),
        ratio(&vu)
    );
    Ok(())
}
