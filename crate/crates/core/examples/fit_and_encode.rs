//! Fit a hashing model on synthetic embeddings, encode a database and save
//! both to disk.
//!
//!     cargo run --release --example fit_and_encode [out_dir]

use std::path::PathBuf;

use binhash::hasher;
use binhash::io;
use binhash::synth::{self, ClusterSpec};
use binhash::PreprocessFlags;

fn main() -> binhash::Result<()> {
    let dir: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(std::env::temp_dir);
    let set = synth::generate(&ClusterSpec::benchmark(100, 1))?;

    let summary = hasher::fit_with_spectrum(&set.embeddings, 32, 0, PreprocessFlags::default())?;
    println!(
        "kept {:.2}% of the variance in {} components",
        100.0 * summary.explained_variance,
        summary.model.k()
    );
    let codes = summary.model.encode_batch(&set.embeddings)?;

    let model_path = dir.join("model.hbmd");
    let codes_path = dir.join("codes.hbcd");
    io::write_hbmd(&summary.model, &model_path)?;
    io::write_hbcd(&codes, &codes_path)?;
    println!(
        "wrote {} and {}",
        model_path.display(),
        codes_path.display()
    );

    // A reloaded model encodes exactly like the original one.
    let reloaded = io::read_hbmd(&model_path)?;
    assert_eq!(reloaded.encode_batch(&set.embeddings)?, codes);
    for i in 0..3 {
        let bits: String = codes
            .code(i)
            .to_bits()
            .iter()
            .map(|&b| if b { '1' } else { '0' })
            .collect();
        println!("item {i}: {bits}");
    }
    Ok(())
}
