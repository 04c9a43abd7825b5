//! Ablation table on synthetic data: full pipeline, PCA without rotation,
//! random projection without PCA, and PCA fitted on a different corpus.
//!
//!     cargo run --release --example ablation [offset_scale]

use binhash::experiment::{ablation_table, Benchmark, Corpora, Mode, Variant};
use binhash::synth::{self, ClusterSpec};
use binhash::PreprocessFlags;

fn main() -> binhash::Result<()> {
    // Items share a common offset of norm 2 by default, so they sit in a narrow cone.
    let offset = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(2.0);
    let spec = ClusterSpec::anisotropic(250, offset, 42);
    let set = synth::generate(&spec)?;
    let split = synth::split(&set.embeddings, &set.labels, 0.2, 0)?;
    // An unrelated corpus with the same dimensionality plays the role of a
    // generic pre-training set for the global-PCA rows.
    let global = synth::generate(&ClusterSpec::anisotropic(100, offset, 4242))?;

    let bench = Benchmark::new(
        split.database.clone(),
        split.database_labels.clone(),
        split.queries.clone(),
        split.query_labels.clone(),
        split.database.n(),
    )?;
    let corpora = Corpora {
        train: &split.database,
        global: Some(&global.embeddings),
        flags: PreprocessFlags::default(),
    };
    let variants = [
        Variant::Full,
        Variant::NoRotation,
        Variant::NoPca,
        Variant::GlobalPca,
        Variant::GlobalPcaNoRotation,
    ];
    let seeds: Vec<u64> = (0..10).collect();
    let rows = ablation_table(
        &bench,
        corpora,
        &variants,
        &[16, 32, 64],
        &seeds,
        Mode::Asym,
    )?;

    println!("{:<24} {:>5} {:>12}", "variant", "bits", "mAP (%)");
    for row in rows {
        println!(
            "{:<24} {:>5} {:>6.1}±{:.1}",
            row.variant.as_str(),
            row.bits,
            100.0 * row.mean,
            100.0 * row.std
        );
    }
    Ok(())
}
