//! End-to-end run on the synthetic cluster benchmark: float-cosine baseline
//! and asymmetric/symmetric binary retrieval at 16, 32 and 64 bits, each
//! binary cell averaged over 10 rotation seeds.
//!
//!     cargo run --release --example synthetic_benchmark

use std::time::Instant;

use binhash::experiment::{run_seeds, Benchmark, Corpora, Mode, Variant};
use binhash::synth::{self, ClusterSpec};
use binhash::PreprocessFlags;

fn main() -> binhash::Result<()> {
    let spec = ClusterSpec::benchmark(250, 42);
    let set = synth::generate(&spec)?;
    println!(
        "generated {} items, d = {}, nearest-centroid accuracy {:.4}",
        set.embeddings.n(),
        set.embeddings.d(),
        synth::nearest_centroid_accuracy(&set)
    );
    let split = synth::split(&set.embeddings, &set.labels, 0.2, 0)?;
    let n = split.database.n();
    let bench = Benchmark::new(
        split.database.clone(),
        split.database_labels.clone(),
        split.queries.clone(),
        split.query_labels.clone(),
        n,
    )?;
    let corpora = Corpora {
        train: &split.database,
        global: None,
        flags: PreprocessFlags::default(),
    };
    let seeds: Vec<u64> = (0..10).collect();

    println!("{:>5} {:>6} {:>14}", "bits", "mode", "mAP (%)");
    for bits in [16, 32, 64] {
        for mode in [Mode::Float, Mode::Asym, Mode::Sym] {
            let t = Instant::now();
            let run = run_seeds(&bench, corpora, Variant::Full, bits, &seeds, mode)?;
            println!(
                "{bits:>5} {mode:>6} {:>8.1}±{:<4.1}  ({:.2?})",
                100.0 * run.mean,
                100.0 * run.std,
                t.elapsed()
            );
        }
    }
    Ok(())
}
