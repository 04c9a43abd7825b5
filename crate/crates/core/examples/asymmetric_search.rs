//! Top-k retrieval with real-valued query probabilities against binary codes,
//! next to the plain Hamming ranking of the binarized query.
//!
//!     cargo run --release --example asymmetric_search

use binhash::hasher::{self, binarize};
use binhash::index;
use binhash::synth::{self, ClusterSpec};
use binhash::PreprocessFlags;

fn main() -> binhash::Result<()> {
    let set = synth::generate(&ClusterSpec::benchmark(200, 3))?;
    let split = synth::split(&set.embeddings, &set.labels, 0.1, 0)?;
    let model = hasher::fit(&split.database, 16, 0, PreprocessFlags::default())?;
    let db = model.encode_batch(&split.database)?;

    let q = 0;
    let p = model.project(split.queries.row(q))?;
    let asym = index::search_asymmetric(&db, &p, 8)?;
    let sym = index::search_symmetric(&db, &binarize(&p), 8)?;
    let class = split.query_labels.row(q)[0];
    println!("query {q} (class {class})");
    println!(
        "{:>4} {:>8} {:>6} {:>8} {:>6}",
        "rank", "asym id", "class", "sym id", "class"
    );
    for r in 0..asym.len() {
        println!(
            "{r:>4} {:>8} {:>6} {:>8} {:>6}",
            asym.ids[r],
            split.database_labels.row(asym.ids[r])[0],
            sym.ids[r],
            split.database_labels.row(sym.ids[r])[0]
        );
    }
    // Many database items share the query's Hamming distance; the asymmetric
    // score separates them.
    let distinct = |s: &[f64]| {
        let mut v = s.to_vec();
        v.dedup();
        v.len()
    };
    let all_asym = index::search_asymmetric(&db, &p, db.len())?;
    let all_sym = index::search_symmetric(&db, &binarize(&p), db.len())?;
    println!(
        "distinct scores over {} items: asymmetric {}, hamming {}",
        db.len(),
        distinct(&all_asym.scores),
        distinct(&all_sym.scores)
    );
    Ok(())
}
