//! Write every file format, read it back and show what a damaged file looks
//! like to the loader.
//!
//!     cargo run --example format_roundtrip

use binhash::eval::LabelSet;
use binhash::io::{self, LabelEncoding};
use binhash::synth::{self, ClusterSpec};
use binhash::{hasher, PreprocessFlags};

fn main() -> binhash::Result<()> {
    let set = synth::generate(&ClusterSpec::benchmark(5, 2))?;
    let model = hasher::fit(&set.embeddings, 8, 0, PreprocessFlags::default())?;
    let codes = model.encode_batch(&set.embeddings)?;
    let multi = LabelSet::new(12, vec![vec![0, 11], vec![4], vec![1, 2, 3]])?;

    let files = [
        ("embeddings", io::encode_hbem(&set.embeddings)),
        (
            "labels",
            io::encode_hblb(&set.labels, LabelEncoding::ClassId)?,
        ),
        (
            "multi-hot labels",
            io::encode_hblb(&multi, LabelEncoding::MultiHot)?,
        ),
        ("model", io::encode_hbmd(&model)),
        ("codes", io::encode_hbcd(&codes)),
    ];
    for (name, bytes) in &files {
        let again = match &bytes[..4] {
            b"HBEM" => io::encode_hbem(&io::decode_hbem(bytes)?),
            b"HBLB" => {
                let (l, e) = io::decode_hblb(bytes)?;
                io::encode_hblb(&l, e)?
            }
            b"HBMD" => io::encode_hbmd(&io::decode_hbmd(bytes)?),
            _ => io::encode_hbcd(&io::decode_hbcd(bytes)?),
        };
        println!(
            "{name:<17} {:>6} bytes, re-encoded identically: {}",
            bytes.len(),
            &again == bytes
        );
    }

    let mut damaged = files[0].1.clone();
    damaged.truncate(damaged.len() - 10);
    println!(
        "truncated embeddings: {}",
        io::decode_hbem(&damaged).unwrap_err()
    );
    let mut damaged = files[3].1.clone();
    damaged[20] = 1;
    println!(
        "model with reserved byte set: {}",
        io::decode_hbmd(&damaged).unwrap_err()
    );
    let mut damaged = files[4].1.clone();
    let last = damaged.len() - 1;
    damaged[last] |= 0x80;
    println!(
        "codes with padding bit set: {}",
        io::decode_hbcd(&damaged).unwrap_err()
    );
    Ok(())
}
