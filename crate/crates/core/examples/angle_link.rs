//! Sign hashing after a random rotation: the fraction of differing bits
//! between two unit vectors tracks their angle divided by π.
//!
//!     cargo run --release --example angle_link

use binhash::index::hamming;
use binhash::linalg::{self, DenseMatrix};
use binhash::{HashModel, PreprocessFlags};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

fn unit(rng: &mut ChaCha20Rng, d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let n = linalg::dot(&v, &v).sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn main() -> binhash::Result<()> {
    let d = 256;
    let flags = PreprocessFlags {
        l2_normalize: true,
        mean_center: false,
    };
    let model = HashModel::from_parts(
        flags,
        vec![0.0; d],
        DenseMatrix::identity(d),
        linalg::random_orthogonal(d, 1)?,
        1,
    )?;
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    println!("{:>6} {:>10} {:>10}", "angle", "θ/π", "bits/k");
    for deg in [10.0f64, 30.0, 45.0, 60.0, 90.0, 135.0, 180.0] {
        let t = deg.to_radians();
        let pairs = 1000;
        let mut total = 0.0;
        for _ in 0..pairs {
            let x = unit(&mut rng, d);
            let w = unit(&mut rng, d);
            let c = linalg::dot(&x, &w);
            let perp: Vec<f64> = w.iter().zip(&x).map(|(a, b)| a - c * b).collect();
            let pn = linalg::dot(&perp, &perp).sqrt();
            let y: Vec<f32> = x
                .iter()
                .zip(&perp)
                .map(|(a, p)| (t.cos() * a + t.sin() * p / pn) as f32)
                .collect();
            let x: Vec<f32> = x.iter().map(|&v| v as f32).collect();
            total += hamming(&model.encode(&x)?, &model.encode(&y)?)? as f64 / d as f64;
        }
        println!(
            "{deg:>6} {:>10.4} {:>10.4}",
            t / std::f64::consts::PI,
            total / pairs as f64
        );
    }
    Ok(())
}
