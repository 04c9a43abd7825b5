//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use binhash::eval::{self, ApDenominator, LabelSet, Ranking};
use binhash::experiment::{run_seeds, Benchmark, Corpora, Mode, Variant};
use binhash::hasher::{binarize, sigmoid};
use binhash::index::{self, asym_score, hamming, BinaryCode, CodeDatabase};
use binhash::io::{self, LabelEncoding};
use binhash::linalg::{self, DenseMatrix};
use binhash::synth::{self, ClusterSpec};
use binhash::{BitProbabilities, EmbeddingMatrix, HashModel, PreprocessFlags};
use common::*;
use rand::Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn p1_orthogonality() -> Check {
    let mut worst = 0.0f64;
    let mut worst_rt = 0.0f64;
    for k in [16, 32, 64, 256] {
        for seed in 0..10 {
            let r = linalg::random_orthogonal(k, seed).map_err(|e| e.to_string())?;
            let err = r.orthonormality_error();
            worst = worst.max(err);
            ensure(err <= 1e-10, || format!("k={k} seed={seed}: {err:e}"))?;
            let model = HashModel::from_parts(
                PreprocessFlags::default(),
                vec![0.0; k],
                DenseMatrix::identity(k),
                r,
                seed,
            )
            .map_err(|e| e.to_string())?;
            let back = io::decode_hbmd(&io::encode_hbmd(&model)).map_err(|e| e.to_string())?;
            let err = back.rotation().orthonormality_error();
            worst_rt = worst_rt.max(err);
            ensure(err <= 1e-5, || {
                format!("round-trip k={k} seed={seed}: {err:e}")
            })?;
        }
    }
    Ok(format!(
        "max |RᵀR−I| {worst:.1e}, after HBMD {worst_rt:.1e}"
    ))
}

fn p2_svd_oracle() -> Check {
    let mut rng = rng(2);
    let mut worst = 0.0f64;
    for trial in 0..50 {
        let n = rng.random_range(1..=30);
        let d = rng.random_range(1..=30);
        let a = random_matrix(&mut rng, n, d);
        let r = n.min(d);
        let svd = linalg::truncated_svd(&from_rows(&a), r).map_err(|e| e.to_string())?;
        let gram = if n >= d {
            matmul(&transpose(&a), &a)
        } else {
            matmul(&a, &transpose(&a))
        };
        let oracle: Vec<f64> = symmetric_eigenvalues(gram)
            .into_iter()
            .map(|l| l.max(0.0).sqrt())
            .collect();
        for (i, (&s, &o)) in svd.s.iter().zip(&oracle).enumerate() {
            let rel = (s - o).abs() / o;
            worst = worst.max(rel);
            ensure(rel <= 1e-8, || {
                format!("trial {trial} ({n}×{d}) σ{i}: {s} vs oracle {o}")
            })?;
        }

        let k = rng.random_range(1..=r);
        let best = frobenius(&sub(
            &a,
            &to_rows(
                &linalg::truncated_svd(&from_rows(&a), k)
                    .map_err(|e| e.to_string())?
                    .reconstruct(),
            ),
        ));
        for _ in 0..100 {
            let p = gram_schmidt(&random_matrix(&mut rng, d, k));
            let proj = matmul(&matmul(&a, &p), &transpose(&p));
            let err = frobenius(&sub(&a, &proj));
            ensure(best <= err + 1e-9, || {
                format!("trial {trial}: rank-{k} error {best} above random projection {err}")
            })?;
        }
    }
    Ok(format!("50 matrices, max relative σ error {worst:.1e}"))
}

fn p3_sign_equivalence() -> Check {
    let mut rng = rng(3);
    let specials = [
        0.0,
        -0.0,
        f64::MIN_POSITIVE,
        -f64::MIN_POSITIVE,
        5e-324,
        -5e-324,
        1e-300,
        -1e-300,
        40.0,
        -40.0,
        800.0,
        -800.0,
        f64::MAX,
        -f64::MAX,
    ];
    let k = 64;
    for v in 0..100_000 {
        let u: Vec<f64> = (0..k)
            .map(|_| match rng.random_range(0..10) {
                0 => 0.0,
                1 => specials[rng.random_range(0..specials.len())],
                2 => normal(&mut rng) * 1e-12,
                _ => normal(&mut rng) * 5.0,
            })
            .collect();
        let code = binarize(&BitProbabilities::from_logits(&u));
        for (j, &x) in u.iter().enumerate() {
            ensure(code.bit(j) == (x > 0.0), || {
                format!("vector {v} bit {j}: u={x:e} σ={}", sigmoid(x))
            })?;
        }
    }
    Ok("10⁵ vectors × 64 logits".into())
}

fn random_code(rng: &mut impl Rng, k: usize) -> BinaryCode {
    BinaryCode::from_bits(&(0..k).map(|_| rng.random::<bool>()).collect::<Vec<_>>())
}

fn p4_asymmetric_reduction() -> Check {
    let mut rng = rng(4);
    let k = 64;
    for i in 0..10_000 {
        let q = random_code(&mut rng, k);
        let b = random_code(&mut rng, k);
        let s = asym_score(&q.to_probabilities(), &b).map_err(|e| e.to_string())?;
        let h = hamming(&q, &b).map_err(|e| e.to_string())?;
        ensure(s == -(h as f64), || {
            format!("pair {i}: asym {s} vs −hamming {h}")
        })?;
    }
    // Few distinct codes force many ties.
    let pool: Vec<BinaryCode> = (0..40).map(|_| random_code(&mut rng, k)).collect();
    let codes: Vec<BinaryCode> = (0..3000)
        .map(|_| pool[rng.random_range(0..pool.len())].clone())
        .collect();
    let db = CodeDatabase::from_codes(k, &codes).map_err(|e| e.to_string())?;
    for qi in 0..20 {
        let q = random_code(&mut rng, k);
        for topk in [1, 17, 3000] {
            let a = index::search_asymmetric(&db, &q.to_probabilities(), topk)
                .map_err(|e| e.to_string())?;
            let s = index::search_symmetric(&db, &q, topk).map_err(|e| e.to_string())?;
            ensure(a == s, || format!("query {qi} top-{topk}: rankings differ"))?;
            let dists: Vec<f64> = codes
                .iter()
                .map(|c| -(hamming(&q, c).unwrap() as f64))
                .collect();
            let oracle: Vec<usize> = sort_ranking(&dists).into_iter().take(topk).collect();
            ensure(a.ids == oracle, || {
                format!("query {qi} top-{topk}: differs from sort oracle")
            })?;
        }
    }
    Ok("10⁴ pairs exact; 60 full rankings identical with ties".into())
}

fn p5_map_oracle() -> Check {
    let ap = eval::average_precision(&[true, false, true]);
    ensure(ap == 5.0 / 6.0, || format!("AP(T,F,T) = {ap}"))?;

    let mut rng = rng(5);
    for inst in 0..25 {
        let n = rng.random_range(1..=12);
        let nq = rng.random_range(1..=4);
        let k = 8;
        let classes = 3;
        let codes: Vec<BinaryCode> = (0..n).map(|_| random_code(&mut rng, k)).collect();
        let db = CodeDatabase::from_codes(k, &codes).map_err(|e| e.to_string())?;
        // Dyadic probabilities keep every score exact, so ties are deterministic.
        let probs: Vec<Vec<f64>> = (0..nq)
            .map(|_| {
                (0..k)
                    .map(|_| rng.random_range(0..=8) as f64 / 8.0)
                    .collect()
            })
            .collect();
        let queries: Vec<BitProbabilities> = probs
            .iter()
            .map(|p| BitProbabilities::new(p.clone()).unwrap())
            .collect();
        let label_row = |rng: &mut rand_chacha::ChaCha8Rng| {
            let mut row: Vec<u32> = (0..classes).filter(|_| rng.random::<bool>()).collect();
            if row.is_empty() {
                row.push(rng.random_range(0..classes));
            }
            row
        };
        let db_labels =
            LabelSet::new(classes, (0..n).map(|_| label_row(&mut rng)).collect()).unwrap();
        let q_labels =
            LabelSet::new(classes, (0..nq).map(|_| label_row(&mut rng)).collect()).unwrap();
        let k_eval = rng.random_range(1..=n);

        let report = eval::mean_ap(
            Ranking::Asymmetric {
                db: &db,
                queries: &queries,
            },
            &q_labels,
            &db_labels,
            k_eval,
            ApDenominator::Retrieved,
        )
        .map_err(|e| e.to_string())?;

        let mut total = num_rational::Ratio::from_integer(0i64);
        for (qi, p) in probs.iter().enumerate() {
            let scores: Vec<f64> = codes
                .iter()
                .map(|c| {
                    -(0..k)
                        .map(|j| if c.bit(j) { 1.0 - p[j] } else { p[j] })
                        .sum::<f64>()
                })
                .collect();
            let rel: Vec<bool> = sort_ranking(&scores)
                .into_iter()
                .take(k_eval)
                .map(|id| {
                    q_labels
                        .row(qi)
                        .iter()
                        .any(|c| db_labels.row(id).contains(c))
                })
                .collect();
            let ap = rational_ap(&rel);
            let got = report.per_query_ap[qi];
            ensure(got == ratio_to_f64(ap), || {
                format!("instance {inst} query {qi}: AP {got} vs oracle {ap}")
            })?;
            total += ap;
        }
        let oracle_map = total / nq as i64;
        ensure(
            (report.map - ratio_to_f64(oracle_map)).abs() <= 1e-15,
            || format!("instance {inst}: mAP {} vs oracle {oracle_map}", report.map),
        )?;
    }
    Ok("AP(T,F,T)=5/6; 25 instances match rational oracle".into())
}

struct P6Setup {
    bench: Benchmark,
    train: EmbeddingMatrix,
}

fn p6_setup() -> Result<P6Setup, String> {
    let set = synth::generate(&ClusterSpec::benchmark(250, 42)).map_err(|e| e.to_string())?;
    let split = synth::split(&set.embeddings, &set.labels, 0.2, 0).map_err(|e| e.to_string())?;
    ensure(
        split.database.n() == 2000 && split.queries.n() == 500,
        || format!("split sizes {} / {}", split.database.n(), split.queries.n()),
    )?;
    let n = split.database.n();
    let bench = Benchmark::new(
        split.database.clone(),
        split.database_labels,
        split.queries,
        split.query_labels,
        n,
    )
    .map_err(|e| e.to_string())?;
    Ok(P6Setup {
        bench,
        train: split.database,
    })
}

fn seeds() -> Vec<u64> {
    (0..10).collect()
}

fn p6_end_to_end(s: &P6Setup) -> Check {
    let corpora = Corpora {
        train: &s.train,
        global: None,
        flags: PreprocessFlags::default(),
    };
    let run = |bits, mode| {
        run_seeds(&s.bench, corpora, Variant::Full, bits, &seeds(), mode).map_err(|e| e.to_string())
    };
    let float = run(64, Mode::Float)?.mean;
    let m16 = run(16, Mode::Asym)?.mean;
    let m32 = run(32, Mode::Asym)?.mean;
    let m64 = run(64, Mode::Asym)?.mean;
    let summary = format!("float {float:.4}, asym 16/32/64 = {m16:.4}/{m32:.4}/{m64:.4}");
    ensure(float >= 0.95, || format!("float below 0.95: {summary}"))?;
    ensure((float - m64).abs() <= 0.05, || {
        format!("64-bit gap above 0.05: {summary}")
    })?;
    ensure(m64 >= m32 && m32 >= m16 - 0.02, || {
        format!("not monotone: {summary}")
    })?;
    Ok(summary)
}

fn p7_ablation() -> Check {
    let set =
        synth::generate(&ClusterSpec::anisotropic(250, 2.0, 42)).map_err(|e| e.to_string())?;
    let split = synth::split(&set.embeddings, &set.labels, 0.2, 0).map_err(|e| e.to_string())?;
    let n = split.database.n();
    let bench = Benchmark::new(
        split.database.clone(),
        split.database_labels,
        split.queries,
        split.query_labels,
        n,
    )
    .map_err(|e| e.to_string())?;
    let corpora = Corpora {
        train: &split.database,
        global: None,
        flags: PreprocessFlags::default(),
    };
    let run = |v| {
        run_seeds(&bench, corpora, v, 16, &seeds(), Mode::Asym)
            .map(|r| r.mean)
            .map_err(|e| e.to_string())
    };
    let full = run(Variant::Full)?;
    let no_pca = run(Variant::NoPca)?;
    let no_rot = run(Variant::NoRotation)?;
    let summary = format!("16 bits: full {full:.4}, no-pca {no_pca:.4}, no-rotation {no_rot:.4}");
    ensure(full - no_pca >= 0.05, || {
        format!("gap to no-pca below 0.05: {summary}")
    })?;
    ensure(full >= no_rot, || format!("no-rotation ahead: {summary}"))?;
    Ok(summary)
}

fn p8_asym_vs_sym(s: &P6Setup) -> Check {
    let corpora = Corpora {
        train: &s.train,
        global: None,
        flags: PreprocessFlags::default(),
    };
    let run = |mode| {
        run_seeds(&s.bench, corpora, Variant::Full, 16, &seeds(), mode)
            .map(|r| r.mean)
            .map_err(|e| e.to_string())
    };
    let asym = run(Mode::Asym)?;
    let sym = run(Mode::Sym)?;
    let summary = format!("16 bits: asym {asym:.4}, sym {sym:.4}");
    ensure(asym >= sym, || summary.clone())?;
    Ok(summary)
}

fn p9_angle_link() -> Check {
    let d = 256;
    let mut rng = rng(9);
    let model = HashModel::from_parts(
        PreprocessFlags {
            l2_normalize: true,
            mean_center: false,
        },
        vec![0.0; d],
        DenseMatrix::identity(d),
        linalg::random_orthogonal(d, 9).map_err(|e| e.to_string())?,
        9,
    )
    .map_err(|e| e.to_string())?;
    let unit = |rng: &mut rand_chacha::ChaCha8Rng| {
        let v: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / norm).collect::<Vec<f64>>()
    };
    let mut lines = Vec::new();
    for deg in [30.0f64, 60.0, 90.0] {
        let theta = deg.to_radians();
        let pairs = 2000;
        let mut fractions = Vec::with_capacity(pairs);
        for _ in 0..pairs {
            let x = unit(&mut rng);
            let w = unit(&mut rng);
            let dot: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
            let perp: Vec<f64> = w.iter().zip(&x).map(|(wi, xi)| wi - dot * xi).collect();
            let pn = perp.iter().map(|v| v * v).sum::<f64>().sqrt();
            let y: Vec<f32> = x
                .iter()
                .zip(&perp)
                .map(|(xi, pi)| (theta.cos() * xi + theta.sin() * pi / pn) as f32)
                .collect();
            let xf: Vec<f32> = x.iter().map(|&v| v as f32).collect();
            let hx = model.encode(&xf).map_err(|e| e.to_string())?;
            let hy = model.encode(&y).map_err(|e| e.to_string())?;
            fractions.push(hamming(&hx, &hy).unwrap() as f64 / d as f64);
        }
        let (mean, std) = eval::mean_std(&fractions);
        let se = std * (pairs as f64 / (pairs as f64 - 1.0)).sqrt() / (pairs as f64).sqrt();
        let target = theta / std::f64::consts::PI;
        ensure((mean - target).abs() <= 3.0 * se, || {
            format!(
                "θ={deg}°: mean {mean:.5} vs {target:.5}, 3·se {:.5}",
                3.0 * se
            )
        })?;
        lines.push(format!("{deg}°: {mean:.4} vs {target:.4}"));
    }
    Ok(lines.join(", "))
}

struct Fixture {
    name: &'static str,
    bytes: Vec<u8>,
    header: usize,
    decode: fn(&[u8]) -> Result<Vec<u8>, binhash::FormatError>,
}

fn fixtures() -> Result<Vec<Fixture>, String> {
    let mut rng = rng(10);
    let emb = EmbeddingMatrix::new(6, 8, (0..48).map(|_| normal(&mut rng) as f32).collect())
        .map_err(|e| e.to_string())?;
    let model =
        binhash::hasher::fit(&emb, 4, 7, PreprocessFlags::default()).map_err(|e| e.to_string())?;
    let single = LabelSet::single(4, &[0, 1, 2, 3, 3, 0]).unwrap();
    let multi = LabelSet::new(
        8,
        vec![
            vec![0, 7],
            vec![1],
            vec![2, 3, 4],
            vec![5, 6, 7],
            vec![7],
            vec![0],
        ],
    )
    .unwrap();
    let codes64 = CodeDatabase::from_codes(
        64,
        &(0..5)
            .map(|_| random_code(&mut rng, 64))
            .collect::<Vec<_>>(),
    )
    .unwrap();
    let codes16 = CodeDatabase::from_codes(
        16,
        &(0..5)
            .map(|_| random_code(&mut rng, 16))
            .collect::<Vec<_>>(),
    )
    .unwrap();

    fn hbem(b: &[u8]) -> Result<Vec<u8>, binhash::FormatError> {
        io::decode_hbem(b).map(|x| io::encode_hbem(&x))
    }
    fn hblb(b: &[u8]) -> Result<Vec<u8>, binhash::FormatError> {
        io::decode_hblb(b).map(|(l, e)| io::encode_hblb(&l, e).unwrap())
    }
    fn hbmd(b: &[u8]) -> Result<Vec<u8>, binhash::FormatError> {
        io::decode_hbmd(b).map(|m| io::encode_hbmd(&m))
    }
    fn hbcd(b: &[u8]) -> Result<Vec<u8>, binhash::FormatError> {
        io::decode_hbcd(b).map(|c| io::encode_hbcd(&c))
    }
    Ok(vec![
        Fixture {
            name: "HBEM",
            bytes: io::encode_hbem(&emb),
            header: io::HBEM_HEADER,
            decode: hbem,
        },
        Fixture {
            name: "HBLB/multi-hot",
            bytes: io::encode_hblb(&multi, LabelEncoding::MultiHot).unwrap(),
            header: io::HBLB_HEADER,
            decode: hblb,
        },
        Fixture {
            name: "HBLB/class-id",
            bytes: io::encode_hblb(&single, LabelEncoding::ClassId).unwrap(),
            header: io::HBLB_HEADER,
            decode: hblb,
        },
        Fixture {
            name: "HBMD",
            bytes: io::encode_hbmd(&model),
            header: io::HBMD_HEADER,
            decode: hbmd,
        },
        Fixture {
            name: "HBCD/k=64",
            bytes: io::encode_hbcd(&codes64),
            header: io::HBCD_HEADER,
            decode: hbcd,
        },
        Fixture {
            name: "HBCD/k=16",
            bytes: io::encode_hbcd(&codes16),
            header: io::HBCD_HEADER,
            decode: hbcd,
        },
    ])
}

fn p10_format_fuzz() -> Check {
    let mut accepted: Vec<String> = Vec::new();
    let mut tried = 0usize;
    for f in fixtures()? {
        let again =
            (f.decode)(&f.bytes).map_err(|e| format!("{}: valid file rejected: {e}", f.name))?;
        ensure(again == f.bytes, || {
            format!("{}: round-trip not byte-stable", f.name)
        })?;
        let mut offsets = Vec::new();
        let mut count = 0;
        for off in 0..f.header {
            let mut hit = false;
            for v in 0..=255u8 {
                if v == f.bytes[off] {
                    continue;
                }
                let mut m = f.bytes.clone();
                m[off] = v;
                tried += 1;
                if (f.decode)(&m).is_ok() {
                    count += 1;
                    hit = true;
                }
            }
            if hit {
                offsets.push(off);
            }
        }
        if count > 0 {
            accepted.push(format!("{} {count} at offsets {offsets:?}", f.name));
        }
    }
    if accepted.is_empty() {
        Ok(format!(
            "{tried} mutations rejected; round-trips byte-stable"
        ))
    } else {
        Err(format!(
            "{tried} mutations, accepted as valid: {}",
            accepted.join("; ")
        ))
    }
}

fn main() {
    let mut failures = 0;
    let mut report = |name: &str, limit: Duration, f: &mut dyn FnMut() -> Check| {
        let t = Instant::now();
        let outcome = f();
        let elapsed = t.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if elapsed <= limit => (true, d),
            Ok(d) => (false, format!("{d} (over time budget {limit:?})")),
            Err(d) => (false, d),
        };
        if !ok {
            failures += 1;
        }
        println!(
            "{} {name} [{elapsed:.2?}] {detail}",
            if ok { "PASS" } else { "FAIL" }
        );
    };

    report(
        "P1 orthogonality",
        Duration::from_secs(5),
        &mut p1_orthogonality,
    );
    report("P2 svd-oracle", Duration::from_secs(30), &mut p2_svd_oracle);
    report(
        "P3 sign-equivalence",
        Duration::from_secs(5),
        &mut p3_sign_equivalence,
    );
    report(
        "P4 asymmetric-reduction",
        Duration::from_secs(10),
        &mut p4_asymmetric_reduction,
    );
    report("P5 map-oracle", Duration::from_secs(5), &mut p5_map_oracle);
    let t = Instant::now();
    let setup = p6_setup();
    let setup_time = t.elapsed();
    match &setup {
        Ok(s) => {
            report(
                "P6 end-to-end",
                Duration::from_secs(120) - setup_time,
                &mut || p6_end_to_end(s),
            );
            report("P8 asym-vs-sym", Duration::from_secs(60), &mut || {
                p8_asym_vs_sym(s)
            });
        }
        Err(e) => {
            report("P6 end-to-end", Duration::MAX, &mut || Err(e.clone()));
            report("P8 asym-vs-sym", Duration::MAX, &mut || Err(e.clone()));
        }
    }
    report("P7 ablation", Duration::from_secs(120), &mut p7_ablation);
    report("P9 angle-link", Duration::from_secs(30), &mut p9_angle_link);
    report(
        "P10 format-fuzz",
        Duration::from_secs(30),
        &mut p10_format_fuzz,
    );

    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
