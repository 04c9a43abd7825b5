use binhash::linalg;
use binhash::synth::{self, ClusterSpec};

#[test]
fn zero_noise_items_equal_centroids() {
    let spec = ClusterSpec {
        per_class: 1,
        intra_spread: 1e-12,
        ..ClusterSpec::benchmark(1, 3)
    };
    let set = synth::generate(&spec).unwrap();
    for (c, row) in set.embeddings.rows().enumerate() {
        for (a, b) in row.iter().zip(set.centroids.row(c)) {
            assert!((*a as f64 - *b as f32 as f64).abs() <= 1e-9);
        }
    }
}

#[test]
fn same_seed_same_output() {
    let spec = ClusterSpec::benchmark(20, 9);
    let (a, b) = (
        synth::generate(&spec).unwrap(),
        synth::generate(&spec).unwrap(),
    );
    assert_eq!(a.embeddings, b.embeddings);
    assert_eq!(a.labels, b.labels);
    let other = synth::generate(&ClusterSpec::benchmark(20, 10)).unwrap();
    assert_ne!(a.embeddings, other.embeddings);
}

#[test]
fn centroids_sit_on_the_scaled_sphere() {
    let spec = ClusterSpec {
        inter_scale: 2.5,
        ..ClusterSpec::benchmark(2, 4)
    };
    let set = synth::generate(&spec).unwrap();
    for c in 0..spec.n_classes {
        let norm = set
            .centroids
            .row(c)
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        assert!((norm - 2.5).abs() < 1e-12);
    }
}

#[test]
fn classes_are_separable_by_nearest_centroid() {
    let set = synth::generate(&ClusterSpec::benchmark(200, 42)).unwrap();
    // Independent oracle: classify each row by its closest centroid.
    let mut correct = 0;
    for (i, row) in set.embeddings.rows().enumerate() {
        let best = (0..10)
            .min_by(|&a, &b| {
                let da: f64 = row
                    .iter()
                    .zip(set.centroids.row(a))
                    .map(|(x, c)| (*x as f64 - c).powi(2))
                    .sum();
                let db: f64 = row
                    .iter()
                    .zip(set.centroids.row(b))
                    .map(|(x, c)| (*x as f64 - c).powi(2))
                    .sum();
                da.total_cmp(&db)
            })
            .unwrap();
        if best as u32 == set.labels.row(i)[0] {
            correct += 1;
        }
    }
    let acc = correct as f64 / set.embeddings.n() as f64;
    assert!(acc >= 0.99, "{acc}");
    assert!((synth::nearest_centroid_accuracy(&set) - acc).abs() < 1e-12);
}

#[test]
fn variance_concentrates_in_intrinsic_subspace() {
    let set = synth::generate(&ClusterSpec::benchmark(40, 5)).unwrap();
    let x = set.embeddings.to_dense();
    let (n, d) = (x.rows(), x.cols());
    let mean: Vec<f64> = (0..d)
        .map(|j| (0..n).map(|i| x[(i, j)]).sum::<f64>() / n as f64)
        .collect();
    let centered = linalg::DenseMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
    let s = linalg::truncated_svd(&centered, n.min(d)).unwrap().s;
    let total: f64 = s.iter().map(|v| v * v).sum();
    let top: f64 = s[..40].iter().map(|v| v * v).sum();
    assert!(top / total >= 0.95, "{}", top / total);
}

#[test]
fn labels_are_exactly_balanced() {
    let spec = ClusterSpec::benchmark(37, 1);
    let set = synth::generate(&spec).unwrap();
    let mut counts = [0usize; 10];
    for row in set.labels.rows() {
        counts[row[0] as usize] += 1;
    }
    assert!(counts.iter().all(|&c| c == 37));
}

#[test]
fn split_is_a_stratified_partition() {
    let set = synth::generate(&ClusterSpec::benchmark(30, 2)).unwrap();
    let s = synth::split(&set.embeddings, &set.labels, 0.2, 7).unwrap();
    let mut all: Vec<usize> = s.database_ids.iter().chain(&s.query_ids).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..300).collect::<Vec<_>>());
    assert_eq!(s.queries.n(), 60);
    for c in 0..10u32 {
        assert_eq!(
            s.query_labels.rows().iter().filter(|r| r[0] == c).count(),
            6
        );
    }
    for (k, &id) in s.query_ids.iter().enumerate() {
        assert_eq!(s.queries.row(k), set.embeddings.row(id));
    }
    let again = synth::split(&set.embeddings, &set.labels, 0.2, 7).unwrap();
    assert_eq!(again.query_ids, s.query_ids);
}

#[test]
fn split_of_two_per_class() {
    let set = synth::generate(&ClusterSpec::benchmark(2, 2)).unwrap();
    let s = synth::split(&set.embeddings, &set.labels, 0.5, 0).unwrap();
    assert_eq!((s.database.n(), s.queries.n()), (10, 10));
    let single = synth::generate(&ClusterSpec::benchmark(1, 2)).unwrap();
    assert!(synth::split(&single.embeddings, &single.labels, 0.5, 0).is_err());
    assert!(synth::split(&set.embeddings, &set.labels, 1.0, 0).is_err());
}

#[test]
fn multilabel_rows_have_one_to_three_labels() {
    let set = synth::generate_multilabel(&ClusterSpec::benchmark(20, 3), 3).unwrap();
    let mut sizes = [0usize; 4];
    for row in set.labels.rows() {
        assert!((1..=3).contains(&row.len()));
        sizes[row.len()] += 1;
    }
    assert!(sizes[1] > 0 && sizes[2] > 0 && sizes[3] > 0);
}
