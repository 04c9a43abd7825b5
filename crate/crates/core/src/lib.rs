//! Training-free binary hashing for pre-trained embeddings.
//!
//! Embeddings are L2-normalized and mean-centered, reduced to `k` dimensions
//! with PCA, rotated by a Haar-random orthogonal matrix and squashed through a
//! sigmoid into per-bit probabilities. Database items keep the thresholded
//! bits; queries keep their probabilities and are scored against the codes
//! with an asymmetric Hamming similarity.
//!
//! ```
//! use binhash::hasher::{fit, PreprocessFlags};
//! use binhash::index::search_asymmetric;
//! use binhash::synth::{generate, ClusterSpec};
//!
//! let set = generate(&ClusterSpec { per_class: 20, d: 64, intrinsic_dim: 8, ..ClusterSpec::benchmark(20, 7) })?;
//! let model = fit(&set.embeddings, 16, 0, PreprocessFlags::default())?;
//! let db = model.encode_batch(&set.embeddings)?;
//! let query = model.project(set.embeddings.row(3))?;
//! let hits = search_asymmetric(&db, &query, 5)?;
//! assert_eq!(hits.ids.len(), 5);
//! # Ok::<(), binhash::Error>(())
//! ```

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod hasher;
pub mod index;
pub mod io;
pub mod linalg;
pub mod synth;

pub use data::EmbeddingMatrix;
pub use error::{Error, FormatError, Result};
pub use eval::{LabelSet, MetricReport};
pub use hasher::{BitProbabilities, HashModel, PreprocessFlags};
pub use index::{BinaryCode, CodeDatabase, RetrievalResult};
pub use linalg::DenseMatrix;
