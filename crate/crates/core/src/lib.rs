//! Unsupervised knowledge distillation by feature and space similarity.
//!
//! A student network learns to mimic a frozen teacher's embeddings with no
//! labels. The objective combines a per-sample cosine term with the same
//! cosine taken over the transposed batch (one cosine per embedding
//! dimension), and batches are enriched with each anchor's nearest
//! neighbors in teacher space, found once offline.
//!
//! ```
//! use coss::linalg::EmbeddingMatrix;
//! use coss::loss::{loss_co, loss_ss};
//!
//! let a = EmbeddingMatrix::from_rows(&[[1.0, 2.0], [3.0, -1.0]]).unwrap();
//! assert!((loss_co(&a, &a).unwrap() + 1.0).abs() < 1e-12);
//! assert!((loss_ss(&a, &a).unwrap() + 1.0).abs() < 1e-12);
//! ```

pub mod binio;
pub mod cli;
pub mod config;
pub mod data;
pub mod distill;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod knn;
pub mod linalg;
pub mod loss;
pub mod model;
pub mod report;
pub mod synthetic;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::DistillConfig;
pub use data::Dataset;
pub use distill::{distill, Teacher};
pub use error::{Error, Result};
pub use knn::{build_index, NeighborIndex};
pub use linalg::EmbeddingMatrix;
pub use loss::{CossObjective, LossBreakdown};
pub use model::MlpModel;
pub use report::MetricsReport;

/// The generator behind every random draw in the crate.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// An independent stream under the same seed, e.g. one per consumer.
pub fn seeded_stream(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
