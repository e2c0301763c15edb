//! Datasets, neighbor-enhanced mini-batches and input augmentation.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::binio::{self, Reader, Writer};
use crate::error::{Error, Result};
use crate::knn::{sample_neighbors, NeighborIndex};
use crate::linalg::EmbeddingMatrix;
use crate::seeded_rng;

pub const DATASET_MAGIC: &[u8; 4] = b"CSSD";

/// Raw input vectors with optional class labels.
///
/// Labels exist for evaluation only; distillation sees a [`TrainingView`].
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: EmbeddingMatrix,
    labels: Option<Vec<usize>>,
}

/// Label-free view of a dataset handed to the training loop.
#[derive(Debug, Clone, Copy)]
pub struct TrainingView<'a> {
    inputs: &'a EmbeddingMatrix,
}

impl<'a> TrainingView<'a> {
    pub fn inputs(&self) -> &'a EmbeddingMatrix {
        self.inputs
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl Dataset {
    pub fn new(inputs: EmbeddingMatrix, labels: Option<Vec<usize>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != inputs.rows() {
                return Err(Error::shape(format!(
                    "{} labels for {} samples",
                    l.len(),
                    inputs.rows()
                )));
            }
        }
        Ok(Self { inputs, labels })
    }

    pub fn unlabeled(inputs: EmbeddingMatrix) -> Self {
        Self { inputs, labels: None }
    }

    pub fn inputs(&self) -> &EmbeddingMatrix {
        &self.inputs
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn training_view(&self) -> TrainingView<'_> {
        TrainingView { inputs: &self.inputs }
    }

    /// Labels, or a usage error naming what needed them.
    pub fn require_labels(&self, purpose: &str) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::invalid(format!("{purpose} requires a labeled dataset")))
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let inputs = self.inputs.select_rows(indices)?;
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        Ok(Self { inputs, labels })
    }

    /// Seeded split into `(train, test)` with `round(n · test_fraction)` test samples.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        let n = self.len();
        let n_test = (n as f64 * test_fraction).round() as usize;
        if !(0.0..1.0).contains(&test_fraction) || n_test == 0 || n_test >= n {
            return Err(Error::invalid(format!(
                "test fraction {test_fraction} leaves an empty split of {n} samples"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut seeded_rng(seed));
        let (test, train) = order.split_at(n_test);
        Ok((self.subset(train)?, self.subset(test)?))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new(DATASET_MAGIC);
        w.u64(self.len() as u64);
        w.u64(self.dim() as u64);
        w.u8(self.labels.is_some() as u8);
        w.f32s(self.inputs.as_slice());
        if let Some(labels) = &self.labels {
            for &l in labels {
                w.i64(l as i64);
            }
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, DATASET_MAGIC)?;
        let n = r.u64()?;
        let dim = r.u64()?;
        let has_labels = match r.u8()? {
            0 => false,
            1 => true,
            v => return Err(Error::format(format!("has_labels must be 0 or 1, found {v}"))),
        };
        let count = n
            .checked_mul(dim)
            .ok_or_else(|| Error::format("dataset dimensions overflow"))?;
        r.check_remaining(count, 4)?;
        let values = r.f32s(binio::to_usize(count, "value count")?)?;
        let labels = if has_labels {
            r.check_remaining(n, 8)?;
            let mut labels = Vec::with_capacity(n as usize);
            for _ in 0..n {
                let l = r.i64()?;
                if l < 0 {
                    return Err(Error::format(format!("negative label {l}")));
                }
                labels.push(binio::to_usize(l as u64, "label")?);
            }
            Some(labels)
        } else {
            None
        };
        r.finish()?;
        let inputs = EmbeddingMatrix::new(
            binio::to_usize(n, "n")?,
            binio::to_usize(dim, "dim")?,
            values,
        )
        .map_err(|e| Error::format(format!("invalid dataset: {e}")))?;
        Self::new(inputs, labels)
    }
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    binio::write_atomic(path, &ds.encode())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::decode(&binio::read_file(path)?)
}

/// Anchor indices and the neighbor-enhanced batch built around them.
///
/// Layout of `enhanced_indices`: all anchors first, then one block of `k`
/// neighbors per anchor in anchor order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchPlan {
    pub anchor_indices: Vec<usize>,
    pub enhanced_indices: Vec<usize>,
}

/// One epoch of anchors: a seeded permutation of `0..n` cut into batches of
/// `b`, keeping the short final batch.
pub fn epoch_batches<R: Rng + ?Sized>(n: usize, b: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    if b == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    if b > n {
        return Err(Error::invalid(format!("batch size {b} exceeds {n} samples")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    Ok(order.chunks(b).map(<[usize]>::to_vec).collect())
}

/// Appends `k` neighbors per anchor, freshly sampled from the anchor's pool.
pub fn compose_batch<R: Rng + ?Sized>(
    anchors: &[usize],
    index: &NeighborIndex,
    k: usize,
    rng: &mut R,
) -> Result<BatchPlan> {
    if k > index.pool() {
        return Err(Error::invalid(format!("k exceeds pool: k={k}, pool={}", index.pool())));
    }
    let mut enhanced = Vec::with_capacity(anchors.len() * (1 + k));
    enhanced.extend_from_slice(anchors);
    for &a in anchors {
        enhanced.extend(sample_neighbors(index, a, k, rng)?);
    }
    Ok(BatchPlan {
        anchor_indices: anchors.to_vec(),
        enhanced_indices: enhanced,
    })
}

/// Input perturbation applied to each enhanced batch before both networks see it.
pub trait Augmenter {
    fn augment(&self, x: &EmbeddingMatrix, rng: &mut dyn rand::RngCore) -> EmbeddingMatrix;
}

/// `X + sigma·G` with `G` i.i.d. standard normal.
pub fn augment<R: Rng + ?Sized>(x: &EmbeddingMatrix, sigma: f64, rng: &mut R) -> Result<EmbeddingMatrix> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid("augmentation sigma must be ≥ 0"));
    }
    let mut out = x.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    for v in out.as_mut_slice() {
        let g: f64 = rng.sample(StandardNormal);
        *v += sigma * g;
    }
    Ok(out)
}

/// Additive Gaussian noise with a separate standard deviation per input dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianNoise {
    pub sigma: Vec<f64>,
}

impl GaussianNoise {
    /// Noise scaled to `relative_sigma` times each dimension's spread in `inputs`.
    pub fn relative_to(inputs: &EmbeddingMatrix, relative_sigma: f64) -> Self {
        let (_, std) = inputs.col_mean_std();
        Self {
            sigma: std.into_iter().map(|s| relative_sigma * s).collect(),
        }
    }
}

impl Augmenter for GaussianNoise {
    fn augment(&self, x: &EmbeddingMatrix, rng: &mut dyn rand::RngCore) -> EmbeddingMatrix {
        let mut out = x.clone();
        if self.sigma.iter().all(|&s| s == 0.0) {
            return out;
        }
        for i in 0..out.rows() {
            for (v, s) in out.row_mut(i).iter_mut().zip(&self.sigma) {
                let g: f64 = rng.sample(StandardNormal);
                *v += s * g;
            }
        }
        out
    }
}

/// Labeled Gaussian blobs: `classes` random centers in `dim` dimensions with
/// unit-variance noise around each, samples assigned round-robin then shuffled.
pub fn gaussian_clusters(n: usize, classes: usize, dim: usize, center_scale: f64, seed: u64) -> Result<Dataset> {
    if n == 0 || classes == 0 || dim == 0 {
        return Err(Error::invalid("cluster dataset needs n, classes and dim ≥ 1"));
    }
    let mut rng = seeded_rng(seed);
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|_| {
            (0..dim)
                .map(|_| center_scale * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    labels.shuffle(&mut rng);
    let mut data = Vec::with_capacity(n * dim);
    for &c in &labels {
        for &mu in &centers[c] {
            data.push(mu + rng.sample::<f64, _>(StandardNormal));
        }
    }
    Dataset::new(EmbeddingMatrix::new(n, dim, data)?, Some(labels))
}
