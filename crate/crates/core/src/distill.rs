//! The distillation loop and the ablation harnesses built on it.
//!
//! One step: draw anchors, append sampled neighbors, augment the enhanced
//! batch, embed it with the frozen teacher and the student (plus projection
//! head), evaluate the configured loss, backpropagate through the student
//! side only and take an SGD step.

use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{DistillConfig, LossVariant, LrSchedule};
use crate::data::{compose_batch, epoch_batches, Augmenter, Dataset, GaussianNoise, TrainingView};
use crate::error::{Error, Result};
use crate::eval;
use crate::knn::NeighborIndex;
use crate::linalg::EmbeddingMatrix;
use crate::loss::{self, BnParams, LossBreakdown};
use crate::model::{init_model, MlpModel, OptimizerState, ProjectionHead};
use crate::seeded_stream;

// Independent random streams derived from the config seed.
const STREAM_STUDENT_INIT: u64 = 0;
const STREAM_HEAD_INIT: u64 = 1;
const STREAM_BATCH_ORDER: u64 = 2;
const STREAM_NEIGHBORS: u64 = 3;
const STREAM_AUGMENT: u64 = 4;

/// The frozen network being distilled, or its precomputed embeddings.
#[derive(Debug, Clone, PartialEq)]
pub enum Teacher {
    Model(MlpModel),
    /// One embedding row per dataset sample. Cannot see augmented inputs.
    Embeddings(EmbeddingMatrix),
}

impl Teacher {
    pub fn output_dim(&self) -> usize {
        match self {
            Teacher::Model(m) => m.output_dim(),
            Teacher::Embeddings(e) => e.cols(),
        }
    }

    /// Embeddings of the un-augmented dataset.
    pub fn embed_all(&self, inputs: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        match self {
            Teacher::Model(m) => m.predict(inputs),
            Teacher::Embeddings(e) => {
                if e.rows() != inputs.rows() {
                    return Err(Error::shape(format!(
                        "teacher dump has {} rows for {} samples",
                        e.rows(),
                        inputs.rows()
                    )));
                }
                Ok(e.clone())
            }
        }
    }

    fn embed_batch(&self, batch_inputs: &EmbeddingMatrix, indices: &[usize]) -> Result<EmbeddingMatrix> {
        match self {
            Teacher::Model(m) => m.predict(batch_inputs),
            Teacher::Embeddings(e) => e.select_rows(indices),
        }
    }
}

/// One optimizer step as logged.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub batch_rows: usize,
    pub lr: f64,
    pub loss: LossBreakdown,
    /// Raw BN-variant loss; `loss.l_total = beta · bn_loss` when present.
    pub bn_loss: Option<f64>,
}

impl StepRecord {
    /// Whether the logged total agrees with its logged parts.
    pub fn total_is_consistent(&self, tol: f64) -> bool {
        let expected = match self.bn_loss {
            Some(bn) => self.loss.beta * bn,
            None => self.loss.recomputed_total(),
        };
        (self.loss.l_total - expected).abs() <= tol
    }
}

/// End-of-epoch summary. All metrics are label-free.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_l_co: f64,
    pub mean_l_ss: f64,
    pub mean_l_total: f64,
    /// Alignment of the (projected) student with the teacher on clean inputs.
    pub mean_row_cosine: f64,
    pub min_dim_cosine: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunLog {
    pub config: DistillConfig,
    pub config_hash: String,
    pub steps_per_epoch: usize,
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
    /// Not written to any artifact, so reruns stay byte-identical.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl RunLog {
    pub fn final_epoch(&self) -> &EpochRecord {
        self.epochs.last().expect("at least one epoch runs")
    }

    /// One JSON object per line: a header, then steps, then epochs.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let header = serde_json::json!({
            "record": "run",
            "config_hash": self.config_hash,
            "steps_per_epoch": self.steps_per_epoch,
            "config": self.config,
        });
        out.push_str(&header.to_string());
        out.push('\n');
        for s in &self.steps {
            let mut v = serde_json::to_value(s).expect("step serializes");
            v["record"] = "step".into();
            out.push_str(&v.to_string());
            out.push('\n');
        }
        for e in &self.epochs {
            let mut v = serde_json::to_value(e).expect("epoch serializes");
            v["record"] = "epoch".into();
            out.push_str(&v.to_string());
            out.push('\n');
        }
        out
    }
}

/// Everything that receives gradients during distillation. Only `student`
/// survives the run.
struct Trainable {
    student: MlpModel,
    head: Option<ProjectionHead>,
    bn: Option<BnParams>,
}

impl Trainable {
    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = self.student.params_mut();
        if let Some(h) = &mut self.head {
            p.extend(h.0.params_mut());
        }
        if let Some(bn) = &mut self.bn {
            p.push(bn.gamma.as_mut_slice());
            p.push(bn.beta_shift.as_mut_slice());
        }
        p
    }

    fn embed(&self, x: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        let s = self.student.predict(x)?;
        match &self.head {
            Some(h) => h.0.predict(&s),
            None => Ok(s),
        }
    }
}

fn schedule_lr(cfg: &DistillConfig, step: usize, total: usize) -> f64 {
    match cfg.train.schedule {
        LrSchedule::Constant => cfg.train.lr,
        LrSchedule::Cosine => {
            let t = step as f64 / total as f64;
            cfg.train.lr * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
        }
    }
}

/// Trains a fresh student against `teacher` and returns it without its
/// projection head, together with the run log.
///
/// Deterministic for a fixed config, dataset, teacher and index.
pub fn distill(
    config: &DistillConfig,
    data: TrainingView<'_>,
    teacher: &Teacher,
    index: &NeighborIndex,
) -> Result<(MlpModel, RunLog)> {
    let started = Instant::now();
    config.validate()?;
    let inputs = data.inputs();
    let n = inputs.rows();
    if index.n() != n {
        return Err(Error::invalid(format!(
            "index covers {} samples but the dataset has {n}",
            index.n()
        )));
    }
    let k = config.neighbors.k;
    if k > index.pool() {
        return Err(Error::config(format!(
            "k ≤ pool (k={k}, index pool={})",
            index.pool()
        )));
    }
    let b = config.train.batch_size;
    if b > n {
        return Err(Error::config(format!("batch_size ≤ N (batch_size={b}, N={n})")));
    }
    if let Teacher::Model(m) = teacher {
        if m.input_dim() != inputs.cols() {
            return Err(Error::shape(format!(
                "teacher expects {} inputs, dataset has {}",
                m.input_dim(),
                inputs.cols()
            )));
        }
    }
    if matches!(teacher, Teacher::Embeddings(_)) && config.augment.sigma != 0.0 {
        return Err(Error::config("aug_sigma = 0 when the teacher is an embedding dump"));
    }
    let clean_teacher = teacher.embed_all(inputs)?;
    let d_t = teacher.output_dim();
    let d_s = config.student.output_dim;

    let student = init_model(
        &config.student.model_spec(inputs.cols()),
        seeded_stream_seed(config.seed, STREAM_STUDENT_INIT),
    )?;
    let head = if d_s != d_t {
        Some(ProjectionHead::new(
            d_s,
            d_t,
            seeded_stream_seed(config.seed, STREAM_HEAD_INIT),
        )?)
    } else {
        None
    };
    let bn = (config.loss.variant == LossVariant::Bn).then(|| BnParams::identity(d_t));
    let mut trainable = Trainable { student, head, bn };
    let objective = config.objective();

    let augmenter = GaussianNoise::relative_to(inputs, config.augment.sigma);
    let mut order_rng = seeded_stream(config.seed, STREAM_BATCH_ORDER);
    let mut neighbor_rng = seeded_stream(config.seed, STREAM_NEIGHBORS);
    let mut aug_rng = seeded_stream(config.seed, STREAM_AUGMENT);

    let steps_per_epoch = n.div_ceil(b);
    let total_steps = steps_per_epoch * config.train.epochs;
    let mut optimizer = OptimizerState::new(config.train.lr, config.train.momentum, config.train.weight_decay);
    let mut steps = Vec::with_capacity(total_steps);
    let mut epochs = Vec::with_capacity(config.train.epochs);

    for epoch in 0..config.train.epochs {
        let batches = epoch_batches(n, b, &mut order_rng)?;
        let first_step = steps.len();
        for anchors in &batches {
            let step = steps.len();
            let plan = compose_batch(anchors, index, k, &mut neighbor_rng)?;
            let clean = inputs.select_rows(&plan.enhanced_indices)?;
            let x = augmenter.augment(&clean, &mut aug_rng);
            let a_t = teacher.embed_batch(&x, &plan.enhanced_indices)?;

            let (s_out, s_cache) = trainable.student.forward(&x)?;
            let (a_s, h_cache) = match &trainable.head {
                Some(h) => {
                    let (p, c) = h.0.forward(&s_out)?;
                    (p, Some(c))
                }
                None => (s_out, None),
            };

            let (record_loss, bn_loss, grad_a_s, bn_grads) = match objective {
                Some(obj) => {
                    let (br, g) = obj.evaluate(&a_s, &a_t)?;
                    (br, None, g, None)
                }
                None => {
                    let bn = trainable.bn.as_ref().expect("bn variant carries BN parameters");
                    let out = loss::loss_bn(&a_s, &a_t, bn)?;
                    let beta = config.loss.beta;
                    let mut g = out.grad_input;
                    g.as_mut_slice().iter_mut().for_each(|v| *v *= beta);
                    let gg: Vec<f64> = out.grad_gamma.iter().map(|v| v * beta).collect();
                    let gb: Vec<f64> = out.grad_beta_shift.iter().map(|v| v * beta).collect();
                    let br = LossBreakdown {
                        l_co: loss::loss_co(&a_s, &a_t)?,
                        l_ss: loss::loss_ss(&a_s, &a_t)?,
                        l_total: beta * out.loss,
                        lambda: 0.0,
                        beta,
                        co_weight: 0.0,
                    };
                    (br, Some(out.loss), g, Some((gg, gb)))
                }
            };
            if !record_loss.l_total.is_finite() {
                return Err(Error::Numerical(format!("loss became non-finite at step {step}")));
            }

            let (head_grads, grad_s_out) = match (&trainable.head, &h_cache) {
                (Some(h), Some(c)) => {
                    let (hg, gi) = h.0.backward(c, &grad_a_s)?;
                    (Some(hg), gi)
                }
                _ => (None, grad_a_s),
            };
            let (student_grads, _) = trainable.student.backward(&s_cache, &grad_s_out)?;

            let mut grads: Vec<&[f64]> = student_grads.slices();
            if let Some(hg) = &head_grads {
                grads.extend(hg.slices());
            }
            if let Some((gg, gb)) = &bn_grads {
                grads.push(gg);
                grads.push(gb);
            }
            if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
                return Err(Error::Numerical(format!("gradient became non-finite at step {step}")));
            }
            optimizer.lr = schedule_lr(config, step, total_steps);
            optimizer.step(&mut trainable.params_mut(), &grads)?;

            steps.push(StepRecord {
                epoch,
                step,
                batch_rows: plan.enhanced_indices.len(),
                lr: optimizer.lr,
                loss: record_loss,
                bn_loss,
            });
        }

        let epoch_steps = &steps[first_step..];
        let mean = |f: fn(&StepRecord) -> f64| epoch_steps.iter().map(f).sum::<f64>() / epoch_steps.len() as f64;
        let diag = eval::alignment_diagnostics(&trainable.embed(inputs)?, &clean_teacher)?;
        epochs.push(EpochRecord {
            epoch,
            mean_l_co: mean(|s| s.loss.l_co),
            mean_l_ss: mean(|s| s.loss.l_ss),
            mean_l_total: mean(|s| s.loss.l_total),
            mean_row_cosine: diag.mean_row_cosine,
            min_dim_cosine: diag.min_dim_cosine(),
        });
    }

    let log = RunLog {
        config: config.clone(),
        config_hash: config.hash(),
        steps_per_epoch,
        steps,
        epochs,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    Ok((trainable.student, log))
}

fn seeded_stream_seed(seed: u64, stream: u64) -> u64 {
    use rand::Rng;
    seeded_stream(seed, stream).random()
}

/// How distilled representations are scored in the ablation tables: cosine
/// k-NN accuracy with labels used only here.
#[derive(Debug, Clone, Copy)]
pub struct KnnProtocol<'a> {
    /// Labeled reference set.
    pub bank: &'a Dataset,
    /// Labeled queries; `None` scores the bank leave-one-out.
    pub queries: Option<&'a Dataset>,
    pub k_eval: usize,
}

impl KnnProtocol<'_> {
    pub fn accuracy_with(&self, embed: impl Fn(&EmbeddingMatrix) -> Result<EmbeddingMatrix>) -> Result<f64> {
        let bank_labels = self.bank.require_labels("k-NN evaluation")?;
        let bank_emb = embed(self.bank.inputs())?;
        match self.queries {
            Some(q) => eval::knn_classify(
                &bank_emb,
                bank_labels,
                &embed(q.inputs())?,
                q.require_labels("k-NN evaluation")?,
                self.k_eval,
            ),
            None => eval::knn_classify_leave_one_out(&bank_emb, bank_labels, self.k_eval),
        }
    }

    pub fn model_accuracy(&self, model: &MlpModel) -> Result<f64> {
        self.accuracy_with(|x| model.predict(x))
    }

    pub fn teacher_accuracy(&self, teacher: &Teacher) -> Result<f64> {
        match teacher {
            Teacher::Model(m) => self.model_accuracy(m),
            Teacher::Embeddings(_) => Err(Error::invalid(
                "teacher accuracy needs a teacher model (an embedding dump has no queries' embeddings)",
            )),
        }
    }
}

/// Which hyperparameter an ablation table sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationGrid {
    Components,
    Lambda,
}

impl AblationGrid {
    pub fn name(self) -> &'static str {
        match self {
            AblationGrid::Components => "components",
            AblationGrid::Lambda => "lambda",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub label: String,
    pub variant: LossVariant,
    pub lambda: f64,
    pub config_hash: String,
    /// Config hash with the swept key removed; identical across a table.
    pub base_hash: String,
    pub accuracy: f64,
    pub final_loss: f64,
    /// SHA-256 of the student checkpoint bytes.
    pub student_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationTable {
    pub grid: AblationGrid,
    pub rows: Vec<AblationRow>,
}

/// The λ grid of the reference ablation.
pub const DEFAULT_LAMBDAS: [f64; 4] = [0.0, 0.25, 0.5, 1.0];

fn run_arm(
    label: String,
    cfg: &DistillConfig,
    swept_key: &str,
    data: &Dataset,
    teacher: &Teacher,
    index: &NeighborIndex,
    protocol: &KnnProtocol<'_>,
) -> Result<AblationRow> {
    let (student, log) = distill(cfg, data.training_view(), teacher, index)?;
    let digest = Sha256::digest(student.encode());
    Ok(AblationRow {
        label,
        variant: cfg.loss.variant,
        lambda: cfg.objective().map_or(cfg.loss.lambda, |o| o.lambda),
        config_hash: cfg.hash(),
        base_hash: cfg.hash_without(swept_key),
        accuracy: protocol.model_accuracy(&student)?,
        final_loss: log.final_epoch().mean_l_total,
        student_digest: digest.iter().map(|b| format!("{b:02x}")).collect(),
    })
}

/// Three runs differing only in the loss variant: feature only, space only, combined.
pub fn ablate_components(
    base: &DistillConfig,
    data: &Dataset,
    teacher: &Teacher,
    index: &NeighborIndex,
    protocol: &KnnProtocol<'_>,
) -> Result<AblationTable> {
    base.validate()?;
    let rows = [LossVariant::CoOnly, LossVariant::SsOnly, LossVariant::Coss]
        .into_iter()
        .map(|variant| {
            let mut cfg = base.clone();
            cfg.loss.variant = variant;
            run_arm(variant.name().to_string(), &cfg, "loss.variant", data, teacher, index, protocol)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationTable {
        grid: AblationGrid::Components,
        rows,
    })
}

/// One combined-objective run per λ, all else fixed.
pub fn ablate_lambda(
    base: &DistillConfig,
    lambdas: &[f64],
    data: &Dataset,
    teacher: &Teacher,
    index: &NeighborIndex,
    protocol: &KnnProtocol<'_>,
) -> Result<AblationTable> {
    base.validate()?;
    if lambdas.is_empty() {
        return Err(Error::invalid("lambda grid is empty"));
    }
    let rows = lambdas
        .iter()
        .map(|&lambda| {
            let mut cfg = base.clone();
            cfg.loss.variant = LossVariant::Coss;
            cfg.loss.lambda = lambda;
            cfg.validate()?;
            run_arm(format!("lambda={lambda}"), &cfg, "loss.lambda", data, teacher, index, protocol)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationTable {
        grid: AblationGrid::Lambda,
        rows,
    })
}
