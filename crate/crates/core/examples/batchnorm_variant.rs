//! The batch-normalization distillation variant: the hand-computed example
//! and a short training run compared with the combined objective.
//!
//! cargo run --release --example batchnorm_variant

use coss::config::LossVariant;
use coss::distill::{distill, KnnProtocol, Teacher};
use coss::knn::build_index;
use coss::linalg::EmbeddingMatrix;
use coss::loss::{loss_bn, BnParams, BN_EPS};
use coss::synthetic::{benchmark_config, DeskBenchmark};

fn main() -> coss::Result<()> {
    let x_s = EmbeddingMatrix::from_rows(&[[1.0], [3.0]])?;
    let x_t = EmbeddingMatrix::from_rows(&[[-1.0], [3.0]])?;
    let p = BnParams {
        gamma: vec![2.0],
        beta_shift: vec![1.0],
        eps: BN_EPS,
    };
    let hand = loss_bn(&x_s, &x_t, &p)?;
    println!("hand example loss {} grad_gamma {:?} grad_shift {:?}", hand.loss, hand.grad_gamma, hand.grad_beta_shift);

    let bench = DeskBenchmark::generate(0)?;
    let teacher = Teacher::Model(bench.teacher.clone());
    let index = build_index(&teacher.embed_all(bench.train.inputs())?, 16)?;
    let protocol = KnnProtocol {
        bank: &bench.train,
        queries: Some(&bench.test),
        k_eval: 5,
    };
    for variant in [LossVariant::Bn, LossVariant::Coss] {
        let mut cfg = benchmark_config(0);
        cfg.loss.variant = variant;
        cfg.student.output_dim = 16;
        cfg.train.epochs = 20;
        let (student, log) = distill(&cfg, bench.train.training_view(), &teacher, &index)?;
        let last = log.final_epoch();
        println!(
            "{:<5} acc {:.4}  loss {:.4}  row cos {:.4}  min dim cos {:.4}",
            variant.name(),
            protocol.model_accuracy(&student)?,
            last.mean_l_total,
            last.mean_row_cosine,
            last.min_dim_cosine
        );
    }
    Ok(())
}
