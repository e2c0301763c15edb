//! Distills the synthetic desk benchmark with the combined objective and with
//! feature similarity alone, over several seeds, and reports k-NN accuracy
//! against the teacher's.
//!
//! cargo run --release --example distill_benchmark [seeds]

use std::time::Instant;

use coss::config::LossVariant;
use coss::distill::{distill, KnnProtocol, Teacher};
use coss::knn::build_index;
use coss::synthetic::{benchmark_config, DeskBenchmark};

fn main() -> coss::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let started = Instant::now();
    let bench = DeskBenchmark::generate(0)?;
    let teacher = Teacher::Model(bench.teacher.clone());
    let index = build_index(&teacher.embed_all(bench.train.inputs())?, 16)?;
    let protocol = KnnProtocol {
        bank: &bench.train,
        queries: Some(&bench.test),
        k_eval: 5,
    };
    let teacher_acc = protocol.teacher_accuracy(&teacher)?;
    println!("teacher k-NN accuracy {teacher_acc:.4}");

    let mut sums = [0.0; 2];
    for seed in 0..seeds {
        let mut accs = [0.0; 2];
        for (slot, variant) in [LossVariant::Coss, LossVariant::CoOnly].into_iter().enumerate() {
            let mut cfg = benchmark_config(seed);
            cfg.loss.variant = variant;
            let (student, log) = distill(&cfg, bench.train.training_view(), &teacher, &index)?;
            accs[slot] = protocol.model_accuracy(&student)?;
            sums[slot] += accs[slot];
            let last = log.final_epoch();
            println!(
                "seed {seed} {:<8} acc {:.4}  row cos {:.4}  min dim cos {:.4}",
                variant.name(),
                accs[slot],
                last.mean_row_cosine,
                last.min_dim_cosine
            );
        }
    }
    let n = seeds as f64;
    println!(
        "mean over {seeds} seeds: coss {:.4} ({:.3} of teacher), co_only {:.4}",
        sums[0] / n,
        sums[0] / n / teacher_acc,
        sums[1] / n
    );
    println!("elapsed {:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}
