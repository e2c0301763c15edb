//! Component and λ ablations on the synthetic benchmark, printed as tables.
//!
//! cargo run --release --example ablation [epochs]

use coss::cli::render_ablation;
use coss::distill::{ablate_components, ablate_lambda, KnnProtocol, Teacher, DEFAULT_LAMBDAS};
use coss::knn::build_index;
use coss::synthetic::{benchmark_config, DeskBenchmark};

fn main() -> coss::Result<()> {
    let epochs: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let bench = DeskBenchmark::generate(0)?;
    let teacher = Teacher::Model(bench.teacher.clone());
    let index = build_index(&teacher.embed_all(bench.train.inputs())?, 16)?;
    let protocol = KnnProtocol {
        bank: &bench.train,
        queries: Some(&bench.test),
        k_eval: 5,
    };
    println!("teacher accuracy {:.4}\n", protocol.teacher_accuracy(&teacher)?);

    let mut cfg = benchmark_config(0);
    cfg.train.epochs = epochs;
    let components = ablate_components(&cfg, &bench.train, &teacher, &index, &protocol)?;
    println!("{}", render_ablation(&components));
    let lambdas = ablate_lambda(&cfg, &DEFAULT_LAMBDAS, &bench.train, &teacher, &index, &protocol)?;
    println!("{}", render_ablation(&lambdas));
    Ok(())
}
