//! Runs every evaluation suite on the teacher's and an untrained student's
//! embeddings of the synthetic benchmark.
//!
//! cargo run --release --example evaluate_embeddings

use coss::eval::{alignment_diagnostics, knn_classify, linear_probe, recall_at_k};
use coss::linalg::EmbeddingMatrix;
use coss::model::init_model;
use coss::synthetic::{benchmark_config, DeskBenchmark};

fn suites(name: &str, train: &EmbeddingMatrix, test: &EmbeddingMatrix, bench: &DeskBenchmark) -> coss::Result<()> {
    let (ytr, yte) = (bench.train.labels().unwrap(), bench.test.labels().unwrap());
    println!(
        "{name:<18} knn {:.4}  probe {:.4}  recall@5 {:.4}",
        knn_classify(train, ytr, test, yte, 5)?,
        linear_probe(train, ytr, test, yte, 200, 0.5)?,
        recall_at_k(test, train, yte, ytr, 5)?
    );
    Ok(())
}

fn main() -> coss::Result<()> {
    let bench = DeskBenchmark::generate(0)?;
    let t_train = bench.teacher.predict(bench.train.inputs())?;
    let t_test = bench.teacher.predict(bench.test.inputs())?;
    suites("teacher", &t_train, &t_test, &bench)?;
    suites("raw inputs", bench.train.inputs(), bench.test.inputs(), &bench)?;

    let mut cfg = benchmark_config(0);
    cfg.student.output_dim = t_train.cols();
    let student = init_model(&cfg.student.model_spec(bench.train.dim()), 3)?;
    let s_train = student.predict(bench.train.inputs())?;
    suites("untrained student", &s_train, &student.predict(bench.test.inputs())?, &bench)?;

    let diag = alignment_diagnostics(&s_train, &t_train)?;
    println!(
        "untrained student vs teacher: row cos {:.4}  min dim cos {:.4}",
        diag.mean_row_cosine,
        diag.min_dim_cosine()
    );
    Ok(())
}
