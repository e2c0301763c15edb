//! The file-based workflow end to end through the library: write the
//! benchmark files, precompute, distill and evaluate, as the CLI does.
//!
//! cargo run --release --example quickstart_files [dir]

use std::path::PathBuf;

use coss::cli::{cmd_distill, cmd_eval, cmd_precompute, EvalArgs, Suite};
use coss::synthetic::DeskBenchmark;

fn main() -> coss::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("coss-quickstart"));
    DeskBenchmark::generate(0)?.write_to(&dir)?;
    let mut out = std::io::stdout();

    cmd_precompute(&dir.join("data.cssd"), &dir.join("teacher.cssm"), 16, &dir.join("index.cssk"), &mut out)?;
    cmd_distill(
        &dir.join("config.toml"),
        &dir.join("data.cssd"),
        &dir.join("teacher.cssm"),
        &dir.join("index.cssk"),
        &dir.join("run"),
        &mut out,
    )?;
    let report = dir.join("eval.tsv");
    cmd_eval(
        &EvalArgs {
            student: dir.join("run/student.cssm"),
            data: dir.join("data.cssd"),
            labels_required: true,
            suite: Suite::Knn,
            teacher: None,
            eval_data: Some(dir.join("eval.cssd")),
            k: 5,
            out: report.clone(),
        },
        &mut out,
    )?;
    println!("artifacts in {}", dir.display());
    Ok(())
}
