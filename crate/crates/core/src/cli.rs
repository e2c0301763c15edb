//! The `coss` command-line tool.
//!
//! Every command writes its artifacts atomically and deterministically: a
//! rerun with the same inputs produces byte-identical files. Timings only
//! ever go to standard output.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use crate::binio;
use crate::config::DistillConfig;
use crate::data::{load_dataset, Dataset, DATASET_MAGIC};
use crate::distill::{ablate_components, ablate_lambda, distill, AblationTable, KnnProtocol, RunLog, Teacher, DEFAULT_LAMBDAS};
use crate::error::{Error, Result};
use crate::eval;
use crate::knn::{build_index, load_index, save_index};
use crate::linalg::EmbeddingMatrix;
use crate::model::{save_model, MlpModel, MODEL_MAGIC};
use crate::report::{self, render_rows, MetricsReport};
use crate::synthetic::DeskBenchmark;

pub const PROBE_EPOCHS: usize = 200;
pub const PROBE_LR: f64 = 0.5;
/// Held-out share of `--data` for the probe when no `--eval-data` is given.
pub const PROBE_TEST_FRACTION: f64 = 0.25;

#[derive(Debug, Parser)]
#[command(name = "coss", version, about = "Unsupervised distillation with feature and space similarity")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Find each sample's nearest neighbors in teacher space.
    Precompute {
        #[arg(long)]
        data: PathBuf,
        /// Teacher model (CSSM) or embedding dump (CSSD).
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long)]
        pool: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a student; writes student.cssm, metrics.tsv, config.toml and run_log.jsonl.
    Distill {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score embeddings with one evaluation suite.
    Eval {
        /// Student model (CSSM) or embedding dump (CSSD).
        #[arg(long)]
        student: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Fail unless `--data` carries labels, whatever the suite.
        #[arg(long)]
        labels_required: bool,
        #[arg(long, value_enum)]
        suite: Suite,
        /// Needed by the align suite.
        #[arg(long)]
        teacher: Option<PathBuf>,
        /// Labeled queries; without it knn and retrieval run leave-one-out.
        #[arg(long)]
        eval_data: Option<PathBuf>,
        /// Neighbors for knn, K for retrieval.
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an ablation grid; writes ablation.tsv and table.txt.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        grid: Grid,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        eval_data: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_LAMBDAS)]
        lambdas: Vec<f64>,
        #[arg(long, default_value_t = 5)]
        k_eval: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the synthetic desk benchmark and the quickstart config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Knn,
    Probe,
    Retrieval,
    Align,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Grid {
    Components,
    Lambda,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let target: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(target, "{e}");
            return e.exit_code();
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Precompute { data, teacher, pool, out: path } => cmd_precompute(&data, &teacher, pool, &path, out),
        Command::Distill {
            config,
            data,
            teacher,
            index,
            out: dir,
        } => cmd_distill(&config, &data, &teacher, &index, &dir, out),
        Command::Eval {
            student,
            data,
            labels_required,
            suite,
            teacher,
            eval_data,
            k,
            out: path,
        } => cmd_eval(
            &EvalArgs {
                student,
                data,
                labels_required,
                suite,
                teacher,
                eval_data,
                k,
                out: path,
            },
            out,
        ),
        Command::Ablate {
            config,
            grid,
            data,
            teacher,
            index,
            eval_data,
            lambdas,
            k_eval,
            out: dir,
        } => cmd_ablate(
            &AblateArgs {
                config,
                grid,
                data,
                teacher,
                index,
                eval_data,
                lambdas,
                k_eval,
                out: dir,
            },
            out,
        ),
        Command::Synth { out: dir, seed } => {
            DeskBenchmark::generate(seed)?.write_to(&dir)?;
            say(out, format_args!("wrote data.cssd, eval.cssd, teacher.cssm, config.toml to {}", dir.display()))
        }
    }
}

fn say(out: &mut dyn Write, args: std::fmt::Arguments<'_>) -> Result<()> {
    writeln!(out, "{args}").map_err(|e| Error::io("writing to stdout", e))
}

/// Loads a network file or an embedding dump, told apart by magic bytes.
pub fn load_embedder(path: &Path) -> Result<Teacher> {
    let bytes = binio::read_file(path)?;
    let what = |e: Error| match e {
        Error::Format(m) => Error::format(format!("{}: {m}", path.display())),
        other => other,
    };
    match bytes.get(..4) {
        Some(m) if m == MODEL_MAGIC => Ok(Teacher::Model(MlpModel::decode(&bytes).map_err(what)?)),
        Some(m) if m == DATASET_MAGIC => {
            let ds = Dataset::decode(&bytes).map_err(what)?;
            Ok(Teacher::Embeddings(ds.inputs().clone()))
        }
        _ => Err(Error::format(format!(
            "{}: neither a CSSM model nor a CSSD embedding dump",
            path.display()
        ))),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))
}

pub fn cmd_precompute(data: &Path, teacher: &Path, pool: usize, path: &Path, out: &mut dyn Write) -> Result<()> {
    let started = Instant::now();
    let ds = load_dataset(data)?;
    let emb = load_embedder(teacher)?.embed_all(ds.inputs())?;
    let index = build_index(&emb, pool)?;
    save_index(&index, path)?;
    say(
        out,
        format_args!(
            "N={} pool={} elapsed={:.3}s -> {}",
            index.n(),
            index.pool(),
            started.elapsed().as_secs_f64(),
            path.display()
        ),
    )
}

/// Final-epoch metrics plus the per-epoch series of a run.
pub fn run_report(log: &RunLog) -> Result<MetricsReport> {
    let mut r = MetricsReport::new(report::run_id(&log.config_hash, log.config.seed), log.config_hash.clone());
    let last = log.final_epoch();
    r.metric("final.l_co", last.mean_l_co)?;
    r.metric("final.l_ss", last.mean_l_ss)?;
    r.metric("final.l_total", last.mean_l_total)?;
    r.metric("final.mean_row_cosine", last.mean_row_cosine)?;
    r.metric("final.min_dim_cosine", last.min_dim_cosine)?;
    r.metric("steps", log.steps.len() as f64)?;
    let col = |f: fn(&crate::distill::EpochRecord) -> f64| log.epochs.iter().map(f).collect::<Vec<f64>>();
    r.series("epoch.l_co", col(|e| e.mean_l_co))?;
    r.series("epoch.l_ss", col(|e| e.mean_l_ss))?;
    r.series("epoch.l_total", col(|e| e.mean_l_total))?;
    r.series("epoch.mean_row_cosine", col(|e| e.mean_row_cosine))?;
    r.series("epoch.min_dim_cosine", col(|e| e.min_dim_cosine))?;
    Ok(r)
}

pub fn cmd_distill(
    config: &Path,
    data: &Path,
    teacher: &Path,
    index: &Path,
    dir: &Path,
    out: &mut dyn Write,
) -> Result<()> {
    let cfg = DistillConfig::load(config)?;
    let ds = load_dataset(data)?;
    let teacher = load_embedder(teacher)?;
    let index = load_index(index)?;
    let (student, log) = distill(&cfg, ds.training_view(), &teacher, &index)?;
    let report = run_report(&log)?;

    create_dir(dir)?;
    save_model(&student, &dir.join("student.cssm"))?;
    report.save(&dir.join("metrics.tsv"))?;
    binio::write_atomic(&dir.join("config.toml"), cfg.to_toml_string().as_bytes())?;
    binio::write_atomic(&dir.join("run_log.jsonl"), log.to_jsonl().as_bytes())?;

    say(out, format_args!("{}", report.render_table()))?;
    say(
        out,
        format_args!("{} steps in {:.2}s -> {}", log.steps.len(), log.wall_clock_secs, dir.display()),
    )
}

#[derive(Debug, Clone)]
pub struct EvalArgs {
    pub student: PathBuf,
    pub data: PathBuf,
    pub labels_required: bool,
    pub suite: Suite,
    pub teacher: Option<PathBuf>,
    pub eval_data: Option<PathBuf>,
    pub k: usize,
    pub out: PathBuf,
}

fn embed_other(model: &Teacher, ds: &Dataset) -> Result<EmbeddingMatrix> {
    match model {
        Teacher::Model(m) => m.predict(ds.inputs()),
        Teacher::Embeddings(_) => Err(Error::invalid(
            "--eval-data needs a model; an embedding dump only covers --data",
        )),
    }
}

fn digest_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)[..8].iter().map(|b| format!("{b:02x}")).collect()
}

pub fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let ds = load_dataset(&args.data)?;
    let needs_labels = args.labels_required || args.suite != Suite::Align;
    if needs_labels {
        ds.require_labels(&format!("the {:?} suite", args.suite).to_lowercase())?;
    }
    if args.suite == Suite::Align && args.teacher.is_none() {
        return Err(Error::invalid("the align suite requires --teacher"));
    }
    let student = load_embedder(&args.student)?;
    let emb = student.embed_all(ds.inputs())?;
    let queries = args.eval_data.as_deref().map(load_dataset).transpose()?;

    let mut hasher = Sha256::new();
    for p in [Some(&args.student), Some(&args.data), args.teacher.as_ref(), args.eval_data.as_ref()]
        .into_iter()
        .flatten()
    {
        hasher.update(binio::read_file(p)?);
    }
    hasher.update(format!("{:?}/{}", args.suite, args.k));
    let hash = digest_hex(&hasher.finalize());
    let suite_name = format!("{:?}", args.suite).to_lowercase();
    let mut report = MetricsReport::new(format!("{hash}-{suite_name}"), hash);

    match args.suite {
        Suite::Knn => {
            let labels = ds.require_labels("k-NN evaluation")?;
            let acc = match &queries {
                Some(q) => eval::knn_classify(
                    &emb,
                    labels,
                    &embed_other(&student, q)?,
                    q.require_labels("k-NN evaluation")?,
                    args.k,
                )?,
                None => eval::knn_classify_leave_one_out(&emb, labels, args.k)?,
            };
            report.metric("knn_accuracy", acc)?;
        }
        Suite::Probe => {
            let acc = match &queries {
                Some(q) => eval::linear_probe(
                    &emb,
                    ds.require_labels("the probe")?,
                    &embed_other(&student, q)?,
                    q.require_labels("the probe")?,
                    PROBE_EPOCHS,
                    PROBE_LR,
                )?,
                None => {
                    let labeled = Dataset::new(emb.clone(), ds.labels().map(<[usize]>::to_vec))?;
                    let (train, test) = labeled.split(PROBE_TEST_FRACTION, 0)?;
                    eval::linear_probe(
                        train.inputs(),
                        train.require_labels("the probe")?,
                        test.inputs(),
                        test.require_labels("the probe")?,
                        PROBE_EPOCHS,
                        PROBE_LR,
                    )?
                }
            };
            report.metric("probe_accuracy", acc)?;
        }
        Suite::Retrieval => {
            let labels = ds.require_labels("retrieval")?;
            let recall = match &queries {
                Some(q) => eval::recall_at_k(
                    &embed_other(&student, q)?,
                    &emb,
                    q.require_labels("retrieval")?,
                    labels,
                    args.k,
                )?,
                None => eval::recall_at_k_leave_one_out(&emb, labels, args.k)?,
            };
            report.metric(format!("recall_at_{}", args.k), recall)?;
        }
        Suite::Align => {
            let teacher = load_embedder(args.teacher.as_deref().expect("checked above"))?;
            let t_emb = teacher.embed_all(ds.inputs())?;
            if t_emb.shape() != emb.shape() {
                return Err(Error::shape(format!(
                    "student embeddings {:?} vs teacher embeddings {:?}",
                    emb.shape(),
                    t_emb.shape()
                )));
            }
            let diag = eval::alignment_diagnostics(&emb, &t_emb)?;
            report.metric("mean_row_cosine", diag.mean_row_cosine)?;
            report.metric("min_dim_cosine", diag.min_dim_cosine())?;
            report.series("per_dim_cosine", diag.per_dim_cosine)?;
            report.series("per_dim_scale", diag.per_dim_scale)?;
        }
    }
    report.save(&args.out)?;
    say(out, format_args!("{}", report.render_table()))
}

#[derive(Debug, Clone)]
pub struct AblateArgs {
    pub config: PathBuf,
    pub grid: Grid,
    pub data: PathBuf,
    pub teacher: PathBuf,
    pub index: PathBuf,
    pub eval_data: Option<PathBuf>,
    pub lambdas: Vec<f64>,
    pub k_eval: usize,
    pub out: PathBuf,
}

/// Machine-readable form of an ablation table; floats survive exactly.
pub fn ablation_report(table: &AblationTable, seed: u64) -> Result<MetricsReport> {
    let base = table.rows.first().map_or("", |r| r.base_hash.as_str());
    let mut r = MetricsReport::new(
        format!("{}-{}", report::run_id(base, seed), table.grid.name()),
        base.to_string(),
    );
    for row in &table.rows {
        r.metric(format!("{}.accuracy", row.label), row.accuracy)?;
        r.metric(format!("{}.final_loss", row.label), row.final_loss)?;
        r.metric(format!("{}.lambda", row.label), row.lambda)?;
    }
    Ok(r)
}

/// Aligned text table; numbers printed in full so they match the report.
pub fn render_ablation(table: &AblationTable) -> String {
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| {
            vec![
                r.label.clone(),
                r.variant.name().to_string(),
                format!("{}", r.lambda),
                format!("{}", r.accuracy),
                format!("{}", r.final_loss),
                r.config_hash.clone(),
                r.student_digest[..16].to_string(),
            ]
        })
        .collect();
    render_rows(
        &["arm", "variant", "lambda", "knn_accuracy", "final_loss", "config", "student"],
        &rows,
    )
}

pub fn cmd_ablate(args: &AblateArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = DistillConfig::load(&args.config)?;
    let ds = load_dataset(&args.data)?;
    ds.require_labels("ablation scoring")?;
    let teacher = load_embedder(&args.teacher)?;
    let index = load_index(&args.index)?;
    let queries = args.eval_data.as_deref().map(load_dataset).transpose()?;
    let protocol = KnnProtocol {
        bank: &ds,
        queries: queries.as_ref(),
        k_eval: args.k_eval,
    };
    let table = match args.grid {
        Grid::Components => ablate_components(&cfg, &ds, &teacher, &index, &protocol)?,
        Grid::Lambda => ablate_lambda(&cfg, &args.lambdas, &ds, &teacher, &index, &protocol)?,
    };
    let text = render_ablation(&table);
    create_dir(&args.out)?;
    ablation_report(&table, cfg.seed)?.save(&args.out.join("ablation.tsv"))?;
    binio::write_atomic(&args.out.join("table.txt"), text.as_bytes())?;
    say(out, format_args!("{text}"))
}
