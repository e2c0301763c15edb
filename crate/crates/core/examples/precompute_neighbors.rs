//! Builds the teacher neighbor index for the synthetic benchmark, saves it,
//! reloads it and samples a few enhanced batches from it.
//!
//! cargo run --release --example precompute_neighbors [pool]

use std::time::Instant;

use coss::data::{compose_batch, epoch_batches};
use coss::distill::Teacher;
use coss::knn::{build_index, load_index, save_index};
use coss::seeded_rng;
use coss::synthetic::DeskBenchmark;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pool: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(16);
    let bench = DeskBenchmark::generate(0)?;
    let emb = Teacher::Model(bench.teacher).embed_all(bench.train.inputs())?;

    let started = Instant::now();
    let index = build_index(&emb, pool)?;
    println!("N={} pool={} built in {:.3}s", index.n(), index.pool(), started.elapsed().as_secs_f64());

    let labels = bench.train.labels().expect("benchmark is labeled");
    let same = (0..index.n())
        .map(|i| index.row(i).iter().filter(|&&j| labels[j as usize] == labels[i]).count())
        .sum::<usize>();
    println!("neighbors sharing the anchor's class: {:.3}", same as f64 / (index.n() * pool) as f64);

    let dir = std::env::temp_dir().join("coss-precompute-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("index.cssk");
    save_index(&index, &path)?;
    assert_eq!(load_index(&path)?, index);
    println!("saved and reloaded {}", path.display());

    let mut rng = seeded_rng(7);
    let batches = epoch_batches(index.n(), 4, &mut rng)?;
    for anchors in batches.iter().take(2) {
        let plan = compose_batch(anchors, &index, 3, &mut rng)?;
        println!("anchors {:?} -> enhanced {:?}", plan.anchor_indices, plan.enhanced_indices);
    }
    Ok(())
}
