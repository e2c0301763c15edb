//! Gradient descent on a free student matrix: the combined objective pulls
//! every student dimension onto its teacher dimension, feature similarity
//! alone does not.
//!
//! cargo run --release --example space_alignment

use coss::eval::alignment_diagnostics;
use coss::linalg::EmbeddingMatrix;
use coss::loss::CossObjective;
use coss::seeded_rng;
use rand_distr::{Distribution, StandardNormal};

fn random(rows: usize, cols: usize, seed: u64) -> coss::Result<EmbeddingMatrix> {
    let mut rng = seeded_rng(seed);
    let data = (0..rows * cols).map(|_| StandardNormal.sample(&mut rng)).collect();
    EmbeddingMatrix::new(rows, cols, data)
}

fn main() -> coss::Result<()> {
    let a_t = random(64, 8, 11)?;
    for (name, lambda) in [("co_only", 0.0), ("coss", 1.0)] {
        let objective = CossObjective::new(lambda, 1.0)?;
        let mut a_s = random(64, 8, 12)?;
        for step in 0..=400 {
            let (loss, grad) = objective.evaluate(&a_s, &a_t)?;
            if step % 100 == 0 {
                let diag = alignment_diagnostics(&a_s, &a_t)?;
                println!(
                    "{name:<8} step {step:>3}  l_co {:+.4}  l_ss {:+.4}  min dim cos {:+.4}",
                    loss.l_co,
                    loss.l_ss,
                    diag.min_dim_cosine()
                );
            }
            for (w, g) in a_s.as_mut_slice().iter_mut().zip(grad.as_slice()) {
                *w -= 20.0 * g;
            }
        }
    }
    Ok(())
}
