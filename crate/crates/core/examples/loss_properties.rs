//! Evaluates the two similarity terms on small matrices and shows how the
//! combined loss reacts to per-sample scaling, per-dimension scaling and λ.
//!
//! cargo run --example loss_properties

use coss::linalg::EmbeddingMatrix;
use coss::loss::{loss_co, loss_coss, loss_ss, CossObjective};
use coss::seeded_rng;
use rand_distr::{Distribution, StandardNormal};

fn random(rows: usize, cols: usize, seed: u64) -> coss::Result<EmbeddingMatrix> {
    let mut rng = seeded_rng(seed);
    let data = (0..rows * cols).map(|_| StandardNormal.sample(&mut rng)).collect();
    EmbeddingMatrix::new(rows, cols, data)
}

fn main() -> coss::Result<()> {
    let a_t = random(6, 4, 1)?;
    let a_s = random(6, 4, 2)?;
    println!("identical      l_co {:+.6}  l_ss {:+.6}", loss_co(&a_t, &a_t)?, loss_ss(&a_t, &a_t)?);
    println!("random student l_co {:+.6}  l_ss {:+.6}", loss_co(&a_s, &a_t)?, loss_ss(&a_s, &a_t)?);

    // Rescaling rows leaves the feature term unchanged but moves the space term.
    let rows = a_t.scale_rows(&[1.0, 3.0, 0.5, 7.0, 2.0, 0.1])?;
    println!("rows rescaled  l_co {:+.6}  l_ss {:+.6}", loss_co(&rows, &a_t)?, loss_ss(&rows, &a_t)?);
    let cols = a_t.scale_cols(&[4.0, 0.25, 1.0, 9.0])?;
    println!("cols rescaled  l_co {:+.6}  l_ss {:+.6}", loss_co(&cols, &a_t)?, loss_ss(&cols, &a_t)?);

    for lambda in [0.0, 0.5, 1.0, 2.0] {
        let b = loss_coss(&a_s, &a_t, lambda, 1.0)?;
        println!("λ={lambda:<4} l_total {:+.6} (recomputed {:+.6})", b.l_total, b.recomputed_total());
    }

    let (_, grad) = CossObjective::default().evaluate(&a_s, &a_t)?;
    let norm = grad.as_slice().iter().map(|g| g * g).sum::<f64>().sqrt();
    println!("gradient norm at the random student {norm:.6}");
    Ok(())
}
