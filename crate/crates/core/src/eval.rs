//! Representation quality after distillation: k-NN classification, linear
//! probe, retrieval recall@K, and per-dimension alignment with the teacher.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::linalg::{self, Axis, EmbeddingMatrix, DEFAULT_EPS};
use crate::loss;

/// Indices of the `k` gallery rows most cosine-similar to `query`, best first.
/// Ties go to the lower index; `exclude` removes one row (the query itself).
fn top_k(query: &[f64], gallery_unit: &EmbeddingMatrix, k: usize, exclude: Option<usize>) -> Vec<usize> {
    let mut scored: Vec<(f64, usize)> = (0..gallery_unit.rows())
        .filter(|&j| Some(j) != exclude)
        .map(|j| (linalg::dot(query, gallery_unit.row(j)), j))
        .collect();
    let by_rank =
        |a: &(f64, usize), b: &(f64, usize)| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1));
    let k = k.min(scored.len());
    if k == 0 {
        return Vec::new();
    }
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, by_rank);
        scored.truncate(k);
    }
    scored.sort_unstable_by(by_rank);
    scored.into_iter().map(|(_, j)| j).collect()
}

/// Unweighted majority vote; ties go to the lower class id.
fn vote(neighbors: &[usize], labels: &[usize]) -> usize {
    let max_class = neighbors.iter().map(|&j| labels[j]).max().unwrap_or(0);
    let mut counts = vec![0usize; max_class + 1];
    for &j in neighbors {
        counts[labels[j]] += 1;
    }
    counts
        .iter()
        .enumerate()
        .fold((0, 0), |best, (c, &n)| if n > best.1 { (c, n) } else { best })
        .0
}

fn check_labels(emb: &EmbeddingMatrix, labels: &[usize], what: &str) -> Result<()> {
    if labels.len() != emb.rows() {
        return Err(Error::shape(format!(
            "{} {what} labels for {} embeddings",
            labels.len(),
            emb.rows()
        )));
    }
    Ok(())
}

/// Predicted class of every test row by cosine k-NN against the train set.
pub fn knn_predict(
    train_emb: &EmbeddingMatrix,
    train_labels: &[usize],
    test_emb: &EmbeddingMatrix,
    k_eval: usize,
) -> Result<Vec<usize>> {
    check_labels(train_emb, train_labels, "train")?;
    if k_eval == 0 {
        return Err(Error::invalid("k_eval must be at least 1"));
    }
    if k_eval > train_emb.rows() {
        return Err(Error::invalid(format!(
            "k_eval {k_eval} exceeds {} train samples",
            train_emb.rows()
        )));
    }
    if train_emb.cols() != test_emb.cols() {
        return Err(Error::shape("train and test embeddings differ in width"));
    }
    let train = linalg::l2_normalize(train_emb, Axis::Rows, DEFAULT_EPS)?;
    let test = linalg::l2_normalize(test_emb, Axis::Rows, DEFAULT_EPS)?;
    Ok((0..test.rows())
        .map(|i| vote(&top_k(test.row(i), &train, k_eval, None), train_labels))
        .collect())
}

/// Fraction of test rows whose k-NN vote matches their label.
pub fn knn_classify(
    train_emb: &EmbeddingMatrix,
    train_labels: &[usize],
    test_emb: &EmbeddingMatrix,
    test_labels: &[usize],
    k_eval: usize,
) -> Result<f64> {
    check_labels(test_emb, test_labels, "test")?;
    let pred = knn_predict(train_emb, train_labels, test_emb, k_eval)?;
    Ok(accuracy(&pred, test_labels))
}

/// k-NN accuracy where every sample is classified by all the others.
pub fn knn_classify_leave_one_out(emb: &EmbeddingMatrix, labels: &[usize], k_eval: usize) -> Result<f64> {
    check_labels(emb, labels, "train")?;
    if emb.rows() < 2 {
        return Err(Error::invalid("leave-one-out needs at least two samples"));
    }
    if k_eval == 0 || k_eval >= emb.rows() {
        return Err(Error::invalid(format!(
            "k_eval must be in 1..{} for leave-one-out",
            emb.rows()
        )));
    }
    let unit = linalg::l2_normalize(emb, Axis::Rows, DEFAULT_EPS)?;
    let pred: Vec<usize> = (0..unit.rows())
        .map(|i| vote(&top_k(unit.row(i), &unit, k_eval, Some(i)), labels))
        .collect();
    Ok(accuracy(&pred, labels))
}

fn accuracy(pred: &[usize], labels: &[usize]) -> f64 {
    let hits = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
    hits as f64 / labels.len() as f64
}

/// Softmax regression trained by full-batch gradient descent on frozen,
/// train-standardized embeddings. Zero-initialized, so fully deterministic.
pub fn linear_probe(
    train_emb: &EmbeddingMatrix,
    train_labels: &[usize],
    test_emb: &EmbeddingMatrix,
    test_labels: &[usize],
    epochs: usize,
    lr: f64,
) -> Result<f64> {
    check_labels(train_emb, train_labels, "train")?;
    check_labels(test_emb, test_labels, "test")?;
    if train_emb.cols() != test_emb.cols() {
        return Err(Error::shape("train and test embeddings differ in width"));
    }
    let classes = train_labels.iter().max().map_or(0, |m| m + 1);
    let distinct = {
        let mut seen = vec![false; classes];
        train_labels.iter().for_each(|&l| seen[l] = true);
        seen.iter().filter(|&&s| s).count()
    };
    if distinct < 2 {
        return Err(Error::invalid("linear probe needs at least two classes in the train set"));
    }
    let d = train_emb.cols();
    let (mean, std) = train_emb.col_mean_std();
    let standardize = |x: &EmbeddingMatrix| {
        let mut out = x.clone();
        for i in 0..out.rows() {
            for ((v, m), s) in out.row_mut(i).iter_mut().zip(&mean).zip(&std) {
                *v = (*v - m) / s.max(1e-12);
            }
        }
        out
    };
    let xtr = standardize(train_emb);
    let xte = standardize(test_emb);
    let n = xtr.rows() as f64;

    let mut w = vec![0.0; classes * d];
    let mut b = vec![0.0; classes];
    let mut probs = vec![0.0; classes];
    for _ in 0..epochs {
        let mut gw = vec![0.0; classes * d];
        let mut gb = vec![0.0; classes];
        for i in 0..xtr.rows() {
            let x = xtr.row(i);
            softmax_into(&w, &b, x, &mut probs);
            for c in 0..classes {
                let g = probs[c] - if train_labels[i] == c { 1.0 } else { 0.0 };
                gb[c] += g;
                for (gwv, xv) in gw[c * d..(c + 1) * d].iter_mut().zip(x) {
                    *gwv += g * xv;
                }
            }
        }
        for (wv, g) in w.iter_mut().zip(&gw) {
            *wv -= lr * g / n;
        }
        for (bv, g) in b.iter_mut().zip(&gb) {
            *bv -= lr * g / n;
        }
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("linear probe diverged".into()));
    }
    let pred: Vec<usize> = (0..xte.rows())
        .map(|i| {
            softmax_into(&w, &b, xte.row(i), &mut probs);
            probs
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (c, &p)| if p > best.1 { (c, p) } else { best })
                .0
        })
        .collect();
    Ok(accuracy(&pred, test_labels))
}

fn softmax_into(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let d = x.len();
    for (c, o) in out.iter_mut().enumerate() {
        *o = linalg::dot(&w[c * d..(c + 1) * d], x) + b[c];
    }
    let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for o in out.iter_mut() {
        *o = (*o - max).exp();
        sum += *o;
    }
    out.iter_mut().for_each(|o| *o /= sum);
}

/// Fraction of queries whose top-`k` gallery hits by cosine include a same-label item.
pub fn recall_at_k(
    query_emb: &EmbeddingMatrix,
    gallery_emb: &EmbeddingMatrix,
    query_labels: &[usize],
    gallery_labels: &[usize],
    k: usize,
) -> Result<f64> {
    check_labels(query_emb, query_labels, "query")?;
    check_labels(gallery_emb, gallery_labels, "gallery")?;
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    if query_emb.cols() != gallery_emb.cols() {
        return Err(Error::shape("query and gallery embeddings differ in width"));
    }
    let gallery = linalg::l2_normalize(gallery_emb, Axis::Rows, DEFAULT_EPS)?;
    let queries = linalg::l2_normalize(query_emb, Axis::Rows, DEFAULT_EPS)?;
    let hits = (0..queries.rows())
        .filter(|&i| {
            top_k(queries.row(i), &gallery, k, None)
                .iter()
                .any(|&j| gallery_labels[j] == query_labels[i])
        })
        .count();
    Ok(hits as f64 / queries.rows() as f64)
}

/// Recall@K with every sample used once as a query against all the others.
pub fn recall_at_k_leave_one_out(emb: &EmbeddingMatrix, labels: &[usize], k: usize) -> Result<f64> {
    check_labels(emb, labels, "gallery")?;
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    if emb.rows() < 2 {
        return Err(Error::invalid("empty gallery: leave-one-out needs two samples"));
    }
    let unit = linalg::l2_normalize(emb, Axis::Rows, DEFAULT_EPS)?;
    let hits = (0..unit.rows())
        .filter(|&i| {
            top_k(unit.row(i), &unit, k, Some(i))
                .iter()
                .any(|&j| labels[j] == labels[i])
        })
        .count();
    Ok(hits as f64 / unit.rows() as f64)
}

/// How closely each student dimension tracks the matching teacher dimension.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct AlignmentDiagnostics {
    /// Cosine between student column j and teacher column j over the samples.
    pub per_dim_cosine: Vec<f64>,
    /// `‖student column j‖ / ‖teacher column j‖`.
    pub per_dim_scale: Vec<f64>,
    /// Mean per-sample cosine between student and teacher rows.
    pub mean_row_cosine: f64,
}

impl AlignmentDiagnostics {
    pub fn min_dim_cosine(&self) -> f64 {
        self.per_dim_cosine.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn alignment_diagnostics(a_s: &EmbeddingMatrix, a_t: &EmbeddingMatrix) -> Result<AlignmentDiagnostics> {
    let mean_row_cosine = -loss::loss_co(a_s, a_t)?;
    let s_norms = a_s.col_sq_norms();
    let t_norms = a_t.col_sq_norms();
    let (st, tt) = (a_s.transpose(), a_t.transpose());
    let mut per_dim_cosine = Vec::with_capacity(a_s.cols());
    let mut per_dim_scale = Vec::with_capacity(a_s.cols());
    for j in 0..a_s.cols() {
        let (ns, nt) = (s_norms[j].sqrt(), t_norms[j].sqrt());
        if ns <= DEFAULT_EPS || nt <= DEFAULT_EPS {
            per_dim_cosine.push(0.0);
            per_dim_scale.push(0.0);
        } else {
            per_dim_cosine.push((linalg::dot(st.row(j), tt.row(j)) / (ns * nt)).clamp(-1.0, 1.0));
            per_dim_scale.push(ns / nt);
        }
    }
    Ok(AlignmentDiagnostics {
        per_dim_cosine,
        per_dim_scale,
        mean_row_cosine,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gaussian_clusters;
    use crate::seeded_rng;
    use rand::Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> EmbeddingMatrix {
        let mut rng = seeded_rng(seed);
        EmbeddingMatrix::new(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap()
    }

    #[test]
    fn knn_exact_match_k1() {
        let train = random(10, 4, 1);
        let labels: Vec<usize> = (0..10).map(|i| i % 3).collect();
        let test = train.select_rows(&[7]).unwrap();
        assert_eq!(knn_predict(&train, &labels, &test, 1).unwrap(), vec![labels[7]]);
    }

    #[test]
    fn knn_separated_clusters() {
        let ds = gaussian_clusters(60, 2, 5, 20.0, 4).unwrap();
        let (tr, te) = ds.split(0.3, 1).unwrap();
        for k in [1, 3, 10] {
            let acc = knn_classify(tr.inputs(), tr.labels().unwrap(), te.inputs(), te.labels().unwrap(), k).unwrap();
            assert_eq!(acc, 1.0);
        }
    }

    /// Vote oracle: full sort of all train rows by cosine, then count.
    fn brute_force_vote(train: &EmbeddingMatrix, labels: &[usize], q: &[f64], k: usize) -> usize {
        let cos = |a: &[f64], b: &[f64]| {
            let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            d / (a.iter().map(|x| x * x).sum::<f64>().sqrt() * b.iter().map(|x| x * x).sum::<f64>().sqrt())
        };
        let mut order: Vec<usize> = (0..train.rows()).collect();
        order.sort_by(|&a, &b| {
            cos(q, train.row(b)).partial_cmp(&cos(q, train.row(a))).unwrap().then(a.cmp(&b))
        });
        let mut counts = [0usize; 8];
        for &j in &order[..k] {
            counts[labels[j]] += 1;
        }
        let best = *counts.iter().max().unwrap();
        counts.iter().position(|&c| c == best).unwrap()
    }

    #[test]
    fn knn_matches_brute_force_vote() {
        for seed in 0..10 {
            let train = random(20, 3, seed);
            let labels: Vec<usize> = {
                let mut rng = seeded_rng(seed + 100);
                (0..20).map(|_| rng.random_range(0..2)).collect()
            };
            let test = random(15, 3, seed + 200);
            let pred = knn_predict(&train, &labels, &test, 3).unwrap();
            for i in 0..15 {
                assert_eq!(pred[i], brute_force_vote(&train, &labels, test.row(i), 3));
            }
        }
    }

    #[test]
    fn knn_errors() {
        let e = random(3, 2, 1);
        assert!(knn_predict(&e, &[0, 1, 0], &e, 0).is_err());
        assert!(knn_predict(&e, &[0, 1], &e, 1).is_err());
        assert!(knn_predict(&e, &[0, 1, 0], &e, 4).is_err());
    }

    #[test]
    fn vote_ties_prefer_lower_class() {
        assert_eq!(vote(&[0, 1], &[3, 1]), 1);
        assert_eq!(vote(&[0, 1, 2], &[2, 0, 2]), 2);
    }

    #[test]
    fn probe_separable() {
        let ds = gaussian_clusters(200, 2, 6, 10.0, 2).unwrap();
        let (tr, te) = ds.split(0.25, 3).unwrap();
        let acc = linear_probe(tr.inputs(), tr.labels().unwrap(), te.inputs(), te.labels().unwrap(), 100, 0.5).unwrap();
        assert!(acc >= 0.99, "{acc}");
    }

    #[test]
    fn probe_shuffled_labels_is_chance() {
        let emb = random(400, 8, 5);
        let mut rng = seeded_rng(6);
        let labels: Vec<usize> = (0..400).map(|_| rng.random_range(0..2)).collect();
        let tr = emb.select_rows(&(0..300).collect::<Vec<_>>()).unwrap();
        let te = emb.select_rows(&(300..400).collect::<Vec<_>>()).unwrap();
        let acc = linear_probe(&tr, &labels[..300], &te, &labels[300..], 100, 0.5).unwrap();
        assert!((acc - 0.5).abs() <= 0.1, "{acc}");
        let again = linear_probe(&tr, &labels[..300], &te, &labels[300..], 100, 0.5).unwrap();
        assert_eq!(acc, again);
    }

    #[test]
    fn probe_single_class_rejected() {
        let e = random(4, 2, 1);
        assert!(linear_probe(&e, &[1, 1, 1, 1], &e, &[1, 1, 1, 1], 10, 0.1).is_err());
    }

    #[test]
    fn recall_duplicated_pairs() {
        let base = random(6, 4, 9);
        let emb = base.select_rows(&[0, 0, 1, 1, 2, 2, 3, 3, 4, 4, 5, 5]).unwrap();
        let labels: Vec<usize> = (0..12).map(|i| i / 2).collect();
        assert_eq!(recall_at_k_leave_one_out(&emb, &labels, 1).unwrap(), 1.0);
    }

    #[test]
    fn recall_disjoint_labels_is_zero() {
        let q = random(5, 3, 1);
        let g = random(7, 3, 2);
        assert_eq!(recall_at_k(&q, &g, &[0; 5], &[1; 7], 3).unwrap(), 0.0);
    }

    #[test]
    fn recall_matches_brute_force() {
        let q = random(12, 3, 20);
        let g = random(30, 3, 21);
        let mut rng = seeded_rng(22);
        let ql: Vec<usize> = (0..12).map(|_| rng.random_range(0..4)).collect();
        let gl: Vec<usize> = (0..30).map(|_| rng.random_range(0..4)).collect();
        for k in [1, 2, 5, 30] {
            let mut hits = 0;
            for i in 0..12 {
                let mut sims: Vec<(f64, usize)> = (0..30)
                    .map(|j| (linalg::cosine(q.row(i), g.row(j), 1e-12), j))
                    .collect();
                sims.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
                if sims[..k].iter().any(|&(_, j)| gl[j] == ql[i]) {
                    hits += 1;
                }
            }
            assert_eq!(recall_at_k(&q, &g, &ql, &gl, k).unwrap(), hits as f64 / 12.0);
        }
        assert!(recall_at_k(&q, &g, &ql, &gl, 0).is_err());
    }

    #[test]
    fn diagnostics_scales() {
        let t = random(10, 3, 4);
        let d = alignment_diagnostics(&t.scale_rows(&[3.0; 10]).unwrap(), &t).unwrap();
        assert!(d.per_dim_cosine.iter().all(|c| (c - 1.0).abs() < 1e-12));
        assert!(d.per_dim_scale.iter().all(|s| (s - 3.0).abs() < 1e-12));

        let t2 = random(10, 2, 5);
        let d = alignment_diagnostics(&t2.scale_cols(&[2.0, 5.0]).unwrap(), &t2).unwrap();
        assert!(d.per_dim_cosine.iter().all(|c| (c - 1.0).abs() < 1e-12));
        assert!((d.per_dim_scale[0] - 2.0).abs() < 1e-12 && (d.per_dim_scale[1] - 5.0).abs() < 1e-12);

        let s = random(10, 3, 6);
        let d = alignment_diagnostics(&s, &t).unwrap();
        assert_eq!(d.mean_row_cosine, -loss::loss_co(&s, &t).unwrap());
    }

    #[test]
    fn diagnostics_zero_column() {
        let t = random(4, 2, 7);
        let s = t.scale_cols(&[0.0, 1.0]).unwrap();
        let d = alignment_diagnostics(&s, &t).unwrap();
        assert_eq!((d.per_dim_cosine[0], d.per_dim_scale[0]), (0.0, 0.0));
        assert!(alignment_diagnostics(&s, &random(4, 3, 1)).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::{prop_assert, prop_assert_eq, proptest, ProptestConfig};

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn recall_monotone_in_k(seed in 0u64..1000) {
                let q = random(8, 3, seed);
                let g = random(16, 3, seed + 1);
                let mut rng = seeded_rng(seed + 2);
                let ql: Vec<usize> = (0..8).map(|_| rng.random_range(0..3)).collect();
                let gl: Vec<usize> = (0..16).map(|_| rng.random_range(0..3)).collect();
                let mut prev = 0.0;
                for k in 1..=16 {
                    let r = recall_at_k(&q, &g, &ql, &gl, k).unwrap();
                    prop_assert!(r >= prev);
                    prev = r;
                }
            }

            #[test]
            fn eval_invariant_to_row_scaling(seed in 0u64..1000) {
                // Power-of-two scales keep normalized rows bit-identical.
                let train = random(12, 3, seed);
                let test = random(6, 3, seed + 1);
                let labels: Vec<usize> = (0..12).map(|i| i % 3).collect();
                let tl: Vec<usize> = (0..6).map(|i| i % 3).collect();
                let s_train: Vec<f64> = (0..12).map(|i| 2f64.powi(i as i32 % 5 - 2)).collect();
                let s_test: Vec<f64> = (0..6).map(|i| 2f64.powi(i as i32 % 3)).collect();
                let a = knn_classify(&train, &labels, &test, &tl, 3).unwrap();
                let b = knn_classify(&train.scale_rows(&s_train).unwrap(), &labels,
                                     &test.scale_rows(&s_test).unwrap(), &tl, 3).unwrap();
                prop_assert_eq!(a, b);
                let r1 = recall_at_k(&test, &train, &tl, &labels, 2).unwrap();
                let r2 = recall_at_k(&test.scale_rows(&s_test).unwrap(), &train.scale_rows(&s_train).unwrap(),
                                     &tl, &labels, 2).unwrap();
                prop_assert_eq!(r1, r2);
            }
        }
    }
}
