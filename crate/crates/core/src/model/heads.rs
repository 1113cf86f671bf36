//! Dual start/end classifiers over the representation matrix `H`.
//!
//! ```text
//! start = H·W_start + b_start                                   (n × 2)
//! end   = [H·W_end + b_end ⊕ rowsoftmax(start)]·W_fuse + b_fuse  (n × 2)
//! ```
//!
//! The loss is the mean of the start and end terms, each the mean two-class
//! cross-entropy over supervised positions: CONTEXT always, DEMO only when
//! demonstration supervision is on, `[CLS]`/`[SEP]` never.

use ndarray::{concatenate, s, Array2, Axis};

use super::params::SpanHeads;
use crate::error::{Error, Result};
use crate::spanconv::{MrcInstance, PositionRole};

/// Row-wise softmax probabilities for start and end.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrices {
    pub start: Array2<f64>,
    pub end: Array2<f64>,
}

pub fn row_softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

pub fn start_logits(h: &Array2<f64>, heads: &SpanHeads) -> Array2<f64> {
    h.dot(&heads.w_start) + &heads.b_start
}

pub fn end_logits(h: &Array2<f64>, start_logits: &Array2<f64>, heads: &SpanHeads) -> Array2<f64> {
    let fused = fuse_input(h, &row_softmax(start_logits), heads);
    fused.dot(&heads.w_fuse) + &heads.b_fuse
}

fn fuse_input(h: &Array2<f64>, start_probs: &Array2<f64>, heads: &SpanHeads) -> Array2<f64> {
    let end_proj = h.dot(&heads.w_end) + &heads.b_end;
    concatenate(Axis(1), &[end_proj.view(), start_probs.view()]).expect("both have n rows")
}

/// Intermediate values of one head pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct HeadForward {
    pub start_logits: Array2<f64>,
    pub start_probs: Array2<f64>,
    pub fused: Array2<f64>,
    pub end_logits: Array2<f64>,
}

impl HeadForward {
    pub fn probabilities(&self) -> ProbMatrices {
        ProbMatrices { start: self.start_probs.clone(), end: row_softmax(&self.end_logits) }
    }
}

pub fn heads_forward(h: &Array2<f64>, heads: &SpanHeads) -> HeadForward {
    let start_logits = start_logits(h, heads);
    let start_probs = row_softmax(&start_logits);
    let fused = fuse_input(h, &start_probs, heads);
    let end_logits = fused.dot(&heads.w_fuse) + &heads.b_fuse;
    HeadForward { start_logits, start_probs, fused, end_logits }
}

pub fn supervised_positions(instance: &MrcInstance, supervise_demo: bool) -> Vec<usize> {
    instance
        .roles
        .iter()
        .enumerate()
        .filter(|(_, r)| matches!(r, PositionRole::Context) || (supervise_demo && matches!(r, PositionRole::Demo)))
        .map(|(i, _)| i)
        .collect()
}

fn log_softmax_at(row: ndarray::ArrayView1<f64>, class: usize) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row[class] - lse
}

pub fn loss(
    start_logits: &Array2<f64>,
    end_logits: &Array2<f64>,
    instance: &MrcInstance,
    supervise_demo: bool,
) -> Result<f64> {
    let positions = supervised_positions(instance, supervise_demo);
    if positions.is_empty() {
        return Err(Error::NoSupervision(instance.id()));
    }
    let n = positions.len() as f64;
    let term = |logits: &Array2<f64>, y: &[u8]| {
        -positions.iter().map(|&i| log_softmax_at(logits.row(i), usize::from(y[i]))).sum::<f64>() / n
    };
    Ok((term(start_logits, &instance.y_start) + term(end_logits, &instance.y_end)) / 2.0)
}

/// Loss, head gradients (accumulated into `grads`) and `dL/dH`.
pub fn heads_backward(
    h: &Array2<f64>,
    heads: &SpanHeads,
    fwd: &HeadForward,
    instance: &MrcInstance,
    supervise_demo: bool,
    grads: &mut SpanHeads,
) -> Result<(f64, Array2<f64>)> {
    let value = loss(&fwd.start_logits, &fwd.end_logits, instance, supervise_demo)?;
    let positions = supervised_positions(instance, supervise_demo);
    let scale = 0.5 / positions.len() as f64;

    let end_probs = row_softmax(&fwd.end_logits);
    let mut d_start = Array2::<f64>::zeros(fwd.start_logits.raw_dim());
    let mut d_end = Array2::<f64>::zeros(fwd.end_logits.raw_dim());
    for &i in &positions {
        for c in 0..2 {
            let ys = f64::from(u8::from(usize::from(instance.y_start[i]) == c));
            let ye = f64::from(u8::from(usize::from(instance.y_end[i]) == c));
            d_start[[i, c]] = scale * (fwd.start_probs[[i, c]] - ys);
            d_end[[i, c]] = scale * (end_probs[[i, c]] - ye);
        }
    }

    grads.w_fuse += &fwd.fused.t().dot(&d_end);
    grads.b_fuse += &d_end.sum_axis(Axis(0));
    let d_fused = d_end.dot(&heads.w_fuse.t());
    let d_end_proj = d_fused.slice(s![.., 0..2]).to_owned();
    let d_start_probs = d_fused.slice(s![.., 2..4]);

    // softmax backward: dz = p ⊙ (dp − ⟨dp, p⟩)
    for i in 0..d_start.nrows() {
        let p = fwd.start_probs.row(i);
        let dp = d_start_probs.row(i);
        let dot = p.dot(&dp);
        for c in 0..2 {
            d_start[[i, c]] += p[c] * (dp[c] - dot);
        }
    }

    grads.w_end += &h.t().dot(&d_end_proj);
    grads.b_end += &d_end_proj.sum_axis(Axis(0));
    grads.w_start += &h.t().dot(&d_start);
    grads.b_start += &d_start.sum_axis(Axis(0));
    let d_h = d_end_proj.dot(&heads.w_end.t()) + d_start.dot(&heads.w_start.t());
    Ok((value, d_h))
}

#[cfg(test)]
mod tests {
    use ndarray::{array, Array1};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    use super::*;
    use crate::corpus::{IobTag, LabeledSentence};
    use crate::spanconv::{assemble_instance, AssembleOptions};

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        let n = Normal::new(0.0, 1.0).unwrap();
        Array2::from_shape_fn((rows, cols), |_| n.sample(rng))
    }

    fn random_heads(d: usize, rng: &mut ChaCha8Rng) -> SpanHeads {
        SpanHeads {
            w_start: random_matrix(d, 2, rng),
            b_start: random_matrix(1, 2, rng).row(0).to_owned(),
            w_end: random_matrix(d, 2, rng),
            b_end: random_matrix(1, 2, rng).row(0).to_owned(),
            w_fuse: random_matrix(4, 2, rng),
            b_fuse: random_matrix(1, 2, rng).row(0).to_owned(),
        }
    }

    fn naive_matmul(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((a.nrows(), b.ncols()));
        for i in 0..a.nrows() {
            for j in 0..b.ncols() {
                let mut acc = 0.0;
                for k in 0..a.ncols() {
                    acc += a[[i, k]] * b[[k, j]];
                }
                out[[i, j]] = acc;
            }
        }
        out
    }

    fn instance() -> MrcInstance {
        let s = LabeledSentence::new(
            "t-0",
            vec!["a".into(), "zinc".into(), "b".into()],
            vec![IobTag::outside(), IobTag::begin("C"), IobTag::outside()],
        );
        assemble_instance(&s, None, "C", AssembleOptions::default()).unwrap()
    }

    #[test]
    fn zero_heads_give_zero_logits() {
        let h = random_matrix(5, 8, &mut ChaCha8Rng::seed_from_u64(0));
        let heads = SpanHeads::zeros(8);
        assert!(start_logits(&h, &heads).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn basis_rows_reproduce_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let heads = random_heads(4, &mut rng);
        let h = Array2::<f64>::eye(4);
        let logits = start_logits(&h, &SpanHeads { b_start: Array1::zeros(2), ..heads.clone() });
        assert_eq!(logits, heads.w_start);
    }

    #[test]
    fn start_logits_match_naive_matmul() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let heads = random_heads(6, &mut rng);
        let h = random_matrix(7, 6, &mut rng);
        let got = start_logits(&h, &heads);
        let mut want = naive_matmul(&h, &heads.w_start);
        for mut row in want.rows_mut() {
            row += &heads.b_start;
        }
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn end_logits_match_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let heads = random_heads(5, &mut rng);
        let h = random_matrix(4, 5, &mut rng);
        let sl = start_logits(&h, &heads);
        let got = end_logits(&h, &sl, &heads);
        for i in 0..4 {
            let mut cat = [0.0; 4];
            for (c, slot) in cat.iter_mut().take(2).enumerate() {
                *slot = heads.b_end[c] + (0..5).map(|k| h[[i, k]] * heads.w_end[[k, c]]).sum::<f64>();
            }
            let z = sl[[i, 0]].exp() + sl[[i, 1]].exp();
            cat[2] = sl[[i, 0]].exp() / z;
            cat[3] = sl[[i, 1]].exp() / z;
            for c in 0..2 {
                let want = heads.b_fuse[c] + (0..4).map(|k| cat[k] * heads.w_fuse[[k, c]]).sum::<f64>();
                assert!((got[[i, c]] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn uniform_start_contributes_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut heads = random_heads(3, &mut rng);
        heads.w_start.fill(0.0);
        heads.b_start = array![0.7, 0.7];
        let h = random_matrix(3, 3, &mut rng);
        let fwd = heads_forward(&h, &heads);
        assert!(fwd.fused.slice(s![.., 2..4]).iter().all(|&v| v == 0.5));
    }

    #[test]
    fn zero_fuse_softmax_half_decouples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut heads = random_heads(3, &mut rng);
        heads.w_fuse.slice_mut(s![2..4, ..]).fill(0.0);
        let h = random_matrix(4, 3, &mut rng);
        let a = end_logits(&h, &random_matrix(4, 2, &mut rng), &heads);
        let b = end_logits(&h, &random_matrix(4, 2, &mut rng), &heads);
        assert_eq!(a, b);
    }

    #[test]
    fn softmax_rows_are_distributions() {
        let m = random_matrix(20, 2, &mut ChaCha8Rng::seed_from_u64(6)) * 8.0;
        let p = row_softmax(&m);
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn uniform_logits_cost_ln2() {
        let inst = instance();
        let z = Array2::zeros((inst.len(), 2));
        let l = loss(&z, &z, &inst, true).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn confident_correct_logits_cost_nothing() {
        let inst = instance();
        let logits =
            Array2::from_shape_fn(
                (inst.len(), 2),
                |(i, c)| {
                    if usize::from(inst.y_start[i]) == c {
                        500.0
                    } else {
                        -500.0
                    }
                },
            );
        assert!(loss(&logits, &logits, &inst, true).unwrap() < 1e-12);
    }

    #[test]
    fn loss_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let inst = instance();
        let a = random_matrix(inst.len(), 2, &mut rng);
        let b = random_matrix(inst.len(), 2, &mut rng);
        let mut ls = 0.0;
        let mut le = 0.0;
        let mut count = 0.0;
        for i in 0..inst.len() {
            if inst.roles[i] != PositionRole::Context {
                continue;
            }
            count += 1.0;
            let ps = a[[i, inst.y_start[i] as usize]].exp() / (a[[i, 0]].exp() + a[[i, 1]].exp());
            let pe = b[[i, inst.y_end[i] as usize]].exp() / (b[[i, 0]].exp() + b[[i, 1]].exp());
            ls -= ps.ln();
            le -= pe.ln();
        }
        let want = (ls / count + le / count) / 2.0;
        assert!((loss(&a, &b, &inst, true).unwrap() - want).abs() < 1e-10);
    }

    #[test]
    fn no_supervised_positions_is_an_error() {
        let mut inst = instance();
        inst.roles.iter_mut().for_each(|r| *r = PositionRole::Sep);
        let z = Array2::zeros((inst.len(), 2));
        assert!(matches!(loss(&z, &z, &inst, true), Err(Error::NoSupervision(_))));
    }

    #[test]
    fn head_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let inst = instance();
        let heads = random_heads(4, &mut rng);
        let h = random_matrix(inst.len(), 4, &mut rng);
        let fwd = heads_forward(&h, &heads);
        let mut grads = SpanHeads::zeros(4);
        let (_, d_h) = heads_backward(&h, &heads, &fwd, &inst, true, &mut grads).unwrap();

        let eval = |heads: &SpanHeads, h: &Array2<f64>| {
            let f = heads_forward(h, heads);
            loss(&f.start_logits, &f.end_logits, &inst, true).unwrap()
        };
        let eps = 1e-5;
        let analytic: Vec<f64> = grads.slices().concat();
        let mut k = 0;
        for t in 0..6 {
            for j in 0..heads.slices()[t].len() {
                let mut plus = heads.clone();
                plus.slices_mut()[t][j] += eps;
                let mut minus = heads.clone();
                minus.slices_mut()[t][j] -= eps;
                let num = (eval(&plus, &h) - eval(&minus, &h)) / (2.0 * eps);
                assert!((num - analytic[k]).abs() < 1e-7, "tensor {t} index {j}: {num} vs {}", analytic[k]);
                k += 1;
            }
        }
        for idx in [(1, 0), (2, 3), (4, 1)] {
            let mut plus = h.clone();
            plus[idx] += eps;
            let mut minus = h.clone();
            minus[idx] -= eps;
            let num = (eval(&heads, &plus) - eval(&heads, &minus)) / (2.0 * eps);
            assert!((num - d_h[idx]).abs() < 1e-7);
        }
    }

    #[test]
    fn start_weights_get_gradient_through_end_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let inst = instance();
        let heads = random_heads(4, &mut rng);
        let h = random_matrix(inst.len(), 4, &mut rng);
        // The start term is identical in both runs; any difference comes from the end loss.
        let fwd = heads_forward(&h, &heads);
        let mut with = SpanHeads::zeros(4);
        heads_backward(&h, &heads, &fwd, &inst, true, &mut with).unwrap();
        let mut decoupled = heads.clone();
        decoupled.w_fuse.slice_mut(s![2..4, ..]).fill(0.0);
        let fwd2 = heads_forward(&h, &decoupled);
        let mut without = SpanHeads::zeros(4);
        heads_backward(&h, &decoupled, &fwd2, &inst, true, &mut without).unwrap();
        let diff: f64 = (&with.w_start - &without.w_start).iter().map(|v| v.abs()).sum();
        assert!(diff > 1e-6, "end loss must reach W_start through the softmax path");
    }
}
