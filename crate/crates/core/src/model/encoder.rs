//! Pre-norm transformer encoder with hand-written backpropagation.
//!
//! ```text
//! x  = E_tok[ids] + E_pos[0..n]
//! x += Attn(LN1(x))      per block
//! x += FFN(LN2(x))       FFN = GELU(x·W1 + b1)·W2 + b2
//! H  = LN_final(x)
//! ```
//!
//! Dropout (training only) is applied to the embedding sum and to each
//! sublayer output before the residual add.

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::heads::row_softmax;
use super::params::{EncoderParams, LayerParams};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Dropout rate and the generator drawing its masks.
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut ChaCha8Rng,
}

impl Dropout<'_> {
    fn mask(&mut self, rows: usize, cols: usize) -> Option<Array2<f64>> {
        if self.rate <= 0.0 {
            return None;
        }
        let keep = 1.0 - self.rate;
        Some(Array2::from_shape_fn((rows, cols), |_| if self.rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 }))
    }
}

struct NormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

fn layer_norm(x: &Array2<f64>, gain: &Array1<f64>, bias: &Array1<f64>) -> (Array2<f64>, NormCache) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (i, mut row) in xhat.rows_mut().into_iter().enumerate() {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / d;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        row *= inv;
        inv_std[i] = inv;
    }
    let y = &xhat * gain + bias;
    (y, NormCache { xhat, inv_std })
}

fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &NormCache,
    gain: &Array1<f64>,
    d_gain: &mut Array1<f64>,
    d_bias: &mut Array1<f64>,
) -> Array2<f64> {
    *d_gain += &(dy * &cache.xhat).sum_axis(Axis(0));
    *d_bias += &dy.sum_axis(Axis(0));
    let dxhat = dy * gain;
    let d = dy.ncols() as f64;
    let mut dx = Array2::zeros(dy.raw_dim());
    for i in 0..dy.nrows() {
        let g = dxhat.row(i);
        let xh = cache.xhat.row(i);
        let sum_g = g.sum();
        let sum_gx = g.dot(&xh);
        let scale = cache.inv_std[i] / d;
        for j in 0..dy.ncols() {
            dx[[i, j]] = scale * (d * g[j] - sum_g - xh[j] * sum_gx);
        }
    }
    dx
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

struct LayerCache {
    ln1: NormCache,
    normed1: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    attn: Vec<Array2<f64>>,
    heads_out: Array2<f64>,
    attn_mask: Option<Array2<f64>>,
    ln2: NormCache,
    normed2: Array2<f64>,
    pre_act: Array2<f64>,
    act: Array2<f64>,
    ff_mask: Option<Array2<f64>>,
}

pub(crate) struct EncoderCache {
    ids: Vec<usize>,
    emb_mask: Option<Array2<f64>>,
    layers: Vec<LayerCache>,
    final_norm: NormCache,
}

fn apply_mask(x: &mut Array2<f64>, mask: &Option<Array2<f64>>) {
    if let Some(m) = mask {
        *x *= m;
    }
}

pub(crate) fn forward(
    p: &EncoderParams,
    ids: &[usize],
    n_heads: usize,
    mut dropout: Option<Dropout<'_>>,
) -> (Array2<f64>, EncoderCache) {
    let n = ids.len();
    let d = p.token_embedding.ncols();
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let mut x = Array2::zeros((n, d));
    for (i, &id) in ids.iter().enumerate() {
        let mut row = x.row_mut(i);
        row += &p.token_embedding.row(id);
        row += &p.position_embedding.row(i);
    }
    let emb_mask = dropout.as_mut().and_then(|dr| dr.mask(n, d));
    apply_mask(&mut x, &emb_mask);

    let mut layers = Vec::with_capacity(p.layers.len());
    for layer in &p.layers {
        let (normed1, ln1) = layer_norm(&x, &layer.ln1_gain, &layer.ln1_bias);
        let q = normed1.dot(&layer.w_q) + &layer.b_q;
        let k = normed1.dot(&layer.w_k) + &layer.b_k;
        let v = normed1.dot(&layer.w_v) + &layer.b_v;
        let mut heads_out = Array2::zeros((n, d));
        let mut attn = Vec::with_capacity(n_heads);
        for h in 0..n_heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
            let probs = row_softmax(&scores);
            heads_out.slice_mut(cols).assign(&probs.dot(&v.slice(cols)));
            attn.push(probs);
        }
        let mut z = heads_out.dot(&layer.w_o) + &layer.b_o;
        let attn_mask = dropout.as_mut().and_then(|dr| dr.mask(n, d));
        apply_mask(&mut z, &attn_mask);
        x += &z;

        let (normed2, ln2) = layer_norm(&x, &layer.ln2_gain, &layer.ln2_bias);
        let pre_act = normed2.dot(&layer.w_ff1) + &layer.b_ff1;
        let act = pre_act.mapv(gelu);
        let mut f = act.dot(&layer.w_ff2) + &layer.b_ff2;
        let ff_mask = dropout.as_mut().and_then(|dr| dr.mask(n, d));
        apply_mask(&mut f, &ff_mask);
        x += &f;

        layers.push(LayerCache {
            ln1,
            normed1,
            q,
            k,
            v,
            attn,
            heads_out,
            attn_mask,
            ln2,
            normed2,
            pre_act,
            act,
            ff_mask,
        });
    }
    let (h, final_norm) = layer_norm(&x, &p.final_gain, &p.final_bias);
    (h, EncoderCache { ids: ids.to_vec(), emb_mask, layers, final_norm })
}

/// Accumulates encoder gradients for `dL/dH` into `g`.
pub(crate) fn backward(p: &EncoderParams, cache: &EncoderCache, d_h: &Array2<f64>, g: &mut EncoderParams) {
    let n_heads = cache.layers.first().map_or(1, |l| l.attn.len());
    let d = p.token_embedding.ncols();
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let mut dx = layer_norm_backward(d_h, &cache.final_norm, &p.final_gain, &mut g.final_gain, &mut g.final_bias);

    for ((layer, lc), lg) in p.layers.iter().zip(&cache.layers).zip(g.layers.iter_mut()).rev() {
        backward_ffn(layer, lc, lg, &mut dx);
        backward_attention(layer, lc, lg, &mut dx, n_heads, dh, scale);
    }

    apply_mask(&mut dx, &cache.emb_mask);
    for (i, &id) in cache.ids.iter().enumerate() {
        let mut row = g.token_embedding.row_mut(id);
        row += &dx.row(i);
        let mut row = g.position_embedding.row_mut(i);
        row += &dx.row(i);
    }
}

fn backward_ffn(layer: &LayerParams, lc: &LayerCache, lg: &mut LayerParams, dx: &mut Array2<f64>) {
    let mut df = dx.clone();
    apply_mask(&mut df, &lc.ff_mask);
    lg.w_ff2 += &lc.act.t().dot(&df);
    lg.b_ff2 += &df.sum_axis(Axis(0));
    let d_act = df.dot(&layer.w_ff2.t());
    let d_pre = &d_act * &lc.pre_act.mapv(gelu_grad);
    lg.w_ff1 += &lc.normed2.t().dot(&d_pre);
    lg.b_ff1 += &d_pre.sum_axis(Axis(0));
    let d_normed = d_pre.dot(&layer.w_ff1.t());
    *dx += &layer_norm_backward(&d_normed, &lc.ln2, &layer.ln2_gain, &mut lg.ln2_gain, &mut lg.ln2_bias);
}

fn backward_attention(
    layer: &LayerParams,
    lc: &LayerCache,
    lg: &mut LayerParams,
    dx: &mut Array2<f64>,
    n_heads: usize,
    dh: usize,
    scale: f64,
) {
    let mut dz = dx.clone();
    apply_mask(&mut dz, &lc.attn_mask);
    lg.w_o += &lc.heads_out.t().dot(&dz);
    lg.b_o += &dz.sum_axis(Axis(0));
    let d_heads = dz.dot(&layer.w_o.t());

    let mut dq = Array2::zeros(lc.q.raw_dim());
    let mut dk = Array2::zeros(lc.k.raw_dim());
    let mut dv = Array2::zeros(lc.v.raw_dim());
    for h in 0..n_heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let probs = &lc.attn[h];
        let d_out = d_heads.slice(cols);
        let d_probs = d_out.dot(&lc.v.slice(cols).t());
        dv.slice_mut(cols).assign(&probs.t().dot(&d_out));
        let mut d_scores = Array2::zeros(probs.raw_dim());
        for i in 0..probs.nrows() {
            let dot = probs.row(i).dot(&d_probs.row(i));
            for j in 0..probs.ncols() {
                d_scores[[i, j]] = probs[[i, j]] * (d_probs[[i, j]] - dot) * scale;
            }
        }
        dq.slice_mut(cols).assign(&d_scores.dot(&lc.k.slice(cols)));
        dk.slice_mut(cols).assign(&d_scores.t().dot(&lc.q.slice(cols)));
    }

    let a_t = lc.normed1.t();
    lg.w_q += &a_t.dot(&dq);
    lg.b_q += &dq.sum_axis(Axis(0));
    lg.w_k += &a_t.dot(&dk);
    lg.b_k += &dk.sum_axis(Axis(0));
    lg.w_v += &a_t.dot(&dv);
    lg.b_v += &dv.sum_axis(Axis(0));
    let d_normed = dq.dot(&layer.w_q.t()) + dk.dot(&layer.w_k.t()) + dv.dot(&layer.w_v.t());
    *dx += &layer_norm_backward(&d_normed, &lc.ln1, &layer.ln1_gain, &mut lg.ln1_gain, &mut lg.ln1_bias);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_derivative_matches_difference() {
        for x in [-3.0, -0.7, 0.0, 0.3, 2.5] {
            let num = (gelu(x + 1e-6) - gelu(x - 1e-6)) / 2e-6;
            assert!((num - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn layer_norm_rows_are_standardized() {
        let x = Array2::from_shape_fn((3, 6), |(i, j)| (i * 7 + j * j) as f64);
        let (y, _) = layer_norm(&x, &Array1::ones(6), &Array1::zeros(6));
        for row in y.rows() {
            assert!(row.sum().abs() < 1e-9);
            let var = row.iter().map(|v| v * v).sum::<f64>() / 6.0;
            assert!((var - 1.0).abs() < 1e-3);
        }
    }
}
