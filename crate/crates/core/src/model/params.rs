//! Parameter containers. Every tensor is a standard-layout `ndarray`, so the
//! whole model can be walked as a fixed-order list of flat slices; the
//! optimizer, checkpoints and gradient checks all rely on that order.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::config::ModelConfig;

macro_rules! tensor_walk {
    ($ty:ident { $($field:ident),* $(,)? }) => {
        impl $ty {
            fn push_slices<'a>(&'a self, out: &mut Vec<&'a [f64]>) {
                $( out.push(self.$field.as_slice().expect("standard layout")); )*
            }

            fn push_slices_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
                $( out.push(self.$field.as_slice_mut().expect("standard layout")); )*
            }

            fn push_names(&self, prefix: &str, out: &mut Vec<String>) {
                $( out.push(format!("{prefix}{}", stringify!($field))); )*
            }

            fn zeros_like(&self) -> Self {
                $ty { $( $field: ndarray::Array::zeros(self.$field.raw_dim()), )* }
            }
        }
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1_gain: Array1<f64>,
    pub ln1_bias: Array1<f64>,
    pub w_q: Array2<f64>,
    pub b_q: Array1<f64>,
    pub w_k: Array2<f64>,
    pub b_k: Array1<f64>,
    pub w_v: Array2<f64>,
    pub b_v: Array1<f64>,
    pub w_o: Array2<f64>,
    pub b_o: Array1<f64>,
    pub ln2_gain: Array1<f64>,
    pub ln2_bias: Array1<f64>,
    pub w_ff1: Array2<f64>,
    pub b_ff1: Array1<f64>,
    pub w_ff2: Array2<f64>,
    pub b_ff2: Array1<f64>,
}

tensor_walk!(LayerParams {
    ln1_gain,
    ln1_bias,
    w_q,
    b_q,
    w_k,
    b_k,
    w_v,
    b_v,
    w_o,
    b_o,
    ln2_gain,
    ln2_bias,
    w_ff1,
    b_ff1,
    w_ff2,
    b_ff2,
});

/// Token and position embeddings, pre-norm blocks, final layer norm.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub token_embedding: Array2<f64>,
    pub position_embedding: Array2<f64>,
    pub layers: Vec<LayerParams>,
    pub final_gain: Array1<f64>,
    pub final_bias: Array1<f64>,
}

/// Start head, end head, and the 4→2 layer fusing the end projection with
/// the start probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanHeads {
    pub w_start: Array2<f64>,
    pub b_start: Array1<f64>,
    pub w_end: Array2<f64>,
    pub b_end: Array1<f64>,
    pub w_fuse: Array2<f64>,
    pub b_fuse: Array1<f64>,
}

tensor_walk!(SpanHeads { w_start, b_start, w_end, b_end, w_fuse, b_fuse });

impl SpanHeads {
    pub fn zeros(d_model: usize) -> Self {
        SpanHeads {
            w_start: Array2::zeros((d_model, 2)),
            b_start: Array1::zeros(2),
            w_end: Array2::zeros((d_model, 2)),
            b_end: Array1::zeros(2),
            w_fuse: Array2::zeros((4, 2)),
            b_fuse: Array1::zeros(2),
        }
    }

    /// Weights uniform in ±1/√fan_in, biases zero.
    pub fn init<R: Rng>(d_model: usize, rng: &mut R) -> Self {
        let mut heads = SpanHeads::zeros(d_model);
        fill_uniform(&mut heads.w_start, rng);
        fill_uniform(&mut heads.w_end, rng);
        fill_uniform(&mut heads.w_fuse, rng);
        heads
    }

    pub fn d_model(&self) -> usize {
        self.w_start.nrows()
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        self.push_slices(&mut out);
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        self.push_slices_mut(&mut out);
        out
    }

    pub fn zeroed(&self) -> Self {
        self.zeros_like()
    }
}

fn fill_uniform<R: Rng>(w: &mut Array2<f64>, rng: &mut R) {
    let bound = 1.0 / (w.nrows() as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    w.mapv_inplace(|_| dist.sample(rng));
}

fn fill_normal<R: Rng>(w: &mut Array2<f64>, std: f64, rng: &mut R) {
    let dist = Normal::new(0.0, std).expect("positive std");
    w.mapv_inplace(|_| dist.sample(rng));
}

/// A fixed-order collection of flat tensors that the optimizer can update.
pub trait Tensors: Clone {
    fn slices(&self) -> Vec<&[f64]>;
    fn slices_mut(&mut self) -> Vec<&mut [f64]>;
    fn zeros_like(&self) -> Self;
}

impl Tensors for SpanHeads {
    fn slices(&self) -> Vec<&[f64]> {
        SpanHeads::slices(self)
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        SpanHeads::slices_mut(self)
    }

    fn zeros_like(&self) -> Self {
        self.zeroed()
    }
}

impl Tensors for Params {
    fn slices(&self) -> Vec<&[f64]> {
        Params::slices(self)
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        Params::slices_mut(self)
    }

    fn zeros_like(&self) -> Self {
        Params::zeros_like(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub encoder: EncoderParams,
    pub heads: SpanHeads,
}

impl Params {
    /// Token embeddings ~ N(0, 1), position embeddings and encoder weights
    /// ~ N(0, 1/fan_in), layer-norm gains 1, biases 0, heads uniform.
    ///
    /// Unit-scale token embeddings keep token identity comparable in size to
    /// the sublayer outputs added to the residual stream; at 1/√d they are
    /// swamped by attention mixing and learning at small rates stalls.
    pub fn init<R: Rng>(cfg: &ModelConfig, vocab_size: usize, rng: &mut R) -> Self {
        let d = cfg.d_model;
        let scale = 1.0 / (d as f64).sqrt();
        let mut token_embedding = Array2::zeros((vocab_size, d));
        fill_normal(&mut token_embedding, 1.0, rng);
        let mut position_embedding = Array2::zeros((cfg.max_seq_len, d));
        fill_normal(&mut position_embedding, scale, rng);

        let layers = (0..cfg.n_layers)
            .map(|_| {
                let mut square = || {
                    let mut w = Array2::zeros((d, d));
                    fill_normal(&mut w, scale, rng);
                    w
                };
                let (w_q, w_k, w_v, w_o) = (square(), square(), square(), square());
                let mut w_ff1 = Array2::zeros((d, cfg.d_ff));
                fill_normal(&mut w_ff1, scale, rng);
                let mut w_ff2 = Array2::zeros((cfg.d_ff, d));
                fill_normal(&mut w_ff2, 1.0 / (cfg.d_ff as f64).sqrt(), rng);
                LayerParams {
                    ln1_gain: Array1::ones(d),
                    ln1_bias: Array1::zeros(d),
                    w_q,
                    b_q: Array1::zeros(d),
                    w_k,
                    b_k: Array1::zeros(d),
                    w_v,
                    b_v: Array1::zeros(d),
                    w_o,
                    b_o: Array1::zeros(d),
                    ln2_gain: Array1::ones(d),
                    ln2_bias: Array1::zeros(d),
                    w_ff1,
                    b_ff1: Array1::zeros(cfg.d_ff),
                    w_ff2,
                    b_ff2: Array1::zeros(d),
                }
            })
            .collect();

        Params {
            encoder: EncoderParams {
                token_embedding,
                position_embedding,
                layers,
                final_gain: Array1::ones(d),
                final_bias: Array1::zeros(d),
            },
            heads: SpanHeads::init(d, rng),
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let e = &self.encoder;
        let mut out: Vec<&[f64]> = vec![
            e.token_embedding.as_slice().expect("standard layout"),
            e.position_embedding.as_slice().expect("standard layout"),
        ];
        for layer in &e.layers {
            layer.push_slices(&mut out);
        }
        out.push(e.final_gain.as_slice().expect("standard layout"));
        out.push(e.final_bias.as_slice().expect("standard layout"));
        self.heads.push_slices(&mut out);
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let e = &mut self.encoder;
        let mut out: Vec<&mut [f64]> = vec![
            e.token_embedding.as_slice_mut().expect("standard layout"),
            e.position_embedding.as_slice_mut().expect("standard layout"),
        ];
        for layer in &mut e.layers {
            layer.push_slices_mut(&mut out);
        }
        out.push(e.final_gain.as_slice_mut().expect("standard layout"));
        out.push(e.final_bias.as_slice_mut().expect("standard layout"));
        self.heads.push_slices_mut(&mut out);
        out
    }

    /// Tensor names, aligned with [`Params::slices`].
    pub fn names(&self) -> Vec<String> {
        let mut out = vec!["token_embedding".to_string(), "position_embedding".to_string()];
        for (i, layer) in self.encoder.layers.iter().enumerate() {
            layer.push_names(&format!("layer{i}."), &mut out);
        }
        out.push("final_gain".into());
        out.push("final_bias".into());
        self.heads.push_names("heads.", &mut out);
        out
    }

    pub fn zeros_like(&self) -> Self {
        let e = &self.encoder;
        Params {
            encoder: EncoderParams {
                token_embedding: Array2::zeros(e.token_embedding.raw_dim()),
                position_embedding: Array2::zeros(e.position_embedding.raw_dim()),
                layers: e.layers.iter().map(LayerParams::zeros_like).collect(),
                final_gain: Array1::zeros(e.final_gain.raw_dim()),
                final_bias: Array1::zeros(e.final_bias.raw_dim()),
            },
            heads: self.heads.zeros_like(),
        }
    }

    pub fn num_values(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Params, scale: f64) {
        for (dst, src) in self.slices_mut().into_iter().zip(other.slices()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}
