use super::params::Tensors;

/// Adam with bias correction; no weight decay.
#[derive(Debug, Clone)]
pub struct Adam<P> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: P,
    v: P,
}

impl<P: Tensors> Adam<P> {
    pub fn new(params: &P, learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    pub fn step(&mut self, params: &mut P, grads: &P) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.eps);
        let tensors =
            params.slices_mut().into_iter().zip(grads.slices()).zip(self.m.slices_mut()).zip(self.v.slices_mut());
        for (((p, g), m), v) in tensors {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::model::{ModelConfig, Params};

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = ModelConfig::tiny();
        let mut p = Params::init(&cfg, 6, &mut ChaCha8Rng::seed_from_u64(0));
        let before = p.clone();
        let mut g = p.zeros_like();
        g.heads.b_start[0] = 3.0;
        g.heads.b_start[1] = -0.5;
        let mut opt = Adam::new(&p, 0.01);
        opt.step(&mut p, &g);
        assert!((before.heads.b_start[0] - p.heads.b_start[0] - 0.01).abs() < 1e-9);
        assert!((p.heads.b_start[1] - before.heads.b_start[1] - 0.01).abs() < 1e-9);
        assert_eq!(p.encoder.token_embedding, before.encoder.token_embedding);
        assert_eq!(opt.steps(), 1);
    }
}
