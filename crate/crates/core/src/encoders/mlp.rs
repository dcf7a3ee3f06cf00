//! Two-layer perceptron with tanh hidden activation and a unit-normalized
//! output, plus manual backprop and a decoupled-weight-decay Adam optimizer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// y = normalize(W2 · tanh(W1 x + b1) + b2). Weights are row-major
/// (out × in).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub in_dim: usize,
    pub hidden: usize,
    pub out_dim: usize,
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: Vec<f64>,
    pub hidden: Vec<f64>,
    pub pre_norm: Vec<f64>,
    pub norm: f64,
}

/// Gradients with the same layout as [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Mlp {
    pub fn new(in_dim: usize, hidden: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let init = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
            let scale = 1.0 / (cols as f64).sqrt();
            (0..rows * cols)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect()
        };
        Self {
            w1: init(hidden, in_dim, rng),
            b1: vec![0.0; hidden],
            w2: init(out_dim, hidden, rng),
            b2: vec![0.0; out_dim],
            in_dim,
            hidden,
            out_dim,
        }
    }

    pub fn seeded(in_dim: usize, hidden: usize, out_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::new(in_dim, hidden, out_dim, &mut rng)
    }

    /// Forward pass returning the unit-norm embedding and the cache.
    pub fn forward(&self, input: &[f64]) -> (Vec<f64>, ForwardCache) {
        debug_assert_eq!(input.len(), self.in_dim);
        let mut hidden = vec![0.0; self.hidden];
        for (h, (row, bias)) in hidden
            .iter_mut()
            .zip(self.w1.chunks_exact(self.in_dim).zip(&self.b1))
        {
            let z: f64 = row.iter().zip(input).map(|(w, x)| w * x).sum();
            *h = (z + bias).tanh();
        }
        let mut pre_norm = vec![0.0; self.out_dim];
        for (u, (row, bias)) in pre_norm
            .iter_mut()
            .zip(self.w2.chunks_exact(self.hidden).zip(&self.b2))
        {
            *u = row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>() + bias;
        }
        let norm = crate::linalg::l2_norm(&pre_norm).max(1e-12);
        let embedding = pre_norm.iter().map(|u| u / norm).collect();
        (
            embedding,
            ForwardCache {
                input: input.to_vec(),
                hidden,
                pre_norm,
                norm,
            },
        )
    }

    /// Accumulate parameter gradients given dL/d(embedding).
    pub fn backward(&self, cache: &ForwardCache, grad_embedding: &[f64], grads: &mut MlpGrads) {
        // Through the normalization: du = (g - (e·g) e) / ‖u‖.
        let e: Vec<f64> = cache.pre_norm.iter().map(|u| u / cache.norm).collect();
        let e_dot_g = crate::linalg::dot(&e, grad_embedding);
        let grad_pre: Vec<f64> = grad_embedding
            .iter()
            .zip(&e)
            .map(|(g, ei)| (g - e_dot_g * ei) / cache.norm)
            .collect();

        // Output layer.
        for (o, &gp) in grad_pre.iter().enumerate() {
            grads.b2[o] += gp;
            let row = &mut grads.w2[o * self.hidden..(o + 1) * self.hidden];
            for (gw, h) in row.iter_mut().zip(&cache.hidden) {
                *gw += gp * h;
            }
        }

        // Through tanh into the hidden layer.
        let mut grad_hidden = vec![0.0; self.hidden];
        for (o, &gp) in grad_pre.iter().enumerate() {
            let row = &self.w2[o * self.hidden..(o + 1) * self.hidden];
            for (gh, w) in grad_hidden.iter_mut().zip(row) {
                *gh += gp * w;
            }
        }
        for (gh, h) in grad_hidden.iter_mut().zip(&cache.hidden) {
            *gh *= 1.0 - h * h;
        }

        for (h, &gh) in grad_hidden.iter().enumerate() {
            grads.b1[h] += gh;
            let row = &mut grads.w1[h * self.in_dim..(h + 1) * self.in_dim];
            for (gw, x) in row.iter_mut().zip(&cache.input) {
                *gw += gh * x;
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// Copy parameters into a flat buffer, w1 b1 w2 b2 order.
    pub fn write_flat(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.w1);
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(&self.w2);
        out.extend_from_slice(&self.b2);
    }

    /// Read parameters back from a flat buffer; returns consumed length.
    pub fn read_flat(&mut self, flat: &[f64]) -> usize {
        let mut pos = 0;
        for block in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            let len = block.len();
            block.copy_from_slice(&flat[pos..pos + len]);
            pos += len;
        }
        pos
    }
}

impl MlpGrads {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            w1: vec![0.0; mlp.w1.len()],
            b1: vec![0.0; mlp.b1.len()],
            w2: vec![0.0; mlp.w2.len()],
            b2: vec![0.0; mlp.b2.len()],
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for block in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            for g in block.iter_mut() {
                *g *= factor;
            }
        }
    }

    pub fn write_flat(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.w1);
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(&self.w2);
        out.extend_from_slice(&self.b2);
    }
}

/// Adam with decoupled weight decay over one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamW {
    pub fn new(lr: f64, param_count: usize) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-2,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One update step: params ← params − lr·(m̂/(√v̂+ε) + wd·params).
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * (m_hat / (v_hat.sqrt() + self.eps) + self.weight_decay * params[i]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::central_diff;

    #[test]
    fn forward_output_is_unit_norm() {
        let mlp = Mlp::seeded(6, 8, 4, 1);
        let (e, _) = mlp.forward(&[0.3, -0.2, 0.9, 0.0, 0.5, -0.7]);
        assert!((crate::linalg::l2_norm(&e) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_weights_give_bias_direction() {
        let mut mlp = Mlp::seeded(3, 4, 2, 2);
        for w in mlp.w1.iter_mut().chain(mlp.w2.iter_mut()).chain(mlp.b1.iter_mut()) {
            *w = 0.0;
        }
        mlp.b2 = vec![3.0, 4.0];
        let (e1, _) = mlp.forward(&[1.0, 2.0, 3.0]);
        let (e2, _) = mlp.forward(&[-5.0, 0.0, 9.0]);
        assert_eq!(e1, e2);
        assert!((e1[0] - 0.6).abs() < 1e-12);
        assert!((e1[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn identical_inputs_give_identical_embeddings() {
        let mlp = Mlp::seeded(5, 6, 3, 3);
        let x = vec![0.1, 0.2, 0.3, 0.4, 0.5];
        assert_eq!(mlp.forward(&x).0, mlp.forward(&x).0);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mlp = Mlp::seeded(4, 5, 3, 17);
        let x = vec![0.25, -0.8, 0.4, 0.1];
        // Scalar objective: dot of embedding with a fixed direction.
        let probe = vec![0.7, -0.3, 0.5];
        let (e, cache) = mlp.forward(&x);
        let _ = e;
        let mut grads = MlpGrads::zeros_like(&mlp);
        mlp.backward(&cache, &probe, &mut grads);

        let objective = |m: &Mlp| -> f64 {
            let (e, _) = m.forward(&x);
            crate::linalg::dot(&e, &probe)
        };
        let blocks: [(fn(&mut Mlp) -> &mut Vec<f64>, &Vec<f64>); 4] = [
            (|m| &mut m.w1, &grads.w1),
            (|m| &mut m.b1, &grads.b1),
            (|m| &mut m.w2, &grads.w2),
            (|m| &mut m.b2, &grads.b2),
        ];
        for (pick, analytic) in blocks {
            for i in 0..analytic.len() {
                let fd = central_diff(1e-6, |eps| {
                    let mut probe_mlp = mlp.clone();
                    pick(&mut probe_mlp)[i] += eps;
                    objective(&probe_mlp)
                });
                let a = analytic[i];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);
                assert!(rel < 1e-4, "index {i}: analytic {a} vs fd {fd}");
            }
        }
    }

    #[test]
    fn flat_round_trip() {
        let mlp = Mlp::seeded(3, 4, 2, 5);
        let mut flat = Vec::new();
        mlp.write_flat(&mut flat);
        assert_eq!(flat.len(), mlp.param_count());
        let mut copy = Mlp::seeded(3, 4, 2, 99);
        let consumed = copy.read_flat(&flat);
        assert_eq!(consumed, flat.len());
        assert_eq!(copy, mlp);
    }

    #[test]
    fn adamw_descends_a_quadratic() {
        // Minimize ‖p - target‖² from zero.
        let target = [1.0, -2.0, 0.5];
        let mut params = vec![0.0; 3];
        let mut opt = AdamW::new(0.05, 3);
        opt.weight_decay = 0.0;
        for _ in 0..2000 {
            let grads: Vec<f64> = params.iter().zip(&target).map(|(p, t)| 2.0 * (p - t)).collect();
            opt.step(&mut params, &grads);
        }
        for (p, t) in params.iter().zip(&target) {
            assert!((p - t).abs() < 1e-3, "{p} vs {t}");
        }
    }

    #[test]
    fn weight_decay_shrinks_parameters() {
        let mut params = vec![5.0];
        let mut opt = AdamW::new(0.1, 1);
        for _ in 0..100 {
            opt.step(&mut params, &[0.0]);
        }
        assert!(params[0] < 5.0 && params[0] > 0.0);
    }
}
