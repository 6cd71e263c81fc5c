//! Per-channel batch normalization over the (batch, time) axes.

use crate::tensor::{Mode, NnError, Tensor3};

#[derive(Debug, Clone)]
struct BnCache {
    xhat: Tensor3,
    inv_std: Vec<f64>,
    n: usize,
}

/// Batch normalization with learnable scale/shift and running statistics
/// for eval mode. Batch statistics use the 1/N variance; the running
/// variance tracks the unbiased N/(N-1) estimate, mirroring the common
/// deep-learning convention.
#[derive(Debug, Clone)]
pub struct BatchNorm1d {
    pub channels: usize,
    pub eps: f64,
    pub momentum: f64,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub dgamma: Vec<f64>,
    pub dbeta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    cache: Option<BnCache>,
}

impl BatchNorm1d {
    pub fn new(channels: usize) -> Self {
        BatchNorm1d {
            channels,
            eps: 1e-5,
            momentum: 0.1,
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            dgamma: vec![0.0; channels],
            dbeta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor3, mode: Mode) -> Result<Tensor3, NnError> {
        if x.channels != self.channels {
            return Err(NnError::ShapeMismatch {
                what: "batchnorm channels",
                got: x.channels.to_string(),
                want: self.channels.to_string(),
            });
        }
        let n = x.batch * x.time;
        let mut y = Tensor3::zeros(x.batch, x.channels, x.time);
        match mode {
            Mode::Train => {
                if n < 2 {
                    return Err(NnError::ShapeMismatch {
                        what: "batchnorm train population (batch*time)",
                        got: n.to_string(),
                        want: ">= 2".into(),
                    });
                }
                let mut xhat = Tensor3::zeros(x.batch, x.channels, x.time);
                let mut inv_std = vec![0.0; self.channels];
                for c in 0..self.channels {
                    let mut sum = 0.0;
                    let mut sq = 0.0;
                    for b in 0..x.batch {
                        for &v in x.channel(b, c) {
                            sum += v;
                            sq += v * v;
                        }
                    }
                    let mean = sum / n as f64;
                    let var = (sq / n as f64 - mean * mean).max(0.0);
                    let istd = 1.0 / (var + self.eps).sqrt();
                    inv_std[c] = istd;
                    let (g, be) = (self.gamma[c], self.beta[c]);
                    for b in 0..x.batch {
                        let xs = x.channel(b, c);
                        let hs = xhat.channel_mut(b, c);
                        for (h, &v) in hs.iter_mut().zip(xs) {
                            *h = (v - mean) * istd;
                        }
                    }
                    for b in 0..x.batch {
                        let hs: Vec<f64> = xhat.channel(b, c).to_vec();
                        let ys = y.channel_mut(b, c);
                        for (yv, h) in ys.iter_mut().zip(hs) {
                            *yv = g * h + be;
                        }
                    }
                    let unbiased = var * n as f64 / (n as f64 - 1.0);
                    self.running_mean[c] =
                        (1.0 - self.momentum) * self.running_mean[c] + self.momentum * mean;
                    self.running_var[c] =
                        (1.0 - self.momentum) * self.running_var[c] + self.momentum * unbiased;
                }
                self.cache = Some(BnCache { xhat, inv_std, n });
            }
            Mode::Eval => {
                for c in 0..self.channels {
                    let istd = 1.0 / (self.running_var[c] + self.eps).sqrt();
                    let scale = self.gamma[c] * istd;
                    let shift = self.beta[c] - scale * self.running_mean[c];
                    for b in 0..x.batch {
                        let xs = x.channel(b, c).to_vec();
                        let ys = y.channel_mut(b, c);
                        for (yv, v) in ys.iter_mut().zip(xs) {
                            *yv = scale * v + shift;
                        }
                    }
                }
                self.cache = None;
            }
        }
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor3) -> Result<Tensor3, NnError> {
        let cache = self.cache.as_ref().ok_or(NnError::NoForwardCache)?;
        let xhat = &cache.xhat;
        let n = cache.n as f64;
        let mut dx = Tensor3::zeros(dy.batch, dy.channels, dy.time);
        for c in 0..self.channels {
            let mut sum_dy = 0.0;
            let mut sum_dy_xhat = 0.0;
            for b in 0..dy.batch {
                let gs = dy.channel(b, c);
                let hs = xhat.channel(b, c);
                for (g, h) in gs.iter().zip(hs) {
                    sum_dy += g;
                    sum_dy_xhat += g * h;
                }
            }
            self.dbeta[c] += sum_dy;
            self.dgamma[c] += sum_dy_xhat;
            let scale = self.gamma[c] * cache.inv_std[c];
            let mean_dy = sum_dy / n;
            let mean_dy_xhat = sum_dy_xhat / n;
            for b in 0..dy.batch {
                let gs = dy.channel(b, c).to_vec();
                let hs = xhat.channel(b, c).to_vec();
                let ds = dx.channel_mut(b, c);
                for ((d, g), h) in ds.iter_mut().zip(gs).zip(hs) {
                    *d = scale * (g - mean_dy - h * mean_dy_xhat);
                }
            }
        }
        Ok(dx)
    }

    pub fn zero_grads(&mut self) {
        self.dgamma.iter_mut().for_each(|v| *v = 0.0);
        self.dbeta.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Vec<f64>, &mut Vec<f64>)) {
        f("gamma", &mut self.gamma, &mut self.dgamma);
        f("beta", &mut self.beta, &mut self.dbeta);
    }

    /// Persistent state beyond the trainable parameters (running stats),
    /// needed for checkpoints.
    pub fn visit_running_stats(&mut self, f: &mut dyn FnMut(&str, &mut Vec<f64>)) {
        f("running_mean", &mut self.running_mean);
        f("running_var", &mut self.running_var);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn filled(batch: usize, c: usize, t: usize, f: impl Fn(usize) -> f64) -> Tensor3 {
        Tensor3::from_vec(batch, c, t, (0..batch * c * t).map(f).collect()).unwrap()
    }

    #[test]
    fn train_mode_standardizes_each_channel() {
        let mut bn = BatchNorm1d::new(2);
        let x = filled(2, 2, 8, |i| (i as f64 * 0.7).sin() * 3.0 + 1.0);
        let y = bn.forward(&x, Mode::Train).unwrap();
        for c in 0..2 {
            let mut vals = Vec::new();
            for b in 0..2 {
                vals.extend_from_slice(y.channel(b, c));
            }
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-10);
            assert!((var - 1.0).abs() < 1e-3); // eps slightly shrinks it
        }
    }

    #[test]
    fn eval_mode_is_an_affine_map_independent_of_batch() {
        let mut bn = BatchNorm1d::new(1);
        bn.running_mean = vec![0.5];
        bn.running_var = vec![4.0];
        bn.gamma = vec![2.0];
        bn.beta = vec![-1.0];
        let a = filled(1, 1, 4, |i| i as f64);
        let b = filled(2, 1, 4, |i| (i as f64) * 10.0);
        let ya = bn.forward(&a, Mode::Eval).unwrap();
        // Same per-sample affine regardless of what else shares the batch.
        let expected = |v: f64| 2.0 * (v - 0.5) / (4.0f64 + 1e-5).sqrt() - 1.0;
        for (i, &v) in a.data.iter().enumerate() {
            assert!((ya.data[i] - expected(v)).abs() < 1e-12);
        }
        let yb = bn.forward(&b, Mode::Eval).unwrap();
        for (i, &v) in b.data.iter().enumerate() {
            assert!((yb.data[i] - expected(v)).abs() < 1e-12);
        }
    }

    #[test]
    fn running_stats_converge_to_the_data_statistics() {
        let mut bn = BatchNorm1d::new(1);
        let x = filled(4, 1, 16, |i| (i as f64 * 1.3).cos() * 2.0 + 5.0);
        for _ in 0..200 {
            bn.forward(&x, Mode::Train).unwrap();
        }
        let n = x.data.len() as f64;
        let mean = x.data.iter().sum::<f64>() / n;
        let var =
            x.data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n * n / (n - 1.0);
        assert!((bn.running_mean[0] - mean).abs() < 1e-6);
        assert!((bn.running_var[0] - var).abs() < 1e-6);
    }

    #[test]
    fn eval_backward_is_rejected() {
        let mut bn = BatchNorm1d::new(1);
        let x = filled(1, 1, 4, |i| i as f64);
        bn.forward(&x, Mode::Eval).unwrap();
        assert!(matches!(
            bn.backward(&Tensor3::zeros(1, 1, 4)),
            Err(NnError::NoForwardCache)
        ));
    }
}
