//! Elementwise layers (ReLU, inverted dropout), residual addition, and
//! the mean-squared-error loss.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::{Mode, NnError, Tensor3};

/// Rectified linear unit.
#[derive(Debug, Clone, Default)]
pub struct Relu {
    mask: Option<Vec<bool>>,
}

impl Relu {
    pub fn new() -> Self {
        Relu { mask: None }
    }

    pub fn forward(&mut self, x: &Tensor3, mode: Mode) -> Result<Tensor3, NnError> {
        let mut y = x.clone();
        for v in &mut y.data {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        self.mask = if mode == Mode::Train {
            Some(x.data.iter().map(|&v| v > 0.0).collect())
        } else {
            None
        };
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor3) -> Result<Tensor3, NnError> {
        let mask = self.mask.as_ref().ok_or(NnError::NoForwardCache)?;
        if mask.len() != dy.data.len() {
            return Err(NnError::ShapeMismatch {
                what: "relu upstream gradient",
                got: dy.data.len().to_string(),
                want: mask.len().to_string(),
            });
        }
        let mut dx = dy.clone();
        for (d, &m) in dx.data.iter_mut().zip(mask) {
            if !m {
                *d = 0.0;
            }
        }
        Ok(dx)
    }
}

/// Inverted dropout: surviving activations are scaled by `1/(1-rate)` at
/// train time so eval mode is the identity.
#[derive(Debug, Clone)]
pub struct Dropout {
    pub rate: f64,
    rng: ChaCha8Rng,
    mask: Option<Vec<f64>>,
    eval_pass: bool,
}

impl Dropout {
    pub fn new(rate: f64, seed: u64) -> Result<Self, NnError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(NnError::BadDropoutRate(rate));
        }
        Ok(Dropout {
            rate,
            rng: ChaCha8Rng::seed_from_u64(seed),
            mask: None,
            eval_pass: false,
        })
    }

    /// Restarts the mask stream (used by the finite-difference harness to
    /// freeze the mask across repeated forwards).
    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    pub fn forward(&mut self, x: &Tensor3, mode: Mode) -> Result<Tensor3, NnError> {
        match mode {
            Mode::Eval => {
                self.mask = None;
                self.eval_pass = true;
                Ok(x.clone())
            }
            Mode::Train => {
                let keep = 1.0 - self.rate;
                let mask: Vec<f64> = (0..x.data.len())
                    .map(|_| {
                        if self.rng.gen::<f64>() < self.rate {
                            0.0
                        } else {
                            1.0 / keep
                        }
                    })
                    .collect();
                let mut y = x.clone();
                for (v, m) in y.data.iter_mut().zip(&mask) {
                    *v *= m;
                }
                self.mask = Some(mask);
                self.eval_pass = false;
                Ok(y)
            }
        }
    }

    pub fn backward(&mut self, dy: &Tensor3) -> Result<Tensor3, NnError> {
        if self.eval_pass {
            return Ok(dy.clone());
        }
        let mask = self.mask.as_ref().ok_or(NnError::NoForwardCache)?;
        if mask.len() != dy.data.len() {
            return Err(NnError::ShapeMismatch {
                what: "dropout upstream gradient",
                got: dy.data.len().to_string(),
                want: mask.len().to_string(),
            });
        }
        let mut dx = dy.clone();
        for (d, m) in dx.data.iter_mut().zip(mask) {
            *d *= m;
        }
        Ok(dx)
    }
}

/// Elementwise sum of two branches. The gradient of the sum flows to both
/// inputs unchanged.
pub fn residual_add(a: &Tensor3, b: &Tensor3) -> Result<Tensor3, NnError> {
    if !a.same_shape(b) {
        return Err(NnError::ShapeMismatch {
            what: "residual branches",
            got: format!("{:?}", b.shape()),
            want: format!("{:?}", a.shape()),
        });
    }
    let mut y = a.clone();
    y.add_assign(b)?;
    Ok(y)
}

/// Mean squared error and its gradient with respect to the prediction:
/// `d loss / d pred = 2 (pred - target) / N`.
pub fn mse_loss(pred: &Tensor3, target: &Tensor3) -> Result<(f64, Tensor3), NnError> {
    if !pred.same_shape(target) {
        return Err(NnError::ShapeMismatch {
            what: "mse operands",
            got: format!("{:?}", target.shape()),
            want: format!("{:?}", pred.shape()),
        });
    }
    let n = pred.data.len() as f64;
    let mut grad = pred.clone();
    let mut loss = 0.0;
    for (g, t) in grad.data.iter_mut().zip(&target.data) {
        let e = *g - t;
        loss += e * e;
        *g = 2.0 * e / n;
    }
    Ok((loss / n, grad))
}
