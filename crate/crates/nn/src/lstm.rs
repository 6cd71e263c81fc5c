//! Unidirectional and bidirectional LSTM over (batch, channels, time)
//! tensors, with full backpropagation through time.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::{mm_nn, mm_nt, mm_tn};
use crate::tensor::{Mode, NnError, Tensor3};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-sequence caches saved by the forward pass for backpropagation.
#[derive(Debug, Clone)]
struct LstmCache {
    /// Input per step, (T, B, In).
    x_steps: Vec<f64>,
    /// Post-activation gates i,f,g,o per step, (T, B, 4H).
    gates: Vec<f64>,
    /// Cell state per step, (T, B, H).
    c: Vec<f64>,
    /// tanh of the cell state per step, (T, B, H).
    tanh_c: Vec<f64>,
    /// Hidden state fed *into* each step, (T, B, H).
    h_prev: Vec<f64>,
    batch: usize,
    t_len: usize,
}

/// Single-direction LSTM with the standard (input, forget, cell, output)
/// gate set, zero initial state, and zero forget-gate bias.
#[derive(Debug, Clone)]
pub struct Lstm {
    pub input_size: usize,
    pub hidden: usize,
    /// (4H, In) input projection; gate rows ordered i, f, g, o.
    pub w_ih: Vec<f64>,
    /// (4H, H) recurrent projection.
    pub w_hh: Vec<f64>,
    pub b_ih: Vec<f64>,
    pub b_hh: Vec<f64>,
    pub dw_ih: Vec<f64>,
    pub dw_hh: Vec<f64>,
    pub db_ih: Vec<f64>,
    pub db_hh: Vec<f64>,
    cache: Option<LstmCache>,
}

impl Lstm {
    pub fn new(input_size: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (1.0 / hidden as f64).sqrt();
        let mut init = |len: usize| -> Vec<f64> {
            (0..len).map(|_| rng.gen_range(-bound..bound)).collect()
        };
        let g4 = 4 * hidden;
        Lstm {
            input_size,
            hidden,
            w_ih: init(g4 * input_size),
            w_hh: init(g4 * hidden),
            b_ih: init(g4),
            b_hh: init(g4),
            dw_ih: vec![0.0; g4 * input_size],
            dw_hh: vec![0.0; g4 * hidden],
            db_ih: vec![0.0; g4],
            db_hh: vec![0.0; g4],
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor3, mode: Mode) -> Result<Tensor3, NnError> {
        if x.channels != self.input_size {
            return Err(NnError::ShapeMismatch {
                what: "lstm input channels",
                got: x.channels.to_string(),
                want: self.input_size.to_string(),
            });
        }
        let (bsz, t_len, h, inp) = (x.batch, x.time, self.hidden, self.input_size);
        let g4 = 4 * h;

        // Repack the input as (T, B, In) so each step is contiguous.
        let mut x_steps = vec![0.0; t_len * bsz * inp];
        for b in 0..bsz {
            for ci in 0..inp {
                let xs = x.channel(b, ci);
                for t in 0..t_len {
                    x_steps[(t * bsz + b) * inp + ci] = xs[t];
                }
            }
        }

        let mut gates = vec![0.0; t_len * bsz * g4];
        let mut c_all = vec![0.0; t_len * bsz * h];
        let mut tanh_c_all = vec![0.0; t_len * bsz * h];
        let mut h_prev_all = vec![0.0; t_len * bsz * h];
        let mut h_state = vec![0.0; bsz * h];
        let mut c_state = vec![0.0; bsz * h];
        let mut h_steps = vec![0.0; t_len * bsz * h];

        let bias: Vec<f64> = self
            .b_ih
            .iter()
            .zip(&self.b_hh)
            .map(|(a, b)| a + b)
            .collect();

        for t in 0..t_len {
            h_prev_all[t * bsz * h..(t + 1) * bsz * h].copy_from_slice(&h_state);
            let z = &mut gates[t * bsz * g4..(t + 1) * bsz * g4];
            for b in 0..bsz {
                z[b * g4..(b + 1) * g4].copy_from_slice(&bias);
            }
            let x_t = &x_steps[t * bsz * inp..(t + 1) * bsz * inp];
            mm_nt(z, x_t, &self.w_ih, bsz, inp, g4);
            mm_nt(z, &h_state, &self.w_hh, bsz, h, g4);
            let c_t = &mut c_all[t * bsz * h..(t + 1) * bsz * h];
            let tc_t = &mut tanh_c_all[t * bsz * h..(t + 1) * bsz * h];
            for b in 0..bsz {
                let zb = &mut z[b * g4..(b + 1) * g4];
                for k in 0..h {
                    zb[k] = sigmoid(zb[k]); // i
                    zb[h + k] = sigmoid(zb[h + k]); // f
                    zb[2 * h + k] = zb[2 * h + k].tanh(); // g
                    zb[3 * h + k] = sigmoid(zb[3 * h + k]); // o
                }
                for k in 0..h {
                    let idx = b * h + k;
                    let c_new = zb[h + k] * c_state[idx] + zb[k] * zb[2 * h + k];
                    c_t[idx] = c_new;
                    let tc = c_new.tanh();
                    tc_t[idx] = tc;
                    h_state[idx] = zb[3 * h + k] * tc;
                }
            }
            c_state.copy_from_slice(c_t);
            h_steps[t * bsz * h..(t + 1) * bsz * h].copy_from_slice(&h_state);
        }

        // Repack hidden states as (B, H, T).
        let mut y = Tensor3::zeros(bsz, h, t_len);
        for b in 0..bsz {
            for k in 0..h {
                let yo = y.channel_mut(b, k);
                for t in 0..t_len {
                    yo[t] = h_steps[(t * bsz + b) * h + k];
                }
            }
        }

        self.cache = if mode == Mode::Train {
            Some(LstmCache {
                x_steps,
                gates,
                c: c_all,
                tanh_c: tanh_c_all,
                h_prev: h_prev_all,
                batch: bsz,
                t_len,
            })
        } else {
            None
        };
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor3) -> Result<Tensor3, NnError> {
        let cache = self.cache.as_ref().ok_or(NnError::NoForwardCache)?;
        let (bsz, t_len, h, inp) = (cache.batch, cache.t_len, self.hidden, self.input_size);
        let g4 = 4 * h;
        if dy.shape() != (bsz, h, t_len) {
            return Err(NnError::ShapeMismatch {
                what: "lstm upstream gradient",
                got: format!("{:?}", dy.shape()),
                want: format!("{:?}", (bsz, h, t_len)),
            });
        }

        let mut dh = vec![0.0; bsz * h];
        let mut dc = vec![0.0; bsz * h];
        let mut dz = vec![0.0; bsz * g4];
        let mut dx_steps = vec![0.0; t_len * bsz * inp];

        for t in (0..t_len).rev() {
            // Upstream gradient for this step's hidden output.
            for b in 0..bsz {
                for k in 0..h {
                    dh[b * h + k] += dy.get(b, k, t);
                }
            }
            let gates = &cache.gates[t * bsz * g4..(t + 1) * bsz * g4];
            let tc = &cache.tanh_c[t * bsz * h..(t + 1) * bsz * h];
            let c_prev_zeros;
            let c_prev: &[f64] = if t > 0 {
                &cache.c[(t - 1) * bsz * h..t * bsz * h]
            } else {
                c_prev_zeros = vec![0.0; bsz * h];
                &c_prev_zeros
            };
            for b in 0..bsz {
                let gb = &gates[b * g4..(b + 1) * g4];
                let dzb = &mut dz[b * g4..(b + 1) * g4];
                for k in 0..h {
                    let idx = b * h + k;
                    let (gi, gf, gg, go) = (gb[k], gb[h + k], gb[2 * h + k], gb[3 * h + k]);
                    let dho = dh[idx];
                    let d_o = dho * tc[idx];
                    let dct = dc[idx] + dho * go * (1.0 - tc[idx] * tc[idx]);
                    let d_i = dct * gg;
                    let d_f = dct * c_prev[idx];
                    let d_g = dct * gi;
                    dzb[k] = d_i * gi * (1.0 - gi);
                    dzb[h + k] = d_f * gf * (1.0 - gf);
                    dzb[2 * h + k] = d_g * (1.0 - gg * gg);
                    dzb[3 * h + k] = d_o * go * (1.0 - go);
                    dc[idx] = dct * gf; // carried to step t-1
                }
            }
            let x_t = &cache.x_steps[t * bsz * inp..(t + 1) * bsz * inp];
            let h_prev_t = &cache.h_prev[t * bsz * h..(t + 1) * bsz * h];
            mm_tn(&mut self.dw_ih, &dz, x_t, g4, bsz, inp);
            mm_tn(&mut self.dw_hh, &dz, h_prev_t, g4, bsz, h);
            for b in 0..bsz {
                let dzb = &dz[b * g4..(b + 1) * g4];
                for (k, v) in dzb.iter().enumerate() {
                    self.db_ih[k] += v;
                    self.db_hh[k] += v;
                }
            }
            let dx_t = &mut dx_steps[t * bsz * inp..(t + 1) * bsz * inp];
            mm_nn(dx_t, &dz, &self.w_ih, bsz, g4, inp);
            dh.iter_mut().for_each(|v| *v = 0.0);
            mm_nn(&mut dh, &dz, &self.w_hh, bsz, g4, h);
        }

        // Repack (T, B, In) gradients as (B, In, T).
        let mut dx = Tensor3::zeros(bsz, inp, t_len);
        for b in 0..bsz {
            for ci in 0..inp {
                let d = dx.channel_mut(b, ci);
                for t in 0..t_len {
                    d[t] = dx_steps[(t * bsz + b) * inp + ci];
                }
            }
        }
        Ok(dx)
    }

    pub fn zero_grads(&mut self) {
        for g in [
            &mut self.dw_ih,
            &mut self.dw_hh,
            &mut self.db_ih,
            &mut self.db_hh,
        ] {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Vec<f64>, &mut Vec<f64>)) {
        f("w_ih", &mut self.w_ih, &mut self.dw_ih);
        f("w_hh", &mut self.w_hh, &mut self.dw_hh);
        f("b_ih", &mut self.b_ih, &mut self.db_ih);
        f("b_hh", &mut self.b_hh, &mut self.db_hh);
    }
}

/// Bidirectional LSTM: forward and time-reversed passes concatenated
/// along the channel axis (forward direction first), emitting
/// `2*hidden` features per step.
#[derive(Debug, Clone)]
pub struct BiLstm {
    pub fwd: Lstm,
    pub bwd: Lstm,
}

impl BiLstm {
    pub fn new(input_size: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        BiLstm {
            fwd: Lstm::new(input_size, hidden, rng),
            bwd: Lstm::new(input_size, hidden, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.fwd.hidden
    }

    pub fn forward(&mut self, x: &Tensor3, mode: Mode) -> Result<Tensor3, NnError> {
        let y_f = self.fwd.forward(x, mode)?;
        let y_b = self
            .bwd
            .forward(&x.reverse_time(), mode)?
            .reverse_time();
        let h = self.hidden();
        let mut y = Tensor3::zeros(x.batch, 2 * h, x.time);
        for b in 0..x.batch {
            for k in 0..h {
                y.channel_mut(b, k).copy_from_slice(y_f.channel(b, k));
                y.channel_mut(b, h + k).copy_from_slice(y_b.channel(b, k));
            }
        }
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor3) -> Result<Tensor3, NnError> {
        let h = self.hidden();
        if dy.channels != 2 * h {
            return Err(NnError::ShapeMismatch {
                what: "bilstm upstream channels",
                got: dy.channels.to_string(),
                want: (2 * h).to_string(),
            });
        }
        let mut dy_f = Tensor3::zeros(dy.batch, h, dy.time);
        let mut dy_b = Tensor3::zeros(dy.batch, h, dy.time);
        for b in 0..dy.batch {
            for k in 0..h {
                dy_f.channel_mut(b, k).copy_from_slice(dy.channel(b, k));
                dy_b.channel_mut(b, k).copy_from_slice(dy.channel(b, h + k));
            }
        }
        let mut dx = self.fwd.backward(&dy_f)?;
        let dx_b = self.bwd.backward(&dy_b.reverse_time())?.reverse_time();
        dx.add_assign(&dx_b)?;
        Ok(dx)
    }

    pub fn zero_grads(&mut self) {
        self.fwd.zero_grads();
        self.bwd.zero_grads();
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Vec<f64>, &mut Vec<f64>)) {
        self.fwd.visit_params(&mut |name, v, g| f(&format!("fwd.{name}"), v, g));
        self.bwd.visit_params(&mut |name, v, g| f(&format!("bwd.{name}"), v, g));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_input(b: usize, c: usize, t: usize, seed: u64) -> Tensor3 {
        let mut r = rng(seed);
        Tensor3::from_vec(b, c, t, (0..b * c * t).map(|_| r.gen_range(-1.0..1.0)).collect())
            .unwrap()
    }

    #[test]
    fn output_shapes_follow_the_hidden_size() {
        let mut lstm = Lstm::new(3, 4, &mut rng(0));
        let x = random_input(2, 3, 5, 1);
        let y = lstm.forward(&x, Mode::Eval).unwrap();
        assert_eq!(y.shape(), (2, 4, 5));
        let mut bi = BiLstm::new(3, 4, &mut rng(0));
        let yb = bi.forward(&x, Mode::Eval).unwrap();
        assert_eq!(yb.shape(), (2, 8, 5));
    }

    #[test]
    fn single_step_matches_the_hand_computed_recurrence() {
        let mut lstm = Lstm::new(1, 1, &mut rng(0));
        // Gate rows i, f, g, o.
        lstm.w_ih = vec![0.5, -0.3, 0.8, 0.2];
        lstm.w_hh = vec![0.0, 0.0, 0.0, 0.0];
        lstm.b_ih = vec![0.1, 0.0, -0.2, 0.3];
        lstm.b_hh = vec![0.0; 4];
        let x0 = 0.7;
        let x = Tensor3::from_vec(1, 1, 1, vec![x0]).unwrap();
        let y = lstm.forward(&x, Mode::Eval).unwrap();
        let i = 1.0 / (1.0 + (-(0.5 * x0 + 0.1)).exp());
        let g = (0.8 * x0 - 0.2).tanh();
        let o = 1.0 / (1.0 + (-(0.2 * x0 + 0.3)).exp());
        let c = i * g; // f*c_prev vanishes (c_prev = 0)
        let expect = o * c.tanh();
        assert!((y.data[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let mut lstm = Lstm::new(2, 3, &mut rng(0));
        lstm.w_ih.iter_mut().for_each(|v| *v = 0.0);
        lstm.w_hh.iter_mut().for_each(|v| *v = 0.0);
        lstm.b_ih.iter_mut().for_each(|v| *v = 0.0);
        lstm.b_hh.iter_mut().for_each(|v| *v = 0.0);
        let y = lstm
            .forward(&random_input(1, 2, 6, 5), Mode::Eval)
            .unwrap();
        // i,f,o = 0.5 and g = 0 everywhere, so c and h stay zero.
        assert!(y.data.iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn bilstm_respects_direction_symmetry() {
        // Running the swapped-direction model on the reversed input must
        // reproduce the time-reversed, block-swapped original output.
        let x = random_input(2, 3, 7, 42);
        let mut a = BiLstm::new(3, 4, &mut rng(11));
        let mut b = BiLstm::new(3, 4, &mut rng(12));
        // b gets a's parameters with directions exchanged.
        b.fwd.w_ih.copy_from_slice(&a.bwd.w_ih);
        b.fwd.w_hh.copy_from_slice(&a.bwd.w_hh);
        b.fwd.b_ih.copy_from_slice(&a.bwd.b_ih);
        b.fwd.b_hh.copy_from_slice(&a.bwd.b_hh);
        b.bwd.w_ih.copy_from_slice(&a.fwd.w_ih);
        b.bwd.w_hh.copy_from_slice(&a.fwd.w_hh);
        b.bwd.b_ih.copy_from_slice(&a.fwd.b_ih);
        b.bwd.b_hh.copy_from_slice(&a.fwd.b_hh);
        let ya = a.forward(&x, Mode::Eval).unwrap();
        let yb = b.forward(&x.reverse_time(), Mode::Eval).unwrap();
        let h = 4;
        let rev = ya.reverse_time();
        for bi in 0..2 {
            for k in 0..h {
                for t in 0..7 {
                    assert!((yb.get(bi, k, t) - rev.get(bi, h + k, t)).abs() < 1e-12);
                    assert!((yb.get(bi, h + k, t) - rev.get(bi, k, t)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let x = random_input(1, 2, 9, 3);
        let mut a = Lstm::new(2, 3, &mut rng(7));
        let mut b = Lstm::new(2, 3, &mut rng(7));
        let ya = a.forward(&x, Mode::Eval).unwrap();
        let yb = b.forward(&x, Mode::Eval).unwrap();
        assert_eq!(ya.data, yb.data);
    }
}
