//! Strided 1-D convolution and its transposed counterpart.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::{Mode, NnError, Tensor3};

fn uniform_init(rng: &mut ChaCha8Rng, len: usize, bound: f64) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-bound..bound)).collect()
}

/// 1-D convolution with weight shape (out_channels, in_channels, kernel).
/// Output length is `floor((L + 2*padding - kernel)/stride) + 1`.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub dw: Vec<f64>,
    pub db: Vec<f64>,
    cache: Option<Tensor3>,
}

impl Conv1d {
    pub fn new(
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let bound = (1.0 / (cin * kernel) as f64).sqrt();
        Conv1d {
            cin,
            cout,
            kernel,
            stride,
            padding,
            w: uniform_init(rng, cout * cin * kernel, bound),
            b: uniform_init(rng, cout, bound),
            dw: vec![0.0; cout * cin * kernel],
            db: vec![0.0; cout],
            cache: None,
        }
    }

    pub fn out_len(&self, lin: usize) -> Result<usize, NnError> {
        let padded = lin + 2 * self.padding;
        if padded < self.kernel {
            return Err(NnError::ShapeMismatch {
                what: "conv input length",
                got: lin.to_string(),
                want: format!(">= kernel {} - 2*padding", self.kernel),
            });
        }
        Ok((padded - self.kernel) / self.stride + 1)
    }

    pub fn forward(&mut self, x: &Tensor3, mode: Mode) -> Result<Tensor3, NnError> {
        if x.channels != self.cin {
            return Err(NnError::ShapeMismatch {
                what: "conv input channels",
                got: x.channels.to_string(),
                want: self.cin.to_string(),
            });
        }
        let lin = x.time;
        let lout = self.out_len(lin)?;
        let mut y = Tensor3::zeros(x.batch, self.cout, lout);
        for bi in 0..x.batch {
            for co in 0..self.cout {
                let bias = self.b[co];
                let yo = y.channel_mut(bi, co);
                yo.iter_mut().for_each(|v| *v = bias);
                for ci in 0..self.cin {
                    let xi = x.channel(bi, ci);
                    for kk in 0..self.kernel {
                        let w = self.w[(co * self.cin + ci) * self.kernel + kk];
                        for (to, yv) in yo.iter_mut().enumerate() {
                            let ti = (to * self.stride + kk).wrapping_sub(self.padding);
                            if ti < lin {
                                *yv += w * xi[ti];
                            }
                        }
                    }
                }
            }
        }
        self.cache = if mode == Mode::Train {
            Some(x.clone())
        } else {
            None
        };
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor3) -> Result<Tensor3, NnError> {
        let x = self.cache.as_ref().ok_or(NnError::NoForwardCache)?;
        let lin = x.time;
        let mut dx = Tensor3::zeros(x.batch, self.cin, lin);
        for bi in 0..x.batch {
            for co in 0..self.cout {
                let g = dy.channel(bi, co);
                self.db[co] += g.iter().sum::<f64>();
                for ci in 0..self.cin {
                    let xi = x.channel(bi, ci);
                    let dxi = dx.channel_mut(bi, ci);
                    for kk in 0..self.kernel {
                        let widx = (co * self.cin + ci) * self.kernel + kk;
                        let w = self.w[widx];
                        let mut wacc = 0.0;
                        for (to, gv) in g.iter().enumerate() {
                            let ti = (to * self.stride + kk).wrapping_sub(self.padding);
                            if ti < lin {
                                wacc += gv * xi[ti];
                                dxi[ti] += gv * w;
                            }
                        }
                        self.dw[widx] += wacc;
                    }
                }
            }
        }
        Ok(dx)
    }

    pub fn zero_grads(&mut self) {
        self.dw.iter_mut().for_each(|v| *v = 0.0);
        self.db.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Vec<f64>, &mut Vec<f64>)) {
        f("w", &mut self.w, &mut self.dw);
        f("b", &mut self.b, &mut self.db);
    }
}

/// Transposed 1-D convolution with weight shape
/// (in_channels, out_channels, kernel). Output length is
/// `(L-1)*stride - 2*padding + kernel + output_padding`.
#[derive(Debug, Clone)]
pub struct Deconv1d {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub output_padding: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub dw: Vec<f64>,
    pub db: Vec<f64>,
    cache: Option<Tensor3>,
}

impl Deconv1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        output_padding: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let bound = (1.0 / (cin * kernel) as f64).sqrt();
        Deconv1d {
            cin,
            cout,
            kernel,
            stride,
            padding,
            output_padding,
            w: uniform_init(rng, cin * cout * kernel, bound),
            b: uniform_init(rng, cout, bound),
            dw: vec![0.0; cin * cout * kernel],
            db: vec![0.0; cout],
            cache: None,
        }
    }

    pub fn out_len(&self, lin: usize) -> Result<usize, NnError> {
        if lin == 0 {
            return Err(NnError::ShapeMismatch {
                what: "deconv input length",
                got: "0".into(),
                want: ">= 1".into(),
            });
        }
        let expanded = (lin - 1) * self.stride + self.kernel + self.output_padding;
        if expanded < 2 * self.padding + 1 {
            return Err(NnError::ShapeMismatch {
                what: "deconv output length",
                got: expanded.to_string(),
                want: format!("> 2*padding = {}", 2 * self.padding),
            });
        }
        Ok(expanded - 2 * self.padding)
    }

    pub fn forward(&mut self, x: &Tensor3, mode: Mode) -> Result<Tensor3, NnError> {
        if x.channels != self.cin {
            return Err(NnError::ShapeMismatch {
                what: "deconv input channels",
                got: x.channels.to_string(),
                want: self.cin.to_string(),
            });
        }
        let lin = x.time;
        let lout = self.out_len(lin)?;
        let mut y = Tensor3::zeros(x.batch, self.cout, lout);
        for bi in 0..x.batch {
            for co in 0..self.cout {
                let bias = self.b[co];
                y.channel_mut(bi, co).iter_mut().for_each(|v| *v = bias);
            }
            for ci in 0..self.cin {
                let xi = x.channel(bi, ci).to_vec();
                for co in 0..self.cout {
                    let yo = y.channel_mut(bi, co);
                    for kk in 0..self.kernel {
                        let w = self.w[(ci * self.cout + co) * self.kernel + kk];
                        for (to, xv) in xi.iter().enumerate() {
                            let ti = (to * self.stride + kk).wrapping_sub(self.padding);
                            if ti < lout {
                                yo[ti] += w * xv;
                            }
                        }
                    }
                }
            }
        }
        self.cache = if mode == Mode::Train {
            Some(x.clone())
        } else {
            None
        };
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor3) -> Result<Tensor3, NnError> {
        let x = self.cache.as_ref().ok_or(NnError::NoForwardCache)?;
        let lin = x.time;
        let lout = dy.time;
        let mut dx = Tensor3::zeros(x.batch, self.cin, lin);
        for bi in 0..x.batch {
            for co in 0..self.cout {
                self.db[co] += dy.channel(bi, co).iter().sum::<f64>();
            }
            for ci in 0..self.cin {
                let xi = x.channel(bi, ci);
                let dxi = dx.channel_mut(bi, ci);
                for co in 0..self.cout {
                    let g = dy.channel(bi, co);
                    for kk in 0..self.kernel {
                        let widx = (ci * self.cout + co) * self.kernel + kk;
                        let w = self.w[widx];
                        let mut wacc = 0.0;
                        for to in 0..lin {
                            let ti = (to * self.stride + kk).wrapping_sub(self.padding);
                            if ti < lout {
                                wacc += xi[to] * g[ti];
                                dxi[to] += w * g[ti];
                            }
                        }
                        self.dw[widx] += wacc;
                    }
                }
            }
        }
        Ok(dx)
    }

    pub fn zero_grads(&mut self) {
        self.dw.iter_mut().for_each(|v| *v = 0.0);
        self.db.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Vec<f64>, &mut Vec<f64>)) {
        f("w", &mut self.w, &mut self.dw);
        f("b", &mut self.b, &mut self.db);
    }
}
