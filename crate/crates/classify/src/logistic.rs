//! L2-regularized logistic regression fitted by iteratively reweighted
//! least squares (Newton), with a deterministic gradient-descent fallback
//! when the normal equations are singular.

use crate::ClassifyError;

const LAMBDA: f64 = 1.0;
const MAX_ITERS: usize = 1000;
const TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct LogisticModel {
    pub w: Vec<f64>,
    pub b: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Solves `a * x = rhs` in place by Gaussian elimination with partial
/// pivoting; `a` is row-major `n x n`. Returns None when a pivot vanishes.
fn solve(mut a: Vec<f64>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r, &s| {
                a[r * n + col]
                    .abs()
                    .partial_cmp(&a[s * n + col].abs())
                    .unwrap()
            })
            .unwrap();
        if a[pivot_row * n + col].abs() < 1e-12 {
            return None;
        }
        if pivot_row != col {
            for c in 0..n {
                a.swap(col * n + c, pivot_row * n + c);
            }
            rhs.swap(col, pivot_row);
        }
        let pivot = a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                a[row * n + c] -= factor * a[col * n + c];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for c in row + 1..n {
            acc -= a[row * n + c] * x[c];
        }
        x[row] = acc / a[row * n + row];
    }
    Some(x)
}

impl LogisticModel {
    pub fn from_params(w: Vec<f64>, b: f64) -> Self {
        LogisticModel { w, b }
    }

    pub fn fit(x: &[Vec<f64>], y: &[bool]) -> Result<Self, ClassifyError> {
        let d = crate::validate_xy(x, y)?;
        let n = x.len();
        let dim = d + 1; // weights then intercept
        let mut theta = vec![0.0f64; dim];

        let grad = |theta: &[f64]| -> Vec<f64> {
            let mut g = vec![0.0; dim];
            for (xi, &yi) in x.iter().zip(y) {
                let z =
                    xi.iter().zip(&theta[..d]).map(|(a, b)| a * b).sum::<f64>() + theta[d];
                let r = sigmoid(z) - if yi { 1.0 } else { 0.0 };
                for c in 0..d {
                    g[c] += r * xi[c];
                }
                g[d] += r;
            }
            for c in 0..d {
                g[c] += LAMBDA * theta[c]; // intercept is not penalized
            }
            g
        };

        let mut newton_ok = true;
        for _ in 0..MAX_ITERS {
            let g = grad(&theta);
            // Hessian: sum p(1-p) xx^T plus the ridge on the weight block.
            let mut h = vec![0.0; dim * dim];
            for xi in x.iter() {
                let z =
                    xi.iter().zip(&theta[..d]).map(|(a, b)| a * b).sum::<f64>() + theta[d];
                let p = sigmoid(z);
                let wgt = p * (1.0 - p);
                for r in 0..dim {
                    let xr = if r < d { xi[r] } else { 1.0 };
                    for c in 0..dim {
                        let xc = if c < d { xi[c] } else { 1.0 };
                        h[r * dim + c] += wgt * xr * xc;
                    }
                }
            }
            for c in 0..d {
                h[c * dim + c] += LAMBDA;
            }
            match solve(h, g.clone()) {
                Some(delta) if delta.iter().all(|v| v.is_finite()) => {
                    for (t, dl) in theta.iter_mut().zip(&delta) {
                        *t -= dl;
                    }
                    if delta.iter().map(|v| v.abs()).fold(0.0, f64::max) < TOL {
                        break;
                    }
                }
                _ => {
                    newton_ok = false;
                    break;
                }
            }
        }

        if !newton_ok {
            // Plain gradient descent with a conservative fixed step.
            theta = vec![0.0; dim];
            let row_norm = x
                .iter()
                .map(|r| r.iter().map(|v| v * v).sum::<f64>() + 1.0)
                .fold(0.0, f64::max);
            let lr = 1.0 / (0.25 * row_norm * n as f64 + LAMBDA);
            for _ in 0..MAX_ITERS * 20 {
                let g = grad(&theta);
                let sup = g.iter().map(|v| v.abs()).fold(0.0, f64::max);
                for (t, gi) in theta.iter_mut().zip(&g) {
                    *t -= lr * gi;
                }
                if sup < TOL {
                    break;
                }
            }
        }

        if theta.iter().any(|v| !v.is_finite()) {
            return Err(ClassifyError::SolverDiverged);
        }
        let b = theta[d];
        theta.truncate(d);
        Ok(LogisticModel { w: theta, b })
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.w).map(|(a, b)| a * b).sum::<f64>() + self.b
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.decision(x))
    }
}
