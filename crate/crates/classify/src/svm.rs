//! Support vector machine with an RBF kernel, trained by sequential
//! minimal optimization (C = 1, tolerance 1e-3, deterministic pair
//! selection), with probabilities from a sigmoid fitted on the training
//! decision values by a damped Newton iteration.

use crate::ClassifyError;

const C: f64 = 1.0;
const SMO_TOL: f64 = 1e-3;
const MAX_SWEEPS: usize = 1000;
const ALPHA_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SvmRbf {
    support: Vec<Vec<f64>>,
    /// alpha_i * y_i for each support vector.
    coef: Vec<f64>,
    bias: f64,
    pub gamma: f64,
    platt_a: f64,
    platt_b: f64,
}

fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// Kernel width 1/(d * pooled variance of every matrix entry); when the
/// matrix is constant the variance term drops out.
fn scale_gamma(x: &[Vec<f64>]) -> f64 {
    let d = x[0].len();
    let n = (x.len() * d) as f64;
    let mean = x.iter().flatten().sum::<f64>() / n;
    let var = x
        .iter()
        .flatten()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / n;
    if var > 0.0 {
        1.0 / (d as f64 * var)
    } else {
        1.0 / d as f64
    }
}

/// Fits the probability sigmoid p = 1 / (1 + exp(a*f + b)) on decision
/// values `f` with smoothed targets, by Newton steps with backtracking.
fn fit_platt(decision: &[f64], labels: &[bool]) -> (f64, f64) {
    let n_pos = labels.iter().filter(|&&l| l).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    let hi = (n_pos + 1.0) / (n_pos + 2.0);
    let lo = 1.0 / (n_neg + 2.0);
    let targets: Vec<f64> = labels.iter().map(|&l| if l { hi } else { lo }).collect();

    let ridge = 1e-12;
    let min_step = 1e-10;
    let mut a = 0.0;
    let mut b = ((n_neg + 1.0) / (n_pos + 1.0)).ln();

    let objective = |a: f64, b: f64| -> f64 {
        decision
            .iter()
            .zip(&targets)
            .map(|(&f, &t)| {
                let z = a * f + b;
                if z >= 0.0 {
                    t * z + (1.0 + (-z).exp()).ln()
                } else {
                    (t - 1.0) * z + (1.0 + z.exp()).ln()
                }
            })
            .sum()
    };

    let mut fval = objective(a, b);
    for _ in 0..100 {
        let (mut h11, mut h22, mut h21) = (ridge, ridge, 0.0);
        let (mut g1, mut g2) = (0.0, 0.0);
        for (&f, &t) in decision.iter().zip(&targets) {
            let z = a * f + b;
            let (p, q) = if z >= 0.0 {
                let e = (-z).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = z.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += f * f * d2;
            h22 += d2;
            h21 += f * d2;
            let d1 = t - p;
            g1 += f * d1;
            g2 += d1;
        }
        if g1.abs() < 1e-5 && g2.abs() < 1e-5 {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(h11 * g2 - h21 * g1) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        while step >= min_step {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if step < min_step {
            break;
        }
    }
    (a, b)
}

impl SvmRbf {
    pub fn fit(x: &[Vec<f64>], y: &[bool]) -> Result<Self, ClassifyError> {
        crate::validate_xy(x, y)?;
        let n = x.len();
        let gamma = scale_gamma(x);
        let ys: Vec<f64> = y.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();

        let mut kernel = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let k = rbf(&x[i], &x[j], gamma);
                kernel[i * n + j] = k;
                kernel[j * n + i] = k;
            }
        }
        let k = |i: usize, j: usize| kernel[i * n + j];

        let mut alpha = vec![0.0f64; n];
        let mut margin = vec![0.0f64; n]; // sum_j alpha_j y_j K(j, i)
        let mut bias = 0.0f64;

        // One deterministic pair update; returns whether progress was made.
        let take_step = |i: usize,
                             j: usize,
                             alpha: &mut Vec<f64>,
                             margin: &mut Vec<f64>,
                             bias: &mut f64|
         -> bool {
            if i == j {
                return false;
            }
            let e_i = margin[i] + *bias - ys[i];
            let e_j = margin[j] + *bias - ys[j];
            let (lo, hi) = if ys[i] == ys[j] {
                ((alpha[i] + alpha[j] - C).max(0.0), (alpha[i] + alpha[j]).min(C))
            } else {
                ((alpha[j] - alpha[i]).max(0.0), (C + alpha[j] - alpha[i]).min(C))
            };
            if lo >= hi {
                return false;
            }
            let eta = 2.0 * k(i, j) - k(i, i) - k(j, j);
            if eta >= 0.0 {
                return false;
            }
            let mut aj = alpha[j] - ys[j] * (e_i - e_j) / eta;
            aj = aj.clamp(lo, hi);
            let dj = aj - alpha[j];
            if dj.abs() < ALPHA_EPS {
                return false;
            }
            let ai = alpha[i] + ys[i] * ys[j] * (alpha[j] - aj);
            let di = ai - alpha[i];

            let b1 = *bias - e_i - ys[i] * di * k(i, i) - ys[j] * dj * k(i, j);
            let b2 = *bias - e_j - ys[i] * di * k(i, j) - ys[j] * dj * k(j, j);
            *bias = if ai > 0.0 && ai < C {
                b1
            } else if aj > 0.0 && aj < C {
                b2
            } else {
                (b1 + b2) / 2.0
            };

            for t in 0..n {
                margin[t] += ys[i] * di * k(i, t) + ys[j] * dj * k(j, t);
            }
            alpha[i] = ai;
            alpha[j] = aj;
            true
        };

        for _sweep in 0..MAX_SWEEPS {
            let mut changed = 0usize;
            for i in 0..n {
                let e_i = margin[i] + bias - ys[i];
                let r = ys[i] * e_i;
                let violates = (r < -SMO_TOL && alpha[i] < C) || (r > SMO_TOL && alpha[i] > 0.0);
                if !violates {
                    continue;
                }
                // Second index: largest |E_i - E_j|, lowest index on ties;
                // fall back to an ordered scan if that pair cannot move.
                let mut best_j = None;
                let mut best_gap = -1.0;
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    let gap = (e_i - (margin[j] + bias - ys[j])).abs();
                    if gap > best_gap {
                        best_gap = gap;
                        best_j = Some(j);
                    }
                }
                let mut moved = false;
                if let Some(j) = best_j {
                    moved = take_step(i, j, &mut alpha, &mut margin, &mut bias);
                }
                if !moved {
                    for j in 0..n {
                        if take_step(i, j, &mut alpha, &mut margin, &mut bias) {
                            moved = true;
                            break;
                        }
                    }
                }
                if moved {
                    changed += 1;
                }
            }
            if changed == 0 {
                break;
            }
        }

        let mut support = Vec::new();
        let mut coef = Vec::new();
        let mut train_decision = Vec::with_capacity(n);
        for i in 0..n {
            train_decision.push(margin[i] + bias);
            if alpha[i] > ALPHA_EPS {
                support.push(x[i].clone());
                coef.push(alpha[i] * ys[i]);
            }
        }
        let (platt_a, platt_b) = fit_platt(&train_decision, y);

        Ok(SvmRbf {
            support,
            coef,
            bias,
            gamma,
            platt_a,
            platt_b,
        })
    }

    pub fn decision_function(&self, x: &[f64]) -> f64 {
        self.support
            .iter()
            .zip(&self.coef)
            .map(|(sv, c)| c * rbf(sv, x, self.gamma))
            .sum::<f64>()
            + self.bias
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let z = self.platt_a * self.decision_function(x) + self.platt_b;
        if z >= 0.0 {
            (-z).exp() / (1.0 + (-z).exp())
        } else {
            1.0 / (1.0 + z.exp())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two tight clusters; used across the solver tests. Frozen reference
    /// decision values for this exact fixture (C = 1, scaled gamma,
    /// solved to high precision by an independent quadratic-program
    /// implementation):
    ///   gamma = 0.5250205086136177
    ///   f(x)  = [-1.0037593078, -1.0000000622, -0.9999999681,
    ///            -1.0341663957,  1.0000001670,  0.9999999325,
    ///             0.9999999351,  1.0225161703]
    fn blobs() -> (Vec<Vec<f64>>, Vec<bool>) {
        let x = vec![
            vec![0.0, 0.2],
            vec![0.3, -0.1],
            vec![-0.2, 0.1],
            vec![0.1, 0.0],
            vec![2.0, 1.8],
            vec![1.7, 2.2],
            vec![2.2, 2.1],
            vec![1.9, 1.9],
        ];
        let y = vec![false, false, false, false, true, true, true, true];
        (x, y)
    }

    #[test]
    fn gamma_follows_the_pooled_variance_rule() {
        let (x, _) = blobs();
        let m = SvmRbf::fit(&x, &blobs().1).unwrap();
        assert!((m.gamma - 0.5250205086136177).abs() < 1e-12);
    }

    #[test]
    fn decision_values_match_the_reference_solution() {
        let (x, y) = blobs();
        let m = SvmRbf::fit(&x, &y).unwrap();
        let expected = [
            -1.0037593078,
            -1.0000000622,
            -0.9999999681,
            -1.0341663957,
            1.0000001670,
            0.9999999325,
            0.9999999351,
            1.0225161703,
        ];
        for (xi, e) in x.iter().zip(expected) {
            let f = m.decision_function(xi);
            assert!(
                (f - e).abs() < 0.05,
                "decision {f:.6} deviates from reference {e:.6}"
            );
        }
    }

    #[test]
    fn separable_blobs_are_classified_with_calibrated_probabilities() {
        let (x, y) = blobs();
        let m = SvmRbf::fit(&x, &y).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            let p = m.predict_proba(xi);
            assert!((p > 0.5) == *yi, "p={p} for label {yi}");
            assert!(p > 0.0 && p < 1.0);
        }
    }

    #[test]
    fn probabilities_increase_with_the_decision_value() {
        let (x, y) = blobs();
        let m = SvmRbf::fit(&x, &y).unwrap();
        let line: Vec<Vec<f64>> = (0..=10)
            .map(|i| vec![0.2 * i as f64, 0.2 * i as f64])
            .collect();
        let mut pairs: Vec<(f64, f64)> = line
            .iter()
            .map(|p| (m.decision_function(p), m.predict_proba(p)))
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for w in pairs.windows(2) {
            assert!(w[1].1 >= w[0].1 - 1e-12);
        }
    }

    #[test]
    fn fitting_is_deterministic() {
        let (x, y) = blobs();
        let a = SvmRbf::fit(&x, &y).unwrap();
        let b = SvmRbf::fit(&x, &y).unwrap();
        for xi in &x {
            assert_eq!(a.predict_proba(xi), b.predict_proba(xi));
        }
    }
}
