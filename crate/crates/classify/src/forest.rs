//! Random forest: 100 bootstrap-resampled decision trees with Gini splits,
//! sqrt(d) candidate features per node, grown to purity.
//!
//! Split predicates are `feature <= v` where `v` is a value observed at
//! the node, never an interpolated midpoint. This makes every routing
//! decision an order comparison against a training value, so predictions
//! are invariant under strictly increasing transforms of any column.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use skna_core::seeds::derive_seed;

use crate::ClassifyError;

const N_TREES: usize = 100;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        p_pos: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn leaf_prob(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { p_pos } => return *p_pos,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct RandomForest {
    trees: Vec<Tree>,
    pub n_features: usize,
}

fn gini(pos: f64, total: f64) -> f64 {
    if total == 0.0 {
        return 0.0;
    }
    let p = pos / total;
    2.0 * p * (1.0 - p)
}

struct TreeBuilder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [bool],
    m_try: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

impl<'a> TreeBuilder<'a> {
    /// Grows the subtree over `rows` (indices into the bootstrap sample)
    /// and returns its node index.
    fn grow(&mut self, rows: &[usize]) -> usize {
        let n = rows.len() as f64;
        let pos = rows.iter().filter(|&&r| self.y[r]).count() as f64;
        if pos == 0.0 || pos == n || rows.len() < 2 {
            self.nodes.push(Node::Leaf { p_pos: pos / n });
            return self.nodes.len() - 1;
        }

        // Candidate features: m_try distinct columns drawn per node.
        let d = self.x[0].len();
        let mut feats: Vec<usize> = (0..d).collect();
        for i in 0..self.m_try.min(d) {
            let j = self.rng.gen_range(i..d);
            feats.swap(i, j);
        }

        let mut best: Option<(f64, usize, f64)> = None; // (impurity, feature, threshold)
        for &f in feats.iter().take(self.m_try.min(d)) {
            let mut vals: Vec<(f64, bool)> = rows.iter().map(|&r| (self.x[r][f], self.y[r])).collect();
            vals.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite features"));
            let total_pos = pos;
            let mut left_n = 0.0;
            let mut left_pos = 0.0;
            for i in 0..vals.len() - 1 {
                left_n += 1.0;
                if vals[i].1 {
                    left_pos += 1.0;
                }
                if vals[i].0 == vals[i + 1].0 {
                    continue; // can't split between equal values
                }
                let right_n = n - left_n;
                let right_pos = total_pos - left_pos;
                let impurity = (left_n * gini(left_pos, left_n)
                    + right_n * gini(right_pos, right_n))
                    / n;
                if best.map_or(true, |(b, _, _)| impurity < b) {
                    best = Some((impurity, f, vals[i].0));
                }
            }
        }

        match best {
            None => {
                // Every candidate column is constant on this node.
                self.nodes.push(Node::Leaf { p_pos: pos / n });
                self.nodes.len() - 1
            }
            Some((_, feature, threshold)) => {
                let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
                    .iter()
                    .partition(|&&r| self.x[r][feature] <= threshold);
                let placeholder = self.nodes.len();
                self.nodes.push(Node::Leaf { p_pos: 0.0 });
                let left = self.grow(&left_rows);
                let right = self.grow(&right_rows);
                self.nodes[placeholder] = Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
                placeholder
            }
        }
    }
}

impl RandomForest {
    pub fn fit(x: &[Vec<f64>], y: &[bool], seed: u64) -> Result<Self, ClassifyError> {
        let d = crate::validate_xy(x, y)?;
        let m_try = ((d as f64).sqrt().floor() as usize).max(1);
        let n = x.len();
        let trees = (0..N_TREES)
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "rf-tree", t as u64));
                let sample: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                let mut builder = TreeBuilder {
                    x,
                    y,
                    m_try,
                    rng,
                    nodes: Vec::new(),
                };
                let root = builder.grow(&sample);
                debug_assert_eq!(root, 0);
                Tree {
                    nodes: builder.nodes,
                }
            })
            .collect();
        Ok(RandomForest {
            trees,
            n_features: d,
        })
    }

    /// Fraction of trees voting for the positive class.
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let votes = self
            .trees
            .iter()
            .filter(|t| t.leaf_prob(x) > 0.5)
            .count();
        votes as f64 / self.trees.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Four jittered clusters in an XOR arrangement.
    fn xor_fixture() -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for k in 0..200 {
            let (cx, cy) = match k % 4 {
                0 => (1.0, 1.0),
                1 => (-1.0, -1.0),
                2 => (1.0, -1.0),
                _ => (-1.0, 1.0),
            };
            x.push(vec![
                cx + rng.gen_range(-0.3..0.3),
                cy + rng.gen_range(-0.3..0.3),
            ]);
            y.push(k % 4 >= 2); // opposite-sign quadrants are positive
        }
        (x, y)
    }

    #[test]
    fn xor_pattern_is_learned() {
        let (x, y) = xor_fixture();
        let rf = RandomForest::fit(&x, &y, 5).unwrap();
        let correct = x
            .iter()
            .zip(&y)
            .filter(|(xi, &yi)| (rf.predict_proba(xi) > 0.5) == yi)
            .count();
        assert!(
            correct as f64 / x.len() as f64 >= 0.95,
            "train accuracy {}",
            correct as f64 / x.len() as f64
        );
    }

    #[test]
    fn same_seed_reproduces_every_prediction() {
        let (x, y) = xor_fixture();
        let a = RandomForest::fit(&x, &y, 9).unwrap();
        let b = RandomForest::fit(&x, &y, 9).unwrap();
        let grid: Vec<Vec<f64>> = (-6..6)
            .flat_map(|i| (-6..6).map(move |j| vec![i as f64 / 3.0, j as f64 / 3.0]))
            .collect();
        for g in &grid {
            assert_eq!(a.predict_proba(g), b.predict_proba(g));
        }
        let c = RandomForest::fit(&x, &y, 10).unwrap();
        assert!(grid.iter().any(|g| a.predict_proba(g) != c.predict_proba(g)));
    }

    #[test]
    fn predictions_survive_monotone_column_transforms() {
        let (x, y) = xor_fixture();
        let rf_raw = RandomForest::fit(&x, &y, 3).unwrap();
        // Strictly increasing map applied to column 0 at train and test.
        let warp = |v: f64| v.powi(3) + 0.5 * v;
        let xw: Vec<Vec<f64>> = x.iter().map(|r| vec![warp(r[0]), r[1]]).collect();
        let rf_warp = RandomForest::fit(&xw, &y, 3).unwrap();
        for r in x.iter().take(60) {
            let p_raw = rf_raw.predict_proba(r);
            let p_warp = rf_warp.predict_proba(&[warp(r[0]), r[1]]);
            assert_eq!(p_raw, p_warp);
        }
    }

    #[test]
    fn a_one_dimensional_threshold_is_found() {
        let x: Vec<Vec<f64>> = [0.0, 1.0, 2.0, 10.0, 11.0, 12.0]
            .iter()
            .map(|v| vec![*v])
            .collect();
        let y = vec![false, false, false, true, true, true];
        let rf = RandomForest::fit(&x, &y, 1).unwrap();
        assert!(rf.predict_proba(&[-5.0]) < 0.1);
        assert!(rf.predict_proba(&[20.0]) > 0.9);
    }
}
