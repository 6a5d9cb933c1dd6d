//! Random-forest regression built from scratch: CART trees on bootstrap
//! samples with per-node feature subsampling and out-of-bag error tracking.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixtures::mix_seed;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per split; defaults to ceil(p / 3).
    pub features_per_split: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            trees: 100,
            max_depth: 8,
            min_leaf: 2,
            features_per_split: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Node<S> {
    feature: usize,
    threshold: S,
    left: usize,
    right: usize,
    value: S,
    is_leaf: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tree<S> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Tree<S> {
    fn predict(&self, x: &[S]) -> S {
        let mut i = 0;
        loop {
            let node = &self.nodes[i];
            if node.is_leaf {
                return node.value;
            }
            i = if x[node.feature] <= node.threshold {
                node.left
            } else {
                node.right
            };
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest<S> {
    trees: Vec<Tree<S>>,
    pub n_features: usize,
    pub oob_mse: Option<S>,
    pub oob_r2: Option<S>,
}

impl<S: Scalar> RandomForest<S> {
    /// Fit on row-major samples. Deterministic for a fixed config seed.
    pub fn fit(x: &[Vec<S>], y: &[S], cfg: &ForestConfig) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::InsufficientData(
                "empty or mismatched training data".into(),
            ));
        }
        let n = x.len();
        let p = x[0].len();
        if x.iter().any(|row| row.len() != p) {
            return Err(Error::InvalidArgument("ragged feature rows".into()));
        }
        let m_try = cfg.features_per_split.unwrap_or_else(|| p.div_ceil(3)).clamp(1, p);

        let mut trees = Vec::with_capacity(cfg.trees);
        let mut oob_sum = vec![S::zero(); n];
        let mut oob_count = vec![0usize; n];

        for t in 0..cfg.trees {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, t as u64));
            let mut in_bag = vec![false; n];
            let sample: Vec<usize> = (0..n)
                .map(|_| {
                    let i = rng.gen_range(0..n);
                    in_bag[i] = true;
                    i
                })
                .collect();

            let mut builder = TreeBuilder {
                x,
                y,
                min_leaf: cfg.min_leaf,
                max_depth: cfg.max_depth,
                m_try,
                rng,
                nodes: Vec::new(),
            };
            builder.grow(sample, 0);
            let tree = Tree {
                nodes: builder.nodes,
            };

            for i in 0..n {
                if !in_bag[i] {
                    oob_sum[i] += tree.predict(&x[i]);
                    oob_count[i] += 1;
                }
            }
            trees.push(tree);
        }

        let mut mse = S::zero();
        let mut covered = 0usize;
        let mut mean_y = S::zero();
        for (&c, &yy) in oob_count.iter().zip(y) {
            if c > 0 {
                covered += 1;
                mean_y += yy;
            }
        }
        let (oob_mse, oob_r2) = if covered > 0 {
            mean_y /= S::of_usize(covered);
            let mut var = S::zero();
            for i in 0..n {
                if oob_count[i] > 0 {
                    let pred = oob_sum[i] / S::of_usize(oob_count[i]);
                    let e = pred - y[i];
                    mse += e * e;
                    let d = y[i] - mean_y;
                    var += d * d;
                }
            }
            mse /= S::of_usize(covered);
            let r2 = if var > S::zero() {
                S::one() - mse * S::of_usize(covered) / var
            } else {
                S::one()
            };
            (Some(mse), Some(r2))
        } else {
            (None, None)
        };

        Ok(Self {
            trees,
            n_features: p,
            oob_mse,
            oob_r2,
        })
    }

    pub fn predict(&self, x: &[S]) -> S {
        let sum: S = self.trees.iter().map(|t| t.predict(x)).sum();
        sum / S::of_usize(self.trees.len().max(1))
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}

struct TreeBuilder<'a, S> {
    x: &'a [Vec<S>],
    y: &'a [S],
    min_leaf: usize,
    max_depth: usize,
    m_try: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> TreeBuilder<'_, S> {
    /// Grow the subtree for `indices`; returns the node id.
    fn grow(&mut self, indices: Vec<usize>, depth: usize) -> usize {
        let mean = indices.iter().map(|&i| self.y[i]).sum::<S>()
            / S::of_usize(indices.len().max(1));

        let homogeneous = indices
            .iter()
            .all(|&i| (self.y[i] - mean).abs() <= S::of_f64(1e-12));
        if depth >= self.max_depth || indices.len() < 2 * self.min_leaf || homogeneous {
            return self.push_leaf(mean);
        }

        match self.best_split(&indices) {
            None => self.push_leaf(mean),
            Some((feature, threshold)) => {
                let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
                    .into_iter()
                    .partition(|&i| self.x[i][feature] <= threshold);
                if left_idx.len() < self.min_leaf || right_idx.len() < self.min_leaf {
                    return self.push_leaf(mean);
                }
                let id = self.nodes.len();
                self.nodes.push(Node {
                    feature,
                    threshold,
                    left: 0,
                    right: 0,
                    value: mean,
                    is_leaf: false,
                });
                let left = self.grow(left_idx, depth + 1);
                let right = self.grow(right_idx, depth + 1);
                self.nodes[id].left = left;
                self.nodes[id].right = right;
                id
            }
        }
    }

    fn push_leaf(&mut self, value: S) -> usize {
        self.nodes.push(Node {
            feature: 0,
            threshold: S::zero(),
            left: 0,
            right: 0,
            value,
            is_leaf: true,
        });
        self.nodes.len() - 1
    }

    /// Minimum-SSE split over a random feature subset.
    fn best_split(&mut self, indices: &[usize]) -> Option<(usize, S)> {
        let p = self.x[0].len();
        let mut features: Vec<usize> = (0..p).collect();
        for i in 0..self.m_try.min(p) {
            let j = self.rng.gen_range(i..p);
            features.swap(i, j);
        }
        features.truncate(self.m_try);
        features.sort_unstable(); // deterministic evaluation order

        let total_sum: S = indices.iter().map(|&i| self.y[i]).sum();
        let total_sq: S = indices.iter().map(|&i| self.y[i] * self.y[i]).sum();
        let n = S::of_usize(indices.len());
        let base_sse = total_sq - total_sum * total_sum / n;

        let mut best: Option<(usize, S, S)> = None; // (feature, threshold, sse)
        let mut sorted = indices.to_vec();
        for &f in &features {
            sorted.sort_by(|&a, &b| {
                self.x[a][f]
                    .partial_cmp(&self.x[b][f])
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            let mut left_sum = S::zero();
            let mut left_sq = S::zero();
            for (k, &i) in sorted.iter().enumerate().take(sorted.len() - 1) {
                left_sum += self.y[i];
                left_sq += self.y[i] * self.y[i];
                let next = sorted[k + 1];
                if self.x[i][f] == self.x[next][f] {
                    continue;
                }
                let nl = k + 1;
                let nr = sorted.len() - nl;
                if nl < self.min_leaf || nr < self.min_leaf {
                    continue;
                }
                let right_sum = total_sum - left_sum;
                let right_sq = total_sq - left_sq;
                let sse = (left_sq - left_sum * left_sum / S::of_usize(nl))
                    + (right_sq - right_sum * right_sum / S::of_usize(nr));
                if best.as_ref().map_or(sse < base_sse, |b| sse < b.2) {
                    let half = S::of_f64(0.5);
                    let threshold = (self.x[i][f] + self.x[next][f]) * half;
                    best = Some((f, threshold, sse));
                }
            }
        }
        best.map(|(f, t, _)| (f, t))
    }
}
