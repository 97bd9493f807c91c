//! CART regression trees with exact variance-reduction splits.
//!
//! Split search visits candidate features in ascending index order and
//! thresholds in ascending order, replacing the incumbent only on a strictly
//! larger gain, so ties resolve to the lowest feature then lowest threshold.

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or hit `min_leaf`.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features sampled per split; `None` considers all.
    pub features_per_split: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            min_leaf: 1,
            features_per_split: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    params: TreeParams,
    rng: Option<&'a mut ChaCha8Rng>,
    importance: &'a mut [f64],
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Builder<'_> {
    fn mean(&self, samples: &[usize]) -> f64 {
        samples.iter().map(|&i| self.y[i]).sum::<f64>() / samples.len() as f64
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let p = self.x[0].len();
        match (self.params.features_per_split, self.rng.as_deref_mut()) {
            (Some(k), Some(rng)) if k < p => {
                let mut f = sample(rng, p, k).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..p).collect(),
        }
    }

    fn best_split(&mut self, samples: &[usize]) -> Option<BestSplit> {
        let n = samples.len();
        let min_leaf = self.params.min_leaf.max(1);
        if n < 2 * min_leaf {
            return None;
        }
        let total: f64 = samples.iter().map(|&i| self.y[i]).sum();
        let mean = total / n as f64;
        let sse: f64 = samples.iter().map(|&i| (self.y[i] - mean).powi(2)).sum();
        if sse <= 0.0 {
            return None;
        }
        let parent_term = total * total / n as f64;
        let mut best: Option<BestSplit> = None;
        let mut order = samples.to_vec();
        for f in self.candidate_features() {
            let x = self.x;
            order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                left_sum += self.y[order[k]];
                let n_left = k + 1;
                let n_right = n - n_left;
                let (a, b) = (x[order[k]][f], x[order[k + 1]][f]);
                if a == b || n_left < min_leaf || n_right < min_leaf {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / n_left as f64 + right_sum * right_sum / n_right as f64 - parent_term;
                if gain > sse * 1e-12 && best.as_ref().is_none_or(|bs| gain > bs.gain) {
                    let mut threshold = a + (b - a) / 2.0;
                    if threshold >= b {
                        threshold = a;
                    }
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, samples: &[usize], depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: self.mean(samples),
        });
        if self.params.max_depth.is_some_and(|d| depth >= d) {
            return id;
        }
        let Some(split) = self.best_split(samples) else {
            return id;
        };
        self.importance[split.feature] += split.gain;
        let (left, right): (Vec<usize>, Vec<usize>) = samples
            .iter()
            .partition(|&&i| self.x[i][split.feature] <= split.threshold);
        let l = self.grow(&left, depth + 1);
        let r = self.grow(&right, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: l,
            right: r,
        };
        id
    }
}

/// Fits a tree on `samples` (row indices, repeats allowed for bootstrap draws).
///
/// Per-feature squared-error reductions are added to `importance`. `rng` is
/// only consulted when `features_per_split` restricts the candidate set.
pub fn fit_tree(
    x: &[Vec<f64>],
    y: &[f64],
    samples: &[usize],
    params: TreeParams,
    rng: Option<&mut ChaCha8Rng>,
    importance: &mut [f64],
) -> RegressionTree {
    let mut b = Builder {
        x,
        y,
        params,
        rng,
        importance,
        nodes: Vec::new(),
    };
    b.grow(samples, 0);
    RegressionTree { nodes: b.nodes }
}
