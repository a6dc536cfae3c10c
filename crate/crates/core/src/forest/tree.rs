//! CART regression trees with the squared-error criterion.

use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    /// `x[feature] <= threshold` goes to the next node in preorder, otherwise to `right`.
    Split {
        feature: usize,
        threshold: f64,
        right: usize,
    },
    Leaf {
        value: f64,
        count: usize,
    },
}

/// A tree stored as its preorder node list.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    right,
                } => {
                    i = if x[*feature] <= *threshold { i + 1 } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> (usize, usize) {
            // returns (depth, index after subtree)
            match &nodes[i] {
                Node::Leaf { .. } => (0, i + 1),
                Node::Split { right, .. } => {
                    let (dl, _) = walk(nodes, i + 1);
                    let (dr, end) = walk(nodes, *right);
                    (1 + dl.max(dr), end)
                }
            }
        }
        walk(&self.nodes, 0).0
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    pub features_per_split: usize,
}

/// Mean clamped into the sample range, so a constant sample returns exactly
/// that constant.
pub(crate) fn bounded_mean(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (mut n, mut sum, mut lo, mut hi) = (0usize, 0.0, f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        n += 1;
        sum += v;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (sum / n as f64).clamp(lo, hi)
}

pub(crate) struct Builder<'a, R: Rng> {
    pub x: &'a [Vec<f64>],
    pub y: &'a [f64],
    pub params: TreeParams,
    pub rng: &'a mut R,
    pub nodes: Vec<Node>,
}

impl<R: Rng> Builder<'_, R> {
    pub fn grow(mut self, samples: Vec<usize>) -> Tree {
        self.node(samples, 0);
        Tree { nodes: self.nodes }
    }

    fn node(&mut self, samples: Vec<usize>, depth: usize) {
        let y = self.y;
        let leaf = Node::Leaf {
            value: bounded_mean(samples.iter().map(|&i| y[i])),
            count: samples.len(),
        };
        let constant = samples.iter().all(|&i| y[i] == y[samples[0]]);
        if depth >= self.params.max_depth || samples.len() < 2 * self.params.min_leaf || constant {
            self.nodes.push(leaf);
            return;
        }
        let features = self.candidate_features();
        let Some(split) = best_split(self.x, y, &samples, &features, self.params.min_leaf) else {
            self.nodes.push(leaf);
            return;
        };
        let (left, right): (Vec<usize>, Vec<usize>) =
            samples.iter().partition(|&&i| self.x[i][split.feature] <= split.threshold);
        let at = self.nodes.len();
        self.nodes.push(Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            right: 0,
        });
        self.node(left, depth + 1);
        let right_at = self.nodes.len();
        if let Node::Split { right, .. } = &mut self.nodes[at] {
            *right = right_at;
        }
        self.node(right, depth + 1);
    }

    /// A random subset of feature indices, returned in ascending order.
    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.x.first().map_or(0, Vec::len);
        let k = self.params.features_per_split.clamp(1, d.max(1));
        if k >= d {
            return (0..d).collect();
        }
        let mut all: Vec<usize> = (0..d).collect();
        for i in 0..k {
            let j = self.rng.random_range(i..d);
            all.swap(i, j);
        }
        let mut chosen = all[..k].to_vec();
        chosen.sort_unstable();
        chosen
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub sse: f64,
}

/// Lowest weighted squared error split over `features`, thresholds at
/// midpoints of consecutive distinct values; ties keep the earlier feature and
/// the lower threshold, where errors within a relative 1e-12 count as tied.
/// `None` if no split strictly reduces the error.
pub(crate) fn best_split(x: &[Vec<f64>], y: &[f64], samples: &[usize], features: &[usize], min_leaf: usize) -> Option<Split> {
    let n = samples.len();
    let mean = samples.iter().map(|&i| y[i]).sum::<f64>() / n as f64;
    let parent_sse: f64 = samples.iter().map(|&i| (y[i] - mean).powi(2)).sum();
    let tol = parent_sse * 1e-12;
    let mut best: Option<Split> = None;
    let mut order = samples.to_vec();
    for &f in features {
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
        let total: f64 = order.iter().map(|&i| y[i] - mean).sum();
        let total_sq: f64 = order.iter().map(|&i| (y[i] - mean).powi(2)).sum();
        let (mut sum_l, mut sq_l) = (0.0, 0.0);
        for k in 0..n - 1 {
            let v = y[order[k]] - mean;
            sum_l += v;
            sq_l += v * v;
            let n_l = k + 1;
            let n_r = n - n_l;
            let (a, b) = (x[order[k]][f], x[order[k + 1]][f]);
            if n_l < min_leaf || n_r < min_leaf || a == b {
                continue;
            }
            let sum_r = total - sum_l;
            let sq_r = total_sq - sq_l;
            let sse = (sq_l - sum_l * sum_l / n_l as f64) + (sq_r - sum_r * sum_r / n_r as f64);
            if best.is_none_or(|s| sse < s.sse - tol) {
                best = Some(Split {
                    feature: f,
                    threshold: a + (b - a) / 2.0,
                    sse,
                });
            }
        }
    }
    best.filter(|s| s.sse < parent_sse - tol)
}
