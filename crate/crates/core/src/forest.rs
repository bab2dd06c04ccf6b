//! Small regression forest used by the fANOVA estimator. Axis-aligned
//! splits at midpoints between distinct values, squared-error criterion,
//! every feature considered at every node.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

/// A leaf's box: per feature, the half-open interval `(lo, hi]` of values
/// that reach it.
#[derive(Clone, Debug, PartialEq)]
pub struct LeafBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub value: f64,
}

impl LeafBox {
    pub fn contains(&self, feature: usize, v: f64) -> bool {
        v > self.lo[feature] && v <= self.hi[feature]
    }
}

impl Node {
    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            Node::Leaf { value } => *value,
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if x[*feature] <= *threshold {
                    left.predict(x)
                } else {
                    right.predict(x)
                }
            }
        }
    }

    pub fn leaves(&self, n_features: usize) -> Vec<LeafBox> {
        let mut out = Vec::new();
        let root = LeafBox {
            lo: vec![f64::NEG_INFINITY; n_features],
            hi: vec![f64::INFINITY; n_features],
            value: 0.0,
        };
        self.collect(root, &mut out);
        out
    }

    fn collect(&self, mut b: LeafBox, out: &mut Vec<LeafBox>) {
        match self {
            Node::Leaf { value } => {
                b.value = *value;
                out.push(b);
            }
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                let mut l = b.clone();
                l.hi[*feature] = l.hi[*feature].min(*threshold);
                left.collect(l, out);
                b.lo[*feature] = b.lo[*feature].max(*threshold);
                right.collect(b, out);
            }
        }
    }
}

fn mean(ys: &[f64], idx: &[usize]) -> f64 {
    idx.iter().map(|&i| ys[i]).sum::<f64>() / idx.len() as f64
}

fn grow(xs: &[Vec<f64>], ys: &[f64], idx: &[usize], depth: usize, max_depth: usize) -> Node {
    let value = mean(ys, idx);
    if depth >= max_depth || idx.len() < 2 {
        return Node::Leaf { value };
    }
    let total_sse: f64 = idx.iter().map(|&i| (ys[i] - value).powi(2)).sum();
    if total_sse <= 0.0 {
        return Node::Leaf { value };
    }
    let n_features = xs[0].len();
    // (sse, feature, threshold)
    let mut best: Option<(f64, usize, f64)> = None;
    let mut sorted = idx.to_vec();
    for f in 0..n_features {
        sorted.sort_by(|&a, &b| xs[a][f].total_cmp(&xs[b][f]).then(a.cmp(&b)));
        let total: f64 = sorted.iter().map(|&i| ys[i]).sum();
        let total_sq: f64 = sorted.iter().map(|&i| ys[i] * ys[i]).sum();
        let (mut s, mut sq) = (0.0, 0.0);
        for k in 0..sorted.len() - 1 {
            let y = ys[sorted[k]];
            s += y;
            sq += y * y;
            let (a, b) = (xs[sorted[k]][f], xs[sorted[k + 1]][f]);
            if a == b {
                continue;
            }
            let nl = (k + 1) as f64;
            let nr = (sorted.len() - k - 1) as f64;
            let sse = (sq - s * s / nl) + ((total_sq - sq) - (total - s).powi(2) / nr);
            if best.map_or(true, |(bs, _, _)| sse < bs - 1e-12 * total_sse) {
                best = Some((sse, f, 0.5 * (a + b)));
            }
        }
    }
    let Some((_, feature, threshold)) = best else {
        return Node::Leaf { value };
    };
    let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| xs[i][feature] <= threshold);
    Node::Split {
        feature,
        threshold,
        left: Box::new(grow(xs, ys, &l, depth + 1, max_depth)),
        right: Box::new(grow(xs, ys, &r, depth + 1, max_depth)),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Forest {
    pub trees: Vec<Node>,
    pub n_features: usize,
}

impl Forest {
    /// Each tree sees a bootstrap resample of the rows.
    pub fn fit(xs: &[Vec<f64>], ys: &[f64], n_trees: usize, max_depth: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = xs.len();
        let trees = (0..n_trees)
            .map(|_| {
                let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                grow(xs, ys, &idx, 0, max_depth)
            })
            .collect();
        Self {
            trees,
            n_features: xs.first().map_or(0, |r| r.len()),
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}
