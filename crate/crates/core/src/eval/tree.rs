//! Depth-limited regression tree grown by variance reduction.

enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

pub(crate) struct RegressionTree {
    root: Node,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    crate::stats::compensated_sum(v.iter().copied()) / v.len() as f64
}

/// Best `(feature, threshold, sse)` split of `idx`, or `None` if no split
/// leaves at least `min_leaf` rows on both sides and lowers the squared error.
fn best_split(x: &[Vec<f64>], y: &[f64], idx: &[usize], min_leaf: usize) -> Option<(usize, f64)> {
    let n = idx.len();
    let total: f64 = idx.iter().map(|&i| y[i]).sum();
    let total_sq: f64 = idx.iter().map(|&i| y[i] * y[i]).sum();
    let parent_sse = total_sq - total * total / n as f64;
    let mut best: Option<(usize, f64, f64)> = None;
    let d = x[idx[0]].len();
    for f in 0..d {
        let mut order = idx.to_vec();
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
        let (mut s, mut sq) = (0.0, 0.0);
        for pos in 0..n - 1 {
            let yi = y[order[pos]];
            s += yi;
            sq += yi * yi;
            let left = pos + 1;
            let right = n - left;
            let (lo, hi) = (x[order[pos]][f], x[order[pos + 1]][f]);
            if left < min_leaf || right < min_leaf || lo == hi {
                continue;
            }
            let sse = (sq - s * s / left as f64) + ((total_sq - sq) - (total - s).powi(2) / right as f64);
            if best.is_none_or(|b| sse < b.2) {
                best = Some((f, lo + (hi - lo) / 2.0, sse));
            }
        }
    }
    let tol = 1e-12 * parent_sse.abs().max(1.0);
    best.filter(|b| b.2 < parent_sse - tol).map(|(f, t, _)| (f, t))
}

fn grow(x: &[Vec<f64>], y: &[f64], idx: &[usize], depth: usize, max_depth: usize, min_leaf: usize) -> Node {
    let leaf = || Node::Leaf(mean(idx.iter().map(|&i| y[i])));
    if depth >= max_depth || idx.len() < 2 * min_leaf {
        return leaf();
    }
    match best_split(x, y, idx, min_leaf) {
        None => leaf(),
        Some((feature, threshold)) => {
            let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x[i][feature] <= threshold);
            Node::Split {
                feature,
                threshold,
                left: Box::new(grow(x, y, &l, depth + 1, max_depth, min_leaf)),
                right: Box::new(grow(x, y, &r, depth + 1, max_depth, min_leaf)),
            }
        }
    }
}

impl RegressionTree {
    pub(crate) fn fit(x: &[Vec<f64>], y: &[f64], max_depth: usize, min_leaf: usize) -> Self {
        let idx: Vec<usize> = (0..x.len()).collect();
        RegressionTree {
            root: grow(x, y, &idx, 0, max_depth, min_leaf),
        }
    }

    pub(crate) fn predict(&self, row: &[f64]) -> f64 {
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf(v) => return *v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if row[*feature] <= *threshold { left } else { right },
            }
        }
    }
}
