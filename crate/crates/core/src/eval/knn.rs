//! k-nearest neighbours on standardised features.

/// Indices of the `k` training rows closest to `query` by Euclidean distance,
/// ties broken by the smaller row index.
pub(crate) fn nearest(train: &[Vec<f64>], query: &[f64], k: usize) -> Vec<usize> {
    let mut dist: Vec<(f64, usize)> = train
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let d: f64 = row.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
            (d, i)
        })
        .collect();
    let k = k.min(dist.len());
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < dist.len() {
        dist.select_nth_unstable_by(k, cmp);
        dist.truncate(k);
    }
    dist.sort_by(cmp);
    dist.into_iter().map(|(_, i)| i).collect()
}

/// Majority label among the neighbours; ties go to the smallest class.
pub(crate) fn classify(train: &[Vec<f64>], labels: &[usize], query: &[f64], k: usize, classes: usize) -> usize {
    let mut votes = vec![0usize; classes];
    for i in nearest(train, query, k) {
        votes[labels[i]] += 1;
    }
    let top = *votes.iter().max().expect("at least one class");
    votes.iter().position(|&v| v == top).expect("max exists")
}

pub(crate) fn regress(train: &[Vec<f64>], target: &[f64], query: &[f64], k: usize) -> f64 {
    let idx = nearest(train, query, k);
    crate::stats::compensated_sum(idx.iter().map(|&i| target[i])) / idx.len() as f64
}
