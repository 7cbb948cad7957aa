//! Logistic regression trained by full-batch gradient descent.
//!
//! Two classes use one sigmoid; more classes train one-vs-rest sigmoids and
//! predict the most probable class. The bias is not regularised.

pub(crate) struct Logistic {
    /// One `(weights, bias)` per sigmoid.
    units: Vec<(Vec<f64>, f64)>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn train_unit(x: &[Vec<f64>], y: &[f64], lr: f64, epochs: usize, l2: f64) -> (Vec<f64>, f64) {
    let d = x.first().map_or(0, Vec::len);
    let n = x.len() as f64;
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut grad = vec![0.0; d];
    for _ in 0..epochs {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut gb = 0.0;
        for (row, &t) in x.iter().zip(y) {
            let z: f64 = b + row.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            let err = sigmoid(z) - t;
            for (g, a) in grad.iter_mut().zip(row) {
                *g += err * a;
            }
            gb += err;
        }
        for (wj, g) in w.iter_mut().zip(&grad) {
            *wj -= lr * (g / n + l2 * *wj);
        }
        b -= lr * gb / n;
    }
    (w, b)
}

impl Logistic {
    pub(crate) fn fit(x: &[Vec<f64>], labels: &[usize], classes: usize, lr: f64, epochs: usize, l2: f64) -> Self {
        let positives: Vec<usize> = if classes <= 2 { vec![1] } else { (0..classes).collect() };
        let units = positives
            .into_iter()
            .map(|c| {
                let y: Vec<f64> = labels.iter().map(|&l| f64::from(u8::from(l == c))).collect();
                train_unit(x, &y, lr, epochs, l2)
            })
            .collect();
        Logistic { units }
    }

    pub(crate) fn predict(&self, row: &[f64]) -> usize {
        let score = |(w, b): &(Vec<f64>, f64)| sigmoid(b + row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>());
        if self.units.len() == 1 {
            return usize::from(score(&self.units[0]) > 0.5);
        }
        let mut best = (0, f64::NEG_INFINITY);
        for (c, unit) in self.units.iter().enumerate() {
            let p = score(unit);
            if p > best.1 {
                best = (c, p);
            }
        }
        best.0
    }
}
