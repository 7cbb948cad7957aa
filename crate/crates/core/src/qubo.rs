//! Feature-selection QUBO at a fixed trade-off weight.
//!
//! For importance `I`, redundancy `R` and weight `alpha` the objective is
//!
//! ```text
//! E(b) = -alpha * sum_i I_i b_i + (1 - alpha) * sum_{i != j} R_ij b_i b_j
//! ```
//!
//! The ordered double sum visits every unordered pair twice, so each pair is
//! stored once in the upper triangle with coefficient
//! `(1 - alpha) * (R_ij + R_ji)`. No cardinality penalty is encoded: the number
//! of selected features is steered through `alpha` alone.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::ScoreSet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuboError {
    #[error("alpha {0} outside [0, 1]")]
    AlphaOutOfRange(f64),
    #[error("bit vector has length {got}, instance has {expected} variables")]
    LengthMismatch { expected: usize, got: usize },
    #[error("bit vector entry {index} is {value}, expected 0 or 1")]
    NonBinaryEntry { index: usize, value: u8 },
    #[error("coefficient at ({0}, {1}) is not finite")]
    NonFinite(usize, usize),
    #[error("malformed instance: {0}")]
    Malformed(String),
}

/// Where an instance's coefficients came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub measure: String,
    pub score_hash: String,
}

/// Upper-triangular QUBO over `n` binary variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "QuboRepr", into = "QuboRepr")]
pub struct QuboInstance {
    linear: Vec<f64>,
    /// Row-major strict upper triangle, pair `(i, j)` with `i < j`.
    quadratic: Vec<f64>,
    alpha: Option<f64>,
    provenance: Option<Provenance>,
}

/// Index of pair `(i, j)`, `i < j`, in a row-major strict upper triangle.
#[inline]
pub(crate) fn tri_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

impl QuboInstance {
    /// Build from linear terms and a strict upper triangle of pair terms.
    pub fn new(linear: Vec<f64>, quadratic: Vec<f64>) -> Result<Self, QuboError> {
        let n = linear.len();
        if quadratic.len() != n * n.saturating_sub(1) / 2 {
            return Err(QuboError::Malformed(format!(
                "{} pair coefficients for {n} variables",
                quadratic.len()
            )));
        }
        if let Some(i) = linear.iter().position(|v| !v.is_finite()) {
            return Err(QuboError::NonFinite(i, i));
        }
        let q = QuboInstance {
            linear,
            quadratic,
            alpha: None,
            provenance: None,
        };
        for i in 0..n {
            for j in i + 1..n {
                if !q.pair(i, j).is_finite() {
                    return Err(QuboError::NonFinite(i, j));
                }
            }
        }
        Ok(q)
    }

    /// Build from `(i, j, coeff)` triples; `i == j` entries are linear terms and
    /// repeated or lower-triangle entries are folded into the upper triangle.
    pub fn from_triples(n: usize, triples: &[(usize, usize, f64)]) -> Result<Self, QuboError> {
        let mut linear = vec![0.0; n];
        let mut quadratic = vec![0.0; n * n.saturating_sub(1) / 2];
        for &(i, j, c) in triples {
            if i >= n || j >= n {
                return Err(QuboError::Malformed(format!("index ({i}, {j}) for {n} variables")));
            }
            match i.cmp(&j) {
                std::cmp::Ordering::Equal => linear[i] += c,
                std::cmp::Ordering::Less => quadratic[tri_index(n, i, j)] += c,
                std::cmp::Ordering::Greater => quadratic[tri_index(n, j, i)] += c,
            }
        }
        QuboInstance::new(linear, quadratic)
    }

    pub fn n(&self) -> usize {
        self.linear.len()
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    /// Coefficient of `b_i b_j` for `i != j` (either order).
    pub fn pair(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.quadratic[tri_index(self.n(), a, b)]
    }

    pub fn quadratic_upper(&self) -> &[f64] {
        &self.quadratic
    }

    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }

    /// Dense symmetric pair matrix with zero diagonal.
    pub fn dense_pairs(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let c = self.pair(i, j);
                m[i][j] = c;
                m[j][i] = c;
            }
        }
        m
    }

    /// Sparse text form: a `# qubo n=.. alpha=..` header then one `i j coeff`
    /// line per non-zero coefficient, linear terms on the diagonal.
    pub fn to_sparse_text(&self) -> String {
        let n = self.n();
        let mut out = String::new();
        match self.alpha {
            Some(a) => writeln!(out, "# qubo n={n} alpha={a}").unwrap(),
            None => writeln!(out, "# qubo n={n}").unwrap(),
        }
        for i in 0..n {
            if self.linear[i] != 0.0 {
                writeln!(out, "{i} {i} {}", self.linear[i]).unwrap();
            }
            for j in i + 1..n {
                let c = self.pair(i, j);
                if c != 0.0 {
                    writeln!(out, "{i} {j} {c}").unwrap();
                }
            }
        }
        out
    }

    /// Parse the sparse text form. Without a header, `n` is one past the
    /// largest index seen. Lines starting with `#` are otherwise ignored.
    pub fn from_sparse_text(text: &str) -> Result<Self, QuboError> {
        let mut n_decl = None;
        let mut alpha = None;
        let mut triples = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if let Some(rest) = line.strip_prefix('#') {
                let mut words = rest.split_whitespace();
                if words.next() == Some("qubo") {
                    for w in words {
                        if let Some(v) = w.strip_prefix("n=") {
                            n_decl = Some(v.parse::<usize>().map_err(|e| QuboError::Malformed(e.to_string()))?);
                        } else if let Some(v) = w.strip_prefix("alpha=") {
                            alpha = Some(v.parse::<f64>().map_err(|e| QuboError::Malformed(e.to_string()))?);
                        }
                    }
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let bad = || QuboError::Malformed(format!("line {}: `{line}`", lineno + 1));
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(bad());
            }
            let i = parts[0].parse::<usize>().map_err(|_| bad())?;
            let j = parts[1].parse::<usize>().map_err(|_| bad())?;
            let c = parts[2].parse::<f64>().map_err(|_| bad())?;
            triples.push((i, j, c));
        }
        let n = n_decl.unwrap_or_else(|| triples.iter().map(|&(i, j, _)| i.max(j) + 1).max().unwrap_or(0));
        let mut q = QuboInstance::from_triples(n, &triples)?;
        q.alpha = alpha;
        Ok(q)
    }
}

#[derive(Serialize, Deserialize)]
struct QuboRepr {
    n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
    linear: Vec<f64>,
    quadratic_upper: Vec<f64>,
}

impl From<QuboInstance> for QuboRepr {
    fn from(q: QuboInstance) -> Self {
        QuboRepr {
            n: q.n(),
            alpha: q.alpha,
            provenance: q.provenance,
            linear: q.linear,
            quadratic_upper: q.quadratic,
        }
    }
}

impl TryFrom<QuboRepr> for QuboInstance {
    type Error = QuboError;

    fn try_from(r: QuboRepr) -> Result<Self, Self::Error> {
        if r.linear.len() != r.n {
            return Err(QuboError::Malformed(format!("{} linear terms for n={}", r.linear.len(), r.n)));
        }
        let mut q = QuboInstance::new(r.linear, r.quadratic_upper)?;
        q.alpha = r.alpha;
        q.provenance = r.provenance;
        Ok(q)
    }
}

/// The selection objective for `alpha` in `[0, 1]`.
pub fn build_qubo(scores: &ScoreSet, alpha: f64) -> Result<QuboInstance, QuboError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(QuboError::AlphaOutOfRange(alpha));
    }
    let n = scores.n();
    let r = scores.redundancy();
    let linear = scores.importance().iter().map(|&v| -alpha * v).collect();
    let mut quadratic = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            quadratic.push((1.0 - alpha) * (r[i][j] + r[j][i]));
        }
    }
    let mut q = QuboInstance::new(linear, quadratic)?;
    q.alpha = Some(alpha);
    q.provenance = Some(Provenance {
        measure: scores.measure().tag().to_string(),
        score_hash: scores.content_hash(),
    });
    Ok(q)
}

pub(crate) fn check_bits(n: usize, bits: &[u8]) -> Result<(), QuboError> {
    if bits.len() != n {
        return Err(QuboError::LengthMismatch { expected: n, got: bits.len() });
    }
    if let Some(index) = bits.iter().position(|&b| b > 1) {
        return Err(QuboError::NonBinaryEntry { index, value: bits[index] });
    }
    Ok(())
}

/// `sum_i linear_i b_i + sum_{i<j} Q_ij b_i b_j`.
///
/// Accumulation order is fixed (variable by variable, each adding its linear
/// term then its pairs with earlier active variables) and shared with the
/// exhaustive solver, so equal states always produce identical floats.
pub fn energy(q: &QuboInstance, bits: &[u8]) -> Result<f64, QuboError> {
    check_bits(q.n(), bits)?;
    Ok(energy_unchecked(q, bits))
}

pub(crate) fn energy_unchecked(q: &QuboInstance, bits: &[u8]) -> f64 {
    let n = q.n();
    let mut e = 0.0;
    for i in 0..n {
        if bits[i] == 1 {
            e += q.linear[i];
            for j in 0..i {
                if bits[j] == 1 {
                    e += q.quadratic[tri_index(n, j, i)];
                }
            }
        }
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::Measure;
    use proptest::prelude::*;

    fn scores(importance: Vec<f64>, pairs: &[(usize, usize, f64)]) -> ScoreSet {
        let n = importance.len();
        let mut r = vec![vec![0.0; n]; n];
        for &(i, j, v) in pairs {
            r[i][j] = v;
            r[j][i] = v;
        }
        ScoreSet::new(importance, r, Measure::MutualInformation, 10).unwrap()
    }

    // The objective transcribed literally: ordered pairs i != j.
    fn literal_energy(s: &ScoreSet, alpha: f64, b: &[u8]) -> f64 {
        let n = s.n();
        let mut lin = 0.0;
        for i in 0..n {
            lin += s.importance()[i] * b[i] as f64;
        }
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    quad += s.redundancy()[i][j] * (b[i] * b[j]) as f64;
                }
            }
        }
        -alpha * lin + (1.0 - alpha) * quad
    }

    #[test]
    fn alpha_one_and_zero() {
        let s = scores(vec![0.5, 0.4, 0.1], &[(0, 1, 0.3), (1, 2, 0.2)]);
        let q = build_qubo(&s, 1.0).unwrap();
        assert_eq!(q.linear(), &[-0.5, -0.4, -0.1]);
        assert!(q.quadratic_upper().iter().all(|&c| c == 0.0));
        let q = build_qubo(&s, 0.0).unwrap();
        assert!(q.linear().iter().all(|&c| c == 0.0));
        assert_eq!(q.quadratic_upper(), &[0.6, 0.0, 0.4]);
    }

    #[test]
    fn worked_instance() {
        let s = scores(vec![0.5, 0.4, 0.1], &[(0, 1, 0.3)]);
        let q = build_qubo(&s, 0.5).unwrap();
        assert_eq!(q.linear(), &[-0.25, -0.2, -0.05]);
        assert_eq!(q.pair(0, 1), 0.3);
        assert_eq!(q.pair(1, 0), 0.3);
        assert_eq!(energy(&q, &[0, 0, 0]).unwrap(), 0.0);
        assert_eq!(energy(&q, &[0, 1, 0]).unwrap(), -0.2);
        assert!((energy(&q, &[1, 1, 0]).unwrap() - -0.15).abs() < 1e-15);
        assert_eq!(q.provenance().unwrap().measure, "mi");
        assert_eq!(q.alpha(), Some(0.5));
    }

    #[test]
    fn errors() {
        let s = scores(vec![0.5, 0.4], &[]);
        assert_eq!(build_qubo(&s, 1.5), Err(QuboError::AlphaOutOfRange(1.5)));
        assert!(matches!(build_qubo(&s, f64::NAN), Err(QuboError::AlphaOutOfRange(_))));
        let q = build_qubo(&s, 0.5).unwrap();
        assert_eq!(energy(&q, &[1]), Err(QuboError::LengthMismatch { expected: 2, got: 1 }));
        assert_eq!(energy(&q, &[1, 2]), Err(QuboError::NonBinaryEntry { index: 1, value: 2 }));
    }

    #[test]
    fn sparse_text_round_trip() {
        let s = scores(vec![0.5, 0.0, 0.1, 0.7], &[(0, 1, 0.3), (2, 3, 0.125)]);
        let q = build_qubo(&s, 0.3).unwrap();
        let text = q.to_sparse_text();
        assert!(text.starts_with("# qubo n=4 alpha=0.3\n"));
        assert!(text.contains("0 1 "));
        let back = QuboInstance::from_sparse_text(&text).unwrap();
        assert_eq!(back.linear(), q.linear());
        assert_eq!(back.quadratic_upper(), q.quadratic_upper());
        assert_eq!(back.alpha(), Some(0.3));

        let folded = QuboInstance::from_sparse_text("1 0 0.5\n0 1 0.25\n2 2 -1\n").unwrap();
        assert_eq!(folded.n(), 3);
        assert_eq!(folded.pair(0, 1), 0.75);
        assert_eq!(folded.linear(), &[0.0, 0.0, -1.0]);
        assert!(QuboInstance::from_sparse_text("0 x 1\n").is_err());
    }

    #[test]
    fn json_round_trip() {
        let s = scores(vec![0.5, 0.4, 0.1], &[(0, 2, 0.3)]);
        let q = build_qubo(&s, 0.25).unwrap();
        let json = serde_json::to_string(&q).unwrap();
        let back: QuboInstance = serde_json::from_str(&json).unwrap();
        assert_eq!(back, q);
        assert!(serde_json::from_str::<QuboInstance>(r#"{"n":2,"linear":[1.0],"quadratic_upper":[]}"#).is_err());
    }

    #[test]
    fn alpha_one_all_ones_unique_minimizer() {
        let s = scores(vec![0.5, 0.4, 0.1, 0.9, 0.05], &[(0, 1, 0.9), (3, 4, 0.4)]);
        let q = build_qubo(&s, 1.0).unwrap();
        let n = q.n();
        let ones = vec![1u8; n];
        let e1 = energy(&q, &ones).unwrap();
        for mask in 0..(1u32 << n) - 1 {
            let b: Vec<u8> = (0..n).map(|i| ((mask >> i) & 1) as u8).collect();
            assert!(energy(&q, &b).unwrap() > e1);
        }
    }

    proptest! {
        #[test]
        fn energy_matches_literal_objective(
            n in 1usize..12,
            seed in prop::collection::vec(0.0f64..1.0, 200),
            alpha in 0.0f64..=1.0,
            mask in any::<u32>(),
        ) {
            let importance = seed[..n].to_vec();
            let mut pairs = Vec::new();
            let mut k = n;
            for i in 0..n {
                for j in i + 1..n {
                    pairs.push((i, j, seed[k % seed.len()]));
                    k += 1;
                }
            }
            let s = scores(importance, &pairs);
            let q = build_qubo(&s, alpha).unwrap();
            let b: Vec<u8> = (0..n).map(|i| ((mask >> i) & 1) as u8).collect();
            prop_assert!((energy(&q, &b).unwrap() - literal_energy(&s, alpha, &b)).abs() <= 1e-12);
            prop_assert_eq!(energy(&q, &vec![0; n]).unwrap(), 0.0);
        }
    }
}
