//! Association measures between columns and the relevance/redundancy score set.
//!
//! Mutual information and chi-squared work on discrete codes. Continuous columns
//! are discretised with equal-frequency bins (ties always share a bin), binary
//! and nominal columns are used as-is.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::{Column, Dataset, TargetKind};

/// Default bin count for discretising continuous columns.
pub const DEFAULT_BINS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("input contains a non-finite value")]
    NonFiniteInput,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("column has zero rank variance")]
    ConstantColumn,
    #[error("need at least {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("bin count must be at least 2, got {0}")]
    InvalidBins(usize),
    #[error("contingency cell ({0}, {1}) has zero expected count")]
    ZeroExpectedCell(usize, usize),
    #[error("at least two groups are required")]
    SingleGroup,
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
    #[error("score set invariant violated: {0}")]
    InvalidScores(String),
    #[error("measure {measure:?} not applicable: {reason}")]
    MeasureNotApplicable { measure: Measure, reason: String },
    #[error("feature {i} vs {}: {source}", .j.map_or("target".to_string(), |j| format!("feature {j}")))]
    Cell {
        i: usize,
        j: Option<usize>,
        #[source]
        source: Box<StatsError>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    /// Absolute Spearman rank correlation `|r_s|`.
    SpearmanAbs,
    MutualInformation,
    ChiSquared,
    AnovaF,
}

impl Measure {
    pub fn tag(self) -> &'static str {
        match self {
            Measure::SpearmanAbs => "spearman",
            Measure::MutualInformation => "mi",
            Measure::ChiSquared => "chi2",
            Measure::AnovaF => "anova",
        }
    }
}

impl std::str::FromStr for Measure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "spearman" | "spearman_abs" | "sc" => Ok(Measure::SpearmanAbs),
            "mi" | "mutual_information" => Ok(Measure::MutualInformation),
            "chi2" | "chi_squared" | "chi-squared" => Ok(Measure::ChiSquared),
            "anova" | "anova_f" | "f" | "f-test" => Ok(Measure::AnovaF),
            other => Err(format!("unknown measure `{other}`")),
        }
    }
}

/// Neumaier-compensated sum; the result does not depend on accumulation drift.
pub(crate) fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Sum that is independent of the input order (terms are sorted first).
fn order_free_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    compensated_sum(terms)
}

/// 1-based ranks; tied values get the mean of the ranks they span.
pub fn rank_transform(values: &[f64]) -> Result<Vec<f64>, StatsError> {
    if values.is_empty() {
        return Err(StatsError::TooShort { needed: 1, got: 0 });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFiniteInput);
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold 1-based ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    Ok(ranks)
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    let n = x.len() as f64;
    let mx = compensated_sum(x.iter().copied()) / n;
    let my = compensated_sum(y.iter().copied()) / n;
    let sxy = compensated_sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    let sxx = compensated_sum(x.iter().map(|a| (a - mx) * (a - mx)));
    let syy = compensated_sum(y.iter().map(|b| (b - my) * (b - my)));
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(StatsError::ConstantColumn);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn check_pair(x: &[f64], y: &[f64], needed: usize) -> Result<(), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < needed {
        return Err(StatsError::TooShort { needed, got: x.len() });
    }
    Ok(())
}

/// Spearman rank correlation: Pearson correlation of the average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check_pair(x, y, 2)?;
    pearson(&rank_transform(x)?, &rank_transform(y)?)
}

/// Equal-frequency bin codes in `[0, bins)`.
///
/// A value's bin is decided by the sorted position of its first occurrence,
/// so equal values never straddle a bin boundary. Codes are compacted so that
/// every code in `[0, returned count)` is used.
pub fn quantile_bins(values: &[f64], bins: usize) -> Result<(Vec<usize>, usize), StatsError> {
    if bins < 2 {
        return Err(StatsError::InvalidBins(bins));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFiniteInput);
    }
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut raw = vec![0usize; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let bin = (start * bins / n).min(bins - 1);
        for &i in &order[start..end] {
            raw[i] = bin;
        }
        start = end;
    }
    Ok(compact_codes(&raw))
}

/// Renumber codes densely in increasing order of appearance value.
fn compact_codes(codes: &[usize]) -> (Vec<usize>, usize) {
    let max = codes.iter().copied().max().map_or(0, |m| m + 1);
    let mut map = vec![usize::MAX; max];
    for &c in codes {
        map[c] = 0;
    }
    let mut next = 0;
    for slot in map.iter_mut() {
        if *slot == 0 {
            *slot = next;
            next += 1;
        }
    }
    (codes.iter().map(|&c| map[c]).collect(), next)
}

/// Discrete codes for a column, binning continuous columns.
pub fn discretize(column: &Column, bins: usize) -> Result<(Vec<usize>, usize), StatsError> {
    if column.kind().is_discrete() {
        let codes: Vec<usize> = column.values().iter().map(|&v| v as usize).collect();
        Ok(compact_codes(&codes))
    } else {
        quantile_bins(column.values(), bins)
    }
}

fn target_codes(ds: &Dataset, bins: usize) -> Result<(Vec<usize>, usize), StatsError> {
    discretize(ds.target(), bins)
}

/// Contingency table of two code vectors.
fn contingency(x: &[usize], cx: usize, y: &[usize], cy: usize) -> Vec<Vec<f64>> {
    let mut table = vec![vec![0.0; cy]; cx];
    for (&a, &b) in x.iter().zip(y) {
        table[a][b] += 1.0;
    }
    table
}

/// Plug-in mutual information (nats) of two discrete code vectors.
///
/// Cells with zero joint count contribute nothing. The value is exactly
/// symmetric in its arguments and clamped at zero.
pub fn mutual_information_codes(x: &[usize], y: &[usize]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Ok(0.0);
    }
    let (x, cx) = compact_codes(x);
    let (y, cy) = compact_codes(y);
    let table = contingency(&x, cx, &y, cy);
    let n = x.len() as f64;
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..cy).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let mut terms = Vec::new();
    for (i, row) in table.iter().enumerate() {
        for (j, &nxy) in row.iter().enumerate() {
            if nxy > 0.0 {
                terms.push(nxy / n * (nxy * n / (rows[i] * cols[j])).ln());
            }
        }
    }
    Ok(order_free_sum(terms).max(0.0))
}

/// Plug-in entropy (nats) of a discrete code vector.
pub fn entropy_codes(x: &[usize]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let (x, c) = compact_codes(x);
    let mut counts = vec![0.0f64; c];
    for &v in &x {
        counts[v] += 1.0;
    }
    let n = x.len() as f64;
    order_free_sum(counts.into_iter().map(|k| k / n * (n / k).ln()).collect())
}

/// Plug-in mutual information of two real columns, each binned into `bins`
/// equal-frequency bins. Use [`mutual_information_codes`] for data that is
/// already discrete.
pub fn mutual_information(x: &[f64], y: &[f64], bins: usize) -> Result<f64, StatsError> {
    check_pair(x, y, 0)?;
    let (cx, _) = quantile_bins(x, bins)?;
    let (cy, _) = quantile_bins(y, bins)?;
    mutual_information_codes(&cx, &cy)
}

/// Pearson chi-squared statistic of an observed contingency table against
/// independence, with expected counts from the marginals.
pub fn chi_squared_table(observed: &[Vec<f64>]) -> Result<f64, StatsError> {
    let cols = observed.first().map_or(0, Vec::len);
    if observed.iter().any(|r| r.len() != cols) {
        return Err(StatsError::LengthMismatch(cols, 0));
    }
    let rows: Vec<f64> = observed.iter().map(|r| r.iter().sum()).collect();
    let colsum: Vec<f64> = (0..cols).map(|j| observed.iter().map(|r| r[j]).sum()).collect();
    let n: f64 = rows.iter().sum();
    let mut terms = Vec::with_capacity(observed.len() * cols);
    for (i, row) in observed.iter().enumerate() {
        for (j, &o) in row.iter().enumerate() {
            let e = rows[i] * colsum[j] / n;
            if !(e > 0.0) {
                return Err(StatsError::ZeroExpectedCell(i, j));
            }
            terms.push((o - e) * (o - e) / e);
        }
    }
    Ok(order_free_sum(terms))
}

/// Chi-squared statistic of two discrete code vectors. Only categories that
/// occur are tabulated, so expected counts are always positive.
pub fn chi_squared(x: &[usize], y: &[usize]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(StatsError::TooShort { needed: 1, got: 0 });
    }
    let (x, cx) = compact_codes(x);
    let (y, cy) = compact_codes(y);
    chi_squared_table(&contingency(&x, cx, &y, cy))
}

/// One-way ANOVA F statistic `(SSB/(K-1)) / (SSW/(N-K))` of `x` grouped by `groups`.
///
/// Returns `f64::INFINITY` when groups differ but have no internal spread.
pub fn anova_f(x: &[f64], groups: &[usize]) -> Result<f64, StatsError> {
    if x.len() != groups.len() {
        return Err(StatsError::LengthMismatch(x.len(), groups.len()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFiniteInput);
    }
    let (codes, k) = compact_codes(groups);
    if k < 2 {
        return Err(StatsError::SingleGroup);
    }
    let n = x.len();
    if n <= k {
        return Err(StatsError::DegenerateInput("need more records than groups"));
    }
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); k];
    for (&v, &g) in x.iter().zip(&codes) {
        members[g].push(v);
    }
    let grand = compensated_sum(x.iter().copied()) / n as f64;
    let means: Vec<f64> = members
        .iter()
        .map(|m| compensated_sum(m.iter().copied()) / m.len() as f64)
        .collect();
    let ssb = compensated_sum(
        members
            .iter()
            .zip(&means)
            .map(|(m, &mu)| m.len() as f64 * (mu - grand) * (mu - grand)),
    );
    let ssw = compensated_sum(
        members
            .iter()
            .zip(&means)
            .flat_map(|(m, &mu)| m.iter().map(move |v| (v - mu) * (v - mu))),
    );
    // Relative floor: spreads below rounding noise of the data count as zero.
    let scale = compensated_sum(x.iter().map(|v| (v - grand) * (v - grand)));
    let tiny = scale * 1e-24;
    match (ssb > tiny, ssw > tiny) {
        (_, true) => Ok((ssb / (k - 1) as f64) / (ssw / (n - k) as f64)),
        (true, false) => Ok(f64::INFINITY),
        (false, false) => Err(StatsError::DegenerateInput("no between- or within-group variance")),
    }
}

/// Importance vector and redundancy matrix of a dataset under one measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ScoreSetRepr", try_from = "ScoreSetRepr")]
pub struct ScoreSet {
    importance: Vec<f64>,
    redundancy: Vec<Vec<f64>>,
    measure: Measure,
    bin_count: usize,
}

impl ScoreSet {
    /// Validates symmetry, zero diagonal, finiteness and non-negativity.
    pub fn new(
        importance: Vec<f64>,
        redundancy: Vec<Vec<f64>>,
        measure: Measure,
        bin_count: usize,
    ) -> Result<Self, String> {
        let n = importance.len();
        if redundancy.len() != n || redundancy.iter().any(|r| r.len() != n) {
            return Err(format!("redundancy must be {n}x{n}"));
        }
        if importance.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err("importance entries must be finite and non-negative".into());
        }
        for i in 0..n {
            if redundancy[i][i] != 0.0 {
                return Err(format!("redundancy[{i}][{i}] must be 0"));
            }
            for j in 0..n {
                let v = redundancy[i][j];
                if !v.is_finite() || v < 0.0 {
                    return Err(format!("redundancy[{i}][{j}] = {v} must be finite and non-negative"));
                }
                if v != redundancy[j][i] {
                    return Err(format!("redundancy not symmetric at ({i}, {j})"));
                }
            }
        }
        Ok(ScoreSet {
            importance,
            redundancy,
            measure,
            bin_count,
        })
    }

    pub fn n(&self) -> usize {
        self.importance.len()
    }

    pub fn importance(&self) -> &[f64] {
        &self.importance
    }

    pub fn redundancy(&self) -> &[Vec<f64>] {
        &self.redundancy
    }

    pub fn measure(&self) -> Measure {
        self.measure
    }

    pub fn bin_count(&self) -> usize {
        self.bin_count
    }

    /// SHA-256 over the measure, bin count and the exact bits of every score.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.measure.tag().as_bytes());
        h.update((self.bin_count as u64).to_le_bytes());
        h.update((self.n() as u64).to_le_bytes());
        for v in &self.importance {
            h.update(v.to_bits().to_le_bytes());
        }
        for i in 0..self.n() {
            for j in i + 1..self.n() {
                h.update(self.redundancy[i][j].to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// On-disk form: the redundancy matrix as its row-major strict upper triangle.
#[derive(Serialize, Deserialize)]
struct ScoreSetRepr {
    measure: Measure,
    bin_count: usize,
    importance: Vec<f64>,
    redundancy_upper: Vec<f64>,
}

impl From<ScoreSet> for ScoreSetRepr {
    fn from(s: ScoreSet) -> Self {
        let n = s.n();
        let mut upper = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            upper.extend_from_slice(&s.redundancy[i][i + 1..]);
        }
        ScoreSetRepr {
            measure: s.measure,
            bin_count: s.bin_count,
            importance: s.importance,
            redundancy_upper: upper,
        }
    }
}

impl TryFrom<ScoreSetRepr> for ScoreSet {
    type Error = String;

    fn try_from(r: ScoreSetRepr) -> Result<Self, Self::Error> {
        let n = r.importance.len();
        if r.redundancy_upper.len() != n * n.saturating_sub(1) / 2 {
            return Err(format!(
                "redundancy_upper has {} entries, expected {}",
                r.redundancy_upper.len(),
                n * n.saturating_sub(1) / 2
            ));
        }
        let mut m = vec![vec![0.0; n]; n];
        let mut it = r.redundancy_upper.into_iter();
        for i in 0..n {
            for j in i + 1..n {
                let v = it.next().unwrap();
                m[i][j] = v;
                m[j][i] = v;
            }
        }
        ScoreSet::new(r.importance, m, r.measure, r.bin_count)
    }
}

fn cell_err(i: usize, j: Option<usize>) -> impl FnOnce(StatsError) -> StatsError {
    move |e| StatsError::Cell {
        i,
        j,
        source: Box::new(e),
    }
}

fn not_applicable(measure: Measure, reason: impl Into<String>) -> StatsError {
    StatsError::MeasureNotApplicable {
        measure,
        reason: reason.into(),
    }
}

/// Per-feature association with the target.
///
/// Every measure is accepted here. Chi-squared and ANOVA F require a class
/// target; continuous features are binned for chi-squared.
pub fn feature_importance(ds: &Dataset, measure: Measure, bins: usize) -> Result<Vec<f64>, StatsError> {
    let n = ds.n_features();
    match measure {
        Measure::SpearmanAbs => {
            let ry = rank_transform(ds.target().values())?;
            (0..n)
                .into_par_iter()
                .map(|i| {
                    rank_transform(ds.feature(i).values())
                        .and_then(|rx| pearson(&rx, &ry))
                        .map(f64::abs)
                        .map_err(cell_err(i, None))
                })
                .collect()
        }
        Measure::MutualInformation => {
            let (y, _) = target_codes(ds, bins)?;
            (0..n)
                .into_par_iter()
                .map(|i| {
                    discretize(ds.feature(i), bins)
                        .and_then(|(x, _)| mutual_information_codes(&x, &y))
                        .map_err(cell_err(i, None))
                })
                .collect()
        }
        Measure::ChiSquared => {
            if !ds.target_kind().is_classification() {
                return Err(not_applicable(measure, "chi-squared needs a class target"));
            }
            let (y, _) = target_codes(ds, bins)?;
            (0..n)
                .into_par_iter()
                .map(|i| {
                    discretize(ds.feature(i), bins)
                        .and_then(|(x, _)| chi_squared(&x, &y))
                        .map_err(cell_err(i, None))
                })
                .collect()
        }
        Measure::AnovaF => {
            let Some(groups) = ds.class_labels() else {
                return Err(not_applicable(measure, "ANOVA F needs a class target"));
            };
            (0..n)
                .into_par_iter()
                .map(|i| anova_f(ds.feature(i).values(), &groups).map_err(cell_err(i, None)))
                .collect()
        }
    }
}

/// Importance `I_i = measure(feature_i, target)` and redundancy
/// `R_ij = measure(feature_i, feature_j)`.
///
/// Only Spearman and mutual information define feature-pair redundancy;
/// chi-squared and ANOVA F are rejected.
pub fn score_dataset(ds: &Dataset, measure: Measure, bins: usize) -> Result<ScoreSet, StatsError> {
    let n = ds.n_features();
    if matches!(measure, Measure::ChiSquared | Measure::AnovaF) {
        return Err(not_applicable(measure, "no feature-pair redundancy is defined"));
    }
    if bins < 2 {
        return Err(StatsError::InvalidBins(bins));
    }
    let importance = feature_importance(ds, measure, bins)?;

    // Precompute per-column transforms once; pairs then only combine them.
    let prepared: Vec<Prepared> = (0..n)
        .into_par_iter()
        .map(|i| {
            let col = ds.feature(i);
            match measure {
                Measure::SpearmanAbs => rank_transform(col.values()).map(Prepared::Ranks),
                _ => discretize(col, bins).map(|(c, _)| Prepared::Codes(c)),
            }
            .map_err(cell_err(i, None))
        })
        .collect::<Result<_, _>>()?;

    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            match (&prepared[i], &prepared[j]) {
                (Prepared::Ranks(a), Prepared::Ranks(b)) => pearson(a, b).map(f64::abs),
                (Prepared::Codes(a), Prepared::Codes(b)) => mutual_information_codes(a, b),
                _ => unreachable!("columns prepared with one measure"),
            }
            .map_err(cell_err(i, Some(j)))
        })
        .collect::<Result<_, _>>()?;

    let mut redundancy = vec![vec![0.0; n]; n];
    for (&(i, j), v) in pairs.iter().zip(values) {
        redundancy[i][j] = v;
        redundancy[j][i] = v;
    }
    let bin_count = if measure == Measure::MutualInformation { bins } else { 0 };
    ScoreSet::new(importance, redundancy, measure, bin_count)
        .map_err(StatsError::InvalidScores)
}

enum Prepared {
    Ranks(Vec<f64>),
    Codes(Vec<usize>),
}

/// Is the measure usable for the dataset's target kind?
pub fn check_target(measure: Measure, kind: TargetKind) -> Result<(), StatsError> {
    match (measure, kind) {
        (Measure::ChiSquared | Measure::AnovaF, TargetKind::Regression) => {
            Err(not_applicable(measure, "needs a class target"))
        }
        _ => Ok(()),
    }
}
