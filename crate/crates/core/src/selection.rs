//! One interface over the QUBO selector and the classical top-k baselines.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alpha_search::{search_alpha, AlphaSearchConfig, Probe, SearchError, DEFAULT_MAX_ITERS};
use crate::data::{DataError, Dataset};
use crate::solver::{Params, SIMULATED_ANNEALING};
use crate::stats::{feature_importance, score_dataset, Measure, StatsError, DEFAULT_BINS};

/// Final inverse temperature handed to the annealer by QFS unless the caller
/// sets `beta_end`. Score-derived QUBOs have coefficients well below one, so
/// the solver's generic default leaves the walk too hot to settle.
pub const QFS_SA_BETA_END: f64 = 1000.0;

/// Accepted relative miss between requested and achieved QFS cardinality.
pub const DEFAULT_K_TOLERANCE: f64 = 0.1;

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("k = {k} outside [1, {n}]")]
    KOutOfRange { k: usize, n: usize },
    #[error("top-k needs anova_f or chi_squared, got {0:?}")]
    UnsupportedTopK(Measure),
    #[error("alpha search reached {achieved} features for k = {requested} (tolerance {tolerance})")]
    CardinalityMiss {
        requested: usize,
        achieved: usize,
        tolerance: f64,
    },
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SelectionMethod {
    Qfs { measure: Measure, backend: String },
    TopK { measure: Measure },
    Original,
}

impl SelectionMethod {
    /// Short display label, e.g. `qfs-mi`, `topk-anova`, `original`.
    pub fn label(&self) -> String {
        match self {
            SelectionMethod::Qfs { measure, .. } => format!("qfs-{}", measure.tag()),
            SelectionMethod::TopK { measure } => format!("topk-{}", measure.tag()),
            SelectionMethod::Original => "original".to_string(),
        }
    }

    pub fn uses_k(&self) -> bool {
        !matches!(self, SelectionMethod::Original)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectOptions {
    pub bins: usize,
    /// Extra solver parameters for QFS; `seed` is always derived per probe.
    pub params: Params,
    pub max_iters: usize,
    pub k_tolerance: f64,
}

impl Default for SelectOptions {
    fn default() -> Self {
        SelectOptions {
            bins: DEFAULT_BINS,
            params: Params::new(),
            max_iters: DEFAULT_MAX_ITERS,
            k_tolerance: DEFAULT_K_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QfsMetadata {
    pub alpha: f64,
    pub k_requested: usize,
    pub k_achieved: usize,
    pub exact: bool,
    pub non_monotone: bool,
    pub scores_hash: String,
    pub bins: usize,
    pub seed: u64,
    pub params: Params,
    pub trace: Vec<Probe>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub method: SelectionMethod,
    /// Sorted, unique indices into the source dataset's features.
    pub feature_indices: Vec<usize>,
    pub feature_names: Vec<String>,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qfs: Option<QfsMetadata>,
}

fn finish(ds: &Dataset, method: SelectionMethod, mut indices: Vec<usize>, qfs: Option<QfsMetadata>) -> Selection {
    indices.sort_unstable();
    indices.dedup();
    Selection {
        method,
        feature_names: indices.iter().map(|&i| ds.feature(i).name().to_string()).collect(),
        k: indices.len(),
        feature_indices: indices,
        qfs,
    }
}

/// Indices of the `k` largest scores, ties to the smaller index.
pub fn top_k_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

/// Select `k` features of `ds` with `method`. `k` is ignored for `Original`.
pub fn select(
    ds: &Dataset,
    method: &SelectionMethod,
    k: usize,
    seed: u64,
    opts: &SelectOptions,
) -> Result<Selection, SelectionError> {
    let n = ds.n_features();
    if method.uses_k() && (k < 1 || k > n) {
        return Err(SelectionError::KOutOfRange { k, n });
    }
    match method {
        SelectionMethod::Original => Ok(finish(ds, method.clone(), (0..n).collect(), None)),
        SelectionMethod::TopK { measure } => {
            if !matches!(measure, Measure::AnovaF | Measure::ChiSquared) {
                return Err(SelectionError::UnsupportedTopK(*measure));
            }
            let scores = feature_importance(ds, *measure, opts.bins)?;
            Ok(finish(ds, method.clone(), top_k_indices(&scores, k), None))
        }
        SelectionMethod::Qfs { measure, backend } => {
            let scores = score_dataset(ds, *measure, opts.bins)?;
            let mut params = opts.params.clone();
            if backend == SIMULATED_ANNEALING {
                params
                    .entry("beta_end".to_string())
                    .or_insert_with(|| QFS_SA_BETA_END.to_string());
            }
            let mut cfg = AlphaSearchConfig::new(k).backend(backend.clone()).seed(seed);
            cfg.params = params.clone();
            cfg.max_iters = opts.max_iters;
            let result = search_alpha(&scores, &cfg)?;
            let miss = result.k_achieved.abs_diff(k) as f64;
            if miss > opts.k_tolerance * k as f64 || result.k_achieved == 0 {
                return Err(SelectionError::CardinalityMiss {
                    requested: k,
                    achieved: result.k_achieved,
                    tolerance: opts.k_tolerance,
                });
            }
            let meta = QfsMetadata {
                alpha: result.alpha,
                k_requested: k,
                k_achieved: result.k_achieved,
                exact: result.exact,
                non_monotone: result.non_monotone,
                scores_hash: scores.content_hash(),
                bins: opts.bins,
                seed,
                params,
                trace: result.trace.clone(),
            };
            Ok(finish(ds, method.clone(), result.selected_indices(), Some(meta)))
        }
    }
}

/// Restrict `ds` to the selected feature columns.
pub fn project(ds: &Dataset, sel: &Selection) -> Result<Dataset, SelectionError> {
    Ok(ds.select_features(&sel.feature_indices)?)
}
