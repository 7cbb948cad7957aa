//! Bisection on the trade-off weight alpha to reach a target feature count.
//!
//! Larger alpha rewards importance more and penalises redundancy less, so the
//! minimiser tends to select more features. The search relies on that trend
//! only to decide which half to keep; it never needs it for correctness and
//! always returns the closest probe it has seen.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qubo::{build_qubo, QuboError};
use crate::seed::derive_seed;
use crate::solver::{backend_solve, Params, SolverError, EXHAUSTIVE};
use crate::stats::ScoreSet;

pub const DEFAULT_MAX_ITERS: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("k_target {k} outside [1, {n}]")]
    KTargetOutOfRange { k: usize, n: usize },
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Qubo(#[from] QuboError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSearchConfig {
    pub k_target: usize,
    pub max_iters: usize,
    pub backend: String,
    /// Solver parameters; `seed` is replaced by a per-probe derived seed.
    pub params: Params,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    /// Base seed from which every probe's solver seed is derived.
    pub seed: u64,
}

impl AlphaSearchConfig {
    pub fn new(k_target: usize) -> Self {
        AlphaSearchConfig {
            k_target,
            max_iters: DEFAULT_MAX_ITERS,
            backend: EXHAUSTIVE.to_string(),
            params: Params::new(),
            alpha_lo: 0.0,
            alpha_hi: 1.0,
            seed: 0,
        }
    }

    pub fn backend(mut self, backend: impl Into<String>) -> Self {
        self.backend = backend.into();
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn param(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.params.insert(key.into(), value.to_string());
        self
    }

    fn validate(&self, n: usize) -> Result<(), SearchError> {
        if self.k_target < 1 || self.k_target > n {
            return Err(SearchError::KTargetOutOfRange { k: self.k_target, n });
        }
        if self.max_iters < 1 {
            return Err(SearchError::InvalidConfig("max_iters must be >= 1".into()));
        }
        if !(0.0 <= self.alpha_lo && self.alpha_lo < self.alpha_hi && self.alpha_hi <= 1.0) {
            return Err(SearchError::InvalidConfig(format!(
                "need 0 <= alpha_lo < alpha_hi <= 1, got [{}, {}]",
                self.alpha_lo, self.alpha_hi
            )));
        }
        Ok(())
    }
}

/// One solver call at a fixed alpha.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub alpha: f64,
    pub k: usize,
    /// Seed handed to the solver for this probe.
    pub seed: u64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSearchResult {
    pub alpha: f64,
    pub selection: Vec<u8>,
    pub k_achieved: usize,
    pub k_target: usize,
    pub exact: bool,
    pub trace: Vec<Probe>,
    /// Set when probes sorted by alpha show the selected count decreasing.
    pub non_monotone: bool,
}

impl AlphaSearchResult {
    pub fn selected_indices(&self) -> Vec<usize> {
        self.selection
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == 1)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Solve the QUBO at one alpha; `index` picks the derived solver seed.
pub fn probe(
    scores: &ScoreSet,
    alpha: f64,
    cfg: &AlphaSearchConfig,
    index: usize,
) -> Result<(Probe, Vec<u8>), SearchError> {
    let q = build_qubo(scores, alpha)?;
    let seed = derive_seed(cfg.seed, &[index as u64]);
    let mut params = cfg.params.clone();
    params.insert("seed".into(), seed.to_string());
    let result = backend_solve(&q, &cfg.backend, &params)?;
    let probe = Probe {
        alpha,
        k: result.popcount(),
        seed,
        energy: result.energy,
    };
    Ok((probe, result.bits))
}

fn closer(candidate: &Probe, incumbent: &Probe, k_target: usize) -> bool {
    let key = |p: &Probe| (p.k.abs_diff(k_target), p.k);
    match key(candidate).cmp(&key(incumbent)) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Equal => candidate.alpha < incumbent.alpha,
        std::cmp::Ordering::Greater => false,
    }
}

fn is_non_monotone(trace: &[Probe]) -> bool {
    let mut sorted: Vec<&Probe> = trace.iter().collect();
    sorted.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
    sorted.windows(2).any(|w| w[1].k < w[0].k)
}

/// Bisect `[alpha_lo, alpha_hi]` until the minimiser selects exactly
/// `k_target` features or `max_iters` probes have been spent.
///
/// Too few features moves the lower bound up, too many moves the upper bound
/// down. Without an exact hit the closest probe wins, ties going to the
/// smaller count and then the smaller alpha.
pub fn search_alpha(scores: &ScoreSet, cfg: &AlphaSearchConfig) -> Result<AlphaSearchResult, SearchError> {
    cfg.validate(scores.n())?;
    let (mut lo, mut hi) = (cfg.alpha_lo, cfg.alpha_hi);
    let mut trace = Vec::new();
    let mut best: Option<(Probe, Vec<u8>)> = None;

    for iter in 0..cfg.max_iters {
        let mid = lo + (hi - lo) / 2.0;
        let (p, bits) = probe(scores, mid, cfg, iter)?;
        trace.push(p.clone());
        let hit = p.k == cfg.k_target;
        let go_up = p.k < cfg.k_target;
        if best.as_ref().is_none_or(|(b, _)| closer(&p, b, cfg.k_target)) {
            best = Some((p, bits));
        }
        if hit {
            break;
        }
        if go_up {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let (p, selection) = best.expect("max_iters >= 1");
    Ok(AlphaSearchResult {
        alpha: p.alpha,
        k_achieved: p.k,
        k_target: cfg.k_target,
        exact: p.k == cfg.k_target,
        non_monotone: is_non_monotone(&trace),
        selection,
        trace,
    })
}
