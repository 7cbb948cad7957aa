//! QUBO minimisers behind a common backend interface.
//!
//! Two local backends are registered by default: `exhaustive` (exact
//! enumeration, capped at [`DEFAULT_MAX_EXHAUSTIVE`] variables) and `sa`
//! (single-flip Metropolis simulated annealing). A third id,
//! `remote-annealer-stub`, marks where a client for a hosted annealer would
//! plug in; it only returns [`SolverError::NotImplemented`].
//!
//! Ties between equal energies are always broken towards the
//! lexicographically smallest bit vector, variable 0 most significant.

use std::collections::BTreeMap;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qubo::{energy_unchecked, tri_index, QuboInstance};

pub const DEFAULT_MAX_EXHAUSTIVE: usize = 24;

pub const EXHAUSTIVE: &str = "exhaustive";
pub const SIMULATED_ANNEALING: &str = "sa";
pub const REMOTE_STUB: &str = "remote-annealer-stub";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("{n} variables exceed the exhaustive limit of {max}")]
    TooLarge { n: usize, max: usize },
    #[error("invalid anneal schedule: {0}")]
    InvalidSchedule(String),
    #[error("instance has no variables")]
    EmptyInstance,
    #[error("unknown backend `{0}`")]
    UnknownBackend(String),
    #[error("backend `{0}` is not implemented")]
    NotImplemented(String),
    #[error("backend `{backend}` does not accept parameter `{key}`")]
    UnknownParam { backend: String, key: String },
    #[error("backend returned an invalid result: {0}")]
    InvalidResult(String),
    #[error("bad value `{value}` for parameter `{key}`")]
    InvalidParam { key: String, value: String },
}

/// Backend parameters as string key/value pairs.
pub type Params = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub bits: Vec<u8>,
    pub energy: f64,
    pub backend: String,
    pub seed: u64,
    pub sweeps: usize,
    pub restarts: usize,
    pub wall_time_secs: f64,
}

impl SolveResult {
    pub fn selected(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == 1)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub sweeps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        AnnealSchedule {
            sweeps: 1000,
            beta_start: 0.1,
            beta_end: 10.0,
            restarts: 8,
            seed: 0,
        }
    }
}

impl AnnealSchedule {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: &str| Err(SolverError::InvalidSchedule(m.to_string()));
        if self.sweeps == 0 {
            return bad("sweeps must be >= 1");
        }
        if self.restarts == 0 {
            return bad("restarts must be >= 1");
        }
        if !(self.beta_start >= 0.0) || !self.beta_start.is_finite() {
            return bad("beta_start must be finite and >= 0");
        }
        if !(self.beta_end > self.beta_start) || !self.beta_end.is_finite() {
            return bad("beta_end must be finite and > beta_start");
        }
        Ok(())
    }

    /// Inverse temperature of sweep `s`: geometric from `beta_start` to
    /// `beta_end`, or linear when `beta_start` is zero.
    pub fn beta(&self, s: usize) -> f64 {
        if self.sweeps == 1 {
            return self.beta_end;
        }
        let t = s as f64 / (self.sweeps - 1) as f64;
        if self.beta_start > 0.0 {
            self.beta_start * (self.beta_end / self.beta_start).powf(t)
        } else {
            self.beta_end * t
        }
    }

    /// Apply `sweeps`, `restarts`, `beta_start`, `beta_end` and `seed`
    /// overrides from a parameter map.
    pub fn with_params(mut self, params: &Params, backend: &str) -> Result<Self, SolverError> {
        for (key, value) in params {
            let invalid = || SolverError::InvalidParam {
                key: key.clone(),
                value: value.clone(),
            };
            match key.as_str() {
                "sweeps" => self.sweeps = value.parse().map_err(|_| invalid())?,
                "restarts" => self.restarts = value.parse().map_err(|_| invalid())?,
                "beta_start" => self.beta_start = value.parse().map_err(|_| invalid())?,
                "beta_end" => self.beta_end = value.parse().map_err(|_| invalid())?,
                "seed" => self.seed = value.parse().map_err(|_| invalid())?,
                _ => {
                    return Err(SolverError::UnknownParam {
                        backend: backend.to_string(),
                        key: key.clone(),
                    })
                }
            }
        }
        self.validate()?;
        Ok(self)
    }
}

/// Lexicographic comparison, variable 0 most significant.
fn lex_less(a: &[u8], b: &[u8]) -> bool {
    a < b
}

/// Keep `(e, bits)` over the incumbent if strictly lower energy, or equal
/// energy and lexicographically smaller bits.
fn better(e: f64, bits: &[u8], best_e: f64, best: &[u8]) -> bool {
    e < best_e || (e == best_e && lex_less(bits, best))
}

/// Exact minimum with the default variable cap.
pub fn solve_exhaustive(q: &QuboInstance) -> Result<SolveResult, SolverError> {
    solve_exhaustive_capped(q, DEFAULT_MAX_EXHAUSTIVE)
}

/// Exact minimum by depth-first enumeration of all `2^n` states.
///
/// States are visited in lexicographic order and only strictly lower energies
/// replace the incumbent, so ties resolve to the smallest bit vector. Each
/// leaf's energy is accumulated in the same order as [`crate::qubo::energy`].
pub fn solve_exhaustive_capped(q: &QuboInstance, max_vars: usize) -> Result<SolveResult, SolverError> {
    let n = q.n();
    if n > max_vars {
        return Err(SolverError::TooLarge { n, max: max_vars });
    }
    let start = Instant::now();
    let mut search = Enumeration {
        q,
        n,
        bits: vec![0; n],
        best: vec![0; n],
        best_energy: f64::INFINITY,
    };
    search.visit(0, 0.0);
    Ok(SolveResult {
        bits: search.best,
        energy: search.best_energy,
        backend: EXHAUSTIVE.to_string(),
        seed: 0,
        sweeps: 0,
        restarts: 0,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

struct Enumeration<'a> {
    q: &'a QuboInstance,
    n: usize,
    bits: Vec<u8>,
    best: Vec<u8>,
    best_energy: f64,
}

impl Enumeration<'_> {
    fn visit(&mut self, i: usize, e: f64) {
        if i == self.n {
            if e < self.best_energy {
                self.best_energy = e;
                self.best.copy_from_slice(&self.bits);
            }
            return;
        }
        self.visit(i + 1, e);
        let upper = self.q.quadratic_upper();
        let mut e1 = e + self.q.linear()[i];
        for j in 0..i {
            if self.bits[j] == 1 {
                e1 += upper[tri_index(self.n, j, i)];
            }
        }
        self.bits[i] = 1;
        self.visit(i + 1, e1);
        self.bits[i] = 0;
    }
}

/// Simulated annealing with uniform single-bit-flip Metropolis proposals.
///
/// One sweep is `n` proposals. Each restart starts from a uniformly random
/// state drawn from its own ChaCha stream (`seed`, stream = restart index) and
/// keeps the best state it visits. Restarts run in parallel; the merged
/// result is the minimum energy, then the smallest bit vector.
pub fn solve_sa(q: &QuboInstance, schedule: &AnnealSchedule) -> Result<SolveResult, SolverError> {
    schedule.validate()?;
    if q.n() == 0 {
        return Err(SolverError::EmptyInstance);
    }
    let start = Instant::now();
    let pairs = q.dense_pairs();
    let runs: Vec<(f64, Vec<u8>)> = (0..schedule.restarts)
        .into_par_iter()
        .map(|r| anneal_once(q, &pairs, schedule, r as u64))
        .collect();
    let (energy, bits) = runs
        .into_iter()
        .reduce(|a, b| if better(b.0, &b.1, a.0, &a.1) { b } else { a })
        .expect("at least one restart");
    Ok(SolveResult {
        bits,
        energy,
        backend: SIMULATED_ANNEALING.to_string(),
        seed: schedule.seed,
        sweeps: schedule.sweeps,
        restarts: schedule.restarts,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

fn anneal_once(q: &QuboInstance, pairs: &[Vec<f64>], schedule: &AnnealSchedule, stream: u64) -> (f64, Vec<u8>) {
    let n = q.n();
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    rng.set_stream(stream);
    let mut bits: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1u8)).collect();

    // field[i] = linear_i + sum_j Q_ij b_j; flipping i changes energy by
    // +field[i] (0 -> 1) or -field[i] (1 -> 0).
    let mut field: Vec<f64> = (0..n)
        .map(|i| q.linear()[i] + (0..n).filter(|&j| bits[j] == 1).map(|j| pairs[i][j]).sum::<f64>())
        .collect();
    let mut current = energy_unchecked(q, &bits);
    let mut best = bits.clone();
    let mut best_energy = current;

    for s in 0..schedule.sweeps {
        let beta = schedule.beta(s);
        for _ in 0..n {
            let i = rng.gen_range(0..n);
            let delta = if bits[i] == 0 { field[i] } else { -field[i] };
            let accept = delta <= 0.0 || rng.gen::<f64>() < (-beta * delta).exp();
            if !accept {
                continue;
            }
            let sign = if bits[i] == 0 { 1.0 } else { -1.0 };
            bits[i] ^= 1;
            current += delta;
            for (j, f) in field.iter_mut().enumerate() {
                *f += sign * pairs[i][j];
            }
            if current < best_energy {
                best_energy = current;
                best.copy_from_slice(&bits);
            }
        }
    }
    // Incremental energies drift; report the exact value.
    (energy_unchecked(q, &best), best)
}

/// A minimiser reachable by id through [`BackendRegistry`].
pub trait SolverBackend: Send + Sync {
    fn id(&self) -> &str;
    fn solve(&self, q: &QuboInstance, params: &Params) -> Result<SolveResult, SolverError>;
}

pub struct ExhaustiveBackend;

impl SolverBackend for ExhaustiveBackend {
    fn id(&self) -> &str {
        EXHAUSTIVE
    }

    fn solve(&self, q: &QuboInstance, params: &Params) -> Result<SolveResult, SolverError> {
        let mut max_vars = DEFAULT_MAX_EXHAUSTIVE;
        for (key, value) in params {
            match key.as_str() {
                "max_vars" => {
                    max_vars = value.parse().map_err(|_| SolverError::InvalidParam {
                        key: key.clone(),
                        value: value.clone(),
                    })?
                }
                // Annealing knobs are accepted and ignored so one parameter
                // map can drive either local backend.
                "seed" | "sweeps" | "restarts" | "beta_start" | "beta_end" => {}
                _ => {
                    return Err(SolverError::UnknownParam {
                        backend: EXHAUSTIVE.into(),
                        key: key.clone(),
                    })
                }
            }
        }
        solve_exhaustive_capped(q, max_vars)
    }
}

pub struct AnnealingBackend;

impl SolverBackend for AnnealingBackend {
    fn id(&self) -> &str {
        SIMULATED_ANNEALING
    }

    fn solve(&self, q: &QuboInstance, params: &Params) -> Result<SolveResult, SolverError> {
        let schedule = AnnealSchedule::default().with_params(params, SIMULATED_ANNEALING)?;
        solve_sa(q, &schedule)
    }
}

/// Placeholder for a hosted quantum-annealer client.
///
/// A real implementation would submit the instance (see
/// [`QuboInstance::to_sparse_text`]), collect samples and return the lowest
/// energy one, recomputing its energy locally.
pub struct RemoteAnnealerStub;

impl SolverBackend for RemoteAnnealerStub {
    fn id(&self) -> &str {
        REMOTE_STUB
    }

    fn solve(&self, _q: &QuboInstance, _params: &Params) -> Result<SolveResult, SolverError> {
        Err(SolverError::NotImplemented(REMOTE_STUB.to_string()))
    }
}

pub struct BackendRegistry {
    backends: BTreeMap<String, Box<dyn SolverBackend>>,
}

impl BackendRegistry {
    pub fn empty() -> Self {
        BackendRegistry {
            backends: BTreeMap::new(),
        }
    }

    pub fn with_defaults() -> Self {
        let mut r = BackendRegistry::empty();
        r.register(Box::new(ExhaustiveBackend));
        r.register(Box::new(AnnealingBackend));
        r.register(Box::new(RemoteAnnealerStub));
        r
    }

    pub fn register(&mut self, backend: Box<dyn SolverBackend>) {
        self.backends.insert(backend.id().to_string(), backend);
    }

    pub fn ids(&self) -> Vec<&str> {
        self.backends.keys().map(String::as_str).collect()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.backends.contains_key(id)
    }

    pub fn solve(&self, q: &QuboInstance, backend: &str, params: &Params) -> Result<SolveResult, SolverError> {
        let b = self
            .backends
            .get(backend)
            .ok_or_else(|| SolverError::UnknownBackend(backend.to_string()))?;
        let mut result = b.solve(q, params)?;
        // Never trust a backend's own energy bookkeeping.
        crate::qubo::check_bits(q.n(), &result.bits)
            .map_err(|e| SolverError::InvalidResult(e.to_string()))?;
        result.energy = energy_unchecked(q, &result.bits);
        Ok(result)
    }
}

/// Dispatch to a backend of the default registry.
pub fn backend_solve(q: &QuboInstance, backend: &str, params: &Params) -> Result<SolveResult, SolverError> {
    static REGISTRY: OnceLock<BackendRegistry> = OnceLock::new();
    REGISTRY.get_or_init(BackendRegistry::with_defaults).solve(q, backend, params)
}
