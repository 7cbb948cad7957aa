//! Planted datasets with known informative groups and redundant copies.
//!
//! Each informative group is one latent standard normal factor observed
//! through several noisy copies. The target depends only on the latent
//! factors, with strengths decreasing from group 0 to the last group. Noise
//! features are independent of everything.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Column, Dataset, TargetKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedConfig {
    pub n_records: usize,
    pub groups: usize,
    pub copies: usize,
    pub noise_features: usize,
    /// Target weight of group `g` is `weights[g]`.
    pub weights: Vec<f64>,
    /// Standard deviation of the per-copy observation noise.
    pub copy_noise: f64,
    /// Standard deviation of the noise in the target's linear predictor.
    pub target_noise: f64,
    /// Every `binary_noise_every`-th noise feature is a fair coin instead of
    /// a normal draw; 0 disables binary noise.
    pub binary_noise_every: usize,
    pub regression: bool,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            n_records: 600,
            groups: 5,
            copies: 3,
            noise_features: 30,
            weights: vec![1.0, 0.9, 0.8, 0.7, 0.6],
            copy_noise: 0.1,
            target_noise: 0.3,
            binary_noise_every: 3,
            regression: false,
        }
    }
}

/// A generated dataset with its ground truth.
#[derive(Debug, Clone)]
pub struct Planted {
    pub dataset: Dataset,
    /// `group_of[i]` is the informative group of feature `i`, `None` for noise.
    pub group_of: Vec<Option<usize>>,
}

impl Planted {
    /// Number of distinct informative groups among the given features.
    pub fn groups_covered(&self, features: &[usize]) -> usize {
        let mut seen: Vec<usize> = features.iter().filter_map(|&i| self.group_of[i]).collect();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }
}

pub fn planted(cfg: &PlantedConfig, seed: u64) -> Planted {
    assert_eq!(cfg.weights.len(), cfg.groups, "one weight per group");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.n_records;
    let mut normal = || -> f64 { rng.sample(StandardNormal) };

    let latent: Vec<Vec<f64>> = (0..cfg.groups).map(|_| (0..n).map(|_| normal()).collect()).collect();
    let mut features = Vec::new();
    let mut group_of = Vec::new();
    for (g, z) in latent.iter().enumerate() {
        for c in 0..cfg.copies {
            let values = z.iter().map(|&v| v + cfg.copy_noise * normal()).collect();
            features.push(Column::continuous(format!("g{g}_c{c}"), values));
            group_of.push(Some(g));
        }
    }
    let score: Vec<f64> = (0..n)
        .map(|r| {
            let lin: f64 = latent.iter().zip(&cfg.weights).map(|(z, w)| w * z[r]).sum();
            lin + cfg.target_noise * normal()
        })
        .collect();
    for j in 0..cfg.noise_features {
        let column = if cfg.binary_noise_every > 0 && j % cfg.binary_noise_every == cfg.binary_noise_every - 1 {
            Column::binary(format!("noise{j}"), (0..n).map(|_| f64::from(rng.gen_bool(0.5))).collect())
        } else {
            Column::continuous(format!("noise{j}"), (0..n).map(|_| rng.sample(StandardNormal)).collect())
        };
        features.push(column);
        group_of.push(None);
    }
    let (target, kind) = if cfg.regression {
        (Column::continuous("y", score), TargetKind::Regression)
    } else {
        (
            Column::binary("y", score.iter().map(|&s| f64::from(s > 0.0)).collect()),
            TargetKind::Classification { num_classes: 2 },
        )
    };
    let dataset = Dataset::new(features, target, kind).expect("generated columns are consistent");
    Planted { dataset, group_of }
}
