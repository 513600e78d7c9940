//! Uniform random scenarios and Monte-Carlo estimates of the random
//! baselines MUIP_rand and MADIP_rand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{Aircraft, Scenario, SectorGraph, Speed};
use crate::rollout::{detect_interactions, unique_pairs};

pub const DEFAULT_SAMPLES: usize = 500;

/// How samples are spread over the sector suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Allocation {
    /// `n` samples in total, assigned round-robin to sectors.
    Total(usize),
    /// `n` samples for every sector.
    PerSector(usize),
}

impl Default for Allocation {
    fn default() -> Self {
        Allocation::Total(DEFAULT_SAMPLES)
    }
}

impl Allocation {
    fn sector_of(self, sample: usize, n_sectors: usize) -> usize {
        match self {
            Allocation::Total(_) => sample % n_sectors,
            Allocation::PerSector(n) => sample / n.max(1),
        }
    }

    fn count(self, n_sectors: usize) -> usize {
        match self {
            Allocation::Total(n) => n,
            Allocation::PerSector(n) => n * n_sectors,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Estimate { mean: 0.0, stderr: 0.0, samples: 0 };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Estimate { mean, stderr, samples: n }
    }
}

/// `n` aircraft AC1..ACn with spawn, route and speed drawn uniformly; all at
/// FL300.
pub fn sample_random_scenario<R: Rng + ?Sized>(g: &SectorGraph, n: u32, duration: u32, rng: &mut R) -> Scenario {
    let routes: Vec<_> = g.routes.keys().collect();
    let mut s = Scenario::new(duration);
    for i in 1..=n {
        let spawn = rng.random_range(0..duration.max(1));
        let route = routes[rng.random_range(0..routes.len())].clone();
        let speed = if rng.random_bool(0.5) { Speed::Fast } else { Speed::Slow };
        s.aircraft.push(Aircraft::new(&format!("AC{i}"), spawn, route, speed));
    }
    s
}

/// Per-sample unique-pair counts, in sample order. Sample `i` uses its own
/// ChaCha stream `i` under `seed`, so results do not depend on threading.
pub fn sample_pair_counts(sectors: &[SectorGraph], n: u32, duration: u32, allocation: Allocation, seed: u64) -> Vec<usize> {
    assert!(!sectors.is_empty(), "baseline needs at least one sector");
    let total = allocation.count(sectors.len());
    (0..total)
        .into_par_iter()
        .map(|i| {
            let g = &sectors[allocation.sector_of(i, sectors.len())];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let s = sample_random_scenario(g, n, duration, &mut rng);
            let events = detect_interactions(&s, g).expect("sampled routes belong to the sector");
            unique_pairs(&events).len()
        })
        .collect()
}

pub fn estimate_muip_rand(sectors: &[SectorGraph], n: u32, duration: u32, allocation: Allocation, seed: u64) -> Estimate {
    let counts = sample_pair_counts(sectors, n, duration, allocation, seed);
    Estimate::from_values(&counts.iter().map(|&c| c as f64).collect::<Vec<_>>())
}

pub fn estimate_madip_rand(
    sectors: &[SectorGraph],
    n: u32,
    duration: u32,
    target: u32,
    allocation: Allocation,
    seed: u64,
) -> Estimate {
    let counts = sample_pair_counts(sectors, n, duration, allocation, seed);
    let diffs: Vec<f64> = counts.iter().map(|&c| (c as f64 - target as f64).abs()).collect();
    Estimate::from_values(&diffs)
}
