//! MUIP, MADIP, normalised skills and the cost/skill Pareto frontier.

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no pair counts to average")]
    EmptyInput,
    #[error("random baseline is {0}, skill is undefined")]
    ZeroBaseline(f64),
}

pub fn muip(pair_counts: &[usize]) -> Result<f64, MetricsError> {
    if pair_counts.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    Ok(pair_counts.iter().sum::<usize>() as f64 / pair_counts.len() as f64)
}

pub fn madip(pair_counts: &[usize], target: u32) -> Result<f64, MetricsError> {
    if pair_counts.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let total: f64 = pair_counts.iter().map(|&c| (c as f64 - target as f64).abs()).sum();
    Ok(total / pair_counts.len() as f64)
}

/// `max(0, 1 - value / rand_value)`.
pub fn normalized_skill(value: f64, rand_value: f64) -> Result<f64, MetricsError> {
    if rand_value <= 0.0 || rand_value.is_nan() {
        return Err(MetricsError::ZeroBaseline(rand_value));
    }
    Ok((1.0 - value / rand_value).clamp(0.0, 1.0))
}

/// One parameter point of one benchmark for one model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellScore {
    pub value: f64,
    pub rand_value: f64,
}

/// Unweighted mean of per-cell skills. Cells with a non-positive baseline are
/// skipped with a warning; `None` when nothing is left.
pub fn axis_skill(cells: &[CellScore]) -> Option<f64> {
    let skills: Vec<f64> = cells
        .iter()
        .filter_map(|c| match normalized_skill(c.value, c.rand_value) {
            Ok(mu) => Some(mu),
            Err(e) => {
                warn!("excluding cell from skill aggregation: {e}");
                None
            }
        })
        .collect();
    if skills.is_empty() {
        None
    } else {
        Some(skills.iter().sum::<f64>() / skills.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillScores {
    pub model: String,
    pub mu1: Option<f64>,
    pub mu2: Option<f64>,
    pub mu3: Option<f64>,
    pub mu4: Option<f64>,
    pub skill_sum: f64,
    pub cost_usd_per_mtok: Option<f64>,
}

impl SkillScores {
    /// Axes in benchmark order: traffic volume, scenario length, sector
    /// complexity, controllability. Missing axes contribute 0 to the sum.
    pub fn new(model: &str, axes: [Option<f64>; 4], cost_usd_per_mtok: Option<f64>) -> Self {
        let [mu1, mu2, mu3, mu4] = axes;
        SkillScores {
            model: model.to_string(),
            mu1,
            mu2,
            mu3,
            mu4,
            skill_sum: axes.iter().flatten().sum(),
            cost_usd_per_mtok,
        }
    }

    pub fn axes(&self) -> [Option<f64>; 4] {
        [self.mu1, self.mu2, self.mu3, self.mu4]
    }
}

/// Indices of the non-dominated `(cost, skill)` points, in input order. A
/// point is dropped when another is no more expensive and no less skilful,
/// and strictly better on one of the two.
pub fn pareto_frontier(points: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].0.total_cmp(&points[b].0).then(points[b].1.total_cmp(&points[a].1)));
    let mut keep = vec![false; points.len()];
    let mut best = f64::NEG_INFINITY;
    let mut i = 0;
    while i < order.len() {
        // Points sharing a cost: only the top skill (and its exact ties) can survive.
        let cost = points[order[i]].0;
        let top = points[order[i]].1;
        let mut j = i;
        while j < order.len() && points[order[j]].0 == cost {
            let (_, skill) = points[order[j]];
            if skill == top && skill > best {
                keep[order[j]] = true;
            }
            j += 1;
        }
        best = best.max(top);
        i = j;
    }
    (0..points.len()).filter(|&i| keep[i]).collect()
}
