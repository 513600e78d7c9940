//! Benchmark tables, skill scores and the Pareto set, derived from a store.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use crate::metrics::{axis_skill, pareto_frontier, CellScore, SkillScores};
use crate::model::Benchmark;

use super::store::{CellStatus, Store};
use super::HarnessError;

pub const RANDOM_ROW: &str = "random";

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| round4(v).to_string()).unwrap_or_default()
}

/// One benchmark table: parameter columns, the random baseline row, and a
/// row per model with the mean score over scored cells.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkTable {
    pub benchmark: Benchmark,
    pub values: Vec<u32>,
    pub random: Vec<Option<f64>>,
    /// model -> (per-value mean, unscored cell count)
    pub rows: BTreeMap<String, (Vec<Option<f64>>, usize)>,
}

/// Per model: (value -> (score sum, scored cells), unscored cells).
type Tally<'a> = BTreeMap<&'a str, (BTreeMap<u32, (f64, usize)>, usize)>;

pub fn benchmark_table(store: &Store, benchmark: Benchmark) -> Option<BenchmarkTable> {
    let mut values: BTreeSet<u32> = store.baselines().filter(|b| b.benchmark == benchmark).map(|b| b.value).collect();
    values.extend(store.cells().filter(|c| c.benchmark == benchmark).map(|c| c.value));
    if values.is_empty() {
        return None;
    }
    let values: Vec<u32> = values.into_iter().collect();
    let random = values.iter().map(|&v| store.baseline(benchmark, v).map(|b| b.mean)).collect();

    let mut sums: Tally = BTreeMap::new();
    for c in store.cells().filter(|c| c.benchmark == benchmark) {
        let entry = sums.entry(c.model.as_str()).or_default();
        match (c.status, c.score) {
            (CellStatus::Ok, Some(score)) => {
                let slot = entry.0.entry(c.value).or_default();
                slot.0 += score;
                slot.1 += 1;
            }
            _ => entry.1 += 1,
        }
    }
    let rows = sums
        .into_iter()
        .map(|(model, (per_value, missing))| {
            let means = values
                .iter()
                .map(|v| per_value.get(v).map(|&(sum, n)| sum / n as f64))
                .collect();
            (model.to_string(), (means, missing))
        })
        .collect();
    Some(BenchmarkTable { benchmark, values, random, rows })
}

pub fn skill_scores(store: &Store) -> Vec<SkillScores> {
    let tables: Vec<BenchmarkTable> = Benchmark::ALL.iter().filter_map(|&b| benchmark_table(store, b)).collect();
    let mut models: BTreeSet<&str> = BTreeSet::new();
    let mut prices: BTreeMap<&str, f64> = BTreeMap::new();
    for c in store.cells() {
        models.insert(&c.model);
        if let Some(p) = c.price_per_mtok {
            prices.insert(&c.model, p);
        }
    }
    models
        .into_iter()
        .map(|model| {
            let mut axes = [None; 4];
            for t in &tables {
                let Some((means, _)) = t.rows.get(model) else { continue };
                let cells: Vec<CellScore> = means
                    .iter()
                    .zip(&t.random)
                    .filter_map(|(m, r)| Some(CellScore { value: (*m)?, rand_value: (*r)? }))
                    .collect();
                axes[t.benchmark.axis()] = axis_skill(&cells);
            }
            SkillScores::new(model, axes, prices.get(model).copied())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub tables: Vec<PathBuf>,
    pub skills: PathBuf,
    pub pareto: PathBuf,
}

fn write_csv(path: &Path, rows: Vec<Vec<String>>) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(&row).map_err(|e| HarnessError::Report(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Report(e.to_string()))?;
    crate::io::write_atomic(path, &bytes).map_err(|e| HarnessError::io(path, e))
}

/// Writes `table_<benchmark>.csv` for every benchmark in the store,
/// `skills.csv` and `pareto.csv`. Output depends only on the store contents.
pub fn report(store: &Store, out_dir: &Path) -> Result<ReportFiles, HarnessError> {
    if store.is_empty() {
        return Err(HarnessError::EmptyStore);
    }
    let mut tables = Vec::new();
    for b in Benchmark::ALL {
        let Some(t) = benchmark_table(store, b) else { continue };
        let mut rows = Vec::new();
        let mut header = vec!["model".to_string()];
        header.extend(t.values.iter().map(|v| v.to_string()));
        header.push("missing".into());
        rows.push(header);
        let mut random = vec![RANDOM_ROW.to_string()];
        random.extend(t.random.iter().map(|v| fmt_opt(*v)));
        random.push(String::new());
        rows.push(random);
        for (model, (means, missing)) in &t.rows {
            let mut row = vec![model.clone()];
            row.extend(means.iter().map(|v| fmt_opt(*v)));
            row.push(missing.to_string());
            rows.push(row);
        }
        let path = out_dir.join(format!("table_{}.csv", b.name()));
        write_csv(&path, rows)?;
        tables.push(path);
    }

    let skills = skill_scores(store);
    let mut rows = vec![["model", "mu1", "mu2", "mu3", "mu4", "skill_sum", "cost_usd_per_mtok"].map(String::from).to_vec()];
    for s in &skills {
        let mut row = vec![s.model.clone()];
        row.extend(s.axes().iter().map(|v| fmt_opt(*v)));
        row.push(round4(s.skill_sum).to_string());
        row.push(fmt_opt(s.cost_usd_per_mtok));
        rows.push(row);
    }
    let skills_path = out_dir.join("skills.csv");
    write_csv(&skills_path, rows)?;

    let priced: Vec<&SkillScores> = skills.iter().filter(|s| s.cost_usd_per_mtok.is_some()).collect();
    let points: Vec<(f64, f64)> = priced.iter().map(|s| (s.cost_usd_per_mtok.unwrap_or(0.0), s.skill_sum)).collect();
    let mut rows = vec![["model", "cost_usd_per_mtok", "skill_sum"].map(String::from).to_vec()];
    for i in pareto_frontier(&points) {
        rows.push(vec![priced[i].model.clone(), round4(points[i].0).to_string(), round4(points[i].1).to_string()]);
    }
    let pareto_path = out_dir.join("pareto.csv");
    write_csv(&pareto_path, rows)?;

    Ok(ReportFiles { tables, skills: skills_path, pareto: pareto_path })
}
