//! Append-only JSONL result store.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::model::{Benchmark, Scenario};
use crate::rollout::Violation;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub model: String,
    pub benchmark: Benchmark,
    pub value: u32,
    pub sector_index: u32,
    pub prompt_hash: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    /// A scenario was produced and scored.
    Ok,
    /// A scenario was produced but broke a structural rule (count, duration,
    /// unknown route, ...); excluded from means.
    Invalid,
    /// No usable scenario (budget exhausted, transport or auth failure).
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkCell {
    pub model: String,
    pub benchmark: Benchmark,
    pub value: u32,
    pub sector_index: u32,
    pub prompt_hash: String,
    pub status: CellStatus,
    /// Unique interacting pairs in the scenario.
    #[serde(default)]
    pub pair_count: Option<usize>,
    /// Pair count, or |pairs - k| for controllability.
    #[serde(default)]
    pub score: Option<f64>,
    #[serde(default)]
    pub pairs: Vec<(String, String)>,
    #[serde(default)]
    pub violations: Vec<Violation>,
    #[serde(default)]
    pub scenario: Option<Scenario>,
    #[serde(default)]
    pub error: Option<String>,
    #[serde(default)]
    pub budgets: Vec<u32>,
    #[serde(default)]
    pub prompt_tokens: u64,
    #[serde(default)]
    pub completion_tokens: u64,
    #[serde(default)]
    pub cost_usd: Option<f64>,
    #[serde(default)]
    pub price_per_mtok: Option<f64>,
}

impl BenchmarkCell {
    pub fn key(&self) -> CellKey {
        CellKey {
            model: self.model.clone(),
            benchmark: self.benchmark,
            value: self.value,
            sector_index: self.sector_index,
            prompt_hash: self.prompt_hash.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRecord {
    pub benchmark: Benchmark,
    pub value: u32,
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum StoreRecord {
    Baseline(BaselineRecord),
    Cell(BenchmarkCell),
}

/// In-memory index over a JSONL file. Later lines win over earlier ones with
/// the same key; unparseable lines are skipped with a warning.
#[derive(Debug)]
pub struct Store {
    path: PathBuf,
    cells: BTreeMap<CellKey, BenchmarkCell>,
    baselines: BTreeMap<(Benchmark, u32), BaselineRecord>,
    writer: Option<File>,
    needs_newline: bool,
    skipped_lines: usize,
}

impl Store {
    pub fn open(path: &Path) -> std::io::Result<Self> {
        let mut store = Store {
            path: path.to_path_buf(),
            cells: BTreeMap::new(),
            baselines: BTreeMap::new(),
            writer: None,
            needs_newline: false,
            skipped_lines: 0,
        };
        if !path.exists() {
            return Ok(store);
        }
        let bytes = std::fs::read(path)?;
        store.needs_newline = bytes.last().is_some_and(|&b| b != b'\n');
        for (i, line) in BufReader::new(bytes.as_slice()).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<StoreRecord>(&line) {
                Ok(record) => store.index(record),
                Err(e) => {
                    warn!("{}:{}: skipping unreadable record: {e}", path.display(), i + 1);
                    store.skipped_lines += 1;
                }
            }
        }
        Ok(store)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn skipped_lines(&self) -> usize {
        self.skipped_lines
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty() && self.baselines.is_empty()
    }

    fn index(&mut self, record: StoreRecord) {
        match record {
            StoreRecord::Cell(c) => {
                self.cells.insert(c.key(), c);
            }
            StoreRecord::Baseline(b) => {
                self.baselines.insert((b.benchmark, b.value), b);
            }
        }
    }

    pub fn cell(&self, key: &CellKey) -> Option<&BenchmarkCell> {
        self.cells.get(key)
    }

    pub fn cells(&self) -> impl Iterator<Item = &BenchmarkCell> {
        self.cells.values()
    }

    pub fn baseline(&self, benchmark: Benchmark, value: u32) -> Option<&BaselineRecord> {
        self.baselines.get(&(benchmark, value))
    }

    pub fn baselines(&self) -> impl Iterator<Item = &BaselineRecord> {
        self.baselines.values()
    }

    pub fn remove_cell(&mut self, key: &CellKey) -> Option<BenchmarkCell> {
        self.cells.remove(key)
    }

    /// Appends one line and flushes it before indexing.
    pub fn append(&mut self, record: StoreRecord) -> std::io::Result<()> {
        if self.writer.is_none() {
            if let Some(dir) = self.path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            self.writer = Some(OpenOptions::new().create(true).append(true).open(&self.path)?);
        }
        let w = self.writer.as_mut().expect("writer opened");
        let mut line = serde_json::to_string(&record).expect("record serializes");
        if std::mem::take(&mut self.needs_newline) {
            line.insert(0, '\n');
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
        w.flush()?;
        self.index(record);
        Ok(())
    }

    /// Rewrites the file with one line per key, baselines first, both in key
    /// order.
    pub fn compact(&mut self) -> std::io::Result<()> {
        let mut out = String::new();
        for b in self.baselines.values() {
            out.push_str(&serde_json::to_string(&StoreRecord::Baseline(b.clone())).expect("record serializes"));
            out.push('\n');
        }
        for c in self.cells.values() {
            out.push_str(&serde_json::to_string(&StoreRecord::Cell(c.clone())).expect("record serializes"));
            out.push('\n');
        }
        self.writer = None;
        crate::io::write_atomic(&self.path, out.as_bytes())?;
        self.needs_newline = false;
        self.skipped_lines = 0;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(model: &str, value: u32, sector: u32, status: CellStatus) -> BenchmarkCell {
        BenchmarkCell {
            model: model.into(),
            benchmark: Benchmark::TrafficVolume,
            value,
            sector_index: sector,
            prompt_hash: "h".into(),
            status,
            pair_count: Some(1),
            score: Some(1.0),
            pairs: vec![],
            violations: vec![],
            scenario: None,
            error: None,
            budgets: vec![35_000],
            prompt_tokens: 0,
            completion_tokens: 0,
            cost_usd: None,
            price_per_mtok: None,
        }
    }

    #[test]
    fn append_reload_compact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        let mut s = Store::open(&path).unwrap();
        assert!(s.is_empty());
        s.append(StoreRecord::Cell(cell("b", 3, 0, CellStatus::Ok))).unwrap();
        s.append(StoreRecord::Cell(cell("a", 2, 1, CellStatus::Failed))).unwrap();
        s.append(StoreRecord::Cell(cell("a", 2, 1, CellStatus::Ok))).unwrap();
        s.append(StoreRecord::Baseline(BaselineRecord {
            benchmark: Benchmark::TrafficVolume,
            value: 2,
            mean: 0.1,
            stderr: 0.01,
            samples: 500,
            seed: 0,
        }))
        .unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 4);

        let mut r = Store::open(&path).unwrap();
        assert_eq!(r.cells().count(), 2);
        assert_eq!(r.cells().next().unwrap().status, CellStatus::Ok);
        r.compact().unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].contains("\"record\":\"baseline\""));
        assert!(lines[1].contains("\"model\":\"a\""));
        r.compact().unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), text);
    }

    #[test]
    fn tolerates_torn_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        let good = serde_json::to_string(&StoreRecord::Cell(cell("a", 2, 0, CellStatus::Ok))).unwrap();
        std::fs::write(&path, format!("{good}\nnot json\n{{\"record\":\"cell\",\"mod")).unwrap();
        let mut s = Store::open(&path).unwrap();
        assert_eq!(s.skipped_lines(), 2);
        assert_eq!(s.cells().count(), 1);
        s.append(StoreRecord::Cell(cell("a", 3, 0, CellStatus::Ok))).unwrap();
        let s = Store::open(&path).unwrap();
        assert_eq!(s.cells().count(), 2);
    }
}
