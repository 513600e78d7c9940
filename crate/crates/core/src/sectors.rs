//! Seeded synthetic sectors on a 20 nmi lattice with an exact number of
//! routes and route intersections.
//!
//! A sector is a set of horizontal "row" routes spanning the grid plus
//! "crosser" routes (vertical or 45 degree diagonal lattice paths). Crossers
//! are placed one at a time by rejection sampling until the number of nodes
//! shared by two or more routes hits the target.

use std::collections::{HashMap, HashSet};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{NodeId, Point, RouteId, SectorGraph, DEFAULT_SPACING_NMI};

/// Upper bound on crosser placements tried before giving up.
pub const MAX_ATTEMPTS: u32 = 10_000;
/// Candidate placements per crosser before the whole layout is restarted.
const CANDIDATES_PER_CROSSER: u32 = 200;
const MIN_CROSSER_NODES: i32 = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SectorGenError {
    #[error("no sector with the requested intersection count found for seed {seed} after {attempts} attempts")]
    TargetUnreachable { seed: u64, attempts: u32 },
    #[error("invalid generator parameters: {0}")]
    BadParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSize {
    pub width: u32,
    pub height: u32,
}

impl Default for GridSize {
    fn default() -> Self {
        Self { width: 12, height: 9 }
    }
}

/// splitmix64 finaliser over `(master, index)`; used to derive independent
/// per-sector and per-sample seeds.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

type Cell = (i32, i32);

#[derive(Default, Clone)]
struct Layout {
    routes: Vec<Vec<Cell>>,
    members: HashMap<Cell, HashSet<usize>>,
    /// Diagonal edges by lower-left cell corner: bit 0 = rising, bit 1 = falling.
    diagonals: HashMap<Cell, u8>,
}

impl Layout {
    fn intersections(&self) -> usize {
        self.members.values().filter(|m| m.len() >= 2).count()
    }

    fn diagonal_key(a: Cell, b: Cell) -> Option<(Cell, u8)> {
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        if dx.abs() != 1 || dy.abs() != 1 {
            return None;
        }
        let corner = (a.0.min(b.0), a.1.min(b.1));
        let rising = dx == dy;
        Some((corner, if rising { 1 } else { 2 }))
    }

    /// Whether adding `path` keeps every edge crossing at a node.
    fn planar_with(&self, path: &[Cell]) -> bool {
        let mut own: HashMap<Cell, u8> = HashMap::new();
        for w in path.windows(2) {
            if let Some((corner, bit)) = Self::diagonal_key(w[0], w[1]) {
                *own.entry(corner).or_default() |= bit;
            }
        }
        own.iter().all(|(corner, bits)| {
            let combined = bits | self.diagonals.get(corner).copied().unwrap_or(0);
            combined != 3
        })
    }

    fn count_with(&self, path: &[Cell]) -> usize {
        let idx = self.routes.len();
        let mut count = self.intersections();
        let mut seen = HashSet::new();
        for cell in path {
            if !seen.insert(*cell) {
                continue;
            }
            if let Some(m) = self.members.get(cell) {
                if m.len() == 1 && !m.contains(&idx) {
                    count += 1;
                }
            }
        }
        count
    }

    fn push(&mut self, path: Vec<Cell>) {
        let idx = self.routes.len();
        for cell in &path {
            self.members.entry(*cell).or_default().insert(idx);
        }
        for w in path.windows(2) {
            if let Some((corner, bit)) = Self::diagonal_key(w[0], w[1]) {
                *self.diagonals.entry(corner).or_default() |= bit;
            }
        }
        self.routes.push(path);
    }

    fn into_graph(self) -> SectorGraph {
        let mut cells: Vec<Cell> = self.members.keys().copied().collect();
        cells.sort();
        let ids: HashMap<Cell, NodeId> = cells.iter().enumerate().map(|(i, c)| (*c, NodeId::dense(i))).collect();
        let mut g = SectorGraph::new(DEFAULT_SPACING_NMI);
        for c in &cells {
            g.nodes.insert(
                ids[c].clone(),
                Point::new(c.0 as f64 * DEFAULT_SPACING_NMI, c.1 as f64 * DEFAULT_SPACING_NMI),
            );
        }
        for (i, path) in self.routes.iter().enumerate() {
            g.routes.insert(RouteId(format!("R{}", i + 1)), path.iter().map(|c| ids[c].clone()).collect());
        }
        g
    }
}

fn random_crosser(rng: &mut ChaCha8Rng, grid: GridSize) -> Option<Vec<Cell>> {
    let (w, h) = (grid.width as i32, grid.height as i32);
    // 0 = vertical, 1 = rising diagonal, 2 = falling diagonal
    let kind = rng.random_range(0..3);
    let max_len = if kind == 0 { h } else { h.min(w) };
    if max_len < MIN_CROSSER_NODES {
        return None;
    }
    let len = rng.random_range(MIN_CROSSER_NODES..=max_len);
    let mut path: Vec<Cell> = match kind {
        0 => {
            let x = rng.random_range(0..w);
            let y0 = rng.random_range(0..=h - len);
            (0..len).map(|k| (x, y0 + k)).collect()
        }
        _ => {
            let x0 = rng.random_range(0..=w - len);
            let y0 = rng.random_range(0..=h - len);
            if kind == 1 {
                (0..len).map(|k| (x0 + k, y0 + k)).collect()
            } else {
                (0..len).map(|k| (x0 + k, y0 + len - 1 - k)).collect()
            }
        }
    };
    if rng.random_bool(0.5) {
        path.reverse();
    }
    Some(path)
}

fn row_split(n_routes: u32, n_intersections: u32) -> u32 {
    let base = n_routes.saturating_sub(n_intersections.div_ceil(3)).max(2);
    let upper = if n_intersections > 0 { n_routes - 1 } else { n_routes };
    base.clamp(1, upper.max(1))
}

/// Generates one synthetic sector with exactly `n_routes` routes and
/// `n_intersections` nodes shared by two or more routes.
pub fn generate(seed: u64, n_routes: u32, n_intersections: u32, grid: GridSize) -> Result<SectorGraph, SectorGenError> {
    if n_routes < 2 {
        return Err(SectorGenError::BadParams(format!("need at least 2 routes, got {n_routes}")));
    }
    if grid.width < 12 || grid.height < n_routes {
        return Err(SectorGenError::BadParams(format!(
            "grid {}x{} too small for {n_routes} routes (need width >= 12, height >= routes)",
            grid.width, grid.height
        )));
    }
    let base_rows = row_split(n_routes, n_intersections);
    let max_rows = if n_intersections > 0 { n_routes - 1 } else { n_routes };
    let mut attempts = 0u32;
    let mut restart = 0u64;
    while attempts < MAX_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, restart));
        // Alternate around the initial split: base, base-1, base+1, base-2, ...
        let offset = (restart % 4) as i64;
        let delta = if offset % 2 == 1 { -(offset + 1) / 2 } else { offset / 2 };
        let rows = (base_rows as i64 + delta).clamp(1, max_rows as i64) as u32;
        restart += 1;

        let mut layout = Layout::default();
        let mut chosen: Vec<i32> = sample(&mut rng, grid.height as usize, rows as usize).into_iter().map(|r| r as i32).collect();
        chosen.sort_unstable();
        for y in chosen {
            let mut path: Vec<Cell> = (0..grid.width as i32).map(|x| (x, y)).collect();
            if rng.random_bool(0.5) {
                path.reverse();
            }
            layout.push(path);
        }
        if layout.intersections() as u32 > n_intersections {
            continue;
        }

        let crossers = n_routes - rows;
        let mut ok = true;
        for c in 0..crossers {
            let last = c + 1 == crossers;
            let mut placed = false;
            for _ in 0..CANDIDATES_PER_CROSSER {
                if attempts >= MAX_ATTEMPTS {
                    break;
                }
                attempts += 1;
                let Some(path) = random_crosser(&mut rng, grid) else { continue };
                if !layout.planar_with(&path) || layout.routes.iter().any(|r| r == &path || r.iter().rev().eq(path.iter())) {
                    continue;
                }
                let count = layout.count_with(&path) as u32;
                if count > n_intersections || (last && count != n_intersections) {
                    continue;
                }
                layout.push(path);
                placed = true;
                break;
            }
            if !placed {
                ok = false;
                break;
            }
        }
        if ok && layout.intersections() as u32 == n_intersections {
            return Ok(layout.into_graph());
        }
        if crossers == 0 {
            attempts += 1;
        }
    }
    Err(SectorGenError::TargetUnreachable { seed, attempts })
}

/// `n_sectors` sectors with per-sector seeds derived from `(seed, index)`.
pub fn generate_suite(
    seed: u64,
    n_sectors: usize,
    n_routes: u32,
    n_intersections: u32,
    grid: GridSize,
) -> Result<Vec<SectorGraph>, SectorGenError> {
    (0..n_sectors)
        .map(|i| generate(derive_seed(seed, i as u64), n_routes, n_intersections, grid))
        .collect()
}
