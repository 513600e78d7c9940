//! Shared helpers for the integration and acceptance tests: a naive
//! reference detector and a constructive solver acting as a perfect model.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::Path;

use atg_core::harness::SuiteSpec;
use atg_core::llm::{MockFixture, MockStep};
use atg_core::model::{Aircraft, Benchmark, BenchmarkParams, Mechanism, NodeId, Scenario, SectorGraph, Speed};
use atg_core::prompting::{build_benchmark_prompt, Templates};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Node occupied at each step `0..duration`, straight from the movement rule.
pub fn track(a: &Aircraft, g: &SectorGraph, duration: u32) -> Vec<Option<NodeId>> {
    let route = &g.routes[&a.route];
    let steps = match a.speed {
        Speed::Fast => 1,
        Speed::Slow => 2,
    };
    (0..duration)
        .map(|t| {
            if t < a.spawn_time {
                return None;
            }
            let i = ((t - a.spawn_time) / steps) as usize;
            route.get(i).cloned()
        })
        .collect()
}

pub fn levels_overlap(a: &Aircraft, b: &Aircraft) -> bool {
    let (alo, ahi) = (a.initial_fl.min(a.exit_fl), a.initial_fl.max(a.exit_fl));
    let (blo, bhi) = (b.initial_fl.min(b.exit_fl), b.initial_fl.max(b.exit_fl));
    alo <= bhi && blo <= ahi
}

/// (t, smaller id, larger id, mechanism, nodes) for every event.
pub type RefEvent = (u32, String, String, Mechanism, Vec<NodeId>);

/// Per-step, per-pair scan with no shared code path with the detector.
pub fn naive_events(s: &Scenario, g: &SectorGraph) -> BTreeSet<RefEvent> {
    let tracks: Vec<_> = s.aircraft.iter().map(|a| track(a, g, s.duration)).collect();
    let mut out = BTreeSet::new();
    for i in 0..s.aircraft.len() {
        for j in (i + 1)..s.aircraft.len() {
            let (a, b) = (&s.aircraft[i], &s.aircraft[j]);
            if a.id == b.id || !levels_overlap(a, b) {
                continue;
            }
            let (first, second, ta, tb) = if a.id < b.id {
                (&a.id, &b.id, &tracks[i], &tracks[j])
            } else {
                (&b.id, &a.id, &tracks[j], &tracks[i])
            };
            for t in 0..s.duration as usize {
                if let (Some(x), Some(y)) = (&ta[t], &tb[t]) {
                    if x == y {
                        out.insert((t as u32, first.clone(), second.clone(), Mechanism::SameNode, vec![x.clone()]));
                        continue;
                    }
                    if t >= 1 {
                        if let (Some(px), Some(py)) = (&ta[t - 1], &tb[t - 1]) {
                            if px == y && py == x {
                                out.insert((t as u32, first.clone(), second.clone(), Mechanism::Swap, vec![x.clone(), y.clone()]));
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Events between two aircraft from their tracks: (same-node or swap times).
fn pair_times(ta: &[Option<NodeId>], tb: &[Option<NodeId>]) -> Vec<usize> {
    let mut times = Vec::new();
    for t in 0..ta.len() {
        let (Some(x), Some(y)) = (&ta[t], &tb[t]) else { continue };
        if x == y {
            times.push(t);
        } else if t >= 1 {
            if let (Some(px), Some(py)) = (&ta[t - 1], &tb[t - 1]) {
                if px == y && py == x {
                    times.push(t);
                }
            }
        }
    }
    times
}

struct Placed {
    aircraft: Aircraft,
    track: Vec<Option<NodeId>>,
}

/// Constructs a scenario with exactly the required number of interacting
/// pairs (none unless `target_pairs` is set) and no spawn-grace breaches.
/// Greedy over shuffled (route, spawn, speed) candidates; retried with
/// different shuffles.
pub fn solve(g: &SectorGraph, params: &BenchmarkParams) -> Option<Scenario> {
    let duration = params.duration;
    let target = params.target_pairs.unwrap_or(0) as usize;
    let mut candidates = Vec::new();
    for route in g.routes.keys() {
        for spawn in 0..duration {
            for speed in [Speed::Fast, Speed::Slow] {
                let a = Aircraft::new("X", spawn, route.clone(), speed);
                let tr = track(&a, g, duration);
                candidates.push(Placed { aircraft: a, track: tr });
            }
        }
    }
    'attempt: for attempt in 0..50u64 {
        let mut order: Vec<usize> = (0..candidates.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(attempt));
        let mut placed: Vec<&Placed> = Vec::new();
        // Interactions of candidate c with each placed aircraft, None if a
        // grace breach.
        let contacts = |c: &Placed, placed: &[&Placed]| -> Option<Vec<usize>> {
            let mut hits = Vec::new();
            for (k, p) in placed.iter().enumerate() {
                let times = pair_times(&c.track, &p.track);
                if times.is_empty() {
                    continue;
                }
                let grace = |a: &Aircraft, t: usize| t as u32 <= a.spawn_time + 1;
                if times.iter().any(|&t| grace(&c.aircraft, t) || grace(&p.aircraft, t)) {
                    return None;
                }
                hits.push(k);
            }
            Some(hits)
        };
        for slot in 0..params.n_aircraft as usize {
            let pairing = slot < 2 * target && slot % 2 == 1;
            let want: Vec<usize> = if pairing { vec![slot - 1] } else { vec![] };
            let pick = order.iter().copied().find(|&ci| {
                // Distinct placements only.
                !placed.iter().any(|p| std::ptr::eq(*p, &candidates[ci]))
                    && contacts(&candidates[ci], &placed).is_some_and(|h| h == want)
            });
            match pick {
                Some(ci) => placed.push(&candidates[ci]),
                None => continue 'attempt,
            }
        }
        let mut s = Scenario::new(duration);
        for (i, p) in placed.iter().enumerate() {
            let mut a = p.aircraft.clone();
            a.id = format!("AC{}", i + 1);
            s.aircraft.push(a);
        }
        return Some(s);
    }
    None
}

pub fn fenced(s: &Scenario) -> String {
    format!("Phase 1 done.\n```json\n{}\n```", s.to_json())
}

/// Writes one single-step fixture per (benchmark point, sector) answering
/// each prompt with a solved scenario. Returns the number of fixtures.
pub fn write_perfect_fixtures(dir: &Path, suite: &SuiteSpec, benchmarks: &[Benchmark], values: Option<&[u32]>) -> usize {
    let templates = Templates::embedded();
    let mut n = 0;
    for &b in benchmarks {
        let sweep = values.map(<[u32]>::to_vec).unwrap_or_else(|| b.sweep());
        for v in sweep {
            let params = b.params(v);
            for g in suite.sectors(&params).expect("suite generates") {
                let prompt = build_benchmark_prompt(&templates, &g, &params).expect("prompt renders");
                let s = solve(&g, &params).unwrap_or_else(|| panic!("no solution for {b} {v}"));
                MockFixture::new(vec![MockStep::text(fenced(&s))]).write(dir, &prompt).expect("fixture written");
                n += 1;
            }
        }
    }
    n
}
