//! Discrete rollout of scenarios on a sector graph, exact interaction
//! detection and classification, and scenario validation.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::geometry::{angle_between_deg, sub};
use crate::model::{
    fl_overlap, Aircraft, BenchmarkParams, InteractionClass, InteractionEvent, Mechanism, NodeId, Point, RouteId,
    Scenario, SectorGraph, MAX_FLIGHT_LEVEL, MIN_FLIGHT_LEVEL,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RolloutError {
    #[error("aircraft {aircraft} flies unknown route {route}")]
    UnknownRoute { aircraft: String, route: RouteId },
    #[error("node {0} has no position")]
    MissingGeometry(NodeId),
    #[error("aircraft {0} is not part of the scenario")]
    UnknownAircraft(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RolloutConfig {
    /// Steps after spawn (inclusive) during which an aircraft must not interact.
    pub grace_steps: u32,
    /// Heading separation at or above which a same-node meeting is head-on.
    pub head_on_min_deg: f64,
    /// Heading separation at or below which a same-node meeting on a common
    /// track is catch-up.
    pub catch_up_max_deg: f64,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self { grace_steps: 1, head_on_min_deg: 135.0, catch_up_max_deg: 45.0 }
    }
}

/// Index into the aircraft's route at time `t`, or `None` before spawn and
/// after the aircraft has passed its last node. Slow movers advance on every
/// even offset from their spawn time.
pub fn position_at(a: &Aircraft, t: u32, route_len: usize) -> Option<usize> {
    let offset = t.checked_sub(a.spawn_time)?;
    let index = (offset / a.speed.steps_per_node()) as usize;
    (index < route_len).then_some(index)
}

/// Aircraft resolved against a graph: route as dense node indices.
struct Track<'a> {
    aircraft: &'a Aircraft,
    nodes: Vec<usize>,
}

impl Track<'_> {
    fn index_at(&self, t: u32) -> Option<usize> {
        position_at(self.aircraft, t, self.nodes.len())
    }

    fn node_at(&self, t: u32) -> Option<usize> {
        self.index_at(t).map(|i| self.nodes[i])
    }
}

fn resolve<'a>(s: &'a Scenario, g: &SectorGraph) -> Result<Vec<Track<'a>>, RolloutError> {
    s.aircraft
        .iter()
        .map(|a| {
            let route = g.routes.get(&a.route).ok_or_else(|| RolloutError::UnknownRoute {
                aircraft: a.id.clone(),
                route: a.route.clone(),
            })?;
            let nodes = route
                .iter()
                .map(|n| g.nodes.get_index_of(n).ok_or_else(|| RolloutError::MissingGeometry(n.clone())))
                .collect::<Result<_, _>>()?;
            Ok(Track { aircraft: a, nodes })
        })
        .collect()
}

/// For each time-step, which aircraft sit at which node.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct OccupancyTable {
    pub steps: Vec<BTreeMap<NodeId, BTreeSet<String>>>,
}

impl OccupancyTable {
    pub fn occupants(&self, t: u32, node: &NodeId) -> Option<&BTreeSet<String>> {
        self.steps.get(t as usize).and_then(|step| step.get(node))
    }

    pub fn is_empty(&self) -> bool {
        self.steps.iter().all(BTreeMap::is_empty)
    }

    /// Node occupied by `aircraft` at time `t`.
    pub fn location(&self, t: u32, aircraft: &str) -> Option<&NodeId> {
        self.steps.get(t as usize)?.iter().find(|(_, ids)| ids.contains(aircraft)).map(|(n, _)| n)
    }
}

pub fn simulate(s: &Scenario, g: &SectorGraph) -> Result<OccupancyTable, RolloutError> {
    let tracks = resolve(s, g)?;
    let mut steps = vec![BTreeMap::new(); s.duration as usize];
    for (t, step) in steps.iter_mut().enumerate() {
        for track in &tracks {
            if let Some(n) = track.node_at(t as u32) {
                let (id, _) = g.nodes.get_index(n).expect("resolved node");
                step.entry(id.clone()).or_insert_with(BTreeSet::new).insert(track.aircraft.id.clone());
            }
        }
    }
    Ok(OccupancyTable { steps })
}

pub fn detect_interactions(s: &Scenario, g: &SectorGraph) -> Result<Vec<InteractionEvent>, RolloutError> {
    detect_interactions_with(s, g, &RolloutConfig::default())
}

/// All same-node and swap events between flight-level-overlapping pairs for
/// `t` in `[0, duration)`, classified and sorted by `(t, pair)`.
pub fn detect_interactions_with(
    s: &Scenario,
    g: &SectorGraph,
    cfg: &RolloutConfig,
) -> Result<Vec<InteractionEvent>, RolloutError> {
    let tracks = resolve(s, g)?;
    let positions: Vec<Point> = g.nodes.values().copied().collect();
    let ids: Vec<&NodeId> = g.nodes.keys().collect();
    let table: Vec<Vec<Option<usize>>> =
        tracks.iter().map(|tr| (0..s.duration).map(|t| tr.index_at(t)).collect()).collect();

    let mut events = Vec::new();
    for i in 0..tracks.len() {
        for j in i + 1..tracks.len() {
            let (a, b) = (&tracks[i], &tracks[j]);
            if a.aircraft.id == b.aircraft.id || !fl_overlap(a.aircraft, b.aircraft) {
                continue;
            }
            // Keep the pair in id order; `first` is the lexicographically smaller id.
            let (first, second, t1, t2) = if a.aircraft.id <= b.aircraft.id {
                (a, b, &table[i], &table[j])
            } else {
                (b, a, &table[j], &table[i])
            };
            let node = |tr: &Track, idx: Option<usize>| idx.map(|k| tr.nodes[k]);
            for t in 0..s.duration as usize {
                let (n1, n2) = (node(first, t1[t]), node(second, t2[t]));
                let (Some(n1), Some(n2)) = (n1, n2) else { continue };
                let pair = (first.aircraft.id.clone(), second.aircraft.id.clone());
                if n1 == n2 {
                    let class = classify_meeting(first, t1[t].unwrap(), second, t2[t].unwrap(), &positions, cfg);
                    events.push(InteractionEvent {
                        t: t as u32,
                        pair,
                        nodes: vec![ids[n1].clone()],
                        mechanism: Mechanism::SameNode,
                        class,
                    });
                } else if t >= 1 {
                    let (Some(p1), Some(p2)) = (node(first, t1[t - 1]), node(second, t2[t - 1])) else { continue };
                    if n1 == p2 && n2 == p1 && n1 != p1 {
                        events.push(InteractionEvent {
                            t: t as u32,
                            pair,
                            nodes: vec![ids[n1].clone(), ids[n2].clone()],
                            mechanism: Mechanism::Swap,
                            class: InteractionClass::HeadOn,
                        });
                    }
                }
            }
        }
    }
    events.sort_by(|x, y| x.t.cmp(&y.t).then_with(|| x.pair.cmp(&y.pair)));
    Ok(events)
}

/// Direction of travel at route index `idx`: from the previous route node,
/// or towards the next one if the aircraft has not moved yet.
fn heading(track: &Track, idx: usize, positions: &[Point]) -> Point {
    let n = &track.nodes;
    if idx > 0 {
        sub(positions[n[idx]], positions[n[idx - 1]])
    } else if n.len() > 1 {
        sub(positions[n[1]], positions[n[0]])
    } else {
        Point::default()
    }
}

fn classify_meeting(a: &Track, ia: usize, b: &Track, ib: usize, positions: &[Point], cfg: &RolloutConfig) -> InteractionClass {
    let theta = angle_between_deg(heading(a, ia, positions), heading(b, ib, positions));
    if theta >= cfg.head_on_min_deg {
        return InteractionClass::HeadOn;
    }
    let pred = |tr: &Track, i: usize| i.checked_sub(1).map(|k| tr.nodes[k]);
    let succ = |tr: &Track, i: usize| tr.nodes.get(i + 1).copied();
    let common_track = (pred(a, ia).is_some() && pred(a, ia) == pred(b, ib))
        || (succ(a, ia).is_some() && succ(a, ia) == succ(b, ib));
    if theta <= cfg.catch_up_max_deg && common_track {
        InteractionClass::CatchUp
    } else {
        InteractionClass::CrossPath
    }
}

/// Classifies an event produced by [`detect_interactions`] from the scenario
/// and graph alone.
pub fn classify(event: &InteractionEvent, s: &Scenario, g: &SectorGraph) -> Result<InteractionClass, RolloutError> {
    classify_with(event, s, g, &RolloutConfig::default())
}

pub fn classify_with(
    event: &InteractionEvent,
    s: &Scenario,
    g: &SectorGraph,
    cfg: &RolloutConfig,
) -> Result<InteractionClass, RolloutError> {
    if event.mechanism == Mechanism::Swap {
        return Ok(InteractionClass::HeadOn);
    }
    let tracks = resolve(s, g)?;
    let find = |id: &str| {
        tracks.iter().find(|tr| tr.aircraft.id == id).ok_or_else(|| RolloutError::UnknownAircraft(id.to_owned()))
    };
    let (a, b) = (find(&event.pair.0)?, find(&event.pair.1)?);
    let absent = || RolloutError::UnknownAircraft(format!("{} or {} at t={}", event.pair.0, event.pair.1, event.t));
    let ia = a.index_at(event.t).ok_or_else(absent)?;
    let ib = b.index_at(event.t).ok_or_else(absent)?;
    let positions: Vec<Point> = g.nodes.values().copied().collect();
    Ok(classify_meeting(a, ia, b, ib, &positions, cfg))
}

/// Unordered interacting pairs, each stored smaller id first.
pub fn unique_pairs(events: &[InteractionEvent]) -> BTreeSet<(String, String)> {
    events.iter().map(|e| e.pair.clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aircraft: Option<String>,
    pub rule: String,
    pub detail: String,
}

impl Violation {
    fn new(aircraft: Option<&str>, rule: &str, detail: String) -> Self {
        Self { aircraft: aircraft.map(str::to_owned), rule: rule.to_owned(), detail }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub schema_ok: bool,
    pub violations: Vec<Violation>,
    pub spawn_grace_violations: Vec<InteractionEvent>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.schema_ok && self.violations.is_empty() && self.spawn_grace_violations.is_empty()
    }
}

/// Checks a decoded scenario against the graph and, when given, the
/// benchmark parameters. Never fails; findings are returned in the report.
pub fn validate_scenario(
    s: &Scenario,
    g: &SectorGraph,
    params: Option<&BenchmarkParams>,
    cfg: &RolloutConfig,
) -> ValidationReport {
    let mut violations = Vec::new();
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for a in &s.aircraft {
        let count = seen.entry(a.id.as_str()).or_default();
        *count += 1;
        if *count == 2 {
            violations.push(Violation::new(Some(&a.id), "duplicate-id", format!("aircraft id {} is used more than once", a.id)));
        }
        if !g.routes.contains_key(&a.route) {
            violations.push(Violation::new(Some(&a.id), "unknown-route", format!("route {} does not exist", a.route)));
        }
        if a.spawn_time >= s.duration {
            violations.push(Violation::new(
                Some(&a.id),
                "spawn-out-of-range",
                format!("spawn out of range: spawn_time {} not in [0, {}]", a.spawn_time, s.duration.saturating_sub(1)),
            ));
        }
        for (name, level) in [("initial_fl", a.initial_fl), ("exit_fl", a.exit_fl)] {
            if !(MIN_FLIGHT_LEVEL..=MAX_FLIGHT_LEVEL).contains(&level) {
                violations.push(Violation::new(
                    Some(&a.id),
                    "flight-level-out-of-range",
                    format!("{name} {level} not in [{MIN_FLIGHT_LEVEL}, {MAX_FLIGHT_LEVEL}]"),
                ));
            }
        }
    }
    if let Some(p) = params {
        if s.aircraft.len() != p.n_aircraft as usize {
            violations.push(Violation::new(
                None,
                "aircraft-count",
                format!("expected {} aircraft, found {}", p.n_aircraft, s.aircraft.len()),
            ));
        }
        if s.duration != p.duration {
            violations.push(Violation::new(
                None,
                "duration",
                format!("expected duration {}, found {}", p.duration, s.duration),
            ));
        }
    }

    // Grace check over the aircraft that can be simulated.
    let known = Scenario {
        duration: s.duration,
        aircraft: s.aircraft.iter().filter(|a| g.routes.contains_key(&a.route)).cloned().collect(),
    };
    let spawn: HashMap<&str, u32> = known.aircraft.iter().map(|a| (a.id.as_str(), a.spawn_time)).collect();
    let in_grace = |id: &str, t: u32| spawn.get(id).is_some_and(|&s0| t >= s0 && t <= s0 + cfg.grace_steps);
    let spawn_grace_violations = match detect_interactions_with(&known, g, cfg) {
        Ok(events) => events.into_iter().filter(|e| in_grace(&e.pair.0, e.t) || in_grace(&e.pair.1, e.t)).collect(),
        Err(e) => {
            violations.push(Violation::new(None, "graph", e.to_string()));
            Vec::new()
        }
    };
    ValidationReport { schema_ok: true, violations, spawn_grace_violations }
}

/// Schema check followed by [`validate_scenario`] for raw JSON input.
pub fn validate_json(value: &Value, g: &SectorGraph, params: Option<&BenchmarkParams>, cfg: &RolloutConfig) -> (Option<Scenario>, ValidationReport) {
    match Scenario::from_value(value) {
        Ok(s) => {
            let report = validate_scenario(&s, g, params, cfg);
            (Some(s), report)
        }
        Err(issues) => (
            None,
            ValidationReport {
                schema_ok: false,
                violations: issues.into_iter().map(|d| Violation::new(None, "schema", d)).collect(),
                spawn_grace_violations: Vec::new(),
            },
        ),
    }
}

/// Output of the `verify` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub events: Vec<InteractionEvent>,
    pub unique_pairs: Vec<(String, String)>,
    pub validation: ValidationReport,
}

pub fn verify(s: &Scenario, g: &SectorGraph, params: Option<&BenchmarkParams>, cfg: &RolloutConfig) -> Verification {
    let validation = validate_scenario(s, g, params, cfg);
    let known = Scenario {
        duration: s.duration,
        aircraft: s.aircraft.iter().filter(|a| g.routes.contains_key(&a.route)).cloned().collect(),
    };
    let events = detect_interactions_with(&known, g, cfg).unwrap_or_default();
    let unique_pairs = unique_pairs(&events).into_iter().collect();
    Verification { events, unique_pairs, validation }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Speed;

    fn chain(n: usize) -> SectorGraph {
        let mut g = SectorGraph::default();
        for i in 0..n {
            g.nodes.insert(NodeId::dense(i), Point::new(20.0 * i as f64, 0.0));
        }
        let fwd: Vec<NodeId> = (0..n).map(NodeId::dense).collect();
        let mut rev = fwd.clone();
        rev.reverse();
        g.routes.insert("F".into(), fwd);
        g.routes.insert("B".into(), rev);
        g
    }

    #[test]
    fn position_examples() {
        let fast = Aircraft::new("a", 0, "F", Speed::Fast);
        assert_eq!(position_at(&fast, 5, 10), Some(5));
        // Step table for a slow mover spawned at 2: t=2,3 -> 0; 4,5 -> 1; 6,7 -> 2.
        let slow = Aircraft::new("b", 2, "F", Speed::Slow);
        let table: Vec<Option<usize>> = (0..8).map(|t| position_at(&slow, t, 10)).collect();
        assert_eq!(table, vec![None, None, Some(0), Some(0), Some(1), Some(1), Some(2), Some(2)]);
        assert_eq!(position_at(&fast, 4, 4), None);
        assert_eq!(position_at(&fast, 3, 4), Some(3));
    }

    #[test]
    fn simulate_examples() {
        let g = chain(3);
        assert!(simulate(&Scenario::new(12), &g).unwrap().is_empty());

        let mut s = Scenario::new(12);
        s.aircraft.push(Aircraft::new("AC1", 0, "F", Speed::Fast));
        let table = simulate(&s, &g).unwrap();
        for t in 0..3 {
            assert_eq!(table.location(t, "AC1"), Some(&NodeId::dense(t as usize)));
        }
        for t in 3..12 {
            assert_eq!(table.location(t, "AC1"), None);
        }

        let g = chain(6);
        let mut s = Scenario::new(12);
        s.aircraft.push(Aircraft::new("AC1", 0, "F", Speed::Fast));
        s.aircraft.push(Aircraft::new("AC2", 2, "F", Speed::Fast));
        let table = simulate(&s, &g).unwrap();
        for t in 0..10u32 {
            if let Some(n) = table.location(t, "AC1") {
                assert_eq!(table.location(t + 2, "AC2"), Some(n));
            }
        }

        s.aircraft.push(Aircraft::new("AC3", 0, "Z", Speed::Fast));
        assert!(matches!(simulate(&s, &g), Err(RolloutError::UnknownRoute { .. })));
    }

    #[test]
    fn detection_examples() {
        let mut g = chain(5);
        g.nodes.insert("M0".into(), Point::new(0.0, 100.0));
        g.nodes.insert("M1".into(), Point::new(20.0, 100.0));
        g.routes.insert("D".into(), vec!["M0".into(), "M1".into()]);
        let mut s = Scenario::new(12);
        s.aircraft.push(Aircraft::new("AC1", 0, "F", Speed::Fast));
        s.aircraft.push(Aircraft::new("AC2", 0, "D", Speed::Fast));
        assert!(detect_interactions(&s, &g).unwrap().is_empty());

        // Identical aircraft meet at every occupied step.
        let mut s = Scenario::new(12);
        s.aircraft.push(Aircraft::new("AC1", 1, "F", Speed::Slow));
        s.aircraft.push(Aircraft::new("AC2", 1, "F", Speed::Slow));
        let events = detect_interactions(&s, &g).unwrap();
        assert_eq!(events.len(), 10);
        assert!(events.iter().all(|e| e.mechanism == Mechanism::SameNode && e.class == InteractionClass::CatchUp));

        // Head-on on a 4-node chain, both spawned at 0:
        //   t:    0   1   2
        //   AC1: n0  n1  n2
        //   AC2: n3  n2  n1   -> positions exchanged between t=1 and t=2.
        let g = chain(4);
        let mut s = Scenario::new(12);
        s.aircraft.push(Aircraft::new("AC1", 0, "F", Speed::Fast));
        s.aircraft.push(Aircraft::new("AC2", 0, "B", Speed::Fast));
        let events = detect_interactions(&s, &g).unwrap();
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].mechanism, Mechanism::Swap);
        assert_eq!(events[0].t, 2);
        assert_eq!(events[0].nodes, vec![NodeId::dense(2), NodeId::dense(1)]);
        assert_eq!(events[0].class, InteractionClass::HeadOn);
    }

    #[test]
    fn flight_levels_gate_detection() {
        let g = chain(4);
        let mut s = Scenario::new(12);
        s.aircraft.push(Aircraft::new("AC1", 0, "F", Speed::Fast).with_levels(250, 280));
        s.aircraft.push(Aircraft::new("AC2", 0, "F", Speed::Fast).with_levels(290, 320));
        assert!(detect_interactions(&s, &g).unwrap().is_empty());
        s.aircraft[1] = s.aircraft[1].clone().with_levels(280, 320);
        assert_eq!(detect_interactions(&s, &g).unwrap().len(), 4);
    }

    #[test]
    fn unique_pair_examples() {
        assert!(unique_pairs(&[]).is_empty());
        let ev = |a: &str, b: &str, t: u32| InteractionEvent {
            t,
            pair: (a.into(), b.into()),
            nodes: vec!["N0".into()],
            mechanism: Mechanism::SameNode,
            class: InteractionClass::CrossPath,
        };
        let five: Vec<_> = (0..5).map(|t| ev("AC1", "AC2", t)).collect();
        assert_eq!(unique_pairs(&five).len(), 1);
        assert_eq!(unique_pairs(&[ev("AC1", "AC2", 0), ev("AC2", "AC3", 1), ev("AC1", "AC2", 2)]).len(), 2);
    }

    #[test]
    fn validation_examples() {
        let mut g = chain(5);
        g.nodes.insert("M0".into(), Point::new(0.0, 100.0));
        g.nodes.insert("M1".into(), Point::new(20.0, 100.0));
        g.routes.insert("D".into(), vec!["M0".into(), "M1".into()]);
        let cfg = RolloutConfig::default();

        let mut s = Scenario::new(12);
        s.aircraft.push(Aircraft::new("AC1", 0, "F", Speed::Fast));
        s.aircraft.push(Aircraft::new("AC2", 0, "D", Speed::Fast));
        assert!(validate_scenario(&s, &g, None, &cfg).is_valid());

        let mut late = s.clone();
        late.aircraft[1].spawn_time = 12;
        let report = validate_scenario(&late, &g, None, &cfg);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].rule, "spawn-out-of-range");
        assert!(report.violations[0].detail.contains("spawn out of range"));

        // AC2 spawns at n0 while AC1 (slow, spawned at 2) is still holding there.
        let mut grace = Scenario::new(12);
        grace.aircraft.push(Aircraft::new("AC1", 2, "F", Speed::Slow));
        grace.aircraft.push(Aircraft::new("AC2", 3, "F", Speed::Fast));
        let report = validate_scenario(&grace, &g, None, &cfg);
        // Meetings at t=3 (n0) and t=4 (n1), both inside AC2's grace window.
        let times: Vec<u32> = report.spawn_grace_violations.iter().map(|e| e.t).collect();
        assert_eq!(times, vec![3, 4]);
        assert!(!report.is_valid());

        let params = crate::model::Benchmark::TrafficVolume.params(3);
        let report = validate_scenario(&s, &g, Some(&params), &cfg);
        assert_eq!(report.violations[0].rule, "aircraft-count");

        let mut bad = s.clone();
        bad.aircraft[0].route = "Q".into();
        bad.aircraft[1].id = "AC1".into();
        bad.aircraft[1].exit_fl = 700;
        let rules: Vec<String> = validate_scenario(&bad, &g, None, &cfg).violations.into_iter().map(|v| v.rule).collect();
        assert_eq!(rules, vec!["unknown-route", "duplicate-id", "flight-level-out-of-range"]);
    }
}
