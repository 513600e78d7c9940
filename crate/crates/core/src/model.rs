//! Domain types shared by every stage of the pipeline.

use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

pub const DEFAULT_SPACING_NMI: f64 = 20.0;
pub const MIN_FLIGHT_LEVEL: u32 = 0;
pub const MAX_FLIGHT_LEVEL: u32 = 660;
/// Level used for both initial and exit flight level when a scenario omits them.
pub const DEFAULT_FLIGHT_LEVEL: u32 = 300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("route {0} has fewer than two nodes")]
    ShortRoute(RouteId),
    #[error("route {route} repeats node {node} consecutively")]
    RepeatedNode { route: RouteId, node: NodeId },
    #[error("route {route} references unknown node {node}")]
    UnknownNode { route: RouteId, node: NodeId },
    #[error("spacing must be positive, got {0}")]
    BadSpacing(f64),
}

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }

        impl std::borrow::Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    };
}

string_id!(
    /// Graph node identifier, rendered as `N0`, `N1`, ... by the encoder and generator.
    NodeId
);
string_id!(RouteId);

impl NodeId {
    pub fn dense(index: usize) -> Self {
        Self(format!("N{index}"))
    }
}

/// Planar position in nautical miles.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

impl Serialize for Point {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        [self.x, self.y].serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let [x, y] = <[f64; 2]>::deserialize(deserializer)?;
        Ok(Point { x, y })
    }
}

/// Discrete sector: positioned nodes and directed routes over them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorGraph {
    pub spacing_nmi: f64,
    pub nodes: IndexMap<NodeId, Point>,
    pub routes: IndexMap<RouteId, Vec<NodeId>>,
}

impl Default for SectorGraph {
    fn default() -> Self {
        Self::new(DEFAULT_SPACING_NMI)
    }
}

impl SectorGraph {
    pub fn new(spacing_nmi: f64) -> Self {
        Self { spacing_nmi, nodes: IndexMap::new(), routes: IndexMap::new() }
    }

    pub fn position(&self, node: &NodeId) -> Option<Point> {
        self.nodes.get(node).copied()
    }

    /// Checks structural invariants: positive spacing, routes of at least two
    /// nodes, no consecutive repeats and no dangling node references.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.spacing_nmi.is_nan() || self.spacing_nmi <= 0.0 {
            return Err(ModelError::BadSpacing(self.spacing_nmi));
        }
        for (route, nodes) in &self.routes {
            if nodes.len() < 2 {
                return Err(ModelError::ShortRoute(route.clone()));
            }
            for node in nodes {
                if !self.nodes.contains_key(node) {
                    return Err(ModelError::UnknownNode { route: route.clone(), node: node.clone() });
                }
            }
            if let Some(w) = nodes.windows(2).find(|w| w[0] == w[1]) {
                return Err(ModelError::RepeatedNode { route: route.clone(), node: w[0].clone() });
            }
        }
        Ok(())
    }

    /// Nodes that appear in two or more distinct routes, in node order, each
    /// with the routes passing through it.
    pub fn intersection_nodes(&self) -> Vec<(NodeId, Vec<RouteId>)> {
        let mut members: IndexMap<&NodeId, Vec<RouteId>> = IndexMap::new();
        for (route, nodes) in &self.routes {
            for node in nodes {
                let entry = members.entry(node).or_default();
                if !entry.contains(route) {
                    entry.push(route.clone());
                }
            }
        }
        let mut out: Vec<(NodeId, Vec<RouteId>)> = members
            .into_iter()
            .filter(|(_, routes)| routes.len() >= 2)
            .map(|(node, routes)| (node.clone(), routes))
            .collect();
        out.sort_by_key(|(node, _)| self.nodes.get_index_of(node));
        out
    }

    pub fn count_intersections(&self) -> usize {
        self.intersection_nodes().len()
    }

    /// Every directed edge of every route as `(route, from, to)`.
    pub fn edges(&self) -> impl Iterator<Item = (&RouteId, &NodeId, &NodeId)> {
        self.routes
            .iter()
            .flat_map(|(route, nodes)| nodes.windows(2).map(move |w| (route, &w[0], &w[1])))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sector graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Fast movers advance one node per step, slow movers one node every two steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Speed {
    Fast,
    Slow,
}

impl Speed {
    /// Time-steps spent per node.
    pub const fn steps_per_node(self) -> u32 {
        match self {
            Speed::Fast => 1,
            Speed::Slow => 2,
        }
    }

    pub fn from_steps(steps: u64) -> Option<Self> {
        match steps {
            1 => Some(Speed::Fast),
            2 => Some(Speed::Slow),
            _ => None,
        }
    }
}

impl Serialize for Speed {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_u32(self.steps_per_node())
    }
}

impl<'de> Deserialize<'de> for Speed {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = u64::deserialize(deserializer)?;
        Speed::from_steps(v).ok_or_else(|| serde::de::Error::custom(format!("speed must be 1 or 2, got {v}")))
    }
}

fn default_fl() -> u32 {
    DEFAULT_FLIGHT_LEVEL
}

fn uppercase_id<'de, D: Deserializer<'de>>(deserializer: D) -> Result<String, D::Error> {
    Ok(String::deserialize(deserializer)?.to_uppercase())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Aircraft {
    #[serde(deserialize_with = "uppercase_id")]
    pub id: String,
    pub spawn_time: u32,
    pub route: RouteId,
    pub speed: Speed,
    #[serde(default = "default_fl")]
    pub initial_fl: u32,
    #[serde(default = "default_fl")]
    pub exit_fl: u32,
}

impl Aircraft {
    /// Level-flight aircraft at the default flight level; the id is uppercased.
    pub fn new(id: &str, spawn_time: u32, route: impl Into<RouteId>, speed: Speed) -> Self {
        Self {
            id: id.to_uppercase(),
            spawn_time,
            route: route.into(),
            speed,
            initial_fl: DEFAULT_FLIGHT_LEVEL,
            exit_fl: DEFAULT_FLIGHT_LEVEL,
        }
    }

    pub fn with_levels(mut self, initial_fl: u32, exit_fl: u32) -> Self {
        self.initial_fl = initial_fl;
        self.exit_fl = exit_fl;
        self
    }
}

/// Closed or open treatment of flight-level range endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntervalBounds {
    Closed,
    Open,
}

/// Flight-level ranges are compared as closed intervals, so ranges touching at
/// a single level overlap.
pub const FL_RANGE_BOUNDS: IntervalBounds = IntervalBounds::Closed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlightLevelRange {
    pub lo: u32,
    pub hi: u32,
}

impl FlightLevelRange {
    pub fn overlaps(&self, other: &FlightLevelRange, bounds: IntervalBounds) -> bool {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        match bounds {
            IntervalBounds::Closed => lo <= hi,
            IntervalBounds::Open => lo < hi,
        }
    }
}

pub fn fl_range(a: &Aircraft) -> FlightLevelRange {
    FlightLevelRange { lo: a.initial_fl.min(a.exit_fl), hi: a.initial_fl.max(a.exit_fl) }
}

pub fn fl_overlap(a: &Aircraft, b: &Aircraft) -> bool {
    fl_range(a).overlaps(&fl_range(b), FL_RANGE_BOUNDS)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub duration: u32,
    pub aircraft: Vec<Aircraft>,
}

impl Scenario {
    pub fn new(duration: u32) -> Self {
        Self { duration, aircraft: Vec::new() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Strict schema check of a decoded JSON document. Unknown extra fields
    /// are tolerated; every problem found is reported, not just the first.
    pub fn from_value(value: &Value) -> Result<Scenario, Vec<String>> {
        let mut issues = Vec::new();
        let Some(obj) = value.as_object() else {
            return Err(vec!["top level is not an object".to_owned()]);
        };
        let duration = match obj.get("duration") {
            None => {
                issues.push("missing field \"duration\"".to_owned());
                None
            }
            Some(v) => match v.as_u64().filter(|&d| d >= 1 && d <= u32::MAX as u64) {
                Some(d) => Some(d as u32),
                None => {
                    issues.push(format!("\"duration\" must be a positive integer, got {v}"));
                    None
                }
            },
        };
        let mut aircraft = Vec::new();
        match obj.get("aircraft") {
            None => issues.push("missing field \"aircraft\"".to_owned()),
            Some(Value::Array(items)) => {
                for (i, item) in items.iter().enumerate() {
                    match parse_aircraft(item) {
                        Ok(a) => aircraft.push(a),
                        Err(mut errs) => {
                            for e in &mut errs {
                                *e = format!("aircraft[{i}]: {e}");
                            }
                            issues.extend(errs);
                        }
                    }
                }
            }
            Some(v) => issues.push(format!("\"aircraft\" must be an array, got {v}")),
        }
        match duration {
            Some(duration) if issues.is_empty() => Ok(Scenario { duration, aircraft }),
            _ => Err(issues),
        }
    }

    pub fn from_json_str(text: &str) -> Result<Scenario, Vec<String>> {
        let value: Value = serde_json::from_str(text).map_err(|e| vec![format!("invalid JSON: {e}")])?;
        Scenario::from_value(&value)
    }
}

fn parse_aircraft(value: &Value) -> Result<Aircraft, Vec<String>> {
    let Some(obj) = value.as_object() else {
        return Err(vec!["entry is not an object".to_owned()]);
    };
    let mut issues = Vec::new();
    let mut string_field = |name: &str| match obj.get(name) {
        Some(Value::String(s)) if !s.is_empty() => Some(s.clone()),
        Some(v) => {
            issues.push(format!("\"{name}\" must be a non-empty string, got {v}"));
            None
        }
        None => {
            issues.push(format!("missing field \"{name}\""));
            None
        }
    };
    let id = string_field("id");
    let route = string_field("route");
    let mut int_field = |name: &str, required: bool| match obj.get(name) {
        Some(v) => match v.as_u64().filter(|&n| n <= u32::MAX as u64) {
            Some(n) => Some(n as u32),
            None => {
                issues.push(format!("\"{name}\" must be a non-negative integer, got {v}"));
                None
            }
        },
        None if required => {
            issues.push(format!("missing field \"{name}\""));
            None
        }
        None => Some(DEFAULT_FLIGHT_LEVEL),
    };
    let spawn_time = int_field("spawn_time", true);
    let initial_fl = int_field("initial_fl", false);
    let exit_fl = int_field("exit_fl", false);
    let speed = match obj.get("speed") {
        Some(v) => match v.as_u64().and_then(Speed::from_steps) {
            Some(s) => Some(s),
            None => {
                issues.push(format!("\"speed\" must be 1 or 2, got {v}"));
                None
            }
        },
        None => {
            issues.push("missing field \"speed\"".to_owned());
            None
        }
    };
    match (id, route, spawn_time, speed, initial_fl, exit_fl) {
        (Some(id), Some(route), Some(spawn_time), Some(speed), Some(initial_fl), Some(exit_fl)) if issues.is_empty() => {
            Ok(Aircraft {
                id: id.to_uppercase(),
                spawn_time,
                route: RouteId(route),
                speed,
                initial_fl,
                exit_fl,
            })
        }
        _ => Err(issues),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    SameNode,
    Swap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionClass {
    CrossPath,
    HeadOn,
    CatchUp,
}

impl InteractionClass {
    pub fn label(self) -> &'static str {
        match self {
            InteractionClass::CrossPath => "cross-path",
            InteractionClass::HeadOn => "head-on",
            InteractionClass::CatchUp => "catch-up",
        }
    }
}

impl fmt::Display for InteractionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One interaction between two aircraft at one time-step. `pair` is stored
/// with the lexicographically smaller id first; `nodes` holds one node for
/// a same-node event, or the two nodes (in pair order, at time `t`) of a swap.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub t: u32,
    pub pair: (String, String),
    pub nodes: Vec<NodeId>,
    pub mechanism: Mechanism,
    pub class: InteractionClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Benchmark {
    TrafficVolume,
    ScenarioLength,
    SectorComplexity,
    Controllability,
}

impl Benchmark {
    pub const ALL: [Benchmark; 4] = [
        Benchmark::TrafficVolume,
        Benchmark::ScenarioLength,
        Benchmark::SectorComplexity,
        Benchmark::Controllability,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::TrafficVolume => "traffic_volume",
            Benchmark::ScenarioLength => "scenario_length",
            Benchmark::SectorComplexity => "sector_complexity",
            Benchmark::Controllability => "controllability",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.name() == name.replace('-', "_"))
    }

    /// Index of the skill axis (0-based) this benchmark feeds.
    pub fn axis(self) -> usize {
        self as usize
    }

    /// Values of the swept parameter.
    pub fn sweep(self) -> Vec<u32> {
        match self {
            Benchmark::TrafficVolume => vec![2, 3, 4, 5, 6, 7, 8, 9, 10, 15, 20, 25, 30],
            Benchmark::ScenarioLength => vec![12, 15, 18, 21, 24],
            Benchmark::SectorComplexity => (4..=14).collect(),
            Benchmark::Controllability => (1..=5).collect(),
        }
    }

    pub fn params(self, value: u32) -> BenchmarkParams {
        let base = BenchmarkParams {
            benchmark: self,
            n_aircraft: 8,
            duration: 12,
            n_routes: 7,
            n_intersections: 7,
            target_pairs: None,
        };
        match self {
            Benchmark::TrafficVolume => BenchmarkParams { n_aircraft: value, ..base },
            Benchmark::ScenarioLength => BenchmarkParams { duration: value, ..base },
            Benchmark::SectorComplexity => BenchmarkParams { n_intersections: value, ..base },
            Benchmark::Controllability => BenchmarkParams { n_aircraft: 10, target_pairs: Some(value), ..base },
        }
    }

    pub fn grid(self) -> Vec<BenchmarkParams> {
        self.sweep().into_iter().map(|v| self.params(v)).collect()
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BenchmarkParams {
    pub benchmark: Benchmark,
    pub n_aircraft: u32,
    pub duration: u32,
    pub n_routes: u32,
    pub n_intersections: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_pairs: Option<u32>,
}

impl BenchmarkParams {
    /// The value of the parameter this benchmark sweeps.
    pub fn swept_value(&self) -> u32 {
        match self.benchmark {
            Benchmark::TrafficVolume => self.n_aircraft,
            Benchmark::ScenarioLength => self.duration,
            Benchmark::SectorComplexity => self.n_intersections,
            Benchmark::Controllability => self.target_pairs.unwrap_or(0),
        }
    }
}
