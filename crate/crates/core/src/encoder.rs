//! Discretisation of continuous route polylines into a [`SectorGraph`].
//!
//! The pipeline is:
//!
//! 1. fixes closer than the cluster radius are merged (single linkage) and
//!    replaced by their centroid;
//! 2. each route's cluster sequence is simplified by dropping shallow kinks,
//!    never dropping endpoints or clusters shared with another route;
//! 3. every pair of legs is intersected and each crossing becomes a shared
//!    vertex, so the output has no edge crossings away from nodes;
//! 4. each leg between consecutive vertices of length `L` is cut into
//!    `max(1, round(L / spacing))` equal edges;
//! 5. interpolated nodes of different routes closer than half the cluster
//!    radius are merged.
//!
//! Node ids are assigned densely (`N0`, `N1`, ...) in `(x, y, creation)` order.

use std::cmp::Ordering;
use std::collections::HashMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, dist, lerp, off_node_crossings, point_segment_distance, polyline_length, project_param};
use crate::model::{NodeId, Point, RouteId, SectorGraph, DEFAULT_SPACING_NMI};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodeError {
    #[error("route {route} references unknown fix {fix}")]
    UnknownFix { route: RouteId, fix: String },
    #[error("route {0} has fewer than two fixes")]
    ShortRoute(RouteId),
    #[error("route {route} is {length:.1} nmi long after simplification, shorter than the node spacing")]
    DegenerateRoute { route: RouteId, length: f64 },
    #[error("routes {first} and {second} overlap in a way that cannot be planarized")]
    NonPlanarizable { first: RouteId, second: RouteId },
    #[error("invalid encoder configuration: {0}")]
    BadConfig(String),
}

/// Route polylines over named fixes, in nmi.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousSector {
    pub fixes: IndexMap<String, Point>,
    pub routes: IndexMap<RouteId, Vec<String>>,
}

impl ContinuousSector {
    pub fn validate(&self) -> Result<(), EncodeError> {
        for (route, fixes) in &self.routes {
            if fixes.len() < 2 {
                return Err(EncodeError::ShortRoute(route.clone()));
            }
            if let Some(fix) = fixes.iter().find(|f| !self.fixes.contains_key(*f)) {
                return Err(EncodeError::UnknownFix { route: route.clone(), fix: fix.clone() });
            }
        }
        Ok(())
    }

    /// Treats the nodes of an existing graph as fixes.
    pub fn from_graph(graph: &SectorGraph) -> Self {
        Self {
            fixes: graph.nodes.iter().map(|(id, p)| (id.0.clone(), *p)).collect(),
            routes: graph
                .routes
                .iter()
                .map(|(r, nodes)| (r.clone(), nodes.iter().map(|n| n.0.clone()).collect()))
                .collect(),
        }
    }

    pub fn route_points(&self, route: &RouteId) -> Option<Vec<Point>> {
        self.routes.get(route).map(|fixes| fixes.iter().filter_map(|f| self.fixes.get(f).copied()).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub spacing: f64,
    pub cluster_radius: f64,
    /// Interior points turning by less than this many degrees are dropped.
    pub kink_tolerance: f64,
    /// Perpendicular distance (nmi) under which a vertex is taken to lie on a leg.
    pub collinear_tolerance: f64,
    /// Largest relative change of a route's length that simplification may cause.
    pub max_length_change: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            spacing: DEFAULT_SPACING_NMI,
            cluster_radius: DEFAULT_SPACING_NMI,
            kink_tolerance: 15.0,
            collinear_tolerance: 1.0,
            max_length_change: 0.05,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), EncodeError> {
        if self.spacing.is_nan() || self.spacing <= 0.0 {
            return Err(EncodeError::BadConfig(format!("spacing must be positive, got {}", self.spacing)));
        }
        if self.cluster_radius.is_nan() || self.cluster_radius <= 0.0 {
            return Err(EncodeError::BadConfig(format!("cluster radius must be positive, got {}", self.cluster_radius)));
        }
        let tolerances = [self.kink_tolerance, self.collinear_tolerance, self.max_length_change];
        if tolerances.iter().any(|t| t.is_nan() || *t < 0.0) {
            return Err(EncodeError::BadConfig("tolerances must be non-negative".to_owned()));
        }
        Ok(())
    }
}

/// Result of single-linkage fix clustering. Cluster ids are dense and ordered
/// by the first member's position in the fix map.
#[derive(Debug, Clone, PartialEq)]
pub struct FixClusters {
    pub assignment: IndexMap<String, usize>,
    pub centroids: Vec<Point>,
    pub members: Vec<Vec<String>>,
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), rank: vec![0; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            Ordering::Less => self.parent[ra] = rb,
            Ordering::Greater => self.parent[rb] = ra,
            Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

/// Groups fixes by the transitive closure of "closer than `cluster_radius`".
///
/// Centroids of distinct clusters may end up closer than the radius, since
/// single linkage only bounds member-to-member distances.
pub fn cluster_fixes(sector: &ContinuousSector, cfg: &EncoderConfig) -> FixClusters {
    let names: Vec<&String> = sector.fixes.keys().collect();
    let points: Vec<Point> = sector.fixes.values().copied().collect();
    let mut sets = DisjointSet::new(points.len());
    let threshold = cfg.cluster_radius - geometry::EPS;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            if dist(points[i], points[j]) < threshold {
                sets.union(i, j);
            }
        }
    }
    let mut root_to_cluster: HashMap<usize, usize> = HashMap::new();
    let mut members: Vec<Vec<String>> = Vec::new();
    let mut member_points: Vec<Vec<Point>> = Vec::new();
    let mut assignment = IndexMap::new();
    for (i, name) in names.iter().enumerate() {
        let root = sets.find(i);
        let cluster = *root_to_cluster.entry(root).or_insert_with(|| {
            members.push(Vec::new());
            member_points.push(Vec::new());
            members.len() - 1
        });
        members[cluster].push((*name).clone());
        member_points[cluster].push(points[i]);
        assignment.insert((*name).clone(), cluster);
    }
    let centroids = member_points.iter().map(|pts| geometry::centroid(pts)).collect();
    FixClusters { assignment, centroids, members }
}

/// Indices of the points kept by [`simplify_route`].
pub fn simplify_indices(points: &[Point], pinned: &[bool], cfg: &EncoderConfig) -> Vec<usize> {
    let n = points.len();
    if n <= 2 {
        return (0..n).collect();
    }
    let original = polyline_length(points);
    let mut kept: Vec<usize> = (0..n).collect();
    let mut frozen = vec![false; n];
    loop {
        let mut best: Option<(usize, f64)> = None;
        for k in 1..kept.len() - 1 {
            let idx = kept[k];
            if pinned.get(idx).copied().unwrap_or(false) || frozen[idx] {
                continue;
            }
            let angle = geometry::turn_angle_deg(points[kept[k - 1]], points[idx], points[kept[k + 1]]);
            if angle < cfg.kink_tolerance && best.is_none_or(|(_, a)| angle < a) {
                best = Some((k, angle));
            }
        }
        let Some((k, _)) = best else { break };
        let (prev, cur, next) = (points[kept[k - 1]], points[kept[k]], points[kept[k + 1]]);
        let current: f64 = kept.windows(2).map(|w| dist(points[w[0]], points[w[1]])).sum();
        let shortened = current - dist(prev, cur) - dist(cur, next) + dist(prev, next);
        if original > 0.0 && (original - shortened).abs() / original > cfg.max_length_change {
            frozen[kept[k]] = true;
            continue;
        }
        kept.remove(k);
    }
    kept
}

/// Drops interior points whose turn angle is below the kink tolerance.
/// Endpoints and points flagged in `pinned` (clusters shared with other
/// routes) are always kept, and the total length never changes by more than
/// `cfg.max_length_change` relative to the input.
pub fn simplify_route(points: &[Point], pinned: &[bool], cfg: &EncoderConfig) -> Vec<Point> {
    simplify_indices(points, pinned, cfg).into_iter().map(|i| points[i]).collect()
}

pub fn count_intersections(graph: &SectorGraph) -> usize {
    graph.count_intersections()
}

struct VertexPool {
    points: Vec<Point>,
    snap: f64,
}

impl VertexPool {
    fn push(&mut self, p: Point) -> usize {
        self.points.push(p);
        self.points.len() - 1
    }

    /// Reuses an existing vertex within the snap radius, else adds `p`.
    fn snap_or_push(&mut self, p: Point) -> usize {
        let nearest = self
            .points
            .iter()
            .enumerate()
            .map(|(i, q)| (i, dist(p, *q)))
            .filter(|(_, d)| *d < self.snap)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match nearest {
            Some((i, _)) => i,
            None => self.push(p),
        }
    }
}

#[derive(Clone, Copy)]
struct Leg {
    route: usize,
    index: usize,
    from: usize,
    to: usize,
}

pub fn encode_sector(sector: &ContinuousSector, cfg: &EncoderConfig) -> Result<SectorGraph, EncodeError> {
    cfg.validate()?;
    sector.validate()?;
    let clusters = cluster_fixes(sector, cfg);
    let route_ids: Vec<&RouteId> = sector.routes.keys().collect();

    // Cluster sequence per route, consecutive repeats collapsed.
    let mut cluster_routes: Vec<Vec<usize>> = Vec::with_capacity(route_ids.len());
    for (route, fixes) in &sector.routes {
        let mut seq: Vec<usize> = Vec::with_capacity(fixes.len());
        for fix in fixes {
            let c = clusters.assignment[fix.as_str()];
            if seq.last() != Some(&c) {
                seq.push(c);
            }
        }
        if seq.len() < 2 {
            return Err(EncodeError::DegenerateRoute { route: route.clone(), length: 0.0 });
        }
        cluster_routes.push(seq);
    }

    let mut routes_per_cluster = vec![0usize; clusters.centroids.len()];
    for seq in &cluster_routes {
        let mut seen = seq.clone();
        seen.sort_unstable();
        seen.dedup();
        for c in seen {
            routes_per_cluster[c] += 1;
        }
    }

    let mut pool = VertexPool { points: Vec::new(), snap: cfg.cluster_radius / 2.0 };
    let mut cluster_vertex: HashMap<usize, usize> = HashMap::new();
    let mut vertex_routes: Vec<Vec<usize>> = Vec::with_capacity(cluster_routes.len());
    for (r, seq) in cluster_routes.iter().enumerate() {
        let points: Vec<Point> = seq.iter().map(|&c| clusters.centroids[c]).collect();
        let pinned: Vec<bool> = seq.iter().map(|&c| routes_per_cluster[c] >= 2).collect();
        let kept = simplify_indices(&points, &pinned, cfg);
        let simplified: Vec<Point> = kept.iter().map(|&i| points[i]).collect();
        let length = polyline_length(&simplified);
        if length < cfg.spacing {
            return Err(EncodeError::DegenerateRoute { route: route_ids[r].clone(), length });
        }
        let chain = kept
            .iter()
            .map(|&i| *cluster_vertex.entry(seq[i]).or_insert_with(|| pool.push(clusters.centroids[seq[i]])))
            .collect();
        vertex_routes.push(chain);
    }

    let legs: Vec<Leg> = vertex_routes
        .iter()
        .enumerate()
        .flat_map(|(route, chain)| {
            chain.windows(2).enumerate().map(move |(index, w)| Leg { route, index, from: w[0], to: w[1] })
        })
        .collect();
    let mut splits: Vec<Vec<(f64, usize)>> = vec![Vec::new(); legs.len()];
    planarize(&legs, &mut pool, &mut splits, cfg);

    // Refined vertex chain per route.
    let mut leg_cursor = 0;
    let mut refined: Vec<Vec<usize>> = Vec::with_capacity(vertex_routes.len());
    for chain in &vertex_routes {
        let mut out = vec![chain[0]];
        for _ in 0..chain.len() - 1 {
            let leg = legs[leg_cursor];
            let mut inner = std::mem::take(&mut splits[leg_cursor]);
            inner.sort_by(|a, b| a.0.total_cmp(&b.0));
            for (_, v) in inner {
                if out.last() != Some(&v) {
                    out.push(v);
                }
            }
            if out.last() != Some(&leg.to) {
                out.push(leg.to);
            }
            leg_cursor += 1;
        }
        refined.push(out);
    }

    // Interpolate every undirected vertex pair once so shared legs share nodes.
    let mut node_points: Vec<Point> = pool.points.clone();
    let mut node_leg: Vec<Option<usize>> = vec![None; node_points.len()];
    let mut sub_legs: IndexMap<(usize, usize), Vec<usize>> = IndexMap::new();
    for chain in &refined {
        for w in chain.windows(2) {
            let key = (w[0].min(w[1]), w[0].max(w[1]));
            if sub_legs.contains_key(&key) {
                continue;
            }
            let (a, b) = (pool.points[key.0], pool.points[key.1]);
            let pieces = ((dist(a, b) / cfg.spacing).round() as usize).max(1);
            let leg_index = sub_legs.len();
            let interior: Vec<usize> = (1..pieces)
                .map(|k| {
                    node_points.push(lerp(a, b, k as f64 / pieces as f64));
                    node_leg.push(Some(leg_index));
                    node_points.len() - 1
                })
                .collect();
            sub_legs.insert(key, interior);
        }
    }
    let mut node_routes: Vec<Vec<usize>> = refined
        .iter()
        .map(|chain| {
            let mut out = vec![chain[0]];
            for w in chain.windows(2) {
                let key = (w[0].min(w[1]), w[0].max(w[1]));
                let interior = &sub_legs[&key];
                if w[0] < w[1] {
                    out.extend(interior.iter().copied());
                } else {
                    out.extend(interior.iter().rev().copied());
                }
                out.push(w[1]);
            }
            out
        })
        .collect();

    let representative = merge_close_interpolated(&node_points, &node_leg, &node_routes, cfg.cluster_radius / 2.0);
    let mut merged_points = node_points.clone();
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, &rep) in representative.iter().enumerate() {
        groups.entry(rep).or_default().push(i);
    }
    for (rep, members) in &groups {
        if members.len() > 1 {
            let pts: Vec<Point> = members.iter().map(|&m| node_points[m]).collect();
            merged_points[*rep] = geometry::centroid(&pts);
        }
    }
    for route in &mut node_routes {
        for n in route.iter_mut() {
            *n = representative[*n];
        }
        route.dedup();
    }

    // Dense ids ordered by (x, y, creation order) over the nodes in use.
    let mut used: Vec<usize> = node_routes.iter().flatten().copied().collect();
    used.sort_unstable();
    used.dedup();
    used.sort_by(|&a, &b| {
        let (pa, pb) = (merged_points[a], merged_points[b]);
        pa.x.total_cmp(&pb.x).then(pa.y.total_cmp(&pb.y)).then(a.cmp(&b))
    });
    let id_of: HashMap<usize, NodeId> = used.iter().enumerate().map(|(k, &n)| (n, NodeId::dense(k))).collect();

    let mut graph = SectorGraph::new(cfg.spacing);
    for &n in &used {
        graph.nodes.insert(id_of[&n].clone(), merged_points[n]);
    }
    for (r, route) in node_routes.iter().enumerate() {
        graph.routes.insert(route_ids[r].clone(), route.iter().map(|n| id_of[n].clone()).collect());
    }
    if let Err(e) = graph.validate() {
        log::warn!("encoded graph failed validation: {e}");
        let route = route_ids[0].clone();
        return Err(EncodeError::NonPlanarizable { first: route.clone(), second: route });
    }
    if let Some(conflict) = off_node_crossings(&graph).into_iter().next() {
        return Err(EncodeError::NonPlanarizable {
            first: conflict.first_routes[0].clone(),
            second: conflict.second_routes[0].clone(),
        });
    }
    Ok(graph)
}

/// Registers, for every pair of legs, the vertices at which each must be
/// split: vertices of one leg lying on the other, and proper crossings.
fn planarize(legs: &[Leg], pool: &mut VertexPool, splits: &mut [Vec<(f64, usize)>], cfg: &EncoderConfig) {
    let tol = cfg.collinear_tolerance.max(geometry::EPS);
    let add_split = |splits: &mut [Vec<(f64, usize)>], pool: &VertexPool, leg: usize, v: usize| {
        let Leg { from, to, .. } = legs[leg];
        if v == from || v == to || splits[leg].iter().any(|&(_, w)| w == v) {
            return;
        }
        let t = project_param(pool.points[v], pool.points[from], pool.points[to]).clamp(0.0, 1.0);
        splits[leg].push((t, v));
    };
    let interior_on = |pool: &VertexPool, v: usize, leg: &Leg| {
        let (a, b, p) = (pool.points[leg.from], pool.points[leg.to], pool.points[v]);
        let t = project_param(p, a, b);
        let margin = geometry::EPS / dist(a, b).max(geometry::EPS);
        t > margin && t < 1.0 - margin && point_segment_distance(p, a, b) < tol
    };

    for i in 0..legs.len() {
        for j in i + 1..legs.len() {
            let (l1, l2) = (legs[i], legs[j]);
            if (l1.from.min(l1.to), l1.from.max(l1.to)) == (l2.from.min(l2.to), l2.from.max(l2.to)) {
                continue;
            }
            let adjacent = l1.route == l2.route && l1.index.abs_diff(l2.index) == 1;
            let mut touched = false;
            for v in [l2.from, l2.to] {
                if v != l1.from && v != l1.to && interior_on(pool, v, &l1) {
                    add_split(splits, pool, i, v);
                    touched = true;
                }
            }
            for v in [l1.from, l1.to] {
                if v != l2.from && v != l2.to && interior_on(pool, v, &l2) {
                    add_split(splits, pool, j, v);
                    touched = true;
                }
            }
            if adjacent || touched {
                continue;
            }
            let (p1, p2, q1, q2) = (pool.points[l1.from], pool.points[l1.to], pool.points[l2.from], pool.points[l2.to]);
            let Some((x, _, _)) = geometry::segment_intersection(p1, p2, q1, q2) else {
                continue;
            };
            let shares_endpoint = [l1.from, l1.to].iter().any(|v| *v == l2.from || *v == l2.to);
            let near_endpoint = [l1.from, l1.to, l2.from, l2.to]
                .into_iter()
                .map(|v| (v, dist(x, pool.points[v])))
                .filter(|(_, d)| *d < pool.snap)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            if shares_endpoint && near_endpoint.is_some_and(|(_, d)| d < geometry::EPS) {
                continue;
            }
            let v = match near_endpoint {
                Some((v, _)) => v,
                None => pool.snap_or_push(x),
            };
            add_split(splits, pool, i, v);
            add_split(splits, pool, j, v);
        }
    }
}

/// Representative node for every node after merging interpolated nodes of
/// different sub-legs (and different routes) lying within `radius`.
fn merge_close_interpolated(
    points: &[Point],
    node_leg: &[Option<usize>],
    routes: &[Vec<usize>],
    radius: f64,
) -> Vec<usize> {
    let mut node_route_sets: Vec<Vec<usize>> = vec![Vec::new(); points.len()];
    for (r, route) in routes.iter().enumerate() {
        for &n in route {
            if !node_route_sets[n].contains(&r) {
                node_route_sets[n].push(r);
            }
        }
    }
    let interpolated: Vec<usize> = (0..points.len()).filter(|&i| node_leg[i].is_some()).collect();
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (k, &a) in interpolated.iter().enumerate() {
        for &b in &interpolated[k + 1..] {
            let d = dist(points[a], points[b]);
            if d < radius && node_leg[a] != node_leg[b] {
                candidates.push((d, a, b));
            }
        }
    }
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));

    let mut rep: Vec<usize> = (0..points.len()).collect();
    let mut group_routes: Vec<Vec<usize>> = node_route_sets;
    let mut group_legs: Vec<Vec<usize>> = node_leg.iter().map(|l| l.iter().copied().collect()).collect();
    fn root(rep: &mut [usize], mut x: usize) -> usize {
        while rep[x] != x {
            rep[x] = rep[rep[x]];
            x = rep[x];
        }
        x
    }
    for (_, a, b) in candidates {
        let (ra, rb) = (root(&mut rep, a), root(&mut rep, b));
        if ra == rb {
            continue;
        }
        let share_route = group_routes[ra].iter().any(|r| group_routes[rb].contains(r));
        let share_leg = group_legs[ra].iter().any(|l| group_legs[rb].contains(l));
        if share_route || share_leg {
            continue;
        }
        let (keep, drop) = (ra.min(rb), ra.max(rb));
        rep[drop] = keep;
        let moved_routes = std::mem::take(&mut group_routes[drop]);
        group_routes[keep].extend(moved_routes);
        let moved_legs = std::mem::take(&mut group_legs[drop]);
        group_legs[keep].extend(moved_legs);
    }
    (0..points.len()).map(|i| root(&mut rep, i)).collect()
}
