//! Planar segment geometry used by the encoder, the generator and the
//! planarity scan.

use std::collections::BTreeMap;

use crate::model::{NodeId, Point, RouteId, SectorGraph};

/// Absolute tolerance (nmi) for treating two points as coincident.
pub const EPS: f64 = 1e-6;

pub fn sub(a: Point, b: Point) -> Point {
    Point::new(a.x - b.x, a.y - b.y)
}

pub fn dot(a: Point, b: Point) -> f64 {
    a.x * b.x + a.y * b.y
}

pub fn cross(a: Point, b: Point) -> f64 {
    a.x * b.y - a.y * b.x
}

pub fn norm(a: Point) -> f64 {
    a.x.hypot(a.y)
}

pub fn dist(a: Point, b: Point) -> f64 {
    norm(sub(a, b))
}

pub fn lerp(a: Point, b: Point, t: f64) -> Point {
    Point::new(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t)
}

pub fn centroid(points: &[Point]) -> Point {
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
    Point::new(sx / n, sy / n)
}

/// Unsigned angle between two vectors in degrees, 0 for a zero vector.
pub fn angle_between_deg(u: Point, v: Point) -> f64 {
    let (nu, nv) = (norm(u), norm(v));
    if nu < EPS || nv < EPS {
        return 0.0;
    }
    (dot(u, v) / (nu * nv)).clamp(-1.0, 1.0).acos().to_degrees()
}

/// Heading change at `cur` when travelling prev -> cur -> next, in degrees.
pub fn turn_angle_deg(prev: Point, cur: Point, next: Point) -> f64 {
    angle_between_deg(sub(cur, prev), sub(next, cur))
}

pub fn polyline_length(points: &[Point]) -> f64 {
    points.windows(2).map(|w| dist(w[0], w[1])).sum()
}

/// Parameter of the orthogonal projection of `p` onto the line through a-b.
pub fn project_param(p: Point, a: Point, b: Point) -> f64 {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    if len2 < EPS * EPS {
        return 0.0;
    }
    dot(sub(p, a), ab) / len2
}

pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let t = project_param(p, a, b).clamp(0.0, 1.0);
    dist(p, lerp(a, b, t))
}

/// Perpendicular distance from `p` to the infinite line through a-b.
pub fn point_line_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = sub(b, a);
    let len = norm(ab);
    if len < EPS {
        return dist(p, a);
    }
    (cross(ab, sub(p, a)) / len).abs()
}

/// Intersection of two non-parallel segments, returned with the parameters
/// along each (both in `[0, 1]` up to `EPS`). Parallel segments return `None`;
/// collinear overlap is handled separately by callers.
pub fn segment_intersection(p1: Point, p2: Point, q1: Point, q2: Point) -> Option<(Point, f64, f64)> {
    let r = sub(p2, p1);
    let s = sub(q2, q1);
    let denom = cross(r, s);
    let scale = norm(r) * norm(s);
    if scale < EPS || denom.abs() <= 1e-9 * scale {
        return None;
    }
    let qp = sub(q1, p1);
    let t = cross(qp, s) / denom;
    let u = cross(qp, r) / denom;
    let tol_t = EPS / norm(r);
    let tol_u = EPS / norm(s);
    if t < -tol_t || t > 1.0 + tol_t || u < -tol_u || u > 1.0 + tol_u {
        return None;
    }
    let t = t.clamp(0.0, 1.0);
    Some((lerp(p1, p2, t), t, u.clamp(0.0, 1.0)))
}

/// Minimum distance between two closed segments.
pub fn segment_distance(p1: Point, p2: Point, q1: Point, q2: Point) -> f64 {
    if segment_intersection(p1, p2, q1, q2).is_some() {
        return 0.0;
    }
    point_segment_distance(p1, q1, q2)
        .min(point_segment_distance(p2, q1, q2))
        .min(point_segment_distance(q1, p1, p2))
        .min(point_segment_distance(q2, p1, p2))
}

/// Two edges of a graph that touch somewhere other than a shared node.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeConflict {
    pub first: (NodeId, NodeId),
    pub first_routes: Vec<RouteId>,
    pub second: (NodeId, NodeId),
    pub second_routes: Vec<RouteId>,
}

/// Brute-force O(E^2) planarity scan over the undirected edge set. Edges
/// sharing a node conflict only if one runs along the other past that node;
/// edges sharing no node conflict if they touch at all. Edges without
/// positions are skipped.
pub fn off_node_crossings(graph: &SectorGraph) -> Vec<EdgeConflict> {
    let mut edges: BTreeMap<(usize, usize), Vec<RouteId>> = BTreeMap::new();
    for (route, a, b) in graph.edges() {
        let (Some(ia), Some(ib)) = (graph.nodes.get_index_of(a), graph.nodes.get_index_of(b)) else {
            continue;
        };
        let key = (ia.min(ib), ia.max(ib));
        let routes = edges.entry(key).or_default();
        if !routes.contains(route) {
            routes.push(route.clone());
        }
    }
    let edges: Vec<((usize, usize), Vec<RouteId>)> = edges.into_iter().collect();
    let pos = |i: usize| graph.nodes[i];
    let name = |i: usize| graph.nodes.get_index(i).map(|(k, _)| k.clone()).unwrap_or_else(|| NodeId::dense(i));

    let mut out = Vec::new();
    for (i, ((a, b), routes_1)) in edges.iter().enumerate() {
        for ((c, d), routes_2) in &edges[i + 1..] {
            let (pa, pb, pc, pd) = (pos(*a), pos(*b), pos(*c), pos(*d));
            let shared = [a == c, a == d, b == c, b == d].iter().filter(|&&s| s).count();
            let conflict = match shared {
                0 => segment_distance(pa, pb, pc, pd) < EPS,
                1 => {
                    // The non-shared endpoint of either edge lying on the other edge.
                    let (other_1, other_2) = if a == c || a == d { (pb, if a == c { pd } else { pc }) } else { (pa, if b == c { pd } else { pc }) };
                    point_segment_distance(other_1, pc, pd) < EPS || point_segment_distance(other_2, pa, pb) < EPS
                }
                _ => false,
            };
            if conflict {
                out.push(EdgeConflict {
                    first: (name(*a), name(*b)),
                    first_routes: routes_1.clone(),
                    second: (name(*c), name(*d)),
                    second_routes: routes_2.clone(),
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> Point {
        Point::new(x, y)
    }

    #[test]
    fn crossing_segments() {
        let (x, t, u) = segment_intersection(p(0.0, 0.0), p(2.0, 2.0), p(0.0, 2.0), p(2.0, 0.0)).unwrap();
        assert!(dist(x, p(1.0, 1.0)) < 1e-12);
        assert!((t - 0.5).abs() < 1e-12 && (u - 0.5).abs() < 1e-12);
        assert!(segment_intersection(p(0.0, 0.0), p(1.0, 0.0), p(0.0, 1.0), p(1.0, 1.0)).is_none());
        assert!(segment_intersection(p(0.0, 0.0), p(1.0, 0.0), p(2.0, -1.0), p(2.0, 1.0)).is_none());
        // Touching at an endpoint counts.
        assert!(segment_intersection(p(0.0, 0.0), p(1.0, 0.0), p(1.0, 0.0), p(1.0, 1.0)).is_some());
    }

    #[test]
    fn turn_angles() {
        assert!(turn_angle_deg(p(0.0, 0.0), p(1.0, 0.0), p(2.0, 0.0)).abs() < 1e-9);
        assert!((turn_angle_deg(p(0.0, 0.0), p(1.0, 0.0), p(1.0, 1.0)) - 90.0).abs() < 1e-9);
        assert!((turn_angle_deg(p(0.0, 0.0), p(1.0, 0.0), p(0.0, 0.0)) - 180.0).abs() < 1e-9);
    }

    fn graph(nodes: &[(f64, f64)], routes: &[&[usize]]) -> SectorGraph {
        let mut g = SectorGraph::default();
        for (i, &(x, y)) in nodes.iter().enumerate() {
            g.nodes.insert(NodeId::dense(i), p(x, y));
        }
        for (r, route) in routes.iter().enumerate() {
            g.routes.insert(RouteId(format!("R{}", r + 1)), route.iter().map(|&i| NodeId::dense(i)).collect());
        }
        g
    }

    #[test]
    fn planarity_scan() {
        // Plus shape meeting at a node.
        let g = graph(&[(0.0, 20.0), (20.0, 20.0), (40.0, 20.0), (20.0, 0.0), (20.0, 40.0)], &[&[0, 1, 2], &[3, 1, 4]]);
        assert!(off_node_crossings(&g).is_empty());
        // Same shape without the shared node.
        let g = graph(&[(0.0, 20.0), (40.0, 20.0), (20.0, 0.0), (20.0, 40.0)], &[&[0, 1], &[2, 3]]);
        assert_eq!(off_node_crossings(&g).len(), 1);
        // T-junction: a node of one route sits on the other's edge interior.
        let g = graph(&[(0.0, 0.0), (40.0, 0.0), (20.0, 0.0), (20.0, 20.0)], &[&[0, 1], &[2, 3]]);
        assert_eq!(off_node_crossings(&g).len(), 1);
        // Shared edge traversed in both directions is fine.
        let g = graph(&[(0.0, 0.0), (20.0, 0.0)], &[&[0, 1], &[1, 0]]);
        assert!(off_node_crossings(&g).is_empty());
        // Collinear overlap past a shared node.
        let g = graph(&[(0.0, 0.0), (40.0, 0.0), (20.0, 0.0)], &[&[0, 1], &[0, 2]]);
        assert_eq!(off_node_crossings(&g).len(), 1);
        // Lattice X in one cell.
        let g = graph(&[(0.0, 0.0), (20.0, 20.0), (20.0, 0.0), (0.0, 20.0)], &[&[0, 1], &[2, 3]]);
        assert_eq!(off_node_crossings(&g).len(), 1);
    }
}
