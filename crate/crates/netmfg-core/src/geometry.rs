//! Metric networks: vertices, oriented edges, network points and geodesic
//! distance.
//!
//! A junction (one vertex, `N` semi-infinite edges) is the special case
//! produced by [`Network::junction`]. General networks carry finite edges
//! oriented from the lower to the higher vertex index; semi-infinite edges
//! are oriented away from their single endpoint.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::Result;

/// Index of a vertex in a [`Network`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexId(pub usize);

/// Index of an edge in a [`Network`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub usize);

/// An oriented edge. `to == None` marks a semi-infinite edge starting at
/// `from`; such edges have `length == f64::INFINITY`.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub from: VertexId,
    pub to: Option<VertexId>,
    pub length: f64,
}

impl Edge {
    pub fn is_finite(&self) -> bool {
        self.to.is_some()
    }
}

/// Edge description used when building a [`Network`]. Finite edges may list
/// their endpoints in any order; construction normalizes the orientation.
#[derive(Debug, Clone)]
pub struct EdgeSpec {
    pub from: usize,
    pub to: Option<usize>,
    pub length: f64,
}

/// A point of the network: either a vertex or an interior position on an
/// edge given by its arc coordinate.
///
/// The canonical form maps arc coordinates `0` and `length` to the vertex
/// form; all comparisons assume canonical points (see
/// [`Network::canonicalize`]).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NetPoint {
    Vertex(VertexId),
    OnEdge { edge: EdgeId, s: f64 },
}

impl NetPoint {
    pub fn vertex(v: usize) -> Self {
        NetPoint::Vertex(VertexId(v))
    }

    pub fn on_edge(edge: usize, s: f64) -> Self {
        NetPoint::OnEdge {
            edge: EdgeId(edge),
            s,
        }
    }

    pub fn as_vertex(&self) -> Option<VertexId> {
        match self {
            NetPoint::Vertex(v) => Some(*v),
            NetPoint::OnEdge { .. } => None,
        }
    }
}

/// A connected metric network.
#[derive(Debug, Clone)]
pub struct Network {
    edges: Vec<Edge>,
    adjacency: Vec<Vec<EdgeId>>,
    truncation: f64,
    /// All-pairs shortest path lengths between vertices.
    vertex_dist: Vec<Vec<f64>>,
}

impl Network {
    /// Builds the single-vertex junction with `n` semi-infinite edges.
    pub fn junction(n: usize, truncation: f64) -> Result<Self> {
        if n < 2 {
            return Err(CoreError::InvalidNetwork(String::from(
                "a junction needs at least two edges",
            )));
        }
        let edges = (0..n)
            .map(|_| EdgeSpec {
                from: 0,
                to: None,
                length: f64::INFINITY,
            })
            .collect();
        Self::new(1, edges, truncation)
    }

    /// Builds a general network and validates its structural invariants.
    pub fn new(n_vertices: usize, specs: Vec<EdgeSpec>, truncation: f64) -> Result<Self> {
        if n_vertices == 0 {
            return Err(CoreError::InvalidNetwork(String::from("no vertices")));
        }
        let mut edges = Vec::with_capacity(specs.len());
        let mut has_semi_infinite = false;
        for (i, spec) in specs.iter().enumerate() {
            let check_vertex = |v: usize| -> Result<()> {
                if v >= n_vertices {
                    Err(CoreError::InvalidNetwork(format!(
                        "edge {i} references vertex {v} out of range"
                    )))
                } else {
                    Ok(())
                }
            };
            check_vertex(spec.from)?;
            match spec.to {
                Some(to) => {
                    check_vertex(to)?;
                    if to == spec.from {
                        return Err(CoreError::InvalidNetwork(format!(
                            "edge {i} is a self-loop"
                        )));
                    }
                    if !(spec.length.is_finite() && spec.length > 0.0) {
                        return Err(CoreError::InvalidNetwork(format!(
                            "edge {i} must have a positive finite length"
                        )));
                    }
                    // Orient from the lower to the higher vertex index.
                    let (a, b) = if spec.from < to {
                        (spec.from, to)
                    } else {
                        (to, spec.from)
                    };
                    edges.push(Edge {
                        from: VertexId(a),
                        to: Some(VertexId(b)),
                        length: spec.length,
                    });
                }
                None => {
                    if spec.length.is_finite() {
                        return Err(CoreError::InvalidNetwork(format!(
                            "edge {i} is semi-infinite but has a finite length"
                        )));
                    }
                    has_semi_infinite = true;
                    edges.push(Edge {
                        from: VertexId(spec.from),
                        to: None,
                        length: f64::INFINITY,
                    });
                }
            }
        }
        if has_semi_infinite && !(truncation.is_finite() && truncation > 0.0) {
            return Err(CoreError::InvalidNetwork(String::from(
                "semi-infinite edges require a positive finite truncation radius",
            )));
        }
        // Distinct edges may share at most one vertex.
        for i in 0..edges.len() {
            for j in (i + 1)..edges.len() {
                if let (Some(ti), Some(tj)) = (edges[i].to, edges[j].to) {
                    if edges[i].from == edges[j].from && ti == tj {
                        return Err(CoreError::InvalidNetwork(format!(
                            "edges {i} and {j} share two vertices"
                        )));
                    }
                }
            }
        }
        let mut adjacency = vec![Vec::new(); n_vertices];
        for (i, e) in edges.iter().enumerate() {
            adjacency[e.from.0].push(EdgeId(i));
            if let Some(to) = e.to {
                adjacency[to.0].push(EdgeId(i));
            }
        }
        // Connectivity over finite edges (semi-infinite edges dangle).
        let mut seen = vec![false; n_vertices];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &EdgeId(e) in &adjacency[v] {
                if let Some(to) = edges[e].to {
                    let other = if edges[e].from.0 == v {
                        to.0
                    } else {
                        edges[e].from.0
                    };
                    if !seen[other] {
                        seen[other] = true;
                        stack.push(other);
                    }
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(CoreError::InvalidNetwork(String::from(
                "the network is not connected",
            )));
        }
        let vertex_dist = all_pairs_shortest(n_vertices, &edges);
        Ok(Network {
            edges,
            adjacency,
            truncation,
            vertex_dist,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edge(&self, e: EdgeId) -> &Edge {
        &self.edges[e.0]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Edges incident to a vertex, in increasing edge index order.
    pub fn incident(&self, v: VertexId) -> &[EdgeId] {
        &self.adjacency[v.0]
    }

    /// Truncation radius used when gridding semi-infinite edges.
    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    /// Edge length capped at the truncation radius for semi-infinite edges.
    pub fn effective_length(&self, e: EdgeId) -> f64 {
        let edge = &self.edges[e.0];
        if edge.is_finite() {
            self.length(e)
        } else {
            self.truncation
        }
    }

    pub fn length(&self, e: EdgeId) -> f64 {
        self.edges[e.0].length
    }

    /// `true` when the network has no cycles (junctions and trees).
    pub fn is_tree(&self) -> bool {
        let finite = self.edges.iter().filter(|e| e.is_finite()).count();
        finite == self.vertex_count() - 1
    }

    /// Arc coordinate of vertex `v` on edge `e`, if incident.
    pub fn vertex_coord_on(&self, e: EdgeId, v: VertexId) -> Option<f64> {
        let edge = &self.edges[e.0];
        if edge.from == v {
            Some(0.0)
        } else if edge.to == Some(v) {
            Some(edge.length)
        } else {
            None
        }
    }

    fn check_edge(&self, e: EdgeId) -> Result<()> {
        if e.0 >= self.edges.len() {
            Err(CoreError::UnknownId(format!("edge {}", e.0)))
        } else {
            Ok(())
        }
    }

    fn check_vertex(&self, v: VertexId) -> Result<()> {
        if v.0 >= self.vertex_count() {
            Err(CoreError::UnknownId(format!("vertex {}", v.0)))
        } else {
            Ok(())
        }
    }

    /// Maps arc coordinates `0` and `length` to the vertex form. Idempotent.
    pub fn canonicalize(&self, p: NetPoint) -> Result<NetPoint> {
        match p {
            NetPoint::Vertex(v) => {
                self.check_vertex(v)?;
                Ok(p)
            }
            NetPoint::OnEdge { edge, s } => {
                self.check_edge(edge)?;
                let e = &self.edges[edge.0];
                if !(s >= 0.0) || s > e.length || !s.is_finite() {
                    return Err(CoreError::PointOffNetwork(format!(
                        "coordinate {s} outside edge {} of length {}",
                        edge.0, e.length
                    )));
                }
                if s == 0.0 {
                    Ok(NetPoint::Vertex(e.from))
                } else if s == e.length {
                    Ok(NetPoint::Vertex(e.to.expect("finite edge")))
                } else {
                    Ok(p)
                }
            }
        }
    }

    /// Compares two points through their canonical forms.
    pub fn points_equal(&self, a: NetPoint, b: NetPoint) -> bool {
        match (self.canonicalize(a), self.canonicalize(b)) {
            (Ok(ca), Ok(cb)) => ca == cb,
            _ => false,
        }
    }

    /// Shortest-path distance along the network.
    pub fn geodesic_distance(&self, a: NetPoint, b: NetPoint) -> Result<f64> {
        let a = self.canonicalize(a)?;
        let b = self.canonicalize(b)?;
        match (a, b) {
            (NetPoint::Vertex(va), NetPoint::Vertex(vb)) => Ok(self.vertex_dist[va.0][vb.0]),
            (NetPoint::Vertex(v), NetPoint::OnEdge { edge, s })
            | (NetPoint::OnEdge { edge, s }, NetPoint::Vertex(v)) => {
                let mut best = f64::INFINITY;
                for (ep, d_point) in self.endpoint_offsets(edge, s) {
                    best = best.min(d_point + self.vertex_dist[ep.0][v.0]);
                }
                Ok(best)
            }
            (
                NetPoint::OnEdge { edge: ea, s: sa },
                NetPoint::OnEdge { edge: eb, s: sb },
            ) => {
                let mut best = if ea == eb {
                    (sa - sb).abs()
                } else {
                    f64::INFINITY
                };
                // A path through vertices may be shorter even on a shared
                // edge when the network has cycles. Summation order is
                // value-canonical so the distance is exactly symmetric.
                for (pa, da) in self.endpoint_offsets(ea, sa) {
                    for (pb, db) in self.endpoint_offsets(eb, sb) {
                        let (lo, hi) = if da <= db { (da, db) } else { (db, da) };
                        best = best.min(lo + hi + self.vertex_dist[pa.0][pb.0]);
                    }
                }
                Ok(best)
            }
        }
    }

    /// Endpoints of `edge` reachable from arc coordinate `s`, with the arc
    /// distance from `s` to each.
    fn endpoint_offsets(&self, edge: EdgeId, s: f64) -> Vec<(VertexId, f64)> {
        let e = &self.edges[edge.0];
        let mut out = Vec::with_capacity(2);
        out.push((e.from, s));
        if let Some(to) = e.to {
            out.push((to, e.length - s));
        }
        out
    }
}

fn all_pairs_shortest(n: usize, edges: &[Edge]) -> Vec<Vec<f64>> {
    let mut dist = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in dist.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for e in edges {
        if let Some(to) = e.to {
            let (a, b) = (e.from.0, to.0);
            if e.length < dist[a][b] {
                dist[a][b] = e.length;
                dist[b][a] = e.length;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = dist[i][k] + dist[k][j];
                if via < dist[i][j] {
                    dist[i][j] = via;
                }
            }
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn junction_distance_two_cases() {
        let g = Network::junction(2, 10.0).unwrap();
        let a = NetPoint::on_edge(0, 2.0);
        let b = NetPoint::on_edge(1, 3.0);
        assert_eq!(g.geodesic_distance(a, b).unwrap(), 5.0);
        let c = NetPoint::on_edge(0, 0.5);
        assert_eq!(g.geodesic_distance(a, c).unwrap(), 1.5);
        let v = NetPoint::vertex(0);
        assert_eq!(g.geodesic_distance(v, v).unwrap(), 0.0);
    }

    #[test]
    fn path_graph_matches_dijkstra_oracle() {
        // 3 vertices, two unit edges: 0 -- 1 -- 2.
        let g = Network::new(
            3,
            vec![
                EdgeSpec {
                    from: 0,
                    to: Some(1),
                    length: 1.0,
                },
                EdgeSpec {
                    from: 1,
                    to: Some(2),
                    length: 1.0,
                },
            ],
            1.0,
        )
        .unwrap();
        let a = NetPoint::on_edge(0, 0.5);
        let b = NetPoint::on_edge(1, 0.5);
        let d = g.geodesic_distance(a, b).unwrap();
        assert!((d - 1.0).abs() < 1e-15);
        let oracle = discretized_dijkstra(&g, a, b, 64);
        assert!((d - oracle).abs() < 1e-12);
    }

    #[test]
    fn cycle_shortcut_beats_same_edge_path() {
        // Triangle with one long side: going around is shorter.
        let g = Network::new(
            3,
            vec![
                EdgeSpec {
                    from: 0,
                    to: Some(1),
                    length: 10.0,
                },
                EdgeSpec {
                    from: 1,
                    to: Some(2),
                    length: 1.0,
                },
                EdgeSpec {
                    from: 0,
                    to: Some(2),
                    length: 1.0,
                },
            ],
            1.0,
        )
        .unwrap();
        let a = NetPoint::on_edge(0, 0.5);
        let b = NetPoint::on_edge(0, 9.5);
        let d = g.geodesic_distance(a, b).unwrap();
        // 0.5 back to vertex 0, across (2), across (1), 0.5 in from vertex 1.
        assert!((d - 3.0).abs() < 1e-15);
        let oracle = discretized_dijkstra(&g, a, b, 200);
        assert!((d - oracle).abs() < 1e-9);
    }

    #[test]
    fn canonicalize_boundary_and_idempotence() {
        let g = Network::new(
            2,
            vec![EdgeSpec {
                from: 0,
                to: Some(1),
                length: 2.0,
            }],
            1.0,
        )
        .unwrap();
        assert_eq!(
            g.canonicalize(NetPoint::on_edge(0, 0.0)).unwrap(),
            NetPoint::vertex(0)
        );
        assert_eq!(
            g.canonicalize(NetPoint::on_edge(0, 2.0)).unwrap(),
            NetPoint::vertex(1)
        );
        assert_eq!(
            g.canonicalize(NetPoint::on_edge(0, 0.3)).unwrap(),
            NetPoint::on_edge(0, 0.3)
        );
        // Idempotence on a sweep of points.
        let j = Network::junction(3, 5.0).unwrap();
        for k in 0..1000 {
            let edge = k % 3;
            let s = (k as f64) * 0.004;
            let p = NetPoint::on_edge(edge, s);
            let c1 = j.canonicalize(p).unwrap();
            let c2 = j.canonicalize(c1).unwrap();
            assert_eq!(c1, c2);
        }
    }

    #[test]
    fn invalid_networks_are_rejected() {
        // Self loop.
        assert!(Network::new(
            1,
            vec![EdgeSpec {
                from: 0,
                to: Some(0),
                length: 1.0
            }],
            1.0
        )
        .is_err());
        // Parallel edges share two vertices.
        assert!(Network::new(
            2,
            vec![
                EdgeSpec {
                    from: 0,
                    to: Some(1),
                    length: 1.0
                },
                EdgeSpec {
                    from: 1,
                    to: Some(0),
                    length: 2.0
                },
            ],
            1.0
        )
        .is_err());
        // Disconnected.
        assert!(Network::new(
            4,
            vec![
                EdgeSpec {
                    from: 0,
                    to: Some(1),
                    length: 1.0
                },
                EdgeSpec {
                    from: 2,
                    to: Some(3),
                    length: 1.0
                },
            ],
            1.0
        )
        .is_err());
        // Semi-infinite edge without truncation radius.
        assert!(Network::junction(2, f64::INFINITY).is_err());
    }

    #[test]
    fn is_tree_detection() {
        assert!(Network::junction(4, 1.0).unwrap().is_tree());
        let cycle = Network::new(
            3,
            vec![
                EdgeSpec {
                    from: 0,
                    to: Some(1),
                    length: 1.0,
                },
                EdgeSpec {
                    from: 1,
                    to: Some(2),
                    length: 1.0,
                },
                EdgeSpec {
                    from: 0,
                    to: Some(2),
                    length: 1.0,
                },
            ],
            1.0,
        )
        .unwrap();
        assert!(!cycle.is_tree());
    }

    /// Independent oracle: Dijkstra over a dense discretization of the
    /// network, with `a` and `b` inserted as extra nodes.
    fn discretized_dijkstra(g: &Network, a: NetPoint, b: NetPoint, per_edge: usize) -> f64 {
        // Node layout: vertices, then per-edge interior samples, then a, b.
        let nv = g.vertex_count();
        let mut coords: Vec<(usize, f64)> = Vec::new(); // (edge, s) for extra nodes
        let mut edges_adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nv];
        let node_of = |coords: &mut Vec<(usize, f64)>,
                           edges_adj: &mut Vec<Vec<(usize, f64)>>,
                           e: usize,
                           s: f64|
         -> usize {
            coords.push((e, s));
            edges_adj.push(Vec::new());
            nv + coords.len() - 1
        };
        let mut per_edge_nodes: Vec<Vec<(f64, usize)>> = Vec::new();
        for (ei, e) in g.edges().iter().enumerate() {
            let len = g.effective_length(EdgeId(ei));
            let mut nodes: Vec<(f64, usize)> = vec![(0.0, e.from.0)];
            for k in 1..per_edge {
                let s = len * (k as f64) / (per_edge as f64);
                let id = node_of(&mut coords, &mut edges_adj, ei, s);
                nodes.push((s, id));
            }
            if let Some(to) = e.to {
                nodes.push((len, to.0));
            }
            per_edge_nodes.push(nodes);
        }
        let mut insert_point = |p: NetPoint| -> usize {
            match g.canonicalize(p).unwrap() {
                NetPoint::Vertex(v) => v.0,
                NetPoint::OnEdge { edge, s } => {
                    let id = node_of(&mut coords, &mut edges_adj, edge.0, s);
                    per_edge_nodes[edge.0].push((s, id));
                    id
                }
            }
        };
        let na = insert_point(a);
        let nb = insert_point(b);
        for nodes in per_edge_nodes.iter_mut() {
            nodes.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
            for w in nodes.windows(2) {
                let (s0, n0) = w[0];
                let (s1, n1) = w[1];
                let d = s1 - s0;
                edges_adj[n0].push((n1, d));
                edges_adj[n1].push((n0, d));
            }
        }
        // Dijkstra without a heap; the graphs are tiny.
        let n = edges_adj.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        dist[na] = 0.0;
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for i in 0..n {
                if !done[i] && dist[i] < best {
                    best = dist[i];
                    u = i;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            for &(v, w) in &edges_adj[u] {
                if dist[u] + w < dist[v] {
                    dist[v] = dist[u] + w;
                }
            }
        }
        dist[nb]
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn networks() -> Vec<Network> {
            vec![
                Network::junction(3, 4.0).unwrap(),
                Network::new(
                    3,
                    vec![
                        EdgeSpec {
                            from: 0,
                            to: Some(1),
                            length: 1.0,
                        },
                        EdgeSpec {
                            from: 1,
                            to: Some(2),
                            length: 2.0,
                        },
                    ],
                    1.0,
                )
                .unwrap(),
                Network::new(
                    3,
                    vec![
                        EdgeSpec {
                            from: 0,
                            to: Some(1),
                            length: 1.5,
                        },
                        EdgeSpec {
                            from: 1,
                            to: Some(2),
                            length: 1.0,
                        },
                        EdgeSpec {
                            from: 0,
                            to: Some(2),
                            length: 0.5,
                        },
                        EdgeSpec {
                            from: 1,
                            to: None,
                            length: f64::INFINITY,
                        },
                    ],
                    3.0,
                )
                .unwrap(),
            ]
        }

        fn point_on(g: &Network, edge_pick: usize, frac: f64) -> NetPoint {
            let e = EdgeId(edge_pick % g.edge_count());
            let len = g.effective_length(e);
            NetPoint::OnEdge {
                edge: e,
                s: frac * len,
            }
        }

        proptest! {
            #[test]
            fn metric_axioms(net_pick in 0usize..3, ea in 0usize..8, eb in 0usize..8,
                             ec in 0usize..8,
                             fa in 0.0f64..=1.0, fb in 0.0f64..=1.0, fc in 0.0f64..=1.0) {
                let gs = networks();
                let g = &gs[net_pick];
                let a = point_on(g, ea, fa);
                let b = point_on(g, eb, fb);
                let c = point_on(g, ec, fc);
                let dab = g.geodesic_distance(a, b).unwrap();
                let dba = g.geodesic_distance(b, a).unwrap();
                prop_assert_eq!(dab, dba);
                prop_assert!(dab >= 0.0);
                let dac = g.geodesic_distance(a, c).unwrap();
                let dcb = g.geodesic_distance(c, b).unwrap();
                prop_assert!(dab <= dac + dcb + 1e-12);
                let zero = dab == 0.0;
                let eq = g.points_equal(a, b);
                prop_assert_eq!(zero, eq);
            }
        }
    }
}
