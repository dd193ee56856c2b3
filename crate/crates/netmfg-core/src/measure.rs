//! Particle trajectory measures, their time marginals, and the
//! Wasserstein-1 distance on the network.
//!
//! On trees (junctions included) the distance has an exact cut formula: for
//! each point of each edge, integrate the absolute net mass difference
//! beyond that point. General networks fall back to a discrete transport
//! linear program with geodesic costs; the two routes cross-check each
//! other on trees.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::geometry::{NetPoint, Network, VertexId};
use crate::grid::SpaceTimeGrid;
use crate::simplex::solve_lp;
use crate::trajectory::Trajectory;
use crate::Result;

/// Probability measure over full-horizon trajectories, represented by
/// weighted particles.
#[derive(Debug, Clone, Default)]
pub struct TrajectoryMeasure {
    pub particles: Vec<(f64, Trajectory)>,
}

/// Weighted atoms on the network at one time slice.
#[derive(Debug, Clone, Default)]
pub struct Marginal {
    pub atoms: Vec<(NetPoint, f64)>,
}

impl Marginal {
    pub fn mass(&self) -> f64 {
        self.atoms.iter().map(|(_, w)| w).sum()
    }

    /// Collapses atoms at identical canonical points, in a deterministic
    /// order.
    pub fn collapsed(&self, g: &Network) -> Result<Marginal> {
        let mut map: BTreeMap<PointKey, f64> = BTreeMap::new();
        for &(p, w) in &self.atoms {
            let c = g.canonicalize(p)?;
            *map.entry(PointKey::from(c)).or_insert(0.0) += w;
        }
        Ok(Marginal {
            atoms: map
                .into_iter()
                .map(|(k, w)| (k.into_point(), w))
                .collect(),
        })
    }
}

/// Ordered key for canonical network points (vertices first).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum PointKey {
    Vertex(usize),
    Edge(usize, u64),
}

impl From<NetPoint> for PointKey {
    fn from(p: NetPoint) -> Self {
        match p {
            NetPoint::Vertex(v) => PointKey::Vertex(v.0),
            // Canonical interior coordinates are positive, so the bit
            // pattern orders like the float.
            NetPoint::OnEdge { edge, s } => PointKey::Edge(edge.0, s.to_bits()),
        }
    }
}

impl PointKey {
    fn into_point(self) -> NetPoint {
        match self {
            PointKey::Vertex(v) => NetPoint::vertex(v),
            PointKey::Edge(e, bits) => NetPoint::on_edge(e, f64::from_bits(bits)),
        }
    }
}

impl TrajectoryMeasure {
    pub fn new(particles: Vec<(f64, Trajectory)>) -> Self {
        TrajectoryMeasure { particles }
    }

    pub fn total_weight(&self) -> f64 {
        self.particles.iter().map(|(w, _)| w).sum()
    }

    /// Checks that every particle spans the full horizon, weights are a
    /// probability vector, and (when given) that the time-zero pushforward
    /// reproduces the initial atoms exactly.
    pub fn validate(
        &self,
        g: &Network,
        grid: &SpaceTimeGrid,
        m0: Option<&[(NetPoint, f64)]>,
    ) -> Result<()> {
        if self.particles.is_empty() {
            return Err(CoreError::NotProbability(String::from("no particles")));
        }
        for (w, tr) in &self.particles {
            if !(*w >= 0.0) {
                return Err(CoreError::NotProbability(format!("negative weight {w}")));
            }
            if tr.start_slice != 0 || tr.points.len() != grid.slice_count() {
                return Err(CoreError::InadmissibleTrajectory(String::from(
                    "particle does not span the full horizon",
                )));
            }
            tr.validate(g, grid.dt(), None)?;
        }
        let mass = self.total_weight();
        if (mass - 1.0).abs() > 1e-12 {
            return Err(CoreError::NotProbability(format!("total mass {mass}")));
        }
        if let Some(atoms) = m0 {
            let lhs = self.marginal(g, 0)?.collapsed(g)?;
            let rhs = Marginal {
                atoms: atoms.to_vec(),
            }
            .collapsed(g)?;
            if lhs.atoms.len() != rhs.atoms.len()
                || lhs
                    .atoms
                    .iter()
                    .zip(&rhs.atoms)
                    .any(|(a, b)| a.0 != b.0 || (a.1 - b.1).abs() > 1e-12)
            {
                return Err(CoreError::NotProbability(String::from(
                    "time-zero pushforward differs from the configured initial atoms",
                )));
            }
        }
        Ok(())
    }

    /// Pushforward by the evaluation map at a slice.
    pub fn marginal(&self, g: &Network, slice: usize) -> Result<Marginal> {
        let mut atoms = Vec::with_capacity(self.particles.len());
        for (w, tr) in &self.particles {
            let idx = slice
                .checked_sub(tr.start_slice)
                .filter(|i| *i < tr.points.len())
                .ok_or_else(|| {
                    CoreError::InvalidConfig(format!("slice {slice} outside the trajectory"))
                })?;
            atoms.push((g.canonicalize(tr.points[idx])?, *w));
        }
        Ok(Marginal { atoms })
    }

    /// Marginals at every slice.
    pub fn marginals(&self, g: &Network, grid: &SpaceTimeGrid) -> Result<Vec<Marginal>> {
        (0..grid.slice_count()).map(|k| self.marginal(g, k)).collect()
    }

    /// Merges particles with bitwise-identical paths, keeping first-seen
    /// order. Exact: weights of identical trajectories add.
    pub fn merge_identical(&mut self) {
        let mut out: Vec<(f64, Trajectory)> = Vec::with_capacity(self.particles.len());
        for (w, tr) in self.particles.drain(..) {
            if let Some(slot) = out
                .iter_mut()
                .find(|(_, t)| t.start_slice == tr.start_slice && t.points == tr.points)
            {
                slot.0 += w;
            } else {
                out.push((w, tr));
            }
        }
        self.particles = out;
    }

    /// Drops particles below the weight floor and renormalizes.
    /// Returns (particles pruned, mass removed).
    pub fn prune(&mut self, floor: f64) -> (usize, f64) {
        let before = self.particles.len();
        let mut removed = 0.0;
        self.particles.retain(|(w, _)| {
            if *w < floor {
                removed += *w;
                false
            } else {
                true
            }
        });
        let pruned = before - self.particles.len();
        if pruned > 0 {
            let total = self.total_weight();
            if total > 0.0 {
                for (w, _) in &mut self.particles {
                    *w /= total;
                }
            }
        }
        (pruned, removed)
    }
}

/// Wasserstein-1 distance between two equal-mass atom sets, choosing the
/// exact tree formula when the network has no cycles.
pub fn wasserstein1(g: &Network, a: &Marginal, b: &Marginal) -> Result<f64> {
    if g.is_tree() {
        wasserstein1_tree(g, a, b)
    } else {
        wasserstein1_lp(g, a, b)
    }
}

fn check_masses(a: &Marginal, b: &Marginal) -> Result<()> {
    let (ma, mb) = (a.mass(), b.mass());
    if (ma - mb).abs() > 1e-9 {
        return Err(CoreError::MassMismatch { left: ma, right: mb });
    }
    Ok(())
}

/// Exact cut formula on trees: for every edge point, the transport through
/// it equals the net mass difference beyond it, integrated over the edge.
pub fn wasserstein1_tree(g: &Network, a: &Marginal, b: &Marginal) -> Result<f64> {
    if !g.is_tree() {
        return Err(CoreError::InvalidConfig(String::from(
            "tree formula on a cyclic network",
        )));
    }
    check_masses(a, b)?;
    let nv = g.vertex_count();
    // Signed atom difference per location.
    let mut vertex_delta = vec![0.0f64; nv];
    let mut edge_atoms: Vec<Vec<(f64, f64)>> = vec![Vec::new(); g.edge_count()];
    for (sign, m) in [(1.0, a), (-1.0, b)] {
        for &(p, w) in &m.atoms {
            match g.canonicalize(p)? {
                NetPoint::Vertex(v) => vertex_delta[v.0] += sign * w,
                NetPoint::OnEdge { edge, s } => edge_atoms[edge.0].push((s, sign * w)),
            }
        }
    }
    // Root the tree at vertex 0 (preorder + parent links over finite edges).
    let mut parent = vec![usize::MAX; nv];
    let mut order = Vec::with_capacity(nv);
    let mut seen = vec![false; nv];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        order.push(v);
        for &e in g.incident(VertexId(v)) {
            let edge = g.edge(e);
            if let Some(to) = edge.to {
                let other = if edge.from.0 == v { to.0 } else { edge.from.0 };
                if !seen[other] {
                    seen[other] = true;
                    parent[other] = v;
                    stack.push(other);
                }
            }
        }
    }
    // Child endpoint of every finite edge in the rooted orientation.
    let mut edge_child = vec![usize::MAX; g.edge_count()];
    for (ei, edge) in g.edges().iter().enumerate() {
        if let Some(to) = edge.to {
            let (u, w) = (edge.from.0, to.0);
            edge_child[ei] = if parent[w] == u { w } else { u };
        }
    }
    // Rooted subtree mass at each vertex: the vertex atom, interior atoms
    // of its semi-infinite edges, and for each child the child subtree plus
    // the interior atoms of the connecting edge.
    let mut subtree = vertex_delta;
    for (ei, edge) in g.edges().iter().enumerate() {
        if edge.to.is_none() {
            let interior: f64 = edge_atoms[ei].iter().map(|(_, d)| d).sum();
            subtree[edge.from.0] += interior;
        }
    }
    for &v in order.iter().rev() {
        if parent[v] != usize::MAX {
            let pe = g
                .incident(VertexId(v))
                .iter()
                .copied()
                .find(|&e| edge_child[e.0] == v)
                .expect("edge to parent");
            let interior: f64 = edge_atoms[pe.0].iter().map(|(_, d)| d).sum();
            subtree[parent[v]] += subtree[v] + interior;
        }
    }
    // Integrate |net mass beyond the cut| along every edge.
    let mut total = 0.0f64;
    for (ei, edge) in g.edges().iter().enumerate() {
        let atoms = &mut edge_atoms[ei];
        match edge.to {
            None => {
                // Cut at s separates the outward part (coordinates > s);
                // integrate from the outermost atom down to the vertex.
                atoms.sort_by(|x, y| y.0.partial_cmp(&x.0).expect("finite coords"));
                let mut beyond = 0.0f64;
                let mut prev = atoms.first().map_or(0.0, |a| a.0);
                for &(s, dw) in atoms.iter() {
                    total += beyond.abs() * (prev - s);
                    beyond += dw;
                    prev = s;
                }
                total += beyond.abs() * prev;
            }
            Some(_) => {
                // Measure the cut by its distance from the child endpoint;
                // beyond-the-cut starts at the child subtree mass and grows
                // as atoms are passed moving toward the parent.
                let child = edge_child[ei];
                if edge.from.0 != child {
                    for atom in atoms.iter_mut() {
                        atom.0 = edge.length - atom.0;
                    }
                }
                atoms.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("finite coords"));
                let mut beyond = subtree[child];
                let mut prev = 0.0f64;
                for &(d, dw) in atoms.iter() {
                    total += beyond.abs() * (d - prev);
                    beyond += dw;
                    prev = d;
                }
                total += beyond.abs() * (edge.length - prev);
            }
        }
    }
    Ok(total)
}

/// Discrete optimal transport with geodesic ground costs, solved as a
/// linear program.
pub fn wasserstein1_lp(g: &Network, a: &Marginal, b: &Marginal) -> Result<f64> {
    check_masses(a, b)?;
    let ca = a.collapsed(g)?;
    let cb = b.collapsed(g)?;
    let n = ca.atoms.len();
    let m = cb.atoms.len();
    if n == 0 || m == 0 {
        return Ok(0.0);
    }
    // Normalize both sides to the common mass so the LP sees consistent
    // right-hand sides.
    let mass = ca.mass();
    let cols = n * m;
    // Supply rows plus all-but-one demand rows (the last is redundant).
    let rows = n + m - 1;
    let mut mat = vec![0.0f64; rows * cols];
    let mut rhs = vec![0.0f64; rows];
    let mut cost = vec![0.0f64; cols];
    for i in 0..n {
        rhs[i] = ca.atoms[i].1;
        for j in 0..m {
            mat[i * cols + i * m + j] = 1.0;
            cost[i * m + j] = g.geodesic_distance(ca.atoms[i].0, cb.atoms[j].0)?;
        }
    }
    for j in 0..(m - 1) {
        rhs[n + j] = cb.atoms[j].1 * (mass / cb.mass());
        for i in 0..n {
            mat[(n + j) * cols + i * m + j] = 1.0;
        }
    }
    let sol = solve_lp(rows, cols, &mat, &rhs, &cost)?;
    Ok(sol.objective)
}
