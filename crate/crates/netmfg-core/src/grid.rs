//! Space-time grids on a network and the sampled value function.
//!
//! Every vertex is a grid node shared by its incident edges; each edge
//! carries uniform interior nodes. Semi-infinite edges are truncated at the
//! network truncation radius and end in an artificial boundary node.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::geometry::{EdgeId, NetPoint, Network, VertexId};
use crate::math;
use crate::Result;

/// Far end of a gridded edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FarEnd {
    Vertex(VertexId),
    /// Truncation boundary of a semi-infinite edge.
    Boundary,
}

#[derive(Debug, Clone)]
struct EdgeGrid {
    cells: usize,
    h: f64,
    len: f64,
    from: VertexId,
    far: FarEnd,
    offset: usize,
}

/// A node of the space grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridNode {
    Vertex(VertexId),
    /// Interior (or truncation-boundary) node `j` of an edge, `1 <= j <= last`.
    Edge { edge: EdgeId, j: usize },
}

/// Uniform space-time grid over a network.
#[derive(Debug, Clone)]
pub struct SpaceTimeGrid {
    dt: f64,
    horizon: f64,
    steps: usize,
    edge_grids: Vec<EdgeGrid>,
    n_vertices: usize,
    n_nodes: usize,
    dx_max: f64,
}

impl SpaceTimeGrid {
    /// Builds a grid with target spacings `dx` (space) and `dt` (time) on
    /// `[0, horizon]`. Spacings are snapped so that edge lengths and the
    /// horizon are integer multiples.
    pub fn new(g: &Network, dx: f64, dt: f64, horizon: f64) -> Result<Self> {
        if !(dx > 0.0) || !(dt > 0.0) || !(horizon > 0.0) {
            return Err(CoreError::InvalidConfig(format!(
                "grid spacings and horizon must be positive (dx={dx}, dt={dt}, T={horizon})"
            )));
        }
        let steps = (math::round(horizon / dt) as usize).max(1);
        let mut edge_grids = Vec::with_capacity(g.edge_count());
        let mut offset = 0;
        let mut dx_max: f64 = 0.0;
        for (ei, edge) in g.edges().iter().enumerate() {
            let len = g.effective_length(EdgeId(ei));
            let cells = (math::round(len / dx) as usize).max(2);
            let h = len / cells as f64;
            dx_max = dx_max.max(h);
            let far = match edge.to {
                Some(v) => FarEnd::Vertex(v),
                None => FarEnd::Boundary,
            };
            let node_count = match far {
                FarEnd::Vertex(_) => cells - 1,
                FarEnd::Boundary => cells,
            };
            edge_grids.push(EdgeGrid {
                cells,
                h,
                len,
                from: edge.from,
                far,
                offset,
            });
            offset += node_count;
        }
        let n_vertices = g.vertex_count();
        Ok(SpaceTimeGrid {
            dt: horizon / steps as f64,
            horizon,
            steps,
            edge_grids,
            n_vertices,
            n_nodes: n_vertices + offset,
            dx_max,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of time slices (`steps + 1`).
    pub fn slice_count(&self) -> usize {
        self.steps + 1
    }

    pub fn step_count(&self) -> usize {
        self.steps
    }

    /// Largest node spacing over the edges.
    pub fn dx_max(&self) -> f64 {
        self.dx_max
    }

    pub fn time(&self, slice: usize) -> f64 {
        self.horizon * slice as f64 / self.steps as f64
    }

    pub fn node_count(&self) -> usize {
        self.n_nodes
    }

    pub fn vertex_count(&self) -> usize {
        self.n_vertices
    }

    pub fn edge_spacing(&self, e: EdgeId) -> f64 {
        self.edge_grids[e.0].h
    }

    /// Gridded length of the edge (truncated for semi-infinite edges).
    pub fn edge_len(&self, e: EdgeId) -> f64 {
        self.edge_grids[e.0].len
    }

    pub fn edge_cells(&self, e: EdgeId) -> usize {
        self.edge_grids[e.0].cells
    }

    pub fn far_end(&self, e: EdgeId) -> FarEnd {
        self.edge_grids[e.0].far
    }

    /// Index of the last non-vertex node on the edge.
    pub fn last_j(&self, e: EdgeId) -> usize {
        match self.edge_grids[e.0].far {
            FarEnd::Vertex(_) => self.edge_grids[e.0].cells - 1,
            FarEnd::Boundary => self.edge_grids[e.0].cells,
        }
    }

    /// Arc coordinate of node `j` (`0 <= j <= cells`) on the edge.
    pub fn node_coord(&self, e: EdgeId, j: usize) -> f64 {
        let eg = &self.edge_grids[e.0];
        eg.len * j as f64 / eg.cells as f64
    }

    pub fn flat_index(&self, node: GridNode) -> usize {
        match node {
            GridNode::Vertex(v) => v.0,
            GridNode::Edge { edge, j } => {
                debug_assert!(j >= 1 && j <= self.last_j(edge));
                self.n_vertices + self.edge_grids[edge.0].offset + (j - 1)
            }
        }
    }

    /// The network point occupied by a grid node. Boundary nodes of
    /// truncated edges map to their arc coordinate.
    pub fn node_point(&self, node: GridNode) -> NetPoint {
        match node {
            GridNode::Vertex(v) => NetPoint::Vertex(v),
            GridNode::Edge { edge, j } => NetPoint::OnEdge {
                edge,
                s: self.node_coord(edge, j),
            },
        }
    }

    /// All grid nodes in canonical order: vertices, then edge nodes.
    pub fn nodes(&self) -> Vec<GridNode> {
        let mut out = Vec::with_capacity(self.n_nodes);
        for v in 0..self.n_vertices {
            out.push(GridNode::Vertex(VertexId(v)));
        }
        for (ei, _) in self.edge_grids.iter().enumerate() {
            let e = EdgeId(ei);
            for j in 1..=self.last_j(e) {
                out.push(GridNode::Edge { edge: e, j });
            }
        }
        out
    }

    /// Nearest grid node to a network point, with the snap distance.
    pub fn snap(&self, g: &Network, p: NetPoint) -> Result<(GridNode, f64)> {
        match g.canonicalize(p)? {
            NetPoint::Vertex(v) => Ok((GridNode::Vertex(v), 0.0)),
            NetPoint::OnEdge { edge, s } => {
                let eg = &self.edge_grids[edge.0];
                if s > eg.len {
                    return Err(CoreError::PointOffNetwork(format!(
                        "coordinate {s} beyond the truncated edge length {}",
                        eg.len
                    )));
                }
                let j = math::round(s / eg.h) as usize;
                let j = j.min(eg.cells);
                let snapped = self.node_coord(edge, j);
                let node = if j == 0 {
                    GridNode::Vertex(eg.from)
                } else if j == eg.cells {
                    match eg.far {
                        FarEnd::Vertex(v) => GridNode::Vertex(v),
                        FarEnd::Boundary => GridNode::Edge { edge, j },
                    }
                } else {
                    GridNode::Edge { edge, j }
                };
                Ok((node, (snapped - s).abs()))
            }
        }
    }
}

/// The value function sampled on a [`SpaceTimeGrid`]: one value per node per
/// time slice.
#[derive(Debug, Clone)]
pub struct ValueField {
    grid: SpaceTimeGrid,
    /// Slice-major storage.
    values: Vec<f64>,
}

impl ValueField {
    pub fn zeros(grid: SpaceTimeGrid) -> Self {
        let values = vec![0.0; grid.slice_count() * grid.node_count()];
        ValueField { grid, values }
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.grid
    }

    #[inline]
    pub fn get(&self, slice: usize, node: GridNode) -> f64 {
        self.values[slice * self.grid.node_count() + self.grid.flat_index(node)]
    }

    #[inline]
    pub fn get_flat(&self, slice: usize, flat: usize) -> f64 {
        self.values[slice * self.grid.node_count() + flat]
    }

    #[inline]
    pub fn set(&mut self, slice: usize, node: GridNode, value: f64) {
        let idx = slice * self.grid.node_count() + self.grid.flat_index(node);
        self.values[idx] = value;
    }

    pub fn slice(&self, slice: usize) -> &[f64] {
        let n = self.grid.node_count();
        &self.values[slice * n..(slice + 1) * n]
    }

    pub fn slice_mut(&mut self, slice: usize) -> &mut [f64] {
        let n = self.grid.node_count();
        &mut self.values[slice * n..(slice + 1) * n]
    }

    /// Piecewise-linear interpolation along an edge at a fixed slice.
    /// `s` may be anywhere on the gridded edge, including its endpoints.
    pub fn interp_edge(&self, slice: usize, edge: EdgeId, s: f64) -> f64 {
        let h = self.grid.edge_spacing(edge);
        let cells = self.grid.edge_cells(edge);
        let u = s / h;
        let j = (math::floor(u) as isize).clamp(0, cells as isize - 1) as usize;
        let frac = u - j as f64;
        let a = self.node_value(slice, edge, j);
        let b = self.node_value(slice, edge, j + 1);
        a + frac * (b - a)
    }

    /// Value at endpoint-aware node `j` (`0 <= j <= cells`) of an edge.
    pub fn node_value(&self, slice: usize, edge: EdgeId, j: usize) -> f64 {
        let eg_from = {
            let g = &self.grid.edge_grids[edge.0];
            (g.from, g.cells, g.far)
        };
        let (from, cells, far) = eg_from;
        let node = if j == 0 {
            GridNode::Vertex(from)
        } else if j == cells {
            match far {
                FarEnd::Vertex(v) => GridNode::Vertex(v),
                FarEnd::Boundary => GridNode::Edge { edge, j },
            }
        } else {
            GridNode::Edge { edge, j }
        };
        self.get(slice, node)
    }

    /// Value of a network point at a slice (vertex lookup or edge
    /// interpolation).
    pub fn point_value(&self, slice: usize, p: NetPoint) -> f64 {
        match p {
            NetPoint::Vertex(v) => self.get(slice, GridNode::Vertex(v)),
            NetPoint::OnEdge { edge, s } => self.interp_edge(slice, edge, s),
        }
    }

    /// C1 interpolation along an edge (uniform Catmull-Rom with linear
    /// extrapolation ghosts at the ends). Used by trajectory synthesis,
    /// where a continuous slope keeps argmin speeds from snapping to cell
    /// boundaries; the solver itself stays piecewise linear.
    pub fn interp_edge_smooth(&self, slice: usize, edge: EdgeId, s: f64) -> f64 {
        let h = self.grid.edge_spacing(edge);
        let cells = self.grid.edge_cells(edge);
        let u = s / h;
        let j = (math::floor(u) as isize).clamp(0, cells as isize - 1) as usize;
        let theta = u - j as f64;
        let at = |i: isize| -> f64 {
            if i < 0 {
                2.0 * self.node_value(slice, edge, 0) - self.node_value(slice, edge, 1)
            } else if i as usize > cells {
                2.0 * self.node_value(slice, edge, cells)
                    - self.node_value(slice, edge, cells - 1)
            } else {
                self.node_value(slice, edge, i as usize)
            }
        };
        let (p0, p1, p2, p3) = (at(j as isize - 1), at(j as isize), at(j as isize + 1), at(j as isize + 2));
        let a = -0.5 * p0 + 1.5 * p1 - 1.5 * p2 + 0.5 * p3;
        let b = p0 - 2.5 * p1 + 2.0 * p2 - 0.5 * p3;
        let c = 0.5 * (p2 - p0);
        p1 + theta * (c + theta * (b + theta * a))
    }

    /// Smooth-in-space value of a network point at a slice.
    pub fn point_value_smooth(&self, slice: usize, p: NetPoint) -> f64 {
        match p {
            NetPoint::Vertex(v) => self.get(slice, GridNode::Vertex(v)),
            NetPoint::OnEdge { edge, s } => self.interp_edge_smooth(slice, edge, s),
        }
    }

    /// Value of a network point at an arbitrary time (linear in time).
    pub fn point_time(&self, p: NetPoint, t: f64) -> f64 {
        let steps = self.grid.step_count();
        let u = t / self.grid.dt();
        let k = (math::floor(u) as isize).clamp(0, steps as isize - 1) as usize;
        let frac = u - k as f64;
        let a = self.point_value(k, p);
        let b = self.point_value(k + 1, p);
        a + frac * (b - a)
    }

    /// Space-time interpolation at an arbitrary point of the gridded edge
    /// and an arbitrary time in `[0, horizon]`.
    pub fn interp_spacetime(&self, edge: EdgeId, s: f64, t: f64) -> f64 {
        let steps = self.grid.step_count();
        let u = t / self.grid.dt();
        let k = (math::floor(u) as isize).clamp(0, steps as isize - 1) as usize;
        let frac = u - k as f64;
        let a = self.interp_edge(k, edge, s);
        let b = self.interp_edge(k + 1, edge, s);
        a + frac * (b - a)
    }

    /// One-sided slope at a vertex along an incident edge, pointing away
    /// from the vertex, computed from the first `stride` nodes.
    pub fn vertex_slope(&self, g: &Network, slice: usize, v: VertexId, e: EdgeId, stride: usize) -> f64 {
        let h = self.grid.edge_spacing(e);
        let c = g.vertex_coord_on(e, v).expect("incident edge");
        let cells = self.grid.edge_cells(e);
        let stride = stride.max(1).min(cells);
        let j = if c == 0.0 { stride } else { cells - stride };
        let u0 = self.get(slice, GridNode::Vertex(v));
        let u1 = self.node_value(slice, e, j);
        (u1 - u0) / (stride as f64 * h)
    }

    /// Central difference derivative at an interior node.
    pub fn central_slope(&self, slice: usize, edge: EdgeId, j: usize) -> f64 {
        let h = self.grid.edge_spacing(edge);
        (self.node_value(slice, edge, j + 1) - self.node_value(slice, edge, j - 1)) / (2.0 * h)
    }

    /// Undivided second difference at an interior node.
    pub fn second_difference(&self, slice: usize, edge: EdgeId, j: usize) -> f64 {
        self.node_value(slice, edge, j + 1) - 2.0 * self.node_value(slice, edge, j)
            + self.node_value(slice, edge, j - 1)
    }
}

/// Rows of the value-field export: one row per (edge, node, slice) with the
/// one-sided/central derivative along that edge.
#[derive(Debug, Clone, Copy)]
pub struct ValueRow {
    pub edge: usize,
    pub arc_coord: f64,
    pub time: f64,
    pub u: f64,
    pub du: f64,
}

impl ValueField {
    /// Flattens the field for CSV export. Vertex values appear once per
    /// incident edge with the derivative taken into that edge.
    pub fn export_rows(&self, _g: &Network) -> Vec<ValueRow> {
        let grid = &self.grid;
        let mut rows = Vec::new();
        for slice in 0..grid.slice_count() {
            let time = grid.time(slice);
            for ei in 0..grid.edge_grids.len() {
                let e = EdgeId(ei);
                let cells = grid.edge_cells(e);
                let h = grid.edge_spacing(e);
                for j in 0..=cells {
                    let u = self.node_value(slice, e, j);
                    let du = if j == 0 {
                        (self.node_value(slice, e, 1) - u) / h
                    } else if j == cells {
                        (u - self.node_value(slice, e, cells - 1)) / h
                    } else {
                        self.central_slope(slice, e, j)
                    };
                    rows.push(ValueRow {
                        edge: ei,
                        arc_coord: grid.node_coord(e, j),
                        time,
                        u,
                        du,
                    });
                }
            }
        }
        rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{EdgeSpec, Network};

    #[test]
    fn grid_nodes_and_coords() {
        let g = Network::junction(2, 1.0).unwrap();
        let grid = SpaceTimeGrid::new(&g, 0.25, 0.5, 1.0).unwrap();
        assert_eq!(grid.slice_count(), 3);
        assert_eq!(grid.edge_cells(EdgeId(0)), 4);
        // Junction edges are truncated: boundary node included.
        assert_eq!(grid.last_j(EdgeId(0)), 4);
        assert_eq!(grid.node_count(), 1 + 4 + 4);
        assert_eq!(grid.node_coord(EdgeId(0), 4), 1.0);
        assert_eq!(grid.time(2), 1.0);
    }

    #[test]
    fn finite_edge_endpoints_are_vertices() {
        let g = Network::new(
            2,
            vec![EdgeSpec {
                from: 0,
                to: Some(1),
                length: 1.0,
            }],
            1.0,
        )
        .unwrap();
        let grid = SpaceTimeGrid::new(&g, 0.25, 0.25, 1.0).unwrap();
        assert_eq!(grid.last_j(EdgeId(0)), 3);
        let mut vf = ValueField::zeros(grid);
        vf.set(0, GridNode::Vertex(VertexId(0)), 1.0);
        vf.set(0, GridNode::Vertex(VertexId(1)), 2.0);
        vf.set(0, GridNode::Edge { edge: EdgeId(0), j: 1 }, 3.0);
        vf.set(0, GridNode::Edge { edge: EdgeId(0), j: 2 }, 5.0);
        assert_eq!(vf.node_value(0, EdgeId(0), 0), 1.0);
        assert_eq!(vf.node_value(0, EdgeId(0), 4), 2.0);
        assert_eq!(vf.node_value(0, EdgeId(0), 2), 5.0);
        // Interpolation hits node values exactly and is linear between.
        assert_eq!(vf.interp_edge(0, EdgeId(0), 0.5), 5.0);
        assert_eq!(vf.interp_edge(0, EdgeId(0), 0.25), 3.0);
        assert_eq!(vf.interp_edge(0, EdgeId(0), 0.125), 2.0);
        assert_eq!(vf.interp_edge(0, EdgeId(0), 0.375), 4.0);
    }

    #[test]
    fn snapping_points_to_nodes() {
        let g = Network::junction(2, 2.0).unwrap();
        let grid = SpaceTimeGrid::new(&g, 0.5, 0.5, 1.0).unwrap();
        let (node, d) = grid.snap(&g, NetPoint::on_edge(0, 1.1)).unwrap();
        assert_eq!(node, GridNode::Edge { edge: EdgeId(0), j: 2 });
        assert!((d - 0.1).abs() < 1e-12);
        let (node, d) = grid.snap(&g, NetPoint::on_edge(1, 0.0)).unwrap();
        assert_eq!(node, GridNode::Vertex(VertexId(0)));
        assert_eq!(d, 0.0);
    }
}
