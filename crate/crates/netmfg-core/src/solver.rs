//! Backward semi-Lagrangian dynamic programming for the value function,
//! with dynamic-programming and viscosity residual checks.
//!
//! Interior nodes minimize over one-step moves within their edge (piecewise
//! linear interpolation of the next slice); vertex nodes choose between
//! waiting and entering an incident edge. Moves that land exactly on an
//! adjacent vertex are always candidates, so trajectories can reach vertices
//! without overshooting them.

use alloc::format;
use alloc::vec::Vec;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::cost::CostModel;
use crate::error::CoreError;
use crate::geometry::{EdgeId, NetPoint, Network};
use crate::grid::{FarEnd, GridNode, SpaceTimeGrid, ValueField};
use crate::hamiltonian::HamiltonianEval;
use crate::math;
use crate::Result;

const GOLDEN_ITERS: usize = 60;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Configuration of the value solver.
#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    /// User floor for the speed bound; the effective bound may be raised
    /// from the coercivity data.
    pub v_user: f64,
    /// Control grid atoms (forced odd so zero speed is included).
    pub control_points: usize,
    /// Golden-section polish of the Bellman argmin within its bracket.
    pub polish: bool,
    /// Safety factor on the coercivity-derived speed bound.
    pub safety: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            v_user: 1.0,
            control_points: 513,
            polish: true,
            safety: 4.0,
        }
    }
}

/// Diagnostics from a backward solve.
#[derive(Debug, Clone, Copy)]
pub struct SolveInfo {
    /// Effective speed bound.
    pub v_bound: f64,
    /// Largest argmin speed over all nodes and slices.
    pub max_argmin_speed: f64,
    /// Argmin targets in the outermost cell of a truncated edge.
    pub truncation_hits: usize,
}

/// One admissible one-step move and its Bellman value.
#[derive(Debug, Clone, Copy)]
pub struct Move {
    pub target: NetPoint,
    /// Signed arc speed (zero for waiting at a vertex).
    pub speed: f64,
    /// `dt * running + next value`.
    pub value: f64,
    pub edge: Option<EdgeId>,
    /// The argmin sits on the control-grid boundary.
    pub saturated: bool,
    /// The argmin target lies in the outermost cell of a truncated edge.
    pub hit_truncation: bool,
    /// Another candidate with a meaningfully different speed ties within
    /// 1e-10 (filled only by [`MoveSet::best_from_tracked`]).
    pub near_tie: bool,
}

#[derive(Debug, Clone, Copy)]
struct Cand {
    value: f64,
    speed: f64,
    rank: usize,
    target: NetPoint,
    edge: Option<EdgeId>,
    saturated: bool,
}

/// Candidate enumeration shared by the solver, the residual checks and
/// optimal synthesis.
pub struct MoveSet<'a> {
    g: &'a Network,
    cm: &'a CostModel,
    grid: &'a SpaceTimeGrid,
    pub v_bound: f64,
    controls: Vec<f64>,
    polish: bool,
}

impl<'a> MoveSet<'a> {
    pub fn new(
        g: &'a Network,
        cm: &'a CostModel,
        grid: &'a SpaceTimeGrid,
        cfg: &SolverConfig,
    ) -> Result<Self> {
        cm.validate(g)?;
        let data = cm.coercivity_data(g, grid.horizon())?;
        // Terminal span over the grid nodes.
        let mut g_min = f64::INFINITY;
        let mut g_max = f64::NEG_INFINITY;
        for node in grid.nodes() {
            let v = cm.terminal_cost(g, grid.node_point(node))?;
            g_min = g_min.min(v);
            g_max = g_max.max(v);
        }
        let span = g_max - g_min;
        let lam = data.zero_speed_max.max(0.0);
        let derived = cfg.safety
            * math::powf(
                (span + data.c0 * grid.horizon() + lam) / data.c0,
                1.0 / data.p,
            );
        let v_bound = cfg.v_user.max(derived);
        // One step must not be able to overshoot an entire edge.
        let mut min_len = f64::INFINITY;
        for ei in 0..g.edge_count() {
            min_len = min_len.min(grid.edge_len(EdgeId(ei)));
        }
        if v_bound * grid.dt() > min_len {
            return Err(CoreError::CflViolation(format!(
                "dt * V = {} exceeds the shortest gridded edge {min_len}",
                v_bound * grid.dt()
            )));
        }
        let n = if cfg.control_points % 2 == 0 {
            cfg.control_points + 1
        } else {
            cfg.control_points
        }
        .max(5);
        let controls = (0..n)
            .map(|k| -v_bound + 2.0 * v_bound * k as f64 / (n - 1) as f64)
            .collect();
        Ok(MoveSet {
            g,
            cm,
            grid,
            v_bound,
            controls,
            polish: cfg.polish,
        })
    }

    fn control_step(&self) -> f64 {
        2.0 * self.v_bound / (self.controls.len() - 1) as f64
    }

    /// Canonical network point at arc coordinate `s` of a gridded edge.
    fn edge_point(&self, e: EdgeId, s: f64) -> NetPoint {
        let len = self.grid.edge_len(e);
        if s == 0.0 {
            NetPoint::Vertex(self.g.edge(e).from)
        } else if s == len {
            match self.grid.far_end(e) {
                FarEnd::Vertex(v) => NetPoint::Vertex(v),
                FarEnd::Boundary => NetPoint::OnEdge { edge: e, s },
            }
        } else {
            NetPoint::OnEdge { edge: e, s }
        }
    }

    fn consider(best: &mut Option<Cand>, cand: Cand) {
        match best {
            None => *best = Some(cand),
            Some(b) => {
                let better = cand.value < b.value
                    || (cand.value == b.value
                        && (cand.speed.abs() < b.speed.abs()
                            || (cand.speed.abs() == b.speed.abs() && cand.rank < b.rank)));
                if better {
                    *best = Some(cand);
                }
            }
        }
    }

    fn enumerate<F: Fn(NetPoint) -> f64, V: FnMut(Cand)>(
        &self,
        from: NetPoint,
        t: f64,
        next: &F,
        visit: &mut V,
    ) -> Result<()> {
        let dt = self.grid.dt();
        match from {
            NetPoint::OnEdge { edge, s } => {
                let len = self.grid.edge_len(edge);
                let rc = &self.cm.edges[edge.0];
                for (k, &a) in self.controls.iter().enumerate() {
                    let ts = s + a * dt;
                    if (0.0..=len).contains(&ts) {
                        visit(Cand {
                            value: dt * rc.eval(s, a, t) + next(self.edge_point(edge, ts)),
                            speed: a,
                            rank: edge.0,
                            target: self.edge_point(edge, ts),
                            edge: Some(edge),
                            saturated: k == 0 || k == self.controls.len() - 1,
                        });
                    }
                }
                // Land exactly on the near vertex.
                let a_hit = -s / dt;
                if a_hit.abs() <= self.v_bound {
                    let target = NetPoint::Vertex(self.g.edge(edge).from);
                    visit(Cand {
                        value: dt * rc.eval(s, a_hit, t) + next(target),
                        speed: a_hit,
                        rank: edge.0,
                        target,
                        edge: Some(edge),
                        saturated: false,
                    });
                }
                // Land exactly on the far vertex (finite edges).
                if let FarEnd::Vertex(v) = self.grid.far_end(edge) {
                    let a_hit = (len - s) / dt;
                    if a_hit.abs() <= self.v_bound {
                        let target = NetPoint::Vertex(v);
                        visit(Cand {
                            value: dt * rc.eval(s, a_hit, t) + next(target),
                            speed: a_hit,
                            rank: edge.0,
                            target,
                            edge: Some(edge),
                            saturated: false,
                        });
                    }
                }
                Ok(())
            }
            NetPoint::Vertex(v) => {
                let stay_rate = self.cm.vertex_running_cost(self.g, v, t)?;
                visit(Cand {
                    value: dt * stay_rate + next(NetPoint::Vertex(v)),
                    speed: 0.0,
                    rank: 0,
                    target: NetPoint::Vertex(v),
                    edge: None,
                    saturated: false,
                });
                for &e in self.g.incident(v) {
                    let len = self.grid.edge_len(e);
                    let c = self.g.vertex_coord_on(e, v).expect("incident");
                    let sigma = if c == 0.0 { 1.0 } else { -1.0 };
                    let rc = &self.cm.edges[e.0];
                    let zeta_max = self.v_bound.min(len / dt);
                    for (k, &a) in self.controls.iter().enumerate() {
                        if a > 0.0 && a <= zeta_max {
                            let ts = c + sigma * a * dt;
                            visit(Cand {
                                value: dt * rc.eval(c, sigma * a, t)
                                    + next(self.edge_point(e, ts)),
                                speed: sigma * a,
                                rank: e.0,
                                target: self.edge_point(e, ts),
                                edge: Some(e),
                                saturated: k == self.controls.len() - 1,
                            });
                        }
                    }
                    // Cross the whole edge in one step when feasible.
                    let a_hit = len / dt;
                    if a_hit <= self.v_bound {
                        let ts = c + sigma * len;
                        let target = self.edge_point(e, ts);
                        visit(Cand {
                            value: dt * rc.eval(c, sigma * a_hit, t) + next(target),
                            speed: sigma * a_hit,
                            rank: e.0,
                            target,
                            edge: Some(e),
                            saturated: false,
                        });
                    }
                }
                Ok(())
            }
        }
    }

    /// Best admissible one-step move from `from` at time `t`, where `next`
    /// evaluates the value of a landing point at the next slice.
    pub fn best_from<F: Fn(NetPoint) -> f64>(
        &self,
        from: NetPoint,
        t: f64,
        next: F,
    ) -> Result<Move> {
        let mut best: Option<Cand> = None;
        self.enumerate(from, t, &next, &mut |c| Self::consider(&mut best, c))?;
        let mut best = best.ok_or_else(|| {
            CoreError::InvalidConfig(format!("no admissible move from {from:?}"))
        })?;
        if self.polish {
            self.polish_move(from, t, &next, &mut best);
        }
        let hit_truncation = match (best.edge, best.target) {
            (Some(e), NetPoint::OnEdge { s, .. }) => {
                matches!(self.grid.far_end(e), FarEnd::Boundary)
                    && s >= self.grid.edge_len(e) - 0.5 * self.grid.edge_spacing(e)
            }
            _ => false,
        };
        Ok(Move {
            target: best.target,
            speed: best.speed,
            value: best.value,
            edge: best.edge,
            saturated: best.saturated,
            hit_truncation,
            near_tie: false,
        })
    }

    /// [`Self::best_from`] plus a second pass that marks near-ties with
    /// meaningfully different speeds.
    pub fn best_from_tracked<F: Fn(NetPoint) -> f64>(
        &self,
        from: NetPoint,
        t: f64,
        next: F,
    ) -> Result<Move> {
        let mut mv = self.best_from(from, t, &next)?;
        let mut tie = false;
        self.enumerate(from, t, &next, &mut |c| {
            if c.value <= mv.value + 1e-10 && (c.speed - mv.speed).abs() > 1e-9 {
                tie = true;
            }
        })?;
        mv.near_tie = tie;
        Ok(mv)
    }

    /// Golden-section refinement of the winning speed within one control
    /// step, keeping the move feasible on its edge.
    fn polish_move<F: Fn(NetPoint) -> f64>(
        &self,
        from: NetPoint,
        t: f64,
        next: &F,
        best: &mut Cand,
    ) {
        let Some(edge) = best.edge else { return };
        let dt = self.grid.dt();
        let len = self.grid.edge_len(edge);
        let rc = &self.cm.edges[edge.0];
        let step = self.control_step();
        let (s_from, lo_feas, hi_feas) = match from {
            NetPoint::OnEdge { s, .. } => (s, -s / dt, (len - s) / dt),
            NetPoint::Vertex(v) => {
                let c = self.g.vertex_coord_on(edge, v).expect("incident");
                let sigma = if c == 0.0 { 1.0 } else { -1.0 };
                // Feasible signed arc speeds for entering moves.
                if sigma > 0.0 {
                    (c, 0.0, len / dt)
                } else {
                    (c, -len / dt, 0.0)
                }
            }
        };
        let mut a = (best.speed - step).max(-self.v_bound).max(lo_feas);
        let mut b = (best.speed + step).min(self.v_bound).min(hi_feas);
        if !(b > a) {
            return;
        }
        let f = |speed: f64| -> f64 {
            let ts = s_from + speed * dt;
            dt * rc.eval(s_from, speed, t) + next(self.edge_point(edge, ts))
        };
        let mut x1 = b - INV_PHI * (b - a);
        let mut x2 = a + INV_PHI * (b - a);
        let mut f1 = f(x1);
        let mut f2 = f(x2);
        for _ in 0..GOLDEN_ITERS {
            if f1 > f2 {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + INV_PHI * (b - a);
                f2 = f(x2);
            } else {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - INV_PHI * (b - a);
                f1 = f(x1);
            }
        }
        let speed = 0.5 * (a + b);
        let value = f(speed);
        if value < best.value {
            best.value = value;
            best.speed = speed;
            best.target = self.edge_point(edge, s_from + speed * dt);
        }
    }
}

/// Solves the backward dynamic program. The terminal slice is set to the
/// terminal cost exactly; earlier slices take the one-step Bellman minimum.
pub fn solve_value(
    g: &Network,
    grid: &SpaceTimeGrid,
    cm: &CostModel,
    cfg: &SolverConfig,
) -> Result<(ValueField, SolveInfo)> {
    let moves = MoveSet::new(g, cm, grid, cfg)?;
    let mut vf = ValueField::zeros(grid.clone());
    let nodes = grid.nodes();
    let points: Vec<NetPoint> = nodes.iter().map(|&n| grid.node_point(n)).collect();
    let m = grid.step_count();
    for (i, &node) in nodes.iter().enumerate() {
        let tv = cm.terminal_cost(g, points[i])?;
        vf.set(m, node, tv);
    }
    let mut info = SolveInfo {
        v_bound: moves.v_bound,
        max_argmin_speed: 0.0,
        truncation_hits: 0,
    };
    for k in (0..m).rev() {
        let t = grid.time(k);
        let results = best_moves(&moves, &points, t, &vf, k + 1)?;
        for (i, mv) in results.iter().enumerate() {
            if mv.saturated {
                return Err(CoreError::SaturatedControl(format!(
                    "argmin speed {} saturates the control grid at slice {k}; \
                     raise the speed bound",
                    mv.speed
                )));
            }
            info.max_argmin_speed = info.max_argmin_speed.max(mv.speed.abs());
            info.truncation_hits += mv.hit_truncation as usize;
            vf.set(k, nodes[i], mv.value);
        }
    }
    Ok((vf, info))
}

#[cfg(feature = "parallel")]
fn best_moves(
    moves: &MoveSet<'_>,
    points: &[NetPoint],
    t: f64,
    vf: &ValueField,
    next_slice: usize,
) -> Result<Vec<Move>> {
    points
        .par_iter()
        .map(|&p| moves.best_from(p, t, |q| vf.point_value(next_slice, q)))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn best_moves(
    moves: &MoveSet<'_>,
    points: &[NetPoint],
    t: f64,
    vf: &ValueField,
    next_slice: usize,
) -> Result<Vec<Move>> {
    points
        .iter()
        .map(|&p| moves.best_from(p, t, |q| vf.point_value(next_slice, q)))
        .collect()
}

/// Residuals of the dynamic programming principle.
#[derive(Debug, Clone, Copy, Default)]
pub struct DppReport {
    /// Max over grid nodes and slices of |u - Bellman RHS|; zero by
    /// construction of the scheme.
    pub max_node_residual: f64,
    /// Max over off-grid probes of the interpolated one-step residual.
    pub max_probe_residual: f64,
    pub probes: usize,
}

/// Recomputes the one-step Bellman right-hand side at every grid node, and
/// at the provided off-grid probes `(edge, arc coordinate, time)`.
pub fn dpp_residual(
    g: &Network,
    grid: &SpaceTimeGrid,
    cm: &CostModel,
    cfg: &SolverConfig,
    vf: &ValueField,
    probes: &[(EdgeId, f64, f64)],
) -> Result<DppReport> {
    let moves = MoveSet::new(g, cm, grid, cfg)?;
    let nodes = grid.nodes();
    let mut report = DppReport::default();
    for k in 0..grid.step_count() {
        let t = grid.time(k);
        for &node in &nodes {
            let mv = moves.best_from(grid.node_point(node), t, |q| vf.point_value(k + 1, q))?;
            let res = (vf.get(k, node) - mv.value).abs();
            report.max_node_residual = report.max_node_residual.max(res);
        }
    }
    let dt = grid.dt();
    for &(edge, s, t) in probes {
        let t = t.min(grid.horizon() - dt).max(0.0);
        let s = s.clamp(0.0, grid.edge_len(edge));
        let here = vf.interp_spacetime(edge, s, t);
        let from = NetPoint::OnEdge { edge, s };
        let mv = moves.best_from(from, t, |q| vf.point_time(q, t + dt))?;
        report.max_probe_residual = report.max_probe_residual.max((here - mv.value).abs());
        report.probes += 1;
    }
    Ok(report)
}

/// Residuals of the Hamilton-Jacobi system on detected-smooth regions.
#[derive(Debug, Clone, Copy, Default)]
pub struct ViscosityReport {
    pub max_edge_residual: f64,
    pub smooth_nodes: usize,
    /// Nodes excluded by the second-difference kink detector.
    pub kink_nodes: usize,
    pub max_vertex_residual: f64,
    pub vertices_checked: usize,
    pub vertices_skipped: usize,
}

/// Checks `-du/dt + H(x, Du, t) = 0` at interior nodes whose undivided
/// second difference is below `10 dx` and at vertices whose one-sided
/// slopes stabilize under stride doubling.
pub fn viscosity_residual(
    g: &Network,
    grid: &SpaceTimeGrid,
    he: &HamiltonianEval<'_>,
    vf: &ValueField,
) -> Result<ViscosityReport> {
    let mut rep = ViscosityReport::default();
    let dt = grid.dt();
    let m = grid.step_count();
    for k in 1..m {
        let t = grid.time(k);
        for ei in 0..g.edge_count() {
            let e = EdgeId(ei);
            let h = grid.edge_spacing(e);
            let cells = grid.edge_cells(e);
            for j in 1..cells {
                let sd = vf.second_difference(k, e, j);
                if sd.abs() > 10.0 * h {
                    rep.kink_nodes += 1;
                    continue;
                }
                let x = grid.node_coord(e, j);
                let du = vf.central_slope(k, e, j);
                let dudt_neg = (vf.node_value(k, e, j) - vf.node_value(k + 1, e, j)) / dt;
                let res = (dudt_neg + he.edge(e, x, du, t)).abs();
                rep.max_edge_residual = rep.max_edge_residual.max(res);
                rep.smooth_nodes += 1;
            }
        }
        for v in 0..g.vertex_count() {
            let v = crate::geometry::VertexId(v);
            let incident = g.incident(v);
            let mut slopes = Vec::with_capacity(incident.len());
            let mut stable = true;
            for &e in incident {
                let s1 = vf.vertex_slope(g, k, v, e, 1);
                let s2 = vf.vertex_slope(g, k, v, e, 2);
                if (s1 - s2).abs() > 10.0 * grid.edge_spacing(e) {
                    stable = false;
                }
                slopes.push(s1);
            }
            if !stable {
                rep.vertices_skipped += 1;
                continue;
            }
            let h0 = he.vertex(g, v, &slopes, t)?;
            let u_now = vf.get(k, GridNode::Vertex(v));
            let u_next = vf.get(k + 1, GridNode::Vertex(v));
            let res = ((u_now - u_next) / dt + h0).abs();
            rep.max_vertex_residual = rep.max_vertex_residual.max(res);
            rep.vertices_checked += 1;
        }
    }
    Ok(rep)
}
