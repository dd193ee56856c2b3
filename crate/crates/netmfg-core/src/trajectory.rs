//! Time-gridded admissible trajectories, optimal synthesis from a solved
//! value field, and first-order optimality residual checks.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::cost::CostModel;
use crate::error::CoreError;
use crate::geometry::{EdgeId, NetPoint, Network, VertexId};
use crate::grid::{SpaceTimeGrid, ValueField};
use crate::solver::{MoveSet, SolverConfig};
use crate::Result;

/// A trajectory sampled on consecutive time slices. Points are stored in
/// canonical form; consecutive points must lie on a common edge (or one of
/// them must be a vertex of that edge).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub start_slice: usize,
    pub points: Vec<NetPoint>,
}

/// What happens during one time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Step {
    /// Both endpoints are the same vertex; the speed is zero.
    AtVertex(VertexId),
    /// Travel (possibly at zero speed) within an edge; `mid` is the midpoint
    /// arc coordinate and `speed` the signed arc speed.
    OnEdge { edge: EdgeId, mid: f64, speed: f64 },
}

impl Trajectory {
    pub fn new(start_slice: usize, points: Vec<NetPoint>) -> Self {
        Trajectory {
            start_slice,
            points,
        }
    }

    pub fn step_count(&self) -> usize {
        self.points.len().saturating_sub(1)
    }

    pub fn end_slice(&self) -> usize {
        self.start_slice + self.step_count()
    }

    /// Resolves step `k` into a vertex-resident or on-edge move.
    pub fn step(&self, g: &Network, dt: f64, k: usize) -> Result<Step> {
        let a = g.canonicalize(self.points[k])?;
        let b = g.canonicalize(self.points[k + 1])?;
        resolve_step(g, dt, a, b)
    }

    /// Signed arc speed of each step (zero for vertex-resident steps).
    pub fn speeds(&self, g: &Network, dt: f64) -> Result<Vec<f64>> {
        (0..self.step_count())
            .map(|k| {
                Ok(match self.step(g, dt, k)? {
                    Step::AtVertex(_) => 0.0,
                    Step::OnEdge { speed, .. } => speed,
                })
            })
            .collect()
    }

    /// Checks admissibility: every step resolvable, and speeds within
    /// `v_max` when provided.
    pub fn validate(&self, g: &Network, dt: f64, v_max: Option<f64>) -> Result<()> {
        if self.points.len() < 2 {
            return Err(CoreError::InadmissibleTrajectory(String::from(
                "fewer than two points",
            )));
        }
        for k in 0..self.step_count() {
            let step = self.step(g, dt, k)?;
            if let (Step::OnEdge { speed, .. }, Some(v)) = (step, v_max) {
                if speed.abs() > v + 1e-12 {
                    return Err(CoreError::InadmissibleTrajectory(format!(
                        "step {k} speed {speed} exceeds the bound {v}"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn resolve_step(g: &Network, dt: f64, a: NetPoint, b: NetPoint) -> Result<Step> {
    match (a, b) {
        (NetPoint::Vertex(va), NetPoint::Vertex(vb)) => {
            if va == vb {
                return Ok(Step::AtVertex(va));
            }
            // One step across a full edge shared by the two vertices.
            for &e in g.incident(va) {
                if let Some(cb) = g.vertex_coord_on(e, vb) {
                    let ca = g.vertex_coord_on(e, va).expect("incident");
                    return Ok(Step::OnEdge {
                        edge: e,
                        mid: 0.5 * (ca + cb),
                        speed: (cb - ca) / dt,
                    });
                }
            }
            Err(CoreError::InadmissibleTrajectory(format!(
                "vertices {} and {} share no edge",
                va.0, vb.0
            )))
        }
        (NetPoint::Vertex(v), NetPoint::OnEdge { edge, s }) => {
            let c = g.vertex_coord_on(edge, v).ok_or_else(|| {
                CoreError::InadmissibleTrajectory(format!(
                    "vertex {} is not an endpoint of edge {}",
                    v.0, edge.0
                ))
            })?;
            Ok(Step::OnEdge {
                edge,
                mid: 0.5 * (c + s),
                speed: (s - c) / dt,
            })
        }
        (NetPoint::OnEdge { edge, s }, NetPoint::Vertex(v)) => {
            let c = g.vertex_coord_on(edge, v).ok_or_else(|| {
                CoreError::InadmissibleTrajectory(format!(
                    "vertex {} is not an endpoint of edge {}",
                    v.0, edge.0
                ))
            })?;
            Ok(Step::OnEdge {
                edge,
                mid: 0.5 * (s + c),
                speed: (c - s) / dt,
            })
        }
        (NetPoint::OnEdge { edge: ea, s: sa }, NetPoint::OnEdge { edge: eb, s: sb }) => {
            if ea != eb {
                return Err(CoreError::InadmissibleTrajectory(format!(
                    "interior points on different edges {} and {}",
                    ea.0, eb.0
                )));
            }
            Ok(Step::OnEdge {
                edge: ea,
                mid: 0.5 * (sa + sb),
                speed: (sb - sa) / dt,
            })
        }
    }
}

/// Diagnostics from one synthesis run.
#[derive(Debug, Clone, Copy, Default)]
pub struct SynthesisInfo {
    /// Distance by which the start point was snapped to a grid node.
    pub snap_distance: f64,
    /// Steps at which the one-step argmin was multi-valued within 1e-10.
    pub tie_steps: usize,
    /// Largest chosen |speed|.
    pub max_speed: f64,
}

/// Follows the one-step Bellman argmin of a solved value field from `start`
/// at slice `start_slice` to the horizon.
///
/// The speed is read from the argmin rather than from a derivative of the
/// field, so kinks of the value function need no special casing. Errors when
/// a chosen speed saturates the control grid.
pub fn synthesize(
    g: &Network,
    cm: &CostModel,
    vf: &ValueField,
    cfg: &SolverConfig,
    start: NetPoint,
    start_slice: usize,
) -> Result<(Trajectory, SynthesisInfo)> {
    let grid = vf.grid();
    let moves = MoveSet::new(g, cm, grid, cfg)?;
    let (node, snap_distance) = grid.snap(g, start)?;
    let mut info = SynthesisInfo {
        snap_distance,
        ..SynthesisInfo::default()
    };
    let mut points = Vec::with_capacity(grid.slice_count() - start_slice);
    let mut current = grid.node_point(node);
    points.push(current);
    for k in start_slice..grid.step_count() {
        let t = grid.time(k);
        // Synthesis reads the next slice through a C1 interpolant so the
        // argmin speed varies smoothly along edges instead of snapping to
        // interpolation-cell slopes.
        let best = moves.best_from_tracked(current, t, |p| vf.point_value_smooth(k + 1, p))?;
        if best.saturated {
            return Err(CoreError::SaturatedControl(format!(
                "synthesis chose speed {} at slice {k}; raise the speed bound",
                best.speed
            )));
        }
        if best.near_tie {
            info.tie_steps += 1;
        }
        info.max_speed = info.max_speed.max(best.speed.abs());
        current = best.target;
        points.push(current);
    }
    Ok((Trajectory::new(start_slice, points), info))
}

/// Residual of the discrete interior-arc optimality condition
/// `d/ds (d cost/d speed) = d cost/d position` on one maximal interior arc.
#[derive(Debug, Clone)]
pub struct ArcResidual {
    /// Step index at which the arc starts.
    pub start_step: usize,
    /// Number of steps in the arc.
    pub steps: usize,
    pub max_residual: f64,
}

#[derive(Debug, Clone, Default)]
pub struct EulerLagrangeReport {
    pub arcs: Vec<ArcResidual>,
    /// Arcs skipped because they are shorter than three steps.
    pub skipped_short: usize,
}

impl EulerLagrangeReport {
    pub fn max_residual(&self) -> f64 {
        self.arcs
            .iter()
            .map(|a| a.max_residual)
            .fold(0.0, f64::max)
    }
}

/// Evaluates the discrete momentum balance along maximal arcs whose interior
/// points stay strictly inside one edge.
pub fn euler_lagrange_residual(
    g: &Network,
    cm: &CostModel,
    grid: &SpaceTimeGrid,
    tr: &Trajectory,
) -> Result<EulerLagrangeReport> {
    let dt = grid.dt();
    let n = tr.points.len();
    let mut report = EulerLagrangeReport::default();
    let interior_edge = |p: NetPoint| -> Option<(EdgeId, f64)> {
        match p {
            NetPoint::OnEdge { edge, s } => Some((edge, s)),
            NetPoint::Vertex(_) => None,
        }
    };
    let mut i = 0;
    while i < n {
        // Maximal run of interior points on one edge.
        let Some((edge, _)) = interior_edge(g.canonicalize(tr.points[i])?) else {
            i += 1;
            continue;
        };
        let mut j = i;
        while j + 1 < n {
            match interior_edge(g.canonicalize(tr.points[j + 1])?) {
                Some((e2, _)) if e2 == edge => j += 1,
                _ => break,
            }
        }
        let steps = j - i;
        if steps < 3 {
            if steps >= 1 {
                report.skipped_short += 1;
            }
            i = j + 1;
            continue;
        }
        let rc = &cm.edges[edge.0];
        let coord = |k: usize| -> f64 {
            match tr.points[k] {
                NetPoint::OnEdge { s, .. } => s,
                NetPoint::Vertex(_) => unreachable!("interior arc"),
            }
        };
        // Momenta at step midpoints, position balance at shared nodes.
        let mut max_res = 0.0f64;
        for k in i..(j - 1) {
            let t_mid0 = grid.time(tr.start_slice + k) + 0.5 * dt;
            let t_mid1 = grid.time(tr.start_slice + k + 1) + 0.5 * dt;
            let y0 = coord(k);
            let y1 = coord(k + 1);
            let y2 = coord(k + 2);
            let a0 = (y1 - y0) / dt;
            let a1 = (y2 - y1) / dt;
            let p0 = rc.da(0.5 * (y0 + y1), a0, t_mid0);
            let p1 = rc.da(0.5 * (y1 + y2), a1, t_mid1);
            let rhs = rc.dy(y1, 0.5 * (a0 + a1), grid.time(tr.start_slice + k + 1));
            max_res = max_res.max(((p1 - p0) / dt - rhs).abs());
        }
        report.arcs.push(ArcResidual {
            start_step: i,
            steps,
            max_residual: max_res,
        });
        i = j + 1;
    }
    Ok(report)
}

/// Terminal optimality residual `|d cost/d speed + g'|` for trajectories
/// ending strictly inside an edge; `None` when the terminal point is a
/// vertex (or the trajectory does not reach the horizon).
pub fn transversality_residual(
    g: &Network,
    cm: &CostModel,
    grid: &SpaceTimeGrid,
    tr: &Trajectory,
) -> Result<Option<f64>> {
    if tr.end_slice() != grid.step_count() {
        return Ok(None);
    }
    let last = g.canonicalize(*tr.points.last().expect("nonempty"))?;
    let NetPoint::OnEdge { edge, s } = last else {
        return Ok(None);
    };
    let k = tr.step_count() - 1;
    let speed = match tr.step(g, grid.dt(), k)? {
        Step::OnEdge { speed, .. } => speed,
        Step::AtVertex(_) => return Ok(None),
    };
    let horizon = grid.horizon();
    let momentum = cm.edges[edge.0].da(s, speed, horizon);
    let g_prime = cm.terminal_edges[edge.0].dy(s, 0.0);
    Ok(Some((momentum + g_prime).abs()))
}

/// Empirical speed statistics for a batch of trajectories.
#[derive(Debug, Clone, Copy)]
pub struct SpeedReport {
    pub max_speed: f64,
    pub bound: f64,
    /// Largest speed within 10% of the configured bound.
    pub near_bound: bool,
}

pub fn speed_report(
    g: &Network,
    grid: &SpaceTimeGrid,
    batch: &[Trajectory],
    bound: f64,
) -> Result<SpeedReport> {
    let mut max_speed = 0.0f64;
    for tr in batch {
        for s in tr.speeds(g, grid.dt())? {
            max_speed = max_speed.max(s.abs());
        }
    }
    Ok(SpeedReport {
        max_speed,
        bound,
        near_bound: max_speed >= 0.9 * bound,
    })
}
