//! Running, vertex and terminal costs.
//!
//! The built-in running-cost family on an edge is
//! `cost(y, a, s) = kappa(y, s) * |a|^p + lambda(y, s)` with `kappa` bounded
//! below by a positive constant, which keeps derivative evaluators exact.
//! Arbitrary tabulated costs enter through spline or piecewise-linear
//! profiles for `kappa` and `lambda`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::geometry::{NetPoint, Network, VertexId};
use crate::grid::SpaceTimeGrid;
use crate::math;
use crate::trajectory::Trajectory;
use crate::Result;

/// Natural cubic spline through `(xs, ys)`, with linear extrapolation.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let n = xs.len();
        if n < 2 || ys.len() != n {
            return Err(CoreError::InvalidConfig(String::from(
                "spline needs at least two knots and matching values",
            )));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(CoreError::InvalidConfig(String::from(
                "spline knots must be strictly increasing",
            )));
        }
        // Tridiagonal solve for natural boundary conditions (m[0]=m[n-1]=0).
        let mut m = vec![0.0; n];
        if n > 2 {
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 0..k {
                let h0 = xs[i + 1] - xs[i];
                let h1 = xs[i + 2] - xs[i + 1];
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] = 6.0
                    * ((ys[i + 2] - ys[i + 1]) / h1 - (ys[i + 1] - ys[i]) / h0);
            }
            for i in 1..k {
                let h = xs[i + 1] - xs[i];
                let w = h / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (1..k).rev() {
                m[i] = (rhs[i - 1] - upper[i - 1] * m[i + 1]) / diag[i - 1];
            }
        }
        Ok(CubicSpline { xs, ys, m })
    }

    fn segment(&self, x: f64) -> usize {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return 0;
        }
        if x >= self.xs[n - 1] {
            return n - 2;
        }
        // Binary search for the segment containing x.
        let mut lo = 0;
        let mut hi = n - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.xs[mid] <= x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    pub fn eval(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        a * self.ys[i]
            + b * self.ys[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    pub fn deriv(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        (self.ys[i + 1] - self.ys[i]) / h
            + ((3.0 * b * b - 1.0) * self.m[i + 1] - (3.0 * a * a - 1.0) * self.m[i]) * h / 6.0
    }
}

/// Piecewise-linear table on a uniform grid; preserves pointwise bounds of
/// the tabulated data, unlike a cubic spline.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearTable {
    pub x0: f64,
    pub dx: f64,
    pub values: Vec<f64>,
}

impl LinearTable {
    pub fn new(x0: f64, dx: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 || !(dx > 0.0) {
            return Err(CoreError::InvalidConfig(String::from(
                "linear table needs at least two values and a positive step",
            )));
        }
        Ok(LinearTable { x0, dx, values })
    }

    fn segment(&self, x: f64) -> (usize, f64) {
        let n = self.values.len();
        let u = (x - self.x0) / self.dx;
        let i = math::floor(u) as isize;
        let i = i.clamp(0, n as isize - 2) as usize;
        (i, u - i as f64)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (i, frac) = self.segment(x);
        self.values[i] + frac * (self.values[i + 1] - self.values[i])
    }

    pub fn deriv(&self, x: f64) -> f64 {
        let (i, _) = self.segment(x);
        (self.values[i + 1] - self.values[i]) / self.dx
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Scalar coefficient profile on an edge: a function of the arc coordinate
/// and time.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    /// `c + cy*y + cy2*y^2 + ct*t`
    Poly { c: f64, cy: f64, cy2: f64, ct: f64 },
    /// Tabulated in `y`, cubic interpolation, time-independent.
    Spline(CubicSpline),
    /// Tabulated in `y`, linear interpolation, time-independent.
    Table(LinearTable),
}

impl Profile {
    pub fn constant(c: f64) -> Self {
        Profile::Poly {
            c,
            cy: 0.0,
            cy2: 0.0,
            ct: 0.0,
        }
    }

    pub fn eval(&self, y: f64, t: f64) -> f64 {
        match self {
            Profile::Poly { c, cy, cy2, ct } => c + cy * y + cy2 * y * y + ct * t,
            Profile::Spline(sp) => sp.eval(y),
            Profile::Table(tb) => tb.eval(y),
        }
    }

    pub fn dy(&self, y: f64, _t: f64) -> f64 {
        match self {
            Profile::Poly { cy, cy2, .. } => cy + 2.0 * cy2 * y,
            Profile::Spline(sp) => sp.deriv(y),
            Profile::Table(tb) => tb.deriv(y),
        }
    }
}

/// Coefficient profile that can change between time slices; slices are
/// blended linearly in time, which preserves pointwise bounds.
#[derive(Debug, Clone, PartialEq)]
pub enum TimeProfile {
    Fixed(Profile),
    Sliced {
        t0: f64,
        dt: f64,
        slices: Vec<Profile>,
    },
}

impl TimeProfile {
    pub fn constant(c: f64) -> Self {
        TimeProfile::Fixed(Profile::constant(c))
    }

    pub fn eval(&self, y: f64, t: f64) -> f64 {
        match self {
            TimeProfile::Fixed(p) => p.eval(y, t),
            TimeProfile::Sliced { t0, dt, slices } => {
                let (i, theta) = slice_blend(*t0, *dt, slices.len(), t);
                if theta == 0.0 {
                    slices[i].eval(y, t)
                } else {
                    (1.0 - theta) * slices[i].eval(y, t) + theta * slices[i + 1].eval(y, t)
                }
            }
        }
    }

    pub fn dy(&self, y: f64, t: f64) -> f64 {
        match self {
            TimeProfile::Fixed(p) => p.dy(y, t),
            TimeProfile::Sliced { t0, dt, slices } => {
                let (i, theta) = slice_blend(*t0, *dt, slices.len(), t);
                if theta == 0.0 {
                    slices[i].dy(y, t)
                } else {
                    (1.0 - theta) * slices[i].dy(y, t) + theta * slices[i + 1].dy(y, t)
                }
            }
        }
    }
}

fn slice_blend(t0: f64, dt: f64, n: usize, t: f64) -> (usize, f64) {
    let u = (t - t0) / dt;
    let i = math::floor(u) as isize;
    if i < 0 {
        return (0, 0.0);
    }
    let i = i as usize;
    if i >= n - 1 {
        return (n - 1, 0.0);
    }
    (i, u - i as f64)
}

/// Scalar function of time, for the vertex-specific costs.
#[derive(Debug, Clone, PartialEq)]
pub enum TimeFn {
    Const(f64),
    /// `c + ct*t`
    Affine { c: f64, ct: f64 },
    /// Right-continuous steps: value is `values[k]` for
    /// `breaks[k-1] <= t < breaks[k]` (with `values.len() == breaks.len()+1`).
    Steps { breaks: Vec<f64>, values: Vec<f64> },
    /// One value per time slice, blended linearly in between.
    SlicedLinear { t0: f64, dt: f64, values: Vec<f64> },
}

impl TimeFn {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeFn::Const(c) => *c,
            TimeFn::Affine { c, ct } => c + ct * t,
            TimeFn::Steps { breaks, values } => {
                let k = breaks.iter().filter(|&&b| t >= b).count();
                values[k]
            }
            TimeFn::SlicedLinear { t0, dt, values } => {
                let (i, theta) = slice_blend(*t0, *dt, values.len(), t);
                if theta == 0.0 {
                    values[i]
                } else {
                    (1.0 - theta) * values[i] + theta * values[i + 1]
                }
            }
        }
    }

    pub fn min_on(&self, t_end: f64) -> f64 {
        match self {
            TimeFn::Const(c) => *c,
            TimeFn::Affine { c, ct } => {
                let a = *c;
                let b = c + ct * t_end;
                a.min(b)
            }
            TimeFn::Steps { values, .. } | TimeFn::SlicedLinear { values, .. } => {
                values.iter().copied().fold(f64::INFINITY, f64::min)
            }
        }
    }
}

/// Running cost on one edge: `kappa(y,s) |a|^p + lambda(y,s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningCost {
    pub p: f64,
    pub kappa: TimeProfile,
    pub lambda: TimeProfile,
}

impl RunningCost {
    pub fn quadratic(kappa: f64, lambda: f64) -> Self {
        RunningCost {
            p: 2.0,
            kappa: TimeProfile::constant(kappa),
            lambda: TimeProfile::constant(lambda),
        }
    }

    pub fn eval(&self, y: f64, a: f64, t: f64) -> f64 {
        self.kappa.eval(y, t) * math::abs_pow(a, self.p) + self.lambda.eval(y, t)
    }

    /// Partial derivative in the speed variable.
    pub fn da(&self, y: f64, a: f64, t: f64) -> f64 {
        self.kappa.eval(y, t) * self.p * math::abs_pow_grad(a, self.p)
    }

    /// Partial derivative in the position variable.
    pub fn dy(&self, y: f64, a: f64, t: f64) -> f64 {
        self.kappa.dy(y, t) * math::abs_pow(a, self.p) + self.lambda.dy(y, t)
    }
}

/// Full cost data for a network: one running cost per edge, one specific
/// cost per vertex, terminal costs per edge and per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    pub edges: Vec<RunningCost>,
    pub vertex_specific: Vec<TimeFn>,
    pub terminal_edges: Vec<Profile>,
    pub terminal_vertices: Vec<f64>,
}

/// Bounds extracted from a cost model by sampling; used to configure the
/// solver speed bound.
#[derive(Debug, Clone, Copy)]
pub struct CoercivityData {
    /// Constant `C0` with `cost >= C0 (|a|^p - 1)` on the sampled region.
    pub c0: f64,
    /// Largest zero-speed running cost over the sampled region.
    pub zero_speed_max: f64,
    /// Common exponent.
    pub p: f64,
}

impl CostModel {
    pub fn validate(&self, g: &Network) -> Result<()> {
        if self.edges.len() != g.edge_count() {
            return Err(CoreError::InvalidConfig(format!(
                "{} running costs for {} edges",
                self.edges.len(),
                g.edge_count()
            )));
        }
        if self.vertex_specific.len() != g.vertex_count()
            || self.terminal_vertices.len() != g.vertex_count()
        {
            return Err(CoreError::InvalidConfig(String::from(
                "vertex cost count does not match the vertex count",
            )));
        }
        if self.terminal_edges.len() != g.edge_count() {
            return Err(CoreError::InvalidConfig(String::from(
                "terminal cost count does not match the edge count",
            )));
        }
        for (i, rc) in self.edges.iter().enumerate() {
            if !(rc.p > 1.0) {
                return Err(CoreError::InvalidConfig(format!(
                    "edge {i}: exponent must exceed 1"
                )));
            }
        }
        Ok(())
    }

    /// Samples kappa, lambda and the vertex costs over the network and the
    /// horizon, returning the tightest coercivity data. Errors when the
    /// sampled costs admit no positive `C0`.
    pub fn coercivity_data(&self, g: &Network, horizon: f64) -> Result<CoercivityData> {
        let ny = 65;
        let nt = 17;
        let mut kappa_min = f64::INFINITY;
        let mut lambda_min = f64::INFINITY;
        let mut zero_speed_max = f64::NEG_INFINITY;
        for (ei, rc) in self.edges.iter().enumerate() {
            let len = g.effective_length(crate::geometry::EdgeId(ei));
            for iy in 0..ny {
                let y = len * iy as f64 / (ny - 1) as f64;
                for it in 0..nt {
                    let t = horizon * it as f64 / (nt - 1) as f64;
                    let k = rc.kappa.eval(y, t);
                    let l = rc.lambda.eval(y, t);
                    kappa_min = kappa_min.min(k);
                    lambda_min = lambda_min.min(l);
                    zero_speed_max = zero_speed_max.max(l);
                }
            }
        }
        let mut vertex_min = f64::INFINITY;
        for vf in &self.vertex_specific {
            for it in 0..nt {
                let t = horizon * it as f64 / (nt - 1) as f64;
                vertex_min = vertex_min.min(vf.eval(t));
            }
        }
        if !(kappa_min > 0.0) {
            return Err(CoreError::InvalidConfig(format!(
                "sampled kappa minimum {kappa_min} is not positive"
            )));
        }
        let needed = (-lambda_min).max(-vertex_min).max(0.0);
        if needed > kappa_min {
            return Err(CoreError::InvalidConfig(format!(
                "no valid coercivity constant: kappa_min = {kappa_min} < {needed}"
            )));
        }
        let c0 = kappa_min;
        let p = self.edges[0].p;
        Ok(CoercivityData {
            c0,
            zero_speed_max,
            p,
        })
    }

    /// Cost rate for waiting at a vertex: the minimum of the vertex-specific
    /// cost and the zero-speed running costs of the incident edges.
    pub fn vertex_running_cost(&self, g: &Network, v: VertexId, t: f64) -> Result<f64> {
        if v.0 >= g.vertex_count() {
            return Err(CoreError::UnknownId(format!("vertex {}", v.0)));
        }
        let mut best = self.vertex_specific[v.0].eval(t);
        for &e in g.incident(v) {
            let c = g.vertex_coord_on(e, v).expect("incident edge");
            best = best.min(self.edges[e.0].eval(c, 0.0, t));
        }
        Ok(best)
    }

    /// Terminal cost at a network point; at a vertex this is the minimum of
    /// the vertex terminal constant and the incident edge values.
    pub fn terminal_cost(&self, g: &Network, x: NetPoint) -> Result<f64> {
        match g.canonicalize(x)? {
            NetPoint::OnEdge { edge, s } => Ok(self.terminal_edges[edge.0].eval(s, 0.0)),
            NetPoint::Vertex(v) => {
                let mut best = self.terminal_vertices[v.0];
                for &e in g.incident(v) {
                    let c = g.vertex_coord_on(e, v).expect("incident edge");
                    best = best.min(self.terminal_edges[e.0].eval(c, 0.0));
                }
                Ok(best)
            }
        }
    }

    /// Largest midpoint-convexity violation of `a -> cost(y,a,t)` against a
    /// strong-convexity margin, over a sample grid. Negative results mean
    /// the margin holds strictly.
    pub fn convexity_violation(&self, g: &Network, horizon: f64, margin: f64) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        let speeds = [-3.0, -1.7, -0.4, 0.0, 0.9, 2.2, 3.1];
        for (ei, rc) in self.edges.iter().enumerate() {
            let len = g.effective_length(crate::geometry::EdgeId(ei));
            for iy in 0..9 {
                let y = len * iy as f64 / 8.0;
                for it in 0..5 {
                    let t = horizon * it as f64 / 4.0;
                    for (i, &a1) in speeds.iter().enumerate() {
                        for &a2 in speeds.iter().skip(i + 1) {
                            let mid = rc.eval(y, 0.5 * (a1 + a2), t);
                            let avg = 0.5 * (rc.eval(y, a1, t) + rc.eval(y, a2, t));
                            let gap = avg - mid - margin * 0.25 * (a1 - a2) * (a1 - a2);
                            worst = worst.max(-gap);
                        }
                    }
                }
            }
        }
        worst
    }
}

/// Integrates the running cost along a time-gridded trajectory with the
/// midpoint rule and adds the terminal cost.
///
/// Steps whose endpoints canonicalize to the same vertex are charged the
/// vertex waiting cost.
pub fn trajectory_cost(
    g: &Network,
    cm: &CostModel,
    grid: &SpaceTimeGrid,
    tr: &Trajectory,
) -> Result<f64> {
    let dt = grid.dt();
    let mut total = 0.0;
    for k in 0..tr.step_count() {
        let t_mid = grid.time(tr.start_slice + k) + 0.5 * dt;
        let step = tr.step(g, dt, k)?;
        let rate = match step {
            crate::trajectory::Step::AtVertex(v) => cm.vertex_running_cost(g, v, t_mid)?,
            crate::trajectory::Step::OnEdge {
                edge,
                mid,
                speed,
            } => cm.edges[edge.0].eval(mid, speed, t_mid),
        };
        total += dt * rate;
    }
    total += cm.terminal_cost(g, *tr.points.last().expect("nonempty trajectory"))?;
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Network;
    use crate::grid::SpaceTimeGrid;
    use crate::trajectory::Trajectory;

    fn junction2() -> Network {
        Network::junction(2, 4.0).unwrap()
    }

    fn model_with(
        g: &Network,
        edges: Vec<RunningCost>,
        vertex: TimeFn,
        terminal: Vec<Profile>,
        g_star: f64,
    ) -> CostModel {
        CostModel {
            edges,
            vertex_specific: vec![vertex; g.vertex_count()],
            terminal_edges: terminal,
            terminal_vertices: vec![g_star; g.vertex_count()],
        }
    }

    #[test]
    fn vertex_running_cost_takes_minimum() {
        let g = junction2();
        // lambda_1 = 0, lambda_2 = 1, specific cost 5.
        let cm = model_with(
            &g,
            vec![RunningCost::quadratic(1.0, 0.0), RunningCost::quadratic(1.0, 1.0)],
            TimeFn::Const(5.0),
            vec![Profile::constant(0.0), Profile::constant(0.0)],
            0.0,
        );
        assert_eq!(cm.vertex_running_cost(&g, VertexId(0), 0.3).unwrap(), 0.0);

        let cm2 = model_with(
            &g,
            vec![RunningCost::quadratic(1.0, 0.0), RunningCost::quadratic(1.0, 1.0)],
            TimeFn::Const(-0.5),
            vec![Profile::constant(0.0), Profile::constant(0.0)],
            0.0,
        );
        assert_eq!(cm2.vertex_running_cost(&g, VertexId(0), 0.0).unwrap(), -0.5);

        // Time-varying zero-speed cost on edge 1: lambda = t.
        let cm3 = model_with(
            &g,
            vec![
                RunningCost {
                    p: 2.0,
                    kappa: TimeProfile::constant(1.0),
                    lambda: TimeProfile::Fixed(Profile::Poly {
                        c: 0.0,
                        cy: 0.0,
                        cy2: 0.0,
                        ct: 1.0,
                    }),
                },
                RunningCost::quadratic(1.0, 1.0),
            ],
            TimeFn::Const(5.0),
            vec![Profile::constant(0.0), Profile::constant(0.0)],
            0.0,
        );
        assert_eq!(cm3.vertex_running_cost(&g, VertexId(0), 0.3).unwrap(), 0.3);
    }

    #[test]
    fn terminal_cost_edge_and_vertex() {
        let g = junction2();
        let gx = Profile::Poly {
            c: 0.0,
            cy: 1.0,
            cy2: 0.0,
            ct: 0.0,
        };
        let cm = model_with(
            &g,
            vec![RunningCost::quadratic(1.0, 0.0); 2],
            TimeFn::Const(0.0),
            vec![gx.clone(), Profile::constant(0.0)],
            0.0,
        );
        assert_eq!(cm.terminal_cost(&g, NetPoint::on_edge(0, 1.0)).unwrap(), 1.0);
        assert_eq!(cm.terminal_cost(&g, NetPoint::vertex(0)).unwrap(), 0.0);

        let cm2 = model_with(
            &g,
            vec![RunningCost::quadratic(1.0, 0.0); 2],
            TimeFn::Const(0.0),
            vec![gx, Profile::constant(0.0)],
            -1.0,
        );
        assert_eq!(cm2.terminal_cost(&g, NetPoint::vertex(0)).unwrap(), -1.0);
    }

    #[test]
    fn trajectory_cost_examples() {
        let g = junction2();
        let grid = SpaceTimeGrid::new(&g, 0.1, 0.1, 1.0).unwrap();
        // Staying at the vertex with zero waiting and terminal cost is free.
        let cm0 = model_with(
            &g,
            vec![RunningCost::quadratic(1.0, 0.0); 2],
            TimeFn::Const(0.0),
            vec![Profile::constant(0.0); 2],
            0.0,
        );
        let stay = Trajectory::new(0, vec![NetPoint::vertex(0); grid.slice_count()]);
        assert_eq!(trajectory_cost(&g, &cm0, &grid, &stay).unwrap(), 0.0);

        // Constant speed -1/2 on edge 0 from y=1: quarter running + half terminal.
        let gx = Profile::Poly {
            c: 0.0,
            cy: 1.0,
            cy2: 0.0,
            ct: 0.0,
        };
        let cm = model_with(
            &g,
            vec![RunningCost::quadratic(1.0, 0.0); 2],
            TimeFn::Const(5.0),
            vec![gx, Profile::constant(0.0)],
            0.0,
        );
        let m = grid.slice_count();
        let pts: Vec<NetPoint> = (0..m)
            .map(|k| NetPoint::on_edge(0, 1.0 - 0.5 * grid.time(k)))
            .collect();
        let tr = Trajectory::new(0, pts);
        let cost = trajectory_cost(&g, &cm, &grid, &tr).unwrap();
        assert!((cost - 0.75).abs() < 1e-12, "cost = {cost}");
    }

    #[test]
    fn trajectory_cost_additive_over_concatenation() {
        let g = junction2();
        let grid = SpaceTimeGrid::new(&g, 0.1, 0.1, 1.0).unwrap();
        let m = grid.slice_count();
        let pts: Vec<NetPoint> = (0..m)
            .map(|k| NetPoint::on_edge(0, 1.0 + 0.3 * grid.time(k)))
            .collect();
        let cm = model_with(
            &g,
            vec![RunningCost::quadratic(2.0, 0.5); 2],
            TimeFn::Const(5.0),
            vec![Profile::constant(0.0); 2],
            0.0,
        );
        let full = Trajectory::new(0, pts.clone());
        let split = 4;
        let first = Trajectory::new(0, pts[..=split].to_vec());
        let second = Trajectory::new(split, pts[split..].to_vec());
        let j_full = trajectory_cost(&g, &cm, &grid, &full).unwrap();
        let j_first = trajectory_cost(&g, &cm, &grid, &first).unwrap();
        let j_second = trajectory_cost(&g, &cm, &grid, &second).unwrap();
        // Both halves add the terminal cost at their own endpoint; the
        // shared-point terminal cancels because g = 0 except at the split? No:
        // concatenation additivity refers to the running integral, so compare
        // after removing the extra terminal evaluation at the split point.
        let split_terminal = cm
            .terminal_cost(&g, pts[split])
            .unwrap();
        assert!((j_first - split_terminal + j_second - j_full).abs() < 1e-12);
    }

    #[test]
    fn refinement_converges_to_smooth_integral() {
        // Smooth path y(t) = 1 + 0.4 sin(t) with cost a^2 + y^2; compare the
        // midpoint-rule cost of its time-grid interpolant against fine
        // Simpson quadrature of the exact integrand.
        let g = junction2();
        let cm = model_with(
            &g,
            vec![
                RunningCost {
                    p: 2.0,
                    kappa: TimeProfile::constant(1.0),
                    lambda: TimeProfile::Fixed(Profile::Poly {
                        c: 0.0,
                        cy: 0.0,
                        cy2: 1.0,
                        ct: 0.0,
                    }),
                },
                RunningCost::quadratic(1.0, 0.0),
            ],
            TimeFn::Const(5.0),
            vec![Profile::constant(0.0); 2],
            0.0,
        );
        let y = |t: f64| 1.0 + 0.4 * t.sin();
        let v = |t: f64| 0.4 * t.cos();
        let integrand = |t: f64| v(t) * v(t) + y(t) * y(t);
        // Simpson oracle on 10^4 intervals.
        let n = 10_000;
        let h = 1.0 / n as f64;
        let mut exact = 0.0;
        for i in 0..n {
            let t0 = i as f64 * h;
            exact += h / 6.0
                * (integrand(t0) + 4.0 * integrand(t0 + 0.5 * h) + integrand(t0 + h));
        }
        let cost_at = |steps: usize| -> f64 {
            let grid = SpaceTimeGrid::new(&g, 0.05, 1.0 / steps as f64, 1.0).unwrap();
            let pts: Vec<NetPoint> = (0..grid.slice_count())
                .map(|k| NetPoint::on_edge(0, y(grid.time(k))))
                .collect();
            let tr = Trajectory::new(0, pts);
            trajectory_cost(&g, &cm, &grid, &tr).unwrap()
        };
        let e1 = (cost_at(50) - exact).abs();
        let e2 = (cost_at(100) - exact).abs();
        assert!(e2 < 0.6 * e1, "no first-order decay: {e1} vs {e2}");
    }

    #[test]
    fn coercivity_and_convexity_checks() {
        let g = junction2();
        let cm = model_with(
            &g,
            vec![RunningCost::quadratic(1.0, 0.0), RunningCost::quadratic(2.0, -0.5)],
            TimeFn::Const(-0.5),
            vec![Profile::constant(0.0); 2],
            0.0,
        );
        let data = cm.coercivity_data(&g, 1.0).unwrap();
        assert!(data.c0 > 0.0 && data.c0 <= 1.0);
        // Quadratic family with kappa >= 1 has strong-convexity margin 1.
        assert!(cm.convexity_violation(&g, 1.0, 1.0) <= 1e-12);
        // A margin beyond the actual curvature is violated.
        assert!(cm.convexity_violation(&g, 1.0, 3.0) > 0.0);

        // lambda below -kappa leaves no valid constant.
        let bad = model_with(
            &g,
            vec![RunningCost::quadratic(0.5, -2.0), RunningCost::quadratic(1.0, 0.0)],
            TimeFn::Const(0.0),
            vec![Profile::constant(0.0); 2],
            0.0,
        );
        assert!(bad.coercivity_data(&g, 1.0).is_err());
    }

    #[test]
    fn derivatives_match_central_differences() {
        let rc = RunningCost {
            p: 2.0,
            kappa: TimeProfile::Fixed(Profile::Poly {
                c: 1.0,
                cy: 0.2,
                cy2: 0.05,
                ct: 0.0,
            }),
            lambda: TimeProfile::Fixed(Profile::Poly {
                c: 0.3,
                cy: -0.1,
                cy2: 0.4,
                ct: 0.1,
            }),
        };
        let h = 1e-5;
        for &(y, a, t) in &[(0.5, 1.3, 0.2), (1.1, -0.7, 0.8), (2.0, 0.0, 0.5)] {
            let fd_a = (rc.eval(y, a + h, t) - rc.eval(y, a - h, t)) / (2.0 * h);
            assert!((rc.da(y, a, t) - fd_a).abs() < 1e-8);
            let fd_y = (rc.eval(y + h, a, t) - rc.eval(y - h, a, t)) / (2.0 * h);
            assert!((rc.dy(y, a, t) - fd_y).abs() < 1e-8);
        }
    }

    #[test]
    fn spline_reproduces_linear_data_and_derivative() {
        let xs: Vec<f64> = (0..9).map(|i| i as f64 * 0.5).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x - 1.0).collect();
        let sp = CubicSpline::new(xs, ys).unwrap();
        for i in 0..40 {
            let x = i as f64 * 0.1;
            assert!((sp.eval(x) - (2.0 * x - 1.0)).abs() < 1e-12);
            assert!((sp.deriv(x) - 2.0).abs() < 1e-10);
        }
        // Smooth data: derivative close to the true one away from the ends.
        let xs: Vec<f64> = (0..41).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (x * 1.3).sin()).collect();
        let sp = CubicSpline::new(xs, ys).unwrap();
        for i in 5..36 {
            let x = i as f64 * 0.1 + 0.05;
            assert!((sp.eval(x) - (x * 1.3f64).sin()).abs() < 1e-4);
            assert!((sp.deriv(x) - 1.3 * (x * 1.3f64).cos()).abs() < 1e-2);
        }
    }

    #[test]
    fn step_time_fn_is_left_closed_on_the_right_piece() {
        let f = TimeFn::Steps {
            breaks: vec![0.5],
            values: vec![2.0, -1.0],
        };
        assert_eq!(f.eval(0.49), 2.0);
        assert_eq!(f.eval(0.5), -1.0);
        assert_eq!(f.eval(0.51), -1.0);
        assert_eq!(f.min_on(1.0), -1.0);
    }
}
