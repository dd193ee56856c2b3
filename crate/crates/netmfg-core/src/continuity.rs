//! Vertex flux estimation and weak continuity-equation checks for particle
//! trajectory measures.
//!
//! Two flux estimators are compared: a mollified test-function estimator
//! driven by per-step particle velocities, and a counting estimator that
//! tracks crossings through the vertex end of each edge. The counting
//! estimator balances vertex mass exactly (particle indicators telescope);
//! the mollified one converges to it as the window and the grid refine.

use alloc::format;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::geometry::{EdgeId, NetPoint, Network, VertexId};
use crate::grid::SpaceTimeGrid;
use crate::measure::TrajectoryMeasure;
use crate::trajectory::Step;
use crate::Result;

/// Smooth ramp from 0 at the vertex to 1 beyond the window; two shapes to
/// check that the flux does not depend on the mollifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RampShape {
    /// `3u^2 - 2u^3`
    Cubic,
    /// `6u^5 - 15u^4 + 10u^3`
    Quintic,
}

/// Test function `psi(d) = ramp(d / width)` of the distance `d` from the
/// vertex, with an analytic derivative.
#[derive(Debug, Clone, Copy)]
pub struct Ramp {
    pub width: f64,
    pub shape: RampShape,
}

impl Ramp {
    pub fn eval(&self, d: f64) -> f64 {
        let u = (d / self.width).clamp(0.0, 1.0);
        match self.shape {
            RampShape::Cubic => u * u * (3.0 - 2.0 * u),
            RampShape::Quintic => u * u * u * (10.0 + u * (-15.0 + 6.0 * u)),
        }
    }

    pub fn deriv(&self, d: f64) -> f64 {
        let u = d / self.width;
        if !(0.0..=1.0).contains(&u) {
            return 0.0;
        }
        let du = match self.shape {
            RampShape::Cubic => 6.0 * u * (1.0 - u),
            RampShape::Quintic => 30.0 * u * u * (1.0 - u) * (1.0 - u),
        };
        du / self.width
    }
}

/// Smooth bump supported on `[center - radius, center + radius]` inside one
/// edge, used by the interior transport check.
#[derive(Debug, Clone, Copy)]
pub struct Bump {
    pub center: f64,
    pub radius: f64,
}

impl Bump {
    pub fn eval(&self, s: f64) -> f64 {
        let u = (s - self.center) / self.radius;
        if u.abs() >= 1.0 {
            0.0
        } else {
            let q = 1.0 - u * u;
            q * q
        }
    }

    pub fn deriv(&self, s: f64) -> f64 {
        let u = (s - self.center) / self.radius;
        if u.abs() >= 1.0 {
            0.0
        } else {
            -4.0 * u * (1.0 - u * u) / self.radius
        }
    }
}

/// Mass strictly inside an edge (vertices excluded) at a slice.
pub fn edge_mass(g: &Network, mu: &TrajectoryMeasure, slice: usize, edge: EdgeId) -> Result<f64> {
    let mut total = 0.0;
    for (w, tr) in &mu.particles {
        if let NetPoint::OnEdge { edge: e, .. } = g.canonicalize(tr.points[slice])? {
            if e == edge {
                total += w;
            }
        }
    }
    Ok(total)
}

/// Mass sitting exactly at a vertex at a slice.
pub fn vertex_mass(g: &Network, mu: &TrajectoryMeasure, slice: usize, v: VertexId) -> Result<f64> {
    let mut total = 0.0;
    for (w, tr) in &mu.particles {
        if g.canonicalize(tr.points[slice])? == NetPoint::Vertex(v) {
            total += w;
        }
    }
    Ok(total)
}

/// Flux series at the `(vertex, edge)` end: one value per time step,
/// positive when mass enters the edge through that vertex.
#[derive(Debug, Clone)]
pub struct FluxSeries {
    pub vertex: VertexId,
    pub edge: EdgeId,
    pub window: f64,
    /// Mollified test-function estimator.
    pub mollified: Vec<f64>,
    /// Crossing-count estimator.
    pub counting: Vec<f64>,
}

impl FluxSeries {
    /// Per-step absolute discrepancy between the two estimators.
    pub fn discrepancy(&self) -> Vec<f64> {
        self.mollified
            .iter()
            .zip(&self.counting)
            .map(|(a, b)| (a - b).abs())
            .collect()
    }

    /// |integral over `[k0, k1]` of (mollified - counting)| dt.
    pub fn window_discrepancy(&self, dt: f64, k0: usize, k1: usize) -> f64 {
        let span = k0..k1.min(self.mollified.len());
        let m: f64 = self.mollified[span.clone()].iter().sum();
        let c: f64 = self.counting[span].iter().sum();
        ((m - c) * dt).abs()
    }
}

/// Estimates the flux at the `(v, edge)` end with the given mollifier
/// window. Errors when the window is narrower than two grid cells.
pub fn vertex_flux(
    g: &Network,
    grid: &SpaceTimeGrid,
    mu: &TrajectoryMeasure,
    v: VertexId,
    edge: EdgeId,
    window: f64,
    shape: RampShape,
) -> Result<FluxSeries> {
    let h = grid.edge_spacing(edge);
    if window < 2.0 * h {
        return Err(CoreError::InvalidConfig(format!(
            "mollifier window {window} is narrower than two grid cells ({})",
            2.0 * h
        )));
    }
    let c_vertex = g.vertex_coord_on(edge, v).ok_or_else(|| {
        CoreError::InvalidConfig(format!(
            "vertex {} is not an endpoint of edge {}",
            v.0, edge.0
        ))
    })?;
    let ramp = Ramp {
        width: window,
        shape,
    };
    let dt = grid.dt();
    let steps = grid.step_count();
    let mut mollified = alloc::vec![0.0f64; steps];
    let mut counting = alloc::vec![0.0f64; steps];
    for (w, tr) in &mu.particles {
        for k in 0..steps {
            let from = g.canonicalize(tr.points[k])?;
            let to = g.canonicalize(tr.points[k + 1])?;
            // Counting: crossings through the (v, edge) end.
            let cross = crossing(g, v, edge, from, to);
            counting[k] += w * cross / dt;
            // Mollified: particles on the edge push the test function with
            // their one-step velocity, oriented away from the vertex.
            if let NetPoint::OnEdge { edge: e, s } = from {
                if e == edge {
                    let speed = match tr.step(g, dt, k)? {
                        Step::OnEdge { speed, .. } => speed,
                        Step::AtVertex(_) => 0.0,
                    };
                    let (dist, away) = if c_vertex == 0.0 {
                        (s, speed)
                    } else {
                        (g.edge(edge).length - s, -speed)
                    };
                    mollified[k] += w * ramp.deriv(dist) * away;
                }
            }
        }
    }
    Ok(FluxSeries {
        vertex: v,
        edge,
        window,
        mollified,
        counting,
    })
}

/// +1 when the step enters `edge` through `v`, -1 when it leaves through
/// `v`, else 0.
fn crossing(g: &Network, v: VertexId, edge: EdgeId, from: NetPoint, to: NetPoint) -> f64 {
    let enters = |p: NetPoint, q: NetPoint| -> bool {
        match (p, q) {
            (NetPoint::Vertex(pv), NetPoint::OnEdge { edge: e, .. }) => pv == v && e == edge,
            (NetPoint::Vertex(pv), NetPoint::Vertex(qv)) => {
                // One step across a whole edge: entered through pv.
                pv == v
                    && pv != qv
                    && g.vertex_coord_on(edge, pv).is_some()
                    && g.vertex_coord_on(edge, qv).is_some()
            }
            _ => false,
        }
    };
    let mut c = 0.0;
    if enters(from, to) {
        c += 1.0;
    }
    if enters(to, from) {
        c -= 1.0;
    }
    c
}

/// Balance residuals of the vertex mass identity over a window of steps.
#[derive(Debug, Clone, Copy)]
pub struct BalanceResidual {
    /// Residual with counting fluxes, computed particle-wise; exactly zero
    /// because the per-particle indicators telescope.
    pub counting: f64,
    /// Residual with mollified fluxes.
    pub mollified: f64,
}

/// Checks `change of vertex mass + sum of edge flux integrals = 0` over the
/// step window `[k0, k1]`.
pub fn balance_residual(
    g: &Network,
    grid: &SpaceTimeGrid,
    mu: &TrajectoryMeasure,
    v: VertexId,
    fluxes: &[FluxSeries],
    k0: usize,
    k1: usize,
) -> Result<BalanceResidual> {
    let dt = grid.dt();
    // Counting residual, one particle at a time: the vertex indicator
    // change cancels the crossing counts exactly, in integer arithmetic.
    let mut counting = 0.0f64;
    for (w, tr) in &mu.particles {
        let at = |k: usize| -> Result<i64> {
            Ok((g.canonicalize(tr.points[k])? == NetPoint::Vertex(v)) as i64)
        };
        let mut net = at(k1)? - at(k0)?;
        for k in k0..k1 {
            let from = g.canonicalize(tr.points[k])?;
            let to = g.canonicalize(tr.points[k + 1])?;
            for fs in fluxes {
                net += crossing(g, v, fs.edge, from, to) as i64;
            }
        }
        counting += w * net as f64;
    }
    // Mollified residual.
    let dv = vertex_mass(g, mu, k1, v)? - vertex_mass(g, mu, k0, v)?;
    let mut flux_sum = 0.0;
    for fs in fluxes {
        for k in k0..k1 {
            flux_sum += fs.mollified[k] * dt;
        }
    }
    Ok(BalanceResidual {
        counting,
        mollified: (dv + flux_sum).abs(),
    })
}

/// Interior transport residual over a step window for a compactly supported
/// test function inside one edge:
/// `d/dt (mass-weighted phi) = (mass-weighted phi' * velocity)`.
pub fn interior_transport_residual(
    g: &Network,
    grid: &SpaceTimeGrid,
    mu: &TrajectoryMeasure,
    edge: EdgeId,
    phi: &Bump,
    k0: usize,
    k1: usize,
) -> Result<f64> {
    let dt = grid.dt();
    let phi_mass = |slice: usize| -> Result<f64> {
        let mut acc = 0.0;
        for (w, tr) in &mu.particles {
            if let NetPoint::OnEdge { edge: e, s } = g.canonicalize(tr.points[slice])? {
                if e == edge {
                    acc += w * phi.eval(s);
                }
            }
        }
        Ok(acc)
    };
    let mut transport = 0.0;
    for k in k0..k1 {
        for (w, tr) in &mu.particles {
            if let NetPoint::OnEdge { edge: e, s } = g.canonicalize(tr.points[k])? {
                if e == edge {
                    if let Step::OnEdge { speed, .. } = tr.step(g, dt, k)? {
                        transport += w * phi.deriv(s) * speed * dt;
                    }
                }
            }
        }
    }
    Ok((phi_mass(k1)? - phi_mass(k0)? - transport).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::Trajectory;
    use alloc::vec;

    fn junction2() -> Network {
        Network::junction(2, 4.0).unwrap()
    }

    /// One particle that waits at the vertex, then walks into edge 0.
    fn crossing_measure(grid: &SpaceTimeGrid, enter_at: usize, speed: f64) -> TrajectoryMeasure {
        let mut pts = Vec::new();
        for k in 0..grid.slice_count() {
            if k <= enter_at {
                pts.push(NetPoint::vertex(0));
            } else {
                let s = speed * grid.dt() * (k - enter_at) as f64;
                pts.push(NetPoint::on_edge(0, s));
            }
        }
        TrajectoryMeasure::new(vec![(1.0, Trajectory::new(0, pts))])
    }

    #[test]
    fn masses_partition_the_network() {
        let g = junction2();
        let grid = SpaceTimeGrid::new(&g, 0.1, 0.05, 1.0).unwrap();
        let mu = crossing_measure(&grid, 9, 0.5);
        for k in 0..grid.slice_count() {
            let total = vertex_mass(&g, &mu, k, VertexId(0)).unwrap()
                + edge_mass(&g, &mu, k, EdgeId(0)).unwrap()
                + edge_mass(&g, &mu, k, EdgeId(1)).unwrap();
            assert_eq!(total, 1.0);
        }
        // A particle at the vertex contributes to no edge.
        assert_eq!(edge_mass(&g, &mu, 0, EdgeId(0)).unwrap(), 0.0);
        // Mid-edge particle counted once, on its own edge.
        let last = grid.step_count();
        assert_eq!(edge_mass(&g, &mu, last, EdgeId(0)).unwrap(), 1.0);
        assert_eq!(edge_mass(&g, &mu, last, EdgeId(1)).unwrap(), 0.0);
    }

    #[test]
    fn counting_estimator_integrates_to_one_crossing() {
        let g = junction2();
        let grid = SpaceTimeGrid::new(&g, 0.05, 0.05, 1.0).unwrap();
        let enter_at = 9;
        let mu = crossing_measure(&grid, enter_at, 0.5);
        let fs = vertex_flux(
            &g,
            &grid,
            &mu,
            VertexId(0),
            EdgeId(0),
            0.2,
            RampShape::Cubic,
        )
        .unwrap();
        let total: f64 = fs.counting.iter().map(|q| q * grid.dt()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        // The crossing is recorded at the entering step.
        assert!(fs.counting[enter_at] > 0.0);
    }

    #[test]
    fn no_mass_near_vertex_means_zero_flux() {
        let g = junction2();
        let grid = SpaceTimeGrid::new(&g, 0.1, 0.1, 1.0).unwrap();
        let pts: Vec<NetPoint> = (0..grid.slice_count())
            .map(|k| NetPoint::on_edge(0, 2.0 + 0.2 * grid.time(k)))
            .collect();
        let mu = TrajectoryMeasure::new(vec![(1.0, Trajectory::new(0, pts))]);
        let fs = vertex_flux(
            &g,
            &grid,
            &mu,
            VertexId(0),
            EdgeId(0),
            0.5,
            RampShape::Cubic,
        )
        .unwrap();
        assert!(fs.mollified.iter().all(|&q| q == 0.0));
        assert!(fs.counting.iter().all(|&q| q == 0.0));
    }

    #[test]
    fn counting_balance_is_exact_and_static_measures_rest() {
        let g = junction2();
        let grid = SpaceTimeGrid::new(&g, 0.05, 0.05, 1.0).unwrap();
        let mu = crossing_measure(&grid, 7, 0.8);
        let fluxes: Vec<FluxSeries> = (0..2)
            .map(|e| {
                vertex_flux(
                    &g,
                    &grid,
                    &mu,
                    VertexId(0),
                    EdgeId(e),
                    0.2,
                    RampShape::Cubic,
                )
                .unwrap()
            })
            .collect();
        let res = balance_residual(&g, &grid, &mu, VertexId(0), &fluxes, 0, grid.step_count())
            .unwrap();
        assert_eq!(res.counting, 0.0);

        // Static measure: all fluxes vanish.
        let rest = TrajectoryMeasure::new(vec![(
            1.0,
            Trajectory::new(0, vec![NetPoint::on_edge(0, 1.0); grid.slice_count()]),
        )]);
        let fs = vertex_flux(
            &g,
            &grid,
            &rest,
            VertexId(0),
            EdgeId(0),
            0.2,
            RampShape::Cubic,
        )
        .unwrap();
        assert!(fs.mollified.iter().chain(fs.counting.iter()).all(|&q| q == 0.0));
    }

    #[test]
    fn mollified_approaches_counting_under_joint_refinement() {
        let g = junction2();
        let run = |n: usize, window: f64| -> f64 {
            let grid = SpaceTimeGrid::new(&g, 1.0 / n as f64, 1.0 / n as f64, 1.0).unwrap();
            let mu = crossing_measure(&grid, n / 5, 0.8);
            let fs = vertex_flux(
                &g,
                &grid,
                &mu,
                VertexId(0),
                EdgeId(0),
                window,
                RampShape::Cubic,
            )
            .unwrap();
            fs.window_discrepancy(grid.dt(), 0, grid.step_count())
        };
        // The window must shrink slower than the grid: the estimator's
        // per-step error scales with (grid step / window).
        let coarse = run(20, 0.4);
        let fine = run(80, 0.2);
        assert!(
            fine < 0.6 * coarse,
            "no decay under refinement: {coarse} -> {fine}"
        );
    }

    #[test]
    fn mollifier_shape_changes_little() {
        let g = junction2();
        let grid = SpaceTimeGrid::new(&g, 0.02, 0.02, 1.0).unwrap();
        let mu = crossing_measure(&grid, 10, 0.8);
        let mk = |shape| {
            vertex_flux(&g, &grid, &mu, VertexId(0), EdgeId(0), 0.3, shape).unwrap()
        };
        let a = mk(RampShape::Cubic);
        let b = mk(RampShape::Quintic);
        let int_a: f64 = a.mollified.iter().map(|q| q * grid.dt()).sum();
        let int_b: f64 = b.mollified.iter().map(|q| q * grid.dt()).sum();
        assert!((int_a - int_b).abs() < 0.1);
    }

    #[test]
    fn interior_transport_residual_decays() {
        let g = junction2();
        let run = |n: usize| -> f64 {
            let grid = SpaceTimeGrid::new(&g, 1.0 / n as f64, 1.0 / n as f64, 1.0).unwrap();
            let pts: Vec<NetPoint> = (0..grid.slice_count())
                .map(|k| NetPoint::on_edge(0, 1.0 + 0.5 * grid.time(k)))
                .collect();
            let mu = TrajectoryMeasure::new(vec![(1.0, Trajectory::new(0, pts))]);
            let phi = Bump {
                center: 1.25,
                radius: 0.5,
            };
            interior_transport_residual(&g, &grid, &mu, EdgeId(0), &phi, 0, grid.step_count())
                .unwrap()
        };
        let coarse = run(20);
        let fine = run(80);
        assert!(fine < 0.5 * coarse + 1e-9, "{coarse} -> {fine}");
    }
}
