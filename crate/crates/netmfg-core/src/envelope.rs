//! Convex envelope of the vertex velocity sections.
//!
//! At a vertex, the running-cost sections of the incident edges live on rays
//! of the velocity space (one axis per incident edge), together with a
//! waiting atom at the origin. The greatest convex function below all of
//! them is evaluated here as a finite linear program over discretized ray
//! atoms; by Caratheodory the optimum uses at most `rays + 1` of them.

use alloc::vec::Vec;

use crate::cost::CostModel;
use crate::error::CoreError;
use crate::geometry::{EdgeId, Network, VertexId};
use crate::simplex::solve_lp;
use crate::Result;

/// Envelope evaluation problem at one vertex.
#[derive(Clone)]
pub struct EnvelopeProblem<'a> {
    g: &'a Network,
    cm: &'a CostModel,
    v: VertexId,
    /// Control radius of the ray grids.
    pub a_max: f64,
    /// Atoms per ray (uniform on `[-a_max, a_max]`).
    pub ray_points: usize,
}

/// One atom of the returned convex decomposition.
#[derive(Debug, Clone, Copy)]
pub struct SupportAtom {
    /// Index into the incident-edge list of the vertex.
    pub ray: usize,
    /// Signed ray coordinate (positive = into the edge).
    pub speed: f64,
    pub weight: f64,
}

/// Envelope value together with its minimizing decomposition.
#[derive(Debug, Clone)]
pub struct EnvelopeValue {
    pub value: f64,
    pub origin_weight: f64,
    pub support: Vec<SupportAtom>,
}

impl<'a> EnvelopeProblem<'a> {
    pub fn new(
        g: &'a Network,
        cm: &'a CostModel,
        v: VertexId,
        a_max: f64,
        ray_points: usize,
    ) -> Result<Self> {
        if v.0 >= g.vertex_count() {
            return Err(CoreError::UnknownId(alloc::format!("vertex {}", v.0)));
        }
        if !(a_max > 0.0) || ray_points < 3 {
            return Err(CoreError::InvalidConfig(alloc::string::String::from(
                "envelope needs a positive control radius and at least 3 ray points",
            )));
        }
        Ok(EnvelopeProblem {
            g,
            cm,
            v,
            a_max,
            ray_points,
        })
    }

    /// Number of rays = incident edges.
    pub fn rays(&self) -> usize {
        self.g.incident(self.v).len()
    }

    pub fn ray_step(&self) -> f64 {
        2.0 * self.a_max / (self.ray_points - 1) as f64
    }

    /// Same problem with the ray grids refined by a factor two (the refined
    /// atom set contains the coarse one).
    pub fn refined(&self) -> Self {
        let mut out = self.clone();
        out.ray_points = 2 * self.ray_points - 1;
        out
    }

    fn ray_edge(&self, ray: usize) -> EdgeId {
        self.g.incident(self.v)[ray]
    }

    /// Cost section of ray `ray` at signed ray coordinate `a` (positive
    /// coordinates move into the edge).
    pub fn section(&self, ray: usize, a: f64, s: f64) -> f64 {
        let e = self.ray_edge(ray);
        let c = self.g.vertex_coord_on(e, self.v).expect("incident");
        let sigma = if c == 0.0 { 1.0 } else { -1.0 };
        self.cm.edges[e.0].eval(c, sigma * a, s)
    }

    /// Waiting cost at the vertex.
    pub fn origin_value(&self, s: f64) -> f64 {
        self.cm
            .vertex_running_cost(self.g, self.v, s)
            .expect("validated vertex")
    }

    /// Discrete envelope value at the velocity `alpha` (one signed
    /// coordinate per incident edge), with its minimizing decomposition.
    pub fn value(&self, alpha: &[f64], s: f64) -> Result<EnvelopeValue> {
        let n = self.rays();
        if alpha.len() != n {
            return Err(CoreError::InvalidConfig(alloc::format!(
                "alpha has {} components for {} rays",
                alpha.len(),
                n
            )));
        }
        let l1: f64 = alpha.iter().map(|a| a.abs()).sum();
        if l1 > self.a_max * (1.0 + 1e-12) {
            return Err(CoreError::Infeasible(alloc::format!(
                "|alpha|_1 = {l1} exceeds the ray radius {}",
                self.a_max
            )));
        }
        let m = self.ray_points;
        let cols = n * m + 1;
        let rows = n + 1;
        let step = self.ray_step();
        let mut a_mat = alloc::vec![0.0f64; rows * cols];
        let mut cost = alloc::vec![0.0f64; cols];
        for ray in 0..n {
            for k in 0..m {
                let coord = -self.a_max + step * k as f64;
                let col = ray * m + k;
                a_mat[ray * cols + col] = coord;
                a_mat[n * cols + col] = 1.0;
                cost[col] = self.section(ray, coord, s);
            }
        }
        // Origin atom.
        a_mat[n * cols + cols - 1] = 1.0;
        cost[cols - 1] = self.origin_value(s);
        let mut b = alloc::vec![0.0f64; rows];
        b[..n].copy_from_slice(alpha);
        b[n] = 1.0;
        let sol = solve_lp(rows, cols, &a_mat, &b, &cost)?;
        let mut support = Vec::new();
        for ray in 0..n {
            for k in 0..m {
                let w = sol.x[ray * m + k];
                if w > 1e-12 {
                    support.push(SupportAtom {
                        ray,
                        speed: -self.a_max + step * k as f64,
                        weight: w,
                    });
                }
            }
        }
        Ok(EnvelopeValue {
            value: sol.objective,
            origin_weight: sol.x[cols - 1],
            support,
        })
    }
}

/// Result of the envelope identity and lower-semicontinuity checks.
#[derive(Debug, Clone)]
pub struct EnvelopeReport {
    /// Max over the time grid of |envelope(0, s) - waiting_cost(s)|.
    pub max_identity_violation: f64,
    /// Largest persistent lower-semicontinuity violation found by liminf
    /// sampling (zero when none).
    pub max_lsc_violation: f64,
    /// Number of time-grid points flagged for LSC violations.
    pub lsc_flags: usize,
    /// Squared ray step, the tolerance scale for the identity check.
    pub tolerance: f64,
    pub s_points: usize,
}

/// Checks the zero-velocity identity and samples for lower semicontinuity
/// in time on a uniform grid over `[0, horizon]`.
pub fn verify_lemma(
    ep: &EnvelopeProblem<'_>,
    s_points: usize,
    horizon: f64,
) -> Result<EnvelopeReport> {
    let n = ep.rays();
    let zero = alloc::vec![0.0f64; n];
    let mut max_identity: f64 = 0.0;
    let mut max_lsc: f64 = 0.0;
    let mut flags = 0usize;
    let value_at = |s: f64| -> Result<f64> { Ok(ep.value(&zero, s)?.value) };
    let delta = horizon / (s_points as f64 * 8.0);
    for i in 0..s_points {
        let s = horizon * i as f64 / (s_points - 1).max(1) as f64;
        let v = value_at(s)?;
        max_identity = max_identity.max((v - ep.origin_value(s)).abs());
        // liminf sampling at two neighborhood radii; a violation must
        // persist under refinement to be flagged.
        let mut viol = f64::INFINITY;
        for &d in &[delta, 0.5 * delta] {
            let mut nbhd_min = f64::INFINITY;
            for j in 1..=4 {
                for &tau in &[s - d * j as f64, s + d * j as f64] {
                    if (0.0..=horizon).contains(&tau) {
                        nbhd_min = nbhd_min.min(value_at(tau)?);
                    }
                }
            }
            viol = viol.min((v - nbhd_min).max(0.0));
        }
        if viol > 1e-9 {
            flags += 1;
            max_lsc = max_lsc.max(viol);
        }
    }
    Ok(EnvelopeReport {
        max_identity_violation: max_identity,
        max_lsc_violation: max_lsc,
        lsc_flags: flags,
        tolerance: ep.ray_step() * ep.ray_step(),
        s_points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{Profile, RunningCost, TimeFn};
    use alloc::vec;

    fn quadratic_model(g: &Network, lambda: &[f64], specific: TimeFn) -> CostModel {
        CostModel {
            edges: lambda
                .iter()
                .map(|&l| RunningCost::quadratic(1.0, l))
                .collect(),
            vertex_specific: vec![specific; g.vertex_count()],
            terminal_edges: vec![Profile::constant(0.0); g.edge_count()],
            terminal_vertices: vec![0.0; g.vertex_count()],
        }
    }

    #[test]
    fn zero_velocity_identity_quadratic() {
        let g = Network::junction(2, 4.0).unwrap();
        let cm = quadratic_model(&g, &[0.0, 0.0], TimeFn::Const(5.0));
        let ep = EnvelopeProblem::new(&g, &cm, VertexId(0), 4.0, 257).unwrap();
        let ev = ep.value(&[0.0, 0.0], 0.3).unwrap();
        assert!((ev.value - 0.0).abs() < 1e-10, "value {}", ev.value);
        // Zero-cost decompositions may mix the origin with zero-speed ray
        // atoms; all carried speeds must vanish.
        assert!(ev.support.iter().all(|a| a.speed == 0.0));
    }

    #[test]
    fn specific_cost_dominates_at_zero() {
        let g = Network::junction(2, 4.0).unwrap();
        let cm = quadratic_model(&g, &[0.0, 1.0], TimeFn::Const(-0.5));
        let ep = EnvelopeProblem::new(&g, &cm, VertexId(0), 4.0, 129).unwrap();
        let ev = ep.value(&[0.0, 0.0], 0.0).unwrap();
        assert!((ev.value + 0.5).abs() < 1e-10);
    }

    #[test]
    fn single_ray_value_matches_enumeration_oracle() {
        // Quadratic section, waiting cost 0: the envelope at 2 e_1 must pay
        // the full section value at speed 2.
        let g = Network::junction(2, 4.0).unwrap();
        let cm = quadratic_model(&g, &[0.0, 0.0], TimeFn::Const(5.0));
        // 257 points on [-4, 4]: grid step 1/32, speed 2 is an atom.
        let ep = EnvelopeProblem::new(&g, &cm, VertexId(0), 4.0, 257).unwrap();
        let ev = ep.value(&[2.0, 0.0], 0.0).unwrap();
        assert!((ev.value - 4.0).abs() < 1e-9, "value {}", ev.value);
        let oracle = enumeration_oracle(&ep, &[2.0, 0.0], 0.0);
        assert!((ev.value - oracle).abs() < 1e-9);
        // A mixed target: compare against the oracle on the same atom grid.
        let coarse = EnvelopeProblem::new(&g, &cm, VertexId(0), 4.0, 33).unwrap();
        for &alpha in &[[1.3, 0.7], [0.4, -0.9], [-2.0, 1.0]] {
            let ours = coarse.value(&alpha, 0.2).unwrap().value;
            let oracle = enumeration_oracle(&coarse, &alpha, 0.2);
            assert!(
                (ours - oracle).abs() < 1e-9,
                "alpha {alpha:?}: {ours} vs {oracle}"
            );
        }
    }

    #[test]
    fn envelope_is_midpoint_convex_and_majorized() {
        let g = Network::junction(3, 4.0).unwrap();
        let cm = quadratic_model(&g, &[0.0, 0.5, 1.0], TimeFn::Const(5.0));
        let ep = EnvelopeProblem::new(&g, &cm, VertexId(0), 4.0, 129).unwrap();
        let pairs = [
            ([1.0, 0.5, 0.0], [0.0, 1.0, 0.5]),
            ([-1.0, 0.2, 0.3], [0.5, -0.5, 0.1]),
        ];
        let tol = ep.ray_step() * ep.ray_step();
        for (a, b) in pairs {
            let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
            let va = ep.value(&a, 0.1).unwrap().value;
            let vb = ep.value(&b, 0.1).unwrap().value;
            let vm = ep.value(&mid, 0.1).unwrap().value;
            assert!(vm <= 0.5 * (va + vb) + tol);
        }
        // Majorized by each section on its own ray: exact at grid atoms,
        // within the interpolation overshoot off the atoms.
        let step = ep.ray_step();
        for (ray, &a) in [0.7f64, -1.4, 2.0].iter().enumerate() {
            let mut alpha = [0.0; 3];
            alpha[ray] = a;
            let v = ep.value(&alpha, 0.1).unwrap().value;
            assert!(v <= ep.section(ray, a, 0.1) + step * step);
        }
        // On-atom speeds are majorized exactly (modulo LP arithmetic).
        for ray in 0..3 {
            let a = step * 8.0 - 4.0 + 4.0; // an exact multiple of step
            let mut alpha = [0.0; 3];
            alpha[ray] = a;
            let v = ep.value(&alpha, 0.1).unwrap().value;
            assert!(v <= ep.section(ray, a, 0.1) + 1e-9);
        }
    }

    #[test]
    fn refinement_is_monotone_decreasing() {
        let g = Network::junction(2, 4.0).unwrap();
        let cm = quadratic_model(&g, &[0.0, 0.25], TimeFn::Const(5.0));
        let mut ep = EnvelopeProblem::new(&g, &cm, VertexId(0), 4.0, 33).unwrap();
        let alpha = [0.83, -0.41];
        let mut prev = ep.value(&alpha, 0.3).unwrap().value;
        for _ in 0..3 {
            ep = ep.refined();
            let next = ep.value(&alpha, 0.3).unwrap().value;
            assert!(next <= prev + 1e-12, "{next} > {prev}");
            prev = next;
        }
    }

    #[test]
    fn infeasible_targets_error() {
        let g = Network::junction(2, 4.0).unwrap();
        let cm = quadratic_model(&g, &[0.0, 0.0], TimeFn::Const(5.0));
        let ep = EnvelopeProblem::new(&g, &cm, VertexId(0), 1.0, 33).unwrap();
        assert!(matches!(
            ep.value(&[0.9, 0.9], 0.0),
            Err(CoreError::Infeasible(_))
        ));
    }

    #[test]
    fn lemma_report_flags_only_genuine_lsc_failures() {
        let g = Network::junction(2, 4.0).unwrap();
        // Downward step in the specific cost: still lower semicontinuous
        // with the left-closed step convention.
        let down = quadratic_model(
            &g,
            &[1.0, 1.0],
            TimeFn::Steps {
                breaks: vec![0.5],
                values: vec![0.4, -0.6],
            },
        );
        let ep = EnvelopeProblem::new(&g, &down, VertexId(0), 4.0, 65).unwrap();
        let rep = verify_lemma(&ep, 41, 1.0).unwrap();
        assert_eq!(rep.lsc_flags, 0, "downward jump flagged: {rep:?}");
        assert!(rep.max_identity_violation <= rep.tolerance);

        // Upward step: the value at the break exceeds the left liminf.
        let up = quadratic_model(
            &g,
            &[1.0, 1.0],
            TimeFn::Steps {
                breaks: vec![0.5],
                values: vec![-0.6, 0.4],
            },
        );
        let ep = EnvelopeProblem::new(&g, &up, VertexId(0), 4.0, 65).unwrap();
        let rep = verify_lemma(&ep, 41, 1.0).unwrap();
        assert!(rep.lsc_flags > 0, "upward jump not flagged");
    }

    /// Caratheodory oracle: enumerate all supports of up to `rays + 1` atoms
    /// from the ray grids plus the origin, solving for the weights.
    fn enumeration_oracle(ep: &EnvelopeProblem<'_>, alpha: &[f64], s: f64) -> f64 {
        assert_eq!(ep.rays(), 2, "oracle written for two rays");
        let m = ep.ray_points;
        let step = ep.ray_step();
        // Atom list: (coords in R^2, value)
        let mut atoms: Vec<([f64; 2], f64)> = Vec::new();
        for ray in 0..2 {
            for k in 0..m {
                let a = -ep.a_max + step * k as f64;
                let mut c = [0.0; 2];
                c[ray] = a;
                atoms.push((c, ep.section(ray, a, s)));
            }
        }
        atoms.push(([0.0, 0.0], ep.origin_value(s)));
        let n = atoms.len();
        let mut best = f64::INFINITY;
        // Supports of size 1..=3.
        for i in 0..n {
            let (c, v) = atoms[i];
            if (c[0] - alpha[0]).abs() < 1e-12 && (c[1] - alpha[1]).abs() < 1e-12 {
                best = best.min(v);
            }
            for j in (i + 1)..n {
                // Two atoms: solve w*ci + (1-w)*cj = alpha if consistent.
                let (cj, vj) = atoms[j];
                let mut w = None;
                let d0 = c[0] - cj[0];
                let d1 = c[1] - cj[1];
                if d0.abs() > 1e-14 {
                    let cand = (alpha[0] - cj[0]) / d0;
                    if (cand * c[1] + (1.0 - cand) * cj[1] - alpha[1]).abs() < 1e-10 {
                        w = Some(cand);
                    }
                } else if d1.abs() > 1e-14 {
                    let cand = (alpha[1] - cj[1]) / d1;
                    if (cand * c[0] + (1.0 - cand) * cj[0] - alpha[0]).abs() < 1e-10 {
                        w = Some(cand);
                    }
                }
                if let Some(w) = w {
                    if (-1e-12..=1.0 + 1e-12).contains(&w) {
                        best = best.min(w * v + (1.0 - w) * vj);
                    }
                }
                for k in (j + 1)..n {
                    let (ck, vk) = atoms[k];
                    // Eliminate w3 = 1 - w1 - w2 and solve the 2x2 system.
                    let u = [c[0] - ck[0], c[1] - ck[1]];
                    let q = [cj[0] - ck[0], cj[1] - ck[1]];
                    let rhs = [alpha[0] - ck[0], alpha[1] - ck[1]];
                    let det = u[0] * q[1] - u[1] * q[0];
                    if det.abs() < 1e-14 {
                        continue;
                    }
                    let w1 = (rhs[0] * q[1] - rhs[1] * q[0]) / det;
                    let w2 = (u[0] * rhs[1] - u[1] * rhs[0]) / det;
                    let w3 = 1.0 - w1 - w2;
                    if w1 >= -1e-12 && w2 >= -1e-12 && w3 >= -1e-12 {
                        best = best.min(w1 * v + w2 * vj + w3 * vk);
                    }
                }
            }
        }
        best
    }
}
