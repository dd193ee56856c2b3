//! Numerical Legendre transforms of the running costs: edge Hamiltonians,
//! their one-sided variants for edge-entering speeds, the vertex
//! Hamiltonian, and the slope derivative used for optimal synthesis.
//!
//! For the built-in power family the transforms have closed forms; the grid
//! search with golden-section polish acts as the general path and as a
//! cross-check.

use alloc::format;

use crate::cost::CostModel;
use crate::error::CoreError;
use crate::geometry::{EdgeId, Network, VertexId};
use crate::math;
use crate::Result;

const GOLDEN_ITERS: usize = 80;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Evaluator for the Hamiltonians of a cost model.
pub struct HamiltonianEval<'a> {
    cm: &'a CostModel,
    /// Control search radius.
    pub a_max: f64,
    /// Atoms of the control grid (forced odd so zero is included).
    pub points: usize,
    /// Use the closed form of the power family instead of grid search.
    pub closed_form: bool,
}

impl<'a> HamiltonianEval<'a> {
    pub fn new(cm: &'a CostModel, a_max: f64, points: usize, closed_form: bool) -> Result<Self> {
        if !(a_max > 0.0) || points < 5 {
            return Err(CoreError::InvalidConfig(format!(
                "invalid Hamiltonian search parameters (a_max={a_max}, points={points})"
            )));
        }
        let points = if points % 2 == 0 { points + 1 } else { points };
        Ok(HamiltonianEval {
            cm,
            a_max,
            points,
            closed_form,
        })
    }

    /// `H_i(x, pbar, t) = sup_speed { -pbar*speed - cost_i(x, speed, t) }`.
    pub fn edge(&self, e: EdgeId, x: f64, pbar: f64, t: f64) -> f64 {
        if self.closed_form {
            self.closed_edge(e, x, pbar, t).0
        } else {
            self.sup_search(e, x, pbar, t, -self.a_max, self.a_max, 1.0).0
        }
    }

    /// One-sided Hamiltonian over edge-entering speeds (`speed >= 0`).
    pub fn edge_one_sided(&self, e: EdgeId, x: f64, pbar: f64, t: f64) -> f64 {
        self.oriented_one_sided(e, x, pbar, t, 1.0)
    }

    /// One-sided Hamiltonian with the entering direction `sigma` (`+1` when
    /// the vertex sits at arc coordinate zero, `-1` at the far end).
    fn oriented_one_sided(&self, e: EdgeId, x: f64, pbar: f64, t: f64, sigma: f64) -> f64 {
        if self.closed_form {
            let rc = &self.cm.edges[e.0];
            let kappa = kappa_at(rc, x, t);
            let lambda = rc.eval(x, 0.0, t);
            if pbar >= 0.0 {
                -lambda
            } else {
                closed_sup(kappa, rc.p, pbar) - lambda
            }
        } else {
            self.sup_search(e, x, pbar, t, 0.0, self.a_max, sigma).0
        }
    }

    /// Vertex Hamiltonian: the larger of the negative waiting cost and the
    /// one-sided Hamiltonians of the incident edges.
    ///
    /// `slopes` holds one directional derivative per incident edge (in
    /// ascending edge order), taken away from the vertex.
    pub fn vertex(&self, g: &Network, v: VertexId, slopes: &[f64], t: f64) -> Result<f64> {
        let incident = g.incident(v);
        if slopes.len() != incident.len() {
            return Err(CoreError::InvalidConfig(format!(
                "{} slopes for {} incident edges",
                slopes.len(),
                incident.len()
            )));
        }
        let mut best = -self.cm.vertex_running_cost(g, v, t)?;
        for (idx, &e) in incident.iter().enumerate() {
            let c = g.vertex_coord_on(e, v).expect("incident");
            let sigma = if c == 0.0 { 1.0 } else { -1.0 };
            best = best.max(self.oriented_one_sided(e, c, slopes[idx], t, sigma));
        }
        Ok(best)
    }

    /// Derivative of the edge Hamiltonian in the slope variable; the optimal
    /// speed law is its negative. Ties break toward smaller |speed|.
    pub fn edge_dp(&self, e: EdgeId, x: f64, pbar: f64, t: f64) -> f64 {
        let zeta = if self.closed_form {
            self.closed_edge(e, x, pbar, t).1
        } else {
            let (_, zeta) = self.sup_search(e, x, pbar, t, -self.a_max, self.a_max, 1.0);
            // Snap to the zero-speed maximizer when it is not worse.
            if zeta.abs() < 1e-9 {
                let at_zero = -self.cm.edges[e.0].eval(x, 0.0, t);
                let at_zeta = -pbar * zeta - self.cm.edges[e.0].eval(x, zeta, t);
                if at_zero >= at_zeta - 1e-12 {
                    0.0
                } else {
                    zeta
                }
            } else {
                zeta
            }
        };
        -zeta
    }

    /// |H(a_max) - H(2 a_max)|: coercivity localizes the supremum, so this
    /// must vanish on reasonable slope ranges.
    pub fn doubling_gap(&self, e: EdgeId, x: f64, pbar: f64, t: f64) -> f64 {
        let base = self.sup_search(e, x, pbar, t, -self.a_max, self.a_max, 1.0).0;
        let wide = HamiltonianEval {
            cm: self.cm,
            a_max: 2.0 * self.a_max,
            points: self.points,
            closed_form: false,
        };
        let doubled = wide
            .sup_search(e, x, pbar, t, -wide.a_max, wide.a_max, 1.0)
            .0;
        (base - doubled).abs()
    }

    /// Closed form for the power family: value and maximizing speed.
    fn closed_edge(&self, e: EdgeId, x: f64, pbar: f64, t: f64) -> (f64, f64) {
        let rc = &self.cm.edges[e.0];
        let kappa = kappa_at(rc, x, t);
        let lambda = rc.eval(x, 0.0, t);
        if pbar == 0.0 {
            return (-lambda, 0.0);
        }
        let zeta_mag = math::powf(pbar.abs() / (rc.p * kappa), 1.0 / (rc.p - 1.0));
        let zeta = -pbar.signum() * zeta_mag;
        (closed_sup(kappa, rc.p, -pbar.abs()) - lambda, zeta)
    }

    /// Grid search plus golden-section polish for
    /// `sup { -pbar*z - cost(x, sigma*z, t) : z in [lo, hi] }`.
    /// Returns (value, maximizer in the signed-by-sigma coordinate).
    fn sup_search(
        &self,
        e: EdgeId,
        x: f64,
        pbar: f64,
        t: f64,
        lo: f64,
        hi: f64,
        sigma: f64,
    ) -> (f64, f64) {
        let rc = &self.cm.edges[e.0];
        let f = |z: f64| -pbar * z - rc.eval(x, sigma * z, t);
        let n = self.points;
        let mut best_k = 0usize;
        let mut best_v = f64::NEG_INFINITY;
        for k in 0..n {
            let z = lo + (hi - lo) * k as f64 / (n - 1) as f64;
            let v = f(z);
            if v > best_v {
                best_v = v;
                best_k = k;
            }
        }
        let step = (hi - lo) / (n - 1) as f64;
        let z0 = lo + step * best_k as f64;
        let (mut a, mut b) = ((z0 - step).max(lo), (z0 + step).min(hi));
        // Golden-section on the bracket; strict convexity of the cost makes
        // the objective unimodal there.
        let mut x1 = b - INV_PHI * (b - a);
        let mut x2 = a + INV_PHI * (b - a);
        let mut f1 = f(x1);
        let mut f2 = f(x2);
        for _ in 0..GOLDEN_ITERS {
            if f1 < f2 {
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
        let zm = 0.5 * (a + b);
        let fm = f(zm);
        if fm > best_v {
            (fm, zm)
        } else {
            (best_v, z0)
        }
    }
}

fn kappa_at(rc: &crate::cost::RunningCost, x: f64, t: f64) -> f64 {
    rc.kappa.eval(x, t)
}

/// `sup_z { -pbar z - kappa |z|^p }` for `pbar <= 0` restricted to `z >= 0`,
/// which equals the unconstrained value `(p-1) kappa (|pbar|/(p kappa))^{p/(p-1)}`.
fn closed_sup(kappa: f64, p: f64, pbar: f64) -> f64 {
    let r = pbar.abs() / (p * kappa);
    (p - 1.0) * kappa * math::powf(r, p / (p - 1.0))
}
