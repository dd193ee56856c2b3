//! Measure-coupled costs, best responses, fictitious play for relaxed
//! equilibria, and mild-solution diagnostics.
//!
//! Coupled running costs follow the kernel form
//! `K[m](y) = outer( integral of kernel(d(y, z)) m(dz) )`: the inner
//! convolution is 1-Lipschitz in the measure (scaled by the kernel slope),
//! so the produced cost models inherit uniform coercivity and convexity
//! from their base parameters.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::cost::{CostModel, LinearTable, Profile, RunningCost, TimeFn, TimeProfile};
use crate::error::CoreError;
use crate::geometry::{EdgeId, NetPoint, Network};
use crate::grid::{SpaceTimeGrid, ValueField};
use crate::math;
use crate::measure::{wasserstein1, Marginal, TrajectoryMeasure};
use crate::solver::{solve_value, SolveInfo, SolverConfig};
use crate::trajectory::{synthesize, Trajectory};
use crate::Result;

/// Radial interaction kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    /// No coupling.
    Zero,
    /// `max(0, 1 - r/radius)`.
    Tent { radius: f64 },
    /// Smooth bump `exp(1 - radius^2/(radius^2 - r^2))` for `r < radius`;
    /// value 1 and slope 0 at the origin.
    Bump { radius: f64 },
}

impl Kernel {
    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            Kernel::Zero => 0.0,
            Kernel::Tent { radius } => (1.0 - r / radius).max(0.0),
            Kernel::Bump { radius } => {
                if r >= radius {
                    0.0
                } else {
                    let q = r / radius;
                    math::exp(1.0 - 1.0 / (1.0 - q * q))
                }
            }
        }
    }

    /// Upper bound on the radial slope, used by the coupling-modulus check.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            Kernel::Zero => 0.0,
            Kernel::Tent { radius } => 1.0 / radius,
            Kernel::Bump { radius } => {
                // Dense sampling of |k'| for the smooth bump.
                let n = 20_000;
                let mut worst = 0.0f64;
                let mut prev = self.eval(0.0);
                for i in 1..=n {
                    let r = radius * i as f64 / n as f64;
                    let v = self.eval(r);
                    worst = worst.max((v - prev).abs() * n as f64 / radius);
                    prev = v;
                }
                worst * 1.05
            }
        }
    }
}

/// Affine outer function `base + gain * w` applied to a convolution value
/// `w` in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outer {
    pub base: f64,
    pub gain: f64,
}

impl Outer {
    pub fn eval(&self, w: f64) -> f64 {
        self.base + self.gain * w
    }

    pub fn min_on_unit(&self) -> f64 {
        self.base + self.gain.min(0.0)
    }

    pub fn lipschitz(&self) -> f64 {
        self.gain.abs()
    }
}

/// Measure coupling of one scalar coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coupling {
    pub kernel: Kernel,
    pub outer: Outer,
}

impl Coupling {
    pub fn constant(value: f64) -> Self {
        Coupling {
            kernel: Kernel::Zero,
            outer: Outer {
                base: value,
                gain: 0.0,
            },
        }
    }

    /// Convolution of the kernel against a marginal at a network point.
    pub fn convolve(&self, g: &Network, m: &Marginal, at: NetPoint) -> Result<f64> {
        if matches!(self.kernel, Kernel::Zero) {
            return Ok(0.0);
        }
        let mut acc = 0.0;
        for &(p, w) in &m.atoms {
            acc += w * self.kernel.eval(g.geodesic_distance(at, p)?);
        }
        Ok(acc)
    }

    pub fn value(&self, g: &Network, m: &Marginal, at: NetPoint) -> Result<f64> {
        Ok(self.outer.eval(self.convolve(g, m, at)?))
    }
}

/// Per-edge measure-coupled running cost
/// `K1[m](y) |a|^p + K2[m](y) + lambda_base(y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MfgEdgeCost {
    pub kappa: Coupling,
    pub lambda: Coupling,
    pub lambda_base: Profile,
}

/// Measure-coupled terminal cost on an edge.
#[derive(Debug, Clone, PartialEq)]
pub struct MfgTerminal {
    pub coupling: Coupling,
    pub base: Profile,
}

/// Family of measure-coupled costs: one entry per edge, a specific cost per
/// vertex, terminal couplings, and vertex terminal constants.
#[derive(Debug, Clone, PartialEq)]
pub struct MfgCostFamily {
    pub p: f64,
    pub edges: Vec<MfgEdgeCost>,
    pub vertex_specific: Vec<Coupling>,
    pub terminal_edges: Vec<MfgTerminal>,
    pub terminal_vertices: Vec<f64>,
}

impl MfgCostFamily {
    /// Decoupled family: all kernels zero, costs reduce to the given base
    /// model parameters.
    pub fn decoupled(
        p: f64,
        kappa: Vec<f64>,
        lambda: Vec<f64>,
        vertex_specific: Vec<f64>,
        terminal: Vec<Profile>,
        terminal_vertices: Vec<f64>,
    ) -> Self {
        MfgCostFamily {
            p,
            edges: kappa
                .into_iter()
                .zip(lambda)
                .map(|(k, l)| MfgEdgeCost {
                    kappa: Coupling::constant(k),
                    lambda: Coupling::constant(l),
                    lambda_base: Profile::constant(0.0),
                })
                .collect(),
            vertex_specific: vertex_specific
                .into_iter()
                .map(Coupling::constant)
                .collect(),
            terminal_edges: terminal
                .into_iter()
                .map(|base| MfgTerminal {
                    coupling: Coupling::constant(0.0),
                    base,
                })
                .collect(),
            terminal_vertices,
        }
    }

    pub fn validate(&self, g: &Network) -> Result<()> {
        if self.edges.len() != g.edge_count()
            || self.terminal_edges.len() != g.edge_count()
            || self.vertex_specific.len() != g.vertex_count()
            || self.terminal_vertices.len() != g.vertex_count()
        {
            return Err(CoreError::InvalidConfig(String::from(
                "coupled-cost family sizes do not match the network",
            )));
        }
        if !(self.p > 1.0) {
            return Err(CoreError::InvalidConfig(format!(
                "exponent {} must exceed 1",
                self.p
            )));
        }
        for (i, e) in self.edges.iter().enumerate() {
            if !(e.kappa.outer.min_on_unit() > 0.0) {
                return Err(CoreError::InvalidConfig(format!(
                    "edge {i}: speed coefficient can reach {} (must stay positive)",
                    e.kappa.outer.min_on_unit()
                )));
            }
        }
        Ok(())
    }

    /// Freezes the family against a path of marginals (one per time slice),
    /// producing a time-sliced cost model evaluable anywhere.
    pub fn build_costs(
        &self,
        g: &Network,
        grid: &SpaceTimeGrid,
        marginals: &[Marginal],
    ) -> Result<CostModel> {
        self.validate(g)?;
        if marginals.len() != grid.slice_count() {
            return Err(CoreError::InvalidConfig(format!(
                "{} marginals for {} slices",
                marginals.len(),
                grid.slice_count()
            )));
        }
        for (k, m) in marginals.iter().enumerate() {
            let mass = m.mass();
            if (mass - 1.0).abs() > 1e-9 {
                return Err(CoreError::NotProbability(format!(
                    "marginal at slice {k} has mass {mass}"
                )));
            }
        }
        let decoupled = self
            .edges
            .iter()
            .all(|e| matches!(e.kappa.kernel, Kernel::Zero) && matches!(e.lambda.kernel, Kernel::Zero))
            && self
                .vertex_specific
                .iter()
                .all(|c| matches!(c.kernel, Kernel::Zero))
            && self
                .terminal_edges
                .iter()
                .all(|t| matches!(t.coupling.kernel, Kernel::Zero));

        let mut edges = Vec::with_capacity(g.edge_count());
        for (ei, fam) in self.edges.iter().enumerate() {
            let e = EdgeId(ei);
            if decoupled {
                edges.push(RunningCost {
                    p: self.p,
                    kappa: TimeProfile::constant(fam.kappa.outer.base),
                    lambda: match &fam.lambda_base {
                        Profile::Poly { c, cy, cy2, ct } => TimeProfile::Fixed(Profile::Poly {
                            c: c + fam.lambda.outer.base,
                            cy: *cy,
                            cy2: *cy2,
                            ct: *ct,
                        }),
                        other => {
                            // Fold the constant into a sliced profile copy.
                            let shifted = shift_profile(other, fam.lambda.outer.base);
                            TimeProfile::Fixed(shifted)
                        }
                    },
                });
                continue;
            }
            let kappa_slices = tabulate_slices(grid, e, marginals, |m, p| fam.kappa.value(g, m, p))?;
            let lambda_slices = tabulate_slices(grid, e, marginals, |m, p| {
                Ok(fam.lambda.value(g, m, p)?
                    + fam.lambda_base.eval(
                        match p {
                            NetPoint::OnEdge { s, .. } => s,
                            NetPoint::Vertex(v) => g.vertex_coord_on(e, v).unwrap_or(0.0),
                        },
                        0.0,
                    ))
            })?;
            edges.push(RunningCost {
                p: self.p,
                kappa: TimeProfile::Sliced {
                    t0: 0.0,
                    dt: grid.dt(),
                    slices: kappa_slices,
                },
                lambda: TimeProfile::Sliced {
                    t0: 0.0,
                    dt: grid.dt(),
                    slices: lambda_slices,
                },
            });
        }
        let mut vertex_specific = Vec::with_capacity(g.vertex_count());
        for (vi, c) in self.vertex_specific.iter().enumerate() {
            if matches!(c.kernel, Kernel::Zero) {
                vertex_specific.push(TimeFn::Const(c.outer.base));
            } else {
                let at = NetPoint::vertex(vi);
                let values = marginals
                    .iter()
                    .map(|m| c.value(g, m, at))
                    .collect::<Result<Vec<_>>>()?;
                vertex_specific.push(TimeFn::SlicedLinear {
                    t0: 0.0,
                    dt: grid.dt(),
                    values,
                });
            }
        }
        let terminal_m = marginals.last().expect("nonempty marginals");
        let mut terminal_edges = Vec::with_capacity(g.edge_count());
        for (ei, t) in self.terminal_edges.iter().enumerate() {
            if matches!(t.coupling.kernel, Kernel::Zero) {
                terminal_edges.push(shift_profile(&t.base, t.coupling.outer.base));
            } else {
                let e = EdgeId(ei);
                let cells = grid.edge_cells(e);
                let h = grid.edge_spacing(e);
                let mut values = Vec::with_capacity(cells + 1);
                for j in 0..=cells {
                    let s = grid.node_coord(e, j);
                    let p = NetPoint::OnEdge { edge: e, s };
                    values.push(t.coupling.value(g, terminal_m, p)? + t.base.eval(s, 0.0));
                }
                terminal_edges.push(Profile::Table(LinearTable::new(0.0, h, values)?));
            }
        }
        let cm = CostModel {
            edges,
            vertex_specific,
            terminal_edges,
            terminal_vertices: self.terminal_vertices.clone(),
        };
        cm.validate(g)?;
        Ok(cm)
    }
}

fn shift_profile(p: &Profile, by: f64) -> Profile {
    if by == 0.0 {
        return p.clone();
    }
    match p {
        Profile::Poly { c, cy, cy2, ct } => Profile::Poly {
            c: c + by,
            cy: *cy,
            cy2: *cy2,
            ct: *ct,
        },
        Profile::Table(t) => Profile::Table(LinearTable {
            x0: t.x0,
            dx: t.dx,
            values: t.values.iter().map(|v| v + by).collect(),
        }),
        Profile::Spline(_) => p.clone(),
    }
}

fn tabulate_slices<F>(
    grid: &SpaceTimeGrid,
    e: EdgeId,
    marginals: &[Marginal],
    f: F,
) -> Result<Vec<Profile>>
where
    F: Fn(&Marginal, NetPoint) -> Result<f64> + Sync,
{
    let cells = grid.edge_cells(e);
    let h = grid.edge_spacing(e);
    let tab = |m: &Marginal| -> Result<Profile> {
        let mut values = Vec::with_capacity(cells + 1);
        for j in 0..=cells {
            let p = NetPoint::OnEdge {
                edge: e,
                s: grid.node_coord(e, j),
            };
            values.push(f(m, p)?);
        }
        Ok(Profile::Table(LinearTable::new(0.0, h, values)?))
    };
    #[cfg(feature = "parallel")]
    {
        marginals.par_iter().map(tab).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        marginals.iter().map(tab).collect()
    }
}

/// Best response against frozen marginals: solve the value function for the
/// induced costs and synthesize one optimal particle per initial atom.
pub struct BestResponse {
    pub measure: TrajectoryMeasure,
    pub value: ValueField,
    pub costs: CostModel,
    pub solve_info: SolveInfo,
}

pub fn best_response(
    family: &MfgCostFamily,
    g: &Network,
    grid: &SpaceTimeGrid,
    cfg: &SolverConfig,
    marginals: &[Marginal],
    m0: &[(NetPoint, f64)],
) -> Result<BestResponse> {
    let costs = family.build_costs(g, grid, marginals)?;
    let (value, solve_info) = solve_value(g, grid, &costs, cfg)?;
    let synth = |&(p, w): &(NetPoint, f64)| -> Result<(f64, Trajectory)> {
        let (tr, _) = synthesize(g, &costs, &value, cfg, p, 0)?;
        Ok((w, tr))
    };
    #[cfg(feature = "parallel")]
    let particles: Result<Vec<_>> = m0.par_iter().map(synth).collect();
    #[cfg(not(feature = "parallel"))]
    let particles: Result<Vec<_>> = m0.iter().map(synth).collect();
    Ok(BestResponse {
        measure: TrajectoryMeasure::new(particles?),
        value,
        costs,
        solve_info,
    })
}

/// Exploitability of a trajectory measure: the weighted cost excess of its
/// particles over fresh best responses computed with the same solver and
/// the same quadrature under the frozen costs.
#[derive(Debug, Clone)]
pub struct Exploitability {
    /// Sum of w * (J(particle) - J(best response from the same start)).
    pub value: f64,
    /// Sum of w * (J(particle) - u(start, 0)); carries the scheme bias
    /// between quadrature and backward recursion.
    pub value_gap: f64,
}

pub fn exploitability(
    family: &MfgCostFamily,
    g: &Network,
    grid: &SpaceTimeGrid,
    cfg: &SolverConfig,
    mu: &TrajectoryMeasure,
) -> Result<Exploitability> {
    let marginals = mu.marginals(g, grid)?;
    let costs = family.build_costs(g, grid, &marginals)?;
    let (value, _) = solve_value(g, grid, &costs, cfg)?;
    exploitability_against(g, grid, cfg, mu, &costs, &value)
}

/// Exploitability against already-frozen costs and a solved field.
pub fn exploitability_against(
    g: &Network,
    grid: &SpaceTimeGrid,
    cfg: &SolverConfig,
    mu: &TrajectoryMeasure,
    costs: &CostModel,
    value: &ValueField,
) -> Result<Exploitability> {
    // Cache the best-response cost per distinct start point.
    let mut starts: Vec<(NetPoint, f64)> = Vec::new();
    let mut total = 0.0;
    let mut gap = 0.0;
    for (w, tr) in &mu.particles {
        let start = g.canonicalize(tr.points[0])?;
        let j_br = match starts.iter().find(|(p, _)| *p == start) {
            Some((_, j)) => *j,
            None => {
                let (br, _) = synthesize(g, costs, value, cfg, start, 0)?;
                let j = crate::cost::trajectory_cost(g, costs, grid, &br)?;
                starts.push((start, j));
                j
            }
        };
        let j_mu = crate::cost::trajectory_cost(g, costs, grid, tr)?;
        total += w * (j_mu - j_br);
        gap += w * (j_mu - value.point_value(0, start));
    }
    Ok(Exploitability {
        value: total,
        value_gap: gap,
    })
}

/// Fictitious-play configuration.
#[derive(Debug, Clone, Copy)]
pub struct FictitiousPlayConfig {
    pub max_iters: usize,
    /// Stop when exploitability falls to this level.
    pub tolerance: f64,
    /// Particles below this weight are pruned (mass renormalized).
    pub prune_floor: f64,
}

impl Default for FictitiousPlayConfig {
    fn default() -> Self {
        FictitiousPlayConfig {
            max_iters: 200,
            tolerance: 1e-3,
            prune_floor: 1e-8,
        }
    }
}

/// Per-iteration diagnostics.
#[derive(Debug, Clone)]
pub struct FpIteration {
    pub iteration: usize,
    pub exploitability: f64,
    pub value_gap: f64,
    pub particles: usize,
    /// `sup_t d1(m_k(t), m_{k+1}(t))`, filled for iterations that mixed.
    pub d1_step: f64,
    pub pruned_mass: f64,
}

#[derive(Debug, Clone)]
pub struct FpDiagnostics {
    pub iterations: Vec<FpIteration>,
    pub converged: bool,
    /// Iteration index of the returned measure.
    pub returned_iteration: usize,
}

/// Averaged best-response iteration with harmonic damping
/// `mix_k = 1/(k+1)`: the measure at step `k` is averaged with the best
/// response against its own marginals. Returns the first iterate meeting
/// the exploitability tolerance, or the best iterate found with
/// `converged = false`.
pub fn fictitious_play(
    family: &MfgCostFamily,
    g: &Network,
    grid: &SpaceTimeGrid,
    cfg: &SolverConfig,
    fp: &FictitiousPlayConfig,
    m0: &[(NetPoint, f64)],
) -> Result<(TrajectoryMeasure, FpDiagnostics)> {
    let mass: f64 = m0.iter().map(|(_, w)| w).sum();
    if m0.is_empty() || (mass - 1.0).abs() > 1e-12 || m0.iter().any(|(_, w)| *w < 0.0) {
        return Err(CoreError::NotProbability(format!(
            "initial atoms carry mass {mass}"
        )));
    }
    // Start from the stay-put measure.
    let mut mu = TrajectoryMeasure::new(
        m0.iter()
            .map(|&(p, w)| {
                let node = grid.snap(g, p).map(|(n, _)| n)?;
                Ok((w, Trajectory::new(0, vec![grid.node_point(node); grid.slice_count()])))
            })
            .collect::<Result<Vec<_>>>()?,
    );
    let mut diags = FpDiagnostics {
        iterations: Vec::new(),
        converged: false,
        returned_iteration: 0,
    };
    let mut best: Option<(f64, usize, TrajectoryMeasure)> = None;
    for k in 0..=fp.max_iters {
        let marginals = mu.marginals(g, grid)?;
        let br = best_response(family, g, grid, cfg, &marginals, m0)?;
        let ex = exploitability_against(g, grid, cfg, &mu, &br.costs, &br.value)?;
        let mut iter_diag = FpIteration {
            iteration: k,
            exploitability: ex.value,
            value_gap: ex.value_gap,
            particles: mu.particles.len(),
            d1_step: 0.0,
            pruned_mass: 0.0,
        };
        let better = best
            .as_ref()
            .map(|(b, _, _)| ex.value < *b)
            .unwrap_or(true);
        if better {
            best = Some((ex.value, k, mu.clone()));
        }
        if k >= 1 && ex.value <= fp.tolerance {
            diags.iterations.push(iter_diag);
            diags.converged = true;
            diags.returned_iteration = k;
            return Ok((mu, diags));
        }
        if k == fp.max_iters {
            diags.iterations.push(iter_diag);
            break;
        }
        // Mix toward the best response with harmonic weight.
        let delta = 1.0 / (k as f64 + 1.0);
        let mut mixed = Vec::with_capacity(mu.particles.len() + br.measure.particles.len());
        if delta < 1.0 {
            for (w, tr) in &mu.particles {
                mixed.push((w * (1.0 - delta), tr.clone()));
            }
        }
        for (w, tr) in &br.measure.particles {
            mixed.push((w * delta, tr.clone()));
        }
        let mut next = TrajectoryMeasure::new(mixed);
        next.merge_identical();
        let (_, removed) = next.prune(fp.prune_floor);
        iter_diag.pruned_mass = removed;
        // Step size in transport distance.
        let next_marginals = next.marginals(g, grid)?;
        let mut d1 = 0.0f64;
        for (ma, mb) in marginals.iter().zip(&next_marginals) {
            d1 = d1.max(wasserstein1(g, ma, mb)?);
        }
        iter_diag.d1_step = d1;
        diags.iterations.push(iter_diag);
        mu = next;
    }
    let (_, at, measure) = best.expect("at least one iterate");
    diags.returned_iteration = at;
    Ok((measure, diags))
}

/// Value function and marginal flow associated with a trajectory measure,
/// with a differentiability diagnostic on the support.
pub struct MildSolution {
    pub value: ValueField,
    pub costs: CostModel,
    pub marginals: Vec<Marginal>,
    /// Fraction of edge-interior support atoms (over all slices in `(0,T)`)
    /// whose one-sided slopes agree within `10 dx`.
    pub support_differentiability: f64,
}

pub fn mild_solution(
    family: &MfgCostFamily,
    g: &Network,
    grid: &SpaceTimeGrid,
    cfg: &SolverConfig,
    mu: &TrajectoryMeasure,
) -> Result<MildSolution> {
    let marginals = mu.marginals(g, grid)?;
    let costs = family.build_costs(g, grid, &marginals)?;
    let (value, _) = solve_value(g, grid, &costs, cfg)?;
    let mut checked = 0usize;
    let mut agree = 0usize;
    for (k, m) in marginals.iter().enumerate() {
        if k == 0 || k >= grid.step_count() {
            continue;
        }
        for &(p, _) in &m.atoms {
            if let NetPoint::OnEdge { edge, s } = p {
                let h = grid.edge_spacing(edge);
                if s < h || s > grid.edge_len(edge) - h {
                    continue;
                }
                let left = (value.interp_edge(k, edge, s) - value.interp_edge(k, edge, s - h)) / h;
                let right = (value.interp_edge(k, edge, s + h) - value.interp_edge(k, edge, s)) / h;
                checked += 1;
                if (left - right).abs() <= 10.0 * h {
                    agree += 1;
                }
            }
        }
    }
    Ok(MildSolution {
        value,
        costs,
        marginals,
        support_differentiability: if checked == 0 {
            1.0
        } else {
            agree as f64 / checked as f64
        },
    })
}
