//! Scenario file schema (TOML) and its translation into core types.
//!
//! A scenario fully determines one run: network, grid, costs (plain or
//! measure-coupled), initial atoms, solver parameters and requested
//! outputs. All module preconditions are validated here before any compute
//! starts.

use serde::{Deserialize, Serialize};

use netmfg_core::cost::{
    CostModel, CubicSpline, LinearTable, Profile, RunningCost, TimeFn, TimeProfile,
};
use netmfg_core::geometry::EdgeSpec;
use netmfg_core::mfg::{Coupling, Kernel, MfgCostFamily, MfgEdgeCost, MfgTerminal, Outer};
use netmfg_core::solver::SolverConfig;
use netmfg_core::{NetPoint, Network};

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub network: NetworkSection,
    pub grid: GridSection,
    #[serde(default)]
    pub solver: SolverSection,
    pub costs: Option<CostsSection>,
    pub mfg: Option<MfgSection>,
    #[serde(default)]
    pub m0: Vec<AtomSpec>,
    #[serde(default)]
    pub outputs: OutputsSection,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub kind: NetworkKind,
    /// Number of semi-infinite edges (junction only).
    pub edges: Option<usize>,
    /// Number of vertices (graph only).
    pub vertices: Option<usize>,
    /// Edge list (graph only).
    #[serde(default)]
    pub edge: Vec<GraphEdge>,
    /// Truncation radius for semi-infinite edges.
    pub truncation: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkKind {
    Junction,
    Graph,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GraphEdge {
    pub from: usize,
    pub to: Option<usize>,
    pub length: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub dx: f64,
    pub dt: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub v_user: f64,
    pub control_points: usize,
    pub polish: bool,
    pub safety: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        SolverSection {
            v_user: d.v_user,
            control_points: d.control_points,
            polish: d.polish,
            safety: d.safety,
        }
    }
}

impl SolverSection {
    pub fn to_config(&self) -> SolverConfig {
        SolverConfig {
            v_user: self.v_user,
            control_points: self.control_points,
            polish: self.polish,
            safety: self.safety,
        }
    }
}

/// Scalar profile in the arc coordinate (plus an optional linear time
/// term): polynomial coefficients, a linear table, or spline knots.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    #[serde(default)]
    pub c: f64,
    #[serde(default)]
    pub y: f64,
    #[serde(default)]
    pub y2: f64,
    #[serde(default)]
    pub t: f64,
    pub table: Option<TableSpec>,
    pub spline: Option<SplineSpec>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TableSpec {
    pub x0: f64,
    pub dx: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SplineSpec {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

impl ProfileSpec {
    pub fn to_profile(&self) -> Result<Profile, CliError> {
        if let Some(t) = &self.table {
            let table = LinearTable::new(t.x0, t.dx, t.values.clone())
                .map_err(CliError::validation)?;
            return Ok(Profile::Table(table));
        }
        if let Some(sp) = &self.spline {
            let spline = CubicSpline::new(sp.xs.clone(), sp.ys.clone())
                .map_err(CliError::validation)?;
            return Ok(Profile::Spline(spline));
        }
        Ok(Profile::Poly {
            c: self.c,
            cy: self.y,
            cy2: self.y2,
            ct: self.t,
        })
    }
}

/// Scalar function of time for vertex-specific costs.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TimeFnSpec {
    pub const_value: Option<f64>,
    pub affine: Option<AffineSpec>,
    pub steps: Option<StepsSpec>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct AffineSpec {
    pub c: f64,
    pub t: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct StepsSpec {
    pub breaks: Vec<f64>,
    pub values: Vec<f64>,
}

impl TimeFnSpec {
    pub fn to_time_fn(&self) -> Result<TimeFn, CliError> {
        match (&self.const_value, &self.affine, &self.steps) {
            (Some(c), None, None) => Ok(TimeFn::Const(*c)),
            (None, Some(a), None) => Ok(TimeFn::Affine { c: a.c, ct: a.t }),
            (None, None, Some(s)) => {
                if s.values.len() != s.breaks.len() + 1 {
                    return Err(CliError::Validation(
                        "steps need breaks.len() + 1 values".into(),
                    ));
                }
                Ok(TimeFn::Steps {
                    breaks: s.breaks.clone(),
                    values: s.values.clone(),
                })
            }
            _ => Err(CliError::Validation(
                "vertex cost needs exactly one of const_value / affine / steps".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CostsSection {
    pub p: f64,
    pub edge: Vec<EdgeCostSpec>,
    pub vertex: Vec<TimeFnSpec>,
    pub terminal: Vec<TerminalSpec>,
    pub terminal_vertex: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeCostSpec {
    pub kappa: ProfileSpec,
    pub lambda: ProfileSpec,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalSpec {
    pub g: ProfileSpec,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub kind: KernelKind,
    #[serde(default)]
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Zero,
    Tent,
    Bump,
}

impl KernelSpec {
    pub fn to_kernel(&self) -> Result<Kernel, CliError> {
        match self.kind {
            KernelKind::Zero => Ok(Kernel::Zero),
            KernelKind::Tent => {
                if !(self.radius > 0.0) {
                    return Err(CliError::Validation("tent kernel needs a radius".into()));
                }
                Ok(Kernel::Tent {
                    radius: self.radius,
                })
            }
            KernelKind::Bump => {
                if !(self.radius > 0.0) {
                    return Err(CliError::Validation("bump kernel needs a radius".into()));
                }
                Ok(Kernel::Bump {
                    radius: self.radius,
                })
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSpec {
    pub kernel: KernelSpec,
    pub base: f64,
    #[serde(default)]
    pub gain: f64,
}

impl CouplingSpec {
    pub fn to_coupling(&self) -> Result<Coupling, CliError> {
        Ok(Coupling {
            kernel: self.kernel.to_kernel()?,
            outer: Outer {
                base: self.base,
                gain: self.gain,
            },
        })
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MfgSection {
    pub p: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_prune_floor")]
    pub prune_floor: f64,
    pub edge: Vec<MfgEdgeSpec>,
    pub vertex: Vec<CouplingSpec>,
    pub terminal: Vec<MfgTerminalSpec>,
    pub terminal_vertex: Vec<f64>,
}

fn default_max_iters() -> usize {
    200
}
fn default_tolerance() -> f64 {
    1e-3
}
fn default_prune_floor() -> f64 {
    1e-8
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MfgEdgeSpec {
    pub kappa: CouplingSpec,
    pub lambda: CouplingSpec,
    #[serde(default)]
    pub lambda_base: ProfileSpec,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MfgTerminalSpec {
    pub coupling: CouplingSpec,
    #[serde(default)]
    pub g: ProfileSpec,
}

/// One initial atom: a vertex or an edge point, with a weight.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub vertex: Option<usize>,
    pub edge: Option<usize>,
    pub s: Option<f64>,
    pub w: f64,
}

impl AtomSpec {
    pub fn to_point(&self) -> Result<NetPoint, CliError> {
        match (self.vertex, self.edge, self.s) {
            (Some(v), None, None) => Ok(NetPoint::vertex(v)),
            (None, Some(e), Some(s)) => Ok(NetPoint::on_edge(e, s)),
            _ => Err(CliError::Validation(
                "atom needs either `vertex` or `edge` + `s`".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct StartSpec {
    pub vertex: Option<usize>,
    pub edge: Option<usize>,
    pub s: Option<f64>,
}

impl StartSpec {
    pub fn to_point(&self) -> Result<NetPoint, CliError> {
        match (self.vertex, self.edge, self.s) {
            (Some(v), None, None) => Ok(NetPoint::vertex(v)),
            (None, Some(e), Some(s)) => Ok(NetPoint::on_edge(e, s)),
            _ => Err(CliError::Validation(
                "start point needs either `vertex` or `edge` + `s`".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputsSection {
    pub value_field: bool,
    pub trajectories: Vec<StartSpec>,
    pub marginals: bool,
    pub flux: Option<FluxSpec>,
    pub envelope: Option<EnvelopeSpec>,
    pub dpp_probes: usize,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FluxSpec {
    pub vertex: usize,
    pub window: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeSpec {
    pub vertex: usize,
    pub s_points: usize,
    pub a_max: Option<f64>,
    #[serde(default = "default_ray_points")]
    pub ray_points: usize,
}

fn default_ray_points() -> usize {
    1024
}

/// Everything derived from a validated scenario.
pub struct Prepared {
    pub network: Network,
    pub grid: netmfg_core::SpaceTimeGrid,
    pub solver: SolverConfig,
    pub costs: Option<CostModel>,
    pub family: Option<MfgCostFamily>,
    pub m0: Vec<(NetPoint, f64)>,
    pub trajectory_starts: Vec<NetPoint>,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, CliError> {
        toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
    }

    /// Validates every module precondition and builds the core objects.
    pub fn prepare(&self) -> Result<Prepared, CliError> {
        let network = self.build_network()?;
        if !(self.grid.dx > 0.0 && self.grid.dt > 0.0 && self.grid.horizon > 0.0) {
            return Err(CliError::Validation(format!(
                "grid parameters must be positive (dx={}, dt={}, T={})",
                self.grid.dx, self.grid.dt, self.grid.horizon
            )));
        }
        let grid =
            netmfg_core::SpaceTimeGrid::new(&network, self.grid.dx, self.grid.dt, self.grid.horizon)
                .map_err(CliError::validation)?;
        let solver = self.solver.to_config();
        if !(solver.v_user > 0.0) || solver.control_points < 5 || !(solver.safety >= 1.0) {
            return Err(CliError::Validation("invalid solver parameters".into()));
        }
        if self.costs.is_some() == self.mfg.is_some() {
            return Err(CliError::Validation(
                "provide exactly one of [costs] or [mfg]".into(),
            ));
        }
        let costs = match &self.costs {
            Some(cs) => Some(self.build_costs(&network, cs)?),
            None => None,
        };
        let family = match &self.mfg {
            Some(ms) => Some(self.build_family(&network, ms)?),
            None => None,
        };
        let mut m0 = Vec::new();
        for atom in &self.m0 {
            if !(atom.w >= 0.0) {
                return Err(CliError::Validation("atom weights must be >= 0".into()));
            }
            let p = atom.to_point()?;
            network
                .canonicalize(p)
                .map_err(CliError::validation)?;
            m0.push((p, atom.w));
        }
        if !m0.is_empty() {
            let mass: f64 = m0.iter().map(|(_, w)| w).sum();
            if (mass - 1.0).abs() > 1e-12 {
                return Err(CliError::Validation(format!(
                    "initial atoms carry mass {mass}, expected 1"
                )));
            }
        }
        if self.mfg.is_some() && m0.is_empty() {
            return Err(CliError::Validation(
                "[mfg] scenarios need initial atoms in [[m0]]".into(),
            ));
        }
        let mut trajectory_starts = Vec::new();
        for st in &self.outputs.trajectories {
            let p = st.to_point()?;
            network.canonicalize(p).map_err(CliError::validation)?;
            trajectory_starts.push(p);
        }
        if let Some(flux) = &self.outputs.flux {
            if flux.vertex >= network.vertex_count() {
                return Err(CliError::Validation(format!(
                    "flux vertex {} out of range",
                    flux.vertex
                )));
            }
            let min_h = (0..network.edge_count())
                .map(|e| grid.edge_spacing(netmfg_core::EdgeId(e)))
                .fold(f64::INFINITY, f64::min);
            if flux.window < 2.0 * min_h {
                return Err(CliError::Validation(format!(
                    "flux window {} narrower than two grid cells",
                    flux.window
                )));
            }
            if m0.is_empty() {
                return Err(CliError::Validation(
                    "flux output needs initial atoms in [[m0]]".into(),
                ));
            }
        }
        if let Some(env) = &self.outputs.envelope {
            if env.vertex >= network.vertex_count() {
                return Err(CliError::Validation(format!(
                    "envelope vertex {} out of range",
                    env.vertex
                )));
            }
            if env.s_points < 2 || env.ray_points < 3 {
                return Err(CliError::Validation("invalid envelope parameters".into()));
            }
        }
        if self.outputs.marginals && m0.is_empty() {
            return Err(CliError::Validation(
                "marginal output needs initial atoms in [[m0]]".into(),
            ));
        }
        Ok(Prepared {
            network,
            grid,
            solver,
            costs,
            family,
            m0,
            trajectory_starts,
        })
    }

    fn build_network(&self) -> Result<Network, CliError> {
        match self.network.kind {
            NetworkKind::Junction => {
                let n = self.network.edges.ok_or_else(|| {
                    CliError::Validation("junction needs `edges`".into())
                })?;
                let r = self.network.truncation.ok_or_else(|| {
                    CliError::Validation("junction needs `truncation`".into())
                })?;
                Network::junction(n, r).map_err(CliError::validation)
            }
            NetworkKind::Graph => {
                let n = self.network.vertices.ok_or_else(|| {
                    CliError::Validation("graph needs `vertices`".into())
                })?;
                let specs = self
                    .network
                    .edge
                    .iter()
                    .map(|e| EdgeSpec {
                        from: e.from,
                        to: e.to,
                        length: e.length.unwrap_or(f64::INFINITY),
                    })
                    .collect();
                Network::new(n, specs, self.network.truncation.unwrap_or(1.0))
                    .map_err(CliError::validation)
            }
        }
    }

    fn build_costs(&self, g: &Network, cs: &CostsSection) -> Result<CostModel, CliError> {
        if !(cs.p > 1.0) {
            return Err(CliError::Validation(format!(
                "exponent p = {} must exceed 1",
                cs.p
            )));
        }
        if cs.edge.len() != g.edge_count()
            || cs.terminal.len() != g.edge_count()
            || cs.vertex.len() != g.vertex_count()
            || cs.terminal_vertex.len() != g.vertex_count()
        {
            return Err(CliError::Validation(
                "[costs] entry counts do not match the network".into(),
            ));
        }
        let edges = cs
            .edge
            .iter()
            .map(|e| {
                Ok(RunningCost {
                    p: cs.p,
                    kappa: TimeProfile::Fixed(e.kappa.to_profile()?),
                    lambda: TimeProfile::Fixed(e.lambda.to_profile()?),
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let vertex_specific = cs
            .vertex
            .iter()
            .map(|v| v.to_time_fn())
            .collect::<Result<Vec<_>, CliError>>()?;
        let terminal_edges = cs
            .terminal
            .iter()
            .map(|t| t.g.to_profile())
            .collect::<Result<Vec<_>, CliError>>()?;
        let cm = CostModel {
            edges,
            vertex_specific,
            terminal_edges,
            terminal_vertices: cs.terminal_vertex.clone(),
        };
        cm.validate(g).map_err(CliError::validation)?;
        // Coercivity must admit a positive constant.
        cm.coercivity_data(g, self.grid.horizon)
            .map_err(CliError::validation)?;
        Ok(cm)
    }

    fn build_family(&self, g: &Network, ms: &MfgSection) -> Result<MfgCostFamily, CliError> {
        if ms.edge.len() != g.edge_count()
            || ms.terminal.len() != g.edge_count()
            || ms.vertex.len() != g.vertex_count()
            || ms.terminal_vertex.len() != g.vertex_count()
        {
            return Err(CliError::Validation(
                "[mfg] entry counts do not match the network".into(),
            ));
        }
        let edges = ms
            .edge
            .iter()
            .map(|e| {
                Ok(MfgEdgeCost {
                    kappa: e.kappa.to_coupling()?,
                    lambda: e.lambda.to_coupling()?,
                    lambda_base: e.lambda_base.to_profile()?,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let vertex_specific = ms
            .vertex
            .iter()
            .map(|c| c.to_coupling())
            .collect::<Result<Vec<_>, CliError>>()?;
        let terminal_edges = ms
            .terminal
            .iter()
            .map(|t| {
                Ok(MfgTerminal {
                    coupling: t.coupling.to_coupling()?,
                    base: t.g.to_profile()?,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let family = MfgCostFamily {
            p: ms.p,
            edges,
            vertex_specific,
            terminal_edges,
            terminal_vertices: ms.terminal_vertex.clone(),
        };
        family.validate(g).map_err(CliError::validation)?;
        Ok(family)
    }
}
