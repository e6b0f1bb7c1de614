//! Test systems: the two-inductor switch circuit and a decoupled three-phase
//! network assembled from series RL branches, resistive branches and ideal
//! sources, with an optional voltage measurement chain at one bus.

mod fig1;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::dae::{DaeSystem, JacobianSet, SystemState};
use crate::discontinuity::Event;
use crate::error::{Result, SimError};
use crate::measurement::{self, MeasurementParams};

pub use fig1::{build_fig1_circuit, oracle_u_bem, oracle_u_second, Fig1Circuit};

/// Synchronous angular frequency of a 60 Hz system.
pub const OMEGA_SYN: f64 = 120.0 * PI;

const PHASE_LABELS: [&str; 3] = ["a", "b", "c"];

/// Phase offsets of A, B and C.
const PHASE_SHIFT: [f64; 3] = [0.0, -2.0 * PI / 3.0, 2.0 * PI / 3.0];

/// A scalar time function with a known derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Waveform {
    Constant(f64),
    Cosine { amplitude: f64, omega: f64, phase: f64 },
}

impl Waveform {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Waveform::Constant(c) => c,
            Waveform::Cosine { amplitude, omega, phase } => amplitude * (omega * t + phase).cos(),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            Waveform::Constant(_) => 0.0,
            Waveform::Cosine { amplitude, omega, phase } => -amplitude * omega * (omega * t + phase).sin(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

impl NodeId {
    pub const GROUND: NodeId = NodeId(0);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchKind {
    SeriesRL,
    Resistor,
    /// Resistive path that starts closed.
    Switch,
    /// Resistive path to ground that starts open.
    FaultToGround,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub name: String,
    pub kind: BranchKind,
    pub from_node: NodeId,
    pub to_node: NodeId,
    /// Resistance, p.u.
    pub r: f64,
    /// Reactance at the synchronous frequency, p.u. Only used by `SeriesRL`.
    pub x: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcSource {
    pub vm: f64,
    pub theta: f64,
    pub node: NodeId,
}

/// Phase A, B and C outputs of an ideal balanced source.
pub fn ac_source_voltage(src: &AcSource, t: f64) -> (f64, f64, f64) {
    let ph = OMEGA_SYN * t + src.theta;
    (
        src.vm * (ph + PHASE_SHIFT[0]).cos(),
        src.vm * (ph + PHASE_SHIFT[1]).cos(),
        src.vm * (ph + PHASE_SHIFT[2]).cos(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    /// Node names; index 0 is ground.
    pub nodes: Vec<String>,
    pub branches: Vec<Branch>,
    pub sources: Vec<AcSource>,
    pub phases: usize,
    pub omega_syn: f64,
}

impl Network {
    pub fn node(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n == name).map(NodeId)
    }

    pub fn validate(&self) -> Result<()> {
        if self.phases != 3 {
            return Err(SimError::Model(format!("only three-phase networks are supported, got {}", self.phases)));
        }
        if self.nodes.is_empty() {
            return Err(SimError::Model("network needs a ground node".into()));
        }
        let n = self.nodes.len();
        for b in &self.branches {
            for node in [b.from_node, b.to_node] {
                if node.0 >= n {
                    return Err(SimError::Model(format!("branch '{}' references unknown node {}", b.name, node.0)));
                }
            }
            if b.from_node == b.to_node {
                return Err(SimError::Model(format!("branch '{}' is a self loop", b.name)));
            }
            if !(b.r >= 0.0) {
                return Err(SimError::Parameter(format!("branch '{}' has negative resistance", b.name)));
            }
            match b.kind {
                BranchKind::SeriesRL if !(b.x > 0.0) => {
                    return Err(SimError::Parameter(format!("series branch '{}' needs positive reactance", b.name)))
                }
                BranchKind::Resistor | BranchKind::Switch | BranchKind::FaultToGround if !(b.r > 0.0) => {
                    return Err(SimError::Parameter(format!("branch '{}' needs positive resistance", b.name)))
                }
                BranchKind::FaultToGround if b.to_node != NodeId::GROUND => {
                    return Err(SimError::Model(format!("fault branch '{}' must end at ground", b.name)))
                }
                _ => {}
            }
        }
        for (i, s) in self.sources.iter().enumerate() {
            if !(s.vm > 0.0) {
                return Err(SimError::Parameter(format!("source {i} needs positive magnitude")));
            }
            if s.node == NodeId::GROUND || s.node.0 >= n {
                return Err(SimError::Model(format!("source {i} sits on an invalid node")));
            }
            if self.sources[..i].iter().any(|o| o.node == s.node) {
                return Err(SimError::Model(format!("two sources on node '{}'", self.nodes[s.node.0])));
            }
        }
        // reachability from the sources over every branch
        let mut seen = vec![false; n];
        let mut stack: Vec<usize> = self.sources.iter().map(|s| s.node.0).collect();
        while let Some(k) = stack.pop() {
            if std::mem::replace(&mut seen[k], true) {
                continue;
            }
            for b in &self.branches {
                if b.from_node.0 == k && !seen[b.to_node.0] {
                    stack.push(b.to_node.0);
                }
                if b.to_node.0 == k && !seen[b.from_node.0] {
                    stack.push(b.from_node.0);
                }
            }
        }
        let grounded = self.branches.iter().any(|b| b.from_node == NodeId::GROUND || b.to_node == NodeId::GROUND);
        for (k, name) in self.nodes.iter().enumerate() {
            if !seen[k] && (k != 0 || grounded) {
                return Err(SimError::Model(format!("node '{name}' is not reachable from any source")));
            }
        }
        Ok(())
    }
}

/// How the voltage of a node enters the equations.
#[derive(Debug, Clone, Copy, PartialEq)]
enum NodeRole {
    Ground,
    Source(usize),
    /// Offset of phase A in `y`.
    Unknown(usize),
}

#[derive(Debug, Clone)]
struct MeasurementSite {
    node: NodeId,
    params: MeasurementParams,
}

/// Time-domain DAE of a [`Network`].
///
/// `x` holds the three phase currents of every series branch (flowing from
/// `from_node` to `to_node`), then the measurement's differential states.
/// `y` holds the three phase voltages of every non-source, non-ground node,
/// then the measurement's algebraic states. Each unknown node contributes
/// one KCL row per phase: current in minus current out.
#[derive(Debug, Clone)]
pub struct NetworkDae {
    network: Network,
    roles: Vec<NodeRole>,
    series: Vec<usize>,
    /// `(branch index, closed)` for switchable resistive branches.
    closed: Vec<bool>,
    n_unknown_nodes: usize,
    measurement: Option<MeasurementSite>,
}

impl NetworkDae {
    pub fn new(network: Network) -> Result<Self> {
        network.validate()?;
        let mut roles = vec![NodeRole::Ground; network.nodes.len()];
        let mut next = 0;
        for (k, role) in roles.iter_mut().enumerate().skip(1) {
            *role = match network.sources.iter().position(|s| s.node.0 == k) {
                Some(s) => NodeRole::Source(s),
                None => {
                    next += 1;
                    NodeRole::Unknown(3 * (next - 1))
                }
            };
        }
        let series = network
            .branches
            .iter()
            .enumerate()
            .filter(|(_, b)| b.kind == BranchKind::SeriesRL)
            .map(|(i, _)| i)
            .collect();
        let closed = network
            .branches
            .iter()
            .map(|b| b.kind != BranchKind::FaultToGround)
            .collect();
        Ok(NetworkDae {
            network,
            roles,
            series,
            closed,
            n_unknown_nodes: next,
            measurement: None,
        })
    }

    /// Attach the measurement chain to `node`.
    pub fn with_measurement(mut self, node: NodeId, params: MeasurementParams) -> Result<Self> {
        params.validate()?;
        if node == NodeId::GROUND || node.0 >= self.network.nodes.len() {
            return Err(SimError::Model("measurement must sit on a non-ground node".into()));
        }
        self.measurement = Some(MeasurementSite { node, params });
        Ok(self)
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn fault_active(&self) -> bool {
        self.network
            .branches
            .iter()
            .zip(&self.closed)
            .any(|(b, &c)| b.kind == BranchKind::FaultToGround && c)
    }

    fn n_branch_states(&self) -> usize {
        3 * self.series.len()
    }

    fn n_node_states(&self) -> usize {
        3 * self.n_unknown_nodes
    }

    /// Offset of the measurement chain in `x` and `y`.
    fn measurement_offsets(&self) -> (usize, usize) {
        (self.n_branch_states(), self.n_node_states())
    }

    /// Index in `x` of phase `p` of the current in branch `branch`.
    pub fn branch_current_index(&self, branch: &str, p: usize) -> Option<usize> {
        let b = self.network.branches.iter().position(|b| b.name == branch)?;
        self.series.iter().position(|&s| s == b).map(|k| 3 * k + p)
    }

    /// Index in `y` of phase `p` of a node voltage.
    pub fn node_voltage_index(&self, node: NodeId, p: usize) -> Option<usize> {
        match self.roles.get(node.0)? {
            NodeRole::Unknown(off) => Some(off + p),
            _ => None,
        }
    }

    fn inductance(&self, b: &Branch) -> f64 {
        b.x / self.network.omega_syn
    }

    fn source_phase(&self, s: usize, p: usize, t: f64) -> (f64, f64) {
        let src = &self.network.sources[s];
        let ph = self.network.omega_syn * t + src.theta + PHASE_SHIFT[p];
        (src.vm * ph.cos(), -src.vm * self.network.omega_syn * ph.sin())
    }

    /// Voltage and its explicit time derivative at `node`, phase `p`.
    fn node_voltage(&self, node: NodeId, p: usize, y: &DVector<f64>, t: f64) -> (f64, f64) {
        match self.roles[node.0] {
            NodeRole::Ground => (0.0, 0.0),
            NodeRole::Source(s) => self.source_phase(s, p, t),
            NodeRole::Unknown(off) => (y[off + p], 0.0),
        }
    }

    fn measured_phases(&self, site: &MeasurementSite, y: &DVector<f64>, t: f64) -> [f64; 3] {
        [0, 1, 2].map(|p| self.node_voltage(site.node, p, y, t).0)
    }

    /// Phasor nodal solution of the current topology at `omega_syn`.
    ///
    /// Returns the phase-A voltage phasor of every node.
    pub fn solve_phasors(&self) -> Result<Vec<Complex64>> {
        let net = &self.network;
        let n = self.n_unknown_nodes;
        let mut ymat = DMatrix::<Complex64>::zeros(n, n);
        let mut rhs = DVector::<Complex64>::zeros(n);
        let known = |k: usize| match self.roles[k] {
            NodeRole::Ground => Some(Complex64::new(0.0, 0.0)),
            NodeRole::Source(s) => Some(Complex64::from_polar(net.sources[s].vm, net.sources[s].theta)),
            NodeRole::Unknown(_) => None,
        };
        for (b, &closed) in net.branches.iter().zip(&self.closed) {
            let adm = match b.kind {
                BranchKind::SeriesRL => Complex64::new(b.r, b.x).inv(),
                _ if closed => Complex64::new(1.0 / b.r, 0.0),
                _ => continue,
            };
            let ends = [b.from_node.0, b.to_node.0];
            for (i, &a) in ends.iter().enumerate() {
                let other = ends[1 - i];
                if let NodeRole::Unknown(off) = self.roles[a] {
                    let ia = off / 3;
                    ymat[(ia, ia)] += adm;
                    match (self.roles[other], known(other)) {
                        (NodeRole::Unknown(o), _) => ymat[(ia, o / 3)] -= adm,
                        (_, Some(v)) => rhs[ia] += adm * v,
                        _ => unreachable!(),
                    }
                }
            }
        }
        let sol = ymat
            .lu()
            .solve(&rhs)
            .filter(|v| v.iter().all(|c| c.re.is_finite() && c.im.is_finite()))
            .ok_or_else(|| SimError::Model("nodal admittance matrix is singular".into()))?;
        Ok((0..net.nodes.len())
            .map(|k| match self.roles[k] {
                NodeRole::Unknown(off) => sol[off / 3],
                _ => known(k).unwrap(),
            })
            .collect())
    }
}

fn instantaneous(phasor: Complex64, omega: f64, t: f64, p: usize) -> (f64, f64) {
    let rot = Complex64::from_polar(1.0, omega * t + PHASE_SHIFT[p]);
    let v = phasor * rot;
    let dv = Complex64::new(0.0, omega) * v;
    (v.re, dv.re)
}

/// Sinusoidal steady state of the unfaulted network at `t`, with the
/// measurement chain (if any) locked onto it.
pub fn solve_steady_state(sys: &NetworkDae, t: f64) -> Result<SystemState> {
    if sys.fault_active() {
        return Err(SimError::Model("steady state requires the unfaulted topology".into()));
    }
    let phasors = sys.solve_phasors()?;
    let w = sys.network.omega_syn;
    let (n, m) = (sys.n_diff(), sys.n_alg());
    let mut x = DVector::zeros(n);
    let mut y = DVector::zeros(m);
    let mut xdot_exact = DVector::zeros(n);
    let mut ydot = DVector::zeros(m);

    for (k, &bi) in sys.series.iter().enumerate() {
        let b = &sys.network.branches[bi];
        let current = (phasors[b.from_node.0] - phasors[b.to_node.0]) / Complex64::new(b.r, b.x);
        for p in 0..3 {
            let (v, dv) = instantaneous(current, w, t, p);
            x[3 * k + p] = v;
            xdot_exact[3 * k + p] = dv;
        }
    }
    for (node, role) in sys.roles.iter().enumerate() {
        if let NodeRole::Unknown(off) = *role {
            for p in 0..3 {
                let (v, dv) = instantaneous(phasors[node], w, t, p);
                y[off + p] = v;
                ydot[off + p] = dv;
            }
        }
    }
    if let Some(site) = &sys.measurement {
        let (xo, yo) = sys.measurement_offsets();
        let v = phasors[site.node.0];
        let angle = v.arg() + w * t;
        let ms = measurement::init_locked(v.norm(), angle);
        x.rows_mut(xo, measurement::N_DIFF).copy_from_slice(&ms.diff());
        y.rows_mut(yo, measurement::N_ALG).copy_from_slice(&ms.alg());
        xdot_exact[xo + measurement::DELTA] = site.params.omega_syn;
        // v1in = |V| cos(ωt + α), v1qu = |V| sin(ωt + α)
        ydot[yo + measurement::VIN] = -w * ms.v1qu;
        ydot[yo + measurement::VQU] = w * ms.v1in;
    }
    let state = SystemState::from_point(sys, t, x, y)?;
    debug_assert!((&state.xdot - &xdot_exact).amax() < 1e-6 * (1.0 + xdot_exact.amax()));
    state.with_ydot(sys, ydot)
}

impl DaeSystem for NetworkDae {
    fn n_diff(&self) -> usize {
        self.n_branch_states() + if self.measurement.is_some() { measurement::N_DIFF } else { 0 }
    }

    fn n_alg(&self) -> usize {
        self.n_node_states() + if self.measurement.is_some() { measurement::N_ALG } else { 0 }
    }

    fn f(&self, x: &DVector<f64>, y: &DVector<f64>, t: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.n_diff());
        for (k, &bi) in self.series.iter().enumerate() {
            let b = &self.network.branches[bi];
            let l = self.inductance(b);
            for p in 0..3 {
                let (va, _) = self.node_voltage(b.from_node, p, y, t);
                let (vb, _) = self.node_voltage(b.to_node, p, y, t);
                out[3 * k + p] = (va - vb - b.r * x[3 * k + p]) / l;
            }
        }
        if let Some(site) = &self.measurement {
            let (xo, yo) = self.measurement_offsets();
            let mx = &x.as_slice()[xo..xo + measurement::N_DIFF];
            let my = &y.as_slice()[yo..yo + measurement::N_ALG];
            out.rows_mut(xo, measurement::N_DIFF)
                .copy_from_slice(&measurement::chain_f(&site.params, mx, my));
        }
        out
    }

    fn g(&self, x: &DVector<f64>, y: &DVector<f64>, t: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.n_alg());
        let mut kcl = |node: NodeId, p: usize, current_in: f64| {
            if let NodeRole::Unknown(off) = self.roles[node.0] {
                out[off + p] += current_in;
            }
        };
        for (k, &bi) in self.series.iter().enumerate() {
            let b = &self.network.branches[bi];
            for p in 0..3 {
                kcl(b.to_node, p, x[3 * k + p]);
                kcl(b.from_node, p, -x[3 * k + p]);
            }
        }
        for (b, &closed) in self.network.branches.iter().zip(&self.closed) {
            if b.kind == BranchKind::SeriesRL || !closed {
                continue;
            }
            for p in 0..3 {
                let (va, _) = self.node_voltage(b.from_node, p, y, t);
                let (vb, _) = self.node_voltage(b.to_node, p, y, t);
                let i = (va - vb) / b.r;
                kcl(b.to_node, p, i);
                kcl(b.from_node, p, -i);
            }
        }
        if let Some(site) = &self.measurement {
            let (xo, yo) = self.measurement_offsets();
            let mx = &x.as_slice()[xo..xo + measurement::N_DIFF];
            let my = &y.as_slice()[yo..yo + measurement::N_ALG];
            let vabc = self.measured_phases(site, y, t);
            out.rows_mut(yo, measurement::N_ALG)
                .copy_from_slice(&measurement::chain_g(vabc, mx, my));
        }
        out
    }

    fn mutate(&mut self, action: &str) -> Result<()> {
        let (kind, closed) = match action {
            "apply-fault" => (BranchKind::FaultToGround, true),
            "clear-fault" => (BranchKind::FaultToGround, false),
            "close-switch" => (BranchKind::Switch, true),
            "open-switch" => (BranchKind::Switch, false),
            other => return Err(SimError::Model(format!("network has no action '{other}'"))),
        };
        let mut hit = false;
        for (b, c) in self.network.branches.iter().zip(self.closed.iter_mut()) {
            if b.kind == kind {
                *c = closed;
                hit = true;
            }
        }
        if !hit {
            return Err(SimError::Model(format!("network has no {kind:?} branch for '{action}'")));
        }
        Ok(())
    }

    fn signal_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.n_diff() + self.n_alg());
        for &bi in &self.series {
            for ph in PHASE_LABELS {
                names.push(format!("i_{}_{ph}", self.network.branches[bi].name));
            }
        }
        if self.measurement.is_some() {
            names.extend(measurement::DIFF_NAMES.iter().map(|s| s.to_string()));
        }
        for (k, role) in self.roles.iter().enumerate() {
            if let NodeRole::Unknown(_) = role {
                for ph in PHASE_LABELS {
                    names.push(format!("v_{}_{ph}", self.network.nodes[k]));
                }
            }
        }
        if self.measurement.is_some() {
            names.extend(measurement::ALG_NAMES.iter().map(|s| s.to_string()));
        }
        names
    }

    fn jacobians(&self, x: &DVector<f64>, y: &DVector<f64>, t: f64) -> JacobianSet {
        let mut j = JacobianSet::zeros(self.n_diff(), self.n_alg());

        for (k, &bi) in self.series.iter().enumerate() {
            let b = &self.network.branches[bi];
            let l = self.inductance(b);
            for p in 0..3 {
                let row = 3 * k + p;
                j.df_dx[(row, row)] = -b.r / l;
                for (node, sign) in [(b.from_node, 1.0), (b.to_node, -1.0)] {
                    match self.roles[node.0] {
                        NodeRole::Unknown(off) => j.df_dy[(row, off + p)] += sign / l,
                        NodeRole::Source(s) => j.df_dt[row] += sign * self.source_phase(s, p, t).1 / l,
                        NodeRole::Ground => {}
                    }
                }
                for (node, sign) in [(b.to_node, 1.0), (b.from_node, -1.0)] {
                    if let NodeRole::Unknown(off) = self.roles[node.0] {
                        j.dg_dx[(off + p, row)] += sign;
                    }
                }
            }
        }

        for (b, &closed) in self.network.branches.iter().zip(&self.closed) {
            if b.kind == BranchKind::SeriesRL || !closed {
                continue;
            }
            let gcond = 1.0 / b.r;
            for p in 0..3 {
                // current (va − vb)/R enters `to` and leaves `from`
                for (row_node, row_sign) in [(b.to_node, 1.0), (b.from_node, -1.0)] {
                    let NodeRole::Unknown(roff) = self.roles[row_node.0] else { continue };
                    for (col_node, col_sign) in [(b.from_node, 1.0), (b.to_node, -1.0)] {
                        let s = row_sign * col_sign * gcond;
                        match self.roles[col_node.0] {
                            NodeRole::Unknown(coff) => j.dg_dy[(roff + p, coff + p)] += s,
                            NodeRole::Source(src) => j.dg_dt[roff + p] += s * self.source_phase(src, p, t).1,
                            NodeRole::Ground => {}
                        }
                    }
                }
            }
        }

        if let Some(site) = &self.measurement {
            use measurement::{N_ALG, N_DIFF};
            let (xo, yo) = self.measurement_offsets();
            let mx = &x.as_slice()[xo..xo + N_DIFF];
            let my = &y.as_slice()[yo..yo + N_ALG];
            let cj = measurement::chain_jacobian(&site.params, mx, my);
            for r in 0..N_DIFF {
                for c in 0..N_DIFF {
                    j.df_dx[(xo + r, xo + c)] = cj.df_dx[r][c];
                }
                for c in 0..N_ALG {
                    j.df_dy[(xo + r, yo + c)] = cj.df_dy[r][c];
                }
            }
            for r in 0..N_ALG {
                for c in 0..N_DIFF {
                    j.dg_dx[(yo + r, xo + c)] = cj.dg_dx[r][c];
                }
                for c in 0..N_ALG {
                    j.dg_dy[(yo + r, yo + c)] = cj.dg_dy[r][c];
                }
            }
            for p in 0..3 {
                for (row, coeffs) in measurement::CLARKE_ROWS.iter().enumerate() {
                    match self.roles[site.node.0] {
                        NodeRole::Unknown(off) => j.dg_dy[(yo + row, off + p)] += coeffs[p],
                        NodeRole::Source(s) => j.dg_dt[yo + row] += coeffs[p] * self.source_phase(s, p, t).1,
                        NodeRole::Ground => {}
                    }
                }
            }
        }
        j
    }
}

/// Line impedance between Bus 1 and Bus 2, p.u.
pub const LINE_R: f64 = 0.0529;
pub const LINE_X: f64 = 0.4288;
/// L filter between Bus 3 and Bus 1, p.u. reactance.
pub const FILTER_X: f64 = 0.16;
pub const FAULT_R: f64 = 0.1;
pub const FAULT_APPLY_TIME: f64 = 0.2;
pub const FAULT_CLEAR_TIME: f64 = 0.4;

/// The three-bus test system: model, its network description, and the
/// fault events.
#[derive(Debug, Clone)]
pub struct ThreeBus {
    pub system: NetworkDae,
    pub events: Vec<Event>,
    pub bus1: NodeId,
}

pub fn three_bus_network() -> Network {
    let (bus1, bus2, bus3) = (NodeId(1), NodeId(2), NodeId(3));
    Network {
        nodes: vec!["ground".into(), "bus1".into(), "bus2".into(), "bus3".into()],
        branches: vec![
            Branch {
                name: "filter".into(),
                kind: BranchKind::SeriesRL,
                from_node: bus3,
                to_node: bus1,
                r: 0.0,
                x: FILTER_X,
            },
            Branch {
                name: "line".into(),
                kind: BranchKind::SeriesRL,
                from_node: bus2,
                to_node: bus1,
                r: LINE_R,
                x: LINE_X,
            },
            Branch {
                name: "fault".into(),
                kind: BranchKind::FaultToGround,
                from_node: bus1,
                to_node: NodeId::GROUND,
                r: FAULT_R,
                x: 0.0,
            },
        ],
        sources: vec![
            AcSource { vm: 1.0131, theta: 0.5834, node: bus3 },
            AcSource { vm: 1.04, theta: 0.0, node: bus2 },
        ],
        phases: 3,
        omega_syn: OMEGA_SYN,
    }
}

pub fn build_three_bus() -> Result<ThreeBus> {
    build_three_bus_with(MeasurementParams::default())
}

pub fn build_three_bus_with(params: MeasurementParams) -> Result<ThreeBus> {
    let net = three_bus_network();
    let bus1 = net.node("bus1").expect("bus1 exists");
    let system = NetworkDae::new(net)?.with_measurement(bus1, params)?;
    Ok(ThreeBus {
        system,
        events: vec![
            Event::new(FAULT_APPLY_TIME, "apply-fault"),
            Event::new(FAULT_CLEAR_TIME, "clear-fault"),
        ],
        bus1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dae::estimate_jacobians;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn source_voltage_examples() {
        let src = AcSource { vm: 1.04, theta: 0.0, node: NodeId(1) };
        let (a, b, c) = ac_source_voltage(&src, 0.0);
        assert!(close(a, 1.04, 1e-15) && close(b, -0.52, 1e-15) && close(c, -0.52, 1e-15));
        let src = AcSource { vm: 1.0, theta: 0.0, node: NodeId(1) };
        let (a, b, c) = ac_source_voltage(&src, 1.0 / 120.0);
        assert!(close(a, -1.0, 1e-14) && close(b, 0.5, 1e-14) && close(c, 0.5, 1e-14));
        for k in 0..50 {
            let (a, b, c) = ac_source_voltage(&src, k as f64 * 1.3e-3);
            assert!((a + b + c).abs() < 1e-14);
        }
    }

    #[test]
    fn three_bus_parameters() {
        let tb = build_three_bus().unwrap();
        let net = tb.system.network();
        let line = net.branches.iter().find(|b| b.name == "line").unwrap();
        let filter = net.branches.iter().find(|b| b.name == "filter").unwrap();
        let fault = net.branches.iter().find(|b| b.name == "fault").unwrap();
        assert_eq!((line.r, line.x), (0.0529, 0.4288));
        assert_eq!(filter.x, 0.16);
        assert_eq!(fault.r, 0.1);
        assert_eq!(tb.system.n_diff(), 9);
        assert_eq!(tb.system.n_alg(), 8);
        assert_eq!(tb.events.iter().map(|e| e.time).collect::<Vec<_>>(), vec![0.2, 0.4]);
    }

    #[test]
    fn bus1_phasor_matches_divider() {
        let tb = build_three_bus().unwrap();
        let ph = tb.system.solve_phasors().unwrap();
        let v3 = Complex64::from_polar(1.0131, 0.5834);
        let v2 = Complex64::from_polar(1.04, 0.0);
        let zf = Complex64::new(0.0, 0.16);
        let zl = Complex64::new(0.0529, 0.4288);
        let v1 = (v3 / zf + v2 / zl) / (zf.inv() + zl.inv());
        assert!((ph[1] - v1).norm() < 1e-13);
    }

    #[test]
    fn identical_sources_give_flat_profile() {
        let mut net = three_bus_network();
        net.sources[0].vm = 1.04;
        net.sources[0].theta = 0.0;
        for b in &mut net.branches {
            if b.kind == BranchKind::SeriesRL {
                b.x = 1e-6;
                b.r = 0.0;
            }
        }
        let sys = NetworkDae::new(net).unwrap();
        let ph = sys.solve_phasors().unwrap();
        assert!((ph[1] - Complex64::new(1.04, 0.0)).norm() < 1e-12);
        let s = solve_steady_state(&sys, 0.0).unwrap();
        assert!(s.x.amax() < 1e-9);
    }

    #[test]
    fn steady_state_is_consistent() {
        let tb = build_three_bus().unwrap();
        let s = solve_steady_state(&tb.system, 0.0).unwrap();
        let (g, fd) = s.consistency(&tb.system).unwrap();
        assert!(g <= 1e-8, "g residual {g}");
        assert_eq!(fd, 0.0);
        let kcl: Vec<f64> = (0..3)
            .map(|p| {
                s.x[tb.system.branch_current_index("line", p).unwrap()]
                    + s.x[tb.system.branch_current_index("filter", p).unwrap()]
            })
            .collect();
        assert!(kcl.iter().all(|v| v.abs() < 1e-12));
        // the hidden constraint d(KCL)/dt = 0 also holds
        let j = tb.system.jacobians(&s.x, &s.y, 0.0);
        assert!(j.gdot(&s.xdot, s.ydot.as_ref().unwrap()).amax() < 1e-9);
    }

    #[test]
    fn analytic_jacobians_match_finite_differences() {
        let mut tb = build_three_bus().unwrap();
        let mut s = solve_steady_state(&tb.system, 0.013).unwrap();
        // move off the locked point so every chain term is exercised
        for (k, v) in s.x.iter_mut().enumerate() {
            *v += 0.01 * (k as f64 + 1.0).sin();
        }
        for (k, v) in s.y.iter_mut().enumerate() {
            *v += 0.02 * (k as f64 + 2.0).cos();
        }
        for faulted in [false, true] {
            if faulted {
                tb.system.mutate("apply-fault").unwrap();
            }
            let a = tb.system.jacobians(&s.x, &s.y, 0.013);
            let e = estimate_jacobians(&tb.system, &s.x, &s.y, 0.013);
            let rel = |p: &DMatrix<f64>, q: &DMatrix<f64>| (p - q).amax() / q.amax().max(1.0);
            assert!(rel(&a.df_dx, &e.df_dx) < 1e-6);
            assert!(rel(&a.df_dy, &e.df_dy) < 1e-6);
            assert!(rel(&a.dg_dx, &e.dg_dx) < 1e-6);
            assert!(rel(&a.dg_dy, &e.dg_dy) < 1e-6);
            assert!((&a.df_dt - &e.df_dt).amax() / e.df_dt.amax().max(1.0) < 1e-5);
            assert!((&a.dg_dt - &e.dg_dt).amax() / e.dg_dt.amax().max(1.0) < 1e-5);
        }
    }

    #[test]
    fn fault_toggle_is_reversible() {
        let mut tb = build_three_bus().unwrap();
        let s = solve_steady_state(&tb.system, 0.0).unwrap();
        let before = tb.system.g(&s.x, &s.y, 0.0);
        tb.system.mutate("apply-fault").unwrap();
        assert!(tb.system.fault_active());
        let during = tb.system.g(&s.x, &s.y, 0.0);
        assert_ne!(before, during);
        // fault current u/R joins the balance
        let off = tb.system.node_voltage_index(tb.bus1, 0).unwrap();
        assert!(close(before[off] - during[off], s.y[off] / FAULT_R, 1e-12));
        assert!(solve_steady_state(&tb.system, 0.0).is_err());
        tb.system.mutate("clear-fault").unwrap();
        assert_eq!(tb.system.g(&s.x, &s.y, 0.0), before);
        assert!(tb.system.mutate("open-switch").is_err());
    }

    #[test]
    fn signal_names_follow_state_layout() {
        let tb = build_three_bus().unwrap();
        let names = tb.system.signal_names();
        assert_eq!(names.len(), 17);
        assert_eq!(names[0], "i_filter_a");
        assert_eq!(names[5], "i_line_c");
        assert_eq!(names[8], "V1m");
        assert_eq!(names[9], "v_bus1_a");
        assert_eq!(names[16], "V1m_pre");
    }

    #[test]
    fn invalid_networks_are_rejected() {
        let mut net = three_bus_network();
        net.branches[1].x = 0.0;
        assert!(matches!(NetworkDae::new(net), Err(SimError::Parameter(_))));

        let mut net = three_bus_network();
        net.nodes.push("island".into());
        assert!(matches!(NetworkDae::new(net), Err(SimError::Model(_))));

        let mut net = three_bus_network();
        net.sources[0].vm = 0.0;
        assert!(NetworkDae::new(net).is_err());
    }

    #[test]
    fn balanced_voltages_are_rotations() {
        let tb = build_three_bus().unwrap();
        let period = 1.0 / 60.0;
        for k in 0..20 {
            let t = k as f64 * 7.1e-4;
            let sa = solve_steady_state(&tb.system, t).unwrap();
            let sb = solve_steady_state(&tb.system, t + period / 3.0).unwrap();
            let ia = tb.system.node_voltage_index(tb.bus1, 0).unwrap();
            // phase B lags A by a third of a period
            assert!(close(sa.y[ia], sb.y[ia + 1], 1e-12));
        }
    }
}
