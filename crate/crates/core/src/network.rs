//! Multi-area grid model: linearized swing dynamics with DC tie-line flows.
//!
//! Each control area is a single node with an aggregate inertia and damping.
//! Tie lines carry an arbitrary but fixed orientation; the state stores one
//! relative angle per line (`theta_i - theta_j` for a line `i -> j`) because
//! absolute angles never enter the closed loop.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Area {
    pub name: String,
    /// Inertia `M`, MW·s²/rad.
    pub inertia: f64,
    /// Damping `D`, MW·s/rad.
    pub damping: f64,
    /// Controllable load held before the controller is switched on, MW.
    pub initial_controllable_load: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TieLine {
    pub from: usize,
    pub to: usize,
    /// Susceptance `B`, MW/rad.
    pub susceptance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerNetwork {
    pub areas: Vec<Area>,
    pub lines: Vec<TieLine>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    /// Relative angle per line, rad.
    pub theta_diff: Vec<f64>,
    /// Frequency deviation per area, rad/s.
    pub omega: Vec<f64>,
}

impl NetworkState {
    pub fn zeros(net: &PowerNetwork) -> Self {
        Self {
            theta_diff: vec![0.0; net.lines.len()],
            omega: vec![0.0; net.areas.len()],
        }
    }

    fn check(&self, net: &PowerNetwork) -> Result<()> {
        check_len("theta_diff vs lines", net.lines.len(), self.theta_diff.len())?;
        check_len("omega vs areas", net.areas.len(), self.omega.len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoAreas,
    NotConnected { components: usize },
    NonpositiveInertia { area: usize, value: f64 },
    NonpositiveDamping { area: usize, value: f64 },
    NonpositiveSusceptance { line: usize, value: f64 },
    SelfLoop { line: usize },
    UnknownArea { line: usize, area: usize },
    DuplicateLine { line: usize, from: usize, to: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoAreas => write!(f, "network has no areas"),
            Violation::NotConnected { components } => {
                write!(f, "network is not connected ({components} components)")
            }
            Violation::NonpositiveInertia { area, value } => {
                write!(f, "area {}: nonpositive inertia {value}", area + 1)
            }
            Violation::NonpositiveDamping { area, value } => {
                write!(f, "area {}: nonpositive damping {value}", area + 1)
            }
            Violation::NonpositiveSusceptance { line, value } => {
                write!(f, "line {}: nonpositive susceptance {value}", line + 1)
            }
            Violation::SelfLoop { line } => write!(f, "line {}: connects an area to itself", line + 1),
            Violation::UnknownArea { line, area } => {
                write!(f, "line {}: unknown area {}", line + 1, area + 1)
            }
            Violation::DuplicateLine { line, from, to } => write!(
                f,
                "line {}: duplicate line between areas {} and {}",
                line + 1,
                from + 1,
                to + 1
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn messages(&self) -> Vec<String> {
        self.violations.iter().map(ToString::to_string).collect()
    }
}

/// Number of connected components of an undirected graph on `n` nodes.
pub(crate) fn component_count(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> usize {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut components = n;
    for (a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
            components -= 1;
        }
    }
    components
}

/// Checks physical parameters and connectivity. Never panics; every problem
/// found is listed in the report.
pub fn validate_network(net: &PowerNetwork) -> ValidationReport {
    let mut violations = Vec::new();
    let n = net.areas.len();
    if n == 0 {
        violations.push(Violation::NoAreas);
        return ValidationReport { violations };
    }
    for (i, area) in net.areas.iter().enumerate() {
        if !(area.inertia > 0.0) {
            violations.push(Violation::NonpositiveInertia { area: i, value: area.inertia });
        }
        if !(area.damping > 0.0) {
            violations.push(Violation::NonpositiveDamping { area: i, value: area.damping });
        }
    }
    let mut seen = HashSet::new();
    let mut edges = Vec::new();
    for (k, line) in net.lines.iter().enumerate() {
        if !(line.susceptance > 0.0) {
            violations.push(Violation::NonpositiveSusceptance { line: k, value: line.susceptance });
        }
        let mut endpoints_ok = true;
        for area in [line.from, line.to] {
            if area >= n {
                violations.push(Violation::UnknownArea { line: k, area });
                endpoints_ok = false;
            }
        }
        if line.from == line.to {
            violations.push(Violation::SelfLoop { line: k });
            endpoints_ok = false;
        }
        if endpoints_ok {
            let key = (line.from.min(line.to), line.from.max(line.to));
            if !seen.insert(key) {
                violations.push(Violation::DuplicateLine { line: k, from: key.0, to: key.1 });
            }
            edges.push((line.from, line.to));
        }
    }
    let components = component_count(n, edges);
    if components > 1 {
        violations.push(Violation::NotConnected { components });
    }
    ValidationReport { violations }
}

/// Flow on each line in its stored orientation, MW.
pub fn tie_line_flows(state: &NetworkState, net: &PowerNetwork) -> Result<Vec<f64>> {
    state.check(net)?;
    Ok(net
        .lines
        .iter()
        .zip(&state.theta_diff)
        .map(|(line, theta)| line.susceptance * theta)
        .collect())
}

/// Net tie-line power into each area (inflows minus outflows), MW.
pub fn net_inflow(theta_diff: &[f64], net: &PowerNetwork) -> Result<Vec<f64>> {
    check_len("theta_diff vs lines", net.lines.len(), theta_diff.len())?;
    let mut inflow = vec![0.0; net.areas.len()];
    net_inflow_into(theta_diff, &net.lines, &mut inflow);
    Ok(inflow)
}

pub(crate) fn net_inflow_into(theta_diff: &[f64], lines: &[TieLine], inflow: &mut [f64]) {
    inflow.iter_mut().for_each(|v| *v = 0.0);
    for (line, theta) in lines.iter().zip(theta_diff) {
        let flow = line.susceptance * theta;
        inflow[line.to] += flow;
        inflow[line.from] -= flow;
    }
}

/// Right-hand side of the swing equations.
///
/// Returns `(d theta_diff / dt, d omega / dt)` where
/// `M_j dω_j/dt = P_in,j − P_l,j − D_j ω_j + inflow_j − outflow_j`.
pub fn swing_derivatives(
    state: &NetworkState,
    net_injection: &[f64],
    load_command: &[f64],
    net: &PowerNetwork,
) -> Result<(Vec<f64>, Vec<f64>)> {
    state.check(net)?;
    let n = net.areas.len();
    check_len("net_injection vs areas", n, net_injection.len())?;
    check_len("load_command vs areas", n, load_command.len())?;

    let theta_rate = net
        .lines
        .iter()
        .map(|l| state.omega[l.from] - state.omega[l.to])
        .collect();
    let inflow = net_inflow(&state.theta_diff, net)?;
    let omega_rate = net
        .areas
        .iter()
        .enumerate()
        .map(|(j, a)| {
            (net_injection[j] - load_command[j] - a.damping * state.omega[j] + inflow[j]) / a.inertia
        })
        .collect();
    Ok((theta_rate, omega_rate))
}
