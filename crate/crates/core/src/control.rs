//! Load-side controllers and the communication graph they exchange `μ` over.
//!
//! Three laws share the same plant interface:
//! consensus-only `P_l = μ/β`, consensus plus adaptive internal model
//! `P_l = μ/β + dω + Ã(α̂)ζ`, and a decentralized PI baseline.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::internal_model::{im_output, IMConfig, InternalModelState};
use crate::network::{component_count, PowerNetwork};

/// Undirected communication graph over 0-based area indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommGraph {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
}

impl CommGraph {
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Self {
        Self { n, edges }
    }

    /// Cycle `0 - 1 - … - (n−1) - 0`.
    pub fn ring(n: usize) -> Self {
        let edges = match n {
            0 | 1 => Vec::new(),
            2 => vec![(0, 1)],
            _ => (0..n).map(|i| (i, (i + 1) % n)).collect(),
        };
        Self { n, edges }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for &(a, b) in &self.edges {
            if a >= self.n || b >= self.n {
                out.push(format!("comm edge ({}, {}) references a missing area", a + 1, b + 1));
            } else if a == b {
                out.push(format!("comm edge ({}, {}) is a self-loop", a + 1, b + 1));
            }
        }
        if out.is_empty() && self.n > 0 && component_count(self.n, self.edges.iter().copied()) != 1 {
            out.push("communication graph is not connected".to_string());
        }
        out
    }

    /// Neighbor lists with duplicate edges collapsed.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(a, b) in &self.edges {
            if a != b && !adj[a].contains(&b) {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        adj
    }
}

/// Graph Laplacian; rejects disconnected or malformed graphs.
pub fn laplacian(g: &CommGraph) -> Result<Vec<Vec<f64>>> {
    let problems = g.violations();
    if !problems.is_empty() {
        return Err(Error::InvalidInput(problems.join("; ")));
    }
    let mut l = vec![vec![0.0; g.n]; g.n];
    for (i, nbrs) in g.neighbors().iter().enumerate() {
        l[i][i] = nbrs.len() as f64;
        for &k in nbrs {
            l[i][k] = -1.0;
        }
    }
    Ok(l)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerMode {
    Consensus,
    Adaptive,
    Pi,
}

impl std::str::FromStr for ControllerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "consensus" => Ok(Self::Consensus),
            "adaptive" => Ok(Self::Adaptive),
            "pi" => Ok(Self::Pi),
            other => Err(Error::InvalidInput(format!(
                "unknown controller mode '{other}' (expected consensus, adaptive or pi)"
            ))),
        }
    }
}

impl std::fmt::Display for ControllerMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Consensus => "consensus",
            Self::Adaptive => "adaptive",
            Self::Pi => "pi",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiGains {
    pub kp: Vec<f64>,
    pub ki: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub mode: ControllerMode,
    /// Cost weights `β_j`.
    pub beta: Vec<f64>,
    /// Stabilizing gains `d_j`, MW·s/rad.
    pub d: Vec<f64>,
    /// `D̂_j` used by the estimator, MW·s/rad.
    pub damping_estimate: Vec<f64>,
    pub im: Option<IMConfig>,
    pub pi: Option<PiGains>,
    /// Run the `(η, ζ, α̂)` estimator from `t = 0` instead of from activation.
    pub estimator_warmup: bool,
    /// Hold `α̂` at its initial value.
    pub freeze_alpha: bool,
    /// Hold the whole internal model at its initial state.
    pub freeze_im: bool,
    /// Per-area initial `α̂`; zeros when absent.
    pub alpha_init: Option<Vec<Vec<f64>>>,
}

impl ControllerConfig {
    pub fn violations(&self, n: usize) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [("beta", &self.beta), ("d", &self.d), ("damping_estimate", &self.damping_estimate)] {
            if v.len() != n {
                out.push(format!("controller.{name} has {} entries, expected {n}", v.len()));
            }
            for (j, x) in v.iter().enumerate() {
                if !(*x > 0.0) || !x.is_finite() {
                    out.push(format!("controller.{name}[{}] = {x} must be positive", j + 1));
                }
            }
        }
        match (&self.im, self.mode) {
            (None, ControllerMode::Adaptive) => {
                out.push("adaptive mode requires an internal_model section".to_string())
            }
            (Some(im), _) => {
                out.extend(im.violations().into_iter().map(|m| format!("internal_model: {m}")));
                if let Some(init) = &self.alpha_init {
                    if init.len() != n || init.iter().any(|a| a.len() != im.s) {
                        out.push(format!("alpha_init must be {n} vectors of length {}", im.s));
                    }
                }
            }
            (None, _) => {}
        }
        match (&self.pi, self.mode) {
            (None, ControllerMode::Pi) => out.push("pi mode requires pi gains".to_string()),
            (Some(pi), _) => {
                for (name, v) in [("kp", &pi.kp), ("ki", &pi.ki)] {
                    if v.len() != n {
                        out.push(format!("pi.{name} has {} entries, expected {n}", v.len()));
                    }
                    if v.iter().any(|x| !(*x > 0.0)) {
                        out.push(format!("pi.{name} entries must be positive"));
                    }
                }
            }
            (None, _) => {}
        }
        out
    }

    /// Soft warnings: areas whose `d_j + D_j` is too small for the gain
    /// condition to plausibly hold.
    pub fn lint(&self, net: &PowerNetwork) -> Vec<String> {
        if self.mode != ControllerMode::Adaptive {
            return Vec::new();
        }
        self.d
            .iter()
            .zip(&net.areas)
            .enumerate()
            .filter(|(_, (d, a))| **d + a.damping <= 100.0)
            .map(|(j, (d, a))| {
                format!(
                    "area {}: d + D = {} <= 100; the closed loop may not be stable, raise d",
                    j + 1,
                    d + a.damping
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub mu: Vec<f64>,
    pub im: Vec<InternalModelState>,
    pub pi_integral: Vec<f64>,
}

/// `μ̇_j = −Σ_{k∈N_j}(μ_j − μ_k) + ω_j/β_j`.
pub fn mu_derivative(mu: &[f64], omega: &[f64], beta: &[f64], g: &CommGraph) -> Result<Vec<f64>> {
    check_len("mu vs graph", g.n, mu.len())?;
    check_len("omega vs graph", g.n, omega.len())?;
    check_len("beta vs graph", g.n, beta.len())?;
    let nbrs = g.neighbors();
    Ok((0..g.n)
        .map(|j| -nbrs[j].iter().map(|&k| mu[j] - mu[k]).sum::<f64>() + omega[j] / beta[j])
        .collect())
}

pub fn command_consensus(mu: f64, beta: f64) -> f64 {
    mu / beta
}

pub fn command_adaptive(
    mu: f64,
    beta: f64,
    d: f64,
    omega: f64,
    im_state: &InternalModelState,
    im_cfg: &IMConfig,
) -> Result<f64> {
    Ok(mu / beta + d * omega + im_output(im_state, im_cfg)?)
}

/// `η̇ = −η + P̄ − P_l − D̂ω + net tie-line inflow`.
pub fn eta_derivative(eta: f64, p_bar: f64, command: f64, damping_estimate: f64, omega: f64, net_flow: f64) -> f64 {
    -eta + p_bar - command - damping_estimate * omega + net_flow
}

pub fn command_pi(omega: f64, integral: f64, kp: f64, ki: f64) -> f64 {
    kp * omega + ki * integral
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Area, PowerNetwork};

    #[test]
    fn laplacian_examples() {
        let ring = laplacian(&CommGraph::ring(4)).unwrap();
        assert_eq!(
            ring,
            vec![
                vec![2.0, -1.0, 0.0, -1.0],
                vec![-1.0, 2.0, -1.0, 0.0],
                vec![0.0, -1.0, 2.0, -1.0],
                vec![-1.0, 0.0, -1.0, 2.0],
            ]
        );
        assert_eq!(laplacian(&CommGraph::ring(2)).unwrap(), vec![vec![1.0, -1.0], vec![-1.0, 1.0]]);
        let star = laplacian(&CommGraph::new(5, vec![(0, 1), (0, 2), (0, 3), (0, 4), (2, 3)])).unwrap();
        for row in &star {
            assert_eq!(row.iter().sum::<f64>(), 0.0);
        }
    }

    #[test]
    fn laplacian_rejects_bad_graphs() {
        assert!(laplacian(&CommGraph::new(4, vec![(0, 1), (2, 3)])).is_err());
        assert!(laplacian(&CommGraph::new(2, vec![(0, 2)])).is_err());
        assert!(laplacian(&CommGraph::new(2, vec![(0, 0), (0, 1)])).is_err());
    }

    #[test]
    fn mu_derivative_examples() {
        let g = CommGraph::ring(4);
        let beta = [1.0, 0.8, 0.8, 0.4];
        assert_eq!(mu_derivative(&[3.0; 4], &[0.0; 4], &beta, &g).unwrap(), vec![0.0; 4]);
        assert_eq!(
            mu_derivative(&[1.0, 0.0, 0.0, 0.0], &[0.0; 4], &beta, &g).unwrap(),
            vec![-2.0, 1.0, 0.0, 1.0]
        );
        assert_eq!(mu_derivative(&[0.0; 4], &beta, &beta, &g).unwrap(), vec![1.0; 4]);
        assert!(mu_derivative(&[0.0; 3], &[0.0; 4], &beta, &g).is_err());
    }

    #[test]
    fn command_examples() {
        assert_eq!(command_consensus(10.0, 1.0), 10.0);
        assert_eq!(command_consensus(10.0, 0.4), 25.0);
        assert_eq!(command_consensus(0.0, 0.8), 0.0);

        let cfg = IMConfig::new(1, 1.0, 10.0);
        let zero = InternalModelState::zeros(&cfg);
        assert_eq!(command_adaptive(10.0, 1.0, 1000.0, 0.0, &zero, &cfg).unwrap(), 10.0);
        assert!((command_adaptive(0.0, 1.0, 1000.0, 0.001, &zero, &cfg).unwrap() - 1.0).abs() < 1e-12);
        // ζ chosen so that Ã ζ = 3 with Ã = [1, 2, 3]
        let im = InternalModelState { eta: 0.0, zeta: vec![0.0, 0.0, 1.0], alpha_hat: vec![-1.0] };
        assert!((command_adaptive(8.0, 0.8, 1000.0, 0.0, &im, &cfg).unwrap() - 13.0).abs() < 1e-12);

        assert_eq!(command_pi(0.0, 0.0, 500.0, 2500.0), 0.0);
        assert!((command_pi(0.01, 0.1, 500.0, 2500.0) - 255.0).abs() < 1e-12);
    }

    #[test]
    fn eta_examples() {
        assert_eq!(eta_derivative(2.0, 0.0, 0.0, 50.0, 0.0, 0.0), -2.0);
        assert_eq!(eta_derivative(0.0, 15.0, 15.0, 50.0, 0.0, 0.0), 0.0);
        assert!((eta_derivative(0.0, 15.0, 10.0, 50.0, 0.01, 0.0) - 4.5).abs() < 1e-12);
    }

    #[test]
    fn mode_parsing() {
        for m in [ControllerMode::Consensus, ControllerMode::Adaptive, ControllerMode::Pi] {
            assert_eq!(m.to_string().parse::<ControllerMode>().unwrap(), m);
        }
        assert!("pid".parse::<ControllerMode>().is_err());
    }

    fn config(mode: ControllerMode) -> ControllerConfig {
        ControllerConfig {
            mode,
            beta: vec![1.0, 0.5],
            d: vec![1000.0, 20.0],
            damping_estimate: vec![50.0, 50.0],
            im: Some(IMConfig::new(1, 1.0, 10.0)),
            pi: None,
            estimator_warmup: false,
            freeze_alpha: false,
            freeze_im: false,
            alpha_init: None,
        }
    }

    #[test]
    fn config_checks() {
        assert!(config(ControllerMode::Adaptive).violations(2).is_empty());
        let pi = config(ControllerMode::Pi).violations(2);
        assert_eq!(pi, vec!["pi mode requires pi gains".to_string()]);
        let mut bad = config(ControllerMode::Adaptive);
        bad.beta = vec![-1.0, 0.5];
        bad.d = vec![1.0];
        assert_eq!(bad.violations(2).len(), 2);

        let area = |damping| Area { name: String::new(), inertia: 1.0, damping, initial_controllable_load: 0.0 };
        let net = PowerNetwork { areas: vec![area(50.0), area(50.0)], lines: vec![] };
        let warnings = config(ControllerMode::Adaptive).lint(&net);
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].starts_with("area 2"));
    }
}
