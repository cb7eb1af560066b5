//! Fixed-step RK4 integration of the closed loop: swing dynamics, tie-line
//! angles, consensus variables, PI integrals and the per-area internal
//! models, all packed into one flat state vector.
//!
//! Events take effect on step boundaries. Noise is sampled once per step at
//! the step's start time and held across the four RK stages.

use std::f64::consts::TAU;

use crate::analysis::olc_oracle;
use crate::control::ControllerMode;
use crate::disturbance::DisturbanceProfile;
use crate::error::{Error, Result};
use crate::integrate::Rk4;
use crate::internal_model::{im_derivatives_into, im_output_raw};
use crate::network::net_inflow_into;
use crate::scenario::{InitialCondition, Scenario};
use crate::trajectory::Trajectory;

const DIVERGENCE_BOUND: f64 = 1e12;

/// Offsets of each block inside the flat state vector.
#[derive(Debug, Clone, Copy)]
struct Layout {
    n: usize,
    lines: usize,
    s: usize,
    sbar: usize,
    omega: usize,
    mu: usize,
    pi: usize,
    eta: usize,
    zeta: usize,
    alpha: usize,
    dim: usize,
}

impl Layout {
    fn new(n: usize, lines: usize, s: usize) -> Self {
        let sbar = if s == 0 { 0 } else { 2 * s + 1 };
        let omega = lines;
        let mu = omega + n;
        let pi = mu + n;
        let eta = pi + n;
        let zeta = eta + n;
        let alpha = zeta + n * sbar;
        Self { n, lines, s, sbar, omega, mu, pi, eta, zeta, alpha, dim: alpha + n * s }
    }

    fn zeta_of<'a>(&self, x: &'a [f64], j: usize) -> &'a [f64] {
        &x[self.zeta + j * self.sbar..self.zeta + (j + 1) * self.sbar]
    }

    fn alpha_of<'a>(&self, x: &'a [f64], j: usize) -> &'a [f64] {
        &x[self.alpha + j * self.s..self.alpha + (j + 1) * self.s]
    }
}

/// Snapshot of the full closed-loop state.
#[derive(Debug, Clone, PartialEq)]
pub struct FullState {
    pub t: f64,
    pub step: u64,
    pub x: Vec<f64>,
}

/// Named view of one area's slice of a [`FullState`].
#[derive(Debug, Clone, PartialEq)]
pub struct AreaState {
    pub omega: f64,
    pub mu: f64,
    pub pi_integral: f64,
    pub eta: f64,
    pub zeta: Vec<f64>,
    pub alpha_hat: Vec<f64>,
}

/// Everything the right-hand side needs besides the state.
struct Plant<'a> {
    sc: &'a Scenario,
    lay: Layout,
    neighbors: Vec<Vec<usize>>,
    hold_load: Vec<f64>,
    inflow: Vec<f64>,
    command: Vec<f64>,
    variation: Vec<f64>,
    series_error: Option<Error>,
}

/// Switches derived from the event list for one step.
#[derive(Debug, Clone, Copy)]
struct Phase {
    active: bool,
    disturbed: bool,
    estimating: bool,
}

impl<'a> Plant<'a> {
    fn variation(&mut self, t: f64, disturbed: bool) {
        let onset = self.sc.onset_time();
        for (j, d) in self.sc.disturbances.iter().enumerate() {
            self.variation[j] = if disturbed {
                match d.sample_variation(t - onset) {
                    Ok(v) => v,
                    Err(e) => {
                        self.series_error.get_or_insert(e);
                        0.0
                    }
                }
            } else {
                0.0
            };
        }
    }

    fn commands(&mut self, x: &[f64], active: bool) {
        let lay = self.lay;
        let ctl = &self.sc.controller;
        for j in 0..lay.n {
            let omega = x[lay.omega + j];
            self.command[j] = if !active {
                self.hold_load[j]
            } else {
                match ctl.mode {
                    ControllerMode::Consensus => x[lay.mu + j] / ctl.beta[j],
                    ControllerMode::Adaptive => {
                        let r = &ctl.im.as_ref().expect("validated").r_vector;
                        x[lay.mu + j] / ctl.beta[j]
                            + ctl.d[j] * omega
                            + im_output_raw(lay.zeta_of(x, j), lay.alpha_of(x, j), r)
                    }
                    ControllerMode::Pi => {
                        let pi = ctl.pi.as_ref().expect("validated");
                        pi.kp[j] * omega + pi.ki[j] * x[lay.pi + j]
                    }
                }
            };
        }
    }

    fn rhs(&mut self, t: f64, x: &[f64], dx: &mut [f64], phase: Phase, noise: &[f64]) {
        let lay = self.lay;
        let sc = self.sc;
        let net = &sc.network;
        let ctl = &sc.controller;
        dx.iter_mut().for_each(|v| *v = 0.0);

        net_inflow_into(&x[..lay.lines], &net.lines, &mut self.inflow);
        self.variation(t, phase.disturbed);
        self.commands(x, phase.active);

        for (k, line) in net.lines.iter().enumerate() {
            dx[k] = x[lay.omega + line.from] - x[lay.omega + line.to];
        }
        for (j, area) in net.areas.iter().enumerate() {
            let omega = x[lay.omega + j];
            let p_in = sc.disturbances[j].p_bar + self.variation[j] + noise[j];
            dx[lay.omega + j] =
                (p_in - self.command[j] - area.damping * omega + self.inflow[j]) / area.inertia;
        }

        if phase.active {
            for j in 0..lay.n {
                let lap: f64 = self.neighbors[j].iter().map(|&k| x[lay.mu + j] - x[lay.mu + k]).sum();
                dx[lay.mu + j] = -lap + x[lay.omega + j] / ctl.beta[j];
                dx[lay.pi + j] = x[lay.omega + j];
            }
        }

        if phase.estimating {
            let im = ctl.im.as_ref().expect("validated");
            for j in 0..lay.n {
                let eta = x[lay.eta + j];
                dx[lay.eta + j] = -eta + sc.disturbances[j].p_bar - self.command[j]
                    - ctl.damping_estimate[j] * x[lay.omega + j]
                    + self.inflow[j];
                let (zs, ze) = (lay.zeta + j * lay.sbar, lay.zeta + (j + 1) * lay.sbar);
                let (as_, ae) = (lay.alpha + j * lay.s, lay.alpha + (j + 1) * lay.s);
                let (head, tail) = dx.split_at_mut(as_);
                im_derivatives_into(eta, &x[zs..ze], &x[as_..ae], im, &mut head[zs..ze], &mut tail[..ae - as_]);
                if ctl.freeze_alpha {
                    dx[as_..ae].iter_mut().for_each(|v| *v = 0.0);
                }
            }
        }
    }
}

/// Stepwise simulator over a validated scenario.
pub struct Simulation<'a> {
    plant: Plant<'a>,
    rk: Rk4,
    state: FullState,
    noise: Vec<f64>,
    activation_step: Option<u64>,
    onset_step: u64,
    total_steps: u64,
}

fn step_index(time: f64, dt: f64) -> u64 {
    (time / dt - 1e-9).ceil().max(0.0) as u64
}

impl<'a> Simulation<'a> {
    pub fn new(sc: &'a Scenario) -> Result<Self> {
        sc.validate()?;
        let s = sc.controller.im.as_ref().map_or(0, |im| im.s);
        let lay = Layout::new(sc.n_areas(), sc.network.lines.len(), s);
        let mut plant = Plant {
            sc,
            lay,
            neighbors: sc.comm.neighbors(),
            hold_load: sc.network.areas.iter().map(|a| a.initial_controllable_load).collect(),
            inflow: vec![0.0; lay.n],
            command: vec![0.0; lay.n],
            variation: vec![0.0; lay.n],
            series_error: None,
        };
        let mut x = vec![0.0; lay.dim];
        if let Some(init) = &sc.controller.alpha_init {
            for (j, a) in init.iter().enumerate() {
                x[lay.alpha + j * s..lay.alpha + (j + 1) * s].copy_from_slice(a);
            }
        }
        match sc.initial_condition {
            InitialCondition::Rest => bumpless(sc, &lay, &plant.hold_load, &mut x),
            InitialCondition::Equilibrium => {
                plant.hold_load = equilibrium(sc, &lay, &mut x)?;
            }
        }
        Ok(Self {
            plant,
            rk: Rk4::new(lay.dim),
            state: FullState { t: 0.0, step: 0, x },
            noise: vec![0.0; lay.n],
            activation_step: sc.activation_time().map(|t| step_index(t, sc.dt)),
            onset_step: step_index(sc.onset_time(), sc.dt),
            total_steps: (sc.horizon / sc.dt).round() as u64,
        })
    }

    pub fn state(&self) -> &FullState {
        &self.state
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    pub fn area_state(&self, j: usize) -> AreaState {
        let lay = self.plant.lay;
        let x = &self.state.x;
        AreaState {
            omega: x[lay.omega + j],
            mu: x[lay.mu + j],
            pi_integral: x[lay.pi + j],
            eta: x[lay.eta + j],
            zeta: lay.zeta_of(x, j).to_vec(),
            alpha_hat: lay.alpha_of(x, j).to_vec(),
        }
    }

    /// Overrides the initial line angles and frequencies; only valid before
    /// the first step.
    pub fn set_network_state(&mut self, theta_diff: &[f64], omega: &[f64]) -> Result<()> {
        let lay = self.plant.lay;
        if self.state.step != 0 {
            return Err(Error::InvalidInput("network state can only be set before the first step".into()));
        }
        crate::error::check_len("theta_diff vs lines", lay.lines, theta_diff.len())?;
        crate::error::check_len("omega vs areas", lay.n, omega.len())?;
        self.state.x[..lay.lines].copy_from_slice(theta_diff);
        self.state.x[lay.omega..lay.omega + lay.n].copy_from_slice(omega);
        Ok(())
    }

    pub fn theta_diff(&self) -> &[f64] {
        &self.state.x[..self.plant.lay.lines]
    }

    fn phase(&self, step: u64) -> Phase {
        let sc = self.plant.sc;
        let active = self.activation_step.is_some_and(|k| step >= k);
        let estimating = sc.controller.mode == ControllerMode::Adaptive
            && !sc.controller.freeze_im
            && (active || sc.controller.estimator_warmup);
        Phase { active, disturbed: step >= self.onset_step, estimating }
    }

    fn sample_noise(&mut self, t: f64) {
        for (w, d) in self.noise.iter_mut().zip(&self.plant.sc.disturbances) {
            *w = d.sample_noise(t);
        }
    }

    /// Advances one step of length `dt`.
    pub fn step(&mut self) -> Result<()> {
        let dt = self.plant.sc.dt;
        let k = self.state.step;
        let t = k as f64 * dt;
        let phase = self.phase(k);
        self.sample_noise(t);
        let noise = std::mem::take(&mut self.noise);
        let plant = &mut self.plant;
        self.rk.step(|t, x, dx| plant.rhs(t, x, dx, phase, &noise), t, &mut self.state.x, dt);
        self.noise = noise;
        self.state.step = k + 1;
        self.state.t = (k + 1) as f64 * dt;
        if let Some(e) = self.plant.series_error.take() {
            return Err(e);
        }
        self.check_divergence()
    }

    fn check_divergence(&self) -> Result<()> {
        let t = self.state.t;
        if let Some(i) = self.state.x.iter().position(|v| !v.is_finite() || v.abs() > DIVERGENCE_BOUND) {
            return Err(Error::Diverged { t, reason: format!("state component {i} = {}", self.state.x[i]) });
        }
        if let Some(im) = &self.plant.sc.controller.im {
            let lay = self.plant.lay;
            let x = &self.state.x;
            if let Some(a) = x[lay.alpha..lay.alpha + lay.n * lay.s].iter().find(|a| a.abs() > im.alpha_cap) {
                return Err(Error::Diverged { t, reason: format!("|alpha_hat| = {} exceeds cap {}", a.abs(), im.alpha_cap) });
            }
        }
        Ok(())
    }

    fn columns(&self) -> Vec<String> {
        let lay = self.plant.lay;
        let mut cols = vec!["t".to_string()];
        for prefix in ["omega", "freq_dev", "mu", "Pl", "q", "w", "tracking", "eta"] {
            cols.extend((1..=lay.n).map(|j| format!("{prefix}_{j}")));
        }
        for j in 1..=lay.n {
            cols.extend((1..=lay.sbar).map(|k| format!("zeta_{j}_{k}")));
        }
        for j in 1..=lay.n {
            cols.extend((1..=lay.s).map(|k| format!("alpha_{j}_{k}")));
        }
        let mut names: Vec<String> = Vec::new();
        for line in &self.plant.sc.network.lines {
            let base = format!("{}_{}", line.from + 1, line.to + 1);
            let mut name = base.clone();
            let mut dup = 2;
            while names.contains(&name) {
                name = format!("{base}_{dup}");
                dup += 1;
            }
            names.push(name);
        }
        cols.extend(names.iter().map(|n| format!("flow_{n}")));
        cols.extend(names.iter().map(|n| format!("theta_{n}")));
        cols
    }

    /// Current outputs as one trajectory row (same order as the columns).
    fn record_row(&mut self, row: &mut Vec<f64>) {
        let k = self.state.step;
        let t = self.state.t;
        let phase = self.phase(k);
        self.sample_noise(t);
        let x = &self.state.x;
        let plant = &mut self.plant;
        let lay = plant.lay;
        plant.variation(t, phase.disturbed);
        plant.commands(x, phase.active);
        let r = plant.sc.controller.im.as_ref().map(|im| im.r_vector.as_slice());

        row.clear();
        row.push(t);
        row.extend_from_slice(&x[lay.omega..lay.omega + lay.n]);
        row.extend((0..lay.n).map(|j| x[lay.omega + j] / TAU));
        row.extend_from_slice(&x[lay.mu..lay.mu + lay.n]);
        row.extend_from_slice(&plant.command);
        row.extend_from_slice(&plant.variation);
        row.extend_from_slice(&self.noise);
        row.extend((0..lay.n).map(|j| r.map_or(0.0, |r| im_output_raw(lay.zeta_of(x, j), lay.alpha_of(x, j), r))));
        row.extend_from_slice(&x[lay.eta..lay.eta + lay.n]);
        row.extend_from_slice(&x[lay.zeta..lay.alpha + lay.n * lay.s]);
        row.extend(plant.sc.network.lines.iter().zip(&x[..lay.lines]).map(|(l, th)| l.susceptance * th));
        row.extend_from_slice(&x[..lay.lines]);
    }

    /// Integrates to the horizon, recording every `record_stride` steps
    /// (and always the final step).
    pub fn run(mut self) -> Result<Trajectory> {
        let mut traj = Trajectory::new(self.columns());
        let stride = self.plant.sc.record_stride as u64;
        let mut row = Vec::with_capacity(traj.width());
        self.record_row(&mut row);
        traj.push_row(&row)?;
        while self.state.step < self.total_steps {
            self.step()?;
            if self.state.step.is_multiple_of(stride) || self.state.step == self.total_steps {
                self.record_row(&mut row);
                traj.push_row(&row)?;
            }
        }
        if let Some(e) = self.plant.series_error.take() {
            return Err(e);
        }
        Ok(traj)
    }
}

/// Runs a scenario from `t = 0` to its horizon.
pub fn run(scenario: &Scenario) -> Result<Trajectory> {
    Simulation::new(scenario)?.run()
}

/// Integrators start where the held load already is, so activation does
/// not itself produce a jump in the consensus or PI command.
fn bumpless(sc: &Scenario, lay: &Layout, hold: &[f64], x: &mut [f64]) {
    for j in 0..lay.n {
        x[lay.mu + j] = sc.controller.beta[j] * hold[j];
        if let Some(pi) = &sc.controller.pi {
            x[lay.pi + j] = hold[j] / pi.ki[j];
        }
    }
}

/// Closed-loop equilibrium for the predicted injections: optimal dispatch,
/// tie-line angles carrying the residual mismatch, agreed `μ`. Returns the
/// dispatch, which also serves as the pre-activation load.
fn equilibrium(sc: &Scenario, lay: &Layout, x: &mut [f64]) -> Result<Vec<f64>> {
    let p_bar: Vec<f64> = sc.disturbances.iter().map(|d: &DisturbanceProfile| d.p_bar).collect();
    let dispatch = olc_oracle(&p_bar, &sc.controller.beta)?;
    let n = lay.n;
    // B-weighted Laplacian with area 1 as the angle reference
    let mut a = vec![vec![0.0; n.saturating_sub(1)]; n.saturating_sub(1)];
    let mut b: Vec<f64> = (1..n).map(|j| p_bar[j] - dispatch[j]).collect();
    for line in &sc.network.lines {
        let (f, t, w) = (line.from, line.to, line.susceptance);
        for (p, q) in [(f, t), (t, f)] {
            if p > 0 {
                a[p - 1][p - 1] += w;
                if q > 0 {
                    a[p - 1][q - 1] -= w;
                }
            }
        }
    }
    let mut angle = vec![0.0];
    angle.extend(solve_dense(&mut a, &mut b)?);
    for (k, line) in sc.network.lines.iter().enumerate() {
        x[k] = angle[line.from] - angle[line.to];
    }
    bumpless(sc, lay, &dispatch, x);
    Ok(dispatch)
}

/// Gaussian elimination with partial pivoting; consumes its inputs.
fn solve_dense(a: &mut [Vec<f64>], b: &mut [f64]) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty range");
        if a[pivot][col].abs() < 1e-12 {
            return Err(Error::InvalidInput("singular network matrix".into()));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut out = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|c| a[row][c] * out[c]).sum();
        out[row] = (b[row] - tail) / a[row][row];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_solver() {
        let mut a = vec![vec![0.0, 2.0], vec![1.0, 1.0]];
        let mut b = vec![4.0, 3.0];
        assert_eq!(solve_dense(&mut a, &mut b).unwrap(), vec![1.0, 2.0]);
        let mut a = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        assert!(solve_dense(&mut a, &mut [1.0, 1.0]).is_err());
    }

    #[test]
    fn step_indices_land_on_grid() {
        assert_eq!(step_index(20.0, 0.001), 20_000);
        assert_eq!(step_index(0.0, 0.001), 0);
        assert_eq!(step_index(0.0015, 0.001), 2);
    }
}
