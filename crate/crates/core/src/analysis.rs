//! Metrics over recorded trajectories and the closed-form dispatch oracle.
//!
//! All integrals use the trapezoidal rule on the recorded grid.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use crate::error::{check_len, Error, Result};
use crate::scenario::Scenario;
use crate::trajectory::Trajectory;

/// Length of the trailing window used for steady-state figures, s.
pub const STEADY_WINDOW: f64 = 20.0;

const GRID_EPS: f64 = 1e-9;

fn trapezoid(t: &[f64], y: impl Fn(usize) -> f64, from: usize, to: usize) -> f64 {
    (from..to).map(|i| 0.5 * (t[i + 1] - t[i]) * (y(i) + y(i + 1))).sum()
}

/// Index range `[lo, hi]` of samples inside `[t0, t1]`, checking coverage.
fn window(t: &[f64], t0: f64, t1: f64) -> Result<(usize, usize)> {
    if t.is_empty() {
        return Err(Error::InvalidInput("empty time grid".into()));
    }
    if !(t1 > t0) {
        return Err(Error::InvalidInput(format!("window [{t0}, {t1}] is empty")));
    }
    let (first, last) = (t[0], t[t.len() - 1]);
    if t0 < first - GRID_EPS || t1 > last + GRID_EPS {
        return Err(Error::OutOfRange { t: if t0 < first { t0 } else { t1 }, start: first, end: last });
    }
    let lo = t.partition_point(|&x| x < t0 - GRID_EPS);
    let hi = t.partition_point(|&x| x <= t1 + GRID_EPS) - 1;
    if hi <= lo {
        return Err(Error::InvalidInput(format!("window [{t0}, {t1}] holds fewer than two samples")));
    }
    Ok((lo, hi))
}

/// `∫|tracking − q| dt / ∫|q| dt` over `[t0, t1]`.
pub fn err_index(times: &[f64], tracking: &[f64], q: &[f64], t0: f64, t1: f64) -> Result<f64> {
    check_len("tracking vs times", times.len(), tracking.len())?;
    check_len("q vs times", times.len(), q.len())?;
    let (lo, hi) = window(times, t0, t1)?;
    let den = trapezoid(times, |i| q[i].abs(), lo, hi);
    if den < 1e-9 * (t1 - t0) {
        return Err(Error::Undefined(format!("variation integral {den:e} is numerically zero")));
    }
    Ok(trapezoid(times, |i| (tracking[i] - q[i]).abs(), lo, hi) / den)
}

/// Optimal dispatch of a total `Σ P̄` under costs `β_j P_j² / 2`:
/// `P_j = ν / β_j` with `ν = Σ P̄ / Σ 1/β`.
pub fn olc_oracle(p_bar: &[f64], beta: &[f64]) -> Result<Vec<f64>> {
    check_len("beta vs p_bar", p_bar.len(), beta.len())?;
    if beta.iter().any(|b| !(*b > 0.0)) {
        return Err(Error::InvalidInput("beta must be positive".into()));
    }
    let nu = p_bar.iter().sum::<f64>() / beta.iter().map(|b| 1.0 / b).sum::<f64>();
    Ok(beta.iter().map(|b| nu / b).collect())
}

/// `(Σ_j ∫ω_j² dt) / (Σ_j ∫w_j² dt)` over `[t0, end]`; mixed units
/// ((rad/s)² per MW²) exactly as the attenuation inequality is stated.
pub fn l2_ratio(times: &[f64], omega: &[Vec<f64>], w: &[Vec<f64>], t0: f64) -> Result<f64> {
    check_len("w areas vs omega areas", omega.len(), w.len())?;
    let end = *times.last().ok_or_else(|| Error::InvalidInput("empty time grid".into()))?;
    let (lo, hi) = window(times, t0, end)?;
    let energy = |series: &[Vec<f64>]| -> Result<f64> {
        series.iter().try_fold(0.0, |acc, s| {
            check_len("series vs times", times.len(), s.len())?;
            Ok(acc + trapezoid(times, |i| s[i] * s[i], lo, hi))
        })
    };
    let den = energy(w)?;
    if den < 1e-12 * (end - t0) {
        return Err(Error::Undefined("noise energy is numerically zero".into()));
    }
    Ok(energy(omega)? / den)
}

/// `(nadir, steady_max)` in Hz: the lowest frequency deviation after
/// `activation` across areas, and the largest `|deviation|` over the final
/// `window` seconds.
pub fn nadir_and_steady(times: &[f64], omega: &[Vec<f64>], activation: f64, window_len: f64) -> Result<(f64, f64)> {
    let end = *times.last().ok_or_else(|| Error::InvalidInput("empty time grid".into()))?;
    let (lo, hi) = window(times, activation, end)?;
    let (slo, shi) = window(times, end - window_len, end)?;
    let mut nadir = f64::INFINITY;
    let mut steady = 0.0f64;
    for s in omega {
        check_len("omega vs times", times.len(), s.len())?;
        nadir = s[lo..=hi].iter().fold(nadir, |m, v| m.min(*v));
        steady = s[slo..=shi].iter().fold(steady, |m, v| m.max(v.abs()));
    }
    Ok((nadir / TAU, steady / TAU))
}

/// Largest pairwise `|μ_j − μ_k|`.
pub fn spread(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if values.is_empty() {
        0.0
    } else {
        max - min
    }
}

/// Quantities that vanish at the closed-loop equilibrium, read at the final
/// recorded sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResiduals {
    /// max |ω_j|, rad/s.
    pub omega: f64,
    /// max |μ_j − μ_k|.
    pub mu_spread: f64,
    /// max |η_j + R ζ_j|, MW; zero without an internal model.
    pub estimator: f64,
    /// max |Ã(α̂_j) ζ_j − q_j|, MW; zero without an internal model.
    pub tracking: f64,
}

pub fn equilibrium_residuals(traj: &Trajectory, scenario: &Scenario) -> Result<EquilibriumResiduals> {
    if traj.is_empty() {
        return Err(Error::InvalidInput("empty trajectory".into()));
    }
    let last = traj.len() - 1;
    let value = |name: String| -> Result<f64> {
        let k = traj.index_of(&name).ok_or_else(|| Error::InvalidInput(format!("trajectory has no column '{name}'")))?;
        Ok(traj.row(last)[k])
    };
    let n = scenario.n_areas();
    let mut res = EquilibriumResiduals { omega: 0.0, mu_spread: 0.0, estimator: 0.0, tracking: 0.0 };
    let mut mu = Vec::with_capacity(n);
    for j in 1..=n {
        res.omega = res.omega.max(value(format!("omega_{j}"))?.abs());
        mu.push(value(format!("mu_{j}"))?);
        if let Some(im) = &scenario.controller.im {
            let mut e = value(format!("eta_{j}"))?;
            for (k, r) in im.r_vector.iter().enumerate() {
                e += r * value(format!("zeta_{j}_{}", k + 1))?;
            }
            res.estimator = res.estimator.max(e.abs());
            let gap = value(format!("tracking_{j}"))? - value(format!("q_{j}"))?;
            res.tracking = res.tracking.max(gap.abs());
        }
    }
    res.mu_spread = spread(&mu);
    Ok(res)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    /// Per area; `None` where the variation integral vanishes.
    pub err_index: Vec<Option<f64>>,
    pub err_window: (f64, f64),
    pub consensus_residual: f64,
    /// max |ω| over the final window, rad/s.
    pub steady_omega: f64,
    pub nadir_hz: f64,
    pub steady_max_hz: f64,
    pub l2_ratio: Option<f64>,
    /// max_j |μ_j/β_j − P*_j| / max_j |P*_j| with `P*` the dispatch oracle.
    pub olc_gap: Option<f64>,
    pub residuals: EquilibriumResiduals,
}

impl MetricsReport {
    /// Computes every metric. The tracking target is `q + w`; the error
    /// window runs from the later of activation and onset to the horizon.
    pub fn compute(traj: &Trajectory, scenario: &Scenario) -> Result<Self> {
        let t = traj.times();
        let n = scenario.n_areas();
        let end = *t.last().ok_or_else(|| Error::InvalidInput("empty trajectory".into()))?;
        let activation = scenario.activation_time().unwrap_or(0.0).min(end);
        let t0 = activation.max(scenario.onset_time()).min(end);

        let mut omega = Vec::with_capacity(n);
        let mut noise = Vec::with_capacity(n);
        let mut err = Vec::with_capacity(n);
        for j in 0..n {
            omega.push(traj.area_series("omega", j)?);
            let w = traj.area_series("w", j)?;
            let target: Vec<f64> = traj.area_series("q", j)?.iter().zip(&w).map(|(q, w)| q + w).collect();
            let tracking = traj.area_series("tracking", j)?;
            err.push(match err_index(&t, &tracking, &target, t0, end) {
                Ok(v) => Some(v),
                Err(Error::Undefined(_)) | Err(Error::InvalidInput(_)) => None,
                Err(e) => return Err(e),
            });
            noise.push(w);
        }

        let window_len = STEADY_WINDOW.min(end - t[0]);
        let (nadir_hz, steady_max_hz) = if end > activation {
            nadir_and_steady(&t, &omega, activation, window_len)?
        } else {
            (0.0, 0.0)
        };
        let l2 = if end > activation {
            match l2_ratio(&t, &omega, &noise, activation) {
                Ok(v) => Some(v),
                Err(Error::Undefined(_)) => None,
                Err(e) => return Err(e),
            }
        } else {
            None
        };

        let residuals = equilibrium_residuals(traj, scenario)?;
        let olc_gap = if scenario.controller.mode == crate::control::ControllerMode::Pi {
            None
        } else {
            let p_bar: Vec<f64> = scenario.disturbances.iter().map(|d| d.p_bar).collect();
            let oracle = olc_oracle(&p_bar, &scenario.controller.beta)?;
            let scale = oracle.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let last = traj.row(traj.len() - 1);
            let mut gap = 0.0f64;
            for j in 0..n {
                let k = traj.index_of(&format!("mu_{}", j + 1)).expect("checked above");
                gap = gap.max((last[k] / scenario.controller.beta[j] - oracle[j]).abs());
            }
            (scale > 0.0).then(|| gap / scale)
        };

        Ok(Self {
            err_index: err,
            err_window: (t0, end),
            consensus_residual: residuals.mu_spread,
            steady_omega: steady_max_hz * TAU,
            nadir_hz,
            steady_max_hz,
            l2_ratio: l2,
            olc_gap,
            residuals,
        })
    }

    /// Flat `key=value` lines.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let opt = |v: Option<f64>| v.map_or("undefined".to_string(), |v| format!("{v:.6e}"));
        for (j, e) in self.err_index.iter().enumerate() {
            let _ = writeln!(out, "err_index_{}={}", j + 1, opt(*e));
        }
        let _ = writeln!(out, "err_window_start_s={}", self.err_window.0);
        let _ = writeln!(out, "err_window_end_s={}", self.err_window.1);
        let _ = writeln!(out, "consensus_residual={:.6e}", self.consensus_residual);
        let _ = writeln!(out, "steady_omega_rad_s={:.6e}", self.steady_omega);
        let _ = writeln!(out, "nadir_hz={:.6e}", self.nadir_hz);
        let _ = writeln!(out, "steady_max_hz={:.6e}", self.steady_max_hz);
        let _ = writeln!(out, "l2_ratio={}", opt(self.l2_ratio));
        let _ = writeln!(out, "olc_gap={}", opt(self.olc_gap));
        let _ = writeln!(out, "residual_omega_rad_s={:.6e}", self.residuals.omega);
        let _ = writeln!(out, "residual_mu_spread={:.6e}", self.residuals.mu_spread);
        let _ = writeln!(out, "residual_estimator_mw={:.6e}", self.residuals.estimator);
        let _ = writeln!(out, "residual_tracking_mw={:.6e}", self.residuals.tracking);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: usize, dt: f64) -> Vec<f64> {
        (0..n).map(|k| k as f64 * dt).collect()
    }

    #[test]
    fn err_index_examples() {
        let t = grid(101, 0.1);
        let q: Vec<f64> = t.iter().map(|x| 2.0 + x.sin()).collect();
        assert_eq!(err_index(&t, &q, &q, 0.0, 10.0).unwrap(), 0.0);
        let c = vec![3.0; 101];
        assert!((err_index(&t, &[0.0; 101], &c, 0.0, 10.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(err_index(&t, &c, &[0.0; 101], 0.0, 10.0), Err(Error::Undefined(_))));
        assert!(err_index(&t, &c, &c, 0.0, 11.0).is_err());
        assert!(err_index(&t, &c, &c, 5.0, 5.0).is_err());
    }

    #[test]
    fn err_index_uses_only_the_window() {
        let t = grid(201, 0.1);
        let q = vec![1.0; 201];
        // tracking is wrong only before t = 10
        let tracking: Vec<f64> = t.iter().map(|x| if *x < 10.0 { 5.0 } else { 1.0 }).collect();
        assert_eq!(err_index(&t, &tracking, &q, 10.0, 20.0).unwrap(), 0.0);
    }

    #[test]
    fn oracle_examples() {
        assert_eq!(olc_oracle(&[10.0], &[0.3]).unwrap(), vec![10.0]);
        let p = olc_oracle(&[15.0; 4], &[1.0, 0.8, 0.8, 0.4]).unwrap();
        for (a, b) in p.iter().zip([10.0, 12.5, 12.5, 25.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(olc_oracle(&[1.0], &[0.0]).is_err());
        assert!(olc_oracle(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn reported_load_changes_follow_oracle_ratios() {
        // controllable-load changes reported for the four-area case
        let changes = [74.1 - 63.8, 52.7 - 39.8, 52.7 - 39.8, 105.4 - 79.6];
        let oracle = olc_oracle(&[15.0; 4], &[1.0, 0.8, 0.8, 0.4]).unwrap();
        for j in 0..4 {
            let got = changes[j] / changes[0];
            let want = oracle[j] / oracle[0];
            assert!((got - want).abs() / want < 0.05, "area {}: {got} vs {want}", j + 1);
        }
    }

    #[test]
    fn l2_examples() {
        let t = grid(1001, 0.01);
        let w = vec![t.iter().map(|x| (3.0 * x).sin() + 1.0).collect::<Vec<_>>()];
        assert_eq!(l2_ratio(&t, &[vec![0.0; 1001]], &w, 0.0).unwrap(), 0.0);
        let half = vec![w[0].iter().map(|v| 0.5 * v).collect::<Vec<_>>()];
        assert!((l2_ratio(&t, &half, &w, 0.0).unwrap() - 0.25).abs() < 1e-12);
        assert!(matches!(l2_ratio(&t, &half, &[vec![0.0; 1001]], 0.0), Err(Error::Undefined(_))));
    }

    #[test]
    fn nadir_examples() {
        let t = grid(101, 1.0);
        assert_eq!(nadir_and_steady(&t, &[vec![0.0; 101]], 10.0, 20.0).unwrap(), (0.0, 0.0));
        // dip to −0.3 rad/s at t = 30, settle to 0.01 from t = 60
        let omega: Vec<f64> = t
            .iter()
            .map(|&x| if x < 30.0 { -0.01 * x } else if x < 60.0 { -0.3 + 0.31 * (x - 30.0) / 30.0 } else { 0.01 })
            .collect();
        let (nadir, steady) = nadir_and_steady(&t, &[omega], 10.0, 20.0).unwrap();
        assert!((nadir - (-0.3 / TAU)).abs() < 1e-15);
        assert!((steady - 0.01 / TAU).abs() < 1e-15);
        assert!(nadir_and_steady(&t, &[vec![0.0; 101]], 10.0, 200.0).is_err());
    }

    proptest! {
        #[test]
        fn oracle_balances_and_equalizes_marginal_cost(
            p_bar in prop::collection::vec(-100.0f64..100.0, 1..8),
            beta_seed in prop::collection::vec(0.05f64..5.0, 8),
        ) {
            let beta = &beta_seed[..p_bar.len()];
            let p = olc_oracle(&p_bar, beta).unwrap();
            let total: f64 = p_bar.iter().sum();
            let scale = 1.0 + p_bar.iter().map(|v| v.abs()).sum::<f64>();
            prop_assert!((p.iter().sum::<f64>() - total).abs() <= 1e-12 * scale);
            let nu = p[0] * beta[0];
            for j in 0..p.len() {
                prop_assert!((p[j] * beta[j] - nu).abs() <= 1e-12 * (1.0 + nu.abs()));
            }
        }
    }
}
