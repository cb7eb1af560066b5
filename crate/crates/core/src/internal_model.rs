//! Adaptive internal model: an `s̄ = 2s + 1` dimensional copy of the
//! exosystem whose companion coefficients `α̂` are learned online.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IMConfig {
    /// Number of modeled sinusoids.
    pub s: usize,
    /// `R`, length `2s + 1`, last entry 1.
    pub r_vector: Vec<f64>,
    /// `γ_g`, last entry of the injection vector `G`.
    pub g_gain: f64,
    pub k_alpha: f64,
    /// Divergence guard on `|α̂|`.
    pub alpha_cap: f64,
}

impl IMConfig {
    /// Default `R` with all roots at −1.
    pub fn new(s: usize, g_gain: f64, k_alpha: f64) -> Self {
        Self { s, r_vector: default_r_vector(s), g_gain, k_alpha, alpha_cap: 1e6 }
    }

    pub fn dim(&self) -> usize {
        2 * self.s + 1
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.s == 0 {
            out.push("internal model needs s >= 1".to_string());
            return out;
        }
        if self.r_vector.len() != self.dim() {
            out.push(format!("r_vector has length {}, expected {}", self.r_vector.len(), self.dim()));
        } else {
            if self.r_vector.last() != Some(&1.0) {
                out.push("r_vector must end with 1".to_string());
            }
            if !is_hurwitz_r(&self.r_vector) {
                out.push("r_vector polynomial has a root with nonnegative real part".to_string());
            }
        }
        if !(self.g_gain > 0.0) {
            out.push("g_gain must be positive".to_string());
        }
        if !(self.k_alpha > 0.0) {
            out.push("k_alpha must be positive".to_string());
        }
        if !(self.alpha_cap > 0.0) {
            out.push("alpha_cap must be positive".to_string());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InternalModelState {
    pub eta: f64,
    pub zeta: Vec<f64>,
    pub alpha_hat: Vec<f64>,
}

impl InternalModelState {
    pub fn zeros(cfg: &IMConfig) -> Self {
        Self { eta: 0.0, zeta: vec![0.0; cfg.dim()], alpha_hat: vec![0.0; cfg.s] }
    }

    pub fn check(&self, cfg: &IMConfig) -> Result<()> {
        check_len("zeta", cfg.dim(), self.zeta.len())?;
        check_len("alpha_hat", cfg.s, self.alpha_hat.len())?;
        if !self.eta.is_finite() || self.zeta.iter().chain(&self.alpha_hat).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("internal model state"));
        }
        Ok(())
    }
}

/// Dense companion matrix `A(α̂)`, row-major.
pub fn companion_matrix(alpha_hat: &[f64]) -> Vec<Vec<f64>> {
    let n = 2 * alpha_hat.len() + 1;
    let mut a = vec![vec![0.0; n]; n];
    for (i, row) in a.iter_mut().enumerate().take(n - 1) {
        row[i + 1] = 1.0;
    }
    for (m, &am) in alpha_hat.iter().enumerate() {
        a[n - 1][2 * m + 1] = am;
    }
    a
}

/// `out = A(α̂) x` without forming the matrix.
pub fn companion_apply(alpha_hat: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    out[..n - 1].copy_from_slice(&x[1..]);
    out[n - 1] = alpha_hat.iter().enumerate().map(|(m, a)| a * x[2 * m + 1]).sum();
}

/// Binomial coefficients of `(τ + 1)^{2s}`.
pub fn default_r_vector(s: usize) -> Vec<f64> {
    let n = 2 * s;
    let mut row = vec![1.0];
    for _ in 0..n {
        let mut next = vec![1.0; row.len() + 1];
        for k in 1..row.len() {
            next[k] = row[k - 1] + row[k];
        }
        row = next;
    }
    row
}

/// Routh test on `τ^{n} + r_n τ^{n−1} + … + r_1` where `r = (r_1, …, r_n, 1)`.
pub fn is_hurwitz_r(r: &[f64]) -> bool {
    // highest degree first
    let coeffs: Vec<f64> = r.iter().rev().copied().collect();
    if coeffs.len() <= 1 {
        return true;
    }
    if coeffs.iter().any(|c| !(*c > 0.0)) {
        return false;
    }
    let width = coeffs.len().div_ceil(2);
    let mut prev: Vec<f64> = coeffs.iter().step_by(2).copied().collect();
    let mut cur: Vec<f64> = coeffs.iter().skip(1).step_by(2).copied().collect();
    prev.resize(width, 0.0);
    cur.resize(width, 0.0);
    for _ in 0..coeffs.len() - 2 {
        if !(cur[0] > 0.0) {
            return false;
        }
        let mut next = vec![0.0; width];
        for k in 0..width - 1 {
            next[k] = (cur[0] * prev[k + 1] - prev[0] * cur[k + 1]) / cur[0];
        }
        prev = std::mem::replace(&mut cur, next);
    }
    cur[0] > 0.0
}

/// `Ã = R (I + A(α̂))`.
pub fn a_tilde(alpha_hat: &[f64], r: &[f64]) -> Result<Vec<f64>> {
    let n = 2 * alpha_hat.len() + 1;
    check_len("R vs 2s+1", n, r.len())?;
    let mut out = r.to_vec();
    // R·A: column j+1 of the shift block picks up r_j, last row adds r_n·α̂
    for j in 0..n - 1 {
        out[j + 1] += r[j];
    }
    for (m, am) in alpha_hat.iter().enumerate() {
        out[2 * m + 1] += r[n - 1] * am;
    }
    Ok(out)
}

pub fn g_vector(s: usize, g_gain: f64) -> Vec<f64> {
    let mut g = vec![0.0; 2 * s + 1];
    g[2 * s - 1] = 1.0;
    g[2 * s] = g_gain;
    g
}

/// `Λ(ζ) = (ζ_2, ζ_4, …, ζ_{s̄−1})`.
pub fn regressor(zeta: &[f64]) -> Result<Vec<f64>> {
    if zeta.len().is_multiple_of(2) {
        return Err(Error::Dimension { context: "zeta must have odd length", expected: zeta.len() + 1, actual: zeta.len() });
    }
    Ok(zeta.iter().skip(1).step_by(2).copied().collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Writes `ζ̇` and `α̂̇` into the output slices.
pub(crate) fn im_derivatives_into(
    eta: f64,
    zeta: &[f64],
    alpha_hat: &[f64],
    cfg: &IMConfig,
    dzeta: &mut [f64],
    dalpha: &mut [f64],
) {
    let n = zeta.len();
    let e = eta + dot(&cfg.r_vector, zeta);
    companion_apply(alpha_hat, zeta, dzeta);
    dzeta[n - 2] -= e;
    dzeta[n - 1] -= cfg.g_gain * e;
    for (m, da) in dalpha.iter_mut().enumerate() {
        *da = -cfg.k_alpha * zeta[2 * m + 1] * e;
    }
}

/// `(ζ̇, α̂̇)` with `ζ̇ = A(α̂)ζ − G(η + Rζ)` and `α̂̇ = −k_α Λ(ζ)(η + Rζ)`.
pub fn im_derivatives(state: &InternalModelState, cfg: &IMConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    state.check(cfg)?;
    let mut dz = vec![0.0; cfg.dim()];
    let mut da = vec![0.0; cfg.s];
    im_derivatives_into(state.eta, &state.zeta, &state.alpha_hat, cfg, &mut dz, &mut da);
    if dz.iter().chain(&da).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("internal model derivative"));
    }
    Ok((dz, da))
}

/// Estimated variation `Ã(α̂) ζ`.
pub fn im_output(state: &InternalModelState, cfg: &IMConfig) -> Result<f64> {
    Ok(im_output_raw(&state.zeta, &state.alpha_hat, &cfg.r_vector))
}

pub(crate) fn im_output_raw(zeta: &[f64], alpha_hat: &[f64], r: &[f64]) -> f64 {
    let n = zeta.len();
    // R(I + A)ζ = Rζ + Σ_{j<n−1} r_j ζ_{j+1} + r_{n−1} α̂·Λ(ζ)
    let shifted: f64 = (0..n - 1).map(|j| r[j] * zeta[j + 1]).sum();
    let last: f64 = alpha_hat.iter().enumerate().map(|(m, a)| a * zeta[2 * m + 1]).sum();
    dot(r, zeta) + shifted + r[n - 1] * last
}
