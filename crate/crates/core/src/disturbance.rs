//! Per-area power imbalance `P_in(t) = P̄ + q(t) + w(t)`.
//!
//! `P̄` is the known prediction, `q(t)` the unknown variation (an offset plus a
//! few sinusoids, or an ingested time series) and `w(t)` a sample-and-hold
//! noise term. The exosystem helpers reproduce `q(t)` as the first output of
//! the companion-form linear system used by the internal model.

use std::io::Read;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::integrate::Rk4;
use crate::internal_model::companion_apply;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinusoidComponent {
    /// MW.
    pub amplitude: f64,
    /// rad/s, strictly positive.
    pub angular_frequency: f64,
    /// rad.
    pub phase: f64,
}

impl SinusoidComponent {
    /// n-th time derivative evaluated at `t`.
    pub fn derivative(&self, n: usize, t: f64) -> f64 {
        let scale = self.amplitude * self.angular_frequency.powi(n as i32);
        let arg = self.angular_frequency * t + self.phase;
        // shift by nπ/2 using exact quadrants
        match n % 4 {
            0 => scale * arg.sin(),
            1 => scale * arg.cos(),
            2 => -scale * arg.sin(),
            _ => -scale * arg.cos(),
        }
    }
}

/// Uniform sample-and-hold noise: `amplitude · u`, `u ~ U[0, 1)`, redrawn once
/// per `hold_interval`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub amplitude: f64,
    pub hold_interval: f64,
    pub seed: u64,
    /// Independent stream selector, normally the area index.
    #[serde(default)]
    pub stream: u64,
}

/// Noise value at time `t`.
///
/// A pure function of `(seed, stream, interval index)`: each hold interval
/// reads its own position in a ChaCha8 stream, so any `t` can be sampled
/// without replaying earlier draws.
pub fn sample_noise(spec: &NoiseSpec, t: f64) -> f64 {
    if spec.amplitude == 0.0 {
        return 0.0;
    }
    let interval = (t / spec.hold_interval + 1e-9).floor().max(0.0) as u128;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(spec.stream);
    // one u64 draw consumes two 32-bit words
    rng.set_word_pos(interval * 2);
    spec.amplitude * rng.random::<f64>()
}

/// Piecewise-linear signal through `(times[i], values[i])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_len("series values vs times", times.len(), values.len())?;
        if times.is_empty() {
            return Err(Error::Series("empty series".into()));
        }
        if let Some(i) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::Series(format!(
                "non-monotonic timestamps at row {} ({} then {})",
                i + 2,
                times[i],
                times[i + 1]
            )));
        }
        Ok(Self { times, values })
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn sample(&self, t: f64) -> Result<f64> {
        let (start, end) = (self.start(), self.end());
        if !(t >= start && t <= end) {
            return Err(Error::OutOfRange { t, start, end });
        }
        let hi = self.times.partition_point(|&x| x < t);
        if hi == 0 {
            return Ok(self.values[0]);
        }
        let (t0, t1) = (self.times[hi - 1], self.times[hi]);
        let (v0, v1) = (self.values[hi - 1], self.values[hi]);
        Ok(v0 + (v1 - v0) * (t - t0) / (t1 - t0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceProfile {
    /// Known constant prediction `P̄`, MW.
    pub p_bar: f64,
    /// Unknown constant offset `q0`, MW.
    pub offset: f64,
    pub components: Vec<SinusoidComponent>,
    pub noise: Option<NoiseSpec>,
    /// Replaces the sinusoidal part when present.
    pub series: Option<TimeSeries>,
}

impl DisturbanceProfile {
    pub fn constant(p_bar: f64) -> Self {
        Self { p_bar, offset: 0.0, components: Vec::new(), noise: None, series: None }
    }

    pub fn from_series(p_bar: f64, series: TimeSeries) -> Self {
        Self { p_bar, offset: 0.0, components: Vec::new(), noise: None, series: Some(series) }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.p_bar.is_finite() || !self.offset.is_finite() {
            out.push("p_bar and offset must be finite".to_string());
        }
        for (k, c) in self.components.iter().enumerate() {
            if !(c.angular_frequency > 0.0) || !c.angular_frequency.is_finite() {
                out.push(format!("component {}: frequency must be positive", k + 1));
            }
            if !c.amplitude.is_finite() || !c.phase.is_finite() {
                out.push(format!("component {}: amplitude and phase must be finite", k + 1));
            }
        }
        if let Some(n) = &self.noise {
            if !(n.amplitude >= 0.0) {
                out.push("noise amplitude must be nonnegative".to_string());
            }
            if !(n.hold_interval > 0.0) {
                out.push("noise hold_interval must be positive".to_string());
            }
        }
        if self.series.is_some() && !self.components.is_empty() {
            out.push("a series-backed profile cannot also list sinusoid components".to_string());
        }
        out
    }

    /// Variation `q(t)` without noise.
    pub fn sample_variation(&self, t: f64) -> Result<f64> {
        match &self.series {
            Some(series) => Ok(self.offset + series.sample(t)?),
            None => Ok(self.offset
                + self.components.iter().map(|c| c.derivative(0, t)).sum::<f64>()),
        }
    }

    pub fn sample_noise(&self, t: f64) -> f64 {
        self.noise.as_ref().map_or(0.0, |n| sample_noise(n, t))
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.angular_frequency).collect()
    }
}

/// Coefficients of the exosystem's companion row for the given angular
/// frequencies.
///
/// `α_m = −e_{s−m+1}(a_1², …, a_s²)` with `e_k` the elementary symmetric
/// polynomials, so `α_1 = −∏ a²` and `α_s = −Σ a²`.
pub fn alpha_from_frequencies(a: &[f64]) -> Result<Vec<f64>> {
    if a.is_empty() {
        return Err(Error::InvalidInput("no frequencies given".into()));
    }
    if a.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::InvalidInput("frequencies must be positive".into()));
    }
    let s = a.len();
    // e[k] = k-th elementary symmetric polynomial of the squared frequencies
    let mut e = vec![0.0; s + 1];
    e[0] = 1.0;
    for x in a.iter().map(|x| x * x) {
        for k in (1..=s).rev() {
            e[k] += x * e[k - 1];
        }
    }
    Ok((1..=s).map(|m| -e[s - m + 1]).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExosystemState {
    /// `λ_k = q^{(k-1)}`, length `2s + 1`.
    pub lambda: Vec<f64>,
}

/// Exosystem state at `t = 0`: the variation and its first `2s` derivatives.
pub fn init_lambda(offset: f64, components: &[SinusoidComponent]) -> ExosystemState {
    let dim = 2 * components.len() + 1;
    let lambda = (0..dim)
        .map(|k| {
            let base = if k == 0 { offset } else { 0.0 };
            base + components.iter().map(|c| c.derivative(k, 0.0)).sum::<f64>()
        })
        .collect();
    ExosystemState { lambda }
}

/// Integrates `λ̇ = A(α) λ` with RK4 and returns the output `λ_1` on the grid
/// `0, dt, …, n·dt` with `n = round(horizon / dt)`.
pub fn simulate_exosystem(
    state0: &ExosystemState,
    alpha: &[f64],
    horizon: f64,
    dt: f64,
) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !(horizon >= 0.0) {
        return Err(Error::InvalidInput("dt must be positive and horizon nonnegative".into()));
    }
    check_len("lambda vs 2s+1", 2 * alpha.len() + 1, state0.lambda.len())?;
    let steps = (horizon / dt).round() as usize;
    let mut x = state0.lambda.clone();
    let mut rk = Rk4::new(x.len());
    let mut out = Vec::with_capacity(steps + 1);
    out.push(x[0]);
    for k in 0..steps {
        rk.step(|_, x, dx| companion_apply(alpha, x, dx), k as f64 * dt, &mut x, dt);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("exosystem state"));
        }
        out.push(x[0]);
    }
    Ok(out)
}

/// Reads the delimited time-series format `t,area1,...,areaN` (header row,
/// one sample per row, seconds and MW) into one series per area.
pub fn ingest_timeseries<R: Read>(reader: R, expected_areas: Option<usize>) -> Result<Vec<TimeSeries>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 {
        return Err(Error::Series("header must name a time column and at least one area".into()));
    }
    let areas = headers.len() - 1;
    if let Some(n) = expected_areas {
        if n != areas {
            return Err(Error::Series(format!("file has {areas} area columns, scenario has {n}")));
        }
    }
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Series(format!("row {}: {e}", i + 2)))?;
        let row = record
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Series(format!("row {}: {e}", i + 2)))?;
        rows.push(row);
    }
    ingest_rows(&rows, areas)
}

/// Same as [`ingest_timeseries`] for rows already parsed as `[t, v_1, …, v_N]`.
pub fn ingest_rows(rows: &[Vec<f64>], areas: usize) -> Result<Vec<TimeSeries>> {
    if rows.is_empty() {
        return Err(Error::Series("empty input".into()));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != areas + 1 {
            return Err(Error::Series(format!(
                "row {} has {} values, expected {}",
                i + 1,
                row.len(),
                areas + 1
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Series(format!("row {} contains a non-finite value", i + 1)));
        }
    }
    let times: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    (1..=areas)
        .map(|j| TimeSeries::new(times.clone(), rows.iter().map(|r| r[j]).collect()))
        .collect()
}
