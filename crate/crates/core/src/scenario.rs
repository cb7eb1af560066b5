//! Scenario definitions and the TOML configuration format.
//!
//! Area ids in configuration files are 1-based; everything in memory is
//! 0-based. Sinusoid frequencies must carry an explicit unit tag
//! (`"rad/s"` or `"Hz"`) so a bare number is never silently misread.

use std::f64::consts::TAU;
use std::path::Path;

use serde::Deserialize;

use crate::control::{CommGraph, ControllerConfig, ControllerMode, PiGains};
use crate::disturbance::{ingest_timeseries, DisturbanceProfile, NoiseSpec, SinusoidComponent, TimeSeries};
use crate::error::{Error, Result};
use crate::internal_model::{default_r_vector, IMConfig};
use crate::network::{validate_network, Area, PowerNetwork, TieLine};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// Controller switches from holding the initial load to its control law.
    ActivateController,
    /// Variation `q` (sinusoids or ingested series) starts; time is shifted
    /// so the profile begins at its own `t = 0`.
    DisturbanceOnset,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialCondition {
    /// All dynamic states zero; loads at their configured initial values.
    #[default]
    Rest,
    /// Closed-loop equilibrium for the predicted injections `P̄`: optimal
    /// dispatch, matching tie-line angles, agreed `μ`.
    Equilibrium,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub network: PowerNetwork,
    pub comm: CommGraph,
    pub controller: ControllerConfig,
    pub disturbances: Vec<DisturbanceProfile>,
    /// s.
    pub horizon: f64,
    /// s.
    pub dt: f64,
    pub events: Vec<Event>,
    pub seed: u64,
    pub record_stride: usize,
    pub initial_condition: InitialCondition,
}

impl Scenario {
    pub fn n_areas(&self) -> usize {
        self.network.areas.len()
    }

    pub fn activation_time(&self) -> Option<f64> {
        self.first_event(EventKind::ActivateController)
    }

    pub fn onset_time(&self) -> f64 {
        self.first_event(EventKind::DisturbanceOnset).unwrap_or(0.0)
    }

    fn first_event(&self, kind: EventKind) -> Option<f64> {
        self.events.iter().find(|e| e.kind == kind).map(|e| e.time)
    }

    /// Reseeds every noise source; area `j` draws from stream `j`.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        for (j, d) in self.disturbances.iter_mut().enumerate() {
            if let Some(n) = d.noise.as_mut() {
                n.seed = seed;
                n.stream = j as u64;
            }
        }
    }

    /// Replaces every area's variation with the given series.
    pub fn set_series(&mut self, series: Vec<TimeSeries>) -> Result<()> {
        if series.len() != self.n_areas() {
            return Err(Error::Series(format!(
                "series has {} areas, scenario has {}",
                series.len(),
                self.n_areas()
            )));
        }
        for (d, s) in self.disturbances.iter_mut().zip(series) {
            d.components.clear();
            d.series = Some(s);
        }
        Ok(())
    }

    pub fn violations(&self) -> Vec<String> {
        let n = self.n_areas();
        let mut out = validate_network(&self.network).messages();
        if self.comm.n != n {
            out.push(format!("communication graph has {} nodes, network has {n} areas", self.comm.n));
        } else {
            out.extend(self.comm.violations());
        }
        out.extend(self.controller.violations(n));
        if self.disturbances.len() != n {
            out.push(format!("{} disturbance profiles for {n} areas", self.disturbances.len()));
        }
        for (j, d) in self.disturbances.iter().enumerate() {
            out.extend(d.violations().into_iter().map(|m| format!("disturbance area {}: {m}", j + 1)));
            if let Some(series) = &d.series {
                let needed = self.horizon - self.onset_time();
                if series.start() > 0.0 || series.end() < needed {
                    out.push(format!(
                        "disturbance area {}: series covers [{}, {}] s but the run needs [0, {needed}] s after onset",
                        j + 1,
                        series.start(),
                        series.end()
                    ));
                }
            }
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            out.push(format!("dt = {} must be positive", self.dt));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            out.push(format!("horizon = {} must be positive", self.horizon));
        }
        if self.record_stride == 0 {
            out.push("record_stride must be at least 1".to_string());
        }
        if self.events.windows(2).any(|w| w[1].time < w[0].time) {
            out.push("events must be sorted by time".to_string());
        }
        for e in &self.events {
            if !(e.time >= 0.0) {
                out.push(format!("event {:?} at negative time {}", e.kind, e.time));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    /// Non-fatal configuration warnings.
    pub fn lint(&self) -> Vec<String> {
        self.controller.lint(&self.network)
    }
}

fn default_true() -> bool {
    true
}

fn default_stride() -> usize {
    1
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    horizon: f64,
    dt: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_stride")]
    record_stride: usize,
    #[serde(default)]
    initial_condition: InitialCondition,
    areas: Vec<RawArea>,
    #[serde(default)]
    lines: Vec<RawLine>,
    comm: RawComm,
    controller: RawController,
    disturbances: Vec<RawDisturbance>,
    #[serde(default)]
    events: Vec<Event>,
    series: Option<RawSeries>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawArea {
    name: Option<String>,
    /// MW·s²/rad
    inertia: f64,
    /// MW·s/rad
    damping: f64,
    /// MW
    #[serde(default)]
    initial_load: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLine {
    from: usize,
    to: usize,
    /// MW/rad
    susceptance: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawComm {
    edges: Vec<[usize; 2]>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawController {
    mode: ControllerMode,
    beta: Vec<f64>,
    d: Vec<f64>,
    /// Defaults to the plant damping.
    damping_estimate: Option<Vec<f64>>,
    #[serde(default = "default_true")]
    estimator_warmup: bool,
    #[serde(default)]
    freeze_alpha: bool,
    #[serde(default)]
    freeze_im: bool,
    internal_model: Option<RawIM>,
    pi: Option<PiGains>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIM {
    s: usize,
    r_vector: Option<Vec<f64>>,
    g_gain: f64,
    k_alpha: f64,
    alpha_cap: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDisturbance {
    area: usize,
    /// MW
    p_bar: f64,
    /// MW
    #[serde(default)]
    offset: f64,
    #[serde(default)]
    components: Vec<RawComponent>,
    noise: Option<RawNoise>,
}

#[derive(Deserialize, Clone, Copy)]
enum FrequencyUnit {
    #[serde(rename = "rad/s")]
    RadPerSecond,
    #[serde(rename = "Hz")]
    Hertz,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawComponent {
    /// MW
    amplitude: f64,
    frequency: f64,
    unit: FrequencyUnit,
    /// rad
    #[serde(default)]
    phase: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNoise {
    /// MW
    amplitude: f64,
    /// s
    hold_interval: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSeries {
    /// Delimited file `t,area1,...`, resolved relative to the scenario file.
    path: String,
}

/// Parses and validates a scenario. A `[series]` reference is resolved
/// through `load_series`.
pub fn load_scenario_with<F>(text: &str, load_series: F) -> Result<Scenario>
where
    F: FnOnce(&str) -> Result<String>,
{
    let raw: RawScenario = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let n = raw.areas.len();
    let mut problems = Vec::new();

    let to_index = |id: usize, what: &str, problems: &mut Vec<String>| -> usize {
        if id == 0 || id > n {
            problems.push(format!("{what} references area {id}, valid ids are 1..={n}"));
            0
        } else {
            id - 1
        }
    };

    let areas: Vec<Area> = raw
        .areas
        .iter()
        .enumerate()
        .map(|(j, a)| Area {
            name: a.name.clone().unwrap_or_else(|| format!("area{}", j + 1)),
            inertia: a.inertia,
            damping: a.damping,
            initial_controllable_load: a.initial_load,
        })
        .collect();
    let lines = raw
        .lines
        .iter()
        .map(|l| TieLine {
            from: to_index(l.from, "line", &mut problems),
            to: to_index(l.to, "line", &mut problems),
            susceptance: l.susceptance,
        })
        .collect();
    let comm_edges = raw
        .comm
        .edges
        .iter()
        .map(|[a, b]| (to_index(*a, "comm edge", &mut problems), to_index(*b, "comm edge", &mut problems)))
        .collect();

    let c = raw.controller;
    let im = c.internal_model.map(|im| IMConfig {
        s: im.s,
        r_vector: im.r_vector.unwrap_or_else(|| default_r_vector(im.s)),
        g_gain: im.g_gain,
        k_alpha: im.k_alpha,
        alpha_cap: im.alpha_cap.unwrap_or(1e6),
    });
    let controller = ControllerConfig {
        mode: c.mode,
        beta: c.beta,
        d: c.d,
        damping_estimate: c.damping_estimate.unwrap_or_else(|| areas.iter().map(|a| a.damping).collect()),
        im,
        pi: c.pi,
        estimator_warmup: c.estimator_warmup,
        freeze_alpha: c.freeze_alpha,
        freeze_im: c.freeze_im,
        alpha_init: None,
    };

    let mut disturbances: Vec<Option<DisturbanceProfile>> = vec![None; n];
    for d in raw.disturbances {
        let j = to_index(d.area, "disturbance", &mut problems);
        if d.area >= 1 && d.area <= n && disturbances[j].is_some() {
            problems.push(format!("area {} has more than one disturbance entry", d.area));
            continue;
        }
        let components = d
            .components
            .iter()
            .map(|c| SinusoidComponent {
                amplitude: c.amplitude,
                angular_frequency: match c.unit {
                    FrequencyUnit::RadPerSecond => c.frequency,
                    FrequencyUnit::Hertz => TAU * c.frequency,
                },
                phase: c.phase,
            })
            .collect();
        let noise = d.noise.map(|w| NoiseSpec {
            amplitude: w.amplitude,
            hold_interval: w.hold_interval,
            seed: raw.seed,
            stream: j as u64,
        });
        disturbances[j] = Some(DisturbanceProfile { p_bar: d.p_bar, offset: d.offset, components, noise, series: None });
    }
    for (j, d) in disturbances.iter().enumerate() {
        if d.is_none() && n > 0 {
            problems.push(format!("area {} has no disturbance entry", j + 1));
        }
    }

    let mut scenario = Scenario {
        name: raw.name.unwrap_or_else(|| "scenario".to_string()),
        network: PowerNetwork { areas, lines },
        comm: CommGraph::new(n, comm_edges),
        controller,
        disturbances: disturbances.into_iter().map(|d| d.unwrap_or_else(|| DisturbanceProfile::constant(0.0))).collect(),
        horizon: raw.horizon,
        dt: raw.dt,
        events: raw.events,
        seed: raw.seed,
        record_stride: raw.record_stride,
        initial_condition: raw.initial_condition,
    };

    if let Some(series) = raw.series {
        let text = load_series(&series.path)?;
        scenario.set_series(ingest_timeseries(text.as_bytes(), Some(n))?)?;
    }

    problems.extend(scenario.violations());
    if problems.is_empty() {
        Ok(scenario)
    } else {
        Err(Error::Validation(problems))
    }
}

/// Parses a self-contained scenario; a `[series]` reference is an error.
pub fn load_scenario(text: &str) -> Result<Scenario> {
    load_scenario_with(text, |path| {
        Err(Error::InvalidInput(format!(
            "scenario references series '{path}' but was not loaded from a file"
        )))
    })
}

pub fn load_scenario_file(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    load_scenario_with(&text, |rel| Ok(std::fs::read_to_string(dir.join(rel))?))
}

const NEW_ENGLAND: &str = include_str!("../scenarios/new_england_4area.toml");
const NOISE: &str = include_str!("../scenarios/noise.toml");
const WIND: &str = include_str!("../scenarios/wind.toml");
const WIND_CSV: &str = include_str!("../scenarios/wind.csv");
const PI_BASELINE: &str = include_str!("../scenarios/pi_baseline.toml");

pub const PRESETS: &[&str] = &["new_england_4area", "noise", "wind", "pi_baseline"];

/// Raw text of a bundled scenario.
pub fn preset_text(name: &str) -> Option<&'static str> {
    match name {
        "new_england_4area" => Some(NEW_ENGLAND),
        "noise" => Some(NOISE),
        "wind" => Some(WIND),
        "pi_baseline" => Some(PI_BASELINE),
        _ => None,
    }
}

/// Bundled 300-sample, 1 Hz wind variation used by the `wind` preset.
pub fn bundled_wind_csv() -> &'static str {
    WIND_CSV
}

pub fn preset(name: &str) -> Result<Scenario> {
    let text = preset_text(name).ok_or_else(|| {
        Error::InvalidInput(format!("unknown preset '{name}' (available: {})", PRESETS.join(", ")))
    })?;
    load_scenario_with(text, |path| match path {
        "wind.csv" => Ok(WIND_CSV.to_string()),
        other => Err(Error::InvalidInput(format!("bundled preset references unknown file '{other}'"))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
horizon = 10.0
dt = 0.001

[[areas]]
inertia = 3.0
damping = 50.0

[[areas]]
inertia = 3.0
damping = 50.0

[[lines]]
from = 1
to = 2
susceptance = 40.0

[comm]
edges = [[1, 2]]

[controller]
mode = "consensus"
beta = [1.0, 0.5]
d = [1000.0, 1000.0]

[[disturbances]]
area = 1
p_bar = 10.0
components = [{ amplitude = 2.0, frequency = 0.5, unit = "Hz" }]

[[disturbances]]
area = 2
p_bar = 5.0
"#;

    #[test]
    fn minimal_config_loads() {
        let sc = load_scenario(MINIMAL).unwrap();
        assert_eq!(sc.n_areas(), 2);
        assert_eq!(sc.record_stride, 1);
        assert_eq!(sc.controller.damping_estimate, vec![50.0, 50.0]);
        assert!((sc.disturbances[0].components[0].angular_frequency - std::f64::consts::PI).abs() < 1e-15);
        assert_eq!(sc.network.lines[0].from, 0);
        assert_eq!(sc.activation_time(), None);
    }

    #[test]
    fn missing_unit_is_a_parse_error() {
        let text = MINIMAL.replace(", unit = \"Hz\"", "");
        let err = load_scenario(&text).unwrap_err().to_string();
        assert!(err.contains("unit"), "{err}");
        let text = MINIMAL.replace("\"Hz\"", "\"rpm\"");
        assert!(load_scenario(&text).is_err());
    }

    #[test]
    fn missing_beta_names_the_field() {
        let text = MINIMAL.replace("beta = [1.0, 0.5]\n", "");
        let err = load_scenario(&text).unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
        assert!(err.to_string().contains("beta"), "{err}");
    }

    #[test]
    fn parse_error_reports_line() {
        let text = MINIMAL.replace("dt = 0.001", "dt = fast");
        let err = load_scenario(&text).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn validation_lists_every_violation() {
        let text = MINIMAL
            .replace("beta = [1.0, 0.5]", "beta = [-1.0, 0.5]")
            .replace("susceptance = 40.0", "susceptance = -40.0")
            .replace("area = 2\n", "area = 7\n");
        match load_scenario(&text).unwrap_err() {
            Error::Validation(v) => {
                assert!(v.iter().any(|m| m.contains("beta[1]")), "{v:?}");
                assert!(v.iter().any(|m| m.contains("susceptance")), "{v:?}");
                assert!(v.iter().any(|m| m.contains("area 7")), "{v:?}");
                assert!(v.iter().any(|m| m.contains("area 2 has no disturbance")), "{v:?}");
            }
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn disconnected_comm_graph_is_rejected() {
        let text = MINIMAL.replace("edges = [[1, 2]]", "edges = []");
        assert!(matches!(load_scenario(&text), Err(Error::Validation(_))));
    }

    #[test]
    fn series_needs_a_file_context() {
        let text = format!("{MINIMAL}\n[series]\npath = \"w.csv\"\n");
        assert!(load_scenario(&text).is_err());
    }

    #[test]
    fn presets_load() {
        for name in PRESETS {
            let sc = preset(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(sc.lint().is_empty(), "{name}: {:?}", sc.lint());
        }
        assert!(preset("nope").is_err());
    }

    #[test]
    fn seed_reaches_every_noise_source() {
        let mut sc = preset("noise").unwrap();
        sc.set_seed(99);
        for (j, d) in sc.disturbances.iter().enumerate() {
            let n = d.noise.unwrap();
            assert_eq!((n.seed, n.stream), (99, j as u64));
        }
    }
}
