use std::fmt::Write as _;
use std::fs::File;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use loadside_core::disturbance::{
    alpha_from_frequencies, ingest_timeseries, init_lambda, simulate_exosystem, DisturbanceProfile, SinusoidComponent,
};
use loadside_core::scenario::{preset_text, PRESETS};
use loadside_core::{load_scenario_file, preset, ControllerMode, MetricsReport, Scenario, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::output::Outputs;
use crate::svg::{self, Chart, Series};
use crate::ScenarioArgs;

const MODES: [ControllerMode; 3] = [ControllerMode::Consensus, ControllerMode::Adaptive, ControllerMode::Pi];

fn load(args: &ScenarioArgs) -> Result<Scenario> {
    let name = args
        .positional
        .as_deref()
        .or(args.scenario.as_deref())
        .ok_or_else(|| anyhow!("no scenario given (a TOML path or one of: {})", PRESETS.join(", ")))?;
    let path = Path::new(name);
    let mut sc = if path.is_file() {
        load_scenario_file(path).with_context(|| format!("loading {name}"))?
    } else if preset_text(name).is_some() {
        preset(name)?
    } else {
        bail!("'{name}' is neither a readable file nor a bundled preset ({})", PRESETS.join(", "));
    };
    if let Some(dt) = args.dt {
        sc.dt = dt;
    }
    if let Some(h) = args.horizon {
        sc.horizon = h;
    }
    if let Some(seed) = args.seed {
        sc.set_seed(seed);
    }
    if let Some(stride) = args.stride {
        sc.record_stride = stride;
    }
    if let Some(csv) = &args.wind_csv {
        let file = File::open(csv).with_context(|| format!("opening {}", csv.display()))?;
        let series = ingest_timeseries(file, Some(sc.n_areas())).with_context(|| format!("reading {}", csv.display()))?;
        sc.set_series(series)?;
    }
    Ok(sc)
}

fn checked(sc: &Scenario) -> Result<()> {
    sc.validate()?;
    for w in sc.lint() {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn simulate(sc: &Scenario) -> Result<(Trajectory, MetricsReport)> {
    let traj = loadside_core::run(sc).with_context(|| format!("simulating '{}' ({})", sc.name, sc.controller.mode))?;
    let metrics = MetricsReport::compute(&traj, sc)?;
    Ok((traj, metrics))
}

pub fn run(args: &ScenarioArgs, mode: Option<ControllerMode>, out: &Path) -> Result<bool> {
    let mut sc = load(args)?;
    if let Some(m) = mode {
        sc.controller.mode = m;
    }
    checked(&sc)?;
    let (traj, metrics) = simulate(&sc)?;

    let text = format!("scenario={}\nmode={}\n{}", sc.name, sc.controller.mode, metrics.to_key_value());
    let mut files = Outputs::default();
    files.add("trajectory.csv", traj.to_csv_string()?);
    files.add("metrics.txt", text.clone());
    for p in files.commit(out)? {
        eprintln!("wrote {}", p.display());
    }
    print!("{text}");
    Ok(true)
}

pub fn compare(args: &ScenarioArgs, out: &Path) -> Result<bool> {
    let base = load(args)?;
    let scenarios: Vec<Scenario> = MODES
        .iter()
        .map(|&m| {
            let mut sc = base.clone();
            sc.controller.mode = m;
            sc
        })
        .collect();
    for sc in &scenarios {
        checked(sc).with_context(|| format!("{} mode", sc.controller.mode))?;
    }
    let results: Vec<Result<(Trajectory, MetricsReport)>> = std::thread::scope(|s| {
        let handles: Vec<_> = scenarios.iter().map(|sc| s.spawn(move || simulate(sc))).collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
    });
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;

    let table = comparison_table(&base, &results);
    let mut files = Outputs::default();
    for (m, (traj, _)) in MODES.iter().zip(&results) {
        files.add(format!("trajectory_{m}.csv"), traj.to_csv_string()?);
    }
    files.add("compare.txt", table.clone());
    files.add("omega_overlay.svg", omega_overlay(&results));
    for p in files.commit(out)? {
        eprintln!("wrote {}", p.display());
    }
    print!("{table}");
    Ok(true)
}

fn comparison_table(sc: &Scenario, results: &[(Trajectory, MetricsReport)]) -> String {
    let opt = |v: Option<f64>| v.map_or("undefined".to_string(), |v| format!("{v:.4e}"));
    let mut rows: Vec<(String, Vec<String>)> = vec![
        ("steady_omega_rad_s".into(), results.iter().map(|(_, m)| format!("{:.4e}", m.steady_omega)).collect()),
        ("steady_max_hz".into(), results.iter().map(|(_, m)| format!("{:.4e}", m.steady_max_hz)).collect()),
        ("nadir_hz".into(), results.iter().map(|(_, m)| format!("{:.4e}", m.nadir_hz)).collect()),
    ];
    for j in 0..sc.n_areas() {
        rows.push((format!("err_index_{}", j + 1), results.iter().map(|(_, m)| opt(m.err_index[j])).collect()));
    }
    rows.push(("consensus_residual".into(), results.iter().map(|(_, m)| format!("{:.4e}", m.consensus_residual)).collect()));
    rows.push(("olc_gap".into(), results.iter().map(|(_, m)| opt(m.olc_gap)).collect()));
    rows.push(("l2_ratio".into(), results.iter().map(|(_, m)| opt(m.l2_ratio)).collect()));

    let key_w = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = String::new();
    let _ = writeln!(out, "scenario={}", sc.name);
    let _ = write!(out, "{:key_w$}", "metric");
    for m in MODES {
        let _ = write!(out, "  {:>12}", m.to_string());
    }
    out.push('\n');
    for (k, vals) in rows {
        let _ = write!(out, "{k:key_w$}");
        for v in vals {
            let _ = write!(out, "  {v:>12}");
        }
        out.push('\n');
    }
    out
}

fn omega_overlay(results: &[(Trajectory, MetricsReport)]) -> String {
    let n = results[0].0.n_areas();
    let charts: Vec<Chart> = (0..n)
        .map(|j| {
            MODES.iter().zip(results).fold(
                Chart::new(format!("Area {} frequency deviation", j + 1), "t (s)", "omega (rad/s)"),
                |c, (m, (traj, _))| {
                    c.with(Series::new(m.to_string(), traj.times(), traj.area_series("omega", j).unwrap_or_default()))
                },
            )
        })
        .collect();
    svg::render(&charts)
}

pub fn report(trajectory: &Path, out: &Path) -> Result<bool> {
    let file = File::open(trajectory).with_context(|| format!("opening {}", trajectory.display()))?;
    let traj = Trajectory::read_csv(file).with_context(|| format!("reading {}", trajectory.display()))?;
    let n = traj.n_areas();
    if n == 0 {
        bail!("{} has no per-area columns", trajectory.display());
    }
    let t = traj.times();

    let per_area = |prefix: &str, title: &str, unit: &str| -> Result<String> {
        let mut c = Chart::new(title, "t (s)", unit);
        for j in 0..n {
            c = c.with(Series::new(format!("area {}", j + 1), t.clone(), traj.area_series(prefix, j)?));
        }
        Ok(svg::render(&[c]))
    };
    let mut tracking = Vec::with_capacity(n);
    for j in 0..n {
        let w = traj.area_series("w", j)?;
        let target: Vec<f64> = traj.area_series("q", j)?.iter().zip(&w).map(|(q, w)| q + w).collect();
        tracking.push(
            Chart::new(format!("Area {} internal-model tracking", j + 1), "t (s)", "MW")
                .with(Series::new("model output", t.clone(), traj.area_series("tracking", j)?))
                .with(Series::new("q + w", t.clone(), target).dashed()),
        );
    }

    let mut files = Outputs::default();
    files.add("frequency.svg", per_area("freq_dev", "Frequency deviation", "Hz")?);
    files.add("mu.svg", per_area("mu", "Consensus variable mu", "mu")?);
    files.add("tracking.svg", svg::render(&tracking));
    for p in files.commit(out)? {
        println!("wrote {}", p.display());
    }
    Ok(true)
}

pub fn verify_exosystem(profiles: usize, seed: u64) -> Result<bool> {
    const TOL: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dt = 1e-3;
    let mut worst = 0.0f64;
    for _ in 0..profiles {
        let s = rng.random_range(1..=4);
        let offset = rng.random_range(-5.0..5.0);
        let components: Vec<SinusoidComponent> = (0..s)
            .map(|_| SinusoidComponent {
                amplitude: rng.random_range(0.1..5.0),
                angular_frequency: rng.random_range(0.1..3.0),
                phase: rng.random_range(0.0..std::f64::consts::TAU),
            })
            .collect();
        let profile = DisturbanceProfile { p_bar: 0.0, offset, components, noise: None, series: None };
        let alpha = alpha_from_frequencies(&profile.frequencies())?;
        let q = simulate_exosystem(&init_lambda(offset, &profile.components), &alpha, 10.0, dt)?;
        for (k, v) in q.iter().enumerate() {
            worst = worst.max((v - profile.sample_variation(k as f64 * dt)?).abs());
        }
    }
    let ok = worst < TOL;
    println!("profiles={profiles}");
    println!("seed={seed}");
    println!("max_abs_error={worst:.3e}");
    println!("tolerance={TOL:e}");
    println!("status={}", if ok { "pass" } else { "fail" });
    Ok(ok)
}
