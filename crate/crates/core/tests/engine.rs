use loadside_core::analysis::{err_index, olc_oracle, MetricsReport};
use loadside_core::control::{command_adaptive, command_consensus, mu_derivative, CommGraph, ControllerMode};
use loadside_core::disturbance::DisturbanceProfile;
use loadside_core::integrate::Rk4;
use loadside_core::internal_model::{IMConfig, InternalModelState};
use loadside_core::scenario::{preset, Event, EventKind};
use loadside_core::{run, Error, Scenario, Simulation, Trajectory};
use proptest::prelude::*;

fn four_area() -> Scenario {
    preset("new_england_4area").unwrap()
}

fn quiet(mut sc: Scenario) -> Scenario {
    for d in &mut sc.disturbances {
        *d = DisturbanceProfile::constant(0.0);
    }
    sc
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn zero_scenario_stays_at_zero() {
    let mut sc = quiet(four_area());
    sc.horizon = 30.0;
    let tr = run(&sc).unwrap();
    for i in 0..tr.len() {
        assert!(tr.row(i)[1..].iter().all(|v| *v == 0.0), "row {i} left the origin");
    }
}

#[test]
fn grid_length_follows_horizon_and_stride() {
    let mut sc = four_area();
    sc.record_stride = 1;
    let tr = run(&sc).unwrap();
    assert_eq!(tr.len(), 120_001);
    assert_eq!(tr.times()[120_000], 120.0);

    sc.horizon = 1.0;
    sc.record_stride = 300;
    let t = run(&sc).unwrap().times();
    // stride multiples plus the final sample
    assert_eq!(t, vec![0.0, 0.3, 0.6, 0.9, 1.0]);
}

#[test]
fn identical_runs_are_bit_identical() {
    let mut sc = preset("noise").unwrap();
    sc.horizon = 30.0;
    let a = run(&sc).unwrap().to_csv_string().unwrap();
    let b = run(&sc).unwrap().to_csv_string().unwrap();
    assert!(a == b);
    sc.set_seed(sc.seed + 1);
    let c = run(&sc).unwrap().to_csv_string().unwrap();
    assert!(a != c);
}

#[test]
fn commands_hold_until_activation_then_follow_the_law() {
    let mut sc = four_area();
    sc.horizon = 25.0;
    let held = [7.5, -2.0, 0.0, 12.25];
    for (a, p) in sc.network.areas.iter_mut().zip(held) {
        a.initial_controllable_load = p;
    }
    let tr = run(&sc).unwrap();
    let t = tr.times();
    let cfg = &sc.controller;
    for (j, &held_j) in held.iter().enumerate() {
        let pl = tr.area_series("Pl", j).unwrap();
        let mu = tr.area_series("mu", j).unwrap();
        let omega = tr.area_series("omega", j).unwrap();
        let tracking = tr.area_series("tracking", j).unwrap();
        for i in 0..t.len() {
            if t[i] < 20.0 {
                assert_eq!(pl[i], held_j, "area {} at t = {}", j + 1, t[i]);
            } else {
                let law = mu[i] / cfg.beta[j] + cfg.d[j] * omega[i] + tracking[i];
                assert!((pl[i] - law).abs() < 1e-9 * (1.0 + law.abs()), "area {} at t = {}", j + 1, t[i]);
            }
        }
        // bumpless start: the consensus part picks up exactly where the load was held
        let k = t.iter().position(|&x| x >= 20.0).unwrap();
        assert!((mu[k] / cfg.beta[j] - held[j]).abs() < 1e-12);
    }
}

#[test]
fn energy_decays_without_control() {
    let mut sc = quiet(four_area());
    sc.events.clear();
    sc.horizon = 30.0;
    let omega0 = [0.2, -0.1, 0.05, -0.3];
    let mut sim = Simulation::new(&sc).unwrap();
    // the five line angles must come from node angles to be consistent
    let node = [0.0, -0.01, 0.02, 0.0];
    let theta: Vec<f64> = sc.network.lines.iter().map(|l| node[l.from] - node[l.to]).collect();
    sim.set_network_state(&theta, &omega0).unwrap();
    let tr = sim.run().unwrap();

    let energy = |i: usize| -> f64 {
        let row = tr.row(i);
        let kinetic: f64 = sc
            .network
            .areas
            .iter()
            .enumerate()
            .map(|(j, a)| 0.5 * a.inertia * row[tr.index_of(&format!("omega_{}", j + 1)).unwrap()].powi(2))
            .sum();
        let potential: f64 = sc
            .network
            .lines
            .iter()
            .map(|l| {
                let name = format!("theta_{}_{}", l.from + 1, l.to + 1);
                0.5 * l.susceptance * row[tr.index_of(&name).unwrap()].powi(2)
            })
            .sum();
        kinetic + potential
    };
    for i in 1..tr.len() {
        assert!(energy(i) <= energy(i - 1) * (1.0 + 1e-12), "energy rose at sample {i}");
    }
    let norm = |i: usize| (0..4).map(|j| tr.row(i)[1 + j].powi(2)).sum::<f64>().sqrt();
    let t = tr.times();
    let one = t.iter().position(|&x| x >= 1.0).unwrap();
    assert!(norm(tr.len() - 1) < 1e-3 * norm(one));
}

#[test]
fn halving_the_step_changes_frequency_by_less_than_a_microradian() {
    let mut coarse = four_area();
    coarse.record_stride = 10;
    let mut fine = coarse.clone();
    fine.dt = 0.0005;
    fine.record_stride = 20;
    let a = run(&coarse).unwrap();
    let b = run(&fine).unwrap();
    assert_eq!(a.times(), b.times());
    for j in 0..4 {
        let d = max_abs_diff(&a.area_series("omega", j).unwrap(), &b.area_series("omega", j).unwrap());
        assert!(d < 1e-6, "area {}: {d}", j + 1);
    }
}

#[test]
fn consensus_preserves_the_sum_of_mu() {
    let g = CommGraph::ring(4);
    let beta = [1.0, 0.8, 0.8, 0.4];
    let mut mu = vec![3.0, -1.0, 7.5, 0.25];
    let total = mu.iter().sum::<f64>();
    let mut rk = Rk4::new(4);
    for k in 0..100_000 {
        rk.step(
            |_, x, dx| dx.copy_from_slice(&mu_derivative(x, &[0.0; 4], &beta, &g).unwrap()),
            k as f64 * 1e-3,
            &mut mu,
            1e-3,
        );
    }
    assert!((mu.iter().sum::<f64>() - total).abs() < 1e-9);
    assert!(mu.iter().all(|m| (m - total / 4.0).abs() < 1e-9));
}

proptest! {
    #[test]
    fn adaptive_law_without_droop_or_model_is_consensus(
        mu in -100.0f64..100.0,
        beta in 0.05f64..5.0,
        omega in -1.0f64..1.0,
    ) {
        let cfg = IMConfig::new(3, 1.0, 10.0);
        let frozen = InternalModelState::zeros(&cfg);
        prop_assert_eq!(command_adaptive(mu, beta, 0.0, omega, &frozen, &cfg).unwrap(), command_consensus(mu, beta));
    }
}

#[test]
fn frozen_model_with_negligible_droop_matches_consensus_run() {
    let mut consensus = four_area();
    consensus.controller.mode = ControllerMode::Consensus;
    consensus.horizon = 40.0;
    let mut adaptive = consensus.clone();
    adaptive.controller.mode = ControllerMode::Adaptive;
    adaptive.controller.freeze_im = true;
    adaptive.controller.d = vec![f64::MIN_POSITIVE; 4];
    let a = run(&consensus).unwrap();
    let b = run(&adaptive).unwrap();
    // d must stay positive, so the droop term contributes a subnormal
    for j in 0..4 {
        let d = max_abs_diff(&a.area_series("Pl", j).unwrap(), &b.area_series("Pl", j).unwrap());
        assert!(d < 1e-12, "area {}: {d}", j + 1);
    }
}

/// Long constant-injection run; returns the final consensus commands.
fn converge(mode: ControllerMode, horizon: f64, dt: f64) -> (Scenario, Trajectory) {
    let mut sc = four_area();
    sc.controller.mode = mode;
    sc.horizon = horizon;
    sc.dt = dt;
    sc.record_stride = 1000;
    for (a, m) in sc.network.areas.iter_mut().zip([35.0, 30.0, 30.0, 50.0]) {
        a.inertia = m;
    }
    for d in &mut sc.disturbances {
        d.components.clear();
    }
    (sc.clone(), run(&sc).unwrap())
}

fn check_optimality(sc: &Scenario, tr: &Trajectory, target_total: f64) {
    let last = tr.row(tr.len() - 1);
    let col = |name: String| last[tr.index_of(&name).unwrap()];
    let mu: Vec<f64> = (1..=4).map(|j| col(format!("mu_{j}"))).collect();
    let mean = mu.iter().sum::<f64>() / 4.0;
    let spread = mu.iter().copied().fold(f64::MIN, f64::max) - mu.iter().copied().fold(f64::MAX, f64::min);
    assert!(spread < 1e-4 * mean.abs(), "mu = {mu:?}");

    let beta = &sc.controller.beta;
    let p: Vec<f64> = mu.iter().zip(beta).map(|(m, b)| m / b).collect();
    for j in 1..4 {
        let ratio = p[j] / p[0];
        assert!((ratio - beta[0] / beta[j]).abs() / (beta[0] / beta[j]) < 0.01, "{p:?}");
    }
    let oracle = olc_oracle(&[target_total / 4.0; 4], beta).unwrap();
    for j in 0..4 {
        assert!((p[j] - oracle[j]).abs() / oracle[j] < 0.01, "{p:?} vs {oracle:?}");
    }
}

#[test]
fn consensus_dispatch_converges_to_optimum() {
    let (sc, tr) = converge(ControllerMode::Consensus, 400.0, 0.005);
    // without an internal model the offsets are dispatched as well
    let total = sc.disturbances.iter().map(|d| d.p_bar + d.offset).sum::<f64>();
    check_optimality(&sc, &tr, total);
}

#[test]
fn adaptive_dispatch_converges_to_optimum_of_predicted_injection() {
    let (sc, tr) = converge(ControllerMode::Adaptive, 5000.0, 0.005);
    // the internal model absorbs the unknown offsets; consensus covers P̄
    let total = sc.disturbances.iter().map(|d| d.p_bar).sum::<f64>();
    check_optimality(&sc, &tr, total);
    let report = MetricsReport::compute(&tr, &sc).unwrap();
    assert!(report.residuals.omega < 1e-5);
    assert!(report.residuals.tracking < 1e-3);
}

#[test]
fn err_index_is_insensitive_to_record_stride() {
    let mut sc = four_area();
    sc.record_stride = 1;
    let fine = run(&sc).unwrap();
    sc.record_stride = 10;
    let coarse = run(&sc).unwrap();
    for j in 0..4 {
        let e = |tr: &Trajectory| {
            let q = tr.area_series("q", j).unwrap();
            err_index(&tr.times(), &tr.area_series("tracking", j).unwrap(), &q, 20.0, 120.0).unwrap()
        };
        let (a, b) = (e(&fine), e(&coarse));
        assert!((a - b).abs() / a < 0.01, "area {}: {a} vs {b}", j + 1);
    }
}

#[test]
fn runaway_adaptation_is_reported() {
    let mut sc = four_area();
    sc.controller.im.as_mut().unwrap().alpha_cap = 1e-9;
    match run(&sc) {
        Err(Error::Diverged { t, reason }) => {
            assert!(t > 0.0 && t <= sc.horizon);
            assert!(reason.contains("alpha_hat"), "{reason}");
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn equilibrium_start_is_stationary() {
    let mut sc = preset("wind").unwrap();
    sc.horizon = 5.0;
    sc.events.retain(|e| e.kind != EventKind::DisturbanceOnset);
    sc.events.push(Event { time: 1000.0, kind: EventKind::DisturbanceOnset });
    let tr = run(&sc).unwrap();
    for j in 0..4 {
        assert!(tr.area_series("omega", j).unwrap().iter().all(|w| w.abs() < 1e-12));
        let pl = tr.area_series("Pl", j).unwrap();
        assert!(max_abs_diff(&pl, &vec![pl[0]; pl.len()]) < 1e-9);
    }
    // inflow balances the gap between prediction and optimal dispatch
    let dispatch = olc_oracle(&[72.0, 60.0, 49.0, 120.0], &sc.controller.beta).unwrap();
    let pl: Vec<f64> = (0..4).map(|j| tr.area_series("Pl", j).unwrap()[0]).collect();
    assert!(max_abs_diff(&pl, &dispatch) < 1e-9);
}

#[test]
fn series_shorter_than_the_run_is_rejected() {
    let mut sc = preset("wind").unwrap();
    sc.horizon = 400.0;
    match Simulation::new(&sc) {
        Err(Error::Validation(v)) => assert!(v.iter().any(|m| m.contains("series covers"))),
        other => panic!("expected validation error, got {:?}", other.err()),
    }
}
