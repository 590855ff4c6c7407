mod common;

use nalgebra::DVector;

use hyperstab::kernels::invert_t;
use hyperstab::model::chi_norm;
use hyperstab::sim::{fit_decay, random_initial_state, run_closed_loop, Mode, Observer, PlantStepper, SimConfig};
use hyperstab::synthesis::{FullSynthesis, SynthesisOptions};

use common::*;

/// Plant and observer stepped together under the input `law(t)`; returns `|ỹ|` per step.
fn innovations(syn: &FullSynthesis, seed: u64, t_end: f64, exact_init: bool, law: impl Fn(f64) -> f64) -> Vec<f64> {
    let md = &syn.model;
    let n_grid = syn.options.n_grid;
    let dt = 1.0 / ((n_grid - 1) as f64 * md.max_speed());
    let last = n_grid - 1;
    let stepper = PlantStepper::new(md, n_grid, dt).unwrap();
    let mut state = random_initial_state(md, n_grid, seed, 1.0);
    let mut obs = Observer::new(syn, n_grid, dt, 0.0, &state.u.node(last)).unwrap();
    if exact_init {
        obs.set_estimate(&invert_t(&syn.kernels, &state).unwrap());
    }
    let input = |t: f64| DVector::from_element(md.n, law(t));
    stepper.close(&mut state, &input(0.0));
    obs.close(&input(0.0)).unwrap();
    let mut out = vec![obs.innovation().amax()];
    let steps = (t_end / dt).round() as usize;
    for s in 1..=steps {
        let t = s as f64 * dt;
        let mut next = stepper.advance(&state);
        stepper.close(&mut next, &input(t));
        obs.advance(&next.u.node(last)).unwrap();
        obs.close(&input(t)).unwrap();
        state = next;
        out.push(obs.innovation().amax());
    }
    out
}

/// Unstable `X₀` with `X₁` cut off; the PDE only reflects.
fn unstable_ode() -> hyperstab::model::PlantModel {
    scalar(serde_json::json!({ "e1": [[0.0]], "c1": [[0.0]] }))
}

#[test]
fn open_loop_grows_at_least_at_the_ode_rate() {
    let md = unstable_ode();
    let syn = synthesis(&md, SynthesisOptions::new(101));
    let t_end = 8.0;
    let traj = run_closed_loop(&syn, &SimConfig::new(t_end), Mode::OpenLoop).unwrap();
    let (rate, r2) = fit_decay(&traj, md.tau()).unwrap();
    assert!(rate >= 0.45 && r2 > 0.999, "rate {rate} r2 {r2}");
    let chi = traj.chi_state();
    let t = traj.times();
    let k = t.iter().position(|t| *t >= md.tau()).unwrap();
    let growth = chi[chi.len() - 1] / chi[k];
    let expected = (0.5 * (t_end - t[k])).exp();
    assert!(growth >= 0.9 * expected, "{growth} vs {expected}");
}

#[test]
fn state_feedback_stabilizes_the_unstable_ode() {
    let md = unstable_ode();
    let syn = synthesis(&md, SynthesisOptions::new(101));
    let traj = run_closed_loop(&syn, &SimConfig::new(10.0), Mode::StateFeedback).unwrap();
    let (rate, r2) = fit_decay(&traj, md.tau()).unwrap();
    assert!(rate <= -0.2 && r2 >= 0.9, "rate {rate} r2 {r2}");
}

#[test]
fn runs_are_deterministic() {
    let scn = scenario("scalar.json");
    let syn = scenario_synthesis(&scn);
    let mut cfg = scn.config.sim.clone();
    cfg.t_end = 3.0;
    cfg.filter = Some(hyperstab::synthesis::LowPassFilter::butterworth2(4.0).unwrap());
    let dir = tempfile::tempdir().unwrap();
    let bytes = |name: &str| {
        let traj = run_closed_loop(&syn, &cfg, Mode::OutputFeedback).unwrap();
        let p = dir.path().join(name);
        traj.write_csv(&p).unwrap();
        std::fs::read(p).unwrap()
    };
    assert_eq!(bytes("a.csv"), bytes("b.csv"));
}

#[test]
fn zero_state_stays_zero() {
    let scn = scenario("demo.json");
    let syn = scenario_synthesis(&scn);
    let mut cfg = SimConfig::new(2.0);
    cfg.amplitude = 0.0;
    cfg.filter = scn.config.sim.filter;
    for mode in [Mode::OpenLoop, Mode::StateFeedback, Mode::OutputFeedback] {
        let traj = run_closed_loop(&syn, &cfg, mode).unwrap();
        for s in &traj.samples {
            assert_eq!(s.chi_state, 0.0, "{mode:?}");
            assert!(s.input.iter().all(|u| *u == 0.0));
        }
    }
}

#[test]
fn exact_observer_init_keeps_innovation_at_discretization_level() {
    let scn = scenario("demo.json");
    let syn = scenario_synthesis(&scn);
    let h = scn.h();
    let tau = syn.model.tau();
    let exact = innovations(&syn, 3, 3.0 * tau, true, |_| 0.0);
    let max = exact.iter().cloned().fold(0.0, f64::max);
    assert!(max <= 5.0 * h, "{max:e}");
    let wrong = innovations(&syn, 3, 3.0 * tau, false, |_| 0.0);
    assert!(wrong[0] > 10.0 * max);
}

#[test]
fn innovation_does_not_depend_on_the_input() {
    let scn = scenario("demo.json");
    let syn = scenario_synthesis(&scn);
    let t_end = 2.0 * syn.model.tau();
    let free = innovations(&syn, 5, t_end, false, |_| 0.0);
    let forced = innovations(&syn, 5, t_end, false, |t| (3.0 * t).sin());
    let diff = free.iter().zip(&forced).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff <= 5.0 * scn.h(), "{diff:e}");
}

#[test]
fn random_initial_state_has_requested_norm() {
    let scn = scenario("demo.json");
    for seed in 0..5 {
        let s = random_initial_state(&scn.model, 51, seed, 2.5);
        assert!((chi_norm(&s) - 2.5).abs() < 1e-12);
    }
}
