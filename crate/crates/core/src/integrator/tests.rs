use std::f64::consts::PI;

use super::*;
use crate::spectral::{random_band_limited, GridSpec};

fn grid(n: usize) -> GridSpec {
    GridSpec::new(n, PI).unwrap()
}

fn linear_mode_error(dt: f64, cfg: SchemeConfig) -> f64 {
    let g = grid(4);
    let u0 = ModalField::single_mode(g, 1, 1, 1.0).unwrap();
    let model = Model::unforced(Nonlinearity::zero(), g);
    let (_, s) = simulate_model(
        &model,
        &State::at_rest(u0),
        &SchemeConfig { dt, ..cfg },
        1.0,
        &SimOptions {
            sample_every: 1000,
            diagnostics: None,
        },
    )
    .unwrap();
    let (y, v) = exact_linear_mode(2.0, 1.0, 0.0, 1.0);
    let st = s.state();
    (st.u.coeff[[0, 0]] - y).abs().max((st.v.coeff[[0, 0]] - v).abs())
}

fn order(e: &[f64]) -> Vec<f64> {
    e.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

#[test]
fn zero_state_is_fixed() {
    let g = grid(6);
    let nl = Nonlinearity::new(1.0, 0.0, -1.0).unwrap();
    for cfg in [SchemeConfig::imex(1e-2), SchemeConfig::implicit(1e-2)] {
        let s = step(&State::zeros(g), &nl, &SourceTerm::zero(g), &cfg).unwrap();
        assert!(s.u.coeff.iter().chain(s.v.coeff.iter()).all(|&c| c == 0.0));
        assert!((s.time - 1e-2).abs() < 1e-16);
    }
}

#[test]
fn crank_nicolson_is_second_order_on_linear_mode() {
    let errs: Vec<f64> = [1e-2, 5e-3, 2.5e-3]
        .iter()
        .map(|&dt| linear_mode_error(dt, SchemeConfig::default()))
        .collect();
    for p in order(&errs) {
        assert!((1.9..=2.1).contains(&p), "order {p}, errors {errs:?}");
    }
}

#[test]
fn backward_euler_is_first_order_on_linear_mode() {
    let errs: Vec<f64> = [1e-2, 5e-3, 2.5e-3]
        .iter()
        .map(|&dt| linear_mode_error(dt, SchemeConfig::implicit(dt)))
        .collect();
    for p in order(&errs) {
        assert!((0.85..=1.15).contains(&p), "order {p}, errors {errs:?}");
    }
}

#[test]
fn first_step_matches_taylor_expansion() {
    let g = grid(8);
    let nl = Nonlinearity::new(1.0, 0.3, -1.0).unwrap();
    let src = SourceTerm::new(random_band_limited(g, 3, 1.0, 3).unwrap());
    let u0 = random_band_limited(g, 8, 1.0, 4).unwrap();
    let s0 = State::at_rest(u0);
    let acc = crate::model::acceleration_from_state(&s0, &nl, &src).unwrap();
    let err = |dt: f64| {
        let s1 = step(&s0, &nl, &src, &SchemeConfig::imex(dt)).unwrap();
        s1.v.axpy(-dt, &acc).coeff.iter().map(|c| c.abs()).fold(0.0, f64::max)
    };
    let (e1, e2) = (err(1e-4), err(5e-5));
    let p = (e1 / e2).log2();
    assert!(p > 1.8, "order {p} ({e1}, {e2})");
}

#[test]
fn empty_run_has_one_sample() {
    let g = grid(4);
    let s0 = State::at_rest(ModalField::single_mode(g, 1, 1, 1.0).unwrap());
    let nl = Nonlinearity::new(1.0, 0.0, -1.0).unwrap();
    let log = simulate(&s0, &nl, &SourceTerm::zero(g), &SchemeConfig::default(), 0.0, 10).unwrap();
    assert_eq!(log.len(), 1);
    assert_eq!(energy_equality_residual(&log, 0, 0).unwrap(), 0.0);
    assert!(matches!(energy_equality_residual(&log, 0, 1), Err(Error::Index { .. })));
    assert!(matches!(higher_energy_residual(&log), Err(Error::InsufficientData(_))));
    let bad = simulate(&s0, &nl, &SourceTerm::zero(g), &SchemeConfig::default(), -1.0, 10);
    assert!(bad.is_err());
}

#[test]
fn energy_decreases_for_double_well() {
    let g = grid(16);
    let nl = Nonlinearity::new(1.0, 0.0, -1.0).unwrap();
    for seed in 0..3 {
        let u = random_band_limited(g, 8, 1.0, seed).unwrap();
        let v = random_band_limited(g, 8, 1.0, seed + 50).unwrap();
        let s0 = State::new(u, v.scaled(0.5), 0.0).unwrap();
        let log = simulate(&s0, &nl, &SourceTerm::zero(g), &SchemeConfig::imex(1e-3), 0.5, 1).unwrap();
        for w in log.samples.windows(2) {
            assert!(w[1].energy <= w[0].energy + 1e-8);
            assert!(w[1].dissip_cum >= w[0].dissip_cum);
        }
        assert!(log.max_energy_increase <= 1e-8);
    }
}

#[test]
fn energy_equality_residual_is_second_order() {
    let g = grid(12);
    let nl = Nonlinearity::new(1.0, 0.2, -1.0).unwrap();
    let src = SourceTerm::new(random_band_limited(g, 2, 0.5, 1).unwrap());
    let u = random_band_limited(g, 3, 1.5, 2).unwrap();
    let s0 = State::at_rest(u);
    let res: Vec<f64> = [1e-3, 5e-4, 2.5e-4]
        .iter()
        .map(|&dt| {
            let m = Model::new(nl, src.clone());
            let opts = SimOptions {
                sample_every: 10_000,
                diagnostics: None,
            };
            let (log, _) = simulate_model(&m, &s0, &SchemeConfig::imex(dt), 1.0, &opts).unwrap();
            energy_equality_residual(&log, 0, log.len() - 1).unwrap()
        })
        .collect();
    for w in res.windows(2) {
        assert!(w[0] / w[1] >= 3.5, "{res:?}");
    }
}

#[test]
fn velocity_matches_difference_of_positions() {
    let g = grid(10);
    let nl = Nonlinearity::new(1.0, 0.0, -1.0).unwrap();
    let s0 = State::at_rest(random_band_limited(g, 5, 2.0, 7).unwrap());
    let gap = |dt: f64| {
        let model = Model::unforced(nl, g);
        let mut st = Stepper::new(model, SchemeConfig::imex(dt), s0.clone()).unwrap();
        let mut us = Vec::new();
        let mut vs = Vec::new();
        st.run((0.5 / dt).round() as usize, 1, |s| {
            us.push(s.state().u.clone());
            vs.push(s.state().v.clone());
            Ok(())
        })
        .unwrap();
        let mut worst = 0.0f64;
        for i in 1..us.len() - 1 {
            let d = us[i + 1].axpy(-1.0, &us[i - 1]).scaled(0.5 / dt).axpy(-1.0, &vs[i]);
            worst = worst.max(crate::spectral::norm_hs(&d, -0.5));
        }
        worst
    };
    let (a, b) = (gap(2e-3), gap(1e-3));
    assert!((a / b).log2() > 1.8, "{a} {b}");
}

#[test]
fn galerkin_invariance() {
    let coarse = grid(8);
    let fine = grid(16);
    let u = random_band_limited(coarse, 4, 1.0, 9).unwrap();
    let v = random_band_limited(coarse, 4, 1.0, 10).unwrap();
    let s0 = State::new(u, v, 0.0).unwrap();
    let run = |nl: Nonlinearity, s: &State, steps: usize| {
        let model = Model::unforced(nl, *s.grid());
        let cfg = SchemeConfig {
            stabilization: Some(4.0),
            ..SchemeConfig::imex(1e-3)
        };
        let mut st = Stepper::new(model, cfg, s.clone()).unwrap();
        for _ in 0..steps {
            st.step().unwrap();
        }
        st.into_state()
    };
    let lin = Nonlinearity::linear(0.5).unwrap();
    let a = run(lin, &s0, 200);
    let b = run(lin, &s0.resized(16).unwrap(), 200).resized(8).unwrap();
    assert!(a.u.axpy(-1.0, &b.u).coeff.iter().all(|c| c.abs() < 1e-12));

    // for a cubic, the first step only sees f(u0), which both resolutions project alike
    let cubic = Nonlinearity::new(1.0, 0.0, -1.0).unwrap();
    let a = run(cubic, &s0, 1);
    let b = run(cubic, &s0.resized(16).unwrap(), 1);
    assert!(a.u.axpy(-1.0, &b.resized(8).unwrap().u).coeff.iter().all(|c| c.abs() < 1e-12));
    assert_eq!(*b.grid(), fine);
}

#[test]
fn higher_energy_residual_on_linear_mode() {
    let g = grid(6);
    let u0 = ModalField::single_mode(g, 1, 1, 1.0).unwrap();
    let res = |dt: f64, n: usize| {
        let gg = grid(n);
        let s0 = State::at_rest(u0.resized(n).unwrap());
        let log = simulate(&s0, &Nonlinearity::zero(), &SourceTerm::zero(gg), &SchemeConfig::imex(dt), 1.0, 1).unwrap();
        higher_energy_residual(&log).unwrap()
    };
    let (a, b) = (res(1e-2, 6), res(5e-3, 6));
    assert!((a / b).log2() >= 1.8, "{a} {b}");
    assert!((res(1e-2, 12) - a).abs() < 1e-8);

    let zero = simulate(&State::zeros(g), &Nonlinearity::zero(), &SourceTerm::zero(g), &SchemeConfig::imex(1e-2), 0.1, 1).unwrap();
    assert_eq!(higher_energy_residual(&zero).unwrap(), 0.0);
}

#[test]
fn csv_roundtrip() {
    let g = grid(4);
    let nl = Nonlinearity::new(1.0, 0.0, -1.0).unwrap();
    let s0 = State::at_rest(ModalField::single_mode(g, 1, 1, 1.0).unwrap());
    let log = simulate(&s0, &nl, &SourceTerm::zero(g), &SchemeConfig::imex(1e-2), 0.1, 2).unwrap();
    let mut buf = Vec::new();
    log.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("t,norm0,norm2,ut_Vprime,energy,calF,calG,calH,dissip_cum\n"));
    let back = TrajectoryLog::read_csv(&buf[..]).unwrap();
    assert_eq!(back.samples, log.samples);
    assert_eq!(log.len(), 6);
}

fn checkpoint_setup() -> (Model, Stepper) {
    let g = grid(8);
    let nl = Nonlinearity::new(1.0, 0.4, -1.0).unwrap();
    let model = Model::new(nl, SourceTerm::new(random_band_limited(g, 3, 1.0, 1).unwrap()));
    let s0 = State::at_rest(random_band_limited(g, 8, 1.0, 2).unwrap());
    let mut st = Stepper::new(model.clone(), SchemeConfig::imex(2e-3), s0).unwrap();
    for _ in 0..7 {
        st.step().unwrap();
    }
    (model, st)
}

fn bits_equal(a: &State, b: &State) -> bool {
    a.time.to_bits() == b.time.to_bits()
        && a.u.coeff.iter().zip(b.u.coeff.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
        && a.v.coeff.iter().zip(b.v.coeff.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
}

#[test]
fn checkpoint_resume_is_bitwise() {
    let (model, mut st) = checkpoint_setup();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.ckpt");
    save_checkpoint(&path, &st, Some(42)).unwrap();
    let ck = load_checkpoint(&path).unwrap();
    assert!(bits_equal(&ck.state, st.state()));
    assert_eq!(ck.seed, Some(42));
    assert_eq!(ck.steps, 7);

    let mut resumed = ck.resume(&model).unwrap();
    for _ in 0..10 {
        st.step().unwrap();
        resumed.step().unwrap();
    }
    assert!(bits_equal(st.state(), resumed.state()));
    assert_eq!(st.dissipation().to_bits(), resumed.dissipation().to_bits());
}

#[test]
fn checkpoint_rejects_bad_input() {
    let (model, st) = checkpoint_setup();
    let mut buf = Vec::new();
    Checkpoint::from_stepper(&st, None).write(&mut buf).unwrap();

    let cut = &buf[..buf.len() - 3];
    assert!(matches!(Checkpoint::read(cut), Err(Error::CorruptFile(_))));
    assert!(matches!(Checkpoint::read(&b"garbage\n"[..]), Err(Error::CorruptFile(_))));

    let text = String::from_utf8_lossy(&buf).replacen("\"version\":1", "\"version\":7", 1);
    assert!(matches!(Checkpoint::read(text.as_bytes()), Err(Error::VersionMismatch { found: 7, .. })));

    let ck = Checkpoint::read(&buf[..]).unwrap();
    let other_nl = Model::new(Nonlinearity::new(1.0, 0.0, -1.0).unwrap(), model.source.clone());
    assert!(matches!(ck.clone().resume(&other_nl), Err(Error::CheckpointMismatch(_))));
    let other_grid = model.resized(10).unwrap();
    assert!(matches!(ck.clone().resume(&other_grid), Err(Error::CheckpointMismatch(_))));
    assert!(ck.resume(&model).is_ok());
}

#[test]
fn safeguard_catches_explicit_instability_and_stabilization_cures_it() {
    // f' = 12 > 0 everywhere: without stabilization modes with lambda near 3500 grow
    let g = grid(48);
    let nl = Nonlinearity::linear(12.0).unwrap();
    let u0 = random_band_limited(g, 48, 1e-3, 5).unwrap();
    let model = Model::unforced(nl, g);
    let opts = SimOptions {
        sample_every: 1000,
        diagnostics: None,
    };
    let err = simulate_model(&model, &State::at_rest(u0.clone()), &SchemeConfig::imex(1e-3), 5.0, &opts).unwrap_err();
    assert!(matches!(err, Error::Instability { .. }), "{err}");
    let auto = SchemeConfig {
        stabilization: None,
        ..SchemeConfig::imex(1e-3)
    };
    let (log, s) = simulate_model(&model, &State::at_rest(u0), &auto, 5.0, &opts).unwrap();
    assert_eq!(s.stabilization(), 12.0);
    assert!(log.max_energy_increase <= 0.0);
}

#[test]
fn automatic_stabilization_tracks_the_solution_range() {
    let g = grid(8);
    let nl = Nonlinearity::new(1.0, 0.0, -3.0).unwrap();
    let cfg = SchemeConfig {
        stabilization: None,
        ..SchemeConfig::imex(1e-2)
    };
    let mut st = Stepper::new(Model::unforced(nl, g), cfg, State::at_rest(ModalField::single_mode(g, 1, 1, 4.0).unwrap())).unwrap();
    let s0 = st.stabilization();
    let sup = st.padded_values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(s0 >= nl.df(sup));
    st.step().unwrap();
    assert!(st.stabilization() >= s0);
}

#[test]
fn newton_scheme_handles_nonlinear_steps_and_backward_time() {
    let g = grid(8);
    let nl = Nonlinearity::new(1.0, 0.0, -1.0).unwrap();
    let s0 = State::at_rest(random_band_limited(g, 2, 2.0, 3).unwrap());
    let end = |cfg: SchemeConfig| {
        let opts = SimOptions {
            sample_every: 1_000_000,
            diagnostics: None,
        };
        simulate_model(&Model::unforced(nl, g), &s0, &cfg, 0.5, &opts).unwrap().1.into_state()
    };
    let reference = end(SchemeConfig::imex(1e-4));
    let errs: Vec<f64> = [2e-3, 1e-3]
        .iter()
        .map(|&dt| {
            let s = end(SchemeConfig::implicit(dt));
            crate::spectral::norm_pair(&s.u.axpy(-1.0, &reference.u), &s.v.axpy(-1.0, &reference.v), 0.0).unwrap()
        })
        .collect();
    let p = (errs[0] / errs[1]).log2();
    assert!((0.85..=1.15).contains(&p), "{errs:?}");

    assert!(SchemeConfig::imex(-1e-3).validate().is_err());
    let back = SchemeConfig::implicit(-1e-3);
    back.validate().unwrap();
    let fwd = step(&s0, &nl, &SourceTerm::zero(g), &SchemeConfig::implicit(1e-3)).unwrap();
    let mut st = Stepper::new(Model::unforced(nl, g), back, State { time: 1e-3, ..fwd }).unwrap();
    st.step().unwrap();
    assert!(st.time().abs() < 1e-15);
}
