use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn exp_field() -> AutonomousField {
    AutonomousField::new(1, |y, dy| dy[0] = y[0]).with_jacobian(|_| DMatrix::from_element(1, 1, 1.0))
}

fn oscillator() -> AutonomousField {
    AutonomousField::new(2, |y, dy| {
        dy[0] = y[1];
        dy[1] = -y[0];
    })
}

fn unit_flow() -> AutonomousField {
    AutonomousField::new(1, |_, dy| dy[0] = 1.0)
}

#[test]
fn zero_field_is_constant() {
    let f = AutonomousField::new(1, |_, dy| dy[0] = 0.0);
    let tr = integrate(&f, &[1.0], (0.0, 1.0), &StepControl::default()).unwrap();
    assert_eq!(tr.last_state(), &[1.0]);
    assert_eq!(tr.s_end(), 1.0);
}

#[test]
fn exponential_closed_form() {
    let tr = integrate(&exp_field(), &[1.0], (0.0, 1.0), &StepControl::default()).unwrap();
    let e = std::f64::consts::E;
    assert!((tr.last_state()[0] - e).abs() / e < 1e-6);
}

#[test]
fn rejects_bad_inputs() {
    let f = exp_field();
    let ctrl = StepControl::default();
    assert!(matches!(
        integrate(&f, &[1.0, 2.0], (0.0, 1.0), &ctrl),
        Err(Error::InvalidInput(_))
    ));
    assert!(matches!(
        integrate(&f, &[1.0], (1.0, 1.0), &ctrl),
        Err(Error::InvalidInput(_))
    ));
    let bad = StepControl {
        h_min: 1.0,
        h_init: 0.1,
        ..ctrl
    };
    assert!(bad.validate().is_err());
}

#[test]
fn blow_up_is_reported() {
    // y' = y^2 from 1 blows up at s = 1
    let f = AutonomousField::new(1, |y, dy| dy[0] = y[0] * y[0]);
    let err = integrate(&f, &[1.0], (0.0, 2.0), &StepControl::default()).unwrap_err();
    assert!(
        matches!(err, Error::StepUnderflow { .. } | Error::NonFiniteState { .. } | Error::MaxStepsExceeded { .. }),
        "{err:?}"
    );
}

#[test]
fn nan_aborts_immediately() {
    let f = AutonomousField::new(1, |y, dy| dy[0] = if y[0] > 1.5 { f64::NAN } else { 1.0 });
    let err = integrate(&f, &[1.0], (0.0, 2.0), &StepControl::default()).unwrap_err();
    assert!(matches!(err, Error::NonFiniteState { .. }), "{err:?}");
}

#[test]
fn max_steps_exceeded() {
    let ctrl = StepControl {
        max_steps: 3,
        h_max: 0.01,
        h_init: 0.01,
        ..StepControl::default()
    };
    let err = integrate(&exp_field(), &[1.0], (0.0, 1.0), &ctrl).unwrap_err();
    assert!(matches!(err, Error::MaxStepsExceeded { .. }));
}

#[test]
fn local_error_bound_per_step() {
    // one-step error against the exact flow stays near the requested tolerance
    let ctrl = StepControl::default();
    let tr = integrate(&exp_field(), &[1.0], (0.0, 3.0), &ctrl).unwrap();
    for k in 0..tr.steps() {
        let y0 = tr.node_state(k)[0];
        let h = tr.node_s(k + 1) - tr.node_s(k);
        let exact = y0 * h.exp();
        let tol = ctrl.abs_tol.max(ctrl.rel_tol * exact.abs());
        assert!((tr.node_state(k + 1)[0] - exact).abs() <= tol, "step {k}");
    }
}

#[test]
fn halving_tolerance_never_hurts() {
    let e = std::f64::consts::E;
    let mut prev_exp = f64::INFINITY;
    let mut prev_osc = f64::INFINITY;
    for k in 0..8 {
        let tol = 1e-4 / 2f64.powi(k);
        let ctrl = StepControl::with_tol(tol);
        let a = integrate(&exp_field(), &[1.0], (0.0, 1.0), &ctrl).unwrap();
        let err_exp = (a.last_state()[0] - e).abs();
        let b = integrate(&oscillator(), &[1.0, 0.0], (0.0, 10.0), &ctrl).unwrap();
        let yb = b.last_state();
        let err_osc = (yb[0] - 10f64.cos()).abs().max((yb[1] + 10f64.sin()).abs());
        assert!(err_exp <= prev_exp * 1.0001, "exp at tol {tol}: {err_exp} > {prev_exp}");
        assert!(err_osc <= prev_osc * 1.0001, "osc at tol {tol}: {err_osc} > {prev_osc}");
        prev_exp = err_exp;
        prev_osc = err_osc;
    }
}

#[test]
fn dense_output_reproduces_nodes() {
    let tr = integrate(&oscillator(), &[1.0, 0.0], (0.0, 5.0), &StepControl::default()).unwrap();
    for k in 0..tr.len() {
        assert_eq!(tr.eval(tr.node_s(k)).unwrap(), tr.node_state(k));
    }
}

#[test]
fn dense_output_exponential_midpoint() {
    let tr = integrate(&exp_field(), &[1.0], (0.0, 1.0), &StepControl::default()).unwrap();
    let y = tr.eval(0.5).unwrap()[0];
    assert!((y - 0.5f64.exp()).abs() < 1e-5, "{:e}", y - 0.5f64.exp());
}

#[test]
fn dense_output_monotone_between_nodes() {
    let tr = integrate(&exp_field(), &[1.0], (0.0, 2.0), &StepControl::default()).unwrap();
    for k in 0..tr.steps() {
        let m = 0.5 * (tr.node_s(k) + tr.node_s(k + 1));
        let y = tr.eval(m).unwrap()[0];
        assert!(tr.node_state(k)[0] < y && y < tr.node_state(k + 1)[0]);
    }
}

#[test]
fn dense_output_out_of_span() {
    let tr = integrate(&exp_field(), &[1.0], (0.0, 1.0), &StepControl::default()).unwrap();
    assert!(matches!(tr.eval(1.5), Err(Error::OutOfSpan { .. })));
    assert!(matches!(tr.eval(-0.1), Err(Error::OutOfSpan { .. })));
}

#[test]
fn dense_output_matches_finer_reference() {
    let tol = 1e-8;
    let coarse = integrate(&oscillator(), &[1.0, 0.0], (0.0, 10.0), &StepControl::with_tol(tol)).unwrap();
    let fine = integrate(&oscillator(), &[1.0, 0.0], (0.0, 10.0), &StepControl::with_tol(tol / 10.0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let s: f64 = rng.gen_range(0.0..10.0);
        let a = coarse.eval(s).unwrap();
        let b = fine.eval(s).unwrap();
        worst = worst.max((a[0] - b[0]).abs()).max((a[1] - b[1]).abs());
    }
    assert!(worst <= 10.0 * tol, "worst deviation {worst:e}");
}

#[test]
fn dense_derivative_tracks_field() {
    let tr = integrate(&oscillator(), &[1.0, 0.0], (0.0, 3.0), &StepControl::with_tol(1e-9)).unwrap();
    for &s in &[0.3, 1.1, 2.9] {
        let d = tr.eval_derivative(s).unwrap();
        assert!((d[0] + s.sin()).abs() < 1e-7);
        assert!((d[1] + s.cos()).abs() < 1e-7);
    }
}

#[test]
fn reproducible_bit_for_bit() {
    let a = integrate(&oscillator(), &[1.0, 0.0], (0.0, 7.0), &StepControl::default()).unwrap();
    let b = integrate(&oscillator(), &[1.0, 0.0], (0.0, 7.0), &StepControl::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn linear_flow_event() {
    let ev = EventSpec::new(|y| y[0] - 0.5).root_tol(1e-10);
    let (tr, s, y) = integrate_until(&unit_flow(), &[0.0], &StepControl::default(), &ev, 2.0).unwrap();
    assert!((s - 0.5).abs() <= 1e-10);
    assert!((y[0] - 0.5).abs() <= 1e-10);
    assert_eq!(tr.s_end(), s);
    assert_eq!(tr.last_state(), y.as_slice());
}

#[test]
fn event_not_found() {
    let ev = EventSpec::new(|y| y[0] - 5.0);
    let err = integrate_until(&unit_flow(), &[0.0], &StepControl::default(), &ev, 2.0).unwrap_err();
    assert_eq!(err, Error::EventNotFound { s_max: 2.0 });
}

#[test]
fn event_direction_filter() {
    // y = cos(s): first falling zero at pi/2, first rising zero at 3pi/2
    let ev = EventSpec::new(|y| y[0]).direction(Direction::Rising);
    let (_, s, _) = integrate_until(&oscillator(), &[1.0, 0.0], &StepControl::with_tol(1e-10), &ev, 10.0).unwrap();
    assert!((s - 1.5 * std::f64::consts::PI).abs() < 1e-8, "{s}");
    let ev = EventSpec::new(|y| y[0]).direction(Direction::Falling);
    let (_, s, _) = integrate_until(&oscillator(), &[1.0, 0.0], &StepControl::with_tol(1e-10), &ev, 10.0).unwrap();
    assert!((s - 0.5 * std::f64::consts::PI).abs() < 1e-8, "{s}");
}

#[test]
fn event_restart_does_not_retrigger() {
    let ctrl = StepControl::with_tol(1e-10);
    let ev = EventSpec::new(|y| y[0]).direction(Direction::Falling);
    let (_, s1, y1) = integrate_until(&oscillator(), &[1.0, 0.0], &ctrl, &ev, 10.0).unwrap();
    // from the event state the next falling zero of cos is a full period later
    let (_, s2, _) = integrate_until(&oscillator(), &y1, &ctrl, &ev, 10.0).unwrap();
    assert!(s1 > 1.0);
    assert!((s2 - 2.0 * std::f64::consts::PI).abs() < 1e-7, "{s2}");
}

#[test]
fn non_terminal_events_are_collected() {
    let ev = EventSpec::new(|y| y[0]).terminal(false);
    let run = integrate_events(&oscillator(), &[1.0, 0.0], (0.0, 10.0), &StepControl::with_tol(1e-10), &[ev]).unwrap();
    assert!(!run.terminated);
    assert_eq!(run.hits.len(), 3);
    for (k, hit) in run.hits.iter().enumerate() {
        let want = (0.5 + k as f64) * std::f64::consts::PI;
        assert!((hit.s - want).abs() < 1e-8);
    }
    assert_eq!(run.trajectory.s_end(), 10.0);
}

#[test]
fn invert_component_cases() {
    let tr = integrate(&exp_field(), &[2.0], (0.0, 1.0), &StepControl::with_tol(1e-10)).unwrap();
    assert_eq!(tr.invert_component(0, 2.0).unwrap(), 0.0);
    let s = tr.invert_component(0, 2.0 * 0.7f64.exp()).unwrap();
    assert!((s - 0.7).abs() < 1e-9);
    assert!(matches!(
        tr.invert_component(0, 100.0),
        Err(Error::NotAttained { component: 0, .. })
    ));
    let lin = integrate(&unit_flow(), &[0.0], (0.0, 1.0), &StepControl::default()).unwrap();
    assert!((lin.invert_component(0, 0.25).unwrap() - 0.25).abs() < 1e-14);
}

#[test]
fn quadrature_of_one_is_parameter_length() {
    let ext = quadrature_extend(&oscillator(), |_| 1.0);
    let tr = integrate(&ext, &[1.0, 0.0, 0.0], (0.0, 4.0), &StepControl::default()).unwrap();
    assert!((tr.last_state()[2] - 4.0).abs() < 1e-12);
    let zero = quadrature_extend(&oscillator(), |_| 0.0);
    let tr = integrate(&zero, &[1.0, 0.0, 3.5], (0.0, 4.0), &StepControl::default()).unwrap();
    assert_eq!(tr.last_state()[2], 3.5);
}

#[test]
fn quadrature_integrates_along_flow() {
    // integral of cos(s)^2 over [0, pi] is pi/2
    let ext = quadrature_extend(&oscillator(), |y| y[0] * y[0]);
    let tr = integrate(&ext, &[1.0, 0.0, 0.0], (0.0, std::f64::consts::PI), &StepControl::with_tol(1e-10)).unwrap();
    assert!((tr.last_state()[2] - std::f64::consts::FRAC_PI_2).abs() < 1e-8);
}

#[test]
fn finite_difference_jacobian_matches_analytic() {
    let f = AutonomousField::new(2, |y, dy| {
        dy[0] = y[0] * y[1];
        dy[1] = y[0].sin() - y[1] * y[1];
    })
    .with_jacobian(|y| DMatrix::from_row_slice(2, 2, &[y[1], y[0], y[0].cos(), -2.0 * y[1]]));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let y = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let ja = f.jacobian(&y);
        let jf = f.fd_jacobian(&y);
        assert!((&ja - &jf).norm() <= 1e-4 * (1.0 + ja.norm()));
    }
}

#[test]
fn reversed_field_runs_backwards() {
    let fwd = integrate(&exp_field(), &[1.0], (0.0, 1.0), &StepControl::with_tol(1e-10)).unwrap();
    let back = integrate(&exp_field().reversed(), fwd.last_state(), (0.0, 1.0), &StepControl::with_tol(1e-10)).unwrap();
    assert!((back.last_state()[0] - 1.0).abs() < 1e-9);
}
