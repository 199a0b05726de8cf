use super::*;
use crate::geometry::{classify_semilinear, ImpasseKind};
use crate::solvers::ShootMethod;

fn sup_error(sol: &ParametricSolution, exact: impl Fn(f64) -> f64, x_hi: f64) -> f64 {
    (0..=400)
        .map(|i| {
            let x = x_hi * i as f64 / 400.0;
            (sol.u_at(x).unwrap().0 - exact(x)).abs()
        })
        .fold(0.0, f64::max)
}

fn bessel_j0(x: f64) -> f64 {
    let q = -0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / ((k * k) as f64);
        sum += term;
        if term.abs() < 1e-17 {
            break;
        }
    }
    sum
}

#[test]
fn polytrope_closed_forms() {
    let opts = IvpOptions::default();
    let n0 = le_ivp(&LaneEmdenModel::polytrope(3.0, 0.0).unwrap(), 1.0, &opts.x_max(6f64.sqrt())).unwrap();
    assert!(sup_error(&n0, |x| 1.0 - x * x / 6.0, 6f64.sqrt()) <= 1e-5);

    let n1 = le_ivp(&LaneEmdenModel::polytrope(3.0, 1.0).unwrap(), 1.0, &opts.x_max(std::f64::consts::PI)).unwrap();
    let sinc = |x: f64| if x == 0.0 { 1.0 } else { x.sin() / x };
    assert!(sup_error(&n1, sinc, std::f64::consts::PI) <= 1e-5);

    let n5 = le_ivp(&LaneEmdenModel::polytrope(3.0, 5.0).unwrap(), 1.0, &opts.x_max(10.0)).unwrap();
    assert!(sup_error(&n5, |x| (1.0 + x * x / 3.0).powf(-0.5), 10.0) <= 1e-5);
}

#[test]
fn cylinder_closed_forms() {
    let opts = IvpOptions::default().x_max(2.0);
    let n0 = le_ivp(&LaneEmdenModel::polytrope(2.0, 0.0).unwrap(), 1.0, &opts).unwrap();
    assert!(sup_error(&n0, |x| 1.0 - x * x / 4.0, 2.0) <= 1e-5);
    let opts = IvpOptions::default().x_max(5.0);
    let n1 = le_ivp(&LaneEmdenModel::polytrope(2.0, 1.0).unwrap(), 1.0, &opts).unwrap();
    assert!(sup_error(&n1, bessel_j0, 5.0) <= 1e-5);
}

#[test]
fn cylinder_n2_self_convergence() {
    let model = LaneEmdenModel::polytrope(2.0, 2.0).unwrap();
    let zeros: Vec<f64> = [1e-6, 1e-8, 1e-10]
        .iter()
        .map(|&tol| {
            let ctrl = StepControl::default().tolerances(tol, tol * 0.1);
            first_zero(&model, 1.0, &IvpOptions::default().ctrl(ctrl)).unwrap().xi1
        })
        .collect();
    let d1 = (zeros[0] - zeros[2]).abs();
    let d2 = (zeros[1] - zeros[2]).abs();
    assert!(d2 <= d1 + 1e-12, "{zeros:?}");
    assert!(d1 <= 1e-5);
}

#[test]
fn first_zero_exact_cases() {
    let opts = IvpOptions::default();
    let z = first_zero(&LaneEmdenModel::polytrope(3.0, 0.0).unwrap(), 1.0, &opts).unwrap();
    assert!((z.xi1 - 6f64.sqrt()).abs() / 6f64.sqrt() <= 1e-5);
    assert!((z.du + 6f64.sqrt() / 3.0).abs() <= 1e-5);
    assert!((z.ratio - 1.0).abs() <= 1e-5);

    let z = first_zero(&LaneEmdenModel::polytrope(3.0, 1.0).unwrap(), 1.0, &opts).unwrap();
    let pi = std::f64::consts::PI;
    assert!((z.xi1 - pi).abs() / pi <= 1e-5);
    assert!((z.ratio - pi * pi / 3.0).abs() / (pi * pi / 3.0) <= 1e-5);

    let err = first_zero(&LaneEmdenModel::polytrope(3.0, 5.0).unwrap(), 1.0, &opts).unwrap_err();
    assert!(matches!(err, Error::EventNotFound { .. }));
}

#[test]
fn fractional_index_stops_at_zero() {
    let model = LaneEmdenModel::polytrope(3.0, 1.5).unwrap();
    let sol = le_ivp(&model, 1.0, &IvpOptions::default()).unwrap();
    assert_eq!(sol.termination, Termination::Zero);
    // tabulated first zero of the n = 3/2 polytrope
    assert!((sol.x_end() - 3.65375).abs() < 1e-4, "{}", sol.x_end());
    assert!(sol.end_state()[1].abs() < 1e-10);
}

#[test]
fn epsilon_insensitivity_of_first_zero() {
    let model = LaneEmdenModel::polytrope(3.0, 1.0).unwrap();
    let a = first_zero(&model, 1.0, &IvpOptions::default().epsilon(1e-3)).unwrap();
    let b = first_zero(&model, 1.0, &IvpOptions::default().epsilon(1e-4)).unwrap();
    assert!((a.xi1 - b.xi1).abs() <= 1e-7, "{:e}", a.xi1 - b.xi1);
}

#[test]
fn epsilon_shift_follows_the_line_of_equilibria() {
    // The linear seed misses u(x_seed) = 1 - x_seed^2/6 by x_seed^2/6 along the
    // centre direction, which is not damped: for n = 0 the run lands on the
    // solution with u0 = 1 + x_seed^2/6 and xi1 = sqrt(6 u0).
    let model = LaneEmdenModel::polytrope(3.0, 0.0).unwrap();
    let ctrl = StepControl::with_tol(1e-10);
    let xi = |eps: f64| first_zero(&model, 1.0, &IvpOptions::default().epsilon(eps).ctrl(ctrl)).unwrap().xi1;
    let x_seed = |eps: f64| eps * 3.0 / 10f64.sqrt();
    let predicted = 6f64.sqrt() * (x_seed(1e-3).powi(2) - x_seed(1e-4).powi(2)) / 12.0;
    let observed = xi(1e-3) - xi(1e-4);
    assert!((observed - predicted).abs() <= 0.05 * predicted, "{observed:e} vs {predicted:e}");
}

#[test]
fn seed_direction_is_the_unstable_eigenvector() {
    let model = LaneEmdenModel::biocatalyst(2.0, 0.5).unwrap();
    let u0 = 0.4;
    let a = classify_semilinear(&model.problem(), [0.0, u0, 0.0]);
    assert_eq!(a.kind, ImpasseKind::ProperImpasse);
    assert!(a.unique_solution);
    let v = a.unstable_eigenvector().unwrap();
    let w = model.system().unstable_direction(&[u0]);
    let wn = (w[0] * w[0] + w[2] * w[2]).sqrt();
    for i in 0..3 {
        assert!((v[i] - w[i] / wn).abs() < 1e-10);
    }
    let seed = model.system().seed(&[u0], 1e-3).unwrap();
    let want = geometry::unstable_seed(&a, 1e-3).unwrap();
    for i in 0..3 {
        assert!((seed[i] - want[i]).abs() < 1e-12);
    }
}

#[test]
fn slope_vanishes_at_the_centre() {
    let model = LaneEmdenModel::polytrope(3.0, 1.0).unwrap();
    let sol = le_ivp(&model, 1.0, &IvpOptions::default().x_max(1.0)).unwrap();
    let (u, up) = sol.u_at(0.0).unwrap();
    assert_eq!((u, up), (1.0, 0.0));
    let (_, up) = sol.u_at(sol.seed[0]).unwrap();
    assert!(up.abs() <= sol.epsilon);
    assert!(matches!(sol.u_at(1.5), Err(Error::OutOfRange { .. })));
}

#[test]
fn ode_residual_small() {
    let cases = [
        (LaneEmdenModel::polytrope(3.0, 1.0).unwrap(), 1.0, 3.0),
        (LaneEmdenModel::polytrope(3.0, 5.0).unwrap(), 1.0, 10.0),
        (LaneEmdenModel::biocatalyst(10.0, 1.0).unwrap(), 0.2, 1.0),
        (LaneEmdenModel::oxygen(0.76129, 0.03119).unwrap(), 0.5, 1.0),
    ];
    for (model, u0, x_max) in cases {
        let sol = le_ivp(&model, u0, &IvpOptions::default().x_max(x_max)).unwrap();
        let r = sol.ode_residual_sup(0.05).unwrap();
        assert!(r <= 1e-4, "residual {r:e}");
    }
}

#[test]
fn negative_concentration_rejected() {
    let model = LaneEmdenModel::biocatalyst(1.0, 1.0).unwrap();
    assert!(matches!(
        le_ivp(&model, -0.1, &IvpOptions::default()),
        Err(Error::DomainError(_))
    ));
}

#[test]
fn bvp_trivial_reaction() {
    let model = LaneEmdenModel::new(3.0, |_, _| 0.0).unwrap();
    let sol = le_bvp(&model, RobinBc::DIRICHLET_ONE, &BvpOptions::default()).unwrap();
    assert!((sol.root.x - 1.0).abs() <= 1e-7);
    assert!(sol.residual.abs() <= 1e-7);
}

#[test]
fn bvp_linear_sinh() {
    let model = LaneEmdenModel::linear(3.0, 1.0).unwrap();
    let sol = le_bvp(&model, RobinBc::DIRICHLET_ONE, &BvpOptions::default().tol(1e-9)).unwrap();
    assert!((sol.root.x - 1.0 / 1f64.sinh()).abs() <= 1e-6);
    for (method, bracket) in [(ShootMethod::Steffensen, None), (ShootMethod::Bisection, Some((0.0, 1.0)))] {
        let mut opts = BvpOptions::default().method(method).tol(1e-9);
        opts.shoot.bracket = bracket;
        let sol = le_bvp(&model, RobinBc::DIRICHLET_ONE, &opts).unwrap();
        assert!((sol.root.x - 1.0 / 1f64.sinh()).abs() <= 1e-6);
    }
}

fn oxygen_bvp(set: usize, method: ShootMethod, tol: f64, ctrl: StepControl) -> BvpSolution {
    let (a, k, alpha) = OXYGEN_SETS[set];
    let model = LaneEmdenModel::oxygen(a, k).unwrap();
    let bc = RobinBc::new(alpha, 1.0, alpha).unwrap();
    le_bvp(&model, bc, &BvpOptions::default().method(method).tol(tol).bracket(0.0, 1.0).ctrl(ctrl)).unwrap()
}

#[test]
fn oxygen_sets_converge_and_methods_agree() {
    for set in 0..4 {
        let s = oxygen_bvp(set, ShootMethod::Steffensen, 1e-7, StepControl::default());
        assert!(s.residual.abs() <= 1e-7, "set {set}: {:e}", s.residual);
        let b = oxygen_bvp(set, ShootMethod::Bisection, 1e-7, StepControl::default());
        assert!(b.residual.abs() <= 1e-7);
        assert!((s.root.x - b.root.x).abs() <= 1e-6, "set {set}");
    }
}

#[test]
fn oxygen_profile_stable_under_tightening() {
    let a = oxygen_bvp(2, ShootMethod::Steffensen, 1e-7, StepControl::default());
    let b = oxygen_bvp(2, ShootMethod::Steffensen, 1e-9, StepControl::with_tol(1e-9));
    for i in 0..=10 {
        let x = i as f64 / 10.0;
        let ua = a.solution.u_at(x).unwrap().0;
        let ub = b.solution.u_at(x).unwrap().0;
        assert!((ua - ub).abs() <= 5e-7 * ub.abs().max(1e-3), "x = {x}: {ua} vs {ub}");
    }
}

#[test]
fn effectiveness_small_modulus() {
    let eta = effectiveness_factor(1e-3, 1.0, &BvpOptions::default()).unwrap();
    assert!((0.999..=1.0005).contains(&eta), "{eta}");
}

#[test]
fn effectiveness_against_bisection_oracle() {
    let eta = effectiveness_factor(10.0, 1.0, &BvpOptions::default()).unwrap();
    assert!(eta > 0.0 && eta < 1.0);
    let fine = BvpOptions::default()
        .method(ShootMethod::Bisection)
        .bracket(1e-12, 1.0)
        .tol(1e-11)
        .ctrl(StepControl::with_tol(1e-10));
    let oracle = effectiveness_factor(10.0, 1.0, &fine).unwrap();
    assert!((eta - oracle).abs() <= 1e-4, "{eta} vs {oracle}");
}

#[test]
fn effectiveness_decreases_with_modulus() {
    let opts = BvpOptions::default();
    assert!(effectiveness_factor(20.0, 1.0, &opts).unwrap() < effectiveness_factor(5.0, 1.0, &opts).unwrap());
}

#[test]
fn surface_single_cell_and_modes() {
    let opts = BvpOptions::default();
    let one = effectiveness_surface(&[3.0], &[2.0], &opts, Execution::Sequential).unwrap();
    assert_eq!(one.len(), 1);
    assert_eq!(one[0].eta, effectiveness_factor(3.0, 2.0, &opts).unwrap());
    let grid = [0.5, 5.0, 40.0];
    let a = effectiveness_surface(&grid, &grid, &opts, Execution::Sequential).unwrap();
    let b = effectiveness_surface(&grid, &grid, &opts, Execution::Parallel).unwrap();
    assert_eq!(a, b);
    assert_eq!((a[1].phi2, a[1].k), (0.5, 5.0));
    assert!(effectiveness_surface(&[], &grid, &opts, Execution::Sequential).is_err());
}

#[test]
fn catalyst_zero_reaction_is_constant() {
    let model = CatalystSystemModel {
        mu_u: 0.0,
        mu_v: 0.0,
        mu_w: 0.0,
        ..CatalystSystemModel::default()
    };
    let sol = le_system_bvp(&model, &SystemBvpOptions::default()).unwrap();
    for u in &sol.u0 {
        assert!((u - 1.0).abs() < 1e-8);
    }
}

#[test]
fn catalyst_paper_parameters() {
    let sol = le_system_bvp(&CatalystSystemModel::default(), &SystemBvpOptions::default()).unwrap();
    assert!(sol.residual <= 1e-6, "{:e}", sol.residual);
    let mut prev: Option<Vec<f64>> = None;
    for i in 0..=50 {
        let y = sol.solution.eval_at_x(i as f64 / 50.0).unwrap();
        if let Some(p) = &prev {
            assert!(y[1] >= p[1] - 1e-12 && y[3] >= p[3] - 1e-12, "x = {}", y[0]);
        }
        prev = Some(y);
    }
    assert!(sol.solution.ode_residual_sup(0.05).unwrap() <= 1e-4);
}

#[test]
fn catalyst_variational_jacobian_matches_differences() {
    let sys = CatalystSystemModel::default().system().unwrap();
    let shoot = system_shooting(&sys, &IvpOptions::default().x_max(1.0));
    let p = [0.3, 1.2, 0.9];
    let (_, j) = shoot.residual_and_jacobian(&p).unwrap();
    let jf = shoot.fd_residual_jacobian(&p, 1e-6).unwrap();
    let rel = (&j - &jf).amax() / jf.amax();
    assert!(rel <= 1e-4, "{rel:e}\n{j}\n{jf}");
}

#[test]
fn system_field_jacobian_matches_differences() {
    let f = CatalystSystemModel::default().system().unwrap().field();
    let y = [0.3, 0.5, 1.1, 0.9, -0.2, 0.4, 0.1];
    let ja = f.jacobian(&y);
    let jf = f.fd_jacobian(&y);
    assert!((&ja - &jf).norm() <= 1e-4 * (1.0 + ja.norm()));
}

