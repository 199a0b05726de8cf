//! Generalized Lane–Emden equations `u'' + m/x u' = h(x, u)` with
//! `u'(0) = 0`, scalar and vector valued.
//!
//! Multiplying by `x` gives the semi-linear form `x u'' = x h − m u'`, whose
//! projected field `(x, x p, x h − m p)` on `(x, u, p)` has the stationary
//! point `(0, u0, 0)` with eigenvalues `1`, `0` and `−m`. The solution is the
//! unstable manifold, tangent there to `(N, 0, h(0, u0))` with `N = m + 1`.
//! Since `dx/ds = x`, the first component is `x_seed · e^s` along every
//! trajectory.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::geometry::{self, Branch, SemiLinearProblem};
use crate::integrator::{integrate_events, AutonomousField, Direction, EventSpec, StepControl, Trajectory};
use crate::solvers::{
    newton, shoot_scalar, Root, RobinBc, ShootMethod, ShootOptions, VariationalShooting, VectorRootProblem,
    ShootingEnd,
};

type HFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
type HuFn = Arc<dyn Fn(f64, &[f64]) -> DMatrix<f64> + Send + Sync>;

/// `u'' + m/x u' = h(x, u)` for `u ∈ R^d`.
#[derive(Clone)]
pub struct LaneEmdenSystem {
    d: usize,
    m: f64,
    h: HFn,
    h_u: Option<HuFn>,
    h_x: Option<HFn>,
    nonnegative: bool,
    stop_at_zero: bool,
}

impl std::fmt::Debug for LaneEmdenSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LaneEmdenSystem")
            .field("d", &self.d)
            .field("m", &self.m)
            .field("nonnegative", &self.nonnegative)
            .field("stop_at_zero", &self.stop_at_zero)
            .finish_non_exhaustive()
    }
}

impl LaneEmdenSystem {
    /// `shape_n` is the dimension `N = m + 1 > 1`.
    pub fn new<H>(d: usize, shape_n: f64, h: H) -> Result<Self>
    where
        H: Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        if d == 0 {
            return Err(Error::InvalidInput("system needs at least one component".into()));
        }
        if !(shape_n > 1.0) {
            return Err(Error::InvalidInput(format!("N must exceed 1, got {shape_n}")));
        }
        Ok(Self {
            d,
            m: shape_n - 1.0,
            h: Arc::new(h),
            h_u: None,
            h_x: None,
            nonnegative: false,
            stop_at_zero: false,
        })
    }

    pub fn with_h_u<J>(mut self, j: J) -> Self
    where
        J: Fn(f64, &[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.h_u = Some(Arc::new(j));
        self
    }

    pub fn with_h_x<J>(mut self, j: J) -> Self
    where
        J: Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.h_x = Some(Arc::new(j));
        self
    }

    /// Reject negative initial values (concentrations).
    pub fn nonnegative(mut self, yes: bool) -> Self {
        self.nonnegative = yes;
        self
    }

    /// Stop integration at the first zero of the first component.
    pub fn stop_at_zero(mut self, yes: bool) -> Self {
        self.stop_at_zero = yes;
        self
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn shape_n(&self) -> f64 {
        self.m + 1.0
    }

    pub fn h(&self, x: f64, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        (self.h)(x, u, &mut out);
        out
    }

    fn h_u(&self, x: f64, u: &[f64]) -> DMatrix<f64> {
        if let Some(j) = &self.h_u {
            return j(x, u);
        }
        let d = self.d;
        let mut jac = DMatrix::zeros(d, d);
        let mut w = u.to_vec();
        let mut hp = vec![0.0; d];
        let mut hm = vec![0.0; d];
        for j in 0..d {
            let step = 1e-7 * (1.0 + u[j].abs());
            w[j] = u[j] + step;
            (self.h)(x, &w, &mut hp);
            w[j] = u[j] - step;
            (self.h)(x, &w, &mut hm);
            w[j] = u[j];
            for i in 0..d {
                jac[(i, j)] = (hp[i] - hm[i]) / (2.0 * step);
            }
        }
        jac
    }

    fn h_x(&self, x: f64, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        match &self.h_x {
            Some(f) => f(x, u, &mut out),
            None => {
                let step = 1e-7 * (1.0 + x.abs());
                let a = self.h(x + step, u);
                let b = self.h(x - step, u);
                for i in 0..self.d {
                    out[i] = (a[i] - b[i]) / (2.0 * step);
                }
            }
        }
        out
    }

    /// The projected field on `(x, u, p)`, dimension `1 + 2d`.
    pub fn field(&self) -> AutonomousField {
        let d = self.d;
        let a = self.clone();
        let b = self.clone();
        AutonomousField::new(1 + 2 * d, move |y, dy| {
            let x = y[0];
            let (u, p) = y[1..].split_at(d);
            dy[0] = x;
            (a.h)(x, u, &mut dy[1 + d..]);
            for i in 0..d {
                dy[1 + i] = x * p[i];
                dy[1 + d + i] = x * dy[1 + d + i] - a.m * p[i];
            }
        })
        .with_jacobian(move |y| {
            let x = y[0];
            let (u, p) = y[1..].split_at(d);
            let n = 1 + 2 * d;
            let h = b.h(x, u);
            let hx = b.h_x(x, u);
            let hu = b.h_u(x, u);
            let mut j = DMatrix::zeros(n, n);
            j[(0, 0)] = 1.0;
            for i in 0..d {
                j[(1 + i, 0)] = p[i];
                j[(1 + i, 1 + d + i)] = x;
                j[(1 + d + i, 0)] = h[i] + x * hx[i];
                for k in 0..d {
                    j[(1 + d + i, 1 + k)] = x * hu[(i, k)];
                }
                j[(1 + d + i, 1 + d + i)] = -b.m;
            }
            j
        })
    }

    /// Tangent `(N, 0, h(0, u0))` of the unstable manifold at `(0, u0, 0)`.
    pub fn unstable_direction(&self, u0: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; 1 + 2 * self.d];
        v[0] = self.shape_n();
        v[1 + self.d..].copy_from_slice(&self.h(0.0, u0));
        v
    }

    fn check_start(&self, u0: &[f64]) -> Result<()> {
        if u0.len() != self.d {
            return Err(Error::InvalidInput(format!(
                "expected {} initial values, got {}",
                self.d,
                u0.len()
            )));
        }
        if u0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite initial value".into()));
        }
        if self.nonnegative && u0.iter().any(|&v| v < 0.0) {
            return Err(Error::DomainError(format!("negative initial concentration {u0:?}")));
        }
        Ok(())
    }

    /// The seed `(0, u0, 0) + ε v̂`.
    pub fn seed(&self, u0: &[f64], epsilon: f64) -> Result<Vec<f64>> {
        self.check_start(u0)?;
        let v = self.unstable_direction(u0);
        if v.iter().any(|c| !c.is_finite()) {
            return Err(Error::DomainError(format!("h(0, u0) is not finite at u0 = {u0:?}")));
        }
        let mut point = vec![0.0; 1 + 2 * self.d];
        point[1..=self.d].copy_from_slice(u0);
        geometry::seed_along(&point, &v, epsilon, Branch::Increasing)
    }
}

/// Scalar generalized Lane–Emden equation.
#[derive(Clone, Debug)]
pub struct LaneEmdenModel {
    sys: LaneEmdenSystem,
}

impl LaneEmdenModel {
    pub fn new<H>(shape_n: f64, h: H) -> Result<Self>
    where
        H: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Ok(Self {
            sys: LaneEmdenSystem::new(1, shape_n, move |x, u, out| out[0] = h(x, u[0]))?,
        })
    }

    pub fn with_h_u<J>(mut self, h_u: J) -> Self
    where
        J: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        self.sys = self.sys.with_h_u(move |x, u| DMatrix::from_element(1, 1, h_u(x, u[0])));
        self
    }

    pub fn nonnegative(mut self, yes: bool) -> Self {
        self.sys = self.sys.nonnegative(yes);
        self
    }

    pub fn stop_at_zero(mut self, yes: bool) -> Self {
        self.sys = self.sys.stop_at_zero(yes);
        self
    }

    /// Polytrope `h = −uⁿ`. Non-integer `n` is evaluated as `−max(u, 0)ⁿ` and
    /// integration stops at the first zero.
    pub fn polytrope(shape_n: f64, n: f64) -> Result<Self> {
        if !(n >= 0.0) || !n.is_finite() {
            return Err(Error::InvalidInput(format!("polytropic index must be non-negative, got {n}")));
        }
        if n.fract() == 0.0 && n <= i32::MAX as f64 {
            let k = n as i32;
            Ok(Self::new(shape_n, move |_, u| -u.powi(k))?
                .with_h_u(move |_, u| if k == 0 { 0.0 } else { -(k as f64) * u.powi(k - 1) }))
        } else {
            Ok(Self::new(shape_n, move |_, u| -u.max(0.0).powf(n))?
                .with_h_u(move |_, u| if u > 0.0 { -n * u.powf(n - 1.0) } else { 0.0 })
                .stop_at_zero(true))
        }
    }

    /// `h = φ² u`, whose solution is `u0 sinh(φx)/(φx)` for `N = 3`.
    pub fn linear(shape_n: f64, phi2: f64) -> Result<Self> {
        Ok(Self::new(shape_n, move |_, u| phi2 * u)?.with_h_u(move |_, _| phi2))
    }

    /// Michaelis–Menten biocatalyst `h = 9φ² u / (1 + K u)`, `N = 3`.
    pub fn biocatalyst(phi2: f64, k: f64) -> Result<Self> {
        if !(phi2 > 0.0) || !(k >= 0.0) {
            return Err(Error::InvalidInput(format!("need phi2 > 0 and K >= 0, got {phi2}, {k}")));
        }
        Ok(Self::new(3.0, move |_, u| 9.0 * phi2 * u / (1.0 + k * u))?
            .with_h_u(move |_, u| 9.0 * phi2 / ((1.0 + k * u) * (1.0 + k * u)))
            .nonnegative(true))
    }

    /// Oxygen uptake `h = a u / (u + K)`, `N = 3`.
    pub fn oxygen(a: f64, k: f64) -> Result<Self> {
        if !(a > 0.0) || !(k > 0.0) {
            return Err(Error::InvalidInput(format!("need a, K > 0, got {a}, {k}")));
        }
        Ok(Self::new(3.0, move |_, u| a * u / (u + k))?
            .with_h_u(move |_, u| a * k / ((u + k) * (u + k)))
            .nonnegative(true))
    }

    pub fn system(&self) -> &LaneEmdenSystem {
        &self.sys
    }

    pub fn m(&self) -> f64 {
        self.sys.m
    }

    pub fn h(&self, x: f64, u: f64) -> f64 {
        self.sys.h(x, &[u])[0]
    }

    pub fn field(&self) -> AutonomousField {
        self.sys.field()
    }

    /// The semi-linear form `x u'' = x h − m u'`.
    pub fn problem(&self) -> SemiLinearProblem {
        let a = self.clone();
        let b = self.clone();
        let c = self.clone();
        let m = self.m();
        SemiLinearProblem::new(|x| x, |_| 1.0, move |x, u, up| x * a.h(x, u) - m * up, move |_, _, _| -m)
            .with_f_u(move |x, u, _| x * b.sys.h_u(x, &[u])[(0, 0)])
            .with_f_x(move |x, u, _| c.h(x, u) + x * c.sys.h_x(x, &[u])[0])
    }
}

/// Oxygen-uptake parameter sets `(a, K, α)`.
pub const OXYGEN_SETS: [(f64, f64, f64); 4] = [
    (0.38065, 0.03119, 5.0),
    (0.38065, 0.03119, 0.5),
    (0.76129, 0.03119, 5.0),
    (0.38065, 0.31187, 5.0),
];

/// Three-species catalyst model
/// `u_i'' + 2/x u_i' = r_i / (1 + λ_u u + λ_v v + λ_w w)` with
/// `r = (μ_u u, μ_v v − μ_u u, μ_w w)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CatalystSystemModel {
    pub mu_u: f64,
    pub mu_v: f64,
    pub mu_w: f64,
    pub lambda_u: f64,
    pub lambda_v: f64,
    pub lambda_w: f64,
}

impl Default for CatalystSystemModel {
    fn default() -> Self {
        Self {
            mu_u: 30.0,
            mu_v: 0.01,
            mu_w: 0.01,
            lambda_u: 3.0,
            lambda_v: 0.1,
            lambda_w: 0.1,
        }
    }
}

impl CatalystSystemModel {
    pub fn system(&self) -> Result<LaneEmdenSystem> {
        let p = *self;
        if [p.mu_u, p.mu_v, p.mu_w, p.lambda_u, p.lambda_v, p.lambda_w]
            .iter()
            .any(|v| !(*v >= 0.0))
        {
            return Err(Error::InvalidInput("catalyst constants must be non-negative".into()));
        }
        let q = p;
        Ok(LaneEmdenSystem::new(3, 3.0, move |_, u, out| {
            let den = 1.0 + p.lambda_u * u[0] + p.lambda_v * u[1] + p.lambda_w * u[2];
            out[0] = p.mu_u * u[0] / den;
            out[1] = (p.mu_v * u[1] - p.mu_u * u[0]) / den;
            out[2] = p.mu_w * u[2] / den;
        })?
        .with_h_u(move |_, u| {
            let den = 1.0 + q.lambda_u * u[0] + q.lambda_v * u[1] + q.lambda_w * u[2];
            let num = [q.mu_u * u[0], q.mu_v * u[1] - q.mu_u * u[0], q.mu_w * u[2]];
            let lam = [q.lambda_u, q.lambda_v, q.lambda_w];
            let dnum = [[q.mu_u, 0.0, 0.0], [-q.mu_u, q.mu_v, 0.0], [0.0, 0.0, q.mu_w]];
            DMatrix::from_fn(3, 3, |i, k| dnum[i][k] / den - num[i] * lam[k] / (den * den))
        })
        .with_h_x(|_, _, out| out.iter_mut().for_each(|v| *v = 0.0))
        .nonnegative(true))
    }
}

/// Integration settings for the singular initial value problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IvpOptions {
    pub ctrl: StepControl,
    pub epsilon: f64,
    /// Integration stops once `x` reaches this value.
    pub x_max: f64,
}

impl Default for IvpOptions {
    fn default() -> Self {
        Self {
            ctrl: StepControl::default(),
            epsilon: 1e-3,
            x_max: 50.0,
        }
    }
}

impl IvpOptions {
    pub fn x_max(mut self, x_max: f64) -> Self {
        self.x_max = x_max;
        self
    }

    pub fn epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn ctrl(mut self, ctrl: StepControl) -> Self {
        self.ctrl = ctrl;
        self
    }
}

/// Why a parametric solution ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    XMax,
    Zero,
}

/// A solution `s ↦ (x, u, u')` on the unstable manifold. Below the seed the
/// curve is continued by the tangent segment to `(0, u0, 0)`.
#[derive(Clone, Debug)]
pub struct ParametricSolution {
    sys: LaneEmdenSystem,
    pub trajectory: Trajectory,
    pub u0: Vec<f64>,
    pub seed: Vec<f64>,
    pub epsilon: f64,
    pub ctrl: StepControl,
    pub termination: Termination,
}

impl ParametricSolution {
    pub fn d(&self) -> usize {
        self.sys.d
    }

    pub fn x_end(&self) -> f64 {
        self.trajectory.last_state()[0]
    }

    pub fn end_state(&self) -> &[f64] {
        self.trajectory.last_state()
    }

    /// State `(x, u, u')` at abscissa `x ∈ [0, x_end]`.
    pub fn eval_at_x(&self, x: f64) -> Result<Vec<f64>> {
        let x_end = self.x_end();
        if !(x >= 0.0) || x > x_end * (1.0 + 1e-12) {
            return Err(Error::OutOfRange { x, lo: 0.0, hi: x_end });
        }
        if x >= x_end {
            return Ok(self.end_state().to_vec());
        }
        let x_seed = self.seed[0];
        if x <= x_seed {
            let t = x / x_seed;
            let mut y = vec![0.0; self.seed.len()];
            y[1..=self.d()].copy_from_slice(&self.u0);
            for (yi, si) in y.iter_mut().zip(&self.seed) {
                *yi += t * (si - *yi);
            }
            y[0] = x;
            return Ok(y);
        }
        let s = self.trajectory.invert_component(0, x)?;
        let mut y = self.trajectory.eval(s)?;
        y[0] = x;
        Ok(y)
    }

    /// `(u, u')` of the first component at `x`.
    pub fn u_at(&self, x: f64) -> Result<(f64, f64)> {
        let y = self.eval_at_x(x)?;
        Ok((y[1], y[1 + self.d()]))
    }

    /// Largest `|u'' + m/x u' − h(x, u)|` over a sample of `x ∈ [x_lo, x_end]`,
    /// with `u''` taken from the derivative of the interpolant along `s`.
    pub fn ode_residual_sup(&self, x_lo: f64) -> Result<f64> {
        let d = self.d();
        let tr = &self.trajectory;
        let mut worst: f64 = 0.0;
        let mut check = |s: f64| -> Result<()> {
            let y = tr.eval(s)?;
            let x = y[0];
            if x < x_lo {
                return Ok(());
            }
            let dy = tr.eval_derivative(s)?;
            let h = self.sys.h(x, &y[1..=d]);
            for i in 0..d {
                let upp = dy[1 + d + i] / dy[0];
                let r = upp + self.sys.m / x * y[1 + d + i] - h[i];
                worst = worst.max(r.abs());
            }
            Ok(())
        };
        for k in 0..tr.steps() {
            let (a, b) = (tr.node_s(k), tr.node_s(k + 1));
            for frac in [0.0, 0.25, 0.5, 0.75] {
                check(a + frac * (b - a))?;
            }
        }
        check(tr.s_end())?;
        Ok(worst)
    }
}

fn effective_ctrl(ctrl: &StepControl, seed: &[f64], u0: &[f64]) -> StepControl {
    // the components start at the size of the seed (x, u') or of u0; keep the
    // absolute tolerance below that scale so they are resolved relatively
    let scale = u0
        .iter()
        .map(|v| v.abs())
        .filter(|v| *v > 0.0)
        .fold(seed[0].abs(), f64::min);
    let mut c = *ctrl;
    c.abs_tol = c.abs_tol.min(c.rel_tol * scale).max(f64::MIN_POSITIVE);
    c
}

/// Solve `u'' + m/x u' = h`, `u(0) = u0`, `u'(0) = 0` for a system.
pub fn le_system_ivp(sys: &LaneEmdenSystem, u0: &[f64], opts: &IvpOptions) -> Result<ParametricSolution> {
    solve_ivp(sys, u0, opts, sys.stop_at_zero)
}

fn solve_ivp(sys: &LaneEmdenSystem, u0: &[f64], opts: &IvpOptions, stop_at_zero: bool) -> Result<ParametricSolution> {
    solve_ivp_ctrl(sys, u0, opts, stop_at_zero, None)
}

fn solve_ivp_ctrl(
    sys: &LaneEmdenSystem,
    u0: &[f64],
    opts: &IvpOptions,
    stop_at_zero: bool,
    fixed_ctrl: Option<StepControl>,
) -> Result<ParametricSolution> {
    if !(opts.x_max > 0.0) {
        return Err(Error::InvalidInput(format!("x_max must be positive, got {}", opts.x_max)));
    }
    let seed = sys.seed(u0, opts.epsilon)?;
    if seed[0] >= opts.x_max {
        return Err(Error::InvalidInput(format!(
            "seed abscissa {} is beyond x_max = {}",
            seed[0], opts.x_max
        )));
    }
    let ctrl = fixed_ctrl.unwrap_or_else(|| effective_ctrl(&opts.ctrl, &seed, u0));
    let x_max = opts.x_max;
    let s_max = (x_max / seed[0]).ln();
    let mut events = vec![EventSpec::new(move |y| y[0] - x_max).direction(Direction::Rising)];
    if stop_at_zero {
        events.push(EventSpec::new(|y| y[1]).direction(Direction::Falling));
    }
    // the exponential fiber reaches x_max at s_max; allow slack for the
    // integration error in x
    let run = integrate_events(&sys.field(), &seed, (0.0, s_max * 1.01 + 1.0), &ctrl, &events)?;
    let termination = match run.terminal_hit() {
        Some(hit) if hit.index == 1 => Termination::Zero,
        Some(_) => Termination::XMax,
        None => return Err(Error::EventNotFound { s_max }),
    };
    Ok(ParametricSolution {
        sys: sys.clone(),
        trajectory: run.trajectory,
        u0: u0.to_vec(),
        seed,
        epsilon: opts.epsilon,
        ctrl,
        termination,
    })
}

/// Scalar initial value problem on `[0, x_max]` (or up to the first zero for
/// models that stop there).
pub fn le_ivp(model: &LaneEmdenModel, u0: f64, opts: &IvpOptions) -> Result<ParametricSolution> {
    le_system_ivp(&model.sys, &[u0], opts)
}

/// First zero `ξ₁` of `u`, the slope there and the density ratio
/// `r = −ξ₁ / (3 u'(ξ₁))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstZero {
    pub xi1: f64,
    pub du: f64,
    pub ratio: f64,
}

pub fn first_zero(model: &LaneEmdenModel, u0: f64, opts: &IvpOptions) -> Result<FirstZero> {
    let sol = solve_ivp(&model.sys, &[u0], opts, true)?;
    if sol.termination != Termination::Zero {
        return Err(Error::EventNotFound {
            s_max: sol.trajectory.s_end(),
        });
    }
    let y = sol.end_state();
    let (xi1, du) = (y[0], y[2]);
    Ok(FirstZero {
        xi1,
        du,
        ratio: -xi1 / (3.0 * du),
    })
}

/// Shooting settings for two-point problems on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BvpOptions {
    pub ivp: IvpOptions,
    pub shoot: ShootOptions,
}

impl Default for BvpOptions {
    fn default() -> Self {
        Self {
            ivp: IvpOptions::default().x_max(1.0),
            shoot: ShootOptions::default(),
        }
    }
}

impl BvpOptions {
    pub fn method(mut self, method: ShootMethod) -> Self {
        self.shoot.method = method;
        self
    }

    pub fn tol(mut self, tol: f64) -> Self {
        self.shoot.tol = tol;
        self
    }

    pub fn bracket(mut self, lo: f64, hi: f64) -> Self {
        self.shoot.bracket = Some((lo, hi));
        self
    }

    pub fn ctrl(mut self, ctrl: StepControl) -> Self {
        self.ivp.ctrl = ctrl;
        self
    }
}

/// A solved two-point problem.
#[derive(Debug, Clone)]
pub struct BvpSolution {
    pub solution: ParametricSolution,
    pub root: Root,
    /// `α u(1) + β u'(1) − γ` on the returned solution.
    pub residual: f64,
}

/// `u'(0) = 0`, `α u(1) + β u'(1) = γ` by shooting on `u(0)`.
pub fn le_bvp(model: &LaneEmdenModel, bc: RobinBc, opts: &BvpOptions) -> Result<BvpSolution> {
    let ivp = opts.ivp.x_max(1.0);
    let end = |u0: f64| -> Result<(f64, f64)> {
        let sol = solve_ivp(&model.sys, &[u0], &ivp, false)?;
        let y = sol.end_state();
        Ok((y[1], y[2]))
    };
    let root = shoot_scalar(end, bc, &opts.shoot)?;
    let solution = solve_ivp(&model.sys, &[root.x], &ivp, false)?;
    let y = solution.end_state();
    let residual = bc.residual(y[1], y[2]);
    Ok(BvpSolution { solution, root, residual })
}

/// `η = (K + 1)/(3φ²) u'(1)` for the Dirichlet problem `u(1) = 1`.
pub fn effectiveness_factor(phi2: f64, k: f64, opts: &BvpOptions) -> Result<f64> {
    let model = LaneEmdenModel::biocatalyst(phi2, k)?;
    let mut opts = *opts;
    if opts.shoot.bracket.is_none() {
        opts.shoot.bracket = Some((0.0, 1.0));
    }
    let sol = le_bvp(&model, RobinBc::DIRICHLET_ONE, &opts)?;
    Ok((k + 1.0) / (3.0 * phi2) * sol.solution.end_state()[2])
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectivenessCell {
    pub phi2: f64,
    pub k: f64,
    /// NaN when the cell failed.
    pub eta: f64,
    pub error: Option<String>,
}

/// `η` over the grid `phi2 × k`, row-major with `phi2` the slow index.
pub fn effectiveness_surface(
    phi2_grid: &[f64],
    k_grid: &[f64],
    opts: &BvpOptions,
    exec: Execution,
) -> Result<Vec<EffectivenessCell>> {
    if phi2_grid.is_empty() || k_grid.is_empty() {
        return Err(Error::InvalidInput("grids must be nonempty".into()));
    }
    let cells: Vec<(f64, f64)> = phi2_grid
        .iter()
        .flat_map(|&p| k_grid.iter().map(move |&k| (p, k)))
        .collect();
    Ok(exec.map(&cells, |&(phi2, k)| match effectiveness_factor(phi2, k, opts) {
        Ok(eta) => EffectivenessCell { phi2, k, eta, error: None },
        Err(e) => EffectivenessCell {
            phi2,
            k,
            eta: f64::NAN,
            error: Some(e.to_string()),
        },
    }))
}

/// Options for the Newton shooting of systems.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemBvpOptions {
    pub ivp: IvpOptions,
    pub tol: f64,
    pub max_iter: usize,
    pub u0_guess: Option<Vec<f64>>,
}

impl Default for SystemBvpOptions {
    fn default() -> Self {
        Self {
            ivp: IvpOptions::default().x_max(1.0),
            tol: 1e-8,
            max_iter: 50,
            u0_guess: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SystemBvpSolution {
    pub solution: ParametricSolution,
    pub u0: Vec<f64>,
    /// `‖u(1) − 1‖∞`.
    pub residual: f64,
    pub iterations: usize,
}

// The shooting runs use one tolerance for every iterate; the seed abscissa is
// of order epsilon, so the absolute tolerance is scaled down with it.
fn system_ctrl(ctrl: &StepControl) -> StepControl {
    let mut c = *ctrl;
    c.abs_tol = c.abs_tol.min(c.rel_tol * 1e-4);
    c
}

/// Shooting map for `u(1) = (1, …, 1)` of a Lane–Emden system, unknowns the
/// centre values `u(0)`.
pub fn system_shooting(sys: &LaneEmdenSystem, ivp: &IvpOptions) -> VariationalShooting {
    let d = sys.d;
    let s = sys.clone();
    let epsilon = ivp.epsilon;
    VariationalShooting::new(
        sys.field(),
        move |p| s.seed(p, epsilon),
        ShootingEnd::Event(EventSpec::new(|y| y[0] - 1.0).direction(Direction::Rising), 1e3),
        move |y| y[1..=d].iter().map(|v| v - 1.0).collect(),
        system_ctrl(&ivp.ctrl),
    )
    .with_boundary_jacobian(move |_| {
        let mut j = DMatrix::zeros(d, 1 + 2 * d);
        for i in 0..d {
            j[(i, 1 + i)] = 1.0;
        }
        j
    })
}

/// Newton shooting with variational Jacobian for `u'(0) = 0`, `u(1) = 1`.
pub fn le_system_bvp(model: &CatalystSystemModel, opts: &SystemBvpOptions) -> Result<SystemBvpSolution> {
    system_bvp(&model.system()?, opts)
}

pub fn system_bvp(sys: &LaneEmdenSystem, opts: &SystemBvpOptions) -> Result<SystemBvpSolution> {
    let d = sys.d;
    let ivp = opts.ivp.x_max(1.0);
    let shoot = system_shooting(sys, &ivp);
    let residual = |p: &DVector<f64>| shoot.residual(p.as_slice());
    let jacobian = |p: &DVector<f64>| Ok(shoot.residual_and_jacobian(p.as_slice())?.1);
    let x0 = DVector::from_vec(opts.u0_guess.clone().unwrap_or_else(|| vec![0.5; d]));
    let root = newton(
        &VectorRootProblem::new(&residual, &jacobian, x0)
            .tol(opts.tol)
            .max_iter(opts.max_iter),
    )?;
    let u0 = root.x.as_slice().to_vec();
    let solution = solve_ivp_ctrl(sys, &u0, &ivp, false, Some(system_ctrl(&ivp.ctrl)))?;
    let residual = solution.end_state()[1..=d]
        .iter()
        .map(|v| (v - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(SystemBvpSolution {
        solution,
        u0,
        residual,
        iterations: root.iterations,
    })
}

#[cfg(test)]
mod tests;
