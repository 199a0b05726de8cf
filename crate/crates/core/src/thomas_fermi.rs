//! The Thomas–Fermi equation `u'' = u^{3/2} / √x`, `u(0) = 1`, through the
//! Majorana transformation
//!
//! ```text
//! t = 144^{-1/6} x^{1/2} u^{1/6},    v = −(16/3)^{1/3} u^{-4/3} u'.
//! ```
//!
//! In `(t, v)` the equation becomes the planar field
//! `(t²v − 1, 8(1 − t v²))` with a saddle at `(1, 1)`, the image of the
//! singular solution `144/x³`. The solution decaying at infinity is the
//! unstable manifold of the saddle; it meets `t = 0` at `v(s₀)` and the
//! critical slope is `ω = −(3/16)^{1/3} v(s₀)`.
//!
//! The way back to `(x, u, u')` goes through the quadrature `dI/ds = −t v`,
//! normalised so that `I(s₀) = 0`:
//!
//! ```text
//! x = 144^{1/3} t² e^{2I},   u = e^{−6I},   u' = −3 · 144^{−1/3} v e^{−8I}.
//! ```

use std::sync::OnceLock;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::geometry::{self, Branch};
use crate::integrator::{integrate_events, quadrature_extend, AutonomousField, Direction, EventSpec, StepControl, Trajectory};

/// `u` below this value counts as the zero of an ion-type solution.
pub const ZERO_THRESHOLD: f64 = 1e-8;

/// Default distance of the seed from the saddle.
pub const DEFAULT_EPSILON: f64 = 1e-3;

/// Seed distance used once values beyond `x = 200` are requested.
pub const FAR_EPSILON: f64 = 1e-4;

struct Consts {
    cbrt144: f64,
    slope: f64,
    sqrt73: f64,
}

fn consts() -> &'static Consts {
    static C: OnceLock<Consts> = OnceLock::new();
    C.get_or_init(|| Consts {
        cbrt144: 144f64.cbrt(),
        slope: (3.0f64 / 16.0).cbrt(),
        sqrt73: 73f64.sqrt(),
    })
}

/// `(3/16)^{1/3}`, the factor in `ω = −(3/16)^{1/3} v(0)`.
pub fn slope_factor() -> f64 {
    consts().slope
}

/// `u'(0)` of the solution whose Majorana curve starts at `(0, v0)`.
pub fn slope_from_v(v0: f64) -> f64 {
    -slope_factor() * v0
}

pub fn v_from_slope(omega: f64) -> f64 {
    -omega / slope_factor()
}

/// The reduced field `(t, v) ↦ (t²v − 1, 8(1 − t v²))` with its Jacobian.
pub fn reduced_field() -> AutonomousField {
    AutonomousField::new(2, |y, dy| {
        let (t, v) = (y[0], y[1]);
        dy[0] = t * t * v - 1.0;
        dy[1] = 8.0 * (1.0 - t * v * v);
    })
    .with_jacobian(|y| {
        let (t, v) = (y[0], y[1]);
        DMatrix::from_row_slice(2, 2, &[2.0 * t * v, t * t, -8.0 * v * v, -16.0 * t * v])
    })
}

/// `(x, u, u') ↦ (t, v)`.
pub fn majorana_forward(x: f64, u: f64, uprime: f64) -> Result<(f64, f64)> {
    if !(u > 0.0) {
        return Err(Error::DomainError(format!("u must be positive, got {u}")));
    }
    if !(x >= 0.0) {
        return Err(Error::DomainError(format!("x must be non-negative, got {x}")));
    }
    let t = (x * x * x * u / 144.0).powf(1.0 / 6.0);
    let v = -(16.0f64 / 3.0).cbrt() * uprime / u.powf(4.0 / 3.0);
    Ok((t, v))
}

/// `(t, v, I) ↦ (x, u, u')` with `I` already normalised.
pub fn majorana_inverse(t: f64, v: f64, i: f64) -> (f64, f64, f64) {
    let c = consts();
    let x = c.cbrt144 * t * t * (2.0 * i).exp();
    let u = (-6.0 * i).exp();
    let up = -3.0 / c.cbrt144 * v * (-8.0 * i).exp();
    (x, u, up)
}

/// Unstable eigenvalue `−7 + √73` of the saddle.
pub fn saddle_unstable_eigenvalue() -> f64 {
    -7.0 + consts().sqrt73
}

/// Unit unstable eigenvector at `(1, 1)`, oriented towards `t < 1`.
pub fn saddle_unstable_direction() -> Result<Vec<f64>> {
    let j = reduced_field().jacobian(&[1.0, 1.0]);
    let (_, v) = geometry::unstable_eigenpair(&j)?;
    geometry::seed_along(&[0.0, 0.0], v.as_slice(), 1.0, Branch::Decreasing)
}

/// Seed `(1, 1) + ε ŵ` on the branch heading to `t = 0`.
pub fn saddle_seed(epsilon: f64) -> Result<Vec<f64>> {
    let j = geometry::stationary_jacobian(&reduced_field(), &[1.0, 1.0])?;
    let (_, v) = geometry::unstable_eigenpair(&j)?;
    geometry::seed_along(&[1.0, 1.0], v.as_slice(), epsilon, Branch::Decreasing)
}

// ---------------------------------------------------------------------------
// Majorana series

/// Coefficients of `v(t) = Σ a_i (1 − t)^i` on the unstable manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct MajoranaSeries {
    pub coeffs: Vec<f64>,
}

impl MajoranaSeries {
    /// Highest index `N`.
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// `v(t)` of the truncated series.
    pub fn eval(&self, t: f64) -> f64 {
        let z = 1.0 - t;
        self.coeffs.iter().rev().fold(0.0, |acc, a| acc * z + a)
    }

    /// `−(3/16)^{1/3} Σ_{i ≤ N} a_i`.
    pub fn slope(&self) -> f64 {
        slope_from_v(self.coeffs.iter().sum())
    }
}

/// `a_0 … a_N`. Substituting the series into `(1 − t²v) v' = 8(t v² − 1)`
/// and matching powers of `1 − t` gives `a_0 = 1`, `a_1 = 9 − √73` (the root
/// with `v` on the unstable branch) and for `i ≥ 2`
///
/// ```text
/// (2(i+8) − (i+1) a_1) a_i = (i+6) a_1 a_{i−2} + ((i+7) − 2(i+3) a_1) a_{i−1}
///     + Σ_{j=1}^{i−2} ((j+1) a_{j+1} − 2(j+4) a_j + (j+7) a_{j−1}) a_{i−j}.
/// ```
pub fn majorana_coeffs(n: usize) -> Result<MajoranaSeries> {
    if n < 1 {
        return Err(Error::InvalidInput("series needs at least two terms".into()));
    }
    let mut a = Vec::with_capacity(n + 1);
    a.push(1.0);
    let a1 = 9.0 - consts().sqrt73;
    a.push(a1);
    for i in 2..=n {
        let fi = i as f64;
        let mut acc = (fi + 6.0) * a1 * a[i - 2] + ((fi + 7.0) - 2.0 * (fi + 3.0) * a1) * a[i - 1];
        for j in 1..=i - 2 {
            let fj = j as f64;
            acc += ((fj + 1.0) * a[j + 1] - 2.0 * (fj + 4.0) * a[j] + (fj + 7.0) * a[j - 1]) * a[i - j];
        }
        a.push(acc / (2.0 * (fi + 8.0) - (fi + 1.0) * a1));
    }
    Ok(MajoranaSeries { coeffs: a })
}

/// Slope from the partial sum `a_0 + … + a_N`.
pub fn slope_from_series(n: usize) -> f64 {
    if n == 0 {
        return slope_from_v(1.0);
    }
    majorana_coeffs(n).map(|s| s.slope()).unwrap_or(f64::NAN)
}

// ---------------------------------------------------------------------------
// critical branch

/// Step control for a requested accuracy `tol` on the slope.
pub fn tol_control(tol: f64) -> StepControl {
    StepControl {
        h_max: 0.5,
        ..StepControl::with_tol(tol)
    }
}

/// Settings for integrating the unstable manifold of the saddle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalOptions {
    pub ctrl: StepControl,
    pub epsilon: f64,
    pub s_max: f64,
}

impl Default for CriticalOptions {
    fn default() -> Self {
        Self {
            ctrl: StepControl::default(),
            epsilon: DEFAULT_EPSILON,
            s_max: 200.0,
        }
    }
}

impl CriticalOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            ctrl: tol_control(tol),
            ..Self::default()
        }
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

/// Which curve of the `(t, v)` plane a solution follows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TfBranch {
    Critical,
    SlopeFamily { v0: f64 },
}

/// Why a Thomas–Fermi solution ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TfTermination {
    /// Critical branch reached `t = 0`, i.e. `x = 0`.
    Origin,
    /// `u` dropped to [`ZERO_THRESHOLD`].
    Zero,
    /// `x u' − u = 0`.
    Crystal,
    /// `dt/ds = 0`, the curve touches the nullcline `t²v = 1`.
    Turning,
    XMax,
    /// `u` exceeded `1 / ZERO_THRESHOLD`.
    Blowup,
    /// None of the above before the end of the parameter span.
    SpanEnd,
}

/// A Thomas–Fermi solution as a trajectory in `(t, v, I)` together with the
/// shift that normalises `I`, giving `(x, u, u')` parametrically.
#[derive(Debug, Clone)]
pub struct TFSolution {
    pub trajectory: Trajectory,
    pub branch: TfBranch,
    pub termination: TfTermination,
    /// Subtracted from the stored `I` before back-transformation.
    pub i_shift: f64,
}

/// A point of the solution in both coordinate systems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TfPoint {
    pub s: f64,
    pub t: f64,
    pub v: f64,
    pub x: f64,
    pub u: f64,
    pub uprime: f64,
}

impl TFSolution {
    fn point_from(&self, s: f64, y: &[f64]) -> TfPoint {
        let (x, u, uprime) = majorana_inverse(y[0], y[1], y[2] - self.i_shift);
        TfPoint {
            s,
            t: y[0],
            v: y[1],
            x,
            u,
            uprime,
        }
    }

    pub fn point_at(&self, s: f64) -> Result<TfPoint> {
        let y = self.trajectory.eval(s)?;
        Ok(self.point_from(s, &y))
    }

    /// Points at the integration nodes, in order of increasing `x`.
    pub fn nodes(&self) -> Vec<TfPoint> {
        let tr = &self.trajectory;
        let mut pts: Vec<TfPoint> = (0..tr.len())
            .map(|k| self.point_from(tr.node_s(k), tr.node_state(k)))
            .collect();
        if self.x_decreasing() {
            pts.reverse();
        }
        pts
    }

    fn x_decreasing(&self) -> bool {
        matches!(self.branch, TfBranch::Critical)
    }

    /// `u'(0)`.
    pub fn initial_slope(&self) -> f64 {
        self.x_start_point().uprime
    }

    fn x_start_point(&self) -> TfPoint {
        let tr = &self.trajectory;
        let k = if self.x_decreasing() { tr.len() - 1 } else { 0 };
        self.point_from(tr.node_s(k), tr.node_state(k))
    }

    fn x_end_point(&self) -> TfPoint {
        let tr = &self.trajectory;
        let k = if self.x_decreasing() { 0 } else { tr.len() - 1 };
        self.point_from(tr.node_s(k), tr.node_state(k))
    }

    /// Covered interval of `x`.
    pub fn x_range(&self) -> (f64, f64) {
        (self.x_start_point().x, self.x_end_point().x)
    }

    /// Parameter `s` at which the solution passes `x`.
    pub fn s_at_x(&self, x: f64) -> Result<f64> {
        let (lo, hi) = self.x_range();
        let out_of_range = Error::OutOfRange { x, lo, hi };
        if !(x >= 0.0) || x > hi {
            return Err(out_of_range);
        }
        let tr = &self.trajectory;
        let start = self.x_start_point();
        if x <= lo {
            // only the origin itself may lie below a tiny positive x(s₀)
            return if lo <= 1e-10 { Ok(start.s) } else { Err(out_of_range) };
        }
        if x == hi {
            return Ok(self.x_end_point().s);
        }
        let c = consts();
        let shift = self.i_shift;
        tr.invert_by(move |y| c.cbrt144 * y[0] * y[0] * (2.0 * (y[2] - shift)).exp(), x)
            .map_err(|_| out_of_range)
    }

    /// `(u, u')` at `x`.
    pub fn evaluate_at_x(&self, x: f64) -> Result<(f64, f64)> {
        let p = self.point_at(self.s_at_x(x)?)?;
        Ok((p.u, p.uprime))
    }

    /// Largest `|u'' − u^{3/2}/√x| / max(1, u^{3/2}/√x)` over a sample with
    /// `x ∈ [x_lo, x_hi]`, `u''` coming from the derivative of the
    /// interpolant along `s`. The scaling only matters on the growing
    /// branches, where `u` runs up to `1e8`.
    pub fn ode_residual_sup(&self, x_lo: f64, x_hi: f64) -> Result<f64> {
        let tr = &self.trajectory;
        let mut worst: f64 = 0.0;
        let mut check = |s: f64| -> Result<()> {
            let y = tr.eval(s)?;
            let p = self.point_from(s, &y);
            if p.x < x_lo || p.x > x_hi || p.t <= 0.0 {
                return Ok(());
            }
            let dy = tr.eval_derivative(s)?;
            let dx = p.x * (2.0 * dy[0] / p.t + 2.0 * dy[2]);
            let dup = p.uprime * (dy[1] / p.v - 8.0 * dy[2]);
            let rhs = p.u.powf(1.5) / p.x.sqrt();
            worst = worst.max((dup / dx - rhs).abs() / rhs.max(1.0));
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

/// The unstable manifold from `(1, 1)` to `t = 0`, with the quadrature
/// `dI/ds = −t v`. Returns the trajectory and the state at `t = 0`.
fn critical_run(opts: &CriticalOptions) -> Result<(Trajectory, Vec<f64>)> {
    let seed = saddle_seed(opts.epsilon)?;
    let field = quadrature_extend(&reduced_field(), |y| -y[0] * y[1]);
    let y0 = [seed[0], seed[1], 0.0];
    let at_origin = EventSpec::new(|y| y[0]).direction(Direction::Falling).root_tol(1e-14);
    let run = integrate_events(&field, &y0, (0.0, opts.s_max), &opts.ctrl, &[at_origin])?;
    match run.terminal_hit() {
        Some(hit) => {
            let state = hit.state.clone();
            Ok((run.trajectory, state))
        }
        None => Err(Error::EventNotFound { s_max: opts.s_max }),
    }
}

/// Critical slope `ω` with integration tolerance `tol`, seed distance 1e-3.
pub fn critical_slope(tol: f64) -> Result<f64> {
    critical_slope_with(&CriticalOptions::with_tol(tol))
}

pub fn critical_slope_with(opts: &CriticalOptions) -> Result<f64> {
    if !(opts.ctrl.rel_tol >= 1e-13) {
        return Err(Error::InvalidInput(format!(
            "tolerance {} is below the double-precision floor 1e-13",
            opts.ctrl.rel_tol
        )));
    }
    let (_, end) = critical_run(opts)?;
    Ok(slope_from_v(end[1]))
}

/// `v` where the unstable manifold meets `t = 0`.
pub fn critical_v(opts: &CriticalOptions) -> Result<f64> {
    Ok(v_from_slope(critical_slope_with(opts)?))
}

/// The decaying solution `u(x)` on `[0, x_seed]`, `x_seed` set by ε.
pub fn critical_solution(opts: &CriticalOptions) -> Result<TFSolution> {
    let (trajectory, end) = critical_run(opts)?;
    Ok(TFSolution {
        trajectory,
        branch: TfBranch::Critical,
        termination: TfTermination::Origin,
        i_shift: end[2],
    })
}

/// `(x, u, u')` of the critical solution at each `x`. The seed distance is
/// reduced to [`FAR_EPSILON`] when some `x` exceeds 200.
pub fn large_x_table(xs: &[f64], opts: &CriticalOptions) -> Result<Vec<(f64, f64, f64)>> {
    let mut opts = *opts;
    if xs.iter().any(|&x| x > 200.0) {
        opts.epsilon = opts.epsilon.min(FAR_EPSILON);
    }
    let sol = critical_solution(&opts)?;
    xs.iter()
        .map(|&x| sol.evaluate_at_x(x).map(|(u, up)| (x, u, up)))
        .collect()
}

// ---------------------------------------------------------------------------
// slope family

/// Settings for solutions started at `(t, v) = (0, v0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeOptions {
    pub ctrl: StepControl,
    pub x_max: f64,
    pub s_max: f64,
    /// Stop at the first point with `x u' = u`.
    pub stop_at_crystal: bool,
    /// Stop where the curve turns in `t` (on `t²v = 1`).
    pub stop_at_turning: bool,
}

impl Default for SlopeOptions {
    fn default() -> Self {
        Self {
            ctrl: StepControl::default(),
            x_max: 50.0,
            s_max: 1e3,
            stop_at_crystal: false,
            stop_at_turning: false,
        }
    }
}

impl SlopeOptions {
    pub fn ctrl(mut self, ctrl: StepControl) -> Self {
        self.ctrl = ctrl;
        self
    }

    pub fn x_max(mut self, x_max: f64) -> Self {
        self.x_max = x_max;
        self
    }
}

/// Solution with `u(0) = 1`, `u'(0) = −(3/16)^{1/3} v0`: the reduced field is
/// run backwards from `(0, v0)` with `dI/ds = t v`, `I(0) = 0`.
pub fn solution_with_slope(v0: f64, opts: &SlopeOptions) -> Result<TFSolution> {
    if !v0.is_finite() {
        return Err(Error::InvalidInput(format!("v0 must be finite, got {v0}")));
    }
    if !(opts.x_max > 0.0) {
        return Err(Error::InvalidInput(format!("x_max must be positive, got {}", opts.x_max)));
    }
    let field = quadrature_extend(&reduced_field().reversed(), |y| y[0] * y[1]);
    let c = consts();
    let i_zero = -ZERO_THRESHOLD.ln() / 6.0;
    let x_max = opts.x_max;
    let mut events = vec![
        EventSpec::new(move |y| y[2] - i_zero).direction(Direction::Rising),
        EventSpec::new(move |y| y[2] + i_zero).direction(Direction::Falling),
        EventSpec::new(move |y| c.cbrt144 * y[0] * y[0] * (2.0 * y[2]).exp() - x_max).direction(Direction::Rising),
    ];
    let mut kinds = vec![TfTermination::Zero, TfTermination::Blowup, TfTermination::XMax];
    if opts.stop_at_crystal {
        events.push(EventSpec::new(|y| y[0] * y[0] * y[1] + 1.0 / 3.0).direction(Direction::Falling));
        kinds.push(TfTermination::Crystal);
    }
    if opts.stop_at_turning {
        events.push(EventSpec::new(|y| y[0] * y[0] * y[1] - 1.0).direction(Direction::Rising));
        kinds.push(TfTermination::Turning);
    }
    let run = integrate_events(&field, &[0.0, v0, 0.0], (0.0, opts.s_max), &opts.ctrl, &events)?;
    let termination = run.terminal_hit().map_or(TfTermination::SpanEnd, |h| kinds[h.index]);
    Ok(TFSolution {
        trajectory: run.trajectory,
        branch: TfBranch::SlopeFamily { v0 },
        termination,
        i_shift: 0.0,
    })
}

/// Solutions for each `v0`, computed independently.
pub fn phase_family(v0s: &[f64], opts: &SlopeOptions, exec: Execution) -> Vec<Result<TFSolution>> {
    exec.map(v0s, |&v0| solution_with_slope(v0, opts))
}

/// Both halves of the stable manifold of the saddle in the `(t, v)` plane,
/// each followed backwards until `t` leaves `[0, t_max]` or `|v| > v_max`.
pub fn stable_manifold(epsilon: f64, ctrl: &StepControl, t_max: f64, v_max: f64) -> Result<[Trajectory; 2]> {
    let field = reduced_field();
    let j = field.jacobian(&[1.0, 1.0]);
    let (_, w) = geometry::unstable_eigenpair(&(-j))?;
    let back = field.reversed();
    let events = [
        EventSpec::new(|y| y[0]).direction(Direction::Falling),
        EventSpec::new(move |y| y[0] - t_max).direction(Direction::Rising),
        EventSpec::new(move |y| y[1].abs() - v_max).direction(Direction::Rising),
    ];
    let run = |branch| -> Result<Trajectory> {
        let seed = geometry::seed_along(&[1.0, 1.0], w.as_slice(), epsilon, branch)?;
        Ok(integrate_events(&back, &seed, (0.0, 100.0), ctrl, &events)?.trajectory)
    };
    Ok([run(Branch::Decreasing)?, run(Branch::Increasing)?])
}

// ---------------------------------------------------------------------------
// boundary conditions

/// Outcome of a boundary-condition shooting.
#[derive(Debug, Clone)]
pub struct TfBcSolution {
    pub solution: TFSolution,
    pub v0: f64,
    /// Location of the condition on the returned solution (`a*` or `b*`).
    pub located: f64,
    /// `|u(a)|` for the ion, `|b u'(b) − u(b)|` for the crystal.
    pub residual: f64,
    pub iterations: usize,
}

/// Settings for the boundary-condition shooting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BcOptions {
    /// Accepted distance between the located and the requested abscissa.
    pub tol: f64,
    pub ctrl: StepControl,
    /// Used for the critical `v` that anchors the brackets.
    pub critical: CriticalOptions,
    pub max_iter: usize,
}

impl Default for BcOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            ctrl: StepControl::with_tol(1e-11),
            critical: CriticalOptions::with_tol(1e-11),
            max_iter: 200,
        }
    }
}

// `None` when the condition is never met before `x_max`.
fn ion_zero(sol: &TFSolution) -> Option<f64> {
    if sol.termination != TfTermination::Zero {
        return None;
    }
    // one linear step from the threshold to the zero itself
    let p = sol.x_end_point();
    Some(p.x - p.u / p.uprime)
}

fn crystal_point(sol: &TFSolution) -> Option<f64> {
    (sol.termination == TfTermination::Crystal).then(|| sol.x_end_point().x)
}

/// Bisection on `v0` for `loc(v0) = target` where `loc` is monotone and
/// `None` stands for `+∞`. `lo`, `hi` must straddle the target.
fn bisect_located<L>(lo: f64, hi: f64, target: f64, opts: &BcOptions, loc: L) -> Result<(f64, f64, usize)>
where
    L: Fn(f64) -> Result<Option<f64>>,
{
    let side = |v: f64| -> Result<(bool, f64)> {
        let a = loc(v)?.unwrap_or(f64::INFINITY);
        Ok((a > target, a))
    };
    let (lo_above, _) = side(lo)?;
    let (mut a, mut b) = (lo, hi);
    let mut best = (f64::NAN, f64::INFINITY);
    for it in 1..=opts.max_iter {
        let mid = 0.5 * (a + b);
        let (above, x) = side(mid)?;
        if (x - target).abs() < (best.1 - target).abs() {
            best = (mid, x);
        }
        if (x - target).abs() <= opts.tol {
            return Ok((mid, x, it));
        }
        if mid <= a.min(b) || mid >= a.max(b) {
            break;
        }
        if above == lo_above {
            a = mid;
        } else {
            b = mid;
        }
    }
    Err(Error::MaxIter {
        iterations: opts.max_iter,
        residual: (best.1 - target).abs(),
    })
}

/// Expand towards the critical `v` until `loc` exceeds `target`.
fn near_critical<L>(vc: f64, sign: f64, target: f64, loc: &L) -> Result<f64>
where
    L: Fn(f64) -> Result<Option<f64>>,
{
    let mut delta = 1e-6 * vc;
    for _ in 0..12 {
        let v = vc + sign * delta;
        if loc(v)?.is_none_or(|a| a > target) {
            return Ok(v);
        }
        delta *= 0.1;
    }
    Err(Error::BracketNotFound(format!("no v0 near {vc} puts the condition beyond x = {target}")))
}

/// `u(a) = 0`: an ion-type solution with `v0 > v_critical`.
pub fn solve_bc_ion(a: f64, opts: &BcOptions) -> Result<TfBcSolution> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::InvalidInput(format!("a must be positive, got {a}")));
    }
    let vc = critical_v(&opts.critical)?;
    let slope = SlopeOptions {
        ctrl: opts.ctrl,
        x_max: 4.0 * a + 10.0,
        ..SlopeOptions::default()
    };
    let loc = |v0: f64| -> Result<Option<f64>> { Ok(ion_zero(&solution_with_slope(v0, &slope)?)) };
    let lo = near_critical(vc, 1.0, a, &loc)?;
    let mut hi = 10.0 * vc;
    let mut found = false;
    for _ in 0..20 {
        if loc(hi)?.is_some_and(|z| z < a) {
            found = true;
            break;
        }
        hi *= 10.0;
    }
    if !found {
        return Err(Error::BracketNotFound(format!("no v0 below {hi} puts the zero before x = {a}")));
    }
    let (v0, located, iterations) = bisect_located(lo, hi, a, opts, loc)?;
    let solution = solution_with_slope(v0, &slope)?;
    let p = solution.x_end_point();
    let residual = if a <= p.x {
        solution.evaluate_at_x(a)?.0.abs()
    } else {
        (p.u + p.uprime * (a - p.x)).abs()
    };
    Ok(TfBcSolution {
        solution,
        v0,
        located,
        residual,
        iterations,
    })
}

/// `b u'(b) − u(b) = 0`: a crystal-type solution with `v0 < v_critical`.
pub fn solve_bc_crystal(b: f64, opts: &BcOptions) -> Result<TfBcSolution> {
    if !(b > 0.0) || !b.is_finite() {
        return Err(Error::InvalidInput(format!("b must be positive, got {b}")));
    }
    let vc = critical_v(&opts.critical)?;
    let slope = SlopeOptions {
        ctrl: opts.ctrl,
        x_max: 4.0 * b + 10.0,
        stop_at_crystal: true,
        ..SlopeOptions::default()
    };
    let loc = |v0: f64| -> Result<Option<f64>> { Ok(crystal_point(&solution_with_slope(v0, &slope)?)) };
    let hi = near_critical(vc, -1.0, b, &loc)?;
    let mut lo = vc / 10.0;
    let mut found = false;
    for _ in 0..20 {
        if loc(lo)?.is_some_and(|x| x < b) {
            found = true;
            break;
        }
        lo -= 2.0 * (vc - lo);
    }
    if !found {
        return Err(Error::BracketNotFound(format!("no v0 above {lo} puts x u' = u before x = {b}")));
    }
    let (v0, located, iterations) = bisect_located(lo, hi, b, opts, loc)?;
    // continue past the event so the condition can be evaluated at b itself
    let full = SlopeOptions {
        stop_at_crystal: false,
        x_max: b.max(located) * 1.5 + 1.0,
        ..slope
    };
    let solution = solution_with_slope(v0, &full)?;
    let (u, up) = solution.evaluate_at_x(b)?;
    Ok(TfBcSolution {
        solution,
        v0,
        located,
        residual: (b * up - u).abs(),
        iterations,
    })
}
