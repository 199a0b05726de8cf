//! Adaptive Runge–Kutta–Fehlberg 4(5) integration of autonomous systems.
//!
//! The fifth-order solution is propagated and the embedded fourth-order one
//! only feeds the error estimate. Accepted steps are stored in a
//! [`Trajectory`] with a quartic dense output. Events are detected by sign
//! changes between accepted nodes and refined by bisection on exact
//! Runge–Kutta sub-steps from the preceding node.

mod tableau;
mod trajectory;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use tableau::{A, B5, E, STAGES};
pub use trajectory::Trajectory;

type RhsFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;
type JacFn = dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync;
type ScalarFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// Right-hand side of `dy/ds = F(y)`, with an optional analytic Jacobian.
#[derive(Clone)]
pub struct AutonomousField {
    dim: usize,
    rhs: Arc<RhsFn>,
    jacobian: Option<Arc<JacFn>>,
}

impl fmt::Debug for AutonomousField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AutonomousField")
            .field("dim", &self.dim)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

impl AutonomousField {
    pub fn new<F>(dim: usize, rhs: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        assert!(dim > 0, "field dimension must be positive");
        Self {
            dim,
            rhs: Arc::new(rhs),
            jacobian: None,
        }
    }

    pub fn with_jacobian<J>(mut self, jac: J) -> Self
    where
        J: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(jac));
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn has_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    #[inline]
    pub fn eval_into(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.dim);
        (self.rhs)(y, out)
    }

    pub fn eval(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(y, &mut out);
        out
    }

    /// Analytic Jacobian when available, central differences otherwise.
    pub fn jacobian(&self, y: &[f64]) -> DMatrix<f64> {
        match &self.jacobian {
            Some(j) => j(y),
            None => self.fd_jacobian(y),
        }
    }

    /// Central differences with step `1e-6 (1 + |y_j|)`.
    pub fn fd_jacobian(&self, y: &[f64]) -> DMatrix<f64> {
        let n = self.dim;
        let mut jac = DMatrix::zeros(n, n);
        let mut yp = y.to_vec();
        let mut fp = vec![0.0; n];
        let mut fm = vec![0.0; n];
        for j in 0..n {
            let h = 1e-6 * (1.0 + y[j].abs());
            yp[j] = y[j] + h;
            self.eval_into(&yp, &mut fp);
            yp[j] = y[j] - h;
            self.eval_into(&yp, &mut fm);
            yp[j] = y[j];
            for i in 0..n {
                jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        jac
    }

    /// The field `-F`, whose trajectories run the original ones backwards.
    pub fn reversed(&self) -> Self {
        let rhs = Arc::clone(&self.rhs);
        let mut out = Self::new(self.dim, move |y, dy| {
            rhs(y, dy);
            dy.iter_mut().for_each(|v| *v = -*v);
        });
        if let Some(j) = &self.jacobian {
            let j = Arc::clone(j);
            out = out.with_jacobian(move |y| -j(y));
        }
        out
    }
}

/// Append a component integrating `integrand` along the flow: the returned
/// field has dimension `dim + 1` and its last component obeys
/// `dI/ds = integrand(y)`.
pub fn quadrature_extend<G>(field: &AutonomousField, integrand: G) -> AutonomousField
where
    G: Fn(&[f64]) -> f64 + Send + Sync + 'static,
{
    let inner = field.clone();
    let n = field.dim();
    AutonomousField::new(n + 1, move |y, dy| {
        inner.eval_into(&y[..n], &mut dy[..n]);
        dy[n] = integrand(&y[..n]);
    })
}

/// Step-size and tolerance settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            abs_tol: 1e-7,
            h_init: 1e-3,
            h_min: 1e-14,
            h_max: 1.0,
            max_steps: 500_000,
        }
    }
}

impl StepControl {
    /// Relative and absolute tolerance both set to `tol`.
    pub fn with_tol(tol: f64) -> Self {
        Self {
            rel_tol: tol,
            abs_tol: tol,
            ..Self::default()
        }
    }

    pub fn tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.rel_tol > 0.0
            && self.abs_tol > 0.0
            && self.h_min > 0.0
            && self.h_min <= self.h_init
            && self.h_init <= self.h_max
            && self.max_steps > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid step control {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Direction {
    #[default]
    Any,
    /// Event function crosses from negative to non-negative.
    Rising,
    /// Event function crosses from positive to non-positive.
    Falling,
}

/// Scalar event `g(y) = 0` watched during integration.
#[derive(Clone)]
pub struct EventSpec {
    func: Arc<ScalarFn>,
    pub direction: Direction,
    pub terminal: bool,
    pub root_tol: f64,
}

impl fmt::Debug for EventSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EventSpec")
            .field("direction", &self.direction)
            .field("terminal", &self.terminal)
            .field("root_tol", &self.root_tol)
            .finish()
    }
}

impl EventSpec {
    /// A terminal event in any direction with `root_tol = 1e-12`.
    pub fn new<G>(g: G) -> Self
    where
        G: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            func: Arc::new(g),
            direction: Direction::Any,
            terminal: true,
            root_tol: 1e-12,
        }
    }

    pub fn direction(mut self, direction: Direction) -> Self {
        self.direction = direction;
        self
    }

    pub fn terminal(mut self, terminal: bool) -> Self {
        self.terminal = terminal;
        self
    }

    pub fn root_tol(mut self, tol: f64) -> Self {
        assert!(tol > 0.0, "root_tol must be positive");
        self.root_tol = tol;
        self
    }

    #[inline]
    pub fn value(&self, y: &[f64]) -> f64 {
        (self.func)(y)
    }

    fn accepts(&self, from_negative: bool) -> bool {
        match self.direction {
            Direction::Any => true,
            Direction::Rising => from_negative,
            Direction::Falling => !from_negative,
        }
    }
}

/// A located event crossing.
#[derive(Debug, Clone, PartialEq)]
pub struct EventHit {
    /// Index into the event list passed to [`integrate_events`].
    pub index: usize,
    pub s: f64,
    pub state: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EventRun {
    pub trajectory: Trajectory,
    /// All hits in order of occurrence; the last one is terminal if
    /// `terminated` is set.
    pub hits: Vec<EventHit>,
    pub terminated: bool,
}

impl EventRun {
    pub fn terminal_hit(&self) -> Option<&EventHit> {
        if self.terminated {
            self.hits.last()
        } else {
            None
        }
    }
}

struct Workspace {
    k: [Vec<f64>; STAGES],
    tmp: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
        }
    }
}

struct StepOut {
    y: Vec<f64>,
    f: Vec<f64>,
    mid: Vec<f64>,
    fmid: Vec<f64>,
}

/// One Fehlberg step of size `h` from `(y, f0)`. Returns the fifth-order state
/// and the scaled error norm; stage derivatives stay in `ws.k`.
fn attempt(
    field: &AutonomousField,
    y: &[f64],
    f0: &[f64],
    h: f64,
    ctrl: &StepControl,
    ws: &mut Workspace,
    y_out: &mut [f64],
) -> f64 {
    let n = y.len();
    ws.k[0].copy_from_slice(f0);
    for stage in 1..STAGES {
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..stage {
                acc += A[stage][j] * ws.k[j][i];
            }
            ws.tmp[i] = y[i] + h * acc;
        }
        field.eval_into(&ws.tmp, &mut ws.k[stage]);
    }
    let mut err: f64 = 0.0;
    for i in 0..n {
        let mut acc5 = 0.0;
        let mut acce = 0.0;
        for j in 0..STAGES {
            acc5 += B5[j] * ws.k[j][i];
            acce += E[j] * ws.k[j][i];
        }
        y_out[i] = y[i] + h * acc5;
        let scale = ctrl
            .abs_tol
            .max(ctrl.rel_tol * y[i].abs().max(y_out[i].abs()));
        err = err.max((h * acce).abs() / scale);
    }
    if y_out.iter().any(|v| !v.is_finite()) || ws.k.iter().flatten().any(|v| !v.is_finite()) {
        return f64::NAN;
    }
    err
}

/// Propagate an accepted step of size `h` as two fifth-order half steps. The
/// full step only supplies the error estimate; the halves give a midpoint that
/// is consistent with both ends, so the dense-output derivative stays accurate
/// enough to substitute back into the equation.
fn advance(field: &AutonomousField, y: &[f64], f0: &[f64], h: f64, ws: &mut Workspace) -> StepOut {
    let mid = substep(field, y, f0, 0.5 * h, ws);
    let fmid = field.eval(&mid);
    let y1 = substep(field, &mid, &fmid, 0.5 * h, ws);
    let f1 = field.eval(&y1);
    StepOut {
        y: y1,
        f: f1,
        mid,
        fmid,
    }
}

/// A single untested sub-step of size `h`; used to place event states.
fn substep(field: &AutonomousField, y: &[f64], f0: &[f64], h: f64, ws: &mut Workspace) -> Vec<f64> {
    let mut out = vec![0.0; y.len()];
    // tolerances only scale the error estimate, which is discarded here
    let ctrl = StepControl::default();
    attempt(field, y, f0, h, &ctrl, ws, &mut out);
    out
}

fn check_inputs(field: &AutonomousField, y0: &[f64], ctrl: &StepControl) -> Result<()> {
    ctrl.validate()?;
    if y0.len() != field.dim() {
        return Err(Error::InvalidInput(format!(
            "initial state has length {}, field dimension is {}",
            y0.len(),
            field.dim()
        )));
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState { s: 0.0 });
    }
    Ok(())
}

/// Integrate from `s_span.0` to `s_span.1 > s_span.0`.
pub fn integrate(
    field: &AutonomousField,
    y0: &[f64],
    s_span: (f64, f64),
    ctrl: &StepControl,
) -> Result<Trajectory> {
    Ok(integrate_events(field, y0, s_span, ctrl, &[])?.trajectory)
}

/// Integrate until the first crossing of `event` (any `terminal` flag is
/// treated as terminal). Returns the trajectory ending at the event together
/// with the event parameter and state.
pub fn integrate_until(
    field: &AutonomousField,
    y0: &[f64],
    ctrl: &StepControl,
    event: &EventSpec,
    s_max: f64,
) -> Result<(Trajectory, f64, Vec<f64>)> {
    let ev = event.clone().terminal(true);
    let run = integrate_events(field, y0, (0.0, s_max), ctrl, std::slice::from_ref(&ev))?;
    match run.terminal_hit() {
        Some(hit) => {
            let (s, state) = (hit.s, hit.state.clone());
            Ok((run.trajectory, s, state))
        }
        None => Err(Error::EventNotFound { s_max }),
    }
}

/// Integrate over `s_span` watching several events. Integration stops at the
/// first terminal crossing, otherwise at `s_span.1`.
pub fn integrate_events(
    field: &AutonomousField,
    y0: &[f64],
    s_span: (f64, f64),
    ctrl: &StepControl,
    events: &[EventSpec],
) -> Result<EventRun> {
    check_inputs(field, y0, ctrl)?;
    let (s0, s1) = s_span;
    if !(s1 > s0) {
        return Err(Error::InvalidInput(format!(
            "degenerate or reversed span [{s0}, {s1}]"
        )));
    }
    let n = field.dim();
    let mut ws = Workspace::new(n);
    let mut s = s0;
    let mut y = y0.to_vec();
    let mut f = field.eval(&y);
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState { s });
    }
    let mut traj = Trajectory::start(n, s, &y, &f);
    let mut hits = Vec::new();

    // last nonzero sign per event; None while still on the surface
    let mut signs: Vec<Option<bool>> = events
        .iter()
        .map(|e| {
            let g = e.value(&y);
            (g.abs() > e.root_tol).then_some(g < 0.0)
        })
        .collect();

    let mut h = ctrl.h_init.min(ctrl.h_max).min(s1 - s0);
    let mut y_new = vec![0.0; n];
    let mut steps = 0usize;

    while s < s1 {
        if steps >= ctrl.max_steps {
            return Err(Error::MaxStepsExceeded {
                max_steps: ctrl.max_steps,
                s,
            });
        }
        let remaining = s1 - s;
        let last = h >= remaining;
        let h_try = if last { remaining } else { h };
        let err = attempt(field, &y, &f, h_try, ctrl, &mut ws, &mut y_new);
        if err.is_nan() {
            return Err(Error::NonFiniteState { s });
        }
        if err > 1.0 {
            let factor = (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            h = h_try * factor;
            if h < ctrl.h_min {
                return Err(Error::StepUnderflow { s, h });
            }
            continue;
        }
        steps += 1;
        let s_next = if last { s1 } else { s + h_try };
        let out = advance(field, &y, &f, h_try, &mut ws);
        if out.y.iter().chain(&out.f).chain(&out.mid).chain(&out.fmid).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { s: s_next });
        }

        // earliest crossing inside this step, if any
        let mut first: Option<(usize, f64, Vec<f64>)> = None;
        for (idx, ev) in events.iter().enumerate() {
            let g_new = ev.value(&out.y);
            let crossed = match signs[idx] {
                Some(was_negative) => {
                    let now_negative = g_new < 0.0;
                    let landed = g_new == 0.0;
                    (now_negative != was_negative || landed) && ev.accepts(was_negative)
                }
                None => false,
            };
            if crossed {
                let was_negative = signs[idx].unwrap();
                let (se, ye) = locate(field, ev, &y, &f, s, h_try, was_negative, &mut ws);
                if first.as_ref().is_none_or(|(_, s_best, _)| se < *s_best) {
                    first = Some((idx, se, ye));
                }
            }
        }

        if let Some((idx, se, ye)) = first {
            let mut hit = EventHit {
                index: idx,
                s: se,
                state: ye,
            };
            if events[idx].terminal {
                if se > s {
                    let he = se - s;
                    let out_e = advance(field, &y, &f, he, &mut ws);
                    traj.push(se, &out_e.y, &out_e.f, &out_e.mid, &out_e.fmid);
                    hit.state = out_e.y;
                }
                hits.push(hit);
                return Ok(EventRun {
                    trajectory: traj,
                    hits,
                    terminated: true,
                });
            }
            hits.push(hit);
        }

        traj.push(s_next, &out.y, &out.f, &out.mid, &out.fmid);
        for (idx, ev) in events.iter().enumerate() {
            let g = ev.value(&out.y);
            if (g.abs() > ev.root_tol || signs[idx].is_some()) && g != 0.0 {
                signs[idx] = Some(g < 0.0);
            }
        }
        s = s_next;
        y.copy_from_slice(&out.y);
        f = out.f;

        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h = (h_try * factor).clamp(ctrl.h_min, ctrl.h_max);
    }

    Ok(EventRun {
        trajectory: traj,
        hits,
        terminated: false,
    })
}

/// Bisection for the crossing inside `[s, s + h]` using sub-steps from the
/// step start. Returns the parameter and the state on the far side of the
/// crossing (or the one with smaller |g| if that is within tolerance).
#[allow(clippy::too_many_arguments)]
fn locate(
    field: &AutonomousField,
    ev: &EventSpec,
    y: &[f64],
    f: &[f64],
    s: f64,
    h: f64,
    from_negative: bool,
    ws: &mut Workspace,
) -> (f64, Vec<f64>) {
    let (mut lo, mut hi) = (0.0_f64, h);
    let mut y_lo = y.to_vec();
    let mut y_hi = advance(field, y, f, h, ws).y;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || s + mid <= s + lo || s + mid >= s + hi {
            break;
        }
        let ym = advance(field, y, f, mid, ws).y;
        let g = ev.value(&ym);
        if g == 0.0 {
            return (s + mid, ym);
        }
        if (g < 0.0) == from_negative {
            lo = mid;
            y_lo = ym;
        } else {
            hi = mid;
            y_hi = ym;
        }
    }
    let g_lo = ev.value(&y_lo).abs();
    let g_hi = ev.value(&y_hi).abs();
    if g_hi <= ev.root_tol || g_hi <= g_lo || lo == 0.0 {
        (s + hi, y_hi)
    } else {
        (s + lo, y_lo)
    }
}

#[cfg(test)]
mod tests;
