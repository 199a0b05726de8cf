//! Root finders and shooting drivers.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::integrator::{integrate, integrate_until, AutonomousField, EventSpec, StepControl};

/// Default starting guess for shooting on a normalized unknown.
pub const DEFAULT_X0: f64 = 0.5;

/// A scalar equation `r(x) = 0`. The residual may fail (for instance when an
/// initial value problem cannot be integrated); such failures surface as
/// [`Error::ResidualUndefined`].
pub struct ScalarRootProblem<'a> {
    residual: &'a (dyn Fn(f64) -> Result<f64> + Sync + 'a),
    pub bracket: Option<(f64, f64)>,
    pub x0: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl<'a> ScalarRootProblem<'a> {
    pub fn new(residual: &'a (dyn Fn(f64) -> Result<f64> + Sync + 'a)) -> Self {
        Self {
            residual,
            bracket: None,
            x0: DEFAULT_X0,
            tol: 1e-10,
            max_iter: 100,
        }
    }

    pub fn x0(mut self, x0: f64) -> Self {
        self.x0 = x0;
        self
    }

    pub fn bracket(mut self, lo: f64, hi: f64) -> Self {
        self.bracket = Some((lo, hi));
        self
    }

    pub fn tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    fn eval(&self, x: f64) -> Result<f64> {
        match (self.residual)(x) {
            Ok(r) if r.is_finite() => Ok(r),
            Ok(r) => Err(Error::ResidualUndefined {
                at: x,
                reason: format!("residual evaluated to {r}"),
            }),
            Err(e @ Error::ResidualUndefined { .. }) => Err(e),
            Err(e) => Err(Error::ResidualUndefined {
                at: x,
                reason: e.to_string(),
            }),
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidInput(format!("tolerance must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Root {
    pub x: f64,
    pub residual: f64,
    pub iterations: usize,
    /// Successive iterates, starting with the initial guess.
    pub history: Vec<f64>,
}

/// Steffensen's method: Aitken's Δ² applied to each triple
/// `x, φ(x), φ(φ(x))` of the fixed-point map `φ(x) = x − r(x)`, which gives
/// `x ← x − r(x)² / (r(x) − r(x − r(x)))`.
pub fn steffensen(p: &ScalarRootProblem) -> Result<Root> {
    p.check()?;
    let mut x = p.x0;
    let mut history = vec![x];
    for it in 0..p.max_iter {
        let r0 = p.eval(x)?;
        if r0.abs() <= p.tol {
            return Ok(Root {
                x,
                residual: r0,
                iterations: it,
                history,
            });
        }
        let probe = x - r0;
        let r1 = p.eval(probe)?;
        if r1.abs() <= p.tol {
            history.push(probe);
            return Ok(Root {
                x: probe,
                residual: r1,
                iterations: it + 1,
                history,
            });
        }
        let denom = r0 - r1;
        let next = x - r0 * r0 / denom;
        if denom == 0.0 || !next.is_finite() || next.abs() > 1e15 {
            return Err(Error::Diverged(format!("Steffensen step from x = {x} is undefined")));
        }
        x = next;
        history.push(x);
    }
    let residual = p.eval(x)?;
    if residual.abs() <= p.tol {
        return Ok(Root {
            x,
            residual,
            iterations: p.max_iter,
            history,
        });
    }
    Err(Error::MaxIter {
        iterations: p.max_iter,
        residual,
    })
}

/// Bisection down to a bracket of width `tol`.
pub fn bisection(p: &ScalarRootProblem) -> Result<Root> {
    bisect(p, Stop::Width)
}

/// Bisection until `|r| ≤ tol` at the midpoint.
pub fn bisection_to_residual(p: &ScalarRootProblem) -> Result<Root> {
    bisect(p, Stop::Residual)
}

#[derive(Clone, Copy, PartialEq)]
enum Stop {
    Width,
    Residual,
}

fn bisect(p: &ScalarRootProblem, stop: Stop) -> Result<Root> {
    p.check()?;
    let (mut lo, mut hi) = p
        .bracket
        .ok_or_else(|| Error::InvalidInput("bisection needs a bracket".into()))?;
    if lo > hi {
        std::mem::swap(&mut lo, &mut hi);
    }
    let rlo = p.eval(lo)?;
    if rlo == 0.0 {
        return Ok(Root { x: lo, residual: 0.0, iterations: 0, history: vec![lo] });
    }
    let rhi = p.eval(hi)?;
    if rhi == 0.0 {
        return Ok(Root { x: hi, residual: 0.0, iterations: 0, history: vec![hi] });
    }
    if (rlo < 0.0) == (rhi < 0.0) {
        return Err(Error::NoBracket { lo, hi });
    }
    let lo_neg = rlo < 0.0;
    let mut history = Vec::new();
    let mut best = if rlo.abs() <= rhi.abs() { (lo, rlo) } else { (hi, rhi) };
    let mut it = 0;
    loop {
        let mid = 0.5 * (lo + hi);
        if stop == Stop::Width && hi - lo <= p.tol {
            let r = p.eval(mid)?;
            history.push(mid);
            return Ok(Root { x: mid, residual: r, iterations: it, history });
        }
        if mid <= lo || mid >= hi {
            // bracket collapsed to adjacent floats
            return if best.1.abs() <= p.tol {
                Ok(Root { x: best.0, residual: best.1, iterations: it, history })
            } else {
                Err(Error::MaxIter { iterations: it, residual: best.1 })
            };
        }
        let r = p.eval(mid)?;
        it += 1;
        history.push(mid);
        if r.abs() < best.1.abs() {
            best = (mid, r);
        }
        if r == 0.0 || (stop == Stop::Residual && r.abs() <= p.tol) {
            return Ok(Root { x: mid, residual: r, iterations: it, history });
        }
        if (r < 0.0) == lo_neg {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

type VecFn<'a> = &'a (dyn Fn(&DVector<f64>) -> Result<DVector<f64>> + 'a);
type MatFn<'a> = &'a (dyn Fn(&DVector<f64>) -> Result<DMatrix<f64>> + 'a);

/// `R(x) = 0` in `R^k`.
pub struct VectorRootProblem<'a> {
    residual: VecFn<'a>,
    jacobian: MatFn<'a>,
    pub x0: DVector<f64>,
    pub tol: f64,
    pub max_iter: usize,
}

impl<'a> VectorRootProblem<'a> {
    pub fn new(residual: VecFn<'a>, jacobian: MatFn<'a>, x0: DVector<f64>) -> Self {
        Self {
            residual,
            jacobian,
            x0,
            tol: 1e-10,
            max_iter: 50,
        }
    }

    pub fn tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorRoot {
    pub x: DVector<f64>,
    pub residual: DVector<f64>,
    pub iterations: usize,
}

const MAX_HALVINGS: usize = 8;

/// Newton's method with step halving (at most eight times) whenever the
/// max-norm of the residual fails to decrease.
pub fn newton(p: &VectorRootProblem) -> Result<VectorRoot> {
    if !(p.tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {}", p.tol)));
    }
    let mut x = p.x0.clone();
    let mut r = (p.residual)(&x)?;
    if r.len() != x.len() {
        return Err(Error::InvalidInput(format!(
            "residual has length {}, unknowns {}",
            r.len(),
            x.len()
        )));
    }
    for it in 0..p.max_iter {
        let norm = r.amax();
        if !norm.is_finite() {
            return Err(Error::Diverged("non-finite residual".into()));
        }
        if norm <= p.tol {
            return Ok(VectorRoot { x, residual: r, iterations: it });
        }
        if x.is_empty() {
            return Err(Error::SingularJacobian);
        }
        let j = (p.jacobian)(&x)?;
        let dx = j.lu().solve(&r).ok_or(Error::SingularJacobian)?;
        if dx.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularJacobian);
        }
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial = &x - &dx * lambda;
            if let Ok(rt) = (p.residual)(&trial) {
                if rt.amax() < norm {
                    accepted = Some((trial, rt));
                    break;
                }
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((xn, rn)) => {
                x = xn;
                r = rn;
            }
            None => {
                return Err(Error::Diverged(format!(
                    "no decrease of the residual ({norm:e}) along the Newton direction"
                )))
            }
        }
    }
    let norm = r.amax();
    if norm <= p.tol {
        return Ok(VectorRoot { x, residual: r, iterations: p.max_iter });
    }
    Err(Error::MaxIter { iterations: p.max_iter, residual: norm })
}

/// Central-difference Jacobian of `f` at `x` with steps `h (1 + |x_j|)`.
pub fn fd_jacobian(f: VecFn<'_>, x: &DVector<f64>, h: f64) -> Result<DMatrix<f64>> {
    let k = x.len();
    let mut cols = Vec::with_capacity(k);
    for j in 0..k {
        let step = h * (1.0 + x[j].abs());
        let mut xp = x.clone();
        xp[j] += step;
        let mut xm = x.clone();
        xm[j] -= step;
        cols.push(((f)(&xp)? - (f)(&xm)?) / (2.0 * step));
    }
    if k == 0 {
        let m = f(x)?.len();
        return Ok(DMatrix::zeros(m, 0));
    }
    Ok(DMatrix::from_columns(&cols))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShootMethod {
    Steffensen,
    Bisection,
}

/// Boundary condition `α u(1) + β u'(1) = γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobinBc {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl RobinBc {
    pub const DIRICHLET_ONE: RobinBc = RobinBc { alpha: 1.0, beta: 0.0, gamma: 1.0 };

    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        if alpha == 0.0 && beta == 0.0 {
            return Err(Error::InvalidInput("alpha and beta must not both vanish".into()));
        }
        Ok(Self { alpha, beta, gamma })
    }

    pub fn residual(&self, u: f64, up: f64) -> f64 {
        self.alpha * u + self.beta * up - self.gamma
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootOptions {
    pub method: ShootMethod,
    pub tol: f64,
    pub x0: f64,
    pub bracket: Option<(f64, f64)>,
    pub max_iter: usize,
}

impl Default for ShootOptions {
    fn default() -> Self {
        Self {
            method: ShootMethod::Steffensen,
            tol: 1e-7,
            x0: DEFAULT_X0,
            bracket: None,
            max_iter: 100,
        }
    }
}

/// Solve `bc(ivp(u0)) = 0` for the unknown initial value `u0`, where `ivp`
/// returns `(u(1), u'(1))`.
///
/// Steffensen falls back to residual-based bisection when a bracket is given
/// and the iteration fails (undefined residual, divergence or no
/// convergence).
pub fn shoot_scalar<F>(ivp: F, bc: RobinBc, opts: &ShootOptions) -> Result<Root>
where
    F: Fn(f64) -> Result<(f64, f64)> + Sync,
{
    let residual = |u0: f64| ivp(u0).map(|(u, up)| bc.residual(u, up));
    let mut p = ScalarRootProblem::new(&residual)
        .x0(opts.x0)
        .tol(opts.tol)
        .max_iter(opts.max_iter);
    if let Some((lo, hi)) = opts.bracket {
        p = p.bracket(lo, hi);
    }
    match opts.method {
        ShootMethod::Bisection => bisection_to_residual(&p),
        ShootMethod::Steffensen => match steffensen(&p) {
            Ok(root) => Ok(root),
            Err(Error::ResidualUndefined { .. } | Error::Diverged(_) | Error::MaxIter { .. })
                if p.bracket.is_some() =>
            {
                bisection_to_residual(&p)
            }
            Err(e) => Err(e),
        },
    }
}

type SeedFn = dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync;
type StateMat = dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync;
type ParamMat = dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync;
type BoundaryFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// Where a shooting trajectory ends.
#[derive(Debug, Clone)]
pub enum ShootingEnd {
    /// Fixed parameter value `s`.
    Span(f64),
    /// First crossing of an event before `s_max`.
    Event(EventSpec, f64),
}

/// Residual and Jacobian of a shooting map `p ↦ B(y(s_end; seed(p)))`, the
/// Jacobian obtained from the variational equation `dΦ/ds = J(y) Φ`.
#[derive(Clone)]
pub struct VariationalShooting {
    field: AutonomousField,
    seed: Arc<SeedFn>,
    seed_jacobian: Option<Arc<ParamMat>>,
    end: ShootingEnd,
    boundary: Arc<BoundaryFn>,
    boundary_jacobian: Option<Arc<StateMat>>,
    ctrl: StepControl,
}

impl std::fmt::Debug for VariationalShooting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VariationalShooting")
            .field("field", &self.field)
            .field("end", &self.end)
            .field("ctrl", &self.ctrl)
            .finish_non_exhaustive()
    }
}

const FD_REL: f64 = 1e-6;

impl VariationalShooting {
    pub fn new<S, B>(field: AutonomousField, seed: S, end: ShootingEnd, boundary: B, ctrl: StepControl) -> Self
    where
        S: Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
        B: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self {
            field,
            seed: Arc::new(seed),
            seed_jacobian: None,
            end,
            boundary: Arc::new(boundary),
            boundary_jacobian: None,
            ctrl,
        }
    }

    /// Analytic `∂seed/∂p` (dim × k). Central differences otherwise.
    pub fn with_seed_jacobian<J>(mut self, j: J) -> Self
    where
        J: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.seed_jacobian = Some(Arc::new(j));
        self
    }

    /// Analytic `∂B/∂y` (m × dim). Central differences otherwise.
    pub fn with_boundary_jacobian<J>(mut self, j: J) -> Self
    where
        J: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.boundary_jacobian = Some(Arc::new(j));
        self
    }

    /// Final state of the shooting trajectory for unknowns `p`.
    pub fn end_state(&self, p: &[f64]) -> Result<Vec<f64>> {
        let y0 = (self.seed)(p)?;
        match &self.end {
            ShootingEnd::Span(s1) => Ok(integrate(&self.field, &y0, (0.0, *s1), &self.ctrl)?
                .last_state()
                .to_vec()),
            ShootingEnd::Event(ev, s_max) => {
                Ok(integrate_until(&self.field, &y0, &self.ctrl, ev, *s_max)?.2)
            }
        }
    }

    pub fn residual(&self, p: &[f64]) -> Result<DVector<f64>> {
        Ok(DVector::from_vec((self.boundary)(&self.end_state(p)?)))
    }

    /// Residual and its Jacobian with respect to the unknowns.
    pub fn residual_and_jacobian(&self, p: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let n = self.field.dim();
        let k = p.len();
        let y0 = (self.seed)(p)?;
        if y0.len() != n {
            return Err(Error::InvalidInput(format!(
                "seed has length {}, field dimension is {n}",
                y0.len()
            )));
        }
        if k > n {
            return Err(Error::InvalidInput(format!("{k} unknowns exceed dimension {n}")));
        }
        let phi0 = match &self.seed_jacobian {
            Some(j) => j(p),
            None => {
                let seed = |q: &DVector<f64>| (self.seed)(q.as_slice()).map(DVector::from_vec);
                fd_jacobian(&seed, &DVector::from_column_slice(p), FD_REL)?
            }
        };
        let mut aug0 = y0.clone();
        aug0.extend_from_slice(phi0.as_slice());

        let inner = self.field.clone();
        let aug = AutonomousField::new(n + n * k, move |y, dy| {
            inner.eval_into(&y[..n], &mut dy[..n]);
            if k > 0 {
                let j = inner.jacobian(&y[..n]);
                let phi = nalgebra::DMatrixView::from_slice(&y[n..], n, k);
                let out = &j * phi;
                dy[n..].copy_from_slice(out.as_slice());
            }
        });

        let end = match &self.end {
            ShootingEnd::Span(s1) => integrate(&aug, &aug0, (0.0, *s1), &self.ctrl)?
                .last_state()
                .to_vec(),
            ShootingEnd::Event(ev, s_max) => {
                let g = ev.clone();
                let aug_ev = EventSpec::new(move |y| g.value(&y[..n]))
                    .direction(ev.direction)
                    .root_tol(ev.root_tol);
                integrate_until(&aug, &aug0, &self.ctrl, &aug_ev, *s_max)?.2
            }
        };
        let y1 = &end[..n];
        let mut dy = DMatrix::from_column_slice(n, k, &end[n..]);

        if let ShootingEnd::Event(ev, _) = &self.end {
            // the end point moves with p: dy/dp = Φ + f ∂s*/∂p
            let grad = gradient(|y| ev.value(y), y1);
            let f = DVector::from_vec(self.field.eval(y1));
            let gf = grad.dot(&f);
            if gf == 0.0 || !gf.is_finite() {
                return Err(Error::NonTransversal);
            }
            let ds = -(grad.transpose() * &dy) / gf;
            dy += &f * ds;
        }

        let r = DVector::from_vec((self.boundary)(y1));
        let db = match &self.boundary_jacobian {
            Some(j) => j(y1),
            None => {
                let b = |y: &DVector<f64>| Ok(DVector::from_vec((self.boundary)(y.as_slice())));
                fd_jacobian(&b, &DVector::from_column_slice(y1), FD_REL)?
            }
        };
        Ok((r, db * dy))
    }

    /// Residual Jacobian by central differences of whole shooting runs; a
    /// cross-check for [`Self::residual_and_jacobian`].
    pub fn fd_residual_jacobian(&self, p: &[f64], h: f64) -> Result<DMatrix<f64>> {
        let r = |q: &DVector<f64>| self.residual(q.as_slice());
        fd_jacobian(&r, &DVector::from_column_slice(p), h)
    }
}

fn gradient<G: Fn(&[f64]) -> f64>(g: G, y: &[f64]) -> DVector<f64> {
    let mut yp = y.to_vec();
    DVector::from_iterator(
        y.len(),
        (0..y.len()).map(|i| {
            let h = FD_REL * (1.0 + y[i].abs());
            yp[i] = y[i] + h;
            let a = g(&yp);
            yp[i] = y[i] - h;
            let b = g(&yp);
            yp[i] = y[i];
            (a - b) / (2.0 * h)
        }),
    )
}
