//! Desingularized vector fields, impasse-point classification and
//! unstable-manifold seeds.
//!
//! A semi-linear equation `g(x) u'' = f(x, u, u')` is replaced by the
//! autonomous field `(g, g u', f)` on `(x, u, u')`-space. Solutions through a
//! proper impasse point (`g = 0`, `f = 0`) are the one-dimensional unstable
//! manifold of the resulting stationary point.

mod eigen;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::integrator::AutonomousField;

pub use eigen::{eigen_residual, unstable_eigenpair};

type Fx = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type Fxup = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;
type Fjet = Arc<dyn Fn(&[f64; 4]) -> f64 + Send + Sync>;
type Fvec = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
type Fmat = Arc<dyn Fn(f64, &[f64]) -> DMatrix<f64> + Send + Sync>;

/// Default absolute threshold below which `g`, `f` and the Vessiot
/// coefficients count as zero.
pub const ZERO_TOL: f64 = 1e-12;

const FD_STEP: f64 = 1e-6;

fn central<F: Fn(f64) -> f64>(f: F, at: f64) -> f64 {
    let h = FD_STEP * (1.0 + at.abs());
    (f(at + h) - f(at - h)) / (2.0 * h)
}

/// `g(x) u'' = f(x, u, u')` together with the partial derivatives needed for
/// the Jacobian. `f_u` and `f_x` fall back to central differences.
#[derive(Clone)]
pub struct SemiLinearProblem {
    g: Fx,
    dg: Fx,
    f: Fxup,
    f_up: Fxup,
    f_u: Option<Fxup>,
    f_x: Option<Fxup>,
}

impl std::fmt::Debug for SemiLinearProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SemiLinearProblem").finish_non_exhaustive()
    }
}

impl SemiLinearProblem {
    pub fn new<G, DG, F, FP>(g: G, dg: DG, f: F, f_up: FP) -> Self
    where
        G: Fn(f64) -> f64 + Send + Sync + 'static,
        DG: Fn(f64) -> f64 + Send + Sync + 'static,
        F: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        FP: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            g: Arc::new(g),
            dg: Arc::new(dg),
            f: Arc::new(f),
            f_up: Arc::new(f_up),
            f_u: None,
            f_x: None,
        }
    }

    pub fn with_f_u<F>(mut self, f_u: F) -> Self
    where
        F: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    {
        self.f_u = Some(Arc::new(f_u));
        self
    }

    pub fn with_f_x<F>(mut self, f_x: F) -> Self
    where
        F: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    {
        self.f_x = Some(Arc::new(f_x));
        self
    }

    pub fn g(&self, x: f64) -> f64 {
        (self.g)(x)
    }

    pub fn dg(&self, x: f64) -> f64 {
        (self.dg)(x)
    }

    pub fn f(&self, x: f64, u: f64, up: f64) -> f64 {
        (self.f)(x, u, up)
    }

    pub fn f_up(&self, x: f64, u: f64, up: f64) -> f64 {
        (self.f_up)(x, u, up)
    }

    pub fn f_u(&self, x: f64, u: f64, up: f64) -> f64 {
        match &self.f_u {
            Some(d) => d(x, u, up),
            None => central(|w| self.f(x, w, up), u),
        }
    }

    pub fn f_x(&self, x: f64, u: f64, up: f64) -> f64 {
        match &self.f_x {
            Some(d) => d(x, u, up),
            None => central(|w| self.f(w, u, up), x),
        }
    }

    /// The equivalent implicit form `F = g u'' − f`.
    pub fn to_implicit(&self) -> ImplicitProblem2 {
        let (a, b, c, d, e) = (self.clone(), self.clone(), self.clone(), self.clone(), self.clone());
        ImplicitProblem2::new(
            move |j| a.g(j[0]) * j[3] - a.f(j[0], j[1], j[2]),
            move |j| b.dg(j[0]) * j[3] - b.f_x(j[0], j[1], j[2]),
            move |j| -c.f_u(j[0], j[1], j[2]),
            move |j| -d.f_up(j[0], j[1], j[2]),
            move |j| e.g(j[0]),
        )
    }
}

/// Fully implicit second-order equation `F(x, u, u', u'') = 0` with its
/// partial derivatives. Arguments are passed as the jet `[x, u, u', u'']`.
#[derive(Clone)]
pub struct ImplicitProblem2 {
    f: Fjet,
    f_x: Fjet,
    f_u: Fjet,
    f_up: Fjet,
    f_upp: Fjet,
}

impl std::fmt::Debug for ImplicitProblem2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ImplicitProblem2").finish_non_exhaustive()
    }
}

impl ImplicitProblem2 {
    pub fn new<F, FX, FU, FP, FPP>(f: F, f_x: FX, f_u: FU, f_up: FP, f_upp: FPP) -> Self
    where
        F: Fn(&[f64; 4]) -> f64 + Send + Sync + 'static,
        FX: Fn(&[f64; 4]) -> f64 + Send + Sync + 'static,
        FU: Fn(&[f64; 4]) -> f64 + Send + Sync + 'static,
        FP: Fn(&[f64; 4]) -> f64 + Send + Sync + 'static,
        FPP: Fn(&[f64; 4]) -> f64 + Send + Sync + 'static,
    {
        Self {
            f: Arc::new(f),
            f_x: Arc::new(f_x),
            f_u: Arc::new(f_u),
            f_up: Arc::new(f_up),
            f_upp: Arc::new(f_upp),
        }
    }

    pub fn value(&self, jet: &[f64; 4]) -> f64 {
        (self.f)(jet)
    }

    /// `(F_x, F_u, F_u', F_u'')` at `jet`.
    pub fn partials(&self, jet: &[f64; 4]) -> [f64; 4] {
        [(self.f_x)(jet), (self.f_u)(jet), (self.f_up)(jet), (self.f_upp)(jet)]
    }
}

/// First-order system `g(x) u' = f(x, u)` with `u ∈ R^d` and `Γ = f_u`.
#[derive(Clone)]
pub struct FirstOrderSemiLinearSystem {
    d: usize,
    g: Fx,
    dg: Fx,
    f: Fvec,
    gamma: Fmat,
}

impl std::fmt::Debug for FirstOrderSemiLinearSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FirstOrderSemiLinearSystem")
            .field("d", &self.d)
            .finish_non_exhaustive()
    }
}

impl FirstOrderSemiLinearSystem {
    pub fn new<G, DG, F, J>(d: usize, g: G, dg: DG, f: F, gamma: J) -> Self
    where
        G: Fn(f64) -> f64 + Send + Sync + 'static,
        DG: Fn(f64) -> f64 + Send + Sync + 'static,
        F: Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
        J: Fn(f64, &[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        assert!(d > 0, "system dimension must be positive");
        Self {
            d,
            g: Arc::new(g),
            dg: Arc::new(dg),
            f: Arc::new(f),
            gamma: Arc::new(gamma),
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn f(&self, x: f64, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        (self.f)(x, u, &mut out);
        out
    }

    pub fn gamma(&self, x: f64, u: &[f64]) -> DMatrix<f64> {
        (self.gamma)(x, u)
    }
}

/// `(x, u, u') ↦ (g, g u', f)` with an analytic Jacobian.
pub fn projected_field(problem: &SemiLinearProblem) -> AutonomousField {
    let p = problem.clone();
    let q = problem.clone();
    AutonomousField::new(3, move |y, dy| {
        let g = p.g(y[0]);
        dy[0] = g;
        dy[1] = g * y[2];
        dy[2] = p.f(y[0], y[1], y[2]);
    })
    .with_jacobian(move |y| {
        let (x, u, up) = (y[0], y[1], y[2]);
        let g = q.g(x);
        let dg = q.dg(x);
        DMatrix::from_row_slice(
            3,
            3,
            &[
                dg,
                0.0,
                0.0,
                dg * up,
                0.0,
                g,
                q.f_x(x, u, up),
                q.f_u(x, u, up),
                q.f_up(x, u, up),
            ],
        )
    })
}

/// The Vessiot field on `(x, u, u', u'')`:
/// `(F_u'', u' F_u'', u'' F_u'', −F_x − u' F_u − u'' F_u')`.
pub fn vessiot_field_implicit(problem: &ImplicitProblem2) -> AutonomousField {
    let p = problem.clone();
    AutonomousField::new(4, move |y, dy| {
        let jet = [y[0], y[1], y[2], y[3]];
        let [fx, fu, fp, fpp] = p.partials(&jet);
        dy[0] = fpp;
        dy[1] = y[2] * fpp;
        dy[2] = y[3] * fpp;
        dy[3] = -fx - y[2] * fu - y[3] * fp;
    })
}

/// `(x, u) ↦ (g(x), f(x, u))` on `R^{1+d}`.
pub fn projected_field_sys1(problem: &FirstOrderSemiLinearSystem) -> AutonomousField {
    let d = problem.d;
    let p = problem.clone();
    let q = problem.clone();
    AutonomousField::new(1 + d, move |y, dy| {
        dy[0] = (p.g)(y[0]);
        (p.f)(y[0], &y[1..], &mut dy[1..]);
    })
    .with_jacobian(move |y| {
        let x = y[0];
        let u = &y[1..];
        let mut j = DMatrix::zeros(1 + d, 1 + d);
        j[(0, 0)] = (q.dg)(x);
        let h = FD_STEP * (1.0 + x.abs());
        let fp = q.f(x + h, u);
        let fm = q.f(x - h, u);
        for i in 0..d {
            j[(1 + i, 0)] = (fp[i] - fm[i]) / (2.0 * h);
        }
        j.view_mut((1, 1), (d, d)).copy_from(&q.gamma(x, u));
        j
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImpasseKind {
    NotSingular,
    ProperImpasse,
    ImproperImpasse,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Gamma {
    Scalar(f64),
    Matrix(DMatrix<f64>),
}

/// Classification of a point of a semi-linear problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpasseAnalysis {
    pub point: Vec<f64>,
    pub kind: ImpasseKind,
    pub delta: f64,
    pub gamma: Gamma,
    /// Jacobian of the projected field, present at stationary points.
    pub jacobian: Option<DMatrix<f64>>,
    /// The eigenpair of the single unstable eigenvalue, if there is one.
    pub unstable: Option<(f64, DVector<f64>)>,
    pub unique_solution: bool,
}

impl ImpasseAnalysis {
    pub fn unstable_eigenvalue(&self) -> Option<f64> {
        self.unstable.as_ref().map(|(l, _)| *l)
    }

    pub fn unstable_eigenvector(&self) -> Option<&DVector<f64>> {
        self.unstable.as_ref().map(|(_, v)| v)
    }
}

fn finish_analysis(
    point: Vec<f64>,
    kind: ImpasseKind,
    delta: f64,
    gamma: Gamma,
    field: &AutonomousField,
    unique_solution: bool,
) -> ImpasseAnalysis {
    let (jacobian, unstable) = if kind == ImpasseKind::ProperImpasse {
        let j = field.jacobian(&point);
        let pair = unstable_eigenpair(&j).ok();
        (Some(j), pair)
    } else {
        (None, None)
    };
    ImpasseAnalysis {
        point,
        kind,
        delta,
        gamma,
        jacobian,
        unstable,
        unique_solution,
    }
}

pub fn classify_semilinear(problem: &SemiLinearProblem, point: [f64; 3]) -> ImpasseAnalysis {
    classify_semilinear_with(problem, point, ZERO_TOL)
}

pub fn classify_semilinear_with(
    problem: &SemiLinearProblem,
    point: [f64; 3],
    zero_tol: f64,
) -> ImpasseAnalysis {
    let [x, u, up] = point;
    let delta = problem.dg(x);
    let gamma = problem.f_up(x, u, up);
    let kind = if problem.g(x).abs() > zero_tol {
        ImpasseKind::NotSingular
    } else if problem.f(x, u, up).abs() <= zero_tol {
        ImpasseKind::ProperImpasse
    } else {
        ImpasseKind::ImproperImpasse
    };
    let unique = kind == ImpasseKind::ProperImpasse
        && delta.abs() > zero_tol
        && gamma.abs() > zero_tol
        && delta.signum() != gamma.signum();
    finish_analysis(
        point.to_vec(),
        kind,
        delta,
        Gamma::Scalar(gamma),
        &projected_field(problem),
        unique,
    )
}

/// Classification of `(x, u)` for a first-order system. A unique solution is
/// reported when `δ ≠ 0` and every eigenvalue of `Γ` has real part of the
/// sign opposite to `δ`.
pub fn classify_system(problem: &FirstOrderSemiLinearSystem, x: f64, u: &[f64]) -> ImpasseAnalysis {
    assert_eq!(u.len(), problem.d, "state dimension mismatch");
    let delta = (problem.dg)(x);
    let gamma = problem.gamma(x, u);
    let kind = if (problem.g)(x).abs() > ZERO_TOL {
        ImpasseKind::NotSingular
    } else if problem.f(x, u).iter().all(|v| v.abs() <= ZERO_TOL) {
        ImpasseKind::ProperImpasse
    } else {
        ImpasseKind::ImproperImpasse
    };
    let unique = kind == ImpasseKind::ProperImpasse
        && delta.abs() > ZERO_TOL
        && gamma
            .clone()
            .complex_eigenvalues()
            .iter()
            .all(|z| z.re * delta < 0.0 && z.re.abs() > ZERO_TOL);
    let mut point = vec![x];
    point.extend_from_slice(u);
    finish_analysis(
        point,
        kind,
        delta,
        Gamma::Matrix(gamma),
        &projected_field_sys1(problem),
        unique,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingularityClass {
    RegularPoint,
    RegularSingularity,
    IrregularSingularity,
}

/// Tolerance on `|F|` for a point to count as lying on the equation.
pub const ON_EQUATION_TOL: f64 = 1e-9;

pub fn classify_implicit(problem: &ImplicitProblem2, jet: [f64; 4]) -> Result<SingularityClass> {
    classify_implicit_with(problem, jet, ZERO_TOL)
}

pub fn classify_implicit_with(
    problem: &ImplicitProblem2,
    jet: [f64; 4],
    zero_tol: f64,
) -> Result<SingularityClass> {
    let residual = problem.value(&jet);
    if !(residual.abs() <= ON_EQUATION_TOL) {
        return Err(Error::NotOnEquation { residual });
    }
    let [fx, fu, fp, fpp] = problem.partials(&jet);
    if fpp.abs() > zero_tol {
        return Ok(SingularityClass::RegularPoint);
    }
    let second = fx + jet[2] * fu + jet[3] * fp;
    Ok(if second.abs() > zero_tol {
        SingularityClass::RegularSingularity
    } else {
        SingularityClass::IrregularSingularity
    })
}

/// Jacobian of `field` at a stationary `point`.
pub fn stationary_jacobian(field: &AutonomousField, point: &[f64]) -> Result<DMatrix<f64>> {
    if point.len() != field.dim() {
        return Err(Error::InvalidInput(format!(
            "point has length {}, field dimension is {}",
            point.len(),
            field.dim()
        )));
    }
    let norm = field.eval(point).iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm <= 1e-9) {
        return Err(Error::NotStationary { norm });
    }
    Ok(field.jacobian(point))
}

/// Which end of the unstable manifold a seed lies on, measured by the sign of
/// its first (`x` or `t`) component relative to the stationary point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Branch {
    #[default]
    Increasing,
    Decreasing,
}

/// `point + ε v̂` with `v̂` the unit unstable eigenvector, oriented so that the
/// first component increases.
pub fn unstable_seed(analysis: &ImpasseAnalysis, epsilon: f64) -> Result<Vec<f64>> {
    unstable_seed_on(analysis, epsilon, Branch::Increasing)
}

pub fn unstable_seed_on(analysis: &ImpasseAnalysis, epsilon: f64, branch: Branch) -> Result<Vec<f64>> {
    let (_, v) = analysis.unstable.as_ref().ok_or(Error::NoUnstableDirection)?;
    seed_along(&analysis.point, v.as_slice(), epsilon, branch)
}

/// `point + ε v̂` for an arbitrary direction `v`; `v̂ = ±v/‖v‖` with the sign
/// chosen by `branch`.
pub fn seed_along(point: &[f64], v: &[f64], epsilon: f64, branch: Branch) -> Result<Vec<f64>> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
    }
    if v.len() != point.len() {
        return Err(Error::InvalidInput("direction and point differ in length".into()));
    }
    let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::NoUnstableDirection);
    }
    if v[0].abs() <= 1e-12 * norm {
        return Err(Error::NonTransversal);
    }
    let want = match branch {
        Branch::Increasing => 1.0,
        Branch::Decreasing => -1.0,
    };
    let scale = epsilon * want * v[0].signum() / norm;
    Ok(point.iter().zip(v).map(|(p, c)| p + scale * c).collect())
}
