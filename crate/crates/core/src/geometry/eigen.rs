//! Unstable eigenpairs of small real matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const UNSTABLE_THRESHOLD: f64 = 1e-10;
const MAX_DIM: usize = 16;

/// The eigenpair belonging to the single eigenvalue with positive real part.
///
/// The eigenvector has unit length; its sign is fixed so that the first
/// component with magnitude above `1e-12` is positive.
pub fn unstable_eigenpair(j: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    let n = j.nrows();
    if n == 0 || n != j.ncols() || n > MAX_DIM {
        return Err(Error::InvalidInput(format!(
            "expected a square matrix of dimension 1..={MAX_DIM}, got {}x{}",
            j.nrows(),
            j.ncols()
        )));
    }
    if j.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let lambda = if n == 2 {
        unstable_2x2(j)?
    } else {
        let ev = j.clone().complex_eigenvalues();
        let unstable: Vec<_> = ev.iter().filter(|z| z.re > UNSTABLE_THRESHOLD).collect();
        match unstable.len() {
            0 => return Err(Error::NoUnstableDirection),
            1 => unstable[0].re,
            count => return Err(Error::MultipleUnstable { count }),
        }
    };
    let v = null_vector(j, lambda);
    let v = orient(v);
    Ok((rayleigh(j, &v), v))
}

fn unstable_2x2(j: &DMatrix<f64>) -> Result<f64> {
    let (a, b, c, d) = (j[(0, 0)], j[(0, 1)], j[(1, 0)], j[(1, 1)]);
    let half_tr = 0.5 * (a + d);
    let det = a * d - b * c;
    let disc = half_tr * half_tr - det;
    if disc < 0.0 {
        // complex pair sharing the real part
        return if half_tr > UNSTABLE_THRESHOLD {
            Err(Error::MultipleUnstable { count: 2 })
        } else {
            Err(Error::NoUnstableDirection)
        };
    }
    let root = disc.sqrt();
    // avoid cancellation in the smaller root
    let big = half_tr + half_tr.signum() * root;
    let small = if big != 0.0 { det / big } else { half_tr - root };
    let (hi, lo) = if big >= small { (big, small) } else { (small, big) };
    match (hi > UNSTABLE_THRESHOLD, lo > UNSTABLE_THRESHOLD) {
        (true, false) => Ok(hi),
        (true, true) => Err(Error::MultipleUnstable { count: 2 }),
        _ => Err(Error::NoUnstableDirection),
    }
}

/// Unit vector spanning (approximately) the kernel of `J - λI`.
fn null_vector(j: &DMatrix<f64>, lambda: f64) -> DVector<f64> {
    let n = j.nrows();
    let shifted = j - DMatrix::identity(n, n) * lambda;
    let svd = shifted.clone().svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let k = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut v: DVector<f64> = vt.row(k).transpose();
    v /= v.norm();

    // a few inverse-iteration sweeps with a slightly perturbed shift
    let scale = 1.0 + j.amax();
    let mu = lambda + 1e-9 * scale;
    let lu = (j - DMatrix::identity(n, n) * mu).lu();
    for _ in 0..3 {
        match lu.solve(&v) {
            Some(w) if w.iter().all(|x| x.is_finite()) && w.norm() > 0.0 => {
                v = &w / w.norm();
            }
            _ => break,
        }
    }
    v
}

fn orient(mut v: DVector<f64>) -> DVector<f64> {
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
        if *first < 0.0 {
            v = -v;
        }
    }
    v
}

fn rayleigh(j: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    v.dot(&(j * v)) / v.dot(v)
}

/// `‖Jv − λv‖ / ‖v‖`.
pub fn eigen_residual(j: &DMatrix<f64>, lambda: f64, v: &DVector<f64>) -> f64 {
    (j * v - v * lambda).norm() / v.norm()
}
