//! Dense complex linear algebra: biorthonormal eigendecomposition, matrix
//! exponentials, norms, RK4 stepping and exponential fits.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use ndarray_linalg::{Eig, EigVals, Inverse, OperationNorm};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = Array2<C64>;
pub type CVector = Array1<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Largest accepted 1-norm condition number of a right-eigenvector matrix.
pub const DIAG_COND_MAX: f64 = 1e12;

/// `expm` uses the eigendecomposition only below this eigenvector condition
/// number; above it the Pade path is more accurate.
pub const EXPM_EIG_COND_MAX: f64 = 1e4;

/// Default floor below which samples are dropped from exponential fits.
pub const FIT_FLOOR: f64 = 1e-13;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> CMatrix {
    Array2::eye(n)
}

pub fn zeros(rows: usize, cols: usize) -> CMatrix {
    Array2::zeros((rows, cols))
}

/// Conjugate transpose.
pub fn dagger(m: &CMatrix) -> CMatrix {
    m.t().mapv(|z| z.conj())
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = zeros(ar * br, ac * bc);
    for ((i, j), &x) in a.indexed_iter() {
        if x == ZERO {
            continue;
        }
        out.slice_mut(s![i * br..(i + 1) * br, j * bc..(j + 1) * bc])
            .assign(&b.mapv(|y| x * y));
    }
    out
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn vec_norm(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diag().sum()
}

/// Largest elementwise modulus of `a - b`.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn inverse(m: &CMatrix) -> Result<CMatrix> {
    Ok(m.inv()?)
}

pub fn norm1(m: &CMatrix) -> f64 {
    m.opnorm_one().unwrap_or(f64::INFINITY)
}

/// 1-norm condition number; infinite when the inverse does not exist.
pub fn cond1(m: &CMatrix) -> f64 {
    match m.inv() {
        Ok(inv) => {
            let c = norm1(m) * norm1(&inv);
            if c.is_finite() {
                c
            } else {
                f64::INFINITY
            }
        }
        Err(_) => f64::INFINITY,
    }
}

/// Inverse together with its 1-norm condition number.
pub fn inverse_with_cond(m: &CMatrix) -> (Option<CMatrix>, f64) {
    match m.inv() {
        Ok(inv) if inv.iter().all(|z| z.is_finite()) => {
            let c = norm1(m) * norm1(&inv);
            (Some(inv), c)
        }
        _ => (None, f64::INFINITY),
    }
}

pub fn diag(values: &CVector) -> CMatrix {
    Array2::from_diag(values)
}

/// `m * diag(d)` without forming the diagonal matrix.
pub fn scale_columns(m: &CMatrix, d: &CVector) -> CMatrix {
    let mut out = m.clone();
    for (mut col, &x) in out.axis_iter_mut(Axis(1)).zip(d.iter()) {
        col.mapv_inplace(|z| z * x);
    }
    out
}

/// `diag(d) * m` without forming the diagonal matrix.
pub fn scale_rows(d: &CVector, m: &CMatrix) -> CMatrix {
    let mut out = m.clone();
    for (mut row, &x) in out.axis_iter_mut(Axis(0)).zip(d.iter()) {
        row.mapv_inplace(|z| z * x);
    }
    out
}

/// Eigenvalues only (no eigenvectors, no conditioning guard).
pub fn eigenvalues(m: &CMatrix) -> Result<CVector> {
    Ok(m.eigvals()?)
}

/// Eigendecomposition with left eigenvectors fixed by biorthonormality.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub values: CVector,
    /// Columns are right eigenvectors, each of unit 2-norm.
    pub right: CMatrix,
    /// Rows are conjugated left eigenvectors; `left_dag * right = I`.
    pub left_dag: CMatrix,
    /// 1-norm condition number of `right`.
    pub cond: f64,
}

impl EigenSystem {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `right * diag(f(values)) * left_dag`.
    pub fn reconstruct<F: Fn(C64) -> C64>(&self, f: F) -> CMatrix {
        let d = self.values.mapv(f);
        scale_columns(&self.right, &d).dot(&self.left_dag)
    }
}

/// Stable ordering: descending real part, then ascending imaginary part.
/// Real parts closer than `tol` are treated as equal so that round-off does
/// not reshuffle (numerically) degenerate modes.
pub fn spectral_order(values: &CVector) -> Vec<usize> {
    let scale = values.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let tol = 1e-9 * scale;
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].re.total_cmp(&values[a].re));
    let mut out = Vec::with_capacity(idx.len());
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && (values[idx[end - 1]].re - values[idx[end]].re).abs() <= tol {
            end += 1;
        }
        let mut group = idx[start..end].to_vec();
        group.sort_by(|&a, &b| {
            let (za, zb) = (values[a], values[b]);
            if (za.im - zb.im).abs() <= tol {
                zb.re.total_cmp(&za.re)
            } else {
                za.im.total_cmp(&zb.im)
            }
        });
        out.extend(group);
        start = end;
    }
    out
}

/// Right eigenvectors from LAPACK, left eigenvectors as rows of the inverse.
pub fn eig_biorthonormal(m: &CMatrix) -> Result<EigenSystem> {
    let (r, c) = m.dim();
    if r != c || r == 0 {
        return Err(Error::DimensionMismatch(format!("eig of {r}x{c} matrix")));
    }
    let (vals, vecs) = m.eig()?;
    let order = spectral_order(&vals);
    let values: CVector = order.iter().map(|&i| vals[i]).collect();
    let mut right = zeros(r, r);
    for (k, &i) in order.iter().enumerate() {
        let col = vecs.column(i);
        let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        // Deterministic phase: the largest component is made real positive.
        let pivot = col
            .iter()
            .copied()
            .max_by(|a, b| a.norm().total_cmp(&b.norm()))
            .unwrap_or(ONE);
        let phase = if pivot.norm() > 0.0 {
            pivot.conj() / pivot.norm()
        } else {
            ONE
        };
        right.column_mut(k).assign(&col.mapv(|z| z * phase / norm));
    }
    let (inv, cond) = inverse_with_cond(&right);
    match inv {
        Some(left_dag) if cond <= DIAG_COND_MAX => Ok(EigenSystem {
            values,
            right,
            left_dag,
            cond,
        }),
        _ => Err(Error::NonDiagonalizable { cond }),
    }
}

#[allow(clippy::excessive_precision)]
const PADE_THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA_13: f64 = 5.371920351148152;

fn pade_coeffs(m: usize) -> &'static [f64] {
    match m {
        3 => &[120.0, 60.0, 12.0, 1.0],
        5 => &[30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0],
        7 => &[
            17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
        ],
        9 => &[
            17643225600.0,
            8821612800.0,
            2075673600.0,
            302702400.0,
            30270240.0,
            2162160.0,
            110880.0,
            3960.0,
            90.0,
            1.0,
        ],
        _ => &[
            64764752532480000.0,
            32382376266240000.0,
            7771770303897600.0,
            1187353796428800.0,
            129060195264000.0,
            10559470521600.0,
            670442572800.0,
            33522128640.0,
            1323241920.0,
            40840800.0,
            960960.0,
            16380.0,
            182.0,
            1.0,
        ],
    }
}

fn axpy_real(acc: &mut CMatrix, alpha: f64, x: &CMatrix) {
    acc.zip_mut_with(x, |a, &b| *a += b * alpha);
}

/// exp(a) by scaling and squaring with Pade approximants.
pub fn expm_pade(a: &CMatrix) -> Result<CMatrix> {
    let n = a.nrows();
    let id = identity(n);
    let norm = norm1(a);
    if !norm.is_finite() {
        return Err(Error::Linalg("expm of non-finite matrix".into()));
    }
    let a2 = a.dot(a);
    for &(m, theta) in PADE_THETA.iter() {
        if norm <= theta {
            let b = pade_coeffs(m);
            let mut pows = vec![id.clone(), a2.clone()];
            while pows.len() <= m / 2 {
                let next = pows.last().unwrap().dot(&a2);
                pows.push(next);
            }
            let mut u = zeros(n, n);
            let mut v = zeros(n, n);
            for (k, p) in pows.iter().enumerate() {
                axpy_real(&mut u, b[2 * k + 1], p);
                axpy_real(&mut v, b[2 * k], p);
            }
            let u = a.dot(&u);
            return pade_solve(&u, &v);
        }
    }
    let s = ((norm / THETA_13).log2().ceil()).max(0.0) as i32;
    let scale = 0.5f64.powi(s);
    let a1 = a.mapv(|z| z * scale);
    let a2 = a2.mapv(|z| z * scale * scale);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);
    let b = pade_coeffs(13);
    let mut inner_u = zeros(n, n);
    axpy_real(&mut inner_u, b[13], &a6);
    axpy_real(&mut inner_u, b[11], &a4);
    axpy_real(&mut inner_u, b[9], &a2);
    let mut u = a6.dot(&inner_u);
    axpy_real(&mut u, b[7], &a6);
    axpy_real(&mut u, b[5], &a4);
    axpy_real(&mut u, b[3], &a2);
    axpy_real(&mut u, b[1], &id);
    let u = a1.dot(&u);
    let mut inner_v = zeros(n, n);
    axpy_real(&mut inner_v, b[12], &a6);
    axpy_real(&mut inner_v, b[10], &a4);
    axpy_real(&mut inner_v, b[8], &a2);
    let mut v = a6.dot(&inner_v);
    axpy_real(&mut v, b[6], &a6);
    axpy_real(&mut v, b[4], &a4);
    axpy_real(&mut v, b[2], &a2);
    axpy_real(&mut v, b[0], &id);
    let mut r = pade_solve(&u, &v)?;
    for _ in 0..s {
        r = r.dot(&r);
    }
    Ok(r)
}

fn pade_solve(u: &CMatrix, v: &CMatrix) -> Result<CMatrix> {
    let p = v + u;
    let q = v - u;
    Ok(q.inv()?.dot(&p))
}

/// exp(m t). Uses the eigendecomposition when it is well conditioned and
/// falls back to scaling and squaring otherwise.
pub fn expm(m: &CMatrix, t: f64) -> CMatrix {
    let n = m.nrows();
    if t == 0.0 {
        return identity(n);
    }
    if let Ok(es) = eig_biorthonormal(m) {
        if es.cond <= EXPM_EIG_COND_MAX {
            return es.reconstruct(|z| (z * t).exp());
        }
    }
    expm_pade(&m.mapv(|z| z * t)).expect("finite input has a Pade exponential")
}

/// One classical RK4 step for `y' = f(t, y)`.
pub fn rk4_step<F>(f: &F, t: f64, y: &CVector, dt: f64) -> CVector
where
    F: Fn(f64, &CVector) -> CVector,
{
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * dt, &(y + &k1.mapv(|z| z * (0.5 * dt))));
    let k3 = f(t + 0.5 * dt, &(y + &k2.mapv(|z| z * (0.5 * dt))));
    let k4 = f(t + dt, &(y + &k3.mapv(|z| z * dt)));
    let mut out = y.clone();
    out.zip_mut_with(&k1, |o, &a| *o += a * (dt / 6.0));
    out.zip_mut_with(&k2, |o, &a| *o += a * (dt / 3.0));
    out.zip_mut_with(&k3, |o, &a| *o += a * (dt / 3.0));
    out.zip_mut_with(&k4, |o, &a| *o += a * (dt / 6.0));
    out
}

/// Single-exponential fit `y = a exp(-b t)`.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct ExpFit {
    pub amplitude: f64,
    pub rate: f64,
    pub window: (f64, f64),
    /// Root-mean-square residual of `ln y` over the samples used.
    pub residual: f64,
    pub samples: usize,
}

/// Log-linear least squares over samples in `window` with `y > floor`.
pub fn fit_exponential(samples: &[(f64, f64)], window: (f64, f64), floor: f64) -> Result<ExpFit> {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|&&(t, y)| t >= window.0 && t <= window.1 && y > floor && y.is_finite())
        .map(|&(t, y)| (t, y.ln()))
        .collect();
    let n = pts.len();
    if n < 2 {
        return Err(Error::InsufficientSamples { found: n });
    }
    let nf = n as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let lm = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let stt = pts.iter().map(|p| (p.0 - tm).powi(2)).sum::<f64>();
    if stt == 0.0 {
        return Err(Error::InsufficientSamples { found: 1 });
    }
    let slope = pts.iter().map(|p| (p.0 - tm) * (p.1 - lm)).sum::<f64>() / stt;
    let intercept = lm - slope * tm;
    let residual = (pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / nf)
        .sqrt();
    Ok(ExpFit {
        amplitude: intercept.exp(),
        rate: -slope,
        window,
        residual,
        samples: n,
    })
}

/// Least-squares slope of `ln y` against `ln x` (power-law exponent).
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.0 > 0.0 && p.1 > 0.0)
        .map(|p| (p.0.ln(), p.1.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::InsufficientSamples { found: pts.len() });
    }
    let nf = pts.len() as f64;
    let xm = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx = pts.iter().map(|p| (p.0 - xm).powi(2)).sum::<f64>();
    let sxy = pts.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum::<f64>();
    Ok(sxy / sxx)
}

/// Columns `cols` of `m`, in the given order.
pub fn select_columns(m: &CMatrix, cols: &[usize]) -> CMatrix {
    m.select(Axis(1), cols)
}

/// Rows `rows` of `m`, in the given order.
pub fn select_rows(m: &CMatrix, rows: &[usize]) -> CMatrix {
    m.select(Axis(0), rows)
}

/// `tr(a b)` in O(n^2) without forming the product.
pub fn trace_of_product(a: ArrayView2<C64>, b: ArrayView2<C64>) -> C64 {
    let mut acc = ZERO;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[[i, k]] * b[[k, i]];
        }
    }
    acc
}
