//! Vectorized superoperators under column stacking, GKSL generators,
//! bipartite composition and partial traces.
//!
//! `vec(A)[j*d + i] = A[i, j]`, so `vec(A rho B) = (B^T (x) A) vec(rho)`.
//! Composite operators on A (x) B use the row/column index `a*d_B + b`.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::numerics::{dagger, frobenius, identity, kron, zeros, CMatrix, CVector, C64, I, ZERO};

/// Subsystem dimensions, A first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HilbertSpec {
    pub dims: Vec<usize>,
}

impl HilbertSpec {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::DimensionMismatch(format!("invalid dims {dims:?}")));
        }
        Ok(HilbertSpec { dims })
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }
}

/// Generator `L = L0 + eps * L1` on vectorized operators.
#[derive(Debug, Clone)]
pub struct SplitLiouvillian {
    pub l0: CMatrix,
    pub l1: CMatrix,
    pub eps: f64,
    pub space: HilbertSpec,
}

impl SplitLiouvillian {
    pub fn new(l0: CMatrix, l1: CMatrix, eps: f64, space: HilbertSpec) -> Result<Self> {
        let d2 = space.total_dim().pow(2);
        for (name, m) in [("L0", &l0), ("L1", &l1)] {
            if m.dim() != (d2, d2) {
                return Err(Error::DimensionMismatch(format!(
                    "{name} is {:?}, expected {d2}x{d2}",
                    m.dim()
                )));
            }
        }
        if !(eps >= 0.0) {
            return Err(Error::InvalidParams(format!("eps = {eps} must be >= 0")));
        }
        Ok(SplitLiouvillian { l0, l1, eps, space })
    }

    /// Hilbert-space dimension d.
    pub fn dim(&self) -> usize {
        self.space.total_dim()
    }

    /// Superoperator dimension d^2.
    pub fn super_dim(&self) -> usize {
        self.l0.nrows()
    }

    pub fn full(&self) -> CMatrix {
        let mut l = self.l0.clone();
        let e = self.eps;
        l.zip_mut_with(&self.l1, |a, &b| *a += b * e);
        l
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        SplitLiouvillian {
            eps,
            ..self.clone()
        }
    }

    /// Same generator with `eps` multiplied by `factor` and `L1` divided by it.
    pub fn rescaled(&self, factor: f64) -> Self {
        SplitLiouvillian {
            l0: self.l0.clone(),
            l1: self.l1.mapv(|z| z / factor),
            eps: self.eps * factor,
            space: self.space.clone(),
        }
    }
}

pub fn vectorize(a: &CMatrix) -> CVector {
    // Column stacking equals row-major flattening of the transpose.
    a.t().iter().copied().collect()
}

pub fn devectorize(v: &CVector, d: usize) -> Result<CMatrix> {
    if v.len() != d * d {
        return Err(Error::DimensionMismatch(format!(
            "vector of length {} is not vec of a {d}x{d} operator",
            v.len()
        )));
    }
    Ok(Array2::from_shape_fn((d, d), |(i, j)| v[j * d + i]))
}

fn check_square(name: &str, a: &CMatrix) -> Result<usize> {
    let (r, c) = a.dim();
    if r != c || r == 0 {
        return Err(Error::DimensionMismatch(format!("{name} is {r}x{c}")));
    }
    Ok(r)
}

/// Superoperator of `rho -> A rho B`.
pub fn sandwich_super(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    let da = check_square("A", a)?;
    let db = check_square("B", b)?;
    if da != db {
        return Err(Error::DimensionMismatch(format!(
            "A is {da}x{da}, B is {db}x{db}"
        )));
    }
    Ok(kron(&b.t().to_owned(), a))
}

/// Superoperator of `rho -> -i[H, rho]`.
pub fn hamiltonian_super(h: &CMatrix) -> Result<CMatrix> {
    let d = check_square("H", h)?;
    let id = identity(d);
    let mut out = sandwich_super(h, &id)?;
    out -= &sandwich_super(&id, h)?;
    Ok(out.mapv(|z| -I * z))
}

/// Superoperator of `D[L] rho = L rho L^dag - (L^dag L rho + rho L^dag L)/2`.
pub fn dissipator_super(l: &CMatrix) -> Result<CMatrix> {
    let d = check_square("L", l)?;
    let id = identity(d);
    let ld = dagger(l);
    let ldl = ld.dot(l);
    let mut out = sandwich_super(l, &ld)?;
    out.scaled_add(C64::new(-0.5, 0.0), &sandwich_super(&ldl, &id)?);
    out.scaled_add(C64::new(-0.5, 0.0), &sandwich_super(&id, &ldl)?);
    Ok(out)
}

/// Generator of `rho' = -i[H, rho] + sum_k rate_k D[L_k] rho`.
pub fn build_gksl(h: &CMatrix, jumps: &[(f64, CMatrix)]) -> Result<CMatrix> {
    let d = check_square("H", h)?;
    let deviation = frobenius(&(h - &dagger(h)));
    if deviation > 1e-10 {
        return Err(Error::NonHermitianH { deviation });
    }
    let mut out = hamiltonian_super(h)?;
    for (rate, l) in jumps {
        if !(*rate >= 0.0) {
            return Err(Error::InvalidParams(format!("negative rate {rate}")));
        }
        if l.dim() != (d, d) {
            return Err(Error::DimensionMismatch(format!(
                "jump operator is {:?}, H is {d}x{d}",
                l.dim()
            )));
        }
        out.scaled_add(C64::new(*rate, 0.0), &dissipator_super(l)?);
    }
    Ok(out)
}

/// Which factor of A (x) B a subsystem superoperator acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Factor {
    A,
    B,
}

/// Adds `S (x) id` (or `id (x) S`) on the composite vectorized space to `out`.
pub fn lift_into(
    out: &mut CMatrix,
    s: &CMatrix,
    factor: Factor,
    d_a: usize,
    d_b: usize,
) -> Result<()> {
    let d = d_a * d_b;
    let ds = match factor {
        Factor::A => d_a,
        Factor::B => d_b,
    };
    if s.dim() != (ds * ds, ds * ds) || out.dim() != (d * d, d * d) {
        return Err(Error::DimensionMismatch(format!(
            "lift of {:?} superoperator into d_A={d_a}, d_B={d_b}",
            s.dim()
        )));
    }
    let composite = |a: usize, b: usize, ap: usize, bp: usize| (ap * d_b + bp) * d + a * d_b + b;
    for ((p_out, p_in), &x) in s.indexed_iter() {
        if x == ZERO {
            continue;
        }
        let (i, j) = (p_out % ds, p_out / ds);
        let (k, l) = (p_in % ds, p_in / ds);
        let other = match factor {
            Factor::A => d_b,
            Factor::B => d_a,
        };
        for u in 0..other {
            for v in 0..other {
                let (row, col) = match factor {
                    Factor::A => (composite(i, u, j, v), composite(k, u, l, v)),
                    Factor::B => (composite(u, i, v, j), composite(u, k, v, l)),
                };
                out[[row, col]] += x;
            }
        }
    }
    Ok(())
}

/// `L0 = L_A (x) id + id (x) L_B`, `L1 = L_int`.
pub fn compose_bipartite(
    l_a: &CMatrix,
    l_b: &CMatrix,
    l_int: &CMatrix,
    d_a: usize,
    d_b: usize,
    eps: f64,
) -> Result<SplitLiouvillian> {
    let d = d_a * d_b;
    if l_int.dim() != (d * d, d * d) {
        return Err(Error::DimensionMismatch(format!(
            "interaction is {:?}, expected {}x{}",
            l_int.dim(),
            d * d,
            d * d
        )));
    }
    let mut l0 = zeros(d * d, d * d);
    lift_into(&mut l0, l_a, Factor::A, d_a, d_b)?;
    lift_into(&mut l0, l_b, Factor::B, d_a, d_b)?;
    SplitLiouvillian::new(l0, l_int.clone(), eps, HilbertSpec::new(vec![d_a, d_b])?)
}

/// `(tr_A rho)[b, b'] = sum_a rho[(a,b), (a,b')]`.
pub fn partial_trace_a(rho: &CMatrix, d_a: usize, d_b: usize) -> Result<CMatrix> {
    if rho.dim() != (d_a * d_b, d_a * d_b) {
        return Err(Error::DimensionMismatch(format!(
            "rho is {:?}, expected {}x{}",
            rho.dim(),
            d_a * d_b,
            d_a * d_b
        )));
    }
    Ok(Array2::from_shape_fn((d_b, d_b), |(b, bp)| {
        (0..d_a).map(|a| rho[[a * d_b + b, a * d_b + bp]]).sum()
    }))
}

/// Row vector `vec(I)^dag`; a generator preserves trace iff it annihilates
/// this row from the left.
pub fn trace_functional(d: usize) -> CVector {
    vectorize(&identity(d))
}

/// Largest entry of `vec(I)^dag L`.
pub fn trace_defect(l: &CMatrix, d: usize) -> f64 {
    let t = trace_functional(d);
    t.dot(l).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Matrix unit `|i><j|` of dimension d.
pub fn matrix_unit(d: usize, i: usize, j: usize) -> CMatrix {
    let mut m = zeros(d, d);
    m[[i, j]] = C64::new(1.0, 0.0);
    m
}
