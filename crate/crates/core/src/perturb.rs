//! Perturbative expansions in the eigenbasis of `L0`: asymptotic projector
//! orders 1-3, time-dependent orders 1-2, the geometric recursion for
//! `lambda_s = 0` and the Laplace-transform generator.
//!
//! With `L0 = sum_i lambda_i |r_i><l_i|`, every resolvent becomes a diagonal
//! scaling, so each order reduces to elementwise kernels on the matrix
//! `(L1)_ij = <l_i|L1|r_j>`.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::numerics::{c, frobenius, identity, inverse_with_cond, zeros, CMatrix, C64, ONE};
use crate::spectral::SpectralData;

/// `L1` in the biorthonormal eigenbasis of `L0`.
#[derive(Debug, Clone)]
pub struct EigenbasisOp {
    pub l1e: CMatrix,
    pub values: Vec<C64>,
    pub surviving: Vec<usize>,
    pub fast: Vec<usize>,
    pub gap: f64,
    pub tol_s: f64,
    right: CMatrix,
    left_dag: CMatrix,
}

/// `terms[n]` multiplies `eps^n`; `terms[0] = P_inv` for projector series.
#[derive(Debug, Clone)]
pub struct PerturbSeries {
    pub terms: Vec<CMatrix>,
}

impl PerturbSeries {
    /// `sum_{n <= order} eps^n terms[n]`.
    pub fn sum(&self, eps: f64, order: usize) -> CMatrix {
        let mut out = self.terms[0].clone();
        for (n, term) in self.terms.iter().enumerate().skip(1).take(order) {
            out.scaled_add(c(eps.powi(n as i32), 0.0), term);
        }
        out
    }
}

impl EigenbasisOp {
    pub fn new(spec0: &SpectralData, l1: &CMatrix) -> Result<Self> {
        let n = spec0.eig.len();
        if l1.dim() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "L1 is {:?}, spectrum has {n} modes",
                l1.dim()
            )));
        }
        let l1e = spec0.eig.left_dag.dot(l1).dot(&spec0.eig.right);
        Ok(EigenbasisOp {
            l1e,
            values: spec0.eig.values.to_vec(),
            surviving: spec0.surviving.clone(),
            fast: spec0.fast.clone(),
            gap: spec0.gap,
            tol_s: spec0.tol_s,
            right: spec0.eig.right.clone(),
            left_dag: spec0.eig.left_dag.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Eigenbasis matrix back to the vectorized-operator basis: `R m R^-1`.
    pub fn to_super(&self, m: &CMatrix) -> CMatrix {
        self.right.dot(m).dot(&self.left_dag)
    }

    /// Vectorized-operator matrix into the eigenbasis: `R^-1 m R`.
    pub fn from_super(&self, m: &CMatrix) -> CMatrix {
        self.left_dag.dot(m).dot(&self.right)
    }

    /// `P_inv` in the eigenbasis (diagonal ones on surviving modes).
    fn p_inv_e(&self) -> CMatrix {
        let mut p = zeros(self.dim(), self.dim());
        for &s in &self.surviving {
            p[[s, s]] = ONE;
        }
        p
    }

    fn delta(&self, s: usize, f: usize) -> C64 {
        self.values[s] - self.values[f]
    }

    fn check_denominators(&self) -> Result<()> {
        for &s in &self.surviving {
            for &f in &self.fast {
                let d = self.delta(s, f).norm();
                if d < 1e-12 * self.gap {
                    return Err(Error::DegenerateDenominator { value: d });
                }
            }
        }
        Ok(())
    }
}

/// Asymptotic projector orders `P_1..P_max_order` (max 3):
/// `P_n = sum_sf Pi_f Gamma_{n,fs} Pi_s / Delta_sf` with `Gamma_1 = L1`.
pub fn p_orders_asymptotic(b: &EigenbasisOp, max_order: usize) -> Result<PerturbSeries> {
    if max_order > 3 {
        return Err(Error::InvalidParams(format!("max_order {max_order} > 3")));
    }
    b.check_denominators()?;
    let l = &b.l1e;
    let (ss, ff) = (&b.surviving, &b.fast);
    let lam = &b.values;
    let n = b.dim();
    let mut gammas: Vec<CMatrix> = vec![zeros(n, n); max_order + 1];
    for &s in ss {
        let ls = lam[s];
        // Q/(lambda_s - L0) applied to L1|r_s>: u[f'] = L_{f's} / (lambda_s - lambda_f').
        let rq = |v: &dyn Fn(usize) -> C64| -> Vec<C64> {
            ff.iter().map(|&f1| v(f1) / (ls - lam[f1])).collect()
        };
        let u1 = rq(&|f1| l[[f1, s]]);
        for &f in ff {
            let lf = lam[f];
            let dsf = ls - lf;
            gammas[1][[f, s]] = l[[f, s]];
            if max_order >= 2 {
                let qq: C64 = ff.iter().zip(&u1).map(|(&f1, &u)| l[[f, f1]] * u).sum();
                let pp: C64 = ss
                    .iter()
                    .map(|&s1| l[[f, s1]] * l[[s1, s]] / (lam[s1] - lf))
                    .sum();
                gammas[2][[f, s]] = qq - pp;
            }
            if max_order >= 3 {
                // L1 Q/(ls-L0) L1 Q/(ls-L0) L1
                let u2: Vec<C64> = ff
                    .iter()
                    .map(|&f1| {
                        let inner: C64 = ff.iter().zip(&u1).map(|(&f2, &u)| l[[f1, f2]] * u).sum();
                        inner / (ls - lam[f1])
                    })
                    .collect();
                let t1: C64 = ff.iter().zip(&u2).map(|(&f1, &u)| l[[f, f1]] * u).sum();
                // L1 P/(L0-lf) L1 P/(L0-lf) L1
                let t2: C64 = ss
                    .iter()
                    .map(|&s1| {
                        let inner: C64 = ss
                            .iter()
                            .map(|&s2| l[[s1, s2]] * l[[s2, s]] / (lam[s2] - lf))
                            .sum();
                        l[[f, s1]] * inner / (lam[s1] - lf)
                    })
                    .sum();
                // - L1 Q/(ls-L0) L1 P/(L0-lf) L1
                let t3: C64 = ff
                    .iter()
                    .map(|&f1| {
                        let inner: C64 = ss
                            .iter()
                            .map(|&s1| l[[f1, s1]] * l[[s1, s]] / (lam[s1] - lf))
                            .sum();
                        l[[f, f1]] * inner / (ls - lam[f1])
                    })
                    .sum();
                // - L1 P/(L0-lf) L1 Q/(ls-L0) L1
                let t4: C64 = ss
                    .iter()
                    .map(|&s1| {
                        let inner: C64 = ff.iter().zip(&u1).map(|(&f1, &u)| l[[s1, f1]] * u).sum();
                        l[[f, s1]] * inner / (lam[s1] - lf)
                    })
                    .sum();
                // - sum_{s'f'} (D_sf / D_s'f') L_ff' L_f's' L_s's / (D_sf' D_s'f)
                let t5: C64 = ss
                    .iter()
                    .map(|&s1| {
                        let inner: C64 = ff
                            .iter()
                            .map(|&f1| {
                                l[[f, f1]] * l[[f1, s1]] / ((lam[s1] - lam[f1]) * (ls - lam[f1]))
                            })
                            .sum();
                        inner * l[[s1, s]] / (lam[s1] - lf)
                    })
                    .sum::<C64>()
                    * dsf;
                gammas[3][[f, s]] = t1 + t2 - t3 - t4 - t5;
            }
        }
    }
    let mut terms = vec![b.to_super(&b.p_inv_e())];
    for gamma in gammas.iter().skip(1) {
        let mut pe = zeros(n, n);
        for &s in ss {
            for &f in ff {
                pe[[f, s]] = gamma[[f, s]] / b.delta(s, f);
            }
        }
        terms.push(b.to_super(&pe));
    }
    Ok(PerturbSeries { terms })
}

/// `E(c, t) = (exp(ct) - 1) / c`, equal to `t` at `c = 0`.
fn kernel_e(cc: C64, t: f64, tiny: f64) -> C64 {
    if cc.norm() < tiny {
        c(t, 0.0) + cc * (t * t / 2.0)
    } else {
        ((cc * t).exp() - ONE) / cc
    }
}

/// `int_0^t dt1 exp(a t1) int_0^t1 dt2 exp(b t2)`.
fn kernel_d(a: C64, bb: C64, t: f64, tiny: f64) -> C64 {
    if bb.norm() < tiny {
        if a.norm() < tiny {
            c(t * t / 2.0, 0.0)
        } else {
            (a * t).exp() * t / a - ((a * t).exp() - ONE) / (a * a)
        }
    } else {
        (kernel_e(a + bb, t, tiny) - kernel_e(a, t, tiny)) / bb
    }
}

/// Time-dependent orders `P_1(t) = Sigma_1(t) P_inv` and `P_2(t) = Sigma_2(t) P_inv`.
pub fn p_orders_timedep(b: &EigenbasisOp, t: f64, max_order: usize) -> Result<PerturbSeries> {
    if max_order > 2 {
        return Err(Error::InvalidParams(format!(
            "time-dependent max_order {max_order} > 2"
        )));
    }
    let l = &b.l1e;
    let (ss, ff) = (&b.surviving, &b.fast);
    let lam = &b.values;
    let n = b.dim();
    let tiny = 1e-10 * b.gap;
    let mut p1 = zeros(n, n);
    let mut p2 = zeros(n, n);
    for &s in ss {
        for &f in ff {
            let a = lam[f] - lam[s];
            p1[[f, s]] = l[[f, s]] * kernel_e(a, t, tiny);
            if max_order >= 2 {
                let qq: C64 = ff
                    .iter()
                    .map(|&f1| l[[f, f1]] * l[[f1, s]] * kernel_d(a, lam[f1] - lam[f], t, tiny))
                    .sum();
                let pp: C64 = ss
                    .iter()
                    .map(|&s1| l[[f, s1]] * l[[s1, s]] * kernel_d(a, lam[s] - lam[s1], t, tiny))
                    .sum();
                p2[[f, s]] = qq - pp;
            }
        }
    }
    let mut terms = vec![b.to_super(&b.p_inv_e())];
    terms.push(b.to_super(&p1));
    if max_order >= 2 {
        terms.push(b.to_super(&p2));
    }
    terms.truncate(max_order + 1);
    Ok(PerturbSeries { terms })
}

/// Order-by-order reduction maps from the invariance condition for
/// `lambda_s = 0`: `K_0 = chi_R`, `F_0 = 0`,
/// `F_n = chi_L^dag [L1 K_{n-1} - sum_{m=1}^{n-1} K_m F_{n-m}]`,
/// `L0 K_n = K_0 F_n + sum_{m=1}^{n-1} K_m F_{n-m} - L1 K_{n-1}` solved on the
/// fast modes with the gauge `chi_L^dag K_n = 0`.
pub fn geometric_recursion(
    b: &EigenbasisOp,
    max_order: usize,
) -> Result<(Vec<CMatrix>, Vec<CMatrix>)> {
    for &s in &b.surviving {
        if b.values[s].norm() > b.tol_s {
            return Err(Error::NonzeroSurvivingEigenvalue {
                value: format!("{}", b.values[s]),
            });
        }
    }
    let n = b.dim();
    let n_s = b.surviving.len();
    // Eigenbasis K_n are n x n_s; F_n are n_s x n_s.
    let mut k_e: Vec<CMatrix> = Vec::with_capacity(max_order + 1);
    let mut f_s: Vec<CMatrix> = Vec::with_capacity(max_order + 1);
    let mut k0 = zeros(n, n_s);
    for (col, &s) in b.surviving.iter().enumerate() {
        k0[[s, col]] = ONE;
    }
    k_e.push(k0);
    f_s.push(zeros(n_s, n_s));
    let rows_s = |m: &CMatrix| -> CMatrix {
        Array2::from_shape_fn((n_s, m.ncols()), |(i, j)| m[[b.surviving[i], j]])
    };
    for order in 1..=max_order {
        let l1k = b.l1e.dot(&k_e[order - 1]);
        let mut tail = zeros(n, n_s);
        for m in 1..order {
            tail += &k_e[m].dot(&f_s[order - m]);
        }
        let f_n = rows_s(&(&l1k - &tail));
        let rhs = &k_e[0].dot(&f_n) + &tail - &l1k;
        let mut k_n = zeros(n, n_s);
        for &f in &b.fast {
            let lf = b.values[f];
            for j in 0..n_s {
                k_n[[f, j]] = rhs[[f, j]] / lf;
            }
        }
        k_e.push(k_n);
        f_s.push(f_n);
    }
    let k_series = k_e.iter().map(|k| b.right.dot(k)).collect();
    Ok((k_series, f_s))
}

/// Generator from the Laplace-transformed memory kernel at `z = 0`:
/// `M0 = PLP - PLQ (QLQ)^-1 QLP`, `M1 = -PLQ (QLQ)^-2 QLP`, returning
/// `[I - M1]^-1 M0` (or `M0` alone) on the reduced basis.
pub fn laplace_generator(b: &EigenbasisOp, eps: f64, include_m1: bool) -> Result<CMatrix> {
    let n_s = b.surviving.len();
    let n_f = b.fast.len();
    let full = {
        let mut m = b.l1e.mapv(|z| z * eps);
        for i in 0..b.dim() {
            m[[i, i]] += b.values[i];
        }
        m
    };
    let pick = |rows: &[usize], cols: &[usize]| -> CMatrix {
        Array2::from_shape_fn((rows.len(), cols.len()), |(i, j)| full[[rows[i], cols[j]]])
    };
    let (ss, ff) = (&b.surviving, &b.fast);
    let l_ss = pick(ss, ss);
    if n_f == 0 {
        return Ok(l_ss);
    }
    let l_sf = pick(ss, ff);
    let l_fs = pick(ff, ss);
    let l_ff = pick(ff, ff);
    let (ff_inv, cond) = inverse_with_cond(&l_ff);
    let ff_inv = ff_inv
        .filter(|_| cond < 1e14)
        .ok_or(Error::SingularFastBlock)?;
    let right = ff_inv.dot(&l_fs);
    let m0 = &l_ss - &l_sf.dot(&right);
    if !include_m1 {
        return Ok(m0);
    }
    let m1 = -l_sf.dot(&ff_inv.dot(&right));
    let (lhs_inv, cond) = inverse_with_cond(&(identity(n_s) - &m1));
    let lhs_inv = lhs_inv
        .filter(|_| cond < 1e14)
        .ok_or(Error::SingularFastBlock)?;
    Ok(lhs_inv.dot(&m0))
}

/// Largest deviation of the eigenbasis round trip `R (R^-1 L1 R) R^-1` from `L1`.
pub fn roundtrip_error(b: &EigenbasisOp, l1: &CMatrix) -> f64 {
    frobenius(&(b.to_super(&b.l1e) - l1)) / frobenius(l1).max(1.0)
}
