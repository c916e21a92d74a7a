//! Exact TCL objects in closed form: Sigma(t), P(t), J(t), the asymptotic
//! projector P^(eps), the reduction maps (K, F) and the time-dependent
//! generator F(t).
//!
//! Two evaluation backends share the same formulas. The spectral backend
//! expands `exp(Lt)` in the biorthonormal eigenbasis of `L`; the propagator
//! backend uses scaling-and-squaring exponentials and is used when the
//! eigenvector matrix of `L` is too ill-conditioned to be trusted.

use crate::error::{Error, Result};
use crate::liouvillian::SplitLiouvillian;
use crate::numerics::{
    dagger, eig_biorthonormal, expm, expm_pade, frobenius, identity, inverse_with_cond, rk4_step,
    scale_rows, select_columns, select_rows, CMatrix, CVector, EigenSystem, C64, ZERO,
};
use crate::spectral::{
    analyze, eigen_clusters, reduced_basis, ModeMatching, ReducedBasis, SpectralData,
    MATCH_MIN_OVERLAP,
};

/// Largest accepted condition number of `A(t)`.
pub const A_COND_MAX: f64 = 1e10;
/// Largest accepted condition number of `N` and `M`.
pub const N_COND_MAX: f64 = 1e8;
/// Horizon of the propagator backend's long-time limit, in units of 1/gap.
pub const ASYMPTOTIC_HORIZON: f64 = 60.0;

/// Eigen-data of the full generator used by the spectral backend.
#[derive(Debug, Clone)]
pub struct SpectralParts {
    pub spec0: SpectralData,
    pub eig: EigenSystem,
    /// Indices (into `eig`) of the perturbed surviving modes, ordered so
    /// that entry k continues unperturbed surviving mode k.
    pub surviving: Vec<usize>,
    /// Matching of the perturbed surviving modes to the unperturbed ones.
    pub matching: ModeMatching,
    /// `N_{ss'} = <l_s | r_{s'}^(eps)>`.
    pub n: CMatrix,
    /// `M_{ss'} = <l_s^(eps) | r_{s'}>`.
    pub m: CMatrix,
    /// `chi_L^dag R`.
    x: CMatrix,
    /// `R^-1 chi_R`.
    y: CMatrix,
}

#[derive(Debug, Clone)]
pub enum Backend {
    Spectral(Box<SpectralParts>),
    Propagator,
}

#[derive(Debug, Clone)]
pub struct TclContext {
    pub sys: SplitLiouvillian,
    /// Full generator `L0 + eps L1`.
    pub l: CMatrix,
    pub basis: ReducedBasis,
    /// Gap of `L0`.
    pub gap: f64,
    pub backend: Backend,
    /// `K = P^(eps) chi_R`.
    pub k: CMatrix,
}

/// Reduction maps with `L K = K F` and `chi_L^dag K = I`.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    pub k: CMatrix,
    pub f: CMatrix,
}

impl ReducedModel {
    /// `||L K - K F||_F / ||K||_F`.
    pub fn invariance_residual(&self, l: &CMatrix) -> f64 {
        frobenius(&(l.dot(&self.k) - self.k.dot(&self.f))) / frobenius(&self.k)
    }

    /// `||chi_L^dag K - I||_F`.
    pub fn gauge_residual(&self, basis: &ReducedBasis) -> f64 {
        frobenius(&(basis.chi_l_dag.dot(&self.k) - identity(self.f.nrows())))
    }
}

/// Norms at one time point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormSample {
    pub t: f64,
    /// `||P(t) - P^(eps)||_F`.
    pub dp: f64,
    /// `||J(t)||_F`.
    pub j: f64,
    /// `||(P(t) - P^(eps)) vec rho(t)||` for the supplied initial state.
    pub state_dp: Option<f64>,
    /// `||vec rho(t) - P(t) vec rho(t)||`.
    pub state_resid: Option<f64>,
}

impl TclContext {
    /// Spectral backend with the surviving basis of `analyze(L0)`.
    pub fn new(sys: &SplitLiouvillian, tol_s: Option<f64>) -> Result<Self> {
        let spec0 = analyze(&sys.l0, tol_s)?;
        Self::with_spectral(sys, spec0)
    }

    /// Spectral backend with a caller-prepared `spec0` (for instance one
    /// whose surviving basis was replaced by `with_surviving_basis`).
    pub fn with_spectral(sys: &SplitLiouvillian, spec0: SpectralData) -> Result<Self> {
        let l = sys.full();
        let basis = reduced_basis(&spec0);
        let eig = eig_biorthonormal(&l)?;
        let n_s = basis.n_s();
        let x = basis.chi_l_dag.dot(&eig.right);
        let y = eig.left_dag.dot(&basis.chi_r);

        // Surviving weight ||P_inv r_i|| / ||r_i|| with P_inv r_i = chi_R x_i.
        let gram_r = dagger(&basis.chi_r).dot(&basis.chi_r);
        let mut weights: Vec<(f64, usize)> = (0..eig.len())
            .map(|i| {
                let xi = x.column(i).to_owned();
                let w2 = xi.mapv(|z| z.conj()).dot(&gram_r.dot(&xi)).re.max(0.0);
                let rn2: f64 = eig.right.column(i).iter().map(|z| z.norm_sqr()).sum();
                ((w2 / rn2).sqrt(), i)
            })
            .collect();
        weights.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        if weights[n_s - 1].0 <= MATCH_MIN_OVERLAP
            || weights.get(n_s).is_some_and(|w| w.0 > MATCH_MIN_OVERLAP)
        {
            return Err(Error::AmbiguousMatching(format!(
                "surviving weights do not split cleanly: {:?}",
                weights
                    .iter()
                    .take(n_s + 1)
                    .map(|w| w.0)
                    .collect::<Vec<_>>()
            )));
        }
        let candidates: Vec<usize> = weights[..n_s].iter().map(|w| w.1).collect();
        let (order, overlaps) = match_surviving(&spec0, &basis, &x, &eig, &candidates)?;
        let surviving: Vec<usize> = order;
        let matching = ModeMatching {
            perm: spec0.surviving.clone(),
            overlaps,
        };

        let r_s = select_columns(&eig.right, &surviving);
        let n = basis.chi_l_dag.dot(&r_s);
        let (n_inv, cond) = inverse_with_cond(&n);
        let n_inv = n_inv
            .filter(|_| cond <= N_COND_MAX)
            .ok_or(Error::SingularN { cond })?;
        let m = select_rows(&eig.left_dag, &surviving).dot(&basis.chi_r);
        let m_cond = inverse_with_cond(&m).1;
        if m_cond > N_COND_MAX {
            return Err(Error::SingularN { cond: m_cond });
        }
        let k = r_s.dot(&n_inv);
        let gap = spec0.gap;
        Ok(TclContext {
            sys: sys.clone(),
            l,
            basis,
            gap,
            backend: Backend::Spectral(Box::new(SpectralParts {
                spec0,
                eig,
                surviving,
                matching,
                n,
                m,
                x,
                y,
            })),
            k,
        })
    }

    /// Propagator backend. `K = lim_{t->oo} exp(Lt) chi_R A(t)^-1`, taken at
    /// `t = ASYMPTOTIC_HORIZON / gap`.
    pub fn propagator(sys: &SplitLiouvillian, basis: ReducedBasis, gap: f64) -> Result<Self> {
        if !(gap > 0.0) {
            return Err(Error::NoGap(format!("gap {gap} must be positive")));
        }
        let l = sys.full();
        let horizon = ASYMPTOTIC_HORIZON / gap;
        let h = 1.0 / gap;
        let steps = (horizon / h).ceil() as usize;
        let step = expm_pade(&l.mapv(|z| z * h))?;
        let mut u = basis.chi_r.clone();
        for _ in 0..steps {
            u = step.dot(&u);
            // Re-gauge to keep the columns O(1): u <- u (chi_L^dag u)^-1.
            let a = basis.chi_l_dag.dot(&u);
            let (a_inv, cond) = inverse_with_cond(&a);
            let a_inv = a_inv
                .filter(|_| cond <= A_COND_MAX)
                .ok_or(Error::SingularA { t: horizon, cond })?;
            u = u.dot(&a_inv);
        }
        Ok(TclContext {
            sys: sys.clone(),
            l,
            basis,
            gap,
            backend: Backend::Propagator,
            k: u,
        })
    }

    pub fn n_s(&self) -> usize {
        self.basis.n_s()
    }

    pub fn super_dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn spectral_parts(&self) -> Option<&SpectralParts> {
        match &self.backend {
            Backend::Spectral(p) => Some(p),
            Backend::Propagator => None,
        }
    }

    pub fn q_inv(&self) -> CMatrix {
        identity(self.super_dim()) - self.basis.projector()
    }

    /// `exp(Lt)`.
    pub fn propagator_at(&self, t: f64) -> Result<CMatrix> {
        match &self.backend {
            Backend::Spectral(p) => Ok(p.eig.reconstruct(|z| (z * t).exp())),
            Backend::Propagator => expm_pade(&self.l.mapv(|z| z * t)),
        }
    }

    /// `(exp(Lt) chi_R, A(t))` with `A(t) = chi_L^dag exp(Lt) chi_R`.
    fn propagate_basis(&self, t: f64) -> Result<(CMatrix, CMatrix)> {
        match &self.backend {
            Backend::Spectral(p) => {
                let e = p.eig.values.mapv(|z| (z * t).exp());
                let ey = scale_rows(&e, &p.y);
                Ok((p.eig.right.dot(&ey), p.x.dot(&ey)))
            }
            Backend::Propagator => {
                let u = self.propagator_at(t)?.dot(&self.basis.chi_r);
                let a = self.basis.chi_l_dag.dot(&u);
                Ok((u, a))
            }
        }
    }

    fn a_inverse(a: &CMatrix, t: f64) -> Result<CMatrix> {
        let (inv, cond) = inverse_with_cond(a);
        inv.filter(|_| cond <= A_COND_MAX)
            .ok_or(Error::SingularA { t, cond })
    }

    /// `U(t) = exp(Lt) chi_R A(t)^-1`, so that `P(t) = U(t) chi_L^dag`.
    pub fn u_t(&self, t: f64) -> Result<CMatrix> {
        let (ec, a) = self.propagate_basis(t)?;
        Ok(ec.dot(&Self::a_inverse(&a, t)?))
    }

    /// `Sigma(t) = Q - exp(QLQ t) Q exp(-Lt)`.
    pub fn sigma_inv(&self, t: f64) -> Result<CMatrix> {
        let q = self.q_inv();
        let qlq = q.dot(&self.l).dot(&q);
        let back = match &self.backend {
            Backend::Spectral(p) => p.eig.reconstruct(|z| (-z * t).exp()),
            Backend::Propagator => expm(&self.l, -t),
        };
        Ok(&q - &expm(&qlq, t).dot(&q).dot(&back))
    }

    /// `P(t) = exp(Lt) chi_R A(t)^-1 chi_L^dag`.
    pub fn p_inv_t(&self, t: f64) -> Result<CMatrix> {
        Ok(self.u_t(t)?.dot(&self.basis.chi_l_dag))
    }

    /// `J(t) = (I - P(t)) exp(Lt) Q`.
    pub fn j_inv_t(&self, t: f64) -> Result<CMatrix> {
        let e = self.propagator_at(t)?;
        let eq = &e - &e.dot(&self.basis.chi_r).dot(&self.basis.chi_l_dag);
        let u = self.u_t(t)?;
        Ok(&eq - &u.dot(&self.basis.chi_l_dag.dot(&eq)))
    }

    /// `P^(eps) = K chi_L^dag`.
    pub fn p_inv_asymptotic(&self) -> CMatrix {
        self.k.dot(&self.basis.chi_l_dag)
    }

    /// `K = P^(eps) chi_R`, `F = chi_L^dag L P^(eps) chi_R`.
    pub fn reduce(&self) -> ReducedModel {
        let f = self.basis.chi_l_dag.dot(&self.l.dot(&self.k));
        ReducedModel {
            k: self.k.clone(),
            f,
        }
    }

    /// `||(I - P^(eps)) L P^(eps)||_F`, evaluated without forming d^2 x d^2 products.
    pub fn prop2_residual(&self) -> f64 {
        let lk = self.l.dot(&self.k);
        let f = self.basis.chi_l_dag.dot(&lk);
        let z = &lk - &self.k.dot(&f);
        let zz = dagger(&z).dot(&z);
        let ll = self.basis.chi_l_dag.dot(&dagger(&self.basis.chi_l_dag));
        crate::numerics::trace_of_product(zz.view(), ll.t())
            .re
            .max(0.0)
            .sqrt()
    }

    /// `F(t) = chi_L^dag L P(t) chi_R`.
    pub fn f_tcl_t(&self, t: f64) -> Result<CMatrix> {
        match &self.backend {
            Backend::Spectral(p) => {
                let e = p.eig.values.mapv(|z| (z * t).exp());
                let ey = scale_rows(&e, &p.y);
                let a = p.x.dot(&ey);
                let lam_e = scale_rows(&p.eig.values, &ey);
                Ok(p.x.dot(&lam_e).dot(&Self::a_inverse(&a, t)?))
            }
            Backend::Propagator => {
                let u = self.u_t(t)?;
                Ok(self.basis.chi_l_dag.dot(&self.l.dot(&u)))
            }
        }
    }

    /// `||P(t) - P^(eps)||_F` from `U(t)`: the difference is `(U - K) chi_L^dag`.
    fn dp_norm(&self, u: &CMatrix, gram_l: &CMatrix) -> f64 {
        let w = u - &self.k;
        let ww = dagger(&w).dot(&w);
        crate::numerics::trace_of_product(ww.view(), gram_l.view())
            .re
            .max(0.0)
            .sqrt()
    }

    /// Norm series on `ts` (ascending). With `rho0` also the state-level
    /// quantities for `rho(t) = exp(Lt) vec rho0`. The propagator backend
    /// requires a uniform grid.
    pub fn norm_series(&self, ts: &[f64], rho0: Option<&CVector>) -> Result<Vec<NormSample>> {
        if ts.is_empty() {
            return Ok(Vec::new());
        }
        let chi_l = &self.basis.chi_l_dag;
        let gram_l = chi_l.dot(&dagger(chi_l)).t().to_owned();
        match &self.backend {
            Backend::Spectral(p) => self.norm_series_spectral(p, ts, rho0, &gram_l),
            Backend::Propagator => self.norm_series_propagator(ts, rho0, &gram_l),
        }
    }

    fn norm_series_spectral(
        &self,
        p: &SpectralParts,
        ts: &[f64],
        rho0: Option<&CVector>,
        gram_l: &CMatrix,
    ) -> Result<Vec<NormSample>> {
        let r = &p.eig.right;
        let chi_l = &self.basis.chi_l_dag;
        // ||J||^2 = sum_ij conj(e_i) e_j H_ij G_ji with B = R - U chi_L^dag R,
        // H = B^dag B, C = R^-1 Q, G = C C^dag.
        let rr = dagger(r).dot(r);
        let cq = &p.eig.left_dag - &p.y.dot(chi_l);
        let g = cq.dot(&dagger(&cq));
        drop(cq);
        let w0 = rho0.map(|v| p.eig.left_dag.dot(v));
        let mut out = Vec::with_capacity(ts.len());
        for &t in ts {
            let e = p.eig.values.mapv(|z| (z * t).exp());
            let ey = scale_rows(&e, &p.y);
            let a = p.x.dot(&ey);
            let a_inv = Self::a_inverse(&a, t)?;
            let u = r.dot(&ey).dot(&a_inv);
            let dp = self.dp_norm(&u, gram_l);

            let ru = dagger(r).dot(&u);
            let uu = dagger(&u).dot(&u);
            let v = &p.x;
            let ruv = ru.dot(v);
            let mut h = rr.clone();
            h -= &ruv;
            h -= &dagger(&ruv);
            h += &dagger(v).dot(&uu.dot(v));
            let j2 = quad_form(&e, &h, &g);
            let (state_dp, state_resid) = match &w0 {
                Some(w0) => {
                    let rho_t = r.dot(&(&e * w0));
                    let x_t = chi_l.dot(&rho_t);
                    let sd = crate::numerics::vec_norm(&(&u - &self.k).dot(&x_t));
                    let sr = crate::numerics::vec_norm(&(&rho_t - &u.dot(&x_t)));
                    (Some(sd), Some(sr))
                }
                None => (None, None),
            };
            out.push(NormSample {
                t,
                dp,
                j: j2.max(0.0).sqrt(),
                state_dp,
                state_resid,
            });
        }
        Ok(out)
    }

    fn norm_series_propagator(
        &self,
        ts: &[f64],
        rho0: Option<&CVector>,
        gram_l: &CMatrix,
    ) -> Result<Vec<NormSample>> {
        let h = if ts.len() > 1 { ts[1] - ts[0] } else { 0.0 };
        for w in ts.windows(2) {
            if ((w[1] - w[0]) - h).abs() > 1e-9 * h.abs().max(1.0) {
                return Err(Error::Config(
                    "propagator backend needs a uniform grid".into(),
                ));
            }
        }
        let chi_r = &self.basis.chi_r;
        let chi_l = &self.basis.chi_l_dag;
        let step = if ts.len() > 1 {
            Some(expm_pade(&self.l.mapv(|z| z * h))?)
        } else {
            None
        };
        let mut e = self.propagator_at(ts[0])?;
        let mut out = Vec::with_capacity(ts.len());
        for (idx, &t) in ts.iter().enumerate() {
            if idx > 0 {
                e = e.dot(step.as_ref().expect("uniform step"));
            }
            let ec = e.dot(chi_r);
            let a = chi_l.dot(&ec);
            let u = ec.dot(&Self::a_inverse(&a, t)?);
            let dp = self.dp_norm(&u, gram_l);
            // J = Z - U (chi_L^dag Z) with Z = exp(Lt) Q.
            let mut z = e.clone();
            z -= &ec.dot(chi_l);
            let w = chi_l.dot(&z);
            let pz = dagger(&u).dot(&z);
            let zz: f64 = z.iter().map(|x| x.norm_sqr()).sum();
            drop(z);
            let cross: C64 = w.iter().zip(pz.iter()).map(|(a, b)| a * b.conj()).sum();
            let uu = dagger(&u).dot(&u);
            let ww = w.dot(&dagger(&w));
            let quad = crate::numerics::trace_of_product(uu.view(), ww.view()).re;
            let j2 = zz - 2.0 * cross.re + quad;
            let (state_dp, state_resid) = match rho0 {
                Some(r0) => {
                    let rho_t = e.dot(r0);
                    let x_t = chi_l.dot(&rho_t);
                    let sd = crate::numerics::vec_norm(&(&u - &self.k).dot(&x_t));
                    let sr = crate::numerics::vec_norm(&(&rho_t - &u.dot(&x_t)));
                    (Some(sd), Some(sr))
                }
                None => (None, None),
            };
            out.push(NormSample {
                t,
                dp,
                j: j2.max(0.0).sqrt(),
                state_dp,
                state_resid,
            });
        }
        Ok(out)
    }
}

/// `sum_ij conj(e_i) e_j H_ij G_ji`.
fn quad_form(e: &CVector, h: &CMatrix, g: &CMatrix) -> f64 {
    let n = e.len();
    let mut acc = ZERO;
    for i in 0..n {
        let ei = e[i].conj();
        if ei == ZERO {
            continue;
        }
        let mut row = ZERO;
        for j in 0..n {
            row += e[j] * h[[i, j]] * g[[j, i]];
        }
        acc += ei * row;
    }
    acc.re
}

/// Orders the perturbed surviving candidates so that entry k continues
/// unperturbed surviving mode k, using cluster-projected overlaps.
fn match_surviving(
    spec0: &SpectralData,
    basis: &ReducedBasis,
    x: &CMatrix,
    eig: &EigenSystem,
    candidates: &[usize],
) -> Result<(Vec<usize>, Vec<f64>)> {
    let n_s = candidates.len();
    let vals: CVector = spec0.surviving_values().into_iter().collect();
    let scale = spec0
        .eig
        .values
        .iter()
        .map(|z| z.norm())
        .fold(1.0, f64::max);
    let clusters = eigen_clusters(&vals, 1e-8 * scale);
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (ci, &i) in candidates.iter().enumerate() {
        let rn: f64 = eig
            .right
            .column(i)
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt();
        for (c_idx, members) in clusters.iter().enumerate() {
            let coeffs: CVector = members.iter().map(|&k| x[[k, i]]).collect();
            let proj = select_columns(&basis.chi_r, members).dot(&coeffs);
            let ov = crate::numerics::vec_norm(&proj) / rn;
            pairs.push((ov, ci, c_idx));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut capacity: Vec<usize> = clusters.iter().map(|m| m.len()).collect();
    let mut cluster_of = vec![usize::MAX; n_s];
    let mut overlaps = vec![0.0; n_s];
    for (ov, ci, c_idx) in pairs {
        if cluster_of[ci] == usize::MAX && capacity[c_idx] > 0 && ov > MATCH_MIN_OVERLAP {
            cluster_of[ci] = c_idx;
            overlaps[ci] = ov;
            capacity[c_idx] -= 1;
        }
    }
    if cluster_of.contains(&usize::MAX) {
        return Err(Error::AmbiguousMatching(
            "perturbed surviving modes do not map onto unperturbed clusters".into(),
        ));
    }
    let mut slot_of = vec![usize::MAX; n_s];
    let mut slot_overlap = vec![0.0; n_s];
    for (c_idx, members) in clusters.iter().enumerate() {
        let mut local: Vec<(f64, usize, usize)> = Vec::new();
        for ci in (0..n_s).filter(|&ci| cluster_of[ci] == c_idx) {
            for &k in members {
                local.push((x[[k, candidates[ci]]].norm(), ci, k));
            }
        }
        local.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut taken = vec![false; n_s];
        let mut placed = vec![false; n_s];
        for (_, ci, k) in local {
            if !placed[ci] && !taken[k] {
                slot_of[k] = candidates[ci];
                slot_overlap[k] = overlaps[ci];
                placed[ci] = true;
                taken[k] = true;
            }
        }
    }
    Ok((slot_of, slot_overlap))
}

/// Generator of the reduced ODE `x' = F x`.
pub enum ReducedGenerator<'a> {
    Constant(&'a CMatrix),
    TimeDependent(&'a dyn Fn(f64) -> CMatrix),
}

/// RK4 integration of `x' = F(t) x` reporting `x` at every grid point.
/// Steps never exceed `dt`.
pub fn evolve_reduced(
    f: ReducedGenerator<'_>,
    x0: &CVector,
    grid: &[f64],
    dt: f64,
) -> Vec<CVector> {
    let rhs = |t: f64, x: &CVector| -> CVector {
        match &f {
            ReducedGenerator::Constant(m) => m.dot(x),
            ReducedGenerator::TimeDependent(g) => g(t).dot(x),
        }
    };
    let mut out = Vec::with_capacity(grid.len());
    let mut x = x0.clone();
    let mut t = grid.first().copied().unwrap_or(0.0);
    for &target in grid {
        let span = target - t;
        if span > 0.0 {
            let n = (span / dt).ceil().max(1.0) as usize;
            let h = span / n as f64;
            for k in 0..n {
                x = rk4_step(&rhs, t + k as f64 * h, &x, h);
            }
            t = target;
        }
        out.push(x.clone());
    }
    out
}
