//! The Lambda-type three-level system and the damped-oscillator Rabi model,
//! plus closed-form second-order references for the Rabi model.

use ndarray::Array2;
use ndarray_linalg::Solve;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::liouvillian::{
    build_gksl, compose_bipartite, hamiltonian_super, matrix_unit, sandwich_super,
    trace_functional, vectorize, HilbertSpec, SplitLiouvillian,
};
use crate::numerics::{
    c, dagger, eigenvalues, identity, kron, zeros, CMatrix, CVector, C64, I, ONE,
};
use crate::spectral::ReducedBasis;

/// Three-level Lambda system, frequencies and rates in units of Gamma.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThreeLevelParams {
    pub omega1: f64,
    pub omega_e: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    pub g0: f64,
    pub g1: f64,
}

impl Default for ThreeLevelParams {
    fn default() -> Self {
        ThreeLevelParams {
            omega1: 0.5,
            omega_e: 1.0,
            gamma0: 0.5,
            gamma1: 0.5,
            g0: 0.1,
            g1: 0.1,
        }
    }
}

impl ThreeLevelParams {
    pub fn with_coupling(self, g: f64) -> Self {
        ThreeLevelParams {
            g0: g,
            g1: g,
            ..self
        }
    }

    fn validate(&self) -> Result<()> {
        let all = [
            self.omega1,
            self.omega_e,
            self.gamma0,
            self.gamma1,
            self.g0,
            self.g1,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParams(
                "non-finite three-level parameter".into(),
            ));
        }
        if self.gamma0 < 0.0 || self.gamma1 < 0.0 || self.gamma0 + self.gamma1 <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "need Gamma0, Gamma1 >= 0 with a positive sum, got {} and {}",
                self.gamma0, self.gamma1
            )));
        }
        Ok(())
    }
}

/// Basis order {|0>, |1>, |e>}.
pub fn three_level(p: &ThreeLevelParams) -> Result<SplitLiouvillian> {
    p.validate()?;
    let (k0, k1, ke) = (0, 1, 2);
    let mut h0 = zeros(3, 3);
    h0[[k1, k1]] = c(p.omega1, 0.0);
    h0[[ke, ke]] = c(p.omega_e, 0.0);
    let jumps = [
        (2.0 * p.gamma0, matrix_unit(3, k0, ke)),
        (2.0 * p.gamma1, matrix_unit(3, k1, ke)),
    ];
    let l0 = build_gksl(&h0, &jumps)?;
    let eps = p.g0.abs().max(p.g1.abs());
    let l1 = if eps > 0.0 {
        let mut v = zeros(3, 3);
        v[[k0, ke]] = c(p.g0 / eps, 0.0);
        v[[k1, ke]] = c(p.g1 / eps, 0.0);
        let v = &v + &dagger(&v);
        hamiltonian_super(&v)?
    } else {
        zeros(9, 9)
    };
    SplitLiouvillian::new(l0, l1, eps, HilbertSpec::new(vec![3])?)
}

/// Rabi model with a damped oscillator, frequencies and rates in units of kappa.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RabiParams {
    pub omega_ph: f64,
    pub omega_eg: f64,
    pub kappa: f64,
    pub g: f64,
    pub n_tr: usize,
}

impl Default for RabiParams {
    fn default() -> Self {
        RabiParams {
            omega_ph: 1.0,
            omega_eg: 1.0,
            kappa: 1.0,
            g: 0.05,
            n_tr: 10,
        }
    }
}

impl RabiParams {
    /// `gamma_+ = kappa/2 + i(omega_ph + omega_eg)`.
    pub fn gamma_plus(&self) -> C64 {
        c(0.5 * self.kappa, self.omega_ph + self.omega_eg)
    }

    /// `gamma_- = kappa/2 + i(omega_ph - omega_eg)`.
    pub fn gamma_minus(&self) -> C64 {
        c(0.5 * self.kappa, self.omega_ph - self.omega_eg)
    }

    pub fn with_g(self, g: f64) -> Self {
        RabiParams { g, ..self }
    }

    pub fn with_n_tr(self, n_tr: usize) -> Self {
        RabiParams { n_tr, ..self }
    }

    /// Hilbert-space dimension `2 n_tr`.
    pub fn dim(&self) -> usize {
        2 * self.n_tr
    }

    fn validate(&self) -> Result<()> {
        if self.n_tr < 2 {
            return Err(Error::InvalidParams(format!("n_tr = {} < 2", self.n_tr)));
        }
        if !(self.kappa > 0.0) || !(self.g >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "need kappa > 0 and g >= 0, got kappa = {}, g = {}",
                self.kappa, self.g
            )));
        }
        if !self.omega_ph.is_finite()
            || !self.omega_eg.is_finite()
            || !self.kappa.is_finite()
            || !self.g.is_finite()
        {
            return Err(Error::InvalidParams("non-finite Rabi parameter".into()));
        }
        Ok(())
    }
}

/// Truncated annihilation operator, `<n-1|a|n> = sqrt(n)` for `n < n_tr`.
pub fn annihilation(n_tr: usize) -> CMatrix {
    let mut a = zeros(n_tr, n_tr);
    for n in 1..n_tr {
        a[[n - 1, n]] = c((n as f64).sqrt(), 0.0);
    }
    a
}

/// Qubit operators in the basis {|g>, |e>}.
pub struct Qubit;

impl Qubit {
    pub fn sigma_z() -> CMatrix {
        Array2::from_diag(&ndarray::arr1(&[c(-1.0, 0.0), ONE]))
    }

    /// `sigma_+ = |e><g|`.
    pub fn sigma_plus() -> CMatrix {
        matrix_unit(2, 1, 0)
    }

    /// `sigma_- = |g><e|`.
    pub fn sigma_minus() -> CMatrix {
        matrix_unit(2, 0, 1)
    }

    pub fn sigma_x() -> CMatrix {
        Self::sigma_plus() + Self::sigma_minus()
    }
}

/// Subsystem generators and the interaction Hamiltonian of the Rabi model.
pub struct RabiParts {
    /// `-i omega_ph [a^dag a, .] + kappa D[a]` on the oscillator.
    pub l_a: CMatrix,
    /// `-i (omega_eg/2) [sigma_z, .]` on the qubit.
    pub l_b: CMatrix,
    /// `(a + a^dag) (x) sigma_x`, so that `eps L1 = -i g [H_int, .]`.
    pub h_int: CMatrix,
}

pub fn rabi_parts(p: &RabiParams) -> Result<RabiParts> {
    p.validate()?;
    let a = annihilation(p.n_tr);
    let ad = dagger(&a);
    let l_a = build_gksl(
        &ad.dot(&a).mapv(|z| z * p.omega_ph),
        &[(p.kappa, a.clone())],
    )?;
    let l_b = build_gksl(&Qubit::sigma_z().mapv(|z| z * (0.5 * p.omega_eg)), &[])?;
    let h_int = kron(&(&a + &ad), &Qubit::sigma_x());
    Ok(RabiParts { l_a, l_b, h_int })
}

/// Composite ordering oscillator (A) (x) qubit (B); `eps = g`.
pub fn rabi(p: &RabiParams) -> Result<SplitLiouvillian> {
    let parts = rabi_parts(p)?;
    let l_int = hamiltonian_super(&parts.h_int)?;
    compose_bipartite(&parts.l_a, &parts.l_b, &l_int, p.n_tr, 2, p.g)
}

/// Rabi model with an extra qubit drive `drive * sigma_x` folded into the
/// interaction: `eps L1 = -i g [H_int + drive (I (x) sigma_x), .]`.
/// Unlike the plain model this has `P L1 P != 0`.
pub fn rabi_driven(p: &RabiParams, drive: f64) -> Result<SplitLiouvillian> {
    if !drive.is_finite() {
        return Err(Error::InvalidParams(format!(
            "drive = {drive} must be finite"
        )));
    }
    let parts = rabi_parts(p)?;
    let h = &parts.h_int + &kron(&identity(p.n_tr), &Qubit::sigma_x()).mapv(|z| z * drive);
    let l_int = hamiltonian_super(&h)?;
    compose_bipartite(&parts.l_a, &parts.l_b, &l_int, p.n_tr, 2, p.g)
}

/// Trace-one null vector of a generator `l` acting on d x d operators.
pub fn steady_state(l: &CMatrix, d: usize) -> Result<CMatrix> {
    let n = d * d;
    if l.dim() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "generator {:?} for d = {d}",
            l.dim()
        )));
    }
    let mut m = l.clone();
    m.row_mut(0).assign(&trace_functional(d));
    let mut rhs = CVector::zeros(n);
    rhs[0] = ONE;
    let v = m.solve(&rhs)?;
    crate::liouvillian::devectorize(&v, d)
}

/// Qubit matrix units in the surviving-mode order `(g,g), (e,g), (g,e), (e,e)`,
/// which is the column-stacking order of `vec(rho_B)`.
pub fn qubit_units() -> [CMatrix; 4] {
    [
        matrix_unit(2, 0, 0),
        matrix_unit(2, 1, 0),
        matrix_unit(2, 0, 1),
        matrix_unit(2, 1, 1),
    ]
}

/// Surviving right eigenvectors `vec(rho_bar_A (x) E_B)` with `rho_bar_A`
/// the numerically solved oscillator steady state.
pub fn rabi_surviving_basis(p: &RabiParams) -> Result<CMatrix> {
    let parts = rabi_parts(p)?;
    let rho_a = steady_state(&parts.l_a, p.n_tr)?;
    let d = p.dim();
    let mut chi_r = zeros(d * d, 4);
    for (k, e) in qubit_units().iter().enumerate() {
        chi_r.column_mut(k).assign(&vectorize(&kron(&rho_a, e)));
    }
    Ok(chi_r)
}

/// Reduced basis of the bipartite projector `P rho = rho_bar_A (x) tr_A rho`,
/// with `chi_L^dag` rows `vec(I_A (x) E_B)^dag`.
pub fn rabi_reduced_basis(p: &RabiParams) -> Result<ReducedBasis> {
    let chi_r = rabi_surviving_basis(p)?;
    let d = p.dim();
    let id_a = identity(p.n_tr);
    let mut chi_l_dag = zeros(4, d * d);
    for (k, e) in qubit_units().iter().enumerate() {
        chi_l_dag
            .row_mut(k)
            .assign(&vectorize(&kron(&id_a, e)).mapv(|z| z.conj()));
    }
    ReducedBasis::new(chi_r, chi_l_dag)
}

/// Gap of the Rabi `L0`, read off the oscillator spectrum (the qubit
/// generator is purely imaginary).
pub fn rabi_gap(p: &RabiParams) -> Result<f64> {
    let parts = rabi_parts(p)?;
    let vals = eigenvalues(&parts.l_a)?;
    let tol = 1e-9 * vals.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let gap = vals
        .iter()
        .filter(|z| z.re < -tol)
        .map(|z| -z.re)
        .fold(f64::INFINITY, f64::min);
    if gap.is_finite() {
        Ok(gap)
    } else {
        Err(Error::NoGap("oscillator has no decaying mode".into()))
    }
}

/// `c(t) = (1 - exp(-gamma t)) / gamma`; `None` means `t = infinity`.
pub fn kernel_c(gamma: C64, t: Option<f64>) -> C64 {
    match t {
        None => ONE / gamma,
        Some(t) => (ONE - (-gamma * t).exp()) / gamma,
    }
}

/// `(c_+(t), c_-(t))`.
pub fn rabi_kernels(p: &RabiParams, t: Option<f64>) -> (C64, C64) {
    (kernel_c(p.gamma_plus(), t), kernel_c(p.gamma_minus(), t))
}

/// `sigma_gamma(t) = c_-(t) sigma_- + c_+(t) sigma_+`.
pub fn sigma_gamma(p: &RabiParams, t: Option<f64>) -> CMatrix {
    let (cp, cm) = rabi_kernels(p, t);
    Qubit::sigma_minus().mapv(|z| z * cm) + Qubit::sigma_plus().mapv(|z| z * cp)
}

/// Second-order reduced generator on `vec(rho_B)`:
/// `L_B rho - g^2 (sigma_x S rho - S rho sigma_x) + h.c.` with `S = sigma_gamma(t)`.
pub fn rabi_analytic_f(p: &RabiParams, t: Option<f64>) -> Result<CMatrix> {
    p.validate()?;
    let sz = Qubit::sigma_z().mapv(|z| z * (0.5 * p.omega_eg));
    let mut f = hamiltonian_super(&sz)?;
    let sx = Qubit::sigma_x();
    let s = sigma_gamma(p, t);
    let sd = dagger(&s);
    let id = identity(2);
    let g2 = c(p.g * p.g, 0.0);
    let second = sandwich_super(&sx.dot(&s), &id)? - sandwich_super(&s, &sx)?
        + sandwich_super(&id, &sd.dot(&sx))?
        - sandwich_super(&sx, &sd)?;
    f.scaled_add(-g2, &second);
    Ok(f)
}

/// Second-order reduction map `rho_B -> (I + W)(|0><0| (x) rho_B)(I + W)^dag
/// - g^2 (I (x) sigma_gamma)(|0><0| (x) rho_B)(I (x) sigma_gamma)^dag`
/// as a `d^2 x 4` matrix on `vec(rho_B)`.
pub fn rabi_analytic_k(p: &RabiParams) -> Result<CMatrix> {
    p.validate()?;
    let n = p.n_tr;
    let d = p.dim();
    let (gp, gm) = (p.gamma_plus(), p.gamma_minus());
    let ad = dagger(&annihilation(n));
    let sg = sigma_gamma(p, None);
    let (sp, sm) = (Qubit::sigma_plus(), Qubit::sigma_minus());
    let two_photon = sm.dot(&sp).mapv(|z| z / gp) + sp.dot(&sm).mapv(|z| z / gm);
    let coef2 = -c(p.g * p.g, 0.0) / c(p.kappa, 2.0 * p.omega_ph);
    let w =
        kron(&ad, &sg).mapv(|z| -I * p.g * z) + kron(&ad.dot(&ad), &two_photon).mapv(|z| z * coef2);
    let one_w = identity(d) + &w;
    let one_w_dag = dagger(&one_w);
    let side = kron(&identity(n), &sg);
    let side_dag = dagger(&side);
    let vac = matrix_unit(n, 0, 0);
    let mut k = zeros(d * d, 4);
    for (col, e) in qubit_units().iter().enumerate() {
        let rho = kron(&vac, e);
        let main = one_w.dot(&rho).dot(&one_w_dag);
        let corr = side.dot(&rho).dot(&side_dag).mapv(|z| z * (p.g * p.g));
        k.column_mut(col).assign(&vectorize(&(main - corr)));
    }
    Ok(k)
}

/// Kossakowski matrix `K_jk(t) = c_j(t) + c_k(t)^*`, j, k in {+, -}.
pub fn kossakowski_matrix(p: &RabiParams, t: Option<f64>) -> CMatrix {
    let (cp, cm) = rabi_kernels(p, t);
    let cs = [cp, cm];
    Array2::from_shape_fn((2, 2), |(j, k)| cs[j] + cs[k].conj())
}

/// Closed-form eigenvalues of the asymptotic Kossakowski matrix,
/// `(tr K / 2)(1 +- sqrt(1 + (4 omega_eg / (|gamma_+ gamma_-| tr K))^2))`,
/// larger first.
pub fn k_matrix_eigenvalues(p: &RabiParams) -> (f64, f64) {
    let (gp, gm) = (p.gamma_plus(), p.gamma_minus());
    let tr = p.kappa / gp.norm_sqr() + p.kappa / gm.norm_sqr();
    let x = 4.0 * p.omega_eg / ((gp * gm).norm() * tr);
    let root = (1.0 + x * x).sqrt();
    (0.5 * tr * (1.0 + root), 0.5 * tr * (1.0 - root))
}
