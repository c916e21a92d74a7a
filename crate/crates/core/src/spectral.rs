//! Mode classification (surviving vs fast), the spectral gap, the
//! eigenprojector onto the surviving modes, reduced-basis matrices and the
//! identification of perturbed with unperturbed modes.

use crate::error::{Error, Result};
use crate::numerics::{
    eig_biorthonormal, frobenius, identity, inverse_with_cond, select_columns, select_rows,
    vec_norm, CMatrix, CVector, EigenSystem, C64,
};

/// Relative factor of the default surviving-mode tolerance.
pub const SURVIVING_TOL_REL: f64 = 1e-9;

/// Minimum accepted overlap in a mode matching.
pub const MATCH_MIN_OVERLAP: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct SpectralData {
    pub eig: EigenSystem,
    /// Surviving mode indices; their order fixes the columns of chi_R.
    pub surviving: Vec<usize>,
    pub fast: Vec<usize>,
    /// `min_f Re(-lambda_f)`; infinite when there are no fast modes.
    pub gap: f64,
    pub tol_s: f64,
}

pub fn default_tol(values: &CVector) -> f64 {
    SURVIVING_TOL_REL * values.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Eigendecomposes `l` and splits the modes at `|Re lambda| <= tol_s`.
pub fn analyze(l: &CMatrix, tol_s: Option<f64>) -> Result<SpectralData> {
    let eig = eig_biorthonormal(l)?;
    classify(eig, tol_s)
}

/// Classification step of [`analyze`] for an existing eigensystem.
pub fn classify(eig: EigenSystem, tol_s: Option<f64>) -> Result<SpectralData> {
    let tol_s = tol_s.unwrap_or_else(|| default_tol(&eig.values));
    let mut surviving = Vec::new();
    let mut fast = Vec::new();
    for (i, z) in eig.values.iter().enumerate() {
        if z.re.abs() <= tol_s {
            surviving.push(i);
        } else {
            fast.push(i);
        }
    }
    if surviving.is_empty() {
        return Err(Error::NoGap("no mode with vanishing real part".into()));
    }
    let gap = fast
        .iter()
        .map(|&f| -eig.values[f].re)
        .fold(f64::INFINITY, f64::min);
    if gap < 2.0 * tol_s {
        return Err(Error::NoGap(format!(
            "fast mode with Re(-lambda) = {gap:.3e} within 2*tol_s = {:.3e} of the axis",
            2.0 * tol_s
        )));
    }
    Ok(SpectralData {
        eig,
        surviving,
        fast,
        gap,
        tol_s,
    })
}

impl SpectralData {
    pub fn n_s(&self) -> usize {
        self.surviving.len()
    }

    pub fn surviving_values(&self) -> Vec<C64> {
        self.surviving.iter().map(|&s| self.eig.values[s]).collect()
    }

    /// Replaces the surviving eigenvectors by the columns of `chi_r`, which
    /// must be eigenvectors of `l` spanning the surviving space. Left vectors
    /// become `(chi_L_old^dag chi_r)^-1 chi_L_old^dag`; the column order of
    /// `chi_r` becomes the surviving order.
    pub fn with_surviving_basis(&self, l: &CMatrix, chi_r: &CMatrix) -> Result<SpectralData> {
        let n_s = self.n_s();
        if chi_r.dim() != (self.eig.len(), n_s) {
            return Err(Error::DimensionMismatch(format!(
                "basis is {:?}, expected {}x{n_s}",
                chi_r.dim(),
                self.eig.len()
            )));
        }
        let old = reduced_basis(self);
        let overlap = old.chi_l_dag.dot(chi_r);
        let (inv, cond) = inverse_with_cond(&overlap);
        let inv = inv
            .filter(|_| cond < 1e8)
            .ok_or(Error::SingularN { cond })?;
        let span_err = frobenius(&(chi_r - &old.chi_r.dot(&overlap))) / frobenius(chi_r);
        if span_err > 1e-8 {
            return Err(Error::InvalidParams(format!(
                "basis leaves the surviving space (relative residual {span_err:.3e})"
            )));
        }
        let left = inv.dot(&old.chi_l_dag);
        let lchi = l.dot(chi_r);
        let reduced = left.dot(&lchi);
        let lambdas: Vec<C64> = (0..n_s).map(|k| reduced[[k, k]]).collect();
        let scale = frobenius(l).max(1.0);
        for (k, &lambda) in lambdas.iter().enumerate() {
            let resid = vec_norm(&(&lchi.column(k) - &chi_r.column(k).mapv(|z| z * lambda)));
            if resid > 1e-8 * scale * vec_norm(&chi_r.column(k).to_owned()) {
                return Err(Error::InvalidParams(format!(
                    "basis column {k} is not an eigenvector (residual {resid:.3e})"
                )));
            }
        }
        let mut eig = self.eig.clone();
        for (k, &idx) in self.surviving.iter().enumerate() {
            eig.right.column_mut(idx).assign(&chi_r.column(k));
            eig.left_dag.row_mut(idx).assign(&left.row(k));
            eig.values[idx] = lambdas[k];
        }
        Ok(SpectralData {
            eig,
            ..self.clone()
        })
    }
}

/// Reduced-basis matrices with `chi_L^dag chi_R = I` and `chi_R chi_L^dag = P_inv`.
#[derive(Debug, Clone)]
pub struct ReducedBasis {
    /// d^2 x n_s, columns are surviving right eigenvectors.
    pub chi_r: CMatrix,
    /// n_s x d^2, rows are conjugated surviving left eigenvectors.
    pub chi_l_dag: CMatrix,
}

impl ReducedBasis {
    pub fn new(chi_r: CMatrix, chi_l_dag: CMatrix) -> Result<Self> {
        let (d2, n_s) = chi_r.dim();
        if chi_l_dag.dim() != (n_s, d2) {
            return Err(Error::DimensionMismatch(format!(
                "chi_R is {:?}, chi_L^dag is {:?}",
                chi_r.dim(),
                chi_l_dag.dim()
            )));
        }
        let defect = frobenius(&(chi_l_dag.dot(&chi_r) - identity(n_s)));
        if defect > 1e-10 {
            return Err(Error::InvalidParams(format!(
                "chi_L^dag chi_R differs from identity by {defect:.3e}"
            )));
        }
        Ok(ReducedBasis { chi_r, chi_l_dag })
    }

    pub fn n_s(&self) -> usize {
        self.chi_r.ncols()
    }

    pub fn super_dim(&self) -> usize {
        self.chi_r.nrows()
    }

    /// `P_inv = chi_R chi_L^dag` as a dense superoperator.
    pub fn projector(&self) -> CMatrix {
        self.chi_r.dot(&self.chi_l_dag)
    }

    /// Reduced coordinates `x = chi_L^dag v`.
    pub fn coords(&self, v: &CVector) -> CVector {
        self.chi_l_dag.dot(v)
    }
}

pub fn reduced_basis(spec: &SpectralData) -> ReducedBasis {
    ReducedBasis {
        chi_r: select_columns(&spec.eig.right, &spec.surviving),
        chi_l_dag: select_rows(&spec.eig.left_dag, &spec.surviving),
    }
}

/// `P_inv = sum_s |r_s><l_s|`.
pub fn projector_pinv(spec: &SpectralData) -> CMatrix {
    reduced_basis(spec).projector()
}

/// Groups indices whose eigenvalues coincide within `tol` (transitively).
pub fn eigen_clusters(values: &CVector, tol: f64) -> Vec<Vec<usize>> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].re.total_cmp(&values[b].re));
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for a in 0..n {
        for b in (a + 1)..n {
            let (ia, ib) = (order[a], order[b]);
            if values[ib].re - values[ia].re > tol {
                break;
            }
            if (values[ia] - values[ib]).norm() <= tol {
                let (ra, rb) = (find(&mut parent, ia), find(&mut parent, ib));
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

/// `perm[i]` is the unperturbed mode assigned to perturbed mode `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeMatching {
    pub perm: Vec<usize>,
    pub overlaps: Vec<f64>,
}

/// Identifies each perturbed mode with an unperturbed one. Overlaps are
/// taken against the eigenprojector of the (possibly degenerate) unperturbed
/// eigenvalue cluster, `||P_C r_i|| / ||r_i||`; assignment is greedy by
/// descending overlap with cluster capacities, then resolved inside each
/// cluster by `|<l_j|r_i>|`.
pub fn match_modes(spec0: &SpectralData, eps_sys: &EigenSystem) -> Result<ModeMatching> {
    let n = spec0.eig.len();
    if eps_sys.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} unperturbed vs {} perturbed modes",
            n,
            eps_sys.len()
        )));
    }
    let scale = spec0
        .eig
        .values
        .iter()
        .map(|z| z.norm())
        .fold(1.0, f64::max);
    let clusters = eigen_clusters(&spec0.eig.values, 1e-8 * scale);
    let t = spec0.eig.left_dag.dot(&eps_sys.right);
    let norm0: Vec<f64> = column_norms(&spec0.eig.right);
    let norm_eps: Vec<f64> = column_norms(&eps_sys.right);
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..n {
        let rn = norm_eps[i];
        for (c, members) in clusters.iter().enumerate() {
            let ov = if members.len() == 1 {
                let j = members[0];
                t[[j, i]].norm() * norm0[j] / rn
            } else {
                let coeffs: CVector = members.iter().map(|&j| t[[j, i]]).collect();
                let r_c = select_columns(&spec0.eig.right, members);
                vec_norm(&r_c.dot(&coeffs)) / rn
            };
            if ov > MATCH_MIN_OVERLAP {
                candidates.push((ov, i, c));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut capacity: Vec<usize> = clusters.iter().map(|m| m.len()).collect();
    let mut cluster_of = vec![usize::MAX; n];
    let mut overlaps = vec![0.0; n];
    for (ov, i, c) in candidates {
        if cluster_of[i] == usize::MAX && capacity[c] > 0 {
            cluster_of[i] = c;
            overlaps[i] = ov;
            capacity[c] -= 1;
        }
    }
    if let Some(i) = cluster_of.iter().position(|&c| c == usize::MAX) {
        return Err(Error::AmbiguousMatching(format!(
            "perturbed mode {i} (lambda = {}) has no unclaimed partner with overlap > {MATCH_MIN_OVERLAP}",
            eps_sys.values[i]
        )));
    }
    let mut perm = vec![usize::MAX; n];
    for (c, members) in clusters.iter().enumerate() {
        let assigned: Vec<usize> = (0..n).filter(|&i| cluster_of[i] == c).collect();
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for &i in &assigned {
            for &j in members {
                pairs.push((t[[j, i]].norm(), i, j));
            }
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut used = vec![false; n];
        for (_, i, j) in pairs {
            if perm[i] == usize::MAX && !used[j] {
                perm[i] = j;
                used[j] = true;
            }
        }
    }
    Ok(ModeMatching { perm, overlaps })
}

fn column_norms(m: &CMatrix) -> Vec<f64> {
    m.columns()
        .into_iter()
        .map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .collect()
}
