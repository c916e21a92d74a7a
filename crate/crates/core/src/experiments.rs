//! Full-system oracle integrator and the reproduction experiments, each a
//! function from an [`ExperimentConfig`] to an [`ExperimentReport`].

use std::collections::BTreeMap;
use std::path::Path;

use ndarray_linalg::{Eigh, UPLO};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::liouvillian::{devectorize, matrix_unit, vectorize, SplitLiouvillian};
use crate::models::{
    k_matrix_eigenvalues, kossakowski_matrix, rabi, rabi_analytic_f, rabi_driven, rabi_gap,
    rabi_reduced_basis, three_level, RabiParams, ThreeLevelParams,
};
use crate::numerics::{
    dagger, expm, fit_exponential, frobenius, loglog_slope, max_abs_diff, rk4_step, trace,
    vec_norm, zeros, CMatrix, CVector, ExpFit, C64, FIT_FLOOR, ONE, ZERO,
};
use crate::perturb::{laplace_generator, EigenbasisOp};
use crate::spectral::analyze;
use crate::tcl::{evolve_reduced, ReducedGenerator, TclContext};

/// Model section of a config: a name plus free-form parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub name: String,
    #[serde(flatten)]
    pub params: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridConfig {
    pub t_max: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitConfig {
    pub t_min: f64,
    pub t_max: f64,
    #[serde(default = "default_floor")]
    pub floor: f64,
}

fn default_floor() -> f64 {
    FIT_FLOOR
}

/// Experiment configuration; every section except `experiment` is optional
/// and falls back to the experiment's reference setup.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: String,
    #[serde(default)]
    pub model: Option<ModelConfig>,
    /// Additional models (laplace-compare uses a three-level and a Rabi entry).
    #[serde(default)]
    pub models: Vec<ModelConfig>,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub fit: Option<FitConfig>,
    /// Coupling values (prop-verify, laplace-compare) or truncations (rabi-truncation).
    #[serde(default)]
    pub sweep: Vec<f64>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    /// Output directory; the CLI `--out` flag takes precedence.
    #[serde(default)]
    pub output: Option<String>,
}

impl ExperimentConfig {
    pub fn new(experiment: &str) -> Self {
        ExperimentConfig {
            experiment: experiment.to_string(),
            model: None,
            models: Vec::new(),
            grid: None,
            fit: None,
            sweep: Vec::new(),
            tolerances: BTreeMap::new(),
            output: None,
        }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    fn tol(&self, key: &str, default: f64) -> f64 {
        self.tolerances.get(key).copied().unwrap_or(default)
    }

    fn grid_or(&self, t_max: f64, dt: f64) -> Result<GridConfig> {
        let g = self.grid.unwrap_or(GridConfig { t_max, dt });
        if !(g.dt > 0.0) || !(g.t_max > 0.0) {
            return Err(Error::Config(format!(
                "grid needs dt > 0 and t_max > 0, got {g:?}"
            )));
        }
        Ok(g)
    }

    fn fit_or(&self, t_min: f64, t_max: f64, grid: &GridConfig) -> Result<FitConfig> {
        let f = self.fit.unwrap_or(FitConfig {
            t_min,
            t_max,
            floor: FIT_FLOOR,
        });
        if !(grid.t_max > f.t_min) || !(f.t_max > f.t_min) {
            return Err(Error::Config(format!(
                "fit window {f:?} does not fit grid {grid:?}"
            )));
        }
        Ok(f)
    }

    fn model_named(&self, name: &str) -> Option<&ModelConfig> {
        self.model
            .iter()
            .chain(self.models.iter())
            .find(|m| m.name == name)
    }

    fn three_level_params(&self) -> Result<ThreeLevelParams> {
        params_from(self.model_named("three-level"))
    }

    fn rabi_params(&self) -> Result<RabiParams> {
        params_from(self.model_named("rabi"))
    }

    fn model_name(&self, default: &str) -> String {
        self.model
            .as_ref()
            .map(|m| m.name.clone())
            .unwrap_or_else(|| default.to_string())
    }
}

fn params_from<T: Default + serde::de::DeserializeOwned>(m: Option<&ModelConfig>) -> Result<T> {
    match m {
        None => Ok(T::default()),
        Some(m) => serde_json::from_value(serde_json::Value::Object(m.params.clone()))
            .map_err(|e| Error::Config(format!("model '{}': {e}", m.name))),
    }
}

/// Pass/fail outcome of one check with the measured value.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub pass: bool,
    pub measured: f64,
    pub criterion: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ExperimentReport {
    pub experiment: String,
    #[serde(skip)]
    pub series: BTreeMap<String, Vec<(f64, f64)>>,
    pub fits: BTreeMap<String, ExpFit>,
    pub scalars: BTreeMap<String, f64>,
    pub checks: BTreeMap<String, Check>,
    pub pass: BTreeMap<String, bool>,
    pub notes: BTreeMap<String, String>,
}

impl ExperimentReport {
    fn new(experiment: &str) -> Self {
        ExperimentReport {
            experiment: experiment.to_string(),
            ..Default::default()
        }
    }

    fn check(&mut self, name: &str, pass: bool, measured: f64, criterion: String) {
        self.pass.insert(name.to_string(), pass);
        self.checks.insert(
            name.to_string(),
            Check {
                pass,
                measured,
                criterion,
            },
        );
    }

    fn check_below(&mut self, name: &str, measured: f64, bound: f64) {
        self.check(name, measured < bound, measured, format!("< {bound:e}"));
    }

    fn check_within(&mut self, name: &str, measured: f64, target: f64, tol: f64) {
        self.check(
            name,
            (measured - target).abs() <= tol,
            measured,
            format!("{target} +- {tol}"),
        );
    }

    fn check_rel(&mut self, name: &str, measured: f64, target: f64, rel: f64) {
        self.check(
            name,
            ((measured - target) / target).abs() <= rel,
            measured,
            format!("{target} within {}%", rel * 100.0),
        );
    }

    fn scalar(&mut self, name: &str, value: f64) {
        self.scalars.insert(name.to_string(), value);
    }

    fn note(&mut self, name: &str, value: impl Into<String>) {
        self.notes.insert(name.to_string(), value.into());
    }

    pub fn all_pass(&self) -> bool {
        self.pass.values().all(|&p| p)
    }

    /// Series as CSV (`t,value`) or JSON files plus `report.json`.
    pub fn write(&self, dir: &Path, format: OutputFormat) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, data) in &self.series {
            match format {
                OutputFormat::Csv => {
                    let mut w = csv::Writer::from_path(dir.join(format!("{name}.csv")))?;
                    w.write_record(["t", "value"])?;
                    for (t, v) in data {
                        w.write_record([format!("{t}"), format!("{v:e}")])?;
                    }
                    w.flush()?;
                }
                OutputFormat::Json => {
                    let rows: Vec<serde_json::Value> = data
                        .iter()
                        .map(|(t, v)| serde_json::json!({"t": t, "value": v}))
                        .collect();
                    std::fs::write(
                        dir.join(format!("{name}.json")),
                        serde_json::to_string_pretty(&rows)?,
                    )?;
                }
            }
        }
        std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Dispatches on `cfg.experiment`.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    match cfg.experiment.as_str() {
        "prop-verify" => run_prop_verify(cfg),
        "rabi-truncation" => run_rabi_truncation(cfg),
        "choi" => run_choi(cfg),
        "laplace-compare" => run_laplace_compare(cfg),
        "equivalence" => run_equivalence(cfg),
        other => Err(Error::Config(format!("unknown experiment '{other}'"))),
    }
}

/// Compressed sparse rows, used for long RK4 runs on large generators.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<C64>,
    ncols: usize,
}

impl CsrMatrix {
    pub fn from_dense(m: &CMatrix) -> Self {
        let mut indptr = Vec::with_capacity(m.nrows() + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for row in m.rows() {
            for (j, &x) in row.iter().enumerate() {
                if x != ZERO {
                    indices.push(j);
                    data.push(x);
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            indptr,
            indices,
            data,
            ncols: m.ncols(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn dot(&self, v: &CVector) -> CVector {
        debug_assert_eq!(v.len(), self.ncols);
        let mut out = CVector::zeros(self.indptr.len() - 1);
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = ZERO;
            for k in self.indptr[i]..self.indptr[i + 1] {
                acc += self.data[k] * v[self.indices[k]];
            }
            *o = acc;
        }
        out
    }
}

/// RK4 trajectory of `rho' = L rho` reported at every point of `grid`
/// (ascending, starting at the initial time). Steps never exceed `dt`.
pub fn integrate_master(
    l: &CMatrix,
    rho0: &CMatrix,
    grid: &[f64],
    dt: f64,
) -> Result<Vec<CMatrix>> {
    let d = rho0.nrows();
    if rho0.dim() != (d, d) || l.dim() != (d * d, d * d) {
        return Err(Error::DimensionMismatch(format!(
            "generator {:?} for state {:?}",
            l.dim(),
            rho0.dim()
        )));
    }
    let tr = trace(rho0);
    if (tr - ONE).norm() > 1e-10 {
        return Err(Error::InvalidParams(format!("tr rho0 = {tr}, expected 1")));
    }
    if max_abs_diff(rho0, &dagger(rho0)) > 1e-10 {
        return Err(Error::InvalidParams("rho0 is not Hermitian".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidParams(format!("dt = {dt} must be positive")));
    }
    let sparse = CsrMatrix::from_dense(l);
    let rhs = |_t: f64, v: &CVector| sparse.dot(v);
    let mut v = vectorize(rho0);
    let mut t = grid.first().copied().unwrap_or(0.0);
    let mut out = Vec::with_capacity(grid.len());
    for &target in grid {
        let span = target - t;
        if span > 0.0 {
            let n = (span / dt).ceil().max(1.0) as usize;
            let h = span / n as f64;
            for k in 0..n {
                v = rk4_step(&rhs, t + k as f64 * h, &v, h);
            }
            t = target;
        }
        out.push(devectorize(&v, d)?);
    }
    Ok(out)
}

/// `[0, dt, 2 dt, ..., t_max]`.
pub fn uniform_grid(t_max: f64, dt: f64) -> Vec<f64> {
    let n = (t_max / dt).round() as usize;
    (0..=n).map(|k| k as f64 * dt).collect()
}

fn fit_series(
    report: &mut ExperimentReport,
    name: &str,
    series: &[(f64, f64)],
    fit: &FitConfig,
) -> Result<ExpFit> {
    let f = fit_exponential(series, (fit.t_min, fit.t_max), fit.floor)?;
    report.fits.insert(name.to_string(), f);
    Ok(f)
}

/// Norm decay of `P(t) - P^(eps)` and `J(t)` on the three-level system.
pub fn run_prop_verify(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new("prop-verify");
    let params = cfg.three_level_params()?;
    let grid = cfg.grid_or(15.0, 0.05)?;
    let fit = cfg.fit_or(2.0, 12.0, &grid)?;
    let sys = three_level(&params)?;
    let ctx = TclContext::new(&sys, None)?;
    let ts = uniform_grid(grid.t_max, grid.dt);
    let samples = ctx.norm_series(&ts, None)?;
    let dp: Vec<(f64, f64)> = samples.iter().map(|s| (s.t, s.dp)).collect();
    let j: Vec<(f64, f64)> = samples.iter().map(|s| (s.t, s.j)).collect();
    report.series.insert("dp_norm".into(), dp.clone());
    report.series.insert("j_norm".into(), j.clone());
    report.scalar("gap", ctx.gap);
    report.scalar("eps", sys.eps);
    report.note("fit_window", format!("[{}, {}]", fit.t_min, fit.t_max));

    if sys.eps == 0.0 {
        let max_dp = dp.iter().map(|p| p.1).fold(0.0, f64::max);
        report.scalar("max_dp", max_dp);
        report.check_below("dp_vanishes", max_dp, cfg.tol("dp_zero", 1e-12));
        return Ok(report);
    }
    let fp = fit_series(&mut report, "dp_norm", &dp, &fit)?;
    let fj = fit_series(&mut report, "j_norm", &j, &fit)?;
    let ratio = fp.amplitude / fj.amplitude;
    report.scalar("b_p_over_gap", fp.rate / ctx.gap);
    report.scalar("b_j_over_gap", fj.rate / ctx.gap);
    report.scalar("amplitude_ratio", ratio);
    let rate_tol = cfg.tol("rate_rel", 0.05);
    report.check_rel("rate_p", fp.rate / ctx.gap, 1.0, rate_tol);
    report.check_rel("rate_j", fj.rate / ctx.gap, 1.0, rate_tol);
    let (lo, hi) = (cfg.tol("ratio_min", 0.10), cfg.tol("ratio_max", 0.15));
    report.check(
        "amplitude_ratio",
        ratio >= lo && ratio <= hi,
        ratio,
        format!("in [{lo}, {hi}]"),
    );
    Ok(report)
}

/// Context for one truncation: propagator backend with the bipartite basis.
fn rabi_context(p: &RabiParams) -> Result<(SplitLiouvillian, TclContext)> {
    let sys = rabi(p)?;
    let basis = rabi_reduced_basis(p)?;
    let gap = rabi_gap(p)?;
    let ctx = TclContext::propagator(&sys, basis, gap)?;
    Ok((sys, ctx))
}

/// `|0><0| (x) |e><e|` on the Rabi composite space.
pub fn rabi_vacuum_excited(n_tr: usize) -> CMatrix {
    matrix_unit(2 * n_tr, 1, 1)
}

/// Largest Frobenius distance between RK4 trajectories at `n_tr` and
/// `n_tr + extra`, with the smaller state embedded in the larger space.
pub fn truncation_discrepancy(
    p: &RabiParams,
    extra: usize,
    t_max: f64,
    dt: f64,
    sample_dt: f64,
) -> Result<f64> {
    let grid = uniform_grid(t_max, sample_dt);
    let runs: Vec<Result<Vec<CMatrix>>> = [p.n_tr, p.n_tr + extra]
        .par_iter()
        .map(|&n| {
            let q = p.with_n_tr(n);
            let l = rabi(&q)?.full();
            integrate_master(&l, &rabi_vacuum_excited(n), &grid, dt)
        })
        .collect();
    let mut runs = runs.into_iter();
    let small = runs.next().expect("two runs")?;
    let large = runs.next().expect("two runs")?;
    let d = p.dim();
    let mut worst: f64 = 0.0;
    for (a, b) in small.iter().zip(&large) {
        // Composite index a*2 + b keeps the first 2 n_tr indices in place.
        let mut diff = b.clone();
        for i in 0..d {
            for j in 0..d {
                diff[[i, j]] -= a[[i, j]];
            }
        }
        worst = worst.max(frobenius(&diff));
    }
    Ok(worst)
}

/// `(n_tr, P fit, J fit, state fit, gap)` for one truncation.
type FitRow = (usize, ExpFit, ExpFit, ExpFit, f64);

/// Truncation study of the Rabi model: operator-norm and state-level fits
/// per `n_tr`, plus truncation convergence of the full dynamics.
pub fn run_rabi_truncation(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new("rabi-truncation");
    let base = cfg.rabi_params()?;
    let grid = cfg.grid_or(30.0, 0.5)?;
    let fit = cfg.fit_or(5.0, 30.0, &grid)?;
    let n_trs: Vec<usize> = if cfg.sweep.is_empty() {
        vec![10, 20, 30]
    } else {
        cfg.sweep.iter().map(|&x| x.round() as usize).collect()
    };
    let extra = cfg.tol("convergence_extra", 5.0) as usize;
    let conv_t_max = cfg.tol("convergence_t_max", 50.0);
    let conv_dt = cfg.tol("convergence_dt", 1e-3);
    let ts = uniform_grid(grid.t_max, grid.dt);
    report.note("backend", "propagator");
    report.note("fit_window", format!("[{}, {}]", fit.t_min, fit.t_max));

    let mut rows: Vec<FitRow> = Vec::new();
    let mut worst_resid: f64 = 0.0;
    let mut worst_conv: f64 = 0.0;
    for &n_tr in &n_trs {
        let started = std::time::Instant::now();
        let p = base.with_n_tr(n_tr);
        let (_, ctx) = rabi_context(&p)?;
        let gap = ctx.gap;
        let rho0 = vectorize(&rabi_vacuum_excited(n_tr));
        let samples = ctx.norm_series(&ts, Some(&rho0))?;
        drop(ctx);
        let dp: Vec<(f64, f64)> = samples.iter().map(|s| (s.t, s.dp)).collect();
        let j: Vec<(f64, f64)> = samples.iter().map(|s| (s.t, s.j)).collect();
        let st: Vec<(f64, f64)> = samples
            .iter()
            .map(|s| (s.t, s.state_dp.unwrap_or(0.0)))
            .collect();
        let resid = samples
            .iter()
            .map(|s| s.state_resid.unwrap_or(0.0))
            .fold(0.0, f64::max);
        let fp = fit_series(&mut report, &format!("dp_norm_n{n_tr}"), &dp, &fit)?;
        let fj = fit_series(&mut report, &format!("j_norm_n{n_tr}"), &j, &fit)?;
        let fs = fit_series(&mut report, &format!("state_dp_n{n_tr}"), &st, &fit)?;
        report.series.insert(format!("dp_norm_n{n_tr}"), dp);
        report.series.insert(format!("j_norm_n{n_tr}"), j);
        report.series.insert(format!("state_dp_n{n_tr}"), st);
        report.scalar(&format!("a_p_n{n_tr}"), fp.amplitude);
        report.scalar(&format!("a_j_n{n_tr}"), fj.amplitude);
        report.scalar(&format!("b_p_over_gap_n{n_tr}"), fp.rate / gap);
        report.scalar(&format!("b_j_over_gap_n{n_tr}"), fj.rate / gap);
        report.scalar(&format!("state_a_n{n_tr}"), fs.amplitude);
        report.scalar(&format!("state_b_over_gap_n{n_tr}"), fs.rate / gap);
        report.scalar(&format!("state_residual_n{n_tr}"), resid);
        let conv = truncation_discrepancy(&p, extra, conv_t_max, conv_dt, 0.5)?;
        report.scalar(&format!("truncation_discrepancy_n{n_tr}"), conv);
        report.scalar(
            &format!("elapsed_s_n{n_tr}"),
            started.elapsed().as_secs_f64(),
        );
        worst_resid = worst_resid.max(resid);
        worst_conv = worst_conv.max(conv);
        rows.push((n_tr, fp, fj, fs, gap));
    }

    let rel = cfg.tol("table_rel", 0.05);
    let rate_abs = cfg.tol("table_rate_abs", 1e-3);
    if let Some((_, fp, fj, _, gap)) = rows.iter().find(|r| r.0 == 10) {
        report.check_rel("a_p_n10", fp.amplitude, 0.655, rel);
        report.check_rel("a_j_n10", fj.amplitude, 19.1, rel);
        report.check_within("b_p_n10", fp.rate / gap, 0.98193, rate_abs);
        report.check_within("b_j_n10", fj.rate / gap, 1.0066, rate_abs);
    }
    let state_rel = cfg.tol("state_amp_rel", 0.05);
    let state_rate = cfg.tol("state_rate_abs", 1e-2);
    for (n_tr, _, _, fs, gap) in &rows {
        report.check_rel(&format!("state_a_n{n_tr}"), fs.amplitude, 0.147, state_rel);
        report.check_within(
            &format!("state_b_n{n_tr}"),
            fs.rate / gap,
            1.001,
            state_rate,
        );
    }
    if rows.len() > 1 {
        let spread = |f: &dyn Fn(&FitRow) -> f64| {
            let v: Vec<f64> = rows.iter().map(f).collect();
            v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min)
        };
        let sp = spread(&|r| r.1.rate / r.4);
        let sj = spread(&|r| r.2.rate / r.4);
        report.check_below("b_p_stable", sp, rate_abs);
        report.check_below("b_j_stable", sj, rate_abs);
        let grows = rows
            .windows(2)
            .all(|w| w[1].1.amplitude > w[0].1.amplitude && w[1].2.amplitude > w[0].2.amplitude);
        report.check(
            "amplitudes_grow",
            grows,
            if grows { 1.0 } else { 0.0 },
            "a_P, a_J increase with n_tr".into(),
        );
    }
    report.check_below(
        "state_residual",
        worst_resid,
        cfg.tol("state_residual", 1e-12),
    );
    report.check_below(
        "truncation_discrepancy",
        worst_conv,
        cfg.tol("truncation", 1e-12),
    );
    Ok(report)
}

/// Smallest eigenvalue of the Choi matrix of a qubit map given as a 4x4
/// matrix on `vec(rho_B)`.
pub fn choi_min_eigenvalue(lambda: &CMatrix) -> Result<f64> {
    let mut choi = zeros(4, 4);
    for p in 0..2 {
        for q in 0..2 {
            let image = devectorize(&lambda.column(q * 2 + p).to_owned(), 2)?;
            for i in 0..2 {
                for j in 0..2 {
                    choi[[p * 2 + i, q * 2 + j]] = image[[i, j]];
                }
            }
        }
    }
    let herm = (&choi + &dagger(&choi)).mapv(|z| z * 0.5);
    let (vals, _) = herm.eigh(UPLO::Lower)?;
    Ok(vals.iter().cloned().fold(f64::INFINITY, f64::min))
}

/// RK4 evolution of the qubit dynamical map under a reduced generator,
/// returning `(t, min Choi eigenvalue)` every `sample_every` steps.
fn choi_scan<G: Fn(f64) -> CMatrix>(
    gen: G,
    t_max: f64,
    dt: f64,
    sample_every: usize,
) -> Result<Vec<(f64, f64)>> {
    let steps = (t_max / dt).round() as usize;
    let mut lambda = crate::numerics::identity(4);
    let mut out = vec![(0.0, choi_min_eigenvalue(&lambda)?)];
    for k in 0..steps {
        let t = k as f64 * dt;
        let (g1, g2, g3) = (gen(t), gen(t + 0.5 * dt), gen(t + dt));
        let k1 = g1.dot(&lambda);
        let k2 = g2.dot(&(&lambda + &k1.mapv(|z| z * (0.5 * dt))));
        let k3 = g2.dot(&(&lambda + &k2.mapv(|z| z * (0.5 * dt))));
        let k4 = g3.dot(&(&lambda + &k3.mapv(|z| z * dt)));
        lambda = &lambda
            + &(&k1 + &k2.mapv(|z| z * 2.0) + &k3.mapv(|z| z * 2.0) + &k4).mapv(|z| z * (dt / 6.0));
        if (k + 1) % sample_every == 0 || k + 1 == steps {
            out.push(((k + 1) as f64 * dt, choi_min_eigenvalue(&lambda)?));
        }
    }
    Ok(out)
}

/// Complete-positivity scan of the second-order Rabi generator.
pub fn run_choi(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new("choi");
    let p = match cfg.model_named("rabi") {
        Some(_) => cfg.rabi_params()?,
        None => RabiParams::default().with_g(0.1),
    };
    let grid = cfg.grid_or(10.0, 1e-3)?;
    let sample_every = ((0.01 / grid.dt).round() as usize).max(1);
    report.note("horizon", format!("[0, {}]", grid.t_max));
    report.scalar("dt", grid.dt);

    let f_inf = rabi_analytic_f(&p, None)?;
    let scans: Vec<Result<Vec<(f64, f64)>>> = [true, false]
        .par_iter()
        .map(|&time_dependent| {
            if time_dependent {
                choi_scan(
                    |t| rabi_analytic_f(&p, Some(t)).expect("validated params"),
                    grid.t_max,
                    grid.dt,
                    sample_every,
                )
            } else {
                choi_scan(|_| f_inf.clone(), grid.t_max, grid.dt, sample_every)
            }
        })
        .collect();
    let mut scans = scans.into_iter();
    let td = scans.next().expect("two scans")?;
    let asym = scans.next().expect("two scans")?;
    let td_min = td.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    let asym_min = asym.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    report.series.insert("choi_min_time_dependent".into(), td);
    report.series.insert("choi_min_asymptotic".into(), asym);
    report.scalar("choi_min_time_dependent", td_min);
    report.scalar("choi_min_asymptotic", asym_min);

    let (k_hi, k_lo) = k_matrix_eigenvalues(&p);
    report.scalar("k_eigenvalue_large", k_hi);
    report.scalar("k_eigenvalue_small", k_lo);
    let (num, _) = kossakowski_matrix(&p, None).eigh(UPLO::Lower)?;
    let closed_vs_numeric = (num[0] - k_lo).abs().max((num[1] - k_hi).abs());
    report.scalar("k_closed_form_error", closed_vs_numeric);
    let dt0 = grid.dt;
    let k_dt = kossakowski_matrix(&p, Some(dt0));
    let leading = frobenius(&(k_dt.mapv(|z| z / (2.0 * dt0)) - CMatrix::from_elem((2, 2), ONE)));
    report.scalar("k_dt_leading_deviation", leading);

    report.check(
        "choi_time_dependent_nonnegative",
        td_min >= -cfg.tol("choi", 1e-9),
        td_min,
        format!(">= -{:e}", cfg.tol("choi", 1e-9)),
    );
    let negatives = num.iter().filter(|&&x| x < 0.0).count();
    let expect_neg = if p.omega_eg != 0.0 { 1 } else { 0 };
    report.check(
        "k_matrix_negative_count",
        negatives == expect_neg,
        negatives as f64,
        format!("== {expect_neg}"),
    );
    report.check_below("k_closed_form", closed_vs_numeric, 1e-12);
    report.check_below(
        "k_small_t",
        leading,
        dt0 * (p.gamma_plus().norm() + p.gamma_minus().norm()),
    );
    Ok(report)
}

/// `||F_laplace - F_tcl||_F` for one system, in the eigenbasis coordinates
/// of the unperturbed surviving modes.
pub fn laplace_difference(sys: &SplitLiouvillian) -> Result<f64> {
    let spec0 = analyze(&sys.l0, None)?;
    let ops = EigenbasisOp::new(&spec0, &sys.l1)?;
    let f_lap = laplace_generator(&ops, sys.eps, true)?;
    let ctx = TclContext::with_spectral(sys, spec0)?;
    let f_tcl = ctx.reduce().f;
    Ok(frobenius(&(f_lap - f_tcl)))
}

/// Scaling of the Laplace-vs-TCL generator difference with the coupling.
pub fn run_laplace_compare(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new("laplace-compare");
    let sweep = if cfg.sweep.is_empty() {
        vec![0.02, 0.04, 0.08]
    } else {
        cfg.sweep.clone()
    };
    let three = cfg.three_level_params()?;
    let rabi_p = match cfg.model_named("rabi") {
        Some(_) => cfg.rabi_params()?,
        None => RabiParams {
            omega_eg: 0.0,
            ..RabiParams::default()
        },
    };
    let tol = cfg.tol("exponent", 0.3);
    for (label, target) in [("three_level", 2.0), ("rabi", 4.0)] {
        let diffs: Vec<Result<(f64, f64)>> = sweep
            .par_iter()
            .map(|&e| {
                let sys = if label == "rabi" {
                    rabi(&rabi_p.with_g(e))?
                } else {
                    three_level(&three.with_coupling(e))?
                };
                Ok((e, laplace_difference(&sys)?))
            })
            .collect();
        let diffs: Vec<(f64, f64)> = diffs.into_iter().collect::<Result<_>>()?;
        let slope = loglog_slope(&diffs)?;
        report.series.insert(format!("difference_{label}"), diffs);
        report.scalar(&format!("exponent_{label}"), slope);
        report.check_within(&format!("exponent_{label}"), slope, target, tol);
    }
    // Diagnostic only: with P L1 P = 0 the plain Rabi difference starts at
    // sixth order; a qubit drive restores the fourth-order term.
    let drive = cfg.tol("diagnostic_drive", 1.0);
    let driven: Vec<(f64, f64)> = sweep
        .iter()
        .map(|&e| {
            Ok((
                e,
                laplace_difference(&rabi_driven(&rabi_p.with_g(e), drive)?)?,
            ))
        })
        .collect::<Result<_>>()?;
    report.scalar("exponent_rabi_driven", loglog_slope(&driven)?);
    report
        .series
        .insert("difference_rabi_driven".into(), driven);
    report.note(
        "rabi_pl1p",
        "P L1 P vanishes for the plain Rabi model, so its difference scales as eps^6; exponent_rabi_driven adds a qubit drive",
    );
    Ok(report)
}

/// Equivalence identities of the exact reduction plus in-manifold and
/// quench trajectories against the full RK4 oracle.
pub fn run_equivalence(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new("equivalence");
    let name = cfg.model_name("three-level");
    let (sys, ctx, rho_q) = match name.as_str() {
        "three-level" => {
            let sys = three_level(&cfg.three_level_params()?)?;
            let ctx = TclContext::new(&sys, None)?;
            // (|0> + |e>)/sqrt(2) carries the slowest fast coherence.
            let mut rho = zeros(3, 3);
            for (i, j) in [(0, 0), (0, 2), (2, 0), (2, 2)] {
                rho[[i, j]] = C64::new(0.5, 0.0);
            }
            (sys, ctx, rho)
        }
        "rabi" => {
            let p = cfg.rabi_params()?;
            let sys = rabi(&p)?;
            let ctx = TclContext::new(&sys, None)?;
            (sys, ctx, rabi_vacuum_excited(p.n_tr))
        }
        other => return Err(Error::Config(format!("unknown model '{other}'"))),
    };
    let grid = cfg.grid_or(20.0, 1e-3)?;
    let fit = cfg.fit_or(2.0, 15.0, &grid)?;
    report.note("model", name.clone());
    let l_norm = frobenius(&ctx.l);
    let model = ctx.reduce();
    let inv = model.invariance_residual(&ctx.l);
    let gauge = model.gauge_residual(&ctx.basis);
    let prop2 = ctx.prop2_residual() / l_norm.max(f64::MIN_POSITIVE);
    report.scalar("invariance_residual", inv);
    report.scalar("gauge_residual", gauge);
    report.scalar("prop2_residual_relative", prop2);
    report.check_below("invariance", inv, cfg.tol("invariance", 1e-8));
    report.check_below("gauge", gauge, cfg.tol("gauge", 1e-8));
    report.check_below("prop2", prop2, cfg.tol("prop2", 1e-9));

    let d = sys.dim();
    let sample_dt = cfg.tol("sample_dt", 0.05).max(grid.dt);
    let ts = uniform_grid(grid.t_max, sample_dt);

    // In-manifold initial state K x0, normalized to unit trace.
    let x0 = ctx.basis.coords(&vectorize(&rho_q));
    let v0 = model.k.dot(&x0);
    let tr0 = trace(&devectorize(&v0, d)?);
    let x0 = x0.mapv(|z| z / tr0);
    let mut rho0 = devectorize(&model.k.dot(&x0), d)?;
    rho0 = (&rho0 + &dagger(&rho0)).mapv(|z| z * 0.5);
    let oracle = integrate_master(&ctx.l, &rho0, &ts, grid.dt)?;
    let xs = evolve_reduced(ReducedGenerator::Constant(&model.f), &x0, &ts, grid.dt);
    let traj: Vec<(f64, f64)> = ts
        .iter()
        .zip(oracle.iter().zip(&xs))
        .map(|(&t, (rho, x))| (t, vec_norm(&(vectorize(rho) - model.k.dot(x)))))
        .collect();
    let traj_err = traj.iter().map(|p| p.1).fold(0.0, f64::max);
    report.series.insert("manifold_error".into(), traj);
    report.scalar("manifold_trajectory_error", traj_err);
    report.check_below("manifold_trajectory", traj_err, cfg.tol("trajectory", 1e-8));

    // Quench: anchor x at the end of the window, where rho(t) has relaxed
    // onto the manifold, and propagate it back with F.
    let quench = integrate_master(&ctx.l, &rho_q, &ts, grid.dt)?;
    let t_end = *ts.last().expect("non-empty grid");
    let x_end = ctx
        .basis
        .coords(&vectorize(quench.last().expect("non-empty")));
    let errs: Vec<(f64, f64)> = ts
        .iter()
        .zip(&quench)
        .map(|(&t, rho)| {
            let x = expm(&model.f, t - t_end).dot(&x_end);
            (t, vec_norm(&(vectorize(rho) - model.k.dot(&x))))
        })
        .collect();
    let qf = fit_series(&mut report, "quench_error", &errs, &fit)?;
    report.series.insert("quench_error".into(), errs);
    report.scalar("quench_rate_over_gap", qf.rate / ctx.gap);
    report.check_rel(
        "quench_rate",
        qf.rate / ctx.gap,
        1.0,
        cfg.tol("quench_rate_rel", 0.10),
    );
    Ok(report)
}
