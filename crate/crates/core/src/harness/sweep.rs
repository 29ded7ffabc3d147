use std::fmt::Write as _;
use std::path::Path;

use rand::RngCore;
use rayon::prelude::*;

use super::config::{CovMode, ExperimentConfig};
use crate::array_model::{HermitianMatrix, Scenario};
use crate::cov_est::{cov_racg, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::error::{domain, Error, Result};
use crate::estimators::{
    estimate_doa, estimate_doa_min_oracle, estimate_doa_min_proxy, EstimatorKind, Objective, SearchOptions,
};
use crate::extremes::mse_rate_bounds;
use crate::fim_crb::{alpha_mu, crb_doa, crb_gaussian, gaussian_alpha, nominal_waveforms, AlphaMethod, MaybeFinite};
use crate::sampling::{substream, SnapshotSampler};

/// Outcome of one estimator on one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrialOutcome {
    /// Squared error in rad², and whether the coarse optimum sat on an edge.
    Estimate { sq_err: f64, at_edge: bool },
    Failed,
}

/// Mean squared error of one estimator across the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct MseCurve {
    pub estimator: EstimatorKind,
    pub mode: CovMode,
    pub values: Vec<f64>,
    /// rad²
    pub mse: Vec<f64>,
    /// Standard error of each MSE, rad².
    pub std_error: Vec<f64>,
    /// Successful trials per point.
    pub trials: Vec<usize>,
    pub failures: Vec<usize>,
    pub edge_hits: Vec<usize>,
    /// Per-point, per-trial outcomes in trial order.
    pub outcomes: Vec<Vec<TrialOutcome>>,
}

/// Bounds attached to one sweep point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferencePoint {
    pub value: f64,
    pub crb_g: f64,
    /// `(M / α₁) CRB_G` when `ν > 1`.
    pub crb_k: Option<f64>,
    /// `mse_rate_bounds` when `ν < 1`.
    pub rate_lower: Option<f64>,
    pub rate_upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub curves: Vec<MseCurve>,
    pub reference: Vec<ReferencePoint>,
}

/// Stream index of trial `trial` at sweep point `axis_index`.
pub fn trial_stream(axis_index: usize, trial: usize) -> u64 {
    ((axis_index as u64) << 32) | trial as u64
}

/// CRB_G, CRB_K and rate bounds for one scenario. `α₁` comes from the exact
/// quadrature.
pub fn reference_point(sc: &Scenario, value: f64) -> Result<ReferencePoint> {
    let s = nominal_waveforms(sc)?;
    let crb_g = crb_gaussian(sc, &s)?;
    let mut out = ReferencePoint {
        value,
        crb_g,
        crb_k: None,
        rate_lower: None,
        rate_upper: None,
    };
    if sc.nu > 1.0 {
        let a = alpha_mu(1, sc.nu, sc.beta, sc.sensors(), AlphaMethod::Quadrature, 0, &mut substream(0, 0))?;
        if let MaybeFinite::Finite(a1) = a.value {
            out.crb_k = Some(crb_doa(sc, &s, a1)?);
        }
    } else if sc.nu < 1.0 {
        let b = mse_rate_bounds(sc.tp, sc.nu, sc.beta, crb_g)?;
        out.rate_lower = Some(b.lower);
        out.rate_upper = Some(b.upper);
    }
    Ok(out)
}

fn run_trial(
    cfg: &ExperimentConfig,
    sc: &Scenario,
    sampler: &SnapshotSampler,
    known: &HermitianMatrix,
    axis_index: usize,
    trial: usize,
) -> Vec<TrialOutcome> {
    let mut rng = substream(cfg.master_seed, trial_stream(axis_index, trial));
    let set = sampler.sample(&mut rng).with_seed(rng.next_u64());
    let needs_racg = cfg.estimators.iter().any(|(_, m)| *m == CovMode::Racg);
    let racg = if needs_racg {
        match cov_racg(set.secondary(), sc.eta, DEFAULT_TOL, DEFAULT_MAX_ITER) {
            Ok(fp) => Some(fp.r_hat),
            Err(e) => {
                log::debug!("trial {trial}: covariance estimation failed: {e}");
                None
            }
        }
    } else {
        None
    };
    let interval = sc.search_interval();
    let opts = SearchOptions {
        n_grid: cfg.n_grid,
        ..SearchOptions::default()
    };
    cfg.estimators
        .iter()
        .map(|&(kind, mode)| {
            let r = match mode {
                CovMode::Known => known,
                CovMode::Racg => match &racg {
                    Some(r) => r,
                    None => return TrialOutcome::Failed,
                },
            };
            let x = set.primary();
            let g = &sc.geometry;
            let est = match kind {
                EstimatorKind::MlK => estimate_doa(x, r, g, Objective::MlK { nu: sc.nu, beta: sc.beta }, interval, &opts),
                EstimatorKind::AmlK => estimate_doa(x, r, g, Objective::AmlK { nu: sc.nu }, interval, &opts),
                EstimatorKind::Gaussian => estimate_doa(x, r, g, Objective::Gaussian, interval, &opts),
                EstimatorKind::AmlMinOracle => estimate_doa_min_oracle(&set, r, g, sc.nu, interval, &opts),
                EstimatorKind::AmlMinProxy => estimate_doa_min_proxy(x, r, g, sc.nu, interval, &opts),
            };
            match est {
                Ok(e) => TrialOutcome::Estimate {
                    sq_err: (e.phi_hat - sc.phi0).powi(2),
                    at_edge: e.at_edge,
                },
                Err(e) => {
                    log::debug!("trial {trial}: {} failed: {e}", kind.name());
                    TrialOutcome::Failed
                }
            }
        })
        .collect()
}

fn summarize(outcomes: &[TrialOutcome]) -> (f64, f64, usize, usize, usize) {
    let errs: Vec<f64> = outcomes
        .iter()
        .filter_map(|o| match o {
            TrialOutcome::Estimate { sq_err, .. } => Some(*sq_err),
            TrialOutcome::Failed => None,
        })
        .collect();
    let failures = outcomes.len() - errs.len();
    let edges = outcomes
        .iter()
        .filter(|o| matches!(o, TrialOutcome::Estimate { at_edge: true, .. }))
        .count();
    let n = errs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, 0, failures, edges);
    }
    let mse = errs.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        errs.iter().map(|e| (e - mse).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    (mse, (var / n as f64).sqrt(), n, failures, edges)
}

/// Monte-Carlo MSE of every configured estimator at every sweep point.
///
/// Trial `k` at point `i` draws from stream `(i << 32) | k` of the master
/// seed, and all estimators of a trial share its snapshots. The known
/// covariance is that of the whole noise, `(1 - α) R + α I`. Trials run on
/// `threads` workers (all cores when `None`) and are reduced in trial order,
/// so the result does not depend on the thread count.
pub fn run_mse_sweep(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<SweepResult> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| domain("run_mse_sweep", e.to_string()))?;
    let n_est = cfg.estimators.len();
    let mut curves: Vec<MseCurve> = cfg
        .estimators
        .iter()
        .map(|&(estimator, mode)| MseCurve {
            estimator,
            mode,
            values: cfg.values.clone(),
            mse: Vec::new(),
            std_error: Vec::new(),
            trials: Vec::new(),
            failures: Vec::new(),
            edge_hits: Vec::new(),
            outcomes: Vec::new(),
        })
        .collect();
    let mut reference = Vec::with_capacity(cfg.values.len());
    for (i, &value) in cfg.values.iter().enumerate() {
        let sc = cfg.scenario_at(i);
        sc.validate().map_err(|e| Error::Config {
            key: "sweep_values".into(),
            msg: format!("{value}: {e}"),
        })?;
        let sampler = SnapshotSampler::new(&sc)?;
        let known = sc.total_noise_covariance()?;
        let per_trial: Vec<Vec<TrialOutcome>> = pool.install(|| {
            (0..cfg.trials)
                .into_par_iter()
                .map(|t| run_trial(cfg, &sc, &sampler, &known, i, t))
                .collect()
        });
        for (j, curve) in curves.iter_mut().enumerate().take(n_est) {
            let col: Vec<TrialOutcome> = per_trial.iter().map(|o| o[j]).collect();
            let (mse, se, n, failures, edges) = summarize(&col);
            if failures > 0 {
                log::warn!(
                    "{}:{} at {} = {value}: {failures} of {} trials failed",
                    curve.estimator.name(),
                    curve.mode.name(),
                    cfg.axis.name(),
                    cfg.trials
                );
            }
            curve.mse.push(mse);
            curve.std_error.push(se);
            curve.trials.push(n);
            curve.failures.push(failures);
            curve.edge_hits.push(edges);
            curve.outcomes.push(col);
        }
        reference.push(reference_point(&sc, value)?);
    }
    Ok(SweepResult { curves, reference })
}

/// Least-squares slope of `ln y` on `ln x` and its standard error.
pub fn fit_loglog_slope(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!("{} abscissae, {} ordinates", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(domain("fit_loglog_slope", format!("need at least 3 points, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(domain("fit_loglog_slope", "all values must be positive and finite"));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(domain("fit_loglog_slope", "abscissae are all equal"));
    }
    let slope = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / sxx;
    let resid: f64 = lx.iter().zip(&ly).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum();
    let stderr = (resid / (n - 2.0) / sxx).sqrt();
    Ok((slope, stderr))
}

impl MseCurve {
    /// Log-log slope of the MSE against the sweep values.
    pub fn slope(&self) -> Result<(f64, f64)> {
        fit_loglog_slope(&self.values, &self.mse)
    }
}

/// Rule for the texture scale in the α table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaRule {
    /// `β = 1/ν`, unit-mean texture.
    InverseNu,
    Fixed(f64),
}

impl BetaRule {
    fn beta(self, nu: f64) -> f64 {
        match self {
            Self::InverseNu => 1.0 / nu,
            Self::Fixed(b) => b,
        }
    }
}

/// One row of the α comparison. Closed forms are `None` where their
/// preconditions fail (`M - ν < 2`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaRow {
    pub nu: f64,
    pub beta: f64,
    pub mu: u8,
    pub monte_carlo: f64,
    pub mc_std_error: f64,
    pub three_term: Option<MaybeFinite>,
    pub one_term: Option<MaybeFinite>,
    pub quadrature: MaybeFinite,
}

impl AlphaRow {
    /// Largest pairwise relative difference among MC and the two closed forms.
    pub fn spread(&self) -> Option<f64> {
        let vals = [
            Some(self.monte_carlo),
            self.three_term.and_then(MaybeFinite::finite),
            self.one_term.and_then(MaybeFinite::finite),
        ];
        let v: Option<Vec<f64>> = vals.into_iter().collect();
        let v = v?;
        let mut worst: f64 = 0.0;
        for i in 0..v.len() {
            for j in 0..v.len() {
                if i != j {
                    worst = worst.max((v[i] / v[j] - 1.0).abs());
                }
            }
        }
        Some(worst)
    }

    fn rel(&self, x: Option<MaybeFinite>) -> Option<f64> {
        x.and_then(MaybeFinite::finite).map(|v| v / self.monte_carlo - 1.0)
    }
}

/// α₁ and α₂ by every method for each `ν`.
pub fn run_alpha_table(nu_list: &[f64], m: usize, beta_rule: BetaRule, n_mc: usize, seed: u64) -> Result<Vec<AlphaRow>> {
    let mut rows = Vec::new();
    for (i, &nu) in nu_list.iter().enumerate() {
        let beta = beta_rule.beta(nu);
        for mu in [1u8, 2] {
            let mut rng = substream(seed, trial_stream(i, mu as usize));
            let mc = alpha_mu(mu, nu, beta, m, AlphaMethod::MonteCarlo, n_mc, &mut rng)?;
            let closed = |method| match alpha_mu(mu, nu, beta, m, method, 0, &mut rng.clone()) {
                Ok(a) => Ok(Some(a.value)),
                Err(Error::Domain { .. }) => Ok(None),
                Err(e) => Err(e),
            };
            rows.push(AlphaRow {
                nu,
                beta,
                mu,
                monte_carlo: mc.value.finite().unwrap_or(f64::NAN),
                mc_std_error: mc.std_error.unwrap_or(f64::NAN),
                three_term: closed(AlphaMethod::ThreeTerm)?,
                one_term: closed(AlphaMethod::OneTerm)?,
                quadrature: alpha_mu(mu, nu, beta, m, AlphaMethod::Quadrature, 0, &mut rng)?.value,
            });
        }
    }
    Ok(rows)
}

/// Gaussian rows `α₁ = M`, `α₂ = M (M + 1)`.
pub fn gaussian_alpha_rows(m: usize) -> [(u8, f64); 2] {
    [(1, gaussian_alpha(1, m)), (2, gaussian_alpha(2, m))]
}

fn opt_num(v: Option<f64>, scale: f64) -> String {
    v.map(|x| format!("{:.17e}", x * scale)).unwrap_or_default()
}

fn cell(v: Option<MaybeFinite>) -> String {
    match v {
        None => String::new(),
        Some(x) => x.to_string(),
    }
}

/// α table as CSV.
pub fn alpha_table_csv(rows: &[AlphaRow], m: usize) -> String {
    let mut s = String::from("nu,beta,mu,monte_carlo,mc_std_error,three_term,one_term,quadrature,rel_three_term,rel_one_term,spread\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{:.17e},{:.17e},{},{:.17e},{:.17e},{},{},{},{},{},{}",
            r.nu,
            r.beta,
            r.mu,
            r.monte_carlo,
            r.mc_std_error,
            cell(r.three_term),
            cell(r.one_term),
            r.quadrature,
            opt_num(r.rel(r.three_term), 1.0),
            opt_num(r.rel(r.one_term), 1.0),
            opt_num(r.spread(), 1.0),
        );
    }
    for (mu, a) in gaussian_alpha_rows(m) {
        let _ = writeln!(s, "inf,,{mu},{a:.17e},,,,{a:.17e},,,");
    }
    s
}

/// Conversion factor from rad² to the output unit.
pub fn unit_scale(degrees: bool) -> f64 {
    if degrees {
        (180.0 / std::f64::consts::PI).powi(2)
    } else {
        1.0
    }
}

/// Sweep result as CSV: one row per (sweep value, estimator, mode), with the
/// reference bounds repeated on each row. Squared angles are in rad², or deg²
/// when `degrees` is set.
pub fn sweep_csv(cfg: &ExperimentConfig, res: &SweepResult, degrees: bool) -> String {
    let k = unit_scale(degrees);
    let mut s = String::from(
        "axis,value,estimator,cov_mode,trials,failures,edge_hits,mse,std_error,crb_g,crb_k,rate_lower,rate_upper\n",
    );
    for (i, reference) in res.reference.iter().enumerate() {
        for c in &res.curves {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{:.17e},{:.17e},{:.17e},{},{},{}",
                cfg.axis.name(),
                cfg.format_value(c.values[i]),
                c.estimator.name(),
                c.mode.name(),
                c.trials[i],
                c.failures[i],
                c.edge_hits[i],
                c.mse[i] * k,
                c.std_error[i] * k,
                reference.crb_g * k,
                opt_num(reference.crb_k, k),
                opt_num(reference.rate_lower, k),
                opt_num(reference.rate_upper, k),
            );
        }
    }
    s
}

pub fn emit_csv(cfg: &ExperimentConfig, res: &SweepResult, path: &Path, degrees: bool) -> Result<()> {
    std::fs::write(path, sweep_csv(cfg, res, degrees))?;
    Ok(())
}
