//! Fixed-point scatter estimators on secondary (noise-only) data.
//!
//! All three start from `R₀ = I` and stop when the relative Frobenius change
//! between successive iterates drops below `tol`.

use num_complex::Complex64;

use crate::array_model::{CMatrix, HermitianMatrix};
use crate::error::{domain, Error, Result};
use crate::fim_crb::score_phi;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 200;

#[derive(Debug, Clone)]
pub struct FixedPointResult {
    pub r_hat: HermitianMatrix,
    pub iterations: usize,
    /// Relative Frobenius change of the last step.
    pub final_delta: f64,
    pub converged: bool,
    /// Relative change of every step, in order.
    pub deltas: Vec<f64>,
}

fn check_secondary(func: &'static str, y: &CMatrix, need_full_rank: bool) -> Result<()> {
    let (m, t) = (y.nrows(), y.ncols());
    if m == 0 || t == 0 {
        return Err(Error::Dimension(format!("{func}: empty secondary data ({m}x{t})")));
    }
    if let Some(k) = y.column_iter().position(|c| !(c.norm_squared() > 0.0) || !c.norm_squared().is_finite()) {
        return Err(domain(func, format!("snapshot {k} is zero or not finite")));
    }
    if need_full_rank {
        if t < m {
            return Err(domain(func, format!("need T_s >= M, got T_s = {t}, M = {m}")));
        }
        let scm = y * y.adjoint() / Complex64::new(t as f64, 0.0);
        HermitianMatrix::new(scm).map_err(|_| Error::EstimationFailure(format!("{func}: secondary data is rank deficient")))?;
    }
    Ok(())
}

fn check_iteration(func: &'static str, tol: f64, max_iter: usize) -> Result<()> {
    if !(tol > 0.0) || max_iter == 0 {
        return Err(domain(func, format!("tol = {tol}, max_iter = {max_iter} must both be positive")));
    }
    Ok(())
}

/// `Σ_t w_t y_t y_t^H · scale`.
fn weighted_scatter(y: &CMatrix, w: &[f64], scale: f64) -> CMatrix {
    let mut yw = y.clone();
    for (mut c, &wt) in yw.column_iter_mut().zip(w) {
        c *= Complex64::new(wt * scale, 0.0);
    }
    yw * y.adjoint()
}

fn quad_forms(r: &HermitianMatrix, y: &CMatrix) -> Vec<f64> {
    r.whiten_matrix(y).column_iter().map(|c| c.norm_squared()).collect()
}

/// Generic loop: `step` maps the current iterate to the next one.
fn iterate<F>(func: &'static str, m: usize, tol: f64, max_iter: usize, mut step: F) -> Result<FixedPointResult>
where
    F: FnMut(&HermitianMatrix) -> Result<CMatrix>,
{
    let mut r = HermitianMatrix::identity(m);
    let mut deltas = Vec::new();
    for k in 1..=max_iter {
        let next = step(&r)?;
        let next = HermitianMatrix::new(next)
            .map_err(|e| Error::EstimationFailure(format!("{func}: iterate {k} lost positive definiteness ({e})")))?;
        let delta = next.rel_frobenius_distance(&r);
        deltas.push(delta);
        r = next;
        if delta < tol {
            return Ok(FixedPointResult {
                r_hat: r,
                iterations: k,
                final_delta: delta,
                converged: true,
                deltas,
            });
        }
    }
    log::warn!("{func}: no convergence after {max_iter} iterations (last change {:e})", deltas[deltas.len() - 1]);
    Ok(FixedPointResult {
        r_hat: r,
        iterations: max_iter,
        final_delta: deltas[deltas.len() - 1],
        converged: false,
        deltas,
    })
}

/// K-distribution maximum-likelihood scatter:
/// `R = (1/T_s) Σ_t φ(q_t) y_t y_t^H`, `q_t = y_t^H R⁻¹ y_t`.
///
/// The fixed point is returned with its own scale; DoA objectives do not
/// depend on it up to the ν-dependent terms.
pub fn cov_ml_k(y: &CMatrix, nu: f64, beta: f64, tol: f64, max_iter: usize) -> Result<FixedPointResult> {
    check_secondary("cov_ml_k", y, true)?;
    check_iteration("cov_ml_k", tol, max_iter)?;
    let m = y.nrows();
    let inv_t = 1.0 / y.ncols() as f64;
    iterate("cov_ml_k", m, tol, max_iter, |r| {
        let q = quad_forms(r, y);
        let s = ml_k_scale(&q, nu, beta, m)?;
        let w = q
            .iter()
            .map(|&q| score_phi(q / s, nu, beta, m))
            .collect::<Result<Vec<_>>>()?;
        Ok(weighted_scatter(y, &w, inv_t))
    })
}

/// Scale `s` with `(1/T) Σ ψ(q_t / s) = M`, `ψ(q) = q φ(q)`.
///
/// Every fixed point satisfies this with `s = 1` (take the trace of `R⁻¹`
/// times the update), and `ψ` increases from `M - ν` to infinity, so the root
/// is unique. Rescaling the iterate by `s` first removes the slowly
/// contracting scale mode of the plain iteration.
fn ml_k_scale(q: &[f64], nu: f64, beta: f64, m: usize) -> Result<f64> {
    let mf = m as f64;
    if mf - nu <= 0.0 {
        // ψ no longer starts below M; fall back to the plain iteration
        return Ok(1.0);
    }
    let excess = |ln_s: f64| -> Result<f64> {
        let s = ln_s.exp();
        let mut acc = 0.0;
        for &qt in q {
            let x = qt / s;
            acc += x * score_phi(x, nu, beta, m)?;
        }
        Ok(acc / q.len() as f64 - mf)
    };
    // mean ψ decreases in s
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    while excess(lo)? < 0.0 {
        lo -= 2.0 * (hi - lo);
        if lo < -700.0 {
            return Ok(1.0);
        }
    }
    while excess(hi)? > 0.0 {
        hi += 2.0 * (hi - lo);
        if hi > 700.0 {
            return Ok(1.0);
        }
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if excess(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// `c_ν = sqrt((M + 1 - ν)(M - ν))`.
pub fn tyler_aml_constant(nu: f64, m: usize) -> Result<f64> {
    let mf = m as f64;
    if !(nu > 0.0 && nu < mf) {
        return Err(domain("tyler_aml_constant", format!("need 0 < nu < M, got nu = {nu}, M = {m}")));
    }
    Ok(((mf + 1.0 - nu) * (mf - nu)).sqrt())
}

/// Tyler-type estimator with weights `c_ν / q_t`.
///
/// The map `R ↦ (c_ν/T_s) Σ y_t y_t^H / q_t` is homogeneous of degree one and
/// multiplies the trace of `R⁻¹ R` by `c_ν / M` per step, so it has no fixed
/// point unless `c_ν = M`. Each iterate is therefore normalized to trace `M`
/// and the returned matrix is the normalized fixed point.
pub fn cov_tyler_aml(y: &CMatrix, nu: f64, tol: f64, max_iter: usize) -> Result<FixedPointResult> {
    check_secondary("cov_tyler_aml", y, true)?;
    check_iteration("cov_tyler_aml", tol, max_iter)?;
    let m = y.nrows();
    let c = tyler_aml_constant(nu, m)?;
    let scale = c / y.ncols() as f64;
    iterate("cov_tyler_aml", m, tol, max_iter, |r| {
        let w: Vec<f64> = quad_forms(r, y).into_iter().map(|q| 1.0 / q).collect();
        Ok(normalize_trace(weighted_scatter(y, &w, scale), m))
    })
}

fn normalize_trace(r: CMatrix, m: usize) -> CMatrix {
    let tr: f64 = r.diagonal().iter().map(|z| z.re).sum();
    r * Complex64::new(m as f64 / tr, 0.0)
}

/// Regularized fixed point on normalized data `z_t = y_t / ‖y_t‖`:
/// `R̆ = (1-η)(M/T_s) Σ z_t z_t^H / (z_t^H R⁻¹ z_t) + η I`, then `R = M R̆ / tr(R̆)`.
/// Valid for any `T_s >= 1`.
pub fn cov_racg(y: &CMatrix, eta: f64, tol: f64, max_iter: usize) -> Result<FixedPointResult> {
    check_secondary("cov_racg", y, false)?;
    check_iteration("cov_racg", tol, max_iter)?;
    if !(eta > 0.0 && eta < 1.0) {
        return Err(domain("cov_racg", format!("eta = {eta} outside (0, 1)")));
    }
    let m = y.nrows();
    let mut z = y.clone();
    for mut c in z.column_iter_mut() {
        let n = c.norm();
        c /= Complex64::new(n, 0.0);
    }
    let scale = (1.0 - eta) * m as f64 / y.ncols() as f64;
    iterate("cov_racg", m, tol, max_iter, |r| {
        let w: Vec<f64> = quad_forms(r, &z).into_iter().map(|q| 1.0 / q).collect();
        let mut next = weighted_scatter(&z, &w, scale);
        for i in 0..m {
            next[(i, i)] += Complex64::new(eta, 0.0);
        }
        Ok(normalize_trace(next, m))
    })
}
