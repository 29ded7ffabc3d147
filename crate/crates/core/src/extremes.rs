//! Statistics of the smallest texture among `T_p` snapshots, and the MSE
//! bounds they imply when `ν < 1`.
//!
//! With `u_T = min_t τ_t` and `τ_t ~ Gamma(ν, β)`, `T^{1/ν} u_T` converges in
//! law to a Weibull variable `v` with `P(v ≥ x) = exp(-β^{-ν} x^ν / (ν Γ(ν)))`
//! and mean `C(ν, β)`.

use crate::error::{domain, Result};
use crate::specfun::{log_gamma, reg_upper_inc_gamma};

fn check_texture(func: &'static str, nu: f64, beta: f64) -> Result<()> {
    if !(nu > 0.0 && nu.is_finite() && beta > 0.0 && beta.is_finite()) {
        return Err(domain(func, format!("nu = {nu}, beta = {beta} must be positive")));
    }
    Ok(())
}

/// `P(u_T <= η) = 1 - [1 - P(ν, η/β)]^{T_p}`.
pub fn cdf_min_texture(eta: f64, nu: f64, beta: f64, tp: usize) -> Result<f64> {
    check_texture("cdf_min_texture", nu, beta)?;
    if eta.is_nan() || eta < 0.0 {
        return Err(domain("cdf_min_texture", format!("eta = {eta} must be non-negative")));
    }
    if tp == 0 {
        return Err(domain("cdf_min_texture", "T_p must be at least 1"));
    }
    let survive = reg_upper_inc_gamma(nu, eta / beta)?;
    if survive == 0.0 {
        return Ok(1.0);
    }
    Ok(-(tp as f64 * survive.ln()).exp_m1())
}

fn weibull_rate(nu: f64, beta: f64) -> Result<f64> {
    Ok((-nu * beta.ln() - nu.ln() - log_gamma(nu)?).exp())
}

/// Limit c.d.f. `1 - exp(-β^{-ν} x^ν / (ν Γ(ν)))` of `T^{1/ν} u_T`.
pub fn limiting_cdf_v(x: f64, nu: f64, beta: f64) -> Result<f64> {
    check_texture("limiting_cdf_v", nu, beta)?;
    if x.is_nan() || x < 0.0 {
        return Err(domain("limiting_cdf_v", format!("x = {x} must be non-negative")));
    }
    Ok(-(-weibull_rate(nu, beta)? * x.powf(nu)).exp_m1())
}

/// `C(ν, β) = β ν^{1/ν - 1} Γ(ν)^{1/ν} Γ(1/ν)`, the mean of the limit law.
pub fn c_constant(nu: f64, beta: f64) -> Result<f64> {
    check_texture("c_constant", nu, beta)?;
    let inv = 1.0 / nu;
    Ok((beta.ln() + (inv - 1.0) * nu.ln() + inv * log_gamma(nu)? + log_gamma(inv)?).exp())
}

/// MSE sandwich for the AML estimate when the signal FIM is unbounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateBound {
    pub tp: usize,
    /// `CRB_G · C · T_p^{-1/ν}`.
    pub lower: f64,
    /// `CRB_G · C · T_p^{1 - 1/ν}`.
    pub upper: f64,
    pub crb_g: f64,
    pub nu: f64,
    pub beta: f64,
}

/// `crb_g` is the Gaussian bound for the same `T_p` snapshots. Only defined
/// for `0 < ν < 1`.
pub fn mse_rate_bounds(tp: usize, nu: f64, beta: f64, crb_g: f64) -> Result<RateBound> {
    check_texture("mse_rate_bounds", nu, beta)?;
    if nu >= 1.0 {
        return Err(domain("mse_rate_bounds", format!("nu = {nu} is regular; use crb_doa")));
    }
    if !(crb_g > 0.0 && crb_g.is_finite()) {
        return Err(domain("mse_rate_bounds", format!("crb_g = {crb_g} must be positive")));
    }
    if tp == 0 {
        return Err(domain("mse_rate_bounds", "T_p must be at least 1"));
    }
    let t = tp as f64;
    let lower = crb_g * c_constant(nu, beta)? * t.powf(-1.0 / nu);
    Ok(RateBound {
        tp,
        lower,
        upper: lower * t,
        crb_g,
        nu,
        beta,
    })
}
