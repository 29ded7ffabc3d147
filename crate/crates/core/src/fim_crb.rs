//! Fisher information for K-distributed noise: the scalars `α_μ`, the signal
//! and covariance FIM blocks, and the resulting Cramér-Rao bounds.
//!
//! The K density generator is `g(Q) ∝ Q^{(ν-M)/2} K_{M-ν}(2 sqrt(Q/β))`, with
//! score `φ(Q) = -g'(Q)/g(Q)`. The signal block of the FIM is the Gaussian one
//! scaled by `α₁ / M`, where `α_μ = E[Q^μ φ²(Q)]`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::array_model::{
    exp_toeplitz_cov, exp_toeplitz_cov_drho, steering_derivative, steering_vector, CMatrix, CVector,
    HermitianMatrix, Scenario,
};
use crate::error::{domain, Error, Result};
use crate::sampling::{sample_modular_variate, substream};
use crate::specfun::{ln_k_real, log_gamma};

/// Default number of Monte-Carlo draws for `α_μ`.
pub const DEFAULT_MC_SAMPLES: usize = 1_000_000;

/// Draws per parallel chunk. Also the batch size of the batch-means error.
const MC_CHUNK: usize = 8192;

/// A quantity that is either a finite number or a divergent integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaybeFinite {
    Finite(f64),
    Divergent,
}

impl MaybeFinite {
    pub fn finite(self) -> Option<f64> {
        match self {
            Self::Finite(v) => Some(v),
            Self::Divergent => None,
        }
    }

    pub fn is_divergent(self) -> bool {
        matches!(self, Self::Divergent)
    }
}

impl std::fmt::Display for MaybeFinite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Finite(v) => write!(f, "{v:.17e}"),
            Self::Divergent => f.write_str("divergent"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AlphaMethod {
    MonteCarlo,
    /// Three-term large `M - ν` approximation.
    ThreeTerm,
    /// One-term approximation from the asymptotic Bessel ratio.
    OneTerm,
    /// Direct numerical integration of the exact integral.
    Quadrature,
}

impl AlphaMethod {
    pub fn name(self) -> &'static str {
        match self {
            Self::MonteCarlo => "monte_carlo",
            Self::ThreeTerm => "three_term",
            Self::OneTerm => "one_term",
            Self::Quadrature => "quadrature",
        }
    }
}

/// `α_μ = E[Q^μ φ²(Q)]` computed by one method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaMu {
    pub mu: u8,
    pub value: MaybeFinite,
    pub method: AlphaMethod,
    /// Draws used (Monte-Carlo only, zero otherwise).
    pub n_samples: usize,
    /// Batch-means standard error (Monte-Carlo only).
    pub std_error: Option<f64>,
}

fn check_model(func: &'static str, nu: f64, beta: f64, m: usize) -> Result<()> {
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(domain(func, format!("nu = {nu} must be positive")));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(domain(func, format!("beta = {beta} must be positive")));
    }
    if m == 0 {
        return Err(domain(func, "M must be positive"));
    }
    Ok(())
}

#[inline]
fn score_unchecked(q: f64, nu: f64, beta: f64, mf: f64) -> f64 {
    // Draws that underflow to zero are pushed to the smallest normal value.
    let q = q.max(f64::MIN_POSITIVE);
    let z = 2.0 * (q / beta).sqrt();
    let ln_ratio = ln_k_real(mf + 1.0 - nu, z) - ln_k_real(mf - nu, z);
    (ln_ratio - 0.5 * (q * beta).ln()).exp()
}

/// `φ(Q) = Q^{-1/2} β^{-1/2} K_{M+1-ν}(z) / K_{M-ν}(z)`, `z = 2 sqrt(Q/β)`.
pub fn score_phi(q: f64, nu: f64, beta: f64, m: usize) -> Result<f64> {
    check_model("score_phi", nu, beta, m)?;
    if !(q > 0.0 && q.is_finite()) {
        return Err(domain("score_phi", format!("Q = {q} must be positive")));
    }
    Ok(score_unchecked(q, nu, beta, m as f64))
}

/// `ln g(Q)` up to an additive constant.
pub fn log_density_generator(q: f64, nu: f64, beta: f64, m: usize) -> Result<f64> {
    check_model("log_density_generator", nu, beta, m)?;
    if !(q > 0.0 && q.is_finite()) {
        return Err(domain("log_density_generator", format!("Q = {q} must be positive")));
    }
    let mf = m as f64;
    Ok(0.5 * (nu - mf) * q.ln() + ln_k_real(mf - nu, 2.0 * (q / beta).sqrt()))
}

/// Evaluates `f` on `n` draws of the modular variate, in parallel chunks with
/// seeds taken from `rng`. The output order is independent of the thread count.
fn mc_values<R, F>(nu: f64, beta: f64, m: usize, n: usize, rng: &mut R, f: F) -> Result<Vec<f64>>
where
    R: Rng + ?Sized,
    F: Fn(f64) -> f64 + Sync,
{
    let chunks = n.div_ceil(MC_CHUNK);
    let seeds: Vec<u64> = (0..chunks).map(|_| rng.next_u64()).collect();
    let parts: Vec<Result<Vec<f64>>> = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &seed)| {
            let len = MC_CHUNK.min(n - i * MC_CHUNK);
            let mut r = substream(seed, 0);
            let q = sample_modular_variate(nu, beta, m, len, &mut r)?;
            Ok(q.into_iter().map(&f).collect())
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Mean and batch-means standard error.
fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let batch: Vec<f64> = values
        .chunks(MC_CHUNK)
        .filter(|c| c.len() == MC_CHUNK)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    if batch.len() < 2 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        return (mean, (var / n).sqrt());
    }
    let nb = batch.len() as f64;
    let bm = batch.iter().sum::<f64>() / nb;
    let var = batch.iter().map(|b| (b - bm).powi(2)).sum::<f64>() / (nb - 1.0);
    (mean, (var / nb).sqrt())
}

fn ln_alpha_prefactor(mu: f64, nu: f64, beta: f64, mf: f64) -> Result<f64> {
    Ok((mu - 2.0) * beta.ln() - log_gamma(mf)? - log_gamma(nu)?)
}

fn three_term(mu: f64, nu: f64, beta: f64, mf: f64) -> Result<f64> {
    let d = mf - nu;
    let pre = ln_alpha_prefactor(mu, nu, beta, mf)?;
    let t1 = (2.0 * d.ln() + log_gamma(mu + mf - 2.0)? + log_gamma(mu + nu - 2.0)? + pre).exp();
    let t2 = 2.0 * d * (log_gamma(mu + mf - 2.0)? + log_gamma(mu + nu - 1.0)? + pre).exp();
    let t3 = (-0.5 * (d.ln() + (d - 1.0).ln()) + log_gamma(mu + mf - 1.0)? + log_gamma(mu + nu)? + pre).exp();
    Ok(t1 + t2 + t3)
}

fn one_term(mu: f64, nu: f64, beta: f64, mf: f64) -> Result<f64> {
    let d = mf - nu;
    let pre = ln_alpha_prefactor(mu, nu, beta, mf)?;
    Ok((0.5 * ((d + 1.0).ln() + d.ln()) + log_gamma(mu + mf - 1.0)? + log_gamma(mu + nu - 2.0)? + pre).exp())
}

/// Power of `z` near the origin in the integrand `z^{2μ+ν+M-3} K²_{M+1-ν}/K_{M-ν}`.
fn small_z_exponent(mu: f64, nu: f64, mf: f64) -> f64 {
    2.0 * mu + nu + mf - 3.0 - 2.0 * (mf + 1.0 - nu).abs() + (mf - nu).abs()
}

/// `ln` of the integrand of `I_μ` at `z = e^u`, including the `dz = z du` factor.
fn ln_i_integrand(u: f64, mu: f64, nu: f64, mf: f64) -> f64 {
    let z = u.exp();
    (2.0 * mu + nu + mf - 2.0) * u + 2.0 * ln_k_real(mf + 1.0 - nu, z) - ln_k_real(mf - nu, z)
}

/// `ln I_μ` by trapezoid integration in `u = ln z`, with the analytic power
/// law below the lower cut. The integrand is analytic in `u` and decays
/// exponentially on both sides, so the trapezoid rule converges geometrically.
fn ln_i_mu_quadrature(mu: f64, nu: f64, mf: f64) -> f64 {
    const H: f64 = 0.01;
    const DROP: f64 = 40.0;
    let e1 = small_z_exponent(mu, nu, mf) + 1.0;
    let f = |u: f64| ln_i_integrand(u, mu, nu, mf);

    // crude peak search on a coarse grid; the integrand is unimodal in u
    let mut u_peak = -10.0;
    let mut best = f(u_peak);
    let mut u = -10.0;
    while u < 8.0 {
        u += 0.25;
        let v = f(u);
        if v > best {
            best = v;
            u_peak = u;
        }
    }
    let lo_limit = (1e-6f64).ln();
    let mut sum = 1.0;
    let mut k = 1;
    loop {
        let d = f(u_peak + k as f64 * H) - best;
        if d < -DROP {
            break;
        }
        sum += d.exp();
        k += 1;
    }
    let mut k = 1;
    let mut u_lo;
    loop {
        u_lo = u_peak - k as f64 * H;
        let d = f(u_lo) - best;
        if d < -DROP || u_lo < lo_limit {
            // half weight at the cut plus the power-law tail beyond it
            sum += d.exp() * (0.5 + 1.0 / (e1 * H));
            break;
        }
        sum += d.exp();
        k += 1;
    }
    best + (sum * H).ln()
}

fn quadrature(mu: f64, nu: f64, beta: f64, mf: f64) -> Result<f64> {
    let ln_norm = (2.0 * mu + nu + mf - 4.0) * std::f64::consts::LN_2;
    Ok((ln_alpha_prefactor(mu, nu, beta, mf)? - ln_norm + ln_i_mu_quadrature(mu, nu, mf)).exp())
}

/// `α_μ` for `μ ∈ {1, 2}`.
///
/// Closed forms return [`MaybeFinite::Divergent`] when `μ + ν - 2 <= 0`, and
/// require `M - ν >= 2`. The Monte-Carlo estimate always returns a number; in
/// the divergent regime that number is the mean of an infinite-mean sample.
pub fn alpha_mu<R: Rng + ?Sized>(
    mu: u8,
    nu: f64,
    beta: f64,
    m: usize,
    method: AlphaMethod,
    n_samples: usize,
    rng: &mut R,
) -> Result<AlphaMu> {
    check_model("alpha_mu", nu, beta, m)?;
    if !(mu == 1 || mu == 2) {
        return Err(domain("alpha_mu", format!("mu = {mu} must be 1 or 2")));
    }
    let (muf, mf) = (mu as f64, m as f64);
    let mut out = AlphaMu {
        mu,
        value: MaybeFinite::Divergent,
        method,
        n_samples: 0,
        std_error: None,
    };
    match method {
        AlphaMethod::MonteCarlo => {
            if n_samples < 2 {
                return Err(domain("alpha_mu", "Monte-Carlo needs at least 2 samples"));
            }
            let vals = mc_values(nu, beta, m, n_samples, rng, |q| {
                q.powi(mu as i32) * score_unchecked(q, nu, beta, mf).powi(2)
            })?;
            let (mean, se) = mean_and_se(&vals);
            out.value = MaybeFinite::Finite(mean);
            out.n_samples = n_samples;
            out.std_error = Some(se);
        }
        AlphaMethod::ThreeTerm | AlphaMethod::OneTerm => {
            if muf + nu - 2.0 <= 0.0 {
                return Ok(out);
            }
            if mf - nu < 2.0 {
                return Err(domain(
                    "alpha_mu",
                    format!("closed forms need M - nu >= 2, got {}", mf - nu),
                ));
            }
            if mf - nu < 5.0 {
                log::warn!("alpha_mu: M - nu = {} is small for the large M - nu approximations", mf - nu);
            }
            let v = if method == AlphaMethod::ThreeTerm {
                three_term(muf, nu, beta, mf)?
            } else {
                one_term(muf, nu, beta, mf)?
            };
            out.value = MaybeFinite::Finite(v);
        }
        AlphaMethod::Quadrature => {
            if small_z_exponent(muf, nu, mf) <= -1.0 {
                return Ok(out);
            }
            out.value = MaybeFinite::Finite(quadrature(muf, nu, beta, mf)?);
        }
    }
    Ok(out)
}

/// Gaussian reference: `g(t) = e^{-t}`, `φ ≡ 1`, `Q ~ Gamma(M, 1)`, so
/// `α_μ = Γ(M + μ) / Γ(M)`, i.e. `M` and `M (M + 1)`.
pub fn gaussian_alpha(mu: u8, m: usize) -> f64 {
    let mf = m as f64;
    (0..mu).map(|k| mf + k as f64).product()
}

/// Monte-Carlo `α_μ` for the Gaussian generator, as a check of the sampler.
pub fn gaussian_alpha_mc<R: Rng + ?Sized>(mu: u8, m: usize, n: usize, rng: &mut R) -> Result<f64> {
    let g = rand_distr::Gamma::new(m as f64, 1.0).map_err(|e| domain("gaussian_alpha_mc", e.to_string()))?;
    let s: f64 = (0..n).map(|_| rand_distr::Distribution::sample(&g, rng).powi(mu as i32)).sum();
    Ok(s / n as f64)
}

/// `I_μ = ∫₀^∞ z^{2μ+ν+M-3} K²_{M+1-ν}(z) / K_{M-ν}(z) dz` bracket.
pub fn i_mu_bounds(mu: u8, nu: f64, m: usize) -> Result<(MaybeFinite, MaybeFinite)> {
    let (muf, mf) = (mu as f64, m as f64);
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(domain("i_mu_bounds", format!("nu = {nu} must be positive")));
    }
    if mf - nu <= 0.0 {
        return Err(domain("i_mu_bounds", format!("bounds need M > nu, got M - nu = {}", mf - nu)));
    }
    if muf + nu - 2.0 <= 0.0 {
        return Ok((MaybeFinite::Divergent, MaybeFinite::Divergent));
    }
    let d = mf - nu;
    let ln2 = std::f64::consts::LN_2;
    let p = 2.0 * muf + nu + mf - 4.0;
    let half = log_gamma(muf + mf - 0.5)? + log_gamma(muf + nu - 1.5)? + p * ln2;
    let whole = log_gamma(muf + mf - 1.0)? + log_gamma(muf + nu - 2.0)?;
    let lower = (0.5 * (d / (d + 1.0)).ln() + half).exp() + d * (whole + (p - 1.0) * ln2).exp();
    let upper = (d + 1.0) * (whole + p * ln2).exp() + half.exp();
    Ok((MaybeFinite::Finite(lower), MaybeFinite::Finite(upper)))
}

/// Converts `α_μ` to `I_μ = α_μ 2^{2μ+ν+M-4} Γ(M) Γ(ν) / β^{μ-2}`.
pub fn alpha_to_i_mu(alpha: f64, mu: u8, nu: f64, beta: f64, m: usize) -> Result<f64> {
    let (muf, mf) = (mu as f64, m as f64);
    Ok(alpha
        * ((2.0 * muf + nu + mf - 4.0) * std::f64::consts::LN_2 + log_gamma(mf)? + log_gamma(nu)?
            - (muf - 2.0) * beta.ln())
        .exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundedness {
    Bounded,
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Regularity {
    pub fim_signal: Boundedness,
    pub fim_noise: Boundedness,
}

/// The signal FIM is finite only for `ν > 1`; the covariance FIM always is.
pub fn regularity(nu: f64) -> Regularity {
    Regularity {
        fim_signal: if nu > 1.0 {
            Boundedness::Bounded
        } else {
            Boundedness::Unbounded
        },
        fim_noise: Boundedness::Bounded,
    }
}

/// Running Monte-Carlo means at one sample size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceRow {
    pub n: usize,
    /// Mean of `1/Q`.
    pub mean_inv_q: f64,
    /// Mean of `Q φ²(Q)`.
    pub mean_q_phi2: f64,
}

/// Running means of `1/Q` and `Q φ²(Q)` over one stream of draws, read off at
/// each size in `sample_sizes`. Both stabilize when `ν > 1` and keep growing
/// when `ν <= 1`.
pub fn divergence_diagnostic<R: Rng + ?Sized>(
    nu: f64,
    beta: f64,
    m: usize,
    sample_sizes: &[usize],
    rng: &mut R,
) -> Result<Vec<DivergenceRow>> {
    check_model("divergence_diagnostic", nu, beta, m)?;
    let n_max = sample_sizes.iter().copied().max().unwrap_or(0);
    if n_max == 0 {
        return Ok(Vec::new());
    }
    let mf = m as f64;
    let q = mc_values(nu, beta, m, n_max, rng, |q| q)?;
    let (mut s_inv, mut s_phi) = (0.0, 0.0);
    let mut cum = Vec::with_capacity(n_max + 1);
    cum.push((0.0, 0.0));
    let phi2: Vec<f64> = q.par_iter().map(|&q| q * score_unchecked(q, nu, beta, mf).powi(2)).collect();
    for (qi, p) in q.iter().zip(&phi2) {
        s_inv += 1.0 / qi.max(f64::MIN_POSITIVE);
        s_phi += p;
        cum.push((s_inv, s_phi));
    }
    Ok(sample_sizes
        .iter()
        .map(|&n| {
            let (a, b) = cum[n];
            let nf = n.max(1) as f64;
            DivergenceRow {
                n,
                mean_inv_q: a / nf,
                mean_q_phi2: b / nf,
            }
        })
        .collect())
}

/// `E[Q^μ] = β^μ Γ(μ+ν) Γ(μ+M) / (Γ(ν) Γ(M))`, finite iff `μ + min(ν, M) > 0`.
pub fn moment_q(mu: f64, nu: f64, beta: f64, m: usize) -> Result<MaybeFinite> {
    check_model("moment_q", nu, beta, m)?;
    let mf = m as f64;
    if mu + nu.min(mf) <= 0.0 {
        return Ok(MaybeFinite::Divergent);
    }
    let ln = mu * beta.ln() + log_gamma(mu + nu)? + log_gamma(mu + mf)? - log_gamma(nu)? - log_gamma(mf)?;
    Ok(MaybeFinite::Finite(ln.exp()))
}

/// Deterministic waveforms with `|s_t|² = P`, used for the asymptotic CRB.
pub fn nominal_waveforms(sc: &Scenario) -> Result<CVector> {
    let p = sc.signal_power()?;
    Ok(CVector::from_element(sc.tp, Complex64::new(p.sqrt(), 0.0)))
}

/// Signal FIM over `(φ, Re s_1, Im s_1, ..., Re s_T, Im s_T)` for
/// `m_t = a(φ₀) s_t`: entries `(2α₁/M) Σ_t Re{∂m_t^H R^{-1} ∂m_t}`.
pub fn fim_signal_block(sc: &Scenario, waveforms: &CVector, alpha_1: f64) -> Result<DMatrix<f64>> {
    let r = sc.noise_covariance()?;
    fim_signal_block_with(&r, sc, waveforms, alpha_1)
}

fn fim_signal_block_with(
    r: &HermitianMatrix,
    sc: &Scenario,
    waveforms: &CVector,
    alpha_1: f64,
) -> Result<DMatrix<f64>> {
    if !(alpha_1 > 0.0 && alpha_1.is_finite()) {
        return Err(domain("fim_signal_block", format!("alpha_1 = {alpha_1} must be positive and finite")));
    }
    let m = sc.sensors();
    let a = steering_vector(&sc.geometry, sc.phi0);
    let da = steering_derivative(&sc.geometry, sc.phi0);
    let ri_a = r.solve(&a);
    let aa = a.dotc(&ri_a).re;
    let dd = da.dotc(&r.solve(&da)).re;
    let da_a = da.dotc(&ri_a); // ȧ^H R^{-1} a
    let c = 2.0 * alpha_1 / m as f64;

    let t = waveforms.len();
    let mut f = DMatrix::zeros(1 + 2 * t, 1 + 2 * t);
    f[(0, 0)] = c * waveforms.iter().map(|s| s.norm_sqr()).sum::<f64>() * dd;
    for (k, s) in waveforms.iter().enumerate() {
        let (re, im) = (1 + 2 * k, 2 + 2 * k);
        let cross = s.conj() * da_a;
        f[(0, re)] = c * cross.re;
        f[(0, im)] = c * (Complex64::i() * cross).re;
        f[(re, 0)] = f[(0, re)];
        f[(im, 0)] = f[(0, im)];
        f[(re, re)] = c * aa;
        f[(im, im)] = c * aa;
    }
    Ok(f)
}

/// Smooth parameterization `θ ↦ R(θ)` of the noise covariance.
pub trait NoiseParameterization {
    fn dim(&self) -> usize;
    fn covariance(&self, theta: &[f64]) -> Result<HermitianMatrix>;
    /// `∂R/∂θ_j` for each `j`. Each is Hermitian.
    fn derivatives(&self, theta: &[f64]) -> Result<Vec<CMatrix>>;
}

fn check_theta(theta: &[f64], dim: usize) -> Result<()> {
    if theta.len() != dim {
        return Err(Error::Dimension(format!("expected {dim} noise parameters, got {}", theta.len())));
    }
    Ok(())
}

/// `R(ρ) = [ρ^{|k-l|}]`, `θ = [ρ]`.
#[derive(Debug, Clone, Copy)]
pub struct ExpToeplitz {
    pub sensors: usize,
}

impl NoiseParameterization for ExpToeplitz {
    fn dim(&self) -> usize {
        1
    }

    fn covariance(&self, theta: &[f64]) -> Result<HermitianMatrix> {
        check_theta(theta, 1)?;
        exp_toeplitz_cov(self.sensors, theta[0])
    }

    fn derivatives(&self, theta: &[f64]) -> Result<Vec<CMatrix>> {
        check_theta(theta, 1)?;
        Ok(vec![exp_toeplitz_cov_drho(self.sensors, theta[0])?])
    }
}

/// `R(ρ, σ²) = σ² [ρ^{|k-l|}]`, `θ = [ρ, σ²]`.
#[derive(Debug, Clone, Copy)]
pub struct ScaledExpToeplitz {
    pub sensors: usize,
}

impl NoiseParameterization for ScaledExpToeplitz {
    fn dim(&self) -> usize {
        2
    }

    fn covariance(&self, theta: &[f64]) -> Result<HermitianMatrix> {
        check_theta(theta, 2)?;
        exp_toeplitz_cov(self.sensors, theta[0])?.scaled(theta[1])
    }

    fn derivatives(&self, theta: &[f64]) -> Result<Vec<CMatrix>> {
        check_theta(theta, 2)?;
        let d_rho = exp_toeplitz_cov_drho(self.sensors, theta[0])? * Complex64::new(theta[1], 0.0);
        let d_scale = exp_toeplitz_cov(self.sensors, theta[0])?.into_entries();
        Ok(vec![d_rho, d_scale])
    }
}

/// Covariance FIM over `T = T_p + T_s` noise snapshots:
/// `T [α₂/(M(M+1)) - 1] tr(R⁻¹R_j) tr(R⁻¹R_k) + T α₂/(M(M+1)) tr(R⁻¹R_j R⁻¹R_k)`.
pub fn fim_noise_block(
    param: &dyn NoiseParameterization,
    theta: &[f64],
    alpha_2: f64,
    m: usize,
    t_total: usize,
) -> Result<DMatrix<f64>> {
    if !(alpha_2 > 0.0 && alpha_2.is_finite()) {
        return Err(domain("fim_noise_block", format!("alpha_2 = {alpha_2} must be positive and finite")));
    }
    let r = param.covariance(theta)?;
    if r.dim() != m {
        return Err(Error::Dimension(format!("parameterization has {} sensors, expected {m}", r.dim())));
    }
    let p = param.dim();
    let mut f = DMatrix::zeros(p, p);
    if t_total == 0 {
        return Ok(f);
    }
    let a: Vec<CMatrix> = param.derivatives(theta)?.iter().map(|d| r.solve_matrix(d)).collect();
    let tr: Vec<f64> = a.iter().map(|x| x.trace().re).collect();
    let mf = m as f64;
    let ratio = alpha_2 / (mf * (mf + 1.0));
    let bracket = ratio - 1.0;
    let t = t_total as f64;
    for j in 0..p {
        for k in j..p {
            let tr_jk = (&a[j] * &a[k]).trace().re;
            let v = t * bracket * tr[j] * tr[k] + t * ratio * tr_jk;
            f[(j, k)] = v;
            f[(k, j)] = v;
        }
    }
    Ok(f)
}

/// Both diagonal blocks of the total FIM.
#[derive(Debug, Clone, PartialEq)]
pub struct FimBlocks {
    pub f_ss: DMatrix<f64>,
    pub f_nn: DMatrix<f64>,
    pub tp: usize,
    pub ts: usize,
}

/// Assembles both blocks for the exponential-Toeplitz noise model.
pub fn fim_blocks(sc: &Scenario, waveforms: &CVector, alpha_1: f64, alpha_2: f64) -> Result<FimBlocks> {
    let param = ExpToeplitz { sensors: sc.sensors() };
    Ok(FimBlocks {
        f_ss: fim_signal_block(sc, waveforms, alpha_1)?,
        f_nn: fim_noise_block(&param, &[sc.rho], alpha_2, sc.sensors(), sc.tp + sc.ts)?,
        tp: sc.tp,
        ts: sc.ts,
    })
}

/// `(φ, φ)` entry of the inverse signal FIM via the Schur complement against
/// the waveforms: `1 / (c Σ|s_t|² [ȧ^H R⁻¹ ȧ - |a^H R⁻¹ ȧ|² / a^H R⁻¹ a])`.
fn crb_schur(r: &HermitianMatrix, sc: &Scenario, waveforms: &CVector, alpha_1: f64) -> Result<f64> {
    let a = steering_vector(&sc.geometry, sc.phi0);
    let da = steering_derivative(&sc.geometry, sc.phi0);
    let ua = r.whiten(&a);
    let ud = r.whiten(&da);
    let dd = ud.norm_squared();
    let proj = ua.dotc(&ud).norm_sqr() / ua.norm_squared();
    let gap = dd - proj;
    let energy: f64 = waveforms.iter().map(|s| s.norm_sqr()).sum();
    if energy <= 0.0 {
        return Err(Error::Unidentifiable("all waveforms are zero".into()));
    }
    if !(gap > 1e-12 * dd) {
        return Err(Error::Unidentifiable("steering derivative lies in the steering direction".into()));
    }
    let c = 2.0 * alpha_1 / sc.sensors() as f64;
    Ok(1.0 / (c * energy * gap))
}

/// Cramér-Rao bound on `φ` in the conditional model, for any `α₁`
/// (no regularity check). With `α₁ = M` this is the Gaussian bound.
fn crb_unchecked(sc: &Scenario, waveforms: &CVector, alpha_1: f64) -> Result<f64> {
    if waveforms.len() != sc.tp {
        return Err(Error::Dimension(format!(
            "{} waveforms for T_p = {}",
            waveforms.len(),
            sc.tp
        )));
    }
    let r = sc.noise_covariance()?;
    let schur = crb_schur(&r, sc, waveforms, alpha_1)?;
    if waveforms.len() <= 64 {
        // cross-check against the dense inverse when it is cheap
        let f = fim_signal_block_with(&r, sc, waveforms, alpha_1)?;
        if let Some(inv) = f.clone().try_inverse() {
            let dense = inv[(0, 0)];
            if (dense / schur - 1.0).abs() > 1e-6 {
                log::warn!("crb: dense inverse {dense:e} disagrees with Schur form {schur:e}");
            }
        }
    }
    Ok(schur)
}

/// Gaussian-noise Cramér-Rao bound `CRB_G`, the reference for every `ν`.
pub fn crb_gaussian(sc: &Scenario, waveforms: &CVector) -> Result<f64> {
    crb_unchecked(sc, waveforms, sc.sensors() as f64)
}

/// Cramér-Rao bound on `φ` for K noise, `CRB_K = (M / α₁) CRB_G`.
///
/// Refuses `ν <= 1`, where the signal FIM is unbounded; use
/// [`crate::extremes::mse_rate_bounds`] there.
pub fn crb_doa(sc: &Scenario, waveforms: &CVector, alpha_1: f64) -> Result<f64> {
    if regularity(sc.nu).fim_signal == Boundedness::Unbounded {
        return Err(Error::NonRegular {
            nu: sc.nu,
            msg: "signal FIM is unbounded for nu <= 1; use mse_rate_bounds".into(),
        });
    }
    crb_unchecked(sc, waveforms, alpha_1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_model::ArrayGeometry;
    use crate::specfun::{bessel_k_ratio, BesselOrder};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn rng(s: u64) -> rand_chacha::ChaCha8Rng {
        substream(s, 0)
    }

    #[test]
    fn score_small_q_limit() {
        let (nu, beta, m) = (1.5, 2.0 / 3.0, 16);
        let q = 1e-6;
        let phi = score_phi(q, nu, beta, m).unwrap();
        let limit = (m as f64 - nu) / q;
        assert!((phi / limit - 1.0).abs() < 1e-3, "{phi} vs {limit}");
        // bracket from the ratio bounds scaled by Q^{-1/2} β^{-1/2}
        let z = 2.0 * (q / beta).sqrt();
        let (lo, hi) = crate::specfun::ratio_bounds(BesselOrder::new(m as f64 - nu).unwrap(), z).unwrap();
        let s = 1.0 / (q * beta).sqrt();
        assert!(phi > lo * s && phi < hi * s);
    }

    #[test]
    fn score_half_integer_closed_form() {
        // M - ν = 1/2: K_{3/2}(z) / K_{1/2}(z) = 1 + 1/z
        let (nu, beta, m) = (15.5, 0.8, 16);
        for &q in &[0.01f64, 0.7, 3.0, 40.0] {
            let z = 2.0 * (q / beta).sqrt();
            let want = (1.0 + 1.0 / z) / (q * beta).sqrt();
            assert_relative_eq!(score_phi(q, nu, beta, m).unwrap(), want, max_relative = 1e-12);
        }
    }

    #[test]
    fn score_is_minus_log_generator_derivative() {
        let (nu, beta, m) = (1.5, 2.0 / 3.0, 16);
        for &q in &[0.5f64, 5.0, 50.0] {
            let h = 1e-5 * q;
            let fd = -(log_density_generator(q + h, nu, beta, m).unwrap()
                - log_density_generator(q - h, nu, beta, m).unwrap())
                / (2.0 * h);
            let phi = score_phi(q, nu, beta, m).unwrap();
            assert!((fd / phi - 1.0).abs() < 1e-6, "Q={q}: {fd} vs {phi}");
        }
        assert!(score_phi(0.0, nu, beta, m).is_err());
    }

    #[test]
    fn score_negative_order_uses_signed_orders() {
        // ν > M: the orders M+1-ν and M-ν are negative
        let (nu, beta, m) = (10.0f64, 0.1f64, 8);
        let q = 2.0f64;
        let z = 2.0 * (q / beta).sqrt();
        let want = bessel_k_ratio(BesselOrder::new(1.0).unwrap(), z).unwrap().recip() / (q * beta).sqrt();
        assert_relative_eq!(score_phi(q, nu, beta, m).unwrap(), want, max_relative = 1e-12);
    }

    #[test]
    fn gaussian_generator_alpha() {
        assert_eq!(gaussian_alpha(1, 16), 16.0);
        assert_eq!(gaussian_alpha(2, 16), 272.0);
        let mc1 = gaussian_alpha_mc(1, 16, 200_000, &mut rng(1)).unwrap();
        let mc2 = gaussian_alpha_mc(2, 16, 200_000, &mut rng(2)).unwrap();
        assert!((mc1 / 16.0 - 1.0).abs() < 0.01);
        assert!((mc2 / 272.0 - 1.0).abs() < 0.02);
    }

    #[test]
    fn one_term_example_value() {
        let a = alpha_mu(2, 1.5, 2.0 / 3.0, 16, AlphaMethod::OneTerm, 0, &mut rng(0)).unwrap();
        let want = 16.0 * 224.75f64.sqrt();
        assert_relative_eq!(a.value.finite().unwrap(), want, max_relative = 1e-12);
        assert_relative_eq!(want, 239.87, max_relative = 1e-4);
    }

    #[test]
    fn closed_forms_report_divergence() {
        for method in [AlphaMethod::OneTerm, AlphaMethod::ThreeTerm, AlphaMethod::Quadrature] {
            let a = alpha_mu(1, 0.5, 2.0, 16, method, 0, &mut rng(0)).unwrap();
            assert!(a.value.is_divergent(), "{method:?}");
            let a = alpha_mu(1, 1.0, 1.0, 16, method, 0, &mut rng(0)).unwrap();
            assert!(a.value.is_divergent(), "{method:?} at nu = 1");
            let a = alpha_mu(2, 0.5, 2.0, 16, method, 0, &mut rng(0)).unwrap();
            assert!(!a.value.is_divergent());
        }
        assert!(alpha_mu(1, 15.0, 1.0, 16, AlphaMethod::ThreeTerm, 0, &mut rng(0)).is_err());
        assert!(alpha_mu(3, 1.5, 1.0, 16, AlphaMethod::OneTerm, 0, &mut rng(0)).is_err());
    }

    #[test]
    fn quadrature_matches_monte_carlo() {
        for &(nu, m, mu) in &[(1.5, 16usize, 1u8), (1.5, 16, 2), (3.0, 8, 1), (10.0, 8, 2), (0.5, 16, 2)] {
            let beta = 1.0 / nu;
            let q = alpha_mu(mu, nu, beta, m, AlphaMethod::Quadrature, 0, &mut rng(0)).unwrap();
            let mc = alpha_mu(mu, nu, beta, m, AlphaMethod::MonteCarlo, 400_000, &mut rng(3)).unwrap();
            let (qv, mv) = (q.value.finite().unwrap(), mc.value.finite().unwrap());
            let se = mc.std_error.unwrap();
            assert!(
                (qv - mv).abs() < 4.0 * se + 0.002 * qv,
                "nu={nu} M={m} mu={mu}: quadrature {qv} vs MC {mv} ± {se}"
            );
        }
    }

    #[test]
    fn quadrature_gaussian_limit() {
        // as ν → ∞ with β = 1/ν the texture degenerates to 1 and α_μ → Γ(M+μ)/Γ(M)
        let nu = 4000.0;
        let q = alpha_mu(1, nu, 1.0 / nu, 8, AlphaMethod::Quadrature, 0, &mut rng(0)).unwrap();
        assert!((q.value.finite().unwrap() / 8.0 - 1.0).abs() < 0.01);
    }

    #[test]
    fn mc_is_thread_count_independent() {
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| alpha_mu(1, 1.5, 2.0 / 3.0, 16, AlphaMethod::MonteCarlo, 50_000, &mut rng(9)).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn i_mu_bracket_contains_quadrature() {
        for &nu in &[0.3, 0.5, 1.5, 3.0, 10.0] {
            for &m in &[12usize, 16, 32] {
                let (lo, hi) = i_mu_bounds(2, nu, m).unwrap();
                let (lo, hi) = (lo.finite().unwrap(), hi.finite().unwrap());
                assert!(lo < hi);
                let a = alpha_mu(2, nu, 1.0 / nu, m, AlphaMethod::Quadrature, 0, &mut rng(0)).unwrap();
                let i = alpha_to_i_mu(a.value.finite().unwrap(), 2, nu, 1.0 / nu, m).unwrap();
                assert!(lo < i && i < hi, "nu={nu} M={m}: {lo} < {i} < {hi}");
            }
        }
        let (lo, hi) = i_mu_bounds(1, 0.5, 16).unwrap();
        assert!(lo.is_divergent() && hi.is_divergent());
    }

    #[test]
    fn i_mu_bracket_contains_monte_carlo() {
        let (nu, m) = (1.5, 16);
        let mc = alpha_mu(2, nu, 1.0 / nu, m, AlphaMethod::MonteCarlo, 200_000, &mut rng(4)).unwrap();
        let i = alpha_to_i_mu(mc.value.finite().unwrap(), 2, nu, 1.0 / nu, m).unwrap();
        let (lo, hi) = i_mu_bounds(2, nu, m).unwrap();
        assert!(lo.finite().unwrap() < i && i < hi.finite().unwrap());
    }

    #[test]
    fn regularity_classes() {
        let r = regularity(1.5);
        assert_eq!((r.fim_signal, r.fim_noise), (Boundedness::Bounded, Boundedness::Bounded));
        assert_eq!(regularity(0.5).fim_signal, Boundedness::Unbounded);
        assert_eq!(regularity(1.0).fim_signal, Boundedness::Unbounded);
        assert_eq!(regularity(0.5).fim_noise, Boundedness::Bounded);
    }

    #[test]
    fn moments() {
        let (nu, beta, m) = (1.5, 0.4, 16);
        assert_relative_eq!(moment_q(1.0, nu, beta, m).unwrap().finite().unwrap(), beta * nu * 16.0, max_relative = 1e-12);
        assert_relative_eq!(moment_q(0.0, nu, beta, m).unwrap().finite().unwrap(), 1.0, max_relative = 1e-12);
        assert!(moment_q(-1.0, 0.5, 2.0, m).unwrap().is_divergent());
        let inv = moment_q(-1.0, 2.0, 0.5, m).unwrap().finite().unwrap();
        assert_relative_eq!(inv, 2.0 / 15.0, max_relative = 1e-12);
    }

    #[test]
    fn divergence_diagnostic_shapes() {
        let rows = divergence_diagnostic(2.0, 0.5, 16, &[1000, 200_000], &mut rng(5)).unwrap();
        assert_eq!(rows.len(), 2);
        let want = moment_q(-1.0, 2.0, 0.5, 16).unwrap().finite().unwrap();
        assert!((rows[1].mean_inv_q / want - 1.0).abs() < 0.05);
        assert!(divergence_diagnostic(2.0, 0.5, 16, &[], &mut rng(5)).unwrap().is_empty());
    }

    fn small_scenario(tp: usize) -> Scenario {
        let mut sc = Scenario::reference(1.5);
        sc.geometry = ArrayGeometry::half_wavelength(6).unwrap();
        sc.rho = 0.6;
        sc.tp = tp;
        sc
    }

    fn random_waveforms(t: usize, seed: u64) -> CVector {
        let mut r = rng(seed);
        CVector::from_iterator(t, (0..t).map(|_| crate::sampling::complex_normal(&mut r)))
    }

    #[test]
    fn signal_block_structure() {
        let sc = small_scenario(3);
        let s = random_waveforms(3, 1);
        let f = fim_signal_block(&sc, &s, 6.0).unwrap();
        assert_eq!(f.shape(), (7, 7));
        assert!((&f - f.transpose()).norm() < 1e-12);
        assert!(f.clone().symmetric_eigenvalues().iter().all(|&e| e > -1e-10 * f.norm()));

        let z = fim_signal_block(&sc, &CVector::zeros(3), 6.0).unwrap();
        assert!(z.row(0).iter().all(|&v| v == 0.0));
        assert!(z.column(0).iter().all(|&v| v == 0.0));

        let c = Complex64::new(1.5, -0.7);
        let fc = fim_signal_block(&sc, &(&s * c), 6.0).unwrap();
        assert_relative_eq!(fc[(0, 0)], c.norm_sqr() * f[(0, 0)], max_relative = 1e-12);
    }

    #[test]
    fn signal_block_gaussian_form() {
        // α₁ = M gives the classical 2 Re{∂m^H R⁻¹ ∂m} entries
        let sc = small_scenario(2);
        let s = random_waveforms(2, 2);
        let f = fim_signal_block(&sc, &s, 6.0).unwrap();
        let r = sc.noise_covariance().unwrap();
        let a = steering_vector(&sc.geometry, sc.phi0);
        let da = steering_derivative(&sc.geometry, sc.phi0);
        let dm0 = &da * s[0];
        let dm1 = &da * s[1];
        let want = 2.0 * (dm0.dotc(&r.solve(&dm0)).re + dm1.dotc(&r.solve(&dm1)).re);
        assert_relative_eq!(f[(0, 0)], want, max_relative = 1e-12);
        let want_re = 2.0 * dm0.dotc(&r.solve(&a)).re;
        assert_relative_eq!(f[(0, 1)], want_re, max_relative = 1e-12);
        let ia = &a * Complex64::i();
        assert_relative_eq!(f[(0, 2)], 2.0 * dm0.dotc(&r.solve(&ia)).re, max_relative = 1e-10);
    }

    #[test]
    fn crb_scaling_and_refusal() {
        let sc = small_scenario(4);
        let s = random_waveforms(4, 3);
        let g = crb_gaussian(&sc, &s).unwrap();
        assert_relative_eq!(crb_doa(&sc, &s, 6.0).unwrap(), g, max_relative = 1e-12);
        let k = crb_doa(&sc, &s, 4.2).unwrap();
        assert_relative_eq!(k * 4.2 / 6.0, g, max_relative = 1e-12);
        let s2 = &s * Complex64::new(2f64.sqrt(), 0.0);
        assert_relative_eq!(crb_gaussian(&sc, &s2).unwrap(), g / 2.0, max_relative = 1e-12);

        let dense = fim_signal_block(&sc, &s, 6.0).unwrap().try_inverse().unwrap()[(0, 0)];
        assert_relative_eq!(dense, g, max_relative = 1e-8);

        assert!(matches!(crb_gaussian(&sc, &CVector::zeros(4)), Err(Error::Unidentifiable(_))));
        let mut nr = sc.clone();
        nr.nu = 0.5;
        assert!(matches!(crb_doa(&nr, &s, 6.0), Err(Error::NonRegular { .. })));
        assert!(crb_gaussian(&nr, &s).is_ok());
    }

    #[test]
    fn noise_block_gaussian_and_scale_forms() {
        let m = 5;
        let param = ExpToeplitz { sensors: m };
        let theta = [0.6];
        let a2 = (m * (m + 1)) as f64;
        let f = fim_noise_block(&param, &theta, a2, m, 40).unwrap();
        let r = param.covariance(&theta).unwrap();
        let d = r.solve_matrix(&param.derivatives(&theta).unwrap()[0]);
        assert_relative_eq!(f[(0, 0)], 40.0 * (&d * &d).trace().re, max_relative = 1e-14);

        // R_j = R: T[α₂ M/(M+1) - M²] + T α₂/(M+1)
        let sp = ScaledExpToeplitz { sensors: m };
        let alpha2 = 21.0;
        let f = fim_noise_block(&sp, &[0.6, 1.0], alpha2, m, 10).unwrap();
        let mf = m as f64;
        let want = 10.0 * (alpha2 * mf / (mf + 1.0) - mf * mf) + 10.0 * alpha2 / (mf + 1.0);
        assert_relative_eq!(f[(1, 1)], want, max_relative = 1e-12);
        assert!((&f - f.transpose()).norm() == 0.0);

        assert!(fim_noise_block(&param, &theta, a2, m, 0).unwrap().iter().all(|&v| v == 0.0));
        assert!(fim_noise_block(&param, &[0.6, 1.0], a2, m, 1).is_err());
    }

    #[test]
    fn noise_block_matches_gaussian_loglik_curvature() {
        // Gaussian log-likelihood in ρ: -T ln det R - Σ y^H R⁻¹ y. The expected
        // negative Hessian is T tr((R⁻¹R_ρ)²); compare with the observed one.
        let (m, rho, t) = (4, 0.5, 20_000);
        let param = ExpToeplitz { sensors: m };
        let truth = param.covariance(&[rho]).unwrap();
        let l = truth.factor();
        let mut r = rng(17);
        let y = &l * CMatrix::from_fn(m, t, |_, _| crate::sampling::complex_normal(&mut r));
        let scatter = &y * y.adjoint();
        let loglik = |p: f64| {
            let rr = param.covariance(&[p]).unwrap();
            let ln_det: f64 = 2.0 * rr.factor().diagonal().iter().map(|d| d.re.ln()).sum::<f64>();
            -(t as f64) * ln_det - rr.solve_matrix(&scatter).trace().re
        };
        let h = 1e-3;
        let hess = (loglik(rho + h) - 2.0 * loglik(rho) + loglik(rho - h)) / (h * h);
        let f = fim_noise_block(&param, &[rho], (m * (m + 1)) as f64, m, t).unwrap();
        assert!((-hess / f[(0, 0)] - 1.0).abs() < 0.05, "{} vs {}", -hess, f[(0, 0)]);
    }

    #[test]
    fn noise_block_psd_on_rho_parameterization() {
        for &nu in &[0.3, 1.5, 10.0] {
            let a = alpha_mu(2, nu, 1.0 / nu, 16, AlphaMethod::Quadrature, 0, &mut rng(0)).unwrap();
            let f = fim_noise_block(&ExpToeplitz { sensors: 16 }, &[0.99], a.value.finite().unwrap(), 16, 48).unwrap();
            assert!(f[(0, 0)] > 0.0);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn crb_times_alpha_is_invariant(alpha in 0.5f64..100.0, tp in 1usize..6, seed in 0u64..1000) {
            let sc = small_scenario(tp);
            let s = random_waveforms(tp, seed);
            let k = crb_doa(&sc, &s, alpha).unwrap();
            let g = crb_gaussian(&sc, &s).unwrap();
            prop_assert!((k * alpha / 6.0 / g - 1.0).abs() < 1e-12);
        }

        #[test]
        fn gaussian_noise_bracket_vanishes(m in 2usize..20, rho in -0.9f64..0.9, t in 1usize..100) {
            let p = ExpToeplitz { sensors: m };
            let f = fim_noise_block(&p, &[rho], (m * (m + 1)) as f64, m, t).unwrap();
            let r = p.covariance(&[rho]).unwrap();
            let d = r.solve_matrix(&p.derivatives(&[rho]).unwrap()[0]);
            let classical = t as f64 * (&d * &d).trace().re;
            prop_assert!((f[(0, 0)] - classical).abs() <= 1e-12 * classical.abs().max(1e-300));
        }

        #[test]
        fn score_positive(q in 1e-6f64..1e4, nu in 0.1f64..20.0, m in 1usize..40) {
            let v = score_phi(q, nu, 1.0 / nu, m).unwrap();
            prop_assert!(v > 0.0 && v.is_finite());
        }
    }
}
