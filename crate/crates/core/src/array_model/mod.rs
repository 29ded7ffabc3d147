//! Array geometry, scenario description and the deterministic matrices the
//! rest of the crate is built on.

mod hermitian;

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{domain, Result};

pub use hermitian::{CMatrix, CVector, HermitianMatrix};

/// Uniform linear array with `sensors` elements spaced `spacing` wavelengths apart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry {
    sensors: usize,
    spacing: f64,
}

impl ArrayGeometry {
    pub fn new(sensors: usize, spacing: f64) -> Result<Self> {
        if sensors < 2 {
            return Err(domain("ArrayGeometry::new", format!("need at least 2 sensors, got {sensors}")));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(domain("ArrayGeometry::new", format!("spacing {spacing} must be positive")));
        }
        Ok(Self { sensors, spacing })
    }

    /// Half-wavelength ULA.
    pub fn half_wavelength(sensors: usize) -> Result<Self> {
        Self::new(sensors, 0.5)
    }

    pub fn sensors(&self) -> usize {
        self.sensors
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }
}

/// Full description of one simulated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub geometry: ArrayGeometry,
    /// True direction of arrival, radians.
    pub phi0: f64,
    /// Correlation coefficient of the exponential Toeplitz noise covariance.
    pub rho: f64,
    pub snr_db: f64,
    /// Texture shape.
    pub nu: f64,
    /// Texture scale.
    pub beta: f64,
    /// Number of primary (signal + noise) snapshots.
    pub tp: usize,
    /// Number of secondary (noise only) snapshots.
    pub ts: usize,
    /// Shrinkage weight of the regularized covariance estimator.
    pub eta: f64,
    /// Weight of the white Gaussian component in the noise mixture.
    pub mixture_alpha: f64,
}

impl Scenario {
    /// The reference experiment: 16-sensor half-wavelength ULA, source at
    /// 10°, ρ = 0.99, SNR = 3 dB, T_p = 16, T_s = 32, η = 0.01, unit-power
    /// texture (β = 1/ν) and no Gaussian component.
    pub fn reference(nu: f64) -> Self {
        Self {
            geometry: ArrayGeometry::half_wavelength(16).expect("16 sensors is valid"),
            phi0: 10f64.to_radians(),
            rho: 0.99,
            snr_db: 3.0,
            nu,
            beta: 1.0 / nu,
            tp: 16,
            ts: 32,
            eta: 0.01,
            mixture_alpha: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let f = "Scenario::validate";
        if !(self.phi0.abs() < PI / 2.0) {
            return Err(domain(f, format!("phi0 = {} outside (-pi/2, pi/2)", self.phi0)));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(domain(f, format!("rho = {} outside (-1, 1)", self.rho)));
        }
        if !self.snr_db.is_finite() {
            return Err(domain(f, "snr_db must be finite"));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(domain(f, format!("nu = {} must be positive", self.nu)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(domain(f, format!("beta = {} must be positive", self.beta)));
        }
        if self.tp == 0 {
            return Err(domain(f, "tp must be at least 1"));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(domain(f, format!("eta = {} outside (0, 1)", self.eta)));
        }
        if !(0.0..=1.0).contains(&self.mixture_alpha) {
            return Err(domain(f, format!("mixture_alpha = {} outside [0, 1]", self.mixture_alpha)));
        }
        Ok(())
    }

    pub fn sensors(&self) -> usize {
        self.geometry.sensors()
    }

    /// Scatter matrix of the K-distributed component.
    pub fn noise_covariance(&self) -> Result<HermitianMatrix> {
        exp_toeplitz_cov(self.sensors(), self.rho)
    }

    /// Covariance of the whole noise, `(1 - α) R + α I`.
    pub fn total_noise_covariance(&self) -> Result<HermitianMatrix> {
        let r = self.noise_covariance()?;
        if self.mixture_alpha == 0.0 {
            return Ok(r);
        }
        let m = self.sensors();
        let a = self.mixture_alpha;
        let mixed = r.entries() * Complex64::new(1.0 - a, 0.0)
            + CMatrix::identity(m, m) * Complex64::new(a, 0.0);
        HermitianMatrix::new(mixed)
    }

    pub fn snr_linear(&self) -> f64 {
        10f64.powf(self.snr_db / 10.0)
    }

    /// Signal power `P` such that `P a₀^H R^{-1} a₀` equals the SNR.
    pub fn signal_power(&self) -> Result<f64> {
        let r = self.noise_covariance()?;
        snr_to_power(self.snr_linear(), &r, &steering_vector(&self.geometry, self.phi0))
    }

    /// Search interval `[φ₀ - 2 φ_3dB, φ₀ + 2 φ_3dB]`.
    pub fn search_interval(&self) -> (f64, f64) {
        let bw = half_power_beamwidth(&self.geometry);
        (self.phi0 - 2.0 * bw, self.phi0 + 2.0 * bw)
    }
}

/// `a_m(φ) = exp(i 2π d m sin φ)`, `m = 0..M-1`.
pub fn steering_vector(g: &ArrayGeometry, phi: f64) -> CVector {
    let k = 2.0 * PI * g.spacing * phi.sin();
    CVector::from_iterator(g.sensors, (0..g.sensors).map(|m| Complex64::from_polar(1.0, k * m as f64)))
}

/// `∂a/∂φ`, element-wise `i 2π d m cos φ · a_m(φ)`.
pub fn steering_derivative(g: &ArrayGeometry, phi: f64) -> CVector {
    let k = 2.0 * PI * g.spacing * phi.sin();
    let dk = 2.0 * PI * g.spacing * phi.cos();
    CVector::from_iterator(
        g.sensors,
        (0..g.sensors).map(|m| {
            let mf = m as f64;
            Complex64::new(0.0, dk * mf) * Complex64::from_polar(1.0, k * mf)
        }),
    )
}

/// `R(k, l) = ρ^{|k - l|}`.
pub fn exp_toeplitz_cov(m: usize, rho: f64) -> Result<HermitianMatrix> {
    if !(rho.abs() < 1.0) {
        return Err(domain("exp_toeplitz_cov", format!("|rho| = {} must be < 1", rho.abs())));
    }
    if m == 0 {
        return Err(domain("exp_toeplitz_cov", "dimension must be positive"));
    }
    let r = DMatrix::from_fn(m, m, |k, l| rho.powi(k.abs_diff(l) as i32));
    HermitianMatrix::from_real(&r)
}

/// `∂R/∂ρ`, entry `|k - l| ρ^{|k - l| - 1}` with a zero diagonal.
pub fn exp_toeplitz_cov_drho(m: usize, rho: f64) -> Result<CMatrix> {
    if !(rho.abs() < 1.0) {
        return Err(domain("exp_toeplitz_cov_drho", format!("|rho| = {} must be < 1", rho.abs())));
    }
    Ok(CMatrix::from_fn(m, m, |k, l| {
        let d = k.abs_diff(l);
        let v = if d == 0 { 0.0 } else { d as f64 * rho.powi(d as i32 - 1) };
        Complex64::new(v, 0.0)
    }))
}

/// Broadside half-power beamwidth `0.886 / (M d)` in radians.
pub fn half_power_beamwidth(g: &ArrayGeometry) -> f64 {
    0.886 / (g.sensors as f64 * g.spacing)
}

/// `P = snr / (a^H R^{-1} a)`.
pub fn snr_to_power(snr_linear: f64, r: &HermitianMatrix, a: &CVector) -> Result<f64> {
    if !(snr_linear > 0.0 && snr_linear.is_finite()) {
        return Err(domain("snr_to_power", format!("snr {snr_linear} must be positive")));
    }
    if a.len() != r.dim() {
        return Err(crate::Error::Dimension(format!(
            "steering vector has {} entries, covariance is {}x{}",
            a.len(),
            r.dim(),
            r.dim()
        )));
    }
    Ok(snr_linear / r.inv_quad_form(a))
}
