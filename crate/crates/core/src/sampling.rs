//! Random generation of textures, modular variates and snapshot sets.
//!
//! Complex Gaussian convention: `CN(0, 1)` has independent real and imaginary
//! parts of variance 1/2, so `‖CN(0, I_M)‖² ~ Gamma(M, 1)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::array_model::{steering_vector, CMatrix, CVector, Scenario};
use crate::error::{domain, Error, Result};

/// Independent random stream `stream` of the generator seeded by `master`.
pub fn substream(master: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng
}

fn gamma(shape: f64, scale: f64) -> Result<Gamma<f64>> {
    Gamma::new(shape, scale)
        .map_err(|e| domain("gamma", format!("shape {shape}, scale {scale}: {e}")))
}

/// One draw from `CN(0, 1)`.
#[inline]
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// `n` i.i.d. `Gamma(shape = nu, scale = beta)` textures.
pub fn sample_texture<R: Rng + ?Sized>(nu: f64, beta: f64, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    let g = gamma(nu, beta)?;
    Ok((0..n).map(|_| g.sample(rng)).collect())
}

/// `n` draws of `Q = G₁ G₂` with `G₁ ~ Gamma(ν, β)` and `G₂ ~ Gamma(M, 1)`.
pub fn sample_modular_variate<R: Rng + ?Sized>(
    nu: f64,
    beta: f64,
    m: usize,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let tex = gamma(nu, beta)?;
    let chi = gamma(m as f64, 1.0)?;
    Ok((0..n).map(|_| tex.sample(rng) * chi.sample(rng)).collect())
}

/// Primary and secondary data of one trial.
///
/// The simulator-side textures and waveforms are kept for oracle estimators
/// only; regular estimators work from [`SnapshotSet::primary`] and
/// [`SnapshotSet::secondary`].
#[derive(Debug, Clone)]
pub struct SnapshotSet {
    x: CMatrix,
    y: CMatrix,
    hidden_tau_p: Vec<f64>,
    hidden_s: CVector,
    seed: u64,
}

impl SnapshotSet {
    /// Wraps observed data without any simulator-side information.
    pub fn from_observations(x: CMatrix, y: CMatrix) -> Result<Self> {
        if x.ncols() > 0 && y.ncols() > 0 && x.nrows() != y.nrows() {
            return Err(Error::Dimension(format!(
                "primary has {} sensors, secondary has {}",
                x.nrows(),
                y.nrows()
            )));
        }
        Ok(Self {
            x,
            y,
            hidden_tau_p: Vec::new(),
            hidden_s: CVector::zeros(0),
            seed: 0,
        })
    }

    /// `M × T_p` primary data.
    pub fn primary(&self) -> &CMatrix {
        &self.x
    }

    /// `M × T_s` secondary data.
    pub fn secondary(&self) -> &CMatrix {
        &self.y
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Oracle access to the primary textures. Empty for observed data.
    pub fn oracle_textures(&self) -> &[f64] {
        &self.hidden_tau_p
    }

    /// Oracle access to the true waveforms. Empty for observed data.
    pub fn oracle_waveforms(&self) -> &CVector {
        &self.hidden_s
    }
}

/// Precomputed quantities for repeated draws from one scenario.
#[derive(Debug, Clone)]
pub struct SnapshotSampler {
    tp: usize,
    ts: usize,
    m: usize,
    factor: CMatrix,
    a0: CVector,
    power: f64,
    mixture_alpha: f64,
    texture: Gamma<f64>,
}

impl SnapshotSampler {
    pub fn new(sc: &Scenario) -> Result<Self> {
        sc.validate()?;
        let r = sc.noise_covariance()?;
        Ok(Self {
            tp: sc.tp,
            ts: sc.ts,
            m: sc.sensors(),
            factor: r.factor(),
            a0: steering_vector(&sc.geometry, sc.phi0),
            power: sc.signal_power()?,
            mixture_alpha: sc.mixture_alpha,
            texture: gamma(sc.nu, sc.beta)?,
        })
    }

    /// Signal power `P` used for the waveforms.
    pub fn power(&self) -> f64 {
        self.power
    }

    fn speckle<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> CMatrix {
        let w = DMatrix::from_fn(self.m, n, |_, _| complex_normal(rng));
        &self.factor * w
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SnapshotSet {
        let (m, tp) = (self.m, self.tp);
        let tau_p: Vec<f64> = (0..tp).map(|_| self.texture.sample(rng)).collect();
        let amp = self.power.sqrt();
        let s = CVector::from_iterator(tp, (0..tp).map(|_| complex_normal(rng) * amp));

        let k_weight = (1.0 - self.mixture_alpha).sqrt();
        let mut x = self.speckle(tp, rng);
        for (t, mut col) in x.column_iter_mut().enumerate() {
            col *= Complex64::new(k_weight * tau_p[t].sqrt(), 0.0);
        }
        if self.mixture_alpha > 0.0 {
            let g = self.mixture_alpha.sqrt();
            let v = DMatrix::from_fn(m, tp, |_, _| complex_normal(rng) * g);
            x += v;
        }
        for (t, mut col) in x.column_iter_mut().enumerate() {
            col.axpy(s[t], &self.a0, Complex64::new(1.0, 0.0));
        }

        // secondary data is always pure K
        let tau_s: Vec<f64> = (0..self.ts).map(|_| self.texture.sample(rng)).collect();
        let mut y = self.speckle(self.ts, rng);
        for (t, mut col) in y.column_iter_mut().enumerate() {
            col *= Complex64::new(tau_s[t].sqrt(), 0.0);
        }

        SnapshotSet {
            x,
            y,
            hidden_tau_p: tau_p,
            hidden_s: s,
            seed: 0,
        }
    }
}

/// `x_t = a(φ₀) s_t + sqrt(1-α) sqrt(τ_t) R^{1/2} w_t + sqrt(α) v_t`,
/// `y_t = sqrt(τ'_t) R^{1/2} w'_t`.
pub fn sample_snapshots<R: Rng + ?Sized>(sc: &Scenario, rng: &mut R) -> Result<SnapshotSet> {
    Ok(SnapshotSampler::new(sc)?.sample(rng))
}
