//! Concentrated likelihoods for the direction of arrival and their bounded
//! maximization.
//!
//! Every objective depends on the data only through
//! `t(x, φ) = x^H R⁻¹ x - |a^H R⁻¹ x|² / (a^H R⁻¹ a)`, the whitened energy left
//! after projecting out the steering vector.

use crate::array_model::{steering_vector, ArrayGeometry, CMatrix, CVector, HermitianMatrix};
use crate::error::{domain, Error, Result};
use crate::sampling::SnapshotSet;
use crate::specfun::ln_k_real;

/// Relative floor on `t`, as a fraction of `x^H R⁻¹ x`.
pub const T_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    MlK,
    AmlK,
    Gaussian,
    /// AML on the single snapshot with the smallest true texture.
    AmlMinOracle,
    /// AML on the snapshot with the smallest `t` at the coarse AML optimum.
    AmlMinProxy,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::MlK => "ml_k",
            Self::AmlK => "aml_k",
            Self::Gaussian => "gaussian",
            Self::AmlMinOracle => "aml_min_oracle",
            Self::AmlMinProxy => "aml_min_proxy",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "ml_k" => Self::MlK,
            "aml_k" => Self::AmlK,
            "gaussian" => Self::Gaussian,
            "aml_min_oracle" => Self::AmlMinOracle,
            "aml_min_proxy" => Self::AmlMinProxy,
            _ => return None,
        })
    }

    pub const ALL: [Self; 5] = [Self::MlK, Self::AmlK, Self::Gaussian, Self::AmlMinOracle, Self::AmlMinProxy];
}

/// Concentrated log-likelihood to maximize over `φ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// `Σ_t [((ν-M)/2) ln t_t + ln K_{M-ν}(2 sqrt(t_t/β))]`.
    MlK { nu: f64, beta: f64 },
    /// `(ν - M) Σ_t ln t_t`.
    AmlK { nu: f64 },
    /// `-Σ_t t_t`.
    Gaussian,
}

impl Objective {
    fn kind(self) -> EstimatorKind {
        match self {
            Self::MlK { .. } => EstimatorKind::MlK,
            Self::AmlK { .. } => EstimatorKind::AmlK,
            Self::Gaussian => EstimatorKind::Gaussian,
        }
    }

    fn validate(self) -> Result<()> {
        let bad = |v: f64| !(v > 0.0 && v.is_finite());
        match self {
            Self::MlK { nu, beta } if bad(nu) || bad(beta) => {
                Err(domain("Objective", format!("nu = {nu}, beta = {beta} must be positive")))
            }
            Self::AmlK { nu } if bad(nu) => Err(domain("Objective", format!("nu = {nu} must be positive"))),
            _ => Ok(()),
        }
    }

    fn evaluate(self, t: &[f64], m: usize) -> f64 {
        let mf = m as f64;
        match self {
            Self::MlK { nu, beta } => t
                .iter()
                .map(|&t| 0.5 * (nu - mf) * t.ln() + ln_k_real(mf - nu, 2.0 * (t / beta).sqrt()))
                .sum(),
            Self::AmlK { nu } => (nu - mf) * t.iter().map(|t| t.ln()).sum::<f64>(),
            Self::Gaussian => -t.iter().sum::<f64>(),
        }
    }
}

/// Result of one DoA search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoaEstimate {
    pub phi_hat: f64,
    pub objective_value: f64,
    pub estimator: EstimatorKind,
    pub n_grid: usize,
    pub converged: bool,
    /// The coarse optimum sat on an end point of the interval.
    pub at_edge: bool,
}

/// Grid-then-golden-section search settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    pub n_grid: usize,
    /// Width of the final golden-section bracket, radians.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            n_grid: 201,
            tol: 1e-7,
            max_iter: 200,
        }
    }
}

/// Snapshots whitened once, `L⁻¹ X`, reused for every `φ`.
#[derive(Debug, Clone)]
pub struct WhitenedData<'a> {
    r: &'a HermitianMatrix,
    geometry: ArrayGeometry,
    xw: CMatrix,
    energy: Vec<f64>,
}

impl<'a> WhitenedData<'a> {
    pub fn new(x: &CMatrix, r: &'a HermitianMatrix, geometry: ArrayGeometry) -> Result<Self> {
        if x.nrows() != r.dim() || geometry.sensors() != r.dim() {
            return Err(Error::Dimension(format!(
                "data has {} rows, covariance is {}x{}, array has {} sensors",
                x.nrows(),
                r.dim(),
                r.dim(),
                geometry.sensors()
            )));
        }
        if x.ncols() == 0 {
            return Err(Error::Dimension("no snapshots".into()));
        }
        let xw = r.whiten_matrix(x);
        let energy = xw.column_iter().map(|c| c.norm_squared()).collect();
        Ok(Self { r, geometry, xw, energy })
    }

    pub fn snapshots(&self) -> usize {
        self.xw.ncols()
    }

    pub fn sensors(&self) -> usize {
        self.xw.nrows()
    }

    /// `t(x_t, φ)` for each snapshot, floored at `T_FLOOR · x_t^H R⁻¹ x_t`.
    pub fn t_values(&self, phi: f64) -> Vec<f64> {
        let u = self.r.whiten(&steering_vector(&self.geometry, phi));
        let uu = u.norm_squared();
        self.xw
            .column_iter()
            .zip(&self.energy)
            .map(|(c, &e)| {
                let proj = u.dotc(&c) / uu;
                let resid: f64 = c.iter().zip(u.iter()).map(|(x, a)| (x - a * proj).norm_sqr()).sum();
                resid.max(T_FLOOR * e)
            })
            .collect()
    }

    /// Restriction to one snapshot.
    pub fn column(&self, t: usize) -> Self {
        Self {
            r: self.r,
            geometry: self.geometry,
            xw: self.xw.columns(t, 1).into_owned(),
            energy: vec![self.energy[t]],
        }
    }
}

fn single(x: &CVector) -> CMatrix {
    CMatrix::from_column_slice(x.len(), 1, x.as_slice())
}

/// `x^H R⁻¹ x - |a^H R⁻¹ x|² / (a^H R⁻¹ a)`, non-negative. Unlike the
/// objectives, no floor is applied.
pub fn t_statistic(x: &CVector, phi: f64, r: &HermitianMatrix, geometry: &ArrayGeometry) -> Result<f64> {
    let w = WhitenedData::new(&single(x), r, *geometry)?;
    let u = r.whiten(&steering_vector(geometry, phi));
    let c = w.xw.column(0);
    let proj = u.dotc(&c) / u.norm_squared();
    Ok(c.iter().zip(u.iter()).map(|(x, a)| (x - a * proj).norm_sqr()).sum::<f64>().max(0.0))
}

/// Exact K-noise concentrated log-likelihood.
pub fn ml_objective(
    x: &CMatrix,
    phi: f64,
    r: &HermitianMatrix,
    geometry: &ArrayGeometry,
    nu: f64,
    beta: f64,
) -> Result<f64> {
    objective(x, phi, r, geometry, Objective::MlK { nu, beta })
}

/// Approximate concentrated log-likelihood `(ν - M) Σ ln t_t`.
pub fn aml_objective(x: &CMatrix, phi: f64, r: &HermitianMatrix, geometry: &ArrayGeometry, nu: f64) -> Result<f64> {
    objective(x, phi, r, geometry, Objective::AmlK { nu })
}

/// Gaussian concentrated log-likelihood `-Σ t_t`.
pub fn gaussian_objective(x: &CMatrix, phi: f64, r: &HermitianMatrix, geometry: &ArrayGeometry) -> Result<f64> {
    objective(x, phi, r, geometry, Objective::Gaussian)
}

pub fn objective(x: &CMatrix, phi: f64, r: &HermitianMatrix, geometry: &ArrayGeometry, obj: Objective) -> Result<f64> {
    obj.validate()?;
    let w = WhitenedData::new(x, r, *geometry)?;
    Ok(obj.evaluate(&w.t_values(phi), w.sensors()))
}

/// `ŝ_t = a^H R⁻¹ x_t / (a^H R⁻¹ a)`.
pub fn estimate_waveforms(x: &CMatrix, phi: f64, r: &HermitianMatrix, geometry: &ArrayGeometry) -> Result<CVector> {
    if x.nrows() != r.dim() {
        return Err(Error::Dimension(format!("data has {} rows, covariance is {}", x.nrows(), r.dim())));
    }
    let a = steering_vector(geometry, phi);
    let ri_a = r.solve(&a);
    let aa = a.dotc(&ri_a).re;
    Ok(CVector::from_iterator(x.ncols(), x.column_iter().map(|c| ri_a.dotc(&c) / aa)))
}

fn check_interval(interval: (f64, f64), opts: &SearchOptions) -> Result<()> {
    let (lo, hi) = interval;
    if !(lo < hi && lo.is_finite() && hi.is_finite()) {
        return Err(domain("estimate_doa", format!("empty search interval [{lo}, {hi}]")));
    }
    if opts.n_grid < 3 {
        return Err(domain("estimate_doa", format!("n_grid = {} must be at least 3", opts.n_grid)));
    }
    if !(opts.tol > 0.0) {
        return Err(domain("estimate_doa", "tol must be positive"));
    }
    Ok(())
}

/// Coarse grid, then golden section on the cell pair around the best point.
/// Ties go to the smaller `φ`.
fn maximize<F: Fn(f64) -> f64>(f: F, interval: (f64, f64), opts: &SearchOptions) -> Result<(f64, f64, bool, bool)> {
    let (lo, hi) = interval;
    let n = opts.n_grid;
    let step = (hi - lo) / (n - 1) as f64;
    let grid = |i: usize| if i == n - 1 { hi } else { lo + i as f64 * step };
    let mut best: Option<(usize, f64)> = None;
    for i in 0..n {
        let v = f(grid(i));
        if v.is_finite() && best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    let (ib, vb) = best.ok_or_else(|| Error::EstimationFailure("objective is non-finite on the whole grid".into()))?;
    let at_edge = ib == 0 || ib == n - 1;

    let (mut a, mut b) = (grid(ib.saturating_sub(1)), grid((ib + 1).min(n - 1)));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut iter = 0;
    while b - a > opts.tol && iter < opts.max_iter {
        // NaN compares false, which moves the bracket away from it
        if fc >= fd || fd.is_nan() {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
        iter += 1;
    }
    let converged = b - a <= opts.tol;
    let (pr, vr) = if fc >= fd { (c, fc) } else { (d, fd) };
    if vr.is_finite() && vr > vb {
        Ok((pr, vr, converged, at_edge))
    } else {
        Ok((grid(ib), vb, converged, at_edge))
    }
}

fn search(w: &WhitenedData<'_>, obj: Objective, interval: (f64, f64), opts: &SearchOptions, kind: EstimatorKind) -> Result<DoaEstimate> {
    let m = w.sensors();
    let (phi_hat, value, converged, at_edge) = maximize(|p| obj.evaluate(&w.t_values(p), m), interval, opts)?;
    Ok(DoaEstimate {
        phi_hat,
        objective_value: value,
        estimator: kind,
        n_grid: opts.n_grid,
        converged,
        at_edge,
    })
}

/// Maximizes `obj` over `interval`.
pub fn estimate_doa(
    x: &CMatrix,
    r: &HermitianMatrix,
    geometry: &ArrayGeometry,
    obj: Objective,
    interval: (f64, f64),
    opts: &SearchOptions,
) -> Result<DoaEstimate> {
    obj.validate()?;
    check_interval(interval, opts)?;
    let w = WhitenedData::new(x, r, *geometry)?;
    search(&w, obj, interval, opts, obj.kind())
}

/// AML on the single snapshot whose true texture is smallest. Needs the
/// simulator-side textures of `set`.
pub fn estimate_doa_min_oracle(
    set: &SnapshotSet,
    r: &HermitianMatrix,
    geometry: &ArrayGeometry,
    nu: f64,
    interval: (f64, f64),
    opts: &SearchOptions,
) -> Result<DoaEstimate> {
    let tau = set.oracle_textures();
    if tau.len() != set.primary().ncols() {
        return Err(Error::EstimationFailure("oracle textures are not available for this data".into()));
    }
    let obj = Objective::AmlK { nu };
    obj.validate()?;
    check_interval(interval, opts)?;
    let t_min = argmin(tau);
    let w = WhitenedData::new(set.primary(), r, *geometry)?.column(t_min);
    search(&w, obj, interval, opts, EstimatorKind::AmlMinOracle)
}

/// Non-oracle counterpart of [`estimate_doa_min_oracle`]: the snapshot with the
/// smallest `t` at the coarse-grid AML optimum stands in for the smallest texture.
pub fn estimate_doa_min_proxy(
    x: &CMatrix,
    r: &HermitianMatrix,
    geometry: &ArrayGeometry,
    nu: f64,
    interval: (f64, f64),
    opts: &SearchOptions,
) -> Result<DoaEstimate> {
    let obj = Objective::AmlK { nu };
    obj.validate()?;
    check_interval(interval, opts)?;
    let w = WhitenedData::new(x, r, *geometry)?;
    let coarse = SearchOptions { tol: f64::INFINITY, ..*opts };
    let (phi_grid, _, _, _) = maximize(|p| obj.evaluate(&w.t_values(p), w.sensors()), interval, &coarse)?;
    let t_min = argmin(&w.t_values(phi_grid));
    search(&w.column(t_min), obj, interval, opts, EstimatorKind::AmlMinProxy)
}

fn argmin(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &x)| if x < bv { (i, x) } else { (bi, bv) })
        .0
}
