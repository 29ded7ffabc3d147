//! Flat `key = value` experiment files.
//!
//! One key per line, `#` starts a comment, lists are comma separated.
//! Required keys: `nu`, `sweep_axis`, `sweep_values`, `estimators`, `trials`,
//! `master_seed`. Everything else defaults to the reference scenario:
//!
//! ```text
//! sensors = 16          spacing = 0.5        phi0_deg = 10
//! rho = 0.99            snr_db = 3           beta = 1/nu
//! tp = 16               ts = 32              eta = 0.01
//! mixture_alpha = 0     n_grid = 201
//! ```
//!
//! `estimators` entries are `name:mode` with name one of `ml_k`, `aml_k`,
//! `gaussian`, `aml_min_oracle`, `aml_min_proxy` and mode `known` or `racg`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::array_model::{ArrayGeometry, Scenario};
use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;

/// Quantity varied across a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepAxis {
    Tp,
    Ts,
    Nu,
    MixtureAlpha,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            Self::Tp => "tp",
            Self::Ts => "ts",
            Self::Nu => "nu",
            Self::MixtureAlpha => "mixture_alpha",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "tp" => Self::Tp,
            "ts" => Self::Ts,
            "nu" => Self::Nu,
            "mixture_alpha" => Self::MixtureAlpha,
            _ => return None,
        })
    }

    fn is_count(self) -> bool {
        matches!(self, Self::Tp | Self::Ts)
    }
}

/// Source of the whitening matrix given to an estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CovMode {
    Known,
    /// Regularized fixed point on the secondary data.
    Racg,
}

impl CovMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::Known => "known",
            Self::Racg => "racg",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "known" => Some(Self::Known),
            "racg" => Some(Self::Racg),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub base: Scenario,
    /// `beta` was given explicitly; otherwise it follows `1/ν` on every point.
    pub beta_explicit: bool,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub estimators: Vec<(EstimatorKind, CovMode)>,
    pub trials: usize,
    pub master_seed: u64,
    pub n_grid: usize,
}

const KEYS: [&str; 17] = [
    "nu",
    "sweep_axis",
    "sweep_values",
    "estimators",
    "trials",
    "master_seed",
    "sensors",
    "spacing",
    "phi0_deg",
    "rho",
    "snr_db",
    "beta",
    "tp",
    "ts",
    "eta",
    "mixture_alpha",
    "n_grid",
];

fn cfg_err(key: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        msg: msg.into(),
    }
}

fn num(key: &str, v: &str) -> Result<f64> {
    let x: f64 = v.trim().parse().map_err(|_| cfg_err(key, format!("`{v}` is not a number")))?;
    if !x.is_finite() {
        return Err(cfg_err(key, format!("`{v}` is not finite")));
    }
    Ok(x)
}

fn count(key: &str, v: &str) -> Result<usize> {
    v.trim().parse().map_err(|_| cfg_err(key, format!("`{v}` is not a non-negative integer")))
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected `key = value`", lineno + 1)))?;
            let k = k.trim();
            if !KEYS.contains(&k) {
                return Err(cfg_err(k, "unknown key"));
            }
            if kv.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(cfg_err(k, "given more than once"));
            }
        }
        let req = |k: &str| kv.get(k).map(String::as_str).ok_or_else(|| cfg_err(k, "required key is missing"));
        let opt = |k: &str| kv.get(k).map(String::as_str);

        let nu = num("nu", req("nu")?)?;
        if nu <= 0.0 {
            return Err(cfg_err("nu", "must be positive"));
        }
        let axis_s = req("sweep_axis")?;
        let axis = SweepAxis::parse(axis_s)
            .ok_or_else(|| cfg_err("sweep_axis", format!("`{axis_s}` is not one of tp, ts, nu, mixture_alpha")))?;
        let values = req("sweep_values")?
            .split(',')
            .map(|v| num("sweep_values", v))
            .collect::<Result<Vec<_>>>()?;
        if values.is_empty() {
            return Err(cfg_err("sweep_values", "list is empty"));
        }
        let estimators = req("estimators")?
            .split(',')
            .map(|e| {
                let e = e.trim();
                let (name, mode) = e.split_once(':').unwrap_or((e, "known"));
                let kind = EstimatorKind::parse(name.trim())
                    .ok_or_else(|| cfg_err("estimators", format!("unknown estimator `{name}`")))?;
                let mode = CovMode::parse(mode.trim())
                    .ok_or_else(|| cfg_err("estimators", format!("unknown covariance mode `{mode}`")))?;
                Ok((kind, mode))
            })
            .collect::<Result<Vec<_>>>()?;
        if estimators.is_empty() {
            return Err(cfg_err("estimators", "list is empty"));
        }
        let trials = count("trials", req("trials")?)?;
        if trials == 0 {
            return Err(cfg_err("trials", "must be at least 1"));
        }
        let master_seed: u64 = req("master_seed")?
            .parse()
            .map_err(|_| cfg_err("master_seed", "not a 64-bit unsigned integer"))?;

        let mut base = Scenario::reference(nu);
        let sensors = opt("sensors").map(|v| count("sensors", v)).transpose()?.unwrap_or(16);
        let spacing = opt("spacing").map(|v| num("spacing", v)).transpose()?.unwrap_or(0.5);
        base.geometry = ArrayGeometry::new(sensors, spacing).map_err(|e| cfg_err("sensors", e.to_string()))?;
        if let Some(v) = opt("phi0_deg") {
            base.phi0 = num("phi0_deg", v)?.to_radians();
        }
        if let Some(v) = opt("rho") {
            base.rho = num("rho", v)?;
        }
        if let Some(v) = opt("snr_db") {
            base.snr_db = num("snr_db", v)?;
        }
        let beta_explicit = opt("beta").is_some();
        if let Some(v) = opt("beta") {
            base.beta = num("beta", v)?;
        }
        if let Some(v) = opt("tp") {
            base.tp = count("tp", v)?;
        }
        if let Some(v) = opt("ts") {
            base.ts = count("ts", v)?;
        }
        if let Some(v) = opt("eta") {
            base.eta = num("eta", v)?;
        }
        if let Some(v) = opt("mixture_alpha") {
            base.mixture_alpha = num("mixture_alpha", v)?;
        }
        let n_grid = opt("n_grid").map(|v| count("n_grid", v)).transpose()?.unwrap_or(201);
        if n_grid < 3 {
            return Err(cfg_err("n_grid", "must be at least 3"));
        }

        let cfg = Self {
            base,
            beta_explicit,
            axis,
            values,
            estimators,
            trials,
            master_seed,
            n_grid,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every sweep point and names the key at fault.
    pub fn validate(&self) -> Result<()> {
        let b = &self.base;
        let checks: [(&str, bool, &str); 6] = [
            ("phi0_deg", b.phi0.abs() < std::f64::consts::FRAC_PI_2, "must lie in (-90, 90)"),
            ("rho", b.rho.abs() < 1.0, "must lie in (-1, 1)"),
            ("beta", b.beta > 0.0, "must be positive"),
            ("eta", b.eta > 0.0 && b.eta < 1.0, "must lie in (0, 1)"),
            ("mixture_alpha", (0.0..=1.0).contains(&b.mixture_alpha), "must lie in [0, 1]"),
            ("tp", b.tp >= 1, "must be at least 1"),
        ];
        for (key, ok, msg) in checks {
            if !ok {
                return Err(cfg_err(key, msg));
            }
        }
        for &v in &self.values {
            let bad = match self.axis {
                SweepAxis::Tp => !(v >= 1.0 && v.fract() == 0.0),
                SweepAxis::Ts => !(v >= 0.0 && v.fract() == 0.0),
                SweepAxis::Nu => !(v > 0.0),
                SweepAxis::MixtureAlpha => !(0.0..=1.0).contains(&v),
            };
            if bad {
                return Err(cfg_err("sweep_values", format!("{v} is out of range for axis {}", self.axis.name())));
            }
        }
        let needs_secondary = self.estimators.iter().any(|(_, m)| *m == CovMode::Racg);
        if needs_secondary {
            let min_ts = if self.axis == SweepAxis::Ts {
                self.values.iter().copied().fold(f64::INFINITY, f64::min) as usize
            } else {
                b.ts
            };
            if min_ts == 0 {
                return Err(cfg_err("ts", "racg covariance mode needs at least one secondary snapshot"));
            }
        }
        Ok(())
    }

    /// Scenario at the `i`-th sweep value.
    pub fn scenario_at(&self, i: usize) -> Scenario {
        let mut sc = self.base.clone();
        let v = self.values[i];
        match self.axis {
            SweepAxis::Tp => sc.tp = v as usize,
            SweepAxis::Ts => sc.ts = v as usize,
            SweepAxis::Nu => {
                sc.nu = v;
                if !self.beta_explicit {
                    sc.beta = 1.0 / v;
                }
            }
            SweepAxis::MixtureAlpha => sc.mixture_alpha = v,
        }
        sc
    }

    /// Formats a sweep value: integers for count axes, full precision otherwise.
    pub fn format_value(&self, v: f64) -> String {
        if self.axis.is_count() {
            format!("{}", v as u64)
        } else {
            format!("{v:.17e}")
        }
    }

    /// Complete config text with every key; parses back to `self`.
    pub fn to_config_string(&self) -> String {
        let b = &self.base;
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        let mut s = String::new();
        let _ = writeln!(s, "nu = {:?}", b.nu);
        let _ = writeln!(s, "sweep_axis = {}", self.axis.name());
        let _ = writeln!(s, "sweep_values = {}", list(&self.values));
        let est: Vec<String> = self.estimators.iter().map(|(k, m)| format!("{}:{}", k.name(), m.name())).collect();
        let _ = writeln!(s, "estimators = {}", est.join(", "));
        let _ = writeln!(s, "trials = {}", self.trials);
        let _ = writeln!(s, "master_seed = {}", self.master_seed);
        let _ = writeln!(s, "sensors = {}", b.geometry.sensors());
        let _ = writeln!(s, "spacing = {:?}", b.geometry.spacing());
        let _ = writeln!(s, "phi0_deg = {:?}", b.phi0.to_degrees());
        let _ = writeln!(s, "rho = {:?}", b.rho);
        let _ = writeln!(s, "snr_db = {:?}", b.snr_db);
        if self.beta_explicit {
            let _ = writeln!(s, "beta = {:?}", b.beta);
        }
        let _ = writeln!(s, "tp = {}", b.tp);
        let _ = writeln!(s, "ts = {}", b.ts);
        let _ = writeln!(s, "eta = {:?}", b.eta);
        let _ = writeln!(s, "mixture_alpha = {:?}", b.mixture_alpha);
        let _ = writeln!(s, "n_grid = {}", self.n_grid);
        s
    }
}
