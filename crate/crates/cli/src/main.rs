use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use kdoa::cov_est::{cov_ml_k, cov_racg, cov_tyler_aml, FixedPointResult, DEFAULT_MAX_ITER, DEFAULT_TOL};
use kdoa::extremes::{c_constant, mse_rate_bounds};
use kdoa::fim_crb::{alpha_mu, crb_gaussian, nominal_waveforms, regularity, AlphaMethod, Boundedness};
use kdoa::harness::sweep::{reference_point, unit_scale};
use kdoa::harness::{alpha_table_csv, read_snapshots, run_alpha_table, run_mse_sweep, sweep_csv, write_snapshots, BetaRule};
use kdoa::sampling::{sample_snapshots, substream};
use kdoa::{array_model::exp_toeplitz_cov, ArrayGeometry, ExperimentConfig, Scenario};

/// Direction-of-arrival experiments in K-distributed noise.
#[derive(Parser)]
#[command(name = "kdoa", version)]
struct Cli {
    /// Experiment file (flat `key = value`); its base scenario also seeds the
    /// scenario-level commands.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides `master_seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; all cores when absent.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Report squared angles in deg² instead of rad².
    #[arg(long, global = true)]
    degrees: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cramér-Rao bound or MSE rate bounds for one scenario.
    Crb(ScenarioArgs),
    /// α₁ and α₂ by Monte Carlo, both closed forms and quadrature.
    Alpha(AlphaArgs),
    /// Monte-Carlo MSE sweep described by --config, as CSV.
    MseSweep(SweepArgs),
    /// Fit a covariance to the secondary data of a snapshot file.
    Covest(CovestArgs),
    /// MSE sandwich bounds against T_p for ν < 1.
    Bounds(BoundsArgs),
    /// Draw one snapshot set and write it (binary for `.bin`, CSV otherwise).
    Sample(ScenarioArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    tp: Option<usize>,
    #[arg(long)]
    ts: Option<usize>,
    #[arg(long)]
    sensors: Option<usize>,
    #[arg(long)]
    snr_db: Option<f64>,
    #[arg(long)]
    mixture_alpha: Option<f64>,
}

#[derive(Args)]
struct AlphaArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.5,1.5,2,3,10")]
    nu: Vec<f64>,
    #[arg(long, default_value_t = 16)]
    sensors: usize,
    /// Fixed texture scale; `1/ν` when absent.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
}

#[derive(Args)]
struct SweepArgs {
    /// Overrides `trials` in the config.
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum CovMethod {
    Racg,
    Tyler,
    MlK,
}

#[derive(Args)]
struct CovestArgs {
    /// Snapshot file (binary or CSV).
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "racg")]
    method: CovMethod,
    /// Texture shape, needed by `tyler` and `ml-k`.
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    eta: f64,
    /// Compare the shape with the exponential Toeplitz matrix of this ρ.
    #[arg(long)]
    rho: Option<f64>,
}

#[derive(Args)]
struct BoundsArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,32,64,128")]
    tp_values: Vec<usize>,
}

fn base_scenario(cli: &Cli, a: &ScenarioArgs) -> Result<Scenario> {
    let mut sc = match &cli.config {
        Some(p) => ExperimentConfig::from_file(p)?.base,
        None => Scenario::reference(a.nu.unwrap_or(0.5)),
    };
    if let Some(nu) = a.nu {
        sc.nu = nu;
        sc.beta = 1.0 / nu;
    }
    if let Some(b) = a.beta {
        sc.beta = b;
    }
    if let Some(m) = a.sensors {
        sc.geometry = ArrayGeometry::new(m, sc.geometry.spacing())?;
    }
    sc.tp = a.tp.unwrap_or(sc.tp);
    sc.ts = a.ts.unwrap_or(sc.ts);
    sc.snr_db = a.snr_db.unwrap_or(sc.snr_db);
    sc.mixture_alpha = a.mixture_alpha.unwrap_or(sc.mixture_alpha);
    sc.validate()?;
    Ok(sc)
}

fn emit(cli: &Cli, text: &str) -> Result<()> {
    match &cli.out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn crb(cli: &Cli, a: &ScenarioArgs) -> Result<String> {
    let sc = base_scenario(cli, a)?;
    let k = unit_scale(cli.degrees);
    let reg = regularity(sc.nu);
    let mut s = String::from("key,value\n");
    let _ = writeln!(s, "nu,{:.17e}\nbeta,{:.17e}\nsensors,{}\ntp,{}", sc.nu, sc.beta, sc.sensors(), sc.tp);
    let _ = writeln!(s, "regular,{}", reg.fim_signal == Boundedness::Bounded);
    let mut rng = substream(0, 0);
    for mu in [1, 2] {
        let v = alpha_mu(mu, sc.nu, sc.beta, sc.sensors(), AlphaMethod::Quadrature, 0, &mut rng)?;
        let _ = writeln!(s, "alpha_{mu},{}", v.value);
    }
    let r = reference_point(&sc, sc.tp as f64)?;
    let _ = writeln!(s, "crb_g,{:.17e}", r.crb_g * k);
    if let Some(v) = r.crb_k {
        let _ = writeln!(s, "crb_k,{:.17e}", v * k);
    }
    if let (Some(lo), Some(hi)) = (r.rate_lower, r.rate_upper) {
        let _ = writeln!(s, "rate_lower,{:.17e}\nrate_upper,{:.17e}", lo * k, hi * k);
    }
    Ok(s)
}

fn alpha(cli: &Cli, a: &AlphaArgs) -> Result<String> {
    let rule = a.beta.map_or(BetaRule::InverseNu, BetaRule::Fixed);
    let rows = run_alpha_table(&a.nu, a.sensors, rule, a.samples, cli.seed.unwrap_or(1))?;
    Ok(alpha_table_csv(&rows, a.sensors))
}

fn mse_sweep(cli: &Cli, a: &SweepArgs) -> Result<String> {
    let Some(path) = &cli.config else {
        bail!("mse-sweep needs --config");
    };
    let mut cfg = ExperimentConfig::from_file(path).with_context(|| format!("reading {}", path.display()))?;
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    let res = run_mse_sweep(&cfg, cli.threads)?;
    for c in &res.curves {
        if let Ok((slope, se)) = c.slope() {
            eprintln!("{}:{} slope {slope:.3} ± {se:.3}", c.estimator.name(), c.mode.name());
        }
    }
    Ok(sweep_csv(&cfg, &res, cli.degrees))
}

fn covest(a: &CovestArgs) -> Result<String> {
    let set = read_snapshots(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let y = set.secondary();
    let need_nu = || a.nu.context("this method needs --nu");
    let fit: FixedPointResult = match a.method {
        CovMethod::Racg => cov_racg(y, a.eta, DEFAULT_TOL, DEFAULT_MAX_ITER)?,
        CovMethod::Tyler => cov_tyler_aml(y, need_nu()?, DEFAULT_TOL, DEFAULT_MAX_ITER)?,
        CovMethod::MlK => {
            let nu = need_nu()?;
            cov_ml_k(y, nu, a.beta.unwrap_or(1.0 / nu), DEFAULT_TOL, DEFAULT_MAX_ITER)?
        }
    };
    let mut s = String::from("key,value\n");
    let _ = writeln!(s, "sensors,{}\nsecondary_snapshots,{}", y.nrows(), y.ncols());
    let _ = writeln!(s, "iterations,{}\nconverged,{}\nfinal_delta,{:.17e}", fit.iterations, fit.converged, fit.final_delta);
    let _ = writeln!(s, "trace,{:.17e}\ncondition_number,{:.17e}", fit.r_hat.trace(), fit.r_hat.condition_number());
    if let Some(rho) = a.rho {
        let truth = exp_toeplitz_cov(y.nrows(), rho)?;
        let _ = writeln!(s, "shape_error,{:.17e}", fit.r_hat.shape().rel_frobenius_distance(&truth.shape()));
    }
    Ok(s)
}

fn bounds(cli: &Cli, a: &BoundsArgs) -> Result<String> {
    let mut sc = base_scenario(cli, &a.scenario)?;
    if sc.nu >= 1.0 {
        bail!("bounds: nu = {} is regular; use `crb`", sc.nu);
    }
    let k = unit_scale(cli.degrees);
    let mut s = String::from("tp,crb_g,lower,upper,c_constant\n");
    let c = c_constant(sc.nu, sc.beta)?;
    for &tp in &a.tp_values {
        sc.tp = tp;
        let crb_g = crb_gaussian(&sc, &nominal_waveforms(&sc)?)?;
        let b = mse_rate_bounds(tp, sc.nu, sc.beta, crb_g)?;
        let _ = writeln!(s, "{tp},{:.17e},{:.17e},{:.17e},{c:.17e}", crb_g * k, b.lower * k, b.upper * k);
    }
    Ok(s)
}

fn sample(cli: &Cli, a: &ScenarioArgs) -> Result<()> {
    let Some(out) = &cli.out else {
        bail!("sample needs --out");
    };
    let sc = base_scenario(cli, a)?;
    let set = sample_snapshots(&sc, &mut substream(cli.seed.unwrap_or(0), 0))?;
    write_snapshots(&set, Path::new(out))?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let text = match &cli.command {
        Command::Crb(a) => crb(cli, a)?,
        Command::Alpha(a) => alpha(cli, a)?,
        Command::MseSweep(a) => mse_sweep(cli, a)?,
        Command::Covest(a) => covest(a)?,
        Command::Bounds(a) => bounds(cli, a)?,
        Command::Sample(a) => return sample(cli, a),
    };
    emit(cli, &text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kdoa: error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
