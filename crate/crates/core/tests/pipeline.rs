//! End-to-end use of the public API: simulate, whiten, estimate, bound.

use kdoa::cov_est::{cov_racg, DEFAULT_MAX_ITER, DEFAULT_TOL};
use kdoa::estimators::{estimate_doa, estimate_waveforms, t_statistic};
use kdoa::fim_crb::{alpha_mu, crb_doa, crb_gaussian, nominal_waveforms, AlphaMethod};
use kdoa::harness::io::{snapshots_from_bytes, snapshots_to_bytes};
use kdoa::harness::{run_mse_sweep, sweep_csv};
use kdoa::sampling::{sample_snapshots, substream};
use kdoa::{Error, ExperimentConfig, Objective, Scenario, SearchOptions};

#[test]
fn high_snr_estimate_recovers_the_source() {
    let sc = Scenario {
        snr_db: 20.0,
        tp: 32,
        ..Scenario::reference(3.0)
    };
    let set = sample_snapshots(&sc, &mut substream(11, 0)).unwrap();
    let r = sc.noise_covariance().unwrap();
    for obj in [
        Objective::MlK { nu: 3.0, beta: 1.0 / 3.0 },
        Objective::AmlK { nu: 3.0 },
        Objective::Gaussian,
    ] {
        let est = estimate_doa(set.primary(), &r, &sc.geometry, obj, sc.search_interval(), &SearchOptions::default()).unwrap();
        assert!((est.phi_hat - sc.phi0).abs() < 0.2f64.to_radians(), "{obj:?}: {}", est.phi_hat.to_degrees());
        assert!(est.converged && !est.at_edge);
    }
}

#[test]
fn estimated_covariance_feeds_the_estimator() {
    let sc = Scenario {
        snr_db: 15.0,
        ts: 128,
        ..Scenario::reference(0.5)
    };
    let set = sample_snapshots(&sc, &mut substream(12, 0)).unwrap();
    let fit = cov_racg(set.secondary(), sc.eta, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    assert!(fit.converged);
    let est = estimate_doa(
        set.primary(),
        &fit.r_hat,
        &sc.geometry,
        Objective::AmlK { nu: 0.5 },
        sc.search_interval(),
        &SearchOptions::default(),
    )
    .unwrap();
    assert!((est.phi_hat - sc.phi0).abs() < 1f64.to_radians());
}

#[test]
fn residual_matches_waveform_fit() {
    let sc = Scenario::reference(1.5);
    let set = sample_snapshots(&sc, &mut substream(13, 0)).unwrap();
    let r = sc.noise_covariance().unwrap();
    let s = estimate_waveforms(set.primary(), sc.phi0, &r, &sc.geometry).unwrap();
    let a = kdoa::array_model::steering_vector(&sc.geometry, sc.phi0);
    for (k, col) in set.primary().column_iter().enumerate() {
        let x = col.into_owned();
        let resid = &x - &a * s[k];
        let direct = r.inv_quad_form(&resid);
        let t = t_statistic(&x, sc.phi0, &r, &sc.geometry).unwrap();
        assert!((t / direct - 1.0).abs() < 1e-10);
    }
}

#[test]
fn bounds_are_ordered_in_the_regular_regime() {
    let sc = Scenario::reference(3.0);
    let s = nominal_waveforms(&sc).unwrap();
    let a1 = alpha_mu(1, 3.0, 1.0 / 3.0, 16, AlphaMethod::Quadrature, 0, &mut substream(0, 0))
        .unwrap()
        .value
        .finite()
        .unwrap();
    assert!(a1 > 16.0, "K noise carries more information than Gaussian noise");
    assert!(crb_doa(&sc, &s, a1).unwrap() < crb_gaussian(&sc, &s).unwrap());
    let irregular = Scenario::reference(0.5);
    assert!(matches!(
        crb_doa(&irregular, &nominal_waveforms(&irregular).unwrap(), 20.0),
        Err(Error::NonRegular { .. })
    ));
}

#[test]
fn sweep_is_reproducible_and_survives_a_snapshot_round_trip() {
    let cfg = ExperimentConfig::parse(
        "nu = 1.5\nsweep_axis = nu\nsweep_values = 0.5, 1.5\nestimators = aml_k:known, gaussian:racg\n\
         trials = 10\nmaster_seed = 9\nsensors = 8\nn_grid = 51\n",
    )
    .unwrap();
    let a = sweep_csv(&cfg, &run_mse_sweep(&cfg, Some(3)).unwrap(), true);
    let b = sweep_csv(&cfg, &run_mse_sweep(&cfg, Some(1)).unwrap(), true);
    assert_eq!(a, b);
    assert_eq!(ExperimentConfig::parse(&cfg.to_config_string()).unwrap(), cfg);

    let set = sample_snapshots(&cfg.scenario_at(0), &mut substream(9, 1)).unwrap();
    let back = snapshots_from_bytes(&snapshots_to_bytes(&set)).unwrap();
    assert_eq!(back.primary(), set.primary());
}
