//! Dispatches a validated config to the library operations and assembles
//! the report envelope. All results are deterministic given the config.

use nhmc_core::chain_model::StochasticMatrix;
use nhmc_core::ergodic_analysis::{
    cesaro_uniform_diagnostic, check_periodic_strong_ergodicity, condition4_diagnostic,
    condition6_diagnostic, dobrushin_delta, stationary_distribution, strong_ergodicity_curve,
    DiagnosticCurve,
};
use nhmc_core::limit_quantities::{drift_bound_check, enumerate_exact, theta};
use nhmc_core::monte_carlo::{mdp_estimate, simulate_batch};
use nhmc_core::chain_model::{expected_sum, TransitionSchedule};

use crate::config::{Analysis, ExperimentConfig};
use crate::report::{
    AnalysisResults, CltResults, CurvePayload, DiagnoseResults, MdpResults, OracleResults,
    ReportEnvelope, ValidateResults,
};
use crate::CliError;

fn curve_payload(curve: &DiagnosticCurve<f64>) -> CurvePayload {
    CurvePayload {
        label: curve.label.as_str().to_string(),
        points: curve.points.clone(),
    }
}

fn schedule_kind(schedule: &TransitionSchedule<f64>) -> &'static str {
    match schedule {
        TransitionSchedule::Explicit { .. } => "explicit",
        TransitionSchedule::Homogeneous { .. } => "homogeneous",
        TransitionSchedule::Perturbed { .. } => "perturbed",
    }
}

fn numeric(e: impl std::fmt::Display) -> CliError {
    CliError::Numeric(e.to_string())
}

/// Runs the configured analysis and packages the results.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ReportEnvelope, CliError> {
    let mut warnings = Vec::new();
    let results = match cfg.analysis {
        Analysis::Validate => run_validate(cfg)?,
        Analysis::Diagnose => run_diagnose(cfg, &mut warnings)?,
        Analysis::Clt => run_clt(cfg, &mut warnings)?,
        Analysis::Mdp => run_mdp(cfg, &mut warnings)?,
        Analysis::Oracle => run_oracle(cfg)?,
    };
    Ok(ReportEnvelope {
        config_digest: cfg.digest.clone(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        analysis: cfg.analysis.as_str().to_string(),
        warnings,
        results,
    })
}

fn run_validate(cfg: &ExperimentConfig) -> Result<AnalysisResults, CliError> {
    let schedule = cfg.spec.schedule();
    let p = schedule.limit_matrix();
    let report = check_periodic_strong_ergodicity(p, cfg.params.horizon, cfg.params.ergodicity_tol)
        .map_err(numeric)?;
    Ok(AnalysisResults::Validate(ValidateResults {
        state_count: cfg.spec.space().size(),
        schedule_kind: schedule_kind(schedule).to_string(),
        delta: dobrushin_delta(p),
        period: report.period,
        classes: report.classes,
        pi: report.pi,
        certified: true,
        horizon: report.horizon,
        tol: report.tol,
        residuals: report
            .strong_ergodicity_residuals
            .iter()
            .map(curve_payload)
            .collect(),
    }))
}

fn limit_stationary(cfg: &ExperimentConfig) -> Result<(&StochasticMatrix<f64>, Vec<f64>), CliError> {
    let p = cfg.spec.schedule().limit_matrix();
    let pi = stationary_distribution(p, cfg.params.stationary_tol).map_err(numeric)?;
    Ok((p, pi))
}

fn run_diagnose(
    cfg: &ExperimentConfig,
    warnings: &mut Vec<String>,
) -> Result<AnalysisResults, CliError> {
    let (p, pi) = limit_stationary(cfg)?;
    let r = StochasticMatrix::constant_rows(&pi).map_err(numeric)?;
    let schedule = cfg.spec.schedule();
    let n = cfg.params.n;
    let m_max = cfg.params.m_max;
    warnings.push(format!(
        "sup over m in the Cesaro and kernel-convergence diagnostics truncated at m_max={m_max}"
    ));

    let cesaro = cesaro_uniform_diagnostic(schedule, r.as_square(), n, m_max);
    let cond4 = condition4_diagnostic(schedule, p, n, m_max);
    let cond6 = condition6_diagnostic(schedule, n);
    let strong = strong_ergodicity_curve(schedule, r.as_square(), 0, n);
    let drift = drift_bound_check(&cfg.spec, &cfg.observable, n);

    Ok(AnalysisResults::Diagnose(DiagnoseResults {
        n_max: n,
        m_max,
        curves: vec![
            curve_payload(&cesaro),
            curve_payload(&cond4),
            curve_payload(&cond6),
            curve_payload(&strong),
            curve_payload(&drift.curve),
        ],
        drift_violations: drift.violations,
        drift_max_excess: drift.max_excess,
    }))
}

fn run_clt(
    cfg: &ExperimentConfig,
    warnings: &mut Vec<String>,
) -> Result<AnalysisResults, CliError> {
    let (p, pi) = limit_stationary(cfg)?;
    let th = theta(p, &pi, &cfg.observable);
    let summary = simulate_batch(
        &cfg.spec,
        &cfg.observable,
        cfg.params.n,
        cfg.params.num_paths,
        cfg.params.seed,
        th,
    )
    .map_err(numeric)?;

    let ks_pass = summary.ks_distance <= cfg.params.ks_threshold;
    let occupation_pass = match cfg.params.occupation_tol {
        Some(tol) => summary
            .occupation
            .iter()
            .zip(&pi)
            .all(|(o, q)| (o - q).abs() <= tol),
        None => true,
    };
    let verdict = if ks_pass && occupation_pass {
        "PASS"
    } else {
        "FAIL"
    };

    let samples_file = match &cfg.params.samples_out {
        Some(path) => {
            let meta = crate::report::spill_samples(path, &summary.standardized_samples)?;
            warnings.push(format!(
                "standardized samples spilled to {path} ({} values, {})",
                meta.count, meta.format
            ));
            Some(meta)
        }
        None => None,
    };

    Ok(AnalysisResults::Clt(CltResults {
        n: summary.n,
        num_paths: summary.num_paths,
        seed: summary.seed,
        theta: th,
        e_sn: summary.e_sn_used,
        ks_distance: summary.ks_distance,
        ks_distance_centered_sum: summary.ks_distance_centered_sum,
        martingale_sample_variance: summary.martingale_sample_variance,
        centered_sum_sample_variance: summary.centered_sum_sample_variance,
        v_over_n_mean: summary.v_over_n_mean,
        occupation: summary.occupation,
        pi,
        ks_threshold: cfg.params.ks_threshold,
        occupation_tol: cfg.params.occupation_tol,
        verdict: verdict.to_string(),
        samples_file,
    }))
}

fn run_mdp(
    cfg: &ExperimentConfig,
    warnings: &mut Vec<String>,
) -> Result<AnalysisResults, CliError> {
    let (p, pi) = limit_stationary(cfg)?;
    let th = theta(p, &pi, &cfg.observable);
    let estimate = mdp_estimate(
        &cfg.spec,
        &cfg.observable,
        &cfg.params.n_grid,
        cfg.params.alpha,
        &cfg.params.x_grid,
        cfg.params.num_paths,
        cfg.params.seed,
        th,
    )
    .map_err(numeric)?;

    if estimate.flagged_cells > 0 {
        warnings.push(format!(
            "{} grid cell(s) had empty tails (p_hat = 0); flagged, not clamped",
            estimate.flagged_cells
        ));
    }
    let estimable_floor = 10.0 / cfg.params.num_paths as f64;
    if estimate.min_targeted_probability < estimable_floor {
        warnings.push(format!(
            "smallest targeted tail probability {:.3e} is below ~10/N = {:.3e}; deep cells are \
             not reliably estimable at this N",
            estimate.min_targeted_probability, estimable_floor
        ));
    }

    Ok(AnalysisResults::Mdp(MdpResults {
        alpha: estimate.alpha,
        num_paths_per_cell: estimate.num_paths_per_cell,
        seed: estimate.seed,
        theta: th,
        flagged_cells: estimate.flagged_cells,
        min_targeted_probability: estimate.min_targeted_probability,
        cells: estimate.cells,
    }))
}

fn run_oracle(cfg: &ExperimentConfig) -> Result<AnalysisResults, CliError> {
    let n = cfg.params.n;
    let dist = enumerate_exact(&cfg.spec, &cfg.observable, n).map_err(numeric)?;
    let e_sn = expected_sum(&cfg.spec, &cfg.observable, n);
    Ok(AnalysisResults::Oracle(OracleResults {
        n,
        mean_abs_error: (dist.mean - e_sn).abs(),
        support: dist.support,
        probabilities: dist.probabilities,
        mean: dist.mean,
        variance: dist.variance,
        expected_sum: e_sn,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;
    use crate::report::{emit_report, Format};

    fn iid_clt_config(n: usize, paths: usize) -> String {
        format!(
            r#"{{
            "state_count": 2,
            "initial": [1.0, 0.0],
            "schedule": {{"kind": "homogeneous", "matrix": [[0.5, 0.5], [0.5, 0.5]]}},
            "observable": {{"values": [0.0, 1.0], "bound": 1.0}},
            "analysis": "clt",
            "params": {{"n": {n}, "N": {paths}, "ks_threshold": 0.05}}
        }}"#
        )
    }

    #[test]
    fn clt_run_produces_pass_verdict() {
        let cfg = parse_config(&iid_clt_config(400, 2000), None).unwrap();
        let envelope = run_experiment(&cfg).unwrap();
        assert_eq!(envelope.verdict_pass(), Some(true));
        match &envelope.results {
            AnalysisResults::Clt(r) => {
                assert!(r.ks_distance < 0.05);
                assert_eq!(r.theta, 0.25);
            }
            _ => panic!("wrong payload"),
        }
    }

    #[test]
    fn clt_reports_are_bit_identical_across_runs() {
        let cfg = parse_config(&iid_clt_config(200, 500), None).unwrap();
        let a = emit_report(&run_experiment(&cfg).unwrap(), Format::Json).unwrap();
        let b = emit_report(&run_experiment(&cfg).unwrap(), Format::Json).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn validate_run_on_swap_matrix() {
        let cfg = parse_config(
            r#"{
            "state_count": 2,
            "initial": [1.0, 0.0],
            "schedule": {"kind": "homogeneous", "matrix": [[0.0, 1.0], [1.0, 0.0]]},
            "observable": {"values": [0.0, 1.0], "bound": 1.0},
            "analysis": "validate",
            "params": {}
        }"#,
            None,
        )
        .unwrap();
        let envelope = run_experiment(&cfg).unwrap();
        match &envelope.results {
            AnalysisResults::Validate(r) => {
                assert_eq!(r.period, 2);
                assert_eq!(r.classes, vec![vec![1], vec![2]]);
                assert!(r.certified);
                assert_eq!(r.delta, 1.0);
            }
            _ => panic!("wrong payload"),
        }
    }

    #[test]
    fn validate_reducible_matrix_is_numeric_failure() {
        let cfg = parse_config(
            r#"{
            "state_count": 2,
            "initial": [1.0, 0.0],
            "schedule": {"kind": "homogeneous", "matrix": [[1.0, 0.0], [0.0, 1.0]]},
            "observable": {"values": [0.0, 1.0], "bound": 1.0},
            "analysis": "validate",
            "params": {}
        }"#,
            None,
        )
        .unwrap();
        let err = run_experiment(&cfg).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn clt_constant_observable_rejected_as_numeric() {
        let cfg = parse_config(
            r#"{
            "state_count": 2,
            "initial": [1.0, 0.0],
            "schedule": {"kind": "homogeneous", "matrix": [[0.5, 0.5], [0.5, 0.5]]},
            "observable": {"values": [1.0, 1.0], "bound": 1.0},
            "analysis": "clt",
            "params": {"n": 100, "N": 500, "ks_threshold": 0.05}
        }"#,
            None,
        )
        .unwrap();
        let err = run_experiment(&cfg).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn oracle_run_cross_checks_mean() {
        let cfg = parse_config(
            r#"{
            "state_count": 2,
            "initial": [1.0, 0.0],
            "schedule": {"kind": "homogeneous", "matrix": [[0.5, 0.5], [0.5, 0.5]]},
            "observable": {"values": [0.0, 1.0], "bound": 1.0},
            "analysis": "oracle",
            "params": {"n": 12}
        }"#,
            None,
        )
        .unwrap();
        let envelope = run_experiment(&cfg).unwrap();
        match &envelope.results {
            AnalysisResults::Oracle(r) => {
                assert_eq!(r.support.len(), 13);
                assert!(r.mean_abs_error <= 1e-12);
            }
            _ => panic!("wrong payload"),
        }
    }

    #[test]
    fn diagnose_emits_all_five_labels() {
        let cfg = parse_config(
            r#"{
            "state_count": 2,
            "initial": [0.5, 0.5],
            "schedule": {
                "kind": "perturbed",
                "base": [[0.9, 0.1], [0.2, 0.8]],
                "alt": [[0.2, 0.8], [0.7, 0.3]],
                "epsilon": {"form": "power", "c": 1.0, "p": 1.0}
            },
            "observable": {"values": [0.0, 1.0], "bound": 1.0},
            "analysis": "diagnose",
            "params": {"n": 64, "m_max": 8}
        }"#,
            None,
        )
        .unwrap();
        let envelope = run_experiment(&cfg).unwrap();
        let csv = String::from_utf8(emit_report(&envelope, Format::Csv).unwrap()).unwrap();
        for label in [
            "# cesaro_eq3",
            "# cond4",
            "# cond6",
            "# strong_ergodicity",
            "# drift_bound",
        ] {
            assert!(csv.contains(label), "missing block {label}");
        }
        match &envelope.results {
            AnalysisResults::Diagnose(r) => assert_eq!(r.drift_violations, 0),
            _ => panic!("wrong payload"),
        }
    }
}
