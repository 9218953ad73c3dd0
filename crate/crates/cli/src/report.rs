//! Report envelope and bit-stable emission.
//!
//! JSON reports are canonical: object keys sorted, floats in shortest
//! round-trip form, one trailing newline. CSV reports are one table per
//! curve or grid, each introduced by a `# <label>` line and separated by a
//! blank line. Identical inputs produce identical bytes.

use serde::Serialize;

use nhmc_core::monte_carlo::MdpCell;

use crate::config::canonical_json_bytes;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvePayload {
    pub label: String,
    /// `(n, value)` pairs.
    pub points: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpillMeta {
    pub path: String,
    pub count: usize,
    /// Little-endian 64-bit reals after a little-endian u64 length prefix.
    pub format: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidateResults {
    pub state_count: usize,
    pub schedule_kind: String,
    pub delta: f64,
    pub period: usize,
    pub classes: Vec<Vec<usize>>,
    pub pi: Vec<f64>,
    pub certified: bool,
    pub horizon: usize,
    pub tol: f64,
    pub residuals: Vec<CurvePayload>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnoseResults {
    pub n_max: usize,
    pub m_max: usize,
    pub curves: Vec<CurvePayload>,
    pub drift_violations: usize,
    pub drift_max_excess: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CltResults {
    pub n: usize,
    pub num_paths: usize,
    pub seed: u64,
    pub theta: f64,
    pub e_sn: f64,
    pub ks_distance: f64,
    pub ks_distance_centered_sum: f64,
    pub martingale_sample_variance: f64,
    pub centered_sum_sample_variance: f64,
    pub v_over_n_mean: f64,
    pub occupation: Vec<f64>,
    pub pi: Vec<f64>,
    pub ks_threshold: f64,
    pub occupation_tol: Option<f64>,
    pub verdict: String,
    pub samples_file: Option<SpillMeta>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MdpResults {
    pub alpha: f64,
    pub num_paths_per_cell: usize,
    pub seed: u64,
    pub theta: f64,
    pub flagged_cells: usize,
    pub min_targeted_probability: f64,
    pub cells: Vec<MdpCell>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleResults {
    pub n: usize,
    pub support: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    pub expected_sum: f64,
    /// `|mean - expected_sum|`, the cross-check of the two exact routes.
    pub mean_abs_error: f64,
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum AnalysisResults {
    Validate(ValidateResults),
    Diagnose(DiagnoseResults),
    Clt(CltResults),
    Mdp(MdpResults),
    Oracle(OracleResults),
}

/// Versioned, digest-stamped result container for every analysis.
#[derive(Debug, Clone, Serialize)]
pub struct ReportEnvelope {
    pub config_digest: String,
    pub tool_version: String,
    pub analysis: String,
    pub warnings: Vec<String>,
    pub results: AnalysisResults,
}

impl ReportEnvelope {
    /// `Some(pass)` for analyses that produce a verdict.
    pub fn verdict_pass(&self) -> Option<bool> {
        match &self.results {
            AnalysisResults::Clt(c) => Some(c.verdict == "PASS"),
            _ => None,
        }
    }
}

/// Serializes the envelope; identical envelopes produce identical bytes.
pub fn emit_report(envelope: &ReportEnvelope, format: Format) -> Result<Vec<u8>, CliError> {
    match format {
        Format::Json => {
            let value = serde_json::to_value(envelope)
                .map_err(|e| CliError::Numeric(format!("serialization failed: {e}")))?;
            let mut bytes = canonical_json_bytes(&value);
            bytes.push(b'\n');
            Ok(bytes)
        }
        Format::Csv => Ok(emit_csv(envelope).into_bytes()),
    }
}

fn fmt_f64(v: f64) -> String {
    // shortest round-trip form, same as the JSON rendering
    format!("{v}")
}

fn push_curve(out: &mut String, label: &str, points: &[(usize, f64)]) {
    out.push_str(&format!("# {label}\nn,value\n"));
    for &(n, v) in points {
        out.push_str(&format!("{n},{}\n", fmt_f64(v)));
    }
    out.push('\n');
}

fn push_kv(out: &mut String, label: &str, pairs: &[(&str, String)]) {
    out.push_str(&format!("# {label}\nkey,value\n"));
    for (k, v) in pairs {
        out.push_str(&format!("{k},{v}\n"));
    }
    out.push('\n');
}

fn emit_csv(envelope: &ReportEnvelope) -> String {
    let mut out = String::new();
    push_kv(
        &mut out,
        "report",
        &[
            ("config_digest", envelope.config_digest.clone()),
            ("tool_version", envelope.tool_version.clone()),
            ("analysis", envelope.analysis.clone()),
        ],
    );
    match &envelope.results {
        AnalysisResults::Validate(r) => {
            push_kv(
                &mut out,
                "summary",
                &[
                    ("state_count", r.state_count.to_string()),
                    ("schedule_kind", r.schedule_kind.clone()),
                    ("delta", fmt_f64(r.delta)),
                    ("period", r.period.to_string()),
                    ("certified", r.certified.to_string()),
                    ("horizon", r.horizon.to_string()),
                    ("tol", fmt_f64(r.tol)),
                ],
            );
            push_vector(&mut out, "pi", &r.pi);
            for (l, curve) in r.residuals.iter().enumerate() {
                push_curve(&mut out, &format!("{}_class_{l}", curve.label), &curve.points);
            }
        }
        AnalysisResults::Diagnose(r) => {
            for curve in &r.curves {
                push_curve(&mut out, &curve.label, &curve.points);
            }
        }
        AnalysisResults::Clt(r) => {
            push_kv(
                &mut out,
                "summary",
                &[
                    ("n", r.n.to_string()),
                    ("N", r.num_paths.to_string()),
                    ("seed", r.seed.to_string()),
                    ("theta", fmt_f64(r.theta)),
                    ("e_sn", fmt_f64(r.e_sn)),
                    ("ks_distance", fmt_f64(r.ks_distance)),
                    (
                        "ks_distance_centered_sum",
                        fmt_f64(r.ks_distance_centered_sum),
                    ),
                    (
                        "martingale_sample_variance",
                        fmt_f64(r.martingale_sample_variance),
                    ),
                    (
                        "centered_sum_sample_variance",
                        fmt_f64(r.centered_sum_sample_variance),
                    ),
                    ("v_over_n_mean", fmt_f64(r.v_over_n_mean)),
                    ("ks_threshold", fmt_f64(r.ks_threshold)),
                    ("verdict", r.verdict.clone()),
                ],
            );
            push_vector(&mut out, "occupation", &r.occupation);
            push_vector(&mut out, "pi", &r.pi);
        }
        AnalysisResults::Mdp(r) => {
            out.push_str("# mdp\nn,x,p_hat,normalized_log,reference\n");
            for cell in &r.cells {
                let nl = cell
                    .normalized_log
                    .map(fmt_f64)
                    .unwrap_or_default();
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    cell.n,
                    fmt_f64(cell.x),
                    fmt_f64(cell.p_hat),
                    nl,
                    fmt_f64(cell.reference)
                ));
            }
            out.push('\n');
        }
        AnalysisResults::Oracle(r) => {
            push_kv(
                &mut out,
                "summary",
                &[
                    ("n", r.n.to_string()),
                    ("mean", fmt_f64(r.mean)),
                    ("variance", fmt_f64(r.variance)),
                    ("expected_sum", fmt_f64(r.expected_sum)),
                    ("mean_abs_error", fmt_f64(r.mean_abs_error)),
                ],
            );
            out.push_str("# distribution\nvalue,probability\n");
            for (v, p) in r.support.iter().zip(&r.probabilities) {
                out.push_str(&format!("{},{}\n", fmt_f64(*v), fmt_f64(*p)));
            }
            out.push('\n');
        }
    }
    out
}

fn push_vector(out: &mut String, label: &str, values: &[f64]) {
    out.push_str(&format!("# {label}\nstate,value\n"));
    for (i, v) in values.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, fmt_f64(*v)));
    }
    out.push('\n');
}

/// Writes samples as a little-endian binary column: u64 length prefix
/// followed by the f64 values.
pub fn spill_samples(path: &str, samples: &[f64]) -> Result<SpillMeta, CliError> {
    let mut bytes = Vec::with_capacity(8 + samples.len() * 8);
    bytes.extend_from_slice(&(samples.len() as u64).to_le_bytes());
    for &s in samples {
        bytes.extend_from_slice(&s.to_le_bytes());
    }
    std::fs::write(path, &bytes)?;
    Ok(SpillMeta {
        path: path.to_string(),
        count: samples.len(),
        format: "f64le-length-prefixed-v1".to_string(),
    })
}
