//! JSON experiment configuration: schema, validation, defaults, and the
//! canonical digest.
//!
//! One config document drives one analysis. Matrices are row-major nested
//! arrays. Verdict thresholds (`ks_threshold`, `occupation_tol`) are
//! experiment properties and live here, not in library constants.

use serde::Deserialize;
use sha2::{Digest, Sha256};

use nhmc_core::chain_model::{
    make_perturbed_schedule, ChainSpec, EpsilonSchedule, InitialDistribution, Observable,
    StateSpace, StochasticMatrix, TransitionSchedule,
};

use crate::CliError;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_M_MAX: usize = 64;
pub const DEFAULT_HORIZON: usize = 4096;
pub const DEFAULT_ROW_SUM_TOL: f64 = 1e-12;
pub const DEFAULT_STATIONARY_TOL: f64 = 1e-10;
pub const DEFAULT_ERGODICITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Analysis {
    Validate,
    Diagnose,
    Clt,
    Mdp,
    Oracle,
}

impl Analysis {
    pub fn as_str(&self) -> &'static str {
        match self {
            Analysis::Validate => "validate",
            Analysis::Diagnose => "diagnose",
            Analysis::Clt => "clt",
            Analysis::Mdp => "mdp",
            Analysis::Oracle => "oracle",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "validate" => Some(Analysis::Validate),
            "diagnose" => Some(Analysis::Diagnose),
            "clt" => Some(Analysis::Clt),
            "mdp" => Some(Analysis::Mdp),
            "oracle" => Some(Analysis::Oracle),
            _ => None,
        }
    }
}

/// Resolved run parameters with defaults applied.
#[derive(Debug, Clone)]
pub struct Params {
    pub n: usize,
    pub num_paths: usize,
    pub seed: u64,
    pub alpha: f64,
    pub x_grid: Vec<f64>,
    pub n_grid: Vec<usize>,
    pub m_max: usize,
    pub horizon: usize,
    pub ks_threshold: f64,
    pub occupation_tol: Option<f64>,
    pub row_sum_tol: f64,
    pub stationary_tol: f64,
    pub ergodicity_tol: f64,
    pub samples_out: Option<String>,
}

/// Fully validated experiment configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub spec: ChainSpec<f64>,
    pub observable: Observable<f64>,
    pub analysis: Analysis,
    pub params: Params,
    /// Hex SHA-256 of the canonicalized config document (sorted keys,
    /// round-trip float rendering); stable across key reordering.
    pub digest: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    state_count: usize,
    initial: Vec<f64>,
    schedule: RawSchedule,
    observable: RawObservable,
    analysis: String,
    #[serde(default)]
    params: RawParams,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum RawSchedule {
    Homogeneous {
        matrix: Vec<Vec<f64>>,
    },
    Explicit {
        matrices: Vec<Vec<Vec<f64>>>,
    },
    Perturbed {
        base: Vec<Vec<f64>>,
        alt: Vec<Vec<f64>>,
        epsilon: RawEpsilon,
    },
}

#[derive(Deserialize)]
#[serde(tag = "form", rename_all = "lowercase", deny_unknown_fields)]
enum RawEpsilon {
    Power { c: f64, p: f64 },
    Geometric { c: f64, r: f64 },
    Explicit { values: Vec<f64> },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObservable {
    values: Vec<f64>,
    bound: f64,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawParams {
    n: Option<usize>,
    #[serde(rename = "N")]
    num_paths: Option<usize>,
    seed: Option<u64>,
    alpha: Option<f64>,
    x_grid: Option<Vec<f64>>,
    n_grid: Option<Vec<usize>>,
    m_max: Option<usize>,
    horizon: Option<usize>,
    ks_threshold: Option<f64>,
    occupation_tol: Option<f64>,
    row_sum_tol: Option<f64>,
    stationary_tol: Option<f64>,
    ergodicity_tol: Option<f64>,
    samples_out: Option<String>,
}

/// Canonical bytes of a JSON document: objects with sorted keys, floats in
/// shortest round-trip form, no whitespace. Reordering keys in the source
/// does not change the canonical form.
pub fn canonical_json_bytes(value: &serde_json::Value) -> Vec<u8> {
    // serde_json maps are BTreeMaps, so serialization is already key-sorted
    serde_json::to_vec(value).expect("JSON values always serialize")
}

fn digest_of(value: &serde_json::Value) -> String {
    let bytes = canonical_json_bytes(value);
    let hash = Sha256::digest(&bytes);
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

/// Parses and validates a config document. `seed_override` replaces
/// `params.seed` before the digest is taken, so the digest always matches
/// what actually ran.
pub fn parse_config(text: &str, seed_override: Option<u64>) -> Result<ExperimentConfig, CliError> {
    let mut value: serde_json::Value = serde_json::from_str(text).map_err(|e| CliError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;

    if let Some(seed) = seed_override {
        let obj = value
            .as_object_mut()
            .ok_or_else(|| CliError::schema("$", "top level must be an object"))?;
        let params = obj
            .entry("params")
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
        let params = params
            .as_object_mut()
            .ok_or_else(|| CliError::schema("params", "must be an object"))?;
        params.insert("seed".into(), serde_json::Value::from(seed));
    }
    let digest = digest_of(&value);

    let deserializer = value.clone();
    let raw: RawConfig = serde_path_to_error::deserialize(deserializer).map_err(|e| {
        CliError::Schema {
            path: e.path().to_string(),
            reason: e.inner().to_string(),
        }
    })?;

    build_config(raw, digest)
}

fn build_config(raw: RawConfig, digest: String) -> Result<ExperimentConfig, CliError> {
    let k = raw.state_count;
    let space =
        StateSpace::new(k).map_err(|e| CliError::schema("state_count", e.to_string()))?;

    if raw.initial.len() != k {
        return Err(CliError::schema("initial", "length mismatch"));
    }
    let row_sum_tol = raw.params.row_sum_tol.unwrap_or(DEFAULT_ROW_SUM_TOL);
    let initial = InitialDistribution::validate(raw.initial, row_sum_tol)
        .map_err(|e| CliError::schema("initial", e.to_string()))?;

    let schedule = build_schedule(&raw.schedule, k, row_sum_tol)?;

    if raw.observable.values.len() != k {
        return Err(CliError::schema("observable.values", "length mismatch"));
    }
    let observable = Observable::new(raw.observable.values, raw.observable.bound)
        .map_err(|e| CliError::schema("observable", e.to_string()))?;

    let analysis = Analysis::parse(&raw.analysis).ok_or_else(|| {
        CliError::schema(
            "analysis",
            format!(
                "unknown analysis '{}' (expected validate|diagnose|clt|mdp|oracle)",
                raw.analysis
            ),
        )
    })?;

    let params = build_params(&raw.params, analysis)?;

    let spec = ChainSpec::new(space, initial, schedule)
        .map_err(|e| CliError::schema("schedule", e.to_string()))?;

    Ok(ExperimentConfig {
        spec,
        observable,
        analysis,
        params,
        digest,
    })
}

fn build_matrix(
    rows: &[Vec<f64>],
    k: usize,
    tol: f64,
    path: &str,
) -> Result<StochasticMatrix<f64>, CliError> {
    if rows.len() != k || rows.iter().any(|r| r.len() != k) {
        return Err(CliError::schema(path, "matrix dimensions must match state_count"));
    }
    StochasticMatrix::validate(rows, tol).map_err(|e| CliError::schema(path, e.to_string()))
}

fn build_schedule(
    raw: &RawSchedule,
    k: usize,
    tol: f64,
) -> Result<TransitionSchedule<f64>, CliError> {
    match raw {
        RawSchedule::Homogeneous { matrix } => Ok(TransitionSchedule::homogeneous(build_matrix(
            matrix,
            k,
            tol,
            "schedule.matrix",
        )?)),
        RawSchedule::Explicit { matrices } => {
            let mut built = Vec::with_capacity(matrices.len());
            for (i, m) in matrices.iter().enumerate() {
                built.push(build_matrix(m, k, tol, &format!("schedule.matrices[{i}]"))?);
            }
            TransitionSchedule::explicit(built)
                .map_err(|e| CliError::schema("schedule.matrices", e.to_string()))
        }
        RawSchedule::Perturbed { base, alt, epsilon } => {
            let base = build_matrix(base, k, tol, "schedule.base")?;
            let alt = build_matrix(alt, k, tol, "schedule.alt")?;
            let eps = match epsilon {
                RawEpsilon::Power { c, p } => EpsilonSchedule::power(*c, *p),
                RawEpsilon::Geometric { c, r } => EpsilonSchedule::geometric(*c, *r),
                RawEpsilon::Explicit { values } => EpsilonSchedule::explicit(values.clone()),
            }
            .map_err(|e| CliError::schema("schedule.epsilon", e.to_string()))?;
            make_perturbed_schedule(base, alt, eps)
                .map_err(|e| CliError::schema("schedule", e.to_string()))
        }
    }
}

fn require<T: Copy>(v: Option<T>, path: &str, analysis: Analysis) -> Result<T, CliError> {
    v.ok_or_else(|| {
        CliError::schema(
            path,
            format!("required for the {} analysis", analysis.as_str()),
        )
    })
}

fn build_params(raw: &RawParams, analysis: Analysis) -> Result<Params, CliError> {
    for (name, value) in [
        ("params.ks_threshold", raw.ks_threshold),
        ("params.occupation_tol", raw.occupation_tol),
        ("params.row_sum_tol", raw.row_sum_tol),
        ("params.stationary_tol", raw.stationary_tol),
        ("params.ergodicity_tol", raw.ergodicity_tol),
    ] {
        if let Some(v) = value {
            if !(v > 0.0) {
                return Err(CliError::schema(name, "tolerance must be positive"));
            }
        }
    }

    let n = match analysis {
        Analysis::Clt | Analysis::Oracle | Analysis::Diagnose => {
            let n = require(raw.n, "params.n", analysis)?;
            if n == 0 {
                return Err(CliError::schema("params.n", "must be at least 1"));
            }
            n
        }
        _ => raw.n.unwrap_or(0),
    };

    let num_paths = match analysis {
        Analysis::Clt | Analysis::Mdp => require(raw.num_paths, "params.N", analysis)?,
        _ => raw.num_paths.unwrap_or(0),
    };

    let alpha = match analysis {
        Analysis::Mdp => {
            let a = require(raw.alpha, "params.alpha", analysis)?;
            if !(a > 0.5 && a < 1.0) {
                return Err(CliError::schema("params.alpha", "must lie in (0.5,1)"));
            }
            a
        }
        _ => raw.alpha.unwrap_or(0.75),
    };

    let (x_grid, n_grid) = match analysis {
        Analysis::Mdp => {
            let x = raw
                .x_grid
                .clone()
                .ok_or_else(|| CliError::schema("params.x_grid", "required for the mdp analysis"))?;
            if x.is_empty() {
                return Err(CliError::schema("params.x_grid", "must be nonempty"));
            }
            if x.iter().any(|&v| v < 0.0) {
                return Err(CliError::schema("params.x_grid", "entries must be nonnegative"));
            }
            let ng = raw
                .n_grid
                .clone()
                .ok_or_else(|| CliError::schema("params.n_grid", "required for the mdp analysis"))?;
            if ng.is_empty() || ng.iter().any(|&v| v == 0) {
                return Err(CliError::schema("params.n_grid", "entries must be positive"));
            }
            (x, ng)
        }
        _ => (
            raw.x_grid.clone().unwrap_or_default(),
            raw.n_grid.clone().unwrap_or_default(),
        ),
    };

    let ks_threshold = match analysis {
        Analysis::Clt => require(raw.ks_threshold, "params.ks_threshold", analysis)?,
        _ => raw.ks_threshold.unwrap_or(f64::INFINITY),
    };

    Ok(Params {
        n,
        num_paths,
        seed: raw.seed.unwrap_or(DEFAULT_SEED),
        alpha,
        x_grid,
        n_grid,
        m_max: raw.m_max.unwrap_or(DEFAULT_M_MAX),
        horizon: raw.horizon.unwrap_or(DEFAULT_HORIZON),
        ks_threshold,
        occupation_tol: raw.occupation_tol,
        row_sum_tol: raw.row_sum_tol.unwrap_or(DEFAULT_ROW_SUM_TOL),
        stationary_tol: raw.stationary_tol.unwrap_or(DEFAULT_STATIONARY_TOL),
        ergodicity_tol: raw.ergodicity_tol.unwrap_or(DEFAULT_ERGODICITY_TOL),
        samples_out: raw.samples_out.clone(),
    })
}
