//! Instance and result files.
//!
//! Instances are JSON objects tagged by `kind`. Complex entries are
//! `[re, im]` pairs; matrices are arrays of rows.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use uqot::classical::{ClassicalProblem, DiscreteCoupling, DiscreteMeasure};
use uqot::herm::HermitianOperator;
use uqot::quantum::{CouplingOperator, QuantumProblem};

/// Input problems, each with a stable diagnostic code.
#[derive(Debug, Error)]
pub enum InputError {
    #[error("E001 cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("E010 schema violation: {0}")]
    Schema(String),
    #[error("E020 field `{field}` is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { field: &'static str, deviation: f64 },
    #[error("E030 field `{field}` is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPsd { field: &'static str, min_eigenvalue: f64 },
    #[error("E040 field `{field}` must be positive and finite, got {value}")]
    NonPositiveParameter { field: &'static str, value: f64 },
    #[error("E050 field `{field}`: {message}")]
    Shape { field: &'static str, message: String },
    #[error("E060 trace mismatch: Tr rho = {mass1}, Tr sigma = {mass2}")]
    TraceMismatch { mass1: f64, mass2: f64 },
    #[error("E070 field `{field}`: {message}")]
    Invalid { field: &'static str, message: String },
    #[error("E080 {0}")]
    Usage(String),
}

impl InputError {
    pub fn code(&self) -> &'static str {
        match self {
            InputError::Io { .. } => "E001",
            InputError::Schema(_) => "E010",
            InputError::NotHermitian { .. } => "E020",
            InputError::NotPsd { .. } => "E030",
            InputError::NonPositiveParameter { .. } => "E040",
            InputError::Shape { .. } => "E050",
            InputError::TraceMismatch { .. } => "E060",
            InputError::Invalid { .. } => "E070",
            InputError::Usage(_) => "E080",
        }
    }

    /// Attributes a library error to an instance field.
    pub fn from_core(field: &'static str, e: uqot::Error) -> Self {
        use uqot::Error as E;
        match e {
            E::NotHermitian { deviation } => InputError::NotHermitian { field, deviation },
            E::NotPsd { min_eigenvalue } => InputError::NotPsd { field, min_eigenvalue },
            E::NonPositiveParameter { name, value } => InputError::NonPositiveParameter { field: name, value },
            E::TraceMismatch { mass1, mass2 } => InputError::TraceMismatch { mass1, mass2 },
            E::DimensionMismatch { expected, found } => {
                InputError::Shape { field, message: format!("expected dimension {expected}, found {found}") }
            }
            E::NotSquare { rows, cols } => InputError::Shape { field, message: format!("{rows}x{cols} is not square") },
            other => InputError::Invalid { field, message: other.to_string() },
        }
    }
}

pub type Complex = [f64; 2];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damping: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalInstance {
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
    pub cost: Vec<Vec<f64>>,
    pub epsilon: f64,
    pub tau1: f64,
    pub tau2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverBlock>,
    /// Absorbs the `kind` tag when the struct is parsed on its own.
    #[serde(default, rename = "kind", skip_serializing)]
    tag: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantumInstance {
    pub d1: usize,
    pub d2: usize,
    #[serde(alias = "C")]
    pub cost: Vec<Vec<Complex>>,
    pub rho: Vec<Vec<Complex>>,
    pub sigma: Vec<Vec<Complex>>,
    pub epsilon: f64,
    pub tau1: f64,
    pub tau2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverBlock>,
    /// Absorbs the `kind` tag when the struct is parsed on its own.
    #[serde(default, rename = "kind", skip_serializing)]
    tag: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InstanceFile {
    Classical(ClassicalInstance),
    Quantum(QuantumInstance),
}

/// A validated instance.
#[derive(Clone, Debug)]
pub enum Instance {
    Classical(ClassicalProblem, SolverBlock),
    Quantum(QuantumProblem, SolverBlock),
}

fn check_param(field: &'static str, value: f64) -> Result<(), InputError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(InputError::NonPositiveParameter { field, value })
    }
}

fn real_matrix(field: &'static str, rows: &[Vec<f64>], n: usize, m: usize) -> Result<DMatrix<f64>, InputError> {
    if rows.len() != n || rows.iter().any(|r| r.len() != m) {
        return Err(InputError::Shape { field, message: format!("expected {n} rows of {m} entries") });
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn hermitian(field: &'static str, rows: &[Vec<Complex>], d: usize) -> Result<HermitianOperator, InputError> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(InputError::Shape { field, message: format!("expected a {d}x{d} matrix") });
    }
    let m = DMatrix::from_fn(d, d, |i, j| Complex64::new(rows[i][j][0], rows[i][j][1]));
    HermitianOperator::new(m).map_err(|e| InputError::from_core(field, e))
}

fn psd(field: &'static str, h: &HermitianOperator) -> Result<(), InputError> {
    uqot::herm::check_psd(h).map(|_| ()).map_err(|e| InputError::from_core(field, e))
}

pub fn complex_rows(h: &HermitianOperator) -> Vec<Vec<Complex>> {
    let n = h.dim();
    (0..n).map(|i| (0..n).map(|j| [h.get(i, j).re, h.get(i, j).im]).collect()).collect()
}

impl ClassicalInstance {
    pub fn validate(&self) -> Result<ClassicalProblem, InputError> {
        check_param("epsilon", self.epsilon)?;
        check_param("tau1", self.tau1)?;
        check_param("tau2", self.tau2)?;
        let mu = DiscreteMeasure::new(self.mu.clone()).map_err(|e| InputError::from_core("mu", e))?;
        let nu = DiscreteMeasure::new(self.nu.clone()).map_err(|e| InputError::from_core("nu", e))?;
        let cost = real_matrix("cost", &self.cost, mu.len(), nu.len())?;
        ClassicalProblem::new(mu, nu, cost, self.epsilon, self.tau1, self.tau2)
            .map_err(|e| InputError::from_core("cost", e))
    }

    pub fn from_problem(p: &ClassicalProblem) -> Self {
        let c = p.cost();
        Self {
            mu: p.mu().weights().to_vec(),
            nu: p.nu().weights().to_vec(),
            cost: (0..c.nrows()).map(|i| (0..c.ncols()).map(|j| c[(i, j)]).collect()).collect(),
            epsilon: p.epsilon(),
            tau1: p.tau1(),
            tau2: p.tau2(),
            solver: None,
            tag: None,
        }
    }
}

impl QuantumInstance {
    pub fn validate(&self) -> Result<QuantumProblem, InputError> {
        check_param("epsilon", self.epsilon)?;
        check_param("tau1", self.tau1)?;
        check_param("tau2", self.tau2)?;
        if self.d1 == 0 || self.d2 == 0 {
            return Err(InputError::Shape { field: "d1", message: "dimensions must be positive".into() });
        }
        let cost = hermitian("cost", &self.cost, self.d1 * self.d2)?;
        let rho = hermitian("rho", &self.rho, self.d1)?;
        let sigma = hermitian("sigma", &self.sigma, self.d2)?;
        psd("rho", &rho)?;
        psd("sigma", &sigma)?;
        QuantumProblem::new(cost, rho, sigma, self.epsilon, self.tau1, self.tau2)
            .map_err(|e| InputError::from_core("rho", e))
    }

    pub fn from_problem(p: &QuantumProblem) -> Self {
        Self {
            d1: p.shape().d1,
            d2: p.shape().d2,
            cost: complex_rows(p.cost()),
            rho: complex_rows(p.rho()),
            sigma: complex_rows(p.sigma()),
            epsilon: p.epsilon(),
            tau1: p.tau1(),
            tau2: p.tau2(),
            solver: None,
            tag: None,
        }
    }
}

impl InstanceFile {
    pub fn parse(text: &str) -> Result<Self, InputError> {
        #[derive(Deserialize)]
        struct Probe {
            kind: String,
        }
        let schema = |e: serde_json::Error| InputError::Schema(e.to_string());
        // Dispatch on the tag first, then parse the body directly: going
        // through the tagged enum would lose line numbers in diagnostics.
        match serde_json::from_str::<Probe>(text).map_err(schema)?.kind.as_str() {
            "classical" => {
                let c: ClassicalInstance = serde_json::from_str(text).map_err(schema)?;
                Ok(InstanceFile::Classical(ClassicalInstance { tag: None, ..c }))
            }
            "quantum" => {
                let q: QuantumInstance = serde_json::from_str(text).map_err(schema)?;
                Ok(InstanceFile::Quantum(QuantumInstance { tag: None, ..q }))
            }
            other => Err(InputError::Schema(format!("unknown kind `{other}`, expected `classical` or `quantum`"))),
        }
    }

    pub fn validate(&self) -> Result<Instance, InputError> {
        match self {
            InstanceFile::Classical(c) => Ok(Instance::Classical(c.validate()?, c.solver.clone().unwrap_or_default())),
            InstanceFile::Quantum(q) => Ok(Instance::Quantum(q.validate()?, q.solver.clone().unwrap_or_default())),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }
}

/// Reads, parses and validates an instance; also returns the SHA-256 of
/// the file bytes.
pub fn parse_instance(path: &Path) -> Result<(Instance, String), InputError> {
    let bytes =
        std::fs::read(path).map_err(|e| InputError::Io { path: path.display().to_string(), message: e.to_string() })?;
    let text = std::str::from_utf8(&bytes).map_err(|e| InputError::Schema(format!("not UTF-8: {e}")))?;
    let inst = InstanceFile::parse(text)?.validate()?;
    Ok((inst, sha256_hex(&bytes)))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_point_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient_norm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginal_residual: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StoredPotentials {
    Classical { u: Vec<f64>, v: Vec<f64> },
    Quantum { u: Vec<Vec<Complex>>, v: Vec<Vec<Complex>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StoredCoupling {
    /// Density with respect to `mu ⊗ nu`.
    Classical {
        density: Vec<Vec<f64>>,
    },
    Quantum {
        gamma: Vec<Vec<Complex>>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub primal_value: f64,
    pub gradient_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub instance_sha256: String,
    pub kind: String,
    pub converged: bool,
    pub iterations: usize,
    pub primal_value: f64,
    pub dual_value: f64,
    pub gap: f64,
    pub residuals: Residuals,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potentials: Option<StoredPotentials>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<StoredCoupling>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceRow>>,
}

impl ResultFile {
    /// Primal value of the stored coupling, recomputed from scratch.
    pub fn reevaluate_primal(&self, inst: &Instance) -> Result<f64, InputError> {
        match (&self.coupling, inst) {
            (Some(StoredCoupling::Classical { density }), Instance::Classical(p, _)) => {
                let d = real_matrix("coupling", density, p.mu().len(), p.nu().len())?;
                let c = DiscreteCoupling::from_density(d, p).map_err(|e| InputError::from_core("coupling", e))?;
                Ok(uqot::classical::primal_value_classical(&c, p))
            }
            (Some(StoredCoupling::Quantum { gamma }), Instance::Quantum(p, _)) => {
                let g = hermitian("coupling", gamma, p.shape().total())?;
                let c = CouplingOperator::new(g, p.shape()).map_err(|e| InputError::from_core("coupling", e))?;
                uqot::quantum::primal_value_quantum(&c, p).map_err(|e| InputError::from_core("coupling", e))
            }
            _ => Err(InputError::Invalid { field: "coupling", message: "missing or of the wrong kind".into() }),
        }
    }
}

/// Header of the sweep CSV table.
pub const SWEEP_CSV_HEADER: &str = "parameter,min_value,gap,marginal_residual,iterations";

/// 17 significant digits, round-trip exact.
pub fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

pub fn sweep_csv(report: &uqot::gamma::SweepReport) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in &report.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            fmt_num(r.parameter),
            fmt_num(r.min_value),
            fmt_num(r.gap),
            fmt_num(r.marginal_residual),
            r.iterations
        );
    }
    out
}

pub const SOLVE_CSV_HEADER: &str = "kind,primal_value,dual_value,gap,residual,iterations,converged";

pub fn solve_csv(r: &ResultFile) -> String {
    let residual = r.residuals.transform_residual.or(r.residuals.gradient_norm).unwrap_or(f64::NAN);
    format!(
        "{SOLVE_CSV_HEADER}\n{},{},{},{},{},{},{}\n",
        r.kind,
        fmt_num(r.primal_value),
        fmt_num(r.dual_value),
        fmt_num(r.gap),
        fmt_num(residual),
        r.iterations,
        r.converged
    )
}

/// Sweep output. Non-finite numbers become `null`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepFile {
    pub instance_sha256: String,
    pub parameter: String,
    pub threads: usize,
    pub records: Vec<SweepRow>,
    pub limit_estimate: Option<f64>,
    pub tail_values: Vec<f64>,
    pub cauchy_residuals: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: f64,
    pub min_value: Option<f64>,
    pub unregularized_value: Option<f64>,
    pub marginal_residual: Option<f64>,
    pub iterations: usize,
    pub gap: Option<f64>,
    pub converged: bool,
    pub coupling_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

impl SweepFile {
    pub fn new(report: &uqot::gamma::SweepReport, hash: String, threads: usize) -> Self {
        Self {
            instance_sha256: hash,
            parameter: report.parameter.name().to_string(),
            threads,
            records: report
                .records
                .iter()
                .map(|r| SweepRow {
                    parameter: r.parameter,
                    min_value: finite(r.min_value),
                    unregularized_value: finite(r.unregularized_value),
                    marginal_residual: finite(r.marginal_residual),
                    iterations: r.iterations,
                    gap: finite(r.gap),
                    converged: r.converged,
                    coupling_step: r.coupling_step,
                    error: r.error.clone(),
                })
                .collect(),
            limit_estimate: report.limit_estimate.and_then(finite),
            tail_values: report.tail_values.clone(),
            cauchy_residuals: report.cauchy_residuals.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CLASSICAL: &str =
        r#"{"kind":"classical","mu":[1.0],"nu":[2.0],"cost":[[0.5]],"epsilon":0.1,"tau1":1.0,"tau2":1.0}"#;

    #[test]
    fn classical_round_trip() {
        let a = InstanceFile::parse(CLASSICAL).unwrap();
        let b = InstanceFile::parse(&a.to_json()).unwrap();
        assert_eq!(a, b);
        assert!(matches!(b.validate().unwrap(), Instance::Classical(..)));
    }

    #[test]
    fn zero_tau_is_rejected() {
        let text = CLASSICAL.replace(r#""tau1":1.0"#, r#""tau1":0.0"#);
        let err = InstanceFile::parse(&text).unwrap().validate().unwrap_err();
        assert_eq!(err.code(), "E040");
    }

    #[test]
    fn unknown_field_is_a_schema_error() {
        let text = CLASSICAL.replace(r#""epsilon""#, r#""epsilom""#);
        let err = InstanceFile::parse(&text).unwrap_err();
        assert_eq!(err.code(), "E010");
        assert!(err.to_string().contains("line"));
    }

    #[test]
    fn asymmetric_cost_is_rejected() {
        let text = r#"{"kind":"quantum","d1":1,"d2":2,
            "C":[[[0,0],[1.000001,0]],[[1,0],[0,0]]],
            "rho":[[[1,0]]],"sigma":[[[1,0],[0,0]],[[0,0],[1,0]]],
            "epsilon":1,"tau1":1,"tau2":1}"#;
        let err = InstanceFile::parse(text).unwrap().validate().unwrap_err();
        assert_eq!(err.code(), "E020");
    }

    #[test]
    fn indefinite_rho_is_rejected() {
        let text = r#"{"kind":"quantum","d1":1,"d2":1,"cost":[[[0,0]]],
            "rho":[[[-1,0]]],"sigma":[[[1,0]]],"epsilon":1,"tau1":1,"tau2":1}"#;
        let err = InstanceFile::parse(text).unwrap().validate().unwrap_err();
        assert_eq!(err.code(), "E030");
    }

    #[test]
    fn numbers_print_with_seventeen_digits() {
        assert_eq!(fmt_num(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_num(0.1).parse::<f64>().unwrap(), 0.1);
    }
}
