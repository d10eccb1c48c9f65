//! Subcommand bodies. Each returns what to print on stdout and whether the
//! run succeeded; input problems come back as [`InputError`].

use std::fs;
use std::path::{Path, PathBuf};

use uqot::classical::{
    dual_value_classical, recover_coupling, sinkhorn_solve_from, ClassicalPotentials, SinkhornOptions,
};
use uqot::gamma::{sweep, Schedule, SweepParameter, DEFAULT_EPSILONS, DEFAULT_TAUS};
use uqot::herm::HermitianOperator;
use uqot::quantum::{
    dual_value_quantum, gradient_primal, potentials_from_coupling, primal_terms, primal_value_quantum, solve_uqot_from,
    CouplingOperator, QuantumProblem, QuantumSolverConfig,
};

use crate::io::{
    complex_rows, parse_instance, solve_csv, sweep_csv, InputError, Instance, Residuals, ResultFile, SolverBlock,
    StoredCoupling, StoredPotentials, SweepFile, TraceRow,
};
use crate::{random, selftest};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Success,
    /// The solver stopped without meeting its tolerance, or a check failed.
    Failed,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Success => 0,
            Status::Failed => 2,
        }
    }

    fn from(ok: bool) -> Self {
        if ok {
            Status::Success
        } else {
            Status::Failed
        }
    }
}

#[derive(Debug)]
pub struct Output {
    pub stdout: String,
    pub status: Status,
}

pub const THREADS_ENV: &str = "UQOT_THREADS";

#[derive(Clone, Debug, Default)]
pub struct SolveArgs {
    pub instance: PathBuf,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub emit_coupling: bool,
    pub emit_trace: bool,
    pub out: Option<PathBuf>,
}

fn io_error(path: &Path, e: std::io::Error) -> InputError {
    InputError::Io { path: path.display().to_string(), message: e.to_string() }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), InputError> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| io_error(&path, e))
}

fn core(field: &'static str) -> impl Fn(uqot::Error) -> InputError {
    move |e| InputError::from_core(field, e)
}

fn wrong_kind(expected: &str) -> InputError {
    InputError::Invalid { field: "kind", message: format!("this command needs a {expected} instance") }
}

fn quantum_config(block: &SolverBlock, tol: Option<f64>, max_iter: Option<usize>) -> QuantumSolverConfig {
    let d = QuantumSolverConfig::default();
    QuantumSolverConfig {
        tol: tol.or(block.tol).unwrap_or(d.tol),
        max_iter: max_iter.or(block.max_iter).unwrap_or(d.max_iter),
        damping: block.damping.unwrap_or(d.damping),
        ..d
    }
}

fn finish(result: ResultFile, out: Option<&Path>) -> Result<Output, InputError> {
    let status = Status::from(result.converged);
    let json = serde_json::to_string_pretty(&result).expect("result serializes") + "\n";
    let stdout = match out {
        Some(dir) => {
            let csv = solve_csv(&result);
            write_file(dir, "result.json", &json)?;
            write_file(dir, "summary.csv", &csv)?;
            csv
        }
        None => json,
    };
    Ok(Output { stdout, status })
}

pub fn solve_classical(args: &SolveArgs) -> Result<Output, InputError> {
    let (inst, hash) = parse_instance(&args.instance)?;
    let Instance::Classical(prob, block) = inst else { return Err(wrong_kind("classical")) };
    if args.emit_trace {
        return Err(InputError::Usage("--emit-trace is only available for quantum instances".into()));
    }
    let d = SinkhornOptions::default();
    let opts = SinkhornOptions {
        tol: args.tol.or(block.tol).unwrap_or(d.tol),
        max_iter: args.max_iter.or(block.max_iter).unwrap_or(d.max_iter),
        translate: true,
    };
    let (pots, rep) = sinkhorn_solve_from(&prob, ClassicalPotentials::zeros(&prob), &opts).map_err(core("solver"))?;
    let coupling = recover_coupling(&pots, &prob).map_err(core("solver"))?;
    let primal = uqot::classical::primal_value_classical(&coupling, &prob);
    let dual = dual_value_classical(&pots, &prob).map_err(core("solver"))?;
    let result = ResultFile {
        instance_sha256: hash,
        kind: "classical".into(),
        converged: rep.converged,
        iterations: rep.iterations,
        primal_value: primal,
        dual_value: dual,
        gap: primal - dual,
        residuals: Residuals {
            transform_residual: Some(rep.transform_residual),
            fixed_point_residual: None,
            gradient_norm: None,
            marginal_residual: None,
        },
        potentials: args.emit_coupling.then(|| StoredPotentials::Classical { u: pots.u.clone(), v: pots.v.clone() }),
        coupling: args.emit_coupling.then(|| {
            let dens = &coupling.density;
            StoredCoupling::Classical {
                density: (0..dens.nrows()).map(|i| (0..dens.ncols()).map(|j| dens[(i, j)]).collect()).collect(),
            }
        }),
        trace: None,
    };
    finish(result, args.out.as_deref())
}

pub fn solve_quantum(args: &SolveArgs) -> Result<Output, InputError> {
    let (inst, hash) = parse_instance(&args.instance)?;
    let Instance::Quantum(prob, block) = inst else { return Err(wrong_kind("quantum")) };
    let cfg = QuantumSolverConfig { record_trace: args.emit_trace, ..quantum_config(&block, args.tol, args.max_iter) };
    let sol = solve_uqot_from(&prob, &cfg, None).map_err(core("solver"))?;
    // Stored values are recomputed from what is stored, so a reader can
    // reproduce them exactly.
    let primal = primal_value_quantum(&sol.coupling, &prob).map_err(core("solver"))?;
    let terms = primal_terms(&sol.coupling, &prob).map_err(core("solver"))?;
    let pots = potentials_from_coupling(&sol.coupling, &prob).map_err(core("solver"))?;
    let dual = dual_value_quantum(&pots, &prob).map_err(core("solver"))?;
    let rep = &sol.report;
    let result = ResultFile {
        instance_sha256: hash,
        kind: "quantum".into(),
        converged: rep.converged,
        iterations: rep.iterations,
        primal_value: primal,
        dual_value: dual,
        gap: primal - dual,
        residuals: Residuals {
            transform_residual: None,
            fixed_point_residual: Some(rep.fixed_point_residual),
            gradient_norm: Some(rep.gradient_norm),
            marginal_residual: Some(terms.marginal_residual()),
        },
        potentials: args
            .emit_coupling
            .then(|| StoredPotentials::Quantum { u: complex_rows(&pots.u), v: complex_rows(&pots.v) }),
        coupling: args.emit_coupling.then(|| StoredCoupling::Quantum { gamma: complex_rows(sol.coupling.gamma()) }),
        trace: args.emit_trace.then(|| {
            rep.trace
                .iter()
                .map(|t| TraceRow {
                    iteration: t.iteration,
                    primal_value: t.primal_value,
                    gradient_norm: t.gradient_norm,
                })
                .collect()
        }),
    };
    finish(result, args.out.as_deref())
}

#[derive(Clone, Debug)]
pub struct SweepArgs {
    pub instance: PathBuf,
    pub schedule: Option<String>,
    pub out: Option<PathBuf>,
    /// Overrides the environment; `None` reads it.
    pub threads: Option<usize>,
}

pub fn parse_schedule(text: &str) -> Result<Vec<f64>, InputError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| InputError::Usage(format!("schedule entry `{}` is not a number", s.trim())))
        })
        .collect()
}

/// Reads the chain count from the environment; unset means one.
pub fn threads_from_env() -> Result<usize, InputError> {
    match std::env::var(THREADS_ENV) {
        Err(std::env::VarError::NotPresent) => Ok(1),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(InputError::Usage(format!("{THREADS_ENV} must be a positive integer, got `{s}`"))),
        },
        Err(e) => Err(InputError::Usage(format!("{THREADS_ENV}: {e}"))),
    }
}

pub fn run_sweep(parameter: SweepParameter, args: &SweepArgs) -> Result<Output, InputError> {
    let (inst, hash) = parse_instance(&args.instance)?;
    let Instance::Quantum(prob, block) = inst else { return Err(wrong_kind("quantum")) };
    let values = match &args.schedule {
        Some(s) => parse_schedule(s)?,
        None => match parameter {
            SweepParameter::Epsilon => DEFAULT_EPSILONS.to_vec(),
            SweepParameter::Tau => DEFAULT_TAUS.to_vec(),
        },
    };
    let threads = match args.threads {
        Some(n) => n,
        None => threads_from_env()?,
    };
    let sched = Schedule::new(parameter, values, prob).map_err(|e| match e {
        uqot::Error::InvalidSchedule(message) => InputError::Invalid { field: "schedule", message },
        other => InputError::from_core("schedule", other),
    })?;
    let report = sweep(&sched, &quantum_config(&block, None, None), threads).map_err(core("solver"))?;
    let csv = sweep_csv(&report);
    if let Some(dir) = &args.out {
        let file = SweepFile::new(&report, hash, threads);
        write_file(dir, "sweep.json", &(serde_json::to_string_pretty(&file).expect("serializes") + "\n"))?;
        write_file(dir, "sweep.csv", &csv)?;
    }
    Ok(Output { stdout: csv, status: Status::from(report.all_converged()) })
}

pub const GRADCHECK_TOL: f64 = 1e-5;
pub const GRADCHECK_DIRECTIONS: usize = 20;

/// Compares the analytic gradient with central differences at a seeded
/// positive definite coupling of trace `sqrt(Tr ρ Tr σ)`.
pub fn gradcheck(instance: &Path, h: f64, seed: u64) -> Result<Output, InputError> {
    if !(h.is_finite() && h > 0.0) {
        return Err(InputError::NonPositiveParameter { field: "h", value: h });
    }
    let (inst, _) = parse_instance(instance)?;
    let Instance::Quantum(prob, _) = inst else { return Err(wrong_kind("quantum")) };
    let rows = gradcheck_rows(&prob, h, seed).map_err(core("solver"))?;
    let worst = rows.iter().map(|r| r.3).fold(0.0, f64::max);
    let mut out = String::from("direction,analytic,finite_difference,relative_error\n");
    for (k, a, f, r) in &rows {
        out.push_str(&format!(
            "{k},{},{},{}\n",
            crate::io::fmt_num(*a),
            crate::io::fmt_num(*f),
            crate::io::fmt_num(*r)
        ));
    }
    Ok(Output { stdout: out, status: Status::from(worst <= GRADCHECK_TOL) })
}

fn gradcheck_rows(prob: &QuantumProblem, h: f64, seed: u64) -> uqot::Result<Vec<(usize, f64, f64, f64)>> {
    let mut rng = random::rng(seed);
    let n = prob.shape().total();
    let trace = (prob.rho().trace() * prob.sigma().trace()).sqrt();
    let gamma = random::positive_definite(&mut rng, n, 0.2, trace);
    let grad = gradient_primal(&CouplingOperator::new(gamma.clone(), prob.shape())?, prob)?;
    let f = |x: &HermitianOperator| primal_value_quantum(&CouplingOperator::new(x.clone(), prob.shape())?, prob);
    (0..GRADCHECK_DIRECTIONS)
        .map(|k| {
            let dir = random::hermitian(&mut rng, n, 1.0);
            let dir = dir.scale(1.0 / dir.frobenius_norm());
            let fd = (f(&gamma.lin_comb(1.0, &dir, h))? - f(&gamma.lin_comb(1.0, &dir, -h))?) / (2.0 * h);
            let an = grad.trace_product(&dir);
            Ok((k, an, fd, (fd - an).abs() / an.abs().max(f64::MIN_POSITIVE)))
        })
        .collect()
}

pub fn run_selftest(filter: Option<&str>, seed: u64) -> Result<Output, InputError> {
    if let Some(f) = filter {
        if !selftest::suites().iter().any(|s| s.name.contains(f)) {
            let names: Vec<_> = selftest::suites().iter().map(|s| s.name).collect();
            return Err(InputError::Usage(format!("no suite matches `{f}`; available: {}", names.join(", "))));
        }
    }
    let outcomes = selftest::run(filter, seed);
    let mut out = String::new();
    for o in &outcomes {
        out.push_str(&o.line());
        out.push('\n');
    }
    let passed = outcomes.iter().filter(|o| o.passed()).count();
    out.push_str(&format!("{passed}/{} suites passed\n", outcomes.len()));
    Ok(Output { stdout: out, status: Status::from(passed == outcomes.len()) })
}
