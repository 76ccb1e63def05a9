//! External solver subprocess contract.
//!
//! The executable is invoked as `<command> <problem.mps> <result.txt>` in a
//! fresh temporary directory. A zero exit code means the result file was
//! written; any other exit code is an error. The result file is plain text,
//! one record per line, blank lines and `#` comments ignored:
//!
//! ```text
//! status optimal            # optimal | infeasible | unbounded | numerical-failure
//! objective 123.456         # required when status is optimal
//! x dnet_t0 41.5            # one line per variable; omitted variables are 0
//! ```

use std::collections::HashMap;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use log::debug;

use crate::mps::write_mps;
use crate::{LpProblem, RawSolution, Scalar, SolverConfig, SolverError, Status};

/// Environment variable naming the default external solver executable.
pub const EXTERNAL_SOLVER_ENV: &str = "BILLOPT_EXTERNAL_SOLVER";

/// Parsed result file.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalResult {
    pub status: Status,
    pub objective: Option<f64>,
    pub values: HashMap<String, f64>,
}

/// Parses the result file schema described in the module docs.
pub fn parse_result_file(text: &str) -> Result<ExternalResult, SolverError> {
    let mut status = None;
    let mut objective = None;
    let mut values = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |what: &str| SolverError::External(format!("result line {}: {what}: `{raw}`", i + 1));
        let fields: Vec<&str> = line.split_whitespace().collect();
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
        match fields[..] {
            ["status", s] => {
                status = Some(match s {
                    "optimal" => Status::Optimal,
                    "infeasible" => Status::Infeasible,
                    "unbounded" => Status::Unbounded,
                    "numerical-failure" => Status::NumericalFailure("reported by external solver".into()),
                    _ => return Err(bad("unknown status")),
                });
            }
            ["objective", v] => objective = Some(num(v)?),
            ["x", name, v] => {
                if values.insert(name.to_string(), num(v)?).is_some() {
                    return Err(bad("duplicate variable"));
                }
            }
            _ => return Err(bad("unrecognized record")),
        }
    }
    let status = status.ok_or_else(|| SolverError::External("result file has no status line".into()))?;
    if status == Status::Optimal && objective.is_none() {
        return Err(SolverError::External("optimal result without objective line".into()));
    }
    Ok(ExternalResult {
        status,
        objective,
        values,
    })
}

pub(crate) fn solve<T: Scalar>(
    problem: &LpProblem<T>,
    config: &SolverConfig,
    command: &Path,
) -> Result<RawSolution<T>, SolverError> {
    let text = write_mps(problem).map_err(|e| SolverError::External(e.to_string()))?;
    let dir = tempfile::Builder::new().prefix("billopt-lp").tempdir()?;
    let mps_path = dir.path().join("problem.mps");
    let result_path = dir.path().join("result.txt");
    std::fs::write(&mps_path, text)?;

    debug!("running external solver {}", command.display());
    let mut child = Command::new(command)
        .arg(&mps_path)
        .arg(&result_path)
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| SolverError::External(format!("cannot start `{}`: {e}", command.display())))?;

    let started = Instant::now();
    let exit = loop {
        if let Some(status) = child.try_wait()? {
            break status;
        }
        if config.time_limit.is_some_and(|limit| started.elapsed() >= limit) {
            let _ = child.kill();
            let _ = child.wait();
            return Ok(RawSolution {
                status: Status::NumericalFailure("time limit reached in external solver".into()),
                objective: T::nan(),
                values: vec![T::nan(); problem.num_vars()],
                iterations: 0,
                basis: None,
            });
        }
        std::thread::sleep(Duration::from_millis(5));
    };
    if !exit.success() {
        let mut stderr = String::new();
        if let Some(mut pipe) = child.stderr.take() {
            use std::io::Read;
            let _ = pipe.read_to_string(&mut stderr);
        }
        return Err(SolverError::External(format!(
            "`{}` exited with {exit}: {}",
            command.display(),
            stderr.trim()
        )));
    }

    let parsed = parse_result_file(&std::fs::read_to_string(&result_path)?)?;
    let mut values = vec![T::zero(); problem.num_vars()];
    let mut known = 0;
    for (j, v) in problem.vars.iter().enumerate() {
        if let Some(&x) = parsed.values.get(&v.name) {
            values[j] = T::of(x);
            known += 1;
        }
    }
    if known != parsed.values.len() {
        return Err(SolverError::External("result names a variable not in the problem".into()));
    }
    let objective = match parsed.objective {
        Some(o) => T::of(o),
        None => problem.objective_value(&values),
    };
    Ok(RawSolution {
        status: parsed.status,
        objective,
        values,
        iterations: 0,
        basis: None,
    })
}
