//! Built-in targets and the subprocess escape hatch.
//!
//! `cmd:<program> [args]` starts the program once. For every evaluation it
//! writes the point as one line of space-separated decimals to the child's
//! stdin and reads one line with the log-density from its stdout. `-inf`
//! marks points outside the support; anything unparsable is a callback
//! failure.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use trimap::bod::BodPosterior;
use trimap::target::{BananaTarget, GaussianTarget, TargetDensity};
use trimap::TrimapError;

use crate::{usage, CliResult};

pub struct TargetSpec {
    pub name: String,
    pub dim: Option<usize>,
    pub mean: Option<Vec<f64>>,
    pub cov: Option<Vec<f64>>,
    pub curvature: Option<f64>,
    pub data: Option<Vec<f64>>,
}

pub enum BuiltTarget {
    Gaussian(GaussianTarget),
    Banana(BananaTarget),
    Bod(BodPosterior),
    Process(ProcessTarget),
}

impl TargetDensity for BuiltTarget {
    fn dim(&self) -> usize {
        match self {
            BuiltTarget::Gaussian(t) => t.dim(),
            BuiltTarget::Banana(t) => t.dim(),
            BuiltTarget::Bod(t) => t.dim(),
            BuiltTarget::Process(t) => t.dim(),
        }
    }

    fn log_density(&self, y: &[f64]) -> f64 {
        match self {
            BuiltTarget::Gaussian(t) => t.log_density(y),
            BuiltTarget::Banana(t) => t.log_density(y),
            BuiltTarget::Bod(t) => t.log_density(y),
            BuiltTarget::Process(t) => t.log_density(y),
        }
    }

    fn gradient(&self, y: &[f64]) -> Option<Vec<f64>> {
        match self {
            BuiltTarget::Gaussian(t) => t.gradient(y),
            BuiltTarget::Banana(t) => t.gradient(y),
            BuiltTarget::Bod(t) => t.gradient(y),
            BuiltTarget::Process(t) => t.gradient(y),
        }
    }
}

pub fn build(spec: &TargetSpec) -> CliResult<BuiltTarget> {
    if let Some(command) = spec.name.strip_prefix("cmd:") {
        let dim = spec.dim.ok_or_else(|| usage("`cmd:` targets need --dim"))?;
        return Ok(BuiltTarget::Process(ProcessTarget::spawn(command, dim)?));
    }
    match spec.name.as_str() {
        "gaussian" => {
            let n = spec
                .mean
                .as_ref()
                .map(Vec::len)
                .or(spec.dim)
                .ok_or_else(|| usage("gaussian target needs --mean or --dim"))?;
            let mean = spec.mean.clone().unwrap_or_else(|| vec![0.0; n]);
            let cov: Vec<Vec<f64>> = match &spec.cov {
                Some(c) if c.len() == n * n => c.chunks(n).map(<[f64]>::to_vec).collect(),
                Some(c) => return Err(usage(format!("--cov needs {} entries, got {}", n * n, c.len()))),
                None => (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect(),
            };
            Ok(BuiltTarget::Gaussian(GaussianTarget::new(mean, &cov)?))
        }
        "banana" => Ok(BuiltTarget::Banana(BananaTarget {
            curvature: spec.curvature.unwrap_or(1.0),
        })),
        "bod-posterior" => {
            let mut t = BodPosterior::default();
            if let Some(d) = &spec.data {
                t.data = d
                    .as_slice()
                    .try_into()
                    .map_err(|_| usage(format!("--data needs 5 values, got {}", d.len())))?;
            }
            Ok(BuiltTarget::Bod(t))
        }
        other => Err(usage(format!("unknown target `{other}`"))),
    }
}

pub struct ProcessTarget {
    dim: usize,
    child: Mutex<Pipe>,
}

struct Pipe {
    process: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
    failed: Option<String>,
}

impl ProcessTarget {
    pub fn spawn(command: &str, dim: usize) -> CliResult<Self> {
        let mut parts = command.split_whitespace();
        let program = parts.next().ok_or_else(|| usage("empty `cmd:` target"))?;
        let mut process = Command::new(program)
            .args(parts)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| TrimapError::CallbackFailure(format!("cannot start `{program}`: {e}")))?;
        let stdin = process.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(process.stdout.take().expect("piped stdout"));
        Ok(ProcessTarget {
            dim,
            child: Mutex::new(Pipe {
                process,
                stdin,
                stdout,
                failed: None,
            }),
        })
    }

    fn query(pipe: &mut Pipe, y: &[f64]) -> Result<f64, String> {
        let line: Vec<String> = y.iter().map(|v| format!("{v:.17e}")).collect();
        writeln!(pipe.stdin, "{}", line.join(" ")).map_err(|e| format!("write to target process: {e}"))?;
        pipe.stdin.flush().map_err(|e| format!("write to target process: {e}"))?;
        let mut reply = String::new();
        let n = pipe
            .stdout
            .read_line(&mut reply)
            .map_err(|e| format!("read from target process: {e}"))?;
        if n == 0 {
            return Err("target process closed its output".into());
        }
        let reply = reply.trim();
        match reply {
            "-inf" | "-Inf" | "-infinity" => Ok(f64::NEG_INFINITY),
            _ => reply.parse().map_err(|_| format!("target process replied `{reply}`")),
        }
    }
}

impl TargetDensity for ProcessTarget {
    fn dim(&self) -> usize {
        self.dim
    }

    /// Protocol errors poison the target: this and every later call return
    /// NaN, which the library reports as a callback failure.
    fn log_density(&self, y: &[f64]) -> f64 {
        let mut pipe = self.child.lock().unwrap_or_else(|e| e.into_inner());
        if pipe.failed.is_some() {
            return f64::NAN;
        }
        match Self::query(&mut pipe, y) {
            Ok(v) => v,
            Err(e) => {
                log::error!("{e}");
                pipe.failed = Some(e);
                f64::NAN
            }
        }
    }
}

impl Drop for ProcessTarget {
    fn drop(&mut self) {
        let pipe = self.child.get_mut().unwrap_or_else(|e| e.into_inner());
        let _ = pipe.process.kill();
        let _ = pipe.process.wait();
    }
}
