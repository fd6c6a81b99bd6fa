//! Execution engines: the reference interpreter and compiled programs,
//! selected by name.

use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use blog_runtime::stats::RunStats;
use thiserror::Error;

use crate::analysis::analyze;
use crate::codegen::{self, CodegenError, Options};
use crate::frontend::Model;
use crate::interp::{self, InterpError};

#[derive(Debug, Clone)]
pub struct RunSpec {
    pub model_name: String,
    pub algo: String,
    pub n: u64,
    pub seed: u64,
    pub burn_in: u64,
    pub db: bool,
    pub rc: bool,
    pub acu: bool,
    pub clear_memory_every: Option<u64>,
    pub debug_oracle: bool,
    pub record: Option<PathBuf>,
    /// Kill a compiled program that runs longer than this.
    pub timeout: Option<Duration>,
}

impl RunSpec {
    pub fn new(model_name: &str, algo: &str, n: u64, seed: u64) -> Self {
        RunSpec {
            model_name: model_name.to_string(),
            algo: algo.to_string(),
            n,
            seed,
            burn_in: 0,
            db: true,
            rc: true,
            acu: true,
            clear_memory_every: None,
            debug_oracle: false,
            record: None,
            timeout: None,
        }
    }

    pub fn options(&self) -> Options {
        Options {
            model_name: self.model_name.clone(),
            algo: self.algo.clone(),
            db: self.db,
            rc: self.rc,
            acu: self.acu,
            clear_memory_every: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("unknown engine `{0}` (expected interp or compiled)")]
    Unknown(String),
    #[error("the {engine} engine does not support {algo}")]
    Unsupported { engine: &'static str, algo: String },
    #[error(transparent)]
    Codegen(#[from] CodegenError),
    #[error(transparent)]
    Interp(#[from] InterpError),
    #[error("{0}")]
    Program(String),
    #[error("timed out after {0} s")]
    Timeout(f64),
}

pub trait Engine: Sync {
    fn name(&self) -> &'static str;
    fn run(&self, m: &Model, spec: &RunSpec) -> Result<RunStats, EngineError>;
}

pub struct InterpEngine;
pub struct CompiledEngine;

impl Engine for InterpEngine {
    fn name(&self) -> &'static str {
        "interp"
    }

    fn run(&self, m: &Model, spec: &RunSpec) -> Result<RunStats, EngineError> {
        match spec.algo.as_str() {
            "lw" => Ok(interp::interp_lw(m, &spec.model_name, spec.n, spec.seed, !spec.db)?),
            "pmh" => Ok(interp::interp_pmh_eq1(m, &spec.model_name, spec.n, spec.seed, spec.burn_in)?),
            other => Err(EngineError::Unsupported { engine: "interp", algo: other.to_string() }),
        }
    }
}

impl CompiledEngine {
    /// Emit and build the program for `spec`, returning its executable.
    pub fn build(&self, m: &Model, spec: &RunSpec) -> Result<PathBuf, EngineError> {
        let opts = spec.options();
        let unit = codegen::emit(m, &analyze(m), &opts)?;
        let dir = codegen::target_dir().join("pkgs").join(&unit.package);
        Ok(codegen::build(&unit, &dir)?)
    }

    /// Run a built program and parse its stats.
    pub fn exec(&self, exe: &std::path::Path, spec: &RunSpec) -> Result<RunStats, EngineError> {
        let mut cmd = Command::new(exe);
        cmd.arg("-n").arg(spec.n.to_string()).arg("--seed").arg(spec.seed.to_string());
        cmd.arg("--burn-in").arg(spec.burn_in.to_string());
        if let Some(k) = spec.clear_memory_every {
            cmd.arg("--clear-memory-every").arg(k.to_string());
        }
        if spec.debug_oracle {
            cmd.arg("--debug-oracle");
        }
        if let Some(p) = &spec.record {
            cmd.arg("--record-proposals").arg(p);
        }
        let io = |e: std::io::Error| EngineError::Program(format!("{}: {e}", exe.display()));
        let mut child = cmd.stdout(Stdio::piped()).stderr(Stdio::piped()).spawn().map_err(io)?;
        if let Some(limit) = spec.timeout {
            let start = Instant::now();
            while child.try_wait().map_err(io)?.is_none() {
                if start.elapsed() > limit {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(EngineError::Timeout(limit.as_secs_f64()));
                }
                std::thread::sleep(Duration::from_millis(5));
            }
        }
        let out = child.wait_with_output().map_err(io)?;
        let stdout = String::from_utf8_lossy(&out.stdout);
        let stats: Option<RunStats> = serde_json::from_str(&stdout).ok();
        match stats {
            Some(s) if out.status.success() || !s.debug_violations.is_empty() => Ok(s),
            _ => Err(EngineError::Program(format!(
                "{} failed: {}",
                exe.display(),
                String::from_utf8_lossy(&out.stderr).trim()
            ))),
        }
    }
}

impl Engine for CompiledEngine {
    fn name(&self) -> &'static str {
        "compiled"
    }

    fn run(&self, m: &Model, spec: &RunSpec) -> Result<RunStats, EngineError> {
        let exe = self.build(m, spec)?;
        self.exec(&exe, spec)
    }
}

static ENGINES: [&dyn Engine; 2] = [&InterpEngine, &CompiledEngine];

pub fn engines() -> &'static [&'static dyn Engine] {
    &ENGINES
}

pub fn engine(name: &str) -> Result<&'static dyn Engine, EngineError> {
    ENGINES.iter().copied().find(|e| e.name() == name).ok_or_else(|| EngineError::Unknown(name.to_string()))
}
