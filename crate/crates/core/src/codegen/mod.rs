//! Emission of specialised inference programs and their build.
//!
//! Each algorithm is a [`Backend`] registered by name. The emitted program is
//! a standalone cargo package linking the runtime crate.

mod emit;

use std::path::{Path, PathBuf};
use std::process::Command;

use thiserror::Error;

use crate::analysis::{gibbs_ineligible, Analysis};
use crate::frontend::Model;

pub use emit::add_to_ch_listing;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Options {
    pub model_name: String,
    pub algo: String,
    pub db: bool,
    pub rc: bool,
    pub acu: bool,
    pub clear_memory_every: Option<u64>,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            model_name: "model".into(),
            algo: "pmh".into(),
            db: true,
            rc: true,
            acu: true,
            clear_memory_every: None,
        }
    }
}

impl Options {
    /// Cargo package name, unique per configuration.
    pub fn package_name(&self) -> String {
        let mut s = format!("blog-gen-{}-{}", self.model_name, self.algo);
        for (off, tag) in [(!self.db, "nodb"), (!self.rc, "norc"), (!self.acu, "noacu")] {
            if off {
                s.push('-');
                s.push_str(tag);
            }
        }
        if let Some(k) = self.clear_memory_every {
            s.push_str(&format!("-clear{k}"));
        }
        s.chars()
            .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum CodegenError {
    #[error("unknown algorithm `{0}` (expected one of: lw, pmh, gibbs)")]
    UnknownAlgo(String),
    #[error("cannot emit {algo} for this model: variable `{var}` {reason}")]
    Ineligible { algo: String, var: String, reason: String },
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("toolchain failed:\n{0}")]
    Toolchain(String),
}

pub trait Backend: Sync {
    fn name(&self) -> &'static str;
    /// Reject models the algorithm cannot run.
    fn check(&self, m: &Model, a: &Analysis) -> Result<(), CodegenError>;
}

struct Lw;
struct Pmh;
struct Gibbs;

impl Backend for Lw {
    fn name(&self) -> &'static str {
        "lw"
    }

    fn check(&self, _: &Model, _: &Analysis) -> Result<(), CodegenError> {
        Ok(())
    }
}

impl Backend for Pmh {
    fn name(&self) -> &'static str {
        "pmh"
    }

    fn check(&self, _: &Model, _: &Analysis) -> Result<(), CodegenError> {
        Ok(())
    }
}

impl Backend for Gibbs {
    fn name(&self) -> &'static str {
        "gibbs"
    }

    fn check(&self, m: &Model, a: &Analysis) -> Result<(), CodegenError> {
        match gibbs_ineligible(m, &a.conjugacy) {
            Some((var, reason)) => Err(CodegenError::Ineligible { algo: "gibbs".into(), var, reason }),
            None => Ok(()),
        }
    }
}

static BACKENDS: [&dyn Backend; 3] = [&Lw, &Pmh, &Gibbs];

pub fn backends() -> &'static [&'static dyn Backend] {
    &BACKENDS
}

pub fn backend(name: &str) -> Option<&'static dyn Backend> {
    BACKENDS.iter().copied().find(|b| b.name() == name)
}

/// Source files of one emitted program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenUnit {
    pub package: String,
    pub cargo_toml: String,
    pub main_rs: String,
}

/// Path of the runtime crate the emitted package depends on.
pub fn runtime_path() -> PathBuf {
    if let Ok(p) = std::env::var("BLOG_RUNTIME_PATH") {
        return PathBuf::from(p);
    }
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../runtime");
    p.canonicalize().unwrap_or(p)
}

fn workspace_root() -> PathBuf {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    p.canonicalize().unwrap_or(p)
}

pub fn emit(m: &Model, a: &Analysis, opts: &Options) -> Result<GenUnit, CodegenError> {
    let b = backend(&opts.algo).ok_or_else(|| CodegenError::UnknownAlgo(opts.algo.clone()))?;
    b.check(m, a)?;
    let main_rs = emit::Emitter::new(m, a, opts).program();
    let package = opts.package_name();
    let cargo_toml = format!(
        "[package]\nname = \"{package}\"\nversion = \"0.1.0\"\nedition = \"2021\"\npublish = false\n\n\
         [dependencies]\nblog-runtime = {{ path = {:?} }}\n\n\
         [workspace]\n\n\
         [profile.release]\nopt-level = 3\ndebug = false\n",
        runtime_path().display().to_string()
    );
    Ok(GenUnit { package, cargo_toml, main_rs })
}

impl GenUnit {
    /// Write the package into `dir`, creating it on demand.
    pub fn write(&self, dir: &Path) -> Result<(), CodegenError> {
        std::fs::create_dir_all(dir.join("src"))?;
        std::fs::write(dir.join("Cargo.toml"), &self.cargo_toml)?;
        std::fs::write(dir.join("src/main.rs"), &self.main_rs)?;
        let lock = workspace_root().join("Cargo.lock");
        if lock.exists() && !dir.join("Cargo.lock").exists() {
            std::fs::copy(lock, dir.join("Cargo.lock"))?;
        }
        Ok(())
    }
}

/// Shared target directory for emitted packages, so the runtime and its
/// dependencies compile once.
pub fn target_dir() -> PathBuf {
    match std::env::var("BLOG_TARGET_DIR") {
        Ok(p) => PathBuf::from(p),
        Err(_) => workspace_root().join("target/generated"),
    }
}

/// Write the package into `dir` and build it in release mode. Returns the
/// path of the executable.
pub fn build(unit: &GenUnit, dir: &Path) -> Result<PathBuf, CodegenError> {
    unit.write(dir)?;
    let target = target_dir();
    let out = Command::new(std::env::var("CARGO").unwrap_or_else(|_| "cargo".into()))
        .arg("build")
        .arg("--release")
        .arg("--quiet")
        .arg("--manifest-path")
        .arg(dir.join("Cargo.toml"))
        .env("CARGO_TARGET_DIR", &target)
        .env_remove("RUSTFLAGS")
        .output()?;
    if !out.status.success() {
        return Err(CodegenError::Toolchain(String::from_utf8_lossy(&out.stderr).into_owned()));
    }
    let exe = target.join("release").join(&unit.package);
    let bin_dir = dir.join("bin");
    std::fs::create_dir_all(&bin_dir)?;
    let dst = bin_dir.join(&unit.package);
    std::fs::copy(&exe, &dst)?;
    Ok(dst)
}
