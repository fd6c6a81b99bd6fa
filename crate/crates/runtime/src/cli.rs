//! Command line of every generated inference program.

use std::path::PathBuf;

use clap::Parser;

use crate::driver::{lookup, RunOptions};
use crate::model::CompiledModel;
use crate::rt::{Flags, Rt};

#[derive(Debug, Parser)]
#[command(about = "Compiled inference program")]
pub struct ProgramArgs {
    /// Number of samples (LW) or steps after burn-in (MCMC).
    #[arg(short = 'n', long = "samples", default_value_t = 10_000)]
    pub n: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the stats JSON here instead of stdout.
    #[arg(long)]
    pub stats: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub burn_in: u64,
    /// Check bookkeeping invariants after every step.
    #[arg(long)]
    pub debug_oracle: bool,
    /// Write one JSON line per MH proposal.
    #[arg(long)]
    pub record_proposals: Option<PathBuf>,
    /// Drop memoised storage every K samples.
    #[arg(long)]
    pub clear_memory_every: Option<u64>,
}

/// Entry point called by generated `main` functions.
pub fn main_with(
    mut model: Box<dyn CompiledModel>,
    algo: &str,
    flags: Flags,
    names: &'static [&'static str],
    clear_memory_every: Option<u64>,
) {
    let mut args = ProgramArgs::parse();
    if args.clear_memory_every.is_none() {
        args.clear_memory_every = clear_memory_every;
    }
    let code = match run(model.as_mut(), algo, flags, names, &args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    };
    std::process::exit(code);
}

pub fn run(
    model: &mut dyn CompiledModel,
    algo: &str,
    flags: Flags,
    names: &'static [&'static str],
    args: &ProgramArgs,
) -> Result<(), String> {
    let driver = lookup(algo).ok_or_else(|| format!("unknown algorithm {algo}"))?;
    let mut rt = Rt::new(args.seed, flags, names);
    let opts = RunOptions {
        n: args.n,
        seed: args.seed,
        burn_in: args.burn_in,
        debug_oracle: args.debug_oracle,
        record: args.record_proposals.clone(),
        clear_memory_every: args.clear_memory_every,
    };
    let stats = driver.run(model, &mut rt, &opts).map_err(|e| e.to_string())?;
    let json = stats.to_json();
    match &args.stats {
        Some(p) => std::fs::write(p, json + "\n").map_err(|e| format!("{}: {e}", p.display()))?,
        None => println!("{json}"),
    }
    if !stats.debug_violations.is_empty() {
        return Err(format!("{} invariant violations, first: {}", stats.debug_violations.len(), stats.debug_violations[0]));
    }
    Ok(())
}
