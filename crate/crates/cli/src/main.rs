use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use blog_core::analysis::analyze;
use blog_core::bench;
use blog_core::codegen::{self, Options};
use blog_core::engine::{self, RunSpec};
use blog_core::interp;
use blog_core::frontend::{self, Model};

#[derive(Parser)]
#[command(name = "blogc", version, about = "Compiler and reference interpreter for a BLOG subset")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Emit and build a specialised inference program.
    Compile {
        model: PathBuf,
        #[arg(long, default_value = "pmh")]
        algo: String,
        #[arg(long)]
        no_db: bool,
        #[arg(long)]
        no_rc: bool,
        #[arg(long)]
        no_acu: bool,
        #[arg(long)]
        clear_memory_every: Option<u64>,
        /// Output directory for the generated package.
        #[arg(short = 'o', long)]
        out: PathBuf,
        /// Write the sources without invoking the toolchain.
        #[arg(long)]
        emit_only: bool,
        /// Print the analysis results as JSON and exit.
        #[arg(long)]
        dump_analysis: bool,
    },
    /// Run inference with the interpreter or a compiled program and print
    /// the stats JSON.
    Run {
        model: PathBuf,
        #[arg(long, default_value = "compiled")]
        engine: String,
        #[arg(long, default_value = "pmh")]
        algo: String,
        #[arg(short = 'n', long = "samples", default_value_t = 10_000)]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        burn_in: u64,
        #[arg(long)]
        no_db: bool,
        #[arg(long)]
        no_rc: bool,
        #[arg(long)]
        no_acu: bool,
        #[arg(long)]
        clear_memory_every: Option<u64>,
        #[arg(long)]
        debug_oracle: bool,
        /// Write the compiled chain's proposals, one JSON line each.
        #[arg(long)]
        record_proposals: Option<PathBuf>,
        /// Recompute a recorded proposal stream with the interpreter's
        /// full-world acceptance ratio instead of running a chain.
        #[arg(long, conflicts_with = "record_proposals")]
        replay_proposals: Option<PathBuf>,
        /// Relative tolerance for replayed log ratios.
        #[arg(long, default_value_t = 1e-9)]
        tolerance: f64,
    },
    /// Exact query posteriors by enumeration (finite discrete models).
    Enumerate { model: PathBuf },
    /// Run an ablation suite, print a table and write the JSON report.
    /// Exits nonzero if any cell with an acceptance bound fails it.
    Bench {
        #[arg(long, default_value = "default")]
        suite: String,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Cells in flight at once.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Write the bundled model corpus.
    Corpus {
        #[arg(short = 'o', long, default_value = "models")]
        out: PathBuf,
    },
}

fn load(path: &Path) -> Result<Model, String> {
    let src = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    frontend::load(&src).map_err(|e| format!("{}: {e}", path.display()))
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned())
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.cmd {
        Cmd::Compile { model, algo, no_db, no_rc, no_acu, clear_memory_every, out, emit_only, dump_analysis } => {
            let m = load(&model)?;
            let a = analyze(&m);
            if dump_analysis {
                println!("{}", serde_json::to_string_pretty(&a.to_json(&m)).expect("json"));
                return Ok(());
            }
            let opts = Options { model_name: stem(&model), algo, db: !no_db, rc: !no_rc, acu: !no_acu, clear_memory_every };
            let unit = codegen::emit(&m, &a, &opts).map_err(|e| e.to_string())?;
            if emit_only {
                unit.write(&out).map_err(|e| e.to_string())?;
                println!("{}", out.display());
            } else {
                let exe = codegen::build(&unit, &out).map_err(|e| e.to_string())?;
                println!("{}", exe.display());
            }
            Ok(())
        }
        Cmd::Run {
            model,
            engine,
            algo,
            n,
            seed,
            burn_in,
            no_db,
            no_rc,
            no_acu,
            clear_memory_every,
            debug_oracle,
            record_proposals,
            replay_proposals,
            tolerance,
        } => {
            let m = load(&model)?;
            if let Some(path) = replay_proposals {
                let f = std::fs::File::open(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                let rep = interp::replay(&m, std::io::BufReader::new(f), tolerance).map_err(|e| e.to_string())?;
                let j = serde_json::json!({
                    "steps": rep.steps,
                    "accepted": rep.accepted,
                    "max_rel_err": rep.max_rel_err,
                    "snapshots_checked": rep.snapshots_checked,
                    "violations": rep.violations,
                });
                println!("{}", serde_json::to_string_pretty(&j).expect("json"));
                return if rep.ok() { Ok(()) } else { Err(format!("{} replay violations", rep.violations.len())) };
            }
            let spec = RunSpec {
                model_name: stem(&model),
                algo,
                n,
                seed,
                burn_in,
                db: !no_db,
                rc: !no_rc,
                acu: !no_acu,
                clear_memory_every,
                debug_oracle,
                record: record_proposals,
                timeout: None,
            };
            let stats = engine::engine(&engine).and_then(|e| e.run(&m, &spec)).map_err(|e| e.to_string())?;
            println!("{}", stats.to_json());
            if !stats.debug_violations.is_empty() {
                return Err(format!("{} invariant violations", stats.debug_violations.len()));
            }
            Ok(())
        }
        Cmd::Enumerate { model } => {
            let m = load(&model)?;
            let qs = interp::enumerate_exact(&m).map_err(|e| e.to_string())?;
            let j: Vec<serde_json::Value> = qs
                .iter()
                .map(|q| {
                    let h: serde_json::Map<String, serde_json::Value> =
                        q.probs.iter().map(|(l, p)| (l.clone(), serde_json::json!(p))).collect();
                    serde_json::json!({ "query": q.query, "histogram": h })
                })
                .collect();
            println!("{}", serde_json::to_string_pretty(&j).expect("json"));
            Ok(())
        }
        Cmd::Bench { suite, out, csv, jobs } => {
            let suite = bench::suite(&suite).ok_or_else(|| format!("unknown suite `{suite}` (expected default or empty)"))?;
            let report = bench::run_suite(&suite, jobs);
            print!("{}", bench::render_table(&report));
            let write = |p: &Path, text: String| std::fs::write(p, text).map_err(|e| format!("{}: {e}", p.display()));
            if let Some(p) = out {
                write(&p, bench::render_json(&report) + "\n")?;
            }
            if let Some(p) = csv {
                write(&p, bench::render_csv(&report))?;
            }
            match report.failures() {
                0 => Ok(()),
                k => Err(format!("{k} cells missed their bound")),
            }
        }
        Cmd::Corpus { out } => blog_core::corpus::write_bundled(&out).map_err(|e| e.to_string()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
