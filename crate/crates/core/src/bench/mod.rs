//! Ablation benchmarks: each cell runs one configuration with an
//! optimisation on and a baseline with it off (or on the interpreter), over
//! the same seeds, and reports calls saved and median speedups.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use blog_runtime::stats::{QueryResult, RunStats};
use serde::{Deserialize, Serialize};

use crate::corpus;
use crate::engine::{CompiledEngine, Engine, EngineError, InterpEngine, RunSpec};
use crate::frontend::{load, Model};

pub const SCHEMA_VERSION: u32 = 1;

/// The optimisation a cell's baseline turns off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    Db,
    Rc,
    Acu,
    /// Baseline is the reference interpreter rather than a flag.
    Interp,
}

impl Ablation {
    pub fn baseline_name(self) -> &'static str {
        match self {
            Ablation::Db => "no-db",
            Ablation::Rc => "no-rc",
            Ablation::Acu => "static-dep",
            Ablation::Interp => "interp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    RngCalls,
    LikelihoodEvals,
    WallTime,
}

/// Acceptance bound on a cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Bound {
    /// Calls saved equals this fraction exactly.
    SavedExactly(f64),
    SavedAtLeast(f64),
    SpeedupAtLeast(f64),
    /// Wall-time overhead of the optimised build is at most this fraction.
    OverheadAtMost(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchSpec {
    pub model: String,
    pub algo: String,
    pub n: u64,
    pub seeds: Vec<u64>,
    pub ablation: Ablation,
    pub metric: Metric,
    /// Repetitions per seed for wall-time cells; the median is reported.
    pub reps: usize,
    pub bound: Option<Bound>,
    /// Per run, compiled programs only.
    pub timeout_s: Option<f64>,
}

impl BenchSpec {
    pub fn new(model: &str, algo: &str, n: u64, ablation: Ablation, metric: Metric) -> Self {
        BenchSpec {
            model: model.to_string(),
            algo: algo.to_string(),
            n,
            seeds: vec![1],
            ablation,
            metric,
            reps: if metric == Metric::WallTime { 5 } else { 1 },
            bound: None,
            timeout_s: Some(600.0),
        }
    }

    pub fn bound(mut self, b: Bound) -> Self {
        self.bound = Some(b);
        self
    }

    pub fn reps(mut self, n: usize) -> Self {
        self.reps = n;
        self
    }

    pub fn seeds(mut self, s: &[u64]) -> Self {
        self.seeds = s.to_vec();
        self
    }

    fn check(&self) -> Result<(), String> {
        if corpus::source(&self.model).is_none() {
            return Err(format!("`{}` is not a bundled model", self.model));
        }
        if self.n < 1000 {
            return Err(format!("N = {} is below the minimum of 1000", self.n));
        }
        if self.seeds.is_empty() || self.reps == 0 {
            return Err("a cell needs at least one seed and one repetition".into());
        }
        Ok(())
    }

    fn run_spec(&self, seed: u64, baseline: bool) -> RunSpec {
        let mut r = RunSpec::new(&self.model, &self.algo, self.n, seed);
        r.timeout = self.timeout_s.map(Duration::from_secs_f64);
        if baseline {
            match self.ablation {
                Ablation::Db => r.db = false,
                Ablation::Rc => r.rc = false,
                Ablation::Acu => r.acu = false,
                Ablation::Interp => {}
            }
        }
        r
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Suite {
    pub name: String,
    pub cells: Vec<BenchSpec>,
}

/// The cells behind the acceptance bounds on call savings and speedups, at
/// desk scale.
/// A single run's wall time varies by about 15% here, so a 5% overhead
/// bound needs many alternating repetitions to be resolved by the median.
pub const OVERHEAD_REPS: usize = 21;

pub fn default_suite() -> Suite {
    use Ablation::*;
    use Metric::*;
    let cells = vec![
        BenchSpec::new("burglary", "lw", 100_000, Db, RngCalls).bound(Bound::SavedExactly(0.0)),
        BenchSpec::new("hurricane", "lw", 100_000, Db, RngCalls).bound(Bound::SavedAtLeast(0.25)),
        BenchSpec::new("urnball_20_2", "lw", 100_000, Db, RngCalls).bound(Bound::SavedAtLeast(0.50)),
        BenchSpec::new("burglary", "pmh", 100_000, Acu, LikelihoodEvals).bound(Bound::SavedExactly(0.0)),
        BenchSpec::new("burglary", "pmh", 1_000_000, Acu, WallTime)
            .reps(OVERHEAD_REPS)
            .bound(Bound::OverheadAtMost(0.05)),
        BenchSpec::new("urnball_20_10", "pmh", 100_000, Acu, LikelihoodEvals).bound(Bound::SavedAtLeast(0.60)),
        BenchSpec::new("urnball_40_20", "pmh", 100_000, Acu, LikelihoodEvals).bound(Bound::SavedAtLeast(0.70)),
        BenchSpec::new("urnball_40_20", "pmh", 1_000_000, Rc, WallTime).bound(Bound::SpeedupAtLeast(1.3)),
        BenchSpec::new("gmm", "pmh", 100_000, Interp, WallTime).bound(Bound::SpeedupAtLeast(10.0)),
    ];
    Suite { name: "default".into(), cells }
}

pub fn suite(name: &str) -> Option<Suite> {
    match name {
        "default" => Some(default_suite()),
        "empty" => Some(Suite { name: "empty".into(), cells: Vec::new() }),
        _ => None,
    }
}

/// Totals over a cell's seeds for one side of the comparison.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct Measure {
    pub engine: String,
    pub flags: Vec<String>,
    /// Median over repetitions of the wall time summed over seeds.
    pub wall_time_s: f64,
    pub rng_calls: u64,
    pub likelihood_evals: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellResult {
    pub model: String,
    pub algo: String,
    pub n: u64,
    pub seeds: Vec<u64>,
    pub reps: usize,
    pub ablation: Ablation,
    pub metric: Metric,
    pub optimized: Option<Measure>,
    pub baseline: Option<Measure>,
    /// 1 - optimised / baseline, for the cell's call metric.
    pub calls_saved: Option<f64>,
    /// Baseline wall time over optimised wall time.
    pub speedup: Option<f64>,
    pub bound: Option<Bound>,
    pub passed: Option<bool>,
    /// Posterior of the optimised run on the first seed.
    pub posterior: Vec<QueryResult>,
    pub error: Option<String>,
}

impl CellResult {
    fn empty(s: &BenchSpec) -> Self {
        CellResult {
            model: s.model.clone(),
            algo: s.algo.clone(),
            n: s.n,
            seeds: s.seeds.clone(),
            reps: s.reps,
            ablation: s.ablation,
            metric: s.metric,
            optimized: None,
            baseline: None,
            calls_saved: None,
            speedup: None,
            bound: s.bound,
            passed: None,
            posterior: Vec::new(),
            error: None,
        }
    }

    /// Whether an acceptance-tagged cell failed, including by error.
    pub fn failed(&self) -> bool {
        self.bound.is_some() && self.passed != Some(true)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub suite: String,
    pub cells: Vec<CellResult>,
}

impl BenchReport {
    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.failed()).count()
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// One side of a comparison: a way to run a seed.
enum Runner {
    Compiled(std::path::PathBuf),
    Interp,
}

impl Runner {
    fn run(&self, m: &Model, spec: &RunSpec) -> Result<RunStats, EngineError> {
        match self {
            Runner::Compiled(exe) => CompiledEngine.exec(exe, spec),
            Runner::Interp => InterpEngine.run(m, spec),
        }
    }
}

fn runner(s: &BenchSpec, m: &Model, baseline: bool) -> Result<Runner, EngineError> {
    Ok(if baseline && s.ablation == Ablation::Interp {
        Runner::Interp
    } else {
        Runner::Compiled(CompiledEngine.build(m, &s.run_spec(s.seeds[0], baseline))?)
    })
}

struct Measured {
    opt: Measure,
    base: Measure,
    /// Of the optimised side's first seed.
    posterior: Vec<QueryResult>,
}

/// Both sides of a cell. Repetitions alternate between the two sides so
/// that drift in machine speed hits both equally.
fn measure(s: &BenchSpec, m: &Model) -> Result<Measured, (bool, EngineError)> {
    let sides = [runner(s, m, false).map_err(|e| (false, e))?, runner(s, m, true).map_err(|e| (true, e))?];
    let mut out = [Measure::default(), Measure::default()];
    let mut times = [Vec::with_capacity(s.reps), Vec::with_capacity(s.reps)];
    let mut posterior = Vec::new();
    for rep in 0..s.reps {
        for (side, r) in sides.iter().enumerate() {
            let baseline = side == 1;
            let mut total = 0.0;
            for (i, &seed) in s.seeds.iter().enumerate() {
                let st = r.run(m, &s.run_spec(seed, baseline)).map_err(|e| (baseline, e))?;
                total += st.wall_time_s;
                if rep == 0 {
                    out[side].rng_calls += st.rng_calls;
                    out[side].likelihood_evals += st.likelihood_evals;
                    if i == 0 {
                        out[side].engine = st.engine.clone();
                        out[side].flags = st.flags.clone();
                        if !baseline {
                            posterior = st.query_results;
                        }
                    }
                }
            }
            times[side].push(total);
        }
    }
    let [mut opt, mut base] = out;
    let [t_opt, t_base] = times;
    opt.wall_time_s = median(t_opt);
    base.wall_time_s = median(t_base);
    Ok(Measured { opt, base, posterior })
}

/// Run one cell. Errors are recorded in the result.
pub fn run_cell(s: &BenchSpec) -> CellResult {
    let mut r = CellResult::empty(s);
    if let Err(e) = s.check() {
        r.error = Some(e);
        return r;
    }
    let m = match load(&corpus::source(&s.model).expect("checked")) {
        Ok(m) => m,
        Err(e) => {
            r.error = Some(e.to_string());
            return r;
        }
    };
    let Measured { opt, base, posterior } = match measure(s, &m) {
        Ok(x) => x,
        Err((baseline, e)) => {
            r.error = Some(format!("{}: {e}", if baseline { "baseline" } else { "optimised" }));
            return r;
        }
    };
    r.posterior = posterior;
    r.optimized = Some(opt.clone());
    r.baseline = Some(base.clone());
    let calls = |x: &Measure| match s.metric {
        Metric::LikelihoodEvals => x.likelihood_evals,
        _ => x.rng_calls,
    };
    if calls(&base) > 0 {
        r.calls_saved = Some(1.0 - calls(&opt) as f64 / calls(&base) as f64);
    }
    if opt.wall_time_s > 0.0 {
        r.speedup = Some(base.wall_time_s / opt.wall_time_s);
    }
    r.passed = s.bound.map(|b| match b {
        Bound::SavedExactly(x) => calls(&opt) as f64 == (1.0 - x) * calls(&base) as f64,
        Bound::SavedAtLeast(x) => r.calls_saved.is_some_and(|c| c >= x),
        Bound::SpeedupAtLeast(x) => r.speedup.is_some_and(|v| v >= x),
        Bound::OverheadAtMost(x) => r.speedup.is_some_and(|v| 1.0 / v - 1.0 <= x),
    });
    r
}

/// Run every cell with at most `jobs` cells in flight. Results keep the
/// suite's order.
pub fn run_suite(suite: &Suite, jobs: usize) -> BenchReport {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<CellResult>>> = Mutex::new(vec![None; suite.cells.len()]);
    std::thread::scope(|sc| {
        for _ in 0..jobs.max(1).min(suite.cells.len().max(1)) {
            sc.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(cell) = suite.cells.get(i) else { break };
                let r = run_cell(cell);
                results.lock().expect("results lock")[i] = Some(r);
            });
        }
    });
    let cells = results.into_inner().expect("results lock").into_iter().map(|r| r.expect("every cell ran")).collect();
    BenchReport { schema_version: SCHEMA_VERSION, suite: suite.name.clone(), cells }
}

fn pct(x: Option<f64>) -> String {
    x.map_or("-".into(), |v| format!("{:.1}%", 100.0 * v))
}

fn ratio(x: Option<f64>) -> String {
    x.map_or("-".into(), |v| format!("{v:.2}x"))
}

fn bound_text(b: Option<Bound>) -> String {
    match b {
        None => "-".into(),
        Some(Bound::SavedExactly(x)) => format!("saved = {:.1}%", 100.0 * x),
        Some(Bound::SavedAtLeast(x)) => format!("saved >= {:.1}%", 100.0 * x),
        Some(Bound::SpeedupAtLeast(x)) => format!("speedup >= {x}x"),
        Some(Bound::OverheadAtMost(x)) => format!("overhead <= {:.1}%", 100.0 * x),
    }
}

fn status(c: &CellResult) -> &'static str {
    match (&c.error, c.passed) {
        (Some(_), _) => "error",
        (None, Some(true)) => "pass",
        (None, Some(false)) => "FAIL",
        (None, None) => "-",
    }
}

const COLUMNS: [&str; 13] = [
    "model", "algo", "n", "baseline", "metric", "opt_calls", "base_calls", "calls_saved", "opt_time_s",
    "base_time_s", "speedup", "bound", "status",
];

fn row(c: &CellResult) -> [String; 13] {
    let calls = |m: &Option<Measure>| {
        m.as_ref().map_or("-".into(), |m| {
            match c.metric {
                Metric::LikelihoodEvals => m.likelihood_evals,
                _ => m.rng_calls,
            }
            .to_string()
        })
    };
    let time = |m: &Option<Measure>| m.as_ref().map_or("-".into(), |m| format!("{:.3}", m.wall_time_s));
    [
        c.model.clone(),
        c.algo.clone(),
        c.n.to_string(),
        c.ablation.baseline_name().to_string(),
        serde_json::to_value(c.metric).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
        calls(&c.optimized),
        calls(&c.baseline),
        pct(c.calls_saved),
        time(&c.optimized),
        time(&c.baseline),
        ratio(c.speedup),
        bound_text(c.bound),
        status(c).to_string(),
    ]
}

/// Aligned text table, one row per cell, errors listed underneath.
pub fn render_table(r: &BenchReport) -> String {
    let rows: Vec<[String; 13]> = r.cells.iter().map(row).collect();
    let mut width: Vec<usize> = COLUMNS.iter().map(|c| c.len()).collect();
    for row in &rows {
        for (w, x) in width.iter_mut().zip(row) {
            *w = (*w).max(x.len());
        }
    }
    let line = |xs: &[String]| {
        let cells: Vec<String> = xs.iter().zip(&width).map(|(x, w)| format!("{x:<w$}")).collect();
        cells.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(&COLUMNS.map(String::from));
    for row in &rows {
        out += &line(row);
    }
    for c in &r.cells {
        if let Some(e) = &c.error {
            out += &format!("{} {} vs {}: {e}\n", c.model, c.algo, c.ablation.baseline_name());
        }
    }
    out
}

pub fn render_json(r: &BenchReport) -> String {
    serde_json::to_string_pretty(r).expect("report serialises")
}

pub fn render_csv(r: &BenchReport) -> String {
    let esc = |x: &str| {
        if x.contains([',', '"', '\n']) {
            format!("\"{}\"", x.replace('"', "\"\""))
        } else {
            x.to_string()
        }
    };
    let mut out = COLUMNS.join(",") + "\n";
    for c in &r.cells {
        out += &row(c).iter().map(|x| esc(x)).collect::<Vec<_>>().join(",");
        out += "\n";
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_suite_gives_an_empty_report() {
        let r = run_suite(&suite("empty").unwrap(), 4);
        assert!(r.cells.is_empty());
        assert_eq!(r.failures(), 0);
        assert_eq!(render_csv(&r).lines().count(), 1);
    }

    #[test]
    fn bad_cells_are_recorded_not_fatal() {
        let s = Suite {
            name: "bad".into(),
            cells: vec![
                BenchSpec::new("nope", "lw", 100_000, Ablation::Db, Metric::RngCalls),
                BenchSpec::new("burglary", "lw", 10, Ablation::Db, Metric::RngCalls).bound(Bound::SavedExactly(0.0)),
            ],
        };
        let r = run_suite(&s, 2);
        assert_eq!(r.cells.len(), 2);
        assert!(r.cells[0].error.as_deref().unwrap().contains("not a bundled model"));
        assert!(r.cells[1].error.as_deref().unwrap().contains("below the minimum"));
        assert_eq!(r.failures(), 1);
        let table = render_table(&r);
        assert_eq!(table.lines().filter(|l| l.trim_end().ends_with("error")).count(), 2);
        assert!(table.contains("nope lw vs no-db: `nope` is not a bundled model"));
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn report_json_round_trips() {
        let mut c = CellResult::empty(&BenchSpec::new("burglary", "lw", 1000, Ablation::Db, Metric::RngCalls));
        c.bound = Some(Bound::SavedAtLeast(0.5));
        c.calls_saved = Some(0.625);
        let r = BenchReport { schema_version: SCHEMA_VERSION, suite: "x".into(), cells: vec![c] };
        let back: BenchReport = serde_json::from_str(&render_json(&r)).unwrap();
        assert_eq!(back.schema_version, SCHEMA_VERSION);
        assert_eq!(back.cells[0].calls_saved, Some(0.625));
        assert_eq!(back.cells[0].bound, Some(Bound::SavedAtLeast(0.5)));
        assert!(render_csv(&r).contains("62.5%"));
    }
}
