//! Parental Metropolis-Hastings with the acceptance ratio computed from
//! full-world joint densities, and replay of a recorded proposal stream.

use std::collections::{BTreeSet, HashMap};
use std::io::BufRead;
use std::time::Instant;

use blog_runtime::record::{read_records, Record, Snapshot};
use blog_runtime::rng::CountingRng;
use blog_runtime::stats::RunStats;
use blog_runtime::Value;

use super::{base_stats, lit_value, Ctx, Interp, InterpError, Mode, Var, World};
use crate::frontend::typed::TK;
use crate::frontend::Model;

/// Result of one proposal evaluated on explicit worlds.
#[derive(Debug, Clone)]
pub struct Eq1Step {
    pub world: World,
    /// Unclipped log acceptance ratio.
    pub log_alpha: f64,
    /// Variables the proposed world gained, removed ones excluded.
    pub new_vars: Vec<Var>,
    /// Every variable instantiated while building the proposed world.
    pub demanded: Vec<Var>,
    pub removed: Vec<Var>,
    pub factors: u64,
}

impl Interp<'_> {
    fn size(&self, w: &World) -> usize {
        self.selectable(w).count()
    }

    /// log α = log Pr[w'] - log Pr[w] + log g(w' -> w) - log g(w -> w'),
    /// where g picks a variable uniformly, redraws it from its prior and
    /// draws every variable the target world lacks from its prior.
    pub fn eq1_step(&self, w: &World, x: Var, v_new: Value, mode: Mode) -> Result<Eq1Step, InterpError> {
        let err = |s| self.stop_error(s);
        let mut w1 = w.clone();
        let v_old = w1.insert(x, v_new).ok_or_else(|| InterpError::Missing(self.var_name(&x)))?;
        let demanded = self.close(&mut w1, mode).map_err(err)?;
        let keep = self.reachable(&w1, true)?;
        let removed_all: Vec<Var> = w1.keys().copied().filter(|v| !keep.contains(v)).collect();
        let mut w_old_ctx = w.clone();
        let mut q_rev = 0.0;
        let mut removed = Vec::new();
        {
            let mut ctx = Ctx::new(&mut w_old_ctx, Mode::Fixed);
            for v in &removed_all {
                if let Some(&val) = w.get(v) {
                    q_rev += self.dist_of(*v, &mut ctx).map_err(err)?.log_pdf(val);
                    removed.push(*v);
                }
            }
            q_rev += self.dist_of(x, &mut ctx).map_err(err)?.log_pdf(v_old);
        }
        let mut q_fwd = 0.0;
        let mut w_new = w1;
        for v in &removed_all {
            w_new.remove(v);
        }
        let new_vars: Vec<Var> = demanded.iter().copied().filter(|v| w_new.contains_key(v)).collect();
        {
            let mut scratch = w_new.clone();
            let mut ctx = Ctx::new(&mut scratch, Mode::Fixed);
            q_fwd += self.dist_of(x, &mut ctx).map_err(err)?.log_pdf(v_new);
            for v in &new_vars {
                q_fwd += self.dist_of(*v, &mut ctx).map_err(err)?.log_pdf(w_new[v]);
            }
        }
        let (lp_old, n_old) = self.log_joint(w)?;
        let (lp_new, n_new) = self.log_joint(&w_new)?;
        let log_alpha = if lp_new == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            let (s_old, s_new) = (self.size(w) as f64, self.size(&w_new) as f64);
            (lp_new - lp_old) + (q_rev - s_new.ln()) - (q_fwd - s_old.ln())
        };
        Ok(Eq1Step { world: w_new, log_alpha, new_vars, demanded, removed, factors: n_old + n_new })
    }

    /// Initial world by rejection from the prior, except that an observed
    /// variable reached fresh is set to its observed value.
    pub fn init_world(&self, rng: &mut CountingRng) -> Result<World, InterpError> {
        const ATTEMPTS: u32 = 100_000;
        for _ in 0..ATTEMPTS {
            let mut w = World::new();
            {
                let mut ctx = Ctx::new(&mut w, Mode::Sample(rng));
                for &i in &self.obs {
                    let e = &self.m.evidence[i];
                    let TK::App(f, args) = &e.lhs.kind else { continue };
                    if !self.m.fns[*f as usize].is_random() {
                        continue;
                    }
                    let mut ix = [0i64; 2];
                    for (k, a) in args.iter().enumerate() {
                        ix[k] = self.eval(a, &[], &mut ctx).map_err(|s| self.stop_error(s))?.as_int();
                    }
                    let v = Var { f: *f, args: ix };
                    ctx.world.entry(v).or_insert(lit_value(e.value));
                }
            }
            self.close(&mut w, Mode::Sample(rng)).map_err(|s| self.stop_error(s))?;
            if self.log_joint(&w)?.0 > f64::NEG_INFINITY {
                return Ok(w);
            }
        }
        Err(InterpError::Unsatisfiable(ATTEMPTS))
    }

    /// One parental MH move from `w`: the evaluated proposal and whether it
    /// is accepted. `None` when nothing is selectable.
    pub fn mh_step(&self, w: &World, rng: &mut CountingRng) -> Result<Option<(Eq1Step, bool)>, InterpError> {
        let sel: Vec<Var> = self.selectable(w).copied().collect();
        if sel.is_empty() {
            return Ok(None);
        }
        let x = sel[rng.index(sel.len())];
        let d = {
            let mut scratch = w.clone();
            let mut ctx = Ctx::new(&mut scratch, Mode::Fixed);
            self.dist_of(x, &mut ctx).map_err(|s| self.stop_error(s))?
        };
        let v = d.sample(rng).map_err(|e| InterpError::Eval(format!("{}: {e}", self.var_name(&x))))?;
        let s = self.eq1_step(w, x, v, Mode::Sample(rng))?;
        let acc = rng.uniform().ln() < s.log_alpha;
        Ok(Some((s, acc)))
    }

    fn query_values(&self, w: &World) -> Result<Vec<Value>, InterpError> {
        let mut w = w.clone();
        let mut ctx = Ctx::new(&mut w, Mode::Fixed);
        self.m.queries.iter().map(|q| self.eval(&q.expr, &[], &mut ctx).map_err(|s| self.stop_error(s))).collect()
    }
}

/// PMH whose every step recomputes the full joint of both worlds, the
/// baseline that tracks no dependencies.
pub fn interp_pmh_eq1(m: &Model, name: &str, n: u64, seed: u64, burn_in: u64) -> Result<RunStats, InterpError> {
    let start = Instant::now();
    let it = Interp::new(m);
    let mut rng = CountingRng::new(seed, 0);
    let mut w = it.init_world(&mut rng)?;
    let mut accs = it.accumulators(true);
    let (mut accepted, mut moves, mut evals) = (0u64, 0u64, 0u64);
    let mut size_sum = 0.0;
    for step in 1..=burn_in + n {
        if let Some((s, acc)) = it.mh_step(&w, &mut rng)? {
            evals += s.factors;
            moves += 1;
            if acc {
                w = s.world;
                accepted += 1;
            }
        }
        if step > burn_in {
            for (acc, q) in accs.iter_mut().zip(it.query_values(&w)?) {
                acc.add(q, 0.0);
            }
            size_sum += it.size(&w) as f64;
        }
    }
    let mut stats = base_stats(name, "pmh", n, seed);
    stats.wall_time_s = start.elapsed().as_secs_f64();
    stats.rng_calls = rng.calls();
    stats.likelihood_evals = evals;
    stats.accept_rate = (moves > 0).then(|| accepted as f64 / moves as f64);
    stats.query_results = it.query_stats(&accs);
    if n > 0 {
        stats.world_size_mean = Some(size_sum / n as f64);
    }
    Ok(stats)
}

/// Outcome of replaying a compiled chain's proposal stream.
#[derive(Debug, Clone, Default)]
pub struct ReplayReport {
    pub steps: u64,
    pub accepted: u64,
    /// Largest disagreement between the recorded and recomputed log ratio,
    /// relative to max(1, |log α|).
    pub max_rel_err: f64,
    pub snapshots_checked: u64,
    pub violations: Vec<String>,
}

impl ReplayReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Relative agreement of two log ratios; both minus infinity agree.
pub fn log_ratio_err(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    if !a.is_finite() || !b.is_finite() {
        return f64::INFINITY;
    }
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

fn load_snapshot(it: &Interp, s: &Snapshot) -> Result<World, InterpError> {
    let mut w = World::new();
    for sv in &s.vars {
        let v = it.parse_var(&sv.name).ok_or_else(|| InterpError::Record(format!("unknown variable {}", sv.name)))?;
        let x = it
            .json_value(&v, &sv.value)
            .ok_or_else(|| InterpError::Record(format!("bad value for {}: {}", sv.name, sv.value)))?;
        w.insert(v, x);
    }
    Ok(w)
}

fn compare_worlds(it: &Interp, ours: &World, theirs: &World) -> Option<String> {
    let a: BTreeSet<&Var> = ours.keys().collect();
    let b: BTreeSet<&Var> = theirs.keys().collect();
    if a != b {
        let extra: Vec<String> = a.difference(&b).map(|v| it.var_name(v)).collect();
        let missing: Vec<String> = b.difference(&a).map(|v| it.var_name(v)).collect();
        return Some(format!("world differs: only here {extra:?}, only recorded {missing:?}"));
    }
    for (v, x) in ours {
        if x.bits() != theirs[v].bits() {
            return Some(format!("{} is {} here, {} recorded", it.var_name(v), x, theirs[v]));
        }
    }
    None
}

/// Recompute every recorded proposal with Eq. 1 on explicit worlds and
/// compare with the recorded log ratio within `tol` (relative).
pub fn replay<R: BufRead>(m: &Model, input: R, tol: f64) -> Result<ReplayReport, InterpError> {
    const MAX_VIOLATIONS: usize = 20;
    let it = Interp::new(m);
    let records = read_records(input).map_err(InterpError::Record)?;
    let mut rep = ReplayReport::default();
    let mut w = match records.first() {
        Some(Record::Init { snapshot, .. }) => {
            let w = load_snapshot(&it, snapshot)?;
            rep.snapshots_checked += 1;
            for msg in it.check_structure(&w, snapshot)? {
                rep.violations.push(format!("init: {msg}"));
            }
            w
        }
        _ => return Err(InterpError::Record("stream does not start with an init record".into())),
    };
    {
        let mut check = w.clone();
        if let Err(s) = it.close(&mut check, Mode::Fixed) {
            rep.violations.push(format!("init: world is not self-supporting: {}", it.stop_error(s)));
        }
    }
    for r in &records[1..] {
        let Record::Step(s) = r else {
            return Err(InterpError::Record("init record in the middle of the stream".into()));
        };
        let note = |msg: String, rep: &mut ReplayReport| {
            if rep.violations.len() < MAX_VIOLATIONS {
                rep.violations.push(format!("step {}: {msg}", s.step));
            }
        };
        rep.steps += 1;
        let x = it.parse_var(&s.var).ok_or_else(|| InterpError::Record(format!("unknown variable {}", s.var)))?;
        if !w.contains_key(&x) || it.is_pinned(&x) {
            note(format!("{} is not selectable here", s.var), &mut rep);
            continue;
        }
        let v = it.json_value(&x, &s.proposed).ok_or_else(|| InterpError::Record(format!("bad value {}", s.proposed)))?;
        let mut fresh: HashMap<Var, Value> = HashMap::new();
        for (name, j) in &s.new_vars {
            let y = it.parse_var(name).ok_or_else(|| InterpError::Record(format!("unknown variable {name}")))?;
            let val = it.json_value(&y, j).ok_or_else(|| InterpError::Record(format!("bad value {j}")))?;
            fresh.insert(y, val);
        }
        let out = match it.eq1_step(&w, x, v, Mode::Replay(&fresh)) {
            Ok(o) => o,
            Err(e) => {
                note(e.to_string(), &mut rep);
                break;
            }
        };
        let demanded: BTreeSet<Var> = out.demanded.iter().copied().collect();
        let recorded: BTreeSet<Var> = fresh.keys().copied().collect();
        if demanded != recorded {
            let names = |s: &BTreeSet<Var>| s.iter().map(|v| it.var_name(v)).collect::<Vec<_>>();
            note(format!("new variables {:?} here, {:?} recorded", names(&demanded), names(&recorded)), &mut rep);
        }
        let e = log_ratio_err(out.log_alpha, s.log_ratio);
        if e > tol {
            note(format!("log ratio {} here, {} recorded (proposal {} = {})", out.log_alpha, s.log_ratio, s.var, v), &mut rep);
        }
        if e.is_finite() {
            rep.max_rel_err = rep.max_rel_err.max(e);
        }
        if s.accepted {
            rep.accepted += 1;
            w = out.world;
            if let Some(snap) = &s.snapshot {
                rep.snapshots_checked += 1;
                let theirs = load_snapshot(&it, snap)?;
                if let Some(msg) = compare_worlds(&it, &w, &theirs) {
                    note(msg, &mut rep);
                }
                if snap.world_size != it.size(&w) {
                    note(format!("world size {} here, {} recorded", it.size(&w), snap.world_size), &mut rep);
                }
                for msg in it.check_structure(&w, snap)? {
                    note(msg, &mut rep);
                }
            }
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::frontend::load;
    use crate::interp::enumerate_exact;

    #[test]
    fn identical_value_has_ratio_one() {
        let m = load(&corpus::urnball(20, 2)).unwrap();
        let it = Interp::new(&m);
        let mut rng = CountingRng::new(2, 0);
        let w = it.init_world(&mut rng).unwrap();
        for (&x, &v) in w.iter().filter(|(x, _)| !it.is_pinned(x)) {
            let s = it.eq1_step(&w, x, v, Mode::Sample(&mut rng)).unwrap();
            assert!(s.log_alpha.abs() < 1e-12, "{}: {}", it.var_name(&x), s.log_alpha);
            assert!(s.new_vars.is_empty() && s.removed.is_empty());
        }
    }

    #[test]
    fn fair_coin_root_always_accepts() {
        let m = load("random Boolean a ~ Bernoulli(0.5); query a;").unwrap();
        let it = Interp::new(&m);
        let mut rng = CountingRng::new(2, 0);
        let w = it.init_world(&mut rng).unwrap();
        let x = *w.keys().next().unwrap();
        let flipped = Value::Bool(!w[&x].as_bool());
        assert_eq!(it.eq1_step(&w, x, flipped, Mode::Fixed).unwrap().log_alpha, 0.0);
    }

    #[test]
    fn pmh_matches_enumeration_on_urnball() {
        let m = load(&corpus::urnball(20, 2)).unwrap();
        let exact = enumerate_exact(&m).unwrap()[0].probability("Blue");
        let s = interp_pmh_eq1(&m, "urnball", 100_000, 3, 1000).unwrap();
        let p = s.query_results[0].probability("Blue").unwrap();
        assert!((p - exact).abs() < 0.03, "{p} vs {exact}");
    }

    #[test]
    fn shrinking_the_urn_changes_the_world_size_term() {
        let m = load(&corpus::urnball(20, 2)).unwrap();
        let it = Interp::new(&m);
        let mut rng = CountingRng::new(5, 0);
        let w = it.init_world(&mut rng).unwrap();
        let nb = it.parse_var("#Ball").unwrap();
        let cur = w[&nb].as_int();
        let max_ball = w.iter().filter(|(v, _)| it.var_name(v).starts_with("drawn")).map(|(_, b)| b.as_int()).max().unwrap();
        let target = Value::Int(20.min(cur + 4));
        let s = it.eq1_step(&w, nb, target, Mode::Fixed).unwrap();
        // growing the urn keeps every draw valid; only UniformChoice densities change
        let draws = 3.0;
        let expect = draws * ((cur as f64).ln() - (target.as_int() as f64).ln());
        assert!(max_ball < cur);
        assert!((s.log_alpha - expect).abs() < 1e-9, "{} vs {expect}", s.log_alpha);
    }
}
