use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::BufWriter;
use std::time::Instant;

use super::{
    affected, finish_stats, has_tracked, init_world, instantiated, new_accumulators, process_removals,
    pseudo_nodes_of, reachable_tracked, rebuild_slice, snapshot, state_hash, Driver, DriverError, RunOptions,
};
use crate::model::{CompiledModel, TemplateKind};
use crate::record::{Record, RecordWriter, StepRecord};
use crate::rt::{RefList, Rt, RC};
use crate::stats::RunStats;
use crate::value::{Value, VarId};

pub struct ParentalMh;

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub var: VarId,
    pub proposed: Value,
    pub new_vars: Vec<(VarId, Value)>,
    pub u: f64,
    pub log_ratio: f64,
    pub accepted: bool,
}

fn rc_refs(m: &mut dyn CompiledModel, rt: &mut Rt, u: VarId, proposal: bool) -> Vec<VarId> {
    let mut r = RefList::default();
    m.register(rt, u, proposal, &mut r);
    r.items().iter().filter(|&&(_, f)| f & RC != 0).map(|&(v, _)| v).collect()
}

/// Size of the proposed world under reference counting, found by replaying
/// the count changes the accept step would make, removal cascade included.
fn proposed_size_rc(m: &mut dyn CompiledModel, rt: &mut Rt, aff: &[VarId], old: &[Vec<VarId>]) -> usize {
    let mut delta: HashMap<VarId, i64> = HashMap::new();
    let mut new_refs: HashMap<VarId, Vec<VarId>> = HashMap::new();
    let mut stack = Vec::new();
    for (&u, old_refs) in aff.iter().zip(old) {
        for &p in old_refs {
            *delta.entry(p).or_default() -= 1;
            stack.push(p);
        }
        let refs = rc_refs(m, rt, u, true);
        for &p in &refs {
            *delta.entry(p).or_default() += 1;
        }
        new_refs.insert(u, refs);
    }
    let mut is_new: HashSet<VarId> = HashSet::new();
    let mut removed: HashSet<VarId> = HashSet::new();
    let mut done = 0;
    loop {
        while done < rt.world.proposed_vars.len() {
            let y = rt.world.proposed_vars[done];
            done += 1;
            is_new.insert(y);
            let refs = rc_refs(m, rt, y, true);
            for &p in &refs {
                *delta.entry(p).or_default() += 1;
            }
            new_refs.insert(y, refs);
            stack.push(y);
        }
        let Some(v) = stack.pop() else { break };
        if removed.contains(&v) || !m.template(v).tracked {
            continue;
        }
        let fresh = is_new.contains(&v);
        if !fresh && !m.is_instantiated(rt, v) {
            continue;
        }
        let base = if fresh { 0 } else { rt.states.cnt(v) as i64 };
        if base + delta.get(&v).copied().unwrap_or(0) > 0 {
            continue;
        }
        removed.insert(v);
        let refs = match new_refs.get(&v) {
            Some(r) => r.clone(),
            None => rc_refs(m, rt, v, true),
        };
        for p in refs {
            *delta.entry(p).or_default() -= 1;
            stack.push(p);
        }
    }
    let mut size = rt.world.world_size();
    for &y in &rt.world.proposed_vars {
        if m.is_selectable(y) && !removed.contains(&y) {
            size += 1;
        }
    }
    for v in removed {
        if !is_new.contains(&v) && m.is_selectable(v) {
            size -= 1;
        }
    }
    size
}

/// Size of the proposed world without reference counting: a full traversal
/// of the proposed world from evidence, queries and untracked variables.
fn proposed_size_scan(m: &mut dyn CompiledModel, rt: &mut Rt) -> usize {
    let vars = instantiated(m, rt);
    let mut roots = pseudo_nodes_of(m);
    roots.extend(vars.iter().copied().filter(|&v| !m.template(v).tracked));
    let mut size = rt.world.active_vars.iter().filter(|&&v| !m.template(v).tracked).count();
    let fresh: Vec<VarId> = rt.world.proposed_vars.clone();
    for &y in &fresh {
        if !m.template(y).tracked {
            roots.push(y);
            if m.is_selectable(y) {
                size += 1;
            }
        }
    }
    let reach = reachable_tracked(m, rt, true, roots);
    size + reach.iter().filter(|&&v| m.is_selectable(v)).count()
}

fn child_loglik(m: &mut dyn CompiledModel, rt: &mut Rt, children: &[VarId], proposal: bool) -> f64 {
    let mut total = 0.0;
    for &c in children {
        if m.template(c).kind == TemplateKind::Query {
            // no factor, but the proposed world must support the query
            if proposal {
                m.loglik(rt, c, true);
            }
            continue;
        }
        let l = m.loglik(rt, c, proposal);
        rt.counters.likelihood_evals += 1;
        if l.is_nan() {
            panic!("likelihood of {} is NaN", m.var_name(c));
        }
        total += l;
    }
    total
}

/// One parental Metropolis-Hastings move: pick a variable uniformly from the
/// world, resample it from its prior, instantiate whatever the proposed world
/// needs, and accept with the ratio of world sizes times the children's
/// likelihood ratio.
pub fn pmh_step(m: &mut dyn CompiledModel, rt: &mut Rt) -> Option<StepOutcome> {
    let n = rt.world.active_vars.len();
    if n == 0 {
        return None;
    }
    let x = rt.world.active_vars[rt.rng.index(n)];
    rt.bump_proposal();
    let mut children = Vec::new();
    if rt.flags.acu {
        children = rt.children(x);
    } else {
        m.static_children(rt, x, &mut children);
    }
    let log_old = child_loglik(m, rt, &children, false);
    if !(log_old > f64::NEG_INFINITY) {
        panic!("current world has zero likelihood at a child of {}", m.var_name(x));
    }
    let aff = affected(m, rt, x);
    let old_refs: Vec<Vec<VarId>> =
        if rt.flags.rc { aff.iter().map(|&u| rc_refs(m, rt, u, false)).collect() } else { Vec::new() };

    let d = m.dist(rt, x, false);
    let v_new = rt.sample(&d, x);
    m.begin_proposal(rt, x, v_new);
    let log_new = child_loglik(m, rt, &children, true);
    let size_old = rt.world.world_size();
    let size_new = if rt.flags.rc {
        proposed_size_rc(m, rt, &aff, &old_refs)
    } else if has_tracked(m) {
        proposed_size_scan(m, rt)
    } else {
        size_old + rt.world.proposed_vars.iter().filter(|&&y| m.is_selectable(y)).count()
    };
    m.end_proposal(rt, x);

    let log_ratio = (size_old as f64).ln() - (size_new as f64).ln() + log_new - log_old;
    let new_vars = rt.world.proposed_vars.iter().map(|&y| (y, m.cached(y))).collect();
    let u = rt.rng.uniform();
    let accepted = u.ln() < log_ratio;
    if accepted {
        m.accept_value(rt, x, v_new);
        if rt.flags.rc {
            process_removals(m, rt);
        } else if has_tracked(m) {
            rebuild_slice(m, rt);
        }
        rt.counters.accepted += 1;
    } else {
        rt.counters.rejected += 1;
    }
    Some(StepOutcome { var: x, proposed: v_new, new_vars, u, log_ratio, accepted })
}

pub(crate) fn open_record(opts: &RunOptions) -> Result<Option<RecordWriter<BufWriter<File>>>, DriverError> {
    Ok(match &opts.record {
        Some(p) => Some(RecordWriter::new(BufWriter::new(File::create(p)?))),
        None => None,
    })
}

impl Driver for ParentalMh {
    fn name(&self) -> &'static str {
        "pmh"
    }

    fn run(&self, m: &mut dyn CompiledModel, rt: &mut Rt, opts: &RunOptions) -> Result<RunStats, DriverError> {
        let start = Instant::now();
        init_world(m, rt)?;
        let mut rec = open_record(opts)?;
        if let Some(w) = rec.as_mut() {
            w.write(&Record::Init { model: m.model_name().to_string(), snapshot: snapshot(m, rt) })?;
        }
        let mut violations = Vec::new();
        if opts.debug_oracle {
            violations.extend(super::check_invariants(m, rt).into_iter().map(|e| format!("init: {e}")));
        }
        let mut accs = new_accumulators(m, true);
        let mut size_sum = 0.0;
        for step in 1..=opts.burn_in + opts.n {
            let before = opts.debug_oracle.then(|| state_hash(m, rt));
            let out = pmh_step(m, rt);
            if let Some(o) = &out {
                if opts.debug_oracle {
                    check_step(m, rt, o, before.unwrap(), step, &mut violations);
                }
                if let Some(w) = rec.as_mut() {
                    w.write(&Record::Step(StepRecord {
                        step,
                        var: m.var_name(o.var),
                        proposed: o.proposed.to_json(),
                        new_vars: o.new_vars.iter().map(|&(y, v)| (m.var_name(y), v.to_json())).collect(),
                        u: o.u,
                        log_ratio: o.log_ratio,
                        accepted: o.accepted,
                        snapshot: (opts.debug_oracle && o.accepted).then(|| snapshot(m, rt)),
                    }))?;
                }
            }
            if step > opts.burn_in {
                for (k, acc) in accs.iter_mut().enumerate() {
                    let v = m.query(rt, k);
                    acc.add(v, 0.0);
                }
                size_sum += rt.world.world_size() as f64;
            }
            if let Some(every) = opts.clear_memory_every {
                if every > 0 && step % every == 0 {
                    m.clear_memory(rt);
                }
            }
        }
        if let Some(w) = rec.as_mut() {
            w.flush()?;
        }
        let mut stats = finish_stats(m, rt, self.name(), opts, &accs, start.elapsed().as_secs_f64());
        if opts.n > 0 {
            stats.world_size_mean = Some(size_sum / opts.n as f64);
        }
        stats.debug_violations = violations;
        Ok(stats)
    }
}

/// Debug-mode checks after one step: a rejected move leaves the state
/// bit-identical, memoised getters are idempotent, and the stored children
/// sets, counts and active set match a recomputation.
pub(crate) fn check_step(
    m: &mut dyn CompiledModel,
    rt: &mut Rt,
    o: &StepOutcome,
    before: u64,
    step: u64,
    violations: &mut Vec<String>,
) {
    if !o.accepted && state_hash(m, rt) != before {
        violations.push(format!("step {step}: rejected move on {} changed the state", m.var_name(o.var)));
    }
    if m.is_instantiated(rt, o.var) {
        let calls = rt.rng.calls();
        let a = m.get(rt, o.var);
        let b = m.get(rt, o.var);
        if a.bits() != b.bits() || rt.rng.calls() != calls {
            violations.push(format!("step {step}: getter for {} is not idempotent", m.var_name(o.var)));
        }
    }
    for e in super::check_invariants(m, rt) {
        violations.push(format!("step {step}: {e}"));
    }
}
