use std::time::Instant;

use super::{
    affected, finish_stats, has_tracked, init_world, new_accumulators, process_removals, rebuild_slice, Driver,
    DriverError, RunOptions,
};
use crate::conjugate::posterior;
use crate::model::{CompiledModel, TemplateKind};
use crate::rt::{RefList, Rt};
use crate::stats::RunStats;
use crate::value::{Value, VarId};

pub struct Gibbs;

fn children_of(m: &mut dyn CompiledModel, rt: &mut Rt, x: VarId) -> Vec<VarId> {
    let mut out = Vec::new();
    if rt.flags.acu {
        out = rt.children(x);
    } else {
        let mut cand = Vec::new();
        m.static_children(rt, x, &mut cand);
        let mut refs = RefList::default();
        for c in cand {
            refs.clear();
            m.trace_refs(rt, c, false, &mut refs);
            if refs.items().iter().any(|&(v, _)| v == x) {
                out.push(c);
            }
        }
    }
    out.retain(|&c| m.template(c).kind != TemplateKind::Query);
    out.sort();
    out
}

/// Demand, in the proposed world, every variable the affected children will
/// reference once the new value is in place.
fn prime_affected(m: &mut dyn CompiledModel, rt: &mut Rt, aff: &[VarId]) {
    for &u in aff {
        if m.template(u).is_pseudo() {
            m.loglik(rt, u, true);
        } else {
            m.dist(rt, u, true);
        }
    }
}

fn commit(m: &mut dyn CompiledModel, rt: &mut Rt, x: VarId, v: Value) {
    m.accept_value(rt, x, v);
    if rt.flags.rc {
        process_removals(m, rt);
    } else if has_tracked(m) {
        rebuild_slice(m, rt);
    }
    rt.counters.accepted += 1;
}

/// One Gibbs update of a uniformly chosen variable: an exact draw from its
/// full conditional, by conjugacy or by enumerating a finite support.
pub fn gibbs_step(m: &mut dyn CompiledModel, rt: &mut Rt) -> Result<(), DriverError> {
    let n = rt.world.active_vars.len();
    if n == 0 {
        return Ok(());
    }
    let x = rt.world.active_vars[rt.rng.index(n)];
    let children = children_of(m, rt, x);
    let aff = affected(m, rt, x);
    let prior = m.dist(rt, x, false);

    if let Some(pair) = m.template(x).conjugate {
        let mut obs = Vec::with_capacity(children.len());
        for &c in &children {
            if m.template(c).is_pseudo() {
                return Err(DriverError::Ineligible {
                    algo: "gibbs",
                    var: m.var_name(x),
                    reason: format!("child {} is an observation of uncertain identity", m.var_name(c)),
                });
            }
            obs.push((m.dist(rt, c, false), m.value(c)));
            rt.counters.likelihood_evals += 1;
        }
        let post = posterior(pair, &prior, &obs).ok_or_else(|| DriverError::Ineligible {
            algo: "gibbs",
            var: m.var_name(x),
            reason: format!("children do not match the {pair:?} conjugate form"),
        })?;
        let v = rt.sample(&post, x);
        rt.bump_proposal();
        m.begin_proposal(rt, x, v);
        prime_affected(m, rt, &aff);
        m.end_proposal(rt, x);
        commit(m, rt, x, v);
        return Ok(());
    }

    let Some(support) = prior.finite_support() else {
        return Err(DriverError::Ineligible {
            algo: "gibbs",
            var: m.var_name(x),
            reason: format!("{} prior has no finite support and no conjugate update", prior.family()),
        });
    };
    let mut scores = Vec::with_capacity(support.len());
    let mut fresh: Vec<Vec<(VarId, Value)>> = Vec::with_capacity(support.len());
    for &v in &support {
        rt.bump_proposal();
        m.begin_proposal(rt, x, v);
        let mut s = prior.log_pdf(v);
        for &c in &children {
            let l = m.loglik(rt, c, true);
            rt.counters.likelihood_evals += 1;
            s += l;
        }
        if s.is_nan() {
            panic!("conditional of {} is NaN", m.var_name(x));
        }
        prime_affected(m, rt, &aff);
        fresh.push(rt.world.proposed_vars.iter().map(|&y| (y, m.cached(y))).collect());
        m.end_proposal(rt, x);
        scores.push(s);
    }
    let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut r = rt.rng.uniform() * total;
    let mut pick = weights.len() - 1;
    for (i, w) in weights.iter().enumerate() {
        if r < *w {
            pick = i;
            break;
        }
        r -= w;
    }
    let v = support[pick];
    rt.bump_proposal();
    m.begin_proposal(rt, x, v);
    for &(y, val) in &fresh[pick] {
        m.set_cached(rt, y, val);
    }
    m.end_proposal(rt, x);
    commit(m, rt, x, v);
    Ok(())
}

impl Driver for Gibbs {
    fn name(&self) -> &'static str {
        "gibbs"
    }

    fn run(&self, m: &mut dyn CompiledModel, rt: &mut Rt, opts: &RunOptions) -> Result<RunStats, DriverError> {
        let start = Instant::now();
        init_world(m, rt)?;
        let mut accs = new_accumulators(m, true);
        let mut size_sum = 0.0;
        let mut violations = Vec::new();
        for step in 1..=opts.burn_in + opts.n {
            gibbs_step(m, rt)?;
            if opts.debug_oracle {
                violations.extend(super::check_invariants(m, rt).into_iter().map(|e| format!("step {step}: {e}")));
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
        let mut stats = finish_stats(m, rt, self.name(), opts, &accs, start.elapsed().as_secs_f64());
        if opts.n > 0 {
            stats.world_size_mean = Some(size_sum / opts.n as f64);
        }
        stats.debug_violations = violations;
        Ok(stats)
    }
}
