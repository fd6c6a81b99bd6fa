//! Inference drivers. Each algorithm is a `Driver` registered by name; the
//! generated `main` picks one and hands it the specialised model.

mod gibbs;
mod lw;
mod pmh;

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::path::PathBuf;

use thiserror::Error;

pub use gibbs::Gibbs;
pub use lw::LikelihoodWeighting;
pub use pmh::{ParentalMh, StepOutcome};

use crate::model::{CompiledModel, TemplateKind};
use crate::record::{SnapVar, Snapshot};
use crate::rt::{RefList, Rt};
use crate::stats::{QueryAcc, QueryResult, RunStats};
use crate::value::VarId;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub n: u64,
    pub seed: u64,
    pub burn_in: u64,
    pub debug_oracle: bool,
    pub record: Option<PathBuf>,
    pub clear_memory_every: Option<u64>,
}

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("could not build an initial world satisfying the evidence after {0} attempts")]
    Unsatisfiable(u32),
    #[error("variable {var} is not eligible for {algo}: {reason}")]
    Ineligible { algo: &'static str, var: String, reason: String },
    #[error("record stream: {0}")]
    Io(#[from] std::io::Error),
}

pub trait Driver: Sync {
    fn name(&self) -> &'static str;
    fn run(&self, m: &mut dyn CompiledModel, rt: &mut Rt, opts: &RunOptions) -> Result<RunStats, DriverError>;
}

static REGISTRY: [&dyn Driver; 3] = [&LikelihoodWeighting, &ParentalMh, &Gibbs];

pub fn registry() -> &'static [&'static dyn Driver] {
    &REGISTRY
}

pub fn lookup(name: &str) -> Option<&'static dyn Driver> {
    REGISTRY.iter().copied().find(|d| d.name() == name)
}

pub(crate) fn new_accumulators(m: &dyn CompiledModel, keep_trace: bool) -> Vec<QueryAcc> {
    m.queries().iter().map(|q| QueryAcc::new(q.kind, keep_trace)).collect()
}

pub(crate) fn finish_stats(
    m: &dyn CompiledModel,
    rt: &Rt,
    algo: &str,
    opts: &RunOptions,
    accs: &[QueryAcc],
    wall: f64,
) -> RunStats {
    let query_results = m
        .queries()
        .iter()
        .zip(accs)
        .map(|(q, acc)| {
            if q.kind == crate::dist::ValueKind::Real {
                QueryResult { query: q.text.to_string(), mean: acc.mean(), se: acc.batch_se(), histogram: None }
            } else {
                let hist = acc
                    .probabilities()
                    .into_iter()
                    .map(|(k, p)| (m.label(q.kind, q.value_type, q.kind.wrap(k)), p))
                    .collect();
                QueryResult { query: q.text.to_string(), mean: None, se: None, histogram: Some(hist) }
            }
        })
        .collect();
    let c = rt.counters;
    let moves = c.accepted + c.rejected;
    let mut flags = Vec::new();
    if !rt.flags.db {
        flags.push("no-db".to_string());
    }
    if !rt.flags.rc {
        flags.push("no-rc".to_string());
    }
    if !rt.flags.acu {
        flags.push("no-acu".to_string());
    }
    RunStats {
        model: m.model_name().to_string(),
        algo: algo.to_string(),
        engine: "compiled".to_string(),
        n_samples: opts.n,
        seed: opts.seed,
        wall_time_s: wall,
        rng_calls: rt.rng.calls(),
        likelihood_evals: c.likelihood_evals,
        accept_rate: (moves > 0).then(|| c.accepted as f64 / moves as f64),
        query_results,
        flags,
        world_size_mean: None,
        cont_updates: c.cont_updates,
        debug_violations: Vec::new(),
    }
}

pub fn add_to_ch<M: CompiledModel + ?Sized>(m: &mut M, rt: &mut Rt, u: VarId) {
    let mut refs = RefList::default();
    m.register(rt, u, false, &mut refs);
    rt.link(u, &refs);
}

pub fn del_from_ch<M: CompiledModel + ?Sized>(m: &mut M, rt: &mut Rt, u: VarId) {
    let mut refs = RefList::default();
    m.register(rt, u, false, &mut refs);
    rt.unlink(u, &refs);
}

/// Variables whose registrations must be redone when `id` changes value.
pub fn affected<M: CompiledModel + ?Sized>(m: &mut M, rt: &mut Rt, id: VarId) -> Vec<VarId> {
    if rt.flags.acu {
        rt.contingent(id)
    } else if rt.flags.rc {
        let mut out = Vec::new();
        m.static_contingent(rt, id, &mut out);
        out
    } else {
        Vec::new()
    }
}

/// Load every variable sampled by the current proposal from its cache into
/// the world and register it with its parents.
pub fn commit_proposed<M: CompiledModel + ?Sized>(m: &mut M, rt: &mut Rt) {
    let fresh = std::mem::take(&mut rt.world.proposed_vars);
    for &y in &fresh {
        m.commit_cached(rt, y);
    }
    for &y in &fresh {
        add_to_ch(m, rt, y);
    }
    if rt.flags.rc {
        for &y in &fresh {
            if m.template(y).tracked && rt.states.cnt(y) == 0 {
                rt.pending_zero.push(y);
            }
        }
    }
    rt.world.proposed_vars = fresh;
}

/// Remove reference-counted variables whose count dropped to zero,
/// cascading through their own references.
pub fn process_removals(m: &mut dyn CompiledModel, rt: &mut Rt) {
    while let Some(v) = rt.pending_zero.pop() {
        if rt.states.cnt(v) != 0 || !m.template(v).tracked || !m.is_instantiated(rt, v) {
            continue;
        }
        del_from_ch(m, rt, v);
        m.uninstantiate(v);
        rt.world.remove(v, &mut rt.states);
    }
}

fn pseudo_nodes(m: &dyn CompiledModel) -> Vec<VarId> {
    let mut out: Vec<VarId> =
        m.evidence().iter().copied().filter(|&e| m.template(e).kind == TemplateKind::Observation).collect();
    out.extend(m.queries().iter().map(|q| q.node));
    out
}

/// The accept step shared by every generated `accept_value`: unregister the
/// contingent set, assign, commit the proposal's new variables, re-register.
pub fn accept_with<M: CompiledModel + ?Sized>(m: &mut M, rt: &mut Rt, id: VarId, assign: impl FnOnce(&mut M)) {
    let aff = affected(m, rt, id);
    for &u in &aff {
        del_from_ch(m, rt, u);
    }
    assign(m);
    commit_proposed(m, rt);
    for &u in &aff {
        add_to_ch(m, rt, u);
    }
}

pub(crate) fn pseudo_nodes_of(m: &dyn CompiledModel) -> Vec<VarId> {
    pseudo_nodes(m)
}

/// Recompute children sets, contingent sets, reference counts and the active
/// set from scratch and report every disagreement with the stored state.
pub fn check_invariants(m: &mut dyn CompiledModel, rt: &mut Rt) -> Vec<String> {
    use std::collections::HashMap;
    use crate::rt::{CH, CONT, RC};
    let mut errs = Vec::new();
    let vars = instantiated(m, rt);
    let mut members = vars.clone();
    members.extend(pseudo_nodes(m));
    let mut ch: HashMap<VarId, Vec<VarId>> = HashMap::new();
    let mut cont: HashMap<VarId, Vec<VarId>> = HashMap::new();
    let mut cnt: HashMap<VarId, u32> = HashMap::new();
    let mut refs = RefList::default();
    for &u in &members {
        refs.clear();
        m.register(rt, u, false, &mut refs);
        for &(p, f) in refs.items() {
            if !m.is_instantiated(rt, p) {
                errs.push(format!("{} references uninstantiated {}", m.var_name(u), m.var_name(p)));
            }
            if f & CH != 0 {
                ch.entry(p).or_default().push(u);
            }
            if f & CONT != 0 {
                cont.entry(p).or_default().push(u);
            }
            if f & RC != 0 {
                *cnt.entry(p).or_default() += 1;
            }
        }
    }
    let mut active = Vec::new();
    for &v in &vars {
        let name = m.var_name(v);
        let (s_ch, s_cont, s_cnt) = rt
            .states
            .get(v)
            .map_or((Vec::new(), Vec::new(), 0), |s| (s.ch.sorted(), s.cont.sorted(), s.cnt));
        if rt.flags.acu {
            let mut e = ch.remove(&v).unwrap_or_default();
            e.sort();
            if e != s_ch {
                errs.push(format!("children set of {name} is stale"));
            }
            let mut e = cont.remove(&v).unwrap_or_default();
            e.sort();
            if e != s_cont {
                errs.push(format!("contingent set of {name} is stale"));
            }
        }
        if rt.flags.rc && m.template(v).tracked {
            let e = cnt.get(&v).copied().unwrap_or(0);
            if e != s_cnt {
                errs.push(format!("reference count of {name} is {s_cnt}, expected {e}"));
            }
            if e == 0 {
                errs.push(format!("{name} is unreferenced but still instantiated"));
            }
        }
        if m.is_selectable(v) {
            active.push(v);
        }
    }
    let mut stored = rt.world.active_vars.clone();
    stored.sort();
    active.sort();
    if stored != active {
        errs.push(format!("active set has {} entries, expected {}", stored.len(), active.len()));
    }
    errs
}

/// Backchain from evidence and queries until a world with positive
/// likelihood is found, setting freshly reached observed variables to their
/// observed values, then build children sets and reference counts.
pub fn init_world(m: &mut dyn CompiledModel, rt: &mut Rt) -> Result<(), DriverError> {
    const ATTEMPTS: u32 = 100_000;
    rt.track_world = true;
    let mut ok = false;
    for _ in 0..ATTEMPTS {
        rt.reset_world();
        let mut lw = 0.0;
        for &e in m.evidence() {
            if m.template(e).kind != TemplateKind::Observation {
                m.get(rt, e);
            } else if let Some((site, v)) = m.obs_site(rt, e) {
                // set a fresh observed variable to its value instead of
                // hoping a prior draw matches
                if !m.is_instantiated(rt, site) && !m.is_pinned(site) {
                    m.instantiate_with(rt, site, v);
                    lw += m.loglik(rt, site, false);
                }
            }
            lw += m.loglik(rt, e, false);
        }
        if !rt.flags.db {
            m.eager_all(rt);
        }
        for k in 0..m.queries().len() {
            m.query(rt, k);
        }
        if lw > f64::NEG_INFINITY {
            ok = true;
            break;
        }
    }
    if !ok {
        return Err(DriverError::Unsatisfiable(ATTEMPTS));
    }
    let mut members = rt.instantiated.clone();
    members.extend(pseudo_nodes(m));
    for &u in &members {
        add_to_ch(m, rt, u);
    }
    if rt.flags.rc {
        for &v in &rt.instantiated {
            if m.template(v).tracked && rt.states.cnt(v) == 0 {
                rt.pending_zero.push(v);
            }
        }
        process_removals(m, rt);
    } else if has_tracked(m) {
        rebuild_slice(m, rt);
    }
    Ok(())
}

pub(crate) fn has_tracked(m: &dyn CompiledModel) -> bool {
    m.templates().iter().any(|t| t.tracked)
}

/// Instantiated variables, template by template.
pub fn instantiated(m: &dyn CompiledModel, rt: &Rt) -> Vec<VarId> {
    let mut out = Vec::new();
    for t in 0..m.templates().len() as u16 {
        if m.templates()[t as usize].is_pseudo() {
            continue;
        }
        out.extend(m.all_instances(t).into_iter().filter(|&v| m.is_instantiated(rt, v)));
    }
    out
}

/// Reference-counted variables reachable from the evidence, the queries and
/// every untracked variable, using the full reference walk.
pub(crate) fn reachable_tracked(m: &mut dyn CompiledModel, rt: &mut Rt, proposal: bool, roots: Vec<VarId>) -> Vec<VarId> {
    let mut seen: std::collections::HashSet<VarId> = roots.iter().copied().collect();
    let mut stack = roots;
    let mut tracked = Vec::new();
    let mut refs = RefList::default();
    while let Some(v) = stack.pop() {
        refs.clear();
        m.trace_refs(rt, v, proposal, &mut refs);
        for &(u, _) in refs.items() {
            if seen.insert(u) {
                if m.template(u).tracked {
                    tracked.push(u);
                }
                stack.push(u);
            }
        }
    }
    tracked
}

/// Without reference counting: recompute the dynamic slice from scratch and
/// drop unreachable reference-counted variables.
pub fn rebuild_slice(m: &mut dyn CompiledModel, rt: &mut Rt) {
    let all = instantiated(m, rt);
    let mut roots = pseudo_nodes(m);
    roots.extend(all.iter().copied().filter(|&v| !m.template(v).tracked));
    let keep: std::collections::HashSet<VarId> = reachable_tracked(m, rt, false, roots).into_iter().collect();
    for v in all {
        if m.template(v).tracked && !keep.contains(&v) {
            if rt.flags.acu {
                del_from_ch(m, rt, v);
            }
            m.uninstantiate(v);
            rt.world.remove(v, &mut rt.states);
        }
    }
}

pub fn snapshot(m: &mut dyn CompiledModel, rt: &Rt) -> Snapshot {
    let names = |ids: Vec<VarId>, m: &dyn CompiledModel| -> Vec<String> {
        let mut v: Vec<String> = ids.into_iter().map(|i| m.var_name(i)).collect();
        v.sort();
        v
    };
    let mut vars = Vec::new();
    for v in instantiated(m, rt) {
        let st = rt.states.get(v);
        let t = m.template(v);
        vars.push(SnapVar {
            name: m.var_name(v),
            value: m.value(v).to_json(),
            pinned: m.is_pinned(v),
            cnt: (rt.flags.rc && t.tracked).then(|| st.map_or(0, |s| s.cnt)),
            ch: rt.flags.acu.then(|| names(st.map_or_else(Vec::new, |s| s.ch.sorted()), m)),
            cont: rt.flags.acu.then(|| names(st.map_or_else(Vec::new, |s| s.cont.sorted()), m)),
        });
    }
    vars.sort_by(|a, b| a.name.cmp(&b.name));
    Snapshot { vars, nodes: Vec::new(), world_size: rt.world.world_size() }
}

/// Hash of every value, mark, count, children set, contingent set and the
/// active list (in order).
pub fn state_hash(m: &dyn CompiledModel, rt: &Rt) -> u64 {
    let mut h = DefaultHasher::new();
    let mut all = instantiated(m, rt);
    for t in 0..m.templates().len() as u16 {
        if m.templates()[t as usize].is_pseudo() {
            all.extend(m.all_instances(t));
        }
    }
    for v in all {
        v.hash(&mut h);
        m.value(v).bits().hash(&mut h);
        if let Some(st) = rt.states.get(v) {
            st.cnt.hash(&mut h);
            st.ch.sorted().hash(&mut h);
            st.cont.sorted().hash(&mut h);
            st.active_pos.hash(&mut h);
        }
    }
    rt.world.active_vars.hash(&mut h);
    h.finish()
}
