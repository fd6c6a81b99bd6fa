//! Reference interpreter over explicit possible worlds.
//!
//! A world is a map from variable instances to values. Evaluation is
//! demand driven: a missing variable is either reported, sampled from its
//! declaration, or taken from a recorded proposal, depending on the mode.
//! Nothing here shares code with the generated programs except the
//! distribution kernels.

mod enumerate;
mod lw;
mod pmh;
mod structure;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use blog_runtime::dist::{CatTable, Dist, ValueKind};
use blog_runtime::rng::CountingRng;
use blog_runtime::stats::{QueryAcc, QueryResult, RunStats};
use blog_runtime::Value;
use thiserror::Error;

use crate::frontend::ast::{BinOp, UnOp};
use crate::frontend::typed::{FnId, FnKind, Lit, TExpr, Ty, TK};
use crate::frontend::Model;

pub use enumerate::{enumerate_exact, ExactQuery};
pub use lw::interp_lw;
pub use structure::Reader;
pub use pmh::{interp_pmh_eq1, log_ratio_err, replay, Eq1Step, ReplayReport};

const MAX_DEPTH: u32 = 10_000;

/// One random variable instance: function and object-index arguments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var {
    pub f: FnId,
    pub args: [i64; 2],
}

pub type World = BTreeMap<Var, Value>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum InterpError {
    #[error("variable {0} is not instantiated")]
    Missing(String),
    #[error("variable {0} was demanded by the proposal but not recorded")]
    Unrecorded(String),
    #[error("recursion deeper than {MAX_DEPTH} while instantiating {0}")]
    Depth(String),
    #[error("{0}")]
    Eval(String),
    #[error("cannot enumerate: {0}")]
    Unsupported(String),
    #[error("no world with positive likelihood found after {0} attempts")]
    Unsatisfiable(u32),
    #[error("{0}")]
    Record(String),
}

/// Why evaluation stopped.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Stop {
    Missing(Var),
    Unrecorded(Var),
    Depth(Var),
    Eval(String),
}

pub enum Mode<'a> {
    /// Missing variables stop evaluation.
    Fixed,
    Sample(&'a mut CountingRng),
    /// Missing variables come from a recorded proposal.
    Replay(&'a HashMap<Var, Value>),
}

/// Evaluation context over one world.
pub(crate) struct Ctx<'a, 'w> {
    pub world: &'w mut World,
    pub mode: Mode<'a>,
    /// Direct reads of the current evaluation, when recording.
    pub reads: Option<Vec<Var>>,
    /// Variables instantiated by this context, in order.
    pub fresh: Vec<Var>,
    depth: u32,
}

impl<'a, 'w> Ctx<'a, 'w> {
    pub fn new(world: &'w mut World, mode: Mode<'a>) -> Self {
        Ctx { world, mode, reads: None, fresh: Vec::new(), depth: 0 }
    }
}

pub struct Interp<'m> {
    pub m: &'m Model,
    pins: HashMap<Var, Value>,
    /// Evidence whose variable is not known statically.
    obs: Vec<usize>,
    /// Per evidence statement, the pinned variable if any.
    pinned: Vec<Option<Var>>,
    tracked: Vec<bool>,
}

pub(crate) fn lit_value(l: Lit) -> Value {
    match l {
        Lit::Bool(b) => Value::Bool(b),
        Lit::Int(k) => Value::Int(k),
        Lit::Real(x) => Value::Real(x),
        Lit::Obj(_, i) => Value::Obj(i),
    }
}

pub(crate) fn value_kind(t: Ty) -> ValueKind {
    match t {
        Ty::Bool => ValueKind::Bool,
        Ty::Int => ValueKind::Int,
        Ty::Real => ValueKind::Real,
        Ty::Obj(_) => ValueKind::Obj,
    }
}

fn same(a: Value, b: Value) -> bool {
    match (a, b) {
        (Value::Real(x), Value::Real(y)) => x == y,
        (Value::Real(x), y) | (y, Value::Real(x)) => x == y.as_real(),
        _ => a.as_int() == b.as_int(),
    }
}

impl<'m> Interp<'m> {
    pub fn new(m: &'m Model) -> Self {
        let mut pins = HashMap::new();
        let mut obs = Vec::new();
        let mut pinned = Vec::new();
        for (i, e) in m.evidence.iter().enumerate() {
            pinned.push(None);
            match &e.lhs.kind {
                TK::App(f, args) if e.is_pinned() => {
                    let mut a = [0i64; 2];
                    for (k, x) in args.iter().enumerate() {
                        if let TK::Lit(l) = x.kind {
                            a[k] = lit_value(l).as_int();
                        }
                    }
                    pins.insert(Var { f: *f, args: a }, lit_value(e.value));
                    pinned[i] = Some(Var { f: *f, args: a });
                }
                _ => obs.push(i),
            }
        }
        let tracked = m
            .fns
            .iter()
            .map(|f| {
                f.kind == FnKind::Random
                    && f.params.iter().any(|(_, t)| matches!(t, Ty::Obj(k) if m.types[*k as usize].is_open()))
            })
            .collect();
        Interp { m, pins, obs, pinned, tracked }
    }

    pub fn is_pinned(&self, v: &Var) -> bool {
        self.pins.contains_key(v)
    }

    pub fn pins(&self) -> impl Iterator<Item = (&Var, &Value)> {
        self.pins.iter()
    }

    pub fn is_tracked(&self, v: &Var) -> bool {
        self.tracked[v.f as usize]
    }

    pub fn label(&self, t: Ty, v: Value) -> String {
        match t {
            Ty::Obj(k) => self.m.lit_name(Lit::Obj(k, v.as_int())),
            Ty::Bool => v.as_bool().to_string(),
            Ty::Int => v.as_int().to_string(),
            Ty::Real => v.as_real().to_string(),
        }
    }

    /// Canonical name, e.g. `color(Ball#3)`, `drawn(Draw[1])` or `#Ball`.
    pub fn var_name(&self, v: &Var) -> String {
        let f = &self.m.fns[v.f as usize];
        if f.params.is_empty() {
            return f.name.clone();
        }
        let args: Vec<String> = f.params.iter().zip(v.args).map(|((_, t), a)| self.label(*t, Value::Obj(a))).collect();
        format!("{}({})", f.name, args.join(", "))
    }

    pub fn parse_var(&self, name: &str) -> Option<Var> {
        let (fname, rest) = match name.find('(') {
            Some(i) => (&name[..i], name[i + 1..].strip_suffix(')')?),
            None => (name, ""),
        };
        let f = self.m.fn_by_name(fname)?;
        let def = &self.m.fns[f as usize];
        if !def.is_random() {
            return None;
        }
        let parts: Vec<&str> = if rest.is_empty() { Vec::new() } else { rest.split(", ").collect() };
        if parts.len() != def.params.len() {
            return None;
        }
        let mut args = [0i64; 2];
        for (k, (p, (_, t))) in parts.iter().zip(&def.params).enumerate() {
            let Ty::Obj(tid) = *t else { return None };
            let td = &self.m.types[tid as usize];
            args[k] = match td.objects.iter().position(|o| o == p) {
                Some(i) => i as i64,
                None => p.strip_prefix(&format!("{}#", td.name))?.parse().ok()?,
            };
        }
        Some(Var { f, args })
    }

    /// Decode a JSON value of the variable's type.
    pub fn json_value(&self, v: &Var, j: &serde_json::Value) -> Option<Value> {
        Some(match self.m.fns[v.f as usize].ret {
            Ty::Bool => Value::Bool(j.as_bool()?),
            Ty::Int => Value::Int(j.as_i64()?),
            Ty::Real => Value::Real(j.as_f64()?),
            Ty::Obj(_) => Value::Obj(j.as_i64()?),
        })
    }

    pub(crate) fn stop_error(&self, s: Stop) -> InterpError {
        match s {
            Stop::Missing(v) => InterpError::Missing(self.var_name(&v)),
            Stop::Unrecorded(v) => InterpError::Unrecorded(self.var_name(&v)),
            Stop::Depth(v) => InterpError::Depth(self.var_name(&v)),
            Stop::Eval(s) => InterpError::Eval(s),
        }
    }

    pub(crate) fn get(&self, v: Var, ctx: &mut Ctx) -> Result<Value, Stop> {
        if let Some(&x) = ctx.world.get(&v) {
            if let Some(r) = ctx.reads.as_mut() {
                r.push(v);
            }
            return Ok(x);
        }
        let x = if let Some(&p) = self.pins.get(&v) {
            if matches!(ctx.mode, Mode::Fixed) {
                return Err(Stop::Missing(v));
            }
            p
        } else {
            if matches!(ctx.mode, Mode::Fixed) {
                return Err(Stop::Missing(v));
            }
            if ctx.depth >= MAX_DEPTH {
                return Err(Stop::Depth(v));
            }
            ctx.depth += 1;
            let saved = ctx.reads.take();
            let d = self.dist_of(v, ctx);
            ctx.reads = saved;
            ctx.depth -= 1;
            let d = d?;
            match &mut ctx.mode {
                Mode::Sample(rng) => {
                    d.sample(rng).map_err(|e| Stop::Eval(format!("while sampling {}: {e}", self.var_name(&v))))?
                }
                Mode::Replay(rec) => *rec.get(&v).ok_or(Stop::Unrecorded(v))?,
                Mode::Fixed => unreachable!(),
            }
        };
        ctx.world.insert(v, x);
        ctx.fresh.push(v);
        if let Some(r) = ctx.reads.as_mut() {
            r.push(v);
        }
        Ok(x)
    }

    /// The distribution of `v` in the context's world.
    pub(crate) fn dist_of(&self, v: Var, ctx: &mut Ctx) -> Result<Dist, Stop> {
        let f = &self.m.fns[v.f as usize];
        let env: Vec<Value> = v.args[..f.params.len()].iter().map(|&a| Value::Obj(a)).collect();
        self.tail(&f.body, &env, ctx)
    }

    fn tail(&self, e: &TExpr, env: &[Value], ctx: &mut Ctx) -> Result<Dist, Stop> {
        Ok(match &e.kind {
            TK::If(c, a, b) => {
                return if self.eval(c, env, ctx)?.as_bool() { self.tail(a, env, ctx) } else { self.tail(b, env, ctx) };
            }
            TK::Dist(k, args) => {
                let mut a = Vec::with_capacity(args.len());
                for x in args {
                    a.push(self.eval(x, env, ctx)?);
                }
                use crate::frontend::typed::DistKind as D;
                match k {
                    D::Bernoulli => Dist::Bernoulli(a[0].as_real()),
                    D::Gaussian => Dist::Gaussian(a[0].as_real(), a[1].as_real()),
                    D::Beta => Dist::Beta(a[0].as_real(), a[1].as_real()),
                    D::Gamma => Dist::Gamma(a[0].as_real(), a[1].as_real()),
                    D::Poisson => Dist::Poisson(a[0].as_real()),
                    D::UniformInt => Dist::UniformInt(a[0].as_int(), a[1].as_int()),
                }
            }
            TK::Choice(t) => Dist::UniformChoice(self.count(*t, ctx)?),
            TK::Categorical(arms) => {
                let mut entries = Vec::with_capacity(arms.len());
                for (k, p) in arms {
                    entries.push((k.key(), self.eval(p, env, ctx)?.as_real()));
                }
                Dist::Categorical(value_kind(e.ty), CatTable::inline(&entries))
            }
            _ => Dist::Const(self.eval(e, env, ctx)?),
        })
    }

    fn count(&self, t: u16, ctx: &mut Ctx) -> Result<i64, Stop> {
        let td = &self.m.types[t as usize];
        match td.number {
            Some(n) => Ok(self.get(Var { f: n, args: [0, 0] }, ctx)?.as_int()),
            None => Ok(td.objects.len() as i64),
        }
    }

    pub(crate) fn eval(&self, e: &TExpr, env: &[Value], ctx: &mut Ctx) -> Result<Value, Stop> {
        Ok(match &e.kind {
            TK::Lit(l) => lit_value(*l),
            TK::Param(i) => env[*i as usize],
            TK::App(g, args) => {
                let mut a = Vec::with_capacity(args.len());
                for x in args {
                    a.push(self.eval(x, env, ctx)?);
                }
                let def = &self.m.fns[*g as usize];
                if def.kind == FnKind::Fixed {
                    return self.eval(&def.body, &a, ctx);
                }
                let mut v = Var { f: *g, args: [0, 0] };
                for (k, x) in a.iter().enumerate() {
                    v.args[k] = x.as_int();
                }
                self.get(v, ctx)?
            }
            TK::If(c, a, b) => {
                if self.eval(c, env, ctx)?.as_bool() {
                    self.eval(a, env, ctx)?
                } else {
                    self.eval(b, env, ctx)?
                }
            }
            TK::Bin(op, a, b) => {
                let x = self.eval(a, env, ctx)?;
                let y = self.eval(b, env, ctx)?;
                self.binary(*op, x, y, e)?
            }
            TK::Un(UnOp::Not, a) => Value::Bool(!self.eval(a, env, ctx)?.as_bool()),
            TK::Un(UnOp::Neg, a) => match self.eval(a, env, ctx)? {
                Value::Real(x) => Value::Real(-x),
                v => Value::Int(-v.as_int()),
            },
            TK::ToReal(a) => Value::Real(self.eval(a, env, ctx)?.as_real()),
            TK::Dist(..) | TK::Choice(_) | TK::Categorical(_) => {
                return Err(Stop::Eval(format!("distribution outside tail position at {}", e.pos)));
            }
        })
    }

    fn binary(&self, op: BinOp, x: Value, y: Value, e: &TExpr) -> Result<Value, Stop> {
        let real = matches!(x, Value::Real(_)) || matches!(y, Value::Real(_));
        let arith = |i: fn(i64, i64) -> Option<i64>, r: fn(f64, f64) -> f64| -> Result<Value, Stop> {
            if real {
                Ok(Value::Real(r(x.as_real(), y.as_real())))
            } else {
                i(x.as_int(), y.as_int())
                    .map(Value::Int)
                    .ok_or_else(|| Stop::Eval(format!("integer overflow at {}", e.pos)))
            }
        };
        Ok(match op {
            BinOp::And => Value::Bool(x.as_bool() & y.as_bool()),
            BinOp::Or => Value::Bool(x.as_bool() | y.as_bool()),
            BinOp::Eq => Value::Bool(same(x, y)),
            BinOp::Ne => Value::Bool(!same(x, y)),
            BinOp::Lt => Value::Bool(if real { x.as_real() < y.as_real() } else { x.as_int() < y.as_int() }),
            BinOp::Le => Value::Bool(if real { x.as_real() <= y.as_real() } else { x.as_int() <= y.as_int() }),
            BinOp::Gt => Value::Bool(if real { x.as_real() > y.as_real() } else { x.as_int() > y.as_int() }),
            BinOp::Ge => Value::Bool(if real { x.as_real() >= y.as_real() } else { x.as_int() >= y.as_int() }),
            BinOp::Add => arith(i64::checked_add, |a, b| a + b)?,
            BinOp::Sub => arith(i64::checked_sub, |a, b| a - b)?,
            BinOp::Mul => arith(i64::checked_mul, |a, b| a * b)?,
            BinOp::Div => Value::Real(x.as_real() / y.as_real()),
        })
    }

    /// Log indicator of observation `i`.
    pub(crate) fn obs_loglik(&self, i: usize, ctx: &mut Ctx) -> Result<f64, Stop> {
        let e = &self.m.evidence[i];
        let v = self.eval(&e.lhs, &[], ctx)?;
        Ok(if same(v, lit_value(e.value)) { 0.0 } else { f64::NEG_INFINITY })
    }

    /// Log likelihood of evidence statement `i`: the observed variable's
    /// density at the observed value, or the indicator for observations
    /// of uncertain identity.
    pub(crate) fn evidence_loglik(&self, i: usize, ctx: &mut Ctx) -> Result<f64, Stop> {
        match self.pinned[i] {
            Some(v) => {
                let x = self.get(v, ctx)?;
                Ok(self.dist_of(v, ctx)?.log_pdf(x))
            }
            None => self.obs_loglik(i, ctx),
        }
    }

    /// Parents of `v` in `w`: the variables its declaration reads.
    pub fn parents(&self, w: &World, v: &Var) -> Result<Vec<Var>, InterpError> {
        self.parents_in(&mut w.clone(), v)
    }

    /// `parents` on a scratch copy of the world, which fixed-mode
    /// evaluation leaves unchanged.
    fn parents_in(&self, w: &mut World, v: &Var) -> Result<Vec<Var>, InterpError> {
        let mut ctx = Ctx::new(w, Mode::Fixed);
        ctx.reads = Some(Vec::new());
        self.dist_of(*v, &mut ctx).map_err(|s| self.stop_error(s))?;
        Ok(dedup(ctx.reads.unwrap()))
    }

    /// Variables read by the evidence and the queries.
    fn root_reads(&self, w: &mut World) -> Result<Vec<Var>, Stop> {
        let mut ctx = Ctx::new(w, Mode::Fixed);
        ctx.reads = Some(Vec::new());
        for &i in &self.obs {
            self.eval(&self.m.evidence[i].lhs, &[], &mut ctx)?;
        }
        for q in &self.m.queries {
            self.eval(&q.expr, &[], &mut ctx)?;
        }
        let mut r = ctx.reads.take().unwrap();
        r.extend(self.pins.keys().copied());
        Ok(dedup(r))
    }

    /// Every variable reachable from the evidence and the queries, plus
    /// (when `keep_closed`) every instantiated variable not indexed by an
    /// open type together with its ancestors.
    pub fn reachable(&self, w: &World, keep_closed: bool) -> Result<BTreeSet<Var>, InterpError> {
        let mut w2 = w.clone();
        let mut stack = self.root_reads(&mut w2).map_err(|s| self.stop_error(s))?;
        if keep_closed {
            stack.extend(w.keys().copied().filter(|v| !self.is_tracked(v)));
        }
        let mut seen = BTreeSet::new();
        while let Some(v) = stack.pop() {
            if !seen.insert(v) {
                continue;
            }
            stack.extend(self.parents_in(&mut w2, &v)?);
        }
        Ok(seen)
    }

    /// The children of `x` in `w`, pseudo nodes excluded: every variable
    /// whose declaration reads `x`.
    pub fn children(&self, w: &World, x: &Var) -> Result<Vec<Var>, InterpError> {
        let mut out = Vec::new();
        let mut scratch = w.clone();
        for v in w.keys() {
            if self.parents_in(&mut scratch, v)?.contains(x) {
                out.push(*v);
            }
        }
        Ok(out)
    }

    /// Demand everything the world's variables, the evidence and the queries
    /// need. Returns the variables added.
    pub(crate) fn close(&self, w: &mut World, mode: Mode) -> Result<Vec<Var>, Stop> {
        let mut ctx = Ctx::new(w, mode);
        let pins: Vec<Var> = {
            let mut p: Vec<Var> = self.pins.keys().copied().collect();
            p.sort();
            p
        };
        for v in pins {
            self.get(v, &mut ctx)?;
        }
        for &i in &self.obs {
            self.eval(&self.m.evidence[i].lhs, &[], &mut ctx)?;
        }
        for q in &self.m.queries {
            self.eval(&q.expr, &[], &mut ctx)?;
        }
        let mut done = BTreeSet::new();
        loop {
            let pending: Vec<Var> = ctx.world.keys().copied().filter(|v| !done.contains(v)).collect();
            if pending.is_empty() {
                break;
            }
            for v in pending {
                done.insert(v);
                self.dist_of(v, &mut ctx)?;
            }
        }
        Ok(ctx.fresh)
    }

    /// log Pr[w]: every variable's conditional density plus the
    /// observation indicators. Also returns the number of factors.
    pub fn log_joint(&self, w: &World) -> Result<(f64, u64), InterpError> {
        let mut w2 = w.clone();
        let mut ctx = Ctx::new(&mut w2, Mode::Fixed);
        let mut total = 0.0;
        let mut n = 0;
        for (v, x) in w {
            let d = self.dist_of(*v, &mut ctx).map_err(|s| self.stop_error(s))?;
            total += d.log_pdf(*x);
            n += 1;
        }
        for &i in &self.obs {
            total += self.obs_loglik(i, &mut ctx).map_err(|s| self.stop_error(s))?;
            n += 1;
        }
        Ok((total, n))
    }

    /// Variables a proposal may pick: instantiated and not pinned.
    pub fn selectable<'w>(&self, w: &'w World) -> impl Iterator<Item = &'w Var> + 'w {
        let pins = self.pins.clone();
        w.keys().filter(move |v| !pins.contains_key(v))
    }

    pub(crate) fn query_stats(&self, accs: &[QueryAcc]) -> Vec<QueryResult> {
        self.m
            .queries
            .iter()
            .zip(accs)
            .map(|(q, acc)| {
                if q.expr.ty == Ty::Real {
                    QueryResult { query: q.text.clone(), mean: acc.mean(), se: acc.batch_se(), histogram: None }
                } else {
                    let kind = value_kind(q.expr.ty);
                    let hist =
                        acc.probabilities().into_iter().map(|(k, p)| (self.label(q.expr.ty, kind.wrap(k)), p)).collect();
                    QueryResult { query: q.text.clone(), mean: None, se: None, histogram: Some(hist) }
                }
            })
            .collect()
    }

    pub(crate) fn accumulators(&self, keep_trace: bool) -> Vec<QueryAcc> {
        self.m.queries.iter().map(|q| QueryAcc::new(value_kind(q.expr.ty), keep_trace)).collect()
    }
}

fn dedup(mut v: Vec<Var>) -> Vec<Var> {
    v.sort();
    v.dedup();
    v
}

pub(crate) fn base_stats(model: &str, algo: &str, n: u64, seed: u64) -> RunStats {
    RunStats {
        model: model.to_string(),
        algo: algo.to_string(),
        engine: "interp".to_string(),
        n_samples: n,
        seed,
        wall_time_s: 0.0,
        rng_calls: 0,
        likelihood_evals: 0,
        accept_rate: None,
        query_results: Vec::new(),
        flags: Vec::new(),
        world_size_mean: None,
        cont_updates: 0,
        debug_violations: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::frontend::load;

    #[test]
    fn names_round_trip() {
        let m = load(&corpus::urnball(20, 2)).unwrap();
        let it = Interp::new(&m);
        for name in ["#Ball", "color(Ball#3)", "drawn(Draw[1])"] {
            let v = it.parse_var(name).unwrap();
            assert_eq!(it.var_name(&v), name);
        }
        assert!(it.parse_var("color(Draw[0])").is_none());
    }

    #[test]
    fn lazy_sampling_builds_a_self_supporting_world() {
        let m = load(&corpus::urnball(20, 2)).unwrap();
        let it = Interp::new(&m);
        let mut rng = CountingRng::new(4, 1);
        let mut w = World::new();
        let fresh = it.close(&mut w, Mode::Sample(&mut rng)).unwrap();
        // #Ball, three draws and at most three colours
        assert!(fresh.len() >= 5 && fresh.len() <= 7, "{fresh:?}");
        assert_eq!(rng.calls() as usize, fresh.len());
        for v in w.keys() {
            for p in it.parents(&w, v).unwrap() {
                assert!(w.contains_key(&p));
            }
        }
        assert_eq!(it.reachable(&w, false).unwrap().len(), w.len());
    }
}
