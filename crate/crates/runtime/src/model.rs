//! The interface every generated program implements.
//!
//! Generated code provides one specialised set of entry points per random
//! function template (getter, proposal getter, likelihood, `add_to_ch`,
//! `accept_value`) and a dispatch `match` per trait method below, which is
//! the analogue of a virtual `resample()` on an abstract variable class.

use crate::conjugate::ConjugatePair;
use crate::dist::{Dist, ValueKind};
use crate::rt::{RefList, Rt};
use crate::value::{Value, VarId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemplateKind {
    Random,
    Number,
    /// Evidence whose left-hand side has world-dependent identity; its
    /// likelihood is the indicator of the observed equality.
    Observation,
    Query,
}

#[derive(Debug, Clone, Copy)]
pub struct TemplateInfo {
    pub name: &'static str,
    pub kind: TemplateKind,
    pub arg_types: &'static [u16],
    pub value_kind: ValueKind,
    /// Value type, when `value_kind` is `Obj`.
    pub value_type: Option<u16>,
    /// Reference counted (family indexed by an open-universe type).
    pub tracked: bool,
    pub conjugate: Option<ConjugatePair>,
}

impl TemplateInfo {
    pub fn is_pseudo(&self) -> bool {
        matches!(self.kind, TemplateKind::Observation | TemplateKind::Query)
    }
}

/// How one argument of a parent instance relates to the child instances
/// that may reference it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArgMap {
    /// Parent argument equals the child's parameter `i`.
    Same(u8),
    /// Parent argument must be this object index.
    Const(u32),
    /// Any parent argument.
    All,
}

/// One entry of the static children bound: a child template and, per parent
/// argument, its mapping.
#[derive(Debug, Clone, Copy)]
pub struct Edge {
    pub child: u16,
    pub args: &'static [ArgMap],
    /// The parent may switch the child's dependency structure.
    pub switching: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct TypeInfo {
    pub name: &'static str,
    /// Names of distinct objects; empty for open-universe types.
    pub labels: &'static [&'static str],
    /// Template id of the number variable, for open-universe types.
    pub number: Option<u16>,
}

#[derive(Debug, Clone, Copy)]
pub struct QueryInfo {
    pub text: &'static str,
    pub node: VarId,
    pub kind: ValueKind,
    pub value_type: Option<u16>,
}

pub trait CompiledModel {
    fn model_name(&self) -> &'static str;
    fn templates(&self) -> &'static [TemplateInfo];
    fn types(&self) -> &'static [TypeInfo];
    /// Pinned variables and observation nodes, in source order.
    fn evidence(&self) -> &'static [VarId];
    fn queries(&self) -> &'static [QueryInfo];

    /// World-mode getter: memoised value, sampling (and instantiating) on demand.
    fn get(&mut self, rt: &mut Rt, id: VarId) -> Value;
    fn is_instantiated(&self, rt: &Rt, id: VarId) -> bool;
    fn is_pinned(&self, id: VarId) -> bool;
    fn value(&self, id: VarId) -> Value;
    fn uninstantiate(&mut self, id: VarId);

    /// The declaration's distribution, evaluated in the current world or,
    /// with `proposal`, in the proposed world through the cache getters.
    fn dist(&mut self, rt: &mut Rt, id: VarId, proposal: bool) -> Dist;
    /// Likelihood of the variable's value given its parents. Observation
    /// nodes return the log indicator; query nodes return zero.
    fn loglik(&mut self, rt: &mut Rt, id: VarId, proposal: bool) -> f64;
    /// References along the declaration's current path (the children-set
    /// registrations for `id`).
    fn register(&mut self, rt: &mut Rt, id: VarId, proposal: bool, out: &mut RefList);
    /// Every variable read along the declaration's current path, whatever
    /// the build flags. Used for slice reconstruction without reference
    /// counting and for Gibbs children without children sets.
    fn trace_refs(&mut self, rt: &mut Rt, id: VarId, proposal: bool, out: &mut RefList);
    fn query(&mut self, rt: &mut Rt, k: usize) -> Value;

    /// Put `v` in the proposal cache of `id` and hide its world value so
    /// that cache getters read the proposed value.
    fn begin_proposal(&mut self, rt: &mut Rt, id: VarId, v: Value);
    fn end_proposal(&mut self, rt: &mut Rt, id: VarId);
    fn cached(&self, id: VarId) -> Value;
    fn set_cached(&mut self, rt: &mut Rt, id: VarId, v: Value);
    /// `val = cached_val` and instantiate.
    fn commit_cached(&mut self, rt: &mut Rt, id: VarId);
    /// Instantiate `id` in the current world with value `v`, without sampling.
    fn instantiate_with(&mut self, rt: &mut Rt, id: VarId, v: Value);
    /// For an observation whose left-hand side is a random variable, that
    /// variable in the current world and the observed value.
    fn obs_site(&mut self, rt: &mut Rt, id: VarId) -> Option<(VarId, Value)>;
    /// Accept `v` for `id`: unregister contingent children, assign, commit
    /// the proposal's new variables, re-register.
    fn accept_value(&mut self, rt: &mut Rt, id: VarId, v: Value);

    /// Static children bound of a template.
    fn static_edges(&self, tmpl: u16) -> &'static [Edge];
    /// Extent of allocated storage along argument `i` of a template.
    fn arg_bound(&self, tmpl: u16, i: usize) -> u32;
    /// Sample every instantiable variable in declaration order.
    fn eager_all(&mut self, rt: &mut Rt);
    fn clear_memory(&mut self, rt: &mut Rt);

    /// Every instance with storage allocated, instantiated or not.
    fn all_instances(&self, tmpl: u16) -> Vec<VarId> {
        let arity = self.templates()[tmpl as usize].arg_types.len();
        let n0 = if arity > 0 { self.arg_bound(tmpl, 0) } else { 1 };
        let n1 = if arity > 1 { self.arg_bound(tmpl, 1) } else { 1 };
        let mut out = Vec::with_capacity((n0 * n1) as usize);
        for i in 0..n0 {
            for j in 0..n1 {
                out.push(VarId::new(tmpl, i, j));
            }
        }
        out
    }

    /// Instantiated instances of the static children bound of `id`.
    fn static_children(&mut self, rt: &mut Rt, id: VarId, out: &mut Vec<VarId>) {
        self.edge_instances(rt, id, false, out);
    }

    /// The subset of `static_children` whose template may switch on `id`.
    fn static_contingent(&mut self, rt: &mut Rt, id: VarId, out: &mut Vec<VarId>) {
        self.edge_instances(rt, id, true, out);
    }

    fn edge_instances(&mut self, rt: &mut Rt, id: VarId, switching_only: bool, out: &mut Vec<VarId>) {
        let parent = [id.a0(), id.a1()];
        for e in self.static_edges(id.tmpl()) {
            if switching_only && !e.switching {
                continue;
            }
            let arity = self.templates()[e.child as usize].arg_types.len();
            let mut lo = [0u32; 2];
            let mut hi = [1u32; 2];
            for (i, h) in hi.iter_mut().enumerate().take(arity) {
                *h = self.arg_bound(e.child, i);
            }
            let mut ok = true;
            for (j, m) in e.args.iter().enumerate() {
                match *m {
                    ArgMap::Same(i) => {
                        let i = i as usize;
                        let v = parent[j];
                        if v < lo[i] || v >= hi[i] {
                            ok = false;
                        }
                        lo[i] = v;
                        hi[i] = v + 1;
                    }
                    ArgMap::Const(k) => ok &= parent[j] == k,
                    ArgMap::All => {}
                }
            }
            if !ok {
                continue;
            }
            for a in lo[0]..hi[0] {
                for b in lo[1]..hi[1] {
                    let c = VarId::new(e.child, a, b);
                    let live = self.templates()[e.child as usize].is_pseudo() || self.is_instantiated(rt, c);
                    if live && !out.contains(&c) {
                        out.push(c);
                    }
                }
            }
        }
    }

    fn template(&self, id: VarId) -> &'static TemplateInfo {
        &self.templates()[id.tmpl() as usize]
    }

    fn is_selectable(&self, id: VarId) -> bool {
        !self.template(id).is_pseudo() && !self.is_pinned(id)
    }

    fn label(&self, kind: ValueKind, ty: Option<u16>, v: Value) -> String {
        match (kind, ty) {
            (ValueKind::Obj, Some(t)) => {
                let info = &self.types()[t as usize];
                let i = v.as_int();
                match info.labels.get(i as usize) {
                    Some(l) => (*l).to_string(),
                    None => format!("{}#{}", info.name, i),
                }
            }
            (ValueKind::Bool, _) => v.as_bool().to_string(),
            (ValueKind::Int, _) => v.as_int().to_string(),
            _ => v.as_real().to_string(),
        }
    }

    /// Canonical instance name, e.g. `color(Ball#3)` or `drawn(Draw[1])`.
    fn var_name(&self, id: VarId) -> String {
        let t = self.template(id);
        if t.arg_types.is_empty() {
            return t.name.to_string();
        }
        let args: Vec<String> = t
            .arg_types
            .iter()
            .zip([id.a0(), id.a1()])
            .map(|(&ty, a)| self.label(ValueKind::Obj, Some(ty), Value::Obj(a as i64)))
            .collect();
        format!("{}({})", t.name, args.join(", "))
    }
}
