//! Name resolution and type checking. Produces the typed model every later
//! stage consumes. Objects become `(type, index)` pairs here.

use std::collections::HashMap;
use std::fmt::Write;

use serde::Serialize;

use super::ast::{BinOp, Decl, DistinctObj, Expr, ExprKind, Param, Program, UnOp};
use super::printer::print_expr;
use super::{FrontError, Pos, SemanticKind as K};

pub type TypeId = u16;
pub type FnId = u16;

pub const MAX_PARAMS: usize = 2;
pub const MAX_CATEGORIES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, PartialOrd, Ord)]
pub enum Ty {
    Bool,
    Int,
    Real,
    Obj(TypeId),
}

impl Ty {
    pub fn is_numeric(self) -> bool {
        matches!(self, Ty::Int | Ty::Real)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypeDef {
    pub name: String,
    /// Names of distinct objects, in index order. Empty for open types.
    pub objects: Vec<String>,
    /// The number variable of an open-universe type.
    pub number: Option<FnId>,
}

impl TypeDef {
    pub fn is_open(&self) -> bool {
        self.number.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FnKind {
    Random,
    Number(TypeId),
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FnDef {
    pub name: String,
    pub kind: FnKind,
    pub params: Vec<(String, Ty)>,
    pub ret: Ty,
    pub body: TExpr,
    pub pos: Pos,
}

impl FnDef {
    pub fn is_random(&self) -> bool {
        !matches!(self.kind, FnKind::Fixed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lit {
    Bool(bool),
    Int(i64),
    Real(f64),
    Obj(TypeId, i64),
}

impl Lit {
    pub fn ty(self) -> Ty {
        match self {
            Lit::Bool(_) => Ty::Bool,
            Lit::Int(_) => Ty::Int,
            Lit::Real(_) => Ty::Real,
            Lit::Obj(t, _) => Ty::Obj(t),
        }
    }

    /// Integer encoding used for table keys: objects by index, booleans as 0/1.
    pub fn key(self) -> i64 {
        match self {
            Lit::Bool(b) => b as i64,
            Lit::Int(k) | Lit::Obj(_, k) => k,
            Lit::Real(x) => x.to_bits() as i64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum DistKind {
    Bernoulli,
    Gaussian,
    Beta,
    Gamma,
    Poisson,
    UniformInt,
}

impl DistKind {
    pub fn name(self) -> &'static str {
        match self {
            DistKind::Bernoulli => "Bernoulli",
            DistKind::Gaussian => "Gaussian",
            DistKind::Beta => "Beta",
            DistKind::Gamma => "Gamma",
            DistKind::Poisson => "Poisson",
            DistKind::UniformInt => "UniformInt",
        }
    }

    fn lookup(name: &str) -> Option<DistKind> {
        Some(match name {
            "Bernoulli" => DistKind::Bernoulli,
            "Gaussian" => DistKind::Gaussian,
            "Beta" => DistKind::Beta,
            "Gamma" => DistKind::Gamma,
            "Poisson" => DistKind::Poisson,
            "UniformInt" => DistKind::UniformInt,
            _ => return None,
        })
    }

    fn signature(self) -> (&'static [Ty], Ty) {
        match self {
            DistKind::Bernoulli => (&[Ty::Real], Ty::Bool),
            DistKind::Gaussian | DistKind::Beta => (&[Ty::Real, Ty::Real], Ty::Real),
            DistKind::Gamma => (&[Ty::Real, Ty::Real], Ty::Real),
            DistKind::Poisson => (&[Ty::Real], Ty::Int),
            DistKind::UniformInt => (&[Ty::Int, Ty::Int], Ty::Int),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TK {
    Lit(Lit),
    Param(u8),
    App(FnId, Vec<TExpr>),
    Dist(DistKind, Vec<TExpr>),
    /// Uniform choice over the objects of a type.
    Choice(TypeId),
    Categorical(Vec<(Lit, TExpr)>),
    If(Box<TExpr>, Box<TExpr>, Box<TExpr>),
    Bin(BinOp, Box<TExpr>, Box<TExpr>),
    Un(UnOp, Box<TExpr>),
    /// Integer to real conversion inserted by the checker.
    ToReal(Box<TExpr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TExpr {
    pub kind: TK,
    pub ty: Ty,
    pub pos: Pos,
}

impl TExpr {
    pub fn is_dist(&self) -> bool {
        matches!(self.kind, TK::Dist(..) | TK::Choice(_) | TK::Categorical(_))
    }

    /// Visit direct subexpressions.
    pub fn children(&self) -> Vec<&TExpr> {
        match &self.kind {
            TK::Lit(_) | TK::Param(_) | TK::Choice(_) => Vec::new(),
            TK::App(_, a) | TK::Dist(_, a) => a.iter().collect(),
            TK::Categorical(arms) => arms.iter().map(|(_, p)| p).collect(),
            TK::If(a, b, c) => vec![a, b, c],
            TK::Bin(_, a, b) => vec![a, b],
            TK::Un(_, a) | TK::ToReal(a) => vec![a],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evidence {
    pub lhs: TExpr,
    pub value: Lit,
    pub text: String,
    pub pos: Pos,
}

impl Evidence {
    /// An observation whose variable is known at compile time.
    pub fn is_pinned(&self) -> bool {
        match &self.lhs.kind {
            TK::App(_, args) => args.iter().all(|a| matches!(a.kind, TK::Lit(_))),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub expr: TExpr,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub types: Vec<TypeDef>,
    pub fns: Vec<FnDef>,
    pub evidence: Vec<Evidence>,
    pub queries: Vec<Query>,
}

impl Model {
    pub fn fn_by_name(&self, name: &str) -> Option<FnId> {
        self.fns.iter().position(|f| f.name == name).map(|i| i as FnId)
    }

    pub fn type_by_name(&self, name: &str) -> Option<TypeId> {
        self.types.iter().position(|t| t.name == name).map(|i| i as TypeId)
    }

    pub fn random_fns(&self) -> impl Iterator<Item = (FnId, &FnDef)> {
        self.fns.iter().enumerate().filter(|(_, f)| f.is_random()).map(|(i, f)| (i as FnId, f))
    }

    pub fn ty_name(&self, t: Ty) -> String {
        match t {
            Ty::Bool => "Boolean".into(),
            Ty::Int => "Integer".into(),
            Ty::Real => "Real".into(),
            Ty::Obj(i) => self.types[i as usize].name.clone(),
        }
    }

    pub fn lit_name(&self, l: Lit) -> String {
        match l {
            Lit::Bool(b) => b.to_string(),
            Lit::Int(k) => k.to_string(),
            Lit::Real(x) => format!("{x:?}"),
            Lit::Obj(t, i) => {
                let td = &self.types[t as usize];
                td.objects.get(i as usize).cloned().unwrap_or_else(|| format!("{}#{}", td.name, i))
            }
        }
    }

    /// Source-like rendering, with parameters shown by name.
    pub fn show(&self, f: Option<FnId>, e: &TExpr) -> String {
        let mut s = String::new();
        self.show_into(&mut s, f, e);
        s
    }

    fn show_into(&self, s: &mut String, f: Option<FnId>, e: &TExpr) {
        let list = |s: &mut String, xs: &[TExpr]| {
            for (i, a) in xs.iter().enumerate() {
                if i > 0 {
                    s.push_str(", ");
                }
                self.show_into(s, f, a);
            }
        };
        match &e.kind {
            TK::Lit(l) => s.push_str(&self.lit_name(*l)),
            TK::Param(i) => match f {
                Some(f) => s.push_str(&self.fns[f as usize].params[*i as usize].0),
                None => write!(s, "${i}").unwrap(),
            },
            TK::App(g, args) => {
                let def = &self.fns[*g as usize];
                if let FnKind::Number(t) = def.kind {
                    write!(s, "#{}", self.types[t as usize].name).unwrap();
                } else {
                    s.push_str(&def.name);
                    if !args.is_empty() {
                        s.push('(');
                        list(s, args);
                        s.push(')');
                    }
                }
            }
            TK::Dist(d, args) => {
                s.push_str(d.name());
                s.push('(');
                list(s, args);
                s.push(')');
            }
            TK::Choice(t) => {
                let n = &self.types[*t as usize].name;
                write!(s, "UniformChoice({{{n} x}})").unwrap();
            }
            TK::Categorical(arms) => {
                s.push_str("Categorical({");
                for (i, (k, p)) in arms.iter().enumerate() {
                    if i > 0 {
                        s.push_str(", ");
                    }
                    s.push_str(&self.lit_name(*k));
                    s.push_str(" -> ");
                    self.show_into(s, f, p);
                }
                s.push_str("})");
            }
            TK::If(c, a, b) => {
                s.push_str("(if ");
                self.show_into(s, f, c);
                s.push_str(" then ");
                self.show_into(s, f, a);
                s.push_str(" else ");
                self.show_into(s, f, b);
                s.push(')');
            }
            TK::Bin(op, a, b) => {
                s.push('(');
                self.show_into(s, f, a);
                write!(s, " {} ", op.symbol()).unwrap();
                self.show_into(s, f, b);
                s.push(')');
            }
            TK::Un(op, a) => {
                s.push(if *op == UnOp::Not { '!' } else { '-' });
                self.show_into(s, f, a);
            }
            TK::ToReal(a) => self.show_into(s, f, a),
        }
    }
}

enum Sym {
    Type(TypeId),
    Object(TypeId, i64),
    Fn(FnId),
}

struct Checker<'a> {
    syms: HashMap<String, Sym>,
    types: Vec<TypeDef>,
    fns: Vec<FnDef>,
    /// (decl, fn id) for bodies still to check
    pending: Vec<(&'a Decl, FnId)>,
}

fn name_err(pos: Pos, msg: String) -> FrontError {
    FrontError::sem(K::Name, pos, msg)
}

fn type_err(pos: Pos, msg: String) -> FrontError {
    FrontError::sem(K::Type, pos, msg)
}

fn placeholder(pos: Pos) -> TExpr {
    TExpr { kind: TK::Lit(Lit::Bool(false)), ty: Ty::Bool, pos }
}

pub fn validate(prog: &Program) -> Result<Model, FrontError> {
    let mut c = Checker { syms: HashMap::new(), types: Vec::new(), fns: Vec::new(), pending: Vec::new() };
    // pass 1: types
    for d in &prog.decls {
        if let Decl::Type { name, pos } = d {
            if is_builtin(name) || c.syms.contains_key(name) {
                return Err(name_err(*pos, format!("`{name}` is declared more than once")));
            }
            let id = c.types.len() as TypeId;
            c.types.push(TypeDef { name: name.clone(), objects: Vec::new(), number: None });
            c.syms.insert(name.clone(), Sym::Type(id));
        }
    }
    // pass 2: distinct objects, number variables, function signatures
    for d in &prog.decls {
        match d {
            Decl::Distinct { ty, objs, pos } => {
                let t = c.user_type(ty, *pos)?;
                for o in objs {
                    let names: Vec<String> = match o {
                        DistinctObj::Name(n) => vec![n.clone()],
                        DistinctObj::Array(n, k) => (0..*k).map(|i| format!("{n}[{i}]")).collect(),
                    };
                    for n in names {
                        if c.syms.contains_key(&n) {
                            return Err(name_err(*pos, format!("`{n}` is declared more than once")));
                        }
                        let idx = c.types[t as usize].objects.len() as i64;
                        c.types[t as usize].objects.push(n.clone());
                        c.syms.insert(n, Sym::Object(t, idx));
                    }
                }
            }
            Decl::Number { ty, pos, .. } => {
                let t = c.user_type(ty, *pos)?;
                if c.types[t as usize].number.is_some() {
                    return Err(name_err(*pos, format!("type `{ty}` has more than one number statement")));
                }
                let id = c.fns.len() as FnId;
                c.fns.push(FnDef {
                    name: format!("#{ty}"),
                    kind: FnKind::Number(t),
                    params: Vec::new(),
                    ret: Ty::Int,
                    body: placeholder(*pos),
                    pos: *pos,
                });
                c.types[t as usize].number = Some(id);
                c.pending.push((d, id));
            }
            Decl::Random { ret, name, params, pos, .. } | Decl::Fixed { ret, name, params, pos, .. } => {
                if c.syms.contains_key(name) || is_builtin(name) || DistKind::lookup(name).is_some() {
                    return Err(name_err(*pos, format!("`{name}` is declared more than once")));
                }
                let ret = c.resolve_ty(ret, *pos)?;
                let params = c.params(params, *pos, matches!(d, Decl::Fixed { .. }))?;
                let kind = if matches!(d, Decl::Random { .. }) { FnKind::Random } else { FnKind::Fixed };
                let id = c.fns.len() as FnId;
                c.fns.push(FnDef { name: name.clone(), kind, params, ret, body: placeholder(*pos), pos: *pos });
                c.syms.insert(name.clone(), Sym::Fn(id));
                c.pending.push((d, id));
            }
            _ => {}
        }
    }
    for (i, t) in c.types.iter().enumerate() {
        if t.is_open() && !t.objects.is_empty() {
            return Err(FrontError::sem(
                K::Unsupported,
                Pos::default(),
                format!("type `{}` has both distinct objects and a number statement", t.name),
            ));
        }
        if !t.is_open() && t.objects.is_empty() {
            let pos = prog
                .decls
                .iter()
                .find_map(|d| match d {
                    Decl::Type { name, pos } if *name == t.name => Some(*pos),
                    _ => None,
                })
                .unwrap_or_default();
            return Err(name_err(pos, format!("type `{}` (#{i}) has no objects and no number statement", t.name)));
        }
    }
    // pass 3: bodies
    let pending = std::mem::take(&mut c.pending);
    for (d, id) in pending {
        let body = match d {
            Decl::Number { body, .. } | Decl::Random { body, .. } | Decl::Fixed { body, .. } => body,
            _ => unreachable!(),
        };
        let f = c.fns[id as usize].clone();
        let scope: Vec<(String, Ty)> = f.params.clone();
        let fixed = f.kind == FnKind::Fixed;
        let mut e = c.expr(body, &scope, fixed)?;
        check_tail(&e, true, fixed)?;
        e = coerce(e, f.ret).map_err(|got| {
            type_err(body.pos, format!("body of `{}` has type {}, declared {}", f.name, c.tyname(got), c.tyname(f.ret)))
        })?;
        if f.kind != FnKind::Fixed && !e.is_dist() && !contains_dist(&e) {
            // deterministic random declarations are allowed (Const distribution)
        }
        c.fns[id as usize].body = e;
    }
    // unconditional self references and fixed-function cycles
    for (i, f) in c.fns.iter().enumerate() {
        if unconditional_ref(&f.body, i as FnId) {
            return Err(FrontError::sem(
                K::Cycle,
                f.pos,
                format!("`{}` refers to itself outside any conditional branch", f.name),
            ));
        }
    }
    check_fixed_acyclic(&c.fns)?;

    let mut evidence = Vec::new();
    let mut queries = Vec::new();
    for d in &prog.decls {
        match d {
            Decl::Obs { lhs, rhs, pos } => {
                let l = c.expr(lhs, &[], false)?;
                match &l.kind {
                    TK::App(g, _) if c.fns[*g as usize].kind == FnKind::Random => {}
                    _ => {
                        return Err(type_err(*pos, "observation must be a random function application".into()));
                    }
                }
                let v = c.literal(rhs)?;
                let v = match (l.ty, v) {
                    (Ty::Real, Lit::Int(k)) => Lit::Real(k as f64),
                    (t, v) if t == v.ty() => v,
                    (t, v) => {
                        return Err(type_err(
                            rhs.pos,
                            format!("observed value has type {}, expected {}", c.tyname(v.ty()), c.tyname(t)),
                        ))
                    }
                };
                evidence.push(Evidence { lhs: l, value: v, text: format!("{} = {}", print_expr(lhs), print_expr(rhs)), pos: *pos });
            }
            Decl::Query { expr, .. } => {
                let e = c.expr(expr, &[], false)?;
                check_tail(&e, false, false)?;
                queries.push(Query { expr: e, text: print_expr(expr) });
            }
            _ => {}
        }
    }
    Ok(Model { types: c.types, fns: c.fns, evidence, queries })
}

fn is_builtin(n: &str) -> bool {
    matches!(n, "Boolean" | "Integer" | "Real")
}

fn contains_dist(e: &TExpr) -> bool {
    e.is_dist() || e.children().into_iter().any(contains_dist)
}

/// Distributions only in tail position; none in fixed bodies or queries.
fn check_tail(e: &TExpr, tail: bool, fixed: bool) -> Result<(), FrontError> {
    if e.is_dist() {
        if !tail || fixed {
            return Err(type_err(e.pos, "distribution call outside tail position".into()));
        }
        for c in e.children() {
            check_tail(c, false, fixed)?;
        }
        return Ok(());
    }
    match &e.kind {
        TK::If(c, a, b) => {
            check_tail(c, false, fixed)?;
            check_tail(a, tail, fixed)?;
            check_tail(b, tail, fixed)
        }
        _ => e.children().into_iter().try_for_each(|c| check_tail(c, false, fixed)),
    }
}

fn unconditional_ref(e: &TExpr, me: FnId) -> bool {
    match &e.kind {
        TK::App(g, args) => *g == me || args.iter().any(|a| unconditional_ref(a, me)),
        TK::If(c, _, _) => unconditional_ref(c, me),
        _ => e.children().into_iter().any(|c| unconditional_ref(c, me)),
    }
}

fn check_fixed_acyclic(fns: &[FnDef]) -> Result<(), FrontError> {
    fn refs(e: &TExpr, out: &mut Vec<FnId>) {
        if let TK::App(g, _) = e.kind {
            out.push(g);
        }
        e.children().into_iter().for_each(|c| refs(c, out));
    }
    // 0 = unvisited, 1 = on stack, 2 = done
    fn visit(fns: &[FnDef], i: usize, state: &mut [u8]) -> Result<(), FrontError> {
        state[i] = 1;
        let mut out = Vec::new();
        refs(&fns[i].body, &mut out);
        for g in out {
            let g = g as usize;
            if fns[g].kind != FnKind::Fixed {
                continue;
            }
            if state[g] == 1 {
                return Err(FrontError::sem(K::Cycle, fns[i].pos, format!("fixed function `{}` is recursive", fns[i].name)));
            }
            if state[g] == 0 {
                visit(fns, g, state)?;
            }
        }
        state[i] = 2;
        Ok(())
    }
    let mut state = vec![0u8; fns.len()];
    for i in 0..fns.len() {
        if fns[i].kind == FnKind::Fixed && state[i] == 0 {
            visit(fns, i, &mut state)?;
        }
    }
    Ok(())
}

/// Convert `e` to type `t`, inserting an integer-to-real conversion where
/// allowed. Returns the offending type on mismatch.
fn coerce(e: TExpr, t: Ty) -> Result<TExpr, Ty> {
    if e.ty == t {
        return Ok(e);
    }
    if e.ty == Ty::Int && t == Ty::Real {
        return match e.kind {
            TK::Lit(Lit::Int(k)) => Ok(TExpr { kind: TK::Lit(Lit::Real(k as f64)), ty: Ty::Real, pos: e.pos }),
            TK::If(c, a, b) => {
                let a = coerce(*a, t)?;
                let b = coerce(*b, t)?;
                Ok(TExpr { kind: TK::If(c, Box::new(a), Box::new(b)), ty: Ty::Real, pos: e.pos })
            }
            _ if contains_dist(&e) => Err(e.ty),
            _ => {
                let pos = e.pos;
                Ok(TExpr { kind: TK::ToReal(Box::new(e)), ty: Ty::Real, pos })
            }
        };
    }
    Err(e.ty)
}

impl<'a> Checker<'a> {
    fn tyname(&self, t: Ty) -> String {
        match t {
            Ty::Bool => "Boolean".into(),
            Ty::Int => "Integer".into(),
            Ty::Real => "Real".into(),
            Ty::Obj(i) => self.types[i as usize].name.clone(),
        }
    }

    fn user_type(&self, name: &str, pos: Pos) -> Result<TypeId, FrontError> {
        match self.syms.get(name) {
            Some(Sym::Type(t)) => Ok(*t),
            _ => Err(name_err(pos, format!("unknown type `{name}`"))),
        }
    }

    fn resolve_ty(&self, name: &str, pos: Pos) -> Result<Ty, FrontError> {
        Ok(match name {
            "Boolean" => Ty::Bool,
            "Integer" => Ty::Int,
            "Real" => Ty::Real,
            _ => Ty::Obj(self.user_type(name, pos)?),
        })
    }

    /// Random functions take objects only; fixed functions may take any type.
    fn params(&self, ps: &[Param], pos: Pos, fixed: bool) -> Result<Vec<(String, Ty)>, FrontError> {
        if ps.len() > MAX_PARAMS {
            return Err(FrontError::sem(K::Arity, pos, format!("at most {MAX_PARAMS} parameters are supported")));
        }
        let mut out = Vec::new();
        for p in ps {
            let t = self.resolve_ty(&p.ty, pos)?;
            if !fixed && !matches!(t, Ty::Obj(_)) {
                return Err(type_err(pos, format!("parameter `{}` must have a user-declared type", p.name)));
            }
            if out.iter().any(|(n, _): &(String, Ty)| *n == p.name) {
                return Err(name_err(pos, format!("parameter `{}` is declared twice", p.name)));
            }
            out.push((p.name.clone(), t));
        }
        Ok(out)
    }

    fn literal(&self, e: &Expr) -> Result<Lit, FrontError> {
        match &e.kind {
            ExprKind::Bool(b) => Ok(Lit::Bool(*b)),
            ExprKind::Int(k) => Ok(Lit::Int(*k)),
            ExprKind::Real(x) => Ok(Lit::Real(*x)),
            ExprKind::Name(n) | ExprKind::Indexed(n, _) => {
                let key = match &e.kind {
                    ExprKind::Indexed(n, k) => format!("{n}[{k}]"),
                    _ => n.clone(),
                };
                match self.syms.get(&key) {
                    Some(Sym::Object(t, i)) => Ok(Lit::Obj(*t, *i)),
                    _ => Err(name_err(e.pos, format!("`{key}` is not a distinct object"))),
                }
            }
            _ => Err(type_err(e.pos, "expected a literal value".into())),
        }
    }

    fn expr(&self, e: &Expr, scope: &[(String, Ty)], fixed: bool) -> Result<TExpr, FrontError> {
        let pos = e.pos;
        let mk = |kind, ty| Ok(TExpr { kind, ty, pos });
        match &e.kind {
            ExprKind::Bool(b) => mk(TK::Lit(Lit::Bool(*b)), Ty::Bool),
            ExprKind::Int(k) => mk(TK::Lit(Lit::Int(*k)), Ty::Int),
            ExprKind::Real(x) => mk(TK::Lit(Lit::Real(*x)), Ty::Real),
            ExprKind::Name(n) => {
                if let Some(i) = scope.iter().position(|(p, _)| p == n) {
                    return mk(TK::Param(i as u8), scope[i].1);
                }
                match self.syms.get(n) {
                    Some(Sym::Object(t, i)) => mk(TK::Lit(Lit::Obj(*t, *i)), Ty::Obj(*t)),
                    Some(Sym::Fn(_)) => self.app(n, &[], pos, scope, fixed),
                    Some(Sym::Type(_)) => Err(type_err(pos, format!("type `{n}` used as a value"))),
                    None => Err(name_err(pos, format!("undeclared identifier `{n}`"))),
                }
            }
            ExprKind::Indexed(n, k) => match self.syms.get(&format!("{n}[{k}]")) {
                Some(Sym::Object(t, i)) => mk(TK::Lit(Lit::Obj(*t, *i)), Ty::Obj(*t)),
                _ => Err(name_err(pos, format!("undeclared object `{n}[{k}]`"))),
            },
            ExprKind::Count(t) => {
                let t = self.user_type(t, pos)?;
                let td = &self.types[t as usize];
                match td.number {
                    Some(f) => {
                        if fixed {
                            return Err(type_err(pos, "fixed functions cannot read number variables".into()));
                        }
                        mk(TK::App(f, Vec::new()), Ty::Int)
                    }
                    None => mk(TK::Lit(Lit::Int(td.objects.len() as i64)), Ty::Int),
                }
            }
            ExprKind::Call(n, args) => {
                if let Some(d) = DistKind::lookup(n) {
                    let (sig, ret) = d.signature();
                    if sig.len() != args.len() {
                        return Err(FrontError::sem(
                            K::Arity,
                            pos,
                            format!("{n} takes {} arguments, got {}", sig.len(), args.len()),
                        ));
                    }
                    let mut targs = Vec::new();
                    for (a, &t) in args.iter().zip(sig) {
                        let ta = self.expr(a, scope, fixed)?;
                        let got = ta.ty;
                        targs.push(coerce(ta, t).map_err(|_| {
                            type_err(a.pos, format!("{n} argument has type {}, expected {}", self.tyname(got), self.tyname(t)))
                        })?);
                    }
                    return mk(TK::Dist(d, targs), ret);
                }
                if matches!(n.as_str(), "UniformChoice" | "Categorical") {
                    return Err(type_err(pos, format!("{n} takes a set literal in braces")));
                }
                self.app(n, args, pos, scope, fixed)
            }
            ExprKind::Choice { ty, .. } => {
                let t = self.user_type(ty, pos)?;
                if fixed {
                    return Err(type_err(pos, "distribution in a fixed function".into()));
                }
                mk(TK::Choice(t), Ty::Obj(t))
            }
            ExprKind::Categorical(arms) => {
                if arms.is_empty() || arms.len() > MAX_CATEGORIES {
                    return Err(FrontError::sem(K::Arity, pos, format!("Categorical needs 1 to {MAX_CATEGORIES} entries")));
                }
                let mut out = Vec::new();
                let mut kty = None;
                for (k, p) in arms {
                    let lit = self.literal(k)?;
                    if matches!(lit, Lit::Real(_)) {
                        return Err(type_err(k.pos, "Categorical keys cannot be real numbers".into()));
                    }
                    if let Some(t) = kty {
                        if t != lit.ty() {
                            return Err(type_err(k.pos, "Categorical keys must share one type".into()));
                        }
                    }
                    kty = Some(lit.ty());
                    if out.iter().any(|(l, _): &(Lit, TExpr)| *l == lit) {
                        return Err(type_err(k.pos, "duplicate Categorical key".into()));
                    }
                    let tp = self.expr(p, scope, fixed)?;
                    let got = tp.ty;
                    let tp = coerce(tp, Ty::Real)
                        .map_err(|_| type_err(p.pos, format!("probability has type {}", self.tyname(got))))?;
                    out.push((lit, tp));
                }
                mk(TK::Categorical(out), kty.unwrap())
            }
            ExprKind::If(c, a, b) => {
                let c = self.expr(c, scope, fixed)?;
                if c.ty != Ty::Bool {
                    return Err(type_err(c.pos, format!("condition has type {}", self.tyname(c.ty))));
                }
                let a = self.expr(a, scope, fixed)?;
                let b = self.expr(b, scope, fixed)?;
                let (a, b, t) = self.join(a, b, pos)?;
                mk(TK::If(Box::new(c), Box::new(a), Box::new(b)), t)
            }
            ExprKind::Unary(op, a) => {
                let a = self.expr(a, scope, fixed)?;
                match op {
                    UnOp::Not if a.ty == Ty::Bool => mk(TK::Un(*op, Box::new(a)), Ty::Bool),
                    UnOp::Neg if a.ty.is_numeric() => {
                        let t = a.ty;
                        mk(TK::Un(*op, Box::new(a)), t)
                    }
                    _ => Err(type_err(pos, format!("operator cannot apply to {}", self.tyname(a.ty)))),
                }
            }
            ExprKind::Binary(op, a, b) => {
                let a = self.expr(a, scope, fixed)?;
                let b = self.expr(b, scope, fixed)?;
                let bad = |a: &TExpr, b: &TExpr| {
                    Err(type_err(
                        pos,
                        format!("`{}` cannot apply to {} and {}", op.symbol(), self.tyname(a.ty), self.tyname(b.ty)),
                    ))
                };
                match op {
                    BinOp::And | BinOp::Or => {
                        if a.ty != Ty::Bool || b.ty != Ty::Bool {
                            return bad(&a, &b);
                        }
                        mk(TK::Bin(*op, Box::new(a), Box::new(b)), Ty::Bool)
                    }
                    BinOp::Eq | BinOp::Ne => {
                        if a.ty.is_numeric() && b.ty.is_numeric() && a.ty != b.ty {
                            let a = coerce(a, Ty::Real).unwrap();
                            let b = coerce(b, Ty::Real).unwrap();
                            return mk(TK::Bin(*op, Box::new(a), Box::new(b)), Ty::Bool);
                        }
                        if a.ty != b.ty {
                            return bad(&a, &b);
                        }
                        mk(TK::Bin(*op, Box::new(a), Box::new(b)), Ty::Bool)
                    }
                    BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                        if !a.ty.is_numeric() || !b.ty.is_numeric() {
                            return bad(&a, &b);
                        }
                        let (a, b, _) = self.join(a, b, pos)?;
                        mk(TK::Bin(*op, Box::new(a), Box::new(b)), Ty::Bool)
                    }
                    BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div => {
                        if !a.ty.is_numeric() || !b.ty.is_numeric() {
                            return bad(&a, &b);
                        }
                        let t = if *op == BinOp::Div || a.ty == Ty::Real || b.ty == Ty::Real { Ty::Real } else { Ty::Int };
                        let a = coerce(a, t).unwrap();
                        let b = coerce(b, t).unwrap();
                        mk(TK::Bin(*op, Box::new(a), Box::new(b)), t)
                    }
                }
            }
        }
    }

    fn join(&self, a: TExpr, b: TExpr, pos: Pos) -> Result<(TExpr, TExpr, Ty), FrontError> {
        if a.ty == b.ty {
            let t = a.ty;
            return Ok((a, b, t));
        }
        if a.ty.is_numeric() && b.ty.is_numeric() {
            let (ta, tb) = (a.ty, b.ty);
            let a = coerce(a, Ty::Real).map_err(|_| type_err(pos, format!("branches have types {} and {}", self.tyname(ta), self.tyname(tb))))?;
            let b = coerce(b, Ty::Real).map_err(|_| type_err(pos, format!("branches have types {} and {}", self.tyname(ta), self.tyname(tb))))?;
            return Ok((a, b, Ty::Real));
        }
        Err(type_err(pos, format!("branches have types {} and {}", self.tyname(a.ty), self.tyname(b.ty))))
    }

    fn app(&self, n: &str, args: &[Expr], pos: Pos, scope: &[(String, Ty)], fixed: bool) -> Result<TExpr, FrontError> {
        let Some(Sym::Fn(g)) = self.syms.get(n) else {
            return Err(name_err(pos, format!("undeclared function `{n}`")));
        };
        let def = &self.fns[*g as usize];
        if fixed && def.kind != FnKind::Fixed {
            return Err(type_err(pos, format!("fixed functions cannot read random function `{n}`")));
        }
        if def.params.len() != args.len() {
            return Err(FrontError::sem(
                K::Arity,
                pos,
                format!("`{n}` takes {} arguments, got {}", def.params.len(), args.len()),
            ));
        }
        let mut targs = Vec::new();
        for (a, (_, t)) in args.iter().zip(&def.params) {
            let ta = self.expr(a, scope, fixed)?;
            if ta.ty != *t {
                return Err(type_err(a.pos, format!("argument of `{n}` has type {}, expected {}", self.tyname(ta.ty), self.tyname(*t))));
            }
            targs.push(ta);
        }
        Ok(TExpr { kind: TK::App(*g, targs), ty: def.ret, pos })
    }
}

#[cfg(test)]
mod tests {
    use super::super::load;
    use super::*;

    const URN: &str = "
        type Ball; type Draw; type Color;
        distinct Color Blue, Green;
        distinct Draw Draw[3];
        #Ball ~ UniformInt(1, 20);
        random Color color(Ball b) ~ Categorical({Blue -> 0.9, Green -> 0.1});
        random Ball drawn(Draw d) ~ UniformChoice({Ball b});
        obs color(drawn(Draw[0])) = Blue;
        obs color(drawn(Draw[1])) = Green;
        query color(drawn(Draw[2]));
    ";

    #[test]
    fn urn_ball_signatures() {
        let m = load(URN).unwrap();
        let drawn = &m.fns[m.fn_by_name("drawn").unwrap() as usize];
        let ball = m.type_by_name("Ball").unwrap();
        let draw = m.type_by_name("Draw").unwrap();
        assert_eq!(drawn.params[0].1, Ty::Obj(draw));
        assert_eq!(drawn.ret, Ty::Obj(ball));
        let color = &m.fns[m.fn_by_name("color").unwrap() as usize];
        assert_eq!(color.params[0].1, Ty::Obj(ball));
        assert_eq!(color.ret, Ty::Obj(m.type_by_name("Color").unwrap()));
        assert!(m.types[ball as usize].is_open());
        assert_eq!(m.types[draw as usize].objects.len(), 3);
        assert!(!m.evidence[0].is_pinned());
    }

    #[test]
    fn undeclared_function_is_a_name_error() {
        let e = load("random Boolean a ~ f(1);").unwrap_err();
        assert!(matches!(e, FrontError::Semantic { kind: K::Name, .. }), "{e}");
    }

    #[test]
    fn unconditional_self_reference_is_rejected() {
        let e = load("random Boolean b ~ b;").unwrap_err();
        assert!(matches!(e, FrontError::Semantic { kind: K::Cycle, .. }), "{e}");
        assert!(e.to_string().contains("line 1"));
        // inside a branch it is fine
        load("random Boolean c ~ Bernoulli(0.5); random Boolean b ~ if c then true else b;").unwrap();
    }

    #[test]
    fn type_and_arity_errors() {
        let e = load("random Real x ~ Gaussian(0);").unwrap_err();
        assert!(matches!(e, FrontError::Semantic { kind: K::Arity, .. }), "{e}");
        let e = load("random Boolean x ~ Gaussian(0, 1);").unwrap_err();
        assert!(matches!(e, FrontError::Semantic { kind: K::Type, .. }), "{e}");
        let e = load("random Real x ~ 1 + Gaussian(0, 1);").unwrap_err();
        assert!(e.to_string().contains("tail"), "{e}");
    }

    #[test]
    fn integer_bodies_widen_to_real() {
        let m = load("random Real r ~ 2;").unwrap();
        assert_eq!(m.fns[0].body.kind, TK::Lit(Lit::Real(2.0)));
    }

    #[test]
    fn every_node_has_one_type() {
        let m = load(URN).unwrap();
        fn walk(e: &TExpr, n: &mut usize) {
            *n += 1;
            e.children().into_iter().for_each(|c| walk(c, n));
        }
        let mut n = 0;
        for f in &m.fns {
            walk(&f.body, &mut n);
        }
        assert!(n > 3);
    }
}
