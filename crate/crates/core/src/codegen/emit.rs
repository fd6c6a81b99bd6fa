//! Rust source emission for one specialised inference program.

use crate::analysis::{Analysis, ArgMap, Node, Site};
use crate::frontend::ast::{BinOp, UnOp};
use crate::frontend::typed::{FnId, FnKind, Lit, Model, TExpr, Ty, TK};

use super::Options;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Scope {
    /// Body of a random function: parameters are `a0`, `a1` (u32).
    Random,
    /// Body of a fixed function: parameters are `p0`, `p1`.
    Fixed,
    /// Observation or query expression.
    Pseudo,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Walk {
    Register,
    Trace,
}

/// Indented line buffer.
#[derive(Default)]
struct Code {
    buf: String,
    depth: usize,
}

impl Code {
    fn line(&mut self, s: &str) {
        for _ in 0..self.depth {
            self.buf.push_str("    ");
        }
        self.buf.push_str(s);
        self.buf.push('\n');
    }

    fn open(&mut self, s: &str) {
        self.line(s);
        self.depth += 1;
    }

    fn close(&mut self, s: &str) {
        self.depth -= 1;
        self.line(s);
    }

    fn blank(&mut self) {
        self.buf.push('\n');
    }
}

pub(super) struct Emitter<'a> {
    m: &'a Model,
    a: &'a Analysis,
    opts: &'a Options,
    nodes: Vec<Node>,
    fresh: usize,
}

fn rust_ty(t: Ty) -> &'static str {
    match t {
        Ty::Bool => "bool",
        Ty::Int | Ty::Obj(_) => "i64",
        Ty::Real => "f64",
    }
}

fn value_ctor(t: Ty) -> &'static str {
    match t {
        Ty::Bool => "Value::Bool",
        Ty::Int => "Value::Int",
        Ty::Real => "Value::Real",
        Ty::Obj(_) => "Value::Obj",
    }
}

fn value_kind(t: Ty) -> &'static str {
    match t {
        Ty::Bool => "ValueKind::Bool",
        Ty::Int => "ValueKind::Int",
        Ty::Real => "ValueKind::Real",
        Ty::Obj(_) => "ValueKind::Obj",
    }
}

fn from_value(t: Ty) -> &'static str {
    match t {
        Ty::Bool => "as_bool()",
        Ty::Int | Ty::Obj(_) => "as_int()",
        Ty::Real => "as_real()",
    }
}

fn real_lit(x: f64) -> String {
    let s = format!("{x:?}f64");
    if x < 0.0 {
        format!("({s})")
    } else {
        s
    }
}

fn lit(l: Lit) -> String {
    match l {
        Lit::Bool(b) => b.to_string(),
        Lit::Int(k) | Lit::Obj(_, k) => {
            if k < 0 {
                format!("({k}i64)")
            } else {
                format!("{k}i64")
            }
        }
        Lit::Real(x) => real_lit(x),
    }
}

fn has_app(e: &TExpr) -> bool {
    matches!(e.kind, TK::App(..)) || e.children().into_iter().any(has_app)
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect()
}

impl<'a> Emitter<'a> {
    pub(super) fn new(m: &'a Model, a: &'a Analysis, opts: &'a Options) -> Self {
        Emitter { m, a, opts, nodes: m.nodes(), fresh: 0 }
    }

    fn tmpl(&self, n: Node) -> usize {
        self.nodes.iter().position(|&x| x == n).expect("node has a template")
    }

    fn ident(&self, n: Node) -> String {
        match n {
            Node::Fn(f) => {
                let def = &self.m.fns[f as usize];
                match def.kind {
                    FnKind::Number(t) => format!("num_{}", sanitize(&self.m.types[t as usize].name)),
                    _ => sanitize(&def.name),
                }
            }
            Node::Obs(i) => format!("obs{i}"),
            Node::Query(k) => format!("query{k}"),
        }
    }

    fn tconst(&self, n: Node) -> String {
        format!("T_{}", self.ident(n))
    }

    fn node_ty(&self, n: Node) -> Ty {
        match n {
            Node::Fn(f) => self.m.fns[f as usize].ret,
            Node::Obs(i) => self.m.evidence[i].lhs.ty,
            Node::Query(k) => self.m.queries[k].expr.ty,
        }
    }

    fn arity(&self, n: Node) -> usize {
        match n {
            Node::Fn(f) => self.m.fns[f as usize].params.len(),
            _ => 0,
        }
    }

    fn param_types(&self, n: Node) -> Vec<Ty> {
        match n {
            Node::Fn(f) => self.m.fns[f as usize].params.iter().map(|p| p.1).collect(),
            _ => Vec::new(),
        }
    }

    fn closed_count(&self, t: Ty) -> Option<usize> {
        match t {
            Ty::Obj(i) if !self.m.types[i as usize].is_open() => Some(self.m.types[i as usize].objects.len()),
            _ => None,
        }
    }

    fn var(&mut self) -> String {
        self.fresh += 1;
        format!("t{}", self.fresh)
    }

    fn number_node(&self, t: u16) -> Node {
        Node::Fn(self.m.types[t as usize].number.expect("open type"))
    }

    fn pins(&self, f: FnId) -> Vec<(u32, u32, Lit)> {
        let mut out: Vec<(u32, u32, Lit)> = Vec::new();
        for ev in &self.m.evidence {
            if !ev.is_pinned() {
                continue;
            }
            let TK::App(g, args) = &ev.lhs.kind else { continue };
            if *g != f {
                continue;
            }
            let mut ix = [0u32; 2];
            for (i, a) in args.iter().enumerate() {
                if let TK::Lit(l) = a.kind {
                    ix[i] = l.key() as u32;
                }
            }
            if !out.iter().any(|p| p.0 == ix[0] && p.1 == ix[1]) {
                out.push((ix[0], ix[1], ev.value));
            }
        }
        out
    }

    // ---- expressions ----

    fn arg(&mut self, e: &TExpr, sc: Scope) -> String {
        match (&e.kind, sc) {
            (TK::Param(i), Scope::Random) => format!("a{i}"),
            (TK::Lit(l), _) => format!("{}u32", l.key()),
            _ => format!("(({}) as u32)", self.expr(e, sc)),
        }
    }

    fn getter_call(&mut self, g: FnId, args: &[TExpr], sc: Scope) -> String {
        let id = self.ident(Node::Fn(g));
        let mut lets = Vec::new();
        let mut names = Vec::new();
        for a in args {
            if has_app(a) {
                let v = self.var();
                let rendered = self.arg(a, sc);
                lets.push(format!("let {v} = {rendered};"));
                names.push(v);
            } else {
                names.push(self.arg(a, sc));
            }
        }
        while names.len() < 2 {
            names.push("0".into());
        }
        let call = format!("self.val_{id}::<P>(rt, {}, {})", names[0], names[1]);
        if lets.is_empty() {
            call
        } else {
            format!("{{ {} {call} }}", lets.join(" "))
        }
    }

    fn expr(&mut self, e: &TExpr, sc: Scope) -> String {
        match &e.kind {
            TK::Lit(l) => lit(*l),
            TK::Param(i) => match sc {
                Scope::Fixed => format!("p{i}"),
                _ => format!("(a{i} as i64)"),
            },
            TK::App(g, args) => {
                let def = &self.m.fns[*g as usize];
                if def.kind == FnKind::Fixed {
                    let rendered: Vec<String> = args.iter().map(|a| self.expr(a, sc)).collect();
                    format!("fx_{}({})", sanitize(&def.name), rendered.join(", "))
                } else {
                    self.getter_call(*g, args, sc)
                }
            }
            TK::If(c, a, b) => {
                let (c, a, b) = (self.expr(c, sc), self.expr(a, sc), self.expr(b, sc));
                format!("(if {c} {{ {a} }} else {{ {b} }})")
            }
            TK::Bin(op, a, b) => {
                let (x, y) = (self.expr(a, sc), self.expr(b, sc));
                let sym = match op {
                    BinOp::Or => "|",
                    BinOp::And => "&",
                    other => other.symbol(),
                };
                format!("({x} {sym} {y})")
            }
            TK::Un(UnOp::Not, a) => format!("(!{})", self.expr(a, sc)),
            TK::Un(UnOp::Neg, a) => format!("(-{})", self.expr(a, sc)),
            TK::ToReal(a) => format!("(({}) as f64)", self.expr(a, sc)),
            TK::Dist(..) | TK::Choice(_) | TK::Categorical(_) => unreachable!("distribution outside tail position"),
        }
    }

    fn tail(&mut self, e: &TExpr, sc: Scope) -> String {
        match &e.kind {
            TK::If(c, a, b) => {
                let c = self.expr(c, sc);
                let (a, b) = (self.tail(a, sc), self.tail(b, sc));
                format!("if {c} {{ {a} }} else {{ {b} }}")
            }
            TK::Dist(d, args) => {
                let r: Vec<String> = args.iter().map(|x| self.expr(x, sc)).collect();
                format!("Dist::{}({})", d.name(), r.join(", "))
            }
            TK::Choice(t) => {
                if self.m.types[*t as usize].is_open() {
                    let n = self.ident(self.number_node(*t));
                    format!("Dist::UniformChoice(self.val_{n}::<P>(rt, 0, 0))")
                } else {
                    format!("Dist::UniformChoice({})", self.m.types[*t as usize].objects.len())
                }
            }
            TK::Categorical(arms) => {
                let kind = value_kind(e.ty);
                if arms.iter().all(|(_, p)| matches!(p.kind, TK::Lit(_))) {
                    let entries: Vec<String> = arms
                        .iter()
                        .map(|(k, p)| {
                            let TK::Lit(l) = p.kind else { unreachable!() };
                            let x = match l {
                                Lit::Real(x) => x,
                                Lit::Int(i) => i as f64,
                                _ => 0.0,
                            };
                            format!("({}, {})", k.key(), real_lit(x))
                        })
                        .collect();
                    format!("Dist::Categorical({kind}, CatTable::Static(&[{}]))", entries.join(", "))
                } else {
                    let entries: Vec<String> =
                        arms.iter().map(|(k, p)| format!("({}, {})", k.key(), self.expr(p, sc))).collect();
                    format!("Dist::Categorical({kind}, CatTable::inline(&[{}]))", entries.join(", "))
                }
            }
            _ => format!("Dist::Const({}({}))", value_ctor(e.ty), self.expr(e, sc)),
        }
    }

    // ---- registrations ----

    fn site_switching(&self, node: Node, key: &str) -> bool {
        self.a.sites.get(&node).and_then(|s| s.iter().find(|x| x.key == key)).is_some_and(|s: &Site| s.switching)
    }

    fn tracked(&self, g: FnId) -> bool {
        self.m.is_tracked(g)
    }

    fn register_site(&mut self, c: &mut Code, node: Node, g: FnId, args: &[TExpr], key: &str, walk: Walk, sc: Scope) {
        let me = self.node_label(node);
        let mut lines = Vec::new();
        match walk {
            Walk::Trace => lines.push(("ch", format!("// {key} read by {me}"))),
            Walk::Register => {
                if self.opts.acu {
                    if self.site_switching(node, key) {
                        lines.push(("cont", format!("// Cont({key}) += {me}")));
                    }
                    lines.push(("ch", format!("// Ch({key}) += {me}")));
                }
                if self.opts.rc && self.tracked(g) {
                    lines.push(("rc", format!("// inc_cnt({key})")));
                }
            }
        }
        if lines.is_empty() {
            return;
        }
        let v = self.var();
        let t = self.tconst(Node::Fn(g));
        let mut ix = Vec::new();
        for a in args {
            ix.push(self.arg(a, sc));
        }
        while ix.len() < 2 {
            ix.push("0".into());
        }
        c.line(&format!("let {v} = VarId::new({t}, {}, {});", ix[0], ix[1]));
        for (op, comment) in lines {
            c.line(&comment);
            c.line(&format!("out.{op}({v});"));
        }
    }

    fn regs(&mut self, c: &mut Code, node: Node, e: &TExpr, seen: &mut Vec<String>, walk: Walk, sc: Scope) {
        match &e.kind {
            TK::If(cond, a, b) => {
                self.regs(c, node, cond, seen, walk, sc);
                c.line(&format!("// if {}", self.m.show(self.m.node_fn(node), cond)));
                let ce = self.expr(cond, sc);
                c.open(&format!("if {ce} {{"));
                self.regs(c, node, a, &mut seen.clone(), walk, sc);
                c.depth -= 1;
                c.open("} else {");
                self.regs(c, node, b, &mut seen.clone(), walk, sc);
                c.close("}");
            }
            TK::App(g, args) if self.m.fns[*g as usize].is_random() => {
                for a in args {
                    self.regs(c, node, a, seen, walk, sc);
                }
                let key = self.m.show(self.m.node_fn(node), e);
                if !seen.contains(&key) {
                    seen.push(key.clone());
                    self.register_site(c, node, *g, args, &key, walk, sc);
                }
            }
            TK::Choice(t) => {
                if let Some(nf) = self.m.types[*t as usize].number {
                    let key = format!("#{}", self.m.types[*t as usize].name);
                    if !seen.contains(&key) {
                        seen.push(key.clone());
                        self.register_site(c, node, nf, &[], &key, walk, sc);
                    }
                }
            }
            _ => {
                for ch in e.children() {
                    self.regs(c, node, ch, seen, walk, sc);
                }
            }
        }
    }

    /// Display name of a node's generic instance, e.g. `x(d)`.
    fn node_label(&self, n: Node) -> String {
        match n {
            Node::Fn(f) => {
                let def = &self.m.fns[f as usize];
                if let FnKind::Number(t) = def.kind {
                    return format!("#{}", self.m.types[t as usize].name);
                }
                if def.params.is_empty() {
                    def.name.clone()
                } else {
                    let ps: Vec<&str> = def.params.iter().map(|p| p.0.as_str()).collect();
                    format!("{}({})", def.name, ps.join(", "))
                }
            }
            Node::Obs(i) => format!("obs[{i}]"),
            Node::Query(k) => format!("query[{k}]"),
        }
    }

    fn scope_of(n: Node) -> Scope {
        match n {
            Node::Fn(_) => Scope::Random,
            _ => Scope::Pseudo,
        }
    }

    // ---- program ----

    pub(super) fn program(&mut self) -> String {
        let mut c = Code::default();
        let o = self.opts;
        let flags: Vec<&str> = [(!o.db, "--no-db"), (!o.rc, "--no-rc"), (!o.acu, "--no-acu")]
            .into_iter()
            .filter(|f| f.0)
            .map(|f| f.1)
            .collect();
        c.line(&format!("//! Inference program for `{}`, algorithm {}.", o.model_name, o.algo));
        if !flags.is_empty() {
            c.line(&format!("//! Build flags: {}.", flags.join(" ")));
        }
        c.line("#![allow(unused, non_snake_case, non_upper_case_globals, clippy::all)]");
        c.blank();
        c.line("use blog_runtime::driver::accept_with;");
        c.line("use blog_runtime::model::{ArgMap, Edge};");
        c.line("use blog_runtime::{CatTable, CompiledModel, ConjugatePair, Dist, DynamicTable, Flags, MemoCell, QueryInfo, RefList, Rt, Table2, TemplateInfo, TemplateKind, TypeInfo, Value, ValueKind, VarId, NEVER};");
        c.blank();
        self.consts(&mut c);
        self.fixed_fns(&mut c);
        self.struct_decl(&mut c);
        c.open("impl Model {");
        self.constructor(&mut c);
        for n in self.nodes.clone() {
            self.node_fns(&mut c, n);
        }
        c.close("}");
        c.blank();
        self.trait_impl(&mut c);
        c.open("fn main() {");
        let clear = match o.clear_memory_every {
            Some(k) => format!("Some({k})"),
            None => "None".into(),
        };
        c.line(&format!(
            "blog_runtime::cli::main_with(Box::new(Model::new()), {:?}, FLAGS, &NAMES, {clear});",
            o.algo
        ));
        c.close("}");
        c.buf
    }

    fn consts(&mut self, c: &mut Code) {
        let o = self.opts;
        c.line(&format!("const FLAGS: Flags = Flags {{ db: {}, rc: {}, acu: {} }};", o.db, o.rc, o.acu));
        for (i, n) in self.nodes.clone().into_iter().enumerate() {
            c.line(&format!("const {}: u16 = {i};", self.tconst(n)));
        }
        c.blank();
        let names: Vec<String> = self.nodes.iter().map(|&n| format!("{:?}", self.template_name(n))).collect();
        c.line(&format!("static NAMES: [&str; {}] = [{}];", names.len(), names.join(", ")));
        c.blank();
        c.open(&format!("static TEMPLATES: [TemplateInfo; {}] = [", self.nodes.len()));
        for n in self.nodes.clone() {
            let kind = match n {
                Node::Fn(f) if matches!(self.m.fns[f as usize].kind, FnKind::Number(_)) => "Number",
                Node::Fn(_) => "Random",
                Node::Obs(_) => "Observation",
                Node::Query(_) => "Query",
            };
            let args: Vec<String> = self
                .param_types(n)
                .into_iter()
                .map(|t| match t {
                    Ty::Obj(i) => i.to_string(),
                    _ => "0".into(),
                })
                .collect();
            let ty = self.node_ty(n);
            let vt = match ty {
                Ty::Obj(i) => format!("Some({i})"),
                _ => "None".into(),
            };
            let (tracked, conj) = match n {
                Node::Fn(f) => (
                    self.tracked(f),
                    match self.a.conjugacy.get(&f).and_then(|t| t.pair) {
                        Some(p) => format!("Some(ConjugatePair::{p:?})"),
                        None => "None".into(),
                    },
                ),
                _ => (false, "None".into()),
            };
            c.line(&format!(
                "TemplateInfo {{ name: {:?}, kind: TemplateKind::{kind}, arg_types: &[{}], value_kind: {}, value_type: {vt}, tracked: {tracked}, conjugate: {conj} }},",
                self.template_name(n),
                args.join(", "),
                value_kind(ty)
            ));
        }
        c.close("];");
        c.blank();
        c.open(&format!("static TYPES: [TypeInfo; {}] = [", self.m.types.len()));
        for t in &self.m.types {
            let labels: Vec<String> = t.objects.iter().map(|l| format!("{l:?}")).collect();
            let num = match t.number {
                Some(f) => format!("Some({})", self.tmpl(Node::Fn(f))),
                None => "None".into(),
            };
            c.line(&format!("TypeInfo {{ name: {:?}, labels: &[{}], number: {num} }},", t.name, labels.join(", ")));
        }
        c.close("];");
        c.blank();
        let mut ev = Vec::new();
        for (i, e) in self.m.evidence.iter().enumerate() {
            if e.is_pinned() {
                let TK::App(g, args) = &e.lhs.kind else { unreachable!() };
                let mut ix: Vec<String> = args
                    .iter()
                    .map(|a| match a.kind {
                        TK::Lit(l) => l.key().to_string(),
                        _ => "0".into(),
                    })
                    .collect();
                while ix.len() < 2 {
                    ix.push("0".into());
                }
                ev.push(format!("VarId::new({}, {}, {})", self.tconst(Node::Fn(*g)), ix[0], ix[1]));
            } else {
                ev.push(format!("VarId::new({}, 0, 0)", self.tconst(Node::Obs(i))));
            }
        }
        c.line(&format!("static EVIDENCE: [VarId; {}] = [{}];", ev.len(), ev.join(", ")));
        c.open(&format!("static QUERIES: [QueryInfo; {}] = [", self.m.queries.len()));
        for (k, q) in self.m.queries.iter().enumerate() {
            let vt = match q.expr.ty {
                Ty::Obj(i) => format!("Some({i})"),
                _ => "None".into(),
            };
            c.line(&format!(
                "QueryInfo {{ text: {:?}, node: VarId::new({}, 0, 0), kind: {}, value_type: {vt} }},",
                q.text,
                self.tconst(Node::Query(k)),
                value_kind(q.expr.ty)
            ));
        }
        c.close("];");
        c.blank();
        // static children bound
        for n in self.nodes.clone() {
            let Node::Fn(f) = n else { continue };
            let edges = self.a.children.get(&f).cloned().unwrap_or_default();
            let rendered: Vec<String> = edges
                .iter()
                .map(|e| {
                    let maps: Vec<String> = e
                        .args
                        .iter()
                        .map(|m| match m {
                            ArgMap::Same(i) => format!("ArgMap::Same({i})"),
                            ArgMap::Const(k) => format!("ArgMap::Const({k})"),
                            ArgMap::All => "ArgMap::All".into(),
                        })
                        .collect();
                    format!(
                        "Edge {{ child: {}, args: &[{}], switching: {} }}",
                        self.tconst(e.child),
                        maps.join(", "),
                        e.switching
                    )
                })
                .collect();
            c.line(&format!("static E_{}: [Edge; {}] = [{}];", self.ident(n), rendered.len(), rendered.join(", ")));
        }
        c.blank();
    }

    fn template_name(&self, n: Node) -> String {
        match n {
            Node::Fn(f) => {
                let def = &self.m.fns[f as usize];
                match def.kind {
                    FnKind::Number(t) => format!("#{}", self.m.types[t as usize].name),
                    _ => def.name.clone(),
                }
            }
            Node::Obs(i) => format!("obs{i}"),
            Node::Query(k) => format!("query{k}"),
        }
    }

    fn fixed_fns(&mut self, c: &mut Code) {
        for def in self.m.fns.clone().iter().filter(|d| d.kind == FnKind::Fixed) {
            let ps: Vec<String> = def.params.iter().enumerate().map(|(i, p)| format!("p{i}: {}", rust_ty(p.1))).collect();
            c.open(&format!("fn fx_{}({}) -> {} {{", sanitize(&def.name), ps.join(", "), rust_ty(def.ret)));
            let body = self.expr(&def.body, Scope::Fixed);
            c.line(&body);
            c.close("}");
            c.blank();
        }
    }

    fn storage_ty(&self, n: Node) -> String {
        let v = rust_ty(self.node_ty(n));
        match self.arity(n) {
            0 => format!("MemoCell<{v}>"),
            1 => format!("DynamicTable<{v}>"),
            _ => format!("Table2<{v}>"),
        }
    }

    fn open_types(&self) -> Vec<u16> {
        (0..self.m.types.len() as u16).filter(|&t| self.m.types[t as usize].is_open()).collect()
    }

    fn struct_decl(&mut self, c: &mut Code) {
        c.open("struct Model {");
        for n in self.nodes.clone() {
            if let Node::Fn(_) = n {
                c.line(&format!("s_{}: {},", self.ident(n), self.storage_ty(n)));
            }
        }
        for t in self.open_types() {
            c.line(&format!("n_{}: usize,", sanitize(&self.m.types[t as usize].name)));
        }
        c.close("}");
        c.blank();
    }

    fn constructor(&mut self, c: &mut Code) {
        c.open("fn new() -> Self {");
        c.open("Model {");
        for n in self.nodes.clone() {
            if let Node::Fn(_) = n {
                let init = match self.arity(n) {
                    0 => "MemoCell::default()".to_string(),
                    1 => match self.closed_count(self.param_types(n)[0]) {
                        Some(k) => format!("DynamicTable::with_len({k})"),
                        None => "DynamicTable::default()".into(),
                    },
                    _ => "Table2::new()".into(),
                };
                c.line(&format!("s_{}: {init},", self.ident(n)));
            }
        }
        for t in self.open_types() {
            c.line(&format!("n_{}: 0,", sanitize(&self.m.types[t as usize].name)));
        }
        c.close("}");
        c.close("}");
        c.blank();
        for t in self.open_types() {
            let tn = sanitize(&self.m.types[t as usize].name);
            c.line(&format!("/// Capacity hook of the number variable of `{}`.", self.m.types[t as usize].name));
            c.open(&format!("fn grow_{tn}(&mut self, n: i64) {{"));
            c.line("let n = n.max(0) as usize;");
            c.open(&format!("if n > self.n_{tn} {{"));
            c.line(&format!("self.n_{tn} = n;"));
            for n2 in self.nodes.clone() {
                if self.arity(n2) == 1 && self.param_types(n2)[0] == Ty::Obj(t) {
                    c.line(&format!("self.s_{}.ensure(n);", self.ident(n2)));
                }
            }
            c.close("}");
            c.close("}");
            c.blank();
        }
    }

    fn cell_expr(&self, n: Node, mutable: bool) -> String {
        let id = self.ident(n);
        match (self.arity(n), mutable) {
            (0, true) => format!("(&mut self.s_{id})"),
            (0, false) => format!("Some(&self.s_{id})"),
            (1, true) => format!("self.s_{id}.cell(a0 as usize)"),
            (1, false) => format!("self.s_{id}.get(a0 as usize)"),
            (_, true) => format!("self.s_{id}.cell(a0 as usize, a1 as usize)"),
            (_, false) => format!("self.s_{id}.get(a0 as usize, a1 as usize)"),
        }
    }

    fn grow_call(&self, n: Node, v: &str) -> Option<String> {
        let Node::Fn(f) = n else { return None };
        match self.m.fns[f as usize].kind {
            FnKind::Number(t) => Some(format!("self.grow_{}({v});", sanitize(&self.m.types[t as usize].name))),
            _ => None,
        }
    }

    fn node_fns(&mut self, c: &mut Code, n: Node) {
        let id = self.ident(n);
        let vt = rust_ty(self.node_ty(n));
        let tc = self.tconst(n);
        let label = self.node_label(n);
        let sc = Self::scope_of(n);
        if let Node::Fn(f) = n {
            let pins = self.pins(f);
            let has_pins = !pins.is_empty();
            if has_pins {
                c.open(&format!("fn pin_{id}(a0: u32, a1: u32) -> Option<{vt}> {{"));
                c.open("match (a0, a1) {");
                for (x, y, l) in &pins {
                    c.line(&format!("({x}, {y}) => Some({}),", lit(*l)));
                }
                c.line("_ => None,");
                c.close("}");
                c.close("}");
                c.blank();
            }
            let conv = from_value(self.node_ty(n));
            let sample = |p: bool| -> String {
                let mode = if p { "true" } else { "false" };
                let draw = format!(
                    "{{ let d = self.dist_{id}::<{mode}>(rt, a0, a1); rt.sample(&d, VarId::new({tc}, a0, a1)).{conv} }}"
                );
                if has_pins {
                    format!("match Self::pin_{id}(a0, a1) {{ Some(v) => v, None => {draw} }}")
                } else {
                    draw
                }
            };
            let grow = self.grow_call(n, "v");
            let cell = self.cell_expr(n, true);
            let sel = if has_pins { format!("Self::pin_{id}(a0, a1).is_none()") } else { "true".into() };

            c.line(&format!("/// Getter of {label}: memoised, samples on first demand."));
            c.open(&format!("fn get_{id}(&mut self, rt: &mut Rt, a0: u32, a1: u32) -> {vt} {{"));
            c.line("let g = rt.generation;");
            c.open("{");
            c.line(&format!("let c = {cell};"));
            c.open("if c.mark == g {");
            c.line("return c.val;");
            c.close("}");
            c.close("}");
            c.line(&format!("let v = {};", sample(false)));
            c.line(&format!("let c = {cell};"));
            c.line("c.val = v;");
            c.line("c.mark = g;");
            c.line(&format!("rt.on_instantiate(VarId::new({tc}, a0, a1), {sel});"));
            if let Some(gr) = &grow {
                c.line(gr);
            }
            c.line("v");
            c.close("}");
            c.blank();

            c.line(&format!("/// Proposal getter of {label}: cache, then world, then a fresh draw."));
            c.open(&format!("fn getc_{id}(&mut self, rt: &mut Rt, a0: u32, a1: u32) -> {vt} {{"));
            c.line("let (g, p) = (rt.generation, rt.proposal);");
            c.open("{");
            c.line(&format!("let c = {cell};"));
            c.open("if c.cache_mark == p {");
            c.line("return c.cached_val;");
            c.close("}");
            c.open("if c.mark == g {");
            c.line("return c.val;");
            c.close("}");
            c.close("}");
            c.line(&format!("let v = {};", sample(true)));
            c.line(&format!("let c = {cell};"));
            c.line("c.cached_val = v;");
            c.line("c.cache_mark = p;");
            c.line(&format!("rt.on_propose(VarId::new({tc}, a0, a1));"));
            if let Some(gr) = &grow {
                c.line(gr);
            }
            c.line("v");
            c.close("}");
            c.blank();

            c.line("#[inline]");
            c.open(&format!("fn val_{id}<const P: bool>(&mut self, rt: &mut Rt, a0: u32, a1: u32) -> {vt} {{"));
            c.line(&format!("if P {{ self.getc_{id}(rt, a0, a1) }} else {{ self.get_{id}(rt, a0, a1) }}"));
            c.close("}");
            c.blank();

            let body = self.m.fns[f as usize].body.clone();
            c.open(&format!("fn dist_{id}<const P: bool>(&mut self, rt: &mut Rt, a0: u32, a1: u32) -> Dist {{"));
            let t = self.tail(&body, sc);
            c.line(&t);
            c.close("}");
            c.blank();

            c.open(&format!("fn ll_{id}<const P: bool>(&mut self, rt: &mut Rt, a0: u32, a1: u32) -> f64 {{"));
            c.line(&format!("let v = self.val_{id}::<P>(rt, a0, a1);"));
            c.line(&format!("let d = self.dist_{id}::<P>(rt, a0, a1);"));
            c.line(&format!("d.log_pdf({}(v))", value_ctor(self.node_ty(n))));
            c.close("}");
            c.blank();
        } else {
            let e = self.m.node_body(n).clone();
            c.open(&format!("fn val_{id}<const P: bool>(&mut self, rt: &mut Rt) -> {vt} {{"));
            let r = self.expr(&e, sc);
            c.line(&r);
            c.close("}");
            c.blank();
            if let (Node::Obs(_), TK::App(g, args)) = (n, &e.kind) {
                if self.m.fns[*g as usize].is_random() {
                    let t = self.tconst(Node::Fn(*g));
                    let mut ix: Vec<String> = args.iter().map(|a| self.arg(a, sc)).collect();
                    while ix.len() < 2 {
                        ix.push("0".into());
                    }
                    c.line(&format!("/// The variable {label} observes in the current world."));
                    c.open(&format!("fn site_{id}<const P: bool>(&mut self, rt: &mut Rt) -> VarId {{"));
                    c.line(&format!("VarId::new({t}, {}, {})", ix[0], ix[1]));
                    c.close("}");
                    c.blank();
                }
            }
        }

        let body = self.m.node_body(n).clone();
        let sig = if matches!(n, Node::Fn(_)) { "a0: u32, a1: u32, " } else { "" };
        c.line(&format!("/// add_to_Ch body of {label}."));
        c.open(&format!("fn reg_{id}<const P: bool>(&mut self, rt: &mut Rt, {sig}out: &mut RefList) {{"));
        self.regs(c, n, &body, &mut Vec::new(), Walk::Register, sc);
        c.close("}");
        c.blank();
        c.open(&format!("fn trace_{id}<const P: bool>(&mut self, rt: &mut Rt, {sig}out: &mut RefList) {{"));
        self.regs(c, n, &body, &mut Vec::new(), Walk::Trace, sc);
        c.close("}");
        c.blank();
    }

    fn trait_impl(&mut self, c: &mut Code) {
        let nodes = self.nodes.clone();
        let fns: Vec<Node> = nodes.iter().copied().filter(|n| matches!(n, Node::Fn(_))).collect();
        c.open("impl CompiledModel for Model {");
        c.line(&format!("fn model_name(&self) -> &'static str {{ {:?} }}", self.opts.model_name));
        c.line("fn templates(&self) -> &'static [TemplateInfo] { &TEMPLATES }");
        c.line("fn types(&self) -> &'static [TypeInfo] { &TYPES }");
        c.line("fn evidence(&self) -> &'static [VarId] { &EVIDENCE }");
        c.line("fn queries(&self) -> &'static [QueryInfo] { &QUERIES }");
        c.blank();

        let dispatch = |this: &Self, c: &mut Code, head: &str, arm: &dyn Fn(&Self, Node) -> String, default: &str| {
            c.open(head);
            c.line("let (a0, a1) = (id.a0(), id.a1());");
            c.open("match id.tmpl() {");
            for &n in &nodes {
                let body = arm(this, n);
                if !body.is_empty() {
                    c.line(&format!("{} => {body},", this.tconst(n)));
                }
            }
            c.line(&format!("_ => {default},"));
            c.close("}");
            c.close("}");
            c.blank();
        };

        dispatch(self, c, "fn get(&mut self, rt: &mut Rt, id: VarId) -> Value {", &|s, n| match n {
            Node::Fn(_) => format!("{}(self.get_{}(rt, a0, a1))", value_ctor(s.node_ty(n)), s.ident(n)),
            _ => format!("{}(self.val_{}::<false>(rt))", value_ctor(s.node_ty(n)), s.ident(n)),
        }, "unreachable!()");
        dispatch(self, c, "fn is_instantiated(&self, rt: &Rt, id: VarId) -> bool {", &|s, n| match n {
            Node::Fn(_) => format!("{}.is_some_and(|c| c.mark == rt.generation)", s.cell_expr(n, false)),
            _ => "true".into(),
        }, "false");
        dispatch(self, c, "fn is_pinned(&self, id: VarId) -> bool {", &|s, n| match n {
            Node::Fn(f) if !s.pins(f).is_empty() => format!("Self::pin_{}(a0, a1).is_some()", s.ident(n)),
            _ => String::new(),
        }, "false");
        dispatch(self, c, "fn value(&self, id: VarId) -> Value {", &|s, n| match n {
            Node::Fn(_) => format!(
                "{}.map_or(Value::Int(0), |c| {}(c.val))",
                s.cell_expr(n, false),
                value_ctor(s.node_ty(n))
            ),
            _ => String::new(),
        }, "Value::Int(0)");
        dispatch(self, c, "fn cached(&self, id: VarId) -> Value {", &|s, n| match n {
            Node::Fn(_) => format!(
                "{}.map_or(Value::Int(0), |c| {}(c.cached_val))",
                s.cell_expr(n, false),
                value_ctor(s.node_ty(n))
            ),
            _ => String::new(),
        }, "Value::Int(0)");
        dispatch(self, c, "fn uninstantiate(&mut self, id: VarId) {", &|s, n| match n {
            Node::Fn(_) => format!("{}.mark = NEVER", s.cell_expr(n, true)),
            _ => String::new(),
        }, "()");
        dispatch(self, c, "fn dist(&mut self, rt: &mut Rt, id: VarId, proposal: bool) -> Dist {", &|s, n| {
            let id = s.ident(n);
            match n {
                Node::Fn(_) => format!(
                    "if proposal {{ self.dist_{id}::<true>(rt, a0, a1) }} else {{ self.dist_{id}::<false>(rt, a0, a1) }}"
                ),
                _ => format!(
                    "Dist::Const({}(if proposal {{ self.val_{id}::<true>(rt) }} else {{ self.val_{id}::<false>(rt) }}))",
                    value_ctor(s.node_ty(n))
                ),
            }
        }, "unreachable!()");
        dispatch(self, c, "fn loglik(&mut self, rt: &mut Rt, id: VarId, proposal: bool) -> f64 {", &|s, n| {
            let id = s.ident(n);
            match n {
                Node::Fn(_) => format!(
                    "if proposal {{ self.ll_{id}::<true>(rt, a0, a1) }} else {{ self.ll_{id}::<false>(rt, a0, a1) }}"
                ),
                Node::Obs(i) => format!(
                    "{{ let v = if proposal {{ self.val_{id}::<true>(rt) }} else {{ self.val_{id}::<false>(rt) }}; if v == {} {{ 0.0 }} else {{ f64::NEG_INFINITY }} }}",
                    lit(s.m.evidence[i].value)
                ),
                // queries carry no likelihood, but evaluating one demands its path
                Node::Query(_) => format!(
                    "{{ if proposal {{ self.val_{id}::<true>(rt); }} else {{ self.val_{id}::<false>(rt); }} 0.0 }}"
                ),
            }
        }, "unreachable!()");
        for (name, pre) in [("register", "reg"), ("trace_refs", "trace")] {
            dispatch(
                self,
                c,
                &format!("fn {name}(&mut self, rt: &mut Rt, id: VarId, proposal: bool, out: &mut RefList) {{"),
                &|s, n| {
                    let id = s.ident(n);
                    let args = if matches!(n, Node::Fn(_)) { "a0, a1, " } else { "" };
                    format!(
                        "if proposal {{ self.{pre}_{id}::<true>(rt, {args}out) }} else {{ self.{pre}_{id}::<false>(rt, {args}out) }}"
                    )
                },
                "()",
            );
        }
        c.open("fn query(&mut self, rt: &mut Rt, k: usize) -> Value {");
        c.open("match k {");
        for k in 0..self.m.queries.len() {
            let n = Node::Query(k);
            c.line(&format!("{k} => {}(self.val_{}::<false>(rt)),", value_ctor(self.node_ty(n)), self.ident(n)));
        }
        c.line("_ => unreachable!(),");
        c.close("}");
        c.close("}");
        c.blank();
        dispatch(self, c, "fn begin_proposal(&mut self, rt: &mut Rt, id: VarId, v: Value) {", &|s, n| match n {
            Node::Fn(_) => format!(
                "{{ let p = rt.proposal; let c = {}; c.cached_val = v.{}; c.cache_mark = p; }}",
                s.cell_expr(n, true),
                from_value(s.node_ty(n))
            ),
            _ => String::new(),
        }, "()");
        dispatch(self, c, "fn end_proposal(&mut self, rt: &mut Rt, id: VarId) {", &|s, n| match n {
            Node::Fn(_) => format!("{}.cache_mark = NEVER", s.cell_expr(n, true)),
            _ => String::new(),
        }, "()");
        dispatch(self, c, "fn set_cached(&mut self, rt: &mut Rt, id: VarId, v: Value) {", &|s, n| match n {
            Node::Fn(_) => {
                let grow = s.grow_call(n, "x").unwrap_or_default();
                format!(
                    "{{ let p = rt.proposal; let x = v.{}; let c = {}; c.cached_val = x; c.cache_mark = p; rt.on_propose(id); {grow} }}",
                    from_value(s.node_ty(n)),
                    s.cell_expr(n, true)
                )
            }
            _ => String::new(),
        }, "()");
        dispatch(self, c, "fn commit_cached(&mut self, rt: &mut Rt, id: VarId) {", &|s, n| match n {
            Node::Fn(f) => {
                let grow = s.grow_call(n, "x").unwrap_or_default();
                let sel =
                    if s.pins(f).is_empty() { "true".into() } else { format!("Self::pin_{}(a0, a1).is_none()", s.ident(n)) };
                format!(
                    "{{ let g = rt.generation; let c = {}; c.val = c.cached_val; c.mark = g; let x = c.val; rt.on_instantiate(id, {sel}); {grow} }}",
                    s.cell_expr(n, true)
                )
            }
            _ => String::new(),
        }, "()");
        dispatch(self, c, "fn instantiate_with(&mut self, rt: &mut Rt, id: VarId, v: Value) {", &|s, n| match n {
            Node::Fn(f) => {
                let grow = s.grow_call(n, "x").unwrap_or_default();
                let sel =
                    if s.pins(f).is_empty() { "true".into() } else { format!("Self::pin_{}(a0, a1).is_none()", s.ident(n)) };
                format!(
                    "{{ let g = rt.generation; let c = {}; c.val = v.{}; c.mark = g; let x = c.val; rt.on_instantiate(id, {sel}); {grow} }}",
                    s.cell_expr(n, true),
                    from_value(s.node_ty(n))
                )
            }
            _ => String::new(),
        }, "()");
        dispatch(self, c, "fn obs_site(&mut self, rt: &mut Rt, id: VarId) -> Option<(VarId, Value)> {", &|s, n| match n {
            Node::Obs(i) => match &s.m.evidence[i].lhs.kind {
                TK::App(g, _) if s.m.fns[*g as usize].is_random() => format!(
                    "Some((self.site_{}::<false>(rt), {}({})))",
                    s.ident(n),
                    value_ctor(s.node_ty(n)),
                    lit(s.m.evidence[i].value)
                ),
                _ => String::new(),
            },
            _ => String::new(),
        }, "None");
        c.line("/// F_c: unregister the contingent set, assign, commit new variables, re-register.");
        c.open("fn accept_value(&mut self, rt: &mut Rt, id: VarId, v: Value) {");
        c.line("accept_with(self, rt, id, |m| m.assign(id, v));");
        c.close("}");
        c.blank();
        c.open("fn static_edges(&self, tmpl: u16) -> &'static [Edge] {");
        c.open("match tmpl {");
        for &n in &fns {
            c.line(&format!("{} => &E_{},", self.tconst(n), self.ident(n)));
        }
        c.line("_ => &[],");
        c.close("}");
        c.close("}");
        c.blank();
        c.open("fn arg_bound(&self, tmpl: u16, i: usize) -> u32 {");
        c.open("match (tmpl, i) {");
        for &n in &fns {
            for (i, t) in self.param_types(n).into_iter().enumerate() {
                let b = match (self.closed_count(t), t) {
                    (Some(k), _) => k.to_string(),
                    (None, Ty::Obj(t)) => format!("self.n_{} as u32", sanitize(&self.m.types[t as usize].name)),
                    _ => "0".into(),
                };
                c.line(&format!("({}, {i}) => {b},", self.tconst(n)));
            }
        }
        c.line("_ => 1,");
        c.close("}");
        c.close("}");
        c.blank();
        c.line("/// Sample every instantiable variable, declaration by declaration.");
        c.open("fn eager_all(&mut self, rt: &mut Rt) {");
        for &n in &fns {
            let id = self.ident(n);
            let pts = self.param_types(n);
            let mut bounds = Vec::new();
            for t in &pts {
                bounds.push(match (self.closed_count(*t), *t) {
                    (Some(k), _) => format!("{k}u32"),
                    (None, Ty::Obj(t)) => {
                        let num = self.ident(self.number_node(t));
                        format!("(self.get_{num}(rt, 0, 0).max(0) as u32)")
                    }
                    _ => "1u32".into(),
                });
            }
            match bounds.len() {
                0 => c.line(&format!("self.get_{id}(rt, 0, 0);")),
                1 => c.line(&format!("for a0 in 0..{} {{ self.get_{id}(rt, a0, 0); }}", bounds[0])),
                _ => c.line(&format!(
                    "{{ let (n0, n1) = ({}, {}); for a0 in 0..n0 {{ for a1 in 0..n1 {{ self.get_{id}(rt, a0, a1); }} }} }}",
                    bounds[0], bounds[1]
                )),
            }
        }
        c.close("}");
        c.blank();
        c.line("/// Release table memory beyond the live prefix of every open type.");
        c.open("fn clear_memory(&mut self, rt: &mut Rt) {");
        for t in self.open_types() {
            let tn = sanitize(&self.m.types[t as usize].name);
            let num = self.number_node(t);
            let cell = self.cell_expr(num, false).replace("a0", "0").replace("a1", "0");
            c.line(&format!(
                "let live_{tn} = {cell}.filter(|c| c.mark == rt.generation).map_or(0, |c| c.val.max(0) as usize);"
            ));
            c.line(&format!("self.n_{tn} = live_{tn};"));
        }
        for &n in &fns {
            let pts = self.param_types(n);
            let size = |this: &Self, t: Ty| -> String {
                match (this.closed_count(t), t) {
                    (Some(k), _) => k.to_string(),
                    (None, Ty::Obj(t)) => format!("live_{}", sanitize(&this.m.types[t as usize].name)),
                    _ => "0".into(),
                }
            };
            match pts.len() {
                1 if self.closed_count(pts[0]).is_none() => {
                    c.line(&format!("self.s_{}.shrink_to({});", self.ident(n), size(self, pts[0])))
                }
                2 => c.line(&format!("self.s_{}.shrink_to({}, {});", self.ident(n), size(self, pts[0]), size(self, pts[1]))),
                _ => {}
            }
        }
        c.close("}");
        c.close("}");
        c.blank();
        c.open("impl Model {");
        c.open("fn assign(&mut self, id: VarId, v: Value) {");
        c.line("let (a0, a1) = (id.a0(), id.a1());");
        c.open("match id.tmpl() {");
        for &n in &fns {
            let grow = self.grow_call(n, "x").unwrap_or_default();
            c.line(&format!(
                "{} => {{ let x = v.{}; {}.val = x; {grow} }}",
                self.tconst(n),
                from_value(self.node_ty(n)),
                self.cell_expr(n, true)
            ));
        }
        c.line("_ => unreachable!(),");
        c.close("}");
        c.close("}");
        c.close("}");
        c.blank();
    }
}

/// `(a == b)` -> `a == b`, leaving `(a) == (b)` alone.
fn strip_outer_parens(s: &str) -> &str {
    let Some(inner) = s.strip_prefix('(').and_then(|c| c.strip_suffix(')')) else { return s };
    let mut depth = 0i32;
    for ch in inner.chars() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            _ => {}
        }
        if depth < 0 {
            return s;
        }
    }
    inner
}

/// Human-readable add_to_Ch registrations of one declaration, e.g.
/// `Cont(z(d))+=x(d); Ch(z(d))+=x(d); Ch(mu(z(d)))+=x(d)`. Conditionals
/// appear as `if (c) { .. } else { .. }`.
pub fn add_to_ch_listing(m: &Model, a: &Analysis, n: Node) -> String {
    let opts = Options::default();
    let mut e = Emitter::new(m, a, &opts);
    let mut c = Code::default();
    let body = m.node_body(n).clone();
    e.regs(&mut c, n, &body, &mut Vec::new(), Walk::Register, Emitter::scope_of(n));
    let mut out: Vec<String> = Vec::new();
    for line in c.buf.lines() {
        let t = line.trim();
        if let Some(rest) = t.strip_prefix("// ") {
            if let Some(cond) = rest.strip_prefix("if ") {
                let cond = strip_outer_parens(cond);
                out.push(format!("if ({cond}) {{"));
            } else if !rest.starts_with("inc_cnt") {
                out.push(rest.replacen(" += ", "+=", 1));
            }
        } else if t == "} else {" || t == "}" {
            out.push(t.to_string());
        }
    }
    let mut s = String::new();
    for (i, item) in out.iter().enumerate() {
        if i > 0 {
            s.push_str(if item.starts_with('}') || out[i - 1].ends_with('{') { " " } else { "; " });
        }
        s.push_str(item);
    }
    s
}
