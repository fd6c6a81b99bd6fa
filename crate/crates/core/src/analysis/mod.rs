//! Static facts the code generator needs: free variables, the switching-set
//! approximation, the static children bound and conjugacy tags.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::json;

use crate::frontend::typed::{DistKind, FnDef, FnId, FnKind, Lit, Model, TExpr, Ty, TK};
use blog_runtime::conjugate::ConjugatePair;

/// A declaration whose evaluation reads random variables: a random function,
/// an observation whose variable is not known statically, or a query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Node {
    Fn(FnId),
    Obs(usize),
    Query(usize),
}

/// How one argument of a referenced variable relates to the referencing
/// instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum ArgMap {
    /// The referencing instance's own parameter `i`.
    Same(u8),
    /// A fixed object index.
    Const(i64),
    /// Anything: depends on other variables.
    All,
}

/// One random-variable expression occurring in a declaration.
#[derive(Debug, Clone, PartialEq)]
pub struct Site {
    pub target: FnId,
    pub expr: TExpr,
    /// Canonical rendering; equal keys denote the same variable on every path.
    pub key: String,
    /// In an if-condition or in an argument of a random function.
    pub switching: bool,
    pub args: Vec<ArgMap>,
}

impl Model {
    pub fn node_body(&self, n: Node) -> &TExpr {
        match n {
            Node::Fn(f) => &self.fns[f as usize].body,
            Node::Obs(i) => &self.evidence[i].lhs,
            Node::Query(i) => &self.queries[i].expr,
        }
    }

    pub fn node_fn(&self, n: Node) -> Option<FnId> {
        match n {
            Node::Fn(f) => Some(f),
            _ => None,
        }
    }

    pub fn node_name(&self, n: Node) -> String {
        match n {
            Node::Fn(f) => self.fns[f as usize].name.clone(),
            Node::Obs(i) => format!("obs[{i}]"),
            Node::Query(i) => format!("query[{i}]"),
        }
    }

    /// Random functions, then observations of uncertain identity, then queries.
    pub fn nodes(&self) -> Vec<Node> {
        let mut out: Vec<Node> = self.random_fns().map(|(f, _)| Node::Fn(f)).collect();
        out.extend((0..self.evidence.len()).filter(|&i| !self.evidence[i].is_pinned()).map(Node::Obs));
        out.extend((0..self.queries.len()).map(Node::Query));
        out
    }

    /// Reference counted: indexed by at least one open-universe type.
    pub fn is_tracked(&self, f: FnId) -> bool {
        let def = &self.fns[f as usize];
        def.kind == FnKind::Random
            && def.params.iter().any(|(_, t)| matches!(t, Ty::Obj(i) if self.types[*i as usize].is_open()))
    }

    /// Number of instances of a closed-indexed function, `None` if open.
    pub fn instance_count(&self, f: FnId) -> Option<usize> {
        let mut n = 1usize;
        for (_, t) in &self.fns[f as usize].params {
            let Ty::Obj(t) = t else { return None };
            let td = &self.types[*t as usize];
            if td.is_open() {
                return None;
            }
            n *= td.objects.len();
        }
        Some(n)
    }
}

/// Random-variable sites of `e` (free variables), deduplicated by key, in
/// order of first occurrence. Fixed functions contribute only their arguments.
pub fn free_vars(m: &Model, owner: Option<FnId>, e: &TExpr) -> Vec<Site> {
    let mut out = Vec::new();
    collect(m, owner, e, false, &mut out);
    out
}

fn arg_map(e: &TExpr) -> ArgMap {
    match e.kind {
        TK::Param(i) => ArgMap::Same(i),
        TK::Lit(Lit::Obj(_, k)) => ArgMap::Const(k),
        _ => ArgMap::All,
    }
}

fn push_site(out: &mut Vec<Site>, s: Site) {
    if let Some(old) = out.iter_mut().find(|o| o.key == s.key) {
        old.switching |= s.switching;
    } else {
        out.push(s);
    }
}

fn collect(m: &Model, owner: Option<FnId>, e: &TExpr, switching: bool, out: &mut Vec<Site>) {
    match &e.kind {
        TK::App(g, args) => {
            let def = &m.fns[*g as usize];
            if def.is_random() {
                push_site(
                    out,
                    Site {
                        target: *g,
                        expr: e.clone(),
                        key: m.show(owner, e),
                        switching,
                        args: args.iter().map(arg_map).collect(),
                    },
                );
                for a in args {
                    collect(m, owner, a, true, out);
                }
            } else {
                for a in args {
                    collect(m, owner, a, switching, out);
                }
            }
        }
        TK::Choice(t) => {
            if let Some(nf) = m.types[*t as usize].number {
                let expr = TExpr { kind: TK::App(nf, Vec::new()), ty: Ty::Int, pos: e.pos };
                let key = m.show(owner, &expr);
                push_site(out, Site { target: nf, expr, key, switching, args: Vec::new() });
            }
        }
        TK::If(c, a, b) => {
            collect(m, owner, c, true, out);
            collect(m, owner, a, switching, out);
            collect(m, owner, b, switching, out);
        }
        _ => {
            for c in e.children() {
                collect(m, owner, c, switching, out);
            }
        }
    }
}

/// Sites of every node, keyed by node.
pub fn node_sites(m: &Model) -> BTreeMap<Node, Vec<Site>> {
    m.nodes().into_iter().map(|n| (n, free_vars(m, m.node_fn(n), m.node_body(n)))).collect()
}

/// Ŝ: for each node, the sites in switching position.
pub fn switching_sets(m: &Model) -> BTreeMap<Node, Vec<Site>> {
    node_sites(m).into_iter().map(|(n, s)| (n, s.into_iter().filter(|s| s.switching).collect())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChildEdge {
    pub child: Node,
    pub args: Vec<ArgMap>,
    pub switching: bool,
}

/// Ĉh: for each random function X, the nodes whose declaration mentions X,
/// with the argument mapping of each mention.
pub fn static_children(m: &Model) -> BTreeMap<FnId, Vec<ChildEdge>> {
    let mut out: BTreeMap<FnId, Vec<ChildEdge>> = m.random_fns().map(|(f, _)| (f, Vec::new())).collect();
    for (n, sites) in node_sites(m) {
        for s in sites {
            let e = ChildEdge { child: n, args: s.args.clone(), switching: s.switching };
            let v = out.entry(s.target).or_default();
            if let Some(old) = v.iter_mut().find(|o| o.child == e.child && o.args == e.args) {
                old.switching |= e.switching;
            } else {
                v.push(e);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConjugacyTag {
    pub pair: Option<ConjugatePair>,
    pub children: Vec<FnId>,
}

fn count_apps(e: &TExpr, f: FnId) -> usize {
    let own = matches!(e.kind, TK::App(g, _) if g == f) as usize;
    own + e.children().into_iter().map(|c| count_apps(c, f)).sum::<usize>()
}

fn conjugate_pair(m: &Model, f: FnId, def: &FnDef, children: &[ChildEdge]) -> Option<(ConjugatePair, Vec<FnId>)> {
    if def.kind != FnKind::Random {
        return None;
    }
    let TK::Dist(prior, _) = def.body.kind else { return None };
    let (pair, family, slot) = match prior {
        DistKind::Beta => (ConjugatePair::BetaBernoulli, DistKind::Bernoulli, 0),
        DistKind::Gamma => (ConjugatePair::GammaPoisson, DistKind::Poisson, 0),
        DistKind::Gaussian => (ConjugatePair::GaussianGaussianMean, DistKind::Gaussian, 0),
        _ => return None,
    };
    let mut kids = Vec::new();
    for e in children {
        match e.child {
            Node::Query(_) => continue,
            Node::Obs(_) => return None,
            Node::Fn(y) => {
                let body = &m.fns[y as usize].body;
                let TK::Dist(d, args) = &body.kind else { return None };
                if *d != family || count_apps(body, f) != 1 {
                    return None;
                }
                if !matches!(args[slot].kind, TK::App(g, _) if g == f) {
                    return None;
                }
                if !kids.contains(&y) {
                    kids.push(y);
                }
            }
        }
    }
    Some((pair, kids))
}

pub fn check_conjugacy(m: &Model) -> BTreeMap<FnId, ConjugacyTag> {
    let ch = static_children(m);
    m.random_fns()
        .map(|(f, def)| {
            let tag = match conjugate_pair(m, f, def, &ch[&f]) {
                Some((pair, children)) => ConjugacyTag { pair: Some(pair), children },
                None => ConjugacyTag { pair: None, children: Vec::new() },
            };
            (f, tag)
        })
        .collect()
}

/// Every tail of the body draws from a finite distribution or is a value.
pub fn finite_body(e: &TExpr) -> bool {
    match &e.kind {
        TK::If(_, a, b) => finite_body(a) && finite_body(b),
        TK::Dist(d, _) => matches!(d, DistKind::Bernoulli | DistKind::UniformInt),
        _ => true,
    }
}

/// The first random function Gibbs cannot update, with the reason.
pub fn gibbs_ineligible(m: &Model, conj: &BTreeMap<FnId, ConjugacyTag>) -> Option<(String, String)> {
    for (f, def) in m.random_fns() {
        let pinned = m.evidence.iter().filter(|e| e.is_pinned() && matches!(e.lhs.kind, TK::App(g, _) if g == f)).count();
        if m.instance_count(f) == Some(pinned) {
            continue;
        }
        if conj[&f].pair.is_some() || finite_body(&def.body) {
            continue;
        }
        return Some((def.name.clone(), "no conjugate prior and no finite support".into()));
    }
    None
}

/// Everything later stages need, computed once.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub sites: BTreeMap<Node, Vec<Site>>,
    pub children: BTreeMap<FnId, Vec<ChildEdge>>,
    pub conjugacy: BTreeMap<FnId, ConjugacyTag>,
}

pub fn analyze(m: &Model) -> Analysis {
    Analysis { sites: node_sites(m), children: static_children(m), conjugacy: check_conjugacy(m) }
}

fn args_json(args: &[ArgMap]) -> Vec<String> {
    args.iter()
        .map(|a| match a {
            ArgMap::Same(i) => format!("${i}"),
            ArgMap::Const(k) => k.to_string(),
            ArgMap::All => "*".into(),
        })
        .collect()
}

impl Analysis {
    /// The `--dump-analysis` document.
    pub fn to_json(&self, m: &Model) -> serde_json::Value {
        let mut sw = serde_json::Map::new();
        for (n, sites) in &self.sites {
            let keys: Vec<String> = sites.iter().filter(|s| s.switching).map(|s| s.key.clone()).collect();
            sw.insert(m.node_name(*n), json!(keys));
        }
        let mut ch = serde_json::Map::new();
        for (f, edges) in &self.children {
            let v: Vec<serde_json::Value> = edges
                .iter()
                .map(|e| json!({"child": m.node_name(e.child), "args": args_json(&e.args), "switching": e.switching}))
                .collect();
            ch.insert(m.fns[*f as usize].name.clone(), json!(v));
        }
        let mut cj = serde_json::Map::new();
        for (f, t) in &self.conjugacy {
            let pair = t.pair.map_or("None".to_string(), |p| format!("{p:?}"));
            cj.insert(m.fns[*f as usize].name.clone(), json!(pair));
        }
        let tracked: Vec<String> =
            m.random_fns().filter(|(f, _)| m.is_tracked(*f)).map(|(_, d)| d.name.clone()).collect();
        json!({"switching": sw, "static_children": ch, "conjugacy": cj, "tracked": tracked})
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::load;

    const INF_GMM: &str = "
        type Cluster; type Data;
        distinct Data D[3];
        #Cluster ~ UniformInt(1, 10);
        random Real mu(Cluster c) ~ Gaussian(0.0, 25.0);
        random Cluster z(Data d) ~ UniformChoice({Cluster c});
        random Real x(Data d) ~ Gaussian(mu(z(d)), 1.0);
        obs x(D[0]) = 1.5;
        query #Cluster;
    ";

    #[test]
    fn free_vars_of_mixture_likelihood() {
        let m = load(INF_GMM).unwrap();
        let x = m.fn_by_name("x").unwrap();
        let keys: Vec<String> = free_vars(&m, Some(x), &m.fns[x as usize].body).into_iter().map(|s| s.key).collect();
        assert_eq!(keys, vec!["mu(z(d))", "z(d)"]);
    }

    #[test]
    fn literal_and_single_reference() {
        let m = load("random Boolean burglary ~ Bernoulli(0.1); random Real p ~ if burglary then 0.9 else 0.1;").unwrap();
        assert!(free_vars(&m, None, &TExpr { kind: TK::Lit(Lit::Real(0.5)), ty: Ty::Real, pos: Default::default() }).is_empty());
        let sites = free_vars(&m, Some(1), &m.fns[1].body);
        assert_eq!(sites.len(), 1);
        assert_eq!(sites[0].key, "burglary");
        assert!(sites[0].switching);
    }

    #[test]
    fn argument_position_switches() {
        let m = load(INF_GMM).unwrap();
        let sw = switching_sets(&m);
        let x = m.fn_by_name("x").unwrap();
        let keys: Vec<&str> = sw[&Node::Fn(x)].iter().map(|s| s.key.as_str()).collect();
        assert_eq!(keys, vec!["z(d)"]);
        // the number variable feeds the uniform choice but does not switch it
        let z = m.fn_by_name("z").unwrap();
        assert!(sw[&Node::Fn(z)].is_empty());
    }

    #[test]
    fn static_children_of_mixture() {
        let m = load(INF_GMM).unwrap();
        let ch = static_children(&m);
        let x = m.fn_by_name("x").unwrap();
        let mu = m.fn_by_name("mu").unwrap();
        let z = m.fn_by_name("z").unwrap();
        assert_eq!(ch[&mu], vec![ChildEdge { child: Node::Fn(x), args: vec![ArgMap::All], switching: false }]);
        assert_eq!(ch[&z], vec![ChildEdge { child: Node::Fn(x), args: vec![ArgMap::Same(0)], switching: true }]);
        let num = m.fn_by_name("#Cluster").unwrap();
        assert!(ch[&num].iter().any(|e| e.child == Node::Fn(z)));
    }

    #[test]
    fn childless_root() {
        let m = load("random Boolean a ~ Bernoulli(0.5);").unwrap();
        assert!(static_children(&m)[&0].is_empty());
    }

    #[test]
    fn conjugacy_tags() {
        let m = load(INF_GMM).unwrap();
        let c = check_conjugacy(&m);
        assert_eq!(c[&m.fn_by_name("mu").unwrap()].pair, Some(ConjugatePair::GaussianGaussianMean));
        assert_eq!(c[&m.fn_by_name("z").unwrap()].pair, None);
        let coin = load("type F; distinct F f[3]; random Real p ~ Beta(1.0, 1.0); random Boolean flip(F i) ~ Bernoulli(p);").unwrap();
        assert_eq!(check_conjugacy(&coin)[&0].pair, Some(ConjugatePair::BetaBernoulli));
        let bur = load("random Boolean b ~ Bernoulli(0.1); random Boolean a ~ if b then Bernoulli(0.9) else Bernoulli(0.1);").unwrap();
        assert!(check_conjugacy(&bur).values().all(|t| t.pair.is_none()));
        assert!(gibbs_ineligible(&bur, &check_conjugacy(&bur)).is_none());
    }

    #[test]
    fn gibbs_refuses_nonconjugate_continuous() {
        let m = load("random Real a ~ Gaussian(0.0, 1.0); random Real b ~ Gaussian(a * a, 1.0);").unwrap();
        let (name, _) = gibbs_ineligible(&m, &check_conjugacy(&m)).unwrap();
        assert_eq!(name, "a");
    }
}
