//! Children sets, contingent sets and reference counts recomputed on an
//! explicit world, to check the bookkeeping in a compiled snapshot.

use std::collections::BTreeMap;

use blog_runtime::record::Snapshot;
use blog_runtime::Value;

use super::{dedup, Ctx, Interp, InterpError, Mode, Stop, Var, World};
use crate::frontend::typed::Ty;

/// Anything that reads variables: a variable's declaration, an observation
/// of uncertain identity, or a query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Reader {
    Var(Var),
    Obs(usize),
    Query(usize),
}

/// Largest open-type value range tried when probing contingency.
const MAX_ALTERNATIVES: i64 = 64;

impl Interp<'_> {
    /// Every reader in `w`: its variables, then observations of uncertain
    /// identity, then queries.
    pub fn readers(&self, w: &World) -> Vec<Reader> {
        let mut out: Vec<Reader> = w.keys().map(|&v| Reader::Var(v)).collect();
        out.extend(self.obs.iter().map(|&i| Reader::Obs(i)));
        out.extend((0..self.m.queries.len()).map(Reader::Query));
        out
    }

    /// Direct reads of `r` in `w`, or `None` when `w` does not support it.
    pub fn reads(&self, w: &World, r: Reader) -> Result<Option<Vec<Var>>, InterpError> {
        self.reads_in(&mut w.clone(), r)
    }

    pub fn reader_name(&self, r: Reader) -> String {
        match r {
            Reader::Var(v) => self.var_name(&v),
            Reader::Obs(i) => format!("obs{i}"),
            Reader::Query(k) => format!("query{k}"),
        }
    }

    /// Direct reads of `r`, or `None` when `w` does not support it.
    fn reads_in(&self, w: &mut World, r: Reader) -> Result<Option<Vec<Var>>, InterpError> {
        let mut ctx = Ctx::new(w, Mode::Fixed);
        ctx.reads = Some(Vec::new());
        let res = match r {
            Reader::Var(v) => self.dist_of(v, &mut ctx).map(drop),
            Reader::Obs(i) => self.eval(&self.m.evidence[i].lhs, &[], &mut ctx).map(drop),
            Reader::Query(k) => self.eval(&self.m.queries[k].expr, &[], &mut ctx).map(drop),
        };
        match res {
            Ok(()) => Ok(Some(dedup(ctx.reads.take().unwrap_or_default()))),
            Err(Stop::Missing(_)) => Ok(None),
            Err(s) => Err(self.stop_error(s)),
        }
    }

    /// Other values `x` could take, when its range is finite and small.
    pub fn alternatives(&self, w: &World, x: &Var) -> Vec<Value> {
        let cur = w[x];
        let all: Vec<Value> = match self.m.fns[x.f as usize].ret {
            Ty::Bool => vec![Value::Bool(false), Value::Bool(true)],
            Ty::Obj(t) => {
                let td = &self.m.types[t as usize];
                let n = match td.number {
                    Some(nf) => w.get(&Var { f: nf, args: [0, 0] }).map_or(0, |v| v.as_int()),
                    None => td.objects.len() as i64,
                };
                (0..n.min(MAX_ALTERNATIVES)).map(Value::Obj).collect()
            }
            _ => Vec::new(),
        };
        all.into_iter().filter(|v| v.bits() != cur.bits()).collect()
    }

    /// Compare the children sets, contingent sets and reference counts
    /// recorded in `snap` with a recomputation on `w`. Children sets and
    /// counts must match exactly; a contingent set must contain every reader
    /// whose parent set changes when the variable takes another value.
    pub fn check_structure(&self, w: &World, snap: &Snapshot) -> Result<Vec<String>, InterpError> {
        let mut errs = Vec::new();
        let mut scratch = w.clone();
        let readers = self.readers(w);
        let mut reads = BTreeMap::new();
        let mut ch: BTreeMap<Var, Vec<Reader>> = BTreeMap::new();
        for &r in &readers {
            match self.reads_in(&mut scratch, r)? {
                Some(ps) => {
                    for &p in &ps {
                        ch.entry(p).or_default().push(r);
                    }
                    reads.insert(r, ps);
                }
                None => errs.push(format!("{} is not supported by the world", self.reader_name(r))),
            }
        }
        for sv in &snap.vars {
            let x = self.parse_var(&sv.name).ok_or_else(|| InterpError::Record(format!("unknown variable {}", sv.name)))?;
            let kids = ch.get(&x).cloned().unwrap_or_default();
            let mut mine: Vec<String> = kids.iter().map(|&r| self.reader_name(r)).collect();
            mine.sort();
            if let Some(theirs) = &sv.ch {
                let mut theirs = theirs.clone();
                theirs.sort();
                if theirs != mine {
                    errs.push(format!("children of {} are {theirs:?} recorded, {mine:?} recomputed", sv.name));
                }
            }
            if let Some(c) = sv.cnt {
                if c as usize != mine.len() {
                    errs.push(format!("reference count of {} is {c} recorded, {} recomputed", sv.name, mine.len()));
                }
            }
            let Some(cont) = &sv.cont else { continue };
            if let Some(stray) = cont.iter().find(|c| !mine.contains(c)) {
                errs.push(format!("contingent set of {} holds {stray}, which does not read it", sv.name));
            }
            for alt in self.alternatives(w, &x) {
                scratch.insert(x, alt);
                for &r in &kids {
                    let name = self.reader_name(r);
                    if cont.contains(&name) {
                        continue;
                    }
                    if self.reads_in(&mut scratch, r)?.as_ref() != reads.get(&r) {
                        errs.push(format!("{name} switches on {} = {alt} but is not in its contingent set", sv.name));
                    }
                }
            }
            scratch.insert(x, w[&x]);
        }
        Ok(errs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::frontend::load;
    use blog_runtime::record::SnapVar;
    use blog_runtime::rng::CountingRng;

    fn snap_of(it: &Interp, w: &World, ch: impl Fn(&Var) -> Vec<String>) -> Snapshot {
        let vars = w
            .iter()
            .map(|(v, x)| SnapVar {
                name: it.var_name(v),
                value: x.to_json(),
                pinned: false,
                cnt: None,
                ch: Some(ch(v)),
                cont: Some(Vec::new()),
            })
            .collect();
        Snapshot { vars, nodes: Vec::new(), world_size: 0 }
    }

    #[test]
    fn missing_contingent_reader_is_reported() {
        let m = load(&corpus::urnball(20, 2)).unwrap();
        let it = Interp::new(&m);
        let w = it.init_world(&mut CountingRng::new(3, 0)).unwrap();
        // exact children, but every contingent set left empty
        let mut scratch = w.clone();
        let mut kids: BTreeMap<Var, Vec<String>> = BTreeMap::new();
        let readers: Vec<Reader> = w
            .keys()
            .map(|&v| Reader::Var(v))
            .chain(it.obs.iter().map(|&i| Reader::Obs(i)))
            .chain([Reader::Query(0)])
            .collect();
        for r in readers {
            for p in it.reads_in(&mut scratch, r).unwrap().unwrap() {
                kids.entry(p).or_default().push(it.reader_name(r));
            }
        }
        let snap = snap_of(&it, &w, |v| kids.get(v).cloned().unwrap_or_default());
        let errs = it.check_structure(&w, &snap).unwrap();
        assert!(errs.iter().all(|e| e.contains("not in its contingent set")), "{errs:?}");
        assert!(errs.iter().any(|e| e.starts_with("obs0 switches on drawn(Draw[0])")), "{errs:?}");
    }

    #[test]
    fn wrong_children_are_reported() {
        let m = load(corpus::BURGLARY).unwrap();
        let it = Interp::new(&m);
        let w = it.init_world(&mut CountingRng::new(1, 0)).unwrap();
        let snap = snap_of(&it, &w, |_| Vec::new());
        let errs = it.check_structure(&w, &snap).unwrap();
        assert!(errs.iter().any(|e| e.starts_with("children of Alarm")), "{errs:?}");
    }
}
