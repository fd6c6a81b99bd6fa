//! Exact posterior by lazy depth-first enumeration of worlds.
//!
//! Each branch instantiates only what the evidence and the queries demand,
//! so a contingent model is enumerated over its own per-world structure.

use std::collections::BTreeMap;

use blog_runtime::Value;

use super::{Ctx, Interp, InterpError, Mode, Stop, Var, World};
use crate::frontend::typed::Ty;
use crate::frontend::Model;

const MAX_LEAVES: u64 = 200_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ExactQuery {
    pub query: String,
    /// Label and probability, ordered by label.
    pub probs: Vec<(String, f64)>,
}

impl ExactQuery {
    pub fn probability(&self, label: &str) -> f64 {
        self.probs.iter().find(|(l, _)| l == label).map_or(0.0, |p| p.1)
    }
}

struct Search<'i, 'm> {
    it: &'i Interp<'m>,
    /// Per query: value key -> summed weight.
    mass: Vec<BTreeMap<i64, f64>>,
    /// Probability mass of the worlds consistent with the evidence.
    z: f64,
    leaves: u64,
}

enum Leaf {
    Done(f64, Vec<Value>),
    Need(Var),
}

impl Search<'_, '_> {
    fn leaf(&self, w: &mut World) -> Result<Leaf, InterpError> {
        let it = self.it;
        let mut ctx = Ctx::new(w, Mode::Fixed);
        let need = |s: Stop| match s {
            Stop::Missing(v) => Ok(Leaf::Need(v)),
            s => Err(it.stop_error(s)),
        };
        let mut ll = 0.0;
        for (i, e) in it.m.evidence.iter().enumerate() {
            if e.is_pinned() {
                continue;
            }
            match it.obs_loglik(i, &mut ctx) {
                Ok(l) => ll += l,
                Err(s) => return need(s),
            }
            if ll == f64::NEG_INFINITY {
                return Ok(Leaf::Done(ll, Vec::new()));
            }
        }
        let mut pins: Vec<(Var, Value)> = it.pins().map(|(v, x)| (*v, *x)).collect();
        pins.sort_by_key(|p| p.0);
        for (v, x) in pins {
            if !ctx.world.contains_key(&v) {
                return Ok(Leaf::Need(v));
            }
            match it.dist_of(v, &mut ctx) {
                Ok(d) => ll += d.log_pdf(x),
                Err(s) => return need(s),
            }
            if ll == f64::NEG_INFINITY {
                return Ok(Leaf::Done(ll, Vec::new()));
            }
        }
        let mut qs = Vec::new();
        for q in &it.m.queries {
            match it.eval(&q.expr, &[], &mut ctx) {
                Ok(v) => qs.push(v),
                Err(s) => return need(s),
            }
        }
        Ok(Leaf::Done(ll, qs))
    }

    fn dfs(&mut self, w: &mut World, logw: f64) -> Result<(), InterpError> {
        let v = match self.leaf(w)? {
            Leaf::Done(ll, qs) => {
                self.leaves += 1;
                if self.leaves > MAX_LEAVES {
                    return Err(InterpError::Unsupported(format!("more than {MAX_LEAVES} worlds")));
                }
                let p = (logw + ll).exp();
                if ll > f64::NEG_INFINITY && p > 0.0 {
                    self.z += p;
                    for (acc, q) in self.mass.iter_mut().zip(qs) {
                        *acc.entry(q.key()).or_default() += p;
                    }
                }
                return Ok(());
            }
            Leaf::Need(v) => v,
        };
        self.branch(w, v, logw)
    }

    fn branch(&mut self, w: &mut World, v: Var, logw: f64) -> Result<(), InterpError> {
        let it = self.it;
        if let Some((_, &x)) = it.pins().find(|(p, _)| **p == v) {
            w.insert(v, x);
            let r = self.dfs(w, logw);
            w.remove(&v);
            return r;
        }
        let d = {
            let mut ctx = Ctx::new(w, Mode::Fixed);
            match it.dist_of(v, &mut ctx) {
                Ok(d) => d,
                Err(Stop::Missing(p)) => return self.branch(w, p, logw),
                Err(s) => return Err(it.stop_error(s)),
            }
        };
        let support = d.finite_support().ok_or_else(|| {
            InterpError::Unsupported(format!("{} has a {} distribution", it.var_name(&v), d.family()))
        })?;
        for x in support {
            let lp = d.log_pdf(x);
            if lp == f64::NEG_INFINITY {
                continue;
            }
            w.insert(v, x);
            let r = self.dfs(w, logw + lp);
            w.remove(&v);
            r?;
        }
        Ok(())
    }
}

/// Exact query distributions for a model whose worlds are finite and
/// discrete. Refuses real-valued random functions up front and unbounded
/// supports when they are reached.
pub fn enumerate_exact(m: &Model) -> Result<Vec<ExactQuery>, InterpError> {
    if let Some((_, f)) = m.random_fns().find(|(_, f)| f.ret == Ty::Real) {
        return Err(InterpError::Unsupported(format!("`{}` is real-valued", f.name)));
    }
    let it = Interp::new(m);
    let mut s = Search { it: &it, mass: vec![BTreeMap::new(); m.queries.len()], z: 0.0, leaves: 0 };
    s.dfs(&mut World::new(), 0.0)?;
    if !(s.z > 0.0) {
        return Err(InterpError::Unsatisfiable(0));
    }
    Ok(m
        .queries
        .iter()
        .zip(&s.mass)
        .map(|(q, mass)| {
            let kind = super::value_kind(q.expr.ty);
            let mut probs: Vec<(String, f64)> =
                mass.iter().map(|(&k, &p)| (it.label(q.expr.ty, kind.wrap(k)), p / s.z)).collect();
            probs.sort_by(|a, b| a.0.cmp(&b.0));
            ExactQuery { query: q.text.clone(), probs }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::frontend::load;
    use approx::assert_abs_diff_eq;

    /// Burglary by brute force over all 2^3 hidden assignments.
    #[test]
    fn burglary_matches_a_hand_sum() {
        let m = load(corpus::BURGLARY).unwrap();
        let got = enumerate_exact(&m).unwrap()[0].probability("true");
        let pa = |b: bool, e: bool| match (b, e) {
            (true, true) => 0.9,
            (true, false) => 0.8,
            (false, true) => 0.5,
            (false, false) => 0.1,
        };
        let (mut num, mut den) = (0.0, 0.0);
        for b in [false, true] {
            for e in [false, true] {
                for a in [false, true] {
                    let mut p = if b { 0.4 } else { 0.6 } * if e { 0.4 } else { 0.6 };
                    p *= if a { pa(b, e) } else { 1.0 - pa(b, e) };
                    p *= if a { 0.8 * 0.7 } else { 0.2 * 0.3 };
                    den += p;
                    if b {
                        num += p;
                    }
                }
            }
        }
        assert_abs_diff_eq!(got, num / den, epsilon = 1e-12);
    }

    /// Hurricane: only the first-hit city's preparation and damage matter
    /// to the evidence.
    #[test]
    fn hurricane_respects_per_world_structure() {
        let m = load(corpus::HURRICANE).unwrap();
        let got = enumerate_exact(&m).unwrap()[0].probability("A");
        let severe = |bias: f64| bias * 0.4 + (1.0 - bias) * 0.6;
        let (a, b) = (0.6 * severe(0.6), 0.4 * severe(0.4));
        assert_abs_diff_eq!(got, a / (a + b), epsilon = 1e-12);
    }

    /// Urn-ball: sum over the number of balls with the colour counts of
    /// distinct draws in closed form.
    #[test]
    fn urnball_matches_a_sufficient_statistic_sum() {
        let m = load(&corpus::urnball(20, 2)).unwrap();
        let got = enumerate_exact(&m).unwrap()[0].probability("Blue");
        let (pb, pg) = (0.9, 0.1);
        let (mut num, mut den) = (0.0, 0.0);
        for n in 1..=20 {
            let nf = n as f64;
            // draws 0 and 1 hit the same ball: Blue and Green at once is impossible
            let distinct = (nf - 1.0) / nf;
            let ev = distinct * pb * pg;
            // draw 2 repeats ball 0, repeats ball 1, or is fresh
            let blue = ev * (1.0 / nf * 1.0 + 1.0 / nf * 0.0 + (nf - 2.0).max(0.0) / nf * pb);
            num += blue / 20.0;
            den += ev / 20.0;
        }
        assert_abs_diff_eq!(got, num / den, epsilon = 1e-9);
    }

    #[test]
    fn deterministic_model_is_a_point_mass() {
        let m = load("random Boolean a ~ true; query a;").unwrap();
        let q = &enumerate_exact(&m).unwrap()[0];
        assert_eq!(q.probs, vec![("true".to_string(), 1.0)]);
    }

    #[test]
    fn continuous_models_are_refused() {
        let m = load(&corpus::gmm(10, 1)).unwrap();
        assert!(matches!(enumerate_exact(&m), Err(InterpError::Unsupported(_))));
        let m = load("random Integer k ~ Poisson(3.0); query k;").unwrap();
        let e = enumerate_exact(&m).unwrap_err();
        assert!(e.to_string().contains("Poisson"), "{e}");
    }
}
