use std::time::Instant;

use blog_runtime::rng::CountingRng;
use blog_runtime::stats::RunStats;
use blog_runtime::Value;

use super::{base_stats, Ctx, Interp, InterpError, Mode, Var, World};
use crate::frontend::typed::Ty;
use crate::frontend::Model;

impl Interp<'_> {
    /// Sample every instantiable variable in declaration order, reading the
    /// number variable of each open argument type first.
    fn sample_all(&self, ctx: &mut Ctx) -> Result<(), InterpError> {
        let err = |s| self.stop_error(s);
        for (f, def) in self.m.random_fns() {
            let mut ranges = Vec::with_capacity(def.params.len());
            for (_, t) in &def.params {
                let Ty::Obj(t) = *t else { unreachable!("random functions take objects") };
                let td = &self.m.types[t as usize];
                ranges.push(match td.number {
                    Some(n) => self.get(Var { f: n, args: [0, 0] }, ctx).map_err(err)?.as_int(),
                    None => td.objects.len() as i64,
                });
            }
            let n0 = ranges.first().copied().unwrap_or(1);
            let n1 = ranges.get(1).copied().unwrap_or(1);
            for a in 0..n0 {
                for b in 0..n1 {
                    self.get(Var { f, args: [a, b] }, ctx).map_err(err)?;
                }
            }
        }
        Ok(())
    }

    /// One weighted sample from an empty world: log weight, query values and
    /// the number of likelihood factors evaluated.
    pub fn lw_sample(&self, rng: &mut CountingRng, eager: bool) -> Result<(f64, Vec<Value>, u64), InterpError> {
        let err = |s| self.stop_error(s);
        let mut w = World::new();
        let mut ctx = Ctx::new(&mut w, Mode::Sample(rng));
        if eager {
            self.sample_all(&mut ctx)?;
        }
        let mut lw = 0.0;
        for i in 0..self.m.evidence.len() {
            lw += self.evidence_loglik(i, &mut ctx).map_err(err)?;
        }
        let mut qs = Vec::with_capacity(self.m.queries.len());
        for q in &self.m.queries {
            qs.push(self.eval(&q.expr, &[], &mut ctx).map_err(err)?);
        }
        Ok((lw, qs, self.m.evidence.len() as u64))
    }
}

/// Likelihood weighting over explicit worlds. `eager` samples every
/// instantiable variable before weighting, the baseline without backchaining.
pub fn interp_lw(m: &Model, name: &str, n: u64, seed: u64, eager: bool) -> Result<RunStats, InterpError> {
    let start = Instant::now();
    let it = Interp::new(m);
    let mut rng = CountingRng::new(seed, 0);
    let mut accs = it.accumulators(false);
    let mut evals = 0;
    for _ in 0..n {
        let (lw, qs, e) = it.lw_sample(&mut rng, eager)?;
        evals += e;
        for (acc, q) in accs.iter_mut().zip(qs) {
            acc.add(q, lw);
        }
    }
    let mut stats = base_stats(name, "lw", n, seed);
    stats.wall_time_s = start.elapsed().as_secs_f64();
    stats.rng_calls = rng.calls();
    stats.likelihood_evals = evals;
    stats.query_results = it.query_stats(&accs);
    if eager {
        stats.flags.push("no-db".into());
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::frontend::load;
    use crate::interp::enumerate_exact;

    #[test]
    fn lw_converges_on_hurricane() {
        let m = load(corpus::HURRICANE).unwrap();
        let exact = enumerate_exact(&m).unwrap()[0].probability("A");
        let s = interp_lw(&m, "hurricane", 100_000, 7, false).unwrap();
        let p = s.query_results[0].probability("A").unwrap();
        assert!((p - exact).abs() < 0.01, "{p} vs {exact}");
    }

    #[test]
    fn eager_sampling_draws_more() {
        let m = load(&corpus::urnball(20, 2)).unwrap();
        let lazy = interp_lw(&m, "u", 2000, 1, false).unwrap();
        let eager = interp_lw(&m, "u", 2000, 1, true).unwrap();
        assert!(eager.rng_calls > lazy.rng_calls);
    }

    #[test]
    fn no_evidence_means_unit_weights() {
        let m = load("random Boolean a ~ Bernoulli(0.25); query a;").unwrap();
        let it = Interp::new(&m);
        let mut rng = CountingRng::new(1, 0);
        for _ in 0..10 {
            assert_eq!(it.lw_sample(&mut rng, false).unwrap().0, 0.0);
        }
    }
}
