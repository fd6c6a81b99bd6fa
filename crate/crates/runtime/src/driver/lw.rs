use std::time::Instant;

use super::{finish_stats, new_accumulators, Driver, DriverError, RunOptions};
use crate::model::{CompiledModel, TemplateKind};
use crate::rt::Rt;
use crate::stats::RunStats;

pub struct LikelihoodWeighting;

/// One likelihood-weighted sample: fresh world, evidence weight, query values
/// fed to the accumulators.
pub fn lw_sample(m: &mut dyn CompiledModel, rt: &mut Rt) -> f64 {
    rt.bump_generation();
    if !rt.flags.db {
        m.eager_all(rt);
    }
    let mut lw = 0.0;
    for &e in m.evidence() {
        if m.template(e).kind != TemplateKind::Observation {
            m.get(rt, e);
        }
        lw += m.loglik(rt, e, false);
        rt.counters.likelihood_evals += 1;
    }
    lw
}

impl Driver for LikelihoodWeighting {
    fn name(&self) -> &'static str {
        "lw"
    }

    fn run(&self, m: &mut dyn CompiledModel, rt: &mut Rt, opts: &RunOptions) -> Result<RunStats, DriverError> {
        let start = Instant::now();
        rt.track_world = false;
        let mut accs = new_accumulators(m, false);
        for i in 0..opts.n {
            let lw = lw_sample(m, rt);
            for (k, acc) in accs.iter_mut().enumerate() {
                let v = m.query(rt, k);
                acc.add(v, lw);
            }
            if let Some(every) = opts.clear_memory_every {
                if every > 0 && (i + 1) % every == 0 {
                    m.clear_memory(rt);
                }
            }
        }
        Ok(finish_stats(m, rt, self.name(), opts, &accs, start.elapsed().as_secs_f64()))
    }
}
