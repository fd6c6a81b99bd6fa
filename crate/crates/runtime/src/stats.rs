//! Run statistics and the query histogram.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dist::ValueKind;
use crate::value::Value;

const BATCHES: usize = 50;

/// Weighted accumulator for one query. Weights arrive in log space.
#[derive(Debug, Clone)]
pub struct QueryAcc {
    kind: ValueKind,
    /// log of summed weight per discrete key
    bins: BTreeMap<i64, f64>,
    shift: f64,
    sum_w: f64,
    sum_wx: f64,
    trace: Vec<f64>,
    keep_trace: bool,
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

impl QueryAcc {
    pub fn new(kind: ValueKind, keep_trace: bool) -> Self {
        QueryAcc {
            kind,
            bins: BTreeMap::new(),
            shift: f64::NEG_INFINITY,
            sum_w: 0.0,
            sum_wx: 0.0,
            trace: Vec::new(),
            keep_trace,
        }
    }

    pub fn add(&mut self, v: Value, log_w: f64) {
        if log_w == f64::NEG_INFINITY {
            return;
        }
        if self.kind == ValueKind::Real {
            let x = v.as_real();
            if log_w > self.shift {
                let scale = (self.shift - log_w).exp();
                self.sum_w *= scale;
                self.sum_wx *= scale;
                self.shift = log_w;
            }
            let w = (log_w - self.shift).exp();
            self.sum_w += w;
            self.sum_wx += w * x;
            if self.keep_trace {
                self.trace.push(x);
            }
        } else {
            let e = self.bins.entry(v.key()).or_insert(f64::NEG_INFINITY);
            *e = log_add(*e, log_w);
        }
    }

    pub fn mean(&self) -> Option<f64> {
        match self.kind {
            ValueKind::Real => (self.sum_w > 0.0).then(|| self.sum_wx / self.sum_w),
            _ => {
                let z = self.bins.values().fold(f64::NEG_INFINITY, |a, &b| log_add(a, b));
                if z == f64::NEG_INFINITY {
                    return None;
                }
                Some(self.bins.iter().map(|(&k, &lw)| k as f64 * (lw - z).exp()).sum())
            }
        }
    }

    /// Batch-means Monte-Carlo standard error of an unweighted trace.
    pub fn batch_se(&self) -> Option<f64> {
        batch_means_se(&self.trace)
    }

    /// Normalised probabilities keyed by value key.
    pub fn probabilities(&self) -> Vec<(i64, f64)> {
        let z = self.bins.values().fold(f64::NEG_INFINITY, |a, &b| log_add(a, b));
        self.bins.iter().map(|(&k, &lw)| (k, (lw - z).exp())).collect()
    }

    pub fn kind(&self) -> ValueKind {
        self.kind
    }
}

pub fn batch_means_se(trace: &[f64]) -> Option<f64> {
    let b = trace.len() / BATCHES;
    if b == 0 {
        return None;
    }
    let means: Vec<f64> = trace.chunks_exact(b).take(BATCHES).map(|c| c.iter().sum::<f64>() / b as f64).collect();
    let k = means.len() as f64;
    let m = means.iter().sum::<f64>() / k;
    let var = means.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (k - 1.0);
    Some((var / k).sqrt())
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct QueryResult {
    pub query: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub se: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub histogram: Option<BTreeMap<String, f64>>,
}

impl QueryResult {
    pub fn probability(&self, label: &str) -> Option<f64> {
        self.histogram.as_ref().map(|h| h.get(label).copied().unwrap_or(0.0))
    }
}

/// The stats file written by every inference program and by the interpreter.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunStats {
    pub model: String,
    pub algo: String,
    pub engine: String,
    pub n_samples: u64,
    pub seed: u64,
    pub wall_time_s: f64,
    pub rng_calls: u64,
    pub likelihood_evals: u64,
    pub accept_rate: Option<f64>,
    pub query_results: Vec<QueryResult>,
    #[serde(default)]
    pub flags: Vec<String>,
    #[serde(default)]
    pub world_size_mean: Option<f64>,
    #[serde(default)]
    pub cont_updates: u64,
    #[serde(default)]
    pub debug_violations: Vec<String>,
}

impl RunStats {
    pub fn query(&self, text: &str) -> Option<&QueryResult> {
        self.query_results.iter().find(|q| q.query == text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialise")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn discrete_weights_normalise() {
        let mut q = QueryAcc::new(ValueKind::Bool, false);
        q.add(Value::Bool(true), (0.3f64).ln());
        q.add(Value::Bool(false), (0.1f64).ln());
        q.add(Value::Bool(true), f64::NEG_INFINITY);
        let p = q.probabilities();
        assert_abs_diff_eq!(p[1].1, 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(q.mean().unwrap(), 0.75, epsilon = 1e-12);
    }

    #[test]
    fn real_mean_survives_tiny_weights() {
        let mut q = QueryAcc::new(ValueKind::Real, false);
        q.add(Value::Real(1.0), -900.0);
        q.add(Value::Real(3.0), -900.0 + 2f64.ln());
        assert_abs_diff_eq!(q.mean().unwrap(), 7.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn batch_se_of_constant_trace_is_zero() {
        assert_eq!(batch_means_se(&vec![2.0; 1000]), Some(0.0));
        assert_eq!(batch_means_se(&[1.0; 10]), None);
    }
}
