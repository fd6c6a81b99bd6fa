//! Distribution kernels shared by generated code and the reference interpreter.

use std::f64::consts::PI;

use arrayvec::ArrayVec;
use rand_distr::{Beta, Gamma, Normal, Poisson};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::rng::CountingRng;
use crate::value::Value;

pub const MAX_CATEGORIES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    Bool,
    Int,
    Real,
    Obj,
}

impl ValueKind {
    pub fn wrap(self, key: i64) -> Value {
        match self {
            ValueKind::Bool => Value::Bool(key != 0),
            ValueKind::Int => Value::Int(key),
            ValueKind::Real => Value::Real(f64::from_bits(key as u64)),
            ValueKind::Obj => Value::Obj(key),
        }
    }
}

#[derive(Debug, Clone)]
pub enum CatTable {
    Static(&'static [(i64, f64)]),
    Inline(ArrayVec<(i64, f64), MAX_CATEGORIES>),
}

impl CatTable {
    pub fn inline(entries: &[(i64, f64)]) -> CatTable {
        CatTable::Inline(entries.iter().copied().collect())
    }

    pub fn entries(&self) -> &[(i64, f64)] {
        match self {
            CatTable::Static(s) => s,
            CatTable::Inline(v) => v,
        }
    }
}

/// A fully parameterised distribution, i.e. the tail call of a declaration
/// after its parameters were evaluated in some world.
#[derive(Debug, Clone)]
pub enum Dist {
    Bernoulli(f64),
    /// Mean and variance.
    Gaussian(f64, f64),
    Beta(f64, f64),
    /// Shape and rate.
    Gamma(f64, f64),
    Poisson(f64),
    /// Inclusive bounds.
    UniformInt(i64, i64),
    Categorical(ValueKind, CatTable),
    /// Uniform over the objects `0..n` of a type.
    UniformChoice(i64),
    /// Deterministic declaration body.
    Const(Value),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error("{family}: parameter out of domain ({detail})")]
    Domain { family: &'static str, detail: String },
    #[error("uniform choice over an empty set")]
    EmptyChoice,
}

fn domain(family: &'static str, detail: String) -> DistError {
    DistError::Domain { family, detail }
}

impl Dist {
    pub fn family(&self) -> &'static str {
        match self {
            Dist::Bernoulli(_) => "Bernoulli",
            Dist::Gaussian(..) => "Gaussian",
            Dist::Beta(..) => "Beta",
            Dist::Gamma(..) => "Gamma",
            Dist::Poisson(_) => "Poisson",
            Dist::UniformInt(..) => "UniformInt",
            Dist::Categorical(..) => "Categorical",
            Dist::UniformChoice(_) => "UniformChoice",
            Dist::Const(_) => "Const",
        }
    }

    pub fn validate(&self) -> Result<(), DistError> {
        match *self {
            Dist::Bernoulli(p) if !(0.0..=1.0).contains(&p) => Err(domain("Bernoulli", format!("p={p}"))),
            Dist::Gaussian(m, v) if !(v > 0.0) || !m.is_finite() => {
                Err(domain("Gaussian", format!("mean={m}, var={v}")))
            }
            Dist::Beta(a, b) if !(a > 0.0 && b > 0.0) => Err(domain("Beta", format!("a={a}, b={b}"))),
            Dist::Gamma(k, r) if !(k > 0.0 && r > 0.0) => Err(domain("Gamma", format!("shape={k}, rate={r}"))),
            Dist::Poisson(l) if !(l > 0.0) || !l.is_finite() => Err(domain("Poisson", format!("lambda={l}"))),
            Dist::UniformInt(lo, hi) if lo > hi => Err(domain("UniformInt", format!("[{lo}, {hi}]"))),
            Dist::UniformChoice(n) if n <= 0 => Err(DistError::EmptyChoice),
            Dist::Categorical(_, ref t) => {
                let total: f64 = t.entries().iter().map(|e| e.1).sum();
                if t.entries().iter().any(|e| !(e.1 >= 0.0)) || !(total > 0.0) {
                    Err(domain("Categorical", format!("weights {:?}", t.entries())))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Draw one value. Costs exactly one RNG call, except `Const` which costs none.
    pub fn sample(&self, rng: &mut CountingRng) -> Result<Value, DistError> {
        self.validate()?;
        Ok(match *self {
            Dist::Bernoulli(p) => Value::Bool(rng.uniform() < p),
            Dist::Gaussian(m, v) => Value::Real(rng.draw(&Normal::new(m, v.sqrt()).unwrap())),
            Dist::Beta(a, b) => Value::Real(rng.draw(&Beta::new(a, b).unwrap())),
            Dist::Gamma(k, r) => Value::Real(rng.draw(&Gamma::new(k, 1.0 / r).unwrap())),
            Dist::Poisson(l) => Value::Int(rng.draw(&Poisson::new(l).unwrap()) as i64),
            Dist::UniformInt(lo, hi) => Value::Int(rng.int_range(lo, hi)),
            Dist::UniformChoice(n) => Value::Obj(rng.index(n as usize) as i64),
            Dist::Categorical(kind, ref t) => {
                let entries = t.entries();
                let total: f64 = entries.iter().map(|e| e.1).sum();
                let mut u = rng.uniform() * total;
                let mut pick = entries[entries.len() - 1].0;
                for &(k, w) in entries {
                    if u < w {
                        pick = k;
                        break;
                    }
                    u -= w;
                }
                kind.wrap(pick)
            }
            Dist::Const(v) => v,
        })
    }

    /// Log density (or mass) of `x`; `-inf` off the support, NaN on invalid parameters.
    pub fn log_pdf(&self, x: Value) -> f64 {
        if self.validate().is_err() {
            return f64::NAN;
        }
        match *self {
            Dist::Bernoulli(p) => {
                if x.as_bool() {
                    p.ln()
                } else {
                    (1.0 - p).ln()
                }
            }
            Dist::Gaussian(m, v) => {
                let d = x.as_real() - m;
                -0.5 * (2.0 * PI * v).ln() - d * d / (2.0 * v)
            }
            Dist::Beta(a, b) => {
                let t = x.as_real();
                if !(0.0..=1.0).contains(&t) {
                    return f64::NEG_INFINITY;
                }
                (a - 1.0) * t.ln() + (b - 1.0) * (1.0 - t).ln() + ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b)
            }
            Dist::Gamma(k, r) => {
                let t = x.as_real();
                if t < 0.0 {
                    return f64::NEG_INFINITY;
                }
                k * r.ln() - ln_gamma(k) + (k - 1.0) * t.ln() - r * t
            }
            Dist::Poisson(l) => {
                let n = x.as_int();
                if n < 0 {
                    return f64::NEG_INFINITY;
                }
                n as f64 * l.ln() - l - ln_gamma(n as f64 + 1.0)
            }
            Dist::UniformInt(lo, hi) => {
                let n = x.as_int();
                if n < lo || n > hi {
                    f64::NEG_INFINITY
                } else {
                    -((hi - lo + 1) as f64).ln()
                }
            }
            Dist::UniformChoice(n) => {
                let i = x.as_int();
                if i < 0 || i >= n {
                    f64::NEG_INFINITY
                } else {
                    -(n as f64).ln()
                }
            }
            Dist::Categorical(_, ref t) => {
                let entries = t.entries();
                let total: f64 = entries.iter().map(|e| e.1).sum();
                let key = x.key();
                let w: f64 = entries.iter().filter(|e| e.0 == key).map(|e| e.1).sum();
                (w / total).ln()
            }
            Dist::Const(v) => {
                if v.bits() == x.bits() {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    /// Enumerable support, for finite discrete families.
    pub fn finite_support(&self) -> Option<Vec<Value>> {
        match *self {
            Dist::Bernoulli(_) => Some(vec![Value::Bool(false), Value::Bool(true)]),
            Dist::UniformInt(lo, hi) => Some((lo..=hi).map(Value::Int).collect()),
            Dist::UniformChoice(n) => Some((0..n.max(0)).map(Value::Obj).collect()),
            Dist::Categorical(kind, ref t) => {
                let mut keys: Vec<i64> = Vec::new();
                for &(k, w) in t.entries() {
                    if w > 0.0 && !keys.contains(&k) {
                        keys.push(k);
                    }
                }
                Some(keys.into_iter().map(|k| kind.wrap(k)).collect())
            }
            Dist::Const(v) => Some(vec![v]),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gaussian_standard_log_density_at_zero() {
        let lp = Dist::Gaussian(0.0, 1.0).log_pdf(Value::Real(0.0));
        assert_abs_diff_eq!(lp, -0.918_938_533_204_672_7, epsilon = 1e-12);
    }

    #[test]
    fn off_support_is_negative_infinity() {
        assert_eq!(Dist::UniformInt(1, 20).log_pdf(Value::Int(21)), f64::NEG_INFINITY);
        assert_eq!(Dist::UniformChoice(3).log_pdf(Value::Obj(3)), f64::NEG_INFINITY);
        assert_eq!(Dist::Poisson(2.0).log_pdf(Value::Int(-1)), f64::NEG_INFINITY);
        assert_eq!(Dist::Beta(2.0, 2.0).log_pdf(Value::Real(1.5)), f64::NEG_INFINITY);
    }

    #[test]
    fn invalid_parameters() {
        let mut rng = CountingRng::new(0, 0);
        assert!(Dist::Gaussian(0.0, -1.0).sample(&mut rng).is_err());
        assert!(Dist::Gaussian(0.0, 0.0).log_pdf(Value::Real(0.0)).is_nan());
        assert_eq!(Dist::UniformChoice(0).sample(&mut rng), Err(DistError::EmptyChoice));
        assert_eq!(rng.calls(), 0);
    }

    #[test]
    fn discrete_masses_sum_to_one() {
        let t: &'static [(i64, f64)] = &[(0, 0.9), (1, 0.1)];
        let cases = [
            Dist::Bernoulli(0.3),
            Dist::UniformInt(1, 20),
            Dist::UniformChoice(7),
            Dist::Categorical(ValueKind::Obj, CatTable::Static(t)),
        ];
        for d in cases {
            let s: f64 = d.finite_support().unwrap().iter().map(|&v| d.log_pdf(v).exp()).sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn poisson_and_gamma_closed_forms() {
        // P(3 | 2) = e^-2 2^3 / 3!
        let p = Dist::Poisson(2.0).log_pdf(Value::Int(3)).exp();
        assert_abs_diff_eq!(p, (-2.0f64).exp() * 8.0 / 6.0, epsilon = 1e-12);
        // Gamma(1, r) is Exponential(r)
        let g = Dist::Gamma(1.0, 2.0).log_pdf(Value::Real(0.5));
        assert_abs_diff_eq!(g, 2.0f64.ln() - 1.0, epsilon = 1e-12);
    }

    #[test]
    fn categorical_sampling_frequencies() {
        let t: &'static [(i64, f64)] = &[(0, 0.25), (1, 0.75)];
        let d = Dist::Categorical(ValueKind::Int, CatTable::Static(t));
        let mut rng = CountingRng::new(3, 0);
        let n = 40_000;
        let ones = (0..n).filter(|_| d.sample(&mut rng).unwrap() == Value::Int(1)).count();
        assert!((ones as f64 / n as f64 - 0.75).abs() < 0.01);
        assert_eq!(rng.calls(), n as u64);
    }
}
