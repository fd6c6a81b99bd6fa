//! Closed-form posterior updates for the supported conjugate pairs.

use crate::dist::Dist;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ConjugatePair {
    BetaBernoulli,
    GammaPoisson,
    GaussianGaussianMean,
}

/// Beta(a, b) prior, Bernoulli observations.
pub fn beta_bernoulli(a: f64, b: f64, successes: u64, failures: u64) -> Dist {
    Dist::Beta(a + successes as f64, b + failures as f64)
}

/// Gamma(shape, rate) prior, Poisson observations.
pub fn gamma_poisson(shape: f64, rate: f64, counts: &[i64]) -> Dist {
    let total: i64 = counts.iter().sum();
    Dist::Gamma(shape + total as f64, rate + counts.len() as f64)
}

/// Gaussian(mu0, var0) prior on the mean of Gaussian observations `(y, var)`
/// with known variances.
pub fn gaussian_mean(mu0: f64, var0: f64, obs: &[(f64, f64)]) -> Dist {
    let mut precision = 1.0 / var0;
    let mut weighted = mu0 / var0;
    for &(y, v) in obs {
        precision += 1.0 / v;
        weighted += y / v;
    }
    Dist::Gaussian(weighted / precision, 1.0 / precision)
}

/// Posterior over a prior given the likelihood terms of its children.
/// `children` holds each child's distribution and observed value; the
/// prior variable must occupy the pair's designated parameter slot.
pub fn posterior(pair: ConjugatePair, prior: &Dist, children: &[(Dist, crate::Value)]) -> Option<Dist> {
    match (pair, prior) {
        (ConjugatePair::BetaBernoulli, &Dist::Beta(a, b)) => {
            let s = children.iter().filter(|c| c.1.as_bool()).count() as u64;
            Some(beta_bernoulli(a, b, s, children.len() as u64 - s))
        }
        (ConjugatePair::GammaPoisson, &Dist::Gamma(k, r)) => {
            let counts: Vec<i64> = children.iter().map(|c| c.1.as_int()).collect();
            Some(gamma_poisson(k, r, &counts))
        }
        (ConjugatePair::GaussianGaussianMean, &Dist::Gaussian(m, v)) => {
            let mut obs = Vec::with_capacity(children.len());
            for (d, y) in children {
                match *d {
                    Dist::Gaussian(_, var) => obs.push((y.as_real(), var)),
                    _ => return None,
                }
            }
            Some(gaussian_mean(m, v, &obs))
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Value;
    use approx::assert_abs_diff_eq;

    #[test]
    fn beta_bernoulli_counts() {
        match beta_bernoulli(1.0, 1.0, 7, 3) {
            Dist::Beta(a, b) => assert_eq!((a, b), (8.0, 4.0)),
            d => panic!("{d:?}"),
        }
    }

    #[test]
    fn gamma_poisson_counts() {
        match gamma_poisson(2.0, 1.0, &[3, 5]) {
            Dist::Gamma(k, r) => assert_eq!((k, r), (10.0, 3.0)),
            d => panic!("{d:?}"),
        }
    }

    #[test]
    fn gaussian_mean_matches_formula() {
        let obs = [(1.0, 1.0), (2.0, 1.0), (4.0, 1.0)];
        match gaussian_mean(0.0, 4.0, &obs) {
            Dist::Gaussian(m, v) => {
                let prec = 0.25 + 3.0;
                assert_abs_diff_eq!(v, 1.0 / prec, epsilon = 1e-15);
                assert_abs_diff_eq!(m, 7.0 / prec, epsilon = 1e-15);
            }
            d => panic!("{d:?}"),
        }
    }

    /// The posterior log density and prior-times-likelihood differ by a
    /// constant in the parameter.
    #[test]
    fn posterior_is_proportional_to_joint() {
        let prior = Dist::Gaussian(1.0, 2.0);
        let kids = vec![
            (Dist::Gaussian(0.0, 0.5), Value::Real(0.3)),
            (Dist::Gaussian(0.0, 1.5), Value::Real(-1.2)),
        ];
        let post = posterior(ConjugatePair::GaussianGaussianMean, &prior, &kids).unwrap();
        let joint = |t: f64| {
            prior.log_pdf(Value::Real(t))
                + kids.iter().map(|(d, y)| match *d {
                    Dist::Gaussian(_, v) => Dist::Gaussian(t, v).log_pdf(*y),
                    _ => unreachable!(),
                }).sum::<f64>()
        };
        let c0 = post.log_pdf(Value::Real(0.0)) - joint(0.0);
        for t in [-2.0, -0.5, 0.7, 3.1] {
            assert_abs_diff_eq!(post.log_pdf(Value::Real(t)) - joint(t), c0, epsilon = 1e-9);
        }
    }
}
