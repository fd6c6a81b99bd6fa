//! Closed-form conjugate posteriors against prior times likelihood, and
//! against moments computed by direct quadrature.

use blog_runtime::conjugate::posterior;
use blog_runtime::{ConjugatePair, Dist, Value};
use proptest::prelude::*;

const TOL: f64 = 1e-9;

/// `post(t) - prior(t) - Σ lik(t)` must not depend on `t`.
fn check_proportional(
    pair: ConjugatePair,
    prior: Dist,
    kids: &[(Dist, Value)],
    lik: impl Fn(f64, &(Dist, Value)) -> f64,
    thetas: &[f64],
) -> Result<(), TestCaseError> {
    let post = posterior(pair, &prior, kids).expect("pair applies");
    let gap = |t: f64| post.log_pdf(Value::Real(t)) - prior.log_pdf(Value::Real(t)) - kids.iter().map(|k| lik(t, k)).sum::<f64>();
    let g0 = gap(thetas[0]);
    for &t in &thetas[1..] {
        let g = gap(t);
        prop_assert!((g - g0).abs() <= TOL * g0.abs().max(1.0), "{pair:?} at {t}: {g} vs {g0}");
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn beta_bernoulli(a in 0.5f64..10.0, b in 0.5f64..10.0, ys in prop::collection::vec(any::<bool>(), 0..30)) {
        let kids: Vec<_> = ys.iter().map(|&y| (Dist::Bernoulli(0.5), Value::Bool(y))).collect();
        check_proportional(
            ConjugatePair::BetaBernoulli,
            Dist::Beta(a, b),
            &kids,
            |t, (_, y)| Dist::Bernoulli(t).log_pdf(*y),
            &[0.1, 0.27, 0.5, 0.81, 0.95],
        )?;
    }

    #[test]
    fn gamma_poisson(k in 0.5f64..10.0, r in 0.1f64..5.0, ys in prop::collection::vec(0i64..20, 0..30)) {
        let kids: Vec<_> = ys.iter().map(|&y| (Dist::Poisson(1.0), Value::Int(y))).collect();
        check_proportional(
            ConjugatePair::GammaPoisson,
            Dist::Gamma(k, r),
            &kids,
            |t, (_, y)| Dist::Poisson(t).log_pdf(*y),
            &[0.2, 1.0, 2.5, 7.0, 15.0],
        )?;
    }

    #[test]
    fn gaussian_mean(
        m in -10.0f64..10.0,
        v in 0.1f64..50.0,
        ys in prop::collection::vec((-20.0f64..20.0, 0.1f64..10.0), 0..30),
    ) {
        let kids: Vec<_> = ys.iter().map(|&(y, var)| (Dist::Gaussian(0.0, var), Value::Real(y))).collect();
        check_proportional(
            ConjugatePair::GaussianGaussianMean,
            Dist::Gaussian(m, v),
            &kids,
            |t, (d, y)| match *d {
                Dist::Gaussian(_, var) => Dist::Gaussian(t, var).log_pdf(*y),
                _ => unreachable!(),
            },
            &[-3.0, -0.4, 0.0, 1.7, 4.2],
        )?;
    }
}

/// Posterior mean of a Gaussian mean by trapezoidal quadrature of the
/// unnormalized joint.
#[test]
fn gaussian_mean_matches_quadrature() {
    let prior = Dist::Gaussian(1.0, 4.0);
    let kids: Vec<_> = [(0.5, 1.0), (2.5, 0.5), (-1.0, 2.0)]
        .iter()
        .map(|&(y, var)| (Dist::Gaussian(0.0, var), Value::Real(y)))
        .collect();
    let joint = |t: f64| {
        let mut l = prior.log_pdf(Value::Real(t));
        for (d, y) in &kids {
            if let Dist::Gaussian(_, var) = *d {
                l += Dist::Gaussian(t, var).log_pdf(*y);
            }
        }
        l.exp()
    };
    let (lo, hi, n) = (-20.0, 20.0, 400_000);
    let h = (hi - lo) / n as f64;
    let (mut z, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for i in 0..=n {
        let t = lo + i as f64 * h;
        let w = if i == 0 || i == n { 0.5 } else { 1.0 } * joint(t);
        z += w;
        s1 += w * t;
        s2 += w * t * t;
    }
    let mean = s1 / z;
    let var = s2 / z - mean * mean;
    match posterior(ConjugatePair::GaussianGaussianMean, &prior, &kids).unwrap() {
        Dist::Gaussian(m, v) => {
            assert!((m - mean).abs() < TOL, "{m} vs {mean}");
            assert!((v - var).abs() < TOL, "{v} vs {var}");
        }
        d => panic!("{d:?}"),
    }
}

#[test]
fn mismatched_prior_has_no_closed_form() {
    let kids = [(Dist::Bernoulli(0.5), Value::Bool(true))];
    assert!(posterior(ConjugatePair::BetaBernoulli, &Dist::Gaussian(0.0, 1.0), &kids).is_none());
    let kids = [(Dist::Poisson(1.0), Value::Real(0.3))];
    assert!(posterior(ConjugatePair::GaussianGaussianMean, &Dist::Gaussian(0.0, 1.0), &kids).is_none());
}
