//! Sources of the bundled models. The files under `models/` are produced by
//! these functions; parametrised families (urn-ball, mixtures) are generated
//! rather than hand-written.

use std::fmt::Write as _;

use blog_runtime::rng::CountingRng;
use blog_runtime::Dist;

pub const BURGLARY: &str = "\
// Burglary alarm network. Conditional probability tables live in fixed
// functions so that no random variable appears in a branch condition.
random Boolean Burglary ~ Bernoulli(0.4);
random Boolean Earthquake ~ Bernoulli(0.4);

fixed Real pAlarm(Boolean b, Boolean e) =
  if b then (if e then 0.9 else 0.8) else (if e then 0.5 else 0.1);
fixed Real pJohn(Boolean a) = if a then 0.8 else 0.2;
fixed Real pMary(Boolean a) = if a then 0.7 else 0.3;

random Boolean Alarm ~ Bernoulli(pAlarm(Burglary, Earthquake));
random Boolean JohnCalls ~ Bernoulli(pJohn(Alarm));
random Boolean MaryCalls ~ Bernoulli(pMary(Alarm));

obs JohnCalls = true;
obs MaryCalls = true;

query Burglary;
";

pub const HURRICANE: &str = "\
// Two cities; the hurricane hits one of them first. The city hit first
// prepares according to its own bias, the other one according to the damage
// already done. Dependencies between Prep and Damage are contingent.
type City;
type PrepLevel;
type DamageLevel;
distinct City A, B;
distinct PrepLevel High, Low;
distinct DamageLevel Severe, Mild;

random City First ~ Categorical({A -> 0.6, B -> 0.4});

fixed Real prepBias(City c) = if c == A then 0.6 else 0.4;

random PrepLevel Prep(City c) ~
  if First == c then Categorical({High -> prepBias(c), Low -> 1.0 - prepBias(c)})
  else if Damage(First) == Severe then Categorical({High -> 0.5, Low -> 0.5})
  else Categorical({High -> 0.2, Low -> 0.8});

random DamageLevel Damage(City c) ~
  if Prep(c) == High then Categorical({Severe -> 0.4, Mild -> 0.6})
  else Categorical({Severe -> 0.6, Mild -> 0.4});

obs Damage(First) = Severe;

query First;
";

/// Urn with an unknown number of balls (uniform on 1..=balls), `draws`
/// observed draws with replacement and a query on the colour of one more.
pub fn urnball(balls: u32, draws: u32) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "// Urn-ball with at most {balls} balls and {draws} observed draws.");
    s.push_str("type Ball;\ntype Draw;\ntype Color;\ndistinct Color Blue, Green;\n");
    let _ = writeln!(s, "distinct Draw Draw[{}];\n", draws + 1);
    let _ = writeln!(s, "#Ball ~ UniformInt(1, {balls});\n");
    s.push_str("random Color color(Ball b) ~ Categorical({Blue -> 0.9, Green -> 0.1});\n");
    s.push_str("random Ball drawn(Draw d) ~ UniformChoice({Ball b});\n\n");
    for i in 0..draws {
        let c = if i % 2 == 0 { "Blue" } else { "Green" };
        let _ = writeln!(s, "obs color(drawn(Draw[{i}])) = {c};");
    }
    let _ = writeln!(s, "\nquery color(drawn(Draw[{draws}]));");
    s
}

fn gaussian_data(rng: &mut CountingRng, means: &[f64], n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let k = rng.index(means.len());
            let x = Dist::Gaussian(means[k], 1.0).sample(rng).expect("valid gaussian").as_real();
            (x * 1000.0).round() / 1000.0
        })
        .collect()
}

fn real(x: f64) -> String {
    let s = format!("{x}");
    if s.contains('.') {
        s
    } else {
        format!("{s}.0")
    }
}

/// Mixture of four unit-variance Gaussians with separated prior means and
/// `n` observed points.
pub fn gmm(n: usize, seed: u64) -> String {
    const MEANS: [f64; 4] = [-6.0, -2.0, 2.0, 6.0];
    let mut rng = CountingRng::new(seed, 0);
    let data = gaussian_data(&mut rng, &MEANS, n);
    let mut s = String::new();
    let _ = writeln!(s, "// Gaussian mixture with four clusters and {n} points.");
    let _ = writeln!(s, "type Cluster;\ntype Data;\ndistinct Cluster C[4];\ndistinct Data D[{n}];\n");
    s.push_str("fixed Real priorMean(Cluster c) =\n  case c in {C[0] -> -6.0, C[1] -> -2.0, C[2] -> 2.0, C[3] -> 6.0};\n\n");
    s.push_str("random Real mu(Cluster c) ~ Gaussian(priorMean(c), 1.0);\n");
    s.push_str("random Cluster z(Data d) ~ UniformChoice({Cluster c});\n");
    s.push_str("random Real x(Data d) ~ Gaussian(mu(z(d)), 1.0);\n\n");
    for (i, x) in data.iter().enumerate() {
        let _ = writeln!(s, "obs x(D[{i}]) = {};", real(*x));
    }
    s.push('\n');
    for k in 0..4 {
        let _ = writeln!(s, "query mu(C[{k}]);");
    }
    s
}

/// Mixture with an unknown number of clusters.
pub fn infgmm(n: usize, seed: u64) -> String {
    const MEANS: [f64; 3] = [-5.0, 0.0, 5.0];
    let mut rng = CountingRng::new(seed, 0);
    let data = gaussian_data(&mut rng, &MEANS, n);
    let mut s = String::new();
    let _ = writeln!(s, "// Gaussian mixture with an unknown number of clusters and {n} points.");
    let _ = writeln!(s, "type Cluster;\ntype Data;\ndistinct Data D[{n}];\n");
    s.push_str("#Cluster ~ UniformInt(1, 10);\n\n");
    s.push_str("random Real mu(Cluster c) ~ Gaussian(0.0, 25.0);\n");
    s.push_str("random Cluster z(Data d) ~ UniformChoice({Cluster c});\n");
    s.push_str("random Real x(Data d) ~ Gaussian(mu(z(d)), 1.0);\n\n");
    for (i, x) in data.iter().enumerate() {
        let _ = writeln!(s, "obs x(D[{i}]) = {};", real(*x));
    }
    s.push_str("\nquery #Cluster;\n");
    s
}

/// Every bundled model as (file stem, source).
pub fn bundled() -> Vec<(&'static str, String)> {
    vec![
        ("burglary", BURGLARY.to_string()),
        ("hurricane", HURRICANE.to_string()),
        ("urnball_20_2", urnball(20, 2)),
        ("urnball_20_10", urnball(20, 10)),
        ("urnball_40_20", urnball(40, 20)),
        ("gmm", gmm(100, 11)),
        ("infgmm", infgmm(20, 5)),
    ]
}

/// Source of a bundled model by file stem.
pub fn source(name: &str) -> Option<String> {
    bundled().into_iter().find(|(n, _)| *n == name).map(|(_, s)| s)
}

/// Write every bundled model as `<dir>/<name>.blog`.
pub fn write_bundled(dir: &std::path::Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, src) in bundled() {
        std::fs::write(dir.join(format!("{name}.blog")), src)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::load;

    #[test]
    fn every_bundled_model_validates() {
        for (name, src) in bundled() {
            if let Err(e) = load(&src) {
                panic!("{name}: {e}");
            }
        }
    }

    #[test]
    fn shipped_files_match_generators() {
        let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models");
        for (name, src) in bundled() {
            let on_disk = std::fs::read_to_string(dir.join(format!("{name}.blog"))).unwrap();
            assert_eq!(on_disk, src, "models/{name}.blog is out of date");
        }
    }

    #[test]
    fn urnball_shape() {
        let m = load(&urnball(20, 2)).unwrap();
        assert_eq!(m.evidence.len(), 2);
        assert_eq!(m.queries[0].text, "color(drawn(Draw[2]))");
    }
}
