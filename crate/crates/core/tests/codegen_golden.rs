//! Emission is deterministic, and the add_to_Ch registrations of the
//! mixture models match hand-checked listings.

use blog_core::analysis::{analyze, Node};
use blog_core::codegen::{add_to_ch_listing, emit, Options};
use blog_core::corpus;
use blog_core::frontend::{load, Model};

fn node_of(m: &Model, name: &str) -> Node {
    Node::Fn(m.fns.iter().position(|f| f.name == name).unwrap() as u16)
}

fn listing(src: &str, name: &str) -> String {
    let m = load(src).unwrap();
    add_to_ch_listing(&m, &analyze(&m), node_of(&m, name))
}

#[test]
fn infgmm_observation_registers_three_parents() {
    assert_eq!(
        listing(&corpus::infgmm(20, 5), "x"),
        "Cont(z(d))+=x(d); Ch(z(d))+=x(d); Ch(mu(z(d)))+=x(d)"
    );
}

#[test]
fn gmm_observation_registers_the_same_shape() {
    assert_eq!(listing(&corpus::gmm(10, 1), "x"), "Cont(z(d))+=x(d); Ch(z(d))+=x(d); Ch(mu(z(d)))+=x(d)");
}

#[test]
fn urnball_listings() {
    let src = corpus::urnball(20, 2);
    assert_eq!(listing(&src, "drawn"), "Ch(#Ball)+=drawn(d)");
    assert_eq!(listing(&src, "color"), "");
    let m = load(&src).unwrap();
    assert_eq!(
        add_to_ch_listing(&m, &analyze(&m), Node::Obs(0)),
        "Cont(drawn(Draw[0]))+=obs[0]; Ch(drawn(Draw[0]))+=obs[0]; Ch(color(drawn(Draw[0])))+=obs[0]"
    );
}

#[test]
fn burglary_alarm_listing() {
    assert_eq!(listing(corpus::BURGLARY, "Alarm"), "Ch(Burglary)+=Alarm; Ch(Earthquake)+=Alarm");
}

#[test]
fn hurricane_prep_listing() {
    assert_eq!(
        listing(corpus::HURRICANE, "Prep"),
        "Cont(First)+=Prep(c); Ch(First)+=Prep(c); if (First == c) { } else { \
         Cont(Damage(First))+=Prep(c); Ch(Damage(First))+=Prep(c); if (Damage(First) == Severe) { } else { } }"
    );
}

#[test]
fn emission_is_byte_identical() {
    for (name, src) in corpus::bundled() {
        let m = load(&src).unwrap();
        for algo in ["lw", "pmh", "gibbs"] {
            for (db, rc, acu) in [(true, true, true), (false, true, true), (true, false, true), (true, true, false)] {
                let opts = Options { model_name: name.to_string(), algo: algo.to_string(), db, rc, acu, clear_memory_every: None };
                let Ok(a) = emit(&m, &analyze(&m), &opts) else { continue };
                // a fresh front end and analysis, not a reused one
                let m2 = load(&src).unwrap();
                let b = emit(&m2, &analyze(&m2), &opts).unwrap();
                assert_eq!(a.main_rs, b.main_rs, "{name} {algo}");
                assert_eq!(a.cargo_toml, b.cargo_toml, "{name} {algo}");
                assert_eq!(a.package, b.package);
            }
        }
    }
}

#[test]
fn flags_change_the_package_name() {
    let m = load(corpus::BURGLARY).unwrap();
    let a = analyze(&m);
    let base = Options { model_name: "burglary".into(), algo: "pmh".into(), ..Options::default() };
    let p0 = emit(&m, &a, &base).unwrap().package;
    let p1 = emit(&m, &a, &Options { rc: false, ..base.clone() }).unwrap().package;
    assert_ne!(p0, p1);
}
