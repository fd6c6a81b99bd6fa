//! The static children bound and switching sets, checked against the
//! dependencies the interpreter observes on random worlds.

use blog_core::analysis::{static_children, ArgMap, ChildEdge, Node};
use blog_core::corpus;
use blog_core::frontend::{load, Model};
use blog_core::interp::{Interp, Reader, Var, World};
use blog_runtime::rng::CountingRng;
use proptest::prelude::*;

const STEPS: usize = 125;

fn node(r: Reader) -> (Node, [i64; 2]) {
    match r {
        Reader::Var(v) => (Node::Fn(v.f), v.args),
        Reader::Obs(i) => (Node::Obs(i), [0, 0]),
        Reader::Query(k) => (Node::Query(k), [0, 0]),
    }
}

/// Does `e` describe the dependency of the reader with arguments `child`
/// on `p`?
fn covers(e: &ChildEdge, p: &Var, child: [i64; 2]) -> bool {
    e.args.iter().enumerate().all(|(j, a)| match *a {
        ArgMap::Same(i) => p.args[j] == child[i as usize],
        ArgMap::Const(k) => p.args[j] == k,
        ArgMap::All => true,
    })
}

/// Violations of Ĉh ⊇ Ch_w and of Ŝ soundness in `w`.
fn check_world(m: &Model, it: &Interp, w: &World) -> Vec<String> {
    let ch = static_children(m);
    let mut errs = Vec::new();
    for r in it.readers(w) {
        let Some(ps) = it.reads(w, r).unwrap() else {
            errs.push(format!("{} unsupported", it.reader_name(r)));
            continue;
        };
        let (n, child) = node(r);
        for p in &ps {
            let edges: Vec<&ChildEdge> =
                ch[&p.f].iter().filter(|e| e.child == n && covers(e, p, child)).collect();
            if edges.is_empty() {
                errs.push(format!("{} reads {} with no static edge", it.reader_name(r), it.var_name(p)));
                continue;
            }
            if edges.iter().any(|e| e.switching) {
                continue;
            }
            let mut alt_w = w.clone();
            for alt in it.alternatives(w, p) {
                alt_w.insert(*p, alt);
                if it.reads(&alt_w, r).unwrap().as_ref() != Some(&ps) {
                    errs.push(format!(
                        "{} switches on {} = {alt} through a non-switching edge",
                        it.reader_name(r),
                        it.var_name(p)
                    ));
                }
            }
        }
    }
    errs
}

fn walk(src: &str, seed: u64) -> Result<(), TestCaseError> {
    let m = load(src).unwrap();
    let it = Interp::new(&m);
    let mut rng = CountingRng::new(seed, 0);
    let mut w = it.init_world(&mut rng).unwrap();
    for step in 0..STEPS {
        let errs = check_world(&m, &it, &w);
        prop_assert!(errs.is_empty(), "step {}: {:?}", step, errs);
        if let Some((s, acc)) = it.mh_step(&w, &mut rng).unwrap() {
            if acc {
                w = s.world;
            }
        }
    }
    Ok(())
}

macro_rules! model_tests {
    ($($name:ident => $src:expr;)*) => {
        proptest! {
            #![proptest_config(ProptestConfig::with_cases(8))]
            $(
                #[test]
                fn $name(seed in any::<u64>()) {
                    walk(&$src, seed)?;
                }
            )*
        }
    };
}

model_tests! {
    burglary_children_are_covered => corpus::BURGLARY;
    hurricane_children_are_covered => corpus::HURRICANE;
    urnball_20_2_children_are_covered => corpus::urnball(20, 2);
    urnball_20_10_children_are_covered => corpus::urnball(20, 10);
    gmm_children_are_covered => corpus::gmm(20, 3);
    infgmm_children_are_covered => corpus::infgmm(10, 5);
}

/// Every urn-ball colour observation is a static child of `color`
/// through an `All` argument.
#[test]
fn urnball_observations_depend_on_every_color() {
    let m = load(&corpus::urnball(20, 2)).unwrap();
    let ch = static_children(&m);
    let color = m.fns.iter().position(|f| f.name == "color").unwrap() as u16;
    let obs: Vec<&ChildEdge> = ch[&color].iter().filter(|e| matches!(e.child, Node::Obs(_))).collect();
    assert!(!obs.is_empty());
    assert!(obs.iter().all(|e| e.args == vec![ArgMap::All]), "{obs:?}");
}
