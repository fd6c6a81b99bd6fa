//! Memo tables against a map model, and distribution invariants.

use std::collections::HashMap;

use blog_runtime::rng::CountingRng;
use blog_runtime::{CatTable, Dist, DynamicTable, Table2, Value, ValueKind, NEVER};
use proptest::prelude::*;

#[derive(Debug, Clone)]
enum Op {
    Write(usize, usize, u32),
    Ensure(usize),
    Shrink(usize, usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        8 => (0usize..12, 0usize..40, any::<u32>()).prop_map(|(i, j, v)| Op::Write(i, j, v)),
        1 => (0usize..80).prop_map(Op::Ensure),
        1 => (0usize..12, 0usize..40).prop_map(|(r, c)| Op::Shrink(r, c)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    /// Growth never loses a written cell; shrinking keeps exactly the live
    /// prefix.
    #[test]
    fn table2_behaves_like_a_map(ops in prop::collection::vec(op(), 1..60)) {
        let mut t: Table2<u32> = Table2::new();
        let mut reference: HashMap<(usize, usize), u32> = HashMap::new();
        for o in &ops {
            match *o {
                Op::Write(i, j, v) => {
                    let c = t.cell(i, j);
                    c.val = v;
                    c.mark = 1;
                    reference.insert((i, j), v);
                }
                Op::Ensure(_) => {}
                Op::Shrink(r, c) => {
                    t.shrink_to(r, c);
                    reference.retain(|&(i, j), _| i < r && j < c);
                }
            }
            for (&(i, j), &v) in &reference {
                let c = t.get(i, j).expect("written cell exists");
                prop_assert_eq!((c.val, c.mark), (v, 1));
            }
        }
    }

    #[test]
    fn dynamic_table_growth_keeps_values(ops in prop::collection::vec(op(), 1..60)) {
        let mut t: DynamicTable<u32> = DynamicTable::default();
        let mut reference: HashMap<usize, u32> = HashMap::new();
        for o in &ops {
            match *o {
                Op::Write(_, j, v) => {
                    t.cell(j).val = v;
                    reference.insert(j, v);
                }
                Op::Ensure(n) => {
                    let before = t.len();
                    t.ensure(n);
                    prop_assert_eq!(t.len(), before.max(n));
                    prop_assert!(t.capacity() >= t.len());
                }
                Op::Shrink(_, c) => {
                    t.shrink_to(c);
                    prop_assert_eq!(t.len(), c);
                    reference.retain(|&j, _| j < c);
                }
            }
            for (&j, &v) in &reference {
                prop_assert_eq!(t.get(j).map(|c| c.val), Some(v));
            }
        }
    }

    /// Finite supports carry all the probability mass.
    #[test]
    fn finite_support_sums_to_one(p in 0.0f64..=1.0, lo in -5i64..5, w in 0i64..20, n in 1i64..50,
                                  ws in prop::collection::vec(0.01f64..1.0, 1..8)) {
        let total: f64 = ws.iter().sum();
        let entries: Vec<(i64, f64)> = ws.iter().enumerate().map(|(k, x)| (k as i64, x / total)).collect();
        for d in [
            Dist::Bernoulli(p),
            Dist::UniformInt(lo, lo + w),
            Dist::UniformChoice(n),
            Dist::Categorical(ValueKind::Obj, CatTable::inline(&entries)),
        ] {
            let s: f64 = d.finite_support().unwrap().into_iter().map(|x| d.log_pdf(x).exp()).sum();
            prop_assert!((s - 1.0).abs() < 1e-12, "{:?}: {}", d, s);
        }
    }

    /// Every sample lies in the support with finite log density.
    #[test]
    fn samples_have_positive_density(seed in any::<u64>(), n in 1i64..30, mean in -5.0f64..5.0, var in 0.01f64..10.0) {
        let mut rng = CountingRng::new(seed, 0);
        for d in [Dist::UniformChoice(n), Dist::Gaussian(mean, var), Dist::Gamma(2.0, 1.5), Dist::Beta(0.7, 3.0), Dist::Poisson(var)] {
            let x = d.sample(&mut rng).unwrap();
            prop_assert!(d.log_pdf(x).is_finite(), "{:?} gave {:?}", d, x);
        }
    }
}

#[test]
fn fresh_cells_are_never_valid() {
    let mut t: DynamicTable<f64> = DynamicTable::with_len(2);
    let c = t.cell(5);
    assert_eq!(c.mark, NEVER);
    assert!(!c.valid(1) && !c.cached(1));
}

#[test]
fn rng_counts_every_draw() {
    let mut rng = CountingRng::new(7, 0);
    let d = Dist::Gaussian(0.0, 1.0);
    for _ in 0..10 {
        d.sample(&mut rng).unwrap();
    }
    rng.uniform();
    assert!(rng.calls() >= 11);
    let mut a = CountingRng::new(7, 0);
    let mut b = CountingRng::new(7, 0);
    let xs: Vec<Value> = (0..5).map(|_| d.sample(&mut a).unwrap()).collect();
    let ys: Vec<Value> = (0..5).map(|_| d.sample(&mut b).unwrap()).collect();
    assert_eq!(format!("{xs:?}"), format!("{ys:?}"));
}
