//! Result comparison and signature properties, checked against a class-based oracle.

use nl2sql_eval::executor::{compare_results, result_signature, Cell, ExecStatus, ExecutionOutcome};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

/// Values whose equivalence classes are unambiguous: near-equal members sit
/// far inside the tolerance, distinct classes sit far outside it.
fn palette() -> Vec<(Cell, &'static str)> {
    vec![
        (Cell::Null, "null"),
        (Cell::Integer(-2), "-2"),
        (Cell::Integer(-1), "-1"),
        (Cell::Integer(0), "0"),
        (Cell::Real(0.0), "0"),
        (Cell::Integer(1), "1"),
        (Cell::Real(1.0), "1"),
        (Cell::Integer(2), "2"),
        (Cell::Real(2.0), "2"),
        (Cell::Real(2.0 + 1e-9), "2"),
        (Cell::Integer(3), "3"),
        (Cell::Real(3.0), "3"),
        (Cell::Real(0.5), "0.5"),
        (Cell::Real(0.1 + 0.2), "0.3"),
        (Cell::Real(0.3), "0.3"),
        (Cell::Real(0.3000001), "0.3000001"),
        (Cell::Text("a".into()), "'a"),
        (Cell::Text("a  ".into()), "'a"),
        (Cell::Text("b".into()), "'b"),
        (Cell::Text(" a".into()), "' a"),
        (Cell::Text("1".into()), "'1"),
    ]
}

type Table = Vec<Vec<usize>>;

fn outcome(t: &Table, cols: usize, pal: &[(Cell, &str)]) -> ExecutionOutcome {
    ExecutionOutcome::ok(
        t.iter().map(|r| r.iter().map(|&i| pal[i].0.clone()).collect()).collect(),
        cols,
    )
}

/// Oracle: rows as class-label tuples, compared as a sequence or as a multiset.
fn oracle(a: &Table, ca: usize, b: &Table, cb: usize, ordered: bool, pal: &[(Cell, &str)]) -> bool {
    if ca != cb {
        return false;
    }
    let lab = |t: &Table| -> Vec<Vec<&str>> { t.iter().map(|r| r.iter().map(|&i| pal[i].1).collect()).collect() };
    let (la, lb) = (lab(a), lab(b));
    if ordered {
        return la == lb;
    }
    let bag = |l: Vec<Vec<&str>>| {
        let mut m: Vec<Vec<String>> = l.into_iter().map(|r| r.into_iter().map(String::from).collect()).collect();
        m.sort();
        m
    };
    bag(la) == bag(lb)
}

/// Replaces every cell by a random member of its class.
fn respell(t: &Table, pal: &[(Cell, &str)], rng: &mut StdRng) -> Table {
    t.iter()
        .map(|r| {
            r.iter()
                .map(|&i| {
                    let same: Vec<usize> = (0..pal.len()).filter(|&j| pal[j].1 == pal[i].1).collect();
                    same[rng.random_range(0..same.len())]
                })
                .collect()
        })
        .collect()
}

fn random_table(rng: &mut StdRng, cols: usize, n: usize) -> Table {
    let rows = rng.random_range(0..=4);
    (0..rows).map(|_| (0..cols).map(|_| rng.random_range(0..n)).collect()).collect()
}

#[test]
fn signatures_agree_with_comparison_on_random_pairs() {
    let pal = palette();
    let mut rng = StdRng::seed_from_u64(0x51a7);
    let (mut agree, mut equal_pairs) = (0, 0);
    for trial in 0..1000 {
        let ca = rng.random_range(1..=2);
        let a = random_table(&mut rng, ca, pal.len());
        // half the pairs are built to be equivalent, so both outcomes get exercised
        let (b, cb) = match trial % 4 {
            0 | 1 => {
                let mut b = respell(&a, &pal, &mut rng);
                if trial % 4 == 1 {
                    b.shuffle(&mut rng);
                }
                (b, ca)
            }
            2 => {
                let mut b = respell(&a, &pal, &mut rng);
                if let Some(r) = b.first_mut() {
                    r[0] = rng.random_range(0..pal.len());
                } else {
                    b.push(vec![0; ca]);
                }
                (b, ca)
            }
            _ => {
                let cb = rng.random_range(1..=2);
                (random_table(&mut rng, cb, pal.len()), cb)
            }
        };
        let ordered = rng.random_bool(0.5);
        let (oa, ob) = (outcome(&a, ca, &pal), outcome(&b, cb, &pal));
        let expect = oracle(&a, ca, &b, cb, ordered, &pal);
        let cmp = compare_results(&oa, &ob, ordered);
        let cmp_rev = compare_results(&ob, &oa, ordered);
        let sig = result_signature(&oa, ordered) == result_signature(&ob, ordered);
        assert_eq!(cmp, expect, "compare {a:?} vs {b:?} ordered={ordered}");
        assert_eq!(cmp_rev, expect, "reverse compare {a:?} vs {b:?}");
        assert_eq!(sig, expect, "signature {a:?} vs {b:?} ordered={ordered}");
        agree += 1;
        equal_pairs += expect as usize;
    }
    assert_eq!(agree, 1000);
    assert!(equal_pairs > 300 && equal_pairs < 900, "{equal_pairs} equal pairs");
}

#[test]
fn failure_statuses_have_their_own_signatures() {
    let statuses = [ExecStatus::SqlError, ExecStatus::Timeout, ExecStatus::EmptyPrediction];
    let ok = ExecutionOutcome::ok(vec![], 1);
    for (i, s) in statuses.iter().enumerate() {
        let a = result_signature(&ExecutionOutcome::failed(*s, "x"), false);
        let b = result_signature(&ExecutionOutcome::failed(*s, "a different message"), true);
        assert_eq!(a, b);
        assert!(a.is_failure());
        assert_ne!(a, result_signature(&ok, false));
        for t in &statuses[i + 1..] {
            assert_ne!(a, result_signature(&ExecutionOutcome::failed(*t, "x"), false));
        }
        // failures never compare equal, not even to themselves
        let f = ExecutionOutcome::failed(*s, "x");
        assert!(!compare_results(&f, &f, false));
    }
    assert!(!result_signature(&ok, false).is_failure());
}

#[test]
fn large_integers_and_integral_reals() {
    let big = 1i64 << 40;
    let a = ExecutionOutcome::ok(vec![vec![Cell::Integer(big)]], 1);
    let b = ExecutionOutcome::ok(vec![vec![Cell::Real(big as f64)]], 1);
    assert!(compare_results(&a, &b, false));
    assert_eq!(result_signature(&a, false), result_signature(&b, false));
    let c = ExecutionOutcome::ok(vec![vec![Cell::Integer(big + 1)]], 1);
    assert!(!compare_results(&a, &c, false));
    assert_ne!(result_signature(&a, false), result_signature(&c, false));
}

fn table_strategy() -> impl Strategy<Value = (Table, usize)> {
    let n = palette().len();
    (1usize..=2).prop_flat_map(move |cols| {
        (prop::collection::vec(prop::collection::vec(0..n, cols), 0..4), Just(cols))
    })
}

proptest! {
    #[test]
    fn comparison_is_an_equivalence(
        (a, ca) in table_strategy(),
        (b, cb) in table_strategy(),
        (c, cc) in table_strategy(),
        seed in any::<u64>(),
        ordered in any::<bool>(),
    ) {
        let pal = palette();
        let mut rng = StdRng::seed_from_u64(seed);
        let (oa, ob, oc) = (outcome(&a, ca, &pal), outcome(&b, cb, &pal), outcome(&c, cc, &pal));
        prop_assert!(compare_results(&oa, &oa, ordered));
        prop_assert_eq!(compare_results(&oa, &ob, ordered), compare_results(&ob, &oa, ordered));
        if compare_results(&oa, &ob, ordered) && compare_results(&ob, &oc, ordered) {
            prop_assert!(compare_results(&oa, &oc, ordered));
        }
        // a respelled, permuted copy is always equal when order does not matter
        let mut a2 = respell(&a, &pal, &mut rng);
        a2.shuffle(&mut rng);
        let oa2 = outcome(&a2, ca, &pal);
        prop_assert!(compare_results(&oa, &oa2, false));
        prop_assert_eq!(result_signature(&oa, false), result_signature(&oa2, false));
        // and a chain through the copy stays consistent
        if compare_results(&oa2, &ob, ordered) {
            prop_assert!(compare_results(&oa, &ob, false));
        }
    }

    #[test]
    fn equal_signature_implies_equal_results(
        (a, ca) in table_strategy(),
        (b, cb) in table_strategy(),
        ordered in any::<bool>(),
    ) {
        let pal = palette();
        let (oa, ob) = (outcome(&a, ca, &pal), outcome(&b, cb, &pal));
        if result_signature(&oa, ordered) == result_signature(&ob, ordered) {
            prop_assert!(compare_results(&oa, &ob, ordered));
        }
    }

    #[test]
    fn signature_implies_equality_for_arbitrary_reals(
        xs in prop::collection::vec(-1.0e7f64..1.0e7, 1..4),
        jitter in prop::collection::vec(-3.0e-7f64..3.0e-7, 4),
    ) {
        let a = ExecutionOutcome::ok(xs.iter().map(|x| vec![Cell::Real(*x)]).collect(), 1);
        let b = ExecutionOutcome::ok(
            xs.iter().zip(&jitter).map(|(x, j)| vec![Cell::Real(x + j * x.abs().max(1.0))]).collect(),
            1,
        );
        if result_signature(&a, true) == result_signature(&b, true) {
            prop_assert!(compare_results(&a, &b, true));
        }
        // jitter is within tolerance, so comparison holds regardless of grid placement
        prop_assert!(compare_results(&a, &b, true));
    }
}
