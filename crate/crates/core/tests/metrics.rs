mod common;

use common::oracle;
use gendebunk_core::evaluation::{cohen_kappa, gwet_ac1, percent_agreement, MetricError};
use proptest::prelude::*;

const CATS: [u8; 4] = [0, 1, 2, 3];
const TOL: f64 = 1e-9;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOL
}

#[test]
fn fifty_seeded_pairs_match_brute_force() {
    let mut kappa_defined = 0;
    for seed in 0..50u64 {
        let (a, b) = oracle::seeded_pair(seed, 20);
        let (oa, ob) = (oracle::some(&a), oracle::some(&b));

        let p = percent_agreement(&a, &b).unwrap();
        assert!(
            close(p, oracle::percent(&oa, &ob, &CATS).unwrap()),
            "seed {seed}"
        );

        match (cohen_kappa(&a, &b, &CATS), oracle::kappa(&oa, &ob, &CATS)) {
            (Ok(k), Some(o)) => {
                kappa_defined += 1;
                assert!(close(k, o), "seed {seed}: {k} vs {o}");
            }
            (Err(MetricError::DegenerateMarginals), None) => {}
            other => panic!("seed {seed}: {other:?}"),
        }
        let ac = gwet_ac1(&a, &b, &CATS).unwrap();
        assert!(
            close(ac, oracle::ac1(&oa, &ob, &CATS).unwrap()),
            "seed {seed}"
        );
    }
    assert_eq!(kappa_defined, 50);
}

#[test]
fn hand_counted_twenty_item_pair() {
    // 15 agreements; marginals a = (2,4,6,8)/20, b = (3,4,6,7)/20
    let a = [0, 0, 1, 1, 1, 1, 2, 2, 2, 2, 2, 2, 3, 3, 3, 3, 3, 3, 3, 3u8];
    let b = [0, 1, 0, 1, 1, 1, 2, 2, 2, 2, 2, 3, 3, 3, 3, 3, 3, 0, 2, 3u8];
    let po = 15.0 / 20.0;
    assert!(close(percent_agreement(&a, &b).unwrap(), po));
    let pe_k = (2.0 * 3.0 + 4.0 * 4.0 + 6.0 * 6.0 + 8.0 * 7.0) / 400.0;
    assert!(close(
        cohen_kappa(&a, &b, &CATS).unwrap(),
        (po - pe_k) / (1.0 - pe_k)
    ));
    let pis = [5.0 / 40.0, 8.0 / 40.0, 12.0 / 40.0, 15.0 / 40.0];
    let pe_g: f64 = pis.iter().map(|p| p * (1.0 - p)).sum::<f64>() / 3.0;
    assert!(close(
        gwet_ac1(&a, &b, &CATS).unwrap(),
        (po - pe_g) / (1.0 - pe_g)
    ));
}

#[test]
fn perfect_agreement_is_one_everywhere() {
    let a = [0, 1, 2, 3, 3, 2, 1, 0, 2, 2u8];
    assert_eq!(percent_agreement(&a, &a).unwrap(), 1.0);
    assert_eq!(cohen_kappa(&a, &a, &CATS).unwrap(), 1.0);
    assert_eq!(gwet_ac1(&a, &a, &CATS).unwrap(), 1.0);
}

#[test]
fn reversed_pairs_give_minus_one() {
    assert_eq!(
        cohen_kappa(&[1u8, 1, 2, 2], &[2, 2, 1, 1], &CATS).unwrap(),
        -1.0
    );
    assert_eq!(
        percent_agreement(&[1u8, 1, 2, 2], &[2, 2, 1, 1]).unwrap(),
        0.0
    );
}

#[test]
fn constant_identical_raters() {
    let a = [3u8; 20];
    assert_eq!(
        cohen_kappa(&a, &a, &CATS),
        Err(MetricError::DegenerateMarginals)
    );
    assert_eq!(gwet_ac1(&a, &a, &CATS).unwrap(), 1.0);
    assert_eq!(percent_agreement(&a, &a).unwrap(), 1.0);
}

#[test]
fn disjoint_missing_patterns_have_no_overlap() {
    let a = [Some(1u8), None, Some(2), None];
    let b = [None, Some(1u8), None, Some(3)];
    assert_eq!(percent_agreement(&a, &b), Err(MetricError::NoOverlap));
    assert_eq!(cohen_kappa(&a, &b, &CATS), Err(MetricError::NoOverlap));
    assert_eq!(gwet_ac1(&a, &b, &CATS), Err(MetricError::NoOverlap));
}

#[test]
fn one_to_three_scale_rejects_zero() {
    assert_eq!(
        cohen_kappa(&[0u8, 2], &[1, 2], &[1, 2, 3]),
        Err(MetricError::UnknownCategory(0))
    );
    let a = [1u8, 2, 3, 3, 2];
    let b = [1u8, 2, 3, 2, 2];
    let (oa, ob) = (oracle::some(&a), oracle::some(&b));
    assert!(close(
        gwet_ac1(&a, &b, &[1, 2, 3]).unwrap(),
        oracle::ac1(&oa, &ob, &[1, 2, 3]).unwrap()
    ));
}

/// Applies a permutation of `0..4` to each score.
fn relabel(v: &[u8], perm: &[u8]) -> Vec<u8> {
    v.iter().map(|x| perm[*x as usize]).collect()
}

#[test]
fn every_category_permutation_leaves_metrics_unchanged() {
    let (a, b) = oracle::seeded_pair(7, 20);
    let base = (
        percent_agreement(&a, &b).unwrap(),
        cohen_kappa(&a, &b, &CATS).unwrap(),
        gwet_ac1(&a, &b, &CATS).unwrap(),
    );
    let mut count = 0;
    for p0 in 0..4u8 {
        for p1 in 0..4u8 {
            for p2 in 0..4u8 {
                for p3 in 0..4u8 {
                    let perm = [p0, p1, p2, p3];
                    let mut sorted = perm;
                    sorted.sort();
                    if sorted != CATS {
                        continue;
                    }
                    count += 1;
                    let (pa, pb) = (relabel(&a, &perm), relabel(&b, &perm));
                    assert!(close(percent_agreement(&pa, &pb).unwrap(), base.0));
                    assert!(
                        close(cohen_kappa(&pa, &pb, &CATS).unwrap(), base.1),
                        "{perm:?}"
                    );
                    assert!(
                        close(gwet_ac1(&pa, &pb, &CATS).unwrap(), base.2),
                        "{perm:?}"
                    );
                }
            }
        }
    }
    assert_eq!(count, 24);
}

#[test]
fn ac1_is_at_least_kappa_under_skewed_marginals() {
    use rand::{Rng, SeedableRng};
    let mut checked = 0;
    for seed in 0..200u64 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> u8 {
            if rng.random_bool(0.85) {
                3
            } else {
                rng.random_range(0..=2)
            }
        };
        let a: Vec<u8> = (0..20).map(|_| draw(&mut rng)).collect();
        let b: Vec<u8> = (0..20).map(|_| draw(&mut rng)).collect();
        let Ok(k) = cohen_kappa(&a, &b, &CATS) else {
            continue;
        };
        let ac = gwet_ac1(&a, &b, &CATS).unwrap();
        assert!(ac >= k, "seed {seed}: ac1 {ac} < kappa {k}");
        checked += 1;
    }
    assert!(checked > 150);
}

fn scores() -> impl Strategy<Value = Vec<Option<u8>>> {
    prop::collection::vec(prop::option::weighted(0.85, 0u8..=3), 20)
}

fn pair() -> impl Strategy<Value = (Vec<Option<u8>>, Vec<Option<u8>>)> {
    (scores(), scores())
}

fn same_outcome(x: Result<f64, MetricError>, y: Result<f64, MetricError>) -> bool {
    match (x, y) {
        (Ok(a), Ok(b)) => close(a, b),
        (Err(a), Err(b)) => a == b,
        _ => false,
    }
}

proptest! {
    #[test]
    fn metrics_are_symmetric((a, b) in pair()) {
        prop_assert!(same_outcome(percent_agreement(&a, &b), percent_agreement(&b, &a)));
        prop_assert!(same_outcome(cohen_kappa(&a, &b, &CATS), cohen_kappa(&b, &a, &CATS)));
        prop_assert!(same_outcome(gwet_ac1(&a, &b, &CATS), gwet_ac1(&b, &a, &CATS)));
    }

    #[test]
    fn relabeling_is_invariant((a, b) in pair(), perm in Just(vec![0u8, 1, 2, 3]).prop_shuffle()) {
        let map = |v: &[Option<u8>]| v.iter().map(|x| x.map(|s| perm[s as usize])).collect::<Vec<_>>();
        let (pa, pb) = (map(&a), map(&b));
        prop_assert!(same_outcome(percent_agreement(&a, &b), percent_agreement(&pa, &pb)));
        prop_assert!(same_outcome(cohen_kappa(&a, &b, &CATS), cohen_kappa(&pa, &pb, &CATS)));
        prop_assert!(same_outcome(gwet_ac1(&a, &b, &CATS), gwet_ac1(&pa, &pb, &CATS)));
    }

    #[test]
    fn missing_cells_equal_manual_filtering((a, b) in pair()) {
        let (fa, fb): (Vec<u8>, Vec<u8>) = a
            .iter()
            .zip(&b)
            .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
            .unzip();
        if fa.is_empty() {
            prop_assert_eq!(percent_agreement(&a, &b), Err(MetricError::NoOverlap));
        } else {
            prop_assert!(same_outcome(percent_agreement(&a, &b), percent_agreement(&fa, &fb)));
            prop_assert!(same_outcome(cohen_kappa(&a, &b, &CATS), cohen_kappa(&fa, &fb, &CATS)));
            prop_assert!(same_outcome(gwet_ac1(&a, &b, &CATS), gwet_ac1(&fa, &fb, &CATS)));
        }
    }

    #[test]
    fn full_agreement_forces_one(a in scores()) {
        prop_assume!(a.iter().any(Option::is_some));
        prop_assert_eq!(percent_agreement(&a, &a).unwrap(), 1.0);
        prop_assert_eq!(gwet_ac1(&a, &a, &CATS).unwrap(), 1.0);
        match cohen_kappa(&a, &a, &CATS) {
            Ok(k) => prop_assert_eq!(k, 1.0),
            Err(e) => prop_assert_eq!(e, MetricError::DegenerateMarginals),
        }
    }

    #[test]
    fn library_matches_oracle((a, b) in pair()) {
        let o = oracle::kappa(&a, &b, &CATS);
        match cohen_kappa(&a, &b, &CATS) {
            Ok(k) => prop_assert!(close(k, o.unwrap())),
            Err(_) => prop_assert!(o.is_none()),
        }
        match gwet_ac1(&a, &b, &CATS) {
            Ok(v) => prop_assert!(close(v, oracle::ac1(&a, &b, &CATS).unwrap())),
            Err(_) => prop_assert!(oracle::ac1(&a, &b, &CATS).is_none()),
        }
        if let Ok(k) = cohen_kappa(&a, &b, &CATS) {
            prop_assert!((-1.0 - TOL..=1.0 + TOL).contains(&k));
        }
    }
}
