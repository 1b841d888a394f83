use num_bigint::BigUint;
use proptest::prelude::*;
use qhalab::lattice::{l1_window, IndexPair, LatticePoint, PairOrdering};

fn point() -> impl Strategy<Value = Vec<i64>> {
    proptest::collection::vec(-1_000_000i64..1_000_000, 2)
}

#[test]
fn enumeration_starts_at_origin_and_ranks_back() {
    let ordering = PairOrdering::new(1).unwrap();
    let first: Vec<IndexPair> = ordering.iter().take(200).collect();
    assert_eq!(first[0], IndexPair::origin(1));
    for (t, pair) in first.iter().enumerate() {
        assert_eq!(ordering.rank(pair).unwrap(), t as u64);
    }
    for w in first.windows(2) {
        assert!(ordering.precedes(&w[0], &w[1]).unwrap());
        assert!(!ordering.precedes(&w[1], &w[0]).unwrap());
    }
}

#[test]
fn window_sizes() {
    // ℓ¹ balls in Z⁴ of radius 0, 1, 2.
    assert_eq!(l1_window(1, 0).unwrap().len(), 1);
    assert_eq!(l1_window(1, 1).unwrap().len(), 9);
    assert_eq!(l1_window(1, 2).unwrap().len(), 41);
    assert_eq!(l1_window(2, 1).unwrap().len(), 17);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn norm1_triangle_and_symmetry(a in point(), b in point()) {
        let (a, b) = (LatticePoint::from_i64(&a).unwrap(), LatticePoint::from_i64(&b).unwrap());
        let sum = a.checked_add(&b).unwrap();
        prop_assert!(sum.norm1() <= a.norm1() + b.norm1());
        prop_assert_eq!(a.neg().norm1(), a.norm1());
        prop_assert_eq!(a.checked_sub(&b).unwrap().norm1(), b.checked_sub(&a).unwrap().norm1());
        prop_assert!(a.max_norm() <= a.norm1());
        prop_assert!(a.norm1() <= a.max_norm() * BigUint::from(2u32));
    }

    #[test]
    fn precedes_agrees_with_rank(a in proptest::collection::vec(-6i64..6, 4), b in proptest::collection::vec(-6i64..6, 4)) {
        let ordering = PairOrdering::new(1).unwrap();
        let pa = IndexPair::from_i64(&a[..2], &a[2..]).unwrap();
        let pb = IndexPair::from_i64(&b[..2], &b[2..]).unwrap();
        let (ra, rb) = (ordering.rank(&pa).unwrap(), ordering.rank(&pb).unwrap());
        prop_assert_eq!(ordering.precedes(&pa, &pb).unwrap(), ra <= rb);
        prop_assert_eq!(ordering.enumerate_pair(ra).unwrap(), pa);
    }
}
