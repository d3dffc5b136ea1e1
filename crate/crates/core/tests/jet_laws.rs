use fsmap::jet::monomials_up_to;
use fsmap::{jet_compose, Jet, JetVector, MultiIndex};
use proptest::prelude::*;

const M: usize = 3;
const R: u32 = 4;

fn jet_from(coeffs: &[f64]) -> Jet {
    let mut j = Jet::zero(M, R);
    for (idx, &c) in monomials_up_to(M, R).into_iter().zip(coeffs) {
        j.add_term(idx, c);
    }
    j
}

fn jet() -> impl Strategy<Value = Jet> {
    let n = monomials_up_to(M, R).len();
    prop::collection::vec(prop_oneof![Just(0.0), -2.0..2.0f64], n).prop_map(|c| jet_from(&c))
}

/// Jet with zero constant term, so that it can be substituted.
fn centered() -> impl Strategy<Value = Jet> {
    jet().prop_map(|mut j| {
        j.set_coeff(MultiIndex::zero(M), 0.0);
        j
    })
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, M)
}

fn close(a: &Jet, b: &Jet) -> bool {
    a.max_abs_diff(b) <= 1e-10 * (1.0 + a.max_abs().max(b.max_abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn product_is_commutative(a in jet(), b in jet()) {
        prop_assert!(close(&(&a * &b), &(&b * &a)));
    }

    #[test]
    fn product_is_associative(a in jet(), b in jet(), c in jet()) {
        prop_assert!(close(&(&(&a * &b) * &c), &(&a * &(&b * &c))));
    }

    #[test]
    fn product_distributes_over_sum(a in jet(), b in jet(), c in jet()) {
        prop_assert!(close(&(&a * &(&b + &c)), &(&(&a * &b) + &(&a * &c))));
    }

    #[test]
    fn one_is_the_unit(a in jet()) {
        prop_assert_eq!(&a * &Jet::constant(M, R, 1.0), a);
    }

    #[test]
    fn leibniz_rule_below_the_order(a in jet(), b in jet(), var in 0..M) {
        let lhs = (&a * &b).partial(var).unwrap();
        let rhs = &(&a.partial(var).unwrap() * &b) + &(&a * &b.partial(var).unwrap());
        prop_assert!(close(&lhs.truncated(R - 1), &rhs.truncated(R - 1)));
    }

    #[test]
    fn truncated_product_evaluates_like_polynomials(a in jet(), b in jet(), x in point()) {
        // degree ≤ 2 factors multiply without truncation
        let (a, b) = (a.truncated(2), b.truncated(2));
        let lhs = (&a * &b).eval(&x);
        let rhs = a.eval(&x) * b.eval(&x);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
    }

    #[test]
    fn composing_with_the_identity_is_trivial(a in jet()) {
        let id = JetVector::identity(M, R);
        prop_assert!(close(&jet_compose(&a, &id).unwrap(), &a));
    }

    #[test]
    fn composition_is_associative(a in jet(), p in prop::collection::vec(centered(), M), q in prop::collection::vec(centered(), M)) {
        let p = JetVector::new(p).unwrap();
        let q = JetVector::new(q).unwrap();
        let left = jet_compose(&jet_compose(&a, &p).unwrap(), &q).unwrap();
        let right = jet_compose(&a, &p.compose(&q).unwrap()).unwrap();
        prop_assert!(close(&left, &right));
    }

    #[test]
    fn composition_is_a_ring_map(a in jet(), b in jet(), p in prop::collection::vec(centered(), M)) {
        let p = JetVector::new(p).unwrap();
        let lhs = jet_compose(&(&a * &b), &p).unwrap();
        let rhs = &jet_compose(&a, &p).unwrap() * &jet_compose(&b, &p).unwrap();
        prop_assert!(close(&lhs, &rhs));
    }

    #[test]
    fn shift_moves_the_expansion_point(a in jet(), c in point(), x in point()) {
        // exact for polynomials of degree ≤ R
        let shifted = a.shift(&c);
        let moved: Vec<f64> = x.iter().zip(&c).map(|(x, c)| x - c).collect();
        let lhs = shifted.eval(&moved);
        let rhs = a.eval(&x);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()), "{lhs} vs {rhs}");
    }
}
