mod common;

use common::*;
use fsmap::{flow_time1_jet, nilpotency_index, takens_embed_unipotent, unipotent_log};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `exp` of a nilpotent matrix as a finite sum.
fn nilpotent_exp(l: &DMatrix<f64>) -> DMatrix<f64> {
    let m = l.nrows();
    let mut out = DMatrix::identity(m, m);
    let mut term = DMatrix::identity(m, m);
    for k in 1..=m {
        term = &term * l / k as f64;
        out += &term;
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn embedding_inverts_the_time1_jet(seed in any::<u64>(), m in 2usize..=3, degree in 2u32..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_field(&mut rng, m, degree, 4);
        let h = flow_time1_jet(&v, 4).unwrap();
        let back = takens_embed_unipotent(&h, 4).unwrap();
        prop_assert!(back.v.max_abs_diff(&v) <= 1e-9, "error {}", back.v.max_abs_diff(&v));
        prop_assert!(back.residual <= 1e-9);
        prop_assert_eq!(back.matched_order, 4);
    }

    #[test]
    fn unipotent_log_inverts_exp(seed in any::<u64>(), m in 1usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = random_nilpotent(&mut rng, m);
        let a = nilpotent_exp(&l);
        let back = unipotent_log(&a).unwrap();
        prop_assert!((&back - &l).amax() <= 1e-10, "{back} vs {l}");
    }

    #[test]
    fn nilpotency_index_shifts_by_one(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..=5);
        let m = rng.gen_range(1..n);
        let dfn = random_nilpotent(&mut rng, m);
        let nm = DMatrix::from_fn(n, m, |_, _| rng.gen_range(-1.0..1.0));
        let pinv = nm.clone().pseudo_inverse(1e-14).unwrap();
        let y = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
        let complement = DMatrix::identity(n, n) - &nm * &pinv;
        let df = &dfn * &pinv + y * complement;
        let small = nilpotency_index(&(&df * &nm), 1e-10);
        let big = nilpotency_index(&(&nm * &df), 1e-10);
        prop_assert!(small.is_some());
        prop_assert_eq!(small.map(|s| s + 1), big);
    }
}
