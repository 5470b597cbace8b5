mod common;

use asysg_core::theory::{
    bound_con, bound_incon, check_condition_thm1, check_condition_thm3, constants_quadratic,
    k_threshold_corollary2, k_threshold_corollary4, steplength_corollary2, steplength_corollary4,
    support_lipschitz, theory_report, ConBound, InconBound, TheoryInputs,
};
use asysg_core::Provenance;
use common::{brute_support_lipschitz, jacobi_eigenvalues, to_rows};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-2.0..2.0));
    (&a + a.transpose()) * 0.5
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

#[test]
fn quadratic_constants_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..40 {
        let n = rng.random_range(1..=6);
        let q = random_symmetric(&mut rng, n);
        let rows = to_rows(&q);
        let c = constants_quadratic(&q).unwrap();
        let l = jacobi_eigenvalues(&rows)
            .into_iter()
            .fold(0.0f64, |acc, e| acc.max(e.abs()));
        assert!(rel_close(c.l, l, 1e-10), "L {} vs {}", c.l, l);
        let l_max = (0..n).map(|i| rows[i][i].abs()).fold(0.0, f64::max);
        assert!(rel_close(c.l_max, l_max, 1e-12));
        for s in 1..=n {
            let want = brute_support_lipschitz(&rows, s);
            assert!(
                rel_close(c.l_s(s), want, 1e-10),
                "L_{s}: {} vs {want}",
                c.l_s(s)
            );
        }
    }
}

#[test]
fn four_by_four_orderings() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let q = random_symmetric(&mut rng, 4);
        let c = constants_quadratic(&q).unwrap();
        assert!(c.l_max <= c.l_s(1) + 1e-12);
        for s in 1..4 {
            assert!(c.l_s(s) <= c.l_s(s + 1) + 1e-12);
        }
        assert!(rel_close(c.l_s(4), c.l, 1e-12));
        assert!(c.l <= 2.0 * c.l_s(2) + 1e-12);
    }
}

#[test]
fn identity_has_unit_constants() {
    let c = constants_quadratic(&DMatrix::identity(5, 5)).unwrap();
    assert_eq!(c.l_max, 1.0);
    for s in 1..=5 {
        assert!((c.l_s(s) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn diagonal_support_constants() {
    let q = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0, 2.0]));
    assert!((support_lipschitz(&q, 1).unwrap() - 3.0).abs() < 1e-12);
    assert!((support_lipschitz(&q, 2).unwrap() - 3.0).abs() < 1e-12);
}

#[test]
fn con_tuned_worked_numbers() {
    let g = steplength_corollary2(1.0, 1, 1.0, 100, 1.0).unwrap();
    assert!((g - 0.1).abs() < 1e-15);
    assert_eq!(k_threshold_corollary2(1.0, 1, 1.0, 1.0, 0).unwrap(), 4);
    assert_eq!(k_threshold_corollary2(1.0, 1, 1.0, 1.0, 1).unwrap(), 16);
    let b = bound_con(1.0, 1, 1.0, 100, 1.0, 0, 0.0, ConBound::Cor2).unwrap();
    assert!((b - 0.4).abs() < 1e-15);
}

#[test]
fn incon_tuned_worked_numbers() {
    let g = steplength_corollary4(1.0, 4, 64, 1.0, 1, 1.0).unwrap();
    assert!((g - 0.25).abs() < 1e-15);
    assert_eq!(k_threshold_corollary4(1.0, 1.0, 1, 4, 0, 1.0).unwrap(), 64);
    let b = bound_incon(1.0, 4, 64, 1, 0, 1.0, 1.0, 1.0, 0.0, InconBound::Cor4).unwrap();
    assert!((b - 4.5f64.sqrt()).abs() < 1e-12);
}

#[test]
fn bounds_shrink_like_inverse_root_k() {
    let at = |k| bound_con(2.0, 3, 0.7, k, 1.3, 1, 0.0, ConBound::Cor2).unwrap();
    assert!((at(400) / at(100) - 0.5).abs() < 1e-12);
    let at = |k| bound_incon(2.0, 9, k, 1, 2, 0.7, 0.5, 1.3, 0.0, InconBound::Cor4).unwrap();
    assert!((at(4000) / at(1000) - 0.5).abs() < 1e-12);
}

#[test]
fn report_on_missing_constants_omits_keys() {
    let inputs = TheoryInputs {
        gap: 1.0,
        n: 3,
        m: 1,
        k: 100,
        t: 1,
        l: None,
        l_max: None,
        l_t: None,
        sigma_sq: Some(1.0),
        g0max: None,
        provenance: Provenance::Estimated,
    };
    let r = theory_report(&inputs, true, true);
    assert!(r.gamma_eq9.is_none() && r.gamma_eq17.is_none());
    assert!(r.bounds().is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn con_tuned_steplength_meets_condition(
        gap in 1e-3f64..1e3,
        l in 1e-3f64..1e3,
        s2 in 1e-3f64..1e3,
        m in 1usize..64,
        t in 0usize..32,
        extra in 0u64..1000,
    ) {
        let k_min = k_threshold_corollary2(gap, m, l, s2, t).unwrap();
        let k = k_min.max(1) + extra;
        let g = steplength_corollary2(gap, m, l, k, s2).unwrap();
        prop_assert!(check_condition_thm1(asysg_core::theory::Schedule::Constant(g), l, m, t));
    }

    #[test]
    fn incon_tuned_steplength_meets_condition(
        gap in 1e-3f64..1e3,
        l_t in 1e-3f64..1e3,
        s2 in 1e-3f64..1e3,
        m in 1usize..64,
        n in 1usize..5000,
        t in 0usize..64,
        extra in 0u64..1000,
    ) {
        let k_min = k_threshold_corollary4(gap, l_t, m, n, t, s2).unwrap();
        let k = k_min.max(1) + extra;
        let g = steplength_corollary4(gap, n, k, l_t, m, s2.sqrt()).unwrap();
        prop_assert!(check_condition_thm3(g, m, t, l_t, l_t, n));
    }

    #[test]
    fn support_constants_are_monotone(seed in any::<u64>(), n in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_symmetric(&mut rng, n);
        let c = constants_quadratic(&q).unwrap();
        prop_assert!(c.l_max <= c.l_s(1) + 1e-12);
        for s in 1..n {
            prop_assert!(c.l_s(s) <= c.l_s(s + 1) + 1e-12);
        }
        prop_assert!(c.l <= n as f64 * c.l_s(1) + 1e-9);
    }
}
