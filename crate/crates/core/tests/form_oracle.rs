//! Kernel-algebra checks against the independent permutation oracle.

mod common;

use common::*;
use num_complex::Complex64;
use proptest::prelude::*;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crlab::form::{omega_prime_r, Factor, FormMonomial, JetField, PointForm, VarClass};

#[test]
fn omega_prime_matches_permutation_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for n in 1..=4usize {
        let l = if n >= 3 { 1 } else { 0 };
        let eta = random_cf_kernel(n, l, 1000 + n as u64);
        for r in 0..n {
            for _ in 0..10 {
                let (zeta, z) = random_pair(n, &mut rng);
                let t: Vec<f64> = (0..l).map(|_| 0.4).collect();
                let jet = eta.jet(&zeta, &z, &t);
                let ours = pointform_to_map(&omega_prime_r(&eta, r, &zeta, &z, &t).unwrap());
                let oracle = oracle_omega_prime_r(&jet, r, n, l);
                let scale = map_max(&oracle).max(1e-30);
                let d = map_distance(&ours, &oracle);
                assert!(
                    d / scale <= 1e-12,
                    "n={n} r={r}: relative deviation {:.3e}",
                    d / scale
                );
            }
        }
    }
}

#[test]
fn bidegree_sum_reconstructs_full_kernel_form() {
    // Σ_r ω′_r(η) equals the k-sum expansion of ω′(η) in the
    // antiholomorphic/t differentials, for kernels normalised by <η, ζ−z> = 1.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for n in 1..=4usize {
        let l = 1;
        let eta = random_cf_kernel(n, l, 500 + n as u64);
        for _ in 0..5 {
            let (zeta, z) = random_pair(n, &mut rng);
            let t = vec![0.2];
            let jet = eta.jet(&zeta, &z, &t);
            let full = oracle_omega_prime_full(&jet, n, l);
            let mut sum = std::collections::HashMap::new();
            for r in 0..n {
                let part = pointform_to_map(&omega_prime_r(&eta, r, &zeta, &z, &t).unwrap());
                for (k, v) in part {
                    *sum.entry(k).or_insert_with(|| Complex64::new(0.0, 0.0)) += v;
                }
            }
            let scale = map_max(&full).max(1e-30);
            let d = map_distance(&sum, &full);
            assert!(d / scale <= 1e-10, "n={n}: relative deviation {:.3e}", d / scale);
        }
    }
}

#[test]
fn bm_c2_against_oracle_at_reference_point() {
    // Bochner-Martinelli kernel in C², ζ=(1,0), z=(0,0)
    let eta = JetField::bochner_martinelli(2, 0);
    let zeta = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
    let z = [Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)];
    let jet = eta.jet(&zeta, &z, &[]);
    for r in 0..2 {
        let ours = pointform_to_map(&omega_prime_r(&eta, r, &zeta, &z, &[]).unwrap());
        let oracle = oracle_omega_prime_r(&jet, r, 2, 0);
        assert!(map_distance(&ours, &oracle) <= 1e-12 * map_max(&oracle).max(1.0));
    }
}

// ---- wedge algebra properties ----

fn arb_factor(n: u8, l: u8) -> impl Strategy<Value = Factor> {
    (0u8..5, 1u8..=n.max(1)).prop_map(move |(c, i)| {
        let class = match c {
            0 => VarClass::DZeta,
            1 => VarClass::DZ,
            2 => VarClass::DZetaBar,
            3 => VarClass::DZBar,
            _ => VarClass::Dt,
        };
        let index = if class == VarClass::Dt { 1 + (i - 1) % l.max(1) } else { i };
        Factor { class, index }
    })
}

fn arb_form(n: u8, l: u8) -> impl Strategy<Value = PointForm> {
    proptest::collection::vec(
        (proptest::collection::vec(arb_factor(n, l), 0..3), -1.0f64..1.0, -1.0f64..1.0),
        1..4,
    )
    .prop_map(move |terms| {
        let mut f = PointForm::zero(n as usize, l as usize);
        for (fs, re, im) in terms {
            if let Some((m, s)) = FormMonomial::from_factors(&fs) {
                f.add_term(m, Complex64::new(re, im) * s as f64);
            }
        }
        f
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wedge_associative(a in arb_form(4, 2), b in arb_form(4, 2), c in arb_form(4, 2)) {
        let ab_c = a.wedge(&b).unwrap().wedge(&c).unwrap();
        let a_bc = a.wedge(&b.wedge(&c).unwrap()).unwrap();
        let d = ab_c.sub(&a_bc).max_coeff();
        prop_assert!(d <= 1e-12 * ab_c.max_coeff().max(1.0));
    }

    #[test]
    fn wedge_graded_anticommutative(a in arb_form(4, 2), b in arb_form(4, 2)) {
        // check per homogeneous degree component
        for da in 0..=4usize {
            for db in 0..=4usize {
                let pa = a.degree_part(da);
                let pb = b.degree_part(db);
                if pa.is_zero() || pb.is_zero() {
                    continue;
                }
                let lhs = pa.wedge(&pb).unwrap();
                let sign = if (da * db) % 2 == 0 { 1.0 } else { -1.0 };
                let rhs = pb.wedge(&pa).unwrap().scale(Complex64::new(sign, 0.0));
                prop_assert!(lhs.sub(&rhs).max_coeff() <= 1e-12);
            }
        }
    }

    #[test]
    fn wedge_bilinear(a in arb_form(3, 1), b in arb_form(3, 1), s in -2.0f64..2.0) {
        let c = Complex64::new(s, -0.3 * s);
        let lhs = a.scale(c).wedge(&b).unwrap();
        let rhs = a.wedge(&b).unwrap().scale(c);
        prop_assert!(lhs.sub(&rhs).max_coeff() <= 1e-12 * rhs.max_coeff().max(1.0));
    }
}
