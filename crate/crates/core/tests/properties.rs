use jacobi_det::cxmat::{det2, lu_det, CMatrix};
use jacobi_det::det::{cyclic_det_variant, transmission_det, CyclicVariant};
use jacobi_det::harness::{gen_family, FamilyDescriptor};
use jacobi_det::lattice::{build_cyclic, Potential};
use jacobi_det::spectral::lambda_site;
use jacobi_det::transfer::{build_block, gronwall_bound, gronwall_equality};
use num_complex::Complex64 as C64;
use proptest::prelude::*;

fn cofactor_det(m: &[Vec<C64>]) -> C64 {
    let n = m.len();
    if n == 1 {
        return m[0][0];
    }
    (0..n)
        .map(|j| {
            let minor: Vec<Vec<C64>> =
                m[1..].iter().map(|row| row.iter().enumerate().filter(|(c, _)| *c != j).map(|(_, x)| *x).collect()).collect();
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            m[0][j] * sign * cofactor_det(&minor)
        })
        .sum()
}

fn upper() -> impl Strategy<Value = C64> {
    (-2.5f64..2.5, 0.05f64..3.0).prop_map(|(x, y)| C64::new(x, y))
}

fn small_potential(max_len: usize, amp: f64) -> impl Strategy<Value = Potential> {
    (-5i64..5, prop::collection::vec(-amp..amp, 1..max_len)).prop_map(|(lo, v)| Potential::new(lo, v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lambda_is_the_small_root(z in upper(), v in -1.0f64..1.0) {
        let w = lambda_site(z, v).unwrap();
        prop_assert!(w.norm() < 1.0);
        prop_assert!((w + w.inv() - (z - v)).norm() < 1e-12 * (1.0 + z.norm()));
    }

    #[test]
    fn lu_matches_cofactor_expansion(entries in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 16)) {
        let rows: Vec<Vec<C64>> = entries.chunks(4).map(|r| r.iter().map(|&(a, b)| C64::new(a, b)).collect()).collect();
        let m = CMatrix::from_rows(&rows).unwrap();
        let d = lu_det(&m).unwrap();
        let c = cofactor_det(&rows);
        prop_assert!((d - c).norm() <= 1e-12 * (1.0 + c.norm()));
    }

    #[test]
    fn det2_is_det_times_exp_minus_trace(entries in prop::collection::vec((-0.5f64..0.5, -0.5f64..0.5), 9)) {
        let rows: Vec<Vec<C64>> = entries.chunks(3).map(|r| r.iter().map(|&(a, b)| C64::new(a, b)).collect()).collect();
        let a = CMatrix::from_rows(&rows).unwrap();
        let expected = lu_det(&(&CMatrix::identity(3) + &a)).unwrap() * (-a.trace()).exp();
        prop_assert!((det2(&a).unwrap() - expected).norm() < 1e-13);
    }

    #[test]
    fn block_transfer_has_unit_determinant(block in prop::collection::vec(-1.0f64..1.0, 1..6), z in upper()) {
        let b = build_block(&block, z).unwrap();
        let t = &b.t;
        let d = t[(0, 0)] * t[(1, 1)] - t[(0, 1)] * t[(1, 0)];
        prop_assert!((d - 1.0).norm() < 1e-12 * (1.0 + t.max_abs().powi(2)));
    }

    #[test]
    fn cyclic_symmetric_form_matches_direct(v in small_potential(6, 0.4), z in upper(), n in 10usize..13) {
        let sys = build_cyclic(&v, z, n).unwrap();
        let direct = lu_det(&sys.k).unwrap();
        let sym = cyclic_det_variant(&sys, CyclicVariant::Symmetric).unwrap();
        prop_assert!((sym - direct).norm() <= 1e-10 * direct.norm());
    }

    #[test]
    fn transmission_det_is_translation_invariant(v in small_potential(8, 0.4), z in upper(), shift in -20i64..20) {
        let a = transmission_det(&v, z).unwrap();
        let b = transmission_det(&v.shifted_to(v.support_lo + shift), z).unwrap();
        prop_assert!((a - b).norm() <= 1e-12 * a.norm());
    }

    #[test]
    fn gronwall_bound_dominates_equality(v in prop::collection::vec(0.0f64..2.0, 0..40)) {
        let bound = gronwall_bound(&v).unwrap();
        let x = gronwall_equality(&v);
        prop_assert_eq!(bound.len(), x.len());
        for (b, x) in bound.iter().zip(&x) {
            prop_assert!(x <= b, "{} > {}", x, b);
        }
    }

    #[test]
    fn random_family_prefixes_agree(n in 1i64..200, extra in 1i64..200, seed in 0u64..1000) {
        let d = FamilyDescriptor::RandomL2 { q: 3, amplitude: 0.2, beta: 0.7 };
        let short = gen_family(&d, n, seed).unwrap();
        let long = gen_family(&d, n + extra, seed).unwrap();
        prop_assert_eq!(&short.values[..], &long.values[..n as usize]);
    }
}
