//! Randomised invariants of the discrete operators and interpolation.

use proptest::prelude::*;
use tgcd_core::fd_ops::{aux_v, compact_apply_x, compact_solve_x, psi_h, second_x};
use tgcd_core::mesh::{inner, l2_norm, make_grid};
use tgcd_core::twogrid::{prolong_space, CubicWeights};
use tgcd_core::Field;

fn field(m1: usize, m2: usize, vals: &[f64]) -> Field {
    let g = make_grid(m1 as f64 / 8.0, m2 as f64 / 8.0, m1, m2).unwrap();
    Field::from_index_fn(g, |i, j| vals[(i * m2 + j) % vals.len()])
}

fn dims() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<f64>)> {
    (4usize..14, 4usize..14).prop_flat_map(|(m1, m2)| {
        (
            Just(m1),
            Just(m2),
            prop::collection::vec(-2.0f64..2.0, m1 * m2),
            prop::collection::vec(-2.0f64..2.0, m1 * m2),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn convection_form_is_skew((m1, m2, a, b) in dims()) {
        let (u, v) = (field(m1, m2, &a), field(m1, m2, &b));
        let r = inner(&psi_h(&u, &v).unwrap(), &v).unwrap();
        let scale = l2_norm(&u) * l2_norm(&v).powi(2) / u.grid().h() + 1e-300;
        prop_assert!(r.abs() / scale < 1e-13);
    }

    #[test]
    fn compact_solve_inverts_apply((m1, m2, a, _b) in dims()) {
        let u = field(m1, m2, &a);
        let back = compact_apply_x(&compact_solve_x(&u));
        prop_assert!(back.max_abs_diff(&u).unwrap() <= 1e-12 * (1.0 + u.max_abs()));
    }

    #[test]
    fn aux_variable_satisfies_compact_relation((m1, m2, a, _b) in dims()) {
        let u = field(m1, m2, &a);
        let lhs = compact_apply_x(&aux_v(&u));
        let rhs = second_x(&u);
        prop_assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-10 * (1.0 + rhs.max_abs()));
    }

    #[test]
    fn diffusion_part_is_dissipative((m1, m2, a, _b) in dims()) {
        let u = field(m1, m2, &a);
        prop_assert!(inner(&u, &aux_v(&u)).unwrap() <= 1e-12 * l2_norm(&u).powi(2) / u.grid().h().powi(2));
    }

    #[test]
    fn prolongation_preserves_coarse_nodes((m1, m2, a, _b) in dims(), kh in 1usize..5) {
        let c = field(m1, m2, &a);
        let f = prolong_space(&c, kh).unwrap();
        prop_assert_eq!(f.grid().m1(), kh * m1);
        for i in 0..m1 {
            for j in 0..m2 {
                prop_assert_eq!(f.at(kh * i, kh * j), c.at(i, j));
            }
        }
        // separable, so the 2D Lebesgue constant is the square of the 1D one
        let w = CubicWeights::<f64>::new(kh);
        let leb = (0..kh).map(|l| w.row(l).iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
        prop_assert!(f.max_abs() <= leb * leb * c.max_abs() * (1.0 + 1e-14));
    }

    #[test]
    fn cubic_rows_sum_to_one(kh in 1usize..12) {
        let w = CubicWeights::<f64>::new(kh);
        for l in 0..kh {
            prop_assert!((w.row(l).iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
    }
}
