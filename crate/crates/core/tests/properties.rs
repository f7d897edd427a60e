use lamerecon::calculus::{c2_norm, gradient, second_derivatives};
use lamerecon::lambda::regularity_mask;
use lamerecon::metrics::metrics;
use lamerecon::{lfld, Field, Grid, Mask, Rank};
use proptest::prelude::*;

fn grid_strategy() -> impl Strategy<Value = Grid> {
    (2usize..=3, 5usize..9).prop_map(|(d, n)| Grid::unit_box(d, n).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lfld_round_trip_is_bitwise(g in grid_strategy(), comps in 1usize..4, complex in any::<bool>(), seed in any::<u64>()) {
        let rank = if comps == 1 { Rank::Scalar } else { Rank::Vector(comps) };
        let len = g.len() * comps * if complex { 2 } else { 1 };
        // raw bit patterns, NaN payloads and signed zeros included
        let mut x = seed;
        let vals: Vec<f64> = (0..len)
            .map(|_| {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                f64::from_bits(x)
            })
            .collect();
        let f = Field::from_values(g, rank, complex, vals).unwrap();
        let bytes = lfld::to_bytes(&f);
        let back = lfld::from_bytes(&bytes).unwrap();
        prop_assert_eq!(lfld::to_bytes(&back), bytes);
        prop_assert!(back.values().iter().zip(f.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    /// All derivative stencils, one-sided ones included, are exact on quadratics.
    #[test]
    fn derivatives_are_exact_on_quadratics(c in prop::array::uniform10(-2.0f64..2.0)) {
        let g = Grid::unit_box(3, 7).unwrap();
        let q = |x: &[f64]| c[0] + c[1] * x[0] + c[2] * x[1] + c[3] * x[2] + c[4] * x[0] * x[0]
            + c[5] * x[1] * x[1] + c[6] * x[2] * x[2] + c[7] * x[0] * x[1] + c[8] * x[0] * x[2] + c[9] * x[1] * x[2];
        let f = Field::scalar_fn(g, q);
        let gr = gradient(&f).unwrap();
        let h = second_derivatives(&f).unwrap();
        let hess = [[2.0 * c[4], c[7], c[8]], [c[7], 2.0 * c[5], c[9]], [c[8], c[9], 2.0 * c[6]]];
        for p in 0..g.len() {
            let x = g.coords(p);
            let want = [
                c[1] + 2.0 * c[4] * x[0] + c[7] * x[1] + c[8] * x[2],
                c[2] + 2.0 * c[5] * x[1] + c[7] * x[0] + c[9] * x[2],
                c[3] + 2.0 * c[6] * x[2] + c[8] * x[0] + c[9] * x[1],
            ];
            for a in 0..3 {
                prop_assert!((gr.at(p)[a] - want[a]).abs() < 1e-9);
            }
            let hp = h.at(p);
            for a in 0..3 {
                for b in 0..3 {
                    prop_assert!((hp[a * 3 + b] - hess[a][b]).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn c2_norm_is_absolutely_homogeneous(a in -10.0f64..10.0, w in 0.5f64..4.0) {
        let g = Grid::unit_box(2, 17).unwrap();
        let f = Field::from_fn(g, Rank::Vector(2), |x, o| o.copy_from_slice(&[(w * x[0]).sin(), x[0] * x[1]]));
        let n = c2_norm(&f).unwrap();
        let scaled = c2_norm(&f.map(|v| a * v)).unwrap();
        prop_assert!((scaled - a.abs() * n).abs() <= 1e-12 * (1.0 + n * a.abs()));
    }

    #[test]
    fn constant_offset_bounds_the_relative_error(off in -0.05f64..0.05, base in 1.0f64..3.0) {
        let g = Grid::unit_box(2, 9).unwrap();
        let t = Field::scalar_fn(g, |x| base + x[0] * x[1]);
        let r = metrics(&t.map(|v| v + off), &t, &Mask::interior(g)).unwrap();
        prop_assert!(r.sup_rel <= off.abs() + 1e-15);
        prop_assert!((r.sup_abs - off.abs()).abs() <= 1e-14);
        prop_assert!(r.mean_abs <= r.sup_abs + 1e-15);
    }

    #[test]
    fn regularity_mask_is_nested(dim in 2usize..=3, frame in 0usize..3, r in 0.0f64..0.3, df in 0usize..2, dr in 0.0f64..0.2) {
        let g = Grid::unit_box(dim, 11).unwrap();
        let outer = regularity_mask(&g, frame, r);
        let inner = regularity_mask(&g, frame + df, r + dr);
        prop_assert!(inner.flags().iter().zip(outer.flags()).all(|(i, o)| !i || *o));
    }
}
