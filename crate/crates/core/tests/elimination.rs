use lamerecon::cgo::{design_boundary_set, AmplitudeOptions, DesignVariant};
use lamerecon::elimination::{eliminate, independence_map, solve_theta, EliminationOptions};
use lamerecon::forward::solve_many;
use lamerecon::reduction::{reduce_lambda, reduce_mu, ReductionBundle, Variant};
use lamerecon::{Field, Grid, LameParameters, Phantom, Rank};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn designed_fields(n: usize) -> Vec<Field> {
    let g = Grid::unit_box(2, n).unwrap();
    let truth = LameParameters::from_phantom(g, &Phantom::inclusions(2)).unwrap();
    let guess = LameParameters::constant(g, 1.0, 1.0).unwrap();
    let design = design_boundary_set(&guess, 1.0, DesignVariant::Both, &[vec![0.5, 0.5]], 2.0, &AmplitudeOptions::default()).unwrap();
    solve_many(&truth, 1.0, &design.data).unwrap().into_iter().map(|s| s.u).collect()
}

#[test]
fn designed_run_annihilates_and_covers_the_interior() {
    let us = designed_fields(33);
    for b in [reduce_mu(&us, &[]).unwrap(), reduce_lambda(&us, &[]).unwrap()] {
        let el = eliminate(&b, &EliminationOptions::default()).unwrap();
        let cov = el.plan.mask.interior_coverage();
        assert!(cov >= 0.9, "{:?} coverage {cov:.3}", b.variant);
        for th in &el.thetas {
            assert!(th.annihilation.max_abs() <= 1e-10, "annihilation {:.3e}", th.annihilation.max_abs());
        }
    }
}

/// Random bundle whose u♯ respects the duplicated entries of each variant.
fn random_bundle(variant: Variant, solutions: usize, seed: u64) -> ReductionBundle {
    let g = Grid::unit_box(2, 7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let distinct = variant.distinct_sharp(2);
    let mut b = ReductionBundle { variant, dim: 2, sharp: vec![], flat: vec![], star: vec![], source_labels: vec![] };
    for j in 0..solutions {
        let mut sharp = Field::zeros(g, Rank::Vector(4));
        for p in 0..g.len() {
            let s = sharp.at_mut(p);
            for &i in distinct {
                s[i] = rng.random_range(-1.0..1.0);
            }
            // the one duplicated slot copies its partner
            match variant {
                Variant::Mu => s[3] = s[2],
                Variant::Lambda => s[1] = s[0],
            }
        }
        let mut flat = Field::zeros(g, Rank::Vector(4));
        flat.values_mut().iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        let star = Field::scalar(g, (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        b.sharp.push(sharp);
        b.flat.push(flat);
        b.star.push(star);
        b.source_labels.push(format!("u{j}"));
    }
    b
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn masked_points_are_annihilated(seed in any::<u64>(), mu_variant in any::<bool>()) {
        let variant = if mu_variant { Variant::Mu } else { Variant::Lambda };
        let b = random_bundle(variant, 5, seed);
        let plan = independence_map(&b, &EliminationOptions::default()).unwrap();
        for t in 0..plan.target_count {
            let th = solve_theta(&plan, &b, t).unwrap();
            for p in 0..b.grid().len() {
                if th.mask.get(p) {
                    prop_assert!(th.annihilation.get(p) <= 1e-10);
                }
            }
        }
    }

    /// Scaling every solution by the same factor leaves the relative threshold
    /// and hence the mask unchanged.
    #[test]
    fn mask_is_scale_invariant(seed in any::<u64>(), scale_exp in -3.0f64..3.0) {
        let c = 10f64.powf(scale_exp);
        let b = random_bundle(Variant::Mu, 4, seed);
        let mut scaled = b.clone();
        for f in scaled.sharp.iter_mut().chain(scaled.flat.iter_mut()).chain(scaled.star.iter_mut()) {
            *f = f.map(|v| v * c);
        }
        let opts = EliminationOptions::default();
        let m0 = independence_map(&b, &opts).unwrap();
        let m1 = independence_map(&scaled, &opts).unwrap();
        let differ = m0.mask.flags().iter().zip(m1.mask.flags()).filter(|(a, b)| a != b).count();
        // only points sitting exactly on the threshold may flip through rounding
        prop_assert!(differ <= 1);
        prop_assert!((m1.threshold / m0.threshold / c - 1.0).abs() < 1e-12);
    }

    /// A larger threshold can only shrink the mask.
    #[test]
    fn mask_shrinks_as_threshold_grows(seed in any::<u64>(), t0 in 1e-3f64..0.2, grow in 1.0f64..5.0) {
        let b = random_bundle(Variant::Lambda, 4, seed);
        let lo = independence_map(&b, &EliminationOptions { threshold_abs: Some(t0), ..Default::default() }).unwrap();
        let hi = independence_map(&b, &EliminationOptions { threshold_abs: Some(t0 * grow), ..Default::default() }).unwrap();
        prop_assert!(hi.mask.flags().iter().zip(lo.mask.flags()).all(|(h, l)| !h || *l));
    }
}

#[test]
fn too_few_solutions_is_an_error() {
    let b = random_bundle(Variant::Mu, 3, 1);
    assert!(independence_map(&b, &EliminationOptions::default()).is_err());
}
