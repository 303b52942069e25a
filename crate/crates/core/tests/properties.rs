mod common;

use amazons_core::search::two_pass_propagate;
use amazons_core::train::{f_cdf, variance_and_ftest};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

#[test]
fn rules_against_ray_oracle() {
    common::rules().unwrap();
}

#[test]
fn exploration_grid_and_thresholds() {
    common::ucb_and_thresholds().unwrap();
}

#[test]
fn hand_derived_trees() {
    common::propagation_fixtures().unwrap();
}

#[test]
fn sgga_statistics() {
    common::sgga_statistics().unwrap();
}

#[test]
fn f_cdf_matches_reference() {
    for (d1, d2) in [(1.0, 1.0), (4.0, 9.0), (149.0, 149.0), (30.0, 200.0), (449.0, 2499.0)] {
        let reference = FisherSnedecor::new(d1, d2).unwrap();
        for x in [0.05, 0.3, 0.9, 1.0, 1.4, 2.6, 7.0] {
            let ours = f_cdf(x, d1, d2);
            assert!((ours - reference.cdf(x)).abs() < 1e-9, "F({d1},{d2}) at {x}: {ours} vs {}", reference.cdf(x));
        }
    }
}

fn gaussian(rng: &mut impl Rng, sd: f64) -> f64 {
    let (u1, u2): (f64, f64) = (rng.random_range(f64::EPSILON..1.0), rng.random());
    sd * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[test]
fn variance_ratio_of_paper_size_is_significant() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let a: Vec<f64> = (0..150).map(|_| gaussian(&mut rng, 1.0)).collect();
    let b: Vec<f64> = (0..150).map(|_| gaussian(&mut rng, 2.6f64.sqrt())).collect();
    let t = variance_and_ftest(&a, &b, 0).unwrap();
    assert!(t.var_a < t.var_b);
    assert!(t.p < 0.05, "p = {}", t.p);
}

proptest! {
    #[test]
    fn ftest_swap_symmetry(a in prop::collection::vec(-1.0f64..1.0, 4..60), b in prop::collection::vec(-1.0f64..1.0, 4..60)) {
        let ab = variance_and_ftest(&a, &b, 0);
        let ba = variance_and_ftest(&b, &a, 0);
        if let (Ok(ab), Ok(ba)) = (ab, ba) {
            prop_assert!((ab.p - ba.p).abs() < 1e-9);
            prop_assert!((ab.f * ba.f - 1.0).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&ab.p));
        }
    }

    #[test]
    fn propagation_counts_every_node(parents in prop::collection::vec(0usize..1000, 0..40), seed in 0u64..1000) {
        let mut parent = vec![None];
        for (i, p) in parents.iter().enumerate() {
            parent.push(Some(p % (i + 1)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut obj: Vec<f64> = (0..parent.len()).map(|_| rng.random()).collect();
        let stats = two_pass_propagate(&mut obj, &parent);
        let internal = (0..parent.len()).filter(|&i| parent.contains(&Some(i))).count();
        prop_assert_eq!(stats.pass1_updates, internal);
        prop_assert_eq!(stats.pass2_updates, parent.len());
        prop_assert!(obj.iter().all(|v| v.is_finite() && *v >= 0.0));
    }
}
