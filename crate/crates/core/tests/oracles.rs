//! Sampled quantities against their exact counterparts.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use doi_core::datagen::{build_coverage_dataset, DatasetSizes};
use doi_core::mdp::{
    expected_return, occupancy_exact, successor_features, Evaluation, FeatureMap, OccupancyMeasure, Policy, TabularMdp,
};

fn tv(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

#[test]
fn coverage_frequencies_approach_the_mixture_occupancy() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for seed in 0..4 {
        let mdp = TabularMdp::random(5, 2, 0.9, &mut rng);
        let a = Policy::random(5, 2, &mut rng);
        let b = Policy::random(5, 2, &mut rng);
        let sizes = DatasetSizes {
            transitions: 60_000,
            horizon: 300,
        };
        let ds = build_coverage_dataset(&mdp, &[(a.clone(), 0.3), (b.clone(), 0.7)], &a, 0.0, sizes, seed).unwrap();
        // Episodes have equal expected length under geometric termination, so
        // the record mixture weights equal the episode weights.
        let (da, db) = (occupancy_exact(&mdp, &a).unwrap(), occupancy_exact(&mdp, &b).unwrap());
        let target = OccupancyMeasure::mixture(&[(&da, 0.3), (&db, 0.7)]).unwrap();
        let d = tv(&ds.state_action_frequencies(), &target.d);
        assert!(d < 0.02, "seed {seed}: TV {d}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn monte_carlo_return_agrees_with_exact(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mdp = TabularMdp::random(4, 3, 0.8, &mut rng);
        let pi = Policy::random(4, 3, &mut rng);
        let reward: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37 + seed as f64).sin()).collect();
        let exact = expected_return(&mdp, &pi, &reward, Evaluation::Exact).unwrap().mean;
        let mc = expected_return(&mdp, &pi, &reward, Evaluation::MonteCarlo { episodes: 4000, horizon: 80, seed }).unwrap();
        // the horizon truncation is below 0.8^80 * max|r| / (1 - γ) ~ 1e-7
        prop_assert!(mc.agrees_with(exact, 5.0), "mc {:?} exact {}", mc, exact);
    }

    #[test]
    fn monte_carlo_successor_features_agree_with_exact(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mdp = TabularMdp::random(5, 2, 0.7, &mut rng);
        let pi = Policy::random(5, 2, &mut rng);
        let feats = (0..5).map(|s| vec![s as f64, (s as f64).powi(2) / 4.0]).collect();
        let fmap = FeatureMap::new("poly", feats).unwrap();
        let (exact, _) = successor_features(&mdp, &pi, &fmap, Evaluation::Exact).unwrap();
        let eval = Evaluation::MonteCarlo { episodes: 3000, horizon: 60, seed };
        let (mc, se) = successor_features(&mdp, &pi, &fmap, eval).unwrap();
        for k in 0..2 {
            prop_assert!((mc[k] - exact[k]).abs() <= 5.0 * se[k] + 1e-9, "coord {}: {} vs {}", k, mc[k], exact[k]);
        }
    }
}
