//! Metric equivalence against brute-force oracles: the contingency-based
//! Dice must match the O(n^2) co-membership computation exactly, and NMI
//! must match a direct probability-array evaluation to 1e-12.

use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use parc_core::{dice, nmi, Parcellation};

fn parc(labels: Vec<u32>, k: u32) -> Parcellation {
    Parcellation::new(labels, k).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn dice_equals_bruteforce_and_nmi_matches_direct(
        n in 2usize..200,
        k_a in 1u32..8,
        k_b in 1u32..8,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let la: Vec<u32> = (0..n).map(|_| rng.gen_range(1..=k_a)).collect();
        let lb: Vec<u32> = (0..n).map(|_| rng.gen_range(1..=k_b)).collect();
        let pa = parc(la.clone(), k_a);
        let pb = parc(lb.clone(), k_b);

        let d = dice(&pa, &pb).unwrap();
        prop_assert_eq!(d, parc_testkit::dice_bruteforce(&la, &lb));

        let m = nmi(&pa, &pb).unwrap();
        let direct = parc_testkit::nmi_direct(&la, &lb);
        prop_assert!((m - direct).abs() <= 1e-12, "nmi {} vs direct {}", m, direct);
    }

    #[test]
    fn metrics_symmetric_and_permutation_invariant(
        n in 2usize..150,
        k in 2u32..6,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let la: Vec<u32> = (0..n).map(|_| rng.gen_range(1..=k)).collect();
        let lb: Vec<u32> = (0..n).map(|_| rng.gen_range(1..=k)).collect();
        let pa = parc(la.clone(), k);
        let pb = parc(lb, k);

        // Dice is integer arithmetic, symmetric to the bit; NMI sums floats
        // in transposed order, symmetric to round-off.
        let (nab, nba) = (nmi(&pa, &pb).unwrap(), nmi(&pb, &pa).unwrap());
        prop_assert!((nab - nba).abs() <= 1e-13, "nmi asymmetry: {} vs {}", nab, nba);
        prop_assert_eq!(dice(&pa, &pb).unwrap(), dice(&pb, &pa).unwrap());

        // relabel pa by a cyclic permutation: scores must not move
        let rotated = parc(la.iter().map(|&l| 1 + l % k).collect(), k);
        prop_assert!((nmi(&rotated, &pb).unwrap() - nmi(&pa, &pb).unwrap()).abs() <= 1e-12);
        prop_assert_eq!(dice(&rotated, &pb).unwrap(), dice(&pa, &pb).unwrap());

        let m = nmi(&pa, &pb).unwrap();
        prop_assert!((0.0..=1.0).contains(&m));
        let d = dice(&pa, &pb).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
    }
}

/// Independently drawn spatially compact parcellations (the regime where
/// both metrics are used in practice): NMI sits above Dice on average, since
/// the joint distribution of two structured labelings exceeds the product of
/// the marginals.
#[test]
fn nmi_exceeds_dice_on_random_pairs() {
    use parc_core::pipeline::random_spatial_segmentation;
    let mask = parc_core::BrainMask::full_grid([10, 10, 4]).unwrap();
    let mut nmi_total = 0.0;
    let mut dice_total = 0.0;
    for pair in 0..100u64 {
        let a = random_spatial_segmentation(&mask, 6, 2 * pair).unwrap();
        let b = random_spatial_segmentation(&mask, 6, 2 * pair + 1).unwrap();
        nmi_total += nmi(&a, &b).unwrap();
        dice_total += dice(&a, &b).unwrap();
    }
    assert!(
        nmi_total > dice_total,
        "mean NMI {} vs mean Dice {}",
        nmi_total / 100.0,
        dice_total / 100.0
    );
}
