//! Property tests over random irreducible aperiodic subshifts and random
//! locally constant potentials.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use symdyn::orbit_stats::weighted_orbit_measure;
use symdyn::orbits::{birkhoff_sum, enumerate_closed_orbits, enumerate_prime_orbits, DEFAULT_ORBIT_BUDGET};
use symdyn::suspension::{flow_pressure, make_suspension};
use symdyn::thermo::{equilibrium_state, integrate, pressure, variance_green_kubo, DEFAULT_MAX_LAG};
use symdyn::{LocallyConstantPotential as Pot, Sft};

const B: usize = DEFAULT_ORBIT_BUDGET;

/// Transition matrices on 2 or 3 symbols that pass validation.
fn sft_strategy() -> impl Strategy<Value = Sft> {
    (2usize..=3)
        .prop_flat_map(|k| prop::collection::vec(prop::collection::vec(prop::bool::weighted(0.7), k), k))
        .prop_filter_map("reducible or periodic", |rows| {
            let rows: Vec<Vec<u8>> = rows.iter().map(|r| r.iter().map(|&b| u8::from(b)).collect()).collect();
            Sft::validate(&rows).ok()
        })
}

fn random(sft: &Sft, depth: usize, seed: u64) -> Pot {
    Pot::random(sft, depth, &mut ChaCha8Rng::seed_from_u64(seed), -1.0, 1.0).unwrap()
}

fn divisors(n: usize) -> impl Iterator<Item = usize> {
    (1..=n).filter(move |d| n % d == 0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn necklace_identity(sft in sft_strategy()) {
        let counts: Vec<usize> = (0..=10)
            .map(|n| if n == 0 { 0 } else { enumerate_prime_orbits(&sft, n, B).unwrap().len() })
            .collect();
        for n in 1..=10 {
            let lhs: u128 = divisors(n).map(|d| (d * counts[d]) as u128).sum();
            prop_assert_eq!(lhs, sft.count_periodic_points(n).unwrap());
            prop_assert_eq!(counts[n] as u128, sft.count_prime_orbits(n).unwrap());
        }
    }

    #[test]
    fn prime_orbits_are_canonical_admissible_and_aperiodic(sft in sft_strategy(), n in 1usize..=9) {
        for o in enumerate_prime_orbits(&sft, n, B).unwrap() {
            let w = o.word();
            prop_assert!(sft.is_admissible_cycle(w));
            for r in 1..n {
                let rotated: Vec<_> = w[r..].iter().chain(&w[..r]).copied().collect();
                prop_assert!(w < rotated.as_slice(), "not the strict minimum rotation");
            }
        }
    }

    #[test]
    fn birkhoff_sum_is_rotation_invariant_and_linear(sft in sft_strategy(), seed: u64, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let phi = random(&sft, 2, seed);
        let psi = random(&sft, 3, seed ^ 1);
        let mix = Pot::linear_combination(&[a, b], &[&phi, &psi]).unwrap();
        for o in enumerate_prime_orbits(&sft, 7, B).unwrap() {
            let w = o.word();
            let base = phi.cyclic_sum(w);
            for r in 1..w.len() {
                let rotated: Vec<_> = w[r..].iter().chain(&w[..r]).copied().collect();
                prop_assert!((phi.cyclic_sum(&rotated) - base).abs() <= 1e-12);
            }
            let lhs = mix.cyclic_sum(w);
            let rhs = a * base + b * psi.cyclic_sum(w);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn coboundaries_have_zero_periods(sft in sft_strategy(), seed: u64, depth in 1usize..=3) {
        let kappa = random(&sft, depth, seed);
        let cob = Pot::coboundary_of(&kappa);
        for n in 1..=10 {
            let tol = 1e-12 * n as f64 * kappa.max_abs().max(1.0);
            for o in enumerate_closed_orbits(&sft, n, B).unwrap() {
                prop_assert!(birkhoff_sum(&o, &cob).abs() <= tol);
            }
        }
    }

    #[test]
    fn refinement_preserves_periods(sft in sft_strategy(), seed: u64) {
        let phi = random(&sft, 2, seed);
        let fine = phi.refine_depth(4).unwrap();
        for o in enumerate_closed_orbits(&sft, 8, B).unwrap() {
            prop_assert_eq!(birkhoff_sum(&o, &phi), birkhoff_sum(&o, &fine));
        }
    }

    #[test]
    fn pressure_shift_and_equilibrium(sft in sft_strategy(), seed: u64, c in -4.0f64..4.0) {
        let psi = random(&sft, 2, seed);
        let p = pressure(&psi).unwrap();
        prop_assert!((pressure(&psi.add_constant(c)).unwrap() - p - c).abs() <= 1e-12 * (1.0 + p.abs() + c.abs()));
        let state = equilibrium_state(&sft, &psi).unwrap();
        let shifted = equilibrium_state(&sft, &psi.add_constant(c)).unwrap();
        for (x, y) in state.block_stationary().iter().zip(shifted.block_stationary()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
        let total: f64 = state.block_stationary().iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(state.entropy() > 0.0);
        let variational = state.entropy() + integrate(&state, &psi).unwrap();
        prop_assert!((variational - p).abs() <= 1e-8);
    }

    #[test]
    fn orbit_measure_is_a_probability_on_all_closed_orbits(sft in sft_strategy(), seed: u64, n in 1usize..=10) {
        let psi = random(&sft, 2, seed);
        let m = weighted_orbit_measure(&sft, &psi, n, B).unwrap();
        let closed: usize = divisors(n).map(|d| enumerate_prime_orbits(&sft, d, B).unwrap().len()).sum();
        prop_assert_eq!(m.atoms().len(), closed);
        let total: f64 = m.atoms().iter().map(|a| a.weight).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(m.atoms().iter().all(|a| a.weight >= 0.0));
    }

    #[test]
    fn variance_is_nonnegative_and_vanishes_on_coboundaries(sft in sft_strategy(), seed: u64) {
        let psi = random(&sft, 2, seed);
        let state = equilibrium_state(&sft, &psi).unwrap();
        let phi = random(&sft, 2, seed ^ 7);
        prop_assert!(variance_green_kubo(&state, &phi, DEFAULT_MAX_LAG).unwrap() >= 0.0);
        let cob = Pot::coboundary_of(&random(&sft, 2, seed ^ 9)).add_constant(0.3);
        prop_assert!(variance_green_kubo(&state, &cob, DEFAULT_MAX_LAG).unwrap() <= 1e-8);
    }

    #[test]
    fn zero_temperature_ratio_is_non_increasing(sft in sft_strategy(), seed: u64) {
        let phi = random(&sft, 2, seed);
        let ratios: Vec<f64> = [0.5, 1.0, 2.0, 5.0, 10.0, 20.0]
            .iter()
            .map(|&s| pressure(&phi.scale(s)).unwrap() / s)
            .collect();
        for w in ratios.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-10);
        }
    }

    #[test]
    fn bowen_root_decreases_as_roof_grows(seed: u64, extra in 0.05f64..1.0) {
        let sft = Sft::full_shift(2).unwrap();
        let psi = random(&sft, 1, seed);
        let roof = Pot::from_fn(&sft, 1, |w| 1.0 + 0.3 * f64::from(w[0])).unwrap();
        let bigger = roof.scale(1.0 + extra);
        let a = flow_pressure(&make_suspension(&sft, roof).unwrap(), &psi).unwrap();
        let b = flow_pressure(&make_suspension(&sft, bigger).unwrap(), &psi).unwrap();
        // Scaling the roof by (1 + e) divides the Bowen root by (1 + e).
        prop_assert!((b - a / (1.0 + extra)).abs() <= 1e-9 * (1.0 + a.abs()));
        if a > 0.0 {
            prop_assert!(b < a);
        }
    }
}
