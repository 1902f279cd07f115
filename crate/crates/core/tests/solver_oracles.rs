//! Cross-route oracles for the 9-point solver: the directly constructed
//! reduced 6x6 companion must agree with the explicit 18x18 companion built
//! from scratch, and the solver must recover planted undistortion parameters
//! end to end through the public API.

use nalgebra::DMatrix;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use radipose_core::bench::generate_pair_with;
use radipose_core::geometry::{epipolar_residual, Correspondence, NormalizedPoint};
use radipose_core::solvers::{build_pencil, nine_point_f_lambda, reduced_companion};

fn random_corrs(rng: &mut StdRng, n: usize) -> Vec<Correspondence> {
    (0..n)
        .map(|_| {
            Correspondence::new(
                NormalizedPoint::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)),
                NormalizedPoint::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)),
            )
            .unwrap()
        })
        .collect()
}

/// Explicit 18x18 companion `[[0, I], [-A0^-1 A2, -A0^-1 A1]]`, built
/// independently of the reduction path.
fn explicit_companion(corrs: &[Correspondence]) -> Option<DMatrix<f64>> {
    let pencil = build_pencil(corrs);
    let lu = pencil.a0.clone().lu();
    let m2 = lu.solve(&(-pencil.a2.clone()))?;
    let m1 = lu.solve(&(-pencil.a1.clone()))?;
    let mut b = DMatrix::zeros(18, 18);
    for i in 0..9 {
        b[(i, 9 + i)] = 1.0;
    }
    b.view_mut((9, 0), (9, 9)).copy_from(&m2);
    b.view_mut((9, 9), (9, 9)).copy_from(&m1);
    Some(b)
}

#[test]
fn reduced_companion_eigenvalues_subset_of_full() {
    let mut rng = StdRng::seed_from_u64(2024);
    let mut tested = 0;
    while tested < 100 {
        let corrs = random_corrs(&mut rng, 9);
        let Some(full) = explicit_companion(&corrs) else {
            continue;
        };
        let Ok(reduced) = reduced_companion(&build_pencil(&corrs)) else {
            continue;
        };
        let full_eigs = full.complex_eigenvalues();
        let reduced_eigs = reduced.complex_eigenvalues();

        // Every eigenvalue of the reduced matrix appears in the full set.
        for re in reduced_eigs.iter() {
            let closest = full_eigs
                .iter()
                .map(|fe| (fe - re).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(
                closest < 1e-8,
                "reduced eigenvalue {re} missing from the full companion (closest {closest:.2e})"
            );
        }
        // No surviving real eigenvalue of the full companion is missed: the
        // reduction removes only the twelve structural zeros.
        for fe in full_eigs.iter() {
            if fe.im.abs() > 1e-8 || fe.re.abs() <= 1e-8 {
                continue;
            }
            let closest = reduced_eigs
                .iter()
                .map(|re| (re - fe).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(
                closest < 1e-8,
                "full companion real eigenvalue {fe} missed by the 6x6 (closest {closest:.2e})"
            );
        }
        tested += 1;
    }
}

#[test]
fn full_companion_has_twelve_structural_zeros() {
    let mut rng = StdRng::seed_from_u64(2025);
    let corrs = random_corrs(&mut rng, 9);
    let full = explicit_companion(&corrs).unwrap();
    let eigs = full.complex_eigenvalues();
    let zero_count = eigs.iter().filter(|e| e.norm() < 1e-8).count();
    assert_eq!(zero_count, 12, "companion eigenvalues: {eigs:?}");
}

#[test]
fn solver_recovers_planted_lambda_through_public_api() {
    let mut rng = StdRng::seed_from_u64(7);
    for lambda in [-1.5, -0.9, -0.3] {
        let mut hits = 0;
        for _ in 0..25 {
            let (corrs, _, _, _) =
                generate_pair_with(9, 0.0, 0.0, (lambda, lambda), (1.0, 1.0), &mut rng);
            let Ok(out) = nine_point_f_lambda(&corrs) else {
                continue;
            };
            let ok = out.candidates.iter().any(|m| {
                (m.cam1.division.lambda - lambda).abs() < 1e-6
                    && corrs.iter().all(|c| {
                        epipolar_residual(c, m)
                            .map(|r| r.abs() < 1e-8)
                            .unwrap_or(false)
                    })
            });
            if ok {
                hits += 1;
            }
        }
        assert!(hits >= 24, "lambda {lambda}: {hits}/25 recovered");
    }
}

#[test]
fn non_minimal_least_squares_survives_mild_noise() {
    // The algebraic lambda estimate is noise-sensitive by nature (local
    // optimization is what sharpens it downstream); at 0.1 px the raw
    // solver must still land in the right neighborhood.
    let mut rng = StdRng::seed_from_u64(8);
    let mut ok = 0;
    let trials = 20;
    for _ in 0..trials {
        let (corrs, gt, _, _) =
            generate_pair_with(60, 0.1, 0.0, (-0.8, -0.8), (1.1, 1.1), &mut rng);
        let Ok(out) = nine_point_f_lambda(&corrs) else {
            continue;
        };
        let best = out
            .candidates
            .iter()
            .map(|m| (m.cam1.division.lambda - gt.cam1.division.lambda).abs())
            .fold(f64::INFINITY, f64::min);
        if best < 0.1 {
            ok += 1;
        }
    }
    assert!(ok >= trials - 3, "noisy non-minimal recovery {ok}/{trials}");
}
