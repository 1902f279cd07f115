//! Pinhole fundamental-matrix solvers: the minimal 7-point solver and the
//! linear (normalized) 8-point solver. Both expect points that are already
//! undistorted.

use nalgebra::{DMatrix, DVector, Matrix3};

use crate::geometry::Correspondence;

use super::nine_point::{build_pencil, fundamental_from_coeffs};
use super::{model_with_lambda, real_cubic_roots, SolverError, SolverOutput};

/// Singular values (ascending) and matching right singular vectors of the
/// design matrix. Designs with fewer than 9 rows are padded with zero rows:
/// the thin SVD of a wide matrix cannot expose the null space, while the
/// padded square SVD does so at full precision.
fn design_spectrum(design: &DMatrix<f64>) -> (Vec<f64>, Vec<DVector<f64>>) {
    let n = design.nrows();
    let padded = if n < 9 {
        let mut p = DMatrix::zeros(9, 9);
        p.view_mut((0, 0), (n, 9)).copy_from(design);
        p
    } else {
        design.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("svd with v requested");
    // nalgebra sorts singular values descending; expose them ascending.
    let k = svd.singular_values.len();
    let sv: Vec<f64> = (0..9)
        .map(|i| if i < k { svd.singular_values[k - 1 - i] } else { 0.0 })
        .collect();
    let vecs: Vec<DVector<f64>> = (0..9).map(|i| v_t.row(8 - i).transpose()).collect();
    (sv, vecs)
}

fn coeffs_matrix(f_vec: &DVector<f64>) -> Matrix3<f64> {
    Matrix3::new(
        f_vec[0], f_vec[1], f_vec[2], f_vec[3], f_vec[4], f_vec[5], f_vec[6], f_vec[7], f_vec[8],
    )
}

/// Minimal 7-point solver: two-dimensional null space `G = Ga + alpha Gb`
/// with `det(G) = 0` giving a cubic in alpha; up to 3 real candidates.
pub fn seven_point_f(corrs: &[Correspondence]) -> Result<SolverOutput, SolverError> {
    if corrs.len() != 7 {
        return Err(SolverError::WrongSampleSize {
            expected: 7,
            got: corrs.len(),
        });
    }
    let design = build_pencil(corrs).a0;
    let (sv, vecs) = design_spectrum(&design);
    // sv is ascending: sv[2] is the 7th-largest singular value.
    if sv[2] < 1e-9 * sv[8].max(1e-300) {
        return Err(SolverError::DegenerateSample(7));
    }
    let ga = coeffs_matrix(&vecs[0]);
    let gb = coeffs_matrix(&vecs[1]);

    // det(Ga + alpha Gb) sampled at four points fixes the cubic coefficients.
    let d = |alpha: f64| (ga + gb * alpha).determinant();
    let c0 = d(0.0);
    let (d1, dm1, d2) = (d(1.0), d(-1.0), d(2.0));
    let c2 = (d1 + dm1) / 2.0 - c0;
    let s1 = (d1 - dm1) / 2.0;
    let s2 = (d2 - c0 - 4.0 * c2) / 2.0;
    let c3 = (s2 - s1) / 3.0;
    let c1 = s1 - c3;

    let mut candidates = Vec::new();
    for alpha in real_cubic_roots([c0, c1, c2, c3]) {
        let g = ga + gb * alpha;
        let flat: Vec<f64> = (0..3).flat_map(|r| (0..3).map(move |c| g[(r, c)])).collect();
        if let Ok(fundamental) = fundamental_from_coeffs(&flat) {
            candidates.push(model_with_lambda(fundamental, 0.0, 0.0));
        }
    }
    // When det(Gb) ~ 0 the alpha -> infinity solution Gb is itself rank-2.
    if c3.abs() < 1e-12 * [c0, c1, c2].iter().fold(1e-300f64, |m, v| m.max(v.abs())) {
        let flat: Vec<f64> = (0..3)
            .flat_map(|r| (0..3).map(move |c| gb[(r, c)]))
            .collect();
        if let Ok(fundamental) = fundamental_from_coeffs(&flat) {
            candidates.push(model_with_lambda(fundamental, 0.0, 0.0));
        }
    }
    candidates.truncate(3);
    if candidates.is_empty() {
        return Err(SolverError::NoRealSolutions);
    }
    Ok(SolverOutput::from_candidates(candidates))
}

/// Linear 8-point solver on `n >= 8` points: least-squares null vector of the
/// design matrix followed by rank-2 projection.
pub fn eight_point_f(corrs: &[Correspondence]) -> Result<SolverOutput, SolverError> {
    if corrs.len() < 8 {
        return Err(SolverError::WrongSampleSize {
            expected: 8,
            got: corrs.len(),
        });
    }
    let design = build_pencil(corrs).a0;
    let (sv, vecs) = design_spectrum(&design);
    // sv[1] is the 8th-largest singular value.
    if sv[1] < 1e-9 * sv[8].max(1e-300) {
        return Err(SolverError::DegenerateSample(8));
    }
    let raw = coeffs_matrix(&vecs[0]).transpose();
    let fundamental = super::focal::project_rank2(&raw)?;
    Ok(SolverOutput::from_candidates(vec![model_with_lambda(
        fundamental,
        0.0,
        0.0,
    )]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::tests_support::random_two_view_scene;
    use crate::geometry::{epipolar_residual, Correspondence, NormalizedPoint};
    use rand::rngs::StdRng;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn cubic_roots_match_constructed_polynomials() {
        // (x - 1)(x - 2)(x + 3) = x^3 - 7x + 6
        let mut roots = real_cubic_roots([6.0, -7.0, 0.0, 1.0]);
        roots.sort_by(f64::total_cmp);
        assert_eq!(roots.len(), 3);
        for (r, want) in roots.iter().zip([-3.0, 1.0, 2.0]) {
            assert!((r - want).abs() < 1e-12);
        }
        // single real root: x^3 + x + 1
        let roots = real_cubic_roots([1.0, 1.0, 0.0, 1.0]);
        assert_eq!(roots.len(), 1);
        let r = roots[0];
        assert!((r * r * r + r + 1.0).abs() < 1e-12);
    }

    #[test]
    fn seven_point_solves_noise_free_samples() {
        let mut rng = StdRng::seed_from_u64(31);
        for _ in 0..100 {
            let (corrs, _) = random_two_view_scene(&mut rng, 0.0, 0.0, 7);
            let out = seven_point_f(&corrs).unwrap();
            assert!(!out.candidates.is_empty() && out.candidates.len() <= 3);
            let best = out
                .candidates
                .iter()
                .map(|m| {
                    corrs
                        .iter()
                        .map(|c| epipolar_residual(c, m).unwrap().abs())
                        .fold(0.0f64, f64::max)
                })
                .fold(f64::INFINITY, f64::min);
            assert!(best < 1e-9, "max residual {best}");
            for m in &out.candidates {
                assert!(
                    m.fundamental.matrix().determinant().abs() < 1e-9,
                    "det not enforced"
                );
            }
        }
    }

    #[test]
    fn seven_point_recovers_ground_truth() {
        let mut rng = StdRng::seed_from_u64(32);
        let mut hits = 0;
        let trials = 1000;
        for _ in 0..trials {
            let (corrs, model) = random_two_view_scene(&mut rng, 0.0, 0.0, 7);
            let Ok(out) = seven_point_f(&corrs) else {
                continue;
            };
            let gt = model.fundamental.matrix();
            if out
                .candidates
                .iter()
                .any(|m| (m.fundamental.matrix() - gt).norm() < 1e-6)
            {
                hits += 1;
            }
        }
        assert!(hits * 100 >= trials * 99, "only {hits}/{trials} recovered");
    }

    #[test]
    fn seven_point_rejects_degenerate_sample() {
        let c = Correspondence::new(NormalizedPoint::new(0.1, 0.1), NormalizedPoint::new(0.2, 0.1))
            .unwrap();
        let corrs = vec![c; 7];
        assert!(matches!(
            seven_point_f(&corrs),
            Err(SolverError::DegenerateSample(_))
        ));
    }

    #[test]
    fn seven_point_wrong_count_is_rejected() {
        let mut rng = StdRng::seed_from_u64(33);
        let (corrs, _) = random_two_view_scene(&mut rng, 0.0, 0.0, 8);
        assert!(matches!(
            seven_point_f(&corrs),
            Err(SolverError::WrongSampleSize { expected: 7, .. })
        ));
    }

    #[test]
    fn eight_point_recovers_f_on_noise_free_points() {
        let mut rng = StdRng::seed_from_u64(34);
        for _ in 0..50 {
            let (corrs, model) = random_two_view_scene(&mut rng, 0.0, 0.0, 8);
            let out = eight_point_f(&corrs).unwrap();
            assert_eq!(out.candidates.len(), 1);
            let d = (out.candidates[0].fundamental.matrix() - model.fundamental.matrix()).norm();
            assert!(d < 1e-8, "F distance {d}");
        }
    }

    #[test]
    fn eight_point_improves_with_more_noisy_points() {
        // Median over trials: fitting all 100 noisy points beats an 8-subset.
        let mut rng = StdRng::seed_from_u64(35);
        let sigma = 1e-3;
        let noise = Normal::new(0.0, sigma).unwrap();
        let mut full_better = 0;
        let trials = 30;
        for _ in 0..trials {
            let (clean, model) = random_two_view_scene(&mut rng, 0.0, 0.0, 100);
            let noisy: Vec<Correspondence> = clean
                .iter()
                .map(|c| {
                    Correspondence::new(
                        NormalizedPoint::new(
                            c.p1.x + noise.sample(&mut rng),
                            c.p1.y + noise.sample(&mut rng),
                        ),
                        NormalizedPoint::new(
                            c.p2.x + noise.sample(&mut rng),
                            c.p2.y + noise.sample(&mut rng),
                        ),
                    )
                    .unwrap()
                })
                .collect();
            let gt = model.fundamental.matrix();
            let err_full = (eight_point_f(&noisy).unwrap().candidates[0]
                .fundamental
                .matrix()
                - gt)
                .norm();
            let err_sub = (eight_point_f(&noisy[..8]).unwrap().candidates[0]
                .fundamental
                .matrix()
                - gt)
                .norm();
            if err_full < err_sub {
                full_better += 1;
            }
        }
        assert!(
            full_better * 2 > trials,
            "full fit better in only {full_better}/{trials} trials"
        );
    }

    #[test]
    fn eight_point_flags_rank_deficient_design() {
        // Repeated points collapse the design matrix rank below 8.
        let c = Correspondence::new(NormalizedPoint::new(0.3, -0.2), NormalizedPoint::new(0.25, -0.2))
            .unwrap();
        let corrs = vec![c; 8];
        assert!(matches!(
            eight_point_f(&corrs),
            Err(SolverError::DegenerateSample(_))
        ));
    }

    #[test]
    fn eight_point_flags_homography_consistent_sample() {
        // Points related by a plane-induced homography leave a 3-dimensional
        // family of compatible fundamental matrices: rank must drop.
        use nalgebra::{Matrix3, Vector3};
        let h = Matrix3::new(0.9, -0.1, 0.02, 0.15, 1.1, -0.03, 0.2, -0.1, 1.0);
        let mut rng = StdRng::seed_from_u64(37);
        let corrs: Vec<Correspondence> = (0..12)
            .map(|_| {
                let p1 = Vector3::new(
                    rand::Rng::random_range(&mut rng, -0.5..0.5),
                    rand::Rng::random_range(&mut rng, -0.5..0.5),
                    1.0,
                );
                let p2 = h * p1;
                Correspondence::new(
                    NormalizedPoint::new(p1.x, p1.y),
                    NormalizedPoint::new(p2.x / p2.z, p2.y / p2.z),
                )
                .unwrap()
            })
            .collect();
        assert!(matches!(
            eight_point_f(&corrs),
            Err(SolverError::DegenerateSample(_))
        ));
    }

    #[test]
    fn solver_candidates_are_permutation_invariant() {
        let mut rng = StdRng::seed_from_u64(36);
        let (mut corrs, _) = random_two_view_scene(&mut rng, 0.0, 0.0, 7);
        let out_a = seven_point_f(&corrs).unwrap();
        corrs.reverse();
        let out_b = seven_point_f(&corrs).unwrap();
        assert_eq!(out_a.candidates.len(), out_b.candidates.len());
        for m in &out_a.candidates {
            let best = out_b
                .candidates
                .iter()
                .map(|n| (m.fundamental.matrix() - n.fundamental.matrix()).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(best < 1e-9, "candidate not matched after permutation: {best}");
        }
    }
}
