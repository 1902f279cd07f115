//! Pose extraction from a fundamental matrix: projection onto the essential
//! manifold, the four-fold candidate split, and cheirality voting over the
//! inlier set.

use nalgebra::{Matrix3, Vector3};

use crate::geometry::{
    triangulate_midpoint_depths, undistort, Correspondence, DivisionModel, FundamentalMatrix,
    RelativePose,
};

use super::SolverError;

/// Essential matrix for the calibrated constraint `x2^T E x1 = 0` obtained
/// from `F` (convention `u1^T F u2 = 0`) and diagonal calibrations:
/// `E = K2 F^T K1`.
pub(crate) fn essential_from_fundamental(
    f: &FundamentalMatrix,
    f1: f64,
    f2: f64,
) -> Matrix3<f64> {
    let k1 = Matrix3::from_diagonal(&Vector3::new(f1, f1, 1.0));
    let k2 = Matrix3::from_diagonal(&Vector3::new(f2, f2, 1.0));
    k2 * f.matrix().transpose() * k1
}

/// Projects a matrix onto the essential manifold (singular values `1, 1, 0`)
/// and returns the four `(R, t)` decomposition candidates.
pub(crate) fn pose_candidates(e_raw: &Matrix3<f64>) -> Result<Vec<RelativePose>, SolverError> {
    let svd = e_raw.svd(true, true);
    let mut u = svd.u.expect("svd with u requested");
    let mut v_t = svd.v_t.expect("svd with v requested");

    // The zero third singular value lets the last column of U (row of V^T)
    // flip sign freely; use that to make both factors proper rotations.
    if u.determinant() < 0.0 {
        u.column_mut(2).neg_mut();
    }
    if v_t.determinant() < 0.0 {
        v_t.row_mut(2).neg_mut();
    }

    let w = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let r1 = u * w * v_t;
    let r2 = u * w.transpose() * v_t;
    let t = u.column(2).into_owned();

    let mut out = Vec::with_capacity(4);
    for rot in [r1, r2] {
        for dir in [t, -t] {
            out.push(RelativePose::new(rot, dir)?);
        }
    }
    Ok(out)
}

/// Projects a matrix estimated on calibrated points onto the essential
/// manifold (two equal singular values, third zero), then folds the
/// calibrations back in so the result scores on normalized undistorted
/// points: `F = K1^-1 E K2^-1`.
pub fn project_essential(
    raw: &Matrix3<f64>,
    f1: f64,
    f2: f64,
) -> Result<FundamentalMatrix, SolverError> {
    let svd = raw.svd(true, true);
    let u = svd.u.as_ref().expect("svd with u requested");
    let v_t = svd.v_t.as_ref().expect("svd with v requested");
    let s = 0.5 * (svd.singular_values[0] + svd.singular_values[1]);
    let e = u * Matrix3::from_diagonal(&Vector3::new(s, s, 0.0)) * v_t;
    let k1_inv = Matrix3::from_diagonal(&Vector3::new(1.0 / f1, 1.0 / f1, 1.0));
    let k2_inv = Matrix3::from_diagonal(&Vector3::new(1.0 / f2, 1.0 / f2, 1.0));
    Ok(FundamentalMatrix::new(k1_inv * e * k2_inv)?)
}

/// Decomposes `F` with known focal lengths into the relative pose whose
/// cheirality vote over the inliers is largest. Ties break on the larger
/// total triangulated depth margin.
pub fn decompose_to_pose(
    f: &FundamentalMatrix,
    f1: f64,
    f2: f64,
    inliers: &[Correspondence],
    d1: DivisionModel,
    d2: DivisionModel,
) -> Result<RelativePose, SolverError> {
    if f1 <= 0.0 || f2 <= 0.0 {
        return Err(SolverError::DegenerateFocal);
    }
    if inliers.is_empty() {
        return Err(SolverError::NoCheiralityWinner);
    }
    let e = essential_from_fundamental(f, f1, f2);
    let candidates = pose_candidates(&e)?;

    let mut best: Option<(usize, f64, RelativePose)> = None;
    for pose in candidates {
        let mut votes = 0usize;
        let mut margin = 0.0f64;
        for c in inliers {
            let (Ok(p1u), Ok(p2u)) = (undistort(c.p1, d1), undistort(c.p2, d2)) else {
                continue;
            };
            let dir1 = Vector3::new(p1u.x / f1, p1u.y / f1, 1.0);
            let dir2 = Vector3::new(p2u.x / f2, p2u.y / f2, 1.0);
            if let Some((z1, z2)) = triangulate_midpoint_depths(dir1, dir2, &pose) {
                if z1 > 0.0 && z2 > 0.0 {
                    votes += 1;
                    margin += z1.min(z2);
                }
            }
        }
        let better = match &best {
            None => votes > 0,
            Some((bv, bm, _)) => votes > *bv || (votes == *bv && margin > *bm),
        };
        if better {
            best = Some((votes, margin, pose));
        }
    }
    best.map(|(_, _, pose)| pose)
        .ok_or(SolverError::NoCheiralityWinner)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::tests_support::random_two_view_scene;
    use crate::geometry::essential_from_pose;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn angle_deg(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
        // chord form keeps precision near zero where dot-acos saturates
        let an = a.normalize();
        let bn = b.normalize();
        (2.0 * ((an - bn).norm() / 2.0).clamp(0.0, 1.0).asin()).to_degrees()
    }

    fn rotation_angle_deg(r1: &Matrix3<f64>, r2: &Matrix3<f64>) -> f64 {
        // ||R1 - R2||_F = 2 sqrt(2) sin(theta / 2) exactly; asin keeps full
        // precision at tiny angles where the trace formula bottoms out.
        let fro = (r1 - r2).norm();
        (2.0 * (fro / (2.0 * 2.0f64.sqrt())).clamp(0.0, 1.0).asin()).to_degrees()
    }

    #[test]
    fn recovers_pose_from_synthetic_fundamental() {
        let mut rng = StdRng::seed_from_u64(51);
        for _ in 0..50 {
            let (corrs, model) = random_two_view_scene(&mut rng, -0.4, -0.4, 30);
            let gt = model.pose.as_ref().unwrap();
            let pose = decompose_to_pose(
                &model.fundamental,
                model.cam1.focal,
                model.cam2.focal,
                &corrs,
                model.cam1.division,
                model.cam2.division,
            )
            .unwrap();
            let rot_err = rotation_angle_deg(&pose.rotation, &gt.rotation);
            let t_err = angle_deg(&pose.translation, &gt.translation);
            assert!(rot_err < 1e-4, "rotation error {rot_err} deg");
            assert!(t_err < 1e-3, "translation error {t_err} deg");
        }
    }

    #[test]
    fn single_inlier_suffices() {
        let mut rng = StdRng::seed_from_u64(52);
        let (corrs, model) = random_two_view_scene(&mut rng, 0.0, 0.0, 1);
        let gt = model.pose.as_ref().unwrap();
        let pose = decompose_to_pose(
            &model.fundamental,
            model.cam1.focal,
            model.cam2.focal,
            &corrs,
            model.cam1.division,
            model.cam2.division,
        )
        .unwrap();
        assert!(rotation_angle_deg(&pose.rotation, &gt.rotation) < 1e-4);
    }

    #[test]
    fn empty_inliers_are_rejected() {
        let mut rng = StdRng::seed_from_u64(53);
        let (_, model) = random_two_view_scene(&mut rng, 0.0, 0.0, 5);
        let err = decompose_to_pose(
            &model.fundamental,
            model.cam1.focal,
            model.cam2.focal,
            &[],
            model.cam1.division,
            model.cam2.division,
        )
        .unwrap_err();
        assert!(matches!(err, SolverError::NoCheiralityWinner));
    }

    #[test]
    fn roundtrip_pose_to_essential_to_pose() {
        let mut rng = StdRng::seed_from_u64(54);
        for _ in 0..50 {
            let (corrs, model) = random_two_view_scene(&mut rng, 0.0, 0.0, 10);
            let gt = model.pose.as_ref().unwrap();
            let e = essential_from_pose(gt);
            let candidates = pose_candidates(&e).unwrap();
            // The ground-truth pose must be among the four candidates.
            let found = candidates.iter().any(|p| {
                rotation_angle_deg(&p.rotation, &gt.rotation) < 1e-6
                    && angle_deg(&p.translation, &gt.translation) < 1e-6
            });
            assert!(found, "ground truth not in the candidate set");
            let _ = corrs;
        }
    }
}
