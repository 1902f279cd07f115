//! Closed-form focal length extraction from a fundamental matrix, plus the
//! rank-2 projection applied before any decomposition.
//!
//! Both focal routines assume principal points at the origin of normalized
//! coordinates and fail hard when a squared focal comes out nonpositive or
//! non-finite instead of taking absolute values.

use nalgebra::{Matrix3, Vector3};

use crate::geometry::{skew, FundamentalMatrix};

use super::SolverError;

/// Projects a raw 3x3 matrix onto the rank-2 manifold by zeroing its smallest
/// singular value, then canonicalizes.
pub fn project_rank2(raw: &Matrix3<f64>) -> Result<FundamentalMatrix, SolverError> {
    let svd = raw.svd(true, true);
    let u = svd.u.as_ref().expect("svd with u requested");
    let v_t = svd.v_t.as_ref().expect("svd with v requested");
    let s = Matrix3::from_diagonal(&Vector3::new(
        svd.singular_values[0],
        svd.singular_values[1],
        0.0,
    ));
    Ok(FundamentalMatrix::new(u * s * v_t)?)
}

const IDIAG: Matrix3<f64> = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0);

fn principal() -> Vector3<f64> {
    Vector3::new(0.0, 0.0, 1.0)
}

/// Bougnoux closed form for two different unknown focal lengths. `F` follows
/// the crate convention `u1^T F u2 = 0`; principal points are at the origin.
pub fn focal_bougnoux(f: &FundamentalMatrix) -> Result<(f64, f64), SolverError> {
    let m = f.matrix();
    let e1 = f.epipole_in_image1();
    let e2 = f.epipole_in_image2();
    let p = principal();

    // Focal of camera 1: epipole and lines live in image 2.
    let num1 = (p.transpose() * skew(&e2) * IDIAG * m.transpose() * p)[0]
        * (p.transpose() * m * p)[0];
    let den1 = (p.transpose() * skew(&e2) * IDIAG * m.transpose() * IDIAG * m * p)[0];
    // Focal of camera 2: symmetric roles, epipole in image 1.
    let num2 =
        (p.transpose() * skew(&e1) * IDIAG * m * p)[0] * (p.transpose() * m.transpose() * p)[0];
    let den2 = (p.transpose() * skew(&e1) * IDIAG * m * IDIAG * m.transpose() * p)[0];

    let f1_sq = -num1 / den1;
    let f2_sq = -num2 / den2;
    if !f1_sq.is_finite() || !f2_sq.is_finite() || f1_sq <= 0.0 || f2_sq <= 0.0 {
        return Err(SolverError::DegenerateFocal);
    }
    Ok((f1_sq.sqrt(), f2_sq.sqrt()))
}

/// Sturm-style closed form for a single focal length shared by both cameras.
///
/// In the SVD basis of `F` the Kruppa proportionality between
/// `F diag(phi, phi, 1) F^T` and `[e]_x diag(phi, phi, 1) [e]_x^T` reduces to
/// a 2x2 block match, yielding three quadratics in `phi = f^2` whose common
/// positive root is returned.
pub fn focal_sturm_shared(f: &FundamentalMatrix) -> Result<f64, SolverError> {
    let svd = f.matrix().svd(true, true);
    let u = svd.u.as_ref().expect("svd with u requested");
    let v_t = svd.v_t.as_ref().expect("svd with v requested");
    let a = svd.singular_values[0];
    let b = svd.singular_values[1];

    // Third rows of U and V (components of the principal direction in the
    // singular bases).
    let w = Vector3::new(v_t[(0, 2)], v_t[(1, 2)], v_t[(2, 2)]);
    let q = Vector3::new(u[(2, 0)], u[(2, 1)], u[(2, 2)]);

    // M(phi) ~ N(phi) on the leading 2x2 block, entrywise:
    //   M11 = phi a^2 + (1-phi) a^2 w1^2      N11 = phi + (1-phi) q2^2
    //   M12 =           (1-phi) a b w1 w2     N12 =     - (1-phi) q1 q2
    //   M22 = phi b^2 + (1-phi) b^2 w2^2      N22 = phi + (1-phi) q1^2
    // Each entry is linear in phi: m(phi) = m0 + m1 phi.
    let lin = |at_zero: f64, at_one: f64| (at_zero, at_one - at_zero);
    let m11 = lin(a * a * w.x * w.x, a * a);
    let m12 = lin(a * b * w.x * w.y, 0.0);
    let m22 = lin(b * b * w.y * w.y, b * b);
    let n11 = lin(q.y * q.y, 1.0);
    let n12 = lin(-q.x * q.y, 0.0);
    let n22 = lin(q.x * q.x, 1.0);

    // Cross products of linear entries are quadratics c0 + c1 phi + c2 phi^2.
    let cross = |p: (f64, f64), q: (f64, f64), r: (f64, f64), s: (f64, f64)| {
        [
            p.0 * q.0 - r.0 * s.0,
            p.0 * q.1 + p.1 * q.0 - r.0 * s.1 - r.1 * s.0,
            p.1 * q.1 - r.1 * s.1,
        ]
    };
    let quads = [
        cross(m11, n12, m12, n11),
        cross(m11, n22, m22, n11),
        cross(m12, n22, m22, n12),
    ];

    // Proportionality defect of the 2x2 blocks at a given phi.
    let defect = |phi: f64| {
        let mv = Vector3::new(m11.0 + m11.1 * phi, m12.0 + m12.1 * phi, m22.0 + m22.1 * phi);
        let nv = Vector3::new(n11.0 + n11.1 * phi, n12.0 + n12.1 * phi, n22.0 + n22.1 * phi);
        let denom = mv.norm() * nv.norm();
        if denom < 1e-300 {
            return f64::INFINITY;
        }
        1.0 - mv.dot(&nv).abs() / denom
    };

    // Least-squares fusion: minimize the sum of squared (normalized)
    // quadratics. The objective is a quartic in phi; its stationary points
    // are roots of the cubic derivative.
    let mut quartic = [0.0f64; 5];
    for quad in quads {
        let scale = quad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale < 1e-300 {
            continue;
        }
        let [c0, c1, c2] = [quad[0] / scale, quad[1] / scale, quad[2] / scale];
        quartic[0] += c0 * c0;
        quartic[1] += 2.0 * c0 * c1;
        quartic[2] += c1 * c1 + 2.0 * c0 * c2;
        quartic[3] += 2.0 * c1 * c2;
        quartic[4] += c2 * c2;
    }
    let objective = |phi: f64| {
        quartic[0]
            + quartic[1] * phi
            + quartic[2] * phi * phi
            + quartic[3] * phi * phi * phi
            + quartic[4] * phi * phi * phi * phi
    };
    let derivative = [
        quartic[1],
        2.0 * quartic[2],
        3.0 * quartic[3],
        4.0 * quartic[4],
    ];

    let mut best: Option<(f64, f64)> = None;
    for phi in super::real_cubic_roots(derivative) {
        if !phi.is_finite() || phi <= 0.0 {
            continue;
        }
        let j = objective(phi);
        if best.is_none_or(|(bj, _)| j < bj) {
            best = Some((j, phi));
        }
    }

    match best {
        Some((_, phi)) if defect(phi) < 1e-2 => Ok(phi.sqrt()),
        _ => Err(SolverError::DegenerateFocal),
    }
}
