//! Fundamental-matrix solvers and decompositions.
//!
//! The minimal 7-point and non-minimal 8-point solvers work on pinhole
//! (already undistorted) points. The 9-point solver estimates a shared
//! undistortion parameter jointly with `F` by solving a quadratic polynomial
//! eigenvalue problem reduced to a 6x6 companion matrix. Decomposition
//! routines recover focal lengths (Bougnoux / Sturm) and relative pose with
//! cheirality voting.

mod decompose;
mod focal;
mod nine_point;
mod pinhole;

pub use decompose::{decompose_to_pose, project_essential};
pub use focal::{focal_bougnoux, focal_sturm_shared, project_rank2};
pub use nine_point::{
    build_pencil, nine_point_f_lambda, reduced_companion, PencilMatrices, RadiusPair,
};
pub use pinhole::{eight_point_f, seven_point_f};

use crate::geometry::{CameraModel, DivisionModel, FundamentalMatrix, GeometryError, TwoViewModel};
use thiserror::Error;

/// Errors produced by the solver stage.
#[derive(Debug, Error)]
pub enum SolverError {
    /// Wrong number of correspondences for the chosen solver.
    #[error("solver needs {expected} correspondences, got {got}")]
    WrongSampleSize { expected: usize, got: usize },
    /// The design matrix lost rank; the sample cannot constrain the model.
    #[error("degenerate sample: design matrix rank below {0}")]
    DegenerateSample(usize),
    /// The 9-point pencil matrix `A0` is singular.
    #[error("pencil matrix A0 is singular")]
    SingularA0,
    /// No eigenvalue survived the realness and plausibility filters.
    #[error("no real solution inside the plausible undistortion range")]
    NoRealSolutions,
    /// Focal length extraction failed (negative or non-finite squared focal).
    #[error("degenerate configuration for focal length extraction")]
    DegenerateFocal,
    /// No pose candidate collected any cheirality vote.
    #[error("no pose candidate passed the cheirality test")]
    NoCheiralityWinner,
    /// A geometric primitive rejected its input.
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Candidate models returned by a solver. Pinhole solvers leave the
/// intrinsics at their placeholders (unit focal, zero distortion); the
/// 9-point solver attaches its recovered lambda to both cameras.
#[derive(Debug, Clone)]
pub struct SolverOutput {
    pub candidates: Vec<TwoViewModel>,
}

impl SolverOutput {
    pub(crate) fn from_candidates(candidates: Vec<TwoViewModel>) -> Self {
        Self { candidates }
    }
}

/// Real roots of `c0 + c1 x + c2 x^2 + c3 x^3`, closed form with one Newton
/// polish step per root.
pub(crate) fn real_cubic_roots(c: [f64; 4]) -> Vec<f64> {
    let scale = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Vec::new();
    }
    let [c0, c1, c2, c3] = [c[0] / scale, c[1] / scale, c[2] / scale, c[3] / scale];

    let mut roots = if c3.abs() < 1e-12 {
        if c2.abs() < 1e-12 {
            if c1.abs() < 1e-12 {
                Vec::new()
            } else {
                vec![-c0 / c1]
            }
        } else {
            let disc = c1 * c1 - 4.0 * c2 * c0;
            if disc < 0.0 {
                Vec::new()
            } else {
                let s = disc.sqrt();
                // stable quadratic formula
                let q = -0.5 * (c1 + c1.signum() * s);
                let mut r = vec![q / c2];
                if q.abs() > 1e-300 {
                    r.push(c0 / q);
                }
                r
            }
        }
    } else {
        // depressed cubic t^3 + p t + q with x = t - c2 / (3 c3)
        let a = c2 / c3;
        let b = c1 / c3;
        let cc = c0 / c3;
        let p = b - a * a / 3.0;
        let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + cc;
        let shift = -a / 3.0;
        let disc = (q / 2.0) * (q / 2.0) + (p / 3.0) * (p / 3.0) * (p / 3.0);
        if disc > 0.0 {
            // one real root (Cardano)
            let s = disc.sqrt();
            let t = (-q / 2.0 + s).cbrt() + (-q / 2.0 - s).cbrt();
            vec![t + shift]
        } else {
            // three real roots (trigonometric)
            let m = 2.0 * (-p / 3.0).max(0.0).sqrt();
            if m < 1e-300 {
                vec![shift]
            } else {
                let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
                let theta = arg.acos() / 3.0;
                (0..3)
                    .map(|k| {
                        m * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() + shift
                    })
                    .collect()
            }
        }
    };

    // one Newton step against the original cubic
    for r in roots.iter_mut() {
        let f = c0 + c1 * *r + c2 * *r * *r + c3 * *r * *r * *r;
        let df = c1 + 2.0 * c2 * *r + 3.0 * c3 * *r * *r;
        if df.abs() > 1e-300 {
            *r -= f / df;
        }
    }
    roots.retain(|r| r.is_finite());
    roots
}

/// Wraps a raw fundamental matrix into a placeholder-intrinsics model.
pub(crate) fn model_with_lambda(
    fundamental: FundamentalMatrix,
    lambda1: f64,
    lambda2: f64,
) -> TwoViewModel {
    let cam1 = CameraModel::new(1.0, DivisionModel::new(lambda1)).expect("unit focal is valid");
    let cam2 = CameraModel::new(1.0, DivisionModel::new(lambda2)).expect("unit focal is valid");
    TwoViewModel {
        fundamental,
        cam1,
        cam2,
        pose: None,
    }
}
