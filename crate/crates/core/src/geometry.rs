//! Core two-view geometry: normalized coordinates, the one-parameter division
//! distortion model, epipolar residuals and cheirality tests.
//!
//! Conventions used throughout the crate:
//! - Image points live in normalized coordinates obtained by subtracting the
//!   image center and dividing by the longer image side, so the image maps
//!   into `[-0.5, 0.5]^2` and the principal point sits at the origin.
//! - A [`RelativePose`] `(R, t)` maps camera-1 coordinates into camera-2
//!   coordinates: `X2 = R * X1 + t`.
//! - The epipolar residual is `u1^T F u2` where `u_i` are the homogeneous
//!   undistorted points of image 1 and image 2 respectively.

use nalgebra::{Matrix3, Unit, Vector3};
use thiserror::Error;

/// Plausible undistortion range; models outside it are rejected by robust
/// estimation.
pub const LAMBDA_MIN: f64 = -2.0;
/// Upper end of the plausible undistortion range.
pub const LAMBDA_MAX: f64 = 0.5;

/// Errors for geometric primitives.
#[derive(Debug, Error)]
pub enum GeometryError {
    /// The undistortion denominator `1 + lambda * r^2` vanished; the point
    /// maps to infinity.
    #[error("undistortion is degenerate: |1 + lambda r^2| < 1e-12")]
    DegenerateUndistortion,
    /// Forward distortion has no real solution for this radius and lambda.
    #[error("no real distortion root: 1 - 4 lambda r_u^2 < 0")]
    NoRealRoot,
    /// The epipolar gradient vanished; the first-order error is undefined.
    #[error("epipolar gradient is degenerate: |grad| < 1e-14")]
    GradientDegenerate,
    /// A fundamental matrix must be nonzero and finite.
    #[error("fundamental matrix is zero or non-finite")]
    InvalidFundamental,
    /// Rotation failed the orthonormality / determinant check.
    #[error("rotation is not orthonormal with det +1")]
    InvalidRotation,
    /// Translation must have nonzero norm to define a direction.
    #[error("translation direction is zero or non-finite")]
    InvalidTranslation,
    /// Focal lengths are strictly positive.
    #[error("focal length must be positive, got {0}")]
    InvalidFocal(f64),
    /// Image dimensions are positive integers.
    #[error("image dimensions must be at least 1x1")]
    InvalidDims,
    /// Correspondence coordinates must be finite.
    #[error("correspondence has non-finite coordinates")]
    NonFiniteCorrespondence,
}

/// A 2D point in normalized image coordinates (distorted unless stated
/// otherwise by the producing operation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedPoint {
    pub x: f64,
    pub y: f64,
}

impl NormalizedPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Squared distance to the distortion center (the origin).
    pub fn radius_sq(&self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Pixel dimensions of an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageDims {
    pub width: u32,
    pub height: u32,
}

impl ImageDims {
    pub fn new(width: u32, height: u32) -> Result<Self, GeometryError> {
        if width < 1 || height < 1 {
            return Err(GeometryError::InvalidDims);
        }
        Ok(Self { width, height })
    }

    /// Length of the longer image side, the normalization scale.
    pub fn longer_side(&self) -> f64 {
        f64::from(self.width.max(self.height))
    }

    pub fn center(&self) -> (f64, f64) {
        (f64::from(self.width) / 2.0, f64::from(self.height) / 2.0)
    }
}

/// One-parameter division undistortion model. The homogeneous undistorted
/// point is `[x_d, y_d, 1 + lambda (x_d^2 + y_d^2)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivisionModel {
    pub lambda: f64,
}

impl DivisionModel {
    pub fn new(lambda: f64) -> Self {
        Self { lambda }
    }

    /// True when lambda lies in the plausible range accepted by robust
    /// estimation.
    pub fn is_plausible(&self) -> bool {
        self.lambda.is_finite() && (LAMBDA_MIN..=LAMBDA_MAX).contains(&self.lambda)
    }
}

/// One 2D-2D correspondence in normalized distorted coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub p1: NormalizedPoint,
    pub p2: NormalizedPoint,
}

impl Correspondence {
    pub fn new(p1: NormalizedPoint, p2: NormalizedPoint) -> Result<Self, GeometryError> {
        if !p1.is_finite() || !p2.is_finite() {
            return Err(GeometryError::NonFiniteCorrespondence);
        }
        Ok(Self { p1, p2 })
    }
}

/// A canonicalized fundamental matrix: unit Frobenius norm, sign fixed so the
/// largest-magnitude entry is positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalMatrix {
    m: Matrix3<f64>,
}

impl FundamentalMatrix {
    /// Canonicalizes and wraps a raw 3x3 matrix.
    pub fn new(raw: Matrix3<f64>) -> Result<Self, GeometryError> {
        let norm = raw.norm();
        if !norm.is_finite() || norm < 1e-30 {
            return Err(GeometryError::InvalidFundamental);
        }
        let mut m = raw / norm;
        // Sign convention: first entry attaining the maximum magnitude
        // (row-major order) is made positive.
        let mut best = 0.0f64;
        let mut best_val = 0.0f64;
        for r in 0..3 {
            for c in 0..3 {
                let v = m[(r, c)];
                if v.abs() > best {
                    best = v.abs();
                    best_val = v;
                }
            }
        }
        if best_val < 0.0 {
            m = -m;
        }
        Ok(Self { m })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    /// Epipole in image 1: the left null direction, `F^T e1 = 0`.
    pub fn epipole_in_image1(&self) -> Vector3<f64> {
        smallest_right_singular_vector(&self.m.transpose())
    }

    /// Epipole in image 2: the right null direction, `F e2 = 0`.
    pub fn epipole_in_image2(&self) -> Vector3<f64> {
        smallest_right_singular_vector(&self.m)
    }
}

fn smallest_right_singular_vector(m: &Matrix3<f64>) -> Vector3<f64> {
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("svd of finite 3x3 matrix");
    v_t.row(2).transpose()
}

/// Relative pose mapping camera-1 coordinates into camera-2 coordinates,
/// `X2 = R X1 + t`, with `t` holding direction only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativePose {
    pub rotation: Matrix3<f64>,
    pub translation: Unit<Vector3<f64>>,
}

impl RelativePose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).norm();
        if !ortho.is_finite() || ortho > 1e-9 || (rotation.determinant() - 1.0).abs() > 1e-9 {
            return Err(GeometryError::InvalidRotation);
        }
        let n = translation.norm();
        if !n.is_finite() || n < 1e-30 {
            return Err(GeometryError::InvalidTranslation);
        }
        Ok(Self {
            rotation,
            translation: Unit::new_normalize(translation),
        })
    }
}

/// Per-camera intrinsics: focal length in normalized units plus the division
/// model. Principal point is fixed at the origin of normalized coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub focal: f64,
    pub division: DivisionModel,
}

impl CameraModel {
    pub fn new(focal: f64, division: DivisionModel) -> Result<Self, GeometryError> {
        if !focal.is_finite() || focal <= 0.0 {
            return Err(GeometryError::InvalidFocal(focal));
        }
        Ok(Self { focal, division })
    }
}

/// Everything a two-view estimate carries: the fundamental matrix, per-camera
/// intrinsics and (when decomposed) the relative pose.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoViewModel {
    pub fundamental: FundamentalMatrix,
    pub cam1: CameraModel,
    pub cam2: CameraModel,
    pub pose: Option<RelativePose>,
}

/// Normalizes a pixel point: subtract the image center, divide by the longer
/// side.
pub fn normalize(p_pixels: (f64, f64), dims: ImageDims) -> NormalizedPoint {
    let (cx, cy) = dims.center();
    let s = dims.longer_side();
    NormalizedPoint::new((p_pixels.0 - cx) / s, (p_pixels.1 - cy) / s)
}

/// Inverse of [`normalize`].
pub fn denormalize(p: NormalizedPoint, dims: ImageDims) -> (f64, f64) {
    let (cx, cy) = dims.center();
    let s = dims.longer_side();
    (p.x * s + cx, p.y * s + cy)
}

/// Homogeneous undistorted point `[x, y, 1 + lambda r^2]`; total on finite
/// inputs, no dehomogenization.
pub fn undistort_homogeneous(p: NormalizedPoint, d: DivisionModel) -> Vector3<f64> {
    Vector3::new(p.x, p.y, 1.0 + d.lambda * p.radius_sq())
}

/// Undistorts a point with the division model and dehomogenizes.
pub fn undistort(p: NormalizedPoint, d: DivisionModel) -> Result<NormalizedPoint, GeometryError> {
    let w = 1.0 + d.lambda * p.radius_sq();
    if w.abs() < 1e-12 {
        return Err(GeometryError::DegenerateUndistortion);
    }
    Ok(NormalizedPoint::new(p.x / w, p.y / w))
}

/// Forward distortion: maps an undistorted point back onto the same ray at
/// the distorted radius. The root continuous with `lambda -> 0` is taken,
/// in the cancellation-free form `r_d = 2 r_u / (1 + sqrt(1 - 4 lambda r_u^2))`.
pub fn distort(p_u: NormalizedPoint, d: DivisionModel) -> Result<NormalizedPoint, GeometryError> {
    let r_u_sq = p_u.radius_sq();
    if r_u_sq == 0.0 || d.lambda == 0.0 {
        return Ok(p_u);
    }
    let disc = 1.0 - 4.0 * d.lambda * r_u_sq;
    if disc < 0.0 {
        return Err(GeometryError::NoRealRoot);
    }
    // r_d / r_u, with r_d solving lambda r_u r_d^2 - r_d + r_u = 0.
    let scale = 2.0 / (1.0 + disc.sqrt());
    Ok(NormalizedPoint::new(p_u.x * scale, p_u.y * scale))
}

fn check_undistortable(p: NormalizedPoint, d: DivisionModel) -> Result<(), GeometryError> {
    if (1.0 + d.lambda * p.radius_sq()).abs() < 1e-12 {
        return Err(GeometryError::DegenerateUndistortion);
    }
    Ok(())
}

/// Algebraic epipolar residual `u1^T F u2` on homogeneous undistorted points.
pub fn epipolar_residual(c: &Correspondence, model: &TwoViewModel) -> Result<f64, GeometryError> {
    check_undistortable(c.p1, model.cam1.division)?;
    check_undistortable(c.p2, model.cam2.division)?;
    let u1 = undistort_homogeneous(c.p1, model.cam1.division);
    let u2 = undistort_homogeneous(c.p2, model.cam2.division);
    Ok((u1.transpose() * model.fundamental.matrix() * u2)[0])
}

/// Signed first-order epipolar distance in the distorted images:
/// `eps / |grad eps|` with the gradient taken in the four distorted
/// coordinates, chaining through the undistortion map. Squaring it gives the
/// tangent Sampson error.
pub fn tangent_sampson_signed(
    c: &Correspondence,
    model: &TwoViewModel,
) -> Result<f64, GeometryError> {
    check_undistortable(c.p1, model.cam1.division)?;
    check_undistortable(c.p2, model.cam2.division)?;
    let f = model.fundamental.matrix();
    let l1 = model.cam1.division.lambda;
    let l2 = model.cam2.division.lambda;
    let u1 = undistort_homogeneous(c.p1, model.cam1.division);
    let u2 = undistort_homogeneous(c.p2, model.cam2.division);

    let h = f * u2; // d eps / d u1
    let k = f.transpose() * u1; // d eps / d u2
    let eps = u1.dot(&h);

    // d u1 / d x1 = (1, 0, 2 l1 x1), d u1 / d y1 = (0, 1, 2 l1 y1); same
    // pattern in image 2.
    let g = [
        h.x + 2.0 * l1 * c.p1.x * h.z,
        h.y + 2.0 * l1 * c.p1.y * h.z,
        k.x + 2.0 * l2 * c.p2.x * k.z,
        k.y + 2.0 * l2 * c.p2.y * k.z,
    ];
    let grad_norm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2] + g[3] * g[3]).sqrt();
    if grad_norm < 1e-14 {
        return Err(GeometryError::GradientDegenerate);
    }
    Ok(eps / grad_norm)
}

/// First-order squared geometric distance to the epipolar constraint,
/// measured in the distorted images (normalized units squared).
pub fn tangent_sampson_error(
    c: &Correspondence,
    model: &TwoViewModel,
) -> Result<f64, GeometryError> {
    let d = tangent_sampson_signed(c, model)?;
    Ok(d * d)
}

/// Midpoint triangulation of two calibrated rays. Returns the depths of the
/// midpoint in camera 1 and camera 2, or `None` for near-parallel rays.
pub fn triangulate_midpoint_depths(
    dir1: Vector3<f64>,
    dir2: Vector3<f64>,
    pose: &RelativePose,
) -> Option<(f64, f64)> {
    let r = &pose.rotation;
    let t = pose.translation.into_inner();
    let c2 = -(r.transpose() * t); // camera-2 center in the camera-1 frame
    let w = r.transpose() * dir2; // ray-2 direction in the camera-1 frame

    let a = dir1.dot(&dir1);
    let b = dir1.dot(&w);
    let cc = w.dot(&w);
    let det = a * cc - b * b;
    if det.abs() < 1e-14 * a * cc {
        return None;
    }
    let p = dir1.dot(&c2);
    let q = w.dot(&c2);
    // Closest points: s along ray 1, u along ray 2.
    let s = (cc * p - b * q) / det;
    let u = (b * p - a * q) / det;

    let x = (dir1 * s + c2 + w * u) * 0.5;
    let z1 = x.z;
    let z2 = (r * x + t).z;
    Some((z1, z2))
}

/// True iff the midpoint-triangulated point for this correspondence has
/// positive depth in both cameras. Near-parallel rays count as failures.
pub fn triangulate_cheirality(
    c: &Correspondence,
    pose: &RelativePose,
    cam1: &CameraModel,
    cam2: &CameraModel,
) -> bool {
    let (Ok(p1u), Ok(p2u)) = (undistort(c.p1, cam1.division), undistort(c.p2, cam2.division))
    else {
        return false;
    };
    let dir1 = Vector3::new(p1u.x / cam1.focal, p1u.y / cam1.focal, 1.0);
    let dir2 = Vector3::new(p2u.x / cam2.focal, p2u.y / cam2.focal, 1.0);
    match triangulate_midpoint_depths(dir1, dir2, pose) {
        Some((z1, z2)) => z1 > 0.0 && z2 > 0.0,
        None => false,
    }
}

/// Skew-symmetric cross-product matrix `[v]_x`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Essential matrix for the calibrated constraint `x2^T E x1 = 0`:
/// `E = [t]_x R`.
pub fn essential_from_pose(pose: &RelativePose) -> Matrix3<f64> {
    skew(&pose.translation.into_inner()) * pose.rotation
}

/// Fundamental matrix consistent with `u1^T F u2 = 0` for the given pose and
/// intrinsics: `F ~ K1^{-1} ([t]_x R)^T K2^{-1}`.
pub fn fundamental_from_pose(
    pose: &RelativePose,
    cam1: &CameraModel,
    cam2: &CameraModel,
) -> Result<FundamentalMatrix, GeometryError> {
    let k1_inv = Matrix3::from_diagonal(&Vector3::new(1.0 / cam1.focal, 1.0 / cam1.focal, 1.0));
    let k2_inv = Matrix3::from_diagonal(&Vector3::new(1.0 / cam2.focal, 1.0 / cam2.focal, 1.0));
    FundamentalMatrix::new(k1_inv * essential_from_pose(pose).transpose() * k2_inv)
}
