//! Quadratic polynomial eigenvalue solver for `F` and a shared undistortion
//! parameter from nine or more correspondences.
//!
//! The epipolar constraint on distorted points expands into
//! `(A0 + lambda A1 + lambda^2 A2) f = 0`. Substituting `sigma = 1/lambda`
//! turns this into an eigenvalue problem for the 18x18 companion matrix
//! `[[0, I], [-A0^-1 A2, -A0^-1 A1]]`; the eight zero columns of `A2` and the
//! four zero columns of `A1` let the companion collapse to 6x6, which is what
//! gets built here directly.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6};

use crate::geometry::{Correspondence, FundamentalMatrix, LAMBDA_MAX, LAMBDA_MIN};

use super::{model_with_lambda, SolverError, SolverOutput};

/// Coefficient matrices of the quadratic pencil, one row per correspondence.
///
/// Row layout follows the monomial order
/// `[x'x, x'y, x', y'x, y'y, y', x, y, 1]` with `(x, y)` the image-1 point,
/// `(x', y')` the image-2 point, and `f` stacking the fundamental matrix so
/// that `row . f` equals the epipolar residual `u1^T F u2` (see
/// [`fundamental_from_coeffs`]).
#[derive(Debug, Clone)]
pub struct PencilMatrices {
    pub a0: DMatrix<f64>,
    pub a1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
}

/// Squared distances of the two distorted points to the distortion center,
/// the radial quantities entering the pencil rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusPair {
    pub r_sq: f64,
    pub r_sq_prime: f64,
}

impl RadiusPair {
    pub fn of(c: &Correspondence) -> Self {
        Self {
            r_sq: c.p1.radius_sq(),
            r_sq_prime: c.p2.radius_sq(),
        }
    }
}

/// Nonzero columns of `A1` (0-based): coefficients on f3, f6, f7, f8, f9.
const A1_COLS: [usize; 5] = [2, 5, 6, 7, 8];

/// Builds the pencil matrices for `n >= 9` correspondences.
pub fn build_pencil(corrs: &[Correspondence]) -> PencilMatrices {
    let n = corrs.len();
    let mut a0 = DMatrix::zeros(n, 9);
    let mut a1 = DMatrix::zeros(n, 9);
    let mut a2 = DMatrix::zeros(n, 9);
    for (i, c) in corrs.iter().enumerate() {
        let (x, y) = (c.p1.x, c.p1.y);
        let (xp, yp) = (c.p2.x, c.p2.y);
        let RadiusPair { r_sq, r_sq_prime: rp_sq } = RadiusPair::of(c);

        a0[(i, 0)] = xp * x;
        a0[(i, 1)] = xp * y;
        a0[(i, 2)] = xp;
        a0[(i, 3)] = yp * x;
        a0[(i, 4)] = yp * y;
        a0[(i, 5)] = yp;
        a0[(i, 6)] = x;
        a0[(i, 7)] = y;
        a0[(i, 8)] = 1.0;

        a1[(i, 2)] = xp * r_sq;
        a1[(i, 5)] = yp * r_sq;
        a1[(i, 6)] = x * rp_sq;
        a1[(i, 7)] = y * rp_sq;
        a1[(i, 8)] = r_sq + rp_sq;

        a2[(i, 8)] = r_sq * rp_sq;
    }
    PencilMatrices { a0, a1, a2 }
}

/// Assembles the fundamental matrix from a pencil coefficient vector: the
/// vector stacks the matrix `G` row-wise with `u2^T G u1 = 0`, so
/// `F = G^T` satisfies the crate-wide `u1^T F u2 = 0` convention.
pub(crate) fn fundamental_from_coeffs(f: &[f64]) -> Result<FundamentalMatrix, SolverError> {
    let g = Matrix3::new(f[0], f[1], f[2], f[3], f[4], f[5], f[6], f[7], f[8]);
    Ok(FundamentalMatrix::new(g.transpose())?)
}

/// Solves `A0 X = B` for the minimal (square) or least-squares
/// (overdetermined, column-pivoted QR) case.
fn solve_against_a0(a0: &DMatrix<f64>, b: DMatrix<f64>) -> Result<DMatrix<f64>, SolverError> {
    let n = a0.nrows();
    if n == 9 {
        let lu = a0.clone().lu();
        lu.solve(&b).ok_or(SolverError::SingularA0)
    } else {
        let qr = a0.clone().col_piv_qr();
        let r = qr.r();
        if r[(8, 8)].abs() < 1e-12 * r[(0, 0)].abs().max(1e-300) {
            return Err(SolverError::SingularA0);
        }
        let qtb = qr.q().transpose() * b;
        let mut x = r
            .solve_upper_triangular(&qtb)
            .ok_or(SolverError::SingularA0)?;
        qr.p().inv_permute_rows(&mut x);
        Ok(x)
    }
}

/// Directly constructs the reduced 6x6 companion matrix whose eigenvalues are
/// the finite `sigma = 1/lambda` of the pencil. Surviving coordinates are
/// `[f9; sigma f3, sigma f6, sigma f7, sigma f8, sigma f9]`.
pub fn reduced_companion(pencil: &PencilMatrices) -> Result<Matrix6<f64>, SolverError> {
    let n = pencil.a0.nrows();
    if n < 9 {
        return Err(SolverError::WrongSampleSize {
            expected: 9,
            got: n,
        });
    }

    // Right-hand sides: the single nonzero column of A2 and the five nonzero
    // columns of A1, negated.
    let mut rhs = DMatrix::zeros(n, 6);
    for i in 0..n {
        rhs[(i, 0)] = -pencil.a2[(i, 8)];
        for (j, &col) in A1_COLS.iter().enumerate() {
            rhs[(i, 1 + j)] = -pencil.a1[(i, col)];
        }
    }
    let sol = solve_against_a0(&pencil.a0, rhs)?;

    let mut c = Matrix6::zeros();
    c[(0, 5)] = 1.0; // the surviving identity row: f9 = (1/sigma) * sigma f9
    for (k, &row) in A1_COLS.iter().enumerate() {
        c[(k + 1, 0)] = sol[(row, 0)]; // column of -A0^-1 A2
        for j in 0..5 {
            c[(k + 1, 1 + j)] = sol[(row, 1 + j)];
        }
    }
    Ok(c)
}

/// Minimal (n = 9) and non-minimal (n > 9) solver for `F` and a shared
/// undistortion parameter. Candidates keep the raw (not rank-2-projected)
/// fundamental matrix, with the recovered lambda attached to both cameras.
pub fn nine_point_f_lambda(corrs: &[Correspondence]) -> Result<SolverOutput, SolverError> {
    if corrs.len() < 9 {
        return Err(SolverError::WrongSampleSize {
            expected: 9,
            got: corrs.len(),
        });
    }
    let pencil = build_pencil(corrs);
    let companion = reduced_companion(&pencil)?;

    let eigen = companion.complex_eigenvalues();
    let mut candidates = Vec::new();
    for sigma in eigen.iter() {
        // Near-zero sigma corresponds to lambda -> infinity: spurious.
        if sigma.im.abs() > 1e-8 || sigma.re.abs() <= 1e-8 {
            continue;
        }
        let lambda = 1.0 / sigma.re;
        if !(LAMBDA_MIN..=LAMBDA_MAX).contains(&lambda) {
            continue;
        }
        // Re-extract the coefficient vector as the least right-singular
        // vector of the pencil evaluated at this lambda.
        let m = &pencil.a0 + &pencil.a1 * lambda + &pencil.a2 * (lambda * lambda);
        let svd = m.svd(false, true);
        let v_t = svd.v_t.as_ref().expect("svd with v requested");
        let f_vec: DVector<f64> = v_t.row(8).transpose();
        let Ok(fundamental) = fundamental_from_coeffs(f_vec.as_slice()) else {
            continue;
        };
        candidates.push(model_with_lambda(fundamental, lambda, lambda));
    }
    if candidates.is_empty() {
        return Err(SolverError::NoRealSolutions);
    }
    Ok(SolverOutput::from_candidates(candidates))
}
