//! Levenberg-Marquardt local optimization of the truncated tangent-Sampson
//! cost over configurable parameter blocks: rotation (3-parameter tangent
//! increment), translation direction (2-parameter sphere increment), focal
//! lengths and undistortion parameters (box-projected scalars).

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::geometry::{
    fundamental_from_pose, CameraModel, Correspondence, DivisionModel, RelativePose, TwoViewModel,
    LAMBDA_MAX, LAMBDA_MIN,
};
use crate::solvers::{decompose_to_pose, focal_bougnoux, focal_sturm_shared, project_rank2};

use super::{RansacConfig, RefineBlocks, RobustError, TruncatedScore};

/// Focal length box during refinement, in normalized units.
const FOCAL_MIN: f64 = 1e-3;
const FOCAL_MAX: f64 = 1e3;

/// Extra inputs `lo_refine` needs beyond the model and config: the scoring
/// threshold, whether intrinsics are shared, and prior focals to fall back on
/// when closed-form extraction fails.
#[derive(Debug, Clone, Copy)]
pub struct RefineContext {
    pub score: TruncatedScore,
    pub shared_intrinsics: bool,
    pub prior_focals: Option<(f64, f64)>,
}

/// Decomposed parameter state the optimizer walks on.
#[derive(Debug, Clone)]
struct ParamState {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>, // unit
    f1: f64,
    f2: f64,
    l1: f64,
    l2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Param {
    Rot(usize),
    Trans(usize),
    Focal1,
    Focal2,
    FocalShared,
    Lambda1,
    Lambda2,
    LambdaShared,
}

fn active_params(blocks: &RefineBlocks, shared: bool) -> Vec<Param> {
    let mut p = Vec::new();
    if blocks.rotation {
        p.extend([Param::Rot(0), Param::Rot(1), Param::Rot(2)]);
    }
    if blocks.translation {
        p.extend([Param::Trans(0), Param::Trans(1)]);
    }
    if shared {
        if blocks.focal1 {
            p.push(Param::FocalShared);
        }
        if blocks.lambda1 {
            p.push(Param::LambdaShared);
        }
    } else {
        if blocks.focal1 {
            p.push(Param::Focal1);
        }
        if blocks.focal2 {
            p.push(Param::Focal2);
        }
        if blocks.lambda1 {
            p.push(Param::Lambda1);
        }
        if blocks.lambda2 {
            p.push(Param::Lambda2);
        }
    }
    p
}

/// Orthonormal basis of the tangent plane at the unit vector `t`.
fn tangent_basis(t: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let pick = if t.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let b1 = t.cross(&pick).normalize();
    let b2 = t.cross(&b1).normalize();
    (b1, b2)
}

impl ParamState {
    fn fundamental(&self) -> Matrix3<f64> {
        // F = K1^-1 E^T K2^-1 with E = [t]x R; scale-free, left raw here.
        let e = crate::geometry::skew(&self.translation) * self.rotation;
        let k1_inv = Matrix3::from_diagonal(&Vector3::new(1.0 / self.f1, 1.0 / self.f1, 1.0));
        let k2_inv = Matrix3::from_diagonal(&Vector3::new(1.0 / self.f2, 1.0 / self.f2, 1.0));
        k1_inv * e.transpose() * k2_inv
    }

    /// Applies a parameter increment, respecting manifold structure and the
    /// box constraints on scalars.
    fn apply_delta(&self, params: &[Param], delta: &DVector<f64>) -> ParamState {
        let mut next = self.clone();
        let (b1, b2) = tangent_basis(&self.translation);
        let mut t_step = Vector3::zeros();
        let mut rot_step = Vector3::zeros();
        for (k, p) in params.iter().enumerate() {
            let d = delta[k];
            match p {
                Param::Rot(i) => rot_step[*i] = d,
                Param::Trans(0) => t_step += b1 * d,
                Param::Trans(_) => t_step += b2 * d,
                Param::Focal1 => next.f1 = (self.f1 + d).clamp(FOCAL_MIN, FOCAL_MAX),
                Param::Focal2 => next.f2 = (self.f2 + d).clamp(FOCAL_MIN, FOCAL_MAX),
                Param::FocalShared => {
                    let f = (self.f1 + d).clamp(FOCAL_MIN, FOCAL_MAX);
                    next.f1 = f;
                    next.f2 = f;
                }
                Param::Lambda1 => next.l1 = (self.l1 + d).clamp(LAMBDA_MIN, LAMBDA_MAX),
                Param::Lambda2 => next.l2 = (self.l2 + d).clamp(LAMBDA_MIN, LAMBDA_MAX),
                Param::LambdaShared => {
                    let l = (self.l1 + d).clamp(LAMBDA_MIN, LAMBDA_MAX);
                    next.l1 = l;
                    next.l2 = l;
                }
            }
        }
        next.rotation = nalgebra::Rotation3::from_scaled_axis(rot_step).into_inner() * self.rotation;
        next.translation = (self.translation + t_step).normalize();
        next
    }

    /// Signed first-order residual for one correspondence, or `None` when the
    /// gradient degenerates.
    fn residual(&self, c: &Correspondence) -> Option<f64> {
        let f = self.fundamental();
        let u1 = Vector3::new(c.p1.x, c.p1.y, 1.0 + self.l1 * c.p1.radius_sq());
        let u2 = Vector3::new(c.p2.x, c.p2.y, 1.0 + self.l2 * c.p2.radius_sq());
        let h = f * u2;
        let k = f.transpose() * u1;
        let eps = u1.dot(&h);
        let g = gradient4(self, c, &h, &k);
        let n = g.norm();
        if n < 1e-14 {
            return None;
        }
        Some(eps / n)
    }
}

fn gradient4(
    s: &ParamState,
    c: &Correspondence,
    h: &Vector3<f64>,
    k: &Vector3<f64>,
) -> nalgebra::Vector4<f64> {
    nalgebra::Vector4::new(
        h.x + 2.0 * s.l1 * c.p1.x * h.z,
        h.y + 2.0 * s.l1 * c.p1.y * h.z,
        k.x + 2.0 * s.l2 * c.p2.x * k.z,
        k.y + 2.0 * s.l2 * c.p2.y * k.z,
    )
}

/// Analytic row of the Jacobian of the signed residual for one
/// correspondence, in the order of `params`.
fn residual_jacobian_row(
    s: &ParamState,
    c: &Correspondence,
    params: &[Param],
    row: &mut [f64],
) -> Option<f64> {
    let e = crate::geometry::skew(&s.translation) * s.rotation;
    let k1_inv = Matrix3::from_diagonal(&Vector3::new(1.0 / s.f1, 1.0 / s.f1, 1.0));
    let k2_inv = Matrix3::from_diagonal(&Vector3::new(1.0 / s.f2, 1.0 / s.f2, 1.0));
    let f = k1_inv * e.transpose() * k2_inv;

    let rho1 = c.p1.radius_sq();
    let rho2 = c.p2.radius_sq();
    let u1 = Vector3::new(c.p1.x, c.p1.y, 1.0 + s.l1 * rho1);
    let u2 = Vector3::new(c.p2.x, c.p2.y, 1.0 + s.l2 * rho2);
    let h = f * u2;
    let kv = f.transpose() * u1;
    let eps = u1.dot(&h);
    let a1 = Vector3::new(1.0, 0.0, 2.0 * s.l1 * c.p1.x);
    let b1 = Vector3::new(0.0, 1.0, 2.0 * s.l1 * c.p1.y);
    let a2 = Vector3::new(1.0, 0.0, 2.0 * s.l2 * c.p2.x);
    let b2 = Vector3::new(0.0, 1.0, 2.0 * s.l2 * c.p2.y);
    let g = nalgebra::Vector4::new(a1.dot(&h), b1.dot(&h), a2.dot(&kv), b2.dot(&kv));
    let gn = g.norm();
    if gn < 1e-14 {
        return None;
    }

    let (tb1, tb2) = tangent_basis(&s.translation);
    let df1 = Matrix3::from_diagonal(&Vector3::new(-1.0 / (s.f1 * s.f1), -1.0 / (s.f1 * s.f1), 0.0));
    let df2 = Matrix3::from_diagonal(&Vector3::new(-1.0 / (s.f2 * s.f2), -1.0 / (s.f2 * s.f2), 0.0));

    // dF for a pose-side perturbation dE.
    let df_from_de = |de: Matrix3<f64>| k1_inv * de.transpose() * k2_inv;

    for (idx, p) in params.iter().enumerate() {
        // Assemble d_eps and the 4-gradient derivative for this parameter.
        let (d_eps, dg) = match p {
            Param::Rot(i) => {
                let mut ei = Vector3::zeros();
                ei[*i] = 1.0;
                let de = crate::geometry::skew(&s.translation)
                    * crate::geometry::skew(&ei)
                    * s.rotation;
                let dfm = df_from_de(de);
                deriv_from_df(&dfm, &u1, &u2, &a1, &b1, &a2, &b2)
            }
            Param::Trans(j) => {
                let dir = if *j == 0 { tb1 } else { tb2 };
                let de = crate::geometry::skew(&dir) * s.rotation;
                let dfm = df_from_de(de);
                deriv_from_df(&dfm, &u1, &u2, &a1, &b1, &a2, &b2)
            }
            Param::Focal1 => {
                let dfm = df1 * e.transpose() * k2_inv;
                deriv_from_df(&dfm, &u1, &u2, &a1, &b1, &a2, &b2)
            }
            Param::Focal2 => {
                let dfm = k1_inv * e.transpose() * df2;
                deriv_from_df(&dfm, &u1, &u2, &a1, &b1, &a2, &b2)
            }
            Param::FocalShared => {
                let dfm = df1 * e.transpose() * k2_inv + k1_inv * e.transpose() * df2;
                deriv_from_df(&dfm, &u1, &u2, &a1, &b1, &a2, &b2)
            }
            Param::Lambda1 => lambda1_deriv(&f, c, rho1, &h, &a2, &b2),
            Param::Lambda2 => lambda2_deriv(&f, c, rho2, &kv, &a1, &b1),
            Param::LambdaShared => {
                let (e1, g1) = lambda1_deriv(&f, c, rho1, &h, &a2, &b2);
                let (e2, g2) = lambda2_deriv(&f, c, rho2, &kv, &a1, &b1);
                (e1 + e2, g1 + g2)
            }
        };
        row[idx] = d_eps / gn - eps * g.dot(&dg) / (gn * gn * gn);
    }
    Some(eps / gn)
}

/// `(d_eps, d_gradient)` for a perturbation of `F` alone.
#[allow(clippy::too_many_arguments)]
fn deriv_from_df(
    dfm: &Matrix3<f64>,
    u1: &Vector3<f64>,
    u2: &Vector3<f64>,
    a1: &Vector3<f64>,
    b1: &Vector3<f64>,
    a2: &Vector3<f64>,
    b2: &Vector3<f64>,
) -> (f64, nalgebra::Vector4<f64>) {
    let dh = dfm * u2;
    let dk = dfm.transpose() * u1;
    let d_eps = u1.dot(&dh);
    (
        d_eps,
        nalgebra::Vector4::new(a1.dot(&dh), b1.dot(&dh), a2.dot(&dk), b2.dot(&dk)),
    )
}

/// `(d_eps, d_gradient)` for a perturbation of `lambda1`: moves `u1` and the
/// chain vectors of image 1.
fn lambda1_deriv(
    f: &Matrix3<f64>,
    c: &Correspondence,
    rho1: f64,
    h: &Vector3<f64>,
    a2: &Vector3<f64>,
    b2: &Vector3<f64>,
) -> (f64, nalgebra::Vector4<f64>) {
    let du1 = Vector3::new(0.0, 0.0, rho1);
    let dk = f.transpose() * du1;
    let d_eps = rho1 * h.z;
    // a1, b1 change with lambda1; h does not.
    let dg = nalgebra::Vector4::new(
        2.0 * c.p1.x * h.z,
        2.0 * c.p1.y * h.z,
        a2.dot(&dk),
        b2.dot(&dk),
    );
    (d_eps, dg)
}

fn lambda2_deriv(
    f: &Matrix3<f64>,
    c: &Correspondence,
    rho2: f64,
    kv: &Vector3<f64>,
    a1: &Vector3<f64>,
    b1: &Vector3<f64>,
) -> (f64, nalgebra::Vector4<f64>) {
    let du2 = Vector3::new(0.0, 0.0, rho2);
    let dh = f * du2;
    let d_eps = rho2 * kv.z;
    let dg = nalgebra::Vector4::new(
        a1.dot(&dh),
        b1.dot(&dh),
        2.0 * c.p2.x * kv.z,
        2.0 * c.p2.y * kv.z,
    );
    (d_eps, dg)
}

/// Truncated cost of a parameter state over the masked correspondences.
fn state_cost(s: &ParamState, corrs: &[Correspondence], mask: &[bool], thr_sq: f64) -> f64 {
    corrs
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(c, _)| match s.residual(c) {
            Some(r) => (r * r).min(thr_sq),
            None => thr_sq,
        })
        .sum()
}

fn model_from_state(s: &ParamState) -> Result<TwoViewModel, RobustError> {
    let pose = RelativePose::new(orthonormalized(&s.rotation), s.translation)
        .map_err(|_| RobustError::DecompositionFailed)?;
    let cam1 = CameraModel::new(s.f1, DivisionModel::new(s.l1))
        .map_err(|_| RobustError::DecompositionFailed)?;
    let cam2 = CameraModel::new(s.f2, DivisionModel::new(s.l2))
        .map_err(|_| RobustError::DecompositionFailed)?;
    let fundamental =
        fundamental_from_pose(&pose, &cam1, &cam2).map_err(|_| RobustError::DecompositionFailed)?;
    Ok(TwoViewModel {
        fundamental,
        cam1,
        cam2,
        pose: Some(pose),
    })
}

/// Nearest rotation in Frobenius norm (polar factor via SVD).
fn orthonormalized(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let u = svd.u.expect("svd with u requested");
    let v_t = svd.v_t.expect("svd with v requested");
    let mut out = u * v_t;
    if out.determinant() < 0.0 {
        let flip = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        out = u * flip * v_t;
    }
    out
}

/// Builds the LM starting point from a model: uses the decomposed pose when
/// present, otherwise extracts focals (Sturm / Bougnoux, prior fallback) and
/// decomposes the rank-2-projected fundamental with cheirality voting.
fn starting_state(
    model: &TwoViewModel,
    corrs: &[Correspondence],
    mask: &[bool],
    ctx: &RefineContext,
) -> Result<ParamState, RobustError> {
    if let Some(pose) = &model.pose {
        return Ok(ParamState {
            rotation: pose.rotation,
            translation: pose.translation.into_inner(),
            f1: model.cam1.focal,
            f2: model.cam2.focal,
            l1: model.cam1.division.lambda,
            l2: model.cam2.division.lambda,
        });
    }

    let f_r2 =
        project_rank2(model.fundamental.matrix()).map_err(|_| RobustError::DecompositionFailed)?;
    // Primary formula per the shared flag, then the other closed form, then
    // prior focals. A bad start only costs time: the final cost guard
    // discards refinements that do not improve on the input.
    let focals = if ctx.shared_intrinsics {
        focal_sturm_shared(&f_r2)
            .map(|f| (f, f))
            .or_else(|_| focal_bougnoux(&f_r2))
    } else {
        focal_bougnoux(&f_r2).or_else(|_| focal_sturm_shared(&f_r2).map(|f| (f, f)))
    };
    let (f1, f2) = match focals {
        Ok(pair) => pair,
        Err(_) => ctx.prior_focals.ok_or(RobustError::DecompositionFailed)?,
    };

    let inliers: Vec<Correspondence> = corrs
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(c, _)| *c)
        .collect();
    let pose = decompose_to_pose(
        &f_r2,
        f1,
        f2,
        &inliers,
        model.cam1.division,
        model.cam2.division,
    )
    .map_err(|_| RobustError::DecompositionFailed)?;
    Ok(ParamState {
        rotation: pose.rotation,
        translation: pose.translation.into_inner(),
        f1,
        f2,
        l1: model.cam1.division.lambda,
        l2: model.cam2.division.lambda,
    })
}

/// Self-check of the analytic residual Jacobian against central finite
/// differences for one correspondence: returns the maximum relative
/// deviation over the active parameters, or `None` when the residual is
/// degenerate at this point. The model must carry a pose.
pub fn jacobian_fd_max_rel_dev(
    model: &TwoViewModel,
    c: &Correspondence,
    blocks: &RefineBlocks,
    shared: bool,
) -> Option<f64> {
    let pose = model.pose.as_ref()?;
    let state = ParamState {
        rotation: pose.rotation,
        translation: pose.translation.into_inner(),
        f1: model.cam1.focal,
        f2: model.cam2.focal,
        l1: model.cam1.division.lambda,
        l2: model.cam2.division.lambda,
    };
    let params = active_params(blocks, shared);
    let mut analytic = vec![0.0; params.len()];
    residual_jacobian_row(&state, c, &params, &mut analytic)?;

    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for k in 0..params.len() {
        let mut dp = DVector::zeros(params.len());
        dp[k] = h;
        let rp = state.apply_delta(&params, &dp).residual(c)?;
        dp[k] = -h;
        let rm = state.apply_delta(&params, &dp).residual(c)?;
        let fd = (rp - rm) / (2.0 * h);
        let denom = analytic[k].abs().max(fd.abs()).max(1e-10);
        worst = worst.max((analytic[k] - fd).abs() / denom);
    }
    Some(worst)
}

/// Levenberg-Marquardt refinement of the truncated tangent-Sampson cost over
/// the parameter blocks enabled in `cfg.refine_blocks`. Returns the refined
/// model only when its final truncated cost does not exceed the input
/// model's; otherwise the input is returned unchanged.
pub fn lo_refine(
    model: &TwoViewModel,
    corrs: &[Correspondence],
    mask: &[bool],
    cfg: &RansacConfig,
    ctx: &RefineContext,
) -> Result<TwoViewModel, RobustError> {
    let thr_sq = ctx.score.threshold_sq;
    let n_inliers = mask.iter().filter(|m| **m).count();
    if n_inliers < 8 {
        return Ok(model.clone());
    }

    // Cost of the input model as scored by RANSAC (its own F).
    let (_, _, initial_cost) = score_with_cost(model, corrs, mask, thr_sq);

    let mut state = starting_state(model, corrs, mask, ctx)?;
    let params = active_params(&cfg.refine_blocks, ctx.shared_intrinsics);
    if params.is_empty() {
        return Ok(model.clone());
    }

    let masked: Vec<Correspondence> = corrs
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(c, _)| *c)
        .collect();
    let m = masked.len();
    let p = params.len();

    let mut cost = state_cost(&state, corrs, mask, thr_sq);
    let mut damping = 1e-3;
    let mut jac = DMatrix::zeros(m, p);
    let mut res = DVector::zeros(m);

    for _ in 0..cfg.lo_max_lm_iterations {
        // Residuals and Jacobian; truncated points contribute a constant
        // loss and a zero row.
        let mut row = vec![0.0; p];
        for (i, c) in masked.iter().enumerate() {
            row.iter_mut().for_each(|v| *v = 0.0);
            match residual_jacobian_row(&state, c, &params, &mut row) {
                Some(r) if r * r < thr_sq => {
                    res[i] = r;
                    for (j, v) in row.iter().enumerate() {
                        jac[(i, j)] = *v;
                    }
                }
                _ => {
                    res[i] = 0.0;
                    for j in 0..p {
                        jac[(i, j)] = 0.0;
                    }
                }
            }
        }

        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &res;
        let mut accepted = false;
        for _ in 0..8 {
            let lhs = &jtj + DMatrix::identity(p, p) * damping;
            let Some(delta) = lhs.lu().solve(&(-&jtr)) else {
                damping *= 10.0;
                continue;
            };
            let trial = state.apply_delta(&params, &delta);
            let trial_cost = state_cost(&trial, corrs, mask, thr_sq);
            if trial_cost < cost {
                let rel_drop = (cost - trial_cost) / cost.max(1e-300);
                let step = delta.norm();
                state = trial;
                cost = trial_cost;
                damping = (damping / 10.0).max(1e-12);
                accepted = true;
                if rel_drop < 1e-10 || step < 1e-12 {
                    return finish(model, &state, initial_cost, corrs, mask, thr_sq);
                }
                break;
            }
            damping *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    finish(model, &state, initial_cost, corrs, mask, thr_sq)
}

fn finish(
    input: &TwoViewModel,
    state: &ParamState,
    initial_cost: f64,
    corrs: &[Correspondence],
    mask: &[bool],
    thr_sq: f64,
) -> Result<TwoViewModel, RobustError> {
    let Ok(refined) = model_from_state(state) else {
        return Ok(input.clone());
    };
    let (_, _, final_cost) = score_with_cost(&refined, corrs, mask, thr_sq);
    if final_cost <= initial_cost {
        Ok(refined)
    } else {
        Ok(input.clone())
    }
}

/// Truncated cost of a full model over the masked points (uses the model's
/// own fundamental matrix, as the RANSAC scorer does).
fn score_with_cost(
    model: &TwoViewModel,
    corrs: &[Correspondence],
    mask: &[bool],
    thr_sq: f64,
) -> (f64, usize, f64) {
    let mut cost = 0.0;
    let mut inliers = 0;
    for (c, m) in corrs.iter().zip(mask) {
        if !*m {
            continue;
        }
        let loss = crate::geometry::tangent_sampson_error(c, model)
            .map(|e| e.min(thr_sq))
            .unwrap_or(thr_sq);
        if loss < thr_sq {
            inliers += 1;
        }
        cost += loss;
    }
    (0.0, inliers, cost)
}
