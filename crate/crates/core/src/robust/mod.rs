//! LO-RANSAC with the distortion-sampling strategy.
//!
//! Each iteration draws a minimal sample; for pinhole engines the sample is
//! undistorted with every candidate undistortion pair (all `k^2` combinations,
//! or the `k` diagonal pairs when the cameras share intrinsics) before the
//! solver runs; the 9-point engine consumes the raw distorted points once.
//! Models are scored with the truncated tangent-Sampson error, every new best
//! triggers Levenberg-Marquardt local optimization, and the final model is
//! polished over all of its inliers.

mod refine;

pub use refine::{jacobian_fd_max_rel_dev, lo_refine, RefineContext};

use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use thiserror::Error;

use crate::geometry::{
    tangent_sampson_error, undistort, Correspondence, DivisionModel, ImageDims, NormalizedPoint,
    TwoViewModel, LAMBDA_MAX, LAMBDA_MIN,
};
use crate::solvers::{
    eight_point_f, nine_point_f_lambda, project_essential, seven_point_f, SolverOutput,
};

/// Errors from the robust estimation loop.
#[derive(Debug, Error)]
pub enum RobustError {
    #[error("need at least {needed} correspondences, got {got}")]
    NotEnoughCorrespondences { needed: usize, got: usize },
    #[error("no valid model found within the iteration budget")]
    NoModelFound,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("model could not be decomposed for local optimization")]
    DecompositionFailed,
}

/// Per-camera candidate undistortion sets for the sampling strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingStrategy {
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    /// Force `lambda1 = lambda2`: iterate only the diagonal pairs.
    pub shared: bool,
}

impl SamplingStrategy {
    pub fn shared_set(lambdas: Vec<f64>) -> Self {
        Self {
            u1: lambdas.clone(),
            u2: lambdas,
            shared: true,
        }
    }

    pub fn validate(&self) -> Result<(), RobustError> {
        if self.u1.is_empty() || self.u2.is_empty() {
            return Err(RobustError::InvalidConfig(
                "sampling strategy needs nonempty candidate sets".into(),
            ));
        }
        if self.shared && self.u1 != self.u2 {
            return Err(RobustError::InvalidConfig(
                "shared sampling requires identical candidate sets".into(),
            ));
        }
        for l in self.u1.iter().chain(self.u2.iter()) {
            if !(LAMBDA_MIN..=LAMBDA_MAX).contains(l) {
                return Err(RobustError::InvalidConfig(format!(
                    "lambda candidate {l} outside [{LAMBDA_MIN}, {LAMBDA_MAX}]"
                )));
            }
        }
        Ok(())
    }
}

/// Externally supplied per-camera priors (e.g. from a single-image
/// calibration network). Gravity directions are carried but unused by the
/// in-scope solvers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PriorInjection {
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub focal1: Option<f64>,
    pub focal2: Option<f64>,
    pub gravity1: Option<[f64; 3]>,
    pub gravity2: Option<[f64; 3]>,
}

impl PriorInjection {
    pub fn validate(&self) -> Result<(), RobustError> {
        for l in [self.lambda1, self.lambda2].into_iter().flatten() {
            if !(LAMBDA_MIN..=LAMBDA_MAX).contains(&l) {
                return Err(RobustError::InvalidConfig(format!(
                    "prior lambda {l} outside the plausible range"
                )));
            }
        }
        for f in [self.focal1, self.focal2].into_iter().flatten() {
            if !(f.is_finite() && f > 0.0) {
                return Err(RobustError::InvalidConfig(format!(
                    "prior focal {f} must be positive"
                )));
            }
        }
        for g in [self.gravity1, self.gravity2].into_iter().flatten() {
            let n = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
            if (n - 1.0).abs() > 1e-6 {
                return Err(RobustError::InvalidConfig(
                    "prior gravity must be a unit vector".into(),
                ));
            }
        }
        Ok(())
    }
}

/// How the robust loop obtains undistortion (and optionally calibration) for
/// the pinhole engines.
#[derive(Debug, Clone, PartialEq)]
pub enum EstimationStrategy {
    Sampling(SamplingStrategy),
    Priors {
        priors: PriorInjection,
        shared: bool,
        /// Pre-divide by the prior focals and project the linear solution to
        /// the essential manifold (requires both focals present).
        calibrated: bool,
    },
}

/// Minimal solver run inside the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverEngine {
    SevenPoint,
    EightPoint,
    NinePointLambda,
}

impl SolverEngine {
    pub fn sample_size(&self) -> usize {
        match self {
            SolverEngine::SevenPoint => 7,
            SolverEngine::EightPoint => 8,
            SolverEngine::NinePointLambda => 9,
        }
    }
}

/// Which parameter blocks local optimization may move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefineBlocks {
    pub rotation: bool,
    pub translation: bool,
    pub focal1: bool,
    pub focal2: bool,
    pub lambda1: bool,
    pub lambda2: bool,
}

impl RefineBlocks {
    pub fn all() -> Self {
        Self {
            rotation: true,
            translation: true,
            focal1: true,
            focal2: true,
            lambda1: true,
            lambda2: true,
        }
    }

    /// Pose-only refinement.
    pub fn pose_only() -> Self {
        Self {
            rotation: true,
            translation: true,
            focal1: false,
            focal2: false,
            lambda1: false,
            lambda2: false,
        }
    }
}

impl Default for RefineBlocks {
    fn default() -> Self {
        Self::all()
    }
}

/// RANSAC schedule and refinement configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RansacConfig {
    pub max_iterations: usize,
    pub min_iterations: usize,
    pub confidence: f64,
    pub inlier_threshold_px: f64,
    pub seed: u64,
    pub refine_blocks: RefineBlocks,
    pub lo_max_lm_iterations: usize,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            min_iterations: 10,
            confidence: 0.99,
            inlier_threshold_px: 3.0,
            seed: 0,
            refine_blocks: RefineBlocks::all(),
            lo_max_lm_iterations: 25,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<(), RobustError> {
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(RobustError::InvalidConfig(
                "confidence must lie in (0, 1)".into(),
            ));
        }
        if self.inlier_threshold_px <= 0.0 {
            return Err(RobustError::InvalidConfig(
                "inlier threshold must be positive".into(),
            ));
        }
        if self.max_iterations == 0 {
            return Err(RobustError::InvalidConfig(
                "max_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Robust estimation result.
#[derive(Debug, Clone)]
pub struct RansacResult {
    pub model: TwoViewModel,
    pub inlier_mask: Vec<bool>,
    pub score: f64,
    pub iterations_run: usize,
    pub wall_time: f64,
}

impl RansacResult {
    pub fn inlier_count(&self) -> usize {
        self.inlier_mask.iter().filter(|m| **m).count()
    }
}

/// Truncation threshold in squared normalized units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedScore {
    pub threshold_sq: f64,
}

impl TruncatedScore {
    /// Converts a pixel threshold using the mean of the two normalization
    /// scales; for equally sized images this is exactly
    /// `(px / max(w, h))^2`.
    pub fn from_pixels(threshold_px: f64, dims1: ImageDims, dims2: ImageDims) -> Self {
        let scale = 0.5 * (dims1.longer_side() + dims2.longer_side());
        let t = threshold_px / scale;
        Self {
            threshold_sq: t * t,
        }
    }
}

/// MSAC-style truncated scoring: per-point loss `min(error, thr^2)`, score
/// `sum(thr^2 - loss)` (higher is better), inlier iff `error < thr^2`.
/// Degenerate per-point errors count as outliers.
pub fn score_model(
    model: &TwoViewModel,
    corrs: &[Correspondence],
    s: &TruncatedScore,
) -> (f64, Vec<bool>) {
    let thr = s.threshold_sq;
    let mut score = 0.0;
    let mut mask = Vec::with_capacity(corrs.len());
    for c in corrs {
        let err = tangent_sampson_error(c, model).unwrap_or(f64::INFINITY);
        let inlier = err < thr;
        if inlier {
            score += thr - err;
        }
        mask.push(inlier);
    }
    (score, mask)
}

/// Draws `k` distinct indices from `0..n` (partial Fisher-Yates).
fn draw_sample(rng: &mut StdRng, n: usize, k: usize, scratch: &mut Vec<usize>) -> Vec<usize> {
    scratch.clear();
    scratch.extend(0..n);
    for i in 0..k {
        let j = rng.random_range(i..n);
        scratch.swap(i, j);
    }
    scratch[..k].to_vec()
}

fn undistort_set(corrs: &[Correspondence], l1: f64, l2: f64) -> Option<Vec<Correspondence>> {
    let d1 = DivisionModel::new(l1);
    let d2 = DivisionModel::new(l2);
    let mut out = Vec::with_capacity(corrs.len());
    for c in corrs {
        let p1 = undistort(c.p1, d1).ok()?;
        let p2 = undistort(c.p2, d2).ok()?;
        out.push(Correspondence::new(p1, p2).ok()?);
    }
    Some(out)
}

fn scale_points(corrs: &[Correspondence], f1: f64, f2: f64) -> Vec<Correspondence> {
    corrs
        .iter()
        .map(|c| {
            Correspondence::new(
                NormalizedPoint::new(c.p1.x / f1, c.p1.y / f1),
                NormalizedPoint::new(c.p2.x / f2, c.p2.y / f2),
            )
            .expect("finite scaled point")
        })
        .collect()
}

/// Generates the candidate models for one minimal sample under the given
/// engine and strategy.
fn candidates_for_sample(
    engine: SolverEngine,
    strategy: &EstimationStrategy,
    sample: &[Correspondence],
) -> Vec<TwoViewModel> {
    let mut out = Vec::new();

    if engine == SolverEngine::NinePointLambda {
        if let Ok(SolverOutput { candidates }) = nine_point_f_lambda(sample) {
            out.extend(candidates);
        }
        return out;
    }

    let run_engine = |points: &[Correspondence]| -> Vec<TwoViewModel> {
        let solved = match engine {
            SolverEngine::SevenPoint => seven_point_f(points),
            SolverEngine::EightPoint => eight_point_f(points),
            SolverEngine::NinePointLambda => unreachable!(),
        };
        solved.map(|s| s.candidates).unwrap_or_default()
    };

    match strategy {
        EstimationStrategy::Sampling(s) => {
            let pairs: Vec<(f64, f64)> = if s.shared {
                s.u1.iter().map(|&l| (l, l)).collect()
            } else {
                s.u1.iter()
                    .flat_map(|&a| s.u2.iter().map(move |&b| (a, b)))
                    .collect()
            };
            for (l1, l2) in pairs {
                let Some(undist) = undistort_set(sample, l1, l2) else {
                    continue;
                };
                for mut m in run_engine(&undist) {
                    m.cam1.division = DivisionModel::new(l1);
                    m.cam2.division = DivisionModel::new(l2);
                    out.push(m);
                }
            }
        }
        EstimationStrategy::Priors {
            priors, calibrated, ..
        } => {
            let l1 = priors.lambda1.unwrap_or(0.0);
            let l2 = priors.lambda2.unwrap_or(0.0);
            let Some(undist) = undistort_set(sample, l1, l2) else {
                return out;
            };
            if *calibrated {
                let (Some(f1), Some(f2)) = (priors.focal1, priors.focal2) else {
                    return out;
                };
                let scaled = scale_points(&undist, f1, f2);
                for m in run_engine(&scaled) {
                    // Project onto the essential manifold, then fold the
                    // calibration back so the model scores on normalized
                    // distorted points.
                    let Ok(folded) = project_essential(m.fundamental.matrix(), f1, f2) else {
                        continue;
                    };
                    let mut model = m;
                    model.fundamental = folded;
                    model.cam1 = crate::geometry::CameraModel::new(f1, DivisionModel::new(l1))
                        .expect("validated prior focal");
                    model.cam2 = crate::geometry::CameraModel::new(f2, DivisionModel::new(l2))
                        .expect("validated prior focal");
                    out.push(model);
                }
            } else {
                for mut m in run_engine(&undist) {
                    m.cam1.division = DivisionModel::new(l1);
                    m.cam2.division = DivisionModel::new(l2);
                    if let Some(f1) = priors.focal1 {
                        m.cam1.focal = f1;
                    }
                    if let Some(f2) = priors.focal2 {
                        m.cam2.focal = f2;
                    }
                    out.push(m);
                }
            }
        }
    }
    out
}

fn model_is_plausible(m: &TwoViewModel) -> bool {
    m.cam1.division.is_plausible()
        && m.cam2.division.is_plausible()
        && m.cam1.focal > 0.0
        && m.cam2.focal > 0.0
}

/// Adaptive iteration bound from the best inlier ratio.
fn required_iterations(inlier_ratio: f64, sample_size: usize, confidence: f64) -> usize {
    if inlier_ratio <= 0.0 {
        return usize::MAX;
    }
    let w = inlier_ratio.min(1.0).powi(sample_size as i32);
    if w >= 1.0 - 1e-12 {
        return 0;
    }
    let denom = (1.0 - w).ln();
    if denom >= -1e-300 {
        return usize::MAX;
    }
    let need = ((1.0 - confidence).ln() / denom).ceil();
    if need.is_finite() && need >= 0.0 {
        need as usize
    } else {
        usize::MAX
    }
}

/// LO-RANSAC over precomputed correspondences. Deterministic for a fixed
/// seed and input order.
pub fn ransac_estimate(
    corrs: &[Correspondence],
    dims1: ImageDims,
    dims2: ImageDims,
    engine: SolverEngine,
    strategy: &EstimationStrategy,
    cfg: &RansacConfig,
) -> Result<RansacResult, RobustError> {
    let started = Instant::now();
    cfg.validate()?;
    let shared = match strategy {
        EstimationStrategy::Sampling(s) => {
            s.validate()?;
            s.shared
        }
        EstimationStrategy::Priors {
            priors,
            shared,
            calibrated,
        } => {
            priors.validate()?;
            if *calibrated && (priors.focal1.is_none() || priors.focal2.is_none()) {
                return Err(RobustError::InvalidConfig(
                    "calibrated prior strategy needs both focal priors".into(),
                ));
            }
            if *calibrated && engine != SolverEngine::EightPoint {
                return Err(RobustError::InvalidConfig(
                    "calibrated prior strategy runs the 8-point engine".into(),
                ));
            }
            *shared
        }
    };

    let sample_size = engine.sample_size();
    if corrs.len() < sample_size {
        return Err(RobustError::NotEnoughCorrespondences {
            needed: sample_size,
            got: corrs.len(),
        });
    }

    let score = TruncatedScore::from_pixels(cfg.inlier_threshold_px, dims1, dims2);
    let prior_focals = match strategy {
        EstimationStrategy::Priors { priors, .. } => match (priors.focal1, priors.focal2) {
            (Some(a), Some(b)) => Some((a, b)),
            _ => None,
        },
        _ => None,
    };
    let ctx = RefineContext {
        score,
        shared_intrinsics: shared,
        prior_focals,
    };

    let mut rng = StdRng::seed_from_u64(cfg.seed);
    let mut scratch = Vec::new();
    let mut best: Option<(f64, TwoViewModel, Vec<bool>)> = None;
    let mut iterations = 0usize;

    for iter in 0..cfg.max_iterations {
        iterations = iter + 1;
        let idx = draw_sample(&mut rng, corrs.len(), sample_size, &mut scratch);
        let sample: Vec<Correspondence> = idx.iter().map(|&i| corrs[i]).collect();

        for model in candidates_for_sample(engine, strategy, &sample) {
            if !model_is_plausible(&model) {
                continue;
            }
            let (s, mask) = score_model(&model, corrs, &score);
            let is_better = best.as_ref().map_or(s > 0.0, |(bs, _, _)| s > *bs);
            if !is_better {
                continue;
            }
            best = Some((s, model.clone(), mask.clone()));
            // Local optimization on every new best.
            if mask.iter().filter(|m| **m).count() >= 8 {
                if let Ok(refined) = lo_refine(&model, corrs, &mask, cfg, &ctx) {
                    let (rs, rmask) = score_model(&refined, corrs, &score);
                    if rs > best.as_ref().map(|(bs, _, _)| *bs).unwrap_or(0.0) {
                        best = Some((rs, refined, rmask));
                    }
                }
            }
        }

        if let Some((_, _, mask)) = &best {
            let ratio = mask.iter().filter(|m| **m).count() as f64 / corrs.len() as f64;
            let needed =
                required_iterations(ratio, sample_size, cfg.confidence).max(cfg.min_iterations);
            if iterations >= needed {
                break;
            }
        }
    }

    let Some((s, model, mask)) = best else {
        return Err(RobustError::NoModelFound);
    };

    // Final polish over all inliers of the best model.
    let (s, model, mask) = match lo_refine(&model, corrs, &mask, cfg, &ctx) {
        Ok(polished) => {
            let (ps, pmask) = score_model(&polished, corrs, &score);
            if ps >= s {
                (ps, polished, pmask)
            } else {
                (s, model, mask)
            }
        }
        Err(_) => (s, model, mask),
    };

    // The returned model always carries a pose when one is extractable, even
    // if local optimization never ran (too few inliers). The fundamental is
    // rebuilt from the decomposed pose so the reported model stays
    // self-consistent, and the mask and score are recomputed for it.
    let (s, model, mask) = if model.pose.is_none() {
        match decomposed_model(&model, corrs, &mask, &ctx) {
            Some(decomposed) => {
                let (ds, dmask) = score_model(&decomposed, corrs, &score);
                (ds, decomposed, dmask)
            }
            None => (s, model, mask),
        }
    } else {
        (s, model, mask)
    };

    Ok(RansacResult {
        model,
        inlier_mask: mask,
        score: s,
        iterations_run: iterations,
        wall_time: started.elapsed().as_secs_f64(),
    })
}

/// Best-effort decomposition of a model that has only a fundamental matrix:
/// rank-2 projection, closed-form focals (prior fallback), cheirality-voted
/// pose over the inliers, and the fundamental rebuilt from the pose. `None`
/// when no pose is extractable.
fn decomposed_model(
    model: &TwoViewModel,
    corrs: &[Correspondence],
    mask: &[bool],
    ctx: &RefineContext,
) -> Option<TwoViewModel> {
    use crate::geometry::{fundamental_from_pose, CameraModel};
    use crate::solvers::{decompose_to_pose, focal_bougnoux, focal_sturm_shared, project_rank2};
    let f_r2 = project_rank2(model.fundamental.matrix()).ok()?;
    let focals = if ctx.shared_intrinsics {
        focal_sturm_shared(&f_r2)
            .map(|f| (f, f))
            .or_else(|_| focal_bougnoux(&f_r2))
    } else {
        focal_bougnoux(&f_r2).or_else(|_| focal_sturm_shared(&f_r2).map(|f| (f, f)))
    };
    let (f1, f2) = focals.ok().or(ctx.prior_focals)?;
    let inliers: Vec<Correspondence> = corrs
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(c, _)| *c)
        .collect();
    let vote_set = if inliers.is_empty() { corrs } else { &inliers };
    let pose = decompose_to_pose(
        &f_r2,
        f1,
        f2,
        vote_set,
        model.cam1.division,
        model.cam2.division,
    )
    .ok()?;
    let cam1 = CameraModel::new(f1, model.cam1.division).ok()?;
    let cam2 = CameraModel::new(f2, model.cam2.division).ok()?;
    let fundamental = fundamental_from_pose(&pose, &cam1, &cam2).ok()?;
    Some(TwoViewModel {
        fundamental,
        cam1,
        cam2,
        pose: Some(pose),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::tests_support::{random_shared_focal_scene, random_two_view_scene};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Normal};

    fn dims() -> ImageDims {
        ImageDims::new(1000, 1000).unwrap()
    }

    #[test]
    fn threshold_conversion_matches_contract() {
        let s = TruncatedScore::from_pixels(3.0, dims(), dims());
        let want = (3.0f64 / 1000.0) * (3.0 / 1000.0);
        assert!((s.threshold_sq - want).abs() < 1e-18);
    }

    #[test]
    fn score_all_exact_inliers() {
        let mut rng = StdRng::seed_from_u64(71);
        let (corrs, model) = random_two_view_scene(&mut rng, -0.5, -0.5, 40);
        let s = TruncatedScore::from_pixels(3.0, dims(), dims());
        let (score, mask) = score_model(&model, &corrs, &s);
        assert!(mask.iter().all(|m| *m));
        let expected = s.threshold_sq * corrs.len() as f64;
        assert!((score - expected).abs() < 1e-9 * expected);
    }

    #[test]
    fn score_all_outliers_is_zero() {
        let mut rng = StdRng::seed_from_u64(72);
        let (corrs, model) = random_two_view_scene(&mut rng, 0.0, 0.0, 40);
        // Pair each p1 with a far-away random p2 so nothing matches.
        let broken: Vec<Correspondence> = corrs
            .iter()
            .map(|c| {
                Correspondence::new(
                    c.p1,
                    NormalizedPoint::new(
                        rng.random_range(-0.5..0.5),
                        rng.random_range(-0.5..0.5),
                    ),
                )
                .unwrap()
            })
            .collect();
        let s = TruncatedScore::from_pixels(0.5, dims(), dims());
        let (score, mask) = score_model(&model, &broken, &s);
        let inliers = mask.iter().filter(|m| **m).count();
        assert!(inliers <= 2, "random points still matched: {inliers}");
        assert!(score <= s.threshold_sq * 2.0);
    }

    #[test]
    fn score_recovers_planted_inlier_ratio() {
        let mut rng = StdRng::seed_from_u64(73);
        let noise = Normal::new(0.0, 1e-3).unwrap();
        let (mut corrs, model) = random_two_view_scene(&mut rng, -0.6, -0.6, 500);
        for c in corrs.iter_mut() {
            c.p1.x += noise.sample(&mut rng);
            c.p1.y += noise.sample(&mut rng);
            c.p2.x += noise.sample(&mut rng);
            c.p2.y += noise.sample(&mut rng);
        }
        // Replace 30% with uniform outliers.
        let n = corrs.len();
        for c in corrs.iter_mut().take(n * 3 / 10) {
            c.p2 =
                NormalizedPoint::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
        }
        let s = TruncatedScore::from_pixels(3.0, dims(), dims());
        let (_, mask) = score_model(&model, &corrs, &s);
        let ratio = mask.iter().filter(|m| **m).count() as f64 / n as f64;
        assert!(
            (ratio - 0.7).abs() < 0.05,
            "recovered inlier ratio {ratio} not within 5% of 0.7"
        );
    }

    #[test]
    fn perfect_data_terminates_early() {
        let mut rng = StdRng::seed_from_u64(74);
        let (corrs, model) = random_shared_focal_scene(&mut rng, 0.0, 100);
        let cfg = RansacConfig {
            seed: 9,
            min_iterations: 1,
            ..RansacConfig::default()
        };
        let strategy = EstimationStrategy::Sampling(SamplingStrategy::shared_set(vec![0.0]));
        let result = ransac_estimate(
            &corrs,
            dims(),
            dims(),
            SolverEngine::SevenPoint,
            &strategy,
            &cfg,
        )
        .unwrap();
        assert!(result.iterations_run < cfg.max_iterations);
        assert_eq!(result.inlier_count(), corrs.len());
        // Pose error against ground truth below 1e-3 degrees.
        let gt = model.pose.as_ref().unwrap();
        let est = result.model.pose.as_ref().unwrap();
        let fro = (est.rotation - gt.rotation).norm();
        let rot_deg = (2.0 * (fro / (2.0 * 2.0f64.sqrt())).clamp(0.0, 1.0).asin()).to_degrees();
        assert!(rot_deg < 1e-3, "rotation error {rot_deg} deg");
    }

    #[test]
    fn recovers_distortion_in_scenario_like_setup() {
        // Visible distortion, noise, outliers: the sampling strategy with a
        // bracketing candidate set must land near the true lambda.
        let mut rng = StdRng::seed_from_u64(75);
        let noise = Normal::new(0.0, 1e-3).unwrap();
        let (mut corrs, model) = random_shared_focal_scene(&mut rng, -0.9, 300);
        for c in corrs.iter_mut() {
            c.p1.x += noise.sample(&mut rng);
            c.p1.y += noise.sample(&mut rng);
            c.p2.x += noise.sample(&mut rng);
            c.p2.y += noise.sample(&mut rng);
        }
        let n = corrs.len();
        for i in (0..n).step_by(4) {
            corrs[i].p2 =
                NormalizedPoint::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
        }
        let cfg = RansacConfig {
            seed: 1234,
            max_iterations: 300,
            ..RansacConfig::default()
        };
        let strategy =
            EstimationStrategy::Sampling(SamplingStrategy::shared_set(vec![-0.6, -0.9, -1.2]));
        let result = ransac_estimate(
            &corrs,
            dims(),
            dims(),
            SolverEngine::SevenPoint,
            &strategy,
            &cfg,
        )
        .unwrap();
        let gt_lambda = model.cam1.division.lambda;
        let est_lambda = result.model.cam1.division.lambda;
        assert!(
            (est_lambda - gt_lambda).abs() < 0.15,
            "lambda {est_lambda} vs truth {gt_lambda}"
        );
        let gt = model.pose.as_ref().unwrap();
        let est = result.model.pose.as_ref().unwrap();
        let fro = (est.rotation - gt.rotation).norm();
        let rot_deg = (2.0 * (fro / (2.0 * 2.0f64.sqrt())).clamp(0.0, 1.0).asin()).to_degrees();
        assert!(rot_deg < 2.0, "rotation error {rot_deg}");
    }

    #[test]
    fn reproducible_for_fixed_seed() {
        let mut rng = StdRng::seed_from_u64(76);
        let (corrs, _) = random_two_view_scene(&mut rng, -0.4, -0.4, 120);
        let cfg = RansacConfig {
            seed: 42,
            max_iterations: 50,
            ..RansacConfig::default()
        };
        let strategy = EstimationStrategy::Sampling(SamplingStrategy::shared_set(vec![0.0, -0.6]));
        let a = ransac_estimate(
            &corrs,
            dims(),
            dims(),
            SolverEngine::SevenPoint,
            &strategy,
            &cfg,
        )
        .unwrap();
        let b = ransac_estimate(
            &corrs,
            dims(),
            dims(),
            SolverEngine::SevenPoint,
            &strategy,
            &cfg,
        )
        .unwrap();
        assert_eq!(a.inlier_mask, b.inlier_mask);
        assert_eq!(a.model.fundamental.matrix(), b.model.fundamental.matrix());
        assert_eq!(a.score, b.score);
    }

    #[test]
    fn nine_point_engine_runs_on_raw_points() {
        let mut rng = StdRng::seed_from_u64(77);
        let (corrs, model) = random_shared_focal_scene(&mut rng, -0.8, 150);
        let cfg = RansacConfig {
            seed: 5,
            max_iterations: 200,
            ..RansacConfig::default()
        };
        // Strategy is ignored by the 9-point engine beyond the shared flag.
        let strategy = EstimationStrategy::Sampling(SamplingStrategy::shared_set(vec![0.0]));
        let result = ransac_estimate(
            &corrs,
            dims(),
            dims(),
            SolverEngine::NinePointLambda,
            &strategy,
            &cfg,
        )
        .unwrap();
        let gt_lambda = model.cam1.division.lambda;
        assert!(
            (result.model.cam1.division.lambda - gt_lambda).abs() < 0.1,
            "lambda {} vs {gt_lambda}",
            result.model.cam1.division.lambda
        );
    }

    #[test]
    fn not_enough_correspondences() {
        let mut rng = StdRng::seed_from_u64(78);
        let (corrs, _) = random_two_view_scene(&mut rng, 0.0, 0.0, 6);
        let cfg = RansacConfig::default();
        let strategy = EstimationStrategy::Sampling(SamplingStrategy::shared_set(vec![0.0]));
        let err = ransac_estimate(
            &corrs,
            dims(),
            dims(),
            SolverEngine::SevenPoint,
            &strategy,
            &cfg,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            RobustError::NotEnoughCorrespondences { needed: 7, got: 6 }
        ));
    }

    #[test]
    fn collinear_points_produce_no_model() {
        // Ten correspondences on a line: every minimal sample is degenerate.
        let corrs: Vec<Correspondence> = (0..10)
            .map(|i| {
                let t = i as f64 / 10.0 - 0.45;
                Correspondence::new(
                    NormalizedPoint::new(t, 0.2 * t),
                    NormalizedPoint::new(t + 0.01, 0.2 * t),
                )
                .unwrap()
            })
            .collect();
        let cfg = RansacConfig {
            max_iterations: 30,
            ..RansacConfig::default()
        };
        let strategy = EstimationStrategy::Sampling(SamplingStrategy::shared_set(vec![0.0]));
        let out = ransac_estimate(
            &corrs,
            dims(),
            dims(),
            SolverEngine::SevenPoint,
            &strategy,
            &cfg,
        );
        assert!(matches!(out, Err(RobustError::NoModelFound)));
    }

    #[test]
    fn non_shared_sampling_enumerates_all_pairs() {
        // Different distortions per camera: the k x k combination that
        // matches the truth must win, recovering both lambdas.
        let mut rng = StdRng::seed_from_u64(83);
        let (corrs, model) = random_two_view_scene(&mut rng, -0.9, -0.2, 250);
        let cfg = RansacConfig {
            seed: 17,
            max_iterations: 200,
            ..RansacConfig::default()
        };
        let strategy = EstimationStrategy::Sampling(SamplingStrategy {
            u1: vec![0.0, -0.9],
            u2: vec![0.0, -0.2],
            shared: false,
        });
        let result = ransac_estimate(
            &corrs,
            dims(),
            dims(),
            SolverEngine::SevenPoint,
            &strategy,
            &cfg,
        )
        .unwrap();
        let l1 = result.model.cam1.division.lambda;
        let l2 = result.model.cam2.division.lambda;
        let gt1 = model.cam1.division.lambda;
        let gt2 = model.cam2.division.lambda;
        assert!((l1 - gt1).abs() < 0.15, "lambda1 {l1} vs {gt1}");
        assert!((l2 - gt2).abs() < 0.15, "lambda2 {l2} vs {gt2}");
    }

    #[test]
    fn prior_strategy_uses_injected_lambda() {
        let mut rng = StdRng::seed_from_u64(79);
        let (corrs, _) = random_two_view_scene(&mut rng, -0.7, -0.7, 100);
        let cfg = RansacConfig {
            seed: 3,
            max_iterations: 100,
            ..RansacConfig::default()
        };
        let strategy = EstimationStrategy::Priors {
            priors: PriorInjection {
                lambda1: Some(-0.7),
                lambda2: Some(-0.7),
                ..PriorInjection::default()
            },
            shared: false,
            calibrated: false,
        };
        let result = ransac_estimate(
            &corrs,
            dims(),
            dims(),
            SolverEngine::SevenPoint,
            &strategy,
            &cfg,
        )
        .unwrap();
        assert!(result.inlier_count() as f64 >= 0.9 * corrs.len() as f64);
    }

    #[test]
    fn calibrated_prior_strategy_projects_to_essential() {
        let mut rng = StdRng::seed_from_u64(80);
        let (corrs, model) = random_two_view_scene(&mut rng, -0.5, -0.5, 100);
        let cfg = RansacConfig {
            seed: 11,
            max_iterations: 100,
            refine_blocks: RefineBlocks::pose_only(),
            ..RansacConfig::default()
        };
        let strategy = EstimationStrategy::Priors {
            priors: PriorInjection {
                lambda1: Some(model.cam1.division.lambda),
                lambda2: Some(model.cam2.division.lambda),
                focal1: Some(model.cam1.focal),
                focal2: Some(model.cam2.focal),
                ..PriorInjection::default()
            },
            shared: false,
            calibrated: true,
        };
        let result = ransac_estimate(
            &corrs,
            dims(),
            dims(),
            SolverEngine::EightPoint,
            &strategy,
            &cfg,
        )
        .unwrap();
        assert!(result.inlier_count() as f64 >= 0.9 * corrs.len() as f64);
        let gt = model.pose.as_ref().unwrap();
        let est = result.model.pose.as_ref().unwrap();
        let fro = (est.rotation - gt.rotation).norm();
        let rot_deg = (2.0 * (fro / (2.0 * 2.0f64.sqrt())).clamp(0.0, 1.0).asin()).to_degrees();
        assert!(rot_deg < 0.5, "rotation error {rot_deg}");
    }

    #[test]
    fn rejects_invalid_configs() {
        let strategy = EstimationStrategy::Sampling(SamplingStrategy {
            u1: vec![0.0],
            u2: vec![-3.5],
            shared: false,
        });
        let mut rng = StdRng::seed_from_u64(81);
        let (corrs, _) = random_two_view_scene(&mut rng, 0.0, 0.0, 30);
        let err = ransac_estimate(
            &corrs,
            dims(),
            dims(),
            SolverEngine::SevenPoint,
            &strategy,
            &RansacConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, RobustError::InvalidConfig(_)));
    }

    #[test]
    fn sampling_zero_matches_pinhole_pipeline_statistically() {
        // U = {0} on lambda = 0 data must behave like the plain pinhole
        // pipeline: compare final scores across seeds.
        let mut rng = StdRng::seed_from_u64(82);
        let noise = Normal::new(0.0, 5e-4).unwrap();
        let mut diffs = Vec::new();
        for seed in 0..8u64 {
            let (mut corrs, _) = random_two_view_scene(&mut rng, 0.0, 0.0, 120);
            for c in corrs.iter_mut() {
                c.p1.x += noise.sample(&mut rng);
                c.p2.y += noise.sample(&mut rng);
            }
            let cfg = RansacConfig {
                seed,
                max_iterations: 60,
                ..RansacConfig::default()
            };
            let zero = EstimationStrategy::Sampling(SamplingStrategy::shared_set(vec![0.0]));
            let a = ransac_estimate(
                &corrs,
                dims(),
                dims(),
                SolverEngine::SevenPoint,
                &zero,
                &cfg,
            )
            .unwrap();
            // plain pinhole: priors with lambda 0 and no focals
            let plain = EstimationStrategy::Priors {
                priors: PriorInjection::default(),
                shared: false,
                calibrated: false,
            };
            let b = ransac_estimate(
                &corrs,
                dims(),
                dims(),
                SolverEngine::SevenPoint,
                &plain,
                &cfg,
            )
            .unwrap();
            diffs.push((a.score - b.score).abs() / a.score.max(b.score));
        }
        diffs.sort_by(f64::total_cmp);
        let median = diffs[diffs.len() / 2];
        assert!(
            median < 0.05,
            "score distributions diverge: median diff {median}"
        );
    }
}
