//! Synthetic benchmark harness: scenario generation (wild / small / visible
//! distortion), the pose and intrinsics metric suite, and AVG / MED / AUC@10
//! aggregation. Pairs are generated and evaluated independently with per-pair
//! seeds, so the harness can fan out over a thread pool without changing
//! results.

use nalgebra::{Matrix3, Vector3};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{
    distort, CameraModel, Correspondence, DivisionModel, ImageDims, NormalizedPoint, RelativePose,
    TwoViewModel,
};
use crate::robust::RansacResult;

/// Sentinel recorded for a metric when a method returns no usable estimate:
/// 180 degrees for pose errors, 10.0 for the intrinsics errors.
pub const POSE_SENTINEL_DEG: f64 = 180.0;
pub const INTRINSICS_SENTINEL: f64 = 10.0;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("empty input")]
    EmptyInput,
}

/// Synthetic scenario family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    /// Wild: uniform undistortion on [-1.5, 0] with a linear ramp down to
    /// half density on [-1.8, -1.5].
    A,
    /// Small distortion: uniform on [-0.3, 0].
    B,
    /// Visible distortion: uniform on [-1.8, -0.5].
    C,
}

/// Full specification of one synthetic run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub shared_lambda: bool,
    pub pairs: usize,
    pub points_per_pair: usize,
    pub noise_px: f64,
    pub outlier_fraction: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.pairs == 0 || self.points_per_pair == 0 {
            return Err(BenchError::EmptyInput);
        }
        Ok(())
    }
}

/// Ground truth carried with each generated pair. `lambda_known` is false for
/// ingested dataset pairs whose records omit the undistortion parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub pose: RelativePose,
    pub cam1: CameraModel,
    pub cam2: CameraModel,
    pub lambda_known: bool,
}

/// Per-pair metric record. `eps_lambda` is `None` when the pair has no
/// ground-truth undistortion to compare against (such pairs contribute pose
/// metrics only); failed estimates carry the sentinels and are flagged.
#[derive(Debug, Clone, PartialEq)]
pub struct PairEvaluation {
    pub rot_err_deg: f64,
    pub trans_err_deg: f64,
    pub pose_err_deg: f64,
    pub eps_lambda: Option<f64>,
    pub xi_focal: f64,
    pub runtime: f64,
    pub failed: bool,
}

impl PairEvaluation {
    /// Worst-case record for a method that produced no model.
    pub fn failure(runtime: f64, lambda_known: bool) -> Self {
        Self {
            rot_err_deg: POSE_SENTINEL_DEG,
            trans_err_deg: POSE_SENTINEL_DEG,
            pose_err_deg: POSE_SENTINEL_DEG,
            eps_lambda: lambda_known.then_some(INTRINSICS_SENTINEL),
            xi_focal: INTRINSICS_SENTINEL,
            runtime,
            failed: true,
        }
    }
}

/// Aggregated metrics over a run, mirroring the benchmark table columns.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateReport {
    pub avg_pose: f64,
    pub med_pose: f64,
    pub auc_at_10: f64,
    pub avg_eps: f64,
    pub med_eps: f64,
    pub avg_xi: f64,
    pub med_xi: f64,
    pub avg_runtime: f64,
    pub pairs: usize,
    pub failures: usize,
}

/// Draws an undistortion parameter from the scenario's distribution.
pub fn sample_lambda(kind: ScenarioKind, rng: &mut StdRng) -> f64 {
    match kind {
        ScenarioKind::B => rng.random_range(-0.3..0.0),
        ScenarioKind::C => rng.random_range(-1.8..-0.5),
        ScenarioKind::A => {
            // Uniform mass 1.5 h on [-1.5, 0]; ramp from h down to h/2 on
            // [-1.8, -1.5] carries 0.225 h; total 1.725 h.
            const P_UNIFORM: f64 = 1.5 / 1.725;
            let u: f64 = rng.random_range(0.0..1.0);
            if u < P_UNIFORM {
                -1.5 + 1.5 * (u / P_UNIFORM)
            } else {
                // Inverse CDF of the normalized ramp density (1 + s) / 1.5 on
                // s in [0, 1], s = (lambda + 1.8) / 0.3 (density grows toward
                // -1.5).
                let v = (u - P_UNIFORM) / (1.0 - P_UNIFORM);
                let s = -1.0 + (1.0 + 3.0 * v).sqrt();
                -1.8 + 0.3 * s
            }
        }
    }
}

/// Analytic CDF of [`sample_lambda`], used by the distribution tests.
pub fn lambda_cdf(kind: ScenarioKind, x: f64) -> f64 {
    match kind {
        ScenarioKind::B => ((x + 0.3) / 0.3).clamp(0.0, 1.0),
        ScenarioKind::C => ((x + 1.8) / 1.3).clamp(0.0, 1.0),
        ScenarioKind::A => {
            if x <= -1.8 {
                0.0
            } else if x <= -1.5 {
                // ramp mass: integral of h (1 + s) / 2 over [0, s], dx = 0.3 ds
                let s = (x + 1.8) / 0.3;
                0.15 * (s + s * s / 2.0) / 1.725
            } else if x <= 0.0 {
                (0.225 + (x + 1.5)) / 1.725
            } else {
                1.0
            }
        }
    }
}

const SCENE_DIMS: u32 = 1000;
const FOCAL_RANGE: (f64, f64) = (0.6, 1.5);
const DEPTH_RANGE: (f64, f64) = (4.0, 8.0);
const BASELINE_RATIO: (f64, f64) = (0.05, 0.5);

/// Generates one synthetic pair: random pose with a baseline-to-depth ratio
/// in `[0.05, 0.5]`, pinhole projection with a random focal, forward
/// distortion, Gaussian pixel noise, and uniform outlier replacement.
pub fn generate_pair(
    spec: &ScenarioSpec,
    rng: &mut StdRng,
) -> (Vec<Correspondence>, GroundTruth, ImageDims, ImageDims) {
    let lambda1 = sample_lambda(spec.kind, rng);
    let lambda2 = if spec.shared_lambda {
        lambda1
    } else {
        sample_lambda(spec.kind, rng)
    };
    let f1 = rng.random_range(FOCAL_RANGE.0..FOCAL_RANGE.1);
    let f2 = if spec.shared_lambda {
        f1
    } else {
        rng.random_range(FOCAL_RANGE.0..FOCAL_RANGE.1)
    };
    generate_pair_with(
        spec.points_per_pair,
        spec.noise_px,
        spec.outlier_fraction,
        (lambda1, lambda2),
        (f1, f2),
        rng,
    )
}

/// Same generator with fixed intrinsics instead of scenario-sampled ones.
pub fn generate_pair_with(
    points_per_pair: usize,
    noise_px: f64,
    outlier_fraction: f64,
    lambdas: (f64, f64),
    focals: (f64, f64),
    rng: &mut StdRng,
) -> (Vec<Correspondence>, GroundTruth, ImageDims, ImageDims) {
    let dims = ImageDims::new(SCENE_DIMS, SCENE_DIMS).expect("static dims");
    let noise_sigma = noise_px / dims.longer_side();
    let noise = Normal::new(0.0, noise_sigma.max(1e-300)).expect("valid sigma");

    let (lambda1, lambda2) = lambdas;
    let (f1, f2) = focals;
    let cam1 = CameraModel::new(f1, DivisionModel::new(lambda1)).expect("positive focal");
    let cam2 = CameraModel::new(f2, DivisionModel::new(lambda2)).expect("positive focal");

    'pose: loop {
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if axis.norm() < 1e-3 {
            continue;
        }
        let angle = rng.random_range(0.02..0.3);
        let rotation =
            nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle)
                .into_inner();
        let depth_mid = 0.5 * (DEPTH_RANGE.0 + DEPTH_RANGE.1);
        let baseline = rng.random_range(BASELINE_RATIO.0..BASELINE_RATIO.1) * depth_mid;
        let t_dir = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-0.4..0.4),
        );
        if t_dir.norm() < 1e-3 {
            continue;
        }
        let t = t_dir.normalize() * baseline;
        let Ok(pose) = RelativePose::new(rotation, t) else {
            continue;
        };

        let mut clean = Vec::with_capacity(points_per_pair);
        let mut attempts = 0usize;
        while clean.len() < points_per_pair {
            attempts += 1;
            if attempts > points_per_pair * 200 {
                continue 'pose; // unlucky pose, too little covisibility
            }
            let p1u = NormalizedPoint::new(
                rng.random_range(-0.45..0.45),
                rng.random_range(-0.45..0.45),
            );
            let z = rng.random_range(DEPTH_RANGE.0..DEPTH_RANGE.1);
            let x = Vector3::new(z * p1u.x / f1, z * p1u.y / f1, z);
            let x2 = rotation * x + t;
            if x2.z <= 0.1 {
                continue;
            }
            let p2u = NormalizedPoint::new(f2 * x2.x / x2.z, f2 * x2.y / x2.z);
            if p2u.x.abs() > 0.45 || p2u.y.abs() > 0.45 {
                continue;
            }
            let (Ok(p1), Ok(p2)) = (distort(p1u, cam1.division), distort(p2u, cam2.division))
            else {
                continue;
            };
            clean.push((p1, p2));
        }

        let jitter = |rng: &mut StdRng| if noise_px > 0.0 { noise.sample(rng) } else { 0.0 };
        let mut corrs: Vec<Correspondence> = clean
            .iter()
            .map(|(p1, p2)| {
                let n1 = NormalizedPoint::new(p1.x + jitter(rng), p1.y + jitter(rng));
                let n2 = NormalizedPoint::new(p2.x + jitter(rng), p2.y + jitter(rng));
                Correspondence::new(n1, n2).expect("finite noisy point")
            })
            .collect();

        // Uniform outlier replacement of the second point, fixed count.
        let n_out = (outlier_fraction * corrs.len() as f64).round() as usize;
        let mut order: Vec<usize> = (0..corrs.len()).collect();
        for i in 0..n_out.min(corrs.len()) {
            let j = rng.random_range(i..order.len());
            order.swap(i, j);
            let idx = order[i];
            corrs[idx].p2 = NormalizedPoint::new(
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
            );
        }

        return (
            corrs,
            GroundTruth {
                pose,
                cam1,
                cam2,
                lambda_known: true,
            },
            dims,
            dims,
        );
    }
}

/// Rotation error in degrees: angle of the aligning rotation.
pub fn rotation_error(r_gt: &Matrix3<f64>, r_est: &Matrix3<f64>) -> f64 {
    let tr = (r_gt * r_est.transpose()).trace();
    (((tr - 1.0) / 2.0).clamp(-1.0, 1.0)).acos().to_degrees()
}

/// Translation error in degrees: angle between the direction vectors; the
/// sign is meaningful (cheirality already fixed it), so antipodal directions
/// score 180.
pub fn translation_error(t_gt: &Vector3<f64>, t_est: &Vector3<f64>) -> f64 {
    (t_gt.dot(t_est) / (t_gt.norm() * t_est.norm()))
        .clamp(-1.0, 1.0)
        .acos()
        .to_degrees()
}

/// Builds the full per-pair metric record for an estimate against ground
/// truth. Missing estimate fields record sentinels and set the failure flag.
pub fn metric_errors(
    gt: &GroundTruth,
    est: &TwoViewModel,
    shared: bool,
    runtime: f64,
) -> PairEvaluation {
    let (rot, trans, failed_pose) = match &est.pose {
        Some(pose) => (
            rotation_error(&gt.pose.rotation, &pose.rotation),
            translation_error(
                &gt.pose.translation.into_inner(),
                &pose.translation.into_inner(),
            ),
            false,
        ),
        None => (POSE_SENTINEL_DEG, POSE_SENTINEL_DEG, true),
    };

    let eps = if gt.lambda_known {
        let e1 = (gt.cam1.division.lambda - est.cam1.division.lambda).abs();
        let e2 = (gt.cam2.division.lambda - est.cam2.division.lambda).abs();
        Some(if shared { e1 } else { 0.5 * (e1 + e2) })
    } else {
        None
    };
    let x1 = (gt.cam1.focal - est.cam1.focal).abs() / gt.cam1.focal;
    let x2 = (gt.cam2.focal - est.cam2.focal).abs() / gt.cam2.focal;
    let xi = if shared { x1 } else { 0.5 * (x1 + x2) };

    PairEvaluation {
        rot_err_deg: rot,
        trans_err_deg: trans,
        pose_err_deg: rot.max(trans),
        eps_lambda: eps,
        xi_focal: xi,
        runtime,
        failed: failed_pose,
    }
}

/// Exact area under the empirical recall step curve up to `tau`, normalized
/// to [0, 1]: `(1 / (N tau)) * sum_{err_i < tau} (tau - err_i)`.
pub fn auc_at(errors: &[f64], tau: f64) -> Result<f64, BenchError> {
    if errors.is_empty() {
        return Err(BenchError::EmptyInput);
    }
    let n = errors.len() as f64;
    let sum: f64 = errors
        .iter()
        .filter(|e| **e < tau)
        .map(|e| tau - e)
        .sum();
    Ok(sum / (n * tau))
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Lower-middle median: element at index `(n - 1) / 2` of the sorted list.
fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v[(v.len() - 1) / 2]
}

/// Aggregates per-pair records; sentinel-flagged failures stay included.
/// Intrinsics-error fields aggregate over the pairs that carry them and are
/// NaN when no pair does.
pub fn aggregate(evals: &[PairEvaluation]) -> Result<AggregateReport, BenchError> {
    if evals.is_empty() {
        return Err(BenchError::EmptyInput);
    }
    let pose: Vec<f64> = evals.iter().map(|e| e.pose_err_deg).collect();
    let eps: Vec<f64> = evals.iter().filter_map(|e| e.eps_lambda).collect();
    let xi: Vec<f64> = evals.iter().map(|e| e.xi_focal).collect();
    let runtime: Vec<f64> = evals.iter().map(|e| e.runtime).collect();

    Ok(AggregateReport {
        avg_pose: mean(&pose),
        med_pose: median(&pose),
        auc_at_10: auc_at(&pose, 10.0)?,
        avg_eps: if eps.is_empty() { f64::NAN } else { mean(&eps) },
        med_eps: if eps.is_empty() { f64::NAN } else { median(&eps) },
        avg_xi: mean(&xi),
        med_xi: median(&xi),
        avg_runtime: mean(&runtime),
        pairs: evals.len(),
        failures: evals.iter().filter(|e| e.failed).count(),
    })
}

/// One benchmark input pair: correspondences, ground truth (pose always,
/// intrinsics possibly without lambda) and the image dimensions.
#[derive(Debug, Clone)]
pub struct BenchPair {
    pub corrs: Vec<Correspondence>,
    pub gt: GroundTruth,
    pub dims1: ImageDims,
    pub dims2: ImageDims,
}

/// Generates all pairs of a scenario with per-pair seeds `seed ^ index`,
/// reproducibly and independent of evaluation order.
pub fn generate_scenario(spec: &ScenarioSpec) -> Vec<BenchPair> {
    (0..spec.pairs)
        .map(|i| {
            let mut rng = StdRng::seed_from_u64(spec.seed ^ (i as u64));
            let (corrs, gt, dims1, dims2) = generate_pair(spec, &mut rng);
            BenchPair {
                corrs,
                gt,
                dims1,
                dims2,
            }
        })
        .collect()
}

/// Evaluates every pair with the supplied estimator on a bounded worker
/// pool. The estimator receives the pair and its index (for seed derivation)
/// and returns `None` when no model was found; results keep the input order,
/// so the outcome does not depend on the level of parallelism.
pub fn evaluate_pairs<F>(pairs: &[BenchPair], shared: bool, jobs: usize, estimator: F) -> Vec<PairEvaluation>
where
    F: Fn(&BenchPair, usize) -> Option<RansacResult> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| {
        pairs
            .par_iter()
            .enumerate()
            .map(|(i, pair)| {
                let started = std::time::Instant::now();
                match estimator(pair, i) {
                    Some(result) => {
                        metric_errors(&pair.gt, &result.model, shared, result.wall_time)
                    }
                    None => {
                        PairEvaluation::failure(
                            started.elapsed().as_secs_f64(),
                            pair.gt.lambda_known,
                        )
                    }
                }
            })
            .collect()
    })
}
