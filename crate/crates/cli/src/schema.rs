//! Line-delimited JSON file schemas for precomputed correspondences and
//! per-image priors, plus conversion into the core benchmark types.
//!
//! Pixel-coordinate matches are normalized internally (image center
//! subtracted, divided by the longer side); ground-truth focals are expected
//! pre-normalized the same way.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use radipose_core::bench::{BenchPair, GroundTruth};
use radipose_core::geometry::{
    normalize, CameraModel, Correspondence, DivisionModel, ImageDims, RelativePose,
};

/// Minimum number of matches for a pair to be retained by ingestion.
pub const MIN_MATCHES: usize = 20;

/// One benchmark pair as stored on disk (one JSON object per line).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairRecord {
    pub pair_id: String,
    /// Image identifiers used to resolve per-image priors; optional for
    /// runs without prior-based methods.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image1_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image2_id: Option<String>,
    pub dims1: [u32; 2],
    pub dims2: [u32; 2],
    /// Pixel-coordinate matches `(x1, y1, x2, y2)`.
    pub matches: Vec<[f64; 4]>,
    /// Unit quaternion `(w, x, y, z)`.
    pub gt_rotation: [f64; 4],
    pub gt_translation: [f64; 3],
    /// Normalized ground-truth focals (pixels divided by the longer side).
    pub gt_f1: f64,
    pub gt_f2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_lambda1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_lambda2: Option<f64>,
}

/// Per-image prior record (one JSON object per line).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorRecord {
    pub image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focal: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gravity: Option<[f64; 3]>,
}

impl PairRecord {
    /// Schema-level validation; violations name the offending record.
    pub fn validate(&self) -> Result<()> {
        let [w, x, y, z] = self.gt_rotation;
        let norm = (w * w + x * x + y * y + z * z).sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            bail!(
                "pair '{}': gt_rotation is not a unit quaternion (norm {norm})",
                self.pair_id
            );
        }
        if self.dims1[0] < 1 || self.dims1[1] < 1 || self.dims2[0] < 1 || self.dims2[1] < 1 {
            bail!("pair '{}': image dimensions must be positive", self.pair_id);
        }
        let t = Vector3::new(
            self.gt_translation[0],
            self.gt_translation[1],
            self.gt_translation[2],
        );
        if !(t.norm().is_finite() && t.norm() > 0.0) {
            bail!("pair '{}': gt_translation must be nonzero", self.pair_id);
        }
        if !(self.gt_f1 > 0.0 && self.gt_f2 > 0.0) {
            bail!("pair '{}': ground-truth focals must be positive", self.pair_id);
        }
        for m in &self.matches {
            if m.iter().any(|v| !v.is_finite()) {
                bail!("pair '{}': non-finite match coordinates", self.pair_id);
            }
        }
        Ok(())
    }

    /// Converts to the core benchmark representation: normalized coordinates
    /// and assembled ground truth.
    pub fn to_bench_pair(&self) -> Result<BenchPair> {
        self.validate()?;
        let dims1 = ImageDims::new(self.dims1[0], self.dims1[1])?;
        let dims2 = ImageDims::new(self.dims2[0], self.dims2[1])?;
        let corrs: Vec<Correspondence> = self
            .matches
            .iter()
            .map(|m| {
                Correspondence::new(
                    normalize((m[0], m[1]), dims1),
                    normalize((m[2], m[3]), dims2),
                )
                .map_err(|e| anyhow!("pair '{}': {e}", self.pair_id))
            })
            .collect::<Result<_>>()?;

        let [w, x, y, z] = self.gt_rotation;
        let q = UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z));
        let rotation = q.to_rotation_matrix().into_inner();
        let t = Vector3::new(
            self.gt_translation[0],
            self.gt_translation[1],
            self.gt_translation[2],
        );
        let pose = RelativePose::new(rotation, t)
            .map_err(|e| anyhow!("pair '{}': {e}", self.pair_id))?;

        let lambda_known = self.gt_lambda1.is_some() && self.gt_lambda2.is_some();
        let cam1 = CameraModel::new(
            self.gt_f1,
            DivisionModel::new(self.gt_lambda1.unwrap_or(0.0)),
        )
        .map_err(|e| anyhow!("pair '{}': {e}", self.pair_id))?;
        let cam2 = CameraModel::new(
            self.gt_f2,
            DivisionModel::new(self.gt_lambda2.unwrap_or(0.0)),
        )
        .map_err(|e| anyhow!("pair '{}': {e}", self.pair_id))?;

        Ok(BenchPair {
            corrs,
            gt: GroundTruth {
                pose,
                cam1,
                cam2,
                lambda_known,
            },
            dims1,
            dims2,
        })
    }
}

/// Streams pair records from a JSONL file. Pairs with fewer than
/// [`MIN_MATCHES`] matches are dropped; the second element counts them.
pub fn load_pairs(path: &Path) -> Result<(Vec<PairRecord>, usize)> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut records = Vec::new();
    let mut skipped = 0usize;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PairRecord = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}: bad pair record", path.display(), lineno + 1))?;
        record.validate()?;
        if record.matches.len() < MIN_MATCHES {
            skipped += 1;
            continue;
        }
        records.push(record);
    }
    Ok((records, skipped))
}

/// Loads priors keyed by image id.
pub fn load_priors(path: &Path) -> Result<HashMap<String, PriorRecord>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut map = HashMap::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PriorRecord = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}: bad prior record", path.display(), lineno + 1))?;
        if let Some(g) = record.gravity {
            let n = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
            if (n - 1.0).abs() > 1e-6 {
                bail!(
                    "{}:{}: prior '{}' gravity is not unit norm",
                    path.display(),
                    lineno + 1,
                    record.image_id
                );
            }
        }
        map.insert(record.image_id.clone(), record);
    }
    Ok(map)
}
