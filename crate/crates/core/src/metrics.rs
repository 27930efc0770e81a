//! Pose metrics (ADD, ADD-S, threshold accuracy) and depth metrics.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::losses::mean_point_distance;
use crate::types::{DepthMap, ImageSize, PointSet, Pose, Vec3};

/// Default upper threshold of the accuracy curve, meters.
pub const DEFAULT_AUC_THRESHOLD: f64 = 0.10;

fn transformed(pose: &Pose, pts: &PointSet) -> Result<Vec<Vec3>> {
    if pts.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let r = pose.rotation_matrix();
    Ok(pts.points.iter().map(|p| r * p + pose.translation).collect())
}

/// Mean distance between corresponding model points under the two poses.
pub fn add_metric(gt: &Pose, pred: &Pose, pts: &PointSet) -> Result<f64> {
    Ok(mean_point_distance(&transformed(gt, pts)?, &transformed(pred, pts)?, false))
}

/// Mean distance from each ground-truth model point to the closest
/// predicted model point.
pub fn adds_metric(gt: &Pose, pred: &Pose, pts: &PointSet) -> Result<f64> {
    Ok(mean_point_distance(&transformed(gt, pts)?, &transformed(pred, pts)?, true))
}

fn check_distances(distances: &[f64], threshold: f64) -> Result<()> {
    if distances.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "threshold {threshold} must be positive"
        )));
    }
    if let Some(d) = distances.iter().find(|d| !(**d >= 0.0)) {
        return Err(Error::InvalidConfig(format!("distance {d} is not a non-negative number")));
    }
    Ok(())
}

/// Fraction of distances at or below `threshold`.
pub fn threshold_accuracy(distances: &[f64], threshold: f64) -> Result<f64> {
    check_distances(distances, threshold)?;
    let hits = distances.iter().filter(|d| **d <= threshold).count();
    Ok(hits as f64 / distances.len() as f64)
}

/// Area under the accuracy-vs-threshold curve on `[0, max_threshold]`,
/// normalized by `max_threshold`.
///
/// The curve is a step function that rises by `1/n` at every sorted
/// distance, so the integral is a finite sum over the steps.
pub fn threshold_accuracy_auc(distances: &[f64], max_threshold: f64) -> Result<f64> {
    check_distances(distances, max_threshold)?;
    let mut sorted = distances.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut area = 0.0;
    for (k, d) in sorted.iter().enumerate() {
        let next = sorted.get(k + 1).copied().unwrap_or(max_threshold).min(max_threshold);
        if *d >= max_threshold {
            break;
        }
        area += (k + 1) as f64 / n * (next - d);
    }
    Ok((area / max_threshold).clamp(0.0, 1.0))
}

/// Per-object pose errors after matching.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectPoseError {
    pub frame_id: u64,
    pub object_index: usize,
    pub class_id: usize,
    pub add: f64,
    pub adds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassPoseSummary {
    pub class_id: usize,
    pub count: usize,
    pub mean_add: f64,
    pub mean_adds: f64,
    pub auc_add: f64,
    pub auc_adds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoseMetricReport {
    pub objects: Vec<ObjectPoseError>,
    pub classes: Vec<ClassPoseSummary>,
    pub mean_add: f64,
    pub mean_adds: f64,
    pub auc_add: f64,
    pub auc_adds: f64,
    pub max_threshold: f64,
}

fn summarize(errors: &[&ObjectPoseError], max_threshold: f64) -> Result<(f64, f64, f64, f64)> {
    let add: Vec<f64> = errors.iter().map(|e| e.add).collect();
    let adds: Vec<f64> = errors.iter().map(|e| e.adds).collect();
    let n = errors.len() as f64;
    Ok((
        add.iter().sum::<f64>() / n,
        adds.iter().sum::<f64>() / n,
        threshold_accuracy_auc(&add, max_threshold)?,
        threshold_accuracy_auc(&adds, max_threshold)?,
    ))
}

impl PoseMetricReport {
    /// Aggregates per-object errors into per-class rows, sorted by class id,
    /// and overall means.
    pub fn from_errors(objects: Vec<ObjectPoseError>, max_threshold: f64) -> Result<Self> {
        let mut by_class: BTreeMap<usize, Vec<&ObjectPoseError>> = BTreeMap::new();
        for e in &objects {
            by_class.entry(e.class_id).or_default().push(e);
        }
        let mut classes = Vec::with_capacity(by_class.len());
        for (class_id, errs) in &by_class {
            let (mean_add, mean_adds, auc_add, auc_adds) = summarize(errs, max_threshold)?;
            classes.push(ClassPoseSummary {
                class_id: *class_id,
                count: errs.len(),
                mean_add,
                mean_adds,
                auc_add,
                auc_adds,
            });
        }
        let all: Vec<&ObjectPoseError> = objects.iter().collect();
        let (mean_add, mean_adds, auc_add, auc_adds) = summarize(&all, max_threshold)?;
        Ok(PoseMetricReport {
            objects,
            classes,
            mean_add,
            mean_adds,
            auc_add,
            auc_adds,
            max_threshold,
        })
    }
}

/// Which depth divides the error in the relative metrics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthDenominator {
    #[default]
    Prediction,
    GroundTruth,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DepthMetricReport {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    /// Number of pixels valid in both maps.
    pub pixels: usize,
}

pub fn depth_metrics(gt: &DepthMap, pred: &DepthMap, denominator: DepthDenominator) -> Result<DepthMetricReport> {
    if gt.size != pred.size {
        return Err(Error::CardinalityMismatch {
            expected: gt.size.pixel_count(),
            found: pred.size.pixel_count(),
        });
    }
    let (mut abs_rel, mut sq_rel, mut sq, mut sq_log) = (0.0, 0.0, 0.0, 0.0);
    let mut pixels = 0usize;
    for i in 0..gt.depths.len() {
        if !(gt.valid[i] && pred.valid[i]) {
            continue;
        }
        let (d, d_hat) = (gt.depths[i], pred.depths[i]);
        if !(d_hat > 0.0) || !(d > 0.0) {
            return Err(Error::InvalidDepth(format!(
                "pixel {i}: depths ({d}, {d_hat}) must be positive"
            )));
        }
        let denom = match denominator {
            DepthDenominator::Prediction => d_hat,
            DepthDenominator::GroundTruth => d,
        };
        let err = d - d_hat;
        abs_rel += err.abs() / denom;
        sq_rel += err * err / denom;
        sq += err * err;
        let log_err = d.ln() - d_hat.ln();
        sq_log += log_err * log_err;
        pixels += 1;
    }
    if pixels == 0 {
        return Err(Error::NoValidPixels);
    }
    let n = pixels as f64;
    Ok(DepthMetricReport {
        abs_rel: abs_rel / n,
        sq_rel: sq_rel / n,
        rmse: (sq / n).sqrt(),
        rmse_log: (sq_log / n).sqrt(),
        pixels,
    })
}

/// Horizontal and vertical derivative images of a depth map.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthGradient {
    pub size: ImageSize,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
}

const SOBEL_X: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
const SOBEL_Y: [[f64; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];

/// 3x3 Sobel filtering with replicated borders. Invalid pixels contribute
/// their stored value.
pub fn sobel_gradient(dm: &DepthMap) -> Result<DepthGradient> {
    let (w, h) = (dm.size.width as usize, dm.size.height as usize);
    if w < 3 || h < 3 {
        return Err(Error::TooSmall {
            width: dm.size.width,
            height: dm.size.height,
        });
    }
    let at = |x: isize, y: isize| {
        let xc = x.clamp(0, w as isize - 1) as usize;
        let yc = y.clamp(0, h as isize - 1) as usize;
        dm.depths[yc * w + xc]
    };
    let mut dx = vec![0.0; w * h];
    let mut dy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let (mut gx, mut gy) = (0.0, 0.0);
            for (j, (kx_row, ky_row)) in SOBEL_X.iter().zip(&SOBEL_Y).enumerate() {
                for i in 0..3 {
                    let v = at(x as isize + i as isize - 1, y as isize + j as isize - 1);
                    gx += kx_row[i] * v;
                    gy += ky_row[i] * v;
                }
            }
            dx[y * w + x] = gx;
            dy[y * w + x] = gy;
        }
    }
    Ok(DepthGradient {
        size: dm.size,
        dx,
        dy,
    })
}
