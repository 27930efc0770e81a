//! Training losses of the set-prediction detector and the depth network.

use crate::assignment::{Assignment, Target};
use crate::error::{Error, Result};
use crate::types::{DepthMap, Mat3, Patch, PointSet, Pose, PredictionTuple, Vec3};

/// Probabilities are floored here before taking the log.
pub const LOG_PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    /// Weight of the generalized IoU term of the patch loss.
    pub sigma1: f64,
    /// Weight of the L1 term of the patch loss.
    pub sigma2: f64,
    pub lambda_pose: f64,
    /// Multiplier on the classification term of no-object slots.
    pub no_object_weight: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            sigma1: 2.0,
            sigma2: 5.0,
            lambda_pose: 0.05,
            no_object_weight: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("sigma1", self.sigma1),
            ("sigma2", self.sigma2),
            ("lambda_pose", self.lambda_pose),
            ("no_object_weight", self.no_object_weight),
        ];
        for (name, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} = {v} must be >= 0")));
            }
        }
        Ok(())
    }
}

/// `1 - GIoU(a, b)`, in `[0, 2]`.
pub fn giou_loss(a: &Patch, b: &Patch) -> f64 {
    let ix = (a.x_max().min(b.x_max()) - a.bx.max(b.bx)).max(0.0);
    let iy = (a.y_max().min(b.y_max()) - a.by.max(b.by)).max(0.0);
    let inter = ix * iy;
    // Areas from the corner coordinates, so identical patches give exactly 0.
    let extent_area = |p: &Patch| (p.x_max() - p.bx) * (p.y_max() - p.by);
    let union = extent_area(a) + extent_area(b) - inter;

    let ex = a.x_max().max(b.x_max()) - a.bx.min(b.bx);
    let ey = a.y_max().max(b.y_max()) - a.by.min(b.by);
    let enclosure = ex * ey;

    let giou = inter / union - (enclosure - union) / enclosure;
    (1.0 - giou).clamp(0.0, 2.0)
}

pub fn l1_distance(a: &Patch, b: &Patch) -> f64 {
    a.to_array()
        .iter()
        .zip(b.to_array())
        .map(|(x, y)| (x - y).abs())
        .sum()
}

pub fn patch_loss(a: &Patch, b: &Patch, w: &LossWeights) -> f64 {
    w.sigma1 * giou_loss(a, b) + w.sigma2 * l1_distance(a, b)
}

/// Rotation loss over the model points. The symmetric form matches each
/// ground-truth point to its closest predicted point, so rotations that map
/// the point set onto itself cost nothing.
pub fn shape_match_loss(r_gt: &Mat3, r_pred: &Mat3, pts: &PointSet, symmetric: bool) -> Result<f64> {
    if pts.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let gt: Vec<Vec3> = pts.points.iter().map(|p| r_gt * p).collect();
    let pred: Vec<Vec3> = pts.points.iter().map(|p| r_pred * p).collect();
    Ok(mean_point_distance(&gt, &pred, symmetric))
}

/// Mean distance between two equally long point lists, either index-paired
/// or closest-point.
pub(crate) fn mean_point_distance(a: &[Vec3], b: &[Vec3], closest: bool) -> f64 {
    let total: f64 = if closest {
        a.iter()
            .map(|p| b.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
            .sum()
    } else {
        a.iter().zip(b).map(|(p, q)| (p - q).norm()).sum()
    };
    total / a.len() as f64
}

pub fn pose_loss(gt: &Pose, pred: &Pose, pts: &PointSet, symmetric: bool) -> Result<f64> {
    let rot = shape_match_loss(&gt.rotation_matrix(), &pred.rotation_matrix(), pts, symmetric)?;
    Ok(rot + (gt.translation - pred.translation).norm())
}

pub(crate) fn neg_log_prob(p: f64) -> f64 {
    -p.max(LOG_PROB_FLOOR).ln()
}

/// Per-term totals of the matched set loss.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    /// Sum of `-log p` terms, no-object slots included.
    pub class: f64,
    /// Sum of patch losses over real objects.
    pub patch: f64,
    /// Sum of `lambda_pose * pose_loss` over real objects.
    pub pose: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.class + self.patch + self.pose
    }
}

/// Set loss over all slots after matching: classification for every slot,
/// patch and weighted pose terms only where the slot holds a real object.
pub fn hungarian_loss(
    targets: &[Target<'_>],
    preds: &[PredictionTuple],
    assignment: &Assignment,
    w: &LossWeights,
) -> Result<LossBreakdown> {
    let n = targets.len();
    for found in [preds.len(), assignment.perm.len()] {
        if found != n {
            return Err(Error::CardinalityMismatch { expected: n, found });
        }
    }
    let mut out = LossBreakdown::default();
    for (target, &j) in targets.iter().zip(&assignment.perm) {
        let pred = &preds[j];
        match target {
            Target::Object { object, model } => {
                out.class += neg_log_prob(pred.class_dist.prob(object.class_id)?);
                out.patch += patch_loss(&object.patch, &pred.patch, w);
                out.pose += w.lambda_pose
                    * pose_loss(&object.pose, &pred.pose, &model.points, model.symmetric)?;
            }
            Target::NoObject => {
                out.class += w.no_object_weight * neg_log_prob(pred.class_dist.no_object_prob());
            }
        }
    }
    Ok(out)
}

/// Mean absolute depth error over pixels valid in both maps.
pub fn depth_loss(gt: &DepthMap, pred: &DepthMap) -> Result<f64> {
    if gt.size != pred.size {
        return Err(Error::CardinalityMismatch {
            expected: gt.size.pixel_count(),
            found: pred.size.pixel_count(),
        });
    }
    let (sum, count) = (0..gt.depths.len())
        .filter(|&i| gt.valid[i] && pred.valid[i])
        .fold((0.0, 0usize), |(s, c), i| {
            (s + (gt.depths[i] - pred.depths[i]).abs(), c + 1)
        });
    if count == 0 {
        return Err(Error::NoValidPixels);
    }
    Ok(sum / count as f64)
}
