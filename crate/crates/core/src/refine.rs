//! Depth-based translation refinement.
//!
//! The predicted patch is mapped into the depth image, the depth at its
//! center gives `t_z`, and the patch center in the RGB frame is
//! back-projected through the pinhole model to complete a translation from
//! depth. That translation is blended with the regressed one. Rotation is
//! passed through untouched.

use crate::error::{Error, Result};
use crate::types::{CameraIntrinsics, DepthMap, ImageSize, Patch, Pose, PredictionTuple, Vec3};

const WEIGHT_SUM_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FusionConfig {
    /// Weight of the depth-derived translation.
    pub w1: f64,
    /// Weight of the regressed translation.
    pub w2: f64,
    /// Side of the square neighborhood searched when the center pixel has no
    /// depth. Must be odd.
    pub depth_window: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            w1: 0.5,
            w2: 0.5,
            depth_window: 5,
        }
    }
}

impl FusionConfig {
    pub fn new(w1: f64, w2: f64, depth_window: usize) -> Result<Self> {
        let cfg = FusionConfig {
            w1,
            w2,
            depth_window,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `w1` given, `w2 = 1 - w1`.
    pub fn with_depth_weight(w1: f64, depth_window: usize) -> Result<Self> {
        FusionConfig::new(w1, 1.0 - w1, depth_window)
    }

    /// Inverse-loss rule: the source with the lower loss gets the larger
    /// weight, `w1 = L_regression / (L_depth + L_regression)`.
    pub fn from_model_losses(depth_loss: f64, regression_loss: f64, depth_window: usize) -> Result<Self> {
        let sum = depth_loss + regression_loss;
        if !(depth_loss >= 0.0 && regression_loss >= 0.0 && sum > 0.0 && sum.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "model losses ({depth_loss}, {regression_loss}) must be non-negative with a positive sum"
            )));
        }
        FusionConfig::new(regression_loss / sum, depth_loss / sum, depth_window)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w1 >= 0.0 && self.w2 >= 0.0) || (self.w1 + self.w2 - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidConfig(format!(
                "fusion weights ({}, {}) must be non-negative and sum to 1",
                self.w1, self.w2
            )));
        }
        if self.depth_window % 2 == 0 {
            return Err(Error::InvalidConfig(format!(
                "depth window {} must be odd",
                self.depth_window
            )));
        }
        Ok(())
    }
}

/// Maps a patch from an image of size `s_o` to one of size `s_d` by scaling
/// each coordinate with the ratio of its axis.
pub fn rescale_patch(p: &Patch, s_o: ImageSize, s_d: ImageSize) -> Patch {
    let sx = f64::from(s_d.width) / f64::from(s_o.width);
    let sy = f64::from(s_d.height) / f64::from(s_o.height);
    Patch {
        bx: p.bx * sx,
        by: p.by * sy,
        h: p.h * sy,
        w: p.w * sx,
    }
}

pub fn patch_center(p: &Patch) -> (f64, f64) {
    (p.bx + p.w / 2.0, p.by + p.h / 2.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DepthSource {
    /// The rounded center pixel itself.
    Center,
    /// Median of the valid pixels around an invalid center.
    WindowMedian,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DepthSample {
    pub depth: f64,
    /// Rounded center pixel `(x, y)`.
    pub pixel: (usize, usize),
    pub source: DepthSource,
}

/// Rounds half up: pixel `k` is centered on coordinate `k`.
pub fn round_pixel(c: f64) -> i64 {
    (c + 0.5).floor() as i64
}

pub fn lookup_depth(dm: &DepthMap, center: (f64, f64), window: usize) -> Result<DepthSample> {
    let (rx, ry) = (round_pixel(center.0), round_pixel(center.1));
    let (width, height) = (dm.size.width, dm.size.height);
    if !(center.0.is_finite() && center.1.is_finite())
        || rx < 0
        || ry < 0
        || rx >= i64::from(width)
        || ry >= i64::from(height)
    {
        return Err(Error::OutOfBounds {
            x: rx,
            y: ry,
            width,
            height,
        });
    }
    let (x, y) = (rx as usize, ry as usize);
    if let Some(depth) = dm.get(x, y) {
        return Ok(DepthSample {
            depth,
            pixel: (x, y),
            source: DepthSource::Center,
        });
    }

    let half = window / 2;
    let mut values: Vec<f64> = (y.saturating_sub(half)..=y + half)
        .flat_map(|yy| (x.saturating_sub(half)..=x + half).map(move |xx| (xx, yy)))
        .filter_map(|(xx, yy)| dm.get(xx, yy))
        .collect();
    if values.is_empty() {
        return Err(Error::NoDepth { x, y });
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    let depth = if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    };
    Ok(DepthSample {
        depth,
        pixel: (x, y),
        source: DepthSource::WindowMedian,
    })
}

/// Inverse pinhole projection of pixel `c_o` at depth `t_z`.
pub fn back_project(c_o: (f64, f64), t_z: f64, k: &CameraIntrinsics) -> Result<(f64, f64)> {
    if !(t_z > 0.0 && t_z.is_finite()) {
        return Err(Error::InvalidDepth(format!("depth {t_z} must be positive")));
    }
    Ok(((c_o.0 - k.ppx) * t_z / k.fx, (c_o.1 - k.ppy) * t_z / k.fy))
}

pub fn fuse_translation(t1: &Vec3, t2: &Vec3, cfg: &FusionConfig) -> Vec3 {
    t1 * cfg.w1 + t2 * cfg.w2
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefinedPose {
    /// Fused translation with the predicted rotation.
    pub pose: Pose,
    /// Translation recovered from depth, absent when it was not used.
    pub t1: Option<Vec3>,
    /// Regressed translation.
    pub t2: Vec3,
    pub depth: Option<DepthSample>,
    /// Weights actually applied to `(t1, t2)`.
    pub weights: (f64, f64),
    /// Set when no depth was found and the output fell back to `t2`.
    pub degraded: bool,
}

pub fn refine_pose(
    pred: &PredictionTuple,
    dm: &DepthMap,
    s_o: ImageSize,
    k: &CameraIntrinsics,
    cfg: &FusionConfig,
) -> Result<RefinedPose> {
    cfg.validate()?;
    let t2 = pred.pose.translation;
    let passthrough = |degraded: bool, depth: Option<DepthSample>| RefinedPose {
        pose: pred.pose,
        t1: None,
        t2,
        depth,
        weights: (0.0, 1.0),
        degraded,
    };
    if cfg.w1 == 0.0 {
        return Ok(passthrough(false, None));
    }

    let depth_patch = rescale_patch(&pred.patch, s_o, dm.size);
    let sample = match lookup_depth(dm, patch_center(&depth_patch), cfg.depth_window) {
        Ok(sample) => sample,
        Err(Error::NoDepth { .. }) => return Ok(passthrough(true, None)),
        Err(e) => return Err(e),
    };
    let t_z = sample.depth;
    let (t_x, t_y) = back_project(patch_center(&pred.patch), t_z, k)?;
    let t1 = Vec3::new(t_x, t_y, t_z);
    Ok(RefinedPose {
        pose: Pose {
            rotation: pred.pose.rotation,
            translation: fuse_translation(&t1, &t2, cfg),
        },
        t1: Some(t1),
        t2,
        depth: Some(sample),
        weights: (cfg.w1, cfg.w2),
        degraded: false,
    })
}
