//! Domain types shared by every stage of the pipeline.
//!
//! Everything here is an immutable value once constructed. Constructors
//! validate the invariants; the fields stay public so that the numeric
//! code reads like the formulas it implements.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Tolerance on the norm of a stored rotation quaternion.
pub const QUAT_NORM_TOL: f64 = 1e-9;

/// Tolerance on the sum of a class distribution.
pub const DISTRIBUTION_SUM_TOL: f64 = 1e-6;

/// Region of interest in pixel coordinates.
///
/// `(bx, by)` is the corner with the smallest coordinates on both image
/// axes, so the patch covers `[bx, bx + w] x [by, by + h]`. Values are
/// continuous; rounding only happens when a depth pixel is looked up.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Patch {
    pub bx: f64,
    pub by: f64,
    pub h: f64,
    pub w: f64,
}

impl Patch {
    pub fn new(bx: f64, by: f64, h: f64, w: f64) -> Result<Self> {
        let patch = Patch { bx, by, h, w };
        patch.validate()?;
        Ok(patch)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bx.is_finite() && self.by.is_finite()) {
            return Err(Error::InvalidPatch(format!(
                "corner ({}, {}) is not finite",
                self.bx, self.by
            )));
        }
        if !(self.h > 0.0 && self.h.is_finite() && self.w > 0.0 && self.w.is_finite()) {
            return Err(Error::InvalidPatch(format!(
                "height {} and width {} must be positive",
                self.h, self.w
            )));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        self.h * self.w
    }

    pub fn x_max(&self) -> f64 {
        self.bx + self.w
    }

    pub fn y_max(&self) -> f64 {
        self.by + self.h
    }

    /// `(bx, by, h, w)` as a vector, the parameterization the L1 patch term
    /// is measured in.
    pub fn to_array(&self) -> [f64; 4] {
        [self.bx, self.by, self.h, self.w]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ImageSize {
    pub width: u32,
    pub height: u32,
}

impl ImageSize {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidSize(format!("{width}x{height}")));
        }
        Ok(ImageSize { width, height })
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// Rotation quaternion stored in `(x, y, z, w)` order, Hamilton convention.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quat {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub w: f64,
}

impl Quat {
    pub const IDENTITY: Quat = Quat {
        x: 0.0,
        y: 0.0,
        z: 0.0,
        w: 1.0,
    };

    pub fn new(x: f64, y: f64, z: f64, w: f64) -> Self {
        Quat { x, y, z, w }
    }

    pub fn from_array(q: [f64; 4]) -> Self {
        Quat::new(q[0], q[1], q[2], q[3])
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x, self.y, self.z, self.w]
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z + self.w * self.w).sqrt()
    }

    pub fn normalized(&self) -> Result<Quat> {
        let n = self.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::InvalidRotation(format!(
                "quaternion {:?} has norm {n}",
                self.to_array()
            )));
        }
        Ok(Quat::new(self.x / n, self.y / n, self.z / n, self.w / n))
    }

    /// Rotation by `angle = |v|` about the axis `v / |v|`.
    pub fn from_scaled_axis(v: Vec3) -> Quat {
        let angle = v.norm();
        if angle == 0.0 {
            return Quat::IDENTITY;
        }
        let axis = v / angle;
        let (s, c) = (angle / 2.0).sin_cos();
        Quat::new(axis.x * s, axis.y * s, axis.z * s, c)
    }

    /// Hamilton product `self * rhs` (apply `rhs` first).
    pub fn mul(&self, rhs: &Quat) -> Quat {
        let (a, b) = (self, rhs);
        Quat::new(
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
        )
    }

    pub fn neg(&self) -> Quat {
        Quat::new(-self.x, -self.y, -self.z, -self.w)
    }

    /// Rotation matrix of the quaternion, renormalized first.
    pub fn to_matrix(&self) -> Result<Mat3> {
        let Quat { x, y, z, w } = self.normalized()?;
        let (xx, yy, zz) = (x * x, y * y, z * z);
        let (xy, xz, yz) = (x * y, x * z, y * z);
        let (xw, yw, zw) = (x * w, y * w, z * w);
        Ok(Mat3::new(
            1.0 - 2.0 * (yy + zz),
            2.0 * (xy - zw),
            2.0 * (xz + yw),
            2.0 * (xy + zw),
            1.0 - 2.0 * (xx + zz),
            2.0 * (yz - xw),
            2.0 * (xz - yw),
            2.0 * (yz + xw),
            1.0 - 2.0 * (xx + yy),
        ))
    }
}

/// Free-function form of [`Quat::to_matrix`].
pub fn quat_to_matrix(q: &Quat) -> Result<Mat3> {
    q.to_matrix()
}

/// Rigid transform of an object frame into the camera frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub rotation: Quat,
    pub translation: Vec3,
}

impl Pose {
    pub fn new(rotation: Quat, translation: Vec3) -> Result<Self> {
        let pose = Pose {
            rotation,
            translation,
        };
        pose.validate()?;
        Ok(pose)
    }

    pub fn identity() -> Self {
        Pose {
            rotation: Quat::IDENTITY,
            translation: Vec3::zeros(),
        }
    }

    pub fn from_translation(t: Vec3) -> Self {
        Pose {
            rotation: Quat::IDENTITY,
            translation: t,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.rotation.norm();
        if !((n - 1.0).abs() <= QUAT_NORM_TOL) {
            return Err(Error::InvalidRotation(format!(
                "quaternion norm {n} is not 1"
            )));
        }
        if !self.translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidRotation(
                "translation is not finite".to_string(),
            ));
        }
        Ok(())
    }

    pub fn rotation_matrix(&self) -> Mat3 {
        self.rotation
            .to_matrix()
            .expect("validated pose has a unit quaternion")
    }

    /// `self ∘ inner`: apply `inner` first, then `self`.
    pub fn compose(&self, inner: &Pose) -> Pose {
        let r = self.rotation_matrix();
        Pose {
            rotation: self.rotation.mul(&inner.rotation),
            translation: r * inner.translation + self.translation,
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation_matrix() * p + self.translation
    }
}

/// Applies `R * x + t` to every point.
pub fn transform_points(pose: &Pose, pts: &PointSet) -> PointSet {
    let r = pose.rotation_matrix();
    PointSet {
        points: pts
            .points
            .iter()
            .map(|p| r * p + pose.translation)
            .collect(),
    }
}

/// Probabilities over the object classes followed by the no-object slot,
/// which is always the last entry.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassDistribution {
    probs: Vec<f64>,
}

impl ClassDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidDistribution(format!(
                "need at least one class plus the no-object slot, got {} entries",
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidDistribution(format!(
                "probability {p} outside [0, 1]"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > DISTRIBUTION_SUM_TOL {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {sum}"
            )));
        }
        Ok(ClassDistribution { probs })
    }

    /// All mass on one entry; `class == num_classes` is the no-object slot.
    pub fn one_hot(num_classes: usize, class: usize) -> Result<Self> {
        if class > num_classes {
            return Err(Error::InvalidClass {
                class_id: class,
                num_classes,
            });
        }
        let mut probs = vec![0.0; num_classes + 1];
        probs[class] = 1.0;
        ClassDistribution::new(probs)
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn no_object_index(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, class: usize) -> Result<f64> {
        self.probs.get(class).copied().ok_or(Error::InvalidClass {
            class_id: class,
            num_classes: self.num_classes(),
        })
    }

    pub fn no_object_prob(&self) -> f64 {
        self.probs[self.no_object_index()]
    }

    /// Most probable entry; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.probs.iter().enumerate() {
            if *p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    pub fn predicts_object(&self) -> bool {
        self.argmax() != self.no_object_index()
    }
}

/// Output of one decoder query.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionTuple {
    pub class_dist: ClassDistribution,
    pub patch: Patch,
    pub pose: Pose,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthObject {
    pub class_id: usize,
    pub patch: Patch,
    pub pose: Pose,
    pub model_ref: String,
}

/// 3D model points in the object frame, meters.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    pub points: Vec<Vec3>,
}

impl PointSet {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyPointSet);
        }
        Ok(PointSet { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// A model point set plus whether the object is treated as symmetric by
/// the rotation loss and by ADD-S style evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectModel {
    pub points: PointSet,
    pub symmetric: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub ppx: f64,
    pub ppy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, ppx: f64, ppy: f64) -> Result<Self> {
        let k = CameraIntrinsics { fx, fy, ppx, ppy };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(Error::InvalidIntrinsics(format!(
                "focal lengths ({}, {}) must be positive",
                self.fx, self.fy
            )));
        }
        if !(self.ppx.is_finite() && self.ppy.is_finite()) {
            return Err(Error::InvalidIntrinsics(
                "principal point is not finite".to_string(),
            ));
        }
        Ok(())
    }

    /// Pinhole forward projection `(fx * x / z + ppx, fy * y / z + ppy)`.
    pub fn project(&self, p: &Vec3) -> (f64, f64) {
        (
            self.fx * p.x / p.z + self.ppx,
            self.fy * p.y / p.z + self.ppy,
        )
    }
}

/// Row-major metric depth grid with a validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    pub size: ImageSize,
    pub depths: Vec<f64>,
    pub valid: Vec<bool>,
}

impl DepthMap {
    pub fn new(size: ImageSize, depths: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        let n = size.pixel_count();
        if depths.len() != n || valid.len() != n {
            return Err(Error::CardinalityMismatch {
                expected: n,
                found: depths.len().min(valid.len()),
            });
        }
        for (i, (d, v)) in depths.iter().zip(&valid).enumerate() {
            if *v && !(*d > 0.0 && d.is_finite()) {
                return Err(Error::InvalidDepth(format!(
                    "pixel {i} is marked valid with depth {d}"
                )));
            }
        }
        Ok(DepthMap { size, depths, valid })
    }

    /// Every pixel valid.
    pub fn from_depths(size: ImageSize, depths: Vec<f64>) -> Result<Self> {
        let valid = vec![true; depths.len()];
        DepthMap::new(size, depths, valid)
    }

    pub fn invalid(size: ImageSize) -> Self {
        let n = size.pixel_count();
        DepthMap {
            size,
            depths: vec![0.0; n],
            valid: vec![false; n],
        }
    }

    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.size.width as usize + x
    }

    /// Depth at `(x, y)` if the pixel exists and is valid.
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        if x >= self.size.width as usize || y >= self.size.height as usize {
            return None;
        }
        let i = self.index(x, y);
        self.valid[i].then(|| self.depths[i])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_1_SQRT_2;

    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;

    fn random_quat() -> impl Strategy<Value = Quat> {
        prop::array::uniform4(-1.0f64..1.0)
            .prop_filter("non-degenerate", |q| q.iter().map(|v| v * v).sum::<f64>() > 1e-3)
            .prop_map(|q| Quat::from_array(q).normalized().unwrap())
    }

    fn random_pose() -> impl Strategy<Value = Pose> {
        (random_quat(), prop::array::uniform3(-2.0f64..2.0))
            .prop_map(|(q, t)| Pose::new(q, Vec3::from(t)).unwrap())
    }

    #[test]
    fn identity_quaternion_is_identity_matrix() {
        assert_eq!(Quat::IDENTITY.to_matrix().unwrap(), Mat3::identity());
    }

    #[test]
    fn quarter_turn_about_z() {
        let q = Quat::new(0.0, 0.0, FRAC_1_SQRT_2, FRAC_1_SQRT_2);
        let r = q.to_matrix().unwrap();
        let v = r * Vec3::new(1.0, 0.0, 0.0);
        assert_abs_diff_eq!(v, Vec3::new(0.0, 1.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn zero_quaternion_is_rejected() {
        let q = Quat::new(0.0, 0.0, 0.0, 0.0);
        assert!(matches!(quat_to_matrix(&q), Err(Error::InvalidRotation(_))));
    }

    #[test]
    fn unnormalized_quaternion_is_renormalized() {
        let q = Quat::new(0.0, 0.0, 2.0, 2.0);
        let r = q.to_matrix().unwrap();
        assert_abs_diff_eq!(r * Vec3::x(), Vec3::y(), epsilon = 1e-15);
    }

    #[test]
    fn transform_examples() {
        let pts = PointSet::new(vec![Vec3::new(0.3, -0.2, 1.0)]).unwrap();
        assert_eq!(transform_points(&Pose::identity(), &pts), pts);

        let origin = PointSet::new(vec![Vec3::zeros()]).unwrap();
        let shifted = transform_points(&Pose::from_translation(Vec3::new(0.1, 0.0, 0.0)), &origin);
        assert_eq!(shifted.points[0], Vec3::new(0.1, 0.0, 0.0));

        let pose = Pose::new(
            Quat::new(0.0, 0.0, FRAC_1_SQRT_2, FRAC_1_SQRT_2),
            Vec3::new(0.0, 0.0, 1.0),
        )
        .unwrap();
        let out = transform_points(&pose, &PointSet::new(vec![Vec3::x()]).unwrap());
        assert_abs_diff_eq!(out.points[0], Vec3::new(0.0, 1.0, 1.0), epsilon = 1e-15);
    }

    #[test]
    fn distribution_validation() {
        assert!(ClassDistribution::new(vec![0.5, 0.5]).is_ok());
        assert!(ClassDistribution::new(vec![0.5, 0.5 + 5e-7]).is_ok());
        assert!(ClassDistribution::new(vec![0.5, 0.5 + 2e-6]).is_err());
        assert!(ClassDistribution::new(vec![1.0]).is_err());
        assert!(ClassDistribution::new(vec![1.5, -0.5]).is_err());
        let d = ClassDistribution::one_hot(3, 3).unwrap();
        assert_eq!(d.no_object_index(), 3);
        assert!(!d.predicts_object());
    }

    #[test]
    fn patch_and_depth_invariants() {
        assert!(Patch::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(Patch::new(f64::NAN, 0.0, 1.0, 1.0).is_err());
        let size = ImageSize::new(2, 1).unwrap();
        assert!(DepthMap::new(size, vec![1.0, 0.0], vec![true, true]).is_err());
        assert!(DepthMap::new(size, vec![1.0, 0.0], vec![true, false]).is_ok());
        assert!(DepthMap::new(size, vec![1.0], vec![true]).is_err());
        assert!(ImageSize::new(0, 4).is_err());
    }

    proptest! {
        #[test]
        fn rotation_matrix_is_orthonormal(q in random_quat()) {
            let r = q.to_matrix().unwrap();
            let err = (r * r.transpose() - Mat3::identity()).abs().max();
            prop_assert!(err <= 1e-12, "orthogonality error {err}");
            prop_assert!((r.determinant() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn double_cover(q in random_quat()) {
            let a = q.to_matrix().unwrap();
            let b = q.neg().to_matrix().unwrap();
            prop_assert!((a - b).abs().max() <= 1e-15);
        }

        #[test]
        fn composition_consistency(p1 in random_pose(), p2 in random_pose(),
                                   pts in prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 1..8)) {
            let pts = PointSet::new(pts.into_iter().map(Vec3::from).collect()).unwrap();
            let stepwise = transform_points(&p2, &transform_points(&p1, &pts));
            let composed = transform_points(&p2.compose(&p1), &pts);
            for (a, b) in stepwise.points.iter().zip(&composed.points) {
                prop_assert!((a - b).norm() <= 1e-10);
            }
        }
    }
}
