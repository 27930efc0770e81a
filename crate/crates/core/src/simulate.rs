//! Synthetic scenes and prediction sets.
//!
//! Objects are spheres or oriented boxes placed in front of a pinhole
//! camera. Each ground-truth patch is the box spanned by the object's
//! camera-frame extents projected at the depth of its centroid, so the patch
//! center is exactly the projected centroid. The depth map is ray-cast
//! against the primitives at the depth-image resolution.
//!
//! Randomness comes from ChaCha8 seeded with the configured seed. Stream 0
//! is used for frame-level draws; object `k` (and prediction slot `k`) draws
//! from stream `k + 1`, so adding an object never changes earlier ones.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::refine::{patch_center, rescale_patch, round_pixel};
use crate::types::{
    CameraIntrinsics, ClassDistribution, DepthMap, GroundTruthObject, ImageSize, Mat3, ObjectModel, Patch,
    PointSet, Pose, PredictionTuple, Quat, Vec3,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Primitive {
    Sphere { radius: f64 },
    /// Box centered on the object origin, axes aligned with the object frame.
    Box { half_extents: [f64; 3] },
}

impl Primitive {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Primitive::Sphere { radius } => *radius > 0.0 && radius.is_finite(),
            Primitive::Box { half_extents } => half_extents.iter().all(|e| *e > 0.0 && e.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("degenerate primitive {self:?}")))
        }
    }

    /// Radius of the smallest origin-centered sphere containing the primitive.
    pub fn bounding_radius(&self) -> f64 {
        match self {
            Primitive::Sphere { radius } => *radius,
            Primitive::Box { half_extents } => Vec3::from(*half_extents).norm(),
        }
    }

    /// Half sizes along the camera x and y axes when rotated by `r`.
    pub fn camera_half_extents(&self, r: &Mat3) -> (f64, f64) {
        match self {
            Primitive::Sphere { radius } => (*radius, *radius),
            Primitive::Box { half_extents } => {
                let e = half_extents;
                let span = |row: usize| (0..3).map(|k| r[(row, k)].abs() * e[k]).sum::<f64>();
                (span(0), span(1))
            }
        }
    }

    /// Model points with the symmetry flag: spheres and boxes with a square
    /// cross-section are symmetric; other boxes get an extra marker point
    /// near one corner and are not.
    pub fn model(&self) -> ObjectModel {
        match self {
            Primitive::Sphere { radius } => {
                let n = 64;
                let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
                let points = (0..n)
                    .map(|i| {
                        let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                        let ring = (1.0 - y * y).sqrt();
                        let theta = golden * i as f64;
                        Vec3::new(ring * theta.cos(), y, ring * theta.sin()) * *radius
                    })
                    .collect();
                ObjectModel {
                    points: PointSet { points },
                    symmetric: true,
                }
            }
            Primitive::Box { half_extents: e } => {
                let mut points = Vec::with_capacity(27);
                for i in -1..=1 {
                    for j in -1..=1 {
                        for k in -1..=1 {
                            if (i, j, k) != (0, 0, 0) {
                                points.push(Vec3::new(
                                    f64::from(i) * e[0],
                                    f64::from(j) * e[1],
                                    f64::from(k) * e[2],
                                ));
                            }
                        }
                    }
                }
                let square = e[0] == e[1] || e[1] == e[2] || e[0] == e[2];
                if !square {
                    points.push(Vec3::new(0.8 * e[0], 0.8 * e[1], e[2]));
                }
                ObjectModel {
                    points: PointSet { points },
                    symmetric: square,
                }
            }
        }
    }

    /// Smallest positive ray parameter `s` at which `s * dir` (camera frame,
    /// ray from the origin) hits the primitive placed at `pose`.
    pub fn intersect(&self, pose: &Pose, dir: &Vec3) -> Option<f64> {
        match self {
            Primitive::Sphere { radius } => {
                let c = pose.translation;
                let a = dir.norm_squared();
                let b = dir.dot(&c);
                let disc = b * b - a * (c.norm_squared() - radius * radius);
                if disc < 0.0 {
                    return None;
                }
                let s = (b - disc.sqrt()) / a;
                (s > 0.0).then_some(s)
            }
            Primitive::Box { half_extents } => {
                let rt = pose.rotation_matrix().transpose();
                let origin = rt * -pose.translation;
                let d = rt * dir;
                let (mut near, mut far) = (f64::NEG_INFINITY, f64::INFINITY);
                for k in 0..3 {
                    let e = half_extents[k];
                    if d[k] == 0.0 {
                        if origin[k].abs() > e {
                            return None;
                        }
                        continue;
                    }
                    let t0 = (-e - origin[k]) / d[k];
                    let t1 = (e - origin[k]) / d[k];
                    near = near.max(t0.min(t1));
                    far = far.min(t0.max(t1));
                }
                (near <= far && near > 0.0).then_some(near)
            }
        }
    }
}

/// Ground-truth patch of a primitive: its camera-frame extents projected at
/// the centroid depth.
pub fn project_patch(primitive: &Primitive, pose: &Pose, k: &CameraIntrinsics) -> Result<Patch> {
    let t = pose.translation;
    if !(t.z > 0.0) {
        return Err(Error::InvalidDepth(format!("object centroid at z = {}", t.z)));
    }
    let (hx, hy) = primitive.camera_half_extents(&pose.rotation_matrix());
    let (u, v) = k.project(&t);
    let (pw, ph) = (k.fx * hx / t.z, k.fy * hy / t.z);
    Patch::new(u - pw, v - ph, 2.0 * ph, 2.0 * pw)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlacedPrimitive {
    pub primitive: Primitive,
    pub pose: Pose,
}

/// What the depth map stores inside an object's silhouette.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthMode {
    /// Nearest surface along the ray, a physical z-buffer.
    #[default]
    Surface,
    /// The z of the nearest object's centroid.
    Centroid,
}

/// Ray direction through the depth pixel `(x, y)`: depth pixel coordinates
/// map to RGB coordinates by the axis ratios of the two image sizes.
fn depth_pixel_ray(x: usize, y: usize, k: &CameraIntrinsics, s_o: ImageSize, s_d: ImageSize) -> Vec3 {
    let u = x as f64 * f64::from(s_o.width) / f64::from(s_d.width);
    let v = y as f64 * f64::from(s_o.height) / f64::from(s_d.height);
    Vec3::new((u - k.ppx) / k.fx, (v - k.ppy) / k.fy, 1.0)
}

/// Nearest object hit by the ray and the z of the hit.
fn nearest_hit(objects: &[PlacedPrimitive], dir: &Vec3) -> Option<(usize, f64)> {
    objects
        .iter()
        .enumerate()
        .filter_map(|(i, o)| o.primitive.intersect(&o.pose, dir).map(|s| (i, s * dir.z)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

/// Ray-cast depth at resolution `s_d` for a camera whose intrinsics are given
/// at resolution `s_o`. Pixels that hit nothing are invalid.
pub fn render_depth(
    objects: &[PlacedPrimitive],
    k: &CameraIntrinsics,
    s_o: ImageSize,
    s_d: ImageSize,
    mode: DepthMode,
) -> DepthMap {
    let mut dm = DepthMap::invalid(s_d);
    for y in 0..s_d.height as usize {
        for x in 0..s_d.width as usize {
            let dir = depth_pixel_ray(x, y, k, s_o, s_d);
            if let Some((i, z)) = nearest_hit(objects, &dir) {
                let idx = dm.index(x, y);
                dm.depths[idx] = match mode {
                    DepthMode::Surface => z,
                    DepthMode::Centroid => objects[i].pose.translation.z,
                };
                dm.valid[idx] = true;
            }
        }
    }
    dm
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneConfig {
    pub num_objects: usize,
    pub image_size: ImageSize,
    pub depth_size: ImageSize,
    pub intrinsics: CameraIntrinsics,
    /// Geometry of each object class, indexed by class id.
    pub classes: Vec<Primitive>,
    /// Range of centroid depths, meters.
    pub depth_range: (f64, f64),
    pub depth_mode: DepthMode,
    pub seed: u64,
    pub frame_id: u64,
    pub max_attempts: usize,
    /// Minimum gap between patches, RGB pixels.
    pub patch_gap: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            num_objects: 3,
            image_size: ImageSize {
                width: 640,
                height: 480,
            },
            depth_size: ImageSize {
                width: 160,
                height: 120,
            },
            intrinsics: CameraIntrinsics {
                fx: 500.0,
                fy: 500.0,
                ppx: 320.0,
                ppy: 240.0,
            },
            classes: default_classes(),
            depth_range: (0.6, 1.6),
            depth_mode: DepthMode::Surface,
            seed: 0,
            frame_id: 0,
            max_attempts: 1000,
            patch_gap: 8.0,
        }
    }
}

/// Sphere, square-section box, and an asymmetric box.
pub fn default_classes() -> Vec<Primitive> {
    vec![
        Primitive::Sphere { radius: 0.04 },
        Primitive::Box {
            half_extents: [0.035, 0.035, 0.06],
        },
        Primitive::Box {
            half_extents: [0.025, 0.04, 0.06],
        },
    ]
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_objects == 0 {
            return Err(Error::InvalidConfig("num_objects must be at least 1".into()));
        }
        if self.classes.is_empty() {
            return Err(Error::InvalidConfig("at least one object class is required".into()));
        }
        for c in &self.classes {
            c.validate()?;
        }
        let (lo, hi) = self.depth_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::InvalidConfig(format!("depth range ({lo}, {hi}) must be positive and ordered")));
        }
        if !(self.patch_gap >= 0.0) {
            return Err(Error::InvalidConfig("patch_gap must be >= 0".into()));
        }
        self.intrinsics.validate()?;
        ImageSize::new(self.image_size.width, self.image_size.height)?;
        ImageSize::new(self.depth_size.width, self.depth_size.height)?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub frame_id: u64,
    pub num_classes: usize,
    pub image_size: ImageSize,
    pub depth_size: ImageSize,
    pub intrinsics: CameraIntrinsics,
    /// Model points by model reference.
    pub models: BTreeMap<String, ObjectModel>,
    /// Geometry by model reference, when known.
    pub primitives: BTreeMap<String, Primitive>,
    pub objects: Vec<GroundTruthObject>,
    pub depth: DepthMap,
}

pub fn model_ref(class_id: usize) -> String {
    format!("class{class_id}")
}

/// Stream namespaces. A stream id is `domain | frame_id << 32 | slot`, so the
/// scene, the predictions and the depth noise of every frame draw from
/// disjoint ChaCha8 streams even when they share one seed.
pub const SCENE_STREAMS: u64 = 0;
pub const PREDICTION_STREAMS: u64 = 1 << 62;
pub const DEPTH_NOISE_STREAMS: u64 = 2 << 62;

pub fn stream_id(domain: u64, frame_id: u64, slot: u64) -> u64 {
    domain | ((frame_id & 0x3fff_ffff) << 32) | (slot & 0xffff_ffff)
}

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Quat {
    loop {
        let q = Quat::new(normal(rng), normal(rng), normal(rng), normal(rng));
        if q.norm() > 1e-6 {
            return q.normalized().expect("non-zero quaternion");
        }
    }
}

fn patches_separated(a: &Patch, b: &Patch, gap: f64) -> bool {
    a.x_max() + gap <= b.bx || b.x_max() + gap <= a.bx || a.y_max() + gap <= b.by || b.y_max() + gap <= a.by
}

fn inside_frame(p: &Patch, size: ImageSize) -> bool {
    p.bx >= 0.0 && p.by >= 0.0 && p.x_max() <= f64::from(size.width) && p.y_max() <= f64::from(size.height)
}

pub fn generate_scene(cfg: &SceneConfig) -> Result<Scene> {
    cfg.validate()?;
    let k = cfg.intrinsics;
    let (w_o, h_o) = (f64::from(cfg.image_size.width), f64::from(cfg.image_size.height));
    let mut placed: Vec<PlacedPrimitive> = Vec::with_capacity(cfg.num_objects);
    let mut objects: Vec<GroundTruthObject> = Vec::with_capacity(cfg.num_objects);

    for index in 0..cfg.num_objects {
        let mut rng = stream_rng(cfg.seed, stream_id(SCENE_STREAMS, cfg.frame_id, index as u64 + 1));
        let mut done = false;
        for _ in 0..cfg.max_attempts {
            let class_id = rng.random_range(0..cfg.classes.len());
            let primitive = cfg.classes[class_id];
            let rotation = random_rotation(&mut rng);
            let z = rng.random_range(cfg.depth_range.0..=cfg.depth_range.1);
            let (hx, hy) = primitive.camera_half_extents(&rotation.to_matrix()?);
            let (pw, ph) = (k.fx * hx / z, k.fy * hy / z);
            if 2.0 * pw >= w_o || 2.0 * ph >= h_o {
                continue;
            }
            let u = rng.random_range(pw..=w_o - pw);
            let v = rng.random_range(ph..=h_o - ph);
            let translation = Vec3::new((u - k.ppx) * z / k.fx, (v - k.ppy) * z / k.fy, z);
            let pose = Pose::new(rotation, translation)?;
            let patch = project_patch(&primitive, &pose, &k)?;
            if !inside_frame(&patch, cfg.image_size) {
                continue;
            }
            if !objects.iter().all(|o| patches_separated(&o.patch, &patch, cfg.patch_gap)) {
                continue;
            }
            // The depth pixel under the patch center must see this object.
            let (cx, cy) = patch_center(&rescale_patch(&patch, cfg.image_size, cfg.depth_size));
            let (px, py) = (round_pixel(cx), round_pixel(cy));
            if px < 0 || py < 0 || px >= i64::from(cfg.depth_size.width) || py >= i64::from(cfg.depth_size.height) {
                continue;
            }
            let candidate = PlacedPrimitive { primitive, pose };
            let mut all = placed.clone();
            all.push(candidate);
            let dir = depth_pixel_ray(px as usize, py as usize, &k, cfg.image_size, cfg.depth_size);
            if nearest_hit(&all, &dir).map(|(i, _)| i) != Some(index) {
                continue;
            }
            placed.push(candidate);
            objects.push(GroundTruthObject {
                class_id,
                patch,
                pose,
                model_ref: model_ref(class_id),
            });
            done = true;
            break;
        }
        if !done {
            return Err(Error::PlacementFailed {
                object: index,
                attempts: cfg.max_attempts,
            });
        }
    }

    let mut models = BTreeMap::new();
    let mut primitives = BTreeMap::new();
    for (class_id, primitive) in cfg.classes.iter().enumerate() {
        models.insert(model_ref(class_id), primitive.model());
        primitives.insert(model_ref(class_id), *primitive);
    }
    let depth = render_depth(&placed, &k, cfg.image_size, cfg.depth_size, cfg.depth_mode);
    Ok(Scene {
        frame_id: cfg.frame_id,
        num_classes: cfg.classes.len(),
        image_size: cfg.image_size,
        depth_size: cfg.depth_size,
        intrinsics: k,
        models,
        primitives,
        objects,
        depth,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NoiseConfig {
    /// Per-axis translation noise, meters.
    pub translation_sigma: f64,
    /// Per-axis rotation-vector noise, radians.
    pub rotation_sigma: f64,
    /// Noise on each patch parameter, pixels.
    pub patch_sigma: f64,
    /// Probability mass moved off the true class.
    pub confusion: f64,
    /// Additive noise on valid depth pixels, meters.
    pub depth_sigma: f64,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        let sigmas = [
            ("translation_sigma", self.translation_sigma),
            ("rotation_sigma", self.rotation_sigma),
            ("patch_sigma", self.patch_sigma),
            ("depth_sigma", self.depth_sigma),
        ];
        for (name, v) in sigmas {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} = {v} must be >= 0")));
            }
        }
        if !(0.0..=1.0).contains(&self.confusion) {
            return Err(Error::InvalidConfig(format!("confusion {} outside [0, 1]", self.confusion)));
        }
        Ok(())
    }
}

/// `1 - confusion` on `class`, the rest spread evenly over the other
/// entries of `candidates`.
fn confused_distribution(len: usize, class: usize, candidates: &[usize], confusion: f64) -> Result<ClassDistribution> {
    let mut probs = vec![0.0; len];
    let others: Vec<usize> = candidates.iter().copied().filter(|c| *c != class).collect();
    probs[class] = 1.0 - confusion;
    if others.is_empty() {
        probs[class] = 1.0;
    } else {
        for c in others.iter() {
            probs[*c] += confusion / others.len() as f64;
        }
    }
    ClassDistribution::new(probs)
}

/// Noisy prediction set of size `n_c`: one prediction per ground-truth
/// object, the rest no-object predictions with random patches. Slots are
/// shuffled so the matching has work to do.
pub fn perturb_predictions(scene: &Scene, noise: &NoiseConfig, n_c: usize) -> Result<Vec<PredictionTuple>> {
    noise.validate()?;
    if n_c < scene.objects.len() {
        return Err(Error::CardinalityMismatch {
            expected: scene.objects.len(),
            found: n_c,
        });
    }
    let num_classes = scene.num_classes;
    let no_object = num_classes;
    let real: Vec<usize> = (0..num_classes).collect();
    let everything: Vec<usize> = (0..=num_classes).collect();

    let mut slots: Vec<usize> = (0..n_c).collect();
    slots.shuffle(&mut stream_rng(noise.seed, stream_id(PREDICTION_STREAMS, scene.frame_id, 0)));

    let mut preds: Vec<Option<PredictionTuple>> = vec![None; n_c];
    for (index, slot) in slots.iter().enumerate() {
        let mut rng = stream_rng(noise.seed, stream_id(PREDICTION_STREAMS, scene.frame_id, index as u64 + 1));
        let pred = match scene.objects.get(index) {
            Some(object) => {
                let dt = Vec3::new(normal(&mut rng), normal(&mut rng), normal(&mut rng)) * noise.translation_sigma;
                let dr = Vec3::new(normal(&mut rng), normal(&mut rng), normal(&mut rng)) * noise.rotation_sigma;
                let rotation = if dr == Vec3::zeros() {
                    object.pose.rotation
                } else {
                    Quat::from_scaled_axis(dr).mul(&object.pose.rotation).normalized()?
                };
                let mut jitter = || normal(&mut rng) * noise.patch_sigma;
                let p = object.patch;
                let patch = Patch::new(
                    p.bx + jitter(),
                    p.by + jitter(),
                    (p.h + jitter()).max(0.5),
                    (p.w + jitter()).max(0.5),
                )?;
                PredictionTuple {
                    class_dist: confused_distribution(num_classes + 1, object.class_id, &real, noise.confusion)?,
                    patch,
                    pose: Pose::new(rotation, object.pose.translation + dt)?,
                }
            }
            None => {
                let (w_o, h_o) = (f64::from(scene.image_size.width), f64::from(scene.image_size.height));
                let w = rng.random_range(10.0..=80.0f64).min(w_o);
                let h = rng.random_range(10.0..=80.0f64).min(h_o);
                let patch = Patch::new(rng.random_range(0.0..=w_o - w), rng.random_range(0.0..=h_o - h), h, w)?;
                let z = rng.random_range(0.5..=2.0);
                let (u, v) = patch_center(&patch);
                let k = &scene.intrinsics;
                let translation = Vec3::new((u - k.ppx) * z / k.fx, (v - k.ppy) * z / k.fy, z);
                PredictionTuple {
                    class_dist: confused_distribution(num_classes + 1, no_object, &everything, noise.confusion)?,
                    patch,
                    pose: Pose::new(random_rotation(&mut rng), translation)?,
                }
            }
        };
        preds[*slot] = Some(pred);
    }
    Ok(preds.into_iter().map(|p| p.expect("every slot filled")).collect())
}

/// Depth estimate: Gaussian noise on every valid pixel, floored at 1 mm.
pub fn perturb_depth(depth: &DepthMap, noise: &NoiseConfig, frame_id: u64) -> DepthMap {
    let mut out = depth.clone();
    if noise.depth_sigma == 0.0 {
        return out;
    }
    let mut rng = stream_rng(noise.seed, stream_id(DEPTH_NOISE_STREAMS, frame_id, 0));
    for (d, v) in out.depths.iter_mut().zip(&out.valid) {
        if *v {
            *d = (*d + normal(&mut rng) * noise.depth_sigma).max(1e-3);
        }
    }
    out
}
