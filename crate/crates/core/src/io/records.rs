//! Line-delimited JSON records for scenes, predictions and intrinsics.
//!
//! Every line is one object with a `kind` field. Keys are written in
//! lexicographic order and floats in shortest round-trip form, so a
//! save/load cycle reproduces every numeric field bit for bit.
//!
//! A scene file is a sequence of frames, each a `frame` header followed by
//! `num_models` `model` records and `num_objects` `object` records. A
//! prediction file is a sequence of `frame` headers each followed by `n_c`
//! `prediction` records. Intrinsics live in their own file as `intrinsics`
//! records addressed by id, and depth maps in one binary file per frame.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::depth_file::{encode_depth, read_depth};
use super::{read_text, Artifact};
use crate::error::{Error, Result};
use crate::simulate::{Primitive, Scene};
use crate::types::{
    CameraIntrinsics, ClassDistribution, GroundTruthObject, ImageSize, ObjectModel, Patch, PointSet, Pose,
    PredictionTuple, Quat, Vec3,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PatchRecord {
    bx: f64,
    by: f64,
    h: f64,
    w: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseRecord {
    rotation: [f64; 4],
    translation: [f64; 3],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
enum PrimitiveRecord {
    Sphere { radius: f64 },
    Box { half_extents: [f64; 3] },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneHeader {
    schema_version: u32,
    frame_id: u64,
    num_classes: usize,
    image_size: [u32; 2],
    depth_size: [u32; 2],
    intrinsics: String,
    intrinsics_file: String,
    depth_file: String,
    num_models: usize,
    num_objects: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelRecord {
    id: String,
    symmetric: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    primitive: Option<PrimitiveRecord>,
    points: Vec<[f64; 3]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectRecord {
    index: usize,
    class_id: usize,
    model: String,
    patch: PatchRecord,
    pose: PoseRecord,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntrinsicsRecord {
    schema_version: u32,
    id: String,
    fx: f64,
    fy: f64,
    ppx: f64,
    ppy: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictionHeader {
    schema_version: u32,
    frame_id: u64,
    n_c: usize,
    num_classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_digest: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictionRecord {
    query: usize,
    class_probs: Vec<f64>,
    patch: PatchRecord,
    pose: PoseRecord,
}

/// The prediction set of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionFrame {
    pub frame_id: u64,
    pub num_classes: usize,
    /// Digest of the configuration that produced the file, if recorded.
    pub config_digest: Option<String>,
    pub predictions: Vec<PredictionTuple>,
}

impl From<&Patch> for PatchRecord {
    fn from(p: &Patch) -> Self {
        PatchRecord {
            bx: p.bx,
            by: p.by,
            h: p.h,
            w: p.w,
        }
    }
}

impl From<&Pose> for PoseRecord {
    fn from(p: &Pose) -> Self {
        PoseRecord {
            rotation: p.rotation.to_array(),
            translation: [p.translation.x, p.translation.y, p.translation.z],
        }
    }
}

impl PatchRecord {
    fn to_patch(&self) -> Result<Patch> {
        Patch::new(self.bx, self.by, self.h, self.w)
    }
}

impl PoseRecord {
    fn to_pose(&self) -> Result<Pose> {
        let [x, y, z] = self.translation;
        Pose::new(Quat::from_array(self.rotation), Vec3::new(x, y, z))
    }
}

impl From<&Primitive> for PrimitiveRecord {
    fn from(p: &Primitive) -> Self {
        match *p {
            Primitive::Sphere { radius } => PrimitiveRecord::Sphere { radius },
            Primitive::Box { half_extents } => PrimitiveRecord::Box { half_extents },
        }
    }
}

impl PrimitiveRecord {
    fn to_primitive(&self) -> Result<Primitive> {
        let p = match *self {
            PrimitiveRecord::Sphere { radius } => Primitive::Sphere { radius },
            PrimitiveRecord::Box { half_extents } => Primitive::Box { half_extents },
        };
        p.validate()?;
        Ok(p)
    }
}

fn line_of(kind: &str, record: &impl Serialize) -> String {
    let mut value = serde_json::to_value(record).expect("records serialize");
    value
        .as_object_mut()
        .expect("records are objects")
        .insert("kind".into(), Value::String(kind.into()));
    let mut line = serde_json::to_string(&value).expect("values serialize");
    line.push('\n');
    line
}

/// One parsed line: its 1-based number, `kind`, and remaining fields.
struct Line {
    number: usize,
    kind: String,
    fields: Value,
}

struct Reader<'a> {
    path: &'a str,
    lines: std::iter::Peekable<std::vec::IntoIter<(usize, &'a str)>>,
    last: usize,
}

impl<'a> Reader<'a> {
    fn new(path: &'a str, text: &'a str) -> Self {
        let lines: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| !l.trim().is_empty())
            .collect();
        let last = text.lines().count();
        Reader {
            path,
            lines: lines.into_iter().peekable(),
            last,
        }
    }

    fn error(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_string(),
            line,
            message: message.into(),
        }
    }

    fn at_end(&mut self) -> bool {
        self.lines.peek().is_none()
    }

    fn next(&mut self, what: &str) -> Result<Line> {
        let Some((number, text)) = self.lines.next() else {
            return Err(self.error(self.last + 1, format!("unexpected end of file, expected {what}")));
        };
        let mut value: Value =
            serde_json::from_str(text).map_err(|e| self.error(number, format!("malformed JSON: {e}")))?;
        let object = value
            .as_object_mut()
            .ok_or_else(|| self.error(number, "record is not a JSON object"))?;
        let kind = match object.remove("kind") {
            Some(Value::String(k)) => k,
            _ => return Err(self.error(number, "missing string field `kind`")),
        };
        Ok(Line {
            number,
            kind,
            fields: value,
        })
    }

    fn expect<T: DeserializeOwned>(&mut self, kind: &str) -> Result<(usize, T)> {
        let line = self.next(&format!("a `{kind}` record"))?;
        if line.kind != kind {
            return Err(self.error(
                line.number,
                format!("expected a `{kind}` record, found `{}`", line.kind),
            ));
        }
        let record = serde_json::from_value(line.fields)
            .map_err(|e| self.error(line.number, format!("`{kind}` record: {e}")))?;
        Ok((line.number, record))
    }

    /// Attaches line context to validation failures.
    fn check<T>(&self, line: usize, r: Result<T>) -> Result<T> {
        r.map_err(|e| self.error(line, e.to_string()))
    }
}

fn check_schema(reader: &Reader<'_>, line: usize, version: u32) -> Result<()> {
    if version == SCHEMA_VERSION {
        Ok(())
    } else {
        Err(reader.error(line, format!("unsupported schema_version {version}")))
    }
}

fn size_of(pair: [u32; 2]) -> Result<ImageSize> {
    ImageSize::new(pair[0], pair[1])
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent().unwrap_or_else(|| Path::new("")).join(name)
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scene".into())
}

/// Name of the intrinsics file written next to a scene file.
pub fn intrinsics_file_name(scene_path: &Path) -> String {
    format!("{}.intrinsics.jsonl", file_stem(scene_path))
}

/// Name of the depth file of one frame written next to a scene file.
pub fn depth_file_name(scene_path: &Path, frame_id: u64) -> String {
    format!("{}.depth_{frame_id:04}.bin", file_stem(scene_path))
}

/// Serialized scene file plus its intrinsics and depth files, ready to be
/// written together.
pub fn scene_artifacts(path: &Path, scenes: &[Scene], depth_scale: f64) -> Result<Vec<Artifact>> {
    let mut cameras: Vec<CameraIntrinsics> = Vec::new();
    let mut text = String::new();
    let mut depth_files = Vec::new();
    let intrinsics_name = intrinsics_file_name(path);
    let mut seen_frames = std::collections::BTreeSet::new();
    for scene in scenes {
        if !seen_frames.insert(scene.frame_id) {
            return Err(Error::InvalidConfig(format!("frame id {} appears twice", scene.frame_id)));
        }
        let camera = match cameras.iter().position(|c| *c == scene.intrinsics) {
            Some(i) => i,
            None => {
                cameras.push(scene.intrinsics);
                cameras.len() - 1
            }
        };
        let depth_name = depth_file_name(path, scene.frame_id);
        text.push_str(&line_of(
            "frame",
            &SceneHeader {
                schema_version: SCHEMA_VERSION,
                frame_id: scene.frame_id,
                num_classes: scene.num_classes,
                image_size: [scene.image_size.width, scene.image_size.height],
                depth_size: [scene.depth_size.width, scene.depth_size.height],
                intrinsics: format!("cam{camera}"),
                intrinsics_file: intrinsics_name.clone(),
                depth_file: depth_name.clone(),
                num_models: scene.models.len(),
                num_objects: scene.objects.len(),
            },
        ));
        for (id, model) in &scene.models {
            text.push_str(&line_of(
                "model",
                &ModelRecord {
                    id: id.clone(),
                    symmetric: model.symmetric,
                    primitive: scene.primitives.get(id).map(PrimitiveRecord::from),
                    points: model.points.points.iter().map(|p| [p.x, p.y, p.z]).collect(),
                },
            ));
        }
        for (index, object) in scene.objects.iter().enumerate() {
            text.push_str(&line_of(
                "object",
                &ObjectRecord {
                    index,
                    class_id: object.class_id,
                    model: object.model_ref.clone(),
                    patch: (&object.patch).into(),
                    pose: (&object.pose).into(),
                },
            ));
        }
        if scene.depth.size != scene.depth_size {
            return Err(Error::InvalidSize(format!(
                "frame {}: depth map is {}x{}, header says {}x{}",
                scene.frame_id,
                scene.depth.size.width,
                scene.depth.size.height,
                scene.depth_size.width,
                scene.depth_size.height
            )));
        }
        depth_files.push(Artifact::new(
            sibling(path, &depth_name),
            "depth",
            encode_depth(&scene.depth, depth_scale)?,
        ));
    }
    let mut intrinsics = String::new();
    for (i, c) in cameras.iter().enumerate() {
        intrinsics.push_str(&line_of(
            "intrinsics",
            &IntrinsicsRecord {
                schema_version: SCHEMA_VERSION,
                id: format!("cam{i}"),
                fx: c.fx,
                fy: c.fy,
                ppx: c.ppx,
                ppy: c.ppy,
            },
        ));
    }
    let mut out = vec![
        Artifact::new(path.to_path_buf(), "scene", text.into_bytes()),
        Artifact::new(sibling(path, &intrinsics_name), "intrinsics", intrinsics.into_bytes()),
    ];
    out.extend(depth_files);
    Ok(out)
}

pub fn save_scenes(path: &Path, scenes: &[Scene], depth_scale: f64) -> Result<()> {
    super::write_all_atomic(&scene_artifacts(path, scenes, depth_scale)?)
}

pub fn save_scene(path: &Path, scene: &Scene, depth_scale: f64) -> Result<()> {
    save_scenes(path, std::slice::from_ref(scene), depth_scale)
}

pub fn parse_intrinsics(text: &str, path: &str) -> Result<BTreeMap<String, CameraIntrinsics>> {
    let mut reader = Reader::new(path, text);
    let mut out = BTreeMap::new();
    while !reader.at_end() {
        let (line, rec): (usize, IntrinsicsRecord) = reader.expect("intrinsics")?;
        check_schema(&reader, line, rec.schema_version)?;
        let k = reader.check(line, CameraIntrinsics::new(rec.fx, rec.fy, rec.ppx, rec.ppy))?;
        if out.insert(rec.id.clone(), k).is_some() {
            return Err(reader.error(line, format!("duplicate intrinsics id `{}`", rec.id)));
        }
    }
    Ok(out)
}

/// Loads every frame of a scene file, resolving intrinsics and depth files
/// relative to the scene file's directory.
pub fn load_scenes(path: &Path) -> Result<Vec<Scene>> {
    let text = read_text(path)?;
    let shown = path.display().to_string();
    let mut reader = Reader::new(&shown, &text);
    let mut intrinsics_cache: BTreeMap<String, BTreeMap<String, CameraIntrinsics>> = BTreeMap::new();
    let mut scenes: Vec<Scene> = Vec::new();
    while !reader.at_end() {
        let (hline, header): (usize, SceneHeader) = reader.expect("frame")?;
        check_schema(&reader, hline, header.schema_version)?;
        if scenes.iter().any(|s| s.frame_id == header.frame_id) {
            return Err(reader.error(hline, format!("frame id {} appears twice", header.frame_id)));
        }
        let image_size = reader.check(hline, size_of(header.image_size))?;
        let depth_size = reader.check(hline, size_of(header.depth_size))?;

        let mut models = BTreeMap::new();
        let mut primitives = BTreeMap::new();
        for _ in 0..header.num_models {
            let (line, rec): (usize, ModelRecord) = reader.expect("model")?;
            let points = rec.points.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect();
            let points = reader.check(line, PointSet::new(points))?;
            if let Some(p) = &rec.primitive {
                primitives.insert(rec.id.clone(), reader.check(line, p.to_primitive())?);
            }
            if models
                .insert(
                    rec.id.clone(),
                    ObjectModel {
                        points,
                        symmetric: rec.symmetric,
                    },
                )
                .is_some()
            {
                return Err(reader.error(line, format!("duplicate model id `{}`", rec.id)));
            }
        }

        let mut objects = Vec::with_capacity(header.num_objects);
        for expected in 0..header.num_objects {
            let (line, rec): (usize, ObjectRecord) = reader.expect("object")?;
            if rec.index != expected {
                return Err(reader.error(line, format!("object index {} out of order, expected {expected}", rec.index)));
            }
            if rec.class_id >= header.num_classes {
                return Err(reader.error(
                    line,
                    Error::InvalidClass {
                        class_id: rec.class_id,
                        num_classes: header.num_classes,
                    }
                    .to_string(),
                ));
            }
            if !models.contains_key(&rec.model) {
                return Err(Error::DanglingReference(format!("{shown}: line {line}: model `{}` not defined in frame", rec.model)));
            }
            objects.push(GroundTruthObject {
                class_id: rec.class_id,
                patch: reader.check(line, rec.patch.to_patch())?,
                pose: reader.check(line, rec.pose.to_pose())?,
                model_ref: rec.model,
            });
        }

        if !intrinsics_cache.contains_key(&header.intrinsics_file) {
            let ipath = sibling(path, &header.intrinsics_file);
            let parsed = parse_intrinsics(&read_text(&ipath)?, &ipath.display().to_string())?;
            intrinsics_cache.insert(header.intrinsics_file.clone(), parsed);
        }
        let intrinsics = *intrinsics_cache[&header.intrinsics_file]
            .get(&header.intrinsics)
            .ok_or_else(|| {
                Error::DanglingReference(format!(
                    "{shown}: line {hline}: intrinsics `{}` not found in {}",
                    header.intrinsics, header.intrinsics_file
                ))
            })?;

        let depth = read_depth(&sibling(path, &header.depth_file))?;
        if depth.size != depth_size {
            return Err(reader.error(
                hline,
                format!(
                    "depth file {} is {}x{}, header says {}x{}",
                    header.depth_file, depth.size.width, depth.size.height, depth_size.width, depth_size.height
                ),
            ));
        }
        scenes.push(Scene {
            frame_id: header.frame_id,
            num_classes: header.num_classes,
            image_size,
            depth_size,
            intrinsics,
            models,
            primitives,
            objects,
            depth,
        });
    }
    if scenes.is_empty() {
        return Err(reader.error(1, "file contains no frames"));
    }
    Ok(scenes)
}

/// Loads a scene file holding exactly one frame.
pub fn load_scene(path: &Path) -> Result<Scene> {
    let mut scenes = load_scenes(path)?;
    if scenes.len() != 1 {
        return Err(Error::CardinalityMismatch {
            expected: 1,
            found: scenes.len(),
        });
    }
    Ok(scenes.pop().expect("one scene"))
}

pub fn encode_predictions(frames: &[PredictionFrame]) -> Vec<u8> {
    let mut text = String::new();
    for frame in frames {
        text.push_str(&line_of(
            "frame",
            &PredictionHeader {
                schema_version: SCHEMA_VERSION,
                frame_id: frame.frame_id,
                n_c: frame.predictions.len(),
                num_classes: frame.num_classes,
                config_digest: frame.config_digest.clone(),
            },
        ));
        for (query, p) in frame.predictions.iter().enumerate() {
            text.push_str(&line_of(
                "prediction",
                &PredictionRecord {
                    query,
                    class_probs: p.class_dist.probs().to_vec(),
                    patch: (&p.patch).into(),
                    pose: (&p.pose).into(),
                },
            ));
        }
    }
    text.into_bytes()
}

pub fn save_predictions(path: &Path, frames: &[PredictionFrame]) -> Result<()> {
    super::write_all_atomic(&[Artifact::new(path.to_path_buf(), "predictions", encode_predictions(frames))])
}

pub fn parse_predictions(text: &str, path: &str) -> Result<Vec<PredictionFrame>> {
    let mut reader = Reader::new(path, text);
    let mut frames: Vec<PredictionFrame> = Vec::new();
    while !reader.at_end() {
        let (hline, header): (usize, PredictionHeader) = reader.expect("frame")?;
        check_schema(&reader, hline, header.schema_version)?;
        if frames.iter().any(|f| f.frame_id == header.frame_id) {
            return Err(reader.error(hline, format!("frame id {} appears twice", header.frame_id)));
        }
        let mut predictions = Vec::with_capacity(header.n_c);
        for expected in 0..header.n_c {
            let (line, rec): (usize, PredictionRecord) = reader.expect("prediction")?;
            if rec.query != expected {
                return Err(reader.error(line, format!("query {} out of order, expected {expected}", rec.query)));
            }
            if rec.class_probs.len() != header.num_classes + 1 {
                return Err(reader.error(
                    line,
                    format!(
                        "class_probs has {} entries, expected {} classes plus no-object",
                        rec.class_probs.len(),
                        header.num_classes
                    ),
                ));
            }
            predictions.push(PredictionTuple {
                class_dist: reader.check(line, ClassDistribution::new(rec.class_probs))?,
                patch: reader.check(line, rec.patch.to_patch())?,
                pose: reader.check(line, rec.pose.to_pose())?,
            });
        }
        frames.push(PredictionFrame {
            frame_id: header.frame_id,
            num_classes: header.num_classes,
            config_digest: header.config_digest,
            predictions,
        });
    }
    if frames.is_empty() {
        return Err(reader.error(1, "file contains no frames"));
    }
    Ok(frames)
}

pub fn load_predictions(path: &Path) -> Result<Vec<PredictionFrame>> {
    parse_predictions(&read_text(path)?, &path.display().to_string())
}
