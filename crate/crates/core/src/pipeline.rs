//! Batch workflows over paired scene and prediction frames. Frames are
//! processed independently on a worker pool and reported in frame-id order.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde_json::{json, Value};

use crate::assignment::{build_cost_matrix, hungarian_assign, pad_targets, Assignment, CostMatrix};
use crate::error::{Error, Result};
use crate::io::{PredictionFrame, RunConfig};
use crate::losses::{hungarian_loss, LossBreakdown};
use crate::metrics::{add_metric, adds_metric, threshold_accuracy, ObjectPoseError, PoseMetricReport};
use crate::refine::refine_pose;
use crate::simulate::{generate_scene, perturb_depth, perturb_predictions, Scene};
use crate::types::PredictionTuple;

/// Runs `f` over `items` on a pool of `jobs` threads (0 = one per core),
/// keeping input order. The first error in input order wins.
pub fn run_parallel<T, R, F>(jobs: usize, items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;
    pool.install(|| items.par_iter().map(&f).collect::<Vec<_>>())
        .into_iter()
        .collect()
}

/// Pairs every scene with the prediction frame of the same id, sorted by
/// frame id, checking the slot count against `n_c`.
pub fn pair_frames<'a>(
    scenes: &'a [Scene],
    preds: &'a [PredictionFrame],
    n_c: usize,
) -> Result<Vec<(&'a Scene, &'a PredictionFrame)>> {
    let mut pairs = Vec::with_capacity(scenes.len());
    for scene in scenes {
        let p = preds
            .iter()
            .find(|p| p.frame_id == scene.frame_id)
            .ok_or_else(|| Error::DanglingReference(format!("frame {} has no predictions", scene.frame_id)))?;
        if p.predictions.len() != n_c {
            return Err(Error::CardinalityMismatch {
                expected: n_c,
                found: p.predictions.len(),
            });
        }
        if p.num_classes != scene.num_classes {
            return Err(Error::InvalidConfig(format!(
                "frame {}: predictions cover {} classes, scene has {}",
                scene.frame_id, p.num_classes, scene.num_classes
            )));
        }
        pairs.push((scene, p));
    }
    if let Some(p) = preds.iter().find(|p| !scenes.iter().any(|s| s.frame_id == p.frame_id)) {
        return Err(Error::DanglingReference(format!("predictions for unknown frame {}", p.frame_id)));
    }
    pairs.sort_by_key(|(s, _)| s.frame_id);
    Ok(pairs)
}

pub struct FrameMatch {
    pub frame_id: u64,
    pub num_objects: usize,
    pub costs: CostMatrix,
    pub assignment: Assignment,
}

pub fn match_frame(scene: &Scene, preds: &[PredictionTuple], cfg: &RunConfig) -> Result<FrameMatch> {
    let targets = pad_targets(&scene.objects, &scene.models, preds.len())?;
    let costs = build_cost_matrix(&targets, preds, &cfg.match_weights())?;
    let assignment = hungarian_assign(&costs)?;
    Ok(FrameMatch {
        frame_id: scene.frame_id,
        num_objects: scene.objects.len(),
        costs,
        assignment,
    })
}

pub struct MatchReport {
    pub config_digest: String,
    pub frames: Vec<FrameMatch>,
}

pub fn match_report(scenes: &[Scene], preds: &[PredictionFrame], cfg: &RunConfig) -> Result<MatchReport> {
    let pairs = pair_frames(scenes, preds, cfg.n_c)?;
    let frames = run_parallel(cfg.jobs, &pairs, |(s, p)| match_frame(s, &p.predictions, cfg))?;
    Ok(MatchReport {
        config_digest: cfg.digest(),
        frames,
    })
}

impl MatchReport {
    pub fn total_cost(&self) -> f64 {
        self.frames.iter().map(|f| f.assignment.total_cost).sum()
    }

    pub fn to_json(&self) -> Value {
        let frames: Vec<Value> = self
            .frames
            .iter()
            .map(|f| {
                let objects: Vec<Value> = (0..f.num_objects)
                    .map(|i| {
                        let j = f.assignment.perm[i];
                        json!({"object": i, "prediction": j, "cost": f.costs.get(i, j)})
                    })
                    .collect();
                json!({
                    "frame_id": f.frame_id,
                    "permutation": f.assignment.perm,
                    "total_cost": f.assignment.total_cost,
                    "objects": objects,
                })
            })
            .collect();
        json!({
            "command": "match",
            "config_digest": self.config_digest,
            "frames": frames,
            "total_cost": self.total_cost(),
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for f in &self.frames {
            let _ = writeln!(s, "frame {}: total cost {:.6}", f.frame_id, f.assignment.total_cost);
            for i in 0..f.num_objects {
                let j = f.assignment.perm[i];
                let _ = writeln!(s, "  object {i} -> prediction {j}  cost {:.6}", f.costs.get(i, j));
            }
            let _ = writeln!(s, "  permutation {:?}", f.assignment.perm);
        }
        let _ = writeln!(s, "total cost {:.6}", self.total_cost());
        let _ = writeln!(s, "config {}", self.config_digest);
        s
    }
}

pub struct LossReport {
    pub config_digest: String,
    pub frames: Vec<(u64, LossBreakdown)>,
}

pub fn loss_report(scenes: &[Scene], preds: &[PredictionFrame], cfg: &RunConfig) -> Result<LossReport> {
    let pairs = pair_frames(scenes, preds, cfg.n_c)?;
    let frames = run_parallel(cfg.jobs, &pairs, |(s, p)| {
        let m = match_frame(s, &p.predictions, cfg)?;
        let targets = pad_targets(&s.objects, &s.models, cfg.n_c)?;
        let loss = hungarian_loss(&targets, &p.predictions, &m.assignment, &cfg.loss_weights())?;
        Ok((s.frame_id, loss))
    })?;
    Ok(LossReport {
        config_digest: cfg.digest(),
        frames,
    })
}

impl LossReport {
    pub fn mean_total(&self) -> f64 {
        self.frames.iter().map(|(_, l)| l.total()).sum::<f64>() / self.frames.len() as f64
    }

    pub fn to_json(&self) -> Value {
        let frames: Vec<Value> = self
            .frames
            .iter()
            .map(|(id, l)| {
                json!({"frame_id": id, "class": l.class, "patch": l.patch, "pose": l.pose, "total": l.total()})
            })
            .collect();
        json!({
            "command": "loss",
            "config_digest": self.config_digest,
            "frames": frames,
            "mean_total": self.mean_total(),
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{:>8} {:>12} {:>12} {:>12} {:>12}\n", "frame", "class", "patch", "pose", "total");
        for (id, l) in &self.frames {
            let _ = writeln!(
                s,
                "{id:>8} {:>12.6} {:>12.6} {:>12.6} {:>12.6}",
                l.class,
                l.patch,
                l.pose,
                l.total()
            );
        }
        let _ = writeln!(s, "{:>8} {:>12} {:>12} {:>12} {:>12.6}", "mean", "", "", "", self.mean_total());
        let _ = writeln!(s, "config {}", self.config_digest);
        s
    }
}

/// Matched prediction index and pose errors for every ground-truth object of
/// one frame.
fn frame_errors(scene: &Scene, preds: &[PredictionTuple], perm: &[usize]) -> Result<Vec<(usize, ObjectPoseError)>> {
    scene
        .objects
        .iter()
        .enumerate()
        .map(|(i, object)| {
            let model = scene
                .models
                .get(&object.model_ref)
                .ok_or_else(|| Error::DanglingReference(format!("model '{}'", object.model_ref)))?;
            let pred = &preds[perm[i]];
            Ok((
                perm[i],
                ObjectPoseError {
                    frame_id: scene.frame_id,
                    object_index: i,
                    class_id: object.class_id,
                    add: add_metric(&object.pose, &pred.pose, &model.points)?,
                    adds: adds_metric(&object.pose, &pred.pose, &model.points)?,
                },
            ))
        })
        .collect()
}

pub struct EvalReport {
    pub config_digest: String,
    pub matched: Vec<usize>,
    pub metrics: PoseMetricReport,
    /// Fraction of objects with ADD / ADD-S at or below the threshold,
    /// overall and per class in the order of `metrics.classes`.
    pub accuracy: (f64, f64),
    pub class_accuracy: Vec<(f64, f64)>,
}

pub fn eval_report(scenes: &[Scene], preds: &[PredictionFrame], cfg: &RunConfig) -> Result<EvalReport> {
    let pairs = pair_frames(scenes, preds, cfg.n_c)?;
    let per_frame = run_parallel(cfg.jobs, &pairs, |(s, p)| {
        let m = match_frame(s, &p.predictions, cfg)?;
        frame_errors(s, &p.predictions, &m.assignment.perm)
    })?;
    let (matched, errors): (Vec<usize>, Vec<ObjectPoseError>) = per_frame.into_iter().flatten().unzip();
    if errors.is_empty() {
        return Err(Error::EmptyInput);
    }
    let t = cfg.auc_threshold;
    let accuracy_of = |errs: &[&ObjectPoseError]| -> Result<(f64, f64)> {
        let add: Vec<f64> = errs.iter().map(|e| e.add).collect();
        let adds: Vec<f64> = errs.iter().map(|e| e.adds).collect();
        Ok((threshold_accuracy(&add, t)?, threshold_accuracy(&adds, t)?))
    };
    let all: Vec<&ObjectPoseError> = errors.iter().collect();
    let accuracy = accuracy_of(&all)?;
    let metrics = PoseMetricReport::from_errors(errors, t)?;
    let class_accuracy = metrics
        .classes
        .iter()
        .map(|c| {
            let errs: Vec<&ObjectPoseError> = metrics.objects.iter().filter(|e| e.class_id == c.class_id).collect();
            accuracy_of(&errs)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        config_digest: cfg.digest(),
        matched,
        metrics,
        accuracy,
        class_accuracy,
    })
}

impl EvalReport {
    pub fn to_json(&self) -> Value {
        let m = &self.metrics;
        let objects: Vec<Value> = m
            .objects
            .iter()
            .zip(&self.matched)
            .map(|(e, j)| {
                json!({
                    "frame_id": e.frame_id,
                    "object": e.object_index,
                    "class_id": e.class_id,
                    "prediction": j,
                    "add": e.add,
                    "adds": e.adds,
                })
            })
            .collect();
        let classes: Vec<Value> = m
            .classes
            .iter()
            .zip(&self.class_accuracy)
            .map(|(c, (acc_add, acc_adds))| {
                json!({
                    "class_id": c.class_id,
                    "count": c.count,
                    "mean_add": c.mean_add,
                    "mean_adds": c.mean_adds,
                    "auc_add": c.auc_add,
                    "auc_adds": c.auc_adds,
                    "accuracy_add": acc_add,
                    "accuracy_adds": acc_adds,
                })
            })
            .collect();
        json!({
            "command": "eval",
            "config_digest": self.config_digest,
            "threshold": m.max_threshold,
            "objects": objects,
            "classes": classes,
            "count": m.objects.len(),
            "mean_add": m.mean_add,
            "mean_adds": m.mean_adds,
            "auc_add": m.auc_add,
            "auc_adds": m.auc_adds,
            "accuracy_add": self.accuracy.0,
            "accuracy_adds": self.accuracy.1,
        })
    }

    pub fn to_text(&self) -> String {
        let m = &self.metrics;
        let mut s = format!(
            "{:>6} {:>6} {:>10} {:>10} {:>8} {:>8} {:>8} {:>8}\n",
            "class", "count", "ADD", "ADD-S", "AUC", "AUC-S", "acc", "acc-S"
        );
        for (c, (a, asym)) in m.classes.iter().zip(&self.class_accuracy) {
            let _ = writeln!(
                s,
                "{:>6} {:>6} {:>10.6} {:>10.6} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
                c.class_id, c.count, c.mean_add, c.mean_adds, c.auc_add, c.auc_adds, a, asym
            );
        }
        let _ = writeln!(
            s,
            "{:>6} {:>6} {:>10.6} {:>10.6} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            "mean",
            m.objects.len(),
            m.mean_add,
            m.mean_adds,
            m.auc_add,
            m.auc_adds,
            self.accuracy.0,
            self.accuracy.1
        );
        let _ = writeln!(s, "threshold {} m, config {}", m.max_threshold, self.config_digest);
        s
    }
}

/// Per-object ADD of the matched prediction before and after refinement.
#[derive(Clone, Debug, PartialEq)]
pub struct RefineDelta {
    pub frame_id: u64,
    pub object_index: usize,
    pub class_id: usize,
    pub prediction: usize,
    pub add_before: f64,
    pub add_after: f64,
}

pub struct RefineOutcome {
    pub config_digest: String,
    pub weights: (f64, f64),
    pub frames: Vec<PredictionFrame>,
    pub deltas: Vec<RefineDelta>,
    pub refined: usize,
    /// Predictions left unchanged because no depth was found near the patch
    /// center.
    pub degraded_no_depth: usize,
    /// Predictions left unchanged because the patch center fell outside the
    /// depth map.
    pub out_of_bounds: usize,
    /// Predictions whose most likely class is no-object, left unchanged.
    pub skipped_no_object: usize,
}

struct FrameRefinement {
    frame: PredictionFrame,
    deltas: Vec<RefineDelta>,
    counts: [usize; 4],
}

fn refine_frame(scene: &Scene, pf: &PredictionFrame, cfg: &RunConfig, digest: &str) -> Result<FrameRefinement> {
    let fusion = cfg.fusion()?;
    let mut counts = [0usize; 4];
    let mut refined = Vec::with_capacity(pf.predictions.len());
    for pred in &pf.predictions {
        if !pred.class_dist.predicts_object() {
            counts[3] += 1;
            refined.push(pred.clone());
            continue;
        }
        match refine_pose(pred, &scene.depth, scene.image_size, &scene.intrinsics, &fusion) {
            Ok(r) => {
                counts[if r.degraded { 1 } else { 0 }] += 1;
                refined.push(PredictionTuple {
                    pose: r.pose,
                    ..pred.clone()
                });
            }
            Err(Error::OutOfBounds { .. }) => {
                counts[2] += 1;
                refined.push(pred.clone());
            }
            Err(e) => return Err(e),
        }
    }
    let m = match_frame(scene, &pf.predictions, cfg)?;
    let before = frame_errors(scene, &pf.predictions, &m.assignment.perm)?;
    let after = frame_errors(scene, &refined, &m.assignment.perm)?;
    let deltas = before
        .into_iter()
        .zip(after)
        .map(|((j, b), (_, a))| RefineDelta {
            frame_id: b.frame_id,
            object_index: b.object_index,
            class_id: b.class_id,
            prediction: j,
            add_before: b.add,
            add_after: a.add,
        })
        .collect();
    Ok(FrameRefinement {
        frame: PredictionFrame {
            frame_id: pf.frame_id,
            num_classes: pf.num_classes,
            config_digest: Some(digest.to_string()),
            predictions: refined,
        },
        deltas,
        counts,
    })
}

pub fn refine_frames(scenes: &[Scene], preds: &[PredictionFrame], cfg: &RunConfig) -> Result<RefineOutcome> {
    let fusion = cfg.fusion()?;
    let digest = cfg.digest();
    let pairs = pair_frames(scenes, preds, cfg.n_c)?;
    let results = run_parallel(cfg.jobs, &pairs, |(s, p)| refine_frame(s, p, cfg, &digest))?;
    let mut out = RefineOutcome {
        config_digest: digest.clone(),
        weights: (fusion.w1, fusion.w2),
        frames: Vec::with_capacity(results.len()),
        deltas: Vec::new(),
        refined: 0,
        degraded_no_depth: 0,
        out_of_bounds: 0,
        skipped_no_object: 0,
    };
    for r in results {
        out.refined += r.counts[0];
        out.degraded_no_depth += r.counts[1];
        out.out_of_bounds += r.counts[2];
        out.skipped_no_object += r.counts[3];
        out.deltas.extend(r.deltas);
        out.frames.push(r.frame);
    }
    Ok(out)
}

impl RefineOutcome {
    pub fn mean_add_before(&self) -> f64 {
        self.deltas.iter().map(|d| d.add_before).sum::<f64>() / self.deltas.len().max(1) as f64
    }

    pub fn mean_add_after(&self) -> f64 {
        self.deltas.iter().map(|d| d.add_after).sum::<f64>() / self.deltas.len().max(1) as f64
    }

    pub fn to_json(&self) -> Value {
        let objects: Vec<Value> = self
            .deltas
            .iter()
            .map(|d| {
                json!({
                    "frame_id": d.frame_id,
                    "object": d.object_index,
                    "class_id": d.class_id,
                    "prediction": d.prediction,
                    "add_before": d.add_before,
                    "add_after": d.add_after,
                    "delta": d.add_after - d.add_before,
                })
            })
            .collect();
        json!({
            "command": "refine",
            "config_digest": self.config_digest,
            "w1": self.weights.0,
            "w2": self.weights.1,
            "objects": objects,
            "mean_add_before": self.mean_add_before(),
            "mean_add_after": self.mean_add_after(),
            "refined": self.refined,
            "degraded_no_depth": self.degraded_no_depth,
            "out_of_bounds": self.out_of_bounds,
            "skipped_no_object": self.skipped_no_object,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{:>6} {:>6} {:>6} {:>12} {:>12} {:>12}\n",
            "frame", "object", "class", "ADD before", "ADD after", "delta"
        );
        for d in &self.deltas {
            let _ = writeln!(
                s,
                "{:>6} {:>6} {:>6} {:>12.6} {:>12.6} {:>12.6}",
                d.frame_id,
                d.object_index,
                d.class_id,
                d.add_before,
                d.add_after,
                d.add_after - d.add_before
            );
        }
        let _ = writeln!(
            s,
            "{:>6} {:>6} {:>6} {:>12.6} {:>12.6} {:>12.6}",
            "mean",
            "",
            "",
            self.mean_add_before(),
            self.mean_add_after(),
            self.mean_add_after() - self.mean_add_before()
        );
        let _ = writeln!(
            s,
            "weights ({}, {}); refined {}, no depth {}, out of bounds {}, no-object {}",
            self.weights.0,
            self.weights.1,
            self.refined,
            self.degraded_no_depth,
            self.out_of_bounds,
            self.skipped_no_object
        );
        let _ = writeln!(s, "config {}", self.config_digest);
        s
    }
}

/// Scenes and noisy prediction sets for frames `0..cfg.frames`. With a
/// non-zero `noise_depth` the stored depth maps carry the noise.
pub fn simulate_frames(cfg: &RunConfig) -> Result<(Vec<Scene>, Vec<PredictionFrame>)> {
    cfg.validate()?;
    let noise = cfg.noise_config();
    let digest = cfg.digest();
    let ids: Vec<u64> = (0..cfg.frames).collect();
    let frames = run_parallel(cfg.jobs, &ids, |&frame_id| {
        let mut scene = generate_scene(&cfg.scene_config(frame_id)?)?;
        let predictions = perturb_predictions(&scene, &noise, cfg.n_c)?;
        scene.depth = perturb_depth(&scene.depth, &noise, frame_id);
        Ok((
            PredictionFrame {
                frame_id,
                num_classes: scene.num_classes,
                config_digest: Some(digest.clone()),
                predictions,
            },
            scene,
        ))
    })?;
    Ok(frames.into_iter().map(|(p, s)| (s, p)).unzip())
}
