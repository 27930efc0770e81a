//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use posefuse::assignment::{build_cost_matrix, hungarian_assign, pad_targets, CostMatrix, MatchWeights};
use posefuse::io::RunConfig;
use posefuse::losses::{giou_loss, hungarian_loss, shape_match_loss, LossWeights};
use posefuse::metrics::{add_metric, adds_metric, depth_metrics, DepthDenominator};
use posefuse::pipeline::{refine_frames, simulate_frames};
use posefuse::refine::{back_project, refine_pose, FusionConfig};
use posefuse::simulate::{generate_scene, perturb_predictions, DepthMode, NoiseConfig, Primitive, SceneConfig};
use posefuse::types::{
    CameraIntrinsics, ClassDistribution, DepthMap, GroundTruthObject, ImageSize, Mat3, ObjectModel, Patch, PointSet,
    Pose, PredictionTuple, Quat, Vec3,
};

const ASSIGNMENT_TIME_LIMIT: Duration = Duration::from_secs(10);
const ASSIGNMENT_MATRICES_PER_SIZE: usize = 1000;
const GIOU_PAIRS: usize = 10_000;
const GIOU_RASTER: usize = 512;
const GIOU_TOL: f64 = 1e-3;
const FIXTURE_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-9;
const SHAPE_CASES: usize = 1000;
const REFINE_SCENES: u64 = 100;
const REFINE_TOL: f64 = 1e-6;
const BACKPROJECT_SAMPLES: usize = 100_000;
const BACKPROJECT_TOL: f64 = 1e-12;
const IMPROVEMENT_SEEDS: u64 = 50;
const METRIC_CASES: usize = 10_000;
const METRIC_TOL: f64 = 1e-12;
const SUITE_TIME_LIMIT: Duration = Duration::from_secs(60);

type Outcome = Result<String, String>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_rotation(r: &mut impl Rng) -> Quat {
    loop {
        let q = Quat::new(
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
        );
        let n = q.norm();
        if n > 0.1 && n <= 1.0 {
            return q.normalized().unwrap();
        }
    }
}

fn random_points(r: &mut impl Rng, n: usize, scale: f64) -> PointSet {
    PointSet::new(
        (0..n)
            .map(|_| {
                Vec3::new(
                    r.random_range(-scale..scale),
                    r.random_range(-scale..scale),
                    r.random_range(-scale..scale),
                )
            })
            .collect(),
    )
    .unwrap()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// 1. Assignment optimality against exhaustive enumeration.

fn brute_force_min(c: &CostMatrix) -> f64 {
    fn go(c: &CostMatrix, row: usize, used: &mut [bool], perm: &mut Vec<usize>, best: &mut f64) {
        let n = c.size();
        if row == n {
            let mut total = 0.0;
            for (i, &j) in perm.iter().enumerate() {
                total += c.get(i, j);
            }
            if total < *best {
                *best = total;
            }
            return;
        }
        for j in 0..n {
            if !used[j] {
                used[j] = true;
                perm.push(j);
                go(c, row + 1, used, perm, best);
                perm.pop();
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(c, 0, &mut vec![false; c.size()], &mut Vec::new(), &mut best);
    best
}

fn criterion_assignment() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let mut checked = 0;
    for n in 2..=7 {
        for k in 0..ASSIGNMENT_MATRICES_PER_SIZE {
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    (0..n)
                        .map(|_| {
                            if k % 2 == 0 {
                                r.random_range(-1.0..1.0)
                            } else {
                                f64::from(r.random_range(0..4i32))
                            }
                        })
                        .collect()
                })
                .collect();
            let c = CostMatrix::from_rows(&rows).unwrap();
            let a = hungarian_assign(&c).map_err(|e| e.to_string())?;
            let best = brute_force_min(&c);
            if a.total_cost != best || c.total(&a.perm) != a.total_cost {
                return Err(format!("n={n} case {k}: got {} expected {best}", a.total_cost));
            }
            checked += 1;
        }
    }
    let elapsed = start.elapsed();
    check(
        elapsed < ASSIGNMENT_TIME_LIMIT,
        format!("{checked} matrices, n=2..7, exact optimum, {:.2}s (< 10s)", elapsed.as_secs_f64()),
    )
}

// 2. GIoU against an area-coverage raster over the enclosing box.

/// Fraction of each of `cells` equal cells of `[lo, lo + cells * step]`
/// covered by `[a, b]`.
fn coverage(a: f64, b: f64, lo: f64, step: f64, cells: usize) -> Vec<f64> {
    (0..cells)
        .map(|i| {
            let c0 = lo + i as f64 * step;
            let c1 = c0 + step;
            ((b.min(c1) - a.max(c0)).max(0.0) / step).clamp(0.0, 1.0)
        })
        .collect()
}

fn raster_giou_loss(a: &Patch, b: &Patch) -> f64 {
    let x0 = a.bx.min(b.bx);
    let y0 = a.by.min(b.by);
    let x1 = (a.bx + a.w).max(b.bx + b.w);
    let y1 = (a.by + a.h).max(b.by + b.h);
    let (sx, sy) = ((x1 - x0) / GIOU_RASTER as f64, (y1 - y0) / GIOU_RASTER as f64);
    let cell = sx * sy;
    let ax = coverage(a.bx, a.bx + a.w, x0, sx, GIOU_RASTER);
    let ay = coverage(a.by, a.by + a.h, y0, sy, GIOU_RASTER);
    let bxs = coverage(b.bx, b.bx + b.w, x0, sx, GIOU_RASTER);
    let bys = coverage(b.by, b.by + b.h, y0, sy, GIOU_RASTER);
    let ix = coverage(a.bx.max(b.bx), (a.bx + a.w).min(b.bx + b.w), x0, sx, GIOU_RASTER);
    let iy = coverage(a.by.max(b.by), (a.by + a.h).min(b.by + b.h), y0, sy, GIOU_RASTER);
    let (mut inter, mut union, mut enclosure) = (0.0, 0.0, 0.0);
    for j in 0..GIOU_RASTER {
        for i in 0..GIOU_RASTER {
            let fa = ax[i] * ay[j];
            let fb = bxs[i] * bys[j];
            let fi = ix[i] * iy[j];
            inter += fi * cell;
            union += (fa + fb - fi) * cell;
            enclosure += cell;
        }
    }
    1.0 - (inter / union - (enclosure - union) / enclosure)
}

fn criterion_giou() -> Outcome {
    let mut r = rng(2);
    let pairs: Vec<(Patch, Patch)> = (0..GIOU_PAIRS)
        .map(|_| {
            let mut p = || {
                Patch::new(
                    r.random_range(0.0..100.0),
                    r.random_range(0.0..100.0),
                    r.random_range(1.0..60.0),
                    r.random_range(1.0..60.0),
                )
                .unwrap()
            };
            (p(), p())
        })
        .collect();
    let worst = pairs
        .par_iter()
        .map(|(a, b)| (giou_loss(a, b) - raster_giou_loss(a, b)).abs())
        .reduce(|| 0.0, f64::max);
    let p = |bx, by, h, w| Patch::new(bx, by, h, w).unwrap();
    let fixtures = [
        (p(3.0, 4.0, 5.0, 6.0), p(3.0, 4.0, 5.0, 6.0), 0.0),
        (p(0.0, 0.0, 1.0, 2.0), p(1.0, 0.0, 1.0, 2.0), 2.0 / 3.0),
        (p(0.0, 0.0, 1.0, 1.0), p(2.0, 0.0, 1.0, 1.0), 4.0 / 3.0),
    ];
    let fixture_err = fixtures
        .iter()
        .map(|(a, b, want)| (giou_loss(a, b) - want).abs())
        .fold(0.0, f64::max);
    check(
        worst <= GIOU_TOL && fixture_err <= FIXTURE_TOL,
        format!(
            "{GIOU_PAIRS} pairs vs {GIOU_RASTER}x{GIOU_RASTER} raster, max error {worst:.2e} (<= 1e-3); fixtures 0, 2/3, 4/3 error {fixture_err:.1e}"
        ),
    )
}

// 3. ShapeMatch symmetry and the closest-point oracle.

/// Proper rotations among the signed permutation matrices that map `pts`
/// onto itself.
fn symmetry_group(pts: &PointSet) -> Vec<Mat3> {
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut group = Vec::new();
    for perm in perms {
        for signs in 0..8 {
            let mut m: Mat3 = Matrix3::zeros();
            for (row, &col) in perm.iter().enumerate() {
                m[(row, col)] = if signs >> row & 1 == 1 { -1.0 } else { 1.0 };
            }
            if (m.determinant() - 1.0).abs() > 1e-12 {
                continue;
            }
            let maps_onto = pts
                .points
                .iter()
                .all(|p| pts.points.iter().any(|q| (m * p - q).norm() < 1e-12));
            if maps_onto {
                group.push(m);
            }
        }
    }
    group
}

fn box_corners(a: f64, b: f64, c: f64) -> PointSet {
    let mut pts = Vec::new();
    for sx in [-1.0, 1.0] {
        for sy in [-1.0, 1.0] {
            for sz in [-1.0, 1.0] {
                pts.push(Vec3::new(sx * a, sy * b, sz * c));
            }
        }
    }
    PointSet::new(pts).unwrap()
}

fn exhaustive_closest(r_gt: &Mat3, r_pred: &Mat3, pts: &PointSet) -> f64 {
    let mut total = 0.0;
    for p in &pts.points {
        let g = r_gt * p;
        let mut best = f64::INFINITY;
        for q in &pts.points {
            let d = (g - r_pred * q).norm();
            if d < best {
                best = d;
            }
        }
        total += best;
    }
    total / pts.len() as f64
}

fn criterion_shape_match() -> Outcome {
    let square = PointSet::new(vec![
        Vec3::new(1.0, 1.0, 0.0),
        Vec3::new(-1.0, 1.0, 0.0),
        Vec3::new(-1.0, -1.0, 0.0),
        Vec3::new(1.0, -1.0, 0.0),
    ])
    .unwrap();
    let square_box = Primitive::Box {
        half_extents: [0.035, 0.035, 0.06],
    }
    .model();
    let sets = [
        ("square", square, 8),
        ("box", box_corners(0.1, 0.2, 0.3), 4),
        ("cube", box_corners(0.1, 0.1, 0.1), 24),
        ("square-section box model", square_box.points, 8),
    ];
    let mut r = rng(3);
    let mut worst_sym: f64 = 0.0;
    let mut elements = 0;
    for (name, pts, expected) in &sets {
        let group = symmetry_group(pts);
        if group.len() != *expected {
            return Err(format!("{name}: symmetry group has {} elements, expected {expected}", group.len()));
        }
        for _ in 0..10 {
            let r_gt = random_rotation(&mut r).to_matrix().unwrap();
            for s in &group {
                let loss = shape_match_loss(&r_gt, &(r_gt * s), pts, true).map_err(|e| e.to_string())?;
                worst_sym = worst_sym.max(loss);
                elements += 1;
            }
        }
    }
    if worst_sym > SYMMETRY_TOL {
        return Err(format!("symmetric loss {worst_sym:e} on a symmetry element"));
    }
    for case in 0..SHAPE_CASES {
        let pts = random_points(&mut r, 1 + case % 40, 0.2);
        let a = random_rotation(&mut r).to_matrix().unwrap();
        let b = random_rotation(&mut r).to_matrix().unwrap();
        let sym = shape_match_loss(&a, &b, &pts, true).unwrap();
        let asym = shape_match_loss(&a, &b, &pts, false).unwrap();
        if sym > asym {
            return Err(format!("case {case}: symmetric {sym} > asymmetric {asym}"));
        }
        let oracle = exhaustive_closest(&a, &b, &pts);
        if sym != oracle {
            return Err(format!("case {case}: symmetric {sym} != oracle {oracle}"));
        }
    }
    Ok(format!(
        "{elements} symmetry elements over square/box/cube, max loss {worst_sym:.1e} (<= 1e-9); {SHAPE_CASES} cases sym <= asym, sym == oracle bit-exact"
    ))
}

// 4. Refinement exactness in centroid-depth mode.

fn criterion_refinement_exact() -> Outcome {
    let fusion = FusionConfig::with_depth_weight(1.0, 5).unwrap();
    let mut worst: f64 = 0.0;
    let mut objects = 0;
    for seed in 0..REFINE_SCENES {
        let scene = generate_scene(&SceneConfig {
            seed,
            depth_mode: DepthMode::Centroid,
            ..SceneConfig::default()
        })
        .map_err(|e| e.to_string())?;
        let preds = perturb_predictions(&scene, &NoiseConfig::default(), scene.objects.len()).unwrap();
        for object in &scene.objects {
            let pred = preds
                .iter()
                .find(|p| p.patch == object.patch)
                .ok_or("zero-noise prediction missing")?;
            let refined = refine_pose(pred, &scene.depth, scene.image_size, &scene.intrinsics, &fusion)
                .map_err(|e| e.to_string())?;
            worst = worst.max((refined.pose.translation - object.pose.translation).norm());
            objects += 1;
        }
    }
    let k = CameraIntrinsics::new(520.0, 480.0, 321.5, 238.25).unwrap();
    let mut r = rng(4);
    let mut worst_bp: f64 = 0.0;
    for _ in 0..BACKPROJECT_SAMPLES {
        let z = r.random_range(0.2..6.0);
        let p = Vec3::new(r.random_range(-0.7..0.7) * z, r.random_range(-0.6..0.6) * z, z);
        let (x, y) = back_project(k.project(&p), z, &k).unwrap();
        worst_bp = worst_bp.max((x - p.x).abs()).max((y - p.y).abs());
    }
    check(
        worst <= REFINE_TOL && worst_bp <= BACKPROJECT_TOL,
        format!(
            "{objects} objects in {REFINE_SCENES} scenes, max error {worst:.1e} m (<= 1e-6); {BACKPROJECT_SAMPLES} back-projections, max error {worst_bp:.1e} (<= 1e-12)"
        ),
    )
}

// 5. Refinement improves noisy translations on every seed.

fn criterion_refinement_improves() -> Outcome {
    let mut ratios = Vec::new();
    for seed in 0..IMPROVEMENT_SEEDS {
        let cfg = RunConfig {
            seed,
            depth_mode: DepthMode::Centroid,
            noise_translation: 0.05,
            noise_depth: 0.0,
            fusion_w1: 0.8,
            jobs: 1,
            ..RunConfig::default()
        };
        let (scenes, preds) = simulate_frames(&cfg).map_err(|e| e.to_string())?;
        let out = refine_frames(&scenes, &preds, &cfg).map_err(|e| e.to_string())?;
        let (before, after) = (out.mean_add_before(), out.mean_add_after());
        if !(after < before) {
            return Err(format!("seed {seed}: mean ADD {before} -> {after}"));
        }
        ratios.push(after / before);
    }
    let worst = ratios.iter().cloned().fold(0.0, f64::max);
    Ok(format!(
        "{IMPROVEMENT_SEEDS} seeds, sigma 0.05 m, w1 0.8: mean ADD strictly lower on all, worst after/before {worst:.3}"
    ))
}

// 6. Metric identities.

fn criterion_metrics() -> Outcome {
    let mut r = rng(6);
    let mut worst_t: f64 = 0.0;
    for case in 0..METRIC_CASES {
        let pts = random_points(&mut r, 1 + case % 30, 0.3);
        let rotation = random_rotation(&mut r);
        let t = Vec3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(0.2..3.0));
        let dt = Vec3::new(r.random_range(-0.2..0.2), r.random_range(-0.2..0.2), r.random_range(-0.2..0.2));
        let gt = Pose::new(rotation, t).unwrap();
        let shifted = Pose::new(rotation, t + dt).unwrap();
        worst_t = worst_t.max((add_metric(&gt, &shifted, &pts).unwrap() - dt.norm()).abs());

        let other = Pose::new(random_rotation(&mut r), t + dt).unwrap();
        let (add, adds) = (add_metric(&gt, &other, &pts).unwrap(), adds_metric(&gt, &other, &pts).unwrap());
        if adds > add {
            return Err(format!("case {case}: ADD-S {adds} > ADD {add}"));
        }
    }
    let size = ImageSize::new(17, 9).unwrap();
    let depths: Vec<f64> = (0..size.pixel_count()).map(|_| r.random_range(0.3..5.0)).collect();
    let valid: Vec<bool> = (0..size.pixel_count()).map(|i| i % 7 != 3).collect();
    let map = DepthMap::new(size, depths, valid).unwrap();
    let same = depth_metrics(&map, &map, DepthDenominator::Prediction).unwrap();
    let zeros = [same.abs_rel, same.sq_rel, same.rmse, same.rmse_log] == [0.0; 4];

    let one = ImageSize::new(1, 1).unwrap();
    let single = depth_metrics(
        &DepthMap::from_depths(one, vec![2.0]).unwrap(),
        &DepthMap::from_depths(one, vec![1.0]).unwrap(),
        DepthDenominator::Prediction,
    )
    .unwrap();
    let got = [single.abs_rel, single.sq_rel, single.rmse, single.rmse_log];
    let want = [1.0, 1.0, 1.0, std::f64::consts::LN_2];
    let fixture_err = got.iter().zip(&want).map(|(g, w)| (g - w).abs()).fold(0.0, f64::max);
    check(
        worst_t <= METRIC_TOL && zeros && fixture_err <= METRIC_TOL,
        format!(
            "pure-translation ADD error {worst_t:.1e} (<= 1e-12); ADD-S <= ADD on {METRIC_CASES}; identical maps zero: {zeros}; single-pixel fixture error {fixture_err:.1e}"
        ),
    )
}

// 7. Loss composition.

fn single_object_loss(gt_patch: Patch, pred_patch: Patch, dt: Vec3, prob: f64) -> f64 {
    let model = ObjectModel {
        points: PointSet::new(vec![Vec3::new(0.1, 0.0, 0.0), Vec3::new(0.0, 0.2, 0.05)]).unwrap(),
        symmetric: false,
    };
    let models = [("m".to_string(), model)].into_iter().collect();
    let base = Pose::new(Quat::from_scaled_axis(Vec3::new(0.3, -0.2, 0.1)), Vec3::new(0.1, 0.2, 1.5)).unwrap();
    let objects = vec![GroundTruthObject {
        class_id: 0,
        patch: gt_patch,
        pose: base,
        model_ref: "m".into(),
    }];
    let preds = vec![PredictionTuple {
        class_dist: ClassDistribution::new(vec![prob, 1.0 - prob]).unwrap(),
        patch: pred_patch,
        pose: Pose::new(base.rotation, base.translation + dt).unwrap(),
    }];
    let targets = pad_targets(&objects, &models, 1).unwrap();
    let weights = LossWeights::default();
    let costs = build_cost_matrix(&targets, &preds, &MatchWeights::mirroring(weights)).unwrap();
    let a = hungarian_assign(&costs).unwrap();
    hungarian_loss(&targets, &preds, &a, &weights).unwrap().total()
}

fn criterion_loss_composition() -> Outcome {
    let mut max_zero: f64 = 0.0;
    for seed in 0..50 {
        let scene = generate_scene(&SceneConfig {
            seed,
            ..SceneConfig::default()
        })
        .map_err(|e| e.to_string())?;
        let preds = perturb_predictions(
            &scene,
            &NoiseConfig {
                seed,
                ..NoiseConfig::default()
            },
            21,
        )
        .unwrap();
        let targets = pad_targets(&scene.objects, &scene.models, 21).unwrap();
        let a = hungarian_assign(&build_cost_matrix(&targets, &preds, &MatchWeights::default()).unwrap()).unwrap();
        let loss = hungarian_loss(&targets, &preds, &a, &LossWeights::default()).unwrap();
        max_zero = max_zero.max(loss.total().abs());
    }
    let a = Patch::new(0.0, 0.0, 1.0, 2.0).unwrap();
    let b = Patch::new(1.0, 0.0, 1.0, 2.0).unwrap();
    let composite = single_object_loss(a, b, Vec3::new(0.03, 0.0, 0.04), 1.0);
    let composite_err = (composite - (0.05 * 0.05 + 19.0 / 3.0)).abs();
    let log_term = single_object_loss(a, a, Vec3::zeros(), 0.5);
    let log_err = (log_term - std::f64::consts::LN_2).abs();
    check(
        max_zero == 0.0 && composite_err <= FIXTURE_TOL && log_err <= FIXTURE_TOL,
        format!(
            "zero-noise loss over 50 scenes max {max_zero:e}; composite fixture error {composite_err:.1e}; -log 0.5 fixture error {log_err:.1e}"
        ),
    )
}

// 8. Golden default configuration.

fn criterion_config() -> Outcome {
    let golden_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/default_config.toml");
    let golden = std::fs::read_to_string(&golden_path).map_err(|e| e.to_string())?;
    let loaded = RunConfig::load(&golden_path).map_err(|e| e.to_string())?;
    let empty = RunConfig::from_toml_str("", "empty").map_err(|e| e.to_string())?;
    let values = (loaded.sigma1, loaded.sigma2, loaded.lambda_pose, loaded.n_c);
    check(
        values == (2.0, 5.0, 0.05, 21)
            && loaded == RunConfig::default()
            && empty == RunConfig::default()
            && golden == RunConfig::default().to_toml(),
        format!(
            "sigma1={}, sigma2={}, lambda_pose={}, N_c={}; golden file matches rendered defaults",
            values.0, values.1, values.2, values.3
        ),
    )
}

// 9. Byte-identical reports from the command-line pipeline.

fn run_pipeline(dir: &Path, jobs: &str) -> Result<Vec<Vec<u8>>, String> {
    let bin = env!("CARGO_BIN_EXE_posefuse");
    let config = dir.join("run.toml");
    std::fs::write(
        &config,
        "frames = 4\nnum_objects = 4\nnoise_translation = 0.03\nnoise_rotation = 0.1\nnoise_patch = 1.5\nnoise_confusion = 0.1\nnoise_depth = 0.005\nfusion_w1 = 0.7\n",
    )
    .map_err(|e| e.to_string())?;
    let sim = dir.join("sim");
    let refined = dir.join("refined.jsonl");
    let scene = sim.join("scene.jsonl");
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let steps: Vec<Vec<String>> = vec![
        vec!["simulate".into(), "--out".into(), s(&sim)],
        vec!["refine".into(), s(&scene), s(&sim.join("predictions.jsonl")), "--out".into(), s(&refined)],
        vec!["eval".into(), s(&scene), s(&refined)],
    ];
    let mut outputs = Vec::new();
    for step in steps {
        let out = Command::new(bin)
            .args(&step)
            .args(["--config", &s(&config), "--seed", "42", "--jobs", jobs, "--format", "json"])
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{step:?}: {}", String::from_utf8_lossy(&out.stderr)));
        }
        outputs.push(out.stdout);
    }
    outputs.push(std::fs::read(&refined).map_err(|e| e.to_string())?);
    Ok(outputs)
}

fn criterion_determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = run_pipeline(a.path(), "1")?;
    let second = run_pipeline(b.path(), "4")?;
    let bytes: usize = first.iter().map(Vec::len).sum();
    check(
        first == second,
        format!("simulate/refine/eval twice (1 and 4 workers): {bytes} bytes of JSON and predictions identical"),
    )
}

fn main() {
    let start = Instant::now();
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("assignment optimality", criterion_assignment),
        ("GIoU correctness", criterion_giou),
        ("ShapeMatch symmetry", criterion_shape_match),
        ("refinement exactness", criterion_refinement_exact),
        ("refinement improvement", criterion_refinement_improves),
        ("metric identities", criterion_metrics),
        ("loss composition", criterion_loss_composition),
        ("config fidelity", criterion_config),
        ("determinism", criterion_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = f();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {} ({name}): {detail} [{secs:.2}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {} ({name}): {detail} [{secs:.2}s]", i + 1);
            }
        }
    }
    let total = start.elapsed();
    let within = total < SUITE_TIME_LIMIT;
    println!(
        "{} acceptance wall clock {:.2}s (< 60s)",
        if within { "PASS" } else { "FAIL" },
        total.as_secs_f64()
    );
    if failed > 0 || !within {
        std::process::exit(1);
    }
}
