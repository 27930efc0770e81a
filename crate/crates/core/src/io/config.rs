//! Flat TOML run configuration shared by every command.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::read_text;
use crate::assignment::{ClassCost, EmptySlotCost, MatchWeights};
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::metrics::{DepthDenominator, DEFAULT_AUC_THRESHOLD};
use crate::refine::FusionConfig;
use crate::simulate::{default_classes, DepthMode, NoiseConfig, SceneConfig};
use crate::types::{CameraIntrinsics, ImageSize};

/// How the fusion weights are chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionRule {
    /// `fusion_w1` as given, `w2 = 1 - w1`.
    Fixed,
    /// Derived from `depth_model_loss` and `regression_model_loss`.
    InverseLoss,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sigma1: f64,
    pub sigma2: f64,
    pub lambda_pose: f64,
    pub no_object_weight: f64,
    /// Number of prediction slots per frame.
    pub n_c: usize,

    pub lambda_match: f64,
    pub match_class_cost: ClassCost,
    pub match_empty_slot: EmptySlotCost,

    pub fusion_rule: FusionRule,
    pub fusion_w1: f64,
    pub depth_model_loss: f64,
    pub regression_model_loss: f64,
    pub depth_window: usize,

    /// Upper end of the accuracy-threshold curve, meters.
    pub auc_threshold: f64,
    pub depth_denominator: DepthDenominator,

    pub seed: u64,
    pub frames: u64,
    pub num_objects: usize,
    pub image_width: u32,
    pub image_height: u32,
    pub depth_width: u32,
    pub depth_height: u32,
    pub fx: f64,
    pub fy: f64,
    pub ppx: f64,
    pub ppy: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub depth_mode: DepthMode,
    pub max_attempts: usize,
    pub patch_gap: f64,
    /// Raw depth units per meter in depth files.
    pub depth_scale: f64,

    pub noise_translation: f64,
    pub noise_rotation: f64,
    pub noise_patch: f64,
    pub noise_confusion: f64,
    pub noise_depth: f64,

    /// Worker threads; 0 picks one per core.
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let loss = LossWeights::default();
        let matching = MatchWeights::default();
        let fusion = FusionConfig::default();
        let scene = SceneConfig::default();
        RunConfig {
            sigma1: loss.sigma1,
            sigma2: loss.sigma2,
            lambda_pose: loss.lambda_pose,
            no_object_weight: loss.no_object_weight,
            n_c: 21,
            lambda_match: matching.lambda_match,
            match_class_cost: matching.class_cost,
            match_empty_slot: matching.empty_slot,
            fusion_rule: FusionRule::Fixed,
            fusion_w1: fusion.w1,
            depth_model_loss: 1.0,
            regression_model_loss: 1.0,
            depth_window: fusion.depth_window,
            auc_threshold: DEFAULT_AUC_THRESHOLD,
            depth_denominator: DepthDenominator::default(),
            seed: scene.seed,
            frames: 1,
            num_objects: scene.num_objects,
            image_width: scene.image_size.width,
            image_height: scene.image_size.height,
            depth_width: scene.depth_size.width,
            depth_height: scene.depth_size.height,
            fx: scene.intrinsics.fx,
            fy: scene.intrinsics.fy,
            ppx: scene.intrinsics.ppx,
            ppy: scene.intrinsics.ppy,
            z_min: scene.depth_range.0,
            z_max: scene.depth_range.1,
            depth_mode: scene.depth_mode,
            max_attempts: scene.max_attempts,
            patch_gap: scene.patch_gap,
            depth_scale: super::depth_file::DEFAULT_SCALE,
            noise_translation: 0.0,
            noise_rotation: 0.0,
            noise_patch: 0.0,
            noise_confusion: 0.0,
            noise_depth: 0.0,
            jobs: 0,
        }
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl RunConfig {
    pub fn from_toml_str(text: &str, path: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Parse {
            path: path.to_string(),
            line: e.span().map(|s| line_of_offset(text, s.start)).unwrap_or(1),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        RunConfig::from_toml_str(&read_text(path)?, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 over the canonical JSON form, identifying the configuration
    /// in every output. The worker count does not change results and is left
    /// out.
    pub fn digest(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        value.as_object_mut().expect("config is a table").remove("jobs");
        super::sha256_hex(serde_json::to_string(&value).expect("values serialize").as_bytes())
    }

    pub fn validate(&self) -> Result<()> {
        self.match_weights().validate()?;
        if self.n_c == 0 {
            return Err(Error::InvalidConfig("n_c must be at least 1".into()));
        }
        if self.num_objects > self.n_c {
            return Err(Error::InvalidConfig(format!(
                "num_objects = {} exceeds n_c = {}",
                self.num_objects, self.n_c
            )));
        }
        self.fusion()?;
        if !(self.auc_threshold > 0.0 && self.auc_threshold.is_finite()) {
            return Err(Error::InvalidConfig(format!("auc_threshold = {} must be > 0", self.auc_threshold)));
        }
        if self.frames == 0 {
            return Err(Error::InvalidConfig("frames must be at least 1".into()));
        }
        if self.frames > 1 << 30 {
            return Err(Error::InvalidConfig("frames must be below 2^30".into()));
        }
        if !(self.depth_scale > 0.0 && self.depth_scale.is_finite()) {
            return Err(Error::InvalidConfig(format!("depth_scale = {} must be > 0", self.depth_scale)));
        }
        self.scene_config(0)?.validate()?;
        self.noise_config().validate()?;
        Ok(())
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            sigma1: self.sigma1,
            sigma2: self.sigma2,
            lambda_pose: self.lambda_pose,
            no_object_weight: self.no_object_weight,
        }
    }

    pub fn match_weights(&self) -> MatchWeights {
        MatchWeights {
            loss: self.loss_weights(),
            lambda_match: self.lambda_match,
            class_cost: self.match_class_cost,
            empty_slot: self.match_empty_slot,
        }
    }

    pub fn fusion(&self) -> Result<FusionConfig> {
        match self.fusion_rule {
            FusionRule::Fixed => FusionConfig::with_depth_weight(self.fusion_w1, self.depth_window),
            FusionRule::InverseLoss => {
                FusionConfig::from_model_losses(self.depth_model_loss, self.regression_model_loss, self.depth_window)
            }
        }
    }

    pub fn scene_config(&self, frame_id: u64) -> Result<SceneConfig> {
        Ok(SceneConfig {
            num_objects: self.num_objects,
            image_size: ImageSize::new(self.image_width, self.image_height)?,
            depth_size: ImageSize::new(self.depth_width, self.depth_height)?,
            intrinsics: CameraIntrinsics::new(self.fx, self.fy, self.ppx, self.ppy)?,
            classes: default_classes(),
            depth_range: (self.z_min, self.z_max),
            depth_mode: self.depth_mode,
            seed: self.seed,
            frame_id,
            max_attempts: self.max_attempts,
            patch_gap: self.patch_gap,
        })
    }

    pub fn noise_config(&self) -> NoiseConfig {
        NoiseConfig {
            translation_sigma: self.noise_translation,
            rotation_sigma: self.noise_rotation,
            patch_sigma: self.noise_patch,
            confusion: self.noise_confusion,
            depth_sigma: self.noise_depth,
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let cfg = RunConfig::default();
        assert_eq!((cfg.sigma1, cfg.sigma2, cfg.lambda_pose, cfg.n_c), (2.0, 5.0, 0.05, 21));
        cfg.validate().unwrap();
        assert_eq!(RunConfig::from_toml_str("", "t").unwrap(), cfg);
    }

    #[test]
    fn toml_roundtrip_and_digest() {
        let cfg = RunConfig {
            seed: 9,
            noise_translation: 0.05,
            depth_mode: DepthMode::Centroid,
            ..RunConfig::default()
        };
        let back = RunConfig::from_toml_str(&cfg.to_toml(), "t").unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.digest(), cfg.digest());
        assert_ne!(cfg.digest(), RunConfig::default().digest());
        let threaded = RunConfig { jobs: 4, ..cfg.clone() };
        assert_eq!(threaded.digest(), cfg.digest());
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        match RunConfig::from_toml_str("sigma1 = 2.0\nsigma_3 = 1.0\n", "c.toml") {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("sigma_3"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            RunConfig::from_toml_str("num_objects = 30\n", "c"),
            Err(Error::InvalidConfig(_))
        ));
        assert!(RunConfig::from_toml_str("fusion_w1 = 1.5\n", "c").is_err());
        assert!(RunConfig::from_toml_str("depth_mode = \"sideways\"\n", "c").is_err());
        let inverse = RunConfig::from_toml_str(
            "fusion_rule = \"inverse_loss\"\ndepth_model_loss = 1.0\nregression_model_loss = 3.0\n",
            "c",
        )
        .unwrap();
        assert_eq!(inverse.fusion().unwrap().w1, 0.75);
    }
}
