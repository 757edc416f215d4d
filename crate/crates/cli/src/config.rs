//! Run configuration. Every field has a default; a TOML file overrides the
//! defaults and command-line flags override the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use softcorr::correspondence::FusionMode;
use softcorr::dgat::{DgatConfig, DEFAULT_HIDDEN1, DEFAULT_K_MESH};
use softcorr::eval::{PipelineConfig, Subset};
use softcorr::geometry::{AugmentConfig, RotationSampling, DEFAULT_MAX_ROTATION};
use softcorr::initiator::{TrainConfig, DEFAULT_WIDTHS};
use softcorr::losses::{LossMask, LossWeights};
use softcorr::refine::{RefineConfig, DEFAULT_REFINE_LR};

use crate::error::{CliError, ErrorKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; every subsystem draws from its own stream of it.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub gen: GenSection,
    pub shapes: ShapesSection,
    pub initiator: InitiatorSection,
    pub refine: RefineSection,
    pub eval: EvalSection,
    pub ablate: AblateSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            out_dir: PathBuf::from("out"),
            gen: GenSection::default(),
            shapes: ShapesSection::default(),
            initiator: InitiatorSection::default(),
            refine: RefineSection::default(),
            eval: EvalSection::default(),
            ablate: AblateSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum GenKind {
    /// Icosphere self-pair.
    Icosphere,
    /// Straight cylinder and its bent copy.
    BentCylinder,
    /// A shape and a randomly deformed copy.
    NoisyCopy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSection {
    pub kind: GenKind,
    pub subdivisions: u32,
    /// Bend angle in radians.
    pub bend_angle: f64,
    /// Mesh to deform instead of the icosphere (noisy-copy only).
    pub source: Option<PathBuf>,
    pub noise: AugmentSection,
}

impl Default for GenSection {
    fn default() -> Self {
        GenSection {
            kind: GenKind::NoisyCopy,
            subdivisions: 2,
            bend_angle: 1.0,
            source: None,
            noise: AugmentSection { scale_min: 1.0, scale_max: 1.0, ..AugmentSection::default() },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RotationKind {
    Uniform,
    Bounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSection {
    pub rotation: RotationKind,
    /// Largest rotation angle (radians) for bounded sampling.
    pub max_angle: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    pub translation: f64,
    /// Jitter standard deviation as a fraction of the bounding-box diagonal.
    pub jitter: f64,
}

impl Default for AugmentSection {
    fn default() -> Self {
        let d = AugmentConfig::default();
        AugmentSection {
            rotation: RotationKind::Bounded,
            max_angle: DEFAULT_MAX_ROTATION,
            scale_min: d.scale_range.0,
            scale_max: d.scale_range.1,
            translation: d.translation,
            jitter: d.jitter_fraction,
        }
    }
}

impl AugmentSection {
    pub fn to_config(&self) -> AugmentConfig {
        AugmentConfig {
            rotation: match self.rotation {
                RotationKind::Uniform => RotationSampling::Uniform,
                RotationKind::Bounded => RotationSampling::Bounded { max_angle: self.max_angle },
            },
            scale_range: (self.scale_min, self.scale_max),
            translation: self.translation,
            jitter_fraction: self.jitter,
        }
    }
}

/// Input files; unset paths default to the files `gen`/`init` write in `out_dir`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapesSection {
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub gt: Option<PathBuf>,
    /// Initial matrix for `refine`.
    pub corr: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitiatorSection {
    pub epochs: usize,
    pub lr: f64,
    pub widths: Vec<usize>,
    pub augment: AugmentSection,
}

impl Default for InitiatorSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        InitiatorSection { epochs: t.epochs, lr: t.lr, widths: DEFAULT_WIDTHS.to_vec(), augment: AugmentSection::default() }
    }
}

/// Phase I hidden width: a number or `"M"` for the feature width itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Hidden1 {
    Fixed(usize),
    Named(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionKind {
    Mean,
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineSection {
    pub iterations: usize,
    pub inner_steps: usize,
    pub lr: f64,
    /// Enabled loss terms, e.g. `"all"` or `"L+l1+l2"`.
    pub losses: String,
    pub anchor_fraction: f64,
    pub anchor_start: usize,
    pub freeze_anchors: bool,
    /// Neighbors per node; unset means 8 on meshes and 10 on point clouds.
    pub k: Option<usize>,
    pub layers: usize,
    pub hidden1: Hidden1,
    pub hidden2: usize,
    pub layer_norm: bool,
    pub fusion: FusionKind,
    pub weights: WeightsSection,
}

impl Default for RefineSection {
    fn default() -> Self {
        let d = DgatConfig::default();
        let r = RefineConfig::default();
        RefineSection {
            iterations: r.iterations,
            inner_steps: r.inner_steps,
            lr: DEFAULT_REFINE_LR,
            losses: "all".into(),
            anchor_fraction: r.anchor_fraction,
            anchor_start: r.anchor_start,
            freeze_anchors: r.freeze_anchors,
            k: None,
            layers: d.layers,
            hidden1: Hidden1::Fixed(DEFAULT_HIDDEN1),
            hidden2: d.hidden2,
            layer_norm: d.layer_norm,
            fusion: FusionKind::Mean,
            weights: WeightsSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsSection {
    pub laplacian: f64,
    pub sparsity: f64,
    pub anchor: f64,
    pub denoise: f64,
}

impl Default for WeightsSection {
    fn default() -> Self {
        let w = LossWeights::default();
        WeightsSection { laplacian: w.laplacian, sparsity: w.sparsity, anchor: w.anchor, denoise: w.denoise }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Predictions to score (CORR or vertex-map files); unset means the
    /// initial and per-step matrices in `out_dir`.
    pub pred: Vec<PathBuf>,
    /// Largest threshold of the cumulative error curve.
    pub curve_max: f64,
    pub curve_points: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { pred: Vec::new(), curve_max: 0.25, curve_points: 26 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateSection {
    pub subsets: Vec<String>,
    pub seeds: Vec<u64>,
}

impl Default for AblateSection {
    fn default() -> Self {
        AblateSection {
            subsets: ["initiator", "all", "L+l1+l2", "L+l1"].map(String::from).to_vec(),
            seeds: vec![7, 8, 9, 10, 11],
        }
    }
}

fn invalid(operation: &'static str, message: impl Into<String>) -> CliError {
    CliError::new(ErrorKind::Config, "config", operation, message)
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::new(ErrorKind::Io, "config", "load", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| invalid("parse", e.to_string().trim_end().to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// Checks every section against the preconditions of the code it feeds.
    pub fn validate(&self) -> Result<(), CliError> {
        self.gen.noise.to_config().validate().map_err(|e| invalid("validate", format!("gen.noise: {e}")))?;
        if !self.gen.bend_angle.is_finite() || self.gen.bend_angle < 0.0 {
            return Err(invalid("validate", format!("gen.bend_angle {} must be ≥ 0", self.gen.bend_angle)));
        }
        if self.gen.subdivisions > 6 {
            return Err(invalid("validate", format!("gen.subdivisions {} exceeds 6", self.gen.subdivisions)));
        }
        self.train_config()?;
        self.initiator.augment.to_config().validate().map_err(|e| invalid("validate", format!("initiator.augment: {e}")))?;
        self.refine_config(DEFAULT_K_MESH)?
            .validate()
            .map_err(|e| invalid("validate", format!("refine: {e}")))?;
        if !(self.eval.curve_max > 0.0 && self.eval.curve_max.is_finite()) || self.eval.curve_points == 0 {
            return Err(invalid("validate", "eval.curve_max must be positive and eval.curve_points ≥ 1"));
        }
        self.subsets()?;
        if self.ablate.seeds.is_empty() {
            return Err(invalid("validate", "ablate.seeds is empty"));
        }
        Ok(())
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        let s = &self.initiator;
        if s.epochs == 0 {
            return Err(invalid("validate", "initiator.epochs must be ≥ 1"));
        }
        if !(s.lr > 0.0 && s.lr.is_finite()) {
            return Err(invalid("validate", format!("initiator.lr {} must be positive", s.lr)));
        }
        if s.widths.len() < 2 || s.widths[0] != 3 || s.widths.contains(&0) {
            return Err(invalid("validate", format!("initiator.widths {:?} must start at 3 and list positive widths", s.widths)));
        }
        Ok(TrainConfig { widths: s.widths.clone(), epochs: s.epochs, lr: s.lr })
    }

    pub fn mask(&self) -> Result<LossMask, CliError> {
        LossMask::parse(&self.refine.losses).map_err(|e| invalid("validate", format!("refine.losses: {e}")))
    }

    /// Refinement settings; `k_default` applies when `refine.k` is unset.
    pub fn refine_config(&self, k_default: usize) -> Result<RefineConfig, CliError> {
        let r = &self.refine;
        let hidden1 = match &r.hidden1 {
            Hidden1::Fixed(h) => Some(*h),
            Hidden1::Named(s) if s == "M" => None,
            Hidden1::Named(s) => return Err(invalid("validate", format!("refine.hidden1 must be a number or \"M\", got {s:?}"))),
        };
        let w = &r.weights;
        let cfg = RefineConfig {
            iterations: r.iterations,
            inner_steps: r.inner_steps,
            dgat: DgatConfig {
                k: r.k.unwrap_or(k_default),
                layers: r.layers,
                hidden1,
                hidden2: r.hidden2,
                layer_norm: r.layer_norm,
                fusion: match r.fusion {
                    FusionKind::Mean => FusionMode::Mean,
                    FusionKind::Max => FusionMode::Max,
                },
            },
            weights: LossWeights { laplacian: w.laplacian, sparsity: w.sparsity, anchor: w.anchor, denoise: w.denoise },
            mask: self.mask()?,
            anchor_fraction: r.anchor_fraction,
            anchor_start: r.anchor_start,
            freeze_anchors: r.freeze_anchors,
            lr: r.lr,
            seed: self.seed,
        };
        cfg.validate().map_err(|e| invalid("validate", format!("refine: {e}")))?;
        cfg.weights.validate().map_err(|e| invalid("validate", format!("refine.weights: {e}")))?;
        Ok(cfg)
    }

    pub fn pipeline(&self, k_default: usize) -> Result<PipelineConfig, CliError> {
        Ok(PipelineConfig {
            augment: self.initiator.augment.to_config(),
            initiator: self.train_config()?,
            refine: self.refine_config(k_default)?,
        })
    }

    pub fn subsets(&self) -> Result<Vec<Subset>, CliError> {
        if self.ablate.subsets.is_empty() {
            return Err(invalid("validate", "ablate.subsets is empty"));
        }
        self.ablate
            .subsets
            .iter()
            .map(|s| Subset::parse(s).ok_or_else(|| invalid("validate", format!("ablate.subsets: cannot parse {s:?}"))))
            .collect()
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn source_path(&self) -> PathBuf {
        self.shapes.source.clone().unwrap_or_else(|| self.out(SOURCE_FILE))
    }

    pub fn target_path(&self) -> PathBuf {
        self.shapes.target.clone().unwrap_or_else(|| self.out(TARGET_FILE))
    }

    pub fn gt_path(&self) -> PathBuf {
        self.shapes.gt.clone().unwrap_or_else(|| self.out(GT_FILE))
    }

    pub fn corr_path(&self) -> PathBuf {
        self.shapes.corr.clone().unwrap_or_else(|| self.out(INITIAL_CORR_FILE))
    }
}

pub const SOURCE_FILE: &str = "source.off";
pub const TARGET_FILE: &str = "target.off";
pub const GT_FILE: &str = "gt.map";
pub const INITIATOR_FILE: &str = "initiator.dnet";
pub const INITIAL_CORR_FILE: &str = "p0.corr";
pub const LOSS_FILE: &str = "losses.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const ERRORS_FILE: &str = "errors.csv";
pub const CURVE_FILE: &str = "curve.csv";
pub const ABLATION_FILE: &str = "ablation.csv";
pub const ABLATION_CELLS_FILE: &str = "ablation_cells.csv";

pub fn step_file(step: usize) -> String {
    format!("step_{step}.corr")
}
