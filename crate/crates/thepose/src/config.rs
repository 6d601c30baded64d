//! Experiment configuration as flat `section.key = value` text.
//!
//! Blank lines and lines starting with `#` are ignored. Keys not given keep
//! their defaults; unknown or repeated keys are rejected. Lists are comma
//! separated.

use std::collections::BTreeSet;
use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use thepose_core::geometry::Intrinsics;
use thepose_core::head::{LossWeights, ModelConfig, TrainConfig};
use thepose_core::net::HgfConfig;
use thepose_core::synth::Category;
use thepose_core::tensor::LrSchedule;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub categories: Vec<Category>,
    /// Scenes per category in each split.
    pub train_size: usize,
    pub test_size: usize,
    pub n_points: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimConfig {
    pub lr: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub tail_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub occlusion: f64,
    /// Monte-Carlo samples per IoU estimate.
    pub n_mc: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorCheckConfig {
    pub instances: usize,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub model_seed: u64,
    pub loss: LossWeights,
    pub train: OptimConfig,
    pub eval: EvalConfig,
    pub check: PriorCheckConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: DataConfig {
                categories: vec![Category::Mug],
                train_size: 512,
                test_size: 128,
                n_points: 1024,
                width: 128,
                height: 128,
                seed: 1,
            },
            model: ModelConfig::default(),
            model_seed: 2,
            loss: LossWeights::default(),
            train: OptimConfig { lr: 1e-3, steps: 2000, batch_size: 4, tail_fraction: 0.28, seed: 3 },
            eval: EvalConfig { occlusion: 0.0, n_mc: 10_000, seed: 4 },
            check: PriorCheckConfig { instances: 20, samples: 200, seed: 5 },
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String>
where
    T::Err: Display,
{
    value.parse().map_err(|e| format!("{key}: cannot parse {value:?}: {e}"))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: Display,
{
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn join<T: Display>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn category(key: &str, name: &str) -> std::result::Result<Category, String> {
    Category::from_name(name).ok_or_else(|| format!("{key}: unknown category {name:?}"))
}

impl ExperimentConfig {
    fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        let m = &mut self.model.hgf;
        match key {
            "data.categories" => {
                self.data.categories = v.split(',').map(|c| category(key, c.trim())).collect::<std::result::Result<_, String>>()?
            }
            "data.train_size" => self.data.train_size = parse(key, v)?,
            "data.test_size" => self.data.test_size = parse(key, v)?,
            "data.n_points" => self.data.n_points = parse(key, v)?,
            "data.width" => self.data.width = parse(key, v)?,
            "data.height" => self.data.height = parse(key, v)?,
            "data.seed" => self.data.seed = parse(key, v)?,
            "model.k" => m.k = parse(key, v)?,
            "model.alpha1" => m.alpha1 = parse(key, v)?,
            "model.alpha2" => m.alpha2 = parse(key, v)?,
            "model.widths" => m.widths = parse_list(key, v)?,
            "model.global_width" => m.global_width = parse(key, v)?,
            "model.topo_channels" => m.topo_channels = parse(key, v)?,
            "model.topo_global_width" => m.topo_global_width = parse(key, v)?,
            "model.pe_bands" => m.pe_bands = parse(key, v)?,
            "model.pe_base" => m.pe_base = parse(key, v)?,
            "model.layers" => m.layers = parse(key, v)?,
            "model.robust_mean" => m.robust_mean = parse(key, v)?,
            "model.head_hidden" => self.model.head_hidden = parse(key, v)?,
            "model.seed" => self.model_seed = parse(key, v)?,
            "loss.rotation" => self.loss.rotation = parse(key, v)?,
            "loss.translation" => self.loss.translation = parse(key, v)?,
            "loss.size" => self.loss.size = parse(key, v)?,
            "train.lr" => self.train.lr = parse(key, v)?,
            "train.steps" => self.train.steps = parse(key, v)?,
            "train.batch_size" => self.train.batch_size = parse(key, v)?,
            "train.tail_fraction" => self.train.tail_fraction = parse(key, v)?,
            "train.seed" => self.train.seed = parse(key, v)?,
            "eval.occlusion" => self.eval.occlusion = parse(key, v)?,
            "eval.n_mc" => self.eval.n_mc = parse(key, v)?,
            "eval.seed" => self.eval.seed = parse(key, v)?,
            "check.instances" => self.check.instances = parse(key, v)?,
            "check.samples" => self.check.samples = parse(key, v)?,
            "check.seed" => self.check.seed = parse(key, v)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Every key with its value, in file order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let m: &HgfConfig = &self.model.hgf;
        let names: Vec<&str> = self.data.categories.iter().map(|c| c.name()).collect();
        vec![
            ("data.categories", names.join(",")),
            ("data.train_size", self.data.train_size.to_string()),
            ("data.test_size", self.data.test_size.to_string()),
            ("data.n_points", self.data.n_points.to_string()),
            ("data.width", self.data.width.to_string()),
            ("data.height", self.data.height.to_string()),
            ("data.seed", self.data.seed.to_string()),
            ("model.k", m.k.to_string()),
            ("model.alpha1", m.alpha1.to_string()),
            ("model.alpha2", m.alpha2.to_string()),
            ("model.widths", join(&m.widths)),
            ("model.global_width", m.global_width.to_string()),
            ("model.topo_channels", m.topo_channels.to_string()),
            ("model.topo_global_width", m.topo_global_width.to_string()),
            ("model.pe_bands", m.pe_bands.to_string()),
            ("model.pe_base", m.pe_base.to_string()),
            ("model.layers", m.layers.to_string()),
            ("model.robust_mean", m.robust_mean.to_string()),
            ("model.head_hidden", self.model.head_hidden.to_string()),
            ("model.seed", self.model_seed.to_string()),
            ("loss.rotation", self.loss.rotation.to_string()),
            ("loss.translation", self.loss.translation.to_string()),
            ("loss.size", self.loss.size.to_string()),
            ("train.lr", self.train.lr.to_string()),
            ("train.steps", self.train.steps.to_string()),
            ("train.batch_size", self.train.batch_size.to_string()),
            ("train.tail_fraction", self.train.tail_fraction.to_string()),
            ("train.seed", self.train.seed.to_string()),
            ("eval.occlusion", self.eval.occlusion.to_string()),
            ("eval.n_mc", self.eval.n_mc.to_string()),
            ("eval.seed", self.eval.seed.to_string()),
            ("check.instances", self.check.instances.to_string()),
            ("check.samples", self.check.samples.to_string()),
            ("check.seed", self.check.seed.to_string()),
        ]
    }

    /// Defaults overridden by `text`, then validated.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = ExperimentConfig::default();
        let mut seen = BTreeSet::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let at = |msg: String| CliError::Config(format!("line {}: {msg}", no + 1));
            let (key, value) = line.split_once('=').ok_or_else(|| at("expected `key = value`".into()))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(at(format!("duplicate key {key:?}")));
            }
            config.set(key, value).map_err(at)?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        let d = &self.data;
        if d.categories.is_empty() {
            return bad("data.categories must name at least one category".into());
        }
        if d.train_size == 0 || d.test_size == 0 {
            return bad("dataset sizes must be positive".into());
        }
        if !(8..=u16::MAX as usize).contains(&d.width) || !(8..=u16::MAX as usize).contains(&d.height) {
            return bad("image sides must lie in [8, 65535]".into());
        }
        if d.n_points <= self.model.hgf.k {
            return bad(format!("data.n_points = {} must exceed model.k = {}", d.n_points, self.model.hgf.k));
        }
        self.model.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let w = &self.loss;
        if ![w.rotation, w.translation, w.size].iter().all(|v| v.is_finite() && *v >= 0.0) {
            return bad("loss weights must be finite and non-negative".into());
        }
        let t = &self.train;
        if !(t.lr.is_finite() && t.lr >= 0.0) {
            return bad("train.lr must be finite and non-negative".into());
        }
        if t.steps == 0 || t.batch_size == 0 {
            return bad("train.steps and train.batch_size must be positive".into());
        }
        if !(0.0..=1.0).contains(&t.tail_fraction) {
            return bad("train.tail_fraction must lie in [0, 1]".into());
        }
        if !(0.0..1.0).contains(&self.eval.occlusion) {
            return bad("eval.occlusion must lie in [0, 1)".into());
        }
        if self.eval.n_mc == 0 {
            return bad("eval.n_mc must be positive".into());
        }
        if self.check.instances < 2 || self.check.samples == 0 {
            return bad("check.instances must be at least 2 and check.samples positive".into());
        }
        Ok(())
    }

    /// Camera for generated scenes; 200 px focal length per 128 px of the
    /// shorter side, principal point at the image center.
    pub fn intrinsics(&self) -> Intrinsics {
        let (w, h) = (self.data.width, self.data.height);
        let f = 200.0 * w.min(h) as f64 / 128.0;
        Intrinsics { fx: f, fy: f, cx: w as f64 / 2.0, cy: h as f64 / 2.0, width: w, height: h }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            steps: self.train.steps,
            batch_size: self.train.batch_size,
            schedule: LrSchedule {
                base_lr: self.train.lr,
                total_steps: self.train.steps,
                tail_fraction: self.train.tail_fraction,
            },
            weights: self.loss,
            seed: self.train.seed,
        }
    }
}
