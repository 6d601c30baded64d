//! Dataset generation, training, evaluation and sweeps driven by an
//! [`ExperimentConfig`], parallel over samples with ordered reductions.

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rayon::ThreadPool;
use serde_json::{json, Value};

use thepose_core::head::{
    forward_sample, init_model, pose_loss, predict, sample_gradients, train_with, LossRecord, ModelConfig,
};
use thepose_core::metrics::{aggregate, pose_errors, MetricsReport, PoseError};
use thepose_core::net::{build_receptive_field, GraphCache, HgfConfig, HybridGraph};
use thepose_core::synth::{
    apply_occlusion, check_prior, generate_scene, Category, CategorySpec, PriorCheck, SceneSample, EMBEDDING_DIM,
};
use thepose_core::tensor::{gradient_check_params, ParamStore, Tape};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::report::report_json;

/// Worker pool capped by `THEPOSE_THREADS` when set.
pub fn worker_pool() -> Result<ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("THEPOSE_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| CliError::Config(format!("THEPOSE_THREADS must be a positive integer, got {v:?}")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| CliError::Config(format!("cannot start worker threads: {e}")))
}

/// Independent seed for item `index` of stream `stream` under `base`.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(stream);
    rng.set_word_pos(u128::from(index) * 2);
    rng.next_u64()
}

const STREAM_MC: u64 = 1;
const STREAM_OCCLUSION: u64 = 2;
const STREAM_PROBE: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn stream(self, category: Category) -> u64 {
        let base = match self {
            Split::Train => 16,
            Split::Test => 32,
        };
        base + u64::from(category.id())
    }
}

/// Scenes of every configured category, category by category.
pub fn generate(config: &ExperimentConfig, split: Split, pool: &ThreadPool) -> Result<Vec<SceneSample>> {
    let n = match split {
        Split::Train => config.data.train_size,
        Split::Test => config.data.test_size,
    };
    let k = config.intrinsics();
    let jobs: Vec<(Category, u64)> =
        config.data.categories.iter().flat_map(|&c| (0..n as u64).map(move |i| (c, i))).collect();
    let samples = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, i)| {
                let seed = derive_seed(config.data.seed, split.stream(c), i);
                generate_scene(&CategorySpec::new(c), &k, config.data.n_points, seed)
            })
            .collect::<std::result::Result<Vec<_>, _>>()
    })?;
    Ok(samples)
}

pub fn category_counts(samples: &[SceneSample]) -> BTreeMap<Category, usize> {
    let mut counts = BTreeMap::new();
    for s in samples {
        *counts.entry(s.category).or_insert(0) += 1;
    }
    counts
}

/// Trains from the configured initialization.
pub fn train_model(
    config: &ExperimentConfig,
    samples: &[SceneSample],
    pool: &ThreadPool,
    on_step: impl FnMut(&LossRecord),
) -> Result<(ParamStore, Vec<LossRecord>)> {
    let store = init_model(&config.model, config.model_seed);
    let tc = config.train_config();
    let model = &config.model;
    let out = train_with(
        samples,
        &tc,
        store,
        |params, batch| {
            pool.install(|| {
                batch
                    .par_iter()
                    .map(|&i| {
                        let s = &samples[i];
                        sample_gradients(s, &CategorySpec::new(s.category), model, params, &tc.weights)
                    })
                    .collect()
            })
        },
        on_step,
    )?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub occlusion: f64,
    pub errors: Vec<(Category, PoseError)>,
    pub report: MetricsReport,
}

impl Evaluation {
    pub fn to_json(&self) -> Value {
        let mut v = report_json(&self.report);
        v["occlusion"] = json!(self.occlusion);
        v["count"] = json!(self.errors.len());
        v
    }

    pub fn mean_rotation_err(&self) -> f64 {
        self.errors.iter().map(|(_, e)| e.rotation_err).sum::<f64>() / self.errors.len() as f64
    }

    pub fn mean_translation_err(&self) -> f64 {
        self.errors.iter().map(|(_, e)| e.translation_err).sum::<f64>() / self.errors.len() as f64
    }
}

/// Predicts every sample, optionally after removing `occlusion` of each
/// mask, and scores the predictions.
pub fn evaluate(
    config: &ExperimentConfig,
    samples: &[SceneSample],
    store: &ParamStore,
    occlusion: f64,
    pool: &ThreadPool,
) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(CliError::Config("evaluation set is empty".into()));
    }
    if !(0.0..1.0).contains(&occlusion) {
        return Err(CliError::Config(format!("occlusion fraction {occlusion} is outside [0, 1)")));
    }
    let e = &config.eval;
    let errors = pool.install(|| {
        samples
            .par_iter()
            .enumerate()
            .map(|(i, s)| -> Result<(Category, PoseError)> {
                let i = i as u64;
                let seen = if occlusion > 0.0 {
                    apply_occlusion(s, occlusion, derive_seed(e.seed, STREAM_OCCLUSION, i))?
                } else {
                    s.clone()
                };
                let pred = predict(&seen, &CategorySpec::new(s.category), &config.model, store)?;
                let err = pose_errors(&pred, &s.gt, s.category.symmetry(), e.n_mc, derive_seed(e.seed, STREAM_MC, i));
                if !(err.rotation_err.is_finite() && err.translation_err.is_finite() && err.iou.is_finite()) {
                    return Err(CliError::Numeric(format!("non-finite pose error on sample {i}")));
                }
                Ok((s.category, err))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let report = aggregate(&errors).expect("nonempty");
    Ok(Evaluation { occlusion, errors, report })
}

pub fn check_priors(config: &ExperimentConfig) -> Result<Vec<(Category, PriorCheck)>> {
    let c = &config.check;
    config
        .data
        .categories
        .iter()
        .map(|&cat| Ok((cat, check_prior(&CategorySpec::new(cat), c.instances, c.samples, c.seed)?)))
        .collect()
}

/// Neighbor graph over a sample's points with its prior embeddings as
/// features.
pub fn sample_graph(sample: &SceneSample, k: usize, alpha: f64) -> Result<HybridGraph> {
    let features: Vec<f64> = sample.point_embeddings().iter().flatten().copied().collect();
    Ok(build_receptive_field(&features, EMBEDDING_DIM, sample.cloud.points(), k, alpha)?)
}

/// Small network sharing the configured graph settings, cheap enough for
/// finite differences over every weight.
pub fn probe_model(config: &ExperimentConfig) -> ModelConfig {
    let m = &config.model.hgf;
    ModelConfig {
        hgf: HgfConfig {
            k: m.k.min(6),
            widths: vec![6; m.layers + 1],
            global_width: 6,
            topo_channels: 4,
            topo_global_width: 4,
            pe_bands: 2,
            ..m.clone()
        },
        head_hidden: 8,
    }
}

/// Largest finite-difference error of the full loss gradient, grouped by
/// layer (parameter name without its last component).
pub fn grad_check(config: &ExperimentConfig) -> Result<Vec<(String, f64)>> {
    let model = probe_model(config);
    let category = config.data.categories[0];
    let spec = CategorySpec::new(category);
    let seed = derive_seed(config.check.seed, STREAM_PROBE, 0);
    let sample = generate_scene(&spec, &config.intrinsics(), 24, seed)?;
    let store = init_model(&model, seed);
    let mut cache = GraphCache::frozen();
    let per_param = gradient_check_params(
        |tape: &mut Tape, store: &ParamStore| {
            let fwd = forward_sample(tape, &sample, &model, store, &mut cache)?;
            Ok(pose_loss(tape, &fwd.head, &sample.gt, &sample.cloud, &spec, &config.loss)?.total)
        },
        &store,
        1e-5,
    )?;
    let mut layers: BTreeMap<String, f64> = BTreeMap::new();
    for (name, err) in per_param {
        let layer = name.rsplit_once('.').map_or(name.as_str(), |(l, _)| l).to_string();
        let worst = layers.entry(layer).or_insert(0.0);
        *worst = worst.max(err);
    }
    Ok(layers.into_iter().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    Alpha1,
    Neighbors,
    Occlusion,
}

impl Sweep {
    pub fn parse(name: &str) -> Option<Sweep> {
        match name {
            "alpha1" => Some(Sweep::Alpha1),
            "neighbors" => Some(Sweep::Neighbors),
            "occlusion" => Some(Sweep::Occlusion),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Sweep::Alpha1 => "alpha1",
            Sweep::Neighbors => "neighbors",
            Sweep::Occlusion => "occlusion",
        }
    }

    pub fn values(self) -> &'static [f64] {
        match self {
            Sweep::Alpha1 => &[0.6, 0.7, 0.8, 0.9],
            Sweep::Neighbors => &[10.0, 15.0, 20.0, 30.0],
            Sweep::Occlusion => &[0.1, 0.25, 0.4],
        }
    }
}

/// One evaluation per sweep value. Alpha and neighbor sweeps retrain for
/// every value; the occlusion sweep trains once.
pub fn ablate(
    config: &ExperimentConfig,
    sweep: Sweep,
    pool: &ThreadPool,
    mut log: impl FnMut(&str),
) -> Result<Vec<(f64, Evaluation)>> {
    let train = generate(config, Split::Train, pool)?;
    let test = generate(config, Split::Test, pool)?;
    let mut rows = Vec::new();
    let mut shared: Option<ParamStore> = None;
    for &v in sweep.values() {
        let mut c = config.clone();
        match sweep {
            Sweep::Alpha1 => c.model.hgf.alpha1 = v,
            Sweep::Neighbors => c.model.hgf.k = v as usize,
            Sweep::Occlusion => c.eval.occlusion = v,
        }
        c.validate()?;
        log(&format!("{} = {v}", sweep.name()));
        let store = match (&shared, sweep) {
            (Some(s), Sweep::Occlusion) => s.clone(),
            _ => train_model(&c, &train, pool, |_| {})?.0,
        };
        rows.push((v, evaluate(&c, &test, &store, c.eval.occlusion, pool)?));
        if sweep == Sweep::Occlusion {
            shared = Some(store);
        }
    }
    Ok(rows)
}

pub fn sweep_json(sweep: Sweep, rows: &[(f64, Evaluation)]) -> Value {
    let rows: Vec<Value> = rows
        .iter()
        .map(|(v, e)| {
            let mut r = e.to_json();
            r["value"] = json!(v);
            r
        })
        .collect();
    json!({ "sweep": sweep.name(), "rows": rows })
}
