//! Pose and size regression on top of the fused point features, the
//! training loss and the training loop.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::geometry::{gram_schmidt_rotation, PointCloud, Pose};
use crate::math::{self, Vec3};
use crate::net::{
    self, backproject_features, fusion_stream, masked_rows, refine_prior, tgc_aggregate, GraphCache, HgfConfig,
};
use crate::synth::{CategorySpec, SceneSample, Symmetry, EMBEDDING_DIM};
use crate::tensor::{Adam, Groups, LrSchedule, ParamStore, Tape, Tensor, Var};
use crate::{Error, Result};

/// Raw translation and size outputs are multiplied by this to give meters.
pub const RESIDUAL_SCALE: f64 = 0.1;

/// Smallest predicted box side, meters.
pub const MIN_SIZE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub hgf: HgfConfig,
    /// Hidden width of both regression MLPs.
    pub head_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { hgf: HgfConfig::default(), head_hidden: 256 }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.hgf.validate()?;
        if self.head_hidden == 0 {
            return Err(Error::InvalidArgument("head width must be positive".into()));
        }
        Ok(())
    }

    /// Width of the per-point pose features.
    pub fn pose_width(&self) -> usize {
        self.hgf.topo_global_width + self.hgf.fused_width()
    }
}

/// Fresh parameters for the whole network.
pub fn init_model(config: &ModelConfig, seed: u64) -> ParamStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    net::init_params(&config.hgf, EMBEDDING_DIM, &mut store, &mut rng);
    let (w, h) = (config.pose_width(), config.head_hidden);
    net::init_dense(&mut store, "head.rot1", w, h, &mut rng);
    net::init_dense(&mut store, "head.rot2", h, 6, &mut rng);
    net::init_dense(&mut store, "head.res1", w + 3, h, &mut rng);
    net::init_dense(&mut store, "head.res2", h, 6, &mut rng);
    // Start near unit axes and near-zero residuals (centroid, mean size).
    shrink(&mut store, "head.rot2.w", ROTATION_OUTPUT_INIT);
    shrink(&mut store, "head.res2.w", RESIDUAL_OUTPUT_INIT);
    store
}

/// Multiplier on the He-uniform init of the axis output layer.
pub const ROTATION_OUTPUT_INIT: f64 = 0.1;
/// Multiplier on the He-uniform init of the residual output layer.
pub const RESIDUAL_OUTPUT_INIT: f64 = 0.01;

fn shrink(store: &mut ParamStore, name: &str, factor: f64) {
    if let Some(t) = store.get_mut(name) {
        t.data_mut().iter_mut().for_each(|v| *v *= factor);
    }
}

/// Decoupled rotation axes and residuals, as plain values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadOutput {
    pub a1: Vec3,
    pub a2: Vec3,
    /// Translation offset from the cloud centroid, meters.
    pub t_res: Vec3,
    /// Size offset from the category mean size, meters.
    pub s_res: Vec3,
}

/// Head outputs as tape values.
#[derive(Debug, Clone, Copy)]
pub struct HeadVars {
    /// `1 x 6`: a1 then a2.
    pub axes: Var,
    /// `1 x 6`: translation then size residual, meters.
    pub residuals: Var,
}

impl HeadVars {
    pub fn output(&self, tape: &Tape) -> HeadOutput {
        let a = tape.value(self.axes).data();
        let r = tape.value(self.residuals).data();
        HeadOutput {
            a1: [a[0], a[1], a[2]],
            a2: [a[3], a[4], a[5]],
            t_res: [r[0], r[1], r[2]],
            s_res: [r[3], r[4], r[5]],
        }
    }
}

fn dense(tape: &mut Tape, x: Var, store: &ParamStore, name: &str) -> Result<Var> {
    let w = tape.param(store, &alloc::format!("{name}.w"))?;
    let b = tape.param(store, &alloc::format!("{name}.b"))?;
    tape.linear(x, w, Some(b))
}

fn mlp(tape: &mut Tape, x: Var, store: &ParamStore, first: &str, second: &str) -> Result<Var> {
    let h = dense(tape, x, store, first)?;
    let h = tape.relu(h);
    dense(tape, h, store, second)
}

/// Rotation MLP on max-pooled pose features; residual MLP on max-pooled
/// `[pose features, coordinates]`.
pub fn head_forward(tape: &mut Tape, pose_features: Var, coords: Var, store: &ParamStore) -> Result<HeadVars> {
    let n = tape.value(pose_features).rows();
    if tape.value(coords).rows() != n || tape.value(coords).cols() != 3 {
        return Err(Error::shape("head: coordinates must be N x 3 and aligned with the features"));
    }
    let width = tape.value(pose_features).cols();
    let joined = tape.concat(&[pose_features, coords], 1)?;
    let everything = Groups::new([(0..n).collect::<Vec<_>>()]);
    let pooled = tape.max_over_groups(joined, &everything)?;
    let pooled_features = tape.slice_cols(pooled, 0, width)?;
    let axes = mlp(tape, pooled_features, store, "head.rot1", "head.rot2")?;
    let raw = mlp(tape, pooled, store, "head.res1", "head.res2")?;
    let residuals = tape.scale(raw, RESIDUAL_SCALE);
    Ok(HeadVars { axes, residuals })
}

/// Tape values of one full forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    pub head: HeadVars,
    pub pose_features: Var,
}

/// Prior map to head outputs for one observation. The cloud is shifted to
/// its centroid before entering the network; the head sees those
/// coordinates in the unit of its raw residual outputs.
pub fn forward_sample(
    tape: &mut Tape,
    sample: &SceneSample,
    config: &ModelConfig,
    store: &ParamStore,
    cache: &mut GraphCache,
) -> Result<Forward> {
    cache.rewind();
    let (rows, pixels) = masked_rows(&sample.prior, &sample.mask, EMBEDDING_DIM)?;
    let map = refine_prior(tape, &rows, pixels, sample.width(), sample.height(), store)?;
    let topo_global = tgc_aggregate(tape, &map, store)?;
    let topo = backproject_features(tape, &map, &sample.pixel_indices)?;
    let center = sample.cloud.centroid();
    let points: Vec<Vec3> = sample.cloud.points().iter().map(|p| math::sub(*p, center)).collect();
    let fusion = fusion_stream(tape, topo, &points, &config.hgf, store, cache)?;
    let n = points.len();
    let broadcast = tape.gather_rows(topo_global, &vec![0; n])?;
    let pose_features = tape.concat(&[broadcast, fusion.fused], 1)?;
    let coords = points.iter().flat_map(|p| p.iter().map(|v| v / RESIDUAL_SCALE)).collect();
    let coords = tape.constant(Tensor::matrix(n, 3, coords)?);
    let head = head_forward(tape, pose_features, coords, store)?;
    Ok(Forward { head, pose_features })
}

/// `R` from the two axes, `t = centroid + t_res`, `s = mean size + s_res`
/// clamped to at least 1 mm per side.
pub fn assemble_pose(out: &HeadOutput, cloud: &PointCloud, spec: &CategorySpec) -> Result<Pose> {
    let rotation = gram_schmidt_rotation(out.a1, out.a2)?;
    let translation = math::add(cloud.centroid(), out.t_res);
    let mut size = math::add(spec.mean_size, out.s_res);
    for s in size.iter_mut() {
        *s = s.max(MIN_SIZE);
    }
    Pose::new(rotation, translation, size)
}

/// The head output that assembles exactly into `gt`.
pub fn residual_targets(gt: &Pose, cloud: &PointCloud, spec: &CategorySpec) -> HeadOutput {
    HeadOutput {
        a1: math::column(&gt.rotation, 2),
        a2: math::column(&gt.rotation, 0),
        t_res: math::sub(gt.translation, cloud.centroid()),
        s_res: math::sub(gt.size, spec.mean_size),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub rotation: f64,
    pub translation: f64,
    pub size: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { rotation: 1.0, translation: 1.0, size: 1.0 }
    }
}

/// Loss terms as tape values; `total` is the weighted sum.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub total: Var,
    pub rotation: Var,
    pub translation: Var,
    pub size: Var,
}

/// Scalar loss values.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub total: f64,
    pub rotation: f64,
    pub translation: f64,
    pub size: f64,
}

impl LossVars {
    pub fn values(&self, tape: &Tape) -> LossParts {
        LossParts {
            total: tape.value(self.total).item(),
            rotation: tape.value(self.rotation).item(),
            translation: tape.value(self.translation).item(),
            size: tape.value(self.size).item(),
        }
    }
}

fn squared_chord(tape: &mut Tape, axis: Var, target: Vec3) -> Result<Var> {
    let unit = tape.normalize_rows(axis)?;
    let t = tape.constant(Tensor::row(target.to_vec()));
    let mean = tape.mse(unit, t)?;
    Ok(tape.scale(mean, 3.0))
}

/// Weighted sum of rotation, translation and size terms.
///
/// Each rotation term is the squared chord `|a/|a| - target|^2`, a smooth
/// monotone function of the angle between the predicted and target axis.
/// The second-axis term is dropped for bodies of revolution; for mirror
/// categories it is taken against whichever of `±target` is closer.
/// Translation and size residuals use an L1 penalty in meters.
pub fn pose_loss(
    tape: &mut Tape,
    head: &HeadVars,
    gt: &Pose,
    cloud: &PointCloud,
    spec: &CategorySpec,
    weights: &LossWeights,
) -> Result<LossVars> {
    let target = residual_targets(gt, cloud, spec);
    let a1 = tape.slice_cols(head.axes, 0, 3)?;
    let mut rotation = squared_chord(tape, a1, target.a1)?;
    if spec.symmetry != Symmetry::Revolution {
        let a2 = tape.slice_cols(head.axes, 3, 3)?;
        let mut side = target.a2;
        if spec.symmetry == Symmetry::Mirror {
            let pred = tape.value(a2).data();
            if math::dot([pred[0], pred[1], pred[2]], side) < 0.0 {
                side = math::scale(side, -1.0);
            }
        }
        let second = squared_chord(tape, a2, side)?;
        rotation = tape.add(rotation, second)?;
    }
    let t_pred = tape.slice_cols(head.residuals, 0, 3)?;
    let s_pred = tape.slice_cols(head.residuals, 3, 3)?;
    let t_target = tape.constant(Tensor::row(target.t_res.to_vec()));
    let s_target = tape.constant(Tensor::row(target.s_res.to_vec()));
    let translation = tape.l1(t_pred, t_target)?;
    let size = tape.l1(s_pred, s_target)?;
    let wr = tape.scale(rotation, weights.rotation);
    let wt = tape.scale(translation, weights.translation);
    let ws = tape.scale(size, weights.size);
    let sum = tape.add(wr, wt)?;
    let total = tape.add(sum, ws)?;
    Ok(LossVars { total, rotation, translation, size })
}

/// Loss and parameter gradients for one sample.
pub fn sample_gradients(
    sample: &SceneSample,
    spec: &CategorySpec,
    config: &ModelConfig,
    store: &ParamStore,
    weights: &LossWeights,
) -> Result<(LossParts, BTreeMap<String, Tensor>)> {
    let mut tape = Tape::new();
    let fwd = forward_sample(&mut tape, sample, config, store, &mut GraphCache::live())?;
    let loss = pose_loss(&mut tape, &fwd.head, &sample.gt, &sample.cloud, spec, weights)?;
    let parts = loss.values(&tape);
    let grads = tape.backward(loss.total)?;
    Ok((parts, tape.param_grads(&grads)))
}

/// Predicted pose for one observation.
pub fn predict(sample: &SceneSample, spec: &CategorySpec, config: &ModelConfig, store: &ParamStore) -> Result<Pose> {
    let mut tape = Tape::new();
    let fwd = forward_sample(&mut tape, sample, config, store, &mut GraphCache::live())?;
    assemble_pose(&fwd.head.output(&tape), &sample.cloud, spec)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    pub weights: LossWeights,
    /// Seeds mini-batch order.
    pub seed: u64,
}

/// One row of the loss trace; losses are batch means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: LossParts,
}

/// Deterministic mini-batch order: the dataset is reshuffled every epoch
/// and batches are cut from the concatenated epochs.
#[derive(Debug, Clone)]
pub struct BatchOrder {
    rng: ChaCha8Rng,
    queue: Vec<usize>,
    len: usize,
}

impl BatchOrder {
    pub fn new(len: usize, seed: u64) -> Self {
        BatchOrder { rng: ChaCha8Rng::seed_from_u64(seed), queue: Vec::new(), len }
    }

    pub fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.queue.is_empty() {
                self.queue = (0..self.len).collect();
                self.queue.shuffle(&mut self.rng);
                self.queue.reverse();
            }
            out.push(self.queue.pop().expect("queue refilled"));
        }
        out
    }
}

/// Per-sample losses and gradients for a batch, in batch order.
pub type BatchResults = Vec<Result<(LossParts, BTreeMap<String, Tensor>)>>;

/// Training loop with a caller-supplied batch evaluator, so that callers
/// can spread the per-sample work over threads. Results are reduced in
/// batch order, which keeps runs bit-reproducible regardless of how the
/// evaluator schedules its work. Non-finite losses or gradients, and
/// predicted axes collapsing to zero, abort with [`Error::Diverged`].
pub fn train_with<F>(
    samples: &[SceneSample],
    config: &TrainConfig,
    mut store: ParamStore,
    mut evaluate: F,
    mut on_step: impl FnMut(&LossRecord),
) -> Result<(ParamStore, Vec<LossRecord>)>
where
    F: FnMut(&ParamStore, &[usize]) -> BatchResults,
{
    if samples.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let mut order = BatchOrder::new(samples.len(), config.seed);
    let adam = Adam::default();
    let mut trace = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let batch = order.next_batch(config.batch_size);
        let mut sum: BTreeMap<String, Tensor> = BTreeMap::new();
        let mut loss = LossParts::default();
        for result in evaluate(&store, &batch) {
            let (parts, grads) = match result {
                Err(Error::DegenerateAxes) => return Err(Error::Diverged { step }),
                r => r?,
            };
            loss.total += parts.total;
            loss.rotation += parts.rotation;
            loss.translation += parts.translation;
            loss.size += parts.size;
            for (name, g) in grads {
                match sum.get_mut(&name) {
                    Some(acc) => acc.add_assign(&g),
                    None => {
                        sum.insert(name, g);
                    }
                }
            }
        }
        let inv = 1.0 / batch.len() as f64;
        loss.total *= inv;
        loss.rotation *= inv;
        loss.translation *= inv;
        loss.size *= inv;
        let finite_grads = sum.values().all(|g| g.is_finite());
        if !loss.total.is_finite() || !finite_grads {
            return Err(Error::Diverged { step });
        }
        for g in sum.values_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= inv);
        }
        for name in store.names().map(String::from).collect::<Vec<_>>() {
            sum.entry(name.clone()).or_insert_with(|| {
                let t = store.get(&name).expect("listed name");
                Tensor::zeros(t.rows(), t.cols())
            });
        }
        let lr = config.schedule.lr_at(step);
        adam.step(&mut store, &sum, lr)?;
        let record = LossRecord { step, lr, loss };
        on_step(&record);
        trace.push(record);
    }
    Ok((store, trace))
}

/// Single-threaded training from `store`.
pub fn train(
    samples: &[SceneSample],
    spec: &CategorySpec,
    model: &ModelConfig,
    config: &TrainConfig,
    store: ParamStore,
) -> Result<(ParamStore, Vec<LossRecord>)> {
    train_with(
        samples,
        config,
        store,
        |params, batch| {
            batch
                .iter()
                .map(|&i| sample_gradients(&samples[i], spec, model, params, &config.weights))
                .collect()
        },
        |_| {},
    )
}
