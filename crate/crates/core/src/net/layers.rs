use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::graph::{build_receptive_field, build_receptive_fields, HybridGraph};
use super::HgfConfig;
use crate::geometry::positional_encoding;
use crate::math::Vec3;
use crate::tensor::{Groups, ParamStore, Tape, Tensor, Var};
use crate::{Error, Result};

/// Neighbor graphs used by forward passes.
///
/// A live cache rebuilds every graph. A frozen cache stores the graphs of
/// the first pass and, after [`GraphCache::rewind`], hands them out again in
/// the same order, so that repeated passes over perturbed weights see the
/// same neighborhoods.
#[derive(Debug, Clone, Default)]
pub struct GraphCache {
    graphs: Vec<HybridGraph>,
    cursor: usize,
    frozen: bool,
}

impl GraphCache {
    pub fn live() -> Self {
        Self::default()
    }

    pub fn frozen() -> Self {
        GraphCache { frozen: true, ..Self::default() }
    }

    pub fn rewind(&mut self) {
        self.cursor = 0;
    }

    pub fn graphs(&self) -> &[HybridGraph] {
        &self.graphs
    }

    fn obtain<F>(&mut self, count: usize, build: F) -> Result<Vec<HybridGraph>>
    where
        F: FnOnce() -> Result<Vec<HybridGraph>>,
    {
        if self.frozen && self.cursor + count <= self.graphs.len() {
            let out = self.graphs[self.cursor..self.cursor + count].to_vec();
            self.cursor += count;
            return Ok(out);
        }
        let built = build()?;
        if self.frozen {
            self.graphs.extend(built.iter().cloned());
            self.cursor = self.graphs.len();
        }
        Ok(built)
    }
}

/// Refined per-pixel features, stored for the masked pixels only; every
/// other pixel is zero.
#[derive(Debug, Clone)]
pub struct TopoFeatureMap {
    /// `|mask| x C`, row `r` belonging to pixel `pixels[r]`.
    pub features: Var,
    pixels: Vec<usize>,
    row_of: Vec<usize>,
    width: usize,
    height: usize,
}

impl TopoFeatureMap {
    pub fn pixels(&self) -> &[usize] {
        &self.pixels
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Row-major `height x width x C` copy with zeros outside the mask.
    pub fn dense(&self, tape: &Tape) -> Vec<f64> {
        let f = tape.value(self.features);
        let c = f.cols();
        let mut out = vec![0.0; self.width * self.height * c];
        for (r, &p) in self.pixels.iter().enumerate() {
            out[p * c..(p + 1) * c].copy_from_slice(f.row_slice(r));
        }
        out
    }
}

/// Gathers the masked entries of a `height x width x dim` map into a
/// `|mask| x dim` tensor, in row-major pixel order.
pub fn masked_rows(map: &[f32], mask: &[bool], dim: usize) -> Result<(Tensor, Vec<usize>)> {
    if map.len() != mask.len() * dim {
        return Err(Error::shape("prior map and mask sizes differ"));
    }
    let pixels: Vec<usize> = (0..mask.len()).filter(|&p| mask[p]).collect();
    let mut data = Vec::with_capacity(pixels.len() * dim);
    for &p in &pixels {
        data.extend(map[p * dim..(p + 1) * dim].iter().map(|v| f64::from(*v)));
    }
    Ok((Tensor::matrix(pixels.len(), dim, data)?, pixels))
}

/// Per-pixel linear map followed by relu: a 1x1 convolution over the
/// masked prior rows. Uses `refine.w` (`E x C`).
pub fn refine_prior(
    tape: &mut Tape,
    prior_rows: &Tensor,
    pixels: Vec<usize>,
    width: usize,
    height: usize,
    store: &ParamStore,
) -> Result<TopoFeatureMap> {
    if prior_rows.rows() != pixels.len() {
        return Err(Error::shape("one prior row per masked pixel required"));
    }
    let mut row_of = vec![usize::MAX; width * height];
    for (r, &p) in pixels.iter().enumerate() {
        if p >= row_of.len() {
            return Err(Error::Index { index: p, len: row_of.len() });
        }
        row_of[p] = r;
    }
    let x = tape.constant(prior_rows.clone());
    let w = tape.param(store, "refine.w")?;
    let lin = tape.linear(x, w, None)?;
    let features = tape.relu(lin);
    Ok(TopoFeatureMap { features, pixels, row_of, width, height })
}

fn dense(tape: &mut Tape, x: Var, store: &ParamStore, name: &str) -> Result<Var> {
    let w = tape.param(store, &format!("{name}.w"))?;
    let b = tape.param(store, &format!("{name}.b"))?;
    tape.linear(x, w, Some(b))
}

fn dense_relu(tape: &mut Tape, x: Var, store: &ParamStore, name: &str) -> Result<Var> {
    let y = dense(tape, x, store, name)?;
    Ok(tape.relu(y))
}

/// Global context of the refined map: attention pooling over the masked
/// pixels (scores from `tgc.score.w`) followed by a two-layer MLP.
pub fn tgc_aggregate(tape: &mut Tape, map: &TopoFeatureMap, store: &ParamStore) -> Result<Var> {
    if map.pixels.is_empty() {
        return Err(Error::EmptyMask);
    }
    let score_w = tape.param(store, "tgc.score.w")?;
    let scores = tape.linear(map.features, score_w, None)?;
    let pooled = tape.softmax_pool(map.features, scores)?;
    let hidden = dense_relu(tape, pooled, store, "tgc.fc1")?;
    dense(tape, hidden, store, "tgc.fc2")
}

/// Row `i` is the refined feature of pixel `pixel_indices[i]`.
pub fn backproject_features(tape: &mut Tape, map: &TopoFeatureMap, pixel_indices: &[usize]) -> Result<Var> {
    let mut rows = Vec::with_capacity(pixel_indices.len());
    for &p in pixel_indices {
        match map.row_of.get(p) {
            None => return Err(Error::Index { index: p, len: map.row_of.len() }),
            Some(&usize::MAX) => return Err(Error::OutsideMask { pixel: p }),
            Some(&r) => rows.push(r),
        }
    }
    tape.gather_rows(map.features, &rows)
}

/// Edge convolution: row `i` of the output is
/// `max_{j in N(i)} relu([x_i, x_j - x_i] W + b)` with `W: 2D x out`.
///
/// Evaluated as `relu(x_i (W_a - W_b) + b + max_j x_j W_b)`, which is the
/// same function because relu is monotone.
pub fn gc_layer(tape: &mut Tape, x: Var, groups: &Groups, w: Var, b: Var) -> Result<Var> {
    let d = tape.value(x).cols();
    if tape.value(w).rows() != 2 * d {
        return Err(Error::shape(format!(
            "gc_layer: weight has {} rows for input width {d}",
            tape.value(w).rows()
        )));
    }
    if groups.len() != tape.value(x).rows() {
        return Err(Error::shape("gc_layer: graph and features disagree on point count"));
    }
    let w_self = tape.slice_rows(w, 0, d)?;
    let w_edge = tape.slice_rows(w, d, d)?;
    let w_center = tape.sub(w_self, w_edge)?;
    let center = tape.linear(x, w_center, Some(b))?;
    let edge = tape.linear(x, w_edge, None)?;
    let pooled = tape.max_over_groups(edge, groups)?;
    let pre = tape.add(center, pooled)?;
    Ok(tape.relu(pre))
}

fn gc_named(tape: &mut Tape, x: Var, groups: &Groups, store: &ParamStore, name: &str) -> Result<Var> {
    let w = tape.param(store, &format!("{name}.w"))?;
    let b = tape.param(store, &format!("{name}.b"))?;
    gc_layer(tape, x, groups, w, b)
}

/// Two-path block. The spatial path maps `[x, PE]` through linear+relu.
/// The graph path runs an edge convolution over the alpha-1 hybrid graph of
/// `[x, PE]` rows and averages the result over each point's alpha-2
/// neighbors. The paths are summed.
#[allow(clippy::too_many_arguments)]
pub fn hgf_layer(
    tape: &mut Tape,
    x: Var,
    points: &[Vec3],
    pe: Var,
    config: &HgfConfig,
    store: &ParamStore,
    name: &str,
    cache: &mut GraphCache,
) -> Result<Var> {
    let n = points.len();
    if tape.value(x).rows() != n || tape.value(pe).rows() != n {
        return Err(Error::shape("hgf_layer: features, encoding and cloud disagree on point count"));
    }
    let nodes = tape.concat(&[x, pe], 1)?;
    let spatial = dense_relu(tape, nodes, store, &format!("{name}.spatial"))?;

    let xv = tape.value(x);
    let (feats, width) = (xv.data().to_vec(), xv.cols());
    let alphas = if config.robust_mean { vec![config.alpha1, config.alpha2] } else { vec![config.alpha1] };
    let graphs = cache.obtain(alphas.len(), || build_receptive_fields(&feats, width, points, config.k, &alphas))?;
    let local = gc_named(tape, nodes, &graphs[0].groups(), store, &format!("{name}.gc"))?;
    let local = if config.robust_mean { tape.mean_over_groups(local, &graphs[1].groups())? } else { local };
    tape.add(spatial, local)
}

/// Point features after the fusion stream.
#[derive(Debug, Clone)]
pub struct FusionOutput {
    /// `N x (sum of layer widths + global width)`
    pub fused: Var,
    /// `1 x global width`
    pub global: Var,
    /// Per-layer outputs, first the initial edge convolution.
    pub layers: Vec<Var>,
}

/// Initial edge convolution over the point-distance graph of
/// `[topo, PE]`, then the HGF layers (inputs of every other layer
/// max-pooled over the point-distance neighborhood), a global max-pool
/// with a linear map, and concatenation of everything per point.
pub fn fusion_stream(
    tape: &mut Tape,
    topo: Var,
    points: &[Vec3],
    config: &HgfConfig,
    store: &ParamStore,
    cache: &mut GraphCache,
) -> Result<FusionOutput> {
    let n = points.len();
    if tape.value(topo).rows() != n {
        return Err(Error::shape("fusion_stream: topo features and cloud disagree on point count"));
    }
    let pe_width = 6 * config.pe_bands;
    let pe = tape.constant(Tensor::matrix(n, pe_width, positional_encoding(points, config.pe_bands, config.pe_base))?);
    let spatial_graph = cache.obtain(1, || Ok(vec![build_receptive_field(&[], 0, points, config.k, 0.0)?]))?;
    let spatial_graph = &spatial_graph[0];
    let input = tape.concat(&[topo, pe], 1)?;
    let first = gc_named(tape, input, &spatial_graph.groups(), store, "hgf0.gc")?;

    let pool_groups = spatial_graph.groups_with_self();
    let mut layers = vec![first];
    let mut x = first;
    for l in 1..=config.layers {
        if l % 2 == 0 {
            x = tape.max_over_groups(x, &pool_groups)?;
        }
        x = hgf_layer(tape, x, points, pe, config, store, &format!("hgf{l}"), cache)?;
        layers.push(x);
    }
    let everything = Groups::new([(0..n).collect::<Vec<_>>()]);
    let pooled = tape.max_over_groups(x, &everything)?;
    let global = dense(tape, pooled, store, "fusion.global")?;
    let broadcast = tape.gather_rows(global, &vec![0; n])?;
    let mut parts = layers.clone();
    parts.push(broadcast);
    let fused = tape.concat(&parts, 1)?;
    Ok(FusionOutput { fused, global, layers })
}
