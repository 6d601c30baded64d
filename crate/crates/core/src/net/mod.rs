//! Point feature network: prior refinement, global context pooling, hybrid
//! receptive fields and the HGF fusion stream.

mod graph;
mod layers;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

pub use graph::{build_receptive_field, build_receptive_fields, feature_distance, hybrid_distance, HybridGraph};
pub use layers::{
    backproject_features, fusion_stream, gc_layer, hgf_layer, masked_rows, refine_prior, tgc_aggregate,
    FusionOutput, GraphCache, TopoFeatureMap,
};

use crate::math::{self, PI};
use crate::tensor::{ParamStore, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct HgfConfig {
    /// Neighbors per point in every graph.
    pub k: usize,
    /// Feature weight of the graph the edge convolution runs on.
    pub alpha1: f64,
    /// Feature weight of the graph used for neighbor averaging.
    pub alpha2: f64,
    /// Widths of the initial edge convolution and of each HGF layer.
    pub widths: Vec<usize>,
    pub global_width: usize,
    /// Channels of the refined prior map.
    pub topo_channels: usize,
    /// Width of the pooled prior-map context vector.
    pub topo_global_width: usize,
    pub pe_bands: usize,
    pub pe_base: f64,
    pub layers: usize,
    /// Average graph-path outputs over the alpha-2 neighbors.
    pub robust_mean: bool,
}

impl Default for HgfConfig {
    fn default() -> Self {
        HgfConfig {
            k: 15,
            alpha1: 0.8,
            alpha2: 0.2,
            widths: vec![64, 64, 128, 128, 256],
            global_width: 256,
            topo_channels: 32,
            topo_global_width: 64,
            pe_bands: 6,
            pe_base: PI,
            layers: 4,
            robust_mean: true,
        }
    }
}

impl HgfConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if !(0.0..=1.0).contains(&self.alpha1) || !(0.0..=1.0).contains(&self.alpha2) {
            return bad("alpha values must lie in [0, 1]");
        }
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if self.widths.len() != self.layers + 1 {
            return bad("need one width for the initial graph convolution plus one per HGF layer");
        }
        if self.widths.contains(&0) || self.global_width == 0 || self.topo_channels == 0 || self.topo_global_width == 0
        {
            return bad("layer widths must be positive");
        }
        if !(self.pe_base > 0.0 && self.pe_base.is_finite()) {
            return bad("positional encoding base frequency must be positive");
        }
        Ok(())
    }

    pub fn pe_width(&self) -> usize {
        6 * self.pe_bands
    }

    /// Width of the fused per-point features.
    pub fn fused_width(&self) -> usize {
        self.widths.iter().sum::<usize>() + self.global_width
    }
}

/// Adds `name.w` (`rows x cols`, He-uniform) and `name.b` (zeros).
pub(crate) fn init_dense<R: Rng>(store: &mut ParamStore, name: &str, rows: usize, cols: usize, rng: &mut R) {
    init_weight(store, &format!("{name}.w"), rows, cols, rng);
    store.insert(&format!("{name}.b"), Tensor::zeros(1, cols));
}

pub(crate) fn init_weight<R: Rng>(store: &mut ParamStore, name: &str, rows: usize, cols: usize, rng: &mut R) {
    let bound = math::sqrt(6.0 / rows as f64);
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
    store.insert(name, Tensor::from_parts(rows, cols, data));
}

/// Initializes every parameter the feature network reads.
pub fn init_params<R: Rng>(config: &HgfConfig, embedding_dim: usize, store: &mut ParamStore, rng: &mut R) {
    let (c, pe) = (config.topo_channels, config.pe_width());
    init_weight(store, "refine.w", embedding_dim, c, rng);
    init_weight(store, "tgc.score.w", c, 1, rng);
    init_dense(store, "tgc.fc1", c, config.topo_global_width, rng);
    init_dense(store, "tgc.fc2", config.topo_global_width, config.topo_global_width, rng);
    init_dense(store, "hgf0.gc", 2 * (c + pe), config.widths[0], rng);
    for l in 1..=config.layers {
        let input = config.widths[l - 1] + pe;
        init_dense(store, &format!("hgf{l}.spatial"), input, config.widths[l], rng);
        init_dense(store, &format!("hgf{l}.gc"), 2 * input, config.widths[l], rng);
    }
    init_dense(store, "fusion.global", config.widths[config.layers], config.global_width, rng);
}

#[cfg(test)]
mod tests;
