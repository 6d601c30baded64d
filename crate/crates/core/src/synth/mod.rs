//! Synthetic scenes: procedural category shapes, the analytic surface prior
//! and rendering of posed instances into [`SceneSample`]s.

mod category;
mod prior;
mod properties;
mod render;
mod shape;

pub use category::{Category, CategorySpec, ParamRange, Symmetry};
pub use prior::{embedding_distance, oracle_prior, OracleEmbedding, EMBEDDING_DIM, EMBEDDING_STEP, SURFACE_TOLERANCE};
pub use render::{
    apply_occlusion, default_intrinsics, generate_scene, random_pose, render_sample, SceneSample,
    MIN_VISIBLE_PIXELS,
};
pub use properties::{check_prior, PriorCheck};
pub use shape::{generate_instance, Instance, SurfaceParam};
