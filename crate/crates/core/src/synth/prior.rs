//! Analytic surface prior on procedurally generated instances.
//!
//! Each embedding is `[height, radius, azimuth, part]`, all computed from the
//! canonical-frame surface point and normalized per instance:
//!
//! - `height`: position between the lowest and highest point of the object.
//! - `radius`: distance from the up axis over the category reference radius.
//! - `azimuth`: dropped (zero) for solids of revolution, folded to `|θ|/π`
//!   about the mirror plane for mirror-symmetric shapes, `θ/π` otherwise.
//! - `part`: the part tag scaled to `[0, 1]`.
//!
//! Values are snapped to a grid of step 2^-20. Symmetry-related points then
//! compare bit-equal despite rounding in their coordinates, and every value
//! is exactly representable in the `f32` prior maps.

use super::category::Symmetry;
use super::shape::Instance;
use crate::math::{self, Vec3, PI};
use crate::{Error, Result};

pub const EMBEDDING_DIM: usize = 4;

pub type OracleEmbedding = [f64; EMBEDDING_DIM];

/// Largest surface distance accepted by [`oracle_prior`].
pub const SURFACE_TOLERANCE: f64 = 1e-6;

/// Embedding values are snapped to multiples of this step.
pub const EMBEDDING_STEP: f64 = 1.0 / 1_048_576.0;

// Multiples of 2^-20 below 2^3 in magnitude are exact in f32.
fn quantize(v: f64) -> f64 {
    math::round(v / EMBEDDING_STEP) * EMBEDDING_STEP
}

/// Embedding of the canonical-frame surface point `point` of `instance`.
pub fn oracle_prior(point: Vec3, instance: &Instance) -> Result<OracleEmbedding> {
    let b = instance.to_build(point);
    let (distance, tag) = instance.sdf_build(b);
    if !(libm::fabs(distance) <= SURFACE_TOLERANCE) {
        return Err(Error::OffSurface { distance });
    }
    let height = (b[2] - instance.zmin) / (instance.zmax - instance.zmin);
    let radius = math::sqrt(b[0] * b[0] + b[1] * b[1]) / instance.rho_ref;
    let azimuth = match instance.category.symmetry() {
        Symmetry::Revolution => 0.0,
        Symmetry::Mirror => libm::fabs(math::atan2(b[1], b[0])) / PI,
        Symmetry::None => math::atan2(b[1], b[0]) / PI,
    };
    let part = f64::from(tag) / f64::from(instance.part_count.max(2) - 1);
    Ok([quantize(height), quantize(radius), quantize(azimuth), quantize(part)])
}

pub fn embedding_distance(a: &OracleEmbedding, b: &OracleEmbedding) -> f64 {
    let mut s = 0.0;
    for k in 0..EMBEDDING_DIM {
        s += (a[k] - b[k]) * (a[k] - b[k]);
    }
    math::sqrt(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_instance, Category, CategorySpec, SurfaceParam};
    use alloc::vec::Vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn can_points_related_by_axis_rotation_match() {
        let inst = generate_instance(&CategorySpec::new(Category::Can), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (param, p) in inst.sample_surface(500, 2) {
            let SurfaceParam::Lathe { prim, edge, t, .. } = param else { panic!() };
            let theta = rng.gen_range(-PI..PI);
            let q = inst.surface_point(&SurfaceParam::Lathe { prim, edge, t, theta }).unwrap();
            assert_eq!(oracle_prior(p, &inst).unwrap(), oracle_prior(q, &inst).unwrap());
        }
    }

    #[test]
    fn mug_mirror_points_match() {
        let inst = generate_instance(&CategorySpec::new(Category::Mug), 5);
        for (_, p) in inst.sample_surface(1000, 4) {
            let mirrored = [p[0], -p[1], p[2]];
            assert_eq!(oracle_prior(p, &inst).unwrap(), oracle_prior(mirrored, &inst).unwrap());
        }
    }

    #[test]
    fn off_surface_points_are_rejected() {
        let inst = generate_instance(&CategorySpec::new(Category::Bowl), 1);
        assert!(matches!(oracle_prior([0.0, 0.0, 1.0], &inst), Err(Error::OffSurface { .. })));
    }

    #[test]
    fn bowl_rims_are_closer_to_each_other_than_to_bases() {
        let spec = CategorySpec::new(Category::Bowl);
        let (a, b) = (generate_instance(&spec, 1), generate_instance(&spec, 2));
        assert!((a.size()[0] - b.size()[0]).abs() > 1e-3);
        let dense = |inst: &Instance, part: f64| -> Vec<OracleEmbedding> {
            inst.sample_surface(4000, 9)
                .into_iter()
                .map(|(_, p)| oracle_prior(p, inst).unwrap())
                .filter(|e| e[3] == part)
                .collect()
        };
        let (rim_a, rim_b) = (dense(&a, 0.5), dense(&b, 0.5));
        let (base_a, base_b) = (dense(&a, 0.0), dense(&b, 0.0));
        assert!(!rim_a.is_empty() && !rim_b.is_empty() && !base_a.is_empty());
        let mean = |xs: &[OracleEmbedding], ys: &[OracleEmbedding]| {
            let mut s = 0.0;
            for x in xs {
                for y in ys {
                    s += embedding_distance(x, y);
                }
            }
            s / (xs.len() * ys.len()) as f64
        };
        let rim_rim = mean(&rim_a, &rim_b);
        assert!(rim_rim < mean(&rim_a, &base_a));
        assert!(rim_rim < mean(&rim_b, &base_b));
        assert!(rim_rim < mean(&rim_a, &base_b));
    }
}
