use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::category::{CategorySpec, Symmetry};
use super::prior::{embedding_distance, oracle_prior};
use super::shape::{generate_instance, SurfaceParam};
use crate::geometry::RigidTransform;
use crate::math::{rotation_from_uniforms, Vec3};
use crate::Result;

/// Outcome of the three prior-property checks for one category.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorCheck {
    /// Largest embedding change for one surface point seen under two poses.
    pub pose_max_diff: f64,
    /// Largest embedding difference between symmetry-related points.
    pub symmetry_max_diff: f64,
    /// Mean embedding distance between corresponding points of two instances.
    pub corresponding: f64,
    /// Mean embedding distance between unrelated points of two instances.
    pub unrelated: f64,
}

impl PriorCheck {
    /// Required ratio between corresponding and unrelated distances.
    pub const MARGIN: f64 = 0.2;

    pub fn pose_invariant(&self) -> bool {
        self.pose_max_diff == 0.0
    }

    pub fn symmetry_consistent(&self) -> bool {
        self.symmetry_max_diff == 0.0
    }

    pub fn topologically_consistent(&self) -> bool {
        self.corresponding < Self::MARGIN * self.unrelated
    }

    pub fn passes(&self) -> bool {
        self.pose_invariant() && self.symmetry_consistent() && self.topologically_consistent()
    }
}

fn random_transform<R: Rng>(rng: &mut R) -> RigidTransform {
    let t = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.3..2.0)];
    RigidTransform::new(rotation_from_uniforms(rng.gen(), rng.gen(), rng.gen()), t).expect("valid rotation")
}

/// Surface point related to `param` by a random element of the symmetry
/// group, or `None` when the category has none.
fn symmetric_partner<R: Rng>(
    inst: &super::shape::Instance,
    param: &SurfaceParam,
    point: Vec3,
    rng: &mut R,
) -> Option<Vec3> {
    match inst.category.symmetry() {
        Symmetry::None => None,
        Symmetry::Revolution => match *param {
            SurfaceParam::Lathe { prim, edge, t, .. } => {
                let theta = rng.gen_range(-core::f64::consts::PI..core::f64::consts::PI);
                inst.surface_point(&SurfaceParam::Lathe { prim, edge, t, theta })
            }
            _ => None,
        },
        Symmetry::Mirror => {
            let b = inst.to_build(point);
            Some(inst.to_canonical([b[0], -b[1], b[2]]))
        }
    }
}

/// Runs the pose, symmetry and cross-instance checks over `instances`
/// instances with `samples` surface points each.
pub fn check_prior(spec: &CategorySpec, instances: usize, samples: usize, seed: u64) -> Result<PriorCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let built: Vec<_> = (0..instances.max(2)).map(|_| generate_instance(spec, rng.gen())).collect();
    let mut pose_max_diff = 0.0f64;
    let mut symmetry_max_diff = 0.0f64;
    let (mut corr_sum, mut corr_n, mut other_sum, mut other_n) = (0.0, 0usize, 0.0, 0usize);

    for (idx, inst) in built.iter().enumerate() {
        let surface = inst.sample_surface(samples, rng.gen());
        for (param, c) in &surface {
            let (t1, t2) = (random_transform(&mut rng), random_transform(&mut rng));
            let seen1 = t1.apply_inverse(t1.apply(*c));
            let seen2 = t2.apply_inverse(t2.apply(*c));
            let e1 = oracle_prior(seen1, inst)?;
            pose_max_diff = pose_max_diff.max(embedding_distance(&e1, &oracle_prior(seen2, inst)?));
            if let Some(q) = symmetric_partner(inst, param, *c, &mut rng) {
                let e = oracle_prior(q, inst)?;
                symmetry_max_diff = symmetry_max_diff.max(embedding_distance(&oracle_prior(*c, inst)?, &e));
            }
        }

        let other = &built[(idx + 1) % built.len()];
        let mut partners: Vec<Vec3> = other.sample_surface(samples, rng.gen()).into_iter().map(|s| s.1).collect();
        partners.shuffle(&mut rng);
        for ((param, c), unrelated) in surface.iter().zip(&partners) {
            let here = oracle_prior(*c, inst)?;
            if let Some(q) = other.surface_point(param) {
                corr_sum += embedding_distance(&here, &oracle_prior(q, other)?);
                corr_n += 1;
            }
            other_sum += embedding_distance(&here, &oracle_prior(*unrelated, other)?);
            other_n += 1;
        }
    }
    Ok(PriorCheck {
        pose_max_diff,
        symmetry_max_diff,
        corresponding: corr_sum / corr_n.max(1) as f64,
        unrelated: other_sum / other_n.max(1) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::Category;

    #[test]
    fn every_category_satisfies_the_prior_properties() {
        for c in Category::ALL {
            let r = check_prior(&CategorySpec::new(c), 20, 200, 1).unwrap();
            assert!(r.passes(), "{c:?}: {r:?}");
        }
    }
}
