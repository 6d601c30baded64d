use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::category::{Category, CategorySpec};
use super::prior::{oracle_prior, OracleEmbedding, EMBEDDING_DIM};
use super::shape::{generate_instance, Instance};
use crate::geometry::{backproject_depth, sample_points, Intrinsics, PointCloud, Pose};
use crate::math::{self, Vec3, PI};
use crate::{Error, Result};

/// Fewest visible pixels a rendered or occluded sample may keep.
pub const MIN_VISIBLE_PIXELS: usize = 50;

/// One rendered object observation.
///
/// Grids are row-major `height x width`; `depth` and `prior` are zero outside
/// the mask. `cloud` holds `n_points` samples of the back-projected masked
/// depth with `pixel_indices[i]` the source pixel of point `i`. Arrays are
/// kept at `f32` precision so that they survive serialization bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSample {
    pub category: Category,
    pub intrinsics: Intrinsics,
    pub mask: Vec<bool>,
    pub depth: Vec<f32>,
    /// `height x width x EMBEDDING_DIM`
    pub prior: Vec<f32>,
    pub cloud: PointCloud,
    pub pixel_indices: Vec<usize>,
    pub gt: Pose,
    pub seed: u64,
}

impl SceneSample {
    pub fn width(&self) -> usize {
        self.intrinsics.width
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height
    }

    pub fn masked_pixels(&self) -> Vec<usize> {
        self.mask.iter().enumerate().filter(|(_, m)| **m).map(|(i, _)| i).collect()
    }

    pub fn mask_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn prior_at(&self, pixel: usize) -> OracleEmbedding {
        let mut e = [0.0; EMBEDDING_DIM];
        for (k, v) in e.iter_mut().enumerate() {
            *v = f64::from(self.prior[pixel * EMBEDDING_DIM + k]);
        }
        e
    }

    /// Prior embedding seen at each sampled point.
    pub fn point_embeddings(&self) -> Vec<OracleEmbedding> {
        self.pixel_indices.iter().map(|&p| self.prior_at(p)).collect()
    }
}

/// 128 x 128 camera used for generated scenes.
pub fn default_intrinsics() -> Intrinsics {
    Intrinsics { fx: 200.0, fy: 200.0, cx: 64.0, cy: 64.0, width: 128, height: 128 }
}

fn to_f32_cloud(cloud: PointCloud) -> Result<PointCloud> {
    PointCloud::new(
        cloud
            .into_points()
            .into_iter()
            .map(|p| [p[0] as f32 as f64, p[1] as f32 as f64, p[2] as f32 as f64])
            .collect(),
    )
}

fn resample(
    depth: &[f32],
    mask: &[bool],
    k: &Intrinsics,
    n_points: usize,
    seed: u64,
) -> Result<(PointCloud, Vec<usize>)> {
    let depth64: Vec<f64> = depth.iter().map(|d| f64::from(*d)).collect();
    let (full, pixels) = backproject_depth(&depth64, mask, k)?;
    let (cloud, idx) = sample_points(&full, n_points, seed)?;
    Ok((to_f32_cloud(cloud)?, idx.iter().map(|&i| pixels[i]).collect()))
}

/// Ray-traces `instance` posed by `pose` into a depth map, mask and prior
/// map, then back-projects and samples `n_points` points.
pub fn render_sample(
    instance: &Instance,
    pose: &Pose,
    k: &Intrinsics,
    n_points: usize,
    seed: u64,
) -> Result<SceneSample> {
    k.validate()?;
    let transform = pose.transform();
    let origin = transform.apply_inverse([0.0; 3]);
    let (w, h) = (k.width, k.height);
    let mut depth = vec![0.0f32; w * h];
    let mut prior = vec![0.0f32; w * h * EMBEDDING_DIM];
    let mut mask = vec![false; w * h];

    // Only pixels inside the projected bounding sphere can see the object.
    let radius = instance.bounding_radius() * 1.01;
    let center = pose.translation;
    let (u_range, v_range) = if center[2] > radius * 1.05 {
        let (uc, vc) = k.project(center);
        let spread = radius / math::sqrt(center[2] * center[2] - radius * radius);
        let (ru, rv) = (k.fx * spread + 2.0, k.fy * spread + 2.0);
        let clampu = |x: f64| x.clamp(0.0, (w - 1) as f64) as usize;
        let clampv = |x: f64| x.clamp(0.0, (h - 1) as f64) as usize;
        (
            (clampu(math::floor(uc - ru)), clampu(math::ceil(uc + ru))),
            (clampv(math::floor(vc - rv)), clampv(math::ceil(vc + rv))),
        )
    } else {
        ((0, w - 1), (0, h - 1))
    };

    for v in v_range.0..=v_range.1 {
        for u in u_range.0..=u_range.1 {
            let dir_cam = math::normalize(k.ray(u, v)).expect("ray direction is nonzero");
            let dir = math::mat_t_vec(&transform.rotation, dir_cam);
            let Some(t) = instance.raycast(origin, dir) else { continue };
            let z = t * dir_cam[2];
            if !(z > 0.0) {
                continue;
            }
            let hit = math::add(origin, math::scale(dir, t));
            let emb = oracle_prior(hit, instance)?;
            let pixel = v * w + u;
            mask[pixel] = true;
            depth[pixel] = z as f32;
            for (slot, e) in prior[pixel * EMBEDDING_DIM..(pixel + 1) * EMBEDDING_DIM].iter_mut().zip(emb) {
                *slot = e as f32;
            }
        }
    }
    let visible = mask.iter().filter(|m| **m).count();
    if visible < MIN_VISIBLE_PIXELS {
        return Err(Error::TooSmall { visible });
    }
    let (cloud, pixel_indices) = resample(&depth, &mask, k, n_points, seed)?;
    Ok(SceneSample {
        category: instance.category,
        intrinsics: *k,
        mask,
        depth,
        prior,
        cloud,
        pixel_indices,
        gt: *pose,
        seed,
    })
}

/// Removes `floor(fraction * |mask|)` uniformly chosen mask pixels and
/// clears their depth and prior. Points on surviving pixels stay as they
/// are; each point on a removed pixel is replaced by a surviving pixel,
/// unused ones first, taken in a seeded order.
///
/// For a fixed seed the removed sets are nested as `fraction` grows and the
/// replacement order is shared, so heavier occlusion only changes more
/// points.
pub fn apply_occlusion(sample: &SceneSample, fraction: f64, seed: u64) -> Result<SceneSample> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidArgument("occlusion fraction must be in [0, 1)".into()));
    }
    let mut pixels = sample.masked_pixels();
    let remove = math::floor(fraction * pixels.len() as f64) as usize;
    let survivors = pixels.len() - remove;
    if survivors < MIN_VISIBLE_PIXELS {
        return Err(Error::TooSmall { visible: survivors });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pixels.shuffle(&mut rng);
    let mut fill_order = sample.masked_pixels();
    fill_order.shuffle(&mut rng);
    let mut out = sample.clone();
    for &p in &pixels[..remove] {
        out.mask[p] = false;
        out.depth[p] = 0.0;
        out.prior[p * EMBEDDING_DIM..(p + 1) * EMBEDDING_DIM].fill(0.0);
    }

    let mut used = vec![false; out.mask.len()];
    for &p in &sample.pixel_indices {
        used[p] = out.mask[p];
    }
    fill_order.retain(|&p| out.mask[p]);
    let fresh: Vec<usize> = fill_order.iter().copied().filter(|&p| !used[p]).collect();
    let mut refill = fresh.into_iter().chain(fill_order.iter().copied().cycle());
    let k = out.intrinsics;
    let mut points = sample.cloud.points().to_vec();
    for (point, pixel) in points.iter_mut().zip(out.pixel_indices.iter_mut()) {
        if out.mask[*pixel] {
            continue;
        }
        let p = refill.next().ok_or(Error::EmptyObject)?;
        let q = k.unproject(p % k.width, p / k.width, f64::from(out.depth[p]));
        *point = [q[0] as f32 as f64, q[1] as f32 as f64, q[2] as f32 as f64];
        *pixel = p;
    }
    out.cloud = PointCloud::new(points)?;
    Ok(out)
}

/// Tabletop viewpoint: the object stands upright, the camera looks at it
/// from 15-60 degrees of elevation and any azimuth, with a small roll.
pub fn random_pose<R: Rng>(instance: &Instance, k: &Intrinsics, rng: &mut R) -> Pose {
    let elevation = rng.gen_range(15.0f64..60.0).to_radians();
    let azimuth = rng.gen_range(0.0..2.0 * PI);
    let roll = rng.gen_range(-10.0f64..10.0).to_radians();
    let radius = instance.bounding_radius();
    // Bounding sphere spans about 5/8 of the half-width (40 px at 128 px).
    let span = 0.3125 * k.width.min(k.height) as f64;
    let distance = k.fx.min(k.fy) * radius / span * rng.gen_range(0.9..1.1);
    let eye_dir: Vec3 = [
        math::cos(elevation) * math::cos(azimuth),
        math::cos(elevation) * math::sin(azimuth),
        math::sin(elevation),
    ];
    let forward = math::scale(eye_dir, -1.0);
    let right = math::normalize(math::cross(forward, [0.0, 0.0, 1.0])).expect("elevation < 90 deg");
    let down = math::cross(forward, right);
    let look = [right, down, forward];
    let rotation = math::mat_mul(&math::rot_z(roll), &look);
    let jitter = [rng.gen_range(-0.1..0.1) * radius, rng.gen_range(-0.1..0.1) * radius, 0.0];
    let translation = math::add([0.0, 0.0, distance], jitter);
    Pose { rotation, translation, size: instance.size() }
}

/// Renders scene `seed` of `spec`: a fresh instance under a random tabletop
/// pose. Viewpoints that leave too little of the object visible are redrawn.
pub fn generate_scene(spec: &CategorySpec, k: &Intrinsics, n_points: usize, seed: u64) -> Result<SceneSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let instance = generate_instance(spec, rng.gen());
    let mut last = Error::TooSmall { visible: 0 };
    for _ in 0..8 {
        let pose = random_pose(&instance, k, &mut rng);
        match render_sample(&instance, &pose, k, n_points, rng.gen()) {
            Ok(mut s) => {
                s.seed = seed;
                return Ok(s);
            }
            Err(e @ Error::TooSmall { .. }) => last = e,
            Err(e) => return Err(e),
        }
    }
    Err(last)
}
