//! Rigid-body math, pinhole camera back-projection, point sampling and the
//! rotation helpers shared by the network head and the evaluation code.

use alloc::vec::Vec;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math::{self, Mat3, Vec3};
use crate::{Error, Result};

const SO3_TOL: f64 = 1e-9;

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Intrinsics { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument("intrinsics out of range".into()))
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Image-plane coordinates `(u, v)` of a camera-frame point.
    pub fn project(&self, p: Vec3) -> (f64, f64) {
        (self.fx * p[0] / p[2] + self.cx, self.fy * p[1] / p[2] + self.cy)
    }

    /// Camera-frame point seen at integer pixel `(u, v)` with depth `depth`.
    pub fn unproject(&self, u: usize, v: usize, depth: f64) -> Vec3 {
        [
            (u as f64 - self.cx) * depth / self.fx,
            (v as f64 - self.cy) * depth / self.fy,
            depth,
        ]
    }

    /// Unit-z ray direction through the pixel center `(u, v)`.
    pub fn ray(&self, u: usize, v: usize) -> Vec3 {
        self.unproject(u, v, 1.0)
    }
}

/// `p ↦ R p + t` with `R ∈ SO(3)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl RigidTransform {
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        check_rotation(&rotation)?;
        Ok(RigidTransform { rotation, translation })
    }

    pub fn identity() -> Self {
        RigidTransform { rotation: math::IDENTITY, translation: [0.0; 3] }
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        math::add(math::mat_vec(&self.rotation, p), self.translation)
    }

    /// `Rᵀ (p − t)`
    pub fn apply_inverse(&self, p: Vec3) -> Vec3 {
        math::mat_t_vec(&self.rotation, math::sub(p, self.translation))
    }

    pub fn inverse(&self) -> Self {
        let rt = math::transpose(&self.rotation);
        let t = math::scale(math::mat_vec(&rt, self.translation), -1.0);
        RigidTransform { rotation: rt, translation: t }
    }

    /// `self ∘ other`
    pub fn compose(&self, other: &RigidTransform) -> Self {
        RigidTransform {
            rotation: math::mat_mul(&self.rotation, &other.rotation),
            translation: self.apply(other.translation),
        }
    }
}

pub fn check_rotation(r: &Mat3) -> Result<()> {
    let finite = r.iter().flatten().all(|v| v.is_finite());
    if finite && math::orthonormality_error(r) <= SO3_TOL {
        Ok(())
    } else {
        Err(Error::InvalidArgument("matrix is not a rotation".into()))
    }
}

/// Object pose: rotation and translation of the canonical frame in the
/// camera frame, plus the per-axis extents of the canonical bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Mat3,
    pub translation: Vec3,
    pub size: Vec3,
}

impl Pose {
    pub fn new(rotation: Mat3, translation: Vec3, size: Vec3) -> Result<Self> {
        check_rotation(&rotation)?;
        if size.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidArgument("size components must be positive".into()));
        }
        if translation.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("translation must be finite".into()));
        }
        Ok(Pose { rotation, translation, size })
    }

    pub fn transform(&self) -> RigidTransform {
        RigidTransform { rotation: self.rotation, translation: self.translation }
    }

    /// The same box moved by `t`: `(t.R · R, t.apply(translation))`.
    pub fn transformed(&self, t: &RigidTransform) -> Pose {
        let composed = t.compose(&self.transform());
        Pose { rotation: composed.rotation, translation: composed.translation, size: self.size }
    }
}

/// Camera-frame points in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyObject);
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("point coordinates must be finite".into()));
        }
        Ok(PointCloud { points })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Mean point. Each axis is summed in sorted order, so the result does
    /// not depend on point order.
    pub fn centroid(&self) -> Vec3 {
        let mut c = [0.0; 3];
        let mut values = Vec::with_capacity(self.points.len());
        for (a, c) in c.iter_mut().enumerate() {
            values.clear();
            values.extend(self.points.iter().map(|p| p[a]));
            values.sort_unstable_by(f64::total_cmp);
            *c = values.iter().sum::<f64>() / self.points.len() as f64;
        }
        c
    }

    /// Copy with every point moved by `offset`.
    pub fn translated(&self, offset: Vec3) -> PointCloud {
        PointCloud { points: self.points.iter().map(|p| math::add(*p, offset)).collect() }
    }

    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud { points: indices.iter().map(|&i| self.points[i]).collect() }
    }

    pub fn into_points(self) -> Vec<Vec3> {
        self.points
    }
}

/// One point per masked pixel; the returned pixel indices (`v * width + u`)
/// align with the points.
pub fn backproject_depth(
    depth: &[f64],
    mask: &[bool],
    k: &Intrinsics,
) -> Result<(PointCloud, Vec<usize>)> {
    let n = k.pixel_count();
    if depth.len() != n || mask.len() != n {
        return Err(Error::shape("depth and mask must both be width x height"));
    }
    let mut points = Vec::new();
    let mut pixels = Vec::new();
    for (pixel, (&d, &m)) in depth.iter().zip(mask).enumerate() {
        if !m {
            continue;
        }
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::InvalidDepth { pixel });
        }
        points.push(k.unproject(pixel % k.width, pixel / k.width, d));
        pixels.push(pixel);
    }
    if points.is_empty() {
        return Err(Error::EmptyObject);
    }
    Ok((PointCloud { points }, pixels))
}

/// Draws `n` points uniformly; without replacement when the cloud is large
/// enough, with replacement otherwise.
pub fn sample_points(cloud: &PointCloud, n: usize, seed: u64) -> Result<(PointCloud, Vec<usize>)> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = cloud.len();
    let indices = if total >= n {
        index::sample(&mut rng, total, n).into_vec()
    } else {
        (0..n).map(|_| rng.gen_range(0..total)).collect()
    };
    Ok((cloud.select(&indices), indices))
}

pub fn apply_se3(t: &RigidTransform, cloud: &PointCloud) -> PointCloud {
    PointCloud { points: cloud.points.iter().map(|p| t.apply(*p)).collect() }
}

/// Geodesic distance on SO(3) in degrees, in `[0, 180]`.
pub fn geodesic_angle(r1: &Mat3, r2: &Mat3) -> f64 {
    let mut tr = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            tr += r1[i][j] * r2[i][j];
        }
    }
    let c = ((tr - 1.0) / 2.0).clamp(-1.0, 1.0);
    math::acos(c).to_degrees()
}

/// Rotation whose third column is the normalized `up` axis and whose first
/// column is `side` orthogonalized against it.
pub fn gram_schmidt_rotation(up: Vec3, side: Vec3) -> Result<Mat3> {
    let n_up = math::norm(up);
    if !(n_up > 1e-8) || !(math::norm(math::cross(up, side)) > 1e-8) {
        return Err(Error::DegenerateAxes);
    }
    let c3 = math::scale(up, 1.0 / n_up);
    let ortho = math::sub(side, math::scale(c3, math::dot(side, c3)));
    let c1 = math::normalize(ortho).ok_or(Error::DegenerateAxes)?;
    let c2 = math::cross(c3, c1);
    Ok(math::from_columns(c1, c2, c3))
}

/// Sinusoidal features, `6 * bands` per point. Layout per point: for each
/// coordinate, for each band `b`, `sin(f 2^b x)` then `cos(f 2^b x)`.
pub fn positional_encoding(points: &[Vec3], bands: usize, base_freq: f64) -> Vec<f64> {
    let width = 6 * bands;
    let mut out = Vec::with_capacity(points.len() * width);
    for p in points {
        for &x in p {
            let mut freq = base_freq;
            for _ in 0..bands {
                out.push(math::sin(freq * x));
                out.push(math::cos(freq * x));
                freq *= 2.0;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::{prop_assert, proptest};
    use std::collections::BTreeSet;

    fn k256() -> Intrinsics {
        Intrinsics::new(500.0, 500.0, 128.0, 128.0, 256, 256).unwrap()
    }

    #[test]
    fn principal_point_maps_to_optical_axis() {
        let k = k256();
        let mut depth = vec![0.0; 256 * 256];
        let mut mask = vec![false; 256 * 256];
        depth[128 * 256 + 128] = 1.0;
        mask[128 * 256 + 128] = true;
        let (cloud, px) = backproject_depth(&depth, &mask, &k).unwrap();
        assert_eq!(cloud.points(), &[[0.0, 0.0, 1.0]]);
        assert_eq!(px, vec![128 * 256 + 128]);
    }

    #[test]
    fn off_axis_pixel() {
        let k = k256();
        let mut depth = vec![0.0; 256 * 256];
        let mut mask = vec![false; 256 * 256];
        depth[128 * 256 + 228] = 1.0;
        mask[128 * 256 + 228] = true;
        let (cloud, _) = backproject_depth(&depth, &mask, &k).unwrap();
        assert_eq!(cloud.points()[0], [0.2, 0.0, 1.0]);
    }

    #[test]
    fn backprojection_round_trips_pixel_centers() {
        let k = Intrinsics::new(37.5, 41.0, 7.3, 8.1, 16, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let depth: Vec<f64> = (0..256).map(|_| rng.gen_range(0.2..5.0)).collect();
        let mask = vec![true; 256];
        let (cloud, px) = backproject_depth(&depth, &mask, &k).unwrap();
        for (p, &pixel) in cloud.points().iter().zip(&px) {
            let (u, v) = k.project(*p);
            assert!((u - (pixel % 16) as f64).abs() < 1e-9);
            assert!((v - (pixel / 16) as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn backprojection_errors() {
        let k = Intrinsics::new(10.0, 10.0, 1.0, 1.0, 2, 2).unwrap();
        assert_eq!(
            backproject_depth(&[1.0; 4], &[false; 4], &k).unwrap_err(),
            Error::EmptyObject
        );
        let depth = [1.0, 0.0, 1.0, 1.0];
        assert_eq!(
            backproject_depth(&depth, &[true; 4], &k).unwrap_err(),
            Error::InvalidDepth { pixel: 1 }
        );
    }

    fn random_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new((0..n).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect()).unwrap()
    }

    #[test]
    fn exhaustive_draw_is_a_permutation() {
        let cloud = random_cloud(50, 1);
        let (_, idx) = sample_points(&cloud, 50, 9).unwrap();
        let set: BTreeSet<_> = idx.iter().copied().collect();
        assert_eq!(set, (0..50).collect());
    }

    #[test]
    fn sampling_is_deterministic_and_distinct() {
        let cloud = random_cloud(5000, 2);
        let (a, ia) = sample_points(&cloud, 1024, 7).unwrap();
        let (b, ib) = sample_points(&cloud, 1024, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(ia, ib);
        let set: BTreeSet<_> = ia.iter().copied().collect();
        assert_eq!(set.len(), 1024);
        assert!(ia.iter().all(|&i| i < 5000));
        for (p, &i) in a.points().iter().zip(&ia) {
            assert_eq!(*p, cloud.points()[i]);
        }
    }

    #[test]
    fn undersized_cloud_samples_with_replacement() {
        let cloud = random_cloud(10, 3);
        let (s, idx) = sample_points(&cloud, 64, 1).unwrap();
        assert_eq!(s.len(), 64);
        assert!(idx.iter().all(|&i| i < 10));
        assert!(sample_points(&cloud, 0, 1).is_err());
    }

    fn random_transform(rng: &mut ChaCha8Rng) -> RigidTransform {
        let r = math::rotation_from_uniforms(rng.gen(), rng.gen(), rng.gen());
        RigidTransform::new(r, [rng.gen_range(-2.0..2.0), rng.gen(), rng.gen()]).unwrap()
    }

    #[test]
    fn se3_identity_and_inverse() {
        let cloud = random_cloud(100, 4);
        assert_eq!(apply_se3(&RigidTransform::identity(), &cloud), cloud);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = random_transform(&mut rng);
        let back = apply_se3(&t.inverse(), &apply_se3(&t, &cloud));
        for (a, b) in back.points().iter().zip(cloud.points()) {
            assert!(math::dist(*a, *b) < 1e-9);
        }
    }

    #[test]
    fn se3_preserves_pairwise_distances() {
        let cloud = random_cloud(60, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let moved = apply_se3(&random_transform(&mut rng), &cloud);
        let (p, q) = (cloud.points(), moved.points());
        for i in 0..p.len() {
            for j in 0..p.len() {
                assert!((math::dist(p[i], p[j]) - math::dist(q[i], q[j])).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn geodesic_examples() {
        assert_eq!(geodesic_angle(&math::IDENTITY, &math::IDENTITY), 0.0);
        let r = math::rot_z(30f64.to_radians());
        assert!((geodesic_angle(&math::IDENTITY, &r) - 30.0).abs() < 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let a = random_transform(&mut rng).rotation;
            let b = random_transform(&mut rng).rotation;
            assert!((geodesic_angle(&a, &b) - geodesic_angle(&b, &a)).abs() < 1e-9);
        }
    }

    #[test]
    fn gram_schmidt_examples() {
        assert_eq!(gram_schmidt_rotation([0.0, 0.0, 1.0], [1.0, 0.0, 0.0]).unwrap(), math::IDENTITY);
        assert_eq!(gram_schmidt_rotation([0.0, 0.0, 2.0], [3.0, 0.0, 0.0]).unwrap(), math::IDENTITY);
        assert_eq!(
            gram_schmidt_rotation([0.0, 0.0, 0.0], [1.0, 0.0, 0.0]),
            Err(Error::DegenerateAxes)
        );
        assert_eq!(
            gram_schmidt_rotation([0.0, 0.0, 1.0], [0.0, 0.0, -4.0]),
            Err(Error::DegenerateAxes)
        );
    }

    #[test]
    fn gram_schmidt_always_lands_in_so3() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut checked = 0;
        while checked < 10_000 {
            let a1: Vec3 = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let a2: Vec3 = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            if let Ok(r) = gram_schmidt_rotation(a1, a2) {
                assert!(math::orthonormality_error(&r) < 1e-9);
                checked += 1;
            }
        }
    }

    #[test]
    fn positional_encoding_layout() {
        let enc = positional_encoding(&[[0.0, 0.0, 0.0]], 3, math::PI);
        assert_eq!(enc.len(), 18);
        for pair in enc.chunks(2) {
            assert_eq!(pair, &[0.0, 1.0]);
        }
        assert_eq!(positional_encoding(&[[0.1, 0.2, 0.3]], 1, 1.0).len(), 6);
        let enc = positional_encoding(&[[0.5, 0.0, 0.0]], 2, 1.0);
        assert_eq!(enc[0], math::sin(0.5));
        assert_eq!(enc[1], math::cos(0.5));
        assert_eq!(enc[2], math::sin(1.0));
        assert_eq!(enc[3], math::cos(1.0));
    }

    #[test]
    fn positional_encoding_sees_translation() {
        let pts = [[0.1, -0.05, 0.7], [0.02, 0.03, 0.8]];
        let shifted: Vec<Vec3> = pts.iter().map(|p| math::add(*p, [0.05, 0.0, 0.0])).collect();
        let a = positional_encoding(&pts, 6, math::PI);
        let b = positional_encoding(&shifted, 6, math::PI);
        assert!(a.iter().zip(&b).any(|(x, y)| (x - y).abs() > 1e-3));
    }

    proptest! {
        #[test]
        fn geodesic_recovers_axis_angle(theta in 0.01f64..179.99, u in 0.0f64..1.0, v in 0.0f64..1.0, w in 0.0f64..1.0) {
            let r = math::rotation_from_uniforms(u, v, w);
            let rz = math::rot_z(theta.to_radians());
            let angle = geodesic_angle(&r, &math::mat_mul(&r, &rz));
            prop_assert!((angle - theta).abs() < 1e-6);
        }
    }
}
