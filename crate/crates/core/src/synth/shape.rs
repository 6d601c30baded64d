//! Procedural category shapes as unions of signed-distance primitives.
//!
//! Every instance is built in a "build frame" (revolution axis at the origin,
//! base at `z = 0`, handle or lens along `+x`) and exposed in its canonical
//! frame, which is the build frame shifted so that the tight bounding box is
//! centered at the origin.

use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::category::{Category, CategorySpec};
use crate::math::{self, Mat3, Vec3, PI};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Primitive {
    /// Solid of revolution about `z`. `poly` is the full cross-section in
    /// `(signed radius, z)`; edge `i` joins vertex `i` and `i + 1`.
    Lathe { poly: Vec<[f64; 2]>, tags: Vec<u8>, half_edges: usize },
    /// Torus around the `y` axis through `center`, cut to `x >= clip_x`.
    Torus { center: Vec3, major: f64, minor: f64, clip_x: f64, tag: u8 },
    /// Box with local axes given by the rows of `axes`.
    Cuboid { center: Vec3, axes: Mat3, half: Vec3, tag: u8 },
    /// Capped cylinder along `x`.
    Cylinder { center: Vec3, radius: f64, half_len: f64, tag: u8 },
}

fn polygon_sdf(poly: &[[f64; 2]], p: [f64; 2]) -> (f64, usize) {
    let n = poly.len();
    let mut best = f64::INFINITY;
    let mut edge = 0;
    let mut inside = false;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let e = [b[0] - a[0], b[1] - a[1]];
        let w = [p[0] - a[0], p[1] - a[1]];
        let t = ((w[0] * e[0] + w[1] * e[1]) / (e[0] * e[0] + e[1] * e[1])).clamp(0.0, 1.0);
        let d = [w[0] - e[0] * t, w[1] - e[1] * t];
        let dd = d[0] * d[0] + d[1] * d[1];
        if dd < best {
            best = dd;
            edge = i;
        }
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * e[0];
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    let d = math::sqrt(best);
    (if inside { -d } else { d }, edge)
}

fn cuboid_sdf(local: Vec3, half: Vec3) -> f64 {
    let q = [
        libm::fabs(local[0]) - half[0],
        libm::fabs(local[1]) - half[1],
        libm::fabs(local[2]) - half[2],
    ];
    let outside = math::norm([q[0].max(0.0), q[1].max(0.0), q[2].max(0.0)]);
    outside + q[0].max(q[1]).max(q[2]).min(0.0)
}

impl Primitive {
    pub(crate) fn sdf(&self, p: Vec3) -> (f64, u8) {
        match self {
            Primitive::Lathe { poly, tags, .. } => {
                let rho = math::sqrt(p[0] * p[0] + p[1] * p[1]);
                let (d, e) = polygon_sdf(poly, [rho, p[2]]);
                (d, tags[e])
            }
            Primitive::Torus { center, major, minor, clip_x, tag } => {
                let q = math::sub(p, *center);
                let ring = math::sqrt(q[0] * q[0] + q[2] * q[2]) - major;
                let d = math::sqrt(ring * ring + q[1] * q[1]) - minor;
                (d.max(clip_x - p[0]), *tag)
            }
            Primitive::Cuboid { center, axes, half, tag } => {
                let local = math::mat_vec(axes, math::sub(p, *center));
                (cuboid_sdf(local, *half), *tag)
            }
            Primitive::Cylinder { center, radius, half_len, tag } => {
                let q = math::sub(p, *center);
                let radial = math::sqrt(q[1] * q[1] + q[2] * q[2]) - radius;
                let axial = libm::fabs(q[0]) - half_len;
                let (r, a) = (radial.max(0.0), axial.max(0.0));
                let outside = math::sqrt(r * r + a * a);
                (outside + radial.max(axial).min(0.0), *tag)
            }
        }
    }

    /// Corners of a box enclosing the primitive.
    fn hull_points(&self) -> Vec<Vec3> {
        match self {
            Primitive::Lathe { poly, .. } => {
                let r = poly.iter().map(|v| libm::fabs(v[0])).fold(0.0, f64::max);
                let zmin = poly.iter().map(|v| v[1]).fold(f64::INFINITY, f64::min);
                let zmax = poly.iter().map(|v| v[1]).fold(f64::NEG_INFINITY, f64::max);
                vec![[-r, -r, zmin], [r, r, zmax]]
            }
            Primitive::Torus { center, major, minor, clip_x, .. } => {
                let c = *center;
                let outer = major + minor;
                vec![
                    [clip_x.max(c[0] - outer), c[1] - minor, c[2] - outer],
                    [c[0] + outer, c[1] + minor, c[2] + outer],
                ]
            }
            Primitive::Cuboid { center, axes, half, .. } => {
                let mut pts = Vec::with_capacity(8);
                for sx in [-1.0, 1.0] {
                    for sy in [-1.0, 1.0] {
                        for sz in [-1.0, 1.0] {
                            let local = [sx * half[0], sy * half[1], sz * half[2]];
                            pts.push(math::add(*center, math::mat_t_vec(axes, local)));
                        }
                    }
                }
                pts
            }
            Primitive::Cylinder { center, radius, half_len, .. } => vec![
                math::sub(*center, [*half_len, *radius, *radius]),
                math::add(*center, [*half_len, *radius, *radius]),
            ],
        }
    }
}

/// Parametric location on one primitive's surface; the same parameters
/// address topologically corresponding points on every instance of a
/// category.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SurfaceParam {
    Lathe { prim: usize, edge: usize, t: f64, theta: f64 },
    Torus { prim: usize, phi: f64, psi: f64 },
    Cuboid { prim: usize, face: usize, s: f64, t: f64 },
    Cylinder { prim: usize, cap: bool, s: f64, t: f64 },
}

/// One procedurally generated object.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub category: Category,
    pub seed: u64,
    pub(crate) prims: Vec<Primitive>,
    /// Build-frame position of the canonical origin.
    pub(crate) center: Vec3,
    pub(crate) size: Vec3,
    pub(crate) zmin: f64,
    pub(crate) zmax: f64,
    /// Radius used to normalize the radial embedding coordinate.
    pub(crate) rho_ref: f64,
    pub(crate) part_count: u8,
}

/// Builds the mirrored lathe cross-section from a half profile that starts
/// and ends on the axis. `tags[i]` labels half-profile segment `i`.
fn lathe(half: &[[f64; 2]], tags: &[u8]) -> Primitive {
    debug_assert_eq!(half.len(), tags.len() + 1);
    let m = half.len() - 1;
    let mut poly: Vec<[f64; 2]> = half.to_vec();
    let mut ptags: Vec<u8> = tags.to_vec();
    // (a_m -> mirror a_{m-1}) then mirrored segments back to a_0.
    for i in (1..m).rev() {
        poly.push([-half[i][0], half[i][1]]);
    }
    for i in (0..m).rev() {
        ptags.push(tags[i]);
    }
    Primitive::Lathe { poly, tags: ptags, half_edges: m }
}

fn draw(spec: &CategorySpec, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5a9e_0000_0000);
    spec.ranges.iter().map(|(_, r)| r.lerp(rng.gen::<f64>())).collect()
}

/// Deterministic instance of `spec` for `seed`.
pub fn generate_instance(spec: &CategorySpec, seed: u64) -> Instance {
    let p = draw(spec, seed);
    let (prims, rho_ref, part_count) = match spec.category {
        Category::Bottle => {
            let (r, h, shoulder, neck_start, neck_frac) = (p[0], p[1], p[2], p[3], p[4]);
            let rn = neck_frac * r;
            let (zs, zn) = (shoulder * h, neck_start * h);
            let mut half = vec![[0.0, 0.0], [r, 0.0], [r, zs]];
            let mut tags = vec![0, 1];
            for k in 1..=3 {
                let a = k as f64 / 3.0 * PI / 2.0;
                half.push([rn + (r - rn) * math::cos(a), zs + (zn - zs) * math::sin(a)]);
                tags.push(2);
            }
            half.push([rn, h]);
            tags.push(3);
            half.push([0.0, h]);
            tags.push(4);
            (vec![lathe(&half, &tags)], r, 5)
        }
        Category::Bowl => {
            let (r, h, base, wall) = (p[0], p[1], p[2] * p[0], p[3]);
            let segments = 6;
            let curve = |k: usize| {
                let a = k as f64 / segments as f64 * PI / 2.0;
                let pt = [base + (r - base) * math::sin(a), h * (1.0 - math::cos(a))];
                let tangent = [(r - base) * math::cos(a), h * math::sin(a)];
                let n = math::sqrt(tangent[0] * tangent[0] + tangent[1] * tangent[1]);
                (pt, [tangent[1] / n, -tangent[0] / n])
            };
            let mut half = vec![[0.0, 0.0]];
            let mut tags = vec![];
            for k in 0..=segments {
                half.push(curve(k).0);
                tags.push(if k == 0 { 0 } else { 1 });
            }
            for k in (0..=segments).rev() {
                let (pt, n) = curve(k);
                half.push([pt[0] - wall * n[0], pt[1] - wall * n[1]]);
                tags.push(if k == segments { 2 } else { 3 });
            }
            let last = half.last().copied().unwrap();
            half.push([0.0, last[1]]);
            tags.push(4);
            (vec![lathe(&half, &tags)], r, 5)
        }
        Category::Can => {
            let (r, h) = (p[0], p[1]);
            let half = [[0.0, 0.0], [r, 0.0], [r, h], [0.0, h]];
            (vec![lathe(&half, &[0, 1, 2])], r, 3)
        }
        Category::Mug => {
            let (r, h, wall, bottom, hr, tube, hz) = (p[0], p[1], p[2], p[3], p[4], p[5], p[6]);
            let half = [[0.0, 0.0], [r, 0.0], [r, h], [r - wall, h], [r - wall, bottom], [0.0, bottom]];
            let body = lathe(&half, &[0, 1, 2, 3, 4]);
            let handle = Primitive::Torus {
                center: [r, 0.0, hz * h],
                major: hr,
                minor: tube,
                clip_x: r - 0.5 * wall,
                tag: 5,
            };
            (vec![body, handle], r, 6)
        }
        Category::Laptop => {
            let (w, d, t, ratio, ts, open) = (p[0], p[1], p[2], p[3], p[4], p[5]);
            let base = Primitive::Cuboid {
                center: [0.0, 0.0, 0.5 * t],
                axes: math::IDENTITY,
                half: [0.5 * w, 0.5 * d, 0.5 * t],
                tag: 0,
            };
            let beta = open.to_radians();
            let up = [0.0, -math::cos(beta), math::sin(beta)];
            let normal = math::cross([1.0, 0.0, 0.0], up);
            let hinge = [0.0, 0.5 * d, t];
            let len = ratio * d;
            let screen = Primitive::Cuboid {
                center: math::add(math::add(hinge, math::scale(up, 0.5 * len)), math::scale(normal, -0.5 * ts)),
                axes: [[1.0, 0.0, 0.0], up, normal],
                half: [0.5 * w, 0.5 * len, 0.5 * ts],
                tag: 1,
            };
            (vec![base, screen], 0.5 * w, 2)
        }
        Category::Camera => {
            let (w, d, h, lr, ll, fh) = (p[0], p[1], p[2], p[3], p[4], p[5]);
            let lr = lr.min(0.45 * d).min(0.45 * h);
            let body = Primitive::Cuboid {
                center: [0.0, 0.0, 0.5 * h],
                axes: math::IDENTITY,
                half: [0.5 * w, 0.5 * d, 0.5 * h],
                tag: 0,
            };
            let lens = Primitive::Cylinder {
                center: [0.5 * w + 0.5 * ll - 0.002, 0.0, 0.5 * h],
                radius: lr,
                half_len: 0.5 * ll + 0.002,
                tag: 1,
            };
            let finder = Primitive::Cuboid {
                center: [-0.1 * w, 0.0, h + 0.5 * fh - 0.002],
                axes: math::IDENTITY,
                half: [0.2 * w, 0.25 * d, 0.5 * fh + 0.002],
                tag: 2,
            };
            (vec![body, lens, finder], 0.5 * w, 3)
        }
    };
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for q in prims.iter().flat_map(|p| p.hull_points()) {
        for k in 0..3 {
            lo[k] = lo[k].min(q[k]);
            hi[k] = hi[k].max(q[k]);
        }
    }
    Instance {
        category: spec.category,
        seed,
        prims,
        center: math::scale(math::add(lo, hi), 0.5),
        size: math::sub(hi, lo),
        zmin: lo[2],
        zmax: hi[2],
        rho_ref,
        part_count,
    }
}

pub(crate) fn mean_instance_size(spec: &CategorySpec) -> Vec3 {
    const COUNT: u64 = 32;
    let mut acc = [0.0; 3];
    for seed in 0..COUNT {
        acc = math::add(acc, generate_instance(spec, seed).size);
    }
    math::scale(acc, 1.0 / COUNT as f64)
}

impl Instance {
    /// Tight bounding-box extents in the canonical frame.
    pub fn size(&self) -> Vec3 {
        self.size
    }

    pub fn part_count(&self) -> u8 {
        self.part_count
    }

    pub(crate) fn to_build(&self, p: Vec3) -> Vec3 {
        math::add(p, self.center)
    }

    pub(crate) fn to_canonical(&self, p: Vec3) -> Vec3 {
        math::sub(p, self.center)
    }

    /// Signed distance and part tag of the closest primitive, in the build frame.
    pub(crate) fn sdf_build(&self, p: Vec3) -> (f64, u8) {
        let mut best = (f64::INFINITY, 0);
        for prim in &self.prims {
            let d = prim.sdf(p);
            if d.0 < best.0 {
                best = d;
            }
        }
        best
    }

    /// Signed distance from a canonical-frame point to the surface.
    pub fn sdf(&self, p: Vec3) -> f64 {
        self.sdf_build(self.to_build(p)).0
    }

    /// Radius of a sphere about the canonical origin containing the object.
    pub fn bounding_radius(&self) -> f64 {
        0.5 * math::norm(self.size)
    }

    /// Distance along the unit ray `origin + t dir` (canonical frame) to the
    /// first surface hit, by sphere tracing.
    pub fn raycast(&self, origin: Vec3, dir: Vec3) -> Option<f64> {
        let radius = self.bounding_radius() * 1.01;
        let b = math::dot(origin, dir);
        let c = math::dot(origin, origin) - radius * radius;
        let disc = b * b - c;
        if disc < 0.0 {
            return None;
        }
        let root = math::sqrt(disc);
        let (mut t, t_far) = ((-b - root).max(0.0), -b + root);
        let o = self.to_build(origin);
        for _ in 0..400 {
            let d = self.sdf_build(math::add(o, math::scale(dir, t))).0;
            if d < 1e-9 {
                return Some(t);
            }
            t += d;
            if t > t_far {
                return None;
            }
        }
        None
    }

    pub fn sample_param<R: Rng>(&self, rng: &mut R) -> SurfaceParam {
        let prim = rng.gen_range(0..self.prims.len());
        match &self.prims[prim] {
            Primitive::Lathe { half_edges, .. } => SurfaceParam::Lathe {
                prim,
                edge: rng.gen_range(0..*half_edges),
                t: rng.gen(),
                theta: rng.gen_range(-PI..PI),
            },
            Primitive::Torus { .. } => SurfaceParam::Torus {
                prim,
                phi: rng.gen_range(-PI / 2.0..PI / 2.0),
                psi: rng.gen_range(-PI..PI),
            },
            Primitive::Cuboid { .. } => SurfaceParam::Cuboid {
                prim,
                face: rng.gen_range(0..6),
                s: rng.gen_range(-1.0..1.0),
                t: rng.gen_range(-1.0..1.0),
            },
            Primitive::Cylinder { .. } => SurfaceParam::Cylinder {
                prim,
                cap: rng.gen_range(0..3) == 0,
                s: rng.gen(),
                t: rng.gen(),
            },
        }
    }

    /// Canonical-frame surface point for `param`, or `None` when that spot
    /// of the primitive is buried inside another primitive.
    pub fn surface_point(&self, param: &SurfaceParam) -> Option<Vec3> {
        let (idx, p) = match (*param, self.prims.get(param_prim(param))?) {
            (SurfaceParam::Lathe { prim, edge, t, theta }, Primitive::Lathe { poly, .. }) => {
                let a = poly[edge];
                let b = poly[(edge + 1) % poly.len()];
                let rho = a[0] + (b[0] - a[0]) * t;
                let z = a[1] + (b[1] - a[1]) * t;
                (prim, [rho * math::cos(theta), rho * math::sin(theta), z])
            }
            (SurfaceParam::Torus { prim, phi, psi }, Primitive::Torus { center, major, minor, clip_x, .. }) => {
                let ring = major + minor * math::cos(psi);
                let p = math::add(
                    *center,
                    [ring * math::cos(phi), minor * math::sin(psi), ring * math::sin(phi)],
                );
                if p[0] < *clip_x {
                    return None;
                }
                (prim, p)
            }
            (SurfaceParam::Cuboid { prim, face, s, t }, Primitive::Cuboid { center, axes, half, .. }) => {
                let axis = face / 2;
                let sign = if face % 2 == 0 { 1.0 } else { -1.0 };
                let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
                let mut local = [0.0; 3];
                local[axis] = sign * half[axis];
                local[u] = s * half[u];
                local[v] = t * half[v];
                (prim, math::add(*center, math::mat_t_vec(axes, local)))
            }
            (SurfaceParam::Cylinder { prim, cap, s, t }, Primitive::Cylinder { center, radius, half_len, .. }) => {
                let angle = 2.0 * PI * s;
                let p = if cap {
                    let r = radius * math::sqrt(t);
                    [*half_len, r * math::cos(angle), r * math::sin(angle)]
                } else {
                    [half_len * (2.0 * t - 1.0), radius * math::cos(angle), radius * math::sin(angle)]
                };
                (prim, math::add(*center, p))
            }
            _ => return None,
        };
        for (j, other) in self.prims.iter().enumerate() {
            if j != idx && other.sdf(p).0 < 0.0 {
                return None;
            }
        }
        Some(self.to_canonical(p))
    }

    /// Up to `n` surface points drawn from random parameters.
    pub fn sample_surface(&self, n: usize, seed: u64) -> Vec<(SurfaceParam, Vec3)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n);
        let mut attempts = 0;
        while out.len() < n && attempts < 50 * n {
            attempts += 1;
            let param = self.sample_param(&mut rng);
            if let Some(p) = self.surface_point(&param) {
                out.push((param, p));
            }
        }
        out
    }
}

fn param_prim(p: &SurfaceParam) -> usize {
    match *p {
        SurfaceParam::Lathe { prim, .. }
        | SurfaceParam::Torus { prim, .. }
        | SurfaceParam::Cuboid { prim, .. }
        | SurfaceParam::Cylinder { prim, .. } => prim,
    }
}
