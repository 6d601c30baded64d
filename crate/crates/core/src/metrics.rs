//! Box overlap, symmetry-aware pose errors and threshold accuracies.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{geodesic_angle, Pose};
use crate::math::{self, Mat3, Vec3, PI};
use crate::synth::{Category, Symmetry};

/// Largest deviation from the identity at which two rotations are treated
/// as equal and the overlap is computed in closed form.
const SAME_ROTATION: f64 = 1e-12;

fn volume(size: Vec3) -> f64 {
    size[0] * size[1] * size[2]
}

/// `b` expressed in the frame of `a`.
fn relative(a: &Pose, b: &Pose) -> (Mat3, Vec3) {
    let rot = math::mat_mul(&math::transpose(&a.rotation), &b.rotation);
    let t = math::mat_t_vec(&a.rotation, math::sub(b.translation, a.translation));
    (rot, t)
}

fn inside(p: Vec3, half: Vec3) -> bool {
    (0..3).all(|i| libm::fabs(p[i]) <= half[i])
}

/// Fraction of `n` uniform samples of box `a` that fall inside box `b`.
fn covered_fraction(a: &Pose, b: &Pose, n: usize, rng: &mut ChaCha8Rng) -> f64 {
    let (rot, t) = relative(b, a);
    let ha = math::scale(a.size, 0.5);
    let hb = math::scale(b.size, 0.5);
    let mut hits = 0usize;
    for _ in 0..n {
        let local = [
            rng.gen_range(-ha[0]..=ha[0]),
            rng.gen_range(-ha[1]..=ha[1]),
            rng.gen_range(-ha[2]..=ha[2]),
        ];
        if inside(math::add(math::mat_vec(&rot, local), t), hb) {
            hits += 1;
        }
    }
    hits as f64 / n as f64
}

/// Intersection over union of two oriented boxes.
///
/// Boxes with equal rotations are intersected exactly. Otherwise `n_mc`
/// points are drawn in each box and the intersection volume is the mean of
/// the two membership estimates.
pub fn box_iou_3d(a: &Pose, b: &Pose, n_mc: usize, seed: u64) -> f64 {
    let (va, vb) = (volume(a.size), volume(b.size));
    let (rot, t) = relative(a, b);
    let reach = 0.5 * (math::norm(a.size) + math::norm(b.size));
    if math::norm(t) > reach {
        return 0.0;
    }
    let same = (0..3).all(|i| (0..3).all(|j| libm::fabs(rot[i][j] - math::IDENTITY[i][j]) <= SAME_ROTATION));
    let inter = if same {
        (0..3)
            .map(|i| {
                let lo = (-0.5 * a.size[i]).max(t[i] - 0.5 * b.size[i]);
                let hi = (0.5 * a.size[i]).min(t[i] + 0.5 * b.size[i]);
                (hi - lo).max(0.0)
            })
            .product::<f64>()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = n_mc.max(1);
        let in_b = covered_fraction(a, b, n, &mut rng) * va;
        let in_a = covered_fraction(b, a, n, &mut rng) * vb;
        0.5 * (in_b + in_a)
    };
    let union = va + vb - inter;
    if union > 0.0 {
        (inter / union).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseError {
    /// Degrees, in `[0, 180]`.
    pub rotation_err: f64,
    /// Centimeters.
    pub translation_err: f64,
    pub iou: f64,
}

/// Angle in degrees between two directions.
fn axis_angle_deg(a: Vec3, b: Vec3) -> f64 {
    let c = math::dot(a, b) / (math::norm(a) * math::norm(b));
    math::acos(c.clamp(-1.0, 1.0)) * 180.0 / PI
}

/// Rotation about the up axis that brings `gt` closest to `pred`.
fn best_spin(pred: &Mat3, gt: &Mat3) -> f64 {
    let m = math::mat_mul(&math::transpose(pred), gt);
    math::atan2(m[0][1] - m[1][0], m[0][0] + m[1][1])
}

/// Ground-truth rotations equivalent to `gt` under `symmetry` that are
/// closest to `pred`: all of them for a finite group, the optimal spin for
/// bodies of revolution.
fn equivalent_rotations(pred: &Mat3, gt: &Mat3, symmetry: Symmetry) -> Vec<Mat3> {
    match symmetry {
        Symmetry::None => alloc::vec![*gt],
        Symmetry::Mirror => alloc::vec![*gt, math::mat_mul(gt, &math::rot_z(PI))],
        Symmetry::Revolution => alloc::vec![math::mat_mul(gt, &math::rot_z(best_spin(pred, gt)))],
    }
}

/// Rotation, translation and overlap error of `pred` against `gt`, taking
/// the best member of the category's symmetry group.
///
/// For bodies of revolution the rotation error is the angle between the
/// predicted and true symmetry axes. Mirror-symmetric categories compare
/// against `gt` and `gt` spun half a turn about its up axis.
pub fn pose_errors(pred: &Pose, gt: &Pose, symmetry: Symmetry, n_mc: usize, seed: u64) -> PoseError {
    let translation_err = math::dist(pred.translation, gt.translation) * 100.0;
    let candidates = equivalent_rotations(&pred.rotation, &gt.rotation, symmetry);
    let rotation_err = match symmetry {
        Symmetry::Revolution => axis_angle_deg(math::column(&pred.rotation, 2), math::column(&gt.rotation, 2)),
        _ => candidates.iter().map(|r| geodesic_angle(&pred.rotation, r)).fold(f64::INFINITY, f64::min),
    };
    let iou = candidates
        .iter()
        .map(|r| box_iou_3d(pred, &Pose { rotation: *r, ..*gt }, n_mc, seed))
        .fold(0.0, f64::max);
    PoseError { rotation_err, translation_err, iou }
}

/// Percentages of instances meeting each threshold; each in `[0, 100]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricsRow {
    pub count: usize,
    pub iou25: f64,
    pub iou50: f64,
    pub iou75: f64,
    pub deg5_cm2: f64,
    pub deg5_cm5: f64,
    pub deg10_cm2: f64,
    pub deg10_cm5: f64,
    pub deg5: f64,
    pub deg10: f64,
    pub cm2: f64,
    pub cm5: f64,
    pub mean_rotation_err: f64,
    pub mean_translation_err: f64,
}

impl MetricsRow {
    /// Column labels in table order, paired with their values.
    pub fn cells(&self) -> [(&'static str, f64); 11] {
        [
            ("IoU25", self.iou25),
            ("IoU50", self.iou50),
            ("IoU75", self.iou75),
            ("5deg2cm", self.deg5_cm2),
            ("5deg5cm", self.deg5_cm5),
            ("10deg2cm", self.deg10_cm2),
            ("10deg5cm", self.deg10_cm5),
            ("5deg", self.deg5),
            ("10deg", self.deg10),
            ("2cm", self.cm2),
            ("5cm", self.cm5),
        ]
    }

    fn tally(errors: &[PoseError]) -> MetricsRow {
        let n = errors.len() as f64;
        let pct = |f: &dyn Fn(&PoseError) -> bool| 100.0 * errors.iter().filter(|e| f(e)).count() as f64 / n;
        let rt = |deg: f64, cm: f64| pct(&|e: &PoseError| e.rotation_err < deg && e.translation_err < cm);
        MetricsRow {
            count: errors.len(),
            iou25: pct(&|e| e.iou > 0.25),
            iou50: pct(&|e| e.iou > 0.50),
            iou75: pct(&|e| e.iou > 0.75),
            deg5_cm2: rt(5.0, 2.0),
            deg5_cm5: rt(5.0, 5.0),
            deg10_cm2: rt(10.0, 2.0),
            deg10_cm5: rt(10.0, 5.0),
            deg5: pct(&|e| e.rotation_err < 5.0),
            deg10: pct(&|e| e.rotation_err < 10.0),
            cm2: pct(&|e| e.translation_err < 2.0),
            cm5: pct(&|e| e.translation_err < 5.0),
            mean_rotation_err: errors.iter().map(|e| e.rotation_err).sum::<f64>() / n,
            mean_translation_err: errors.iter().map(|e| e.translation_err).sum::<f64>() / n,
        }
    }

    fn mean(rows: &[MetricsRow]) -> MetricsRow {
        let n = rows.len() as f64;
        let avg = |f: fn(&MetricsRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
        MetricsRow {
            count: rows.iter().map(|r| r.count).sum(),
            iou25: avg(|r| r.iou25),
            iou50: avg(|r| r.iou50),
            iou75: avg(|r| r.iou75),
            deg5_cm2: avg(|r| r.deg5_cm2),
            deg5_cm5: avg(|r| r.deg5_cm5),
            deg10_cm2: avg(|r| r.deg10_cm2),
            deg10_cm5: avg(|r| r.deg10_cm5),
            deg5: avg(|r| r.deg5),
            deg10: avg(|r| r.deg10),
            cm2: avg(|r| r.cm2),
            cm5: avg(|r| r.cm5),
            mean_rotation_err: avg(|r| r.mean_rotation_err),
            mean_translation_err: avg(|r| r.mean_translation_err),
        }
    }

    /// Checks the ordering every report must satisfy.
    pub fn is_consistent(&self) -> bool {
        let in_range = self.cells().iter().all(|(_, v)| (0.0..=100.0).contains(v));
        in_range
            && self.deg5_cm2 <= self.deg5_cm5
            && self.deg5_cm5 <= self.deg10_cm5
            && self.deg5_cm2 <= self.deg10_cm2
            && self.deg10_cm2 <= self.deg10_cm5
            && self.iou75 <= self.iou50
            && self.iou50 <= self.iou25
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub per_category: BTreeMap<Category, MetricsRow>,
    /// Unweighted mean over categories.
    pub mean: MetricsRow,
}

/// Threshold accuracies per category (strict inequalities) and their mean
/// across categories. `None` for an empty list.
pub fn aggregate(errors: &[(Category, PoseError)]) -> Option<MetricsReport> {
    if errors.is_empty() {
        return None;
    }
    let mut grouped: BTreeMap<Category, Vec<PoseError>> = BTreeMap::new();
    for (c, e) in errors {
        grouped.entry(*c).or_default().push(*e);
    }
    let per_category: BTreeMap<Category, MetricsRow> =
        grouped.iter().map(|(c, errs)| (*c, MetricsRow::tally(errs))).collect();
    let rows: Vec<MetricsRow> = per_category.values().copied().collect();
    Some(MetricsReport { mean: MetricsRow::mean(&rows), per_category })
}
