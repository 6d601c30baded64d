use proptest::prelude::*;
use proptest::sample::Index;
use thepose_core::geometry::{geodesic_angle, PointCloud};
use thepose_core::head::{
    assemble_pose, init_model, predict, residual_targets, sample_gradients, LossWeights, ModelConfig,
};
use thepose_core::math;
use thepose_core::metrics::pose_errors;
use thepose_core::net::HgfConfig;
use thepose_core::synth::{apply_occlusion, default_intrinsics, generate_scene, Category, CategorySpec, EMBEDDING_DIM};

fn tiny_model() -> ModelConfig {
    ModelConfig {
        hgf: HgfConfig {
            k: 6,
            widths: vec![8, 8, 8, 8, 8],
            global_width: 8,
            topo_channels: 4,
            topo_global_width: 4,
            pe_bands: 2,
            ..HgfConfig::default()
        },
        head_hidden: 8,
    }
}

#[test]
fn targets_reassemble_ground_truth() {
    for category in Category::ALL {
        let spec = CategorySpec::new(category);
        let sample = generate_scene(&spec, &default_intrinsics(), 128, 40 + u64::from(category.id())).unwrap();
        let pose = assemble_pose(&residual_targets(&sample.gt, &sample.cloud, &spec), &sample.cloud, &spec).unwrap();
        assert!(geodesic_angle(&pose.rotation, &sample.gt.rotation) < 1e-6, "{}", category.name());
        assert!(math::dist(pose.translation, sample.gt.translation) < 1e-12);
        let err = pose_errors(&pose, &sample.gt, category.symmetry(), 2000, 1);
        assert!(err.rotation_err < 1e-6 && err.iou > 0.999, "{err:?}");
    }
}

#[test]
fn untrained_model_predicts_and_differentiates() {
    let spec = CategorySpec::new(Category::Camera);
    let sample = generate_scene(&spec, &default_intrinsics(), 96, 9).unwrap();
    let config = tiny_model();
    let store = init_model(&config, 3);
    let a = predict(&sample, &spec, &config, &store).unwrap();
    let b = predict(&sample, &spec, &config, &store).unwrap();
    assert_eq!(a, b);
    let (parts, grads) = sample_gradients(&sample, &spec, &config, &store, &LossWeights::default()).unwrap();
    assert!(parts.total.is_finite() && parts.total > 0.0);
    assert_eq!(grads.len(), store.len());
    assert!(grads.values().all(|g| g.data().iter().all(|v| v.is_finite())));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn points_come_from_masked_pixels(seed in any::<u64>(), cat in 0u8..6) {
        let spec = CategorySpec::new(Category::from_id(cat).unwrap());
        let sample = generate_scene(&spec, &default_intrinsics(), 64, seed).unwrap();
        prop_assert_eq!(sample.cloud.len(), 64);
        for (p, &pix) in sample.cloud.points().iter().zip(&sample.pixel_indices) {
            prop_assert!(sample.mask[pix]);
            prop_assert_eq!(p[2], f64::from(sample.depth[pix]));
        }
        for pix in 0..sample.mask.len() {
            if !sample.mask[pix] {
                prop_assert_eq!(sample.depth[pix], 0.0);
                prop_assert!(sample.prior[pix * EMBEDDING_DIM..(pix + 1) * EMBEDDING_DIM].iter().all(|v| *v == 0.0));
            }
        }
    }

    #[test]
    fn occlusion_only_removes_pixels(seed in any::<u64>(), fraction in 0.0f64..0.6) {
        let spec = CategorySpec::new(Category::Mug);
        let sample = generate_scene(&spec, &default_intrinsics(), 64, seed).unwrap();
        let occluded = apply_occlusion(&sample, fraction, seed ^ 1).unwrap();
        let removed = (fraction * sample.mask_count() as f64).floor() as usize;
        prop_assert_eq!(occluded.mask_count(), sample.mask_count() - removed);
        for pix in 0..sample.mask.len() {
            prop_assert!(!occluded.mask[pix] || sample.mask[pix]);
        }
        prop_assert_eq!(&occluded.gt, &sample.gt);
    }

    #[test]
    fn centroid_ignores_point_order(
        points in prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 1..40),
        swaps in prop::collection::vec((any::<Index>(), any::<Index>()), 0..40),
    ) {
        let mut shuffled = points.clone();
        for (a, b) in swaps {
            let n = shuffled.len();
            shuffled.swap(a.index(n), b.index(n));
        }
        let c = PointCloud::new(points).unwrap().centroid();
        prop_assert_eq!(c, PointCloud::new(shuffled).unwrap().centroid());
    }
}
