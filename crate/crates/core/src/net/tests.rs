use super::*;
use crate::geometry::{apply_se3, PointCloud, RigidTransform};
use crate::math::{rotation_from_uniforms, Vec3};
use crate::synth::{default_intrinsics, generate_scene, Category, CategorySpec, EMBEDDING_DIM};
use crate::tensor::{gradient_check_params, Groups, Tape, Var};
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_config() -> HgfConfig {
    HgfConfig {
        k: 4,
        widths: vec![4, 4, 6, 6, 8],
        global_width: 5,
        topo_channels: 3,
        topo_global_width: 4,
        pe_bands: 1,
        ..HgfConfig::default()
    }
}

fn params(config: &HgfConfig, seed: u64) -> ParamStore {
    let mut store = ParamStore::new();
    init_params(config, EMBEDDING_DIM, &mut store, &mut ChaCha8Rng::seed_from_u64(seed));
    store
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
    (0..n).map(|_| [rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)]).collect()
}

fn random_perm(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

fn permute_rows(t: &Tensor, perm: &[usize]) -> Tensor {
    let c = t.cols();
    let mut data = vec![0.0; t.len()];
    for i in 0..t.rows() {
        data[perm[i] * c..(perm[i] + 1) * c].copy_from_slice(t.row_slice(i));
    }
    Tensor::matrix(t.rows(), c, data).unwrap()
}

fn permute_points(p: &[Vec3], perm: &[usize]) -> Vec<Vec3> {
    let mut out = vec![[0.0; 3]; p.len()];
    for i in 0..p.len() {
        out[perm[i]] = p[i];
    }
    out
}

fn topo_map(tape: &mut Tape, store: &ParamStore, prior: &[f32], mask: &[bool], w: usize, h: usize) -> TopoFeatureMap {
    let (rows, pixels) = masked_rows(prior, mask, EMBEDDING_DIM).unwrap();
    refine_prior(tape, &rows, pixels, w, h, store).unwrap()
}

#[test]
fn config_defaults_validate() {
    let c = HgfConfig::default();
    c.validate().unwrap();
    assert_eq!(c.fused_width(), 64 + 64 + 128 + 128 + 256 + 256);
    assert!(HgfConfig { alpha1: 1.5, ..c.clone() }.validate().is_err());
    assert!(HgfConfig { widths: vec![1, 2], ..c }.validate().is_err());
}

#[test]
fn zero_prior_refines_to_zero() {
    let store = params(&small_config(), 0);
    let mut tape = Tape::new();
    let mask: Vec<bool> = (0..20).map(|p| p % 3 != 0).collect();
    let map = topo_map(&mut tape, &store, &vec![0.0; 20 * EMBEDDING_DIM], &mask, 5, 4);
    let d = map.dense(&tape);
    assert_eq!(d.len(), 20 * 3);
    assert!(d.iter().all(|v| *v == 0.0));
}

#[test]
fn identity_refinement_is_relu() {
    let mut store = ParamStore::new();
    let mut w = vec![0.0; EMBEDDING_DIM * EMBEDDING_DIM];
    for i in 0..EMBEDDING_DIM {
        w[i * EMBEDDING_DIM + i] = 1.0;
    }
    store.insert("refine.w", Tensor::matrix(EMBEDDING_DIM, EMBEDDING_DIM, w).unwrap());
    let prior: Vec<f32> = (0..6 * EMBEDDING_DIM).map(|i| i as f32 - 10.0).collect();
    let mut tape = Tape::new();
    let map = topo_map(&mut tape, &store, &prior, &[true; 6], 3, 2);
    let d = map.dense(&tape);
    for (o, p) in d.iter().zip(&prior) {
        assert_eq!(*o, f64::from(p.max(0.0)));
    }
}

#[test]
fn constant_map_pools_to_mlp_of_the_constant() {
    let store = params(&small_config(), 1);
    let mut tape = Tape::new();
    let prior: Vec<f32> = (0..30).flat_map(|_| [0.3f32, 0.7, 0.1, 0.5]).collect();
    let mask: Vec<bool> = (0..30).map(|p| p % 4 != 1).collect();
    let map = topo_map(&mut tape, &store, &prior, &mask, 6, 5);
    let pooled = tgc_aggregate(&mut tape, &map, &store).unwrap();
    let got = tape.value(pooled).clone();

    let mut t2 = Tape::new();
    let single = topo_map(&mut t2, &store, &prior[..4], &[true], 1, 1);
    let one = tgc_aggregate(&mut t2, &single, &store).unwrap();
    for (a, b) in got.data().iter().zip(t2.value(one).data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn global_context_ignores_pixel_order_but_not_the_mask() {
    let store = params(&small_config(), 2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let prior: Vec<f32> = (0..40 * EMBEDDING_DIM).map(|_| rng.gen_range(0.0f32..1.0)).collect();
    let mask = vec![true; 40];
    let mut tape = Tape::new();
    let map = topo_map(&mut tape, &store, &prior, &mask, 8, 5);
    let pooled = tgc_aggregate(&mut tape, &map, &store).unwrap();
    let base = tape.value(pooled).clone();

    // Same pixels visited in another order.
    let perm = random_perm(&mut rng, 40);
    let mut shuffled = vec![0.0f32; prior.len()];
    for p in 0..40 {
        shuffled[perm[p] * 4..perm[p] * 4 + 4].copy_from_slice(&prior[p * 4..p * 4 + 4]);
    }
    let mut t2 = Tape::new();
    let map2 = topo_map(&mut t2, &store, &shuffled, &mask, 8, 5);
    let other = tgc_aggregate(&mut t2, &map2, &store).unwrap();
    for (a, b) in base.data().iter().zip(t2.value(other).data()) {
        assert!((a - b).abs() < 1e-12);
    }

    let half: Vec<bool> = (0..40).map(|p| p < 20).collect();
    let mut t3 = Tape::new();
    let map3 = topo_map(&mut t3, &store, &prior, &half, 8, 5);
    let masked = tgc_aggregate(&mut t3, &map3, &store).unwrap();
    let diff: f64 = base.data().iter().zip(t3.value(masked).data()).map(|(a, b)| (a - b).abs()).sum();
    assert!(diff > 1e-6);

    let mut t4 = Tape::new();
    let empty = topo_map(&mut t4, &store, &prior, &[false; 40], 8, 5);
    assert!(matches!(tgc_aggregate(&mut t4, &empty, &store), Err(Error::EmptyMask)));
}

#[test]
fn backprojection_reads_mask_pixels() {
    let store = params(&small_config(), 3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let prior: Vec<f32> = (0..12 * EMBEDDING_DIM).map(|_| rng.gen_range(0.0f32..1.0)).collect();
    let mask: Vec<bool> = (0..12).map(|p| p != 5).collect();
    let mut tape = Tape::new();
    let map = topo_map(&mut tape, &store, &prior, &mask, 4, 3);
    let rows = backproject_features(&mut tape, &map, &[7, 7, 7]).unwrap();
    let v = tape.value(rows);
    assert_eq!(v.rows(), 3);
    assert_eq!(v.row_slice(0), v.row_slice(2));
    assert!(matches!(backproject_features(&mut tape, &map, &[5]), Err(Error::OutsideMask { pixel: 5 })));
    assert!(backproject_features(&mut tape, &map, &[12]).is_err());
}

#[test]
fn backprojected_features_are_refined_oracle_embeddings() {
    let store = params(&small_config(), 4);
    let spec = CategorySpec::new(Category::Camera);
    let s = generate_scene(&spec, &default_intrinsics(), 300, 11).unwrap();
    let mut tape = Tape::new();
    let map = topo_map(&mut tape, &store, &s.prior, &s.mask, s.width(), s.height());
    let rows = backproject_features(&mut tape, &map, &s.pixel_indices).unwrap();
    let got = tape.value(rows).clone();

    let emb: Vec<f64> = s.point_embeddings().into_iter().flatten().collect();
    let mut t2 = Tape::new();
    let x = t2.constant(Tensor::matrix(300, EMBEDDING_DIM, emb).unwrap());
    let w = t2.param(&store, "refine.w").unwrap();
    let lin = t2.linear(x, w, None).unwrap();
    let expect = t2.relu(lin);
    assert_eq!(&got, t2.value(expect));
}

// Direct evaluation of max_j relu([x_i, x_j - x_i] W + b).
fn naive_edge_conv(x: &Tensor, groups: &Groups, w: &Tensor, b: &Tensor) -> Vec<f64> {
    let (d, out) = (x.cols(), w.cols());
    let mut res = Vec::new();
    for (i, g) in groups.iter().enumerate() {
        let mut best = vec![f64::NEG_INFINITY; out];
        for &j in g {
            let mut edge = x.row_slice(i).to_vec();
            edge.extend((0..d).map(|c| x.get(j, c) - x.get(i, c)));
            for o in 0..out {
                let mut s = b.get(0, o);
                for (r, e) in edge.iter().enumerate() {
                    s += e * w.get(r, o);
                }
                best[o] = best[o].max(s.max(0.0));
            }
        }
        res.extend(best);
    }
    res
}

fn run_gc(x: &Tensor, groups: &Groups, w: &Tensor, b: &Tensor) -> Tensor {
    let mut tape = Tape::new();
    let (xv, wv, bv) = (tape.constant(x.clone()), tape.constant(w.clone()), tape.constant(b.clone()));
    let out = gc_layer(&mut tape, xv, groups, wv, bv).unwrap();
    tape.value(out).clone()
}

#[test]
fn edge_convolution_matches_direct_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random_matrix(&mut rng, 30, 5);
    let (w, b) = (random_matrix(&mut rng, 10, 7), random_matrix(&mut rng, 1, 7));
    let g = build_receptive_field(x.data(), 5, &random_points(&mut rng, 30), 6, 0.5).unwrap();
    let got = run_gc(&x, &g.groups(), &w, &b);
    for (a, e) in got.data().iter().zip(naive_edge_conv(&x, &g.groups(), &w, &b)) {
        assert!((a - e).abs() < 1e-12);
    }
}

#[test]
fn edge_convolution_symmetries() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (w, b) = (random_matrix(&mut rng, 8, 5), random_matrix(&mut rng, 1, 5));
    let points = random_points(&mut rng, 25);
    // Identical features: every row equal.
    let same = Tensor::matrix(25, 4, [0.3, -0.2, 0.9, 0.1].repeat(25)).unwrap();
    let g = build_receptive_field(&[], 0, &points, 5, 0.0).unwrap();
    let out = run_gc(&same, &g.groups(), &w, &b);
    assert!((1..25).all(|r| out.row_slice(r) == out.row_slice(0)));

    // Neighbor order inside a group does not matter.
    let x = random_matrix(&mut rng, 25, 4);
    let base = run_gc(&x, &g.groups(), &w, &b);
    let reversed = Groups::new(g.groups().iter().map(|m| m.iter().rev().cloned().collect::<Vec<_>>()));
    assert_eq!(run_gc(&x, &reversed, &w, &b), base);

    // Relabeling points permutes output rows.
    let perm = random_perm(&mut rng, 25);
    let moved = run_gc(&permute_rows(&x, &perm), &g.relabeled(&perm).groups(), &w, &b);
    assert_eq!(moved, permute_rows(&base, &perm));
}

fn fusion_values(config: &HgfConfig, store: &ParamStore, topo: &Tensor, points: &[Vec3]) -> Tensor {
    let mut tape = Tape::new();
    let t = tape.constant(topo.clone());
    let out = fusion_stream(&mut tape, t, points, config, store, &mut GraphCache::live()).unwrap();
    tape.value(out.fused).clone()
}

#[test]
fn tiny_fusion_stream_is_finite_with_declared_width() {
    let config = small_config();
    let store = params(&config, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let out = fusion_values(&config, &store, &random_matrix(&mut rng, 16, 3), &random_points(&mut rng, 16));
    assert_eq!((out.rows(), out.cols()), (16, config.fused_width()));
    assert!(out.is_finite());
}

#[test]
fn fusion_stream_is_permutation_equivariant() {
    let config = small_config();
    let store = params(&config, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..3 {
        let topo = random_matrix(&mut rng, 40, 3);
        let points = random_points(&mut rng, 40);
        let base = fusion_values(&config, &store, &topo, &points);
        let perm = random_perm(&mut rng, 40);
        let moved = fusion_values(&config, &store, &permute_rows(&topo, &perm), &permute_points(&points, &perm));
        assert_eq!(moved, permute_rows(&base, &perm));
    }
}

fn hgf_once(config: &HgfConfig, store: &ParamStore, x: &Tensor, points: &[Vec3], cache: &mut GraphCache) -> Tensor {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let pe = crate::geometry::positional_encoding(points, config.pe_bands, config.pe_base);
    let pe = tape.constant(Tensor::matrix(points.len(), config.pe_width(), pe).unwrap());
    let out = hgf_layer(&mut tape, xv, points, pe, config, store, "hgf1", cache).unwrap();
    tape.value(out).clone()
}

#[test]
fn hgf_layer_shape_and_feature_only_graph_invariance() {
    let config = HgfConfig { alpha1: 1.0, pe_bands: 0, robust_mean: false, ..small_config() };
    let store = params(&config, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = random_matrix(&mut rng, 30, 4);
    let points = random_points(&mut rng, 30);
    let mut before = GraphCache::frozen();
    let out = hgf_once(&config, &store, &x, &points, &mut before);
    assert_eq!((out.rows(), out.cols()), (30, 4));
    let t = RigidTransform::new(rotation_from_uniforms(0.3, 0.6, 0.9), [1.0, -2.0, 0.5]).unwrap();
    let moved = apply_se3(&t, &PointCloud::new(points).unwrap());
    let mut after = GraphCache::frozen();
    hgf_once(&config, &store, &x, moved.points(), &mut after);
    assert_eq!(before.graphs()[0].groups(), after.graphs()[0].groups());
}

#[test]
fn neighbor_averaging_pulls_outliers_toward_their_neighborhood() {
    let config = small_config();
    let store = params(&config, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut x = random_matrix(&mut rng, 31, 4);
    let mut points = random_points(&mut rng, 30);
    points.push(points[0]);
    x.data_mut()[30 * 4..].copy_from_slice(&[40.0, -40.0, 40.0, 40.0]);

    let plain = HgfConfig { robust_mean: false, ..config.clone() };
    let pre = hgf_once(&plain, &store, &x, &points, &mut GraphCache::live());
    let post = hgf_once(&config, &store, &x, &points, &mut GraphCache::live());
    let spatial = build_receptive_field(&[], 0, &points, config.k, 0.0).unwrap();
    let w = pre.cols();
    let mut mean = vec![0.0; w];
    for &j in spatial.neighbors(30) {
        for c in 0..w {
            mean[c] += pre.get(j, c) / config.k as f64;
        }
    }
    let gap = |row: &[f64]| row.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    assert!(gap(post.row_slice(30)) < gap(pre.row_slice(30)));
}

#[test]
fn frozen_fusion_stream_passes_gradient_check() {
    let config = small_config();
    let store = params(&config, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let topo = random_matrix(&mut rng, 14, 3);
    let points = random_points(&mut rng, 14);
    let readout = random_matrix(&mut rng, 14, config.fused_width());
    let mut cache = GraphCache::frozen();
    let report = gradient_check_params(
        |tape: &mut Tape, store: &ParamStore| -> Result<Var> {
            cache.rewind();
            let t = tape.constant(topo.clone());
            let out = fusion_stream(tape, t, &points, &config, store, &mut cache)?;
            tape.weighted_sum(out.fused, readout.clone())
        },
        &store,
        1e-5,
    )
    .unwrap();
    let fusion_names = report.iter().filter(|(n, _)| n.starts_with("hgf") || n.starts_with("fusion")).count();
    assert_eq!(fusion_names, 2 + 4 * 4 + 2);
    for (name, err) in report {
        assert!(err < 1e-4, "{name}: {err}");
    }
}

#[test]
fn point_graph_and_oracle_feature_graph_survive_rigid_motion() {
    let spec = CategorySpec::new(Category::Mug);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for seed in 0..3 {
        let s = generate_scene(&spec, &default_intrinsics(), 256, seed).unwrap();
        let emb: Vec<f64> = s.point_embeddings().into_iter().flatten().collect();
        let t = RigidTransform::new(
            rotation_from_uniforms(rng.gen(), rng.gen(), rng.gen()),
            [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
        )
        .unwrap();
        let moved = apply_se3(&t, &s.cloud);
        for alpha in [0.0, 0.2, 0.8, 1.0] {
            let a = build_receptive_field(&emb, EMBEDDING_DIM, s.cloud.points(), 15, alpha).unwrap();
            let b = build_receptive_field(&emb, EMBEDDING_DIM, moved.points(), 15, alpha).unwrap();
            assert_eq!(a.groups(), b.groups(), "alpha {alpha}");
        }
    }
}
