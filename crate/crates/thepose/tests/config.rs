use std::path::Path;

use proptest::prelude::*;
use thepose::ExperimentConfig;
use thepose_core::synth::Category;

fn bundled(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)).unwrap()
}

#[test]
fn empty_text_gives_validated_defaults() {
    let c = ExperimentConfig::parse("").unwrap();
    assert_eq!(c, ExperimentConfig::default());
    assert_eq!(c.model.hgf.k, 15);
    assert_eq!((c.model.hgf.alpha1, c.model.hgf.alpha2), (0.8, 0.2));
    assert_eq!(c.train.tail_fraction, 0.28);
    assert_eq!(c.data.n_points, 1024);
}

#[test]
fn bundled_configs_load_and_round_trip() {
    for name in ["smoke.conf", "desk.conf"] {
        let c = bundled(name);
        assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c, "{name}");
    }
    let desk = bundled("desk.conf");
    assert_eq!(desk.data.categories, vec![Category::Mug]);
    assert_eq!((desk.data.train_size, desk.data.test_size, desk.train.steps), (512, 128, 2000));
}

#[test]
fn serialization_is_stable() {
    let text = ExperimentConfig::default().to_text();
    let again = ExperimentConfig::parse(&text).unwrap().to_text();
    assert_eq!(text, again);
    assert!(text.lines().all(|l| l.split_once(" = ").is_some()));
}

#[test]
fn comments_blank_lines_and_spacing_are_accepted() {
    let c = ExperimentConfig::parse("# header\n\n  model.k=7  \ndata.categories = bowl , can\n").unwrap();
    assert_eq!(c.model.hgf.k, 7);
    assert_eq!(c.data.categories, vec![Category::Bowl, Category::Can]);
}

fn config_error(text: &str) -> String {
    let err = ExperimentConfig::parse(text).unwrap_err();
    assert_eq!(err.exit_code(), 2, "{err}");
    err.to_string()
}

#[test]
fn unknown_duplicate_and_malformed_keys_are_rejected() {
    assert!(config_error("model.kk = 3").contains("unknown key"));
    assert!(config_error("model.k = 3\nmodel.k = 4").contains("duplicate"));
    assert!(config_error("model.k 3").contains("line 1"));
    assert!(config_error("model.k = three").contains("model.k"));
    assert!(config_error("data.categories = mug,teapot").contains("teapot"));
    assert!(config_error("model.robust_mean = yes").contains("robust_mean"));
}

#[test]
fn values_are_validated() {
    config_error("model.alpha1 = 1.5");
    config_error("model.k = 40\ndata.n_points = 40");
    config_error("model.widths = 8,8,8");
    config_error("train.steps = 0");
    config_error("train.batch_size = 0");
    config_error("train.lr = -1");
    config_error("train.tail_fraction = 2");
    config_error("eval.occlusion = 1");
    config_error("loss.size = nan");
    config_error("data.categories = ");
    config_error("data.train_size = 0");
    config_error("data.width = 4");
    config_error("check.instances = 1");
}

#[test]
fn intrinsics_scale_with_the_image() {
    let c = ExperimentConfig::default().intrinsics();
    assert_eq!((c.fx, c.fy, c.cx, c.cy, c.width, c.height), (200.0, 200.0, 64.0, 64.0, 128, 128));
    let small = ExperimentConfig::parse("data.width = 64\ndata.height = 96").unwrap().intrinsics();
    assert_eq!((small.fx, small.cx, small.cy), (100.0, 32.0, 48.0));
}

fn arb_config() -> impl Strategy<Value = ExperimentConfig> {
    (
        prop::sample::subsequence(Category::ALL.to_vec(), 1..=6),
        (1usize..1000, 1usize..1000, 40usize..4096, any::<u64>()),
        (1usize..30, 0.0f64..=1.0, 0.0f64..=1.0, 1usize..5, any::<bool>()),
        (0.0f64..10.0, 0.0f64..10.0, 0.0f64..10.0),
        (0.0f64..1.0, 1usize..10_000, 1usize..64, 0.0f64..=1.0, 0.0f64..0.99),
    )
        .prop_map(|(cats, (tr, te, n, seed), (k, a1, a2, layers, robust), (wr, wt, ws), (lr, steps, bs, tail, occ))| {
            let mut c = ExperimentConfig::default();
            c.data.categories = cats;
            c.data.train_size = tr;
            c.data.test_size = te;
            c.data.n_points = n;
            c.data.seed = seed;
            c.model.hgf.k = k;
            c.model.hgf.alpha1 = a1;
            c.model.hgf.alpha2 = a2;
            c.model.hgf.layers = layers;
            c.model.hgf.widths = (0..=layers).map(|i| 3 + i * 5).collect();
            c.model.hgf.robust_mean = robust;
            c.loss.rotation = wr;
            c.loss.translation = wt;
            c.loss.size = ws;
            c.train.lr = lr;
            c.train.steps = steps;
            c.train.batch_size = bs;
            c.train.tail_fraction = tail;
            c.eval.occlusion = occ;
            c
        })
}

proptest! {
    #[test]
    fn load_serialize_load_is_idempotent(c in arb_config()) {
        let once = ExperimentConfig::parse(&c.to_text()).unwrap();
        prop_assert_eq!(&once, &c);
        let twice = ExperimentConfig::parse(&once.to_text()).unwrap();
        prop_assert_eq!(twice, once);
    }
}
