use std::sync::Arc;

use isomatch::error::Error;
use isomatch::io::*;
use isomatch::model::{FeatureConfig, FeatureFlags, WeightModel};
use isomatch::{Assignment, Point2, Scene, TemplateShape};
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    -1e6f64..1e6
}

fn scene_strategy() -> impl Strategy<Value = Scene> {
    (3usize..20, 0usize..6, 1.0f64..2000.0, 1.0f64..2000.0).prop_flat_map(|(n, k, w, h)| {
        (
            prop::collection::vec((finite(), finite()), n),
            prop::collection::vec(prop::collection::vec(finite(), k), n),
        )
            .prop_map(move |(pts, desc)| {
                let pts = pts.into_iter().map(|(x, y)| Point2::new(x, y)).collect();
                let desc = (k > 0).then_some(desc);
                Scene::new("s", pts, desc, w, h).unwrap()
            })
    })
}

proptest! {
    #[test]
    fn scene_round_trip(scene in scene_strategy()) {
        let back = parse_scene(&format_scene(&scene), "s", None).unwrap();
        prop_assert_eq!(back, scene);
    }

    #[test]
    fn template_round_trip(scene in scene_strategy(), seed in any::<u64>()) {
        let n = scene.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        order.truncate(3 + (seed as usize) % (n - 2));
        let t = TemplateShape::new(Arc::new(scene), order).unwrap();
        let back = parse_template(&format_template(&t), "s", None).unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn matches_round_trip(map in prop::collection::vec(0usize..30, 1..25)) {
        let a = Assignment::new(map, 30).unwrap();
        let back = parse_matches(&format_matches(&a), a.len(), 30).unwrap();
        prop_assert_eq!(back, a);
    }

    #[test]
    fn model_round_trip(
        theta0 in prop::collection::vec(0.0f64..5.0, 60),
        theta in prop::collection::vec(-5.0f64..5.0, 5),
        scales in prop::collection::vec(0.01f64..10.0, 5),
        p in 1usize..40,
    ) {
        let m = WeightModel {
            theta0,
            theta,
            p,
            feature_config: FeatureConfig::default(),
            scale_factors: scales,
        };
        let back = model_from_json(&model_to_json(&m).unwrap()).unwrap();
        prop_assert_eq!(back, m);
    }
}

#[test]
fn legacy_landmarks_need_dimensions() {
    let text = "10 20\n30 40\n";
    assert!(matches!(parse_scene(text, "h", None), Err(Error::Parse { .. })));
    let s = parse_scene(text, "h", Some(LegacyDims { width: 100.0, height: 50.0 })).unwrap();
    assert_eq!(s.len(), 2);
    assert_eq!(s.width(), 100.0);
    assert!(!s.has_descriptors());
}

#[test]
fn descriptor_dimension_must_match_header() {
    let text = "# width=10 height=10 k=2\n0 1 1 0.5 0.5\n1 2 2 0.5\n";
    match parse_scene(text, "s", None) {
        Err(Error::InconsistentDescriptorDim { line, expected, found }) => {
            assert_eq!((line, expected, found), (3, 2, 1));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn malformed_scenes_are_rejected() {
    for text in [
        "",
        "# width=10 height=10 k=0\n",
        "# width=-1 height=10 k=0\n0 1 1\n",
        "# width=10 height=10 k=0\n0 1\n",
        "# width=10 height=10 k=0\n0 x 1\n",
        "# width=10 height=10 k=0\n0 inf 1\n",
        "# width=10 height=10 depth=3\n0 1 1\n",
    ] {
        assert!(parse_scene(text, "s", None).is_err(), "{text:?}");
    }
}

#[test]
fn bad_template_order_is_rejected() {
    let base = "# width=10 height=10 k=0\n0 1 1\n1 2 2\n2 5 1\n";
    assert!(parse_template(&format!("{base}# order: 0 1 5\n"), "t", None).is_err());
    assert!(parse_template(&format!("{base}# order: 1 1 0\n"), "t", None).is_err());
    let t = parse_template(base, "t", None).unwrap();
    assert_eq!(t.order(), &[0, 1, 2]);
}

#[test]
fn bad_match_files_are_rejected() {
    assert!(parse_matches("0 1\n0 2\n", 2, 3).is_err());
    assert!(parse_matches("0 1\n", 2, 3).is_err());
    assert!(parse_matches("0 1\n1 3\n", 2, 3).is_err());
    assert!(parse_matches("0 1\n2 0\n", 2, 3).is_err());
    assert!(parse_matches("0 1 2\n", 1, 3).is_err());
    let a = parse_matches("# comment\n1 0\n\n0 2  # trailing\n", 2, 3).unwrap();
    assert_eq!(a.as_slice(), &[2, 0]);
}

#[test]
fn model_validation() {
    let m = WeightModel::uniform(60, 10, FeatureConfig::default());
    let json = model_to_json(&m).unwrap();
    let wrong_version = json.replace("\"version\": 1", "\"version\": 2");
    assert!(matches!(
        model_from_json(&wrong_version),
        Err(Error::VersionMismatch { expected: 1, found: 2 })
    ));
    let few = WeightModel {
        feature_config: FeatureConfig::with_groups(FeatureFlags::GEOMETRIC),
        ..m.clone()
    };
    assert!(matches!(model_to_json(&few), Err(Error::InvalidModel(_))));
    assert!(model_from_json("{").is_err());
}

#[test]
fn files_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let scene = Scene::new(
        "x",
        vec![Point2::new(1.5, 2.25), Point2::new(3.0, 4.0), Point2::new(0.0, 9.0)],
        Some(vec![vec![0.1, 0.2], vec![0.3, 0.4], vec![0.0, 1.0]]),
        20.0,
        10.0,
    )
    .unwrap();
    let path = dir.path().join("scene.txt");
    save_scene(&scene, &path).unwrap();
    let back = load_scene(&path, None).unwrap();
    assert_eq!(back.points(), scene.points());
    assert_eq!(back.descriptor(1), scene.descriptor(1));

    let t = TemplateShape::new(Arc::new(scene), vec![2, 0, 1]).unwrap();
    save_template(&t, dir.path().join("t.txt")).unwrap();
    assert_eq!(load_template(dir.path().join("t.txt"), None).unwrap().order(), &[2, 0, 1]);

    let a = Assignment::new(vec![1, 1, 0], 3).unwrap();
    save_matches(&a, dir.path().join("m.txt")).unwrap();
    assert_eq!(load_matches(dir.path().join("m.txt"), 3, 3).unwrap(), a);

    let m = WeightModel::uniform(60, 3, FeatureConfig::default());
    save_model(&m, dir.path().join("model.json")).unwrap();
    assert_eq!(load_model(dir.path().join("model.json")).unwrap(), m);

    match load_scene(dir.path().join("missing.txt"), None) {
        Err(Error::File { path, .. }) => assert!(path.ends_with("missing.txt")),
        other => panic!("unexpected {other:?}"),
    }
}
