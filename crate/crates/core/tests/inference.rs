use std::sync::Arc;

use isomatch::assign::{solve_lap, unary_scores, CostMatrix};
use isomatch::features::{with_shape_context, CliqueContext, ShapeContextConfig};
use isomatch::infer::*;
use isomatch::learn::{joint_feature, MatchOptions};
use isomatch::model::{FeatureConfig, FeatureFlags, WeightModel};
use isomatch::{Assignment, Point2, Scene, TemplateShape};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tables(rng: &mut ChaCha8Rng, n: usize, sizes: &[usize]) -> CliqueTableSet {
    let cands = CandidateSets::ranges(sizes).unwrap();
    let tables = (0..n)
        .map(|i| {
            let len = sizes[i] * sizes[(i + 1) % n] * sizes[(i + 2) % n];
            (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
        })
        .collect();
    CliqueTableSet::new(cands, tables).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn loopy_conditioned_and_bruteforce_agree(seed in any::<u64>(), n in 3usize..=7, pmax in 2usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sizes: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=pmax)).collect();
        let t = random_tables(&mut rng, n, &sizes);
        let brute = map_bruteforce(&t).unwrap();
        let cond = map_conditioned(&t);
        let loopy = map_loopy(&t, &LoopyOptions::default());
        prop_assert_eq!(&cond.positions, &brute.positions);
        prop_assert_eq!(&loopy.positions, &brute.positions);
        prop_assert_eq!(cond.objective, brute.objective);
        prop_assert_eq!(loopy.objective, brute.objective);
    }

    #[test]
    fn constant_shift_keeps_the_argmax(seed in any::<u64>(), kappa in -50.0f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_tables(&mut rng, 5, &[3, 2, 3, 3, 2]);
        let a = map_loopy(&t, &LoopyOptions::default());
        let b = map_loopy(&t.shifted(kappa), &LoopyOptions::default());
        prop_assert_eq!(a.positions, b.positions);
    }

    #[test]
    fn lap_ignores_row_constants(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, m) = (5, 7);
        let vals: Vec<f64> = (0..n * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let shifted: Vec<f64> = vals
            .chunks(m)
            .flat_map(|row| {
                let c = rng.gen_range(-10.0..10.0);
                row.iter().map(move |v| v + c).collect::<Vec<_>>()
            })
            .collect();
        let a = solve_lap(&CostMatrix::new(n, m, vals).unwrap()).unwrap();
        let b = solve_lap(&CostMatrix::new(n, m, shifted).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn monotone_transform_of_a_single_table_entry() {
    // Raising the table entry of the current optimum keeps it optimal.
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..50 {
        let t = random_tables(&mut rng, 6, &[3, 3, 2, 3, 2, 3]);
        let best = map_conditioned(&t);
        let pos = &best.positions;
        let mut tables: Vec<Vec<f64>> = (0..6).map(|i| t.table(i).to_vec()).collect();
        let (_, nb, nc) = t.dims(0);
        tables[0][(pos[0] * nb + pos[1]) * nc + pos[2]] += 0.5;
        let raised = CliqueTableSet::new(t.candidates().clone(), tables).unwrap();
        assert_eq!(map_loopy(&raised, &LoopyOptions::default()).positions, *pos);
    }
}

fn permutations(k: usize, m: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for prefix in permutations(k - 1, m) {
        for c in 0..m {
            if !prefix.contains(&c) {
                let mut v = prefix.clone();
                v.push(c);
                out.push(v);
            }
        }
    }
    out
}

#[test]
fn lap_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let all = permutations(7, 9);
    for _ in 0..500 {
        let vals: Vec<f64> = (0..63).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cm = CostMatrix::new(7, 9, vals.clone()).unwrap();
        let best = all
            .iter()
            .map(|p| p.iter().enumerate().map(|(r, &c)| vals[r * 9 + c]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        let got = solve_lap(&cm).unwrap();
        let score: f64 = got.as_slice().iter().enumerate().map(|(r, &c)| vals[r * 9 + c]).sum();
        assert!((score - best).abs() <= 1e-12, "{score} vs {best}");
    }
}

fn random_instance(rng: &mut ChaCha8Rng, n: usize, m: usize) -> (TemplateShape, Scene) {
    let pts = |rng: &mut ChaCha8Rng, k: usize| -> Vec<Point2> {
        (0..k)
            .map(|_| Point2::new(rng.gen_range(0.0..200.0), rng.gen_range(0.0..150.0)))
            .collect()
    };
    let sc = ShapeContextConfig::default();
    let s = Scene::new("s", pts(rng, n), None, 200.0, 150.0).unwrap();
    let s = Arc::new(with_shape_context(&s, &sc).unwrap());
    let u = Scene::new("u", pts(rng, m), None, 200.0, 150.0).unwrap();
    let u = with_shape_context(&u, &sc).unwrap();
    (TemplateShape::whole_scene(s).unwrap(), u)
}

#[test]
fn score_identity_between_tables_and_joint_feature() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for trial in 0..30 {
        let (template, target) = random_instance(&mut rng, 6, 9);
        let theta0: Vec<f64> = (0..60).map(|_| rng.gen_range(0.0..1.0)).collect();
        let model = WeightModel {
            theta0: theta0.clone(),
            theta: (0..5).map(|_| rng.gen_range(-1.0..2.0)).collect(),
            p: 9,
            feature_config: FeatureConfig::default(),
            scale_factors: (0..5).map(|_| rng.gen_range(0.5..2.0)).collect(),
        };
        let cands = CandidateSets::full(6, 9);
        let ctx = CliqueContext::new(&template, &target, &model.feature_config, Some(&theta0)).unwrap();
        let tables = build_tables(&ctx, &model.theta, &model.scale_factors, &cands, None).unwrap();
        let y: Vec<usize> = (0..6).map(|_| rng.gen_range(0..9)).collect();
        let h = joint_feature(&template, &target, &Assignment::new(y.clone(), 9).unwrap(), &model).unwrap();
        let lhs: f64 = h.iter().zip(&model.theta).map(|(a, b)| a * b).sum();
        let rhs = tables.score(&y);
        assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()), "trial {trial}: {lhs} vs {rhs}");
    }
}

#[test]
fn pruning_matches_an_independent_sort() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let (template, target) = random_instance(&mut rng, 5, 12);
        let theta0: Vec<f64> = (0..60).map(|_| rng.gen_range(0.0..1.0)).collect();
        let c = prune_candidates(&template, &target, &theta0, 4).unwrap();
        for i in 0..5 {
            let s = template.descriptor(i).unwrap();
            let mut scored: Vec<(f64, usize)> = (0..12)
                .map(|u| {
                    let d = target.descriptor(u).unwrap();
                    let v: f64 = theta0.iter().zip(s.iter().zip(d)).map(|(t, (a, b))| t * (a - b) * (a - b)).sum();
                    (v, u)
                })
                .collect();
            scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let want: Vec<usize> = scored.iter().take(4).map(|x| x.1).collect();
            assert_eq!(c.list(i), want.as_slice());
        }
        // theta0 = 0 ties everything: first indices.
        let z = prune_candidates(&template, &target, &vec![0.0; 60], 3).unwrap();
        assert!(z.lists().iter().all(|l| l == &[0, 1, 2]));
        // p >= m keeps everyone.
        assert_eq!(prune_candidates(&template, &target, &theta0, 20).unwrap().len_of(0), 12);
    }
}

#[test]
fn unary_scores_are_negated_collapsed_features() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (template, target) = random_instance(&mut rng, 4, 6);
    let theta0 = vec![1.0; 60];
    let cm = unary_scores(&template, &target, &theta0, None).unwrap();
    let y = solve_lap(&cm).unwrap();
    assert_eq!(y.collisions(), 0);
    for i in 0..4 {
        for u in 0..6 {
            let s = template.descriptor(i).unwrap();
            let d = target.descriptor(u).unwrap();
            let v: f64 = s.iter().zip(d).map(|(a, b)| (a - b) * (a - b)).sum();
            assert!((cm.get(i, u) + v).abs() < 1e-12);
        }
    }
}

#[test]
fn isometric_copy_is_matched_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let cfg = FeatureConfig {
        groups: FeatureFlags::GEOMETRIC,
        ..FeatureConfig::default()
    };
    for _ in 0..10 {
        let n = rng.gen_range(8..=15);
        let pts: Vec<Point2> = (0..n)
            .map(|_| Point2::new(rng.gen_range(100.0..300.0), rng.gen_range(100.0..300.0)))
            .collect();
        let th: f64 = rng.gen_range(0.0..6.28);
        let (tx, ty): (f64, f64) = (rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0));
        let moved: Vec<Point2> = pts
            .iter()
            .map(|q| {
                let y = -q.y;
                Point2::new(th.cos() * q.x - th.sin() * y + tx, th.sin() * q.x + th.cos() * y + ty + 400.0)
            })
            .collect();
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        let shuffled: Vec<Point2> = perm.iter().map(|&k| moved[k]).collect();
        let template = TemplateShape::whole_scene(Arc::new(Scene::new("t", pts, None, 400.0, 400.0).unwrap())).unwrap();
        let target = Scene::new("u", shuffled, None, 400.0, 400.0).unwrap();
        let model = WeightModel::uniform(0, n, cfg.clone());
        let model = WeightModel { theta0: Vec::new(), ..model };
        let r = isomatch::learn::infer_higher_order(&template, &target, &model, None, &MatchOptions::default()).unwrap();
        let want: Vec<usize> = (0..n).map(|k| perm.iter().position(|&x| x == k).unwrap()).collect();
        assert_eq!(r.assignment.as_slice(), want.as_slice());
    }
}
