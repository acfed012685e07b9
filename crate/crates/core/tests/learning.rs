use isomatch::assign::{solve_lap, unary_scores, CostMatrix};
use isomatch::bench::{gen_synthetic, Silhouette, SyntheticConfig, SyntheticDataset};
use isomatch::error::Result;
use isomatch::features::ShapeContextConfig;
use isomatch::learn::*;
use isomatch::learn::solver::{risk, slacks, train};
use isomatch::model::{FeatureConfig, FeatureFlags};
use isomatch::Assignment;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Multiclass toy problem: h(x, y) places x in the y-th block.
struct Multiclass {
    xs: Vec<Vec<f64>>,
    ys: Vec<usize>,
    classes: usize,
}

impl Multiclass {
    fn random(seed: u64, n: usize, d: usize, classes: usize, separable: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centres: Vec<Vec<f64>> = (0..classes)
            .map(|_| (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect())
            .collect();
        let spread = if separable { 0.05 } else { 3.0 };
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n {
            let y = i % classes;
            xs.push(centres[y].iter().map(|c| c + rng.gen_range(-spread..spread)).collect());
            ys.push(y);
        }
        Multiclass { xs, ys, classes }
    }

    fn score(&self, i: usize, y: usize, theta: &[f64]) -> f64 {
        let d = self.xs[i].len();
        self.xs[i].iter().zip(&theta[y * d..]).map(|(a, b)| a * b).sum()
    }

    fn objective(&self, lambda: f64, theta: &[f64]) -> f64 {
        let s = slacks(self, theta).unwrap();
        0.5 * lambda * theta.iter().map(|t| t * t).sum::<f64>() + s.iter().sum::<f64>() / s.len() as f64
    }
}

impl Oracle for Multiclass {
    fn dim(&self) -> usize {
        self.xs[0].len() * self.classes
    }
    fn len(&self) -> usize {
        self.xs.len()
    }
    fn most_violated(&self, i: usize, theta: &[f64]) -> Result<Violation> {
        let gt = self.ys[i];
        let base = self.score(i, gt, theta);
        let (y, v) = (0..self.classes)
            .map(|y| (y, self.score(i, y, theta) - base + if y == gt { 0.0 } else { 1.0 }))
            .fold((gt, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        let d = self.xs[i].len();
        let mut dpsi = vec![0.0; self.dim()];
        for k in 0..d {
            dpsi[y * d + k] += self.xs[i][k];
            dpsi[gt * d + k] -= self.xs[i][k];
        }
        Ok(Violation {
            y: Assignment::from_vec_unchecked(vec![y]),
            slack: v.max(0.0),
            dpsi,
        })
    }
    fn prediction_loss(&self, i: usize, theta: &[f64]) -> Result<f64> {
        let best = (0..self.classes)
            .max_by(|&a, &b| self.score(i, a, theta).total_cmp(&self.score(i, b, theta)).then(b.cmp(&a)))
            .unwrap();
        Ok(if best == self.ys[i] { 0.0 } else { 1.0 })
    }
    fn loss_bound(&self) -> f64 {
        1.0
    }
}

fn opts(kind: SolverKind, lambda: f64, epochs: usize) -> SolverOptions {
    SolverOptions {
        kind,
        lambda,
        epochs,
        batch_size: 1,
        seed: 3,
        tol: 1e-6,
    }
}

#[test]
fn subgradient_matches_finite_differences() {
    let toy = Multiclass::random(1, 30, 4, 3, false);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let lambda = 0.1;
    for _ in 0..20 {
        let theta: Vec<f64> = (0..toy.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dir: Vec<f64> = (0..toy.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut g: Vec<f64> = theta.iter().map(|t| lambda * t).collect();
        for i in 0..toy.len() {
            let v = toy.most_violated(i, &theta).unwrap();
            if v.slack > 0.0 {
                for (gk, dk) in g.iter_mut().zip(&v.dpsi) {
                    *gk += dk / toy.len() as f64;
                }
            }
        }
        let h = 1e-7;
        let moved: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t + h * d).collect();
        let fd = (toy.objective(lambda, &moved) - toy.objective(lambda, &theta)) / h;
        let an: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
        assert!((fd - an).abs() < 1e-4 * (1.0 + an.abs()), "{fd} vs {an}");
    }
}

#[test]
fn objective_is_convex_along_random_segments() {
    let toy = Multiclass::random(5, 40, 3, 4, false);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..50 {
        let a: Vec<f64> = (0..toy.dim()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..toy.dim()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let t: f64 = rng.gen_range(0.0..1.0);
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| t * x + (1.0 - t) * y).collect();
        let lhs = toy.objective(0.01, &mid);
        let rhs = t * toy.objective(0.01, &a) + (1.0 - t) * toy.objective(0.01, &b);
        assert!(lhs <= rhs + 1e-12);
    }
}

#[test]
fn separable_toy_problem_reaches_zero_risk() {
    let toy = Multiclass::random(9, 30, 3, 3, true);
    for kind in [SolverKind::Bundle, SolverKind::Subgradient] {
        let st = train(&toy, None, vec![0.0; toy.dim()], &opts(kind, 1e-3, 200)).unwrap();
        assert_eq!(risk(&toy, &st.theta).unwrap(), 0.0, "{kind:?}");
    }
}

#[test]
fn logged_objective_never_increases_and_matches_state() {
    let toy = Multiclass::random(11, 40, 4, 3, false);
    for kind in [SolverKind::Bundle, SolverKind::Subgradient] {
        let st = train(&toy, Some(&toy), vec![0.0; toy.dim()], &opts(kind, 0.05, 60)).unwrap();
        let h = &st.risk_history;
        assert!(!h.is_empty());
        assert!(h.windows(2).all(|w| w[1].objective <= w[0].objective), "{kind:?}");
        let last = h.last().unwrap();
        assert!((last.objective - st.objective(0.05)).abs() < 1e-12);
        assert_eq!(last.val_risk, Some(last.train_risk));
        assert_eq!(st.slacks, slacks(&toy, &st.theta).unwrap());
    }
}

#[test]
fn bundle_reaches_the_subgradient_objective() {
    let toy = Multiclass::random(12, 60, 4, 3, false);
    let b = train(&toy, None, vec![0.0; toy.dim()], &opts(SolverKind::Bundle, 0.1, 200)).unwrap();
    let s = train(&toy, None, vec![0.0; toy.dim()], &opts(SolverKind::Subgradient, 0.1, 200)).unwrap();
    assert!(b.converged);
    assert!(b.objective(0.1) <= s.objective(0.1) + 1e-6);
}

#[test]
fn solver_is_deterministic() {
    let toy = Multiclass::random(13, 30, 3, 3, false);
    for kind in [SolverKind::Bundle, SolverKind::Subgradient] {
        let a = train(&toy, None, vec![0.0; toy.dim()], &opts(kind, 0.01, 30)).unwrap();
        let b = train(&toy, None, vec![0.0; toy.dim()], &opts(kind, 0.01, 30)).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn bad_solver_options_are_rejected() {
    let toy = Multiclass::random(1, 5, 2, 2, false);
    assert!(train(&toy, None, vec![0.0; toy.dim()], &opts(SolverKind::Bundle, 0.0, 5)).is_err());
    assert!(train(&toy, None, vec![0.0; toy.dim()], &opts(SolverKind::Bundle, 0.1, 0)).is_err());
    assert!(train(&toy, None, vec![0.0; 1], &opts(SolverKind::Bundle, 0.1, 5)).is_err());
}

#[test]
fn lambda_ties_go_to_the_larger_value() {
    assert_eq!(pick_lambda(&[(0.01, 0.5), (1.0, 0.5), (0.1, 0.5)]).unwrap(), 1.0);
    assert_eq!(pick_lambda(&[(0.01, 0.2), (1.0, 0.5), (0.1, 0.3)]).unwrap(), 0.01);
    assert!(pick_lambda(&[]).is_err());
}

fn small_dataset(outliers: usize, epsilon: f64) -> SyntheticDataset {
    let sil = Silhouette::random_blob(4, 120, 640.0, 480.0).unwrap();
    let cfg = SyntheticConfig {
        n_shape: 12,
        n_outliers: outliers,
        epsilon,
        n_images: 4,
        seed: 21,
        ..SyntheticConfig::default()
    };
    gen_synthetic(&cfg, &sil, &ShapeContextConfig::default()).unwrap()
}

fn train_cfg(lambda: f64) -> TrainConfig {
    TrainConfig {
        lambda,
        loss: LossKind::Hamming,
        epochs: 40,
        p: 4,
        calibration_samples: 1000,
        ..TrainConfig::default()
    }
}

#[test]
fn stage1_slacks_match_an_independent_lap_oracle() {
    let ds = small_dataset(5, 4.0);
    let data = TrainingSet::new(ds.train.clone()).unwrap();
    let cfg = train_cfg(0.01);
    let out = train_stage1(&data, None, &cfg).unwrap();
    for (inst, slack) in data.instances().iter().zip(&out.state.slacks) {
        let (t, u) = (inst.template(), inst.target());
        let gt = inst.ground_truth().unwrap().as_slice();
        let cm = unary_scores(t, u, &out.theta0, None).unwrap();
        let n = t.len();
        let aug: Vec<f64> = (0..n)
            .flat_map(|i| {
                let cm = &cm;
                (0..u.len()).map(move |v| cm.get(i, v) + if v == gt[i] { 0.0 } else { 1.0 / n as f64 })
            })
            .collect();
        let aug = CostMatrix::new(n, u.len(), aug).unwrap();
        let y = solve_lap(&aug).unwrap();
        let best: f64 = y.as_slice().iter().enumerate().map(|(i, &v)| aug.get(i, v)).sum();
        let at_gt: f64 = gt.iter().enumerate().map(|(i, &v)| cm.get(i, v)).sum();
        assert!((slack - (best - at_gt).max(0.0)).abs() < 1e-9);
    }
}

#[test]
fn training_slacks_bound_the_prediction_loss() {
    let ds = small_dataset(5, 4.0);
    let data = TrainingSet::new(ds.train.clone()).unwrap();
    for lambda in [1e-3, 1e-1] {
        let cfg = train_cfg(lambda);
        let s1 = train_stage1(&data, None, &cfg).unwrap();
        assert!(stage1_bound_check(&data, &s1, &cfg).unwrap().holds(1e-9));
        let s2 = train_stage2(&data, None, &s1.theta0, &FeatureConfig::default(), &cfg).unwrap();
        assert!(stage2_bound_check(&data, &s2, &cfg).unwrap().holds(1e-9));
        assert_eq!(s2.model.theta0, s1.theta0);
        assert_eq!(s2.model.p, 4);
    }
}

#[test]
fn unary_weight_norm_shrinks_with_lambda() {
    let ds = small_dataset(3, 2.0);
    let data = TrainingSet::new(ds.train.clone()).unwrap();
    let norms: Vec<f64> = [1e-3, 1e-2, 1e-1, 1.0]
        .iter()
        .map(|&l| {
            let cfg = TrainConfig { epochs: 200, tol: 1e-6, ..train_cfg(l) };
            let out = train_stage1(&data, None, &cfg).unwrap();
            out.theta0.iter().map(|t| t * t).sum::<f64>().sqrt()
        })
        .collect();
    assert!(norms.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-3)), "{norms:?}");
}

#[test]
fn distance_only_model_learns_a_positive_weight() {
    let ds = small_dataset(0, 2.0);
    let data = TrainingSet::new(ds.train.clone()).unwrap();
    let cfg = train_cfg(0.01);
    let s1 = train_stage1(&data, None, &cfg).unwrap();
    let fc = FeatureConfig::with_groups(FeatureFlags {
        distance: true,
        ..FeatureFlags::NONE
    });
    let s2 = train_stage2(&data, None, &s1.theta0, &fc, &cfg).unwrap();
    assert_eq!(s2.model.theta.len(), 1);
    assert!(s2.model.theta[0] > 0.0, "{:?}", s2.model.theta);
}

#[test]
fn training_is_deterministic() {
    let ds = small_dataset(5, 4.0);
    let data = TrainingSet::new(ds.train.clone()).unwrap();
    let cfg = train_cfg(0.01);
    let a = train_stage1(&data, None, &cfg).unwrap();
    let b = train_stage1(&data, None, &cfg).unwrap();
    assert_eq!(a.theta0, b.theta0);
    let fc = FeatureConfig::default();
    let x = train_stage2(&data, None, &a.theta0, &fc, &cfg).unwrap();
    let y = train_stage2(&data, None, &a.theta0, &fc, &cfg).unwrap();
    assert_eq!(x, y);
}

#[test]
fn lambda_selection_reports_every_grid_value() {
    let ds = small_dataset(5, 4.0);
    let train_set = TrainingSet::new(ds.train.clone()).unwrap();
    let val = TrainingSet::new(ds.val.clone()).unwrap();
    let cfg = TrainConfig { lambda_grid: vec![1e-3, 1e-1], ..train_cfg(0.01) };
    let sel = select_lambda_stage1(&train_set, &val, &cfg).unwrap();
    assert_eq!(sel.risks.len(), 2);
    assert_eq!(sel.lambda, pick_lambda(&sel.risks).unwrap());
}

#[test]
fn hamming_and_endpoint_losses() {
    let ds = small_dataset(0, 0.0);
    let inst = &ds.test[0];
    let gt = inst.ground_truth().unwrap();
    assert_eq!(hamming(gt, gt).unwrap(), 0.0);
    assert_eq!(endpoint(gt, gt, inst.target()).unwrap(), 0.0);
    let mut wrong = gt.as_slice().to_vec();
    wrong.swap(0, 1);
    let wrong = Assignment::new(wrong, inst.target().len()).unwrap();
    assert!((hamming(&wrong, gt).unwrap() - 2.0 / 12.0).abs() < 1e-12);
    let t = inst.target();
    let (a, b) = (t.point(gt.get(0)), t.point(gt.get(1)));
    let want = 2.0 * a.dist(b) / (12.0 * t.width());
    assert!((endpoint(&wrong, gt, t).unwrap() - want).abs() < 1e-12);
}
