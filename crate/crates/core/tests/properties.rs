use muonlab::biaslab::{muon_solution, signgd_solution, RegressionProblem};
use muonlab::linalg::{
    l1_norm, l2_norm, linf_norm, newton_schulz, polar_ortho, scalar_ns_map, singular_values,
    spectral_norm, spectral_report, svd, CoefficientSchedule, Matrix,
};
use muonlab::lorakit::{surrogate_damage, surrogate_fixed_points, LoraAdapter, LoraScaling};
use muonlab::microtrain::{synth_tasks, train, FinetuneMode, LoraSpec, Mlp, RunSpec, TaskShape};
use muonlab::optim::{AdamConfig, AdamState, MuonConfig, MuonState, OptimizerSpec, StepSchedule};
use muonlab::rng::{gaussian_matrix, gaussian_vec, seeded};
use proptest::prelude::*;

fn matrix_strategy(max_rows: usize, max_cols: usize) -> impl Strategy<Value = Matrix> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(m, n)| {
        prop::collection::vec(-10.0f64..10.0, m * n)
            .prop_map(move |v| Matrix::from_row_major(m, n, v).unwrap())
    })
}

fn nonzero_vec(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 1..=max_len).prop_filter("nonzero", |v| l1_norm(v) > 1e-3)
}

fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.sub(b).unwrap().max_norm()
}

fn random_orthogonal(seed: u64, n: usize) -> Matrix {
    let q = gaussian_matrix(&mut seeded(seed), n, n, 1.0).into_dmatrix().qr().q();
    Matrix::from_dmatrix(q).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn svd_reconstructs(m in matrix_strategy(64, 64)) {
        let s = svd(&m).unwrap();
        let scale = m.max_norm().max(1e-300);
        prop_assert!(max_abs_diff(&s.reconstruct(), &m) <= 1e-11 * scale);
        prop_assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn svd_reconstructs_rank_one(y in nonzero_vec(16), x in nonzero_vec(32)) {
        let m = Matrix::outer(&y, &x).unwrap();
        for a in [m.clone(), m.transpose()] {
            let s = svd(&a).unwrap();
            prop_assert!(max_abs_diff(&s.reconstruct(), &a) <= 1e-12 * a.max_norm());
            prop_assert!((s.singular_values[0] - l2_norm(&y) * l2_norm(&x)).abs() <= 1e-12 * s.singular_values[0]);
        }
    }

    #[test]
    fn polar_is_idempotent(m in matrix_strategy(12, 12)) {
        prop_assume!(m.frobenius_norm() > 1e-6);
        let p = polar_ortho(&m).unwrap();
        prop_assert!(max_abs_diff(&polar_ortho(&p).unwrap(), &p) <= 1e-10);
    }

    #[test]
    fn newton_schulz_is_orthogonally_equivariant(seed in 0u64..1000, m in 1usize..10, n in 1usize..10) {
        let s = CoefficientSchedule::default();
        let x = gaussian_matrix(&mut seeded(seed), m, n, 1.0);
        let (u, v) = (random_orthogonal(seed + 1, m), random_orthogonal(seed + 2, n));
        let rotated = u.matmul(&x).unwrap().matmul(&v).unwrap();
        let lhs = newton_schulz(&rotated, &s).unwrap();
        let rhs = u.matmul(&newton_schulz(&x, &s).unwrap()).unwrap().matmul(&v).unwrap();
        prop_assert!(max_abs_diff(&lhs, &rhs) <= 1e-10);
    }

    #[test]
    fn newton_schulz_singular_values_follow_scalar_map(seed in 0u64..1000) {
        let s = CoefficientSchedule::default();
        let x = gaussian_matrix(&mut seeded(seed), 8, 5, 1.0);
        let fro = x.frobenius_norm();
        let mut expected: Vec<f64> = singular_values(&x).unwrap().iter().map(|v| scalar_ns_map(v / fro, &s)).collect();
        expected.sort_by(|a, b| b.total_cmp(a));
        let got = singular_values(&newton_schulz(&x, &s).unwrap()).unwrap();
        for (g, e) in got.iter().zip(&expected) {
            prop_assert!((g - e).abs() <= 1e-10);
        }
    }

    #[test]
    fn spectral_metrics_are_invariant(seed in 0u64..1000, c in 1e-3f64..1e3) {
        let w = gaussian_matrix(&mut seeded(seed), 6, 9, 1.0);
        let base = spectral_report(&w).unwrap();
        let rotated = random_orthogonal(seed + 7, 6).matmul(&w).unwrap().matmul(&random_orthogonal(seed + 8, 9)).unwrap();
        for other in [rotated, w.scale(c)] {
            let r = spectral_report(&other).unwrap();
            prop_assert!((r.stable_rank - base.stable_rank).abs() <= 1e-8);
            prop_assert!((r.svd_entropy - base.svd_entropy).abs() <= 1e-8);
        }
        // Stable rank agrees with its log-space form.
        let sv = &base.singular_values;
        let energy: f64 = sv.iter().map(|s| s * s).sum();
        prop_assert!((base.stable_rank.ln() - (energy.ln() - 2.0 * sv[0].ln())).abs() <= 1e-10);
        prop_assert!(base.stable_rank >= 1.0 && base.stable_rank <= 6.0 + 1e-12);
    }

    #[test]
    fn closed_forms_interpolate_with_minimal_norm(x in nonzero_vec(12), y in nonzero_vec(6), seed in 0u64..1000) {
        let p = RegressionProblem::new(x.clone(), y.clone()).unwrap();
        let ws = signgd_solution(&x, &y).unwrap();
        let wm = muon_solution(&x, &y).unwrap();
        prop_assert!(p.loss(&ws).unwrap() <= 1e-20 * (1.0 + l2_norm(&y).powi(2)) + 1e-24);
        prop_assert!(p.loss(&wm).unwrap() <= 1e-20 * (1.0 + l2_norm(&y).powi(2)) + 1e-24);
        prop_assert!((ws.max_norm() - linf_norm(&y) / l1_norm(&x)).abs() <= 1e-12 * ws.max_norm());
        let spec = spectral_norm(&wm).unwrap();
        prop_assert!((spec - l2_norm(&y) / l2_norm(&x)).abs() <= 1e-12 * spec);

        // Any other interpolant W* + N with N x = 0 has no smaller norm.
        let raw = gaussian_matrix(&mut seeded(seed), y.len(), x.len(), 1.0);
        let nx = raw.apply(&x).unwrap();
        let sq: f64 = x.iter().map(|v| v * v).sum();
        let proj = Matrix::outer(&nx, &x.iter().map(|v| v / sq).collect::<Vec<_>>()).unwrap();
        let null = raw.sub(&proj).unwrap();
        prop_assert!(null.apply(&x).unwrap().iter().all(|v| v.abs() <= 1e-10));
        let other_m = wm.add(&null).unwrap();
        prop_assert!(spectral_norm(&other_m).unwrap() >= spec * (1.0 - 1e-12));
    }

    #[test]
    fn rank_one_adapter_collapses_fixed_points(r0 in nonzero_vec(6), z in nonzero_vec(8), seed in 0u64..1000) {
        let a = gaussian_matrix(&mut seeded(seed), 1, z.len(), 1.0);
        let u = a.apply(&z).unwrap();
        prop_assume!(u[0].abs() > 1e-6);
        let (bs, bm) = surrogate_fixed_points(&r0, &u).unwrap();
        prop_assert!(max_abs_diff(&bs, &bm) <= 1e-12 * bs.max_norm().max(1.0));
        // Scalar case: both limits are r0 / u.
        for (i, r) in r0.iter().enumerate() {
            prop_assert!((bs.get(i, 0) - r / u[0]).abs() <= 1e-12 * (r / u[0]).abs().max(1.0));
        }
    }

    #[test]
    fn surrogate_damage_matches_direct_evaluation(r0 in nonzero_vec(5), seed in 0u64..1000) {
        let mut rng = seeded(seed);
        let n = 7;
        let a = gaussian_matrix(&mut rng, 3, n, 1.0);
        let z = gaussian_vec(&mut rng, n, 1.0);
        let x = gaussian_vec(&mut rng, n, 1.0);
        let u = a.apply(&z).unwrap();
        let d = surrogate_damage(&r0, &a, &z, &x).unwrap();
        let (bs, bm) = surrogate_fixed_points(&r0, &u).unwrap();
        let ax = a.apply(&x).unwrap();
        let direct = |b: &Matrix| 0.5 * b.apply(&ax).unwrap().iter().map(|v| v * v).sum::<f64>();
        prop_assert!((d.signgd - direct(&bs)).abs() <= 1e-10 * direct(&bs).max(1.0));
        prop_assert!((d.muon - direct(&bm)).abs() <= 1e-10 * direct(&bm).max(1.0));
    }
}

#[test]
fn adam_with_constant_gradient_moves_in_a_straight_line() {
    let g = Matrix::from_rows(&[&[2.0, -3.0], &[0.5, -0.25]]).unwrap();
    let mut state = AdamState::new(2, 2, AdamConfig::default()).unwrap();
    let mut w = Matrix::zeros(2, 2);
    for t in 1..=50 {
        w = state.step(&w, &g, 0.01).unwrap();
        // With a constant gradient the bias-corrected ratio is exactly g / |g| up to eps.
        let expected = g.sign().scale(-0.01 * t as f64);
        assert!(max_abs_diff(&w, &expected) <= 1e-8 * t as f64, "step {t}");
    }
}

#[test]
fn muon_step_on_rank_one_gradient_is_normalized_outer_product() {
    let mut rng = seeded(3);
    let (r, x) = (gaussian_vec(&mut rng, 5, 1.0), gaussian_vec(&mut rng, 9, 1.0));
    let g = Matrix::outer(&r, &x).unwrap();
    let mut s = MuonState::new(5, 9, MuonConfig::idealized()).unwrap();
    let w = s.step(&Matrix::zeros(5, 9), &g, 1.0).unwrap();
    let rn: Vec<f64> = r.iter().map(|v| v / l2_norm(&r)).collect();
    let xn: Vec<f64> = x.iter().map(|v| v / l2_norm(&x)).collect();
    assert!(max_abs_diff(&w, &Matrix::outer(&rn, &xn).unwrap().scale(-1.0)) <= 1e-12);
}

#[test]
fn lora_gradients_match_finite_differences() {
    let mut rng = seeded(11);
    let w0 = gaussian_matrix(&mut rng, 4, 6, 1.0);
    let target = gaussian_matrix(&mut rng, 4, 6, 1.0);
    let mut adapter = LoraAdapter::new(w0, 2, 3.0, LoraScaling::Rs, &mut rng).unwrap();
    adapter.set_b(gaussian_matrix(&mut rng, 4, 2, 1.0)).unwrap();
    let loss = |ad: &LoraAdapter| 0.5 * ad.forward().sub(&target).unwrap().frobenius_norm().powi(2);
    let (db, da) = adapter.grads(&adapter.forward().sub(&target).unwrap()).unwrap();
    let eps = 1e-6;
    for (which, grad) in [(0, &db), (1, &da)] {
        let base = if which == 0 { adapter.b().clone() } else { adapter.a().clone() };
        for i in 0..base.rows() {
            for j in 0..base.cols() {
                let probe = |delta: f64| {
                    let mut m = base.clone();
                    m.set(i, j, base.get(i, j) + delta);
                    let mut ad = adapter.clone();
                    if which == 0 { ad.set_b(m).unwrap() } else { ad.set_a(m).unwrap() }
                    loss(&ad)
                };
                let fd = (probe(eps) - probe(-eps)) / (2.0 * eps);
                assert!((fd - grad.get(i, j)).abs() <= 1e-6 * fd.abs().max(1.0));
            }
        }
    }
}

#[test]
fn training_logs_are_consistent_with_checkpoints() {
    let shape = TaskShape { d: 5, h: 7, o: 3, train_samples: 24, val_samples: 24 };
    let (task, _) = synth_tasks(2, &shape).unwrap();
    let model = Mlp::random(&mut seeded(4), 5, 7, 3);
    let run = RunSpec {
        optimizer: OptimizerSpec::muon(),
        schedule: StepSchedule::Constant { eta: 0.02 },
        steps: 40,
        log_every: 10,
        mode: FinetuneMode::Full,
        lora: LoraSpec::default(),
        seed: 0,
    };
    let out = train(&model, &task, &run).unwrap();
    for (step, ckpt) in &out.checkpoints {
        let rec = out.records.iter().find(|r| r.step == *step).unwrap();
        let report = spectral_report(&ckpt.w1).unwrap();
        assert!((rec.w1_stable_rank.unwrap() - report.stable_rank).abs() <= 1e-10);
        assert!((rec.val_loss.unwrap() - task.val_loss(ckpt).unwrap()).abs() <= 1e-10);
    }
    let again = train(&model, &task, &run).unwrap();
    assert_eq!(out.to_csv_bytes().unwrap(), again.to_csv_bytes().unwrap());
}
