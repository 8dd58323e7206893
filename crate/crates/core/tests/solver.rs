use hashreid::dataset::{generate_synthetic, one_hot};
use hashreid::losses::quant_classification_value;
use hashreid::model::sign_matrix;
use hashreid::solver::{
    code_target, dcc_objective, dcc_update_b, format_history, solve_wh, train, TrainConfig, Trainer,
};
use hashreid::Error;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn signs(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 })
}

fn normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn random_targets(rng: &mut ChaCha8Rng, n: usize, c: usize) -> DMatrix<f64> {
    let labels: Vec<u32> = (0..n).map(|_| rng.random_range(0..c as u32)).collect();
    one_hot(&labels, c)
}

#[test]
fn closed_form_is_stationary() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..100 {
        let b = signs(&mut rng, 6, 30);
        let y = random_targets(&mut rng, 30, 4);
        let (mu, nu) = (1.0, 0.1);
        let w = solve_wh(&b, &y, mu, nu).unwrap();
        let grad = (&b * (b.transpose() * &w - &y)) * (2.0 * mu) + &w * (2.0 * nu);
        assert!(grad.norm() < 1e-8 * (1.0 + (&b * &y).norm()));
    }
}

#[test]
fn closed_form_beats_random_perturbations() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let b = signs(&mut rng, 6, 30);
    let y = random_targets(&mut rng, 30, 4);
    let w = solve_wh(&b, &y, 1.0, 0.1).unwrap();
    let best = quant_classification_value(&b, &y, &w, 1.0, 0.1).unwrap();
    for i in 0..100 {
        let scale = 10f64.powi(-(i % 6));
        let delta = normal(&mut rng, 6, 4) * scale;
        let v = quant_classification_value(&b, &y, &(&w + delta), 1.0, 0.1).unwrap();
        assert!(v >= best, "perturbation {i} lowered the value");
    }
}

#[test]
fn closed_form_agrees_with_a_generic_solver() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let b = signs(&mut rng, 5, 17);
    let y = random_targets(&mut rng, 17, 3);
    let (mu, nu) = (2.0, 0.3);
    let a = &b * b.transpose() + DMatrix::identity(5, 5) * (nu / mu);
    let want = a.lu().solve(&(&b * &y)).unwrap();
    let got = solve_wh(&b, &y, mu, nu).unwrap();
    assert!((got - want).abs().max() < 1e-12);
}

#[test]
fn ridge_halves_the_orthogonal_solution() {
    let b = DMatrix::from_column_slice(2, 2, &[1.0, -1.0, 1.0, 1.0]);
    let y = DMatrix::identity(2, 2);
    let plain = solve_wh(&b, &y, 1.0, 0.0).unwrap();
    assert_eq!(b.transpose() * &plain, y);
    let ridged = solve_wh(&b, &y, 1.0, 2.0).unwrap();
    assert!((ridged * 2.0 - plain).abs().max() < 1e-15);
}

#[test]
fn singular_without_ridge() {
    let b = DMatrix::from_element(2, 3, 1.0);
    let y = DMatrix::identity(3, 3);
    assert!(matches!(solve_wh(&b, &y, 1.0, 0.0), Err(Error::Singular(_))));
    assert!(solve_wh(&b, &y, 1.0, 0.1).is_ok());
    assert!(solve_wh(&b, &y, 0.0, 0.1).is_err());
}

#[test]
fn single_bit_sweep_is_the_sign_of_the_target() {
    // K = 1: no coupling rows, so the update is sign(P) with P = (eta/mu) H when W_h = 0.
    let w = DMatrix::zeros(1, 2);
    let y = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
    let h = DMatrix::from_row_slice(1, 3, &[0.5, -0.2, 0.0]);
    let b = DMatrix::from_element(1, 3, -1.0);
    let out = dcc_update_b(&w, &y, &h, 1.0, 1.0, &b).unwrap();
    assert_eq!(out, DMatrix::from_row_slice(1, 3, &[1.0, -1.0, 1.0]));
}

#[test]
fn sweep_leaves_fixed_points_alone() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..20 {
        let w = normal(&mut rng, 4, 3);
        let y = random_targets(&mut rng, 9, 3);
        let h = normal(&mut rng, 4, 9);
        let mut b = signs(&mut rng, 4, 9);
        for _ in 0..100 {
            let next = dcc_update_b(&w, &y, &h, 1.0, 0.5, &b).unwrap();
            if next == b {
                break;
            }
            b = next;
        }
        assert_eq!(dcc_update_b(&w, &y, &h, 1.0, 0.5, &b).unwrap(), b);
    }
}

#[test]
fn sweep_never_raises_the_code_objective() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    for _ in 0..50 {
        let w = normal(&mut rng, 8, 5);
        let y = random_targets(&mut rng, 40, 5);
        let h = normal(&mut rng, 8, 40);
        let b = signs(&mut rng, 8, 40);
        let p = code_target(&w, &y, &h, 1.0, 0.1).unwrap();
        let after = dcc_update_b(&w, &y, &h, 1.0, 0.1, &b).unwrap();
        assert!(dcc_objective(&w, &p, &after) <= dcc_objective(&w, &p, &b) + 1e-9);
    }
}

fn tiny_config() -> TrainConfig {
    TrainConfig {
        bits: 8,
        p: 3,
        k1: 2,
        inner_iters: 5,
        outer_iters: 3,
        seed: 4,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_iterations_return_the_initial_state() {
    let data = generate_synthetic(4, 5, 6, 0.2, 1).unwrap();
    let cfg = TrainConfig {
        outer_iters: 0,
        ..tiny_config()
    };
    let trainer = Trainer::new(&data, cfg.clone()).unwrap();
    let init_params = trainer.state().params.clone();
    let h0 = trainer.state().hash_cache.clone();
    let out = train(&data, &cfg).unwrap();
    assert!(out.history.is_empty());
    assert_eq!(out.params, init_params);
    assert_eq!(out.codes, sign_matrix(&h0));
    assert_eq!(out.classifier, DMatrix::zeros(8, 4));
}

#[test]
fn training_is_deterministic() {
    let data = generate_synthetic(4, 5, 6, 0.2, 1).unwrap();
    let a = train(&data, &tiny_config()).unwrap();
    let b = train(&data, &tiny_config()).unwrap();
    assert_eq!(format_history(&a.history), format_history(&b.history));
    assert_eq!(a.params, b.params);
    assert_eq!(a.codes, b.codes);
    let other = train(
        &data,
        &TrainConfig {
            seed: 5,
            ..tiny_config()
        },
    )
    .unwrap();
    assert_ne!(a.params, other.params);
}

#[test]
fn coupling_only_alternation_closes_the_code_gap() {
    let data = generate_synthetic(3, 4, 5, 0.2, 6).unwrap();
    let cfg = TrainConfig {
        bits: 6,
        lambda: 0.0,
        sigma: 0.0,
        eta: 1.0,
        lr: 1e-2,
        weight_decay: 0.0,
        inner_iters: 10,
        outer_iters: 15,
        full_batch: true,
        converge_patience: 0,
        ..TrainConfig::default()
    };
    let out = train(&data, &cfg).unwrap();
    let gaps: Vec<f64> = out.history.iter().map(|r| r.code_gap).collect();
    assert_eq!(gaps.len(), 15);
    for pair in gaps.windows(2) {
        assert!(pair[1] < pair[0], "{gaps:?}");
    }
}

#[test]
fn history_has_one_line_per_iteration() {
    let data = generate_synthetic(4, 5, 6, 0.2, 1).unwrap();
    let out = train(&data, &tiny_config()).unwrap();
    let text = format_history(&out.history);
    assert_eq!(text.lines().count(), out.history.len());
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split(' ').collect();
        assert_eq!(fields.len(), 6);
        assert_eq!(fields[0], (i + 1).to_string());
    }
}

#[test]
fn codes_stay_binary_and_classifier_finite() {
    let data = generate_synthetic(4, 5, 6, 0.2, 1).unwrap();
    let out = train(&data, &tiny_config()).unwrap();
    assert!(out.codes.iter().all(|&v| v == 1.0 || v == -1.0));
    assert!(out.classifier.iter().all(|v| v.is_finite()));
    assert_eq!(out.codes.shape(), (8, 20));
}
