//! Built-in verification battery run by `hashreid selftest`.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::one_hot;
use crate::hamming::{distance_inner_product_check, hamming_distance, pack_codes, rank_gallery, RankedList};
use crate::losses::{batch_objective, quant_classification_value, LossWeights};
use crate::metrics::{average_precision, cmc_curve};
use crate::model::{backward, forward, ModelDims, ModelParams};
use crate::solver::{code_target, dcc_objective, dcc_sweep_with, solve_wh};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SelftestOptions {
    /// Corrupts one analytic gradient entry so the gradient group must fail.
    pub perturb_gradient: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        std * z
    })
}

fn random_signs(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 })
}

fn gradient_group(opts: SelftestOptions) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let weights = LossWeights {
        lambda: 1.0,
        sigma: 1.0,
        eta: 0.5,
        margin: 0.3,
    };
    for trial in 0..10 {
        let dims = ModelDims {
            input: rng.random_range(2..=8),
            feature: rng.random_range(2..=8),
            bits: rng.random_range(1..=6),
            classes: 2,
        };
        let mut params = ModelParams::init(dims, 1, &mut rng).map_err(|e| e.to_string())?;
        for buf in params.buffers_mut() {
            for v in buf.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = 0.5 * z;
            }
        }
        let labels = [0u32, 0, 1, 1];
        let x = gaussian(&mut rng, 4, dims.input, 1.0);
        let b = random_signs(&mut rng, 4, dims.bits);
        let objective = |p: &ModelParams| -> f64 {
            let t = forward(p, &x).expect("shapes fixed");
            batch_objective(&t.hash, &t.logits, &labels, &b, &weights)
                .expect("valid batch")
                .losses
                .total
        };
        let trace = forward(&params, &x).map_err(|e| e.to_string())?;
        let obj = batch_objective(&trace.hash, &trace.logits, &labels, &b, &weights).map_err(|e| e.to_string())?;
        let grads = backward(&params, &trace, &obj.grad_hash, &obj.grad_logits, None).map_err(|e| e.to_string())?;
        let mut analytic: Vec<Vec<f64>> = grads.buffers().iter().map(|g| g.to_vec()).collect();
        if opts.perturb_gradient {
            analytic[0][0] += 1e-2;
        }
        let step = 1e-5;
        for (bi, grad) in analytic.iter().enumerate() {
            for (j, &g) in grad.iter().enumerate() {
                let orig = params.buffers()[bi][j];
                params.buffers_mut()[bi][j] = orig + step;
                let up = objective(&params);
                params.buffers_mut()[bi][j] = orig - step;
                let down = objective(&params);
                params.buffers_mut()[bi][j] = orig;
                let numeric = (up - down) / (2.0 * step);
                let denom = g.abs().max(numeric.abs()).max(1e-8);
                let rel = (g - numeric).abs() / denom;
                if rel >= 1e-4 {
                    return Err(format!(
                        "trial {trial}, buffer {bi}, entry {j}: analytic {g} vs numeric {numeric} (rel {rel:.2e})"
                    ));
                }
            }
        }
    }
    Ok(())
}

fn solver_group() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for trial in 0..20 {
        let (k, n, c) = (6, 30, 4);
        let b = random_signs(&mut rng, k, n);
        let labels: Vec<u32> = (0..n).map(|_| rng.random_range(0..c as u32)).collect();
        let y = one_hot(&labels, c);
        let (mu, nu) = (1.0, 0.1);
        let w = solve_wh(&b, &y, mu, nu).map_err(|e| e.to_string())?;
        let grad = (&b * (b.transpose() * &w - &y)) * (2.0 * mu) + &w * (2.0 * nu);
        let bound = 1e-8 * (1.0 + (&b * &y).norm());
        if grad.norm() >= bound {
            return Err(format!("trial {trial}: stationarity residual {:.3e}", grad.norm()));
        }
    }
    let b = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, -1.0, 1.0]);
    let y = DMatrix::identity(2, 2);
    let w = solve_wh(&b, &y, 1.0, 0.0).map_err(|e| e.to_string())?;
    let v = quant_classification_value(&b, &y, &w, 1.0, 0.0).map_err(|e| e.to_string())?;
    if v > 1e-24 {
        return Err(format!("orthogonal fixture leaves residual {v:e}"));
    }
    Ok(())
}

fn row_is_optimal(w: &DMatrix<f64>, target: &DMatrix<f64>, b: &DMatrix<f64>, row: usize) -> bool {
    let n = b.ncols();
    let best = dcc_objective(w, target, b);
    let mut alt = b.clone();
    (0u32..(1 << n)).all(|mask| {
        for i in 0..n {
            alt[(row, i)] = if mask >> i & 1 == 1 { 1.0 } else { -1.0 };
        }
        dcc_objective(w, target, &alt) >= best - 1e-9 * (1.0 + best.abs())
    })
}

fn dcc_group() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for trial in 0..20 {
        let (k, n, c) = (3, 8, 2);
        let w = gaussian(&mut rng, k, c, 1.0);
        let labels: Vec<u32> = (0..n).map(|_| rng.random_range(0..c as u32)).collect();
        let y = one_hot(&labels, c);
        let h = gaussian(&mut rng, k, n, 1.0);
        let target = code_target(&w, &y, &h, 1.0, 0.5).map_err(|e| e.to_string())?;
        let mut b = random_signs(&mut rng, k, n);
        let mut last = dcc_objective(&w, &target, &b);
        let mut failure = None;
        dcc_sweep_with(&w, &target, &mut b, |row, cur| {
            let v = dcc_objective(&w, &target, cur);
            if failure.is_none() && v > last + 1e-9 * (1.0 + last.abs()) {
                failure = Some(format!("trial {trial}: objective rose at row {row}"));
            }
            // The updated row must beat every alternative with the other rows as they are now.
            if failure.is_none() && !row_is_optimal(&w, &target, cur, row) {
                failure = Some(format!("trial {trial}: row {row} is not optimal"));
            }
            last = v;
        })
        .map_err(|e| e.to_string())?;
        if let Some(msg) = failure {
            return Err(msg);
        }
    }
    Ok(())
}

fn hamming_group() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for &k in &[1usize, 63, 64, 65, 256] {
        for _ in 0..100 {
            let a: Vec<i8> = (0..k).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
            let b: Vec<i8> = (0..k).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
            let (d, dot) = distance_inner_product_check(&a, &b).map_err(|e| e.to_string())?;
            if 2 * d as i64 != k as i64 - dot {
                return Err(format!("K={k}: d={d}, dot={dot}"));
            }
            let mut flat = a.clone();
            flat.extend_from_slice(&b);
            let packed = pack_codes(&flat, k, vec![0, 1]).map_err(|e| e.to_string())?;
            if hamming_distance(packed.item(0), packed.item(1)) != d {
                return Err(format!("K={k}: packed distance differs from direct count"));
            }
            if packed.unpack() != flat {
                return Err(format!("K={k}: pack/unpack round trip failed"));
            }
        }
    }
    let gallery = pack_codes(&[1, 1, -1, -1, 1, -1, 1, 1, -1], 3, vec![0, 1, 2]).map_err(|e| e.to_string())?;
    let query = pack_codes(&[1, 1, -1], 3, vec![0]).map_err(|e| e.to_string())?;
    // distances 0, 3, 1 -> order 0, 2, 1
    let r = rank_gallery(query.item(0), &gallery, None).map_err(|e| e.to_string())?;
    if r.indices != [0, 2, 1] {
        return Err(format!("ranking fixture gave {:?}", r.indices));
    }
    Ok(())
}

fn metrics_group() -> Result<(), String> {
    let three = RankedList::<u32> {
        query_index: 0,
        indices: vec![0, 1, 2],
        distances: vec![0, 1, 2],
    };
    let ap = average_precision(&three, 1, &[1, 0, 1]).ok_or("fixture skipped")?;
    if (ap - 5.0 / 6.0).abs() > 1e-12 {
        return Err(format!("AP fixture gave {ap}"));
    }
    let a = RankedList::<u32> {
        query_index: 0,
        indices: vec![0, 1, 2],
        distances: vec![0; 3],
    };
    let b = RankedList::<u32> {
        query_index: 1,
        indices: vec![1, 0, 2],
        distances: vec![0; 3],
    };
    let curve = cmc_curve(&[a, b], &[5, 6], &[5, 9, 6], 3);
    if curve != [0.5, 0.5, 1.0] {
        return Err(format!("CMC fixture gave {curve:?}"));
    }

    // Single relevant item among n, random order: E[AP] = H_n / n.
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let n = 20;
    let trials = 4000;
    let mut labels = vec![0u32; n];
    labels[0] = 1;
    let mut order: Vec<usize> = (0..n).collect();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..trials {
        order.shuffle(&mut rng);
        let list = RankedList::<u32> {
            query_index: 0,
            indices: order.clone(),
            distances: vec![0; n],
        };
        let ap = average_precision(&list, 1, &labels).ok_or("no relevant item")?;
        sum += ap;
        sum_sq += ap * ap;
    }
    let mean = sum / trials as f64;
    let var = sum_sq / trials as f64 - mean * mean;
    let se = (var / trials as f64).sqrt();
    let expected = (1..=n).map(|i| 1.0 / i as f64).sum::<f64>() / n as f64;
    if (mean - expected).abs() > 3.0 * se {
        return Err(format!("random-ranking mAP {mean:.4} vs expected {expected:.4} (se {se:.4})"));
    }
    Ok(())
}

type Group = (&'static str, Box<dyn Fn() -> Result<(), String>>);

/// Runs every group and returns one result per group.
pub fn run(opts: SelftestOptions) -> Vec<GroupResult> {
    let groups: [Group; 5] = [
        ("gradient", Box::new(move || gradient_group(opts))),
        ("solver", Box::new(solver_group)),
        ("dcc", Box::new(dcc_group)),
        ("hamming", Box::new(hamming_group)),
        ("metrics", Box::new(metrics_group)),
    ];
    groups
        .into_iter()
        .map(|(name, f)| match f() {
            Ok(()) => GroupResult {
                name,
                passed: true,
                detail: String::new(),
            },
            Err(detail) => GroupResult {
                name,
                passed: false,
                detail,
            },
        })
        .collect()
}
