//! Loss values and their upstream gradients.
//!
//! All batch losses are mean-reduced over the rows of the batch.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

/// Loss terms of the network subproblem and the coefficients that weight them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossBundle {
    pub triplet: f64,
    pub identity: f64,
    pub quant_coupling: f64,
    pub total: f64,
    pub lambda: f64,
    pub sigma: f64,
    pub eta: f64,
}

impl LossBundle {
    pub fn new(triplet: f64, identity: f64, quant_coupling: f64, lambda: f64, sigma: f64, eta: f64) -> Self {
        Self {
            triplet,
            identity,
            quant_coupling,
            total: lambda * triplet + sigma * identity + eta * quant_coupling,
            lambda,
            sigma,
            eta,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.triplet.is_finite() && self.identity.is_finite() && self.quant_coupling.is_finite()
    }
}

/// Weights of the three network-side terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda: f64,
    pub sigma: f64,
    pub eta: f64,
    pub margin: f64,
}

fn euclidean(h: &DMatrix<f64>, a: usize, b: usize) -> f64 {
    h.row(a)
        .iter()
        .zip(h.row(b).iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Batch-hard triplet loss on Euclidean distances between rows of `h`.
///
/// For each anchor, the hardest positive is the farthest other row with the
/// same label and the hardest negative the closest row with a different label.
/// Each anchor contributes `max(0, margin + d_pos - d_neg)`; ties pick the
/// lowest row index.
pub fn batch_hard_triplet(h: &DMatrix<f64>, labels: &[u32], margin: f64) -> Result<(f64, DMatrix<f64>)> {
    let n = h.nrows();
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} rows", labels.len())));
    }
    if margin.is_nan() || margin < 0.0 {
        return Err(Error::Validation(format!("margin must be non-negative, got {margin}")));
    }
    let mut counts = std::collections::BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_insert(0usize) += 1;
    }
    if counts.len() < 2 {
        return Err(Error::Contract("batch-hard triplet needs at least two labels".into()));
    }
    if let Some((l, _)) = counts.iter().find(|(_, &c)| c < 2) {
        return Err(Error::Contract(format!(
            "label {l} has a single row in the batch; every anchor needs a positive"
        )));
    }

    let mut dist = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = euclidean(h, i, j);
            dist[(i, j)] = d;
            dist[(j, i)] = d;
        }
    }

    let scale = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut grad = DMatrix::zeros(n, h.ncols());
    for a in 0..n {
        let mut pos = None;
        let mut neg = None;
        for j in 0..n {
            if j == a {
                continue;
            }
            let d = dist[(a, j)];
            if labels[j] == labels[a] {
                if pos.is_none_or(|(_, best)| d > best) {
                    pos = Some((j, d));
                }
            } else if neg.is_none_or(|(_, best)| d < best) {
                neg = Some((j, d));
            }
        }
        let (p, dp) = pos.expect("label count checked");
        let (q, dn) = neg.expect("two labels checked");
        let term = margin + dp - dn;
        if term <= 0.0 {
            continue;
        }
        loss += term;
        // d/dh_a ||h_a - h_j|| = (h_a - h_j) / ||h_a - h_j||; zero subgradient at coincidence.
        if dp > 0.0 {
            for k in 0..h.ncols() {
                let g = scale * (h[(a, k)] - h[(p, k)]) / dp;
                grad[(a, k)] += g;
                grad[(p, k)] -= g;
            }
        }
        if dn > 0.0 {
            for k in 0..h.ncols() {
                let g = scale * (h[(a, k)] - h[(q, k)]) / dn;
                grad[(a, k)] -= g;
                grad[(q, k)] += g;
            }
        }
    }
    Ok((loss * scale, grad))
}

/// Mean softmax cross-entropy with max subtraction; gradient `(softmax - onehot) / batch`.
pub fn identity_loss(logits: &DMatrix<f64>, labels: &[u32]) -> Result<(f64, DMatrix<f64>)> {
    let (n, c) = logits.shape();
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} logit rows", labels.len())));
    }
    if let Some(&l) = labels.iter().find(|&&l| l as usize >= c) {
        return Err(Error::Shape(format!("label {l} out of range for {c} classes")));
    }
    let scale = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut grad = DMatrix::zeros(n, c);
    for i in 0..n {
        let row = logits.row(i);
        let max = row.max();
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_sum = sum.ln();
        let y = labels[i] as usize;
        loss += log_sum - (logits[(i, y)] - max);
        for j in 0..c {
            let p = (logits[(i, j)] - max - log_sum).exp();
            grad[(i, j)] = scale * (p - if j == y { 1.0 } else { 0.0 });
        }
    }
    Ok((loss * scale, grad))
}

pub(crate) fn check_binary(b: &DMatrix<f64>) -> Result<()> {
    if let Some(v) = b.iter().find(|&&v| v != 1.0 && v != -1.0) {
        return Err(Error::Validation(format!("code entries must be +1 or -1, found {v}")));
    }
    Ok(())
}

/// Mean over rows of `||b_i - h_i||^2`; gradient `2 (h - b) / batch`.
pub fn quant_coupling(h: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
    if h.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "hash is {:?} but codes are {:?}",
            h.shape(),
            b.shape()
        )));
    }
    check_binary(b)?;
    let scale = 1.0 / h.nrows() as f64;
    let diff = h - b;
    Ok((diff.norm_squared() * scale, diff * (2.0 * scale)))
}

/// `mu * ||Y - B^T W_h||_F^2 + nu * ||W_h||_F^2` for codes `B` (`K x N`),
/// one-hot targets `Y` (`N x C`) and classifier `W_h` (`K x C`).
pub fn quant_classification_value(
    codes: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    classifier: &DMatrix<f64>,
    mu: f64,
    nu: f64,
) -> Result<f64> {
    let (k, n) = codes.shape();
    if targets.nrows() != n || classifier.nrows() != k || classifier.ncols() != targets.ncols() {
        return Err(Error::Shape(format!(
            "codes {:?}, targets {:?} and classifier {:?} are incompatible",
            codes.shape(),
            targets.shape(),
            classifier.shape()
        )));
    }
    check_binary(codes)?;
    let residual = targets - codes.transpose() * classifier;
    Ok(mu * residual.norm_squared() + nu * classifier.norm_squared())
}

/// Upstream gradients for one batch of the network subproblem.
#[derive(Debug, Clone)]
pub struct BatchObjective {
    pub losses: LossBundle,
    pub grad_hash: DMatrix<f64>,
    pub grad_logits: DMatrix<f64>,
}

/// `lambda * triplet(h) + sigma * identity(logits) + eta * coupling(h, b)`.
pub fn batch_objective(
    hash: &DMatrix<f64>,
    logits: &DMatrix<f64>,
    labels: &[u32],
    codes: &DMatrix<f64>,
    w: &LossWeights,
) -> Result<BatchObjective> {
    let (triplet, g_trip) = batch_hard_triplet(hash, labels, w.margin)?;
    let (identity, g_id) = identity_loss(logits, labels)?;
    let (coupling, g_quant) = quant_coupling(hash, codes)?;
    Ok(BatchObjective {
        losses: LossBundle::new(triplet, identity, coupling, w.lambda, w.sigma, w.eta),
        grad_hash: g_trip * w.lambda + g_quant * w.eta,
        grad_logits: g_id * w.sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn inactive_hinge() {
        let h = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 0.0, 10.0, 0.0, 11.0, 0.0]);
        let (loss, grad) = batch_hard_triplet(&h, &[0, 0, 1, 1], 0.3).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn single_row_label_is_contract_violation() {
        let h = DMatrix::zeros(3, 2);
        assert!(matches!(
            batch_hard_triplet(&h, &[0, 0, 1], 0.3),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn uniform_softmax() {
        let (loss, grad) = identity_loss(&DMatrix::zeros(3, 2), &[0, 1, 0]).unwrap();
        assert!(close(loss, std::f64::consts::LN_2, 1e-15));
        for r in grad.row_iter() {
            assert!(r.sum().abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_is_stable() {
        let logits = DMatrix::from_row_slice(1, 2, &[1000.0, 0.0]);
        let (loss, grad) = identity_loss(&logits, &[0]).unwrap();
        assert!(loss.is_finite() && loss < 1e-300);
        assert!(grad.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn coupling_direct_expansion() {
        let h = DMatrix::from_row_slice(1, 2, &[0.0, 0.0]);
        let b = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let (loss, grad) = quant_coupling(&h, &b).unwrap();
        assert_eq!(loss, 2.0);
        assert_eq!(grad.as_slice(), &[-2.0, 2.0]);
        let (zero, g0) = quant_coupling(&b, &b).unwrap();
        assert_eq!(zero, 0.0);
        assert!(g0.iter().all(|&g| g == 0.0));
        assert!(matches!(
            quant_coupling(&h, &DMatrix::from_row_slice(1, 2, &[1.0, 0.5])),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn classification_value_with_zero_classifier() {
        let b = DMatrix::from_row_slice(2, 3, &[1.0, -1.0, 1.0, 1.0, 1.0, -1.0]);
        let y = crate::dataset::one_hot(&[0, 1, 0], 2);
        let v = quant_classification_value(&b, &y, &DMatrix::zeros(2, 2), 1.0, 0.0).unwrap();
        assert_eq!(v, 3.0);
    }

    #[test]
    fn bundle_total() {
        let b = LossBundle::new(0.5, 2.0, 3.0, 1.0, 0.5, 0.1);
        assert!((b.total - (0.5 + 1.0 + 0.3)).abs() < 1e-12);
    }
}
