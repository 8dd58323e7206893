//! Alternating optimization of the network, the code classifier `W_h` and
//! the binary code matrix `B`.
//!
//! One outer iteration runs `inner_iters` AMSGrad steps on
//! `lambda * triplet(h) + sigma * identity(logits) + eta * mean ||b - h||^2`
//! with `B` frozen, recomputes `H` over the training set, solves
//! `min_W mu ||Y - B^T W||^2 + nu ||W||^2` in closed form, and finally runs
//! discrete cyclic coordinate descent over the rows of `B` on
//!
//! ```text
//! ||W_h^T B||^2 - 2 tr(P^T B),   P = W_h Y^T + (eta / mu) H
//! ```
//!
//! which is `mu ||Y^T - W_h^T B||^2 + eta ||B - H||^2` divided by `mu` with
//! the constant terms dropped (`||B||^2 = K N` for any binary `B`).

use std::fmt;
use std::str::FromStr;

use log::{debug, info};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dataset::{Batch, EmbeddingSet, PkSampler, SamplerConfig};
use crate::error::{Error, Result};
use crate::losses::{batch_objective, check_binary, quant_classification_value, LossBundle, LossWeights};
use crate::model::{backward, forward, sign_matrix, ModelDims, ModelParams};
use crate::optimizer::{AmsGrad, AmsGradConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub bits: usize,
    pub alpha: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub lambda: f64,
    pub sigma: f64,
    pub mu: f64,
    pub nu: f64,
    pub eta: f64,
    /// Identities per batch.
    pub p: usize,
    /// Instances per identity.
    pub k1: usize,
    pub inner_iters: usize,
    pub outer_iters: usize,
    pub seed: u64,
    pub adapter_depth: usize,
    /// Adapter output width `M'`; 0 means "same as the input width".
    pub adapter_width: usize,
    pub dcc_sweeps: usize,
    /// Use every training row in every inner step instead of sampled batches.
    pub full_batch: bool,
    /// Stop once the relative change of the mean network loss stays below
    /// this for `converge_patience` consecutive outer iterations.
    pub converge_tol: f64,
    pub converge_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            bits: 64,
            alpha: 0.3,
            lr: 3e-4,
            weight_decay: 5e-4,
            beta1: 0.9,
            beta2: 0.99,
            lambda: 1.0,
            sigma: 1.0,
            mu: 1.0,
            nu: 0.1,
            eta: 0.1,
            p: 16,
            k1: 6,
            inner_iters: 100,
            outer_iters: 10,
            seed: 0,
            adapter_depth: 1,
            adapter_width: 0,
            dcc_sweeps: 1,
            full_batch: false,
            converge_tol: 1e-5,
            converge_patience: 3,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Validation(format!("bad value {value:?} for config key {key}")))
}

impl TrainConfig {
    pub const KEYS: &'static [&'static str] = &[
        "bits",
        "alpha",
        "lr",
        "weight_decay",
        "beta1",
        "beta2",
        "lambda",
        "sigma",
        "mu",
        "nu",
        "eta",
        "p",
        "k1",
        "inner_iters",
        "outer_iters",
        "seed",
        "adapter_depth",
        "adapter_width",
        "dcc_sweeps",
        "full_batch",
        "converge_tol",
        "converge_patience",
    ];

    /// Sets one field by its key name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "bits" => self.bits = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "beta1" => self.beta1 = parse(key, value)?,
            "beta2" => self.beta2 = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "sigma" => self.sigma = parse(key, value)?,
            "mu" => self.mu = parse(key, value)?,
            "nu" => self.nu = parse(key, value)?,
            "eta" => self.eta = parse(key, value)?,
            "p" => self.p = parse(key, value)?,
            "k1" => self.k1 = parse(key, value)?,
            "inner_iters" => self.inner_iters = parse(key, value)?,
            "outer_iters" => self.outer_iters = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "adapter_depth" => self.adapter_depth = parse(key, value)?,
            "adapter_width" => self.adapter_width = parse(key, value)?,
            "dcc_sweeps" => self.dcc_sweeps = parse(key, value)?,
            "full_batch" => self.full_batch = parse(key, value)?,
            "converge_tol" => self.converge_tol = parse(key, value)?,
            "converge_patience" => self.converge_patience = parse(key, value)?,
            _ => return Err(Error::Validation(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` document on top of `self`.
    ///
    /// Blank lines and lines starting with `#` are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Validation(format!("config line {}: expected `key = value`", i + 1))
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let coeffs = [
            ("alpha", self.alpha),
            ("lr", self.lr),
            ("weight_decay", self.weight_decay),
            ("lambda", self.lambda),
            ("sigma", self.sigma),
            ("nu", self.nu),
            ("eta", self.eta),
            ("converge_tol", self.converge_tol),
        ];
        for (name, v) in coeffs {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Validation(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(Error::Validation(format!("mu must be > 0, got {}", self.mu)));
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Validation(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        if self.bits == 0 {
            return Err(Error::Validation("bits must be at least 1".into()));
        }
        if !self.full_batch {
            self.sampler().validate()?;
        }
        Ok(())
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            num_identities: self.p,
            instances_per_identity: self.k1,
            // Independent stream from the parameter initializer.
            seed: self.seed ^ 0x5DEE_CE66_D1CE_5EED,
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            lambda: self.lambda,
            sigma: self.sigma,
            eta: self.eta,
            margin: self.alpha,
        }
    }

    pub fn optimizer(&self) -> AmsGradConfig {
        AmsGradConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: 1e-8,
            weight_decay: self.weight_decay,
        }
    }
}

impl fmt::Display for TrainConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "bits = {}", self.bits)?;
        writeln!(f, "alpha = {}", self.alpha)?;
        writeln!(f, "lr = {}", self.lr)?;
        writeln!(f, "weight_decay = {}", self.weight_decay)?;
        writeln!(f, "beta1 = {}", self.beta1)?;
        writeln!(f, "beta2 = {}", self.beta2)?;
        writeln!(f, "lambda = {}", self.lambda)?;
        writeln!(f, "sigma = {}", self.sigma)?;
        writeln!(f, "mu = {}", self.mu)?;
        writeln!(f, "nu = {}", self.nu)?;
        writeln!(f, "eta = {}", self.eta)?;
        writeln!(f, "p = {}", self.p)?;
        writeln!(f, "k1 = {}", self.k1)?;
        writeln!(f, "inner_iters = {}", self.inner_iters)?;
        writeln!(f, "outer_iters = {}", self.outer_iters)?;
        writeln!(f, "seed = {}", self.seed)?;
        writeln!(f, "adapter_depth = {}", self.adapter_depth)?;
        writeln!(f, "adapter_width = {}", self.adapter_width)?;
        writeln!(f, "dcc_sweeps = {}", self.dcc_sweeps)?;
        writeln!(f, "full_batch = {}", self.full_batch)?;
        writeln!(f, "converge_tol = {}", self.converge_tol)?;
        writeln!(f, "converge_patience = {}", self.converge_patience)
    }
}

/// Closed-form minimizer of `mu ||Y - B^T W||_F^2 + nu ||W||_F^2` over `W`.
///
/// `codes` is `K x N` with entries in `{-1, +1}`, `targets` is the `N x C`
/// one-hot matrix. Solves `(B B^T + (nu / mu) I) W = B Y` by Cholesky with
/// one round of iterative refinement.
pub fn solve_wh(codes: &DMatrix<f64>, targets: &DMatrix<f64>, mu: f64, nu: f64) -> Result<DMatrix<f64>> {
    if !(mu > 0.0 && mu.is_finite()) || !(nu >= 0.0 && nu.is_finite()) {
        return Err(Error::Validation(format!("need mu > 0 and nu >= 0, got mu={mu}, nu={nu}")));
    }
    let (k, n) = codes.shape();
    if targets.nrows() != n {
        return Err(Error::Shape(format!(
            "codes cover {n} items but targets have {} rows",
            targets.nrows()
        )));
    }
    check_binary(codes)?;
    let mut gram = codes * codes.transpose();
    for i in 0..k {
        gram[(i, i)] += nu / mu;
    }
    let rhs = codes * targets;

    let singular = || {
        Error::Singular(format!(
            "B B^T + (nu/mu) I is singular for K={k}, N={n}, nu={nu}; use nu > 0"
        ))
    };
    let chol = gram.clone().cholesky().ok_or_else(singular)?;
    let max_diag = (0..k).map(|i| gram[(i, i)]).fold(0.0f64, f64::max);
    let l = chol.l();
    let min_pivot = (0..k).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    if min_pivot.partial_cmp(&(1e-10 * max_diag)) != Some(std::cmp::Ordering::Greater) {
        return Err(singular());
    }
    let mut w = chol.solve(&rhs);
    let residual = &rhs - &gram * &w;
    w += chol.solve(&residual);
    Ok(w)
}

/// `P = W_h Y^T + (eta / mu) H`, the `K x N` linear term of the code objective.
pub fn code_target(
    classifier: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    hash: &DMatrix<f64>,
    mu: f64,
    eta: f64,
) -> Result<DMatrix<f64>> {
    let (k, c) = classifier.shape();
    let n = targets.nrows();
    if targets.ncols() != c || hash.shape() != (k, n) {
        return Err(Error::Shape(format!(
            "classifier {:?}, targets {:?} and hash {:?} are incompatible",
            classifier.shape(),
            targets.shape(),
            hash.shape()
        )));
    }
    Ok(classifier * targets.transpose() + hash * (eta / mu))
}

/// `||W_h^T B||_F^2 - 2 tr(P^T B)`.
pub fn dcc_objective(classifier: &DMatrix<f64>, target: &DMatrix<f64>, codes: &DMatrix<f64>) -> f64 {
    (classifier.transpose() * codes).norm_squared() - 2.0 * target.dot(codes)
}

/// One cyclic sweep over the rows of `codes`, each row set to its exact
/// minimizer with the other rows fixed.
///
/// `on_row` is called after every row update with the row index and the
/// current code matrix.
pub fn dcc_sweep_with<F>(
    classifier: &DMatrix<f64>,
    target: &DMatrix<f64>,
    codes: &mut DMatrix<f64>,
    mut on_row: F,
) -> Result<()>
where
    F: FnMut(usize, &DMatrix<f64>),
{
    let (k, n) = codes.shape();
    if classifier.nrows() != k || target.shape() != (k, n) {
        return Err(Error::Shape(format!(
            "codes {:?}, classifier {:?} and target {:?} are incompatible",
            codes.shape(),
            classifier.shape(),
            target.shape()
        )));
    }
    check_binary(codes)?;
    let coupling = classifier * classifier.transpose();
    for row in 0..k {
        for i in 0..n {
            let mut s = target[(row, i)];
            for j in 0..k {
                if j != row {
                    s -= coupling[(row, j)] * codes[(j, i)];
                }
            }
            codes[(row, i)] = if s >= 0.0 { 1.0 } else { -1.0 };
        }
        on_row(row, codes);
    }
    Ok(())
}

/// One DCC sweep over `B` given `W_h` (`K x C`), one-hot targets (`N x C`)
/// and continuous hash vectors `H` (`K x N`).
pub fn dcc_update_b(
    classifier: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    hash: &DMatrix<f64>,
    mu: f64,
    eta: f64,
    codes: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if mu.is_nan() || mu <= 0.0 {
        return Err(Error::Validation(format!("mu must be > 0, got {mu}")));
    }
    let target = code_target(classifier, targets, hash, mu, eta)?;
    let mut out = codes.clone();
    dcc_sweep_with(classifier, &target, &mut out, |_, _| {})?;
    Ok(out)
}

/// Per-outer-iteration training record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OuterRecord {
    pub iteration: usize,
    /// Mean of the inner-step batch losses.
    pub losses: LossBundle,
    /// Mean `||b_i - h_i||^2` over the training set after the network phase.
    pub code_gap: f64,
    pub classification_before_wh: f64,
    pub classification_after_wh: f64,
    pub classification_after_b: f64,
    /// Code objective at the start and end of the B phase.
    pub dcc_before: f64,
    pub dcc_after: f64,
}

/// Everything the alternating loop carries between outer iterations.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub params: ModelParams,
    pub optim: AmsGrad,
    /// `K x N` codes of the training rows.
    pub codes: DMatrix<f64>,
    /// `K x C`
    pub classifier: DMatrix<f64>,
    /// `K x N` continuous hash vectors from the latest full pass.
    pub hash_cache: DMatrix<f64>,
    pub history: Vec<OuterRecord>,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: ModelParams,
    pub classifier: DMatrix<f64>,
    pub codes: DMatrix<f64>,
    pub history: Vec<OuterRecord>,
}

/// Stateful driver of the alternating loop over one training set.
pub struct Trainer<'a> {
    data: &'a EmbeddingSet,
    cfg: TrainConfig,
    rows: DMatrix<f64>,
    targets: DMatrix<f64>,
    sampler: Option<PkSampler>,
    state: TrainState,
    stall: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(data: &'a EmbeddingSet, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let dims = ModelDims {
            input: data.dim(),
            feature: if cfg.adapter_depth == 0 || cfg.adapter_width == 0 {
                data.dim()
            } else {
                cfg.adapter_width
            },
            bits: cfg.bits,
            classes: data.num_ids(),
        };
        let params = ModelParams::init(dims, cfg.adapter_depth, &mut rng)?;
        let sampler = if cfg.full_batch {
            if data.rows_by_identity().iter().any(|r| r.len() < 2) || data.num_ids() < 2 {
                return Err(Error::Validation(
                    "full-batch training needs at least two identities with two rows each".into(),
                ));
            }
            None
        } else {
            Some(PkSampler::new(data, cfg.sampler())?)
        };
        let rows = data.matrix();
        let hash_cache = forward(&params, &rows)?.hash.transpose();
        let codes = sign_matrix(&hash_cache);
        let optim = AmsGrad::for_model(cfg.optimizer(), &params);
        Ok(Self {
            data,
            targets: data.one_hot(),
            rows,
            sampler,
            state: TrainState {
                params,
                optim,
                classifier: DMatrix::zeros(cfg.bits, data.num_ids()),
                codes,
                hash_cache,
                history: Vec::new(),
            },
            cfg,
            stall: 0,
        })
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    fn next_batch(&mut self) -> Result<Batch> {
        match &mut self.sampler {
            Some(s) => s.next_batch(),
            None => Ok(Batch {
                row_indices: (0..self.data.len()).collect(),
                labels: self.data.labels().to_vec(),
            }),
        }
    }

    fn network_phase(&mut self, outer: usize) -> Result<LossBundle> {
        let weights = self.cfg.loss_weights();
        let mut sums = [0.0f64; 3];
        for inner in 0..self.cfg.inner_iters {
            let batch = self.next_batch()?;
            let x = self.data.gather(&batch.row_indices);
            let b = DMatrix::from_fn(batch.row_indices.len(), self.cfg.bits, |r, c| {
                self.state.codes[(c, batch.row_indices[r])]
            });
            let trace = forward(&self.state.params, &x)?;
            let obj = batch_objective(&trace.hash, &trace.logits, &batch.labels, &b, &weights)?;
            if !obj.losses.is_finite() || !obj.losses.total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    outer,
                    inner,
                    detail: format!("{:?}", obj.losses),
                });
            }
            let grads = backward(&self.state.params, &trace, &obj.grad_hash, &obj.grad_logits, None)?;
            self.state.optim.step_model(&mut self.state.params, &grads)?;
            sums[0] += obj.losses.triplet;
            sums[1] += obj.losses.identity;
            sums[2] += obj.losses.quant_coupling;
        }
        let n = self.cfg.inner_iters.max(1) as f64;
        Ok(LossBundle::new(
            sums[0] / n,
            sums[1] / n,
            sums[2] / n,
            self.cfg.lambda,
            self.cfg.sigma,
            self.cfg.eta,
        ))
    }

    fn classification(&self) -> Result<f64> {
        quant_classification_value(
            &self.state.codes,
            &self.targets,
            &self.state.classifier,
            self.cfg.mu,
            self.cfg.nu,
        )
    }

    /// Runs one outer iteration and returns its record.
    pub fn step(&mut self) -> Result<OuterRecord> {
        let iteration = self.state.history.len() + 1;
        let losses = self.network_phase(iteration)?;

        self.state.hash_cache = forward(&self.state.params, &self.rows)?.hash.transpose();
        let n = self.data.len() as f64;
        let code_gap = (&self.state.codes - &self.state.hash_cache).norm_squared() / n;

        let classification_before_wh = self.classification()?;
        self.state.classifier = solve_wh(&self.state.codes, &self.targets, self.cfg.mu, self.cfg.nu)?;
        let classification_after_wh = self.classification()?;

        let target = code_target(
            &self.state.classifier,
            &self.targets,
            &self.state.hash_cache,
            self.cfg.mu,
            self.cfg.eta,
        )?;
        let dcc_before = dcc_objective(&self.state.classifier, &target, &self.state.codes);
        for _ in 0..self.cfg.dcc_sweeps {
            dcc_sweep_with(&self.state.classifier, &target, &mut self.state.codes, |_, _| {})?;
        }
        let dcc_after = dcc_objective(&self.state.classifier, &target, &self.state.codes);
        let classification_after_b = self.classification()?;

        let record = OuterRecord {
            iteration,
            losses,
            code_gap,
            classification_before_wh,
            classification_after_wh,
            classification_after_b,
            dcc_before,
            dcc_after,
        };
        debug!("outer iteration {iteration}: {record:?}");
        info!(
            "iter {iteration}: triplet {:.4} identity {:.4} coupling {:.4} classification {:.4}",
            losses.triplet, losses.identity, losses.quant_coupling, classification_after_b
        );
        if let Some(prev) = self.state.history.last() {
            let denom = prev.losses.total.abs().max(f64::MIN_POSITIVE);
            if (losses.total - prev.losses.total).abs() / denom < self.cfg.converge_tol {
                self.stall += 1;
            } else {
                self.stall = 0;
            }
        }
        self.state.history.push(record);
        Ok(record)
    }

    pub fn converged(&self) -> bool {
        self.cfg.converge_patience > 0 && self.stall >= self.cfg.converge_patience
    }

    pub fn run(mut self) -> Result<TrainOutput> {
        while self.state.history.len() < self.cfg.outer_iters && !self.converged() {
            self.step()?;
        }
        Ok(self.finish())
    }

    pub fn finish(self) -> TrainOutput {
        TrainOutput {
            params: self.state.params,
            classifier: self.state.classifier,
            codes: self.state.codes,
            history: self.state.history,
        }
    }
}

/// Runs the alternating optimization to completion.
pub fn train(data: &EmbeddingSet, cfg: &TrainConfig) -> Result<TrainOutput> {
    Trainer::new(data, cfg.clone())?.run()
}

/// One line per outer iteration: `t triplet identity coupling classification total`.
pub fn format_history(history: &[OuterRecord]) -> String {
    let mut out = String::new();
    for r in history {
        out.push_str(&format!(
            "{} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e}\n",
            r.iteration,
            r.losses.triplet,
            r.losses.identity,
            r.losses.quant_coupling,
            r.classification_after_b,
            r.losses.total
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_roundtrips_through_text() {
        let mut cfg = TrainConfig {
            bits: 32,
            mu: 2.5,
            full_batch: true,
            ..TrainConfig::default()
        };
        cfg.seed = 7;
        let parsed = TrainConfig::from_text(&cfg.to_string()).unwrap();
        assert_eq!(parsed, cfg);
    }

    #[test]
    fn config_rejects_unknown_and_bad_values() {
        assert!(TrainConfig::from_text("bogus = 1").is_err());
        assert!(TrainConfig::from_text("mu = 0").is_err());
        assert!(TrainConfig::from_text("lambda = -1").is_err());
        assert!(TrainConfig::from_text("p = 1").is_err());
        assert!(TrainConfig::from_text("# comment\n\nbits = 8").is_ok());
    }

    #[test]
    fn orthogonal_codes_reconstruct_exactly() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, -1.0, 1.0]);
        let y = DMatrix::identity(2, 2);
        let w = solve_wh(&b, &y, 1.0, 0.0).unwrap();
        let recon = b.transpose() * &w;
        assert!((recon - &y).amax() < 1e-15);
        let w2 = solve_wh(&b, &y, 1.0, 2.0).unwrap();
        assert!((w2 * 2.0 - w).amax() < 1e-15);
    }

    #[test]
    fn singular_without_ridge() {
        let b = DMatrix::from_row_slice(2, 3, &[1.0, -1.0, 1.0, 1.0, -1.0, 1.0]);
        let y = crate::dataset::one_hot(&[0, 1, 0], 2);
        assert!(matches!(solve_wh(&b, &y, 1.0, 0.0), Err(Error::Singular(_))));
        assert!(solve_wh(&b, &y, 1.0, 0.1).is_ok());
    }

    #[test]
    fn single_bit_sweep_is_sign_of_target() {
        let w = DMatrix::from_row_slice(1, 2, &[0.7, -0.3]);
        let target = DMatrix::from_row_slice(1, 3, &[0.5, -0.2, 0.0]);
        let mut b = DMatrix::from_element(1, 3, -1.0);
        dcc_sweep_with(&w, &target, &mut b, |_, _| {}).unwrap();
        assert_eq!(b.as_slice(), &[1.0, -1.0, 1.0]);
    }
}
