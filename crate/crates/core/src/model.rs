//! The trainable network: a dense adapter trunk producing the feature `f`,
//! a linear hash layer producing the continuous code `h`, and a linear
//! identity head producing class logits from `f`.
//!
//! Gradients are derived by hand for this fixed architecture.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{open_format, read_file, write_file};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DVHM";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Standard deviation for the hash layer and identity head weights.
pub const HEAD_INIT_STD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `out x in`
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub rectify: bool,
}

impl DenseLayer {
    pub fn new(weight: DMatrix<f64>, bias: DVector<f64>, rectify: bool) -> Result<Self> {
        if weight.nrows() != bias.len() {
            return Err(Error::Shape(format!(
                "layer weight has {} rows but bias has {} entries",
                weight.nrows(),
                bias.len()
            )));
        }
        Ok(Self {
            weight,
            bias,
            rectify,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub input: usize,
    pub feature: usize,
    pub bits: usize,
    pub classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub adapter: Vec<DenseLayer>,
    /// `K x M'`
    pub hash_weight: DMatrix<f64>,
    pub hash_bias: DVector<f64>,
    /// `C x M'`
    pub id_weight: DMatrix<f64>,
    pub id_bias: DVector<f64>,
}

impl ModelParams {
    /// Assembles and validates a parameter set.
    pub fn new(
        adapter: Vec<DenseLayer>,
        hash_weight: DMatrix<f64>,
        hash_bias: DVector<f64>,
        id_weight: DMatrix<f64>,
        id_bias: DVector<f64>,
    ) -> Result<Self> {
        let params = Self {
            adapter,
            hash_weight,
            hash_bias,
            id_weight,
            id_bias,
        };
        params.validate()?;
        Ok(params)
    }

    /// Random initialization. Adapter layers (all rectified) use a fan-in
    /// scaled normal; both heads use `N(0, 0.01^2)`; biases start at zero.
    pub fn init<R: Rng + ?Sized>(dims: ModelDims, adapter_depth: usize, rng: &mut R) -> Result<Self> {
        if dims.input == 0 || dims.bits == 0 || dims.classes == 0 || dims.feature == 0 {
            return Err(Error::Validation(format!("all model dimensions must be positive: {dims:?}")));
        }
        if adapter_depth == 0 && dims.feature != dims.input {
            return Err(Error::Validation(format!(
                "an empty adapter passes rows through, so feature width {} must equal input width {}",
                dims.feature, dims.input
            )));
        }
        let mut adapter = Vec::with_capacity(adapter_depth);
        let mut fan_in = dims.input;
        for _ in 0..adapter_depth {
            let std = (2.0 / fan_in as f64).sqrt();
            adapter.push(DenseLayer {
                weight: normal_matrix(dims.feature, fan_in, std, rng),
                bias: DVector::zeros(dims.feature),
                rectify: true,
            });
            fan_in = dims.feature;
        }
        Self::new(
            adapter,
            normal_matrix(dims.bits, dims.feature, HEAD_INIT_STD, rng),
            DVector::zeros(dims.bits),
            normal_matrix(dims.classes, dims.feature, HEAD_INIT_STD, rng),
            DVector::zeros(dims.classes),
        )
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            input: self
                .adapter
                .first()
                .map_or(self.hash_weight.ncols(), DenseLayer::in_dim),
            feature: self.hash_weight.ncols(),
            bits: self.hash_weight.nrows(),
            classes: self.id_weight.nrows(),
        }
    }

    pub fn bits(&self) -> usize {
        self.hash_weight.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let mut width = self
            .adapter
            .first()
            .map_or(self.hash_weight.ncols(), DenseLayer::in_dim);
        for (i, layer) in self.adapter.iter().enumerate() {
            if layer.in_dim() != width || layer.bias.len() != layer.out_dim() {
                return Err(Error::Shape(format!(
                    "adapter layer {i} is {}x{} with bias {}, expected input width {width}",
                    layer.out_dim(),
                    layer.in_dim(),
                    layer.bias.len()
                )));
            }
            width = layer.out_dim();
        }
        if self.hash_weight.ncols() != width || self.hash_bias.len() != self.hash_weight.nrows() {
            return Err(Error::Shape(format!(
                "hash layer is {}x{} with bias {}, feature width is {width}",
                self.hash_weight.nrows(),
                self.hash_weight.ncols(),
                self.hash_bias.len()
            )));
        }
        if self.id_weight.ncols() != width || self.id_bias.len() != self.id_weight.nrows() {
            return Err(Error::Shape(format!(
                "identity head is {}x{} with bias {}, feature width is {width}",
                self.id_weight.nrows(),
                self.id_weight.ncols(),
                self.id_bias.len()
            )));
        }
        if self.bits() == 0 {
            return Err(Error::Validation("code length must be at least 1".into()));
        }
        if self.buffers().iter().any(|b| b.iter().any(|v| !v.is_finite())) {
            return Err(Error::Validation("model parameters contain non-finite values".into()));
        }
        Ok(())
    }

    /// Every parameter buffer in declaration order.
    pub fn buffers(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(2 * self.adapter.len() + 4);
        for layer in &self.adapter {
            out.push(layer.weight.as_slice());
            out.push(layer.bias.as_slice());
        }
        out.push(self.hash_weight.as_slice());
        out.push(self.hash_bias.as_slice());
        out.push(self.id_weight.as_slice());
        out.push(self.id_bias.as_slice());
        out
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(2 * self.adapter.len() + 4);
        for layer in &mut self.adapter {
            out.push(layer.weight.as_mut_slice());
            out.push(layer.bias.as_mut_slice());
        }
        out.push(self.hash_weight.as_mut_slice());
        out.push(self.hash_bias.as_mut_slice());
        out.push(self.id_weight.as_mut_slice());
        out.push(self.id_bias.as_mut_slice());
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.buffers().iter().map(|b| b.len()).sum()
    }
}

fn normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, std: f64, rng: &mut R) -> DMatrix<f64> {
    let dist = Normal::new(0.0, std).expect("finite positive std");
    // Row-major draw order so the stream maps onto weights the same way the
    // checkpoint lays them out.
    let values: Vec<f64> = (0..rows * cols).map(|_| dist.sample(rng)).collect();
    DMatrix::from_row_slice(rows, cols, &values)
}

/// Intermediates of one forward pass, kept for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Input to each adapter layer (`inputs[0]` is the batch itself).
    pub inputs: Vec<DMatrix<f64>>,
    /// Pre-activation of each adapter layer.
    pub pre_activations: Vec<DMatrix<f64>>,
    /// `batch x M'`
    pub feature: DMatrix<f64>,
    /// `batch x K`
    pub hash: DMatrix<f64>,
    /// `batch x C`
    pub logits: DMatrix<f64>,
}

fn affine(input: &DMatrix<f64>, weight: &DMatrix<f64>, bias: &DVector<f64>) -> DMatrix<f64> {
    let mut out = input * weight.transpose();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(bias[j]);
    }
    out
}

fn column_sums(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum()))
}

/// Runs the adapter and both heads over a `batch x M` matrix of rows.
pub fn forward(params: &ModelParams, rows: &DMatrix<f64>) -> Result<ForwardTrace> {
    let dims = params.dims();
    if rows.ncols() != dims.input {
        return Err(Error::Shape(format!(
            "input rows have width {}, model expects {}",
            rows.ncols(),
            dims.input
        )));
    }
    let mut inputs = Vec::with_capacity(params.adapter.len());
    let mut pre_activations = Vec::with_capacity(params.adapter.len());
    let mut current = rows.clone();
    for layer in &params.adapter {
        let z = affine(&current, &layer.weight, &layer.bias);
        let a = if layer.rectify { z.map(|v| v.max(0.0)) } else { z.clone() };
        inputs.push(current);
        pre_activations.push(z);
        current = a;
    }
    let hash = affine(&current, &params.hash_weight, &params.hash_bias);
    let logits = affine(&current, &params.id_weight, &params.id_bias);
    Ok(ForwardTrace {
        inputs,
        pre_activations,
        feature: current,
        hash,
        logits,
    })
}

/// Continuous hash vectors only (`batch x K`).
pub fn hash_rows(params: &ModelParams, rows: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(forward(params, rows)?.hash)
}

/// Gradients for every parameter of a [`ModelParams`], same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub adapter: Vec<(DMatrix<f64>, DVector<f64>)>,
    pub hash_weight: DMatrix<f64>,
    pub hash_bias: DVector<f64>,
    pub id_weight: DMatrix<f64>,
    pub id_bias: DVector<f64>,
}

impl ParamGrads {
    /// Buffers in the same order as [`ModelParams::buffers`].
    pub fn buffers(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(2 * self.adapter.len() + 4);
        for (w, b) in &self.adapter {
            out.push(w.as_slice());
            out.push(b.as_slice());
        }
        out.push(self.hash_weight.as_slice());
        out.push(self.hash_bias.as_slice());
        out.push(self.id_weight.as_slice());
        out.push(self.id_bias.as_slice());
        out
    }

    pub fn is_finite(&self) -> bool {
        self.buffers().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// Back-propagates upstream partials on `h`, the logits and (optionally) the
/// feature `f` into gradients for every weight and bias.
pub fn backward(
    params: &ModelParams,
    trace: &ForwardTrace,
    grad_hash: &DMatrix<f64>,
    grad_logits: &DMatrix<f64>,
    grad_feature: Option<&DMatrix<f64>>,
) -> Result<ParamGrads> {
    let batch = trace.feature.nrows();
    let dims = params.dims();
    let check = |name: &str, m: &DMatrix<f64>, cols: usize| {
        if m.nrows() != batch || m.ncols() != cols {
            Err(Error::Shape(format!(
                "{name} gradient is {}x{}, expected {batch}x{cols}",
                m.nrows(),
                m.ncols()
            )))
        } else {
            Ok(())
        }
    };
    check("hash", grad_hash, dims.bits)?;
    check("logit", grad_logits, dims.classes)?;
    if let Some(g) = grad_feature {
        check("feature", g, dims.feature)?;
    }
    if trace.inputs.len() != params.adapter.len() || trace.feature.ncols() != dims.feature {
        return Err(Error::Shape("forward trace does not match these parameters".into()));
    }

    let hash_weight = grad_hash.transpose() * &trace.feature;
    let hash_bias = column_sums(grad_hash);
    let id_weight = grad_logits.transpose() * &trace.feature;
    let id_bias = column_sums(grad_logits);

    let mut upstream = grad_hash * &params.hash_weight + grad_logits * &params.id_weight;
    if let Some(g) = grad_feature {
        upstream += g;
    }

    let mut adapter = Vec::with_capacity(params.adapter.len());
    for (i, layer) in params.adapter.iter().enumerate().rev() {
        let mut dz = upstream;
        if layer.rectify {
            dz.zip_apply(&trace.pre_activations[i], |g, z| {
                if z <= 0.0 {
                    *g = 0.0
                }
            });
        }
        let dw = dz.transpose() * &trace.inputs[i];
        let db = column_sums(&dz);
        upstream = &dz * &layer.weight;
        adapter.push((dw, db));
    }
    adapter.reverse();

    Ok(ParamGrads {
        adapter,
        hash_weight,
        hash_bias,
        id_weight,
        id_bias,
    })
}

/// `+1` for `x >= 0`, `-1` otherwise.
#[inline]
pub fn sign(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

pub fn sign_binarize(h: &[f64]) -> Vec<i8> {
    h.iter().map(|&x| if x >= 0.0 { 1 } else { -1 }).collect()
}

/// Elementwise [`sign`] of a matrix.
pub fn sign_matrix(h: &DMatrix<f64>) -> DMatrix<f64> {
    h.map(sign)
}

fn push_matrix(out: &mut Vec<u8>, m: &DMatrix<f64>) {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.extend_from_slice(&(m[(r, c)] as f32).to_le_bytes());
        }
    }
}

fn push_vector(out: &mut Vec<u8>, v: &DVector<f64>) {
    for x in v.iter() {
        out.extend_from_slice(&(*x as f32).to_le_bytes());
    }
}

/// Serializes parameters and the code classifier `W_h` (`K x C`) as a DVHM checkpoint.
///
/// Adapter layers are stored without their activation flag; every stored
/// adapter layer is read back as rectified.
pub fn encode_checkpoint(params: &ModelParams, code_classifier: &DMatrix<f64>) -> Result<Vec<u8>> {
    params.validate()?;
    let dims = params.dims();
    if params.adapter.iter().any(|l| !l.rectify) {
        return Err(Error::Validation(
            "checkpoints only store rectified adapter layers".into(),
        ));
    }
    if code_classifier.nrows() != dims.bits || code_classifier.ncols() != dims.classes {
        return Err(Error::Shape(format!(
            "code classifier is {}x{}, expected {}x{}",
            code_classifier.nrows(),
            code_classifier.ncols(),
            dims.bits,
            dims.classes
        )));
    }
    let mut out = Vec::with_capacity(28 + 4 * (params.num_parameters() + code_classifier.len()));
    out.extend_from_slice(CHECKPOINT_MAGIC);
    for v in [
        CHECKPOINT_VERSION,
        dims.input as u32,
        dims.feature as u32,
        dims.bits as u32,
        dims.classes as u32,
        params.adapter.len() as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for layer in &params.adapter {
        push_matrix(&mut out, &layer.weight);
        push_vector(&mut out, &layer.bias);
    }
    push_matrix(&mut out, &params.hash_weight);
    push_vector(&mut out, &params.hash_bias);
    push_matrix(&mut out, &params.id_weight);
    push_vector(&mut out, &params.id_bias);
    push_matrix(&mut out, code_classifier);
    Ok(out)
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    params: &ModelParams,
    code_classifier: &DMatrix<f64>,
) -> Result<()> {
    let bytes = encode_checkpoint(params, code_classifier)?;
    write_file(path.as_ref(), &bytes)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ModelParams, DMatrix<f64>)> {
    let path = path.as_ref();
    let buf = read_file(path)?;
    let mut r = open_format(&buf, path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
    let input = r.u32()? as usize;
    let feature = r.u32()? as usize;
    let bits = r.u32()? as usize;
    let classes = r.u32()? as usize;
    let depth = r.u32()? as usize;
    if depth == 0 && input != feature {
        return Err(Error::Format(format!(
            "{}: adapter depth 0 requires M == M' (got {input} and {feature})",
            path.display()
        )));
    }
    let mut read_matrix = |rows: usize, cols: usize| -> Result<DMatrix<f64>> {
        let mut values = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            values.push(r.f32()? as f64);
        }
        Ok(DMatrix::from_row_slice(rows, cols, &values))
    };
    let mut adapter = Vec::with_capacity(depth);
    let mut fan_in = input;
    for _ in 0..depth {
        let weight = read_matrix(feature, fan_in)?;
        let bias = read_matrix(feature, 1)?.column(0).into_owned();
        adapter.push(DenseLayer::new(weight, bias, true)?);
        fan_in = feature;
    }
    let hash_weight = read_matrix(bits, feature)?;
    let hash_bias = read_matrix(bits, 1)?.column(0).into_owned();
    let id_weight = read_matrix(classes, feature)?;
    let id_bias = read_matrix(classes, 1)?.column(0).into_owned();
    let code_classifier = read_matrix(bits, classes)?;
    r.finish()?;
    let params = ModelParams::new(adapter, hash_weight, hash_bias, id_weight, id_bias)?;
    Ok((params, code_classifier))
}
