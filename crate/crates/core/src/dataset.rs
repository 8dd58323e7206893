//! Labeled embedding sets, the EMB1 file format, synthetic fixtures and the
//! identity-balanced batch sampler.
//!
//! Features are kept at on-disk `f32` precision and promoted to `f64` when a
//! batch is gathered for optimization, so `load(save(s)) == s` holds exactly.
//!
//! Every set carries two label views: dense 0-based labels (used to build
//! one-hot targets) and the raw identity ids they were relabeled from. Files
//! always store raw ids, which keeps query and gallery sets comparable after
//! each has been densely relabeled on its own.

use std::collections::HashMap;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub const EMB_MAGIC: &[u8; 4] = b"DVHE";
pub const EMB_VERSION: u32 = 1;
/// magic + version + N + M + C
pub const EMB_HEADER_BYTES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Split {
    #[default]
    Train,
    Query,
    Gallery,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    features: Vec<f32>,
    dim: usize,
    labels: Vec<u32>,
    identities: Vec<u32>,
    split: Split,
}

impl EmbeddingSet {
    /// Builds a set from row-major features and raw identity ids.
    ///
    /// Raw ids are relabeled to a dense `0..C` range in order of first appearance.
    pub fn new(features: Vec<f32>, dim: usize, raw_labels: &[u32], split: Split) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("embedding width must be at least 1".into()));
        }
        if raw_labels.is_empty() {
            return Err(Error::Validation("embedding set must contain at least one row".into()));
        }
        if features.len() != raw_labels.len() * dim {
            return Err(Error::Shape(format!(
                "{} feature values do not form {} rows of width {}",
                features.len(),
                raw_labels.len(),
                dim
            )));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite feature at row {}, column {}",
                pos / dim,
                pos % dim
            )));
        }
        let (labels, identities) = relabel_dense(raw_labels);
        Ok(Self {
            features,
            dim,
            labels,
            identities,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_ids(&self) -> usize {
        self.identities.len()
    }

    /// Dense 0-based identity label per row.
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Raw identity id for each dense label.
    pub fn identities(&self) -> &[u32] {
        &self.identities
    }

    pub fn raw_label(&self, row: usize) -> u32 {
        self.identities[self.labels[row] as usize]
    }

    pub fn raw_labels(&self) -> Vec<u32> {
        self.labels.iter().map(|&l| self.identities[l as usize]).collect()
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Gathers the given rows into an `f64` matrix (rows may repeat).
    pub fn gather(&self, rows: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), self.dim, |r, c| self.row(rows[r])[c] as f64)
    }

    /// All rows as an `f64` matrix.
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), self.dim, |r, c| self.features[r * self.dim + c] as f64)
    }

    /// A new set holding the given rows, raw ids preserved.
    pub fn subset(&self, rows: &[usize], split: Split) -> Result<Self> {
        let mut features = Vec::with_capacity(rows.len() * self.dim);
        let mut raw = Vec::with_capacity(rows.len());
        for &r in rows {
            if r >= self.len() {
                return Err(Error::Validation(format!(
                    "row {r} out of range for set of {} rows",
                    self.len()
                )));
            }
            features.extend_from_slice(self.row(r));
            raw.push(self.raw_label(r));
        }
        Self::new(features, self.dim, &raw, split)
    }

    /// Row indices grouped by dense label.
    pub fn rows_by_identity(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.num_ids()];
        for (i, &l) in self.labels.iter().enumerate() {
            groups[l as usize].push(i);
        }
        groups
    }

    /// `N x C` one-hot label matrix.
    pub fn one_hot(&self) -> DMatrix<f64> {
        one_hot(&self.labels, self.num_ids())
    }
}

/// `N x C` one-hot matrix for dense labels.
pub fn one_hot(labels: &[u32], num_classes: usize) -> DMatrix<f64> {
    let mut y = DMatrix::zeros(labels.len(), num_classes);
    for (i, &l) in labels.iter().enumerate() {
        y[(i, l as usize)] = 1.0;
    }
    y
}

fn relabel_dense(raw: &[u32]) -> (Vec<u32>, Vec<u32>) {
    let mut map: HashMap<u32, u32> = HashMap::new();
    let mut identities = Vec::new();
    let labels = raw
        .iter()
        .map(|&r| {
            *map.entry(r).or_insert_with(|| {
                identities.push(r);
                (identities.len() - 1) as u32
            })
        })
        .collect();
    (labels, identities)
}

/// Little-endian reader shared by the on-disk formats.
pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> ByteReader<'a> {
    fn new(buf: &'a [u8], path: &'a Path) -> Self {
        Self { buf, pos: 0, path }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let out = &self.buf[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(Error::io(
                self.path,
                io::Error::new(
                    io::ErrorKind::UnexpectedEof,
                    format!(
                        "truncated payload: need {n} bytes at offset {}, file has {}",
                        self.pos,
                        self.buf.len()
                    ),
                ),
            )),
        }
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != expected {
            return Err(Error::Format(format!(
                "{}: bad magic {:?}, expected {:?}",
                self.path.display(),
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(expected)
            )));
        }
        Ok(())
    }

    fn version(&mut self, expected: u32) -> Result<()> {
        let v = self.u32()?;
        if v != expected {
            return Err(Error::Format(format!(
                "{}: unsupported version {v}, expected {expected}",
                self.path.display()
            )));
        }
        Ok(())
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!(
                "{}: {} trailing bytes after payload",
                self.path.display(),
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Opens a checked reader over a file with the given magic and version.
pub(crate) fn open_format<'a>(
    buf: &'a [u8],
    path: &'a Path,
    magic: &[u8; 4],
    version: u32,
) -> Result<ByteReader<'a>> {
    let mut r = ByteReader::new(buf, path);
    r.magic(magic)?;
    r.version(version)?;
    Ok(r)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))?;
    f.flush().map_err(|e| Error::io(path, e))
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let buf = read_file(path)?;
    let mut r = open_format(&buf, path, EMB_MAGIC, EMB_VERSION)?;
    let n = r.u32()? as usize;
    let m = r.u32()? as usize;
    let c = r.u32()? as usize;
    let expected = EMB_HEADER_BYTES as u64 + (n as u64) * (m as u64) * 4 + (n as u64) * 4;
    if (buf.len() as u64) < expected {
        return Err(Error::io(
            path,
            io::Error::new(
                io::ErrorKind::UnexpectedEof,
                format!("truncated payload: header promises {expected} bytes, file has {}", buf.len()),
            ),
        ));
    }
    let mut features = Vec::with_capacity(n * m);
    for _ in 0..n * m {
        features.push(r.f32()?);
    }
    let mut raw = Vec::with_capacity(n);
    for _ in 0..n {
        raw.push(r.u32()?);
    }
    r.finish()?;
    let set = EmbeddingSet::new(features, m, &raw, Split::Train)?;
    if set.num_ids() != c {
        return Err(Error::Format(format!(
            "{}: header declares {c} identities but labels contain {}",
            path.display(),
            set.num_ids()
        )));
    }
    Ok(set)
}

pub fn encode_embeddings(set: &EmbeddingSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(EMB_HEADER_BYTES + set.features.len() * 4 + set.len() * 4);
    out.extend_from_slice(EMB_MAGIC);
    out.extend_from_slice(&EMB_VERSION.to_le_bytes());
    out.extend_from_slice(&(set.len() as u32).to_le_bytes());
    out.extend_from_slice(&(set.dim as u32).to_le_bytes());
    out.extend_from_slice(&(set.num_ids() as u32).to_le_bytes());
    for v in &set.features {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for l in set.raw_labels() {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out
}

pub fn save_embeddings(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_embeddings(set))
}

/// Header-less CSV: each line holds `M` floats followed by an integer label.
pub fn load_embeddings_csv(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut features = Vec::new();
    let mut raw = Vec::new();
    let mut dim = None;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 2 {
            return Err(Error::Format(format!(
                "{}:{}: expected at least one feature and a label",
                path.display(),
                lineno + 1
            )));
        }
        let width = fields.len() - 1;
        match dim {
            None => dim = Some(width),
            Some(d) if d != width => {
                return Err(Error::Format(format!(
                    "{}:{}: row has {width} features, earlier rows have {d}",
                    path.display(),
                    lineno + 1
                )))
            }
            _ => {}
        }
        for f in &fields[..width] {
            let v: f32 = f.parse().map_err(|_| {
                Error::Format(format!("{}:{}: bad float {f:?}", path.display(), lineno + 1))
            })?;
            features.push(v);
        }
        let label: u32 = fields[width].parse().map_err(|_| {
            Error::Format(format!(
                "{}:{}: bad label {:?}",
                path.display(),
                lineno + 1,
                fields[width]
            ))
        })?;
        raw.push(label);
    }
    EmbeddingSet::new(features, dim.unwrap_or(0).max(1), &raw, Split::Train)
}

/// Gaussian clusters around distinct random unit-norm centers, one per identity.
///
/// Rows are grouped by identity (`per_id` consecutive rows each) and labeled
/// `0..num_ids`.
pub fn generate_synthetic(
    num_ids: usize,
    per_id: usize,
    dim: usize,
    cluster_spread: f64,
    seed: u64,
) -> Result<EmbeddingSet> {
    if num_ids < 2 || per_id < 2 || dim < 2 {
        return Err(Error::Validation(format!(
            "synthetic set needs num_ids >= 2, per_id >= 2, dim >= 2 (got {num_ids}, {per_id}, {dim})"
        )));
    }
    if !(cluster_spread > 0.0 && cluster_spread.is_finite()) {
        return Err(Error::Validation(format!(
            "cluster_spread must be positive, got {cluster_spread}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..num_ids)
        .map(|_| loop {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                break v.into_iter().map(|x| x / norm).collect();
            }
        })
        .collect();
    let mut features = Vec::with_capacity(num_ids * per_id * dim);
    let mut labels = Vec::with_capacity(num_ids * per_id);
    for (id, center) in centers.iter().enumerate() {
        for _ in 0..per_id {
            for &c in center {
                let noise: f64 = StandardNormal.sample(&mut rng);
                features.push((c + cluster_spread * noise) as f32);
            }
            labels.push(id as u32);
        }
    }
    EmbeddingSet::new(features, dim, &labels, Split::Train)
}

/// Splits every identity's rows: the first `train_per_id` rows go to the
/// training set, the next `query_per_id` to the query set, the rest to the gallery.
pub fn split_per_identity(
    set: &EmbeddingSet,
    train_per_id: usize,
    query_per_id: usize,
) -> Result<(EmbeddingSet, EmbeddingSet, EmbeddingSet)> {
    let mut train = Vec::new();
    let mut query = Vec::new();
    let mut gallery = Vec::new();
    for rows in set.rows_by_identity() {
        if rows.len() < train_per_id + query_per_id + 1 {
            return Err(Error::Validation(format!(
                "identity with {} rows cannot be split {train_per_id}/{query_per_id}/rest",
                rows.len()
            )));
        }
        train.extend_from_slice(&rows[..train_per_id]);
        query.extend_from_slice(&rows[train_per_id..train_per_id + query_per_id]);
        gallery.extend_from_slice(&rows[train_per_id + query_per_id..]);
    }
    Ok((
        set.subset(&train, Split::Train)?,
        set.subset(&query, Split::Query)?,
        set.subset(&gallery, Split::Gallery)?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerConfig {
    pub num_identities: usize,
    pub instances_per_identity: usize,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_identities < 2 || self.instances_per_identity < 2 {
            return Err(Error::Validation(format!(
                "sampler needs P >= 2 and K1 >= 2 (got P={}, K1={})",
                self.num_identities, self.instances_per_identity
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub row_indices: Vec<usize>,
    pub labels: Vec<u32>,
}

/// Draws one `P x K1` batch: `P` identities without replacement, then `K1`
/// rows per identity, without replacement when the identity has at least
/// `K1` rows and with replacement otherwise.
pub fn sample_pk_batch<R: Rng + ?Sized>(
    groups: &[Vec<usize>],
    num_identities: usize,
    per_identity: usize,
    rng: &mut R,
) -> Result<Batch> {
    let c = groups.len();
    if c < num_identities {
        return Err(Error::Sampling(format!(
            "requested {num_identities} identities per batch but the set has only {c}"
        )));
    }
    let mut row_indices = Vec::with_capacity(num_identities * per_identity);
    let mut labels = Vec::with_capacity(num_identities * per_identity);
    for id in index::sample(rng, c, num_identities) {
        let rows = &groups[id];
        if rows.is_empty() {
            return Err(Error::Sampling(format!("identity {id} has no rows")));
        }
        if rows.len() >= per_identity {
            for j in index::sample(rng, rows.len(), per_identity) {
                row_indices.push(rows[j]);
            }
        } else {
            for _ in 0..per_identity {
                row_indices.push(rows[rng.random_range(0..rows.len())]);
            }
        }
        labels.extend(std::iter::repeat_n(id as u32, per_identity));
    }
    Ok(Batch { row_indices, labels })
}

/// Identity-balanced batch sampler owning its RNG stream.
#[derive(Debug, Clone)]
pub struct PkSampler {
    groups: Vec<Vec<usize>>,
    cfg: SamplerConfig,
    rng: ChaCha8Rng,
}

impl PkSampler {
    pub fn new(set: &EmbeddingSet, cfg: SamplerConfig) -> Result<Self> {
        cfg.validate()?;
        if set.num_ids() < cfg.num_identities {
            return Err(Error::Sampling(format!(
                "requested {} identities per batch but the set has only {}",
                cfg.num_identities,
                set.num_ids()
            )));
        }
        Ok(Self {
            groups: set.rows_by_identity(),
            cfg,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.cfg
    }

    pub fn next_batch(&mut self) -> Result<Batch> {
        sample_pk_batch(
            &self.groups,
            self.cfg.num_identities,
            self.cfg.instances_per_identity,
            &mut self.rng,
        )
    }
}
