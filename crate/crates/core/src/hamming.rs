//! Bit-packed binary codes and exhaustive Hamming ranking.
//!
//! Bit `j` of an item is stored in word `j / 64` at bit position `j % 64`
//! (least significant first); `+1` is a set bit and `-1` a clear bit. Bits
//! past `K - 1` in the last word are always zero.

use std::path::Path;

use rayon::prelude::*;

use crate::dataset::{open_format, read_file, write_file, EmbeddingSet};
use crate::error::{Error, Result};
use crate::model::{forward, ModelParams};

pub const CODES_MAGIC: &[u8; 4] = b"DVHC";
pub const CODES_VERSION: u32 = 1;

pub fn words_for_bits(bits: usize) -> usize {
    bits.div_ceil(64)
}

/// Bytes occupied by one packed item.
pub fn code_bytes_per_item(bits: usize) -> usize {
    8 * words_for_bits(bits)
}

/// Bytes occupied by one `f64` vector of the same width.
pub fn float64_bytes_per_item(dims: usize) -> usize {
    8 * dims
}

fn tail_mask(bits: usize) -> u64 {
    match bits % 64 {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeMatrix {
    bits: usize,
    words_per_item: usize,
    packed: Vec<u64>,
    labels: Vec<u32>,
}

impl CodeMatrix {
    /// Wraps already-packed words, checking layout and the zero-tail invariant.
    pub fn from_packed(bits: usize, packed: Vec<u64>, labels: Vec<u32>) -> Result<Self> {
        if bits == 0 {
            return Err(Error::Validation("code length must be at least 1".into()));
        }
        let words = words_for_bits(bits);
        if packed.len() != words * labels.len() {
            return Err(Error::Shape(format!(
                "{} words do not hold {} items of {bits} bits",
                packed.len(),
                labels.len()
            )));
        }
        let mask = tail_mask(bits);
        if let Some(i) = packed.chunks_exact(words).position(|item| item[words - 1] & !mask != 0) {
            return Err(Error::Validation(format!("item {i} has bits set beyond position {}", bits - 1)));
        }
        Ok(Self {
            bits,
            words_per_item: words,
            packed,
            labels,
        })
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn words_per_item(&self) -> usize {
        self.words_per_item
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn packed(&self) -> &[u64] {
        &self.packed
    }

    pub fn item(&self, i: usize) -> &[u64] {
        &self.packed[i * self.words_per_item..(i + 1) * self.words_per_item]
    }

    /// The `+1/-1` code of item `i`.
    pub fn unpack_item(&self, i: usize) -> Vec<i8> {
        let item = self.item(i);
        (0..self.bits)
            .map(|j| if item[j / 64] >> (j % 64) & 1 == 1 { 1 } else { -1 })
            .collect()
    }

    /// All codes, row-major `N x K`.
    pub fn unpack(&self) -> Vec<i8> {
        (0..self.len()).flat_map(|i| self.unpack_item(i)).collect()
    }

    pub fn storage_bytes(&self) -> usize {
        self.packed.len() * 8
    }
}

/// Packs a row-major `N x K` matrix of `+1/-1` codes.
pub fn pack_codes(codes: &[i8], bits: usize, labels: Vec<u32>) -> Result<CodeMatrix> {
    if bits == 0 {
        return Err(Error::Validation("code length must be at least 1".into()));
    }
    if codes.len() != bits * labels.len() {
        return Err(Error::Shape(format!(
            "{} code entries do not form {} items of {bits} bits",
            codes.len(),
            labels.len()
        )));
    }
    let words = words_for_bits(bits);
    let mut packed = vec![0u64; words * labels.len()];
    for (i, code) in codes.chunks_exact(bits).enumerate() {
        let item = &mut packed[i * words..(i + 1) * words];
        for (j, &c) in code.iter().enumerate() {
            match c {
                1 => item[j / 64] |= 1u64 << (j % 64),
                -1 => {}
                other => {
                    return Err(Error::Validation(format!(
                        "code entry {other} at item {i}, bit {j} is not +1 or -1"
                    )))
                }
            }
        }
    }
    CodeMatrix::from_packed(bits, packed, labels)
}

/// Packs a `K x N` matrix of `+1.0/-1.0` entries (one column per item).
pub fn pack_columns(codes: &nalgebra::DMatrix<f64>, labels: Vec<u32>) -> Result<CodeMatrix> {
    let (k, n) = codes.shape();
    let mut flat = Vec::with_capacity(k * n);
    for col in codes.column_iter() {
        for &v in col.iter() {
            flat.push(if v == 1.0 {
                1
            } else if v == -1.0 {
                -1
            } else {
                return Err(Error::Validation(format!("code entry {v} is not +1 or -1")));
            });
        }
    }
    pack_codes(&flat, k, labels)
}

#[inline(always)]
fn hamming_words(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

/// `sum_w popcount(a_w XOR b_w)` over equally laid out items.
pub fn hamming_distance(a: &[u64], b: &[u64]) -> u32 {
    debug_assert_eq!(a.len(), b.len());
    hamming_words(a, b)
}

#[inline(always)]
fn scan_generic(query: &[u64], packed: &[u64], out: &mut [u32]) {
    let words = query.len();
    for (d, item) in out.iter_mut().zip(packed.chunks_exact(words)) {
        *d = hamming_words(query, item);
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "popcnt")]
unsafe fn scan_popcnt(query: &[u64], packed: &[u64], out: &mut [u32]) {
    scan_generic(query, packed, out)
}

/// Distances from `query` to every item of `packed`, using the hardware
/// population count when the CPU has one.
fn scan_distances(query: &[u64], packed: &[u64], out: &mut [u32]) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("popcnt") {
            // SAFETY: the feature was detected at runtime.
            return unsafe { scan_popcnt(query, packed, out) };
        }
    }
    scan_generic(query, packed, out)
}

/// `(Hamming distance, inner product)` of two `+1/-1` vectors.
///
/// The two always satisfy `d = (K - dot) / 2`.
pub fn distance_inner_product_check(a: &[i8], b: &[i8]) -> Result<(u32, i64)> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("lengths {} and {} differ", a.len(), b.len())));
    }
    let mut d = 0u32;
    let mut dot = 0i64;
    for (&x, &y) in a.iter().zip(b) {
        if !matches!(x, 1 | -1) || !matches!(y, 1 | -1) {
            return Err(Error::Validation(format!("entries {x}, {y} are not +1 or -1")));
        }
        dot += (x as i64) * (y as i64);
        d += (x != y) as u32;
    }
    Ok((d, dot))
}

/// Gallery indices ordered by distance to one query.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList<D = u32> {
    pub query_index: usize,
    pub indices: Vec<usize>,
    pub distances: Vec<D>,
}

impl<D> RankedList<D> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Drops one gallery index from the ranking.
    pub fn without(mut self, gallery_index: usize) -> Self {
        if let Some(p) = self.indices.iter().position(|&i| i == gallery_index) {
            self.indices.remove(p);
            self.distances.remove(p);
        }
        self
    }
}

/// Stable counting sort of integer distances in `[0, max]`, keeping the
/// first `limit` positions. Equal distances stay in ascending index order.
fn counting_rank(distances: &[u32], max: usize, limit: usize) -> (Vec<usize>, Vec<u32>) {
    let mut next = vec![0usize; max + 2];
    for &d in distances {
        next[d as usize + 1] += 1;
    }
    for i in 1..next.len() {
        next[i] += next[i - 1];
    }
    let limit = limit.min(distances.len());
    let mut indices = vec![0usize; limit];
    let mut sorted = vec![0u32; limit];
    for (i, &d) in distances.iter().enumerate() {
        let slot = &mut next[d as usize];
        if *slot < limit {
            indices[*slot] = i;
            sorted[*slot] = d;
        }
        *slot += 1;
    }
    (indices, sorted)
}

fn check_layout(query: &[u64], gallery: &CodeMatrix) -> Result<()> {
    if gallery.is_empty() {
        return Err(Error::Validation("gallery is empty".into()));
    }
    if query.len() != gallery.words_per_item {
        return Err(Error::Shape(format!(
            "query has {} words, gallery items have {}",
            query.len(),
            gallery.words_per_item
        )));
    }
    Ok(())
}

/// Full-scan ranking of `gallery` by Hamming distance to `query`, ties by
/// ascending gallery index. With `top_k` only that prefix is returned.
pub fn rank_gallery(query: &[u64], gallery: &CodeMatrix, top_k: Option<usize>) -> Result<RankedList> {
    check_layout(query, gallery)?;
    let mut distances = vec![0u32; gallery.len()];
    scan_distances(query, &gallery.packed, &mut distances);
    let (indices, distances) = counting_rank(&distances, gallery.bits, top_k.unwrap_or(usize::MAX));
    Ok(RankedList {
        query_index: 0,
        indices,
        distances,
    })
}

/// Ranks every query item against the gallery on up to `threads` workers.
///
/// With `exclude_self`, gallery item `i` is removed from query `i`'s ranking
/// (for self-retrieval over one code set). Output order follows the queries.
pub fn rank_all(
    queries: &CodeMatrix,
    gallery: &CodeMatrix,
    top_k: Option<usize>,
    exclude_self: bool,
    threads: usize,
) -> Result<Vec<RankedList>> {
    if queries.bits != gallery.bits {
        return Err(Error::Shape(format!(
            "query codes have {} bits, gallery codes have {}",
            queries.bits, gallery.bits
        )));
    }
    // One extra slot so the self-match can be dropped without shortening the prefix.
    let fetch = top_k.map(|k| if exclude_self { k.saturating_add(1) } else { k });
    let rank_one = |q: usize| -> Result<RankedList> {
        let mut list = rank_gallery(queries.item(q), gallery, fetch)?;
        list.query_index = q;
        if exclude_self {
            list = list.without(q);
            if let Some(k) = top_k {
                list.indices.truncate(k);
                list.distances.truncate(k);
            }
        }
        Ok(list)
    };
    if threads <= 1 {
        (0..queries.len()).map(rank_one).collect()
    } else {
        crate::parallel::with_threads(threads, || {
            (0..queries.len()).into_par_iter().map(rank_one).collect()
        })
    }
}

/// Euclidean ranking of row-major `N x dim` float vectors, ties by
/// ascending index. Distances reported are Euclidean (not squared).
pub fn float_rank_gallery(query: &[f64], gallery: &[f64], top_k: Option<usize>) -> Result<RankedList<f64>> {
    let dim = query.len();
    if dim == 0 || gallery.is_empty() {
        return Err(Error::Validation("query and gallery must be non-empty".into()));
    }
    if !gallery.len().is_multiple_of(dim) {
        return Err(Error::Shape(format!(
            "gallery of {} values is not a whole number of width-{dim} rows",
            gallery.len()
        )));
    }
    let mut scored: Vec<(f64, usize)> = gallery
        .chunks_exact(dim)
        .enumerate()
        .map(|(i, row)| {
            let d2: f64 = row.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
            (d2, i)
        })
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    match top_k {
        Some(k) if k < scored.len() => {
            if k > 0 {
                scored.select_nth_unstable_by(k - 1, cmp);
            }
            scored.truncate(k);
            scored.sort_unstable_by(cmp);
        }
        _ => scored.sort_unstable_by(cmp),
    }
    Ok(RankedList {
        query_index: 0,
        indices: scored.iter().map(|s| s.1).collect(),
        distances: scored.iter().map(|s| s.0.sqrt()).collect(),
    })
}

/// Sign codes of `forward(params, rows).h`, packed, with raw identity ids as labels.
pub fn encode_set(params: &ModelParams, set: &EmbeddingSet) -> Result<CodeMatrix> {
    let h = forward(params, &set.matrix())?.hash;
    let bits = params.bits();
    let mut flat = Vec::with_capacity(h.len());
    for r in 0..h.nrows() {
        for c in 0..bits {
            flat.push(if h[(r, c)] >= 0.0 { 1 } else { -1 });
        }
    }
    pack_codes(&flat, bits, set.raw_labels())
}

pub fn encode_codes(codes: &CodeMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + codes.packed.len() * 8 + codes.len() * 4);
    out.extend_from_slice(CODES_MAGIC);
    out.extend_from_slice(&CODES_VERSION.to_le_bytes());
    out.extend_from_slice(&(codes.bits as u32).to_le_bytes());
    out.extend_from_slice(&(codes.len() as u32).to_le_bytes());
    for w in &codes.packed {
        out.extend_from_slice(&w.to_le_bytes());
    }
    for l in &codes.labels {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out
}

pub fn save_codes(codes: &CodeMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_codes(codes))
}

pub fn load_codes(path: impl AsRef<Path>) -> Result<CodeMatrix> {
    let path = path.as_ref();
    let buf = read_file(path)?;
    let mut r = open_format(&buf, path, CODES_MAGIC, CODES_VERSION)?;
    let bits = r.u32()? as usize;
    let n = r.u32()? as usize;
    if bits == 0 {
        return Err(Error::Format(format!("{}: code length 0", path.display())));
    }
    let words = words_for_bits(bits);
    let mut packed = Vec::with_capacity(n * words);
    for _ in 0..n * words {
        packed.push(r.u64()?);
    }
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        labels.push(r.u32()?);
    }
    r.finish()?;
    CodeMatrix::from_packed(bits, packed, labels)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}
