//! Packed Hamming scans against float64 Euclidean scans over the same data.
//!
//! Gallery and query codes are random; the float side holds the `+1/-1`
//! embedding of each code, so squared Euclidean distance is exactly four
//! times the Hamming distance and both scans must agree on every ordering.

use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hamming::{
    code_bytes_per_item, float64_bytes_per_item, float_rank_gallery, rank_all, rank_gallery, words_for_bits,
    CodeMatrix, RankedList,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchConfig {
    pub bits: usize,
    pub n_gallery: usize,
    pub n_query: usize,
    pub seed: u64,
    pub repeats: usize,
    /// When above 1, the Hamming scan is also timed on this many threads.
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub bits: usize,
    pub n_gallery: usize,
    pub n_query: usize,
    pub repeats: usize,
    pub hamming_total_seconds: f64,
    pub euclidean_total_seconds: f64,
    pub speedup_ratio: f64,
    pub hamming_parallel_seconds: Option<f64>,
    pub parallel_threads: Option<usize>,
    pub code_bytes_per_item: usize,
    pub float64_bytes_per_item: usize,
    pub code_bytes_total: usize,
    pub float64_bytes_total: usize,
    pub storage_ratio: f64,
    pub orderings_identical: bool,
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<(&str, String)> = vec![
            ("bits", self.bits.to_string()),
            ("gallery items", self.n_gallery.to_string()),
            ("queries", self.n_query.to_string()),
            ("repeats", self.repeats.to_string()),
            ("hamming scan (s)", format!("{:.6}", self.hamming_total_seconds)),
            ("euclidean scan (s)", format!("{:.6}", self.euclidean_total_seconds)),
            ("speedup", format!("{:.2}x", self.speedup_ratio)),
            (
                "hamming parallel (s)",
                match (self.hamming_parallel_seconds, self.parallel_threads) {
                    (Some(s), Some(t)) => format!("{s:.6} on {t} threads"),
                    _ => "-".into(),
                },
            ),
            ("code bytes / item", self.code_bytes_per_item.to_string()),
            ("float64 bytes / item", self.float64_bytes_per_item.to_string()),
            ("code bytes total", self.code_bytes_total.to_string()),
            ("float64 bytes total", self.float64_bytes_total.to_string()),
            ("storage ratio", format!("{}", self.storage_ratio)),
            ("orderings identical", self.orderings_identical.to_string()),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        for (k, v) in rows {
            writeln!(f, "{k:<width$}  {v}")?;
        }
        Ok(())
    }
}

fn random_codes(rng: &mut ChaCha8Rng, bits: usize, n: usize) -> Result<CodeMatrix> {
    let words = words_for_bits(bits);
    let tail = if bits.is_multiple_of(64) { u64::MAX } else { (1u64 << (bits % 64)) - 1 };
    let mut packed = Vec::with_capacity(words * n);
    for _ in 0..n {
        for w in 0..words {
            let v: u64 = rng.random();
            packed.push(if w + 1 == words { v & tail } else { v });
        }
    }
    CodeMatrix::from_packed(bits, packed, vec![0; n])
}

fn embed(codes: &CodeMatrix) -> Vec<f64> {
    codes.unpack().into_iter().map(f64::from).collect()
}

fn median(mut xs: Vec<Duration>) -> f64 {
    xs.sort_unstable();
    let d = xs[xs.len() / 2];
    d.as_secs_f64().max(1e-9)
}

fn time_repeats<T>(repeats: usize, mut f: impl FnMut() -> Result<T>) -> Result<(f64, T)> {
    let mut times = Vec::with_capacity(repeats);
    // Warm-up pass; its output is kept for the ordering cross-check.
    let out = f()?;
    for _ in 0..repeats {
        let start = Instant::now();
        std::hint::black_box(f()?);
        times.push(start.elapsed());
    }
    Ok((median(times), out))
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.bits == 0 || cfg.n_gallery == 0 || cfg.n_query == 0 {
        return Err(Error::Validation("bench sizes must be at least 1".into()));
    }
    if cfg.repeats < 3 {
        return Err(Error::Validation(format!("need at least 3 repeats, got {}", cfg.repeats)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let gallery = random_codes(&mut rng, cfg.bits, cfg.n_gallery)?;
    let queries = random_codes(&mut rng, cfg.bits, cfg.n_query)?;
    let gallery_f = embed(&gallery);
    let queries_f = embed(&queries);

    let (hamming_s, hamming_lists) = time_repeats(cfg.repeats, || {
        (0..queries.len())
            .map(|q| rank_gallery(queries.item(q), &gallery, None))
            .collect::<Result<Vec<RankedList>>>()
    })?;
    let (euclid_s, float_lists) = time_repeats(cfg.repeats, || {
        queries_f
            .chunks_exact(cfg.bits)
            .map(|q| float_rank_gallery(q, &gallery_f, None))
            .collect::<Result<Vec<RankedList<f64>>>>()
    })?;
    let orderings_identical = hamming_lists
        .iter()
        .zip(&float_lists)
        .all(|(h, f)| h.indices == f.indices);

    let (hamming_parallel_seconds, parallel_threads) = if cfg.threads > 1 {
        let (s, lists) = time_repeats(cfg.repeats, || rank_all(&queries, &gallery, None, false, cfg.threads))?;
        if lists.iter().zip(&hamming_lists).any(|(a, b)| a.indices != b.indices) {
            return Err(Error::Contract("parallel scan disagrees with the sequential scan".into()));
        }
        (Some(s), Some(cfg.threads))
    } else {
        (None, None)
    };

    let code_item = code_bytes_per_item(cfg.bits);
    let float_item = float64_bytes_per_item(cfg.bits);
    let code_total = code_item * cfg.n_gallery;
    let float_total = float_item * cfg.n_gallery;
    Ok(BenchReport {
        bits: cfg.bits,
        n_gallery: cfg.n_gallery,
        n_query: cfg.n_query,
        repeats: cfg.repeats,
        hamming_total_seconds: hamming_s,
        euclidean_total_seconds: euclid_s,
        speedup_ratio: euclid_s / hamming_s,
        hamming_parallel_seconds,
        parallel_threads,
        code_bytes_per_item: code_item,
        float64_bytes_per_item: float_item,
        code_bytes_total: code_total,
        float64_bytes_total: float_total,
        storage_ratio: float_total as f64 / code_total as f64,
        orderings_identical,
    })
}
