//! Monte-Carlo null distributions of the scaled statistic `n * MMD^2`
//! against `unif_d`, p-values with an exponential tail, and an on-disk
//! cache of built tables.
//!
//! Cache files are named `null_d{d}_{kind}{param}_{n_ref}_{n_sims}.bin` and
//! hold a fixed little-endian header followed by the sorted statistics as
//! `f64` values. The tail parameters are refit on load.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::mmd::{even_weights, mmd_sq_with_weights, PowerSeriesKernel};

pub const DEFAULT_N_REF: usize = 500;
pub const DEFAULT_N_SIMS: usize = 1000;
pub const DEFAULT_TAIL_MASS: f64 = 0.05;
const P_VALUE_FLOOR: f64 = 1e-300;

const MAGIC: &[u8; 8] = b"STRNULL1";

/// I.i.d. draws from the uniform distribution on the unit d-ball: a
/// normalized Gaussian direction times a radius `U^(1/d)`.
pub fn sample_uniform_ball<R: Rng + ?Sized>(d: usize, n: usize, rng: &mut R) -> PointCloud {
    assert!(d >= 1);
    let mut data = Vec::with_capacity(n * d);
    let mut dir = vec![0.0f64; d];
    for _ in 0..n {
        let norm = loop {
            let mut s = 0.0f64;
            for v in dir.iter_mut() {
                *v = rng.sample(StandardNormal);
                s += *v * *v;
            }
            if s > 0.0 {
                break s.sqrt();
            }
        };
        let u: f64 = rng.random();
        let radius = u.powf(1.0 / d as f64);
        data.extend(dir.iter().map(|v| v / norm * radius));
    }
    PointCloud::new(d, data).expect("finite samples")
}

/// Sorted Monte-Carlo sample of `n_ref * MMD^2` under the null, plus a
/// shifted-exponential tail above the `(1 - tail_mass)` quantile.
#[derive(Debug, Clone, PartialEq)]
pub struct NullTable {
    pub d: usize,
    pub kernel: PowerSeriesKernel,
    pub n_ref: usize,
    pub seed: u64,
    /// Ascending, nonnegative.
    pub stats: Vec<f64>,
    pub tail_rate: f64,
    pub tail_anchor: f64,
    pub tail_mass: f64,
}

impl NullTable {
    pub fn n_sims(&self) -> usize {
        self.stats.len()
    }

    pub fn kernel_fingerprint(&self) -> String {
        self.kernel.fingerprint()
    }

    /// Survival probability of the scaled statistic `k_obs * mmd_sq_obs`.
    pub fn p_value(&self, k_obs: usize, mmd_sq_obs: f64) -> f64 {
        self.p_value_of_stat(k_obs as f64 * mmd_sq_obs)
    }

    pub fn p_value_of_stat(&self, s: f64) -> f64 {
        if s <= self.tail_anchor {
            let below = self.stats.partition_point(|&v| v < s);
            let at_or_above = self.stats.len() - below;
            (at_or_above as f64 + 1.0) / (self.stats.len() as f64 + 1.0)
        } else {
            (self.tail_mass * (-self.tail_rate * (s - self.tail_anchor)).exp()).max(P_VALUE_FLOOR)
        }
    }

    fn from_sorted(
        d: usize,
        kernel: PowerSeriesKernel,
        n_ref: usize,
        seed: u64,
        stats: Vec<f64>,
        tail_mass: f64,
    ) -> Result<Self> {
        let (tail_anchor, tail_rate) = fit_tail(&stats, tail_mass).ok_or(Error::NullDegenerate { d })?;
        Ok(Self {
            d,
            kernel,
            n_ref,
            seed,
            stats,
            tail_rate,
            tail_anchor,
            tail_mass,
        })
    }
}

/// Anchor at the empirical `(1 - p0)` quantile; rate by maximum likelihood
/// on the exceedances (one over the mean excess).
fn fit_tail(sorted: &[f64], p0: f64) -> Option<(f64, f64)> {
    let n = sorted.len();
    let idx = (((1.0 - p0) * n as f64).ceil() as usize).clamp(1, n) - 1;
    let anchor = sorted[idx];
    let excess: Vec<f64> = sorted.iter().filter(|&&v| v > anchor).map(|v| v - anchor).collect();
    if excess.is_empty() {
        return None;
    }
    let mean = excess.iter().sum::<f64>() / excess.len() as f64;
    if mean > 0.0 && mean.is_finite() {
        Some((anchor, 1.0 / mean))
    } else {
        None
    }
}

/// Simulates `n_sims` null statistics `n_ref * MMD^2(sample, unif_d)`.
///
/// Each simulation draws from its own ChaCha stream of `seed`, so the table
/// is identical regardless of thread count.
pub fn build_null(
    d: usize,
    kernel: &PowerSeriesKernel,
    n_ref: usize,
    n_sims: usize,
    seed: u64,
) -> Result<NullTable> {
    if d == 0 {
        return Err(Error::InvalidParameter("null dimension must be >= 1".into()));
    }
    if n_ref < 50 {
        return Err(Error::InvalidParameter(format!("n_ref must be >= 50, got {n_ref}")));
    }
    if n_sims < 200 {
        return Err(Error::InvalidParameter(format!("n_sims must be >= 200, got {n_sims}")));
    }
    let weights = even_weights(kernel, d);
    let mut stats = (0..n_sims)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let sample = sample_uniform_ball(d, n_ref, &mut rng);
            mmd_sq_with_weights(&sample, kernel, &weights).map(|v| v * n_ref as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    stats.sort_by(f64::total_cmp);
    NullTable::from_sorted(d, *kernel, n_ref, seed, stats, DEFAULT_TAIL_MASS)
}

/// Free-function form of [`NullTable::p_value`].
pub fn p_value(table: &NullTable, k_obs: usize, mmd_sq_obs: f64) -> f64 {
    table.p_value(k_obs, mmd_sq_obs)
}

/// Seed of the table for `(d, kernel)` derived from a base seed, so tables
/// for different keys do not share random streams.
fn derive_seed(base: u64, d: usize, kernel: &PowerSeriesKernel) -> u64 {
    let mut h = base ^ 0x9E37_79B9_7F4A_7C15;
    for word in [d as u64, kernel.parameter().to_bits(), kernel.kind_tag().as_bytes()[0] as u64] {
        h = splitmix(h ^ word);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CacheKey {
    d: usize,
    fingerprint: String,
    truncation: usize,
}

/// Lazily built, shareable null tables keyed by `(d, kernel)`, optionally
/// persisted to a directory.
///
/// Lookups never block on a build in progress: two threads racing on the
/// same missing key both build it (deterministically, so the results are
/// identical) and the first insert wins.
#[derive(Debug)]
pub struct NullCache {
    dir: Option<PathBuf>,
    seed: u64,
    n_ref: usize,
    n_sims: usize,
    tables: Mutex<HashMap<CacheKey, Arc<NullTable>>>,
}

impl NullCache {
    /// In-memory cache with default simulation sizes.
    pub fn in_memory(seed: u64) -> Self {
        Self::new(None, seed, DEFAULT_N_REF, DEFAULT_N_SIMS)
    }

    pub fn new(dir: Option<PathBuf>, seed: u64, n_ref: usize, n_sims: usize) -> Self {
        Self {
            dir,
            seed,
            n_ref,
            n_sims,
            tables: Mutex::new(HashMap::new()),
        }
    }

    pub fn n_ref(&self) -> usize {
        self.n_ref
    }

    pub fn n_sims(&self) -> usize {
        self.n_sims
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// File the table for `(d, kernel)` is persisted to.
    pub fn file_name(&self, d: usize, kernel: &PowerSeriesKernel) -> String {
        format!(
            "null_d{d}_{}_{}_{}.bin",
            kernel.fingerprint(),
            self.n_ref,
            self.n_sims
        )
    }

    /// Returns the table for `(d, kernel)`, loading or building it on first
    /// use.
    pub fn get(&self, d: usize, kernel: &PowerSeriesKernel) -> Result<Arc<NullTable>> {
        let key = CacheKey {
            d,
            fingerprint: kernel.fingerprint(),
            truncation: kernel.truncation,
        };
        if let Some(t) = self.tables.lock().expect("null cache poisoned").get(&key) {
            return Ok(Arc::clone(t));
        }
        let table = Arc::new(self.load_or_build(d, kernel)?);
        let mut map = self.tables.lock().expect("null cache poisoned");
        Ok(Arc::clone(map.entry(key).or_insert(table)))
    }

    fn load_or_build(&self, d: usize, kernel: &PowerSeriesKernel) -> Result<NullTable> {
        let seed = derive_seed(self.seed, d, kernel);
        let Some(dir) = &self.dir else {
            return build_null(d, kernel, self.n_ref, self.n_sims, seed);
        };
        let path = dir.join(self.file_name(d, kernel));
        if path.exists() {
            match read_table(&path, d, kernel, self.n_ref, self.n_sims, seed) {
                Ok(t) => return Ok(t),
                Err(e) => log::warn!("rebuilding null table {}: {e}", path.display()),
            }
        }
        let table = build_null(d, kernel, self.n_ref, self.n_sims, seed)?;
        write_table(dir, &path, &table)?;
        Ok(table)
    }
}

/// Free-function form of [`NullCache::get`].
pub fn null_cache_get(cache: &NullCache, d: usize, kernel: &PowerSeriesKernel) -> Result<Arc<NullTable>> {
    cache.get(d, kernel)
}

fn encode(table: &NullTable) -> Vec<u8> {
    let mut buf = Vec::with_capacity(64 + 8 * table.stats.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(table.d as u64).to_le_bytes());
    buf.push(match table.kernel.kind_tag() {
        "geo" => 0u8,
        _ => 1u8,
    });
    buf.extend_from_slice(&table.kernel.parameter().to_le_bytes());
    buf.extend_from_slice(&(table.kernel.truncation as u64).to_le_bytes());
    buf.extend_from_slice(&(table.n_ref as u64).to_le_bytes());
    buf.extend_from_slice(&(table.stats.len() as u64).to_le_bytes());
    buf.extend_from_slice(&table.seed.to_le_bytes());
    for v in &table.stats {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

fn write_table(dir: &Path, path: &Path, table: &NullTable) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(&encode(table)).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn read_table(
    path: &Path,
    d: usize,
    kernel: &PowerSeriesKernel,
    n_ref: usize,
    n_sims: usize,
    seed: u64,
) -> std::result::Result<NullTable, String> {
    let bytes = std::fs::read(path).map_err(|e| e.to_string())?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(8)? != MAGIC {
        return Err("bad magic".into());
    }
    let file_d = cur.u64()? as usize;
    let kind = cur.take(1)?[0];
    let param = cur.f64()?;
    let truncation = cur.u64()? as usize;
    let file_n_ref = cur.u64()? as usize;
    let file_n_sims = cur.u64()? as usize;
    let file_seed = cur.u64()?;
    let want_kind = if kernel.kind_tag() == "geo" { 0 } else { 1 };
    if file_d != d
        || kind != want_kind
        || (param - kernel.parameter()).abs() > 5e-7
        || truncation != kernel.truncation
        || file_n_ref != n_ref
        || file_n_sims != n_sims
        || file_seed != seed
    {
        return Err("header does not match the requested key".into());
    }
    let mut stats = Vec::with_capacity(n_sims);
    for _ in 0..n_sims {
        stats.push(cur.f64()?);
    }
    if cur.pos != bytes.len() {
        return Err("trailing bytes".into());
    }
    if stats.windows(2).any(|w| !(w[0] <= w[1])) || stats.iter().any(|v| !(*v >= 0.0)) {
        return Err("statistics not sorted and nonnegative".into());
    }
    NullTable::from_sorted(d, *kernel, n_ref, seed, stats, DEFAULT_TAIL_MASS).map_err(|e| e.to_string())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err("truncated file".into());
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::norm;

    fn small_table(seed: u64) -> NullTable {
        build_null(2, &PowerSeriesKernel::default(), 60, 300, seed).unwrap()
    }

    #[test]
    fn ball_samples_stay_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for d in 1..6 {
            let s = sample_uniform_ball(d, 2000, &mut rng);
            assert!(s.rows().all(|r| norm(r) <= 1.0));
        }
    }

    #[test]
    fn table_invariants() {
        let t = small_table(3);
        assert_eq!(t.n_sims(), 300);
        assert!(t.stats.windows(2).all(|w| w[0] <= w[1]));
        assert!(t.stats.iter().all(|&v| v >= 0.0));
        assert!(t.tail_rate > 0.0);
        let idx = (0.95f64 * 300.0).ceil() as usize - 1;
        assert_eq!(t.tail_anchor, t.stats[idx]);
    }

    #[test]
    fn p_value_edges() {
        let t = small_table(4);
        assert_eq!(t.p_value(10, 0.0), 1.0);
        let median = t.stats[t.n_sims() / 2];
        let p = t.p_value_of_stat(median);
        assert!((p - 0.5).abs() <= 2.0 / t.n_sims() as f64, "{p}");
        assert!(t.p_value_of_stat(1e9) >= 1e-300);
        let at_anchor = t.p_value_of_stat(t.tail_anchor);
        assert!((at_anchor - t.tail_mass).abs() <= 2.0 / t.n_sims() as f64);
    }

    #[test]
    fn p_value_nonincreasing() {
        let t = small_table(5);
        let top = t.stats.last().unwrap() * 3.0;
        let mut prev = f64::INFINITY;
        for i in 0..=4000 {
            let s = top * i as f64 / 4000.0;
            let p = t.p_value_of_stat(s);
            assert!(p <= prev && p > 0.0 && p <= 1.0);
            prev = p;
        }
    }

    #[test]
    fn deterministic_build() {
        assert_eq!(small_table(9).stats, small_table(9).stats);
        assert_ne!(small_table(9).stats, small_table(10).stats);
    }

    #[test]
    fn rejects_small_simulations() {
        let k = PowerSeriesKernel::default();
        assert!(build_null(2, &k, 10, 300, 0).is_err());
        assert!(build_null(2, &k, 60, 100, 0).is_err());
    }

    #[test]
    fn degenerate_tail_is_an_error() {
        let k = PowerSeriesKernel::default();
        assert!(matches!(
            NullTable::from_sorted(1, k, 50, 0, vec![0.0; 300], 0.05),
            Err(Error::NullDegenerate { d: 1 })
        ));
    }

    #[test]
    fn encode_decode_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let t = small_table(11);
        let path = dir.path().join("t.bin");
        write_table(dir.path(), &path, &t).unwrap();
        let back = read_table(&path, 2, &t.kernel, 60, 300, 11).unwrap();
        assert_eq!(back, t);
        assert!(read_table(&path, 3, &t.kernel, 60, 300, 11).is_err());
    }
}
