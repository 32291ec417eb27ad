//! Simulated SRAM PUF devices.
//!
//! Every cell has a preferred power-up state and a probability of settling in
//! the other state on a given power cycle. Flip probabilities are held as
//! 32-bit fixed point (`p * 2^32`), which is also the on-disk form, so saved
//! devices reload bit-identically.

use std::io::{Read, Write};

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::{fractional_error, BitVector};
use crate::error::{PufError, Result};
use crate::rng::{self, labels};

/// 32 KB of SRAM.
pub const DEFAULT_CELL_COUNT: usize = 32 * 1024 * 8;

const DEVICE_MAGIC: &[u8; 4] = b"PUFD";
const DEVICE_VERSION: u8 = 1;

/// Fixed-point scale for flip probabilities.
const FIXED_ONE: f64 = 4_294_967_296.0;

/// Opaque device identifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DeviceId(pub u64);

impl std::fmt::Display for DeviceId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellModel {
    pub preferred: bool,
    pub flip_prob: f64,
}

/// Flip-probability distribution of one pool of cells.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum FlipDist {
    Fixed(f64),
    Uniform { max: f64 },
}

impl FlipDist {
    fn upper(self) -> f64 {
        match self {
            FlipDist::Fixed(p) => p,
            FlipDist::Uniform { max } => max,
        }
    }

    /// E[2p(1-p)] over the pool.
    fn crp_error(self) -> f64 {
        match self {
            FlipDist::Fixed(p) => 2.0 * p * (1.0 - p),
            // p ~ U[0, a]: E[2p(1-p)] = a - 2a^2/3
            FlipDist::Uniform { max: a } => a - 2.0 * a * a / 3.0,
        }
    }

    fn sample(self, rng: &mut rng::Prng) -> f64 {
        match self {
            FlipDist::Fixed(p) => p,
            FlipDist::Uniform { max } => rng::unit_f64(rng) * max,
        }
    }
}

/// Per-cell flip-probability model: a mixture of a near-stable pool and a
/// fuzzy pool.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorProfile {
    pub stable_fraction: f64,
    pub stable_pool: FlipDist,
    pub fuzzy_pool: FlipDist,
}

impl Default for ErrorProfile {
    fn default() -> Self {
        ErrorProfile {
            stable_fraction: 0.90,
            stable_pool: FlipDist::Uniform { max: 0.001 },
            fuzzy_pool: FlipDist::Uniform { max: 0.5 },
        }
    }
}

impl ErrorProfile {
    /// Every cell reads its preferred state.
    pub fn noiseless() -> Self {
        Self::uniform(0.0)
    }

    /// Every cell flips with exactly `p`.
    pub fn uniform(p: f64) -> Self {
        ErrorProfile {
            stable_fraction: 1.0,
            stable_pool: FlipDist::Fixed(p),
            fuzzy_pool: FlipDist::Fixed(p),
        }
    }

    pub fn fuzzy_fraction(&self) -> f64 {
        1.0 - self.stable_fraction
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.stable_fraction) {
            return Err(PufError::InvalidParameter(format!(
                "stable_fraction {} outside [0, 1]",
                self.stable_fraction
            )));
        }
        for pool in [self.stable_pool, self.fuzzy_pool] {
            if !(0.0..=0.5).contains(&pool.upper()) {
                return Err(PufError::InvalidParameter(format!(
                    "flip probability bound {} outside [0, 0.5]",
                    pool.upper()
                )));
            }
        }
        Ok(())
    }

    /// Analytic mean over cells of `2p(1-p)`: the expected disagreement
    /// between two independent reads.
    pub fn expected_crp_error(&self) -> f64 {
        self.stable_fraction * self.stable_pool.crp_error()
            + self.fuzzy_fraction() * self.fuzzy_pool.crp_error()
    }

    fn sample_flip(&self, rng: &mut rng::Prng) -> f64 {
        if rng::unit_f64(rng) < self.stable_fraction {
            self.stable_pool.sample(rng)
        } else {
            self.fuzzy_pool.sample(rng)
        }
    }
}

/// A simulated SRAM chip.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeviceModel {
    pub device_id: DeviceId,
    pub seed: u64,
    preferred: BitVector,
    flip_fixed: Vec<u32>,
}

fn to_fixed(p: f64) -> u32 {
    (p * FIXED_ONE).round().min(u32::MAX as f64) as u32
}

/// Builds a device deterministically from `(seed, profile, cell_count)`.
pub fn new_device(seed: u64, profile: &ErrorProfile, cell_count: usize) -> Result<DeviceModel> {
    profile.validate()?;
    if cell_count == 0 || !cell_count.is_multiple_of(8) {
        return Err(PufError::InvalidParameter(format!(
            "cell count {cell_count} must be a positive multiple of 8"
        )));
    }
    let mut rng = rng::prng(seed);
    let mut preferred = BitVector::zeros(cell_count);
    let mut flip_fixed = Vec::with_capacity(cell_count);
    for i in 0..cell_count {
        preferred.set(i, rng.next_u64() >> 63 == 1);
        flip_fixed.push(to_fixed(profile.sample_flip(&mut rng)));
    }
    Ok(DeviceModel {
        device_id: DeviceId(seed),
        seed,
        preferred,
        flip_fixed,
    })
}

impl DeviceModel {
    pub fn from_cells(device_id: DeviceId, seed: u64, cells: &[CellModel]) -> Result<Self> {
        if cells.is_empty() || !cells.len().is_multiple_of(8) {
            return Err(PufError::InvalidParameter(format!(
                "cell count {} must be a positive multiple of 8",
                cells.len()
            )));
        }
        if let Some(c) = cells.iter().find(|c| !(0.0..=0.5).contains(&c.flip_prob)) {
            return Err(PufError::InvalidParameter(format!(
                "flip probability {} outside [0, 0.5]",
                c.flip_prob
            )));
        }
        Ok(DeviceModel {
            device_id,
            seed,
            preferred: cells.iter().map(|c| c.preferred).collect(),
            flip_fixed: cells.iter().map(|c| to_fixed(c.flip_prob)).collect(),
        })
    }

    pub fn cell_count(&self) -> usize {
        self.flip_fixed.len()
    }

    pub fn preferred(&self) -> &BitVector {
        &self.preferred
    }

    pub fn cell(&self, i: usize) -> CellModel {
        CellModel {
            preferred: self.preferred.bit(i),
            flip_prob: self.flip_prob(i),
        }
    }

    pub fn flip_prob(&self, i: usize) -> f64 {
        self.flip_fixed[i] as f64 / FIXED_ONE
    }

    pub fn mean_flip_prob(&self) -> f64 {
        self.flip_fixed.iter().map(|&f| f as f64).sum::<f64>() / FIXED_ONE / self.cell_count() as f64
    }

    /// Mean over cells of `2p(1-p)`.
    pub fn expected_crp_error(&self) -> f64 {
        let sum: f64 = self
            .flip_fixed
            .iter()
            .map(|&f| {
                let p = f as f64 / FIXED_ONE;
                2.0 * p * (1.0 - p)
            })
            .sum();
        sum / self.cell_count() as f64
    }

    fn read_key(&self, read_seed: u64) -> u64 {
        rng::derive_seed(self.seed, labels::READ, read_seed)
    }

    #[inline]
    fn read_cell(&self, key: u64, i: usize) -> bool {
        let u = (rng::splitmix64_at(key, i as u64) >> 32) as u32;
        let flipped = u < self.flip_fixed[i];
        self.preferred.bit(i) ^ flipped
    }

    /// One power-off/power-on read. Cell `i` takes its non-preferred value
    /// when the high 32 bits of output `i` of the read's SplitMix64 stream
    /// fall below the cell's fixed-point flip probability.
    pub fn power_cycle_read(&self, read_seed: u64) -> BitVector {
        let key = self.read_key(read_seed);
        let words: Vec<u64> = (0..self.cell_count().div_ceil(64))
            .map(|w| {
                let mut word = 0u64;
                for b in 0..64 {
                    let i = w * 64 + b;
                    if i >= self.cell_count() {
                        break;
                    }
                    if self.read_cell(key, i) {
                        word |= 1 << b;
                    }
                }
                word
            })
            .collect();
        BitVector::from_words(words, self.cell_count())
    }

    /// The same read as [`power_cycle_read`](Self::power_cycle_read),
    /// restricted to `indices` (in the given order).
    pub fn read_cells(&self, read_seed: u64, indices: &[usize]) -> Result<BitVector> {
        let key = self.read_key(read_seed);
        indices
            .iter()
            .map(|&i| {
                if i >= self.cell_count() {
                    Err(PufError::IndexOutOfRange {
                        index: i,
                        len: self.cell_count(),
                    })
                } else {
                    Ok(self.read_cell(key, i))
                }
            })
            .collect()
    }

    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(DEVICE_MAGIC)?;
        w.write_all(&[DEVICE_VERSION])?;
        w.write_all(&self.device_id.0.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&(self.cell_count() as u32).to_le_bytes())?;
        w.write_all(&self.preferred.to_bytes())?;
        let mut buf = Vec::with_capacity(4 * self.cell_count());
        for f in &self.flip_fixed {
            buf.extend_from_slice(&f.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn load<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; 4 + 1 + 8 + 8 + 4];
        r.read_exact(&mut header)?;
        if &header[..4] != DEVICE_MAGIC {
            return Err(PufError::format("device file", "bad magic"));
        }
        if header[4] != DEVICE_VERSION {
            return Err(PufError::format("device file", format!("unsupported version {}", header[4])));
        }
        let device_id = DeviceId(u64::from_le_bytes(header[5..13].try_into().unwrap()));
        let seed = u64::from_le_bytes(header[13..21].try_into().unwrap());
        let cells = u32::from_le_bytes(header[21..25].try_into().unwrap()) as usize;
        if cells == 0 || !cells.is_multiple_of(8) {
            return Err(PufError::format("device file", format!("cell count {cells}")));
        }
        let mut pref = vec![0u8; cells / 8];
        r.read_exact(&mut pref)?;
        let mut flips = vec![0u8; 4 * cells];
        r.read_exact(&mut flips)?;
        let flip_fixed: Vec<u32> = flips
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if flip_fixed.iter().any(|&f| f > 1 << 31) {
            return Err(PufError::format("device file", "flip probability above 0.5"));
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(PufError::format("device file", "trailing bytes"));
        }
        Ok(DeviceModel {
            device_id,
            seed,
            preferred: BitVector::from_bytes(&pref, cells)?,
            flip_fixed,
        })
    }

    pub fn save_path(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.save(std::io::BufWriter::new(f))
    }

    pub fn load_path(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::load(std::io::BufReader::new(f))
    }
}

fn read_seeds(base: u64, count: usize) -> Vec<u64> {
    (0..count as u64)
        .map(|i| rng::derive_seed(base, labels::TRIAL, i))
        .collect()
}

/// Mean pairwise fractional error between `trials` independent reads of one
/// device.
pub fn intra_error_rate(device: &DeviceModel, trials: usize, seed: u64) -> Result<f64> {
    if trials < 2 {
        return Err(PufError::InvalidParameter("intra error rate needs at least two reads".into()));
    }
    let reads: Vec<BitVector> = read_seeds(seed, trials)
        .into_par_iter()
        .map(|s| device.power_cycle_read(s))
        .collect();
    let pairs: Vec<(usize, usize)> = (0..trials)
        .flat_map(|i| (i + 1..trials).map(move |j| (i, j)))
        .collect();
    let total: f64 = pairs
        .par_iter()
        .map(|&(i, j)| fractional_error(&reads[i], &reads[j], None))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    Ok(total / pairs.len() as f64)
}

/// Mean fractional error between reads of `a` and reads of `b`, pairing read
/// `i` of one with read `i` of the other. A device compared with itself
/// falls back to [`intra_error_rate`].
pub fn inter_error_rate(a: &DeviceModel, b: &DeviceModel, trials: usize, seed: u64) -> Result<f64> {
    if a.cell_count() != b.cell_count() {
        return Err(PufError::LengthMismatch {
            left: a.cell_count(),
            right: b.cell_count(),
        });
    }
    if a == b {
        return intra_error_rate(a, trials.max(2), seed);
    }
    if trials == 0 {
        return Err(PufError::InvalidParameter("inter error rate needs at least one read".into()));
    }
    let seeds_a = read_seeds(seed, trials);
    let seeds_b = read_seeds(rng::derive_seed(seed, labels::TRIAL, u64::MAX), trials);
    let total: f64 = seeds_a
        .par_iter()
        .zip(seeds_b.par_iter())
        .map(|(&sa, &sb)| fractional_error(&a.power_cycle_read(sa), &b.power_cycle_read(sb), None))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    Ok(total / trials as f64)
}
