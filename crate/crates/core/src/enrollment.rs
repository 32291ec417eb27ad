//! Ternary enrollment: classify every cell as stable 0, stable 1, or fuzzy
//! (X) from repeated power-up reads, and mask fuzzy cells over successive
//! power cycles.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::bits::{fractional_error, BitVector, TernaryVector, Trit};
use crate::error::{PufError, Result};
use crate::rng::{self, labels};
use crate::sram::{DeviceId, DeviceModel};

const CHALLENGE_MAGIC: &[u8; 4] = b"PUFC";
const CHALLENGE_VERSION: u8 = 1;

/// Fresh reads per point of the masking error curve.
pub const VALIDATION_READS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassifyMode {
    /// ZERO if the ones fraction is below `low_thresh`, ONE if above
    /// `high_thresh`, X otherwise.
    Threshold,
    /// Any flip across the reads makes the cell X.
    Strict,
    /// The cell keeps its majority value if it stayed unchanged between
    /// consecutive reads at least `constancy_thresh` of the time.
    Constancy,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnrollmentConfig {
    pub reads: usize,
    pub low_thresh: f64,
    pub high_thresh: f64,
    pub constancy_thresh: f64,
    pub mode: ClassifyMode,
}

impl EnrollmentConfig {
    /// Threshold classification. `(0.0, 1.0)` selects strict mode.
    pub fn thresholds(reads: usize, low: f64, high: f64) -> Result<Self> {
        let mode = if low == 0.0 && high == 1.0 {
            ClassifyMode::Strict
        } else {
            ClassifyMode::Threshold
        };
        let cfg = EnrollmentConfig {
            reads,
            low_thresh: low,
            high_thresh: high,
            constancy_thresh: 0.46,
            mode,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn strict(reads: usize) -> Self {
        EnrollmentConfig {
            reads,
            low_thresh: 0.0,
            high_thresh: 1.0,
            constancy_thresh: 0.46,
            mode: ClassifyMode::Strict,
        }
    }

    pub fn constancy(reads: usize, thresh: f64) -> Result<Self> {
        let cfg = EnrollmentConfig {
            reads,
            low_thresh: 0.30,
            high_thresh: 0.70,
            constancy_thresh: thresh,
            mode: ClassifyMode::Constancy,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.reads == 0 {
            return Err(PufError::InvalidParameter("enrollment needs at least one read".into()));
        }
        if !(0.0 <= self.low_thresh && self.low_thresh <= self.high_thresh && self.high_thresh <= 1.0) {
            return Err(PufError::InvalidParameter(format!(
                "thresholds must satisfy 0 <= {} <= {} <= 1",
                self.low_thresh, self.high_thresh
            )));
        }
        if !(0.0..=1.0).contains(&self.constancy_thresh) {
            return Err(PufError::InvalidParameter(format!(
                "constancy threshold {} outside [0, 1]",
                self.constancy_thresh
            )));
        }
        Ok(())
    }

    fn classify(&self, ones: usize, changes: usize) -> Trit {
        let reads = self.reads;
        match self.mode {
            ClassifyMode::Strict => match ones {
                0 => Trit::Zero,
                o if o == reads => Trit::One,
                _ => Trit::X,
            },
            ClassifyMode::Threshold => {
                let frac = ones as f64 / reads as f64;
                if frac < self.low_thresh {
                    Trit::Zero
                } else if frac > self.high_thresh {
                    Trit::One
                } else {
                    Trit::X
                }
            }
            ClassifyMode::Constancy => {
                let constancy = if reads < 2 {
                    1.0
                } else {
                    1.0 - changes as f64 / (reads - 1) as f64
                };
                if constancy < self.constancy_thresh || 2 * ones == reads {
                    Trit::X
                } else {
                    Trit::from_bit(2 * ones > reads)
                }
            }
        }
    }
}

impl Default for EnrollmentConfig {
    /// 100 reads, 30% / 70% thresholds.
    fn default() -> Self {
        EnrollmentConfig {
            reads: 100,
            low_thresh: 0.30,
            high_thresh: 0.70,
            constancy_thresh: 0.46,
            mode: ClassifyMode::Threshold,
        }
    }
}

/// Server-side reference fingerprint of one device.
#[derive(Clone, Debug, PartialEq)]
pub struct TernaryChallenge {
    pub values: TernaryVector,
    pub reads_used: usize,
    pub source_device: DeviceId,
    pub config: EnrollmentConfig,
}

impl TernaryChallenge {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn stable_count(&self) -> usize {
        self.values.stable_count()
    }

    /// Layout: magic `PUFC`, version, device id (u64), reads used (u32),
    /// config (reads u32, low f64, high f64, constancy f64, mode u8), cell
    /// count (u32), packed ternary payload. All integers little-endian.
    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        let mode = match self.config.mode {
            ClassifyMode::Threshold => 0u8,
            ClassifyMode::Strict => 1,
            ClassifyMode::Constancy => 2,
        };
        w.write_all(CHALLENGE_MAGIC)?;
        w.write_all(&[CHALLENGE_VERSION])?;
        w.write_all(&self.source_device.0.to_le_bytes())?;
        w.write_all(&(self.reads_used as u32).to_le_bytes())?;
        w.write_all(&(self.config.reads as u32).to_le_bytes())?;
        w.write_all(&self.config.low_thresh.to_le_bytes())?;
        w.write_all(&self.config.high_thresh.to_le_bytes())?;
        w.write_all(&self.config.constancy_thresh.to_le_bytes())?;
        w.write_all(&[mode])?;
        w.write_all(&(self.values.len() as u32).to_le_bytes())?;
        w.write_all(&self.values.to_packed())?;
        Ok(())
    }

    pub fn load<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        const HEADER: usize = 4 + 1 + 8 + 4 + 4 + 8 + 8 + 8 + 1 + 4;
        if buf.len() < HEADER || &buf[..4] != CHALLENGE_MAGIC {
            return Err(PufError::format("challenge file", "bad magic or truncated header"));
        }
        if buf[4] != CHALLENGE_VERSION {
            return Err(PufError::format("challenge file", format!("unsupported version {}", buf[4])));
        }
        let u32_at = |i: usize| u32::from_le_bytes(buf[i..i + 4].try_into().unwrap()) as usize;
        let f64_at = |i: usize| f64::from_le_bytes(buf[i..i + 8].try_into().unwrap());
        let source_device = DeviceId(u64::from_le_bytes(buf[5..13].try_into().unwrap()));
        let reads_used = u32_at(13);
        let mode = match buf[45] {
            0 => ClassifyMode::Threshold,
            1 => ClassifyMode::Strict,
            2 => ClassifyMode::Constancy,
            other => return Err(PufError::format("challenge file", format!("unknown mode {other}"))),
        };
        let config = EnrollmentConfig {
            reads: u32_at(17),
            low_thresh: f64_at(21),
            high_thresh: f64_at(29),
            constancy_thresh: f64_at(37),
            mode,
        };
        let len = u32_at(46);
        let values = TernaryVector::from_packed(&buf[HEADER..], len)?;
        Ok(TernaryChallenge {
            values,
            reads_used,
            source_device,
            config,
        })
    }

    pub fn save_path(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        self.save(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load_path(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::load(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Classifies every cell from `reads` under `config`.
pub fn enroll(reads: &[BitVector], config: &EnrollmentConfig, source: DeviceId) -> Result<TernaryChallenge> {
    config.validate()?;
    let first = reads.first().ok_or(PufError::EmptyReads)?;
    if reads.len() != config.reads {
        return Err(PufError::InvalidParameter(format!(
            "config expects {} reads, got {}",
            config.reads,
            reads.len()
        )));
    }
    let len = first.len();
    if let Some(bad) = reads.iter().find(|r| r.len() != len) {
        return Err(PufError::LengthMismatch {
            left: len,
            right: bad.len(),
        });
    }
    let mut ones = vec![0u32; len];
    let mut changes = vec![0u32; len];
    for (k, read) in reads.iter().enumerate() {
        for i in read.ones_positions() {
            ones[i] += 1;
        }
        if config.mode == ClassifyMode::Constancy && k > 0 {
            for i in crate::bits::xor(&reads[k - 1], read)?.ones_positions() {
                changes[i] += 1;
            }
        }
    }
    let cells = ones
        .iter()
        .zip(&changes)
        .map(|(&o, &c)| config.classify(o as usize, c as usize))
        .collect();
    Ok(TernaryChallenge {
        values: TernaryVector::new(cells),
        reads_used: reads.len(),
        source_device: source,
        config: *config,
    })
}

/// One point of the masking curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub cycle: usize,
    pub surviving_cells: usize,
    pub error_rate: f64,
}

/// Strict iterative masking over `cycles` power cycles.
///
/// Cycle 0 takes one reference read. Each later cycle takes a fresh read and
/// marks X, permanently, every cell that disagrees with the reference. After
/// each cycle the error of the surviving cells is estimated from the same
/// [`VALIDATION_READS`] held-out reads, which never influence masking.
pub fn iterative_mask(
    device: &DeviceModel,
    cycles: usize,
    seed: u64,
) -> Result<(TernaryChallenge, Vec<CurvePoint>)> {
    if cycles == 0 {
        return Err(PufError::InvalidParameter("iterative masking needs at least one cycle".into()));
    }
    let read = |label: u64, i: u64| device.power_cycle_read(rng::derive_seed(seed, label, i));
    let reference = read(labels::MASKING, 0);
    let validation: Vec<BitVector> = (0..VALIDATION_READS as u64)
        .map(|v| read(labels::VALIDATION, v))
        .collect();
    let mut stable = BitVector::ones(device.cell_count());
    let mut curve = Vec::with_capacity(cycles + 1);
    for cycle in 0..=cycles {
        if cycle > 0 {
            let fresh = read(labels::MASKING, cycle as u64);
            let flipped = crate::bits::xor(&fresh, &reference)?;
            stable = BitVector::from_words(
                stable
                    .words()
                    .iter()
                    .zip(flipped.words())
                    .map(|(s, f)| s & !f)
                    .collect(),
                stable.len(),
            );
        }
        let surviving = stable.count_ones();
        let mask = mask_from(&reference, &stable);
        let error_rate = if surviving == 0 {
            0.0
        } else {
            let mut total = 0.0;
            for probe in &validation {
                total += fractional_error(probe, &reference, Some(&mask))?;
            }
            total / VALIDATION_READS as f64
        };
        curve.push(CurvePoint {
            cycle,
            surviving_cells: surviving,
            error_rate,
        });
    }
    let challenge = TernaryChallenge {
        values: mask_from(&reference, &stable),
        reads_used: cycles + 1,
        source_device: device.device_id,
        config: EnrollmentConfig::strict(cycles + 1),
    };
    Ok((challenge, curve))
}

fn mask_from(reference: &BitVector, stable: &BitVector) -> TernaryVector {
    TernaryVector::new(
        reference
            .iter()
            .zip(stable.iter())
            .map(|(v, s)| if s { Trit::from_bit(v) } else { Trit::X })
            .collect(),
    )
}

/// Ascending indices of cells that are not X.
pub fn stable_cell_indices(ch: &TernaryChallenge) -> Vec<usize> {
    ch.values
        .cells()
        .iter()
        .enumerate()
        .filter_map(|(i, t)| t.is_stable().then_some(i))
        .collect()
}

/// Fractional error between the challenge's stable values and `response`,
/// over unmasked cells only.
pub fn challenge_error_rate(ch: &TernaryChallenge, response: &BitVector) -> Result<f64> {
    fractional_error(&ch.values.values(), response, Some(&ch.values))
}
