//! Recorded SRAM dumps: a directory of `read_NNNN.bin` files, one raw
//! memory image per power-up, bit `i` of the array at byte `i / 8`, bit
//! `i % 8`.
//!
//! A new capture may carry `manifest.sha256` in `sha256sum` format; when it
//! is present every listed file is verified on load.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::bits::BitVector;
use crate::enrollment::{enroll, EnrollmentConfig, TernaryChallenge};
use crate::error::{PufError, Result};
use crate::protocol::ResponseSource;
use crate::sram::DeviceId;

pub const MANIFEST_NAME: &str = "manifest.sha256";

#[derive(Clone, Debug, PartialEq)]
pub struct DumpCorpus {
    pub reads: Vec<BitVector>,
    pub source: PathBuf,
}

impl DumpCorpus {
    pub fn new(reads: Vec<BitVector>, source: impl Into<PathBuf>) -> Result<Self> {
        let first = reads.first().ok_or(PufError::EmptyReads)?;
        if let Some(bad) = reads.iter().find(|r| r.len() != first.len()) {
            return Err(PufError::LengthMismatch {
                left: first.len(),
                right: bad.len(),
            });
        }
        Ok(DumpCorpus {
            reads,
            source: source.into(),
        })
    }

    pub fn cell_count(&self) -> usize {
        self.reads[0].len()
    }

    pub fn len(&self) -> usize {
        self.reads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reads.is_empty()
    }
}

/// Replays recorded reads: `read_seed` picks read `read_seed % len`.
impl ResponseSource for DumpCorpus {
    fn cell_count(&self) -> usize {
        DumpCorpus::cell_count(self)
    }

    fn read_cells(&self, read_seed: u64, indices: &[usize]) -> Result<BitVector> {
        self.reads[(read_seed % self.reads.len() as u64) as usize].gather(indices)
    }
}

fn dump_number(name: &str) -> Option<u64> {
    let digits = name.strip_prefix("read_")?.strip_suffix(".bin")?;
    if digits.len() < 4 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Loads every `read_NNNN.bin` in `dir`, ordered by `NNNN`. Other files are
/// ignored.
pub fn load_dump_dir(dir: impl AsRef<Path>) -> Result<DumpCorpus> {
    let dir = dir.as_ref();
    let mut files = Vec::new();
    for item in fs::read_dir(dir)? {
        let item = item?;
        let name = item.file_name();
        if let Some(n) = name.to_str().and_then(dump_number) {
            files.push((n, name.to_string_lossy().into_owned()));
        }
    }
    if files.is_empty() {
        return Err(PufError::EmptyReads);
    }
    files.sort();
    let manifest = read_manifest(dir)?;
    let mut reads = Vec::with_capacity(files.len());
    let mut size = None;
    for (_, name) in &files {
        let bytes = fs::read(dir.join(name))?;
        match size {
            None => size = Some(bytes.len()),
            Some(s) if s != bytes.len() => {
                return Err(PufError::format(
                    "dump directory",
                    format!("{name} is {} bytes, earlier files are {s}", bytes.len()),
                ))
            }
            _ => {}
        }
        if let Some(expected) = manifest.iter().find(|(_, n)| n == name).map(|(d, _)| d) {
            if *expected != sha256_hex(&bytes) {
                return Err(PufError::format("dump directory", format!("{name} fails its manifest digest")));
            }
        }
        reads.push(BitVector::from_bytes(&bytes, bytes.len() * 8)?);
    }
    DumpCorpus::new(reads, dir)
}

fn read_manifest(dir: &Path) -> Result<Vec<(String, String)>> {
    let path = dir.join(MANIFEST_NAME);
    if !path.exists() {
        return Ok(Vec::new());
    }
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let (digest, name) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| PufError::format("manifest", format!("bad line {line:?}")))?;
            Ok((digest.to_ascii_lowercase(), name.trim_start().trim_start_matches('*').to_string()))
        })
        .collect()
}

/// Writes `read_0000.bin`, `read_0001.bin`, ... and, when `manifest` is
/// set, a digest manifest. Read lengths must be whole bytes.
pub fn write_dump_dir(dir: impl AsRef<Path>, reads: &[BitVector], manifest: bool) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut lines = String::new();
    for (i, read) in reads.iter().enumerate() {
        if !read.len().is_multiple_of(8) {
            return Err(PufError::InvalidParameter(format!(
                "dump reads must be whole bytes, got {} bits",
                read.len()
            )));
        }
        let name = format!("read_{i:04}.bin");
        let bytes = read.to_bytes();
        fs::write(dir.join(&name), &bytes)?;
        lines.push_str(&format!("{}  {name}\n", sha256_hex(&bytes)));
    }
    if manifest {
        fs::write(dir.join(MANIFEST_NAME), lines)?;
    }
    Ok(())
}

/// [`enroll`] over the first `config.reads` recorded reads.
pub fn corpus_enroll(corpus: &DumpCorpus, config: &EnrollmentConfig, device: DeviceId) -> Result<TernaryChallenge> {
    if corpus.len() < config.reads {
        return Err(PufError::InvalidParameter(format!(
            "corpus has {} reads, config needs {}",
            corpus.len(),
            config.reads
        )));
    }
    enroll(&corpus.reads[..config.reads], config, device)
}
