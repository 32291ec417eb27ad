//! Secure sketches and the fuzzy extractor built on them.
//!
//! A response `w` is cut into blocks of the code length. Each block gets its
//! own sketch (code-offset or syndrome); the key is a SHA-256 extraction of
//! the whole response under a public extractor seed. A digest of the key
//! travels with the helper so that reproduction can tell a correct key from
//! a wrong one.

use std::fmt;
use std::io::{Read, Write};

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bits::{xor, BitVector};
use crate::ecc::{self, CodeFamily, CodeSpec, DecodeOutcome};
use crate::error::{PufError, Result};
use crate::rng::{self, labels};

const HELPER_MAGIC: &[u8; 4] = b"PUFH";
const HELPER_VERSION: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    CodeOffset,
    Syndrome,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::CodeOffset => "code-offset",
            Scheme::Syndrome => "syndrome",
        }
    }

    fn tag(self) -> u8 {
        match self {
            Scheme::CodeOffset => 0,
            Scheme::Syndrome => 1,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scheme {
    type Err = PufError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "code-offset" | "code_offset" => Ok(Scheme::CodeOffset),
            "syndrome" => Ok(Scheme::Syndrome),
            _ => Err(PufError::InvalidParameter(format!("unknown scheme {s:?}"))),
        }
    }
}

/// Extracted key. `Debug` does not print the bits.
#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey {
    bits: BitVector,
}

impl SecretKey {
    pub fn bits(&self) -> &BitVector {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Hex of the LSB-first packed bytes.
    pub fn to_hex(&self) -> String {
        self.bits.to_bytes().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn check(&self) -> [u8; 32] {
        Sha256::digest(self.bits.to_bytes()).into()
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SecretKey({} bits)", self.bits.len())
    }
}

/// Public data needed to reproduce a key.
#[derive(Clone, Debug, PartialEq)]
pub struct HelperData {
    pub scheme: Scheme,
    pub code: CodeSpec,
    /// Per-block sketches, concatenated.
    pub sketch: BitVector,
    pub extractor_seed: [u8; 16],
    pub key_check: [u8; 32],
    pub key_bits: usize,
}

impl HelperData {
    pub fn blocks(&self) -> usize {
        blocks_for(&self.code, self.key_bits)
    }

    /// Response length the helper expects.
    pub fn response_len(&self) -> usize {
        self.blocks() * self.code.n()
    }

    /// Information the sketch reveals about `w`: `n - k` bits per block for
    /// either scheme (a code-offset sketch is `n` bits long but a uniformly
    /// random codeword hides `k` of them).
    pub fn leaked_bits(&self) -> usize {
        self.blocks() * (self.code.n() - self.code.k())
    }

    /// Layout: magic `PUFH`, version, scheme byte, code header, key bits
    /// (u32), extractor seed (16 bytes), key check (32 bytes), block count
    /// (u32), sketch length in bits (u32), sketch bytes. Little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(HELPER_MAGIC);
        out.push(HELPER_VERSION);
        out.push(self.scheme.tag());
        out.extend_from_slice(&self.code.to_bytes());
        out.extend_from_slice(&(self.key_bits as u32).to_le_bytes());
        out.extend_from_slice(&self.extractor_seed);
        out.extend_from_slice(&self.key_check);
        out.extend_from_slice(&(self.blocks() as u32).to_le_bytes());
        out.extend_from_slice(&(self.sketch.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.sketch.to_bytes());
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let bad = |reason: &str| PufError::format("helper file", reason);
        if buf.len() < 6 || &buf[..4] != HELPER_MAGIC {
            return Err(bad("bad magic or truncated header"));
        }
        if buf[4] != HELPER_VERSION {
            return Err(PufError::format("helper file", format!("unsupported version {}", buf[4])));
        }
        let scheme = match buf[5] {
            0 => Scheme::CodeOffset,
            1 => Scheme::Syndrome,
            other => return Err(PufError::format("helper file", format!("unknown scheme {other}"))),
        };
        let (code, used) = CodeSpec::from_bytes(&buf[6..])?;
        let mut pos = 6 + used;
        if buf.len() < pos + 4 + 16 + 32 + 4 + 4 {
            return Err(bad("truncated"));
        }
        let u32_at = |i: usize| u32::from_le_bytes(buf[i..i + 4].try_into().unwrap()) as usize;
        let key_bits = u32_at(pos);
        pos += 4;
        let extractor_seed: [u8; 16] = buf[pos..pos + 16].try_into().unwrap();
        pos += 16;
        let key_check: [u8; 32] = buf[pos..pos + 32].try_into().unwrap();
        pos += 32;
        let blocks = u32_at(pos);
        let sketch_bits = u32_at(pos + 4);
        pos += 8;
        let helper = HelperData {
            scheme,
            code,
            sketch: BitVector::from_bytes(&buf[pos..], sketch_bits)?,
            extractor_seed,
            key_check,
            key_bits,
        };
        if key_bits == 0 || blocks != helper.blocks() || sketch_bits != blocks * sketch_len(scheme, &helper.code) {
            return Err(bad("block count or sketch length disagrees with code"));
        }
        Ok(helper)
    }

    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }

    pub fn save_path(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        Ok(std::fs::write(path, self.to_bytes())?)
    }

    pub fn load_path(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Number of code blocks needed for a key of `key_bits`: `ceil(key_bits / k)`.
pub fn blocks_for(code: &CodeSpec, key_bits: usize) -> usize {
    key_bits.div_ceil(code.k())
}

fn sketch_len(scheme: Scheme, code: &CodeSpec) -> usize {
    match scheme {
        Scheme::CodeOffset => code.n(),
        Scheme::Syndrome => code.n() - code.k(),
    }
}

fn check_scheme(scheme: Scheme, code: &CodeSpec) -> Result<()> {
    if scheme == Scheme::Syndrome && !code.is_cyclic() {
        return Err(PufError::UnsupportedScheme {
            scheme: "syndrome",
            family: code.family().name(),
        });
    }
    Ok(())
}

/// Random codeword from `codeword_seed`; returns `(w ^ c, c)`.
pub fn sketch_code_offset(w: &BitVector, code: &CodeSpec, codeword_seed: u64) -> Result<(BitVector, BitVector)> {
    if w.len() != code.n() {
        return Err(PufError::LengthMismatch {
            left: w.len(),
            right: code.n(),
        });
    }
    let mut rng = rng::prng(codeword_seed);
    let msg: BitVector = (0..code.k()).map(|_| rng.next_u64() >> 63 == 1).collect();
    let codeword = ecc::encode(&msg, code)?;
    Ok((xor(w, &codeword)?, codeword))
}

/// Decodes `w' ^ sketch` and shifts back. Returns the recovered `w`.
pub fn recover_code_offset(
    w_prime: &BitVector,
    sketch: &BitVector,
    code: &CodeSpec,
) -> Result<(BitVector, DecodeOutcome)> {
    let shifted = xor(w_prime, sketch)?;
    let outcome = ecc::decode(&shifted, code)?;
    Ok((xor(&outcome.codeword, sketch)?, outcome))
}

pub fn sketch_syndrome(w: &BitVector, code: &CodeSpec) -> Result<BitVector> {
    check_scheme(Scheme::Syndrome, code)?;
    ecc::syndrome(w, code)
}

/// Finds the lowest-weight `e` with `syn(e) = syn(w') ^ s` and returns
/// `w' ^ e`.
///
/// The syndrome difference placed in the parity positions is a vector of
/// that syndrome; decoding it to the nearest codeword `c` leaves `e` as the
/// difference.
pub fn recover_syndrome(w_prime: &BitVector, s: &BitVector, code: &CodeSpec) -> Result<(BitVector, DecodeOutcome)> {
    check_scheme(Scheme::Syndrome, code)?;
    let diff = xor(&ecc::syndrome(w_prime, code)?, s)?;
    let padded = BitVector::concat([&diff, &BitVector::zeros(code.k())]);
    let outcome = ecc::decode(&padded, code)?;
    let e = xor(&padded, &outcome.codeword)?;
    Ok((xor(w_prime, &e)?, outcome))
}

fn extract(extractor_seed: &[u8; 16], w: &BitVector, key_bits: usize) -> SecretKey {
    let w_bytes = w.to_bytes();
    let mut stream = Vec::with_capacity(key_bits.div_ceil(8));
    let mut j = 0u32;
    while stream.len() * 8 < key_bits {
        let mut h = Sha256::new();
        h.update(extractor_seed);
        h.update(&w_bytes);
        if j > 0 {
            h.update(j.to_le_bytes());
        }
        stream.extend_from_slice(&h.finalize());
        j += 1;
    }
    SecretKey {
        bits: BitVector::from_bytes(&stream[..key_bits.div_ceil(8)], key_bits).expect("enough digest bytes"),
    }
}

/// Key and helper for `w`. `w` must hold `blocks_for(code, key_bits)`
/// blocks of `n` bits.
pub fn generate(
    w: &BitVector,
    scheme: Scheme,
    code: &CodeSpec,
    key_bits: usize,
    seed: u64,
) -> Result<(SecretKey, HelperData)> {
    check_scheme(scheme, code)?;
    if key_bits == 0 {
        return Err(PufError::InvalidParameter("key length must be positive".into()));
    }
    let blocks = blocks_for(code, key_bits);
    let n = code.n();
    if w.len() != blocks * n {
        return Err(PufError::LengthMismatch {
            left: w.len(),
            right: blocks * n,
        });
    }
    let mut sketches = Vec::with_capacity(blocks);
    for b in 0..blocks {
        let block = w.slice(b * n, n)?;
        sketches.push(match scheme {
            Scheme::CodeOffset => {
                sketch_code_offset(&block, code, rng::derive_seed(seed, labels::CODEWORD, b as u64))?.0
            }
            Scheme::Syndrome => sketch_syndrome(&block, code)?,
        });
    }
    let mut extractor_seed = [0u8; 16];
    rng::prng(rng::derive_seed(seed, labels::EXTRACTOR, 0)).fill_bytes(&mut extractor_seed);
    let key = extract(&extractor_seed, w, key_bits);
    let helper = HelperData {
        scheme,
        code: code.clone(),
        sketch: BitVector::concat(&sketches),
        extractor_seed,
        key_check: key.check(),
        key_bits,
    };
    Ok((key, helper))
}

/// Outcome of a reproduction attempt, kept even when the key is wrong so
/// that bit error against the enrolled key can be measured.
#[derive(Clone, Debug)]
pub struct Recovery {
    pub candidate: SecretKey,
    pub recovered_w: BitVector,
    pub accepted: bool,
    pub failed_blocks: usize,
}

pub fn recover(w_prime: &BitVector, helper: &HelperData) -> Result<Recovery> {
    check_scheme(helper.scheme, &helper.code)?;
    let n = helper.code.n();
    let blocks = helper.blocks();
    if w_prime.len() != blocks * n {
        return Err(PufError::LengthMismatch {
            left: w_prime.len(),
            right: blocks * n,
        });
    }
    let s_len = sketch_len(helper.scheme, &helper.code);
    let mut parts = Vec::with_capacity(blocks);
    let mut failed_blocks = 0;
    for b in 0..blocks {
        let block = w_prime.slice(b * n, n)?;
        let sketch = helper.sketch.slice(b * s_len, s_len)?;
        let (w, outcome) = match helper.scheme {
            Scheme::CodeOffset => recover_code_offset(&block, &sketch, &helper.code)?,
            Scheme::Syndrome => recover_syndrome(&block, &sketch, &helper.code)?,
        };
        failed_blocks += outcome.decode_failure as usize;
        parts.push(w);
    }
    let recovered_w = BitVector::concat(&parts);
    let candidate = extract(&helper.extractor_seed, &recovered_w, helper.key_bits);
    let accepted = candidate.check() == helper.key_check;
    Ok(Recovery {
        candidate,
        recovered_w,
        accepted,
        failed_blocks,
    })
}

/// The enrolled key, or `None` (REJECT) when the recovered key does not
/// match the helper's check digest.
pub fn reproduce(w_prime: &BitVector, helper: &HelperData) -> Result<Option<SecretKey>> {
    let r = recover(w_prime, helper)?;
    Ok(r.accepted.then_some(r.candidate))
}

/// True when the code family can carry `scheme`.
pub fn supports(scheme: Scheme, family: CodeFamily) -> bool {
    scheme == Scheme::CodeOffset || family != CodeFamily::Polar
}
