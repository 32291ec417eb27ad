//! Error-correcting codes backing the secure sketches.
//!
//! Three families are supported:
//!
//! * repetition codes (odd `n`, majority decoding),
//! * binary BCH codes of length `2^m - 1` (Berlekamp-Massey + Chien search),
//! * polar codes with successive-cancellation decoding.
//!
//! Repetition and BCH codes are cyclic and share the systematic layout used
//! throughout: parity bits at positions `0..n-k`, message bits at `n-k..n`.
//! Their syndrome is the remainder of the received polynomial modulo the
//! generator.

pub mod bch;
pub mod cyclic;
pub mod gf;
pub mod polar;
pub mod repetition;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bits::BitVector;
use crate::error::{PufError, Result};

pub use bch::{bch_build, bch_decode, bch_encode, bch_syndrome};
pub use polar::{polar_construct, polar_encode, polar_sc_decode};
pub use repetition::{rep_decode, rep_encode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CodeFamily {
    Repetition,
    Bch,
    Polar,
}

impl CodeFamily {
    pub fn name(self) -> &'static str {
        match self {
            CodeFamily::Repetition => "repetition",
            CodeFamily::Bch => "BCH",
            CodeFamily::Polar => "polar",
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            CodeFamily::Repetition => 0,
            CodeFamily::Bch => 1,
            CodeFamily::Polar => 2,
        }
    }
}

/// Parameters identifying one code instance.
///
/// `t` is the guaranteed correction radius (zero for polar codes, which have
/// no certified radius); `m` is the field degree of a BCH code (zero
/// otherwise); `design_p` is the construction flip probability of a polar
/// code (zero otherwise).
#[derive(Clone, Debug, PartialEq)]
pub struct CodeSpec {
    family: CodeFamily,
    n: usize,
    k: usize,
    t: usize,
    m: u32,
    design_p: f64,
    frozen: Vec<usize>,
    generator: BitVector,
}

impl CodeSpec {
    pub fn family(&self) -> CodeFamily {
        self.family
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn design_p(&self) -> f64 {
        self.design_p
    }

    /// Sorted frozen positions of a polar code; empty for other families.
    pub fn frozen_set(&self) -> &[usize] {
        &self.frozen
    }

    /// Generator polynomial of a cyclic code (length `n - k + 1`); empty for
    /// polar codes.
    pub fn generator(&self) -> &BitVector {
        &self.generator
    }

    pub fn is_cyclic(&self) -> bool {
        self.family != CodeFamily::Polar
    }

    /// Unfrozen positions of a polar code, ascending.
    pub fn info_set(&self) -> Vec<usize> {
        let mut frozen = self.frozen.iter().peekable();
        (0..self.n)
            .filter(|i| {
                if frozen.peek() == Some(&i) {
                    frozen.next();
                    false
                } else {
                    true
                }
            })
            .collect()
    }

    pub(crate) fn expect_family(&self, family: CodeFamily) -> Result<()> {
        if self.family == family {
            Ok(())
        } else {
            Err(PufError::WrongFamily {
                expected: family.name(),
                actual: self.family.name(),
            })
        }
    }

    pub(crate) fn check_len(&self, v: &BitVector, expected: usize) -> Result<()> {
        if v.len() == expected {
            Ok(())
        } else {
            Err(PufError::LengthMismatch {
                left: v.len(),
                right: expected,
            })
        }
    }

    /// Serialized header form: family byte, `n`, `k`, `t` (u32 LE), `m`
    /// (u8), `design_p` (f64 LE), then for polar codes a frozen-position
    /// bitmap of `ceil(n / 8)` bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(22);
        out.push(self.family.tag());
        out.extend_from_slice(&(self.n as u32).to_le_bytes());
        out.extend_from_slice(&(self.k as u32).to_le_bytes());
        out.extend_from_slice(&(self.t as u32).to_le_bytes());
        out.push(self.m as u8);
        out.extend_from_slice(&self.design_p.to_le_bytes());
        if self.family == CodeFamily::Polar {
            let mut bitmap = BitVector::zeros(self.n);
            for &i in &self.frozen {
                bitmap.set(i, true);
            }
            out.extend_from_slice(&bitmap.to_bytes());
        }
        out
    }

    /// Parses a header written by [`to_bytes`](Self::to_bytes), returning
    /// the spec and the number of bytes consumed. Cyclic codes are rebuilt
    /// from their parameters and checked against the stored `k`.
    pub fn from_bytes(bytes: &[u8]) -> Result<(CodeSpec, usize)> {
        const FIXED: usize = 1 + 4 + 4 + 4 + 1 + 8;
        if bytes.len() < FIXED {
            return Err(PufError::format("code header", "truncated"));
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
        let (n, k, t) = (u32_at(1), u32_at(5), u32_at(9));
        let m = bytes[13] as u32;
        let design_p = f64::from_le_bytes(bytes[14..22].try_into().unwrap());
        let (spec, used) = match bytes[0] {
            0 => (CodeSpec::repetition(n)?, FIXED),
            1 => (bch_build(m, t)?, FIXED),
            2 => {
                let len = n.div_ceil(8);
                if !n.is_power_of_two() || bytes.len() < FIXED + len {
                    return Err(PufError::format("code header", "bad polar frozen bitmap"));
                }
                let bitmap = BitVector::from_bytes(&bytes[FIXED..FIXED + len], n)?;
                let spec = polar::from_frozen(n, bitmap.ones_positions(), design_p)?;
                (spec, FIXED + len)
            }
            other => return Err(PufError::format("code header", format!("unknown family {other}"))),
        };
        if spec.n != n || spec.k != k || spec.t != t {
            return Err(PufError::format(
                "code header",
                format!("stored (n={n}, k={k}, t={t}) disagrees with rebuilt {spec}"),
            ));
        }
        Ok((spec, used))
    }
}

impl fmt::Display for CodeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            CodeFamily::Repetition => write!(f, "rep:{}", self.n),
            CodeFamily::Bch => write!(f, "bch:{}:t={}", self.n, self.t),
            CodeFamily::Polar => write!(f, "polar:{}:{}:p={}", self.n, self.k, self.design_p),
        }
    }
}

/// Parses `rep:N`, `bch:N:t=T`, and `polar:N:K:p=P`.
impl FromStr for CodeSpec {
    type Err = PufError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || PufError::InvalidParameter(format!("unrecognised code {s:?}"));
        let num = |x: &str| x.trim().parse::<usize>().map_err(|_| bad());
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["rep", n] => CodeSpec::repetition(num(n)?),
            ["bch", n, t] => {
                let n = num(n)?;
                let t = num(t.strip_prefix("t=").ok_or_else(bad)?)?;
                if !(n + 1).is_power_of_two() {
                    return Err(PufError::InvalidParameter(format!("BCH length {n} is not 2^m - 1")));
                }
                bch_build((n + 1).trailing_zeros(), t)
            }
            ["polar", n, k, p] => {
                let p = p
                    .strip_prefix("p=")
                    .ok_or_else(bad)?
                    .parse::<f64>()
                    .map_err(|_| bad())?;
                polar_construct(num(n)?, num(k)?, p)
            }
            _ => Err(bad()),
        }
    }
}

/// Result of decoding one block. `corrected_errors` is `None` when the
/// decoder cannot certify a count (polar SC). When `decode_failure` is set
/// the message and codeword are unreliable.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodeOutcome {
    pub message: BitVector,
    pub codeword: BitVector,
    pub corrected_errors: Option<usize>,
    pub decode_failure: bool,
}

/// Encodes one message block with any supported code.
pub fn encode(msg: &BitVector, spec: &CodeSpec) -> Result<BitVector> {
    match spec.family {
        CodeFamily::Repetition => {
            spec.check_len(msg, 1)?;
            rep_encode(msg.bit(0), spec)
        }
        CodeFamily::Bch => bch_encode(msg, spec),
        CodeFamily::Polar => polar_encode(msg, spec),
    }
}

/// Decodes one block; polar codes decode at their design flip probability.
pub fn decode(received: &BitVector, spec: &CodeSpec) -> Result<DecodeOutcome> {
    match spec.family {
        CodeFamily::Repetition => rep_decode(received, spec),
        CodeFamily::Bch => bch_decode(received, spec),
        CodeFamily::Polar => polar_sc_decode(received, spec.design_p, spec),
    }
}

/// Syndrome (remainder modulo the generator) of a cyclic code.
pub fn syndrome(received: &BitVector, spec: &CodeSpec) -> Result<BitVector> {
    if !spec.is_cyclic() {
        return Err(PufError::UnsupportedScheme {
            scheme: "syndrome",
            family: spec.family.name(),
        });
    }
    spec.check_len(received, spec.n)?;
    Ok(cyclic::rem(received, &spec.generator))
}

/// Operating points offered by `pufkit codes list`.
pub fn standard_codes() -> Vec<CodeSpec> {
    let mut out = vec![];
    for n in [3, 5, 7, 9, 11] {
        out.push(CodeSpec::repetition(n).expect("odd length"));
    }
    for (m, t) in [(4, 1), (4, 2), (4, 3), (7, 5), (7, 10), (8, 5), (8, 10), (8, 16), (8, 18), (9, 20)] {
        out.push(bch_build(m, t).expect("valid BCH parameters"));
    }
    for (n, k, p) in [(1024, 128, 0.15), (1024, 256, 0.10), (512, 128, 0.10), (256, 128, 0.05)] {
        out.push(polar_construct(n, k, p).expect("valid polar parameters"));
    }
    out
}
