//! Repetition codes: `n` copies of one bit, decoded by majority vote.
//!
//! As a cyclic code the generator is `1 + x + ... + x^(n-1)`, so the shared
//! syndrome map gives bit `i` = `w[i] ^ w[n-1]`.

use super::{CodeFamily, CodeSpec, DecodeOutcome};
use crate::bits::BitVector;
use crate::error::{PufError, Result};

impl CodeSpec {
    pub fn repetition(n: usize) -> Result<CodeSpec> {
        if n.is_multiple_of(2) {
            return Err(PufError::InvalidParameter(format!(
                "repetition length {n} must be odd"
            )));
        }
        Ok(CodeSpec {
            family: CodeFamily::Repetition,
            n,
            k: 1,
            t: (n - 1) / 2,
            m: 0,
            design_p: 0.0,
            frozen: Vec::new(),
            generator: BitVector::ones(n),
        })
    }
}

pub fn rep_encode(msg_bit: bool, spec: &CodeSpec) -> Result<BitVector> {
    spec.expect_family(CodeFamily::Repetition)?;
    Ok(if msg_bit {
        BitVector::ones(spec.n)
    } else {
        BitVector::zeros(spec.n)
    })
}

pub fn rep_decode(block: &BitVector, spec: &CodeSpec) -> Result<DecodeOutcome> {
    spec.expect_family(CodeFamily::Repetition)?;
    spec.check_len(block, spec.n)?;
    let ones = block.count_ones();
    let bit = 2 * ones > spec.n;
    let minority = ones.min(spec.n - ones);
    Ok(DecodeOutcome {
        message: std::iter::once(bit).collect(),
        codeword: rep_encode(bit, spec)?,
        corrected_errors: Some(minority),
        decode_failure: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ecc::syndrome;

    #[test]
    fn encode_examples() {
        assert_eq!(rep_encode(true, &CodeSpec::repetition(3).unwrap()).unwrap().to_string(), "111");
        assert_eq!(rep_encode(false, &CodeSpec::repetition(5).unwrap()).unwrap().to_string(), "00000");
    }

    #[test]
    fn decode_examples() {
        let spec = CodeSpec::repetition(3).unwrap();
        let out = rep_decode(&BitVector::parse("110").unwrap(), &spec).unwrap();
        assert_eq!(out.message.to_string(), "1");
        assert_eq!(out.corrected_errors, Some(1));
        let spec = CodeSpec::repetition(5).unwrap();
        let out = rep_decode(&BitVector::parse("00000").unwrap(), &spec).unwrap();
        assert_eq!(out.message.to_string(), "0");
        assert_eq!(out.corrected_errors, Some(0));
        assert!(rep_decode(&BitVector::zeros(4), &spec).is_err());
    }

    #[test]
    fn wrong_family_rejected() {
        let bch = crate::ecc::bch_build(4, 1).unwrap();
        assert!(matches!(rep_encode(true, &bch), Err(PufError::WrongFamily { .. })));
    }

    #[test]
    fn corrects_every_pattern_within_radius() {
        for n in (1..=15).step_by(2) {
            let spec = CodeSpec::repetition(n).unwrap();
            for b in [false, true] {
                let cw = rep_encode(b, &spec).unwrap();
                for pattern in 0u32..(1 << n) {
                    if pattern.count_ones() as usize > spec.t() {
                        continue;
                    }
                    let mut r = cw.clone();
                    for i in 0..n {
                        if pattern >> i & 1 == 1 {
                            r.flip(i);
                        }
                    }
                    let out = rep_decode(&r, &spec).unwrap();
                    assert_eq!(out.message.bit(0), b);
                    assert_eq!(out.corrected_errors, Some(pattern.count_ones() as usize));
                }
            }
        }
    }

    #[test]
    fn round_trip_up_to_31() {
        for n in (1..=31).step_by(2) {
            let spec = CodeSpec::repetition(n).unwrap();
            for b in [false, true] {
                let out = rep_decode(&rep_encode(b, &spec).unwrap(), &spec).unwrap();
                assert_eq!(out.message.bit(0), b);
                assert_eq!(out.corrected_errors, Some(0));
            }
        }
    }

    #[test]
    fn syndrome_is_parity_against_last_bit() {
        let spec = CodeSpec::repetition(5).unwrap();
        let w = BitVector::parse("10110").unwrap();
        // last bit 0, so the syndrome is the first four bits
        assert_eq!(syndrome(&w, &spec).unwrap().to_string(), "1011");
        assert!(syndrome(&BitVector::ones(5), &spec).unwrap().is_zero());
    }
}
