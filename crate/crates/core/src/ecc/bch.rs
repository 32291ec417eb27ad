//! Binary narrow-sense primitive BCH codes.
//!
//! The generator is the least common multiple of the minimal polynomials of
//! `alpha, alpha^3, ..., alpha^(2t-1)`, each found as the product of
//! `(x - alpha^j)` over the cyclotomic coset of its exponent. Decoding
//! evaluates the `2t` syndromes `r(alpha^j)`, synthesises the error locator
//! with Berlekamp-Massey, and finds its roots by Chien search.

use super::cyclic;
use super::gf::Field;
use super::{CodeFamily, CodeSpec, DecodeOutcome};
use crate::bits::BitVector;
use crate::error::{PufError, Result};

/// Exponents `{i * 2^j mod order}`.
fn cyclotomic_coset(i: usize, order: usize) -> Vec<usize> {
    let mut coset = vec![i % order];
    let mut x = (2 * i) % order;
    while x != coset[0] {
        coset.push(x);
        x = (2 * x) % order;
    }
    coset
}

/// Minimal polynomial over GF(2) of `alpha^i`.
fn minimal_polynomial(field: &Field, i: usize) -> BitVector {
    let mut coeffs: Vec<u16> = vec![1];
    for j in cyclotomic_coset(i, field.order) {
        let root = field.alpha_pow(j);
        // coeffs *= (x + root)
        let mut next = vec![0u16; coeffs.len() + 1];
        for (d, &c) in coeffs.iter().enumerate() {
            next[d + 1] ^= c;
            next[d] ^= field.mul(c, root);
        }
        coeffs = next;
    }
    coeffs
        .iter()
        .map(|&c| {
            assert!(c <= 1, "minimal polynomial coefficient outside GF(2)");
            c == 1
        })
        .collect()
}

/// Builds the `t`-error-correcting BCH code of length `2^m - 1`.
pub fn bch_build(m: u32, t: usize) -> Result<CodeSpec> {
    let field = Field::get(m)?;
    let n = field.order;
    if t == 0 {
        return Err(PufError::InvalidParameter("BCH correction radius must be at least 1".into()));
    }
    let mut covered = vec![false; n];
    let mut generator = BitVector::parse("1").unwrap();
    for i in (1..2 * t).step_by(2) {
        if i >= n {
            break;
        }
        if covered[i] {
            continue;
        }
        for j in cyclotomic_coset(i, n) {
            covered[j] = true;
        }
        generator = cyclic::mul(&generator, &minimal_polynomial(field, i));
    }
    let deg = generator.len() - 1;
    if 2 * t >= n || deg >= n {
        return Err(PufError::InvalidParameter(format!(
            "t={t} leaves no message bits for BCH length {n}"
        )));
    }
    Ok(CodeSpec {
        family: CodeFamily::Bch,
        n,
        k: n - deg,
        t,
        m,
        design_p: 0.0,
        frozen: Vec::new(),
        generator,
    })
}

pub fn bch_encode(msg: &BitVector, spec: &CodeSpec) -> Result<BitVector> {
    spec.expect_family(CodeFamily::Bch)?;
    spec.check_len(msg, spec.k)?;
    Ok(cyclic::systematic_encode(msg, &spec.generator, spec.n))
}

/// Remainder of the received word modulo the generator, `n - k` bits.
pub fn bch_syndrome(received: &BitVector, spec: &CodeSpec) -> Result<BitVector> {
    spec.expect_family(CodeFamily::Bch)?;
    spec.check_len(received, spec.n)?;
    Ok(cyclic::rem(received, &spec.generator))
}

/// Power-sum syndromes `S_j = r(alpha^j)`, `j = 1..=2t`.
fn power_syndromes(field: &Field, received: &BitVector, t: usize) -> Vec<u16> {
    let ones = received.ones_positions();
    (1..=2 * t)
        .map(|j| {
            ones.iter()
                .fold(0u16, |acc, &i| acc ^ field.alpha_pow(i * j))
        })
        .collect()
}

/// Berlekamp-Massey: shortest LFSR generating `syndromes`, returned as the
/// connection polynomial (coefficients low to high, constant term 1).
fn berlekamp_massey(field: &Field, syndromes: &[u16]) -> Vec<u16> {
    let mut c = vec![1u16];
    let mut b = vec![1u16];
    let mut len = 0usize;
    let mut shift = 1usize;
    let mut last_d = 1u16;
    for r in 0..syndromes.len() {
        let mut d = syndromes[r];
        for i in 1..=len.min(c.len() - 1) {
            d ^= field.mul(c[i], syndromes[r - i]);
        }
        if d == 0 {
            shift += 1;
            continue;
        }
        let coef = field.div(d, last_d);
        let mut next = c.clone();
        if next.len() < b.len() + shift {
            next.resize(b.len() + shift, 0);
        }
        for (i, &bi) in b.iter().enumerate() {
            next[i + shift] ^= field.mul(coef, bi);
        }
        if 2 * len <= r {
            b = c;
            len = r + 1 - len;
            last_d = d;
            shift = 1;
        } else {
            shift += 1;
        }
        c = next;
    }
    c.resize(len + 1, 0);
    c
}

/// Error positions `i` with `locator(alpha^-i) = 0`.
fn chien_search(field: &Field, locator: &[u16], n: usize) -> Vec<usize> {
    (0..n)
        .filter(|&i| {
            let x = field.alpha_pow((field.order - i % field.order) % field.order);
            field.eval(locator, x) == 0
        })
        .collect()
}

pub fn bch_decode(received: &BitVector, spec: &CodeSpec) -> Result<DecodeOutcome> {
    spec.expect_family(CodeFamily::Bch)?;
    spec.check_len(received, spec.n)?;
    let field = Field::get(spec.m)?;
    let parity = spec.n - spec.k;
    let message_of = |cw: &BitVector| cw.slice(parity, spec.k);

    let syndromes = power_syndromes(field, received, spec.t);
    if syndromes.iter().all(|&s| s == 0) {
        return Ok(DecodeOutcome {
            message: message_of(received)?,
            codeword: received.clone(),
            corrected_errors: Some(0),
            decode_failure: false,
        });
    }
    let failure = || -> Result<DecodeOutcome> {
        Ok(DecodeOutcome {
            message: message_of(received)?,
            codeword: received.clone(),
            corrected_errors: None,
            decode_failure: true,
        })
    };

    let locator = berlekamp_massey(field, &syndromes);
    let degree = locator.len() - 1;
    if degree == 0 || degree > spec.t {
        return failure();
    }
    let positions = chien_search(field, &locator, spec.n);
    if positions.len() != degree {
        return failure();
    }
    let mut corrected = received.clone();
    for &i in &positions {
        corrected.flip(i);
    }
    if !cyclic::rem(&corrected, &spec.generator).is_zero() {
        return failure();
    }
    Ok(DecodeOutcome {
        message: message_of(&corrected)?,
        codeword: corrected,
        corrected_errors: Some(degree),
        decode_failure: false,
    })
}
