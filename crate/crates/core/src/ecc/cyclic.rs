//! Binary polynomial helpers for cyclic codes. A polynomial is a
//! [`BitVector`] whose bit `i` is the coefficient of `x^i`.

use crate::bits::BitVector;

pub fn degree(p: &BitVector) -> Option<usize> {
    (0..p.len()).rev().find(|&i| p.bit(i))
}

pub fn mul(a: &BitVector, b: &BitVector) -> BitVector {
    let (Some(da), Some(db)) = (degree(a), degree(b)) else {
        return BitVector::zeros(1);
    };
    let mut out = BitVector::zeros(da + db + 1);
    for i in a.ones_positions() {
        for j in b.ones_positions() {
            out.flip(i + j);
        }
    }
    out
}

fn xor_shifted(words: &mut [u64], g: &[u64], shift: usize) {
    let (word_off, bit_off) = (shift / 64, shift % 64);
    for (j, &gw) in g.iter().enumerate() {
        if let Some(w) = words.get_mut(j + word_off) {
            *w ^= gw << bit_off;
        }
        if bit_off != 0 {
            if let Some(w) = words.get_mut(j + word_off + 1) {
                *w ^= gw >> (64 - bit_off);
            }
        }
    }
}

/// `p mod g`, returned with exactly `deg(g)` coefficients. `g` must have a
/// set leading bit at index `g.len() - 1`.
pub fn rem(p: &BitVector, g: &BitVector) -> BitVector {
    let dg = g.len() - 1;
    debug_assert!(g.bit(dg));
    let mut words = p.words().to_vec();
    let test = |words: &[u64], i: usize| (words[i / 64] >> (i % 64)) & 1 == 1;
    for i in (dg..p.len()).rev() {
        if test(&words, i) {
            xor_shifted(&mut words, g.words(), i - dg);
        }
    }
    (0..dg)
        .map(|i| i < p.len() && test(&words, i))
        .collect()
}

/// Codeword layout: parity in `0..n-k`, message in `n-k..n`.
pub fn systematic_encode(msg: &BitVector, g: &BitVector, n: usize) -> BitVector {
    let parity_len = g.len() - 1;
    let shifted: BitVector = std::iter::repeat_n(false, parity_len)
        .chain(msg.iter())
        .collect();
    debug_assert_eq!(shifted.len(), n);
    let parity = rem(&shifted, g);
    let mut cw = shifted;
    for i in parity.ones_positions() {
        cw.set(i, true);
    }
    cw
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rem_by_hand() {
        // (x^4 + x + 1) mod (x^2 + 1): x^4 = 1, so 1 + x + 1 = x.
        let p = BitVector::parse("11001").unwrap();
        let g = BitVector::parse("101").unwrap();
        assert_eq!(rem(&p, &g), BitVector::parse("01").unwrap());
        // Long inputs spanning several words.
        let mut big = BitVector::zeros(200);
        big.set(199, true);
        // x^199 mod (x + 1) = 1
        assert_eq!(rem(&big, &BitVector::parse("11").unwrap()), BitVector::parse("1").unwrap());
    }

    #[test]
    fn mul_by_hand() {
        // (x + 1)^2 = x^2 + 1 over GF(2)
        let a = BitVector::parse("11").unwrap();
        assert_eq!(mul(&a, &a), BitVector::parse("101").unwrap());
    }
}
