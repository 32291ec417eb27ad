//! Bit and ternary vectors shared by every other module.
//!
//! Bit `i` of a vector lives in byte `i / 8`, bit `i % 8` (LSB first). The
//! same convention is used by SRAM dumps, simulated reads, and helper files,
//! so all of them agree bit for bit.

use std::fmt;

use crate::error::{PufError, Result};

/// Fixed-length sequence of bits.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitVector {
    words: Vec<u64>,
    len: usize,
}

impl BitVector {
    pub fn zeros(len: usize) -> Self {
        BitVector {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut v = BitVector {
            words: vec![u64::MAX; len.div_ceil(64)],
            len,
        };
        v.clear_tail();
        v
    }

    /// Builds a vector from `0`/`1` values; any non-zero byte counts as one.
    pub fn from_bits(bits: &[u8]) -> Self {
        bits.iter().map(|&b| b != 0).collect()
    }

    /// Parses a string of `'0'` and `'1'` characters, ignoring whitespace.
    pub fn parse(s: &str) -> Result<Self> {
        s.chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(PufError::format("bit string", format!("unexpected {other:?}"))),
            })
            .collect()
    }

    /// Interprets `bytes` as `len` bits under the LSB-first convention.
    pub fn from_bytes(bytes: &[u8], len: usize) -> Result<Self> {
        if bytes.len() != len.div_ceil(8) {
            return Err(PufError::LengthMismatch {
                left: bytes.len(),
                right: len.div_ceil(8),
            });
        }
        let mut words = vec![0u64; len.div_ceil(64)];
        for (i, &b) in bytes.iter().enumerate() {
            words[i / 8] |= (b as u64) << (8 * (i % 8));
        }
        let mut v = BitVector { words, len };
        v.clear_tail();
        Ok(v)
    }

    /// Raw bytes, LSB-first; padding bits in the last byte are zero.
    pub fn to_bytes(&self) -> Vec<u8> {
        let nbytes = self.len.div_ceil(8);
        let mut out = Vec::with_capacity(nbytes);
        for i in 0..nbytes {
            out.push((self.words[i / 8] >> (8 * (i % 8))) as u8);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> Option<bool> {
        (i < self.len).then(|| (self.words[i / 64] >> (i % 64)) & 1 == 1)
    }

    /// Bit at `i`. Panics when `i` is out of range.
    pub fn bit(&self, i: usize) -> bool {
        self.get(i)
            .unwrap_or_else(|| panic!("bit index {i} out of range for length {}", self.len))
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        let mask = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        self.words[i / 64] ^= 1u64 << (i % 64);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = bool> + '_ {
        (0..self.len).map(move |i| (self.words[i / 64] >> (i % 64)) & 1 == 1)
    }

    /// Bits as `0`/`1` bytes, one per position.
    pub fn to_bits(&self) -> Vec<u8> {
        self.iter().map(u8::from).collect()
    }

    /// Positions holding a one, ascending.
    pub fn ones_positions(&self) -> Vec<usize> {
        self.iter()
            .enumerate()
            .filter_map(|(i, b)| b.then_some(i))
            .collect()
    }

    /// Copy of bits `start..start + len`.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.len {
            return Err(PufError::IndexOutOfRange {
                index: start + len,
                len: self.len,
            });
        }
        Ok((start..start + len).map(|i| self.bit(i)).collect())
    }

    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a BitVector>) -> Self {
        parts.into_iter().flat_map(|p| p.iter()).collect()
    }

    /// Bits gathered from `indices`, in the order given.
    pub fn gather(&self, indices: &[usize]) -> Result<Self> {
        indices
            .iter()
            .map(|&i| {
                self.get(i)
                    .ok_or(PufError::IndexOutOfRange { index: i, len: self.len })
            })
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub(crate) fn words(&self) -> &[u64] {
        &self.words
    }

    pub(crate) fn from_words(words: Vec<u64>, len: usize) -> Self {
        debug_assert_eq!(words.len(), len.div_ceil(64));
        let mut v = BitVector { words, len };
        v.clear_tail();
        v
    }

    fn clear_tail(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }
}

impl FromIterator<bool> for BitVector {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        let mut words = Vec::new();
        let mut len = 0;
        for b in iter {
            if len % 64 == 0 {
                words.push(0);
            }
            if b {
                words[len / 64] |= 1u64 << (len % 64);
            }
            len += 1;
        }
        BitVector { words, len }
    }
}

impl fmt::Display for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len <= 128 {
            write!(f, "BitVector({self})")
        } else {
            write!(f, "BitVector(len={}, ones={})", self.len, self.count_ones())
        }
    }
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(PufError::LengthMismatch { left: a, right: b })
    }
}

pub fn xor(a: &BitVector, b: &BitVector) -> Result<BitVector> {
    check_len(a.len, b.len)?;
    let words = a.words.iter().zip(&b.words).map(|(x, y)| x ^ y).collect();
    Ok(BitVector { words, len: a.len })
}

pub fn hamming_distance(a: &BitVector, b: &BitVector) -> Result<usize> {
    check_len(a.len, b.len)?;
    Ok(a.words
        .iter()
        .zip(&b.words)
        .map(|(x, y)| (x ^ y).count_ones() as usize)
        .sum())
}

/// Fraction of differing positions, restricted to cells the mask marks
/// stable when a mask is given.
pub fn fractional_error(a: &BitVector, b: &BitVector, mask: Option<&TernaryVector>) -> Result<f64> {
    check_len(a.len, b.len)?;
    match mask {
        None => {
            if a.len == 0 {
                return Err(PufError::NothingToCompare);
            }
            Ok(hamming_distance(a, b)? as f64 / a.len as f64)
        }
        Some(mask) => {
            check_len(a.len, mask.len())?;
            let stable = mask.stable_mask();
            let compared = stable.count_ones();
            if compared == 0 {
                return Err(PufError::NothingToCompare);
            }
            let diff: usize = a
                .words
                .iter()
                .zip(&b.words)
                .zip(stable.words())
                .map(|((x, y), m)| ((x ^ y) & m).count_ones() as usize)
                .sum();
            Ok(diff as f64 / compared as f64)
        }
    }
}

/// One enrolled cell: stable zero, stable one, or fuzzy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Trit {
    Zero,
    One,
    X,
}

impl Trit {
    pub fn from_bit(b: bool) -> Self {
        if b {
            Trit::One
        } else {
            Trit::Zero
        }
    }

    pub fn as_bit(self) -> Option<bool> {
        match self {
            Trit::Zero => Some(false),
            Trit::One => Some(true),
            Trit::X => None,
        }
    }

    pub fn is_stable(self) -> bool {
        self != Trit::X
    }

    fn to_char(self) -> char {
        match self {
            Trit::Zero => '0',
            Trit::One => '1',
            Trit::X => 'X',
        }
    }

    fn code(self) -> u8 {
        match self {
            Trit::Zero => 0b00,
            Trit::One => 0b01,
            Trit::X => 0b10,
        }
    }
}

/// Fixed-length sequence of ternary cells.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct TernaryVector {
    cells: Vec<Trit>,
}

impl TernaryVector {
    pub fn new(cells: Vec<Trit>) -> Self {
        TernaryVector { cells }
    }

    pub fn all_x(len: usize) -> Self {
        TernaryVector {
            cells: vec![Trit::X; len],
        }
    }

    /// Every cell stable, holding the corresponding bit of `bits`.
    pub fn from_bitvector(bits: &BitVector) -> Self {
        TernaryVector {
            cells: bits.iter().map(Trit::from_bit).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<Trit> {
        self.cells.get(i).copied()
    }

    pub fn cells(&self) -> &[Trit] {
        &self.cells
    }

    pub fn stable_count(&self) -> usize {
        self.cells.iter().filter(|t| t.is_stable()).count()
    }

    /// One bit per cell, set where the cell is not X.
    pub fn stable_mask(&self) -> BitVector {
        self.cells.iter().map(|t| t.is_stable()).collect()
    }

    /// Stable values as bits; X cells read as zero.
    pub fn values(&self) -> BitVector {
        self.cells.iter().map(|&t| t == Trit::One).collect()
    }

    /// Text form: one `0`/`1`/`X` per cell, newline after every 64 cells.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.cells.len() + self.cells.len() / 64 + 1);
        for chunk in self.cells.chunks(64) {
            s.extend(chunk.iter().map(|t| t.to_char()));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let cells = text
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| match c {
                '0' => Ok(Trit::Zero),
                '1' => Ok(Trit::One),
                'X' | 'x' => Ok(Trit::X),
                other => Err(PufError::format("ternary text", format!("unexpected {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TernaryVector { cells })
    }

    /// Packed form: two bits per cell (00 = 0, 01 = 1, 10 = X), four cells
    /// per byte, cell `i` at byte `i / 4`, bits `2 * (i % 4)..`.
    pub fn to_packed(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.cells.len().div_ceil(4)];
        for (i, t) in self.cells.iter().enumerate() {
            out[i / 4] |= t.code() << (2 * (i % 4));
        }
        out
    }

    pub fn from_packed(bytes: &[u8], len: usize) -> Result<Self> {
        if bytes.len() != len.div_ceil(4) {
            return Err(PufError::LengthMismatch {
                left: bytes.len(),
                right: len.div_ceil(4),
            });
        }
        let cells = (0..len)
            .map(|i| match (bytes[i / 4] >> (2 * (i % 4))) & 0b11 {
                0b00 => Ok(Trit::Zero),
                0b01 => Ok(Trit::One),
                0b10 => Ok(Trit::X),
                _ => Err(PufError::format("packed ternary", format!("invalid code at cell {i}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TernaryVector { cells })
    }
}

impl fmt::Debug for TernaryVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.cells.len() <= 128 {
            let s: String = self.cells.iter().map(|t| t.to_char()).collect();
            write!(f, "TernaryVector({s})")
        } else {
            write!(
                f,
                "TernaryVector(len={}, stable={})",
                self.cells.len(),
                self.stable_count()
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bv(s: &str) -> BitVector {
        BitVector::parse(s).unwrap()
    }

    #[test]
    fn xor_examples() {
        assert_eq!(xor(&bv("1010"), &bv("0000")).unwrap(), bv("1010"));
        assert_eq!(xor(&bv("1010"), &bv("1010")).unwrap(), bv("0000"));
        assert_eq!(xor(&bv("1100"), &bv("1010")).unwrap(), bv("0110"));
    }

    #[test]
    fn xor_length_mismatch_names_both() {
        let err = xor(&bv("101"), &bv("1010")).unwrap_err();
        match err {
            PufError::LengthMismatch { left, right } => assert_eq!((left, right), (3, 4)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(err_to_string_has(&xor(&bv("1"), &bv("10")).unwrap_err(), &["1", "2"]));
    }

    fn err_to_string_has(e: &PufError, parts: &[&str]) -> bool {
        let s = e.to_string();
        parts.iter().all(|p| s.contains(p))
    }

    #[test]
    fn hamming_examples() {
        assert_eq!(hamming_distance(&bv("1010"), &bv("1010")).unwrap(), 0);
        assert_eq!(hamming_distance(&bv("1111"), &bv("0000")).unwrap(), 4);
        assert_eq!(hamming_distance(&bv("110010"), &bv("100011")).unwrap(), 2);
        assert!(hamming_distance(&bv("1"), &bv("11")).is_err());
    }

    #[test]
    fn fractional_error_examples() {
        assert_eq!(fractional_error(&bv("1010"), &bv("1010"), None).unwrap(), 0.0);
        assert_eq!(fractional_error(&bv("1111"), &bv("0000"), None).unwrap(), 1.0);
        // 1010 vs 1110 differ only at position 1.
        assert_eq!(fractional_error(&bv("1010"), &bv("1110"), None).unwrap(), 0.25);
        let mask = TernaryVector::from_text("0X10").unwrap();
        assert_eq!(fractional_error(&bv("1010"), &bv("1110"), Some(&mask)).unwrap(), 0.0);
        let mask = TernaryVector::from_text("X010").unwrap();
        assert!((fractional_error(&bv("1010"), &bv("1110"), Some(&mask)).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn fractional_error_all_masked() {
        let mask = TernaryVector::all_x(4);
        assert!(matches!(
            fractional_error(&bv("1010"), &bv("1110"), Some(&mask)),
            Err(PufError::NothingToCompare)
        ));
    }

    #[test]
    fn byte_order_is_lsb_first() {
        let mut v = BitVector::zeros(16);
        v.set(0, true);
        v.set(9, true);
        assert_eq!(v.to_bytes(), vec![0x01, 0x02]);
        let back = BitVector::from_bytes(&[0x80, 0x01], 16).unwrap();
        assert_eq!(back.ones_positions(), vec![7, 8]);
    }

    #[test]
    fn ternary_text_breaks_lines_every_64() {
        let t = TernaryVector::new(vec![Trit::X; 130]);
        let text = t.to_text();
        assert_eq!(text.lines().map(str::len).collect::<Vec<_>>(), vec![64, 64, 2]);
        assert_eq!(TernaryVector::from_text(&text).unwrap(), t);
    }

    #[test]
    fn packed_rejects_invalid_code() {
        assert!(TernaryVector::from_packed(&[0b11], 1).is_err());
    }

    #[test]
    #[should_panic]
    fn out_of_range_access_panics() {
        BitVector::zeros(4).bit(4);
    }

    fn arb_bits(len: usize) -> impl Strategy<Value = BitVector> {
        proptest::collection::vec(any::<bool>(), len).prop_map(|v| v.into_iter().collect())
    }

    fn arb_trits(len: usize) -> impl Strategy<Value = TernaryVector> {
        proptest::collection::vec(prop_oneof![Just(Trit::Zero), Just(Trit::One), Just(Trit::X)], len)
            .prop_map(TernaryVector::new)
    }

    proptest! {
        #[test]
        fn xor_algebra((a, b, c) in (0usize..200).prop_flat_map(|n| (arb_bits(n), arb_bits(n), arb_bits(n)))) {
            prop_assert_eq!(xor(&a, &b).unwrap(), xor(&b, &a).unwrap());
            prop_assert_eq!(
                xor(&xor(&a, &b).unwrap(), &c).unwrap(),
                xor(&a, &xor(&b, &c).unwrap()).unwrap()
            );
            prop_assert!(xor(&a, &a).unwrap().is_zero());
            prop_assert_eq!(hamming_distance(&a, &b).unwrap(), xor(&a, &b).unwrap().count_ones());
        }

        #[test]
        fn all_stable_mask_matches_unmasked((a, b) in (1usize..200).prop_flat_map(|n| (arb_bits(n), arb_bits(n)))) {
            let mask = TernaryVector::from_bitvector(&a);
            prop_assert_eq!(
                fractional_error(&a, &b, Some(&mask)).unwrap(),
                fractional_error(&a, &b, None).unwrap()
            );
        }

        #[test]
        fn byte_and_packed_forms_round_trip(a in (0usize..300).prop_flat_map(arb_bits), t in (0usize..300).prop_flat_map(arb_trits)) {
            prop_assert_eq!(BitVector::from_bytes(&a.to_bytes(), a.len()).unwrap(), a);
            prop_assert_eq!(TernaryVector::from_packed(&t.to_packed(), t.len()).unwrap(), t.clone());
            prop_assert_eq!(TernaryVector::from_text(&t.to_text()).unwrap(), t);
        }
    }
}
