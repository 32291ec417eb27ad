//! GF(2^m) arithmetic over log/antilog tables, 3 <= m <= 10.

use std::sync::OnceLock;

use crate::error::{PufError, Result};

pub const MIN_DEGREE: u32 = 3;
pub const MAX_DEGREE: u32 = 10;

/// Primitive polynomial for each supported m, bit i = coefficient of x^i.
pub fn primitive_poly(m: u32) -> Option<u32> {
    Some(match m {
        3 => 0b1011,          // x^3 + x + 1
        4 => 0b1_0011,        // x^4 + x + 1
        5 => 0b10_0101,       // x^5 + x^2 + 1
        6 => 0b100_0011,      // x^6 + x + 1
        7 => 0b1000_1001,     // x^7 + x^3 + 1
        8 => 0b1_0001_1101,   // x^8 + x^4 + x^3 + x^2 + 1
        9 => 0b10_0001_0001,  // x^9 + x^4 + 1
        10 => 0b100_0000_1001, // x^10 + x^3 + 1
        _ => return None,
    })
}

#[derive(Debug)]
pub struct Field {
    pub m: u32,
    /// Multiplicative order, 2^m - 1.
    pub order: usize,
    exp: Vec<u16>,
    log: Vec<u16>,
}

impl Field {
    fn build(m: u32) -> Field {
        let poly = primitive_poly(m).expect("degree checked by caller");
        let order = (1usize << m) - 1;
        let mut exp = vec![0u16; 2 * order];
        let mut log = vec![0u16; order + 1];
        let mut x: u32 = 1;
        for (i, e) in exp.iter_mut().take(order).enumerate() {
            *e = x as u16;
            log[x as usize] = i as u16;
            x <<= 1;
            if x & (1 << m) != 0 {
                x ^= poly;
            }
        }
        assert_eq!(x, 1, "polynomial for m={m} is not primitive");
        for i in order..2 * order {
            exp[i] = exp[i - order];
        }
        Field { m, order, exp, log }
    }

    /// Shared table for degree `m`.
    pub fn get(m: u32) -> Result<&'static Field> {
        static FIELDS: [OnceLock<Field>; (MAX_DEGREE + 1) as usize] = [const { OnceLock::new() }; 11];
        if !(MIN_DEGREE..=MAX_DEGREE).contains(&m) {
            return Err(PufError::InvalidParameter(format!(
                "field degree {m} outside {MIN_DEGREE}..={MAX_DEGREE}"
            )));
        }
        Ok(FIELDS[m as usize].get_or_init(|| Field::build(m)))
    }

    /// alpha^i for any non-negative i.
    #[inline]
    pub fn alpha_pow(&self, i: usize) -> u16 {
        self.exp[i % self.order]
    }

    #[inline]
    pub fn mul(&self, a: u16, b: u16) -> u16 {
        if a == 0 || b == 0 {
            0
        } else {
            self.exp[self.log[a as usize] as usize + self.log[b as usize] as usize]
        }
    }

    #[inline]
    pub fn div(&self, a: u16, b: u16) -> u16 {
        assert!(b != 0, "division by zero in GF(2^{})", self.m);
        if a == 0 {
            0
        } else {
            self.exp[self.log[a as usize] as usize + self.order - self.log[b as usize] as usize]
        }
    }

    #[inline]
    pub fn log(&self, a: u16) -> Option<usize> {
        (a != 0).then(|| self.log[a as usize] as usize)
    }

    /// Evaluates a polynomial (coefficients low to high) at `x`.
    pub fn eval(&self, coeffs: &[u16], x: u16) -> u16 {
        coeffs.iter().rev().fold(0, |acc, &c| self.mul(acc, x) ^ c)
    }
}
