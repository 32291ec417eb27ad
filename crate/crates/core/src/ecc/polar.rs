//! Polar codes: Bhattacharyya construction, butterfly encoder, and
//! successive-cancellation decoding over a binary symmetric channel.
//!
//! Encoding is `x = u * F^{(x)m}` with `F = [[1, 0], [1, 1]]` in natural
//! (non bit-reversed) order, so for `n = 2`, `(u0, u1) -> (u0 ^ u1, u1)`.
//! With that ordering the first half of `u` sees the "minus" combination of
//! the two half-length channels and the second half the "plus" one.

use super::{CodeFamily, CodeSpec, DecodeOutcome};
use crate::bits::BitVector;
use crate::error::{PufError, Result};

/// `ln(2z - z^2)` from `ln z`.
fn ln_minus(ln_z: f64) -> f64 {
    ln_z + (2.0 - ln_z.exp()).ln()
}

/// `ln(z^2)` from `ln z`.
fn ln_plus(ln_z: f64) -> f64 {
    2.0 * ln_z
}

/// Natural log of the Bhattacharyya parameter of every synthetic channel,
/// starting from `2 sqrt(p (1 - p))`. Index `2j` takes the minus transform of
/// the parent at `j`, index `2j + 1` the plus transform. Working in logs
/// keeps the reliable channels from underflowing to a tie at zero.
pub fn bhattacharyya_ln(n: usize, p: f64) -> Vec<f64> {
    let mut z = vec![(2.0 * (p * (1.0 - p)).sqrt()).ln()];
    while z.len() < n {
        z = z
            .iter()
            .flat_map(|&lz| [ln_minus(lz), ln_plus(lz)])
            .collect();
    }
    z
}

fn validate(n: usize, k: usize) -> Result<()> {
    if n < 2 || !n.is_power_of_two() {
        return Err(PufError::InvalidParameter(format!(
            "polar length {n} must be a power of two, at least 2"
        )));
    }
    if k == 0 || k >= n {
        return Err(PufError::InvalidParameter(format!(
            "polar dimension {k} must satisfy 0 < k < {n}"
        )));
    }
    Ok(())
}

/// Freezes the `n - k` channels with the largest Bhattacharyya parameter
/// (ties go to the lower index).
pub fn polar_construct(n: usize, k: usize, design_p: f64) -> Result<CodeSpec> {
    validate(n, k)?;
    if !(design_p > 0.0 && design_p < 0.5) {
        return Err(PufError::InvalidParameter(format!(
            "design flip probability {design_p} outside (0, 0.5)"
        )));
    }
    let z = bhattacharyya_ln(n, design_p);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| z[b].total_cmp(&z[a]).then(a.cmp(&b)));
    let mut frozen: Vec<usize> = order[..n - k].to_vec();
    frozen.sort_unstable();
    from_frozen(n, frozen, design_p)
}

pub(crate) fn from_frozen(n: usize, frozen: Vec<usize>, design_p: f64) -> Result<CodeSpec> {
    if frozen.len() >= n {
        return Err(PufError::InvalidParameter("every polar channel is frozen".into()));
    }
    let k = n - frozen.len();
    validate(n, k)?;
    if frozen.windows(2).any(|w| w[0] >= w[1]) || frozen.last().is_some_and(|&l| l >= n) {
        return Err(PufError::InvalidParameter("frozen set must be sorted, unique, in range".into()));
    }
    Ok(CodeSpec {
        family: CodeFamily::Polar,
        n,
        k,
        t: 0,
        m: 0,
        design_p,
        frozen,
        generator: BitVector::zeros(0),
    })
}

/// In-place butterfly `x = u * F^{(x)m}`. The transform is its own inverse.
pub fn polar_transform(bits: &mut [u8]) {
    let n = bits.len();
    let mut half = 1;
    while half < n {
        for block in (0..n).step_by(2 * half) {
            for j in block..block + half {
                bits[j] ^= bits[j + half];
            }
        }
        half *= 2;
    }
}

pub fn polar_encode(msg: &BitVector, spec: &CodeSpec) -> Result<BitVector> {
    spec.expect_family(CodeFamily::Polar)?;
    spec.check_len(msg, spec.k)?;
    let mut u = vec![0u8; spec.n];
    for (pos, bit) in spec.info_set().into_iter().zip(msg.iter()) {
        u[pos] = bit as u8;
    }
    polar_transform(&mut u);
    Ok(BitVector::from_bits(&u))
}

/// Exact check-node update `2 atanh(tanh(a/2) tanh(b/2))`.
#[inline]
fn check_node(a: f64, b: f64) -> f64 {
    let sign = if (a < 0.0) != (b < 0.0) { -1.0 } else { 1.0 };
    sign * a.abs().min(b.abs()) + (-(a + b).abs()).exp().ln_1p() - (-(a - b).abs()).exp().ln_1p()
}

struct Sc<'a> {
    frozen: &'a [bool],
    u: Vec<u8>,
}

impl Sc<'_> {
    /// Decodes the subtree whose leaves are `u[offset..offset + llr.len()]`
    /// and returns its re-encoded codeword.
    fn decode(&mut self, llr: &[f64], offset: usize) -> Vec<u8> {
        let n = llr.len();
        if n == 1 {
            let bit = if self.frozen[offset] { 0 } else { u8::from(llr[0] < 0.0) };
            self.u[offset] = bit;
            return vec![bit];
        }
        let h = n / 2;
        let (la, lb) = llr.split_at(h);
        let minus: Vec<f64> = la.iter().zip(lb).map(|(&a, &b)| check_node(a, b)).collect();
        let s = self.decode(&minus, offset);
        let plus: Vec<f64> = la
            .iter()
            .zip(lb)
            .zip(&s)
            .map(|((&a, &b), &si)| b + if si == 0 { a } else { -a })
            .collect();
        let xb = self.decode(&plus, offset + h);
        let mut x: Vec<u8> = s.iter().zip(&xb).map(|(&si, &bi)| si ^ bi).collect();
        x.extend_from_slice(&xb);
        x
    }
}

/// Successive-cancellation decoding of a BSC(`flip_p`) observation. Frozen
/// bits are forced to zero. SC certifies no error count, so
/// `corrected_errors` is `None` and `decode_failure` is never set.
pub fn polar_sc_decode(received: &BitVector, flip_p: f64, spec: &CodeSpec) -> Result<DecodeOutcome> {
    spec.expect_family(CodeFamily::Polar)?;
    spec.check_len(received, spec.n)?;
    if !(flip_p > 0.0 && flip_p < 0.5) {
        return Err(PufError::InvalidParameter(format!(
            "flip probability {flip_p} outside (0, 0.5)"
        )));
    }
    let magnitude = ((1.0 - flip_p) / flip_p).ln();
    let llr: Vec<f64> = received
        .iter()
        .map(|b| if b { -magnitude } else { magnitude })
        .collect();
    let mut frozen = vec![false; spec.n];
    for &i in &spec.frozen {
        frozen[i] = true;
    }
    let mut sc = Sc {
        frozen: &frozen,
        u: vec![0; spec.n],
    };
    let x = sc.decode(&llr, 0);
    let message = spec.info_set().into_iter().map(|i| sc.u[i] == 1).collect();
    Ok(DecodeOutcome {
        message,
        codeword: BitVector::from_bits(&x),
        corrected_errors: None,
        decode_failure: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::hamming_distance;
    use crate::rng;
    use rand::RngCore;

    #[test]
    fn n2_freezes_the_minus_channel() {
        let spec = polar_construct(2, 1, 0.1).unwrap();
        assert_eq!(spec.frozen_set(), &[0]);
        let z = bhattacharyya_ln(2, 0.1);
        let z0 = 2.0 * (0.1f64 * 0.9).sqrt();
        assert!((z[0].exp() - (2.0 * z0 - z0 * z0)).abs() < 1e-12);
        assert!((z[1].exp() - z0 * z0).abs() < 1e-12);
    }

    #[test]
    fn polarization_orders_children_around_parent() {
        // plus <= parent <= minus at every split
        for p in [0.01f64, 0.15, 0.3, 0.45] {
            let mut level = vec![(2.0 * (p * (1.0 - p)).sqrt()).ln()];
            for _ in 0..8 {
                let next = bhattacharyya_ln(level.len() * 2, p);
                for (j, &parent) in level.iter().enumerate() {
                    assert!(next[2 * j + 1] <= parent + 1e-12);
                    assert!(parent <= next[2 * j] + 1e-12);
                }
                level = next;
            }
        }
    }

    #[test]
    fn frozen_set_size() {
        for (n, k) in [(2, 1), (8, 4), (64, 10), (1024, 128), (1024, 1000)] {
            let spec = polar_construct(n, k, 0.15).unwrap();
            assert_eq!(spec.frozen_set().len(), n - k);
            assert_eq!(spec.info_set().len(), k);
        }
    }

    #[test]
    fn table_three_operating_point() {
        let spec = polar_construct(1024, 128, 0.15).unwrap();
        assert_eq!(spec.frozen_set().len(), 896);
    }

    #[test]
    fn construct_rejects_bad_parameters() {
        assert!(polar_construct(12, 4, 0.1).is_err());
        assert!(polar_construct(8, 8, 0.1).is_err());
        assert!(polar_construct(8, 0, 0.1).is_err());
        assert!(polar_construct(8, 4, 0.0).is_err());
        assert!(polar_construct(8, 4, 0.5).is_err());
    }

    #[test]
    fn n2_kernel_by_hand() {
        // With n = 2 and nothing frozen the transform itself is visible.
        for (u0, u1) in [(0u8, 0u8), (0, 1), (1, 0), (1, 1)] {
            let mut x = [u0, u1];
            polar_transform(&mut x);
            assert_eq!(x, [u0 ^ u1, u1]);
        }
        let spec = polar_construct(2, 1, 0.1).unwrap();
        assert_eq!(polar_encode(&BitVector::parse("1").unwrap(), &spec).unwrap().to_string(), "11");
    }

    #[test]
    fn transform_is_an_involution() {
        let mut rng = rng::prng(4);
        for n in [2usize, 4, 8, 64, 1024] {
            let orig: Vec<u8> = (0..n).map(|_| (rng.next_u32() & 1) as u8).collect();
            let mut x = orig.clone();
            polar_transform(&mut x);
            polar_transform(&mut x);
            assert_eq!(x, orig);
        }
    }

    #[test]
    fn zero_message_encodes_to_zero() {
        let spec = polar_construct(64, 20, 0.1).unwrap();
        assert!(polar_encode(&BitVector::zeros(20), &spec).unwrap().is_zero());
        assert!(polar_encode(&BitVector::zeros(19), &spec).is_err());
    }

    #[test]
    fn noiseless_codewords_decode_exactly() {
        let mut rng = rng::prng(5);
        for (n, k) in [(8, 4), (64, 32), (1024, 128)] {
            let spec = polar_construct(n, k, 0.1).unwrap();
            for _ in 0..20 {
                let msg: BitVector = (0..k).map(|_| rng.next_u32() & 1 == 1).collect();
                let cw = polar_encode(&msg, &spec).unwrap();
                let out = polar_sc_decode(&cw, 0.1, &spec).unwrap();
                assert_eq!(out.message, msg);
                assert_eq!(out.codeword, cw);
                assert_eq!(out.corrected_errors, None);
            }
        }
    }

    #[test]
    fn sc_agrees_with_brute_force_ml_for_n8() {
        let spec = polar_construct(8, 4, 0.1).unwrap();
        let codewords: Vec<(u32, BitVector)> = (0..16u32)
            .map(|v| {
                let msg: BitVector = (0..4).map(|i| v >> i & 1 == 1).collect();
                (v, polar_encode(&msg, &spec).unwrap())
            })
            .collect();
        let mut compared = 0;
        for (v, cw) in &codewords {
            for flip in std::iter::once(None).chain((0..8).map(Some)) {
                let mut r = cw.clone();
                if let Some(i) = flip {
                    r.flip(i);
                }
                // Over a BSC with p < 1/2, ML is minimum Hamming distance.
                let dists: Vec<usize> = codewords
                    .iter()
                    .map(|(_, c)| hamming_distance(c, &r).unwrap())
                    .collect();
                let best = *dists.iter().min().unwrap();
                let winners: Vec<usize> = (0..16).filter(|&j| dists[j] == best).collect();
                if winners.len() != 1 {
                    continue;
                }
                let out = polar_sc_decode(&r, 0.1, &spec).unwrap();
                let msg: BitVector = (0..4).map(|i| (winners[0] as u32) >> i & 1 == 1).collect();
                assert_eq!(out.message, msg, "message {v}, flip {flip:?}");
                compared += 1;
            }
        }
        assert!(compared > 100);
    }

    #[test]
    fn table_three_code_corrects_fifteen_percent_noise() {
        let spec = polar_construct(1024, 128, 0.15).unwrap();
        let mut rng = rng::prng(6);
        let mut failures = 0;
        let trials = 300;
        for _ in 0..trials {
            let msg: BitVector = (0..128).map(|_| rng.next_u32() & 1 == 1).collect();
            let mut r = polar_encode(&msg, &spec).unwrap();
            for i in 0..1024 {
                if rng::unit_f64(&mut rng) < 0.15 {
                    r.flip(i);
                }
            }
            if polar_sc_decode(&r, 0.15, &spec).unwrap().message != msg {
                failures += 1;
            }
        }
        assert!(failures <= 3, "{failures} failures in {trials}");
    }
}
