//! Monte-Carlo experiments: false rejection and acceptance, key error
//! against PUF error, masking curves, and exact block-failure bounds.
//!
//! Every trial draws its randomness from a seed derived from the master seed
//! and the trial index, so serial and parallel runs give identical reports.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::apg::{self, CellSelection};
use crate::bits::{fractional_error, hamming_distance, BitVector};
use crate::ecc::{self, CodeFamily, CodeSpec};
use crate::enrollment::{iterative_mask, TernaryChallenge};
use crate::error::{PufError, Result};
use crate::fuzzy::{self, Scheme};
use crate::protocol::ResponseSource;
use crate::rng::{self, labels};
use crate::sram::DeviceModel;

pub const DEFAULT_TRIALS: usize = 10_000;

/// Summary of one experiment. `runtime` is informational and is not part of
/// the serialized form, which depends only on the inputs and the seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub scheme: Scheme,
    pub code: String,
    pub key_bits: usize,
    pub trials: usize,
    /// Fraction of genuine sessions rejected.
    pub frr: Option<f64>,
    /// Fraction of impostor sessions accepted.
    pub far: Option<f64>,
    /// Mean fraction of key bits that differ from the enrolled key, genuine
    /// reads, measured before the check digest.
    pub mean_key_bit_error_same: Option<f64>,
    /// The same for impostor reads.
    pub mean_key_bit_error_other: Option<f64>,
    /// Mean fractional error of the fresh response against the enrolled one.
    pub mean_puf_error: f64,
    pub seed: u64,
    #[serde(skip)]
    pub runtime: Duration,
}

/// Per-trial measurements.
struct Trial {
    accepted: bool,
    key_error: f64,
    puf_error: f64,
}

/// Selects cells for an experiment run and returns the enrolled response.
fn experiment_selection(challenge: &TernaryChallenge, budget: usize, seed: u64) -> Result<(CellSelection, BitVector)> {
    let address = rng::derive_seed(seed, labels::SELECTION, 0) % challenge.len() as u64;
    let selection = apg::select_cells(address, challenge, budget)?;
    let w = apg::extract_response(&selection, &challenge.values.values())?;
    Ok((selection, w))
}

fn run_trials(
    scheme: Scheme,
    code: &CodeSpec,
    key_bits: usize,
    source: &dyn ResponseSource,
    challenge: &TernaryChallenge,
    trials: usize,
    seed: u64,
) -> Result<Vec<Trial>> {
    if trials == 0 {
        return Err(PufError::InvalidParameter("experiments need at least one trial".into()));
    }
    if source.cell_count() != challenge.len() {
        return Err(PufError::LengthMismatch {
            left: source.cell_count(),
            right: challenge.len(),
        });
    }
    let budget = fuzzy::blocks_for(code, key_bits) * code.n();
    let (selection, w) = experiment_selection(challenge, budget, seed)?;
    (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let trial_seed = rng::derive_seed(seed, labels::TRIAL, t);
            let (key, helper) = fuzzy::generate(&w, scheme, code, key_bits, trial_seed)?;
            let read_seed = rng::derive_seed(trial_seed, labels::READ, 0);
            let w_prime = source.read_cells(read_seed, &selection.indices)?;
            let r = fuzzy::recover(&w_prime, &helper)?;
            Ok(Trial {
                accepted: r.accepted,
                key_error: hamming_distance(r.candidate.bits(), key.bits())? as f64 / key_bits as f64,
                puf_error: fractional_error(&w_prime, &w, None)?,
            })
        })
        .collect()
}

fn mean(xs: impl Iterator<Item = f64>, n: usize) -> f64 {
    xs.sum::<f64>() / n as f64
}

/// Sessions against the enrolled device itself.
#[allow(clippy::too_many_arguments)]
pub fn frr_experiment(
    scheme: Scheme,
    code: &CodeSpec,
    key_bits: usize,
    source: &dyn ResponseSource,
    challenge: &TernaryChallenge,
    trials: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    let start = Instant::now();
    let t = run_trials(scheme, code, key_bits, source, challenge, trials, seed)?;
    Ok(ExperimentReport {
        experiment: "frr".into(),
        scheme,
        code: code.to_string(),
        key_bits,
        trials,
        frr: Some(t.iter().filter(|x| !x.accepted).count() as f64 / trials as f64),
        far: None,
        mean_key_bit_error_same: Some(mean(t.iter().map(|x| x.key_error), trials)),
        mean_key_bit_error_other: None,
        mean_puf_error: mean(t.iter().map(|x| x.puf_error), trials),
        seed,
        runtime: start.elapsed(),
    })
}

/// Sessions in which `impostor` answers with the helper enrolled from the
/// genuine device's `challenge`.
#[allow(clippy::too_many_arguments)]
pub fn far_experiment(
    scheme: Scheme,
    code: &CodeSpec,
    key_bits: usize,
    challenge: &TernaryChallenge,
    impostor: &dyn ResponseSource,
    trials: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    let start = Instant::now();
    let t = run_trials(scheme, code, key_bits, impostor, challenge, trials, seed)?;
    Ok(ExperimentReport {
        experiment: "far".into(),
        scheme,
        code: code.to_string(),
        key_bits,
        trials,
        frr: None,
        far: Some(t.iter().filter(|x| x.accepted).count() as f64 / trials as f64),
        mean_key_bit_error_same: None,
        mean_key_bit_error_other: Some(mean(t.iter().map(|x| x.key_error), trials)),
        mean_puf_error: mean(t.iter().map(|x| x.puf_error), trials),
        seed,
        runtime: start.elapsed(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyErrorPoint {
    pub cycles: usize,
    pub puf_error: f64,
    pub key_error: f64,
    pub rejection_rate: f64,
    pub trials: usize,
}

/// For each masking level (power-cycle count), masks the device, then
/// measures response error and key bit error over `trials` sessions.
#[allow(clippy::too_many_arguments)]
pub fn key_error_curve(
    scheme: Scheme,
    code: &CodeSpec,
    key_bits: usize,
    device: &DeviceModel,
    cycle_levels: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<KeyErrorPoint>> {
    cycle_levels
        .iter()
        .enumerate()
        .map(|(level, &cycles)| {
            let level_seed = rng::derive_seed(seed, labels::MASKING, level as u64);
            let (challenge, _) = iterative_mask(device, cycles, level_seed)?;
            let t = run_trials(scheme, code, key_bits, device, &challenge, trials, level_seed)?;
            Ok(KeyErrorPoint {
                cycles,
                puf_error: mean(t.iter().map(|x| x.puf_error), trials),
                key_error: mean(t.iter().map(|x| x.key_error), trials),
                rejection_rate: t.iter().filter(|x| !x.accepted).count() as f64 / trials as f64,
                trials,
            })
        })
        .collect()
}

/// CSV with header `puf_error,key_error,trials`.
pub fn key_error_csv(points: &[KeyErrorPoint]) -> String {
    let mut out = String::from("puf_error,key_error,trials\n");
    for p in points {
        writeln!(out, "{},{},{}", p.puf_error, p.key_error, p.trials).unwrap();
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CyclePoint {
    pub cycle: usize,
    pub surviving_fraction: f64,
    pub error_rate: f64,
}

/// Strict masking curve of `device` over `cycles` power cycles.
pub fn error_vs_cycles(device: &DeviceModel, cycles: usize, seed: u64) -> Result<Vec<CyclePoint>> {
    let (_, curve) = iterative_mask(device, cycles, seed)?;
    let total = device.cell_count() as f64;
    Ok(curve
        .into_iter()
        .map(|p| CyclePoint {
            cycle: p.cycle,
            surviving_fraction: p.surviving_cells as f64 / total,
            error_rate: p.error_rate,
        })
        .collect())
}

/// CSV with header `cycle,surviving_fraction,error_rate`.
pub fn cycles_csv(points: &[CyclePoint]) -> String {
    let mut out = String::from("cycle,surviving_fraction,error_rate\n");
    for p in points {
        writeln!(out, "{},{},{}", p.cycle, p.surviving_fraction, p.error_rate).unwrap();
    }
    out
}

/// `P[X > t]` for `X ~ Binomial(n, p)`: the probability that one block
/// sees more errors than the code's certified radius.
pub fn analytic_failure_bound(code: &CodeSpec, flip_p: f64) -> Result<f64> {
    if code.family() == CodeFamily::Polar {
        return Err(PufError::UnsupportedScheme {
            scheme: "analytic failure bound",
            family: code.family().name(),
        });
    }
    if !(0.0..=1.0).contains(&flip_p) {
        return Err(PufError::InvalidParameter(format!("flip probability {flip_p} outside [0, 1]")));
    }
    Ok(binomial_upper_tail(code.n(), code.t(), flip_p))
}

/// Union bound over the blocks of a `key_bits` key.
pub fn key_failure_bound(code: &CodeSpec, flip_p: f64, key_bits: usize) -> Result<f64> {
    let blocks = fuzzy::blocks_for(code, key_bits) as f64;
    Ok((blocks * analytic_failure_bound(code, flip_p)?).min(1.0))
}

/// `P[X > t]`, summed in log space from the largest term outward.
fn binomial_upper_tail(n: usize, t: usize, p: f64) -> f64 {
    if t >= n || p == 0.0 {
        return 0.0;
    }
    if p == 1.0 {
        return 1.0;
    }
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let mut ln_choose = 0.0;
    let mut terms = Vec::with_capacity(n - t);
    for i in 0..=n {
        if i > t {
            terms.push(ln_choose + i as f64 * lp + (n - i) as f64 * lq);
        }
        ln_choose += ((n - i) as f64).ln() - ((i + 1) as f64).ln();
    }
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (max + terms.iter().map(|x| (x - max).exp()).sum::<f64>().ln())
        .exp()
        .min(1.0)
}

/// Fraction of `trials` random codewords sent through a binary symmetric
/// channel with `flip_p` that do not decode back to themselves. Polar codes
/// decode at `flip_p`.
pub fn empirical_block_failure(code: &CodeSpec, flip_p: f64, trials: usize, seed: u64) -> Result<f64> {
    if trials == 0 {
        return Err(PufError::InvalidParameter("experiments need at least one trial".into()));
    }
    let threshold = (flip_p * 2f64.powi(32)) as u64;
    let failures: usize = (0..trials as u64)
        .into_par_iter()
        .map(|t| -> Result<usize> {
            let mut r = rng::prng(rng::derive_seed(seed, labels::TRIAL, t));
            let msg: BitVector = (0..code.k()).map(|_| r.next_u64() >> 63 == 1).collect();
            let cw = ecc::encode(&msg, code)?;
            let noisy: BitVector = cw
                .iter()
                .map(|b| b ^ ((r.next_u64() >> 32) < threshold))
                .collect();
            let out = match code.family() {
                CodeFamily::Polar => ecc::polar_sc_decode(&noisy, flip_p, code)?,
                _ => ecc::decode(&noisy, code)?,
            };
            Ok((out.decode_failure || out.codeword != cw) as usize)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    Ok(failures as f64 / trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::TernaryVector;
    use crate::ecc::{bch_build, polar_construct};
    use crate::enrollment::EnrollmentConfig;
    use crate::sram::{new_device, ErrorProfile};

    /// Challenge equal to the device's preferred values, all stable.
    fn ideal_challenge(d: &DeviceModel) -> TernaryChallenge {
        TernaryChallenge {
            values: TernaryVector::from_bitvector(d.preferred()),
            reads_used: 0,
            source_device: d.device_id,
            config: EnrollmentConfig::strict(1),
        }
    }

    #[test]
    fn binomial_examples() {
        let rep3 = CodeSpec::repetition(3).unwrap();
        assert_eq!(analytic_failure_bound(&rep3, 0.0).unwrap(), 0.0);
        assert!((analytic_failure_bound(&rep3, 0.1).unwrap() - 0.028).abs() < 1e-12);
        let polar = polar_construct(16, 8, 0.1).unwrap();
        assert!(analytic_failure_bound(&polar, 0.1).is_err());
        // against a direct sum for a small code
        let bch = bch_build(4, 2).unwrap();
        let p: f64 = 0.07;
        let mut direct = 0.0;
        let mut c = 1.0;
        for i in 0..=15 {
            if i > 2 {
                direct += c * p.powi(i) * (1.0 - p).powi(15 - i);
            }
            c = c * (15 - i) as f64 / (i + 1) as f64;
        }
        assert!((analytic_failure_bound(&bch, p).unwrap() - direct).abs() < 1e-12);
        assert_eq!(analytic_failure_bound(&bch, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn tiny_tails_do_not_underflow_to_garbage() {
        let bch = bch_build(8, 10).unwrap();
        let b = analytic_failure_bound(&bch, 0.001).unwrap();
        // dominated by the 11-error term
        let c11: f64 = (245..=255).map(|x| x as f64).product::<f64>() / (1..=11).map(|x| x as f64).product::<f64>();
        let lead = c11 * 0.001f64.powi(11) * 0.999f64.powi(244);
        assert!(b > lead && b < 1.05 * lead, "{b} vs {lead}");
        let two = key_failure_bound(&bch, 0.02, 256).unwrap();
        assert!((two - 2.0 * analytic_failure_bound(&bch, 0.02).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn empirical_failure_tracks_bound() {
        for (code, p) in [
            (bch_build(8, 10).unwrap(), 0.04),
            (bch_build(7, 5).unwrap(), 0.04),
            (CodeSpec::repetition(5).unwrap(), 0.2),
        ] {
            let bound = analytic_failure_bound(&code, p).unwrap();
            let trials = 20_000;
            assert!(bound * trials as f64 >= 30.0);
            let emp = empirical_block_failure(&code, p, trials, 1).unwrap();
            assert!(emp <= 3.0 * bound && emp >= bound / 3.0, "{code}: {emp} vs {bound}");
        }
    }

    #[test]
    fn noiseless_device_never_rejects() {
        let d = new_device(1, &ErrorProfile::noiseless(), 8192).unwrap();
        let r = frr_experiment(Scheme::CodeOffset, &bch_build(8, 10).unwrap(), 128, &d, &ideal_challenge(&d), 200, 0).unwrap();
        assert_eq!(r.frr, Some(0.0));
        assert_eq!(r.mean_key_bit_error_same, Some(0.0));
        assert_eq!(r.mean_puf_error, 0.0);
    }

    #[test]
    fn genuine_impostor_control() {
        let d = new_device(2, &ErrorProfile::noiseless(), 8192).unwrap();
        let code = bch_build(8, 10).unwrap();
        let r = far_experiment(Scheme::Syndrome, &code, 128, &ideal_challenge(&d), &d, 100, 0).unwrap();
        assert_eq!(r.far, Some(1.0));
        assert_eq!(r.mean_key_bit_error_other, Some(0.0));
    }

    #[test]
    fn low_error_gives_near_zero_key_error() {
        let d = new_device(3, &ErrorProfile::uniform(0.001), 1 << 16).unwrap();
        let code = bch_build(8, 10).unwrap();
        let r = frr_experiment(Scheme::CodeOffset, &code, 128, &d, &ideal_challenge(&d), 2000, 1).unwrap();
        assert!(r.mean_puf_error < 0.002);
        assert!(r.mean_key_bit_error_same.unwrap() < 0.002);
    }

    #[test]
    fn error_above_radius_raises_frr() {
        let d = new_device(4, &ErrorProfile::uniform(0.125), 1 << 16).unwrap();
        let code = bch_build(8, 10).unwrap();
        let r = frr_experiment(Scheme::CodeOffset, &code, 128, &d, &ideal_challenge(&d), 500, 2).unwrap();
        assert!(r.frr.unwrap() > 0.9, "{r:?}");
        let k = r.mean_key_bit_error_same.unwrap();
        assert!(k > 0.4 && k < 0.6);
    }

    #[test]
    fn stronger_code_never_rejects_more() {
        let d = new_device(5, &ErrorProfile::uniform(0.02), 1 << 16).unwrap();
        let ch = ideal_challenge(&d);
        let weak = frr_experiment(Scheme::Syndrome, &bch_build(8, 5).unwrap(), 128, &d, &ch, 2000, 3).unwrap();
        let strong = frr_experiment(Scheme::Syndrome, &bch_build(8, 10).unwrap(), 128, &d, &ch, 2000, 3).unwrap();
        assert!(weak.frr.unwrap() > 0.0);
        assert!(strong.frr.unwrap() <= weak.frr.unwrap());
    }

    #[test]
    fn reports_are_reproducible() {
        let d = new_device(6, &ErrorProfile::default(), 1 << 15).unwrap();
        let (ch, _) = iterative_mask(&d, 4, 0).unwrap();
        let code = bch_build(8, 10).unwrap();
        let a = frr_experiment(Scheme::CodeOffset, &code, 128, &d, &ch, 300, 9).unwrap();
        let b = frr_experiment(Scheme::CodeOffset, &code, 128, &d, &ch, 300, 9).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(!serde_json::to_string(&a).unwrap().contains("runtime"));
    }

    #[test]
    fn independent_impostor_scrambles_the_key() {
        let a = new_device(7, &ErrorProfile::default(), 1 << 15).unwrap();
        let b = new_device(8, &ErrorProfile::default(), 1 << 15).unwrap();
        let (ch, _) = iterative_mask(&a, 5, 0).unwrap();
        let r = far_experiment(Scheme::CodeOffset, &bch_build(8, 10).unwrap(), 128, &ch, &b, 300, 4).unwrap();
        assert_eq!(r.far, Some(0.0));
        let m = r.mean_key_bit_error_other.unwrap();
        assert!((0.45..0.55).contains(&m), "{m}");
        assert!((0.45..0.55).contains(&r.mean_puf_error));
    }

    #[test]
    fn cycle_curve_shape() {
        let d = new_device(9, &ErrorProfile::default(), 1 << 16).unwrap();
        let pts = error_vs_cycles(&d, 10, 0).unwrap();
        assert_eq!(pts.len(), 11);
        assert_eq!(pts[0].surviving_fraction, 1.0);
        assert!(pts.windows(2).all(|w| w[1].surviving_fraction <= w[0].surviving_fraction));
        let csv = cycles_csv(&pts);
        assert!(csv.starts_with("cycle,surviving_fraction,error_rate\n"));
        assert_eq!(csv.lines().count(), 12);
    }

    #[test]
    fn zero_noise_key_curve_is_flat() {
        let d = new_device(10, &ErrorProfile::noiseless(), 1 << 14).unwrap();
        let code = polar_construct(1024, 128, 0.15).unwrap();
        let pts = key_error_curve(Scheme::CodeOffset, &code, 128, &d, &[1, 4], 50, 0).unwrap();
        assert!(pts.iter().all(|p| p.puf_error == 0.0 && p.key_error == 0.0));
        assert!(key_error_csv(&pts).starts_with("puf_error,key_error,trials\n"));
    }

    #[test]
    fn key_error_declines_with_masking() {
        let d = new_device(11, &ErrorProfile::default(), 1 << 16).unwrap();
        let code = bch_build(8, 5).unwrap();
        let pts = key_error_curve(Scheme::CodeOffset, &code, 128, &d, &[1, 25], 400, 0).unwrap();
        assert!(pts[1].puf_error < pts[0].puf_error);
        assert!(pts[1].key_error < pts[0].key_error, "{pts:?}");
    }
}
