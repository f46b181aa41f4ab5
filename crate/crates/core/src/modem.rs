//! Gray-mapped square QAM with exact (true-sum) LLR demapping.
//!
//! LLRs follow the convention `ln Pr(c = 1 | r) / Pr(c = 0 | r)`: a positive value
//! favours bit 1. Natural logarithms are used throughout.

use num_complex::Complex64;
use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{contract, Result};

/// Default LLR magnitude bound.
pub const LLR_CLAMP: f64 = 30.0;

/// Square Gray-mapped QAM constellation with unit average energy.
///
/// Each axis carries `bits_per_symbol / 2` bits: the first half of a symbol's
/// bits drives the in-phase level, the second half the quadrature level. A
/// leading 0 bit maps to the positive half-axis.
#[derive(Debug, Clone)]
pub struct Qam {
    bits_per_symbol: usize,
    /// Amplitude per Gray label on one axis, already normalized.
    levels: Vec<f64>,
}

impl Qam {
    pub fn new(bits_per_symbol: usize) -> Result<Self> {
        if bits_per_symbol == 0 || bits_per_symbol % 2 != 0 || bits_per_symbol > 16 {
            return Err(contract(format!(
                "square QAM needs an even, positive bits_per_symbol, got {bits_per_symbol}"
            )));
        }
        let per_axis = bits_per_symbol / 2;
        let m = 1usize << per_axis;
        // Average energy of the unnormalized 2-D constellation is 2 (M - 1) / 3.
        let scale = (2.0 * (m * m - 1) as f64 / 3.0).sqrt();
        let levels = (0..m)
            .map(|label| {
                // position index whose Gray code equals `label`, counted from the positive end
                let mut idx = label;
                let mut shift = label >> 1;
                while shift != 0 {
                    idx ^= shift;
                    shift >>= 1;
                }
                (m as f64 - 1.0 - 2.0 * idx as f64) / scale
            })
            .collect();
        Ok(Qam {
            bits_per_symbol,
            levels,
        })
    }

    pub fn qpsk() -> Self {
        Qam {
            bits_per_symbol: 2,
            levels: vec![FRAC_1_SQRT_2, -FRAC_1_SQRT_2],
        }
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    fn axis_bits(&self) -> usize {
        self.bits_per_symbol / 2
    }

    fn axis_level(&self, bits: &[u8]) -> f64 {
        let label = bits.iter().fold(0usize, |acc, &b| acc << 1 | usize::from(b & 1));
        self.levels[label]
    }

    /// Maps bits to symbols.
    pub fn map(&self, bits: &[u8]) -> Result<Vec<Complex64>> {
        if bits.len() % self.bits_per_symbol != 0 {
            return Err(contract(format!(
                "{} bits is not a multiple of {} bits per symbol",
                bits.len(),
                self.bits_per_symbol
            )));
        }
        let half = self.axis_bits();
        Ok(bits
            .chunks_exact(self.bits_per_symbol)
            .map(|chunk| Complex64::new(self.axis_level(&chunk[..half]), self.axis_level(&chunk[half..])))
            .collect())
    }

    /// Exact per-bit LLRs for observations `r = gain * x + CN(0, noise_var)`.
    pub fn demap(&self, received: &[Complex64], gain: f64, noise_var: f64) -> Result<Vec<f64>> {
        if !(noise_var > 0.0) {
            return Err(contract(format!("noise variance must be positive, got {noise_var}")));
        }
        let mut out = Vec::with_capacity(received.len() * self.bits_per_symbol);
        if self.bits_per_symbol == 2 {
            // per axis: ln p(-a) / p(+a) = -4 a g y / N0 with a = 1/sqrt(2)
            let k = -4.0 * FRAC_1_SQRT_2 * gain / noise_var;
            for r in received {
                out.push(clamp_llr(k * r.re));
                out.push(clamp_llr(k * r.im));
            }
            return Ok(out);
        }
        for r in received {
            self.axis_llrs(r.re, gain, noise_var, &mut out);
            self.axis_llrs(r.im, gain, noise_var, &mut out);
        }
        Ok(out)
    }

    /// Axis-separable true-sum LLRs; the complex Gaussian factorizes per axis.
    fn axis_llrs(&self, y: f64, gain: f64, noise_var: f64, out: &mut Vec<f64>) {
        let half = self.axis_bits();
        let metrics: Vec<f64> = self
            .levels
            .iter()
            .map(|&a| -(y - gain * a).powi(2) / noise_var)
            .collect();
        for bit in 0..half {
            let mask = 1 << (half - 1 - bit);
            let (mut one, mut zero) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for (label, &m) in metrics.iter().enumerate() {
                if label & mask != 0 {
                    one = log_add(one, m);
                } else {
                    zero = log_add(zero, m);
                }
            }
            out.push(clamp_llr(one - zero));
        }
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

pub(crate) fn clamp_llr(v: f64) -> f64 {
    v.clamp(-LLR_CLAMP, LLR_CLAMP)
}

/// QPSK convenience wrapper around [`Qam::map`].
pub fn qam_map(bits: &[u8], bits_per_symbol: usize) -> Result<Vec<Complex64>> {
    Qam::new(bits_per_symbol)?.map(bits)
}

/// Convenience wrapper around [`Qam::demap`].
pub fn qam_demap_llr(received: &[Complex64], gain: f64, noise_var: f64, bits_per_symbol: usize) -> Result<Vec<f64>> {
    Qam::new(bits_per_symbol)?.demap(received, gain, noise_var)
}

/// Bit decision: 1 iff the LLR is strictly positive.
pub fn hard_decision(llrs: &[f64]) -> Vec<u8> {
    llrs.iter().map(|&l| u8::from(l > 0.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn qpsk_points() {
        let s = qam_map(&[0, 0, 1, 1, 0, 1], 2).unwrap();
        assert_abs_diff_eq!(s[0].re, FRAC_1_SQRT_2);
        assert_abs_diff_eq!(s[0].im, FRAC_1_SQRT_2);
        assert_abs_diff_eq!(s[1].re, -FRAC_1_SQRT_2);
        assert_abs_diff_eq!(s[1].im, -FRAC_1_SQRT_2);
        assert_abs_diff_eq!(s[2].re, FRAC_1_SQRT_2);
        assert_abs_diff_eq!(s[2].im, -FRAC_1_SQRT_2);
        assert!(qam_map(&[0, 1, 1], 2).is_err());
    }

    #[test]
    fn unit_energy_constellations() {
        for bps in [2, 4, 6] {
            let qam = Qam::new(bps).unwrap();
            let m = 1usize << bps;
            let bits: Vec<u8> = (0..m)
                .flat_map(|s| (0..bps).rev().map(move |i| (s >> i & 1) as u8))
                .collect();
            let syms = qam.map(&bits).unwrap();
            let energy: f64 = syms.iter().map(|s| s.norm_sqr()).sum::<f64>() / m as f64;
            assert_abs_diff_eq!(energy, 1.0, epsilon = 1e-12);
        }
        assert!(Qam::new(3).is_err());
    }

    #[test]
    fn zero_observation_gives_zero_llrs() {
        let l = qam_demap_llr(&[Complex64::new(0.0, 0.0)], 1.0, 0.5, 2).unwrap();
        assert_eq!(l, vec![0.0, 0.0]);
    }

    #[test]
    fn sign_convention() {
        let x = qam_map(&[0, 0], 2).unwrap();
        let l = qam_demap_llr(&x, 1.0, 1e-3, 2).unwrap();
        assert!(l.iter().all(|&v| v < -10.0));
        assert!(qam_demap_llr(&x, 1.0, 0.0, 2).is_err());
    }

    fn brute_force_llr(r: Complex64, h: f64, n0: f64, bps: usize, bit: usize) -> f64 {
        let qam = Qam::new(bps).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for s in 0..(1usize << bps) {
            let bits: Vec<u8> = (0..bps).rev().map(|i| (s >> i & 1) as u8).collect();
            let x = qam.map(&bits).unwrap()[0];
            let p = (-(r - h * x).norm_sqr() / n0).exp();
            if bits[bit] == 1 {
                num += p;
            } else {
                den += p;
            }
        }
        (num / den).ln()
    }

    #[test]
    fn matches_brute_force() {
        let r = Complex64::new(0.3, 0.1);
        let l = qam_demap_llr(&[r], 1.0, 0.5, 2).unwrap();
        for bit in 0..2 {
            assert_abs_diff_eq!(l[bit], brute_force_llr(r, 1.0, 0.5, 2, bit), epsilon = 1e-12);
        }
        let r = Complex64::new(-0.45, 0.8);
        let l = qam_demap_llr(&[r], 0.9, 0.2, 4).unwrap();
        for bit in 0..4 {
            assert_abs_diff_eq!(l[bit], brute_force_llr(r, 0.9, 0.2, 4, bit), epsilon = 1e-10);
        }
    }

    proptest! {
        #[test]
        fn noiseless_round_trip(bits in proptest::collection::vec(0u8..2, 1..40), h in 0.2f64..3.0) {
            let mut bits = bits;
            if bits.len() % 2 == 1 { bits.push(0); }
            let x = qam_map(&bits, 2).unwrap();
            let r: Vec<Complex64> = x.iter().map(|s| s * h).collect();
            let l = qam_demap_llr(&r, h, 0.1, 2).unwrap();
            prop_assert_eq!(hard_decision(&l), bits);
        }

        #[test]
        fn axis_antisymmetry(re in -2.0f64..2.0, im in -2.0f64..2.0, n0 in 0.05f64..2.0) {
            let a = qam_demap_llr(&[Complex64::new(re, im)], 1.0, n0, 2).unwrap();
            let b = qam_demap_llr(&[Complex64::new(-re, im)], 1.0, n0, 2).unwrap();
            prop_assert!((a[0] + b[0]).abs() < 1e-12);
            prop_assert!((a[1] - b[1]).abs() < 1e-12);
            prop_assert!(a.iter().all(|v| v.abs() <= LLR_CLAMP));
        }
    }

    #[test]
    fn hard_decision_ties() {
        assert_eq!(hard_decision(&[5.0, -5.0, 0.0]), vec![1, 0, 0]);
    }
}
