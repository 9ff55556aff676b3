//! SRP-PHAT over the DOA grid, with scores turned into frame-level
//! pseudo-probabilities.

use std::f64::consts::PI;
use std::ops::RangeInclusive;

use rustfft::num_complex::Complex64;

use crate::acoustics::steering_delays;
use crate::error::{Error, Result};

/// Cross-spectra with a smaller magnitude are treated as empty.
pub const PHAT_FLOOR: f64 = 1e-12;

/// Far-field phase factors `exp(jω_k τ_m(θ_i))` for every class, band and mic.
#[derive(Debug, Clone)]
pub struct SteeringTable {
    pub doas: Vec<f64>,
    pub band_lo: usize,
    pub band_hi: usize,
    pub mics: usize,
    pub dft_len: usize,
    /// `[class][band][mic]`.
    pub factors: Vec<Complex64>,
    /// `exp(jω_k (τ_m2 − τ_m1))` per `[class][band][pair]`, pairs in `m1 < m2` order.
    pair_factors: Vec<Complex64>,
    pairs: Vec<(usize, usize)>,
}

impl SteeringTable {
    pub fn new(doas: &[f64], bands: RangeInclusive<usize>, mics: usize, spacing: f64, c: f64, fs: f64, dft_len: usize) -> Result<Self> {
        let (lo, hi) = (*bands.start(), *bands.end());
        if lo > hi || hi > dft_len / 2 {
            return Err(Error::BandRange { lo, hi, max: dft_len / 2 });
        }
        if mics < 2 || doas.is_empty() {
            return Err(Error::Shape("steering table needs >= 2 mics and >= 1 DOA".into()));
        }
        let pairs: Vec<(usize, usize)> = (0..mics).flat_map(|a| (a + 1..mics).map(move |b| (a, b))).collect();
        let mut factors = Vec::with_capacity(doas.len() * (hi - lo + 1) * mics);
        let mut pair_factors = Vec::with_capacity(doas.len() * (hi - lo + 1) * pairs.len());
        for &doa in doas {
            let tau = steering_delays(doa, mics, spacing, c);
            for k in lo..=hi {
                let omega = 2.0 * PI * k as f64 * fs / dft_len as f64;
                factors.extend(tau.iter().map(|t| Complex64::from_polar(1.0, omega * t)));
                pair_factors.extend(pairs.iter().map(|&(a, b)| Complex64::from_polar(1.0, omega * (tau[b] - tau[a]))));
            }
        }
        Ok(Self {
            doas: doas.to_vec(),
            band_lo: lo,
            band_hi: hi,
            mics,
            dft_len,
            factors,
            pair_factors,
            pairs,
        })
    }

    pub fn classes(&self) -> usize {
        self.doas.len()
    }

    pub fn bands(&self) -> usize {
        self.band_hi - self.band_lo + 1
    }

    pub fn pair_count(&self) -> usize {
        self.pairs.len()
    }

    pub fn factor(&self, class: usize, band: usize, mic: usize) -> Complex64 {
        self.factors[(class * self.bands() + band - self.band_lo) * self.mics + mic]
    }
}

/// Steered response power of one frame. `frame` holds all `dft_len/2 + 1`
/// bins, each an M-channel vector (the layout of [`StftFrameSet::frame`]).
///
/// [`StftFrameSet::frame`]: crate::dsp::StftFrameSet::frame
pub fn srp_response(frame: &[Complex64], table: &SteeringTable) -> Result<Vec<f64>> {
    let m = table.mics;
    let n_bins = table.dft_len / 2 + 1;
    if frame.len() != n_bins * m {
        return Err(Error::Shape(format!("frame holds {} bins, table expects {n_bins} x {m}", frame.len())));
    }
    let k_count = table.bands();
    let p_count = table.pair_count();
    let mut psi = Vec::with_capacity(k_count * p_count);
    for k in table.band_lo..=table.band_hi {
        let x = &frame[k * m..(k + 1) * m];
        for &(a, b) in &table.pairs {
            let cross = x[a] * x[b].conj();
            let mag = cross.norm();
            psi.push(if mag < PHAT_FLOOR { Complex64::new(0.0, 0.0) } else { cross / mag });
        }
    }
    Ok((0..table.classes())
        .map(|i| {
            let f = &table.pair_factors[i * k_count * p_count..(i + 1) * k_count * p_count];
            psi.iter().zip(f).map(|(p, e)| p.re * e.re - p.im * e.im).sum()
        })
        .collect())
}

/// Shifts scores to be nonnegative and normalizes them to unit sum.
pub fn srp_probabilities(scores: &[f64]) -> Vec<f64> {
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = scores.iter().map(|s| s - min).collect();
    let total: f64 = shifted.iter().sum();
    if total > 0.0 {
        shifted.iter().map(|s| s / total).collect()
    } else {
        vec![1.0 / scores.len() as f64; scores.len()]
    }
}
