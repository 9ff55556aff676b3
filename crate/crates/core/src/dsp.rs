//! STFT analysis/synthesis and phase-map features.

use std::f64::consts::PI;
use std::ops::RangeInclusive;

use rustfft::{num_complex::Complex64, FftPlanner};

use crate::error::{Error, Result};

pub const DFT_LEN: usize = 512;
/// Default feature bands: everything except DC and Nyquist.
pub const DEFAULT_BANDS: RangeInclusive<usize> = 1..=255;

/// Multichannel STFT, stored frame-major then bin then channel so that the
/// M-channel vector of one TF bin is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct StftFrameSet {
    pub data: Vec<Complex64>,
    pub n_frames: usize,
    pub n_bins: usize,
    pub n_channels: usize,
    pub dft_len: usize,
    pub hop: usize,
    pub fs: f64,
}

pub type MultiChannelStft = StftFrameSet;

impl StftFrameSet {
    pub fn zeros(n_frames: usize, n_channels: usize, dft_len: usize, fs: f64) -> Self {
        let n_bins = dft_len / 2 + 1;
        Self {
            data: vec![Complex64::new(0.0, 0.0); n_frames * n_bins * n_channels],
            n_frames,
            n_bins,
            n_channels,
            dft_len,
            hop: dft_len / 2,
            fs,
        }
    }

    fn index(&self, frame: usize, bin: usize) -> usize {
        (frame * self.n_bins + bin) * self.n_channels
    }

    /// The M-channel vector at (frame, bin).
    pub fn bin(&self, frame: usize, bin: usize) -> &[Complex64] {
        let i = self.index(frame, bin);
        &self.data[i..i + self.n_channels]
    }

    pub fn bin_mut(&mut self, frame: usize, bin: usize) -> &mut [Complex64] {
        let i = self.index(frame, bin);
        let m = self.n_channels;
        &mut self.data[i..i + m]
    }

    /// All bins of one frame, `n_bins × n_channels`.
    pub fn frame(&self, frame: usize) -> &[Complex64] {
        let i = self.index(frame, 0);
        &self.data[i..i + self.n_bins * self.n_channels]
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.n_bins == other.n_bins
            && self.n_channels == other.n_channels
            && self.dft_len == other.dft_len
            && self.hop == other.hop
            && self.fs == other.fs
    }

    /// Appends `other`'s frames after this set's frames.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if !self.same_layout(other) {
            return Err(Error::Shape(format!(
                "cannot concatenate STFTs with (bins, channels, dft) = ({}, {}, {}) and ({}, {}, {})",
                self.n_bins, self.n_channels, self.dft_len, other.n_bins, other.n_channels, other.dft_len
            )));
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(Self {
            data,
            n_frames: self.n_frames + other.n_frames,
            ..*self
        })
    }
}

/// Periodic Hann window; sums to exactly one at 50 % overlap.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len).map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos()).collect()
}

pub fn frame_count(len: usize, dft_len: usize) -> usize {
    let hop = dft_len / 2;
    if len < dft_len {
        0
    } else {
        (len - dft_len) / hop + 1
    }
}

/// Hann-windowed STFT with 50 % overlap and a one-sided spectrum.
pub fn stft(x: &[Vec<f64>], dft_len: usize, fs: f64) -> Result<StftFrameSet> {
    if x.is_empty() {
        return Err(Error::EmptySignal);
    }
    if dft_len < 2 || dft_len % 2 != 0 {
        return Err(Error::Shape(format!("DFT length must be even and >= 2, got {dft_len}")));
    }
    let len = x[0].len();
    if x.iter().any(|ch| ch.len() != len) {
        return Err(Error::Shape("all channels must have the same length".into()));
    }
    if len < dft_len {
        return Err(Error::SignalTooShort { len, dft_len });
    }
    let n_frames = frame_count(len, dft_len);
    let mut out = StftFrameSet::zeros(n_frames, x.len(), dft_len, fs);
    let window = hann(dft_len);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(dft_len);
    let mut buf = vec![Complex64::new(0.0, 0.0); dft_len];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for (ch, samples) in x.iter().enumerate() {
        for f in 0..n_frames {
            let start = f * out.hop;
            for (b, (s, w)) in buf.iter_mut().zip(samples[start..start + dft_len].iter().zip(&window)) {
                *b = Complex64::new(s * w, 0.0);
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            for (k, v) in buf[..out.n_bins].iter().enumerate() {
                out.bin_mut(f, k)[ch] = *v;
            }
        }
    }
    Ok(out)
}

/// Overlap-add synthesis. Output length is `(N - 1) * hop + dft_len`;
/// samples in [`interior`] reconstruct the analysed signal exactly.
pub fn istft(frames: &StftFrameSet) -> Result<Vec<Vec<f64>>> {
    let (dft_len, hop) = (frames.dft_len, frames.hop);
    if frames.n_bins != dft_len / 2 + 1 || frames.data.len() != frames.n_frames * frames.n_bins * frames.n_channels {
        return Err(Error::Shape("malformed STFT frame set".into()));
    }
    if frames.n_frames == 0 {
        return Ok(vec![Vec::new(); frames.n_channels]);
    }
    let len = (frames.n_frames - 1) * hop + dft_len;
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(dft_len);
    let mut scratch = vec![Complex64::new(0.0, 0.0); ifft.get_inplace_scratch_len()];
    let mut buf = vec![Complex64::new(0.0, 0.0); dft_len];
    let scale = 1.0 / dft_len as f64;
    let mut out = vec![vec![0.0; len]; frames.n_channels];
    for (ch, signal) in out.iter_mut().enumerate() {
        for f in 0..frames.n_frames {
            for k in 0..frames.n_bins {
                buf[k] = frames.bin(f, k)[ch];
            }
            // Hermitian extension of the one-sided spectrum.
            for k in frames.n_bins..dft_len {
                buf[k] = buf[dft_len - k].conj();
            }
            buf[0].im = 0.0;
            buf[dft_len / 2].im = 0.0;
            ifft.process_with_scratch(&mut buf, &mut scratch);
            let start = f * hop;
            for (o, v) in signal[start..start + dft_len].iter_mut().zip(&buf) {
                *o += v.re * scale;
            }
        }
    }
    Ok(out)
}

/// Sample range covered by two overlapping frames.
pub fn interior(n_frames: usize, hop: usize) -> std::ops::Range<usize> {
    hop..n_frames * hop
}

/// Per-frame STFT phases, `M × K`, mic-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMap {
    pub values: Vec<f32>,
    pub mics: usize,
    pub band_lo: usize,
    pub band_hi: usize,
}

impl PhaseMap {
    pub fn bands(&self) -> usize {
        self.band_hi - self.band_lo + 1
    }

    pub fn get(&self, mic: usize, band: usize) -> f32 {
        self.values[mic * self.bands() + band]
    }
}

/// Principal angle in (−π, π]; zero-magnitude bins give 0.
pub fn principal_angle(z: Complex64) -> f64 {
    if z.re == 0.0 && z.im == 0.0 {
        return 0.0;
    }
    let a = z.im.atan2(z.re);
    if a <= -PI {
        PI
    } else {
        a
    }
}

fn principal_angle_f32(z: Complex64) -> f32 {
    let a = principal_angle(z) as f32;
    // Rounding to f32 can land exactly on -π.
    if a <= -std::f32::consts::PI {
        std::f32::consts::PI
    } else {
        a
    }
}

/// Phase map of frame `n` over `bands`.
pub fn phase_map(frames: &StftFrameSet, n: usize, bands: RangeInclusive<usize>) -> Result<PhaseMap> {
    let (lo, hi) = (*bands.start(), *bands.end());
    if lo > hi || hi >= frames.n_bins {
        return Err(Error::BandRange {
            lo,
            hi,
            max: frames.n_bins.saturating_sub(1),
        });
    }
    if n >= frames.n_frames {
        return Err(Error::Shape(format!("frame index {n} out of range for {} frames", frames.n_frames)));
    }
    let k_count = hi - lo + 1;
    let m_count = frames.n_channels;
    let mut values = vec![0f32; m_count * k_count];
    for k in lo..=hi {
        for (m, &z) in frames.bin(n, k).iter().enumerate() {
            values[m * k_count + (k - lo)] = principal_angle_f32(z);
        }
    }
    Ok(PhaseMap {
        values,
        mics: m_count,
        band_lo: lo,
        band_hi: hi,
    })
}

/// Phase maps of every frame.
pub fn phase_maps(frames: &StftFrameSet, bands: RangeInclusive<usize>) -> Result<Vec<PhaseMap>> {
    (0..frames.n_frames).map(|n| phase_map(frames, n, bands.clone())).collect()
}
