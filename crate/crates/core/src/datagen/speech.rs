//! Speech-like test sources and 16-bit PCM WAV I/O.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Amplitude-modulated pink noise with word-like bursts separated by random
/// 100–300 ms pauses. Normalized to unit RMS.
pub fn speech_like<R: Rng>(n_samples: usize, fs: f64, rng: &mut R) -> Vec<f64> {
    let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
    let pink: Vec<f64> = (0..n_samples)
        .map(|_| {
            let w: f64 = rng.sample(StandardNormal);
            b0 = 0.99765 * b0 + w * 0.099_046_0;
            b1 = 0.96300 * b1 + w * 0.296_516_4;
            b2 = 0.57000 * b2 + w * 1.052_691_3;
            b0 + b1 + b2 + w * 0.1848
        })
        .collect();

    let mut env = vec![0.0; n_samples];
    let mut t = (rng.random_range(0.0..0.3) * fs) as usize;
    while t < n_samples {
        let word = (rng.random_range(0.2..0.6) * fs) as usize;
        let syllable_hz: f64 = rng.random_range(3.0..6.0);
        let gain: f64 = rng.random_range(0.5..1.0);
        for (i, e) in env.iter_mut().skip(t).take(word).enumerate() {
            let s = (std::f64::consts::PI * syllable_hz * i as f64 / fs).sin();
            *e = gain * s * s;
        }
        t += word + (rng.random_range(0.1..0.3) * fs) as usize;
    }

    let mut out: Vec<f64> = pink.iter().zip(&env).map(|(p, e)| p * e).collect();
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / n_samples.max(1) as f64).sqrt();
    if rms > 0.0 {
        out.iter_mut().for_each(|v| *v /= rms);
    }
    out
}

/// Writes 16-bit PCM; samples are clipped to [-1, 1].
pub fn write_wav(path: &Path, channels: &[Vec<f64>], fs: u32) -> Result<()> {
    let spec = hound::WavSpec {
        channels: channels.len() as u16,
        sample_rate: fs,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let len = channels.first().map_or(0, Vec::len);
    if channels.iter().any(|c| c.len() != len) {
        return Err(Error::Shape("all WAV channels must have the same length".into()));
    }
    let mut w = hound::WavWriter::create(path, spec)?;
    for i in 0..len {
        for ch in channels {
            w.write_sample((ch[i].clamp(-1.0, 1.0) * i16::MAX as f64).round() as i16)?;
        }
    }
    w.finalize()?;
    Ok(())
}

/// Reads a 16-bit PCM WAV at `expected_fs` into per-channel samples in [-1, 1].
pub fn read_wav_multichannel(path: &Path, expected_fs: u32) -> Result<Vec<Vec<f64>>> {
    let mut r = hound::WavReader::open(path)?;
    let spec = r.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::WavFormat {
            path: path.to_path_buf(),
            detail: format!("{:?} {}-bit, need 16-bit PCM", spec.sample_format, spec.bits_per_sample),
        });
    }
    if spec.sample_rate != expected_fs {
        return Err(Error::WavFormat {
            path: path.to_path_buf(),
            detail: format!("{} Hz, need {expected_fs} Hz (resampling is not supported)", spec.sample_rate),
        });
    }
    let n_ch = spec.channels as usize;
    let mut out = vec![Vec::with_capacity(r.len() as usize / n_ch.max(1)); n_ch];
    for (i, s) in r.samples::<i16>().enumerate() {
        out[i % n_ch].push(s? as f64 / i16::MAX as f64);
    }
    Ok(out)
}

pub fn read_wav_mono(path: &Path, expected_fs: u32) -> Result<Vec<f64>> {
    let mut chans = read_wav_multichannel(path, expected_fs)?;
    if chans.len() != 1 {
        return Err(Error::WavFormat {
            path: path.to_path_buf(),
            detail: format!("{} channels, need mono", chans.len()),
        });
    }
    Ok(chans.remove(0))
}
