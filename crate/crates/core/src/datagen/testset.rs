//! Two-source test mixtures in an unseen room.
//!
//! Layout on disk: `index.json` plus one directory per mixture holding
//! `audio.wav` (M channels, 16-bit PCM) and `truth.json`.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{derive_seed, speech_like, write_wav, AcousticSetup, ArrayConfig, DoaClasses, FeatureConfig, RoomSpec};
use crate::acoustics::{self, ArraySetup};
use crate::error::{Error, IoContext, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestConfig {
    pub room: RoomSpec,
    pub distance: f64,
    pub snr_db: f64,
    /// Keep every n-th pair of the lexicographic pair list.
    pub pair_stride: usize,
    pub duration_s: f64,
    pub doa_resolution_deg: f64,
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        acoustics::sabine_reflection(&self.room.room()?)?;
        DoaClasses::new(self.doa_resolution_deg)?;
        if self.pair_stride == 0 || !(self.distance > 0.0) || !(self.duration_s > 0.0) || self.snr_db.is_nan() {
            return Err(Error::Config("test config needs stride >= 1 and positive distance/duration".into()));
        }
        Ok(())
    }

    pub fn selected_pairs(&self) -> Result<Vec<(usize, usize)>> {
        let classes = DoaClasses::new(self.doa_resolution_deg)?;
        Ok(classes.pairs().into_iter().step_by(self.pair_stride).collect())
    }
}

/// Where the dry source signals come from.
#[derive(Debug, Clone)]
pub enum SourceProvider {
    /// Fresh speech-like signals per mixture.
    Synthetic,
    /// Pre-loaded mono recordings.
    Signals(Vec<Vec<f64>>),
}

impl SourceProvider {
    /// Loads every `*.wav` in `dir` (sorted by name) as mono 16-bit PCM at `fs`.
    pub fn from_wav_dir(dir: &Path, fs: u32) -> Result<Self> {
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .context(|| format!("listing {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
            .collect();
        paths.sort();
        let signals = paths.iter().map(|p| super::read_wav_mono(p, fs)).collect::<Result<Vec<_>>>()?;
        if signals.len() < 2 {
            return Err(Error::NotEnoughSources(signals.len()));
        }
        Ok(Self::Signals(signals))
    }

    fn draw_pair<R: Rng>(&self, n: usize, fs: f64, rng: &mut R) -> Result<[Vec<f64>; 2]> {
        match self {
            Self::Synthetic => Ok([speech_like(n, fs, rng), speech_like(n, fs, rng)]),
            Self::Signals(list) => {
                if list.len() < 2 {
                    return Err(Error::NotEnoughSources(list.len()));
                }
                let i = rng.random_range(0..list.len());
                let j = (i + rng.random_range(1..list.len())) % list.len();
                let mut segment = |s: &Vec<f64>| {
                    let mut out = vec![0.0; n];
                    let start = if s.len() > n { rng.random_range(0..=s.len() - n) } else { 0 };
                    let take = n.min(s.len() - start);
                    out[..take].copy_from_slice(&s[start..start + take]);
                    out
                };
                Ok([segment(&list[i]), segment(&list[j])])
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureTruth {
    pub theta1: f64,
    pub theta2: f64,
    pub snr_db: f64,
}

/// A rendered mixture before quantization.
#[derive(Debug, Clone)]
pub struct Mixture {
    pub truth: MixtureTruth,
    pub clean: Vec<Vec<f64>>,
    pub noisy: Vec<Vec<f64>>,
}

/// Renders two distinct sources from `class_a` and `class_b`, sums them and
/// adds spatially white noise at the configured SNR.
pub fn render_mixture<R: Rng>(
    setup: &mut AcousticSetup,
    config: &TestConfig,
    class_a: usize,
    class_b: usize,
    sources: &SourceProvider,
    rng: &mut R,
) -> Result<Mixture> {
    let classes = DoaClasses::new(config.doa_resolution_deg)?;
    let n = (config.duration_s * setup.fs).round() as usize;
    let [s1, s2] = sources.draw_pair(n, setup.fs, rng)?;
    let (theta1, theta2) = (classes.doa(class_a), classes.doa(class_b));
    let x1 = acoustics::render(&s1, &setup.rirs(theta1)?.1)?;
    let x2 = acoustics::render(&s2, &setup.rirs(theta2)?.1)?;
    let clean: Vec<Vec<f64>> = x1.iter().zip(&x2).map(|(a, b)| a.iter().zip(b).map(|(p, q)| p + q).collect()).collect();
    let noisy = acoustics::add_noise_snr(&clean, config.snr_db, rng)?;
    Ok(Mixture {
        truth: MixtureTruth {
            theta1,
            theta2,
            snr_db: config.snr_db,
        },
        clean,
        noisy,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSetIndex {
    pub seed: u64,
    pub config: TestConfig,
    pub array: ArraySetup,
    pub features: FeatureConfig,
    pub mixtures: Vec<String>,
}

impl TestSetIndex {
    pub const FILE_NAME: &'static str = "index.json";
}

pub fn mixture_id(theta1: f64, theta2: f64) -> String {
    format!("mix_{:03}_{:03}", theta1.round() as i64, theta2.round() as i64)
}

/// Writes the test set described by `config` into `out_dir`.
pub fn gen_test_mixtures(
    config: &TestConfig,
    array: &ArrayConfig,
    features: &FeatureConfig,
    sources: &SourceProvider,
    seed: u64,
    out_dir: &Path,
    threads: usize,
) -> Result<TestSetIndex> {
    config.validate()?;
    features.validate()?;
    if let SourceProvider::Signals(list) = sources {
        if list.len() < 2 {
            return Err(Error::NotEnoughSources(list.len()));
        }
    }
    let room = config.room.room()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "test-array", &[]));
    let (centers, axis) = acoustics::draw_array_centers(&room, 1, array.clearance, array.height, &mut rng);
    let array_setup = ArraySetup::new(&room, centers[0], axis, array.mic_count, array.spacing)?;
    let mut setup = AcousticSetup::new(room, array_setup.clone(), config.distance, features.fs)?;
    let classes = DoaClasses::new(config.doa_resolution_deg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| setup.prefetch(&classes.doas()))?;
    fs::create_dir_all(out_dir).context(|| format!("creating {}", out_dir.display()))?;

    let pairs = config.selected_pairs()?;
    let ids: Vec<String> = pool.install(|| {
        pairs
            .par_iter()
            .map(|&(a, b)| -> Result<String> {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "test-mixture", &[a as u64, b as u64]));
                let mut local = setup.clone();
                let mix = render_mixture(&mut local, config, a, b, sources, &mut rng)?;
                let id = mixture_id(mix.truth.theta1, mix.truth.theta2);
                let dir = out_dir.join(&id);
                fs::create_dir_all(&dir).context(|| format!("creating {}", dir.display()))?;
                let peak = mix.noisy.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
                let gain = if peak > 0.0 { 0.9 / peak } else { 1.0 };
                let scaled: Vec<Vec<f64>> = mix.noisy.iter().map(|c| c.iter().map(|v| v * gain).collect()).collect();
                write_wav(&dir.join("audio.wav"), &scaled, features.fs.round() as u32)?;
                fs::write(dir.join("truth.json"), serde_json::to_string_pretty(&mix.truth)?)
                    .context(|| format!("writing truth for {id}"))?;
                Ok(id)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let index = TestSetIndex {
        seed,
        config: config.clone(),
        array: array_setup,
        features: features.clone(),
        mixtures: ids,
    };
    fs::write(out_dir.join(TestSetIndex::FILE_NAME), serde_json::to_string_pretty(&index)?)
        .context(|| "writing test index".into())?;
    Ok(index)
}

#[derive(Debug, Clone)]
pub struct TestMixture {
    pub id: String,
    pub truth: MixtureTruth,
    pub audio: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct TestSet {
    pub dir: PathBuf,
    pub index: TestSetIndex,
}

impl TestSet {
    pub fn load_mixture(&self, id: &str) -> Result<TestMixture> {
        let dir = self.dir.join(id);
        let truth_text = fs::read_to_string(dir.join("truth.json")).context(|| format!("reading truth for {id}"))?;
        let audio = super::read_wav_multichannel(&dir.join("audio.wav"), self.index.features.fs.round() as u32)?;
        Ok(TestMixture {
            id: id.to_string(),
            truth: serde_json::from_str(&truth_text)?,
            audio,
        })
    }
}

pub fn load_test_set(dir: &Path) -> Result<TestSet> {
    let path = dir.join(TestSetIndex::FILE_NAME);
    let text = fs::read_to_string(&path).context(|| format!("reading {}", path.display()))?;
    Ok(TestSet {
        dir: dir.to_path_buf(),
        index: serde_json::from_str(&text)?,
    })
}
