//! Training-data synthesis from spatialized noise.
//!
//! Each training cell renders two white-noise signals from two different
//! DOAs, joins them in time and shuffles the STFT time slots of every
//! frequency band independently. A shuffled TF bin moves with all of its
//! microphone channels, so every bin keeps the inter-microphone phase pattern
//! of exactly one source while each frame mixes bins from both DOAs.

mod shard;
mod speech;
mod testset;

pub use shard::{read_shard, read_shard_header, write_shard, FrameStore, ShardHeader, ShardWriter, SHARD_MAGIC, SHARD_VERSION};
pub use speech::{read_wav_mono, read_wav_multichannel, speech_like, write_wav};
pub use testset::{
    gen_test_mixtures, load_test_set, mixture_id, render_mixture, Mixture, MixtureTruth, SourceProvider, TestConfig, TestMixture,
    TestSet, TestSetIndex,
};

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acoustics::{self, ArraySetup, Rir, Room, SourcePlacement};
use crate::dsp::{self, PhaseMap, StftFrameSet};
use crate::error::{Error, IoContext, Result};
pub use crate::seed::{derive_seed, sha256_hex};

/// Discretized DOA range `0..=180` degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoaClasses {
    pub resolution_deg: f64,
}

impl DoaClasses {
    pub fn new(resolution_deg: f64) -> Result<Self> {
        let steps = 180.0 / resolution_deg;
        if !(resolution_deg > 0.0) || (steps - steps.round()).abs() > 1e-9 {
            return Err(Error::Config(format!("DOA resolution must divide 180 deg, got {resolution_deg}")));
        }
        let classes = Self { resolution_deg };
        if classes.count() > 64 {
            return Err(Error::Config(format!("at most 64 DOA classes are supported, got {}", classes.count())));
        }
        Ok(classes)
    }

    pub fn count(&self) -> usize {
        (180.0 / self.resolution_deg).round() as usize + 1
    }

    pub fn doa(&self, class: usize) -> f64 {
        class as f64 * self.resolution_deg
    }

    pub fn class_of(&self, doa_deg: f64) -> Option<usize> {
        let c = doa_deg / self.resolution_deg;
        let r = c.round();
        ((c - r).abs() < 1e-6 && r >= 0.0 && (r as usize) < self.count()).then_some(r as usize)
    }

    pub fn doas(&self) -> Vec<f64> {
        (0..self.count()).map(|c| self.doa(c)).collect()
    }

    /// All unordered class pairs `(a, b)` with `a < b`, lexicographic.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let n = self.count();
        (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect()
    }
}

/// Multi-hot class set, one bit per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct LabelSet(pub u64);

impl LabelSet {
    pub fn from_classes(classes: &[usize]) -> Result<Self> {
        let mut bits = 0u64;
        for &c in classes {
            if c >= 64 {
                return Err(Error::Shape(format!("class index {c} does not fit a 64-bit label")));
            }
            bits |= 1 << c;
        }
        Ok(Self(bits))
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn contains(&self, class: usize) -> bool {
        class < 64 && self.0 >> class & 1 == 1
    }

    pub fn classes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..64).filter(|&c| self.contains(c))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFrame {
    pub phase: PhaseMap,
    pub label: LabelSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomSpec {
    pub name: String,
    pub dims: [f64; 3],
    pub rt60: f64,
}

impl RoomSpec {
    pub fn room(&self) -> Result<Room> {
        Room::new(self.dims, self.rt60)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArrayConfig {
    pub mic_count: usize,
    pub spacing: f64,
    /// Height of the array plane above the floor.
    pub height: f64,
    /// Preferred horizontal distance from the array center to the walls.
    pub clearance: f64,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self {
            mic_count: 4,
            spacing: 0.08,
            height: 1.5,
            clearance: 2.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub fs: f64,
    pub dft_len: usize,
    pub band_lo: usize,
    pub band_hi: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            fs: acoustics::SAMPLE_RATE,
            dft_len: dsp::DFT_LEN,
            band_lo: *dsp::DEFAULT_BANDS.start(),
            band_hi: *dsp::DEFAULT_BANDS.end(),
        }
    }
}

impl FeatureConfig {
    pub fn bands(&self) -> std::ops::RangeInclusive<usize> {
        self.band_lo..=self.band_hi
    }

    pub fn band_count(&self) -> usize {
        self.band_hi + 1 - self.band_lo
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fs > 0.0) || self.dft_len < 4 || self.dft_len % 2 != 0 {
            return Err(Error::Config(format!("invalid STFT setup: fs {} dft {}", self.fs, self.dft_len)));
        }
        if self.band_lo > self.band_hi || self.band_hi > self.dft_len / 2 {
            return Err(Error::BandRange {
                lo: self.band_lo,
                hi: self.band_hi,
                max: self.dft_len / 2,
            });
        }
        Ok(())
    }
}

/// The training-condition grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainGrid {
    pub rooms: Vec<RoomSpec>,
    pub positions_per_room: usize,
    pub distances: Vec<f64>,
    pub snr_range_db: [f64; 2],
    pub doa_resolution_deg: f64,
    /// Length of each single-DOA signal before joining a pair.
    pub signal_duration_s: f64,
    /// Restricts generation to these DOA pairs (degrees); all pairs when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<[f64; 2]>>,
    /// Also emit one-hot cells for every single DOA.
    #[serde(default)]
    pub single_source: bool,
}

impl TrainGrid {
    pub fn classes(&self) -> Result<DoaClasses> {
        DoaClasses::new(self.doa_resolution_deg)
    }

    pub fn validate(&self) -> Result<()> {
        let classes = self.classes()?;
        if self.rooms.is_empty() || self.positions_per_room == 0 || self.distances.is_empty() {
            return Err(Error::Config("grid needs at least one room, position and distance".into()));
        }
        for r in &self.rooms {
            acoustics::sabine_reflection(&r.room()?)?;
        }
        if self.distances.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::Config("source distances must be positive".into()));
        }
        let [lo, hi] = self.snr_range_db;
        if !(lo <= hi) {
            return Err(Error::Config(format!("invalid SNR range [{lo}, {hi}]")));
        }
        if !(self.signal_duration_s > 0.0) {
            return Err(Error::Config("signal duration must be positive".into()));
        }
        self.cell_pairs(&classes)?;
        Ok(())
    }

    /// Class pairs per setup, canonicalized and sorted; `(c, c)` marks a
    /// single-source cell.
    pub fn cell_pairs(&self, classes: &DoaClasses) -> Result<Vec<(usize, usize)>> {
        let mut pairs = match &self.pairs {
            None => classes.pairs(),
            Some(list) => {
                let mut out = Vec::with_capacity(list.len());
                for &[a, b] in list {
                    let (Some(ca), Some(cb)) = (classes.class_of(a), classes.class_of(b)) else {
                        return Err(Error::Config(format!("pair ({a}, {b}) is not on the DOA grid")));
                    };
                    if ca == cb {
                        return Err(Error::Config(format!("pair ({a}, {b}) needs two different DOAs")));
                    }
                    out.push((ca.min(cb), ca.max(cb)));
                }
                out
            }
        };
        if self.single_source {
            pairs.extend((0..classes.count()).map(|c| (c, c)));
        }
        pairs.sort_unstable();
        pairs.dedup();
        Ok(pairs)
    }

    /// Number of records a full run produces (ignoring infeasible cells).
    pub fn projected_frames(&self, features: &FeatureConfig) -> Result<u64> {
        let classes = self.classes()?;
        let per_cell = frames_per_cell(self.signal_duration_s, features) as u64;
        let cells = self.rooms.len() as u64
            * self.positions_per_room as u64
            * self.distances.len() as u64
            * self.cell_pairs(&classes)?.len() as u64;
        Ok(cells * per_cell)
    }
}

fn signal_len(duration_s: f64, fs: f64) -> usize {
    (duration_s * fs).round() as usize
}

/// Frames produced by one pair cell: two signals joined in time.
pub fn frames_per_cell(duration_s: f64, features: &FeatureConfig) -> usize {
    dsp::frame_count(2 * signal_len(duration_s, features.fs), features.dft_len)
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

/// Array centers of every room position, derived from the master seed.
pub fn array_setups(room: &Room, room_idx: usize, count: usize, array: &ArrayConfig, master_seed: u64) -> Result<Vec<ArraySetup>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(master_seed, "array-centers", &[room_idx as u64]));
    let (centers, axis) = acoustics::draw_array_centers(room, count, array.clearance, array.height, &mut rng);
    centers
        .into_iter()
        .map(|c| ArraySetup::new(room, c, axis, array.mic_count, array.spacing))
        .collect()
}

/// One (room, array position, source distance) acoustic condition, with the
/// RIRs of every DOA class computed on demand and cached.
#[derive(Debug, Clone)]
pub struct AcousticSetup {
    pub room: Room,
    pub beta: f64,
    pub array: ArraySetup,
    pub distance: f64,
    pub fs: f64,
    rirs: BTreeMap<u64, (SourcePlacement, Vec<Rir>)>,
}

impl AcousticSetup {
    pub fn new(room: Room, array: ArraySetup, distance: f64, fs: f64) -> Result<Self> {
        let beta = acoustics::sabine_reflection(&room)?;
        Ok(Self {
            room,
            beta,
            array,
            distance,
            fs,
            rirs: BTreeMap::new(),
        })
    }

    /// Source placement and one RIR per microphone for `doa_deg`.
    pub fn rirs(&mut self, doa_deg: f64) -> Result<&(SourcePlacement, Vec<Rir>)> {
        let key = doa_deg.to_bits();
        if !self.rirs.contains_key(&key) {
            let entry = self.compute_rirs(doa_deg)?;
            self.rirs.insert(key, entry);
        }
        Ok(&self.rirs[&key])
    }

    fn compute_rirs(&self, doa_deg: f64) -> Result<(SourcePlacement, Vec<Rir>)> {
        let src = acoustics::place_source(&self.array, doa_deg, self.distance, &self.room)?;
        let rirs = self
            .array
            .mic_positions()
            .into_iter()
            .map(|mic| acoustics::simulate_rir(&self.room, self.beta, src.position, mic, self.fs, None))
            .collect::<Result<Vec<_>>>()?;
        Ok((src, rirs))
    }

    /// Precomputes the RIRs of all `doas`, in parallel when a pool is active.
    pub fn prefetch(&mut self, doas: &[f64]) -> Result<()> {
        let missing: Vec<f64> = doas.iter().copied().filter(|d| !self.rirs.contains_key(&d.to_bits())).collect();
        let computed: Vec<_> = missing.par_iter().map(|&d| self.compute_rirs(d).map(|e| (d.to_bits(), e))).collect();
        for entry in computed {
            let (k, v) = entry?;
            self.rirs.insert(k, v);
        }
        Ok(())
    }
}

/// White Gaussian source rendered through the setup's RIRs for `doa_deg`.
pub fn synth_single_doa<R: Rng>(setup: &mut AcousticSetup, doa_deg: f64, duration_s: f64, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    let n = signal_len(duration_s, setup.fs);
    let (_, rirs) = setup.rirs(doa_deg)?;
    let source: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    acoustics::render(&source, rirs)
}

/// Shuffles, for every frequency bin independently, the time slots of that
/// bin. The M-channel vector of a TF bin moves as a unit.
pub fn randomize_frames<R: Rng>(frames: &mut StftFrameSet, rng: &mut R) {
    let (n, m) = (frames.n_frames, frames.n_channels);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut column = vec![Default::default(); n * m];
    for k in 0..frames.n_bins {
        perm.shuffle(rng);
        for (slot, &src) in perm.iter().enumerate() {
            column[slot * m..(slot + 1) * m].copy_from_slice(frames.bin(src, k));
        }
        for slot in 0..n {
            frames.bin_mut(slot, k).copy_from_slice(&column[slot * m..(slot + 1) * m]);
        }
    }
}

/// Joins `a` and `b` along time and shuffles each band's time slots.
pub fn randomize_pair<R: Rng>(a: &StftFrameSet, b: &StftFrameSet, rng: &mut R) -> Result<StftFrameSet> {
    let mut joined = a.concat(b)?;
    randomize_frames(&mut joined, rng);
    Ok(joined)
}

/// Identifies one cell of the grid for seeding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub room: usize,
    pub position: usize,
    pub distance: usize,
    pub class_a: usize,
    pub class_b: usize,
}

impl CellKey {
    pub fn seed(&self, master_seed: u64) -> u64 {
        derive_seed(
            master_seed,
            "train-cell",
            &[self.room as u64, self.position as u64, self.distance as u64, self.class_a as u64, self.class_b as u64],
        )
    }
}

/// Labeled phase maps of one training cell.
///
/// Both DOAs get their own noise signal and SNR; the noisy signals are joined
/// in time, transformed and band-wise shuffled. Every frame carries the
/// two-hot label. A cell with `class_a == class_b` renders one signal of
/// twice the duration with a one-hot label.
pub fn make_training_records(
    setup: &mut AcousticSetup,
    key: CellKey,
    grid: &TrainGrid,
    features: &FeatureConfig,
    master_seed: u64,
) -> Result<Vec<LabeledFrame>> {
    let classes = grid.classes()?;
    let mut rng = ChaCha8Rng::seed_from_u64(key.seed(master_seed));
    let [snr_lo, snr_hi] = grid.snr_range_db;
    let noisy = |setup: &mut AcousticSetup, class: usize, duration: f64, rng: &mut ChaCha8Rng| -> Result<Vec<Vec<f64>>> {
        let clean = synth_single_doa(setup, classes.doa(class), duration, rng)?;
        let snr = if snr_hi > snr_lo { rng.random_range(snr_lo..=snr_hi) } else { snr_lo };
        acoustics::add_noise_snr(&clean, snr, rng)
    };
    let (signal, label) = if key.class_a == key.class_b {
        let x = noisy(setup, key.class_a, 2.0 * grid.signal_duration_s, &mut rng)?;
        (x, LabelSet::from_classes(&[key.class_a])?)
    } else {
        let mut x = noisy(setup, key.class_a, grid.signal_duration_s, &mut rng)?;
        let y = noisy(setup, key.class_b, grid.signal_duration_s, &mut rng)?;
        for (xc, yc) in x.iter_mut().zip(y) {
            xc.extend(yc);
        }
        (x, LabelSet::from_classes(&[key.class_a, key.class_b])?)
    };
    let mut frames = dsp::stft(&signal, features.dft_len, features.fs)?;
    randomize_frames(&mut frames, &mut rng);
    Ok(dsp::phase_maps(&frames, features.bands())?
        .into_iter()
        .map(|phase| LabeledFrame { phase, label })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShardEntry {
    pub path: String,
    pub room: usize,
    pub position: usize,
    pub array_center: [f64; 3],
    pub records: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCell {
    pub cell: CellKey,
    pub reason: String,
}

/// Dataset manifest written next to the shards as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub master_seed: u64,
    pub grid: TrainGrid,
    pub array: ArrayConfig,
    pub features: FeatureConfig,
    pub mics: usize,
    pub bands: usize,
    pub classes: usize,
    pub frames_per_cell: usize,
    pub clamped_placements: usize,
    pub shards: Vec<ShardEntry>,
    pub skipped: Vec<SkippedCell>,
    pub total_records: u64,
}

impl Manifest {
    pub const FILE_NAME: &'static str = "manifest.json";

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).context(|| format!("reading manifest {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Shard paths resolved against the manifest's directory.
    pub fn shard_paths(&self, dir: &Path) -> Vec<PathBuf> {
        self.shards.iter().map(|s| dir.join(&s.path)).collect()
    }
}

/// Writes one shard per (room, position) plus `manifest.json` into `out_dir`.
///
/// Output is a pure function of `(grid, array, features, master_seed)`;
/// `threads > 1` parallelizes over cells without changing a byte.
pub fn generate_dataset(
    grid: &TrainGrid,
    array: &ArrayConfig,
    features: &FeatureConfig,
    master_seed: u64,
    out_dir: &Path,
    threads: usize,
) -> Result<Manifest> {
    grid.validate()?;
    features.validate()?;
    let classes = grid.classes()?;
    let pairs = grid.cell_pairs(&classes)?;
    fs::create_dir_all(out_dir).context(|| format!("creating {}", out_dir.display()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    let header = ShardHeader {
        mics: array.mic_count as u16,
        bands: features.band_count() as u32,
        classes: classes.count() as u16,
        count: 0,
    };
    let mut shards = Vec::new();
    let mut skipped = Vec::new();
    let mut clamped_placements = 0;
    for (room_idx, spec) in grid.rooms.iter().enumerate() {
        let room = spec.room()?;
        let setups = array_setups(&room, room_idx, grid.positions_per_room, array, master_seed)?;
        for (pos_idx, array_setup) in setups.into_iter().enumerate() {
            let started = std::time::Instant::now();
            let name = format!("shard_r{room_idx:02}_p{pos_idx:02}.doap");
            let path = out_dir.join(&name);
            let mut writer = ShardWriter::create(&path, header)?;
            for (dist_idx, &distance) in grid.distances.iter().enumerate() {
                let mut setup = AcousticSetup::new(room, array_setup.clone(), distance, features.fs)?;
                // Placement failures are reported per cell, not fatal.
                let mut feasible = Vec::with_capacity(classes.count());
                for c in 0..classes.count() {
                    match acoustics::place_source(&setup.array, classes.doa(c), distance, &room) {
                        Ok(p) => {
                            clamped_placements += p.clamped as usize;
                            feasible.push(Some(classes.doa(c)));
                        }
                        Err(e) => {
                            log::warn!("{}: {e}", spec.name);
                            feasible.push(None);
                        }
                    }
                }
                let doas: Vec<f64> = feasible.iter().flatten().copied().collect();
                pool.install(|| setup.prefetch(&doas))?;
                let cells: Vec<CellKey> = pairs
                    .iter()
                    .map(|&(a, b)| CellKey {
                        room: room_idx,
                        position: pos_idx,
                        distance: dist_idx,
                        class_a: a,
                        class_b: b,
                    })
                    .collect();
                for chunk in cells.chunks(32) {
                    let results: Vec<(CellKey, Result<Vec<LabeledFrame>>)> = pool.install(|| {
                        chunk
                            .par_iter()
                            .map(|&key| {
                                if feasible[key.class_a].is_none() || feasible[key.class_b].is_none() {
                                    return (key, Err(Error::Geometry("infeasible source placement".into())));
                                }
                                let mut local = setup.clone();
                                (key, make_training_records(&mut local, key, grid, features, master_seed))
                            })
                            .collect()
                    });
                    for (key, res) in results {
                        match res {
                            Ok(records) => {
                                for r in &records {
                                    writer.write(r)?;
                                }
                            }
                            Err(e @ (Error::Geometry(_) | Error::InfeasiblePlacement { .. })) => skipped.push(SkippedCell {
                                cell: key,
                                reason: e.to_string(),
                            }),
                            Err(e) => return Err(e),
                        }
                    }
                }
            }
            let records = writer.finish()?;
            log::info!(
                "{name}: {records} records from {} in {:.1} s",
                spec.name,
                started.elapsed().as_secs_f64()
            );
            shards.push(ShardEntry {
                path: name,
                room: room_idx,
                position: pos_idx,
                array_center: array_setup.center,
                records,
                sha256: file_sha256(&path)?,
            });
        }
    }
    let manifest = Manifest {
        master_seed,
        grid: grid.clone(),
        array: array.clone(),
        features: features.clone(),
        mics: array.mic_count,
        bands: features.band_count(),
        classes: classes.count(),
        frames_per_cell: frames_per_cell(grid.signal_duration_s, features),
        clamped_placements,
        total_records: shards.iter().map(|s| s.records).sum(),
        shards,
        skipped,
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    let path = out_dir.join(Manifest::FILE_NAME);
    fs::write(&path, text).context(|| format!("writing {}", path.display()))?;
    Ok(manifest)
}
