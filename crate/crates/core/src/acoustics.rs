//! Shoebox room acoustics: geometry, image-source impulse responses,
//! multichannel rendering and noise injection.
//!
//! Geometry is in meters, time in seconds unless a name says `samples`.
//! Arrays are uniform linear arrays with a horizontal axis; sources sit in the
//! horizontal plane of the array and their DOA is the angle between the
//! source direction and the array axis.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{num_complex::Complex64, FftPlanner};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

/// Speed of sound in m/s.
pub const SPEED_OF_SOUND: f64 = 343.0;
/// Sampling rate in Hz.
pub const SAMPLE_RATE: f64 = 16_000.0;
/// Minimum distance between a source and any wall.
pub const WALL_MARGIN: f64 = 0.3;
/// Sources cannot be clamped closer to the array than this.
pub const MIN_SOURCE_DISTANCE: f64 = 0.5;
/// Length of the windowed-sinc fractional delay kernel.
pub const SINC_TAPS: usize = 17;
/// Source-microphone distances are clamped to at least 1 cm.
pub const MIN_PATH: f64 = 0.01;

const SINC_HALF: i64 = (SINC_TAPS as i64 - 1) / 2;

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(a: Vec3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Shoebox room. `rt60 == 0` means anechoic.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Room {
    pub dims: Vec3,
    pub rt60: f64,
}

impl Room {
    pub fn new(dims: Vec3, rt60: f64) -> Result<Self> {
        if dims.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(Error::Geometry(format!("room dimensions must be positive, got {dims:?}")));
        }
        if !(rt60 >= 0.0 && rt60.is_finite()) {
            return Err(Error::Geometry(format!("rt60 must be >= 0, got {rt60}")));
        }
        Ok(Self { dims, rt60 })
    }

    pub fn volume(&self) -> f64 {
        self.dims.iter().product()
    }

    pub fn surface(&self) -> f64 {
        let [x, y, z] = self.dims;
        2.0 * (x * y + x * z + y * z)
    }

    pub fn is_anechoic(&self) -> bool {
        self.rt60 == 0.0
    }

    /// True when `p` is inside the room with at least `margin` to every wall.
    pub fn contains(&self, p: Vec3, margin: f64) -> bool {
        (0..3).all(|i| p[i] > margin && p[i] < self.dims[i] - margin)
    }

    /// Smallest RT60 for which the Sabine absorption stays below 1.
    pub fn min_rt60(&self) -> f64 {
        0.161 * self.volume() / self.surface()
    }
}

/// Uniform wall reflection coefficient from the Sabine formula.
///
/// Returns 0 for an anechoic room.
pub fn sabine_reflection(room: &Room) -> Result<f64> {
    if room.is_anechoic() {
        return Ok(0.0);
    }
    let alpha = 0.161 * room.volume() / (room.surface() * room.rt60);
    if alpha >= 1.0 {
        return Err(Error::Rt60TooSmall {
            rt60: room.rt60,
            volume: room.volume(),
            min_rt60: room.min_rt60(),
        });
    }
    Ok((1.0 - alpha).sqrt())
}

/// Uniform linear array.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ArraySetup {
    pub center: Vec3,
    /// Unit vector along the array line, horizontal.
    pub axis: Vec3,
    pub mic_count: usize,
    pub spacing: f64,
}

impl ArraySetup {
    pub fn new(room: &Room, center: Vec3, axis: Vec3, mic_count: usize, spacing: f64) -> Result<Self> {
        if mic_count < 2 {
            return Err(Error::Geometry(format!("need at least 2 microphones, got {mic_count}")));
        }
        if !(spacing > 0.0) {
            return Err(Error::Geometry(format!("mic spacing must be positive, got {spacing}")));
        }
        let len = norm(axis);
        if !(len > 0.0) || axis[2].abs() > 1e-12 * len {
            return Err(Error::Geometry(format!("array axis must be a horizontal nonzero vector, got {axis:?}")));
        }
        let setup = Self {
            center,
            axis: [axis[0] / len, axis[1] / len, 0.0],
            mic_count,
            spacing,
        };
        for (m, p) in setup.mic_positions().iter().enumerate() {
            if !room.contains(*p, 0.0) {
                return Err(Error::Geometry(format!("microphone {m} at {p:?} lies outside the room")));
            }
        }
        Ok(setup)
    }

    pub fn mic_positions(&self) -> Vec<Vec3> {
        let half = (self.mic_count as f64 - 1.0) / 2.0;
        (0..self.mic_count)
            .map(|m| {
                let off = (m as f64 - half) * self.spacing;
                [
                    self.center[0] + off * self.axis[0],
                    self.center[1] + off * self.axis[1],
                    self.center[2] + off * self.axis[2],
                ]
            })
            .collect()
    }

    /// In-plane unit normal; DOA 90° points along it.
    pub fn normal(&self) -> Vec3 {
        [-self.axis[1], self.axis[0], 0.0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SourcePlacement {
    pub doa_deg: f64,
    pub distance: f64,
    pub position: Vec3,
    /// The requested distance violated the wall margin and was reduced.
    pub clamped: bool,
}

/// Places a source at `doa_deg` from the array axis, `distance` meters from
/// the array center, in the array's horizontal plane.
///
/// The distance is reduced to the largest value that keeps [`WALL_MARGIN`]
/// to every wall; if that is below [`MIN_SOURCE_DISTANCE`] the placement fails.
pub fn place_source(array: &ArraySetup, doa_deg: f64, distance: f64, room: &Room) -> Result<SourcePlacement> {
    if !(0.0..=180.0).contains(&doa_deg) {
        return Err(Error::Geometry(format!("DOA must lie in [0, 180] deg, got {doa_deg}")));
    }
    if !(distance > 0.0) {
        return Err(Error::Geometry(format!("source distance must be positive, got {distance}")));
    }
    let c = array.center;
    if !room.contains(c, WALL_MARGIN) {
        return Err(Error::Geometry(format!("array center {c:?} is within {WALL_MARGIN} m of a wall")));
    }
    let theta = doa_deg.to_radians();
    let (axis, n) = (array.axis, array.normal());
    let u = [
        theta.cos() * axis[0] + theta.sin() * n[0],
        theta.cos() * axis[1] + theta.sin() * n[1],
        0.0,
    ];
    let mut max_feasible = f64::INFINITY;
    for i in 0..3 {
        if u[i] > 1e-12 {
            max_feasible = max_feasible.min((room.dims[i] - WALL_MARGIN - c[i]) / u[i]);
        } else if u[i] < -1e-12 {
            max_feasible = max_feasible.min((WALL_MARGIN - c[i]) / u[i]);
        }
    }
    // Stay strictly inside the margin after rounding.
    let max_feasible = max_feasible * (1.0 - 1e-9);
    let (distance, clamped) = if distance <= max_feasible {
        (distance, false)
    } else if max_feasible >= MIN_SOURCE_DISTANCE {
        (max_feasible, true)
    } else {
        return Err(Error::InfeasiblePlacement {
            doa_deg,
            center: c,
            min_distance: MIN_SOURCE_DISTANCE,
            max_feasible,
        });
    };
    Ok(SourcePlacement {
        doa_deg,
        distance,
        position: [c[0] + distance * u[0], c[1] + distance * u[1], c[2]],
        clamped,
    })
}

/// Draws `count` array centers with at least `clearance` meters to the side
/// walls where the room allows it; along a dimension shorter than
/// `2 * clearance` the center sits at the midpoint (maximal clearance).
/// Returns the centers and the horizontal array axis, parallel to the room's
/// longer side.
pub fn draw_array_centers<R: Rng>(room: &Room, count: usize, clearance: f64, height: f64, rng: &mut R) -> (Vec<Vec3>, Vec3) {
    let axis = if room.dims[0] >= room.dims[1] {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let z = if height < room.dims[2] - WALL_MARGIN { height } else { room.dims[2] / 2.0 };
    let centers = (0..count)
        .map(|_| {
            let mut p = [0.0, 0.0, z];
            for (i, coord) in p.iter_mut().enumerate().take(2) {
                let (lo, hi) = (clearance, room.dims[i] - clearance);
                // Always draw so the stream position does not depend on room size.
                let u: f64 = rng.random();
                *coord = if hi > lo { lo + u * (hi - lo) } else { room.dims[i] / 2.0 };
            }
            p
        })
        .collect();
    (centers, axis)
}

/// Room impulse response.
#[derive(Debug, Clone, PartialEq)]
pub struct Rir {
    pub taps: Vec<f64>,
    pub fs: f64,
}

/// One mirrored source of the image method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageSource {
    pub position: Vec3,
    pub reflections: u32,
    pub distance: f64,
    pub amplitude: f64,
}

/// Visits image sources with per-axis lattice indices in `-n[i]..=n[i]` and
/// total reflection count at most `max_order`.
fn for_each_image(room: &Room, beta: f64, src: Vec3, mic: Vec3, n: [i64; 3], max_order: u32, mut f: impl FnMut(ImageSource)) {
    let axis_terms = |i: usize| {
        let mut terms = Vec::new();
        for m in -n[i]..=n[i] {
            for q in 0..2i64 {
                let coord = (1 - 2 * q) as f64 * src[i] + 2.0 * m as f64 * room.dims[i];
                let refl = ((m - q).abs() + m.abs()) as u32;
                if refl <= max_order {
                    terms.push((coord, refl));
                }
            }
        }
        terms
    };
    let (tx, ty, tz) = (axis_terms(0), axis_terms(1), axis_terms(2));
    for &(x, rx) in &tx {
        for &(y, ry) in &ty {
            if rx + ry > max_order {
                continue;
            }
            for &(z, rz) in &tz {
                let reflections = rx + ry + rz;
                if reflections > max_order {
                    continue;
                }
                let amp_refl = if reflections == 0 { 1.0 } else { beta.powi(reflections as i32) };
                if amp_refl == 0.0 {
                    continue;
                }
                let position = [x, y, z];
                let distance = norm(sub(position, mic)).max(MIN_PATH);
                f(ImageSource {
                    position,
                    reflections,
                    distance,
                    amplitude: amp_refl / (4.0 * PI * distance),
                });
            }
        }
    }
}

/// All image sources up to `max_order` reflections with nonzero amplitude.
pub fn image_sources(room: &Room, beta: f64, src: Vec3, mic: Vec3, max_order: u32) -> Vec<ImageSource> {
    let per_axis = (max_order as i64 + 1) / 2 + 1;
    let mut out = Vec::new();
    for_each_image(room, beta, src, mic, [per_axis; 3], max_order, |img| out.push(img));
    out
}

/// Reflection order that covers every image path up to `c * rt60`.
pub fn auto_max_order(room: &Room, c: f64) -> u32 {
    auto_lattice(room, room.rt60 * c).iter().map(|&n| 2 * n as u32 + 1).sum()
}

fn auto_lattice(room: &Room, max_dist: f64) -> [i64; 3] {
    let mut n = [0i64; 3];
    for i in 0..3 {
        n[i] = (max_dist / (2.0 * room.dims[i])).ceil() as i64 + 1;
    }
    n
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Hann-windowed sinc evaluated at offset `x` samples from the pulse center.
pub fn fractional_delay_weight(x: f64) -> f64 {
    let span = (SINC_HALF + 1) as f64;
    if x.abs() >= span {
        return 0.0;
    }
    sinc(x) * 0.5 * (1.0 + (PI * x / span).cos())
}

/// Image-source impulse response from `src` to `mic`.
///
/// `max_order` caps the reflection count; `None` picks it from the room's
/// RT60. The response is truncated at `rt60` (or at the latest contributing
/// image when anechoic) plus the kernel half-width.
pub fn simulate_rir(room: &Room, beta: f64, src: Vec3, mic: Vec3, fs: f64, max_order: Option<u32>) -> Result<Rir> {
    if !(fs > 0.0) {
        return Err(Error::Geometry(format!("sampling rate must be positive, got {fs}")));
    }
    if !room.contains(src, 0.0) || !room.contains(mic, 0.0) {
        return Err(Error::Geometry(format!("source {src:?} and mic {mic:?} must lie inside the room")));
    }
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::Geometry(format!("reflection coefficient must lie in [0, 1), got {beta}")));
    }
    let c = SPEED_OF_SOUND;
    let direct = norm(sub(src, mic)).max(MIN_PATH);
    let reverberant = beta > 0.0 && room.rt60 > 0.0;
    let max_dist = if reverberant { (room.rt60 * c).max(direct) } else { direct };
    let (lattice, max_order) = match (max_order, reverberant) {
        (_, false) => ([0; 3], 0),
        (Some(order), true) => {
            let per_axis = (order as i64 + 1) / 2 + 1;
            let auto = auto_lattice(room, max_dist);
            ([per_axis.min(auto[0]), per_axis.min(auto[1]), per_axis.min(auto[2])], order)
        }
        (None, true) => (auto_lattice(room, max_dist), auto_max_order(room, c).max(1)),
    };
    let limit = max_dist * fs / c;
    let len = limit.ceil() as usize + SINC_HALF as usize + 1;
    let mut taps = vec![0.0; len];
    for_each_image(room, beta, src, mic, lattice, max_order, |img| {
        let delay = img.distance * fs / c;
        if delay > limit + 1e-9 {
            return;
        }
        let center = delay.round() as i64;
        for n in (center - SINC_HALF)..=(center + SINC_HALF) {
            if n < 0 || n as usize >= len {
                continue;
            }
            taps[n as usize] += img.amplitude * fractional_delay_weight(n as f64 - delay);
        }
    });
    Ok(Rir { taps, fs })
}

/// Schroeder backward-integrated energy decay curve in dB, normalized to 0 dB
/// at the first tap.
pub fn schroeder_db(taps: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut edc: Vec<f64> = taps
        .iter()
        .rev()
        .map(|t| {
            acc += t * t;
            acc
        })
        .collect();
    edc.reverse();
    let total = edc.first().copied().unwrap_or(0.0);
    edc.iter()
        .map(|&e| if total > 0.0 && e > 0.0 { 10.0 * (e / total).log10() } else { f64::NEG_INFINITY })
        .collect()
}

/// Direct O(n·m) linear convolution, truncated to `out_len`.
pub fn convolve_direct(signal: &[f64], kernel: &[f64], out_len: usize) -> Vec<f64> {
    let mut out = vec![0.0; out_len];
    for (i, &s) in signal.iter().enumerate() {
        if i >= out_len {
            break;
        }
        let end = kernel.len().min(out_len - i);
        for (o, &k) in out[i..i + end].iter_mut().zip(&kernel[..end]) {
            *o += s * k;
        }
    }
    out
}

/// Renders a mono signal through one RIR per microphone.
///
/// Each channel is the full linear convolution truncated to the input length.
pub fn render(signal: &[f64], rirs: &[Rir]) -> Result<Vec<Vec<f64>>> {
    if signal.is_empty() {
        return Err(Error::EmptySignal);
    }
    let Some(first) = rirs.first() else {
        return Err(Error::Shape("render needs at least one RIR".into()));
    };
    if rirs.iter().any(|r| r.fs != first.fs || r.taps.is_empty()) {
        return Err(Error::Shape("RIRs must share one sampling rate and be non-empty".into()));
    }
    let n = signal.len();
    let max_taps = rirs.iter().map(|r| r.taps.len()).max().unwrap_or(1);
    if n * max_taps <= 1 << 16 {
        return Ok(rirs.iter().map(|r| convolve_direct(signal, &r.taps, n)).collect());
    }
    let size = (n + max_taps - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let mut sig_spec: Vec<Complex64> = signal.iter().map(|&s| Complex64::new(s, 0.0)).collect();
    sig_spec.resize(size, Complex64::new(0.0, 0.0));
    fwd.process(&mut sig_spec);
    let scale = 1.0 / size as f64;
    Ok(rirs
        .iter()
        .map(|r| {
            let mut buf: Vec<Complex64> = r.taps.iter().map(|&t| Complex64::new(t, 0.0)).collect();
            buf.resize(size, Complex64::new(0.0, 0.0));
            fwd.process(&mut buf);
            for (b, s) in buf.iter_mut().zip(&sig_spec) {
                *b *= s;
            }
            inv.process(&mut buf);
            buf[..n].iter().map(|c| c.re * scale).collect()
        })
        .collect())
}

/// Mean squared value over all channels and samples.
pub fn signal_power(x: &[Vec<f64>]) -> f64 {
    let count: usize = x.iter().map(Vec::len).sum();
    if count == 0 {
        return 0.0;
    }
    x.iter().flatten().map(|v| v * v).sum::<f64>() / count as f64
}

/// Adds independent Gaussian noise to every channel so that the
/// whole-signal SNR equals `snr_db` exactly. `f64::INFINITY` adds nothing.
pub fn add_noise_snr<R: Rng>(x: &[Vec<f64>], snr_db: f64, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    if x.iter().all(Vec::is_empty) {
        return Err(Error::EmptySignal);
    }
    let p_signal = signal_power(x);
    if !(p_signal > 0.0) {
        return Err(Error::SilentInput);
    }
    if snr_db == f64::INFINITY {
        return Ok(x.to_vec());
    }
    if snr_db.is_nan() {
        return Err(Error::Config("SNR must not be NaN".into()));
    }
    let noise: Vec<Vec<f64>> = x
        .iter()
        .map(|ch| (0..ch.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let p_noise = signal_power(&noise);
    let gain = (p_signal / 10f64.powf(snr_db / 10.0) / p_noise).sqrt();
    Ok(x.iter()
        .zip(&noise)
        .map(|(ch, nz)| ch.iter().zip(nz).map(|(s, n)| s + gain * n).collect())
        .collect())
}

/// Far-field arrival-time lead of each microphone relative to mic 0:
/// `τ_m = m·d·cos(θ)/c`. A plane wave from `doa_deg` reaches mic `m`
/// `τ_m` seconds before mic 0.
pub fn steering_delays(doa_deg: f64, mic_count: usize, spacing: f64, c: f64) -> Vec<f64> {
    let proj = doa_deg.to_radians().cos() * spacing / c;
    (0..mic_count).map(|m| m as f64 * proj).collect()
}

/// Angle in degrees between `p - center` and `axis`.
pub fn angle_from_axis(center: Vec3, axis: Vec3, p: Vec3) -> f64 {
    let v = sub(p, center);
    (dot(v, axis) / (norm(v) * norm(axis))).clamp(-1.0, 1.0).acos().to_degrees()
}
