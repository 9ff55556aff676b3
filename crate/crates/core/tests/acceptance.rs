//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use doalab::acoustics::{self, Room, SPEED_OF_SOUND};
use doalab::datagen::{
    self, read_shard, write_shard, DoaClasses, FrameStore, LabelSet, LabeledFrame, Manifest, ShardHeader, SourceProvider, TestConfig,
};
use doalab::dsp::{self, PhaseMap, StftFrameSet};
use doalab::eval::{self, Estimator};
use doalab::nn::{self, adam_step, bce_loss, AdamHyper, AdamState, Model, ModelSpec, Tensor};
use doalab::srp_phat::{srp_probabilities, srp_response};
use doalab::{Error, RunConfig, SteeringTable};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn stft_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x: Vec<Vec<f64>> = (0..4).map(|_| gaussian(&mut rng, 16_000)).collect();
    let start = Instant::now();
    let frames = dsp::stft(&x, 512, 16_000.0).map_err(|e| e.to_string())?;
    let y = dsp::istft(&frames).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let range = dsp::interior(frames.n_frames, frames.hop);
    let (mut num, mut den) = (0.0, 0.0);
    for (xc, yc) in x.iter().zip(&y) {
        for i in range.clone() {
            num += (xc[i] - yc[i]).powi(2);
            den += xc[i].powi(2);
        }
    }
    let rel = (num / den).sqrt();
    check(rel < 1e-10 && secs < 1.0, format!("relative L2 error {rel:.2e} over {} samples, {secs:.3} s", range.len()))
}

/// Least-squares fit of one 17-tap Hann-windowed sinc pulse `a·k(n - t)` to
/// the taps, scanning the center `t` around the largest tap. Returns `(t, a)`.
fn fit_pulse(taps: &[f64]) -> (f64, f64) {
    let kernel = |x: f64| {
        if x.abs() >= 9.0 {
            0.0
        } else if x == 0.0 {
            1.0
        } else {
            (PI * x).sin() / (PI * x) * 0.5 * (1.0 + (PI * x / 9.0).cos())
        }
    };
    let imax = (0..taps.len()).max_by(|&a, &b| taps[a].abs().total_cmp(&taps[b].abs())).unwrap();
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for step in -20_000..=20_000 {
        let t = imax as f64 + step as f64 * 1e-4;
        let k: Vec<f64> = (0..taps.len()).map(|n| kernel(n as f64 - t)).collect();
        let a = taps.iter().zip(&k).map(|(h, k)| h * k).sum::<f64>() / k.iter().map(|k| k * k).sum::<f64>();
        let resid: f64 = taps.iter().zip(&k).map(|(h, k)| (h - a * k).powi(2)).sum();
        if resid < best.0 {
            best = (resid, t, a);
        }
    }
    (best.1, best.2)
}

fn rir_direct_path() -> Outcome {
    let fs = 16_000.0;
    let room = Room::new([10.0, 10.0, 10.0], 0.0).map_err(|e| e.to_string())?;
    let rir = acoustics::simulate_rir(&room, 0.0, [5.0, 5.0, 5.0], [6.0, 5.0, 5.0], fs, None).map_err(|e| e.to_string())?;
    let expected_delay = fs / SPEED_OF_SOUND;
    let expected_amp = 1.0 / (4.0 * PI);
    let tap = (0..rir.taps.len()).max_by(|&a, &b| rir.taps[a].abs().total_cmp(&rir.taps[b].abs())).unwrap();
    let (t_peak, amp) = fit_pulse(&rir.taps);
    let amp_err = (amp - expected_amp).abs() / expected_amp;

    let mut monotone = true;
    for (dims, rt60) in [([6.0, 6.0, 2.7], 0.3), ([10.0, 6.0, 2.7], 0.8), ([5.0, 4.0, 2.7], 0.2)] {
        let room = Room::new(dims, rt60).map_err(|e| e.to_string())?;
        let beta = acoustics::sabine_reflection(&room).map_err(|e| e.to_string())?;
        let rir = acoustics::simulate_rir(&room, beta, [1.5, 2.0, 1.4], [3.1, 2.6, 1.5], fs, None).map_err(|e| e.to_string())?;
        let edc = acoustics::schroeder_db(&rir.taps);
        monotone &= edc.windows(2).all(|w| w[1] <= w[0]);
    }
    check(
        (tap as f64 - expected_delay).abs() <= 1.0
            && (t_peak - expected_delay).abs() <= 1.0
            && amp_err < 0.05
            && monotone,
        format!(
            "peak tap {tap}, fitted pulse center {t_peak:.3} (expected {expected_delay:.3}), pulse amplitude {amp:.5} vs {expected_amp:.5} ({:.2}%), Schroeder monotone: {monotone}",
            100.0 * amp_err
        ),
    )
}

fn random_frames(rng: &mut ChaCha8Rng, n_frames: usize) -> StftFrameSet {
    let mut f = StftFrameSet::zeros(n_frames, 4, 32, 16_000.0);
    for z in &mut f.data {
        *z = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
    }
    f
}

fn band_multiset(f: &StftFrameSet, k: usize) -> Vec<Vec<(u64, u64)>> {
    let mut v: Vec<Vec<(u64, u64)>> = (0..f.n_frames)
        .map(|t| f.bin(t, k).iter().map(|z| (z.re.to_bits(), z.im.to_bits())).collect())
        .collect();
    v.sort();
    v
}

fn randomization_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut moved = 0usize;
    for trial in 0..100 {
        let (na, nb) = (rng.random_range(1..20), rng.random_range(1..20));
        let a = random_frames(&mut rng, na);
        let b = random_frames(&mut rng, nb);
        let seed: u64 = rng.random();
        let out = datagen::randomize_pair(&a, &b, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(|e| e.to_string())?;
        let again = datagen::randomize_pair(&a, &b, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(|e| e.to_string())?;
        if out.data.iter().zip(&again.data).any(|(x, y)| x.re.to_bits() != y.re.to_bits() || x.im.to_bits() != y.im.to_bits()) {
            return Err(format!("pair {trial}: same seed gave different output"));
        }
        if out.n_frames != a.n_frames + b.n_frames {
            return Err(format!("pair {trial}: {} frames out of {} + {}", out.n_frames, a.n_frames, b.n_frames));
        }
        for k in 0..out.n_bins {
            let mut input: Vec<Vec<(u64, u64)>> = band_multiset(&a, k);
            input.extend(band_multiset(&b, k));
            input.sort();
            if input != band_multiset(&out, k) {
                return Err(format!("pair {trial}: band {k} multiset changed"));
            }
            for t in 0..out.n_frames {
                let src = if t < a.n_frames { a.bin(t, k) } else { b.bin(t - a.n_frames, k) };
                moved += usize::from(src != out.bin(t, k));
            }
        }
    }
    check(moved > 0, format!("100 pairs: band multisets preserved bitwise, seeded output reproducible, {moved} bin vectors moved"))
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let report = nn::gradcheck(&ModelSpec::toy(), 7).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let worst = report
        .per_param
        .iter()
        .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
        .map(|p| p.name.clone())
        .unwrap_or_default();
    check(
        report.max_rel_error < 1e-4 && secs < 30.0,
        format!("max relative error {:.2e} ({worst}) over {} parameters, {secs:.2} s", report.max_rel_error, report.checked),
    )
}

fn loss_and_optimizer() -> Outcome {
    let classes = 37;
    let labels = [
        LabelSet::from_classes(&[3, 20]).unwrap(),
        LabelSet::from_classes(&[0]).unwrap(),
        LabelSet::from_classes(&[]).unwrap(),
    ];
    let (loss, _) = bce_loss(&vec![0.5; labels.len() * classes], &labels, classes);
    let bce_err = (loss - 37.0 * 2f64.ln()).abs();

    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let shapes = [vec![5, 7], vec![7]];
    let start: Vec<Tensor> = shapes
        .iter()
        .map(|s| {
            let n = s.iter().product();
            Tensor::from_vec(s, (0..n).map(|_| rng.random_range(-1.0f32..1.0) as f64).collect()).unwrap()
        })
        .collect();
    let zero: Vec<Tensor> = shapes.iter().map(|s| Tensor::zeros(s)).collect();
    let mut params = start.clone();
    let mut state = AdamState::new(&params, AdamHyper::default());
    for _ in 0..10 {
        adam_step(&mut params, &zero, &mut state);
    }
    let fixpoint = params == start;

    let hyper = AdamHyper::default();
    let grads: Vec<Tensor> = shapes
        .iter()
        .map(|s| {
            let n = s.iter().product();
            Tensor::from_vec(s, (0..n).map(|_| rng.random_range(0.01..10.0) * if rng.random() { 1.0 } else { -1.0 }).collect()).unwrap()
        })
        .collect();
    let mut params = start.clone();
    let mut state = AdamState::new(&params, hyper);
    adam_step(&mut params, &grads, &mut state);
    let worst_step = params
        .iter()
        .zip(&start)
        .flat_map(|(p, q)| p.data.iter().zip(&q.data).map(|(a, b)| ((a - b).abs() - hyper.lr).abs() / hyper.lr))
        .fold(0.0, f64::max);
    check(
        bce_err <= 1e-9 && fixpoint && worst_step <= 0.01,
        format!(
            "uniform BCE off by {bce_err:.1e}, zero-gradient fixpoint: {fixpoint}, first step within {:.3}% of lr",
            100.0 * worst_step
        ),
    )
}

/// Plane wave from `doa_deg` on a 4-mic, 8 cm array: each channel is the
/// source advanced by its far-field lead, applied exactly in the DFT domain.
fn plane_wave(source: &[f64], doa_deg: f64, fs: f64, planner: &mut FftPlanner<f64>) -> Vec<Vec<f64>> {
    let n = source.len();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut spec: Vec<Complex64> = source.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fwd.process(&mut spec);
    (0..4)
        .map(|m| {
            let lead = m as f64 * 0.08 * doa_deg.to_radians().cos() / SPEED_OF_SOUND;
            let mut s: Vec<Complex64> = spec
                .iter()
                .enumerate()
                .map(|(k, &z)| {
                    let kk = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
                    let phase = 2.0 * PI * kk * fs / n as f64 * lead;
                    if 2 * k == n {
                        z * phase.cos()
                    } else {
                        z * Complex64::from_polar(1.0, phase)
                    }
                })
                .collect();
            inv.process(&mut s);
            s.iter().map(|z| z.re / n as f64).collect()
        })
        .collect()
}

fn brute_force_srp(frame: &[Complex64], doas: &[f64], fs: f64, dft_len: usize) -> Vec<f64> {
    doas.iter()
        .map(|&doa| {
            let mut score = 0.0;
            for k in 1..=255 {
                let omega = 2.0 * PI * k as f64 * fs / dft_len as f64;
                let x = &frame[k * 4..k * 4 + 4];
                for a in 0..4 {
                    for b in a + 1..4 {
                        let cross = x[a] * x[b].conj();
                        if cross.norm() < 1e-12 {
                            continue;
                        }
                        let lag = (b as f64 - a as f64) * 0.08 * doa.to_radians().cos() / SPEED_OF_SOUND;
                        score += (cross / cross.norm() * Complex64::from_polar(1.0, omega * lag)).re;
                    }
                }
            }
            score
        })
        .collect()
}

fn srp_oracle() -> Outcome {
    let fs = 16_000.0;
    let doas = DoaClasses::new(5.0).map_err(|e| e.to_string())?.doas();
    let table = SteeringTable::new(&doas, 1..=255, 4, 0.08, SPEED_OF_SOUND, fs, 512).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut planner = FftPlanner::new();
    let mut total_err = 0.0;
    for &doa in &doas {
        let source = gaussian(&mut rng, 16_000);
        let clean = plane_wave(&source, doa, fs, &mut planner);
        let noisy = acoustics::add_noise_snr(&clean, 30.0, &mut rng).map_err(|e| e.to_string())?;
        let frames = dsp::stft(&noisy, 512, fs).map_err(|e| e.to_string())?;
        let mut avg = vec![0.0; doas.len()];
        for t in 0..frames.n_frames {
            let p = srp_probabilities(&srp_response(frames.frame(t), &table).map_err(|e| e.to_string())?);
            avg.iter_mut().zip(p).for_each(|(a, b)| *a += b);
        }
        let best = (0..avg.len()).max_by(|&a, &b| avg[a].total_cmp(&avg[b])).unwrap();
        total_err += (doas[best] - doa).abs();
    }
    let mae = total_err / doas.len() as f64;

    let mut worst = 0.0f64;
    for _ in 0..20 {
        let frame: Vec<Complex64> = (0..257 * 4)
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let got = srp_response(&frame, &table).map_err(|e| e.to_string())?;
        let want = brute_force_srp(&frame, &doas, fs, 512);
        for (g, w) in got.iter().zip(&want) {
            worst = worst.max((g - w).abs() / w.abs().max(1.0));
        }
    }
    check(
        mae <= 5.0 && worst < 1e-9,
        format!("mean argmax error {mae:.2} deg over {} DOAs, brute-force scan agrees to {worst:.1e}", doas.len()),
    )
}

fn counting_checks() -> Outcome {
    let paper = RunConfig::paper_table1();
    let full_test = TestConfig {
        pair_stride: 1,
        ..paper.test.clone()
    };
    let mixtures = full_test.selected_pairs().map_err(|e| e.to_string())?.len();
    let per_cell = datagen::frames_per_cell(paper.train_grid.signal_duration_s, &paper.features);
    let samples = 2 * (2.0 * 16_000.0) as usize;
    let per_cell_oracle = (samples - 512) / 256 + 1;
    let projected = paper.train_grid.projected_frames(&paper.features).map_err(|e| e.to_string())?;
    let ratio = projected as f64 / 12.4e6;
    check(
        mixtures == 666 && per_cell == 249 && per_cell == per_cell_oracle && (11.55e6..11.65e6).contains(&(projected as f64)) && (0.5..2.0).contains(&ratio),
        format!("{mixtures} test mixtures, {per_cell} frames per pair cell, {projected} projected training frames ({ratio:.3} x 12.4M)"),
    )
}

struct DeskRun {
    manifest_sha: String,
    shard_shas: Vec<String>,
    total_records: u64,
    losses: Vec<u64>,
    params: Vec<Tensor>,
}

fn desk_generate_and_train(cfg: &RunConfig, dir: &Path) -> Result<(DeskRun, Model), Error> {
    let data = dir.join("train");
    let manifest = datagen::generate_dataset(&cfg.train_grid, &cfg.array, &cfg.features, cfg.seed, &data, 1)?;
    let manifest_sha = datagen::file_sha256(&data.join(Manifest::FILE_NAME))?;
    let shard_shas = manifest
        .shard_paths(&data)
        .iter()
        .map(|p| datagen::file_sha256(p))
        .collect::<Result<Vec<_>, _>>()?;
    let (_, store) = FrameStore::from_manifest(&data)?;
    eprintln!("  generated {} frames", store.len());
    let mut model = Model::new(cfg.model.clone(), cfg.training.init_seed())?;
    let out = dir.join("model");
    std::fs::create_dir_all(&out).map_err(|e| Error::Config(e.to_string()))?;
    nn::train(&mut model, &store, &cfg.training, Some(&out))?;
    let losses = nn::read_loss_log(&out.join(nn::LOSS_LOG))?.iter().map(|e| e.mean_loss.to_bits()).collect();
    Ok((
        DeskRun {
            manifest_sha,
            shard_shas,
            total_records: manifest.total_records,
            losses,
            params: model.params.clone(),
        },
        model,
    ))
}

fn end_to_end(work: &Path, first: &mut Option<DeskRun>) -> Outcome {
    let start = Instant::now();
    let cfg = RunConfig::desk_scale();
    cfg.validate().map_err(|e| e.to_string())?;
    let (run, model) = desk_generate_and_train(&cfg, &work.join("run1")).map_err(|e| e.to_string())?;
    let test_dir = work.join("test");
    datagen::gen_test_mixtures(&cfg.test, &cfg.array, &cfg.features, &SourceProvider::Synthetic, cfg.seed, &test_dir, 1)
        .map_err(|e| e.to_string())?;
    let set = datagen::load_test_set(&test_dir).map_err(|e| e.to_string())?;
    let doas = DoaClasses::new(cfg.test.doa_resolution_deg).map_err(|e| e.to_string())?.doas();
    let table = SteeringTable::new(&doas, cfg.features.bands(), cfg.array.mic_count, cfg.array.spacing, SPEED_OF_SOUND, cfg.features.fs, cfg.features.dft_len)
        .map_err(|e| e.to_string())?;
    let srp = eval::run_experiment(&set, &Estimator::Srp(&table), 1).map_err(|e| e.to_string())?;
    let cnn = eval::run_experiment(&set, &Estimator::Cnn(&model), 1).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let (c, s) = (cnn.summary.mean_mae_deg, srp.summary.mean_mae_deg);
    let evaluated = cnn.rows.len() == 111 && srp.rows.len() == 111;
    let detail = format!(
        "{} frames x {} epochs; CNN MAE {c:.2} deg vs SRP-PHAT {s:.2} deg on {} mixtures; {:.1} min",
        run.total_records,
        cfg.training.epochs,
        cnn.rows.len(),
        secs / 60.0
    );
    *first = Some(run);
    check(evaluated && c < s && c <= 20.0 && secs <= 7200.0 && cfg.training.epochs >= 2, detail)
}

fn determinism(work: &Path, first: &Option<DeskRun>) -> Outcome {
    let first = first.as_ref().ok_or("criterion 8 did not produce a first run")?;
    let cfg = RunConfig::desk_scale();
    let (second, _) = desk_generate_and_train(&cfg, &work.join("run2")).map_err(|e| e.to_string())?;
    let same_manifest = first.manifest_sha == second.manifest_sha;
    let same_shards = first.shard_shas == second.shard_shas;
    let same_losses = first.losses == second.losses;
    let same_params = first.params == second.params;
    check(
        same_manifest && same_shards && same_losses && same_params,
        format!(
            "manifest digest equal: {same_manifest}, {} shard digests equal: {same_shards}, {} epoch losses equal: {same_losses}, weights equal: {same_params}",
            first.shard_shas.len(),
            first.losses.len()
        ),
    )
}

fn serialization(work: &Path) -> Outcome {
    let dir = work.join("serial");
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let (mics, bands, classes) = (4usize, 255usize, 37usize);
    let records: Vec<LabeledFrame> = (0..50)
        .map(|_| {
            let a = rng.random_range(0..classes);
            let b = rng.random_range(0..classes);
            LabeledFrame {
                phase: PhaseMap {
                    values: (0..mics * bands).map(|_| rng.random_range(-3.2f32..3.2)).collect(),
                    mics,
                    band_lo: 1,
                    band_hi: bands,
                },
                label: LabelSet::from_classes(&[a, b]).unwrap(),
            }
        })
        .collect();
    let header = ShardHeader {
        mics: mics as u16,
        bands: bands as u32,
        classes: classes as u16,
        count: records.len() as u64,
    };
    let shard = dir.join("a.shard");
    write_shard(&shard, header, &records).map_err(|e| e.to_string())?;
    let (h, back) = read_shard(&shard).map_err(|e| e.to_string())?;
    let bits = |r: &[LabeledFrame]| -> Vec<(u64, Vec<u32>)> {
        r.iter().map(|f| (f.label.0, f.phase.values.iter().map(|v| v.to_bits()).collect())).collect()
    };
    let shard_ok = h == header && bits(&back) == bits(&records);

    let model = Model::new(ModelSpec::toy(), 3).map_err(|e| e.to_string())?;
    let bytes = nn::encode_checkpoint(&model).map_err(|e| e.to_string())?;
    let decoded = nn::decode_checkpoint(&bytes).map_err(|e| e.to_string())?;
    let ckpt_ok = decoded.spec == model.spec
        && decoded.params.iter().zip(&model.params).all(|(a, b)| a.shape == b.shape && a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits()));

    let shard_bytes = std::fs::read(&shard).map_err(|e| e.to_string())?;
    let mut failures = Vec::new();
    let mut cases = 0;
    let mut expect = |name: &str, got: Result<(), Error>, want: fn(&Error) -> bool| {
        cases += 1;
        match got {
            Err(e) if want(&e) => {}
            other => failures.push(format!("{name}: {other:?}")),
        }
    };
    let corrupt_shard = |edit: &dyn Fn(&mut Vec<u8>)| -> Result<(), Error> {
        let mut b = shard_bytes.clone();
        edit(&mut b);
        let p = dir.join("bad.shard");
        std::fs::write(&p, b).map_err(|e| Error::Config(e.to_string()))?;
        read_shard(&p).map(|_| ())
    };
    expect("shard magic", corrupt_shard(&|b| b[0] = b'X'), |e| matches!(e, Error::BadMagic { .. }));
    expect("shard version", corrupt_shard(&|b| b[4] = 9), |e| matches!(e, Error::Version { .. }));
    expect("shard short header", corrupt_shard(&|b| b.truncate(10)), |e| matches!(e, Error::Truncated { .. }));
    expect("shard short body", corrupt_shard(&|b| b.truncate(b.len() - 3)), |e| matches!(e, Error::Truncated { .. } | Error::CountMismatch { .. }));
    expect("shard count", corrupt_shard(&|b| b[14] = 99), |e| matches!(e, Error::Truncated { .. } | Error::CountMismatch { .. }));
    let corrupt_ckpt = |edit: &dyn Fn(&mut Vec<u8>)| -> Result<(), Error> {
        let mut b = bytes.clone();
        edit(&mut b);
        nn::decode_checkpoint(&b).map(|_| ())
    };
    expect("checkpoint magic", corrupt_ckpt(&|b| b[1] = b'X'), |e| matches!(e, Error::BadMagic { .. }));
    expect("checkpoint version", corrupt_ckpt(&|b| b[5] = 1), |e| matches!(e, Error::Version { .. }));
    expect("checkpoint empty", corrupt_ckpt(&|b| b.clear()), |e| matches!(e, Error::Truncated { .. }));
    expect("checkpoint spec length", corrupt_ckpt(&|b| b[9] = 0x7f), |e| matches!(e, Error::Truncated { .. }));
    expect("checkpoint body", corrupt_ckpt(&|b| b.truncate(b.len() - 4)), |e| matches!(e, Error::Truncated { .. }));
    expect("checkpoint spec json", corrupt_ckpt(&|b| b[10] = b'!'), |e| matches!(e, Error::Json(_)));

    check(
        shard_ok && ckpt_ok && failures.is_empty(),
        format!(
            "shard round-trip bitwise: {shard_ok}, checkpoint round-trip bitwise: {ckpt_ok}, {}/{cases} corrupt inputs gave the expected typed error{}",
            cases - failures.len(),
            if failures.is_empty() { String::new() } else { format!(" ({})", failures.join("; ")) }
        ),
    )
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    panic::set_hook(Box::new(|_| {}));
    let work = tempfile::tempdir().expect("temporary directory");
    let mut first_run = None;
    let names: HashMap<usize, &str> = [
        (1, "STFT round-trip"),
        (2, "RIR direct path"),
        (3, "randomization invariants"),
        (4, "gradient check"),
        (5, "loss and optimizer analytics"),
        (6, "SRP-PHAT oracle"),
        (7, "counting checks"),
        (8, "desk-scale end-to-end ordering"),
        (9, "determinism"),
        (10, "serialization"),
    ]
    .into_iter()
    .collect();
    let mut failed = 0;
    for id in 1..=10 {
        eprintln!("running criterion {id}: {}", names[&id]);
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(|| match id {
            1 => stft_round_trip(),
            2 => rir_direct_path(),
            3 => randomization_invariants(),
            4 => gradient_check(),
            5 => loss_and_optimizer(),
            6 => srp_oracle(),
            7 => counting_checks(),
            8 => end_to_end(work.path(), &mut first_run),
            9 => determinism(work.path(), &first_run),
            _ => serialization(work.path()),
        }))
        .unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let (status, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{status} [{id:>2}] {}: {detail} ({:.1} s)", names[&id], started.elapsed().as_secs_f64());
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
