use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use doalab::acoustics::{self, Room, SPEED_OF_SOUND};
use doalab::datagen::DoaClasses;
use doalab::dsp::{self, DEFAULT_BANDS, DFT_LEN};
use doalab::nn::{bce_loss, BackwardScratch, ForwardCache, Model, ModelSpec, Tensor};
use doalab::srp_phat::{srp_probabilities, srp_response};
use doalab::{LabelSet, SteeringTable};

const FS: f64 = 16_000.0;

fn noise(channels: usize, len: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..channels).map(|_| (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

fn bench_stft(c: &mut Criterion) {
    let x = noise(4, 2 * FS as usize, 1);
    c.bench_function("stft_4ch_2s", |b| b.iter(|| dsp::stft(&x, DFT_LEN, FS).unwrap()));
    let frames = dsp::stft(&x, DFT_LEN, FS).unwrap();
    c.bench_function("istft_4ch_2s", |b| b.iter(|| dsp::istft(&frames).unwrap()));
    c.bench_function("phase_maps_4ch_2s", |b| b.iter(|| dsp::phase_maps(&frames, DEFAULT_BANDS).unwrap()));
}

fn bench_rir(c: &mut Criterion) {
    let room = Room::new([6.0, 6.0, 2.7], 0.3).unwrap();
    let beta = acoustics::sabine_reflection(&room).unwrap();
    let mut g = c.benchmark_group("rir");
    g.sample_size(10);
    g.bench_function("6x6x2.7_rt60_0.3", |b| {
        b.iter(|| acoustics::simulate_rir(&room, beta, [2.0, 3.0, 1.5], [3.5, 3.2, 1.5], FS, None).unwrap())
    });
    g.finish();
}

fn bench_cnn(c: &mut Criterion) {
    let spec = ModelSpec::default();
    let model = Model::new(spec.clone(), 0).unwrap();
    let batch = 64;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let input: Vec<f64> = (0..batch * spec.input_len()).map(|_| rng.random_range(-3.0..3.0)).collect();
    let labels: Vec<LabelSet> = (0..batch)
        .map(|i| LabelSet::from_classes(&[i % spec.classes, (i + 7) % spec.classes]).unwrap())
        .collect();

    let mut g = c.benchmark_group("cnn_batch64");
    g.sample_size(10);
    g.bench_function("infer", |b| b.iter(|| model.infer(&input, batch).unwrap()));
    let mut cache = ForwardCache::default();
    let mut grads: Vec<Tensor> = spec.param_shapes().iter().map(|s| Tensor::zeros(s)).collect();
    let mut scratch = BackwardScratch::default();
    g.bench_function("train_step", |b| {
        b.iter(|| {
            model.forward_train_into(&input, batch, 0.5, &mut rng, &mut cache).unwrap();
            let (_, dprobs) = bce_loss(&cache.probs, &labels, spec.classes);
            model.backward_into(&cache, &dprobs, &mut grads, &mut scratch).unwrap();
        })
    });
    g.finish();
}

fn bench_srp(c: &mut Criterion) {
    let classes = DoaClasses::new(5.0).unwrap();
    let table = SteeringTable::new(&classes.doas(), DEFAULT_BANDS, 4, 0.08, SPEED_OF_SOUND, FS, DFT_LEN).unwrap();
    let frames = dsp::stft(&noise(4, 8 * DFT_LEN, 3), DFT_LEN, FS).unwrap();
    c.bench_function("steering_table", |b| {
        b.iter(|| SteeringTable::new(&classes.doas(), DEFAULT_BANDS, 4, 0.08, SPEED_OF_SOUND, FS, DFT_LEN).unwrap())
    });
    c.bench_function("srp_frame", |b| {
        b.iter_batched(
            || frames.frame(3).to_vec(),
            |f| srp_probabilities(&srp_response(&f, &table).unwrap()),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, bench_stft, bench_rir, bench_cnn, bench_srp);
criterion_main!(benches);
