//! CNN over phase maps: a stack of valid 2×1 convolutions along the
//! microphone axis, fully connected ReLU layers and one sigmoid per class.
//!
//! Conv activations are laid out `[sample][band][mic row][channel]`: the
//! `2C` inputs of one kernel position are contiguous, each conv output row is
//! a single `B·K × 2C × F` GEMM, and the flattened conv output (`[band][row]
//! [channel]` per sample) is already the row-major input of the first dense
//! layer.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::linalg::{gemm, Layout};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Rows covered by one conv kernel.
pub const KERNEL_ROWS: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub mics: usize,
    pub bands: usize,
    pub conv_filters: Vec<usize>,
    pub fc_widths: Vec<usize>,
    pub classes: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            mics: 4,
            bands: 255,
            conv_filters: vec![64; 3],
            fc_widths: vec![512; 2],
            classes: 37,
        }
    }
}

impl ModelSpec {
    /// Small network for gradient checks.
    pub fn toy() -> Self {
        Self {
            mics: 4,
            bands: 8,
            conv_filters: vec![3; 3],
            fc_widths: vec![16, 16],
            classes: 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let convs = self.conv_filters.len();
        if self.mics < 2 || convs == 0 || convs > self.mics - 1 {
            return Err(Error::Shape(format!(
                "{} conv layers cannot reduce {} mic rows with 2x1 kernels",
                convs, self.mics
            )));
        }
        if self.bands == 0 || self.classes == 0 || self.conv_filters.contains(&0) || self.fc_widths.contains(&0) {
            return Err(Error::Shape("layer widths must be positive".into()));
        }
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        self.mics * self.bands
    }

    /// `(rows, channels)` entering conv layer `l`; `l == conv count` is the
    /// conv stack output.
    pub fn conv_io(&self, l: usize) -> (usize, usize) {
        let chans = if l == 0 { 1 } else { self.conv_filters[l - 1] };
        (self.mics - l, chans)
    }

    pub fn flat_len(&self) -> usize {
        let (rows, chans) = self.conv_io(self.conv_filters.len());
        rows * chans * self.bands
    }

    /// Parameter shapes in declaration order.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let mut shapes = Vec::new();
        for l in 0..self.conv_filters.len() {
            let (_, c) = self.conv_io(l);
            shapes.push(vec![self.conv_filters[l], KERNEL_ROWS * c]);
            shapes.push(vec![self.conv_filters[l]]);
        }
        let mut width = self.flat_len();
        for &w in self.fc_widths.iter().chain(std::iter::once(&self.classes)) {
            shapes.push(vec![width, w]);
            shapes.push(vec![w]);
            width = w;
        }
        shapes
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for l in 0..self.conv_filters.len() {
            names.push(format!("conv{}.weight", l + 1));
            names.push(format!("conv{}.bias", l + 1));
        }
        for j in 0..self.fc_widths.len() {
            names.push(format!("fc{}.weight", j + 1));
            names.push(format!("fc{}.bias", j + 1));
        }
        names.push("out.weight".into());
        names.push("out.bias".into());
        names
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|s| s.iter().product::<usize>()).sum()
    }
}

/// Forward pass flavour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Infer,
    /// Dropout with the given drop rate after the conv stack and after each
    /// hidden fully connected layer.
    Train { dropout: f64 },
}

#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ModelSpec,
    pub params: Vec<Tensor>,
    version: u64,
}


/// Activations kept for the backward pass. Dropped units are stored as 0 and
/// kept units already carry the `1/(1-rate)` scale. A cache can be passed
/// back to [`Model::forward_train_into`] to reuse its buffers.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    pub batch: usize,
    pub probs: Vec<f64>,
    /// `acts[0]` is the input, `acts[l + 1]` the output of conv layer `l`.
    acts: Vec<Vec<f64>>,
    hidden: Vec<Vec<f64>>,
    keep_scale: f64,
    version: u64,
    /// Forward passes in infer mode leave this false.
    trained: bool,
}

/// Reusable buffers for [`Model::backward_into`].
#[derive(Debug, Clone, Default)]
pub struct BackwardScratch {
    delta: Vec<f64>,
    dx: Vec<f64>,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    (1.0 / (1.0 + (-z).exp())).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

fn dropout_in_place(values: &mut [f64], rate: f64, rng: &mut dyn RngCore) {
    if rate <= 0.0 {
        return;
    }
    let scale = 1.0 / (1.0 - rate);
    let threshold = ((1.0 - rate) * 4_294_967_296.0) as u64;
    let mut draws = [0u32; 1024];
    for chunk in values.chunks_mut(draws.len()) {
        rng.fill(&mut draws[..chunk.len()]);
        for (v, &d) in chunk.iter_mut().zip(&draws) {
            if (d as u64) < threshold {
                *v *= scale;
            } else {
                *v = 0.0;
            }
        }
    }
}

/// Adds `bias` to every row of a matrix with `bias.len()` columns, then ReLU.
fn add_bias_relu(m: &mut [f64], bias: &[f64]) {
    for row in m.chunks_exact_mut(bias.len()) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v = (*v + b).max(0.0);
        }
    }
}

fn resize(buf: &mut Vec<f64>, len: usize) {
    if buf.len() != len {
        buf.clear();
        buf.resize(len, 0.0);
    }
}

impl Model {
    /// He-scaled Gaussian weights and zero biases, rounded to f32.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_conv_params = 2 * spec.conv_filters.len();
        let params = spec
            .param_shapes()
            .iter()
            .enumerate()
            .map(|(i, shape)| {
                let mut t = Tensor::zeros(shape);
                if shape.len() == 2 {
                    // Conv weights are [out, fan_in], dense weights [fan_in, out].
                    let fan_in = if i < n_conv_params { shape[1] } else { shape[0] };
                    let std = (2.0 / fan_in as f64).sqrt();
                    for v in &mut t.data {
                        *v = (std * rng.sample::<f64, _>(StandardNormal)) as f32 as f64;
                    }
                }
                t
            })
            .collect();
        Ok(Self { spec, params, version: 0 })
    }

    pub fn from_params(spec: ModelSpec, params: Vec<Tensor>) -> Result<Self> {
        spec.validate()?;
        let shapes = spec.param_shapes();
        if params.len() != shapes.len() || params.iter().zip(&shapes).any(|(p, s)| &p.shape != s) {
            return Err(Error::Shape("parameter tensors do not match the model spec".into()));
        }
        Ok(Self { spec, params, version: 0 })
    }

    /// Mutable parameter access; invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> &mut [Tensor] {
        self.version += 1;
        &mut self.params
    }

    fn conv_params(&self, l: usize) -> (&[f64], &[f64]) {
        (&self.params[2 * l].data, &self.params[2 * l + 1].data)
    }

    fn dense_params(&self, j: usize) -> (&[f64], &[f64]) {
        let base = 2 * self.spec.conv_filters.len() + 2 * j;
        (&self.params[base].data, &self.params[base + 1].data)
    }

    fn check_input(&self, input: &[f64], batch: usize) -> Result<()> {
        if batch == 0 || input.len() != batch * self.spec.input_len() {
            return Err(Error::Shape(format!(
                "input holds {} values, expected batch {batch} x {} x {}",
                input.len(),
                self.spec.mics,
                self.spec.bands
            )));
        }
        Ok(())
    }

    /// Class probabilities, `batch × classes`, for a `batch × M × K` input.
    pub fn forward(&self, input: &[f64], batch: usize, mode: Mode, rng: &mut dyn RngCore) -> Result<(Vec<f64>, Option<ForwardCache>)> {
        match mode {
            Mode::Infer => Ok((self.infer(input, batch)?, None)),
            Mode::Train { dropout } => {
                let cache = self.forward_train(input, batch, dropout, rng)?;
                Ok((cache.probs.clone(), Some(cache)))
            }
        }
    }

    pub fn infer(&self, input: &[f64], batch: usize) -> Result<Vec<f64>> {
        let mut cache = ForwardCache::default();
        self.run(input, batch, None, &mut cache)?;
        Ok(cache.probs)
    }

    pub fn forward_train(&self, input: &[f64], batch: usize, dropout: f64, rng: &mut dyn RngCore) -> Result<ForwardCache> {
        let mut cache = ForwardCache::default();
        self.forward_train_into(input, batch, dropout, rng, &mut cache)?;
        Ok(cache)
    }

    pub fn forward_train_into(&self, input: &[f64], batch: usize, dropout: f64, rng: &mut dyn RngCore, cache: &mut ForwardCache) -> Result<()> {
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::Config(format!("dropout rate must lie in [0, 1), got {dropout}")));
        }
        self.run(input, batch, Some((dropout, rng)), cache)
    }

    fn run(&self, input: &[f64], batch: usize, mut train: Option<(f64, &mut dyn RngCore)>, cache: &mut ForwardCache) -> Result<()> {
        self.check_input(input, batch)?;
        let spec = &self.spec;
        let (k, m) = (spec.bands, spec.mics);
        let q = batch * k;
        let n_conv = spec.conv_filters.len();
        cache.acts.resize_with(n_conv + 1, Vec::new);
        cache.hidden.resize_with(spec.fc_widths.len(), Vec::new);

        // [sample][mic][band] -> [sample][band][mic]
        let x0 = &mut cache.acts[0];
        resize(x0, batch * m * k);
        for s in 0..batch {
            for r in 0..m {
                for b in 0..k {
                    x0[(s * k + b) * m + r] = input[(s * m + r) * k + b];
                }
            }
        }

        for l in 0..n_conv {
            let (rows_in, c) = spec.conv_io(l);
            let (rows_out, f) = spec.conv_io(l + 1);
            let (w, b) = self.conv_params(l);
            let (done, rest) = cache.acts.split_at_mut(l + 1);
            let x = &done[l];
            let y = &mut rest[0];
            resize(y, q * rows_out * f);
            let span = KERNEL_ROWS * c;
            for r in 0..rows_out {
                gemm(
                    q,
                    span,
                    f,
                    &x[r * c..],
                    Layout { rs: rows_in * c, cs: 1 },
                    w,
                    Layout::transposed(span),
                    0.0,
                    &mut y[r * f..],
                    Layout { rs: rows_out * f, cs: 1 },
                );
            }
            add_bias_relu(y, b);
        }
        cache.keep_scale = 1.0;
        if let Some((rate, rng)) = train.as_mut() {
            dropout_in_place(cache.acts.last_mut().expect("conv stack is non-empty"), *rate, *rng);
            cache.keep_scale = 1.0 / (1.0 - *rate);
        }

        let n_dense = spec.fc_widths.len() + 1;
        let mut in_w = spec.flat_len();
        for j in 0..n_dense {
            let out_w = if j < spec.fc_widths.len() { spec.fc_widths[j] } else { spec.classes };
            let (w, b) = self.dense_params(j);
            let mut y = if j + 1 < n_dense { std::mem::take(&mut cache.hidden[j]) } else { std::mem::take(&mut cache.probs) };
            resize(&mut y, batch * out_w);
            let x = if j == 0 { cache.acts.last().unwrap() } else { &cache.hidden[j - 1] };
            gemm(batch, in_w, out_w, x, Layout::row_major(in_w), w, Layout::row_major(out_w), 0.0, &mut y, Layout::row_major(out_w));
            if j + 1 < n_dense {
                add_bias_relu(&mut y, b);
                if let Some((rate, rng)) = train.as_mut() {
                    dropout_in_place(&mut y, *rate, *rng);
                }
                cache.hidden[j] = y;
            } else {
                for row in y.chunks_exact_mut(out_w) {
                    for (v, bias) in row.iter_mut().zip(b) {
                        *v = sigmoid(*v + bias);
                    }
                }
                cache.probs = y;
            }
            in_w = out_w;
        }
        cache.batch = batch;
        cache.version = self.version;
        cache.trained = train.is_some();
        Ok(())
    }

    /// Gradients of every parameter given `∂loss/∂p` for the cached batch.
    pub fn backward(&self, cache: &ForwardCache, dprobs: &[f64]) -> Result<Vec<Tensor>> {
        let mut grads: Vec<Tensor> = self.spec.param_shapes().iter().map(|s| Tensor::zeros(s)).collect();
        self.backward_into(cache, dprobs, &mut grads, &mut BackwardScratch::default())?;
        Ok(grads)
    }

    /// Like [`backward`](Self::backward), writing into caller-owned buffers.
    pub fn backward_into(&self, cache: &ForwardCache, dprobs: &[f64], grads: &mut [Tensor], scratch: &mut BackwardScratch) -> Result<()> {
        let spec = &self.spec;
        let n_conv = spec.conv_filters.len();
        if !cache.trained || cache.version != self.version || cache.acts.len() != n_conv + 1 || cache.hidden.len() != spec.fc_widths.len() {
            return Err(Error::StaleCache);
        }
        let shapes = spec.param_shapes();
        if grads.len() != shapes.len() || grads.iter().zip(&shapes).any(|(g, s)| &g.shape != s) {
            return Err(Error::Shape("gradient buffers do not match the model spec".into()));
        }
        let batch = cache.batch;
        if dprobs.len() != batch * spec.classes {
            return Err(Error::Shape(format!("upstream gradient holds {} values, expected {}", dprobs.len(), batch * spec.classes)));
        }
        let q = batch * spec.bands;
        let BackwardScratch { delta, dx } = scratch;

        // Through the output sigmoid.
        delta.clear();
        delta.extend(dprobs.iter().zip(&cache.probs).map(|(g, p)| g * p * (1.0 - p)));
        let mut out_w = spec.classes;
        for j in (0..=spec.fc_widths.len()).rev() {
            let in_w = if j == 0 { spec.flat_len() } else { spec.fc_widths[j - 1] };
            let x = if j == 0 { cache.acts.last().unwrap() } else { &cache.hidden[j - 1] };
            let base = 2 * n_conv + 2 * j;
            let (w, _) = self.dense_params(j);
            let (dw_slot, db_slot) = grads.split_at_mut(base + 1);
            gemm(in_w, batch, out_w, x, Layout::transposed(in_w), delta, Layout::row_major(out_w), 0.0, &mut dw_slot[base].data, Layout::row_major(out_w));
            sum_rows(delta, &mut db_slot[0].data);
            resize(dx, batch * in_w);
            gemm(batch, out_w, in_w, delta, Layout::row_major(out_w), w, Layout::transposed(out_w), 0.0, dx, Layout::row_major(in_w));
            // `x` is post-ReLU and post-dropout: positive exactly where the
            // unit was active and kept.
            for (d, a) in dx.iter_mut().zip(x) {
                *d = if *a > 0.0 { *d * cache.keep_scale } else { 0.0 };
            }
            std::mem::swap(delta, dx);
            out_w = in_w;
        }

        for l in (0..n_conv).rev() {
            let (rows_in, c) = spec.conv_io(l);
            let (rows_out, f) = spec.conv_io(l + 1);
            let span = KERNEL_ROWS * c;
            let (w, _) = self.conv_params(l);
            let x = &cache.acts[l];
            let (dw_slot, db_slot) = grads.split_at_mut(2 * l + 1);
            let dw = &mut dw_slot[2 * l].data;
            dw.fill(0.0);
            sum_rows(delta, &mut db_slot[0].data);
            if l > 0 {
                dx.clear();
                dx.resize(q * rows_in * c, 0.0);
            }
            for r in 0..rows_out {
                let g = &delta[r * f..];
                let g_layout = Layout { rs: rows_out * f, cs: 1 };
                gemm(f, q, span, g, Layout { rs: 1, cs: rows_out * f }, &x[r * c..], Layout { rs: rows_in * c, cs: 1 }, 1.0, dw, Layout::row_major(span));
                if l > 0 {
                    gemm(q, f, span, g, g_layout, w, Layout::row_major(span), 1.0, &mut dx[r * c..], Layout { rs: rows_in * c, cs: 1 });
                }
            }
            if l > 0 {
                for (d, a) in dx.iter_mut().zip(x) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
                std::mem::swap(delta, dx);
            }
        }
        Ok(())
    }
}

/// Column sums of a matrix with `out.len()` columns.
fn sum_rows(m: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    for row in m.chunks_exact(out.len()) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}
