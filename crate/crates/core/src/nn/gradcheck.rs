//! Central finite-difference check of [`Model::backward`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::loss::bce_loss;
use super::model::{Model, ModelSpec};
use crate::datagen::LabelSet;
use crate::error::Result;

pub const GRADCHECK_STEP: f64 = 1e-5;
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
/// Gradients smaller than this are compared on an absolute scale.
pub const GRADCHECK_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, Serialize)]
pub struct ParamError {
    pub name: String,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    pub per_param: Vec<ParamError>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < GRADCHECK_TOLERANCE
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRADCHECK_FLOOR)
}

/// Checks every parameter of a randomly initialized `spec` network on a
/// small random batch, with dropout active under a fixed mask seed.
pub fn gradcheck(spec: &ModelSpec, seed: u64) -> Result<GradCheckReport> {
    let mut model = Model::new(spec.clone(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    for (t, name) in model.params_mut().iter_mut().zip(spec.param_names()) {
        if name.ends_with("bias") {
            t.data.iter_mut().for_each(|b| *b = rng.random_range(-0.1..0.1));
        }
    }
    let batch = 3;
    let input: Vec<f64> = (0..batch * spec.input_len()).map(|_| rng.random_range(-3.1..3.1)).collect();
    let labels: Vec<LabelSet> = (0..batch)
        .map(|_| {
            let a = rng.random_range(0..spec.classes);
            let b = rng.random_range(0..spec.classes);
            LabelSet::from_classes(&[a, b])
        })
        .collect::<Result<_>>()?;
    let dropout = 0.5;
    let mask_seed = seed.wrapping_add(1);

    let loss_at = |m: &Model| -> Result<f64> {
        let mut r = ChaCha8Rng::seed_from_u64(mask_seed);
        let cache = m.forward_train(&input, batch, dropout, &mut r)?;
        Ok(bce_loss(&cache.probs, &labels, spec.classes).0)
    };

    let mut r = ChaCha8Rng::seed_from_u64(mask_seed);
    let cache = model.forward_train(&input, batch, dropout, &mut r)?;
    let (_, dprobs) = bce_loss(&cache.probs, &labels, spec.classes);
    let grads = model.backward(&cache, &dprobs)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        per_param: Vec::new(),
    };
    for (p, name) in spec.param_names().into_iter().enumerate() {
        let mut worst: f64 = 0.0;
        for i in 0..model.params[p].len() {
            let orig = model.params[p].data[i];
            model.params_mut()[p].data[i] = orig + GRADCHECK_STEP;
            let up = loss_at(&model)?;
            model.params_mut()[p].data[i] = orig - GRADCHECK_STEP;
            let down = loss_at(&model)?;
            model.params_mut()[p].data[i] = orig;
            let numeric = (up - down) / (2.0 * GRADCHECK_STEP);
            worst = worst.max(relative_error(grads[p].data[i], numeric));
            report.checked += 1;
        }
        report.max_rel_error = report.max_rel_error.max(worst);
        report.per_param.push(ParamError { name, max_rel_error: worst });
    }
    Ok(report)
}
