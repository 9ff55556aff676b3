//! Posterior aggregation, top-2 DOA picking, permutation-free MAE and the
//! experiment driver.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{DoaClasses, FeatureConfig, TestSet};
use crate::dsp;
use crate::error::{Error, IoContext, Result};
use crate::nn::Model;
use crate::srp_phat::{srp_probabilities, srp_response, SteeringTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cnn,
    Srp,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Self::Cnn => "proposed",
            Self::Srp => "SRP-PHAT",
        }
    }
}

/// Frame-level class posteriors of one mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorTrace {
    pub method: Method,
    pub frames: Vec<Vec<f64>>,
}

/// Mean over frames, then normalized to unit sum.
pub fn aggregate(trace: &PosteriorTrace) -> Result<Vec<f64>> {
    let first = trace.frames.first().ok_or(Error::EmptySignal)?;
    let mut mean = vec![0.0; first.len()];
    for f in &trace.frames {
        if f.len() != mean.len() {
            return Err(Error::Shape("posterior frames differ in length".into()));
        }
        mean.iter_mut().zip(f).for_each(|(m, v)| *m += v);
    }
    let total: f64 = mean.iter().sum();
    if total > 0.0 {
        mean.iter_mut().for_each(|m| *m /= total);
    } else {
        mean.fill(1.0 / first.len() as f64);
    }
    Ok(mean)
}

/// Classes of the two largest entries; ties go to the lower index.
pub fn top2(v: &[f64]) -> (usize, usize) {
    assert!(v.len() >= 2, "top2 needs at least two classes");
    let mut best = (0, 1);
    if v[1] > v[0] {
        best = (1, 0);
    }
    for (i, &x) in v.iter().enumerate().skip(2) {
        if x > v[best.0] {
            best = (i, best.0);
        } else if x > v[best.1] {
            best.1 = i;
        }
    }
    best
}

/// Mean absolute error of two unordered DOA pairs under the better assignment.
pub fn pair_mae(est: [f64; 2], truth: [f64; 2]) -> f64 {
    let straight = ((est[0] - truth[0]).abs() + (est[1] - truth[1]).abs()) / 2.0;
    let crossed = ((est[0] - truth[1]).abs() + (est[1] - truth[0]).abs()) / 2.0;
    straight.min(crossed)
}

pub enum Estimator<'a> {
    Cnn(&'a Model),
    Srp(&'a SteeringTable),
}

impl Estimator<'_> {
    pub fn method(&self) -> Method {
        match self {
            Self::Cnn(_) => Method::Cnn,
            Self::Srp(_) => Method::Srp,
        }
    }

    fn classes(&self) -> usize {
        match self {
            Self::Cnn(m) => m.spec.classes,
            Self::Srp(t) => t.classes(),
        }
    }

    /// Per-frame posteriors for a multichannel recording.
    pub fn posteriors(&self, audio: &[Vec<f64>], features: &FeatureConfig) -> Result<PosteriorTrace> {
        let frames = dsp::stft(audio, features.dft_len, features.fs)?;
        if frames.n_frames == 0 {
            return Err(Error::SignalTooShort {
                len: audio.first().map_or(0, Vec::len),
                dft_len: features.dft_len,
            });
        }
        let rows = match self {
            Self::Cnn(model) => {
                if model.spec.mics != frames.n_channels || model.spec.bands != features.band_count() {
                    return Err(Error::Shape(format!(
                        "model expects M={} K={}, recording gives M={} K={}",
                        model.spec.mics,
                        model.spec.bands,
                        frames.n_channels,
                        features.band_count()
                    )));
                }
                let maps = dsp::phase_maps(&frames, features.bands())?;
                let mut rows = Vec::with_capacity(maps.len());
                for chunk in maps.chunks(256) {
                    let input: Vec<f64> = chunk.iter().flat_map(|p| p.values.iter().map(|&v| v as f64)).collect();
                    let probs = model.infer(&input, chunk.len())?;
                    rows.extend(probs.chunks_exact(model.spec.classes).map(<[f64]>::to_vec));
                }
                rows
            }
            Self::Srp(table) => (0..frames.n_frames)
                .map(|n| srp_response(frames.frame(n), table).map(|s| srp_probabilities(&s)))
                .collect::<Result<_>>()?,
        };
        Ok(PosteriorTrace {
            method: self.method(),
            frames: rows,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub mixture_id: String,
    pub true_doa1: f64,
    pub true_doa2: f64,
    pub est_doa1: f64,
    pub est_doa2: f64,
    pub mae_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: Method,
    pub snr_db: f64,
    pub mixtures: usize,
    pub skipped: usize,
    pub mean_mae_deg: f64,
    /// Only set by [`compare`].
    pub win_rate: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub rows: Vec<ResultRow>,
    /// Aggregated posteriors, aligned with `rows`.
    pub posteriors: Vec<Vec<f64>>,
    pub skipped: Vec<(String, String)>,
    pub summary: Summary,
}

pub fn mean_mae(rows: &[ResultRow]) -> f64 {
    if rows.is_empty() {
        return f64::NAN;
    }
    rows.iter().map(|r| r.mae_deg).sum::<f64>() / rows.len() as f64
}

/// Evaluates every mixture of `set`. Unreadable mixtures are logged, skipped
/// and counted.
pub fn run_experiment(set: &TestSet, estimator: &Estimator, threads: usize) -> Result<Experiment> {
    let features = &set.index.features;
    let classes = DoaClasses::new(set.index.config.doa_resolution_deg)?;
    if classes.count() != estimator.classes() {
        return Err(Error::Shape(format!(
            "estimator has {} classes, test set grid has {}",
            estimator.classes(),
            classes.count()
        )));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<(ResultRow, Vec<f64>)>> = pool.install(|| {
        set.index
            .mixtures
            .par_iter()
            .map(|id| {
                let mix = set.load_mixture(id)?;
                let agg = aggregate(&estimator.posteriors(&mix.audio, features)?)?;
                let (a, b) = top2(&agg);
                let (e1, e2) = (classes.doa(a.min(b)), classes.doa(a.max(b)));
                let truth = [mix.truth.theta1, mix.truth.theta2];
                Ok((
                    ResultRow {
                        mixture_id: mix.id,
                        true_doa1: truth[0],
                        true_doa2: truth[1],
                        est_doa1: e1,
                        est_doa2: e2,
                        mae_deg: pair_mae([e1, e2], truth),
                    },
                    agg,
                ))
            })
            .collect()
    });
    let mut rows = Vec::new();
    let mut posteriors = Vec::new();
    let mut skipped = Vec::new();
    for (id, outcome) in set.index.mixtures.iter().zip(outcomes) {
        match outcome {
            Ok((row, agg)) => {
                rows.push(row);
                posteriors.push(agg);
            }
            Err(e) => {
                log::warn!("skipping mixture {id}: {e}");
                skipped.push((id.clone(), e.to_string()));
            }
        }
    }
    let summary = Summary {
        method: estimator.method(),
        snr_db: set.index.config.snr_db,
        mixtures: rows.len(),
        skipped: skipped.len(),
        mean_mae_deg: mean_mae(&rows),
        win_rate: None,
    };
    Ok(Experiment {
        rows,
        posteriors,
        skipped,
        summary,
    })
}

pub fn write_results_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().context(|| format!("writing {}", path.display()))
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<ResultRow>, _>>()?)
}

/// One row per mixture: id followed by the aggregated class probabilities.
pub fn write_posterior_csv(path: &Path, rows: &[ResultRow], posteriors: &[Vec<f64>], doas: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["mixture_id".to_string()];
    header.extend(doas.iter().map(|d| format!("p_{d:03.0}")));
    w.write_record(&header)?;
    for (row, p) in rows.iter().zip(posteriors) {
        let mut rec = vec![row.mixture_id.clone()];
        rec.extend(p.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().context(|| format!("writing {}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonColumn {
    pub snr_db: f64,
    pub mixtures: usize,
    pub cnn_mae_deg: f64,
    pub srp_mae_deg: f64,
    pub delta_deg: f64,
    /// Fraction of mixtures where the CNN error is strictly lower.
    pub win_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub columns: Vec<ComparisonColumn>,
}

/// Compares row-aligned result sets, one column per SNR group.
pub fn compare(groups: &[(f64, &[ResultRow], &[ResultRow])]) -> Result<Comparison> {
    let mut columns = Vec::with_capacity(groups.len());
    for &(snr_db, cnn, srp) in groups {
        if cnn.len() != srp.len() {
            let row = cnn.len().min(srp.len());
            return Err(Error::IdMismatch {
                row,
                left: cnn.get(row).map_or("<end>".into(), |r| r.mixture_id.clone()),
                right: srp.get(row).map_or("<end>".into(), |r| r.mixture_id.clone()),
            });
        }
        if let Some((row, (a, b))) = cnn.iter().zip(srp).enumerate().find(|(_, (a, b))| a.mixture_id != b.mixture_id) {
            return Err(Error::IdMismatch {
                row,
                left: a.mixture_id.clone(),
                right: b.mixture_id.clone(),
            });
        }
        let wins = cnn.iter().zip(srp).filter(|(a, b)| a.mae_deg < b.mae_deg).count();
        let (c, s) = (mean_mae(cnn), mean_mae(srp));
        columns.push(ComparisonColumn {
            snr_db,
            mixtures: cnn.len(),
            cnn_mae_deg: c,
            srp_mae_deg: s,
            delta_deg: c - s,
            win_rate: if cnn.is_empty() { 0.0 } else { wins as f64 / cnn.len() as f64 },
        });
    }
    columns.sort_by(|a, b| a.snr_db.total_cmp(&b.snr_db));
    Ok(Comparison { columns })
}

impl Comparison {
    /// Plain-text MAE table: methods as rows, SNR levels as columns.
    pub fn table(&self) -> String {
        let mut out = format!("{:<10}", "MAE (deg)");
        for c in &self.columns {
            let _ = write!(out, " {:>8}", format!("{} dB", c.snr_db));
        }
        out.push('\n');
        for (label, pick) in [
            (Method::Cnn.label(), (|c: &ComparisonColumn| c.cnn_mae_deg) as fn(&ComparisonColumn) -> f64),
            (Method::Srp.label(), |c: &ComparisonColumn| c.srp_mae_deg),
            ("win rate", |c: &ComparisonColumn| c.win_rate),
        ] {
            let _ = write!(out, "{label:<10}");
            for c in &self.columns {
                let _ = write!(out, " {:>8.2}", pick(c));
            }
            out.push('\n');
        }
        out
    }
}
