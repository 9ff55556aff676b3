//! Multi-speaker DOA estimation from STFT phase maps with a CNN, plus an
//! SRP-PHAT baseline and the data pipeline to train and evaluate both.

pub mod acoustics;
pub mod config;
pub mod datagen;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod nn;
pub mod seed;
pub mod srp_phat;

pub use acoustics::{ArraySetup, Rir, Room, SourcePlacement, Vec3};
pub use config::RunConfig;
pub use datagen::{DoaClasses, FrameStore, LabelSet, LabeledFrame, Manifest};
pub use dsp::{PhaseMap, StftFrameSet};
pub use error::{Error, Result};
pub use eval::{Estimator, ResultRow, Summary};
pub use nn::{Model, ModelSpec, Tensor, TrainConfig};
pub use srp_phat::SteeringTable;
