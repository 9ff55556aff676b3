//! Phase-map CNN with hand-written backpropagation.

mod adam;
mod checkpoint;
mod gradcheck;
mod linalg;
mod loss;
mod model;
mod tensor;
mod train;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_for, save_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use gradcheck::{gradcheck, relative_error, GradCheckReport, ParamError, GRADCHECK_STEP, GRADCHECK_TOLERANCE};
pub use loss::{bce_loss, BCE_EPS};
pub use model::{BackwardScratch, ForwardCache, Mode, Model, ModelSpec, KERNEL_ROWS};
pub use tensor::Tensor;
pub use train::{checkpoint_name, read_loss_log, train, EpochLog, TrainConfig, TrainReport, LOSS_LOG};
