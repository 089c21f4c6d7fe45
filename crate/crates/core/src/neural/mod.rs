//! The conv / linear / transposed-conv autoencoder used as the general
//! de-anonymizer, with a hand-written backward pass, an Adam trainer and
//! binary checkpoints.
//!
//! Architecture for an `H × W` input with `F` features:
//!
//! ```text
//! conv3x3(3→F) → LeakyReLU → maxpool2
//! conv3x3(F→F) → LeakyReLU → maxpool2
//! [linear(F·H/4·W/4 → same) → LeakyReLU]      (omitted in the Conv-AE ablation)
//! tconv4x4/2(F→F) → LeakyReLU
//! tconv4x4/2(F→F) → LeakyReLU
//! conv3x3(F→3) → sigmoid
//! ```

mod checkpoint;
mod gradcheck;
mod layers;
mod model;
mod train;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use gradcheck::{ae_gradient_check, GradientCheck, GRADCHECK_STEP};
pub use model::{
    ae_apply, ae_forward, ae_init, ae_loss, parameter_count, AeHyperparams, AutoencoderModel, Loss, Weights,
};
pub use train::{ae_train, read_training_log, write_training_log, EpochRecord, TrainedAutoencoder, TrainingPair};
