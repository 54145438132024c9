//! Synthetic data, optimizer, training, evaluation and the command line.

pub mod adam;
pub mod cli;
pub mod eval;
pub mod synthetic;
pub mod train;
pub mod verify;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use cli::run_cli;
pub use eval::{diagnose, evaluate, evaluate_augmented, DiagnosticsConfig, EvalMode, Evaluation, Prediction};
pub use synthetic::{generate_synthetic, GeneratorConfig, SyntheticData, ValueModel};
pub use train::{train, EpochRecord, TrainConfig, TrainOutcome};
