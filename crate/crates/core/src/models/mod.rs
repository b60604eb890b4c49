//! Sub-classifier and baseline models, training, and checkpoints.

mod checkpoint;
mod classifier;
mod config;
mod input;
pub mod layers;
mod train;

pub use checkpoint::{
    from_container, load_checkpoint, save_checkpoint, to_container, write_atomic, Container, Entry, FORMAT_VERSION,
    MAGIC,
};
pub use classifier::{AnyClassifier, Classifier, GcnBaseline, LstmBaseline, SubClassifier};
pub use config::{ModelConfig, ModelKind};
pub use input::{batch_targets, SeriesInput};
pub use train::{
    evaluate, labels_at, memory_estimate, predict_labels, predict_proba, selection_score, train_model, EarlyStopper,
    EpochLog, TrainLog,
};
