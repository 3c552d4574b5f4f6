//! Generic pre-training, head replacement, leave-one-split-out fine-tuning
//! and the checkpoint format.

pub mod checkpoint;
pub mod finetune;
pub mod shapes;
pub mod trainer;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, Provenance, Stage};
pub use finetune::{finetune_cv, load_split, manifest_train_set, CvOutcome, FinetuneOptions, SelectionLog};
pub use shapes::ShapeDataset;
pub use trainer::{
    accuracy, predict_images, pretrain, replace_head, train, ConsumptionLog, EpochStats, HyperGrid,
    HyperParams, TrainSet,
};
