//! The volumetric CNN: labeled samples, training, prediction and stratified
//! fold plans.

mod folds;
mod sample;
mod train;

pub use folds::{make_folds, FoldPlan};
pub use sample::LabeledSample;
pub use train::{predict, predict_many, train_classifier, train_classifier_logged, ClassifierTrainConfig};
