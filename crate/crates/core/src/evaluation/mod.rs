//! Scoring generated clips: a video classifier with per-variant accuracy and
//! confusion matrices, and caption-consistency rates on the toy corpus.

pub mod classifier;
pub mod consistency;
pub mod report;

pub use classifier::{train_classifier, ClassifierConfig, ClassifierModel, LabeledClip, VideoClassifier};
pub use consistency::{caption_consistency_metrics, ConsistencyRates, ConsistencySample};
pub use report::{confusion_heatmap, evaluate_clips, evaluate_generated, generate_class_samples, score_predictions, EvalReport, VariantResult};
