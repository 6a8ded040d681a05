//! Corpus curation, clip qualification, the synthetic toy corpus and dataset
//! splitting.

pub mod curate;
pub mod keypoints;
pub mod parallel;
pub mod qualify;
pub mod split;
pub mod store;
pub mod toy;

pub use curate::{curate_metadata, CurationConfig, CurationOutcome, MetadataRecord, Rejection};
pub use qualify::{qualify_clips, ClipQualificationConfig};
pub use split::split_dataset;
pub use store::{load_corpus, save_corpus, CorpusEntry};
pub use toy::{synthesize_toy_corpus, ToyCorpusSpec, ToyPair};
