//! Core library for manga panel-transition analysis: corpus handling,
//! annotator agreement, the transition classifier and its feedback loop,
//! clustering of per-book transition distributions and sequence mining.

pub mod agreement;
pub mod classifier;
pub mod clustering;
pub mod corpus;
pub mod error;
pub mod features;
pub mod feedback;
pub mod label;
pub mod seqmine;
pub mod synthetic;

pub use agreement::{cohen_kappa, interpret_kappa, ConfusionMatrix, KappaBand, KappaScore};
pub use classifier::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use classifier::{MlpParams, OutputActivation, Prediction, TrainConfig};
pub use clustering::{BookVector, ClusterModel, ElbowReport, IntersectionTable, KMeansConfig};
pub use corpus::{
    AnnotationRecord, BookMeta, Corpus, Genre, GenreGroup, LabelMap, Panel, PanelKey, PanelPair,
};
pub use error::{Error, Result};
pub use features::{FeatureStore, Standardizer};
pub use feedback::{FeedbackKind, FeedbackSource, LabelPool, Learner, LoopConfig, RoundReport};
pub use label::{TransitionLabel, NUM_LABELS};
pub use seqmine::{MineReport, PageSequence, Pattern};
