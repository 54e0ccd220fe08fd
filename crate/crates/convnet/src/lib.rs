//! Spatio-temporal ConvNet for causality images, AdaBoost over it, and
//! evaluation metrics.

pub mod boost;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod gridsearch;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod train;

pub use boost::{adaboost_train, adaboost_with_split, BaseLearner, BoostConfig, BoostEnsemble, ConvNetLearner};
pub use config::{ConvNetConfig, SampleWeighting};
pub use error::{NetError, Result};
pub use metrics::{evaluate, majority_vote, vote, EvalReport, VoteMode};
pub use model::{block_shapes, ConvNet};
pub use train::{train, Dataset, TrainOutcome};
