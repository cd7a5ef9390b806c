//! EvoSTS: evolutionary sparse time-series forecasting.
//!
//! A population of LSTM forecasters is spawned from shared weights, each child
//! is trained with its own stochastic minibatch order, and the child whose
//! multi-step predictions are best reconstructed by a sparse-coded dictionary
//! learned from the signal is carried into the next generation.
//!
//! Modules:
//! - [`signal_io`]: loading, synthesis, normalization, windowing and folds.
//! - [`sparse_coding`]: ISTA inference and dictionary learning.
//! - [`lstm`]: single-step LSTM with a dense multi-step head, analytic
//!   gradients and a seedable SGD trainer.
//! - [`evolution`]: the generational spawn/train/score/select loop.
//! - [`eval_report`]: RMSE/R², cross-validation and CSV/SVG reports.

pub mod checksum;
pub mod eval_report;
pub mod evolution;
pub mod lstm;
pub mod rng;
pub mod signal_io;
pub mod sparse_coding;

pub use eval_report::{CvReport, FoldReportRow};
pub use evolution::{EvoConfig, EvoRun, GenerationResult};
pub use lstm::{LstmDims, LstmWeights, TrainConfig};
pub use signal_io::{Dataset, NormStats, Signal, WindowPair};
pub use sparse_coding::{Dictionary, SparseCode, SparseConfig};
