//! Classifier two-sample tests, plain and with autoencoder pretraining.
//!
//! A two-sample test asks whether `S_P ~ P` and `S_Q ~ Q` come from the same
//! distribution. A classifier two-sample test (C2ST) labels the pooled points
//! by origin, trains a classifier on one half and uses its held-out accuracy as
//! the test statistic. The semi-supervised variant (SSL-C2ST) first trains an
//! autoencoder on *all* points with labels stripped, then fine-tunes the
//! pretrained encoder plus a classification head on the labeled half. The
//! `-M` variants replace accuracy by the squared distance between mean
//! features of the two test samples. Calibration uses a permutation test in
//! every case.
//!
//! Modules:
//!
//! - [`nn`]: dense networks, exact gradients, MSE / cross-entropy, Adam.
//! - [`hdgm`]: bimodal high-dimensional Gaussian mixture benchmarks and dataset plumbing.
//! - [`pipeline`]: autoencoder pretraining, classifier training, feature extraction.
//! - [`stats`]: test statistics, permutation testing, analytic power, Poisson-binomial laws.
//! - [`harness`]: repeated-trial power / type-I estimation and CSV grid sweeps.
//! - [`checks`]: self-contained numerical checks shared by the CLI.

pub mod checks;
pub mod error;
pub mod harness;
pub mod hdgm;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use harness::{ExperimentConfig, Hypothesis, Method, PowerEstimate};
pub use hdgm::{HdgmSpec, LabeledDataset, Level, Role, SplitDataset};
pub use nn::{Activation, Matrix, Mlp};
pub use pipeline::{EncoderInit, FeatureLayer, TrainConfig, TrainedTest};
pub use stats::{TestOutcome, TieRule};
