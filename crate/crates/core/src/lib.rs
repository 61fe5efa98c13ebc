//! Outbreak forecasting toolkit.
//!
//! The crate assembles disease case-count tables, daily weather aggregates and
//! symptom records into hybrid feature vectors (min-max scaled numerics
//! concatenated with text embeddings) and fits a dense ReLU regressor trained
//! with Adam and an L2 penalty. Evaluation follows a leave-one-disease-out
//! protocol with MAE, MSE, RMSE and R².
//!
//! Module map:
//!
//! - [`ingest`]: disease CSV, symptom/demographics record files, merging and validation.
//! - [`weather`]: observation providers with an on-disk cache, daily and period aggregation.
//! - [`embeddings`]: key normalization, the `EMBCACHE` file format and the hashing fallback.
//! - [`features`]: min-max scaling, one-hot baseline, feature concatenation, row building.
//! - [`nn`]: dense network, backpropagation, Adam, training loop, gradient checking, checkpoints.
//! - [`evaluate`]: regression metrics and the leave-one-disease-out harness.
//! - [`config`] and [`cli`]: the `outbreak` command line driver.
//! - [`synthetic`]: seeded generators used by the examples and the acceptance suite.

pub mod cli;
pub mod config;
pub mod embeddings;
pub mod evaluate;
pub mod features;
pub mod ingest;
pub mod nn;
pub mod synthetic;
pub mod tsv;
pub mod weather;
