//! Regression metrics and leave-one-disease-out evaluation.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::path::Path;

use chrono::NaiveDate;
use thiserror::Error;

use crate::features::{fit_on_examples, scale_example, FeatureError, FeatureSchema, RawExample};
use crate::nn::{init_network, predict, train, HyperParams, NnError, TrainedModel, TrainingHistory, DEFAULT_HIDDEN};
use crate::tsv::atomic_write;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("actual has {actual} values, predicted has {predicted}")]
    LengthMismatch { actual: usize, predicted: usize },
    #[error("no values to score")]
    EmptyInput,
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("R² is undefined: actual values are constant and residuals are nonzero")]
    UndefinedR2,
    #[error("disease {0:?} not present")]
    UnknownDisease(String),
    #[error("no training rows once {0:?} is held out")]
    EmptyTrainingSet(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Network(#[from] NnError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    pub r_squared: f64,
    pub n: usize,
}

/// MAE, MSE, RMSE and `R² = 1 - SS_res / SS_tot` (may be negative).
///
/// With constant `actual`, R² is 1 for a perfect fit and an error otherwise.
pub fn compute_metrics(actual: &[f64], predicted: &[f64]) -> Result<MetricsReport, EvalError> {
    if actual.len() != predicted.len() {
        return Err(EvalError::LengthMismatch {
            actual: actual.len(),
            predicted: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if let Some(i) = actual.iter().zip(predicted).position(|(a, p)| !a.is_finite() || !p.is_finite()) {
        return Err(EvalError::NonFinite(i));
    }
    let n = actual.len() as f64;
    let (abs_sum, sq_sum) = actual
        .iter()
        .zip(predicted)
        .fold((0.0, 0.0), |(abs, sq), (a, p)| (abs + (a - p).abs(), sq + (a - p) * (a - p)));
    let mean = actual.iter().sum::<f64>() / n;
    let ss_tot: f64 = actual.iter().map(|a| (a - mean) * (a - mean)).sum();
    let r_squared = if ss_tot > 0.0 {
        1.0 - sq_sum / ss_tot
    } else if sq_sum == 0.0 {
        1.0
    } else {
        return Err(EvalError::UndefinedR2);
    };
    let mse = sq_sum / n;
    Ok(MetricsReport {
        mae: abs_sum / n,
        mse,
        rmse: mse.sqrt(),
        r_squared,
        n: actual.len(),
    })
}

/// `metric\tvalue` rows.
pub fn write_metrics(report: &MetricsReport, w: &mut dyn Write) -> io::Result<()> {
    writeln!(w, "metric\tvalue")?;
    writeln!(w, "mae\t{}", report.mae)?;
    writeln!(w, "mse\t{}", report.mse)?;
    writeln!(w, "rmse\t{}", report.rmse)?;
    writeln!(w, "r_squared\t{}", report.r_squared)?;
    writeln!(w, "n\t{}", report.n)?;
    Ok(())
}

pub fn save_metrics(report: &MetricsReport, path: &Path) -> io::Result<()> {
    atomic_write(path, |w| write_metrics(report, w))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub period_start: NaiveDate,
    pub period_end: NaiveDate,
    pub actual: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub held_out_disease: String,
    pub metrics: MetricsReport,
    /// Chronological.
    pub predictions: Vec<PredictionRow>,
}

/// Network shape and training settings for one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Layer widths after the input, ending in 1.
    pub layer_sizes: Vec<usize>,
    pub hyper: HyperParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let mut layer_sizes = DEFAULT_HIDDEN.to_vec();
        layer_sizes.push(1);
        Self {
            layer_sizes,
            hyper: HyperParams::default(),
        }
    }
}

impl PipelineConfig {
    pub fn architecture(&self, input_dim: usize) -> Vec<usize> {
        let mut sizes = vec![input_dim];
        sizes.extend(&self.layer_sizes);
        sizes
    }
}

/// Groups examples by disease name, keeping input order within a disease.
pub fn group_by_disease(examples: Vec<RawExample>) -> BTreeMap<String, Vec<RawExample>> {
    let mut map: BTreeMap<String, Vec<RawExample>> = BTreeMap::new();
    for e in examples {
        map.entry(e.disease.clone()).or_default().push(e);
    }
    map
}

/// Everything a leave-one-out run produces.
#[derive(Debug, Clone)]
pub struct LeaveOneOutOutcome {
    pub result: EvalResult,
    pub model: TrainedModel,
    pub history: TrainingHistory,
}

/// Schema implied by the first example's block widths.
pub fn schema_for(example: &RawExample) -> FeatureSchema {
    let mut schema = FeatureSchema::standard(example.blocks[0].dim());
    for (slot, block) in schema.embedding_blocks.iter_mut().zip(&example.blocks) {
        slot.1 = block.dim();
    }
    schema
}

/// Fits the scaler on the training diseases only.
pub fn fit_training_scaler(
    datasets: &BTreeMap<String, Vec<RawExample>>,
    held_out: &str,
) -> Result<crate::features::ScalerParams, EvalError> {
    let training: Vec<RawExample> = datasets
        .iter()
        .filter(|(name, _)| name.as_str() != held_out)
        .flat_map(|(_, rows)| rows.iter().cloned())
        .collect();
    if training.is_empty() {
        return Err(EvalError::EmptyTrainingSet(held_out.to_string()));
    }
    Ok(fit_on_examples(&training)?)
}

/// Trains on every disease except `held_out` and scores the held-out rows in
/// original target units.
pub fn leave_one_out_eval(
    datasets: &BTreeMap<String, Vec<RawExample>>,
    held_out: &str,
    config: &PipelineConfig,
) -> Result<LeaveOneOutOutcome, EvalError> {
    let test_rows = datasets
        .get(held_out)
        .ok_or_else(|| EvalError::UnknownDisease(held_out.to_string()))?;
    let scaler = fit_training_scaler(datasets, held_out)?;
    let training: Vec<&RawExample> = datasets
        .iter()
        .filter(|(name, _)| name.as_str() != held_out)
        .flat_map(|(_, rows)| rows.iter())
        .collect();
    let schema = schema_for(training[0]);
    let rows = training
        .iter()
        .map(|e| scale_example(&schema, &scaler, e))
        .collect::<Result<Vec<_>, _>>()?;

    let mut network = init_network(&config.architecture(schema.total_dim()), config.hyper.seed)?;
    let history = train(&mut network, &rows, &config.hyper)?;

    let mut predictions = test_rows
        .iter()
        .map(|e| {
            let (x, _) = scale_example(&schema, &scaler, e)?;
            Ok(PredictionRow {
                period_start: e.period_start,
                period_end: e.period_end,
                actual: e.target,
                predicted: predict(&network, &scaler, x.values())?,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    predictions.sort_by_key(|p| (p.period_start, p.period_end));
    let actual: Vec<f64> = predictions.iter().map(|p| p.actual).collect();
    let predicted: Vec<f64> = predictions.iter().map(|p| p.predicted).collect();
    let metrics = compute_metrics(&actual, &predicted)?;
    Ok(LeaveOneOutOutcome {
        result: EvalResult {
            held_out_disease: held_out.to_string(),
            metrics,
            predictions,
        },
        model: TrainedModel { network, scaler },
        history,
    })
}

/// `period_start\tactual\tpredicted`, sorted by period.
pub fn write_plot_series(result: &EvalResult, w: &mut dyn Write) -> io::Result<()> {
    let mut rows: Vec<&PredictionRow> = result.predictions.iter().collect();
    rows.sort_by_key(|p| (p.period_start, p.period_end));
    writeln!(w, "period_start\tactual\tpredicted")?;
    for p in rows {
        writeln!(w, "{}\t{}\t{}", p.period_start, p.actual, p.predicted)?;
    }
    Ok(())
}

/// Writes the plot series atomically (temporary file then rename).
pub fn export_plot_series(result: &EvalResult, path: &Path) -> Result<(), EvalError> {
    if result.predictions.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    atomic_write(path, |w| write_plot_series(result, w))?;
    Ok(())
}
