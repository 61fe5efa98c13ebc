//! Model inputs.
//!
//! A row is the period's numeric weather aggregates plus temporal features,
//! min-max scaled with parameters fitted on training rows only, followed by
//! the disease-name, mean-symptom and weather-phrase embeddings.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{self, Write};

use chrono::{Datelike, NaiveDate};
use thiserror::Error;

use crate::embeddings::{normalize_key, Embedder, Embedding, EmbeddingSource};
use crate::ingest::{DiseaseRecord, MergedHealthRecord};
use crate::weather::{DailyIndex, NUMERIC_FIELDS};

pub const TEMPORAL_FIELDS: [&str; 3] = ["month_sin", "month_cos", "year"];

pub const BLOCK_DISEASE: &str = "disease";
pub const BLOCK_SYMPTOMS: &str = "symptoms";
pub const BLOCK_PHRASE: &str = "phrase";

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("no rows to fit")]
    EmptyInput,
    #[error("row {row} has {found} fields, expected {expected}")]
    RaggedRows { row: usize, expected: usize, found: usize },
    #[error("{targets} targets for {rows} rows")]
    TargetCount { rows: usize, targets: usize },
    #[error("row has {found} fields, scaler was fitted on {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("vocabulary contains {0:?} more than once")]
    DuplicateVocabulary(String),
    #[error("block {block:?} has length {found}, schema expects {expected}")]
    BlockDimMismatch {
        block: String,
        expected: usize,
        found: usize,
    },
    #[error("no weather covers {disease} {start}..{end}")]
    MissingWeather {
        disease: String,
        start: NaiveDate,
        end: NaiveDate,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSchema {
    pub numeric_fields: Vec<String>,
    pub embedding_blocks: Vec<(String, usize)>,
}

impl FeatureSchema {
    /// Ten weather aggregates, three temporal features, and three embedding
    /// blocks of width `embed_dim`.
    pub fn standard(embed_dim: usize) -> Self {
        Self {
            numeric_fields: NUMERIC_FIELDS
                .iter()
                .chain(TEMPORAL_FIELDS.iter())
                .map(|s| s.to_string())
                .collect(),
            embedding_blocks: [BLOCK_DISEASE, BLOCK_SYMPTOMS, BLOCK_PHRASE]
                .iter()
                .map(|b| (b.to_string(), embed_dim))
                .collect(),
        }
    }

    pub fn total_dim(&self) -> usize {
        self.numeric_fields.len() + self.embedding_blocks.iter().map(|(_, d)| d).sum::<usize>()
    }

    /// Column names: `num:<field>` then `<block>:<i>`.
    pub fn column_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.numeric_fields.iter().map(|f| format!("num:{f}")).collect();
        for (block, dim) in &self.embedding_blocks {
            names.extend((0..*dim).map(|i| format!("{block}:{i}")));
        }
        names
    }
}

/// Per-field and target min/max fitted on training data.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalerParams {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
    pub target_min: f64,
    pub target_max: f64,
}

fn scale(x: f64, min: f64, max: f64) -> f64 {
    if max > min {
        (x - min) / (max - min)
    } else {
        0.0
    }
}

impl ScalerParams {
    pub fn field_count(&self) -> usize {
        self.mins.len()
    }

    /// Maps each field to `(x - min) / (max - min)`; constant fields map to 0.
    /// Values outside the fitted range are not clamped.
    pub fn apply(&self, row: &[f64]) -> Result<Vec<f64>, FeatureError> {
        if row.len() != self.mins.len() {
            return Err(FeatureError::LengthMismatch {
                expected: self.mins.len(),
                found: row.len(),
            });
        }
        Ok(row
            .iter()
            .zip(self.mins.iter().zip(&self.maxs))
            .map(|(&x, (&lo, &hi))| scale(x, lo, hi))
            .collect())
    }

    pub fn scale_target(&self, y: f64) -> f64 {
        scale(y, self.target_min, self.target_max)
    }

    pub fn invert_target(&self, scaled: f64) -> f64 {
        if self.target_max > self.target_min {
            scaled * (self.target_max - self.target_min) + self.target_min
        } else {
            self.target_min
        }
    }
}

pub fn fit_scaler<R: AsRef<[f64]>>(rows: &[R], targets: &[f64]) -> Result<ScalerParams, FeatureError> {
    let first = rows.first().ok_or(FeatureError::EmptyInput)?.as_ref();
    if targets.len() != rows.len() {
        return Err(FeatureError::TargetCount {
            rows: rows.len(),
            targets: targets.len(),
        });
    }
    let mut mins = first.to_vec();
    let mut maxs = first.to_vec();
    for (i, row) in rows.iter().enumerate() {
        let row = row.as_ref();
        if row.len() != mins.len() {
            return Err(FeatureError::RaggedRows {
                row: i,
                expected: mins.len(),
                found: row.len(),
            });
        }
        for (k, &x) in row.iter().enumerate() {
            mins[k] = mins[k].min(x);
            maxs[k] = maxs[k].max(x);
        }
    }
    let target_min = targets.iter().copied().fold(f64::INFINITY, f64::min);
    let target_max = targets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(ScalerParams {
        mins,
        maxs,
        target_min,
        target_max,
    })
}

/// One-hot baseline encoding. Values outside the vocabulary encode as all
/// zeros.
pub fn one_hot_encode<S: AsRef<str>>(vocabulary: &[S], value: &str) -> Result<Vec<f64>, FeatureError> {
    let mut index: HashMap<&str, usize> = HashMap::with_capacity(vocabulary.len());
    for (i, v) in vocabulary.iter().enumerate() {
        if index.insert(v.as_ref(), i).is_some() {
            return Err(FeatureError::DuplicateVocabulary(v.as_ref().to_string()));
        }
    }
    let mut out = vec![0.0; vocabulary.len()];
    if let Some(&i) = index.get(value) {
        out[i] = 1.0;
    }
    Ok(out)
}

/// A complete model input, laid out per a [`FeatureSchema`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Concatenates numerics and embedding blocks in schema order.
pub fn assemble_features(schema: &FeatureSchema, numerics: &[f64], blocks: &[&[f64]]) -> Result<FeatureVector, FeatureError> {
    if numerics.len() != schema.numeric_fields.len() {
        return Err(FeatureError::BlockDimMismatch {
            block: "numeric".into(),
            expected: schema.numeric_fields.len(),
            found: numerics.len(),
        });
    }
    if blocks.len() != schema.embedding_blocks.len() {
        return Err(FeatureError::BlockDimMismatch {
            block: "blocks".into(),
            expected: schema.embedding_blocks.len(),
            found: blocks.len(),
        });
    }
    let mut values = Vec::with_capacity(schema.total_dim());
    values.extend_from_slice(numerics);
    for ((name, dim), block) in schema.embedding_blocks.iter().zip(blocks) {
        if block.len() != *dim {
            return Err(FeatureError::BlockDimMismatch {
                block: name.clone(),
                expected: *dim,
                found: block.len(),
            });
        }
        values.extend_from_slice(block);
    }
    Ok(FeatureVector(values))
}

/// Month-of-year on the unit circle plus the calendar year, taken at the
/// period midpoint.
pub fn temporal_features(start: NaiveDate, end: NaiveDate) -> [f64; 3] {
    let mid = start + (end - start) / 2;
    let angle = 2.0 * PI * f64::from(mid.month0()) / 12.0;
    [angle.sin(), angle.cos(), f64::from(mid.year())]
}

/// A disease record joined with its period weather and embeddings, before
/// scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct RawExample {
    pub disease: String,
    pub period_start: NaiveDate,
    pub period_end: NaiveDate,
    /// Unscaled, in `FeatureSchema::standard` numeric order.
    pub numerics: Vec<f64>,
    /// Disease, symptoms, phrase.
    pub blocks: [Embedding; 3],
    pub sources: [EmbeddingSource; 3],
    pub target: f64,
}

/// Joins every disease record with its period weather and text embeddings.
/// Fails on the first record whose period has no weather at all.
pub fn collect_examples(
    records: &[DiseaseRecord],
    weather: &DailyIndex,
    merged: &[MergedHealthRecord],
    embedder: &Embedder,
) -> Result<Vec<RawExample>, FeatureError> {
    let profiles: HashMap<String, &MergedHealthRecord> =
        merged.iter().map(|m| (normalize_key(&m.profile.name), m)).collect();
    let dim = embedder.dim();
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        let period = weather
            .period(r.period_start, r.period_end)
            .ok_or_else(|| FeatureError::MissingWeather {
                disease: r.disease_name.clone(),
                start: r.period_start,
                end: r.period_end,
            })?;
        let mut numerics: Vec<f64> = period.stats.numeric_values().to_vec();
        numerics.extend(temporal_features(r.period_start, r.period_end));
        let (disease_vec, disease_src) = embedder.embed_text(&r.disease_name);
        let (symptom_vec, symptom_src) = match profiles.get(&normalize_key(&r.disease_name)) {
            Some(m) => embedder.embed_symptom_list(&m.profile.symptoms),
            None => (Embedding::zeros(dim), EmbeddingSource::Fallback),
        };
        let (phrase_vec, phrase_src) = embedder.embed_text(&period.stats.top_phrase);
        out.push(RawExample {
            disease: r.disease_name.clone(),
            period_start: r.period_start,
            period_end: r.period_end,
            numerics,
            blocks: [disease_vec, symptom_vec, phrase_vec],
            sources: [disease_src, symptom_src, phrase_src],
            target: r.value,
        });
    }
    Ok(out)
}

/// Fits a scaler on the numerics and targets of `examples`.
pub fn fit_on_examples(examples: &[RawExample]) -> Result<ScalerParams, FeatureError> {
    let rows: Vec<&[f64]> = examples.iter().map(|e| e.numerics.as_slice()).collect();
    let targets: Vec<f64> = examples.iter().map(|e| e.target).collect();
    fit_scaler(&rows, &targets)
}

/// Scales numerics, concatenates embeddings, and scales the target.
pub fn scale_example(schema: &FeatureSchema, scaler: &ScalerParams, e: &RawExample) -> Result<(FeatureVector, f64), FeatureError> {
    let numerics = scaler.apply(&e.numerics)?;
    let blocks: Vec<&[f64]> = e.blocks.iter().map(Embedding::values).collect();
    let fv = assemble_features(schema, &numerics, &blocks)?;
    Ok((fv, scaler.scale_target(e.target)))
}

/// One scaled training row per disease record, or `MissingWeather`.
pub fn build_training_rows(
    records: &[DiseaseRecord],
    weather: &DailyIndex,
    merged: &[MergedHealthRecord],
    embedder: &Embedder,
    schema: &FeatureSchema,
    scaler: &ScalerParams,
) -> Result<Vec<(FeatureVector, f64)>, FeatureError> {
    collect_examples(records, weather, merged, embedder)?
        .iter()
        .map(|e| scale_example(schema, scaler, e))
        .collect()
}

/// Feature matrix dump: one header naming every column, one line per row,
/// `target` last.
pub fn write_feature_dump(schema: &FeatureSchema, rows: &[(FeatureVector, f64)], w: &mut dyn Write) -> io::Result<()> {
    let mut header = schema.column_names();
    header.push("target".into());
    writeln!(w, "{}", header.join("\t"))?;
    for (fv, target) in rows {
        let mut line = String::with_capacity(fv.len() * 12);
        for v in fv.values() {
            line.push_str(&v.to_string());
            line.push('\t');
        }
        line.push_str(&target.to_string());
        writeln!(w, "{line}")?;
    }
    Ok(())
}
