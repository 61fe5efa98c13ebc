//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data or
//! validation error, 3 numeric failure during training.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate};
use clap::{Parser, Subcommand};

use crate::config::{load_config, Config};
use crate::embeddings::{load_cache, normalize_key, Embedder, EmbeddingCache};
use crate::evaluate::{
    export_plot_series, group_by_disease, leave_one_out_eval, save_metrics, schema_for, EvalError,
};
use crate::features::{collect_examples, fit_on_examples, scale_example, write_feature_dump, FeatureError, RawExample};
use crate::ingest::{
    merge_demographics, parse_demographics_records, parse_disease_table, parse_symptom_records, validate_dataset,
    DiseaseRecord, MergedHealthRecord, ValidationReport,
};
use crate::nn::{init_network, load_checkpoint, predict, save_checkpoint, train, NnError, TrainedModel, TrainingHistory};
use crate::tsv::atomic_write;
use crate::weather::{
    aggregate_day, load_daily_summaries, parse_observations, write_daily_summaries, DailyIndex, DailyWeatherSummary,
    FixtureProvider, StationKey, WeatherError, WeatherFetcher, NUMERIC_FIELDS,
};

#[derive(Debug, Parser)]
#[command(name = "outbreak", version, about = "Outbreak forecasting from disease, weather and symptom data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct ConfigArg {
    /// Path to the `key = value` configuration file.
    #[arg(long, short)]
    config: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate the disease table and the symptom and demographics records.
    Ingest {
        #[command(flatten)]
        config: ConfigArg,
        /// Also write the normalized keys an embedding exporter needs.
        #[arg(long)]
        emit_keys: bool,
    },
    /// Fill the observation cache for the configured station and date range.
    WeatherSync {
        #[command(flatten)]
        config: ConfigArg,
        /// Concurrent fetch workers.
        #[arg(long, default_value_t = 4)]
        workers: usize,
    },
    /// Reduce cached observations to the daily summary file.
    WeatherAggregate {
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Train on every disease (or all but one) and write a checkpoint.
    Train {
        #[command(flatten)]
        config: ConfigArg,
        /// Leave this disease out of training.
        #[arg(long)]
        hold_out: Option<String>,
    },
    /// Leave-one-disease-out evaluation.
    Evaluate {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        hold_out: String,
    },
    /// Predict every row of the disease table with a saved checkpoint.
    Predict {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Only predict this disease.
        #[arg(long)]
        disease: Option<String>,
    },
    /// Yearly weather trends from the daily summary file.
    PlotData {
        #[command(flatten)]
        config: ConfigArg,
    },
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => f.write_str(m),
        }
    }
}

fn data(context: impl fmt::Display) -> impl FnOnce(&dyn fmt::Display) -> CliError {
    move |e| CliError::Data(format!("{context}: {e}"))
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Network(n) => n.into(),
            EvalError::UnknownDisease(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        CliError::Data(e.to_string())
    }
}

/// Parses `argv` (program name first), runs the command, and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Ingest { config, emit_keys } => cmd_ingest(&open_config(&config)?, emit_keys),
        Command::WeatherSync { config, workers } => cmd_weather_sync(&open_config(&config)?, workers),
        Command::WeatherAggregate { config } => cmd_weather_aggregate(&open_config(&config)?),
        Command::Train { config, hold_out } => cmd_train(&open_config(&config)?, hold_out.as_deref()),
        Command::Evaluate { config, hold_out } => cmd_evaluate(&open_config(&config)?, &hold_out),
        Command::Predict {
            config,
            checkpoint,
            disease,
        } => cmd_predict(&open_config(&config)?, &checkpoint, disease.as_deref()),
        Command::PlotData { config } => cmd_plot_data(&open_config(&config)?),
    }
}

fn open_config(arg: &ConfigArg) -> Result<Config, CliError> {
    load_config(&arg.config).map_err(|e| CliError::Usage(format!("{}: {e}", arg.config.display())))
}

fn required<'a, T>(value: &'a Option<T>, key: &str) -> Result<&'a T, CliError> {
    value.as_ref().ok_or_else(|| CliError::Usage(format!("config key `{key}` is required for this command")))
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn output_dir(cfg: &Config) -> Result<PathBuf, CliError> {
    let dir = cfg.resolved_output_dir();
    fs::create_dir_all(&dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_file(path: &Path, fill: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), CliError> {
    atomic_write(path, fill).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn report_issues(source: &Path, report: &ValidationReport) {
    for w in &report.warnings {
        eprintln!("{}:{}: warning: {}", source.display(), w.line, w.message);
    }
    for e in &report.errors {
        eprintln!("{}:{}: error: {}", source.display(), e.line, e.message);
    }
}

/// Parsed and validated tabular inputs.
struct Inputs {
    records: Vec<DiseaseRecord>,
    merged: Vec<MergedHealthRecord>,
}

fn load_inputs(cfg: &Config) -> Result<Inputs, CliError> {
    let disease_path = required(&cfg.disease_file, "disease_file")?;
    let (records, mut report) = parse_disease_table(&read(disease_path)?).map_err(|e| data(disease_path.display())(&e))?;
    report.merge(validate_dataset(&records));
    report_issues(disease_path, &report);
    let mut failed = !report.is_clean();

    let profiles = match &cfg.symptom_file {
        Some(path) => {
            let (profiles, report) = parse_symptom_records(&read(path)?);
            report_issues(path, &report);
            failed |= !report.is_clean();
            profiles
        }
        None => Vec::new(),
    };
    let demographics = match &cfg.demographics_file {
        Some(path) => {
            let (demo, report) = parse_demographics_records(&read(path)?);
            report_issues(path, &report);
            failed |= !report.is_clean();
            demo
        }
        None => Vec::new(),
    };
    if failed {
        return Err(CliError::Data("input validation failed".into()));
    }
    let (merged, merge_report) = merge_demographics(&profiles, &demographics).map_err(|e| CliError::Data(e.to_string()))?;
    if let Some(path) = &cfg.demographics_file {
        report_issues(path, &merge_report);
    }
    eprintln!(
        "{} disease rows, {} symptom profiles, {} demographics records",
        records.len(),
        profiles.len(),
        demographics.len()
    );
    Ok(Inputs { records, merged })
}

fn load_embedder(cfg: &Config) -> Result<Embedder, CliError> {
    let cache = match &cfg.embedding_cache {
        Some(path) => load_cache(path).map_err(|e| data(path.display())(&e))?,
        None => EmbeddingCache::empty(cfg.embed_fallback_dim),
    };
    let embedder = Embedder::new(cache, cfg.embed_fallback_dim, cfg.embed_seed);
    eprintln!("embedding dim {}", embedder.dim());
    Ok(embedder)
}

fn load_weather(cfg: &Config) -> Result<DailyIndex, CliError> {
    let path = required(&cfg.weather_daily_file, "weather_daily_file")?;
    let days = load_daily_summaries(path).map_err(|e| data(path.display())(&e))?;
    eprintln!("{} daily weather summaries", days.len());
    Ok(DailyIndex::new(days))
}

fn load_examples(cfg: &Config) -> Result<Vec<RawExample>, CliError> {
    let inputs = load_inputs(cfg)?;
    let weather = load_weather(cfg)?;
    let embedder = load_embedder(cfg)?;
    Ok(collect_examples(&inputs.records, &weather, &inputs.merged, &embedder)?)
}

fn cmd_ingest(cfg: &Config, emit_keys: bool) -> Result<(), CliError> {
    let inputs = load_inputs(cfg)?;
    if !emit_keys {
        return Ok(());
    }
    let mut keys = BTreeSet::new();
    for r in &inputs.records {
        keys.insert(normalize_key(&r.disease_name));
    }
    for m in &inputs.merged {
        keys.extend(m.profile.symptoms.iter().map(|s| normalize_key(s)));
    }
    if let Some(path) = cfg.weather_daily_file.as_ref().filter(|p| p.exists()) {
        let days = load_daily_summaries(path).map_err(|e| data(path.display())(&e))?;
        keys.extend(days.iter().map(|d| normalize_key(&d.stats.top_phrase)));
    }
    keys.remove("");
    let out = output_dir(cfg)?.join("embedding_keys.txt");
    write_file(&out, |w| keys.iter().try_for_each(|k| writeln!(w, "{k}")))
}

fn station(cfg: &Config) -> Result<StationKey, CliError> {
    StationKey::new(required(&cfg.station, "station")?.clone()).map_err(|e| CliError::Usage(e.to_string()))
}

fn sync_range(cfg: &Config) -> Result<(NaiveDate, NaiveDate), CliError> {
    let start = *required(&cfg.sync_start, "sync_start")?;
    let end = *required(&cfg.sync_end, "sync_end")?;
    if start > end {
        return Err(CliError::Usage(format!("sync_start {start} is after sync_end {end}")));
    }
    Ok((start, end))
}

fn cmd_weather_sync(cfg: &Config, workers: usize) -> Result<(), CliError> {
    let station = station(cfg)?;
    let (start, end) = sync_range(cfg)?;
    let fixtures = required(&cfg.weather_fixture_dir, "weather_fixture_dir")?;
    let cache = required(&cfg.weather_cache_dir, "weather_cache_dir")?;
    let mut fetcher = WeatherFetcher::new(FixtureProvider::new(fixtures), cache);
    if let Some(rate) = cfg.requests_per_second {
        fetcher = fetcher.with_rate_limit(rate);
    }
    let results = fetcher.fetch_range(&station, start, end, workers);
    let mut failures = 0;
    let mut fetched = 0;
    for (date, result) in &results {
        match result {
            Ok(_) => fetched += 1,
            Err(WeatherError::EmptyDay { .. }) => eprintln!("{date}: no observations"),
            Err(e) => {
                failures += 1;
                eprintln!("{date}: {e}");
            }
        }
    }
    eprintln!("{station}: {fetched} of {} days cached", results.len());
    if failures > 0 {
        return Err(CliError::Data(format!("{failures} days could not be fetched")));
    }
    Ok(())
}

fn cmd_weather_aggregate(cfg: &Config) -> Result<(), CliError> {
    let station = station(cfg)?;
    let (start, end) = sync_range(cfg)?;
    let cache = required(&cfg.weather_cache_dir, "weather_cache_dir")?;
    let mut days: Vec<DailyWeatherSummary> = Vec::new();
    for date in start.iter_days().take_while(|d| *d <= end) {
        let path = crate::weather::day_path(cache, &station, date);
        let content = match fs::read_to_string(&path) {
            Ok(c) => c,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                eprintln!("{date}: not in cache, skipped");
                continue;
            }
            Err(e) => return Err(CliError::Data(format!("{}: {e}", path.display()))),
        };
        let obs = parse_observations(&content, &path.display().to_string()).map_err(|e| CliError::Data(e.to_string()))?;
        if obs.is_empty() {
            eprintln!("{date}: no observations, skipped");
            continue;
        }
        days.push(aggregate_day(&obs, date).map_err(|e| data(path.display())(&e))?);
    }
    if days.is_empty() {
        return Err(CliError::Data("no cached days to aggregate".into()));
    }
    let out = match &cfg.weather_daily_file {
        Some(p) => p.clone(),
        None => output_dir(cfg)?.join("weather_daily.tsv"),
    };
    eprintln!("{} daily summaries", days.len());
    write_file(&out, |w| write_daily_summaries(&days, w))
}

fn write_history(path: &Path, history: &TrainingHistory) -> Result<(), CliError> {
    write_file(path, |w| {
        writeln!(w, "epoch\tdata_loss\tregularized_loss")?;
        for (i, e) in history.epochs.iter().enumerate() {
            writeln!(w, "{}\t{}\t{}", i + 1, e.data, e.regularized)?;
        }
        Ok(())
    })
}

fn log_training(history: &TrainingHistory) {
    if let Some(last) = history.final_loss() {
        eprintln!(
            "{} epochs, {} steps, final loss {:.6e} (regularized {:.6e})",
            history.epochs.len(),
            history.steps,
            last.data,
            last.regularized
        );
    }
}

fn cmd_train(cfg: &Config, hold_out: Option<&str>) -> Result<(), CliError> {
    let mut examples = load_examples(cfg)?;
    if let Some(name) = hold_out {
        let key = normalize_key(name);
        let before = examples.len();
        examples.retain(|e| normalize_key(&e.disease) != key);
        if examples.len() == before {
            return Err(CliError::Usage(format!("disease {name:?} not present")));
        }
    }
    let first = examples.first().ok_or_else(|| CliError::Data("no training rows".into()))?;
    let schema = schema_for(first);
    let scaler = fit_on_examples(&examples)?;
    let rows = examples
        .iter()
        .map(|e| scale_example(&schema, &scaler, e))
        .collect::<Result<Vec<_>, _>>()?;
    let hyper = &cfg.pipeline.hyper;
    let mut network = init_network(&cfg.pipeline.architecture(schema.total_dim()), hyper.seed)?;
    eprintln!("training {:?} on {} rows", network.layer_sizes(), rows.len());
    let history = train(&mut network, &rows, hyper)?;
    log_training(&history);

    let out = output_dir(cfg)?;
    write_file(&out.join("features.tsv"), |w| write_feature_dump(&schema, &rows, w))?;
    write_history(&out.join("training_loss.tsv"), &history)?;
    let model = TrainedModel { network, scaler };
    let ckpt = out.join("model.ckpt");
    save_checkpoint(&model, &ckpt).map_err(|e| data(ckpt.display())(&e))?;
    eprintln!("wrote {}", ckpt.display());
    Ok(())
}

fn cmd_evaluate(cfg: &Config, hold_out: &str) -> Result<(), CliError> {
    let datasets = group_by_disease(load_examples(cfg)?);
    let held = normalize_key(hold_out);
    if !datasets.contains_key(&held) {
        return Err(CliError::Usage(format!("disease {hold_out:?} not present")));
    }
    eprintln!(
        "holding out {held:?}; training on {} other diseases for {} epochs",
        datasets.len().saturating_sub(1),
        cfg.pipeline.hyper.epochs
    );
    let outcome = leave_one_out_eval(&datasets, &held, &cfg.pipeline)?;
    log_training(&outcome.history);
    let m = outcome.result.metrics;
    eprintln!("{held}: n={} MAE {:.4} RMSE {:.4} R² {:.4}", m.n, m.mae, m.rmse, m.r_squared);

    let out = output_dir(cfg)?;
    let metrics_path = out.join("metrics.tsv");
    save_metrics(&m, &metrics_path).map_err(|e| data(metrics_path.display())(&e))?;
    eprintln!("wrote {}", metrics_path.display());
    let plot = out.join("plot_series.tsv");
    export_plot_series(&outcome.result, &plot)?;
    eprintln!("wrote {}", plot.display());
    write_history(&out.join("training_loss.tsv"), &outcome.history)?;
    let ckpt = out.join("model.ckpt");
    save_checkpoint(&outcome.model, &ckpt).map_err(|e| data(ckpt.display())(&e))?;
    eprintln!("wrote {}", ckpt.display());
    Ok(())
}

fn cmd_predict(cfg: &Config, checkpoint: &Path, disease: Option<&str>) -> Result<(), CliError> {
    let model = load_checkpoint(checkpoint).map_err(|e| data(checkpoint.display())(&e))?;
    let mut examples = load_examples(cfg)?;
    if let Some(name) = disease {
        let key = normalize_key(name);
        examples.retain(|e| normalize_key(&e.disease) == key);
        if examples.is_empty() {
            return Err(CliError::Usage(format!("disease {name:?} not present")));
        }
    }
    let first = examples.first().ok_or_else(|| CliError::Data("no rows to predict".into()))?;
    let schema = schema_for(first);
    if schema.total_dim() != model.network.input_dim() || schema.numeric_fields.len() != model.scaler.field_count() {
        return Err(CliError::Data(format!(
            "checkpoint expects {} inputs, the configured features have {}",
            model.network.input_dim(),
            schema.total_dim()
        )));
    }
    let mut rows = Vec::with_capacity(examples.len());
    for e in &examples {
        let (x, _) = scale_example(&schema, &model.scaler, e)?;
        rows.push((e, predict(&model.network, &model.scaler, x.values())?));
    }
    rows.sort_by(|a, b| (&a.0.disease, a.0.period_start).cmp(&(&b.0.disease, b.0.period_start)));
    let out = output_dir(cfg)?.join("predictions.tsv");
    write_file(&out, |w| {
        writeln!(w, "disease\tperiod_start\tperiod_end\tactual\tpredicted")?;
        for (e, p) in &rows {
            writeln!(w, "{}\t{}\t{}\t{}\t{}", e.disease, e.period_start, e.period_end, e.target, p)?;
        }
        Ok(())
    })
}

fn cmd_plot_data(cfg: &Config) -> Result<(), CliError> {
    let weather = load_weather(cfg)?;
    if weather.is_empty() {
        return Err(CliError::Data("daily weather file has no rows".into()));
    }
    let mut years: Vec<(i32, Vec<[f64; 10]>)> = Vec::new();
    for day in weather.iter() {
        let values = day.stats.numeric_values();
        match years.last_mut() {
            Some((y, rows)) if *y == day.date.year() => rows.push(values),
            _ => years.push((day.date.year(), vec![values])),
        }
    }
    let out = output_dir(cfg)?.join("weather_trends.tsv");
    write_file(&out, |w| {
        writeln!(w, "period_start\tdays\t{}", NUMERIC_FIELDS.join("\t"))?;
        for (year, rows) in &years {
            let n = rows.len() as f64;
            let means: Vec<String> = (0..NUMERIC_FIELDS.len())
                .map(|i| (rows.iter().map(|r| r[i]).sum::<f64>() / n).to_string())
                .collect();
            writeln!(w, "{year}-01-01\t{}\t{}", rows.len(), means.join("\t"))?;
        }
        Ok(())
    })
}
