//! Weather acquisition and aggregation.
//!
//! Raw observations are pulled per (station, local date) through an
//! [`ObservationProvider`] and cached one TSV file per day under
//! `<cache>/<station>/<YYYY-MM-DD>.tsv`. Days reduce to a 14-column
//! [`DailyWeatherSummary`]; days roll up to a [`PeriodWeatherSummary`] aligned
//! with a disease reporting period.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use chrono::{DateTime, FixedOffset, NaiveDate, SecondsFormat};
use thiserror::Error;

use crate::tsv::atomic_write;

pub const OBSERVATION_HEADER: [&str; 12] = [
    "timestamp",
    "temp_c",
    "phrase",
    "wind_mph",
    "wind_deg",
    "wind_dir",
    "pressure",
    "dew_point_c",
    "heat_index_c",
    "visibility_km",
    "cloud_cover",
    "uv_index",
];

pub const DAILY_HEADER: [&str; 14] = [
    "Date",
    "Average Temperature (C)",
    "Average Temperature (F)",
    "Most Repeated Weather Phrase",
    "Average Wind Speed (mph)",
    "Average Wind Speed (kph)",
    "Average Wind Degree",
    "Most Repeated Wind Direction",
    "Average Pressure",
    "Average Dew Point",
    "Average Heat Index",
    "Average Visibility",
    "Most Repeated Cloud Cover",
    "Average UV Index",
];

/// Names of the ten numeric aggregates, in feature order.
pub const NUMERIC_FIELDS: [&str; 10] = [
    "avg_temp_c",
    "avg_temp_f",
    "avg_wind_mph",
    "avg_wind_kph",
    "avg_wind_deg",
    "avg_pressure",
    "avg_dew_point",
    "avg_heat_index",
    "avg_visibility",
    "avg_uv_index",
];

const MPH_TO_KPH: f64 = 1.609344;

#[derive(Debug, Error)]
pub enum WeatherError {
    #[error("no observations to aggregate")]
    EmptyInput,
    #[error("observation {index} is dated {found}, expected {expected}")]
    DateMismatch {
        index: usize,
        expected: NaiveDate,
        found: NaiveDate,
    },
    #[error("day {day} lies outside {start}..{end}")]
    OutOfRangeDay {
        day: NaiveDate,
        start: NaiveDate,
        end: NaiveDate,
    },
    #[error("no observation carries a value for {0}")]
    MissingField(&'static str),
    #[error("negative wind speed {0}")]
    NegativeSpeed(f64),
    #[error("provider unavailable for {station} on {date}: {reason}")]
    ProviderUnavailable {
        station: String,
        date: NaiveDate,
        reason: String,
    },
    #[error("no observations for {station} on {date}")]
    EmptyDay { station: String, date: NaiveDate },
    #[error("{source_name}:{line}: {reason}")]
    BadRow {
        source_name: String,
        line: usize,
        reason: String,
    },
    #[error("station key must be non-empty")]
    EmptyStation,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StationKey(String);

impl StationKey {
    pub fn new(key: impl Into<String>) -> Result<Self, WeatherError> {
        let key = key.into();
        if key.trim().is_empty() {
            return Err(WeatherError::EmptyStation);
        }
        Ok(Self(key))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for StationKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One raw reading. Numeric fields are `None` when the source left them blank;
/// blank text fields are empty strings.
#[derive(Debug, Clone, PartialEq)]
pub struct WeatherObservation {
    pub timestamp: DateTime<FixedOffset>,
    pub temp_c: Option<f64>,
    pub phrase: String,
    pub wind_mph: Option<f64>,
    pub wind_deg: Option<f64>,
    pub wind_dir: String,
    pub pressure: Option<f64>,
    pub dew_point_c: Option<f64>,
    pub heat_index_c: Option<f64>,
    pub visibility_km: Option<f64>,
    pub cloud_cover: String,
    pub uv_index: Option<f64>,
}

impl WeatherObservation {
    /// Station-local calendar date.
    pub fn local_date(&self) -> NaiveDate {
        self.timestamp.date_naive()
    }
}

fn clean_text(s: &str) -> String {
    s.split(['\t', '\n', '\r']).collect::<Vec<_>>().join(" ").trim().to_string()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_observations(obs: &[WeatherObservation], w: &mut dyn Write) -> io::Result<()> {
    writeln!(w, "{}", OBSERVATION_HEADER.join("\t"))?;
    for o in obs {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            o.timestamp.to_rfc3339_opts(SecondsFormat::AutoSi, false),
            fmt_opt(o.temp_c),
            clean_text(&o.phrase),
            fmt_opt(o.wind_mph),
            fmt_opt(o.wind_deg),
            clean_text(&o.wind_dir),
            fmt_opt(o.pressure),
            fmt_opt(o.dew_point_c),
            fmt_opt(o.heat_index_c),
            fmt_opt(o.visibility_km),
            clean_text(&o.cloud_cover),
            fmt_opt(o.uv_index),
        )?;
    }
    Ok(())
}

fn parse_opt(field: &str, name: &str, nonnegative: bool) -> Result<Option<f64>, String> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(None);
    }
    let v: f64 = field.parse().map_err(|_| format!("bad {name} {field:?}"))?;
    if !v.is_finite() {
        return Err(format!("non-finite {name}"));
    }
    if nonnegative && v < 0.0 {
        return Err(format!("negative {name}"));
    }
    Ok(Some(v))
}

fn parse_observation_row(fields: &[&str]) -> Result<WeatherObservation, String> {
    if fields.len() != OBSERVATION_HEADER.len() {
        return Err(format!("expected {} fields, found {}", OBSERVATION_HEADER.len(), fields.len()));
    }
    let timestamp = DateTime::parse_from_rfc3339(fields[0].trim())
        .map_err(|_| format!("bad timestamp {:?}", fields[0]))?;
    let wind_deg = parse_opt(fields[4], "wind_deg", true)?;
    if matches!(wind_deg, Some(d) if d >= 360.0) {
        return Err("wind_deg outside [0,360)".into());
    }
    Ok(WeatherObservation {
        timestamp,
        temp_c: parse_opt(fields[1], "temp_c", false)?,
        phrase: fields[2].trim().to_string(),
        wind_mph: parse_opt(fields[3], "wind_mph", true)?,
        wind_deg,
        wind_dir: fields[5].trim().to_string(),
        pressure: parse_opt(fields[6], "pressure", false)?,
        dew_point_c: parse_opt(fields[7], "dew_point_c", false)?,
        heat_index_c: parse_opt(fields[8], "heat_index_c", false)?,
        visibility_km: parse_opt(fields[9], "visibility_km", true)?,
        cloud_cover: fields[10].trim().to_string(),
        uv_index: parse_opt(fields[11], "uv_index", true)?,
    })
}

/// Parses the raw observation TSV used by fixtures and the cache.
pub fn parse_observations(content: &str, source_name: &str) -> Result<Vec<WeatherObservation>, WeatherError> {
    let bad = |line: usize, reason: String| WeatherError::BadRow {
        source_name: source_name.to_string(),
        line,
        reason,
    };
    let mut lines = content.lines();
    let header = lines.next().unwrap_or_default().trim_end_matches('\r');
    if header.split('\t').ne(OBSERVATION_HEADER) {
        return Err(bad(1, "unexpected header".into()));
    }
    let mut out = Vec::new();
    for (idx, raw) in lines.enumerate() {
        let raw = raw.trim_end_matches('\r');
        if raw.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        out.push(parse_observation_row(&fields).map_err(|r| bad(idx + 2, r))?);
    }
    Ok(out)
}

/// Why a provider request failed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderError {
    /// Worth retrying.
    Transient(String),
    /// Retrying will not help.
    Permanent(String),
}

impl fmt::Display for ProviderError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProviderError::Transient(m) => write!(f, "transient: {m}"),
            ProviderError::Permanent(m) => write!(f, "permanent: {m}"),
        }
    }
}

/// Source of raw observations for one station-local day.
pub trait ObservationProvider: Send + Sync {
    fn fetch(&self, station: &StationKey, date: NaiveDate) -> Result<Vec<WeatherObservation>, ProviderError>;
}

/// Serves observation files laid out like the cache:
/// `<root>/<station>/<YYYY-MM-DD>.tsv`.
#[derive(Debug, Clone)]
pub struct FixtureProvider {
    root: PathBuf,
}

impl FixtureProvider {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
}

impl ObservationProvider for FixtureProvider {
    fn fetch(&self, station: &StationKey, date: NaiveDate) -> Result<Vec<WeatherObservation>, ProviderError> {
        let path = day_path(&self.root, station, date);
        let content = match fs::read_to_string(&path) {
            Ok(c) => c,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(ProviderError::Permanent(format!("{} not found", path.display())))
            }
            Err(e) => return Err(ProviderError::Transient(e.to_string())),
        };
        parse_observations(&content, &path.display().to_string()).map_err(|e| ProviderError::Permanent(e.to_string()))
    }
}

pub fn day_path(root: &Path, station: &StationKey, date: NaiveDate) -> PathBuf {
    root.join(station.as_str()).join(format!("{}.tsv", date.format("%Y-%m-%d")))
}

/// Delays slept before each retry; the number of retries is the list length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetryPolicy {
    pub delays: Vec<Duration>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            delays: vec![Duration::from_secs(1), Duration::from_secs(2), Duration::from_secs(4)],
        }
    }
}

impl RetryPolicy {
    pub fn no_retry() -> Self {
        Self { delays: Vec::new() }
    }
}

/// Spaces requests at least `1 / requests_per_second` apart.
#[derive(Debug)]
struct RateLimiter {
    interval: Duration,
    next_slot: Mutex<Option<Instant>>,
}

impl RateLimiter {
    fn new(requests_per_second: f64) -> Self {
        let interval = if requests_per_second.is_finite() && requests_per_second > 0.0 {
            Duration::from_secs_f64(1.0 / requests_per_second)
        } else {
            Duration::ZERO
        };
        Self {
            interval,
            next_slot: Mutex::new(None),
        }
    }

    fn acquire(&self) {
        if self.interval.is_zero() {
            return;
        }
        let wait = {
            let mut slot = self.next_slot.lock().unwrap();
            let now = Instant::now();
            let start = slot.map_or(now, |s| s.max(now));
            *slot = Some(start + self.interval);
            start - now
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }
}

type DayLocks = Mutex<HashMap<(StationKey, NaiveDate), Arc<Mutex<()>>>>;

/// Cache-first observation fetching with retries and a request rate ceiling.
pub struct WeatherFetcher<P> {
    provider: P,
    cache_dir: PathBuf,
    retry: RetryPolicy,
    limiter: RateLimiter,
    day_locks: DayLocks,
}

impl<P: ObservationProvider> WeatherFetcher<P> {
    pub fn new(provider: P, cache_dir: impl Into<PathBuf>) -> Self {
        Self {
            provider,
            cache_dir: cache_dir.into(),
            retry: RetryPolicy::default(),
            limiter: RateLimiter::new(f64::INFINITY),
            day_locks: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_rate_limit(mut self, requests_per_second: f64) -> Self {
        self.limiter = RateLimiter::new(requests_per_second);
        self
    }

    pub fn provider(&self) -> &P {
        &self.provider
    }

    pub fn cache_path(&self, station: &StationKey, date: NaiveDate) -> PathBuf {
        day_path(&self.cache_dir, station, date)
    }

    fn day_lock(&self, station: &StationKey, date: NaiveDate) -> Arc<Mutex<()>> {
        let mut locks = self.day_locks.lock().unwrap();
        locks.entry((station.clone(), date)).or_default().clone()
    }

    fn request(&self, station: &StationKey, date: NaiveDate) -> Result<Vec<WeatherObservation>, WeatherError> {
        let mut delays = self.retry.delays.iter();
        loop {
            self.limiter.acquire();
            let reason = match self.provider.fetch(station, date) {
                Ok(obs) => return Ok(obs),
                Err(ProviderError::Transient(r)) => r,
                Err(ProviderError::Permanent(r)) => {
                    return Err(WeatherError::ProviderUnavailable {
                        station: station.to_string(),
                        date,
                        reason: r,
                    })
                }
            };
            match delays.next() {
                Some(d) => thread::sleep(*d),
                None => {
                    return Err(WeatherError::ProviderUnavailable {
                        station: station.to_string(),
                        date,
                        reason,
                    })
                }
            }
        }
    }

    /// All observations for `station` on `date`, read from the cache when
    /// present. A provider response is written to the cache before it is
    /// returned; days with no observations are cached as header-only files
    /// and reported as [`WeatherError::EmptyDay`].
    pub fn fetch_observations(&self, station: &StationKey, date: NaiveDate) -> Result<Vec<WeatherObservation>, WeatherError> {
        let lock = self.day_lock(station, date);
        let _guard = lock.lock().unwrap();
        let path = self.cache_path(station, date);
        let obs = match fs::read_to_string(&path) {
            Ok(content) => parse_observations(&content, &path.display().to_string())?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                let fetched = self.request(station, date)?;
                let mut bytes = Vec::new();
                write_observations(&fetched, &mut bytes)?;
                atomic_write(&path, |w| w.write_all(&bytes))?;
                parse_observations(&String::from_utf8_lossy(&bytes), &path.display().to_string())?
            }
            Err(e) => return Err(e.into()),
        };
        if obs.is_empty() {
            return Err(WeatherError::EmptyDay {
                station: station.to_string(),
                date,
            });
        }
        Ok(obs)
    }

    /// Fetches every date in `[start, end]` using up to `workers` threads.
    /// Results are returned in date order.
    pub fn fetch_range(
        &self,
        station: &StationKey,
        start: NaiveDate,
        end: NaiveDate,
        workers: usize,
    ) -> Vec<(NaiveDate, Result<Vec<WeatherObservation>, WeatherError>)> {
        let dates: Vec<NaiveDate> = start.iter_days().take_while(|d| *d <= end).collect();
        let workers = workers.clamp(1, dates.len().max(1));
        let chunk = dates.len().div_ceil(workers).max(1);
        let mut out: Vec<_> = thread::scope(|s| {
            let handles: Vec<_> = dates
                .chunks(chunk)
                .map(|part| {
                    s.spawn(move || {
                        part.iter()
                            .map(|&d| (d, self.fetch_observations(station, d)))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles.into_iter().flat_map(|h| h.join().unwrap()).collect()
        });
        out.sort_by_key(|(d, _)| *d);
        out
    }
}

pub fn celsius_to_fahrenheit(c: f64) -> f64 {
    c * 9.0 / 5.0 + 32.0
}

pub fn mph_to_kph(v: f64) -> Result<f64, WeatherError> {
    if v < 0.0 {
        return Err(WeatherError::NegativeSpeed(v));
    }
    Ok(v * MPH_TO_KPH)
}

/// Most frequent value; ties go to the lexicographically smallest.
pub fn mode_categorical<S: AsRef<str>>(values: &[S]) -> Result<String, WeatherError> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for v in values {
        *counts.entry(v.as_ref()).or_default() += 1;
    }
    let mut best: Option<(&str, usize)> = None;
    // BTreeMap iterates in ascending order, so a strict `>` keeps the smallest on ties.
    for (value, count) in counts {
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((value, count));
        }
    }
    best.map(|(v, _)| v.to_string()).ok_or(WeatherError::EmptyInput)
}

/// Mode over non-empty values, or empty text when none are present.
fn mode_present<'a>(values: impl Iterator<Item = &'a str>) -> String {
    let present: Vec<&str> = values.filter(|v| !v.is_empty()).collect();
    mode_categorical(&present).unwrap_or_default()
}

fn mean_present(values: impl Iterator<Item = Option<f64>>, field: &'static str) -> Result<f64, WeatherError> {
    let (sum, n) = values.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        return Err(WeatherError::MissingField(field));
    }
    Ok(sum / n as f64)
}

/// Aggregated weather over a day or a period.
#[derive(Debug, Clone, PartialEq)]
pub struct WeatherStats {
    pub avg_temp_c: f64,
    pub avg_temp_f: f64,
    pub top_phrase: String,
    pub avg_wind_mph: f64,
    pub avg_wind_kph: f64,
    pub avg_wind_deg: f64,
    pub top_wind_dir: String,
    pub avg_pressure: f64,
    pub avg_dew_point: f64,
    pub avg_heat_index: f64,
    pub avg_visibility: f64,
    pub top_cloud_cover: String,
    pub avg_uv_index: f64,
}

impl WeatherStats {
    /// Values in [`NUMERIC_FIELDS`] order.
    pub fn numeric_values(&self) -> [f64; 10] {
        [
            self.avg_temp_c,
            self.avg_temp_f,
            self.avg_wind_mph,
            self.avg_wind_kph,
            self.avg_wind_deg,
            self.avg_pressure,
            self.avg_dew_point,
            self.avg_heat_index,
            self.avg_visibility,
            self.avg_uv_index,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DailyWeatherSummary {
    pub date: NaiveDate,
    pub stats: WeatherStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodWeatherSummary {
    pub period_start: NaiveDate,
    pub period_end: NaiveDate,
    pub day_count: usize,
    pub stats: WeatherStats,
}

/// Reduces one day's observations: field-wise means over present values,
/// modes for text fields, Fahrenheit and kph derived from the means.
///
/// Wind degree is a plain arithmetic mean, not a circular one.
pub fn aggregate_day(obs: &[WeatherObservation], date: NaiveDate) -> Result<DailyWeatherSummary, WeatherError> {
    if obs.is_empty() {
        return Err(WeatherError::EmptyInput);
    }
    if let Some((index, o)) = obs.iter().enumerate().find(|(_, o)| o.local_date() != date) {
        return Err(WeatherError::DateMismatch {
            index,
            expected: date,
            found: o.local_date(),
        });
    }
    let avg_temp_c = mean_present(obs.iter().map(|o| o.temp_c), "temp_c")?;
    let avg_wind_mph = mean_present(obs.iter().map(|o| o.wind_mph), "wind_mph")?;
    Ok(DailyWeatherSummary {
        date,
        stats: WeatherStats {
            avg_temp_c,
            avg_temp_f: celsius_to_fahrenheit(avg_temp_c),
            top_phrase: mode_present(obs.iter().map(|o| o.phrase.as_str())),
            avg_wind_mph,
            avg_wind_kph: mph_to_kph(avg_wind_mph)?,
            avg_wind_deg: mean_present(obs.iter().map(|o| o.wind_deg), "wind_deg")?,
            top_wind_dir: mode_present(obs.iter().map(|o| o.wind_dir.as_str())),
            avg_pressure: mean_present(obs.iter().map(|o| o.pressure), "pressure")?,
            avg_dew_point: mean_present(obs.iter().map(|o| o.dew_point_c), "dew_point_c")?,
            avg_heat_index: mean_present(obs.iter().map(|o| o.heat_index_c), "heat_index_c")?,
            avg_visibility: mean_present(obs.iter().map(|o| o.visibility_km), "visibility_km")?,
            top_cloud_cover: mode_present(obs.iter().map(|o| o.cloud_cover.as_str())),
            avg_uv_index: mean_present(obs.iter().map(|o| o.uv_index), "uv_index")?,
        },
    })
}

/// Rolls daily summaries up to a period. Each day counts once regardless of
/// how many observations produced it.
pub fn aggregate_period(
    days: &[DailyWeatherSummary],
    period_start: NaiveDate,
    period_end: NaiveDate,
) -> Result<PeriodWeatherSummary, WeatherError> {
    if days.is_empty() {
        return Err(WeatherError::EmptyInput);
    }
    if let Some(d) = days.iter().find(|d| d.date < period_start || d.date > period_end) {
        return Err(WeatherError::OutOfRangeDay {
            day: d.date,
            start: period_start,
            end: period_end,
        });
    }
    let n = days.len() as f64;
    let mean = |f: fn(&WeatherStats) -> f64| days.iter().map(|d| f(&d.stats)).sum::<f64>() / n;
    let avg_temp_c = mean(|s| s.avg_temp_c);
    let avg_wind_mph = mean(|s| s.avg_wind_mph);
    Ok(PeriodWeatherSummary {
        period_start,
        period_end,
        day_count: days.len(),
        stats: WeatherStats {
            avg_temp_c,
            avg_temp_f: celsius_to_fahrenheit(avg_temp_c),
            top_phrase: mode_present(days.iter().map(|d| d.stats.top_phrase.as_str())),
            avg_wind_mph,
            avg_wind_kph: mph_to_kph(avg_wind_mph)?,
            avg_wind_deg: mean(|s| s.avg_wind_deg),
            top_wind_dir: mode_present(days.iter().map(|d| d.stats.top_wind_dir.as_str())),
            avg_pressure: mean(|s| s.avg_pressure),
            avg_dew_point: mean(|s| s.avg_dew_point),
            avg_heat_index: mean(|s| s.avg_heat_index),
            avg_visibility: mean(|s| s.avg_visibility),
            top_cloud_cover: mode_present(days.iter().map(|d| d.stats.top_cloud_cover.as_str())),
            avg_uv_index: mean(|s| s.avg_uv_index),
        },
    })
}

/// Daily summaries indexed by date.
#[derive(Debug, Clone, Default)]
pub struct DailyIndex {
    days: BTreeMap<NaiveDate, DailyWeatherSummary>,
}

impl DailyIndex {
    pub fn new(days: impl IntoIterator<Item = DailyWeatherSummary>) -> Self {
        Self {
            days: days.into_iter().map(|d| (d.date, d)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &DailyWeatherSummary> {
        self.days.values()
    }

    /// Period summary over whichever days in `[start, end]` are present, or
    /// `None` when no day is.
    pub fn period(&self, start: NaiveDate, end: NaiveDate) -> Option<PeriodWeatherSummary> {
        if start > end {
            return None;
        }
        let days: Vec<DailyWeatherSummary> = self.days.range(start..=end).map(|(_, d)| d.clone()).collect();
        aggregate_period(&days, start, end).ok()
    }
}

pub fn write_daily_summaries(days: &[DailyWeatherSummary], w: &mut dyn Write) -> io::Result<()> {
    writeln!(w, "{}", DAILY_HEADER.join("\t"))?;
    for d in days {
        let s = &d.stats;
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            d.date,
            s.avg_temp_c,
            s.avg_temp_f,
            clean_text(&s.top_phrase),
            s.avg_wind_mph,
            s.avg_wind_kph,
            s.avg_wind_deg,
            clean_text(&s.top_wind_dir),
            s.avg_pressure,
            s.avg_dew_point,
            s.avg_heat_index,
            s.avg_visibility,
            clean_text(&s.top_cloud_cover),
            s.avg_uv_index,
        )?;
    }
    Ok(())
}

pub fn parse_daily_summaries(content: &str, source_name: &str) -> Result<Vec<DailyWeatherSummary>, WeatherError> {
    let bad = |line: usize, reason: String| WeatherError::BadRow {
        source_name: source_name.to_string(),
        line,
        reason,
    };
    let mut lines = content.lines();
    let header = lines.next().unwrap_or_default().trim_end_matches('\r');
    if header.split('\t').ne(DAILY_HEADER) {
        return Err(bad(1, "unexpected header".into()));
    }
    let mut out = Vec::new();
    for (idx, raw) in lines.enumerate() {
        let line = idx + 2;
        let raw = raw.trim_end_matches('\r');
        if raw.is_empty() {
            continue;
        }
        let f: Vec<&str> = raw.split('\t').collect();
        if f.len() != DAILY_HEADER.len() {
            return Err(bad(line, format!("expected 14 fields, found {}", f.len())));
        }
        let num = |i: usize| -> Result<f64, WeatherError> {
            match f[i].trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(bad(line, format!("bad {} {:?}", DAILY_HEADER[i], f[i]))),
            }
        };
        let date = NaiveDate::parse_from_str(f[0].trim(), "%Y-%m-%d").map_err(|_| bad(line, format!("bad date {:?}", f[0])))?;
        out.push(DailyWeatherSummary {
            date,
            stats: WeatherStats {
                avg_temp_c: num(1)?,
                avg_temp_f: num(2)?,
                top_phrase: f[3].trim().to_string(),
                avg_wind_mph: num(4)?,
                avg_wind_kph: num(5)?,
                avg_wind_deg: num(6)?,
                top_wind_dir: f[7].trim().to_string(),
                avg_pressure: num(8)?,
                avg_dew_point: num(9)?,
                avg_heat_index: num(10)?,
                avg_visibility: num(11)?,
                top_cloud_cover: f[12].trim().to_string(),
                avg_uv_index: num(13)?,
            },
        });
    }
    Ok(out)
}

pub fn load_daily_summaries(path: &Path) -> Result<Vec<DailyWeatherSummary>, WeatherError> {
    let content = fs::read_to_string(path)?;
    parse_daily_summaries(&content, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    fn obs(hour: u32, temp: f64, phrase: &str) -> WeatherObservation {
        let ts = format!("2019-01-01T{hour:02}:30:00+05:30");
        WeatherObservation {
            timestamp: DateTime::parse_from_rfc3339(&ts).unwrap(),
            temp_c: Some(temp),
            phrase: phrase.into(),
            wind_mph: Some(5.0),
            wind_deg: Some(90.0),
            wind_dir: "E".into(),
            pressure: Some(1012.0),
            dew_point_c: Some(8.0),
            heat_index_c: Some(temp),
            visibility_km: Some(3.0),
            cloud_cover: "Partly Cloudy".into(),
            uv_index: Some(2.0),
        }
    }

    #[test]
    fn conversions() {
        assert_eq!(celsius_to_fahrenheit(0.0), 32.0);
        assert_eq!(celsius_to_fahrenheit(-40.0), -40.0);
        assert!((celsius_to_fahrenheit(37.0) - 98.6).abs() < 1e-12);
        assert_eq!(mph_to_kph(0.0).unwrap(), 0.0);
        assert!((mph_to_kph(10.0).unwrap() - 16.09344).abs() < 1e-12);
        assert!((mph_to_kph(100.0).unwrap() - 160.9344).abs() < 1e-12);
        assert!(matches!(mph_to_kph(-1.0), Err(WeatherError::NegativeSpeed(_))));
    }

    #[test]
    fn mode_examples() {
        assert_eq!(mode_categorical(&["Haze", "Haze", "Fair"]).unwrap(), "Haze");
        assert_eq!(mode_categorical(&["Fair", "Haze"]).unwrap(), "Fair");
        assert_eq!(mode_categorical(&["Haze", "Fair"]).unwrap(), "Fair");
        assert_eq!(mode_categorical(&["Fog"]).unwrap(), "Fog");
        let empty: [&str; 0] = [];
        assert!(matches!(mode_categorical(&empty), Err(WeatherError::EmptyInput)));
    }

    #[test]
    fn aggregate_day_examples() {
        let day = date(2019, 1, 1);
        let s = aggregate_day(&[obs(1, 10.0, "Haze"), obs(2, 20.0, "Fair"), obs(3, 30.0, "Haze")], day).unwrap();
        assert!((s.stats.avg_temp_c - 20.0).abs() < 1e-12);
        assert!((s.stats.avg_temp_f - 68.0).abs() < 1e-12);
        assert_eq!(s.stats.top_phrase, "Haze");

        let single = obs(4, 12.5, "Mist");
        let s = aggregate_day(std::slice::from_ref(&single), day).unwrap();
        assert_eq!(s.stats.avg_temp_c, 12.5);
        assert_eq!(s.stats.avg_pressure, 1012.0);
        assert_eq!(s.stats.top_phrase, "Mist");
        assert_eq!(s.stats.top_wind_dir, "E");

        assert!(matches!(aggregate_day(&[], day), Err(WeatherError::EmptyInput)));
        assert!(matches!(
            aggregate_day(&[obs(1, 1.0, "x")], date(2019, 1, 2)),
            Err(WeatherError::DateMismatch { index: 0, .. })
        ));
    }

    #[test]
    fn missing_numeric_is_skipped_fieldwise() {
        let mut a = obs(1, 10.0, "Haze");
        a.pressure = None;
        let b = obs(2, 20.0, "Haze");
        let s = aggregate_day(&[a, b], date(2019, 1, 1)).unwrap();
        assert_eq!(s.stats.avg_pressure, 1012.0);
        assert_eq!(s.stats.avg_temp_c, 15.0);
    }

    fn daily(d: NaiveDate, temp: f64, phrase: &str) -> DailyWeatherSummary {
        let mut s = aggregate_day(&[obs(1, temp, phrase)], date(2019, 1, 1)).unwrap();
        s.date = d;
        s
    }

    #[test]
    fn aggregate_period_examples() {
        let (start, end) = (date(2019, 1, 1), date(2019, 1, 31));
        let days = vec![
            daily(date(2019, 1, 1), 10.0, "Haze"),
            daily(date(2019, 1, 2), 20.0, "Fog"),
            daily(date(2019, 1, 3), 30.0, "Fog"),
        ];
        let p = aggregate_period(&days, start, end).unwrap();
        assert!((p.stats.avg_temp_c - 20.0).abs() < 1e-12);
        assert_eq!(p.day_count, 3);
        assert_eq!(p.stats.top_phrase, "Fog");

        let p = aggregate_period(&days[..1], start, end).unwrap();
        assert_eq!(p.day_count, 1);
        assert_eq!(p.stats, days[0].stats);

        assert!(matches!(
            aggregate_period(&[daily(date(2019, 2, 1), 1.0, "x")], start, end),
            Err(WeatherError::OutOfRangeDay { .. })
        ));
        assert!(matches!(aggregate_period(&[], start, end), Err(WeatherError::EmptyInput)));
    }

    #[test]
    fn daily_file_round_trip() {
        let days = vec![daily(date(2019, 1, 1), 10.25, "Haze"), daily(date(2019, 1, 2), -3.0, "Light Snow")];
        let mut buf = Vec::new();
        write_daily_summaries(&days, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("Date\tAverage Temperature (C)\tAverage Temperature (F)\tMost Repeated Weather Phrase"));
        assert_eq!(parse_daily_summaries(&text, "t").unwrap(), days);
    }

    struct Scripted {
        responses: Mutex<Vec<Result<Vec<WeatherObservation>, ProviderError>>>,
        calls: AtomicUsize,
    }

    impl Scripted {
        fn new(mut responses: Vec<Result<Vec<WeatherObservation>, ProviderError>>) -> Self {
            responses.reverse();
            Self {
                responses: Mutex::new(responses),
                calls: AtomicUsize::new(0),
            }
        }
    }

    impl ObservationProvider for Scripted {
        fn fetch(&self, _: &StationKey, _: NaiveDate) -> Result<Vec<WeatherObservation>, ProviderError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.responses
                .lock()
                .unwrap()
                .pop()
                .unwrap_or(Err(ProviderError::Transient("exhausted".into())))
        }
    }

    fn fast_retry() -> RetryPolicy {
        RetryPolicy {
            delays: vec![Duration::ZERO; 3],
        }
    }

    #[test]
    fn cold_cache_fetch_writes_file() {
        let dir = tempfile::tempdir().unwrap();
        let station = StationKey::new("VIDP:9:IN").unwrap();
        let day = date(2019, 1, 1);
        let batch: Vec<_> = (0..24).map(|h| obs(h, h as f64, "Haze")).collect();
        let fetcher = WeatherFetcher::new(Scripted::new(vec![Ok(batch.clone())]), dir.path()).with_retry(fast_retry());
        let got = fetcher.fetch_observations(&station, day).unwrap();
        assert_eq!(got, batch);
        assert!(dir.path().join("VIDP:9:IN/2019-01-01.tsv").exists());
        let again = fetcher.fetch_observations(&station, day).unwrap();
        assert_eq!(again, got);
        assert_eq!(fetcher.provider().calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn transient_failures_are_retried() {
        let dir = tempfile::tempdir().unwrap();
        let station = StationKey::new("VIDP:9:IN").unwrap();
        let fetcher = WeatherFetcher::new(
            Scripted::new(vec![
                Err(ProviderError::Transient("timeout".into())),
                Err(ProviderError::Transient("timeout".into())),
                Ok(vec![obs(1, 1.0, "Haze")]),
            ]),
            dir.path(),
        )
        .with_retry(fast_retry());
        assert_eq!(fetcher.fetch_observations(&station, date(2019, 1, 1)).unwrap().len(), 1);
        assert_eq!(fetcher.provider().calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn provider_down_is_unavailable_after_retries() {
        let dir = tempfile::tempdir().unwrap();
        let station = StationKey::new("VIDP:9:IN").unwrap();
        let fetcher = WeatherFetcher::new(Scripted::new(vec![]), dir.path()).with_retry(fast_retry());
        let err = fetcher.fetch_observations(&station, date(2019, 1, 1)).unwrap_err();
        assert!(matches!(err, WeatherError::ProviderUnavailable { .. }));
        assert_eq!(fetcher.provider().calls.load(Ordering::SeqCst), 4);
        assert!(!fetcher.cache_path(&station, date(2019, 1, 1)).exists());
    }

    #[test]
    fn empty_day_is_cached() {
        let dir = tempfile::tempdir().unwrap();
        let station = StationKey::new("VIDP:9:IN").unwrap();
        let fetcher = WeatherFetcher::new(Scripted::new(vec![Ok(vec![])]), dir.path()).with_retry(fast_retry());
        for _ in 0..2 {
            assert!(matches!(
                fetcher.fetch_observations(&station, date(2019, 1, 1)),
                Err(WeatherError::EmptyDay { .. })
            ));
        }
        assert_eq!(fetcher.provider().calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn rate_limit_spaces_requests() {
        let dir = tempfile::tempdir().unwrap();
        let station = StationKey::new("S").unwrap();
        let responses = (0..3).map(|_| Ok(vec![obs(1, 1.0, "Haze")])).collect();
        let fetcher = WeatherFetcher::new(Scripted::new(responses), dir.path())
            .with_retry(fast_retry())
            .with_rate_limit(20.0);
        let started = Instant::now();
        let results = fetcher.fetch_range(&station, date(2019, 1, 1), date(2019, 1, 3), 3);
        assert_eq!(results.len(), 3);
        assert!(started.elapsed() >= Duration::from_millis(95));
    }

    #[test]
    fn observation_parse_rejects_bad_rows() {
        let header = OBSERVATION_HEADER.join("\t");
        let bad_deg = format!("{header}\n2019-01-01T01:00:00+05:30\t10\tHaze\t5\t360\tE\t1012\t8\t10\t3\tClear\t2\n");
        assert!(matches!(parse_observations(&bad_deg, "t"), Err(WeatherError::BadRow { line: 2, .. })));
        assert!(matches!(parse_observations("nope\n", "t"), Err(WeatherError::BadRow { line: 1, .. })));
        let blank_fields = format!("{header}\n2019-01-01T01:00:00+05:30\t\tHaze\t\t\t\t\t\t\t\t\t\n");
        let parsed = parse_observations(&blank_fields, "t").unwrap();
        assert_eq!(parsed[0].temp_c, None);
    }
}
