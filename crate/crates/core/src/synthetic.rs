//! Seeded synthetic data: hourly station observations, nine disease series
//! driven by the period weather, and matching symptom and demographics
//! records.
//!
//! Every value is a pure function of the [`SyntheticSpec`], so fixtures can be
//! regenerated anywhere and compared byte for byte.

use std::f64::consts::PI;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, FixedOffset, Months, NaiveDate, TimeZone};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embeddings::{normalize_key, Embedder, Embedding, DEFAULT_EMBED_SEED, DEFAULT_FALLBACK_DIM};
use crate::ingest::{write_disease_table, DemographicsRecord, DiseaseRecord, SymptomProfile, ValueType};
use crate::tsv::atomic_write;
use crate::weather::{
    aggregate_day, day_path, write_daily_summaries, write_observations, DailyIndex, DailyWeatherSummary, StationKey,
    WeatherObservation, WeatherStats,
};

/// Disease names with their symptom lists. The last one is the series held
/// out by default.
pub const DISEASES: [(&str, &[&str]); 9] = [
    ("Dengue", &["high fever", "severe headache", "joint pain", "rash"]),
    ("Malaria", &["fever", "chills", "sweating", "headache"]),
    ("Cholera", &["watery diarrhea", "vomiting", "dehydration"]),
    ("Typhoid", &["prolonged fever", "abdominal pain", "weakness"]),
    ("Hepatitis A", &["jaundice", "fatigue", "nausea", "abdominal pain"]),
    ("Chikungunya", &["fever", "joint pain", "muscle pain", "rash"]),
    ("Leptospirosis", &["fever", "muscle pain", "red eyes", "headache"]),
    ("Acute Diarrhoeal Disease", &["diarrhea", "dehydration", "cramps"]),
    ("Influenza", &["fever", "cough", "sore throat", "body ache"]),
];

/// Normalized name of the held-out series.
pub const HELD_OUT: &str = "influenza";

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub station: String,
    pub region: String,
    /// First day of the first month.
    pub start: NaiveDate,
    /// Length of every disease series.
    pub months: u32,
    /// Series `i` starts `i * stagger_months` after `start`.
    pub stagger_months: u32,
    pub embed_dim: usize,
    pub embed_seed: u64,
    /// Scale of the per-disease offset, in cases.
    pub offset_scale: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            seed: 2024,
            station: "VABB".into(),
            region: "Maharashtra".into(),
            start: NaiveDate::from_ymd_opt(2019, 1, 1).unwrap(),
            months: 36,
            stagger_months: 2,
            embed_dim: DEFAULT_FALLBACK_DIM,
            embed_seed: DEFAULT_EMBED_SEED,
            offset_scale: 400.0,
        }
    }
}

impl SyntheticSpec {
    /// Inclusive `(start, end)` of each monthly period of series `series`.
    pub fn periods(&self, series: usize) -> Vec<(NaiveDate, NaiveDate)> {
        let first = series as u32 * self.stagger_months;
        (first..first + self.months)
            .map(|m| {
                let start = self.start + Months::new(m);
                (start, start + Months::new(1) - Duration::days(1))
            })
            .collect()
    }

    /// Last day covered by any series.
    pub fn end(&self) -> NaiveDate {
        let span = self.months + (DISEASES.len() as u32 - 1) * self.stagger_months;
        self.start + Months::new(span) - Duration::days(1)
    }

    pub fn days(&self) -> impl Iterator<Item = NaiveDate> {
        self.start.iter_days().take_while({
            let end = self.end();
            move |d| *d <= end
        })
    }
}

fn day_rng(seed: u64, date: NaiveDate) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (date.num_days_from_ce() as u64).wrapping_mul(0x2545_F491_4F6C_DD1D))
}

const COMPASS: [&str; 8] = ["N", "NE", "E", "SE", "S", "SW", "W", "NW"];

fn compass(deg: f64) -> &'static str {
    COMPASS[((deg + 22.5) / 45.0) as usize % 8]
}

fn phrase(temp: f64, dew: f64) -> &'static str {
    if dew > 22.0 {
        "Rain Showers"
    } else if dew > 18.0 {
        "Humid"
    } else if temp > 31.0 {
        "Hot"
    } else if temp > 24.0 {
        "Sunny"
    } else {
        "Clear"
    }
}

fn cloud(dew: f64) -> &'static str {
    if dew > 21.0 {
        "Overcast"
    } else if dew > 16.0 {
        "Partly Cloudy"
    } else {
        "Clear"
    }
}

/// Twenty-four hourly observations for one station-local day.
pub fn observations_for_day(spec: &SyntheticSpec, date: NaiveDate) -> Vec<WeatherObservation> {
    let mut rng = day_rng(spec.seed, date);
    let doy = f64::from(date.ordinal0());
    let years = f64::from(date.year() - spec.start.year());
    let season = (2.0 * PI * (doy - 80.0) / 365.25).sin();
    let monsoon = (2.0 * PI * (doy - 150.0) / 365.25).sin();

    let mean_temp = 27.0 + 5.0 * season + 0.4 * years + rng.gen_range(-1.5..1.5);
    let mean_dew = mean_temp - 9.0 + 6.0 * monsoon + rng.gen_range(-1.0..1.0);
    let mean_wind = 7.0 + 3.0 * monsoon + rng.gen_range(0.0..2.0);
    let wind_deg = 200.0 + 80.0 * monsoon + rng.gen_range(-20.0..20.0);
    let mean_pressure = 1009.0 - 0.5 * (mean_temp - 27.0) - 2.0 * monsoon + rng.gen_range(-1.0..1.0);
    let peak_uv = (8.0 + 2.5 * season - 2.0 * monsoon.max(0.0)).max(1.0);

    let tz = FixedOffset::east_opt(5 * 3600 + 1800).unwrap();
    (0..24)
        .map(|h| {
            let hour = f64::from(h);
            let diurnal = (2.0 * PI * (hour - 9.0) / 24.0).sin();
            let temp = mean_temp + 4.0 * diurnal + rng.gen_range(-0.3..0.3);
            let dew = mean_dew + 0.8 * diurnal + rng.gen_range(-0.3..0.3);
            let deg = (wind_deg + rng.gen_range(-30.0..30.0)).rem_euclid(360.0);
            let daylight = (PI * (hour - 6.0) / 12.0).sin().max(0.0);
            let timestamp = tz
                .from_local_datetime(&date.and_hms_opt(h, 0, 0).unwrap())
                .single()
                .expect("fixed offsets have no gaps");
            WeatherObservation {
                timestamp,
                temp_c: Some(round2(temp)),
                phrase: phrase(temp, dew).into(),
                wind_mph: Some(round2((mean_wind + 2.0 * diurnal + rng.gen_range(-1.0..1.0)).max(0.0))),
                wind_deg: Some(round2(deg).min(359.99)),
                wind_dir: compass(deg).into(),
                pressure: Some(round2(mean_pressure - 1.2 * diurnal)),
                dew_point_c: Some(round2(dew)),
                heat_index_c: Some(round2(temp + 0.25 * (dew - 10.0).max(0.0))),
                visibility_km: Some(round2((10.0 - 0.3 * (dew - 14.0).max(0.0) + rng.gen_range(-0.5..0.5)).max(0.5))),
                cloud_cover: cloud(dew).into(),
                uv_index: Some(round2(peak_uv * daylight)),
            }
        })
        .collect()
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Daily summaries over the whole spec range, each reduced from
/// [`observations_for_day`].
pub fn daily_weather(spec: &SyntheticSpec) -> Vec<DailyWeatherSummary> {
    spec.days()
        .map(|d| aggregate_day(&observations_for_day(spec, d), d).expect("generated days are complete"))
        .collect()
}

/// Case count implied by a period's weather, before the disease offset.
pub fn weather_response(s: &WeatherStats) -> f64 {
    let heat = (s.avg_temp_c - 27.0) / 3.0;
    let humid = (s.avg_dew_point - 17.0) / 4.0;
    3000.0 + 1400.0 * heat.tanh() + 500.0 * humid * humid + 600.0 * humid + 90.0 * s.avg_uv_index
        - 40.0 * (s.avg_pressure - 1009.0)
}

/// Fixed unit direction the disease offset is read along.
fn offset_direction(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0FF5_E7D1);
    let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

/// Offset keyed on the disease-name embedding: `offset_scale * <u, e>`.
pub fn disease_offset(spec: &SyntheticSpec, disease_embedding: &Embedding) -> f64 {
    let u = offset_direction(disease_embedding.dim(), spec.seed);
    spec.offset_scale * u.iter().zip(disease_embedding.values()).map(|(a, b)| a * b).sum::<f64>()
}

pub fn disease_records(spec: &SyntheticSpec, weather: &DailyIndex, embedder: &Embedder) -> Vec<DiseaseRecord> {
    let mut out = Vec::new();
    for (series, (name, _)) in DISEASES.iter().enumerate() {
        let offset = disease_offset(spec, &embedder.embed_text(name).0);
        for (start, end) in spec.periods(series) {
            let period = weather.period(start, end).expect("weather covers every period");
            out.push(DiseaseRecord {
                disease_name: normalize_key(name),
                period_start: start,
                period_end: end,
                region: spec.region.clone(),
                value: (weather_response(&period.stats) + offset).max(0.0),
                value_type: ValueType::Cases,
            });
        }
    }
    out
}

pub fn symptom_profiles() -> Vec<SymptomProfile> {
    DISEASES
        .iter()
        .enumerate()
        .map(|(i, (name, symptoms))| SymptomProfile {
            code: format!("D{:02}", i + 1),
            name: normalize_key(name),
            symptoms: symptoms.iter().map(|s| s.to_string()).collect(),
            description: format!("{name} (synthetic profile)"),
            test_procedure: "clinical assessment".into(),
            medication_desc: "supportive care".into(),
            medications: vec!["paracetamol".into(), "oral rehydration salts".into()],
            symptom_desc: symptoms.join(" and "),
        })
        .collect()
}

pub fn demographics() -> Vec<DemographicsRecord> {
    DISEASES
        .iter()
        .step_by(2)
        .map(|(name, _)| DemographicsRecord {
            name: normalize_key(name),
            risk_years: "0-14, 60+".into(),
            less_risk_years: "15-59".into(),
            high_risk_gender: "any".into(),
            ..Default::default()
        })
        .collect()
}

pub fn write_symptom_records(profiles: &[SymptomProfile], w: &mut dyn Write) -> io::Result<()> {
    for (i, p) in profiles.iter().enumerate() {
        if i > 0 {
            writeln!(w)?;
        }
        writeln!(w, "code: {}", p.code)?;
        writeln!(w, "name: {}", p.name)?;
        writeln!(w, "symptoms: {}", p.symptoms.join(", "))?;
        writeln!(w, "description: {}", p.description)?;
        writeln!(w, "test_procedure: {}", p.test_procedure)?;
        writeln!(w, "medication_desc: {}", p.medication_desc)?;
        writeln!(w, "medications: {}", p.medications.join(", "))?;
        writeln!(w, "symptom_desc: {}", p.symptom_desc)?;
    }
    Ok(())
}

pub fn write_demographics_records(records: &[DemographicsRecord], w: &mut dyn Write) -> io::Result<()> {
    for (i, d) in records.iter().enumerate() {
        if i > 0 {
            writeln!(w)?;
        }
        writeln!(w, "name: {}", d.name)?;
        for (key, value) in [
            ("risk_years", &d.risk_years),
            ("less_risk_years", &d.less_risk_years),
            ("high_risk_race_ethnicity", &d.high_risk_race_ethnicity),
            ("high_risk_gender", &d.high_risk_gender),
            ("less_risk_race_ethnicity", &d.less_risk_race_ethnicity),
            ("less_risk_gender", &d.less_risk_gender),
        ] {
            if !value.is_empty() {
                writeln!(w, "{key}: {value}")?;
            }
        }
    }
    Ok(())
}

/// Everything the generator produces for one spec.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub spec: SyntheticSpec,
    pub daily: Vec<DailyWeatherSummary>,
    pub records: Vec<DiseaseRecord>,
    pub profiles: Vec<SymptomProfile>,
    pub demographics: Vec<DemographicsRecord>,
}

impl SyntheticDataset {
    pub fn generate(spec: SyntheticSpec) -> Self {
        let daily = daily_weather(&spec);
        let embedder = Embedder::fallback_only(spec.embed_dim, spec.embed_seed);
        let records = disease_records(&spec, &DailyIndex::new(daily.clone()), &embedder);
        Self {
            spec,
            daily,
            records,
            profiles: symptom_profiles(),
            demographics: demographics(),
        }
    }
}

/// Paths written by [`write_fixture_dir`], all inside one directory.
#[derive(Debug, Clone)]
pub struct FixturePaths {
    pub root: PathBuf,
    pub config: PathBuf,
    pub diseases: PathBuf,
    pub symptoms: PathBuf,
    pub demographics: PathBuf,
    pub weather_daily: PathBuf,
    /// Raw observation tree, `<station>/<YYYY-MM-DD>.tsv`.
    pub observations: PathBuf,
}

/// Writes a complete fixture directory plus an `outbreak.cfg` pointing at it.
///
/// `observation_days` limits how many leading days get raw observation files
/// (all days when `None`); the configured sync range matches. The daily
/// summary file always covers the full range.
pub fn write_fixture_dir(
    data: &SyntheticDataset,
    root: &Path,
    epochs: usize,
    observation_days: Option<usize>,
) -> io::Result<FixturePaths> {
    fs::create_dir_all(root)?;
    let paths = FixturePaths {
        root: root.to_path_buf(),
        config: root.join("outbreak.cfg"),
        diseases: root.join("diseases.csv"),
        symptoms: root.join("symptoms.txt"),
        demographics: root.join("demographics.txt"),
        weather_daily: root.join("weather_daily.tsv"),
        observations: root.join("observations"),
    };
    atomic_write(&paths.diseases, |w| write_disease_table(&data.records, w))?;
    atomic_write(&paths.symptoms, |w| write_symptom_records(&data.profiles, w))?;
    atomic_write(&paths.demographics, |w| write_demographics_records(&data.demographics, w))?;
    atomic_write(&paths.weather_daily, |w| write_daily_summaries(&data.daily, w))?;

    let station = StationKey::new(data.spec.station.clone()).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))?;
    let observation_days = observation_days.unwrap_or(usize::MAX);
    for date in data.spec.days().take(observation_days) {
        let path = day_path(&paths.observations, &station, date);
        fs::create_dir_all(path.parent().expect("day paths have a parent"))?;
        atomic_write(&path, |w| write_observations(&observations_for_day(&data.spec, date), w))?;
    }
    let sync_end = data.spec.days().take(observation_days.max(1)).last().unwrap_or(data.spec.start);

    let config = format!(
        "# synthetic fixture configuration\n\
         station = {station}\n\
         disease_file = diseases.csv\n\
         symptom_file = symptoms.txt\n\
         demographics_file = demographics.txt\n\
         weather_daily_file = weather_daily.tsv\n\
         weather_fixture_dir = observations\n\
         weather_cache_dir = cache/weather\n\
         sync_start = {start}\n\
         sync_end = {sync_end}\n\
         embed_fallback_dim = {dim}\n\
         embed_seed = {embed_seed}\n\
         epochs = {epochs}\n\
         output_dir = out\n",
        station = data.spec.station,
        start = data.spec.start,
        dim = data.spec.embed_dim,
        embed_seed = data.spec.embed_seed,
    );
    atomic_write(&paths.config, |w| w.write_all(config.as_bytes()))?;
    Ok(paths)
}
