//! Disease tables and symptom/demographics records.
//!
//! Disease counts come from a CSV with the fixed header
//! `disease,period_start,period_end,region,value,value_type`. Symptom and
//! demographics data come from blank-line separated records of `key: value`
//! lines. Both parsers are total: bad rows are collected into a
//! [`ValidationReport`] and only a wrong header aborts a parse.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use chrono::{Duration, NaiveDate};
use thiserror::Error;

use crate::embeddings::normalize_key;

pub const DISEASE_HEADER: [&str; 6] = ["disease", "period_start", "period_end", "region", "value", "value_type"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line 1: expected header `{}`", DISEASE_HEADER.join(","))]
    MissingHeader,
    #[error("duplicate demographics record for {0:?}")]
    DuplicateKey(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ValueType {
    Cases,
    Deaths,
    RatePer100k,
}

impl ValueType {
    pub fn as_str(self) -> &'static str {
        match self {
            ValueType::Cases => "cases",
            ValueType::Deaths => "deaths",
            ValueType::RatePer100k => "rate_per_100k",
        }
    }
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ValueType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cases" => Ok(ValueType::Cases),
            "deaths" => Ok(ValueType::Deaths),
            "rate_per_100k" => Ok(ValueType::RatePer100k),
            other => Err(format!("unknown value_type {other:?}")),
        }
    }
}

/// One reporting-period observation of a disease.
#[derive(Debug, Clone, PartialEq)]
pub struct DiseaseRecord {
    pub disease_name: String,
    pub period_start: NaiveDate,
    /// Inclusive.
    pub period_end: NaiveDate,
    pub region: String,
    pub value: f64,
    pub value_type: ValueType,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    /// 1-based line in the parsed input, or 1-based record position for
    /// dataset-level checks.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub row_count: usize,
    pub errors: Vec<Issue>,
    pub warnings: Vec<Issue>,
}

impl ValidationReport {
    fn error(&mut self, line: usize, message: impl Into<String>) {
        self.errors.push(Issue {
            line,
            message: message.into(),
        });
    }

    fn warn(&mut self, line: usize, message: impl Into<String>) {
        self.warnings.push(Issue {
            line,
            message: message.into(),
        });
    }

    pub fn is_clean(&self) -> bool {
        self.errors.is_empty()
    }

    fn sort(&mut self) {
        self.errors.sort_by_key(|e| e.line);
        self.warnings.sort_by_key(|e| e.line);
    }

    pub fn merge(&mut self, other: ValidationReport) {
        self.row_count += other.row_count;
        self.errors.extend(other.errors);
        self.warnings.extend(other.warnings);
    }
}

fn parse_disease_row(fields: &[&str]) -> Result<DiseaseRecord, String> {
    if fields.len() != DISEASE_HEADER.len() {
        return Err(format!("expected 6 fields, found {}", fields.len()));
    }
    let disease_name = normalize_key(fields[0]);
    if disease_name.is_empty() {
        return Err("empty disease name".into());
    }
    let date = |s: &str, col: &str| {
        NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|_| format!("bad date in {col}: {s:?}"))
    };
    let period_start = date(fields[1], "period_start")?;
    let period_end = date(fields[2], "period_end")?;
    if period_start > period_end {
        return Err("period_start after period_end".into());
    }
    let value: f64 = fields[4]
        .trim()
        .parse()
        .map_err(|_| format!("bad value {:?}", fields[4]))?;
    if !value.is_finite() {
        return Err("non-finite value".into());
    }
    if value < 0.0 {
        return Err("negative value".into());
    }
    let value_type = fields[5].trim().parse::<ValueType>()?;
    Ok(DiseaseRecord {
        disease_name,
        period_start,
        period_end,
        region: fields[3].trim().to_string(),
        value,
        value_type,
    })
}

/// Parses the disease CSV. Rows with problems are reported and skipped.
pub fn parse_disease_table(content: &str) -> Result<(Vec<DiseaseRecord>, ValidationReport), IngestError> {
    let content = content.strip_prefix('\u{feff}').unwrap_or(content);
    let mut lines = content.lines();
    let header = lines.next().ok_or(IngestError::MissingHeader)?;
    let header_fields: Vec<&str> = header.trim_end_matches('\r').split(',').map(str::trim).collect();
    if header_fields != DISEASE_HEADER {
        return Err(IngestError::MissingHeader);
    }
    let mut records = Vec::new();
    let mut report = ValidationReport::default();
    for (idx, raw) in lines.enumerate() {
        let line = idx + 2;
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        match parse_disease_row(&fields) {
            Ok(r) => records.push(r),
            Err(reason) => report.error(line, reason),
        }
    }
    report.row_count = records.len();
    Ok((records, report))
}

/// Writes records in the canonical CSV layout. The format has no quoting,
/// so a name or region containing a comma or line break is refused.
pub fn write_disease_table(records: &[DiseaseRecord], w: &mut dyn Write) -> io::Result<()> {
    writeln!(w, "{}", DISEASE_HEADER.join(","))?;
    for r in records {
        if [&r.disease_name, &r.region].iter().any(|f| f.contains([',', '\n', '\r'])) {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                format!("{:?}/{:?}: fields cannot contain commas or line breaks", r.disease_name, r.region),
            ));
        }
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.disease_name, r.period_start, r.period_end, r.region, r.value, r.value_type
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SymptomProfile {
    pub code: String,
    pub name: String,
    pub symptoms: Vec<String>,
    pub description: String,
    pub test_procedure: String,
    pub medication_desc: String,
    pub medications: Vec<String>,
    pub symptom_desc: String,
}

/// Unknown fields are stored as empty text.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DemographicsRecord {
    pub name: String,
    pub risk_years: String,
    pub less_risk_years: String,
    pub high_risk_race_ethnicity: String,
    pub high_risk_gender: String,
    pub less_risk_race_ethnicity: String,
    pub less_risk_gender: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergedHealthRecord {
    pub profile: SymptomProfile,
    pub demographics: Option<DemographicsRecord>,
}

const PROFILE_KEYS: [&str; 8] = [
    "code",
    "name",
    "symptoms",
    "description",
    "test_procedure",
    "medication_desc",
    "medications",
    "symptom_desc",
];

const DEMOGRAPHIC_KEYS: [&str; 6] = [
    "risk_years",
    "less_risk_years",
    "high_risk_race_ethnicity",
    "high_risk_gender",
    "less_risk_race_ethnicity",
    "less_risk_gender",
];

fn is_known_key(key: &str) -> bool {
    PROFILE_KEYS.contains(&key) || DEMOGRAPHIC_KEYS.contains(&key)
}

/// One `key: value` block with the line number of its first line.
struct RawRecord {
    first_line: usize,
    fields: HashMap<String, String>,
}

/// Splits record text into blocks. Malformed lines reject their whole block.
fn split_records(content: &str, report: &mut ValidationReport) -> Vec<RawRecord> {
    let mut out = Vec::new();
    let mut current: Option<(RawRecord, bool)> = None;
    let flush = |cur: &mut Option<(RawRecord, bool)>, out: &mut Vec<RawRecord>| {
        if let Some((rec, ok)) = cur.take() {
            if ok {
                out.push(rec);
            }
        }
    };
    for (idx, raw) in content.lines().enumerate() {
        let line = idx + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() {
            flush(&mut current, &mut out);
            continue;
        }
        let (rec, ok) = current.get_or_insert_with(|| {
            (
                RawRecord {
                    first_line: line,
                    fields: HashMap::new(),
                },
                true,
            )
        });
        let Some((key, value)) = raw.split_once(':') else {
            report.error(line, format!("expected `key: value`, found {:?}", raw.trim()));
            *ok = false;
            continue;
        };
        let key = key.trim().to_ascii_lowercase();
        if key.is_empty() {
            report.error(line, "empty key");
            *ok = false;
            continue;
        }
        if !is_known_key(&key) {
            report.warn(line, format!("unknown key {key:?} ignored"));
            continue;
        }
        if rec.fields.insert(key.clone(), value.trim().to_string()).is_some() {
            report.warn(line, format!("repeated key {key:?}, last value kept"));
        }
    }
    flush(&mut current, &mut out);
    out
}

fn split_list(value: &str, normalize: bool) -> Vec<String> {
    value
        .split(',')
        .map(|s| if normalize { normalize_key(s) } else { s.trim().to_string() })
        .filter(|s| !s.is_empty())
        .collect()
}

/// Parses symptom profile records.
pub fn parse_symptom_records(content: &str) -> (Vec<SymptomProfile>, ValidationReport) {
    let mut report = ValidationReport::default();
    let mut profiles = Vec::new();
    for mut rec in split_records(content, &mut report) {
        let mut take = |k: &str| rec.fields.remove(k).unwrap_or_default();
        let code = take("code");
        let name = normalize_key(&take("name"));
        if code.is_empty() || name.is_empty() {
            let missing = if code.is_empty() { "code" } else { "name" };
            report.error(rec.first_line, format!("missing required key {missing:?}"));
            continue;
        }
        profiles.push(SymptomProfile {
            code,
            name,
            symptoms: split_list(&take("symptoms"), true),
            description: take("description"),
            test_procedure: take("test_procedure"),
            medication_desc: take("medication_desc"),
            medications: split_list(&take("medications"), false),
            symptom_desc: take("symptom_desc"),
        });
    }
    report.row_count = profiles.len();
    report.sort();
    (profiles, report)
}

/// Parses demographics records (same file format as symptoms).
pub fn parse_demographics_records(content: &str) -> (Vec<DemographicsRecord>, ValidationReport) {
    let mut report = ValidationReport::default();
    let mut out = Vec::new();
    for mut rec in split_records(content, &mut report) {
        let mut take = |k: &str| rec.fields.remove(k).unwrap_or_default();
        let name = normalize_key(&take("name"));
        if name.is_empty() {
            report.error(rec.first_line, "missing required key \"name\"");
            continue;
        }
        out.push(DemographicsRecord {
            name,
            risk_years: take("risk_years"),
            less_risk_years: take("less_risk_years"),
            high_risk_race_ethnicity: take("high_risk_race_ethnicity"),
            high_risk_gender: take("high_risk_gender"),
            less_risk_race_ethnicity: take("less_risk_race_ethnicity"),
            less_risk_gender: take("less_risk_gender"),
        });
    }
    report.row_count = out.len();
    report.sort();
    (out, report)
}

/// Left join of profiles with demographics on the normalized name.
///
/// Returns the merged records and one warning per demographics row that
/// matched no profile (its `line` is the 1-based position in `demo`).
pub fn merge_demographics(
    profiles: &[SymptomProfile],
    demo: &[DemographicsRecord],
) -> Result<(Vec<MergedHealthRecord>, ValidationReport), IngestError> {
    let mut by_name: HashMap<&str, &DemographicsRecord> = HashMap::new();
    for d in demo {
        if by_name.insert(d.name.as_str(), d).is_some() {
            return Err(IngestError::DuplicateKey(d.name.clone()));
        }
    }
    let merged: Vec<MergedHealthRecord> = profiles
        .iter()
        .map(|p| MergedHealthRecord {
            profile: p.clone(),
            demographics: by_name.get(normalize_key(&p.name).as_str()).map(|d| (*d).clone()),
        })
        .collect();
    let mut report = ValidationReport {
        row_count: merged.len(),
        ..Default::default()
    };
    for (i, d) in demo.iter().enumerate() {
        if !profiles.iter().any(|p| normalize_key(&p.name) == d.name) {
            report.warn(i + 1, format!("demographics for {:?} has no symptom profile", d.name));
        }
    }
    Ok((merged, report))
}

/// Dataset-level checks per (disease, region): overlapping periods, gaps
/// between consecutive periods, and mixed value types within a disease.
///
/// Warning line numbers are 1-based positions in `records`.
pub fn validate_dataset(records: &[DiseaseRecord]) -> ValidationReport {
    let mut report = ValidationReport {
        row_count: records.len(),
        ..Default::default()
    };
    let mut groups: BTreeMap<(&str, &str), Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups.entry((r.disease_name.as_str(), r.region.as_str())).or_default().push(i);
    }
    for ((disease, region), mut idx) in groups {
        idx.sort_by_key(|&i| (records[i].period_start, records[i].period_end, i));
        for pair in idx.windows(2) {
            let (a, b) = (&records[pair[0]], &records[pair[1]]);
            if b.period_start <= a.period_end {
                report.warn(
                    pair[1] + 1,
                    format!(
                        "overlapping periods for {disease}/{region}: {}..{} and {}..{}",
                        a.period_start, a.period_end, b.period_start, b.period_end
                    ),
                );
            } else if b.period_start > a.period_end + Duration::days(1) {
                report.warn(
                    pair[1] + 1,
                    format!(
                        "gap for {disease}/{region}: {}..{} not covered",
                        a.period_end + Duration::days(1),
                        b.period_start - Duration::days(1)
                    ),
                );
            }
        }
    }
    let mut first_type: BTreeMap<&str, ValueType> = BTreeMap::new();
    let mut flagged: Vec<&str> = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let first = *first_type.entry(r.disease_name.as_str()).or_insert(r.value_type);
        if first != r.value_type && !flagged.contains(&r.disease_name.as_str()) {
            flagged.push(r.disease_name.as_str());
            report.warn(
                i + 1,
                format!("mixed value types for {}: {} and {}", r.disease_name, first, r.value_type),
            );
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "disease,period_start,period_end,region,value,value_type\n";

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    #[test]
    fn parses_one_row() {
        let text = format!("{HEADER}influenza,2019-01-01,2019-01-31,IN,1200,cases\n");
        let (recs, report) = parse_disease_table(&text).unwrap();
        assert_eq!(report.row_count, 1);
        assert!(report.errors.is_empty());
        assert_eq!(
            recs[0],
            DiseaseRecord {
                disease_name: "influenza".into(),
                period_start: d(2019, 1, 1),
                period_end: d(2019, 1, 31),
                region: "IN".into(),
                value: 1200.0,
                value_type: ValueType::Cases,
            }
        );
    }

    #[test]
    fn header_only_and_crlf() {
        let (recs, report) = parse_disease_table(HEADER).unwrap();
        assert!(recs.is_empty());
        assert_eq!(report.row_count, 0);
        let text = "disease,period_start,period_end,region,value,value_type\r\nTyphoid,2000-01-01,2000-12-31,IN,3.5,rate_per_100k\r\n";
        let (recs, _) = parse_disease_table(text).unwrap();
        assert_eq!(recs[0].disease_name, "typhoid");
        assert_eq!(recs[0].value_type, ValueType::RatePer100k);
    }

    #[test]
    fn row_errors_are_collected() {
        let text = format!(
            "{HEADER}influenza,2019-01-01,2019-01-31,IN,-5,cases\n\
             influenza,2019-02-01,2019-02-28,IN,10,cases\n\
             influenza,2019-13-01,2019-02-28,IN,10,cases\n\
             influenza,2019-03-01,2019-03-31,IN,10,cured\n"
        );
        let (recs, report) = parse_disease_table(&text).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(report.row_count, 1);
        let lines: Vec<usize> = report.errors.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![2, 4, 5]);
        assert_eq!(report.errors[0].message, "negative value");
    }

    #[test]
    fn wrong_header_is_fatal() {
        assert!(matches!(parse_disease_table("name,start\n"), Err(IngestError::MissingHeader)));
        assert!(matches!(parse_disease_table(""), Err(IngestError::MissingHeader)));
    }

    #[test]
    fn symptom_record_parses() {
        let text = "code: D001\nname: Influenza\nsymptoms: fever, cough\n";
        let (profiles, report) = parse_symptom_records(text);
        assert_eq!(report.row_count, 1);
        assert_eq!(profiles[0].code, "D001");
        assert_eq!(profiles[0].name, "influenza");
        assert_eq!(profiles[0].symptoms, vec!["fever", "cough"]);
        assert_eq!(profiles[0].description, "");
    }

    #[test]
    fn symptom_edge_cases() {
        let (profiles, report) = parse_symptom_records("");
        assert!(profiles.is_empty());
        assert_eq!(report.row_count, 0);

        let text = "code: D001\nname: Flu\n\n\ncode: D002\nsymptoms: rash\n\ncode: D003\nname: x\nbogus line\n\ncode: D004\nname: y\ncolour: red\nsymptoms: , High  Fever ,\n";
        let (profiles, report) = parse_symptom_records(text);
        assert_eq!(profiles.len(), 2);
        assert_eq!(report.row_count, 2);
        assert_eq!(report.errors.len(), 2);
        assert_eq!(report.errors[0].line, 5);
        assert!(report.errors[0].message.contains("missing required key"));
        assert_eq!(report.errors[1].line, 10);
        assert_eq!(report.warnings.len(), 1);
        assert_eq!(report.warnings[0].line, 14);
        assert_eq!(profiles[1].symptoms, vec!["high fever"]);
    }

    fn profile(name: &str) -> SymptomProfile {
        SymptomProfile {
            code: "C".into(),
            name: name.into(),
            ..Default::default()
        }
    }

    fn demo(name: &str) -> DemographicsRecord {
        DemographicsRecord {
            name: name.into(),
            risk_years: "0-5".into(),
            ..Default::default()
        }
    }

    #[test]
    fn merge_semantics() {
        let (merged, _) = merge_demographics(&[profile("influenza")], &[demo("influenza")]).unwrap();
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].demographics.as_ref().unwrap().name, "influenza");

        let (merged, report) = merge_demographics(&[profile("cholera")], &[demo("typhoid"), demo("dengue")]).unwrap();
        assert_eq!(merged.len(), 1);
        assert!(merged[0].demographics.is_none());
        assert_eq!(report.warnings.len(), 2);

        assert!(matches!(
            merge_demographics(&[profile("typhoid")], &[demo("typhoid"), demo("typhoid")]),
            Err(IngestError::DuplicateKey(k)) if k == "typhoid"
        ));
    }

    fn rec(name: &str, start: NaiveDate, end: NaiveDate, vt: ValueType) -> DiseaseRecord {
        DiseaseRecord {
            disease_name: name.into(),
            period_start: start,
            period_end: end,
            region: "IN".into(),
            value: 1.0,
            value_type: vt,
        }
    }

    #[test]
    fn overlap_and_empty() {
        assert_eq!(validate_dataset(&[]), ValidationReport::default());
        let r = rec("influenza", d(2019, 1, 1), d(2019, 1, 31), ValueType::Cases);
        let report = validate_dataset(&[r.clone(), r]);
        assert_eq!(report.warnings.len(), 1);
        assert!(report.warnings[0].message.contains("overlapping"));
    }

    #[test]
    fn yearly_gap_is_reported() {
        let records: Vec<DiseaseRecord> = (1950..=2020)
            .filter(|&y| y != 1960)
            .map(|y| rec("cholera", d(y, 1, 1), d(y, 12, 31), ValueType::Cases))
            .collect();
        // oracle: years not covered by any record between the first and last
        let covered: Vec<i32> = records.iter().map(|r| r.period_start.format("%Y").to_string().parse().unwrap()).collect();
        let missing: Vec<i32> = (1950..=2020).filter(|y| !covered.contains(y)).collect();
        assert_eq!(missing, vec![1960]);

        let report = validate_dataset(&records);
        assert_eq!(report.warnings.len(), 1);
        assert!(report.warnings[0].message.contains("1960-01-01..1960-12-31"));
    }

    #[test]
    fn mixed_value_types() {
        let report = validate_dataset(&[
            rec("typhoid", d(2000, 1, 1), d(2000, 12, 31), ValueType::Cases),
            rec("typhoid", d(2001, 1, 1), d(2001, 12, 31), ValueType::RatePer100k),
            rec("typhoid", d(2002, 1, 1), d(2002, 12, 31), ValueType::Deaths),
        ]);
        assert_eq!(report.warnings.len(), 1);
        assert_eq!(report.warnings[0].line, 2);
    }

    #[test]
    fn writer_refuses_unquotable_fields() {
        let mut r = rec("typhoid", d(2000, 1, 1), d(2000, 12, 31), ValueType::Cases);
        r.region = "Pune, Maharashtra".into();
        let err = write_disease_table(&[r], &mut Vec::new()).unwrap_err();
        assert_eq!(err.kind(), io::ErrorKind::InvalidInput);
        let mut r = rec("typhoid\nfever", d(2000, 1, 1), d(2000, 12, 31), ValueType::Cases);
        assert!(write_disease_table(&[r.clone()], &mut Vec::new()).is_err());
        r.disease_name = "typhoid fever".into();
        assert!(write_disease_table(&[r], &mut Vec::new()).is_ok());
    }
}
