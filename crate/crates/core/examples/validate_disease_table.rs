//! Parses a disease CSV and prints the validation report.
//!
//! ```text
//! cargo run --example validate_disease_table -- [diseases.csv]
//! ```
//!
//! Without an argument a small table with a few deliberate problems is used.

use outbreak::ingest::{parse_disease_table, validate_dataset};

const SAMPLE: &str = "\
disease,period_start,period_end,region,value,value_type
Dengue,2021-01-01,2021-01-31,Maharashtra,120,cases
dengue,2021-01-01,2021-01-31,Maharashtra,118,cases
Malaria,2021-02-01,2021-01-15,Maharashtra,40,cases
Cholera,2021-03-01,2021-03-31,Maharashtra,-3,cases
Typhoid,2021-03-01,2021-03-31,Maharashtra,12,per_week
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let content = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(path)?,
        None => SAMPLE.to_string(),
    };
    let (records, report) = parse_disease_table(&content)?;
    println!("{} rows accepted, {} rejected", report.row_count, report.errors.len());
    for e in &report.errors {
        println!("error   line {:>3}: {}", e.line, e.message);
    }
    for w in validate_dataset(&records).warnings {
        println!("warning record {:>2}: {}", w.line, w.message);
    }
    for r in &records {
        println!("{:<10} {} .. {}  {:>8.1} {}", r.disease_name, r.period_start, r.period_end, r.value, r.value_type.as_str());
    }
    Ok(())
}
