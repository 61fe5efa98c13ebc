//! Writes a synthetic fixture directory (disease table, symptom and
//! demographics records, daily weather, raw observations for the first days,
//! and an `outbreak.cfg`) that every CLI subcommand can run against.
//!
//! ```text
//! cargo run --example write_fixtures -- /tmp/outbreak-demo [epochs]
//! cargo run -- evaluate --config /tmp/outbreak-demo/outbreak.cfg --hold-out influenza
//! ```

use std::path::PathBuf;

use outbreak::synthetic::{write_fixture_dir, SyntheticDataset, SyntheticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let root = PathBuf::from(args.next().unwrap_or_else(|| "outbreak-fixtures".into()));
    let epochs = args.next().map(|a| a.parse()).transpose()?.unwrap_or(300);
    let data = SyntheticDataset::generate(SyntheticSpec::default());
    let paths = write_fixture_dir(&data, &root, epochs, None)?;
    println!("{} disease rows, {} days of weather", data.records.len(), data.daily.len());
    println!("config: {}", paths.config.display());
    Ok(())
}
