//! Fetches a week of hourly observations through the caching fetcher and
//! reduces them to daily and period summaries.
//!
//! ```text
//! cargo run --example aggregate_weather
//! ```

use chrono::NaiveDate;
use outbreak::synthetic::{write_fixture_dir, SyntheticDataset, SyntheticSpec};
use outbreak::weather::{aggregate_day, aggregate_period, FixtureProvider, StationKey, WeatherFetcher};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let data = SyntheticDataset::generate(SyntheticSpec::default());
    write_fixture_dir(&data, dir.path(), 1, Some(7))?;

    let station = StationKey::new(data.spec.station.clone())?;
    let fetcher = WeatherFetcher::new(FixtureProvider::new(dir.path().join("observations")), dir.path().join("cache"));
    let start = data.spec.start;
    let end = start + chrono::Duration::days(6);

    let mut days = Vec::new();
    let mut date: NaiveDate = start;
    while date <= end {
        let obs = fetcher.fetch_observations(&station, date)?;
        let day = aggregate_day(&obs, date)?;
        let s = &day.stats;
        println!(
            "{}  {:>2} obs  {:>5.2} °C  {:>5.2} mph  {:<14} {:<3} cloud {}",
            date,
            obs.len(),
            s.avg_temp_c,
            s.avg_wind_mph,
            s.top_phrase,
            s.top_wind_dir,
            s.top_cloud_cover
        );
        days.push(day);
        date = date.succ_opt().unwrap();
    }

    let week = aggregate_period(&days, start, end)?;
    println!("week of {start}: {} days, {:.2} °C / {:.2} °F", week.day_count, week.stats.avg_temp_c, week.stats.avg_temp_f);
    println!("cached under {}", fetcher.cache_path(&station, start).display());
    Ok(())
}
