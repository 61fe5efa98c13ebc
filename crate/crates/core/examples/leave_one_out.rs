//! Leave-one-disease-out on the synthetic corpus: trains on eight series and
//! scores the held-out one.
//!
//! ```text
//! cargo run --example leave_one_out -- [epochs]
//! ```

use std::time::Instant;

use outbreak::embeddings::Embedder;
use outbreak::evaluate::{group_by_disease, leave_one_out_eval, PipelineConfig};
use outbreak::features::collect_examples;
use outbreak::ingest::merge_demographics;
use outbreak::synthetic::{SyntheticDataset, SyntheticSpec, HELD_OUT};
use outbreak::weather::DailyIndex;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let epochs = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(300);
    let data = SyntheticDataset::generate(SyntheticSpec::default());
    let embedder = Embedder::fallback_only(data.spec.embed_dim, data.spec.embed_seed);
    let (merged, _) = merge_demographics(&data.profiles, &data.demographics)?;
    let examples = collect_examples(&data.records, &DailyIndex::new(data.daily.clone()), &merged, &embedder)?;
    let datasets = group_by_disease(examples);

    let mut config = PipelineConfig::default();
    config.hyper.epochs = epochs;
    let started = Instant::now();
    let outcome = leave_one_out_eval(&datasets, HELD_OUT, &config)?;
    let m = outcome.result.metrics;
    println!("held out {HELD_OUT}: {} rows, {epochs} epochs, {:.1?}", m.n, started.elapsed());
    println!("MAE {:.2}  RMSE {:.2}  R² {:.4}", m.mae, m.rmse, m.r_squared);
    if let Some(last) = outcome.history.final_loss() {
        println!("final training loss {:.3e}", last.data);
    }
    for p in outcome.result.predictions.iter().take(6) {
        println!("{}  actual {:>8.1}  predicted {:>8.1}", p.period_start, p.actual, p.predicted);
    }
    Ok(())
}
