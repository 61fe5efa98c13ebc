use chrono::NaiveDate;
use proptest::prelude::*;

use outbreak::embeddings::{hash_embed, normalize_key, parse_cache, EmbeddingCache};
use outbreak::evaluate::compute_metrics;
use outbreak::features::fit_scaler;
use outbreak::ingest::{parse_disease_table, write_disease_table, DiseaseRecord, ValueType};
use outbreak::nn::{init_network, parse_checkpoint, write_checkpoint, TrainedModel};
use outbreak::weather::{aggregate_period, mode_categorical, DailyWeatherSummary, WeatherStats};

fn date() -> impl Strategy<Value = NaiveDate> {
    (0i64..20_000).prop_map(|d| NaiveDate::from_ymd_opt(1970, 1, 1).unwrap() + chrono::Duration::days(d))
}

fn record() -> impl Strategy<Value = DiseaseRecord> {
    (
        "[a-z]{1,8}( [a-z]{1,8})?",
        date(),
        0i64..400,
        "[A-Za-z]{0,10}",
        prop_oneof![0.0..1e7f64, Just(0.0), (0u32..100_000).prop_map(f64::from)],
        prop_oneof![Just(ValueType::Cases), Just(ValueType::Deaths), Just(ValueType::RatePer100k)],
    )
        .prop_map(|(name, start, len, region, value, value_type)| DiseaseRecord {
            disease_name: name,
            period_start: start,
            period_end: start + chrono::Duration::days(len),
            region,
            value,
            value_type,
        })
}

proptest! {
    #[test]
    fn mode_ignores_order(mut values in prop::collection::vec("[a-d]{1,2}", 1..40), seed in any::<u64>()) {
        let before = mode_categorical(&values).unwrap();
        let n = values.len();
        for i in 0..n {
            values.swap(i, (seed as usize).wrapping_mul(i + 7) % n);
        }
        prop_assert_eq!(mode_categorical(&values).unwrap(), before);
    }

    #[test]
    fn normalize_key_is_idempotent(text in "\\PC{0,30}") {
        let once = normalize_key(&text);
        prop_assert_eq!(normalize_key(&once), once);
    }

    #[test]
    fn hash_embedding_is_unit_or_zero(text in "[ a-zA-Z]{0,40}", dim in 1usize..96, seed in any::<u64>()) {
        let e = hash_embed(&text, dim, seed);
        prop_assert_eq!(e.dim(), dim);
        if text.trim().is_empty() {
            prop_assert_eq!(e.norm(), 0.0);
        } else {
            prop_assert!((e.norm() - 1.0).abs() < 1e-12, "norm {}", e.norm());
        }
        prop_assert_eq!(e, hash_embed(&text, dim, seed));
    }

    #[test]
    fn scaled_training_rows_lie_in_unit_box(
        rows in prop::collection::vec(prop::collection::vec(-1e4..1e4f64, 4), 1..30),
        shift in -100.0..100.0f64,
    ) {
        let targets: Vec<f64> = rows.iter().map(|r| r[0].abs() + shift.abs()).collect();
        let scaler = fit_scaler(&rows, &targets).unwrap();
        for (row, &y) in rows.iter().zip(&targets) {
            for v in scaler.apply(row).unwrap() {
                prop_assert!((0.0..=1.0).contains(&v), "{v}");
            }
            let s = scaler.scale_target(y);
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert!((scaler.invert_target(s) - y).abs() <= 1e-9 * y.abs().max(1.0));
        }
    }

    #[test]
    fn metric_identities(pairs in prop::collection::vec((0.0..1e4f64, 0.0..1e4f64), 2..60)) {
        let (actual, predicted): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        prop_assume!(actual.iter().any(|a| *a != actual[0]));
        let m = compute_metrics(&actual, &predicted).unwrap();
        prop_assert!((m.rmse * m.rmse - m.mse).abs() <= 1e-9 * m.mse.max(1e-300));
        prop_assert!(m.mae <= m.rmse * (1.0 + 1e-12));
        prop_assert!(m.r_squared <= 1.0);
        prop_assert_eq!(m.n, actual.len());
    }

    #[test]
    fn disease_table_round_trip(records in prop::collection::vec(record(), 0..20)) {
        let mut first = Vec::new();
        write_disease_table(&records, &mut first).unwrap();
        let (back, report) = parse_disease_table(std::str::from_utf8(&first).unwrap()).unwrap();
        prop_assert!(report.errors.is_empty(), "{:?}", report.errors);
        prop_assert_eq!(&back, &records);
        let mut second = Vec::new();
        write_disease_table(&back, &mut second).unwrap();
        prop_assert_eq!(first, second);
    }

    #[test]
    fn embedding_cache_round_trip(
        rows in prop::collection::btree_map("[a-z]{1,6}( [a-z]{1,6})?", prop::collection::vec(-1e3..1e3f64, 3), 0..12),
    ) {
        let cache = EmbeddingCache::from_entries(3, rows, "prop").unwrap();
        let mut first = Vec::new();
        cache.write_to(&mut first).unwrap();
        let back = parse_cache(std::str::from_utf8(&first).unwrap(), "prop").unwrap();
        prop_assert_eq!(back.len(), cache.len());
        let mut second = Vec::new();
        back.write_to(&mut second).unwrap();
        prop_assert_eq!(first, second);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact(seed in any::<u64>(), hidden in 1usize..12, inputs in 1usize..6) {
        let network = init_network(&[inputs, hidden, 1], seed).unwrap();
        let scaler = outbreak::features::ScalerParams {
            mins: (0..inputs).map(|i| -(i as f64) / 3.0).collect(),
            maxs: (0..inputs).map(|i| (seed % 1000) as f64 / 7.0 + i as f64).collect(),
            target_min: 0.1,
            target_max: seed as f64 / 3.0 + 1.0,
        };
        let model = TrainedModel { network, scaler };
        let mut buf = Vec::new();
        write_checkpoint(&model, &mut buf).unwrap();
        let back = parse_checkpoint(std::str::from_utf8(&buf).unwrap()).unwrap();
        prop_assert_eq!(back, model);
    }

    #[test]
    fn period_temperature_is_mean_of_days(temps in prop::collection::vec(-20.0..45.0f64, 1..31)) {
        let start = NaiveDate::from_ymd_opt(2022, 3, 1).unwrap();
        let days: Vec<DailyWeatherSummary> = temps
            .iter()
            .enumerate()
            .map(|(i, &t)| DailyWeatherSummary {
                date: start + chrono::Duration::days(i as i64),
                stats: WeatherStats {
                    avg_temp_c: t,
                    avg_temp_f: t * 1.8 + 32.0,
                    top_phrase: "Clear".into(),
                    avg_wind_mph: 3.0,
                    avg_wind_kph: 3.0 * 1.609344,
                    avg_wind_deg: 90.0,
                    top_wind_dir: "E".into(),
                    avg_pressure: 1010.0,
                    avg_dew_point: 10.0,
                    avg_heat_index: t,
                    avg_visibility: 10.0,
                    top_cloud_cover: "Clear".into(),
                    avg_uv_index: 5.0,
                },
            })
            .collect();
        let end = start + chrono::Duration::days(30);
        let p = aggregate_period(&days, start, end).unwrap();
        let mean = temps.iter().rev().sum::<f64>() / temps.len() as f64;
        prop_assert!((p.stats.avg_temp_c - mean).abs() < 1e-9);
        prop_assert!((p.stats.avg_temp_f - (p.stats.avg_temp_c * 9.0 / 5.0 + 32.0)).abs() < 1e-9);
        prop_assert_eq!(p.day_count, temps.len());
    }
}
