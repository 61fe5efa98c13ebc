//! Embedding lookup: cache hits, hashing fallback and symptom-list means.
//!
//! ```text
//! cargo run --example embed_text -- [cache.emb]
//! ```

use outbreak::embeddings::{hash_embed, load_cache, normalize_key, Embedder, EmbeddingCache, DEFAULT_EMBED_SEED};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cache = match std::env::args().nth(1) {
        Some(path) => load_cache(path.as_ref())?,
        None => EmbeddingCache::from_entries(
            4,
            [
                ("fever".to_string(), vec![1.0, 0.0, 0.0, 0.0]),
                ("headache".to_string(), vec![0.0, 0.6, 0.8, 0.0]),
            ],
            "inline",
        )?,
    };
    println!("cache {:?}: {} keys, dim {}", cache.source_label(), cache.len(), cache.dim());
    let embedder = Embedder::new(cache, 64, DEFAULT_EMBED_SEED);

    for text in ["  Fever ", "HEADACHE", "joint pain", "Joint   Pain"] {
        let (e, source) = embedder.embed_text(text);
        let head: Vec<String> = e.values().iter().take(4).map(|v| format!("{v:+.3}")).collect();
        println!("{:<14} -> {:<12} {:?}  norm {:.3}", format!("{text:?}"), normalize_key(text), source, e.norm());
        println!("{:16}[{}, ...]", "", head.join(", "));
    }

    let (mean, source) = embedder.embed_symptom_list(&["fever", "headache"]);
    println!("mean of fever+headache: {:?} ({source:?})", mean.values());

    let a = hash_embed("rash", 8, DEFAULT_EMBED_SEED);
    let b = hash_embed("rash", 8, DEFAULT_EMBED_SEED + 1);
    println!("hash seeds differ: {}", a != b);
    Ok(())
}
