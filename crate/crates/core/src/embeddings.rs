//! Text embeddings for disease names, symptoms and weather phrases.
//!
//! Vectors come from a read-only [`EmbeddingCache`] of precomputed transformer
//! outputs (the `EMBCACHE v1` file) when the normalized key is present, and
//! from [`hash_embed`] otherwise.
//!
//! File layout:
//!
//! ```text
//! EMBCACHE v1 dim=<D>
//! <normalized key>\t<f_1> <f_2> ... <f_D>
//! ```

use std::collections::HashMap;
use std::fs;
use std::hash::Hasher;
use std::io::{self, Write};
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;
use twox_hash::XxHash64;

use crate::tsv::atomic_write;

pub const DEFAULT_FALLBACK_DIM: usize = 64;
pub const DEFAULT_EMBED_SEED: u64 = 7;

const MAGIC: &str = "EMBCACHE v1 dim=";

/// Lowercases, trims, and collapses internal whitespace runs to one space.
pub fn normalize_key(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("line 1: expected `{MAGIC}<dim>` header")]
    BadMagic,
    #[error("line {line}: expected {expected} values, found {found}")]
    DimMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: duplicate key {key:?}")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: non-finite or unparsable value {token:?}")]
    NonFiniteValue { line: usize, token: String },
    #[error("line {line}: key {key:?} is not normalized")]
    UnnormalizedKey { line: usize, key: String },
    #[error("line {line}: missing tab between key and values")]
    MissingSeparator { line: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f64>,
}

impl Embedding {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            values: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Immutable map from normalized key to vector, all of one dimension.
#[derive(Debug, Clone)]
pub struct EmbeddingCache {
    dim: usize,
    entries: HashMap<String, Embedding>,
    source_label: String,
}

impl EmbeddingCache {
    /// A cache with no entries; every lookup falls back to hashing.
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            entries: HashMap::new(),
            source_label: "empty".to_string(),
        }
    }

    /// Builds a cache from in-memory pairs, normalizing keys.
    pub fn from_entries<I>(dim: usize, entries: I, source_label: &str) -> Result<Self, EmbeddingError>
    where
        I: IntoIterator<Item = (String, Vec<f64>)>,
    {
        let mut map = HashMap::new();
        for (i, (key, values)) in entries.into_iter().enumerate() {
            let line = i + 2;
            if values.len() != dim {
                return Err(EmbeddingError::DimMismatch {
                    line,
                    expected: dim,
                    found: values.len(),
                });
            }
            if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
                return Err(EmbeddingError::NonFiniteValue {
                    line,
                    token: bad.to_string(),
                });
            }
            let key = normalize_key(&key);
            if map.insert(key.clone(), Embedding::new(values)).is_some() {
                return Err(EmbeddingError::DuplicateKey { line, key });
            }
        }
        Ok(Self {
            dim,
            entries: map,
            source_label: source_label.to_string(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn source_label(&self) -> &str {
        &self.source_label
    }

    pub fn get(&self, normalized_key: &str) -> Option<&Embedding> {
        self.entries.get(normalized_key)
    }

    /// Keys in sorted order.
    pub fn keys(&self) -> Vec<&str> {
        let mut keys: Vec<&str> = self.entries.keys().map(String::as_str).collect();
        keys.sort_unstable();
        keys
    }

    /// Serializes in the `EMBCACHE v1` layout, keys sorted, nine significant
    /// digits per value.
    pub fn write_to(&self, w: &mut dyn Write) -> io::Result<()> {
        writeln!(w, "{MAGIC}{}", self.dim)?;
        for key in self.keys() {
            let values = self.entries[key].values();
            write!(w, "{key}\t")?;
            for (i, v) in values.iter().enumerate() {
                if i > 0 {
                    w.write_all(b" ")?;
                }
                write!(w, "{:.8e}", v)?;
            }
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        atomic_write(path, |w| self.write_to(w))
    }
}

/// Parses `EMBCACHE v1` text.
pub fn parse_cache(content: &str, source_label: &str) -> Result<EmbeddingCache, EmbeddingError> {
    let mut lines = content.split('\n').enumerate();
    let dim = match lines.next() {
        Some((_, header)) => header
            .trim_end_matches('\r')
            .strip_prefix(MAGIC)
            .and_then(|d| d.parse::<usize>().ok())
            .filter(|&d| d > 0)
            .ok_or(EmbeddingError::BadMagic)?,
        None => return Err(EmbeddingError::BadMagic),
    };
    let mut entries = HashMap::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.is_empty() {
            continue;
        }
        let (key, rest) = raw
            .split_once('\t')
            .ok_or(EmbeddingError::MissingSeparator { line })?;
        if normalize_key(key) != key || key.is_empty() {
            return Err(EmbeddingError::UnnormalizedKey {
                line,
                key: key.to_string(),
            });
        }
        let mut values = Vec::with_capacity(dim);
        for token in rest.split_ascii_whitespace() {
            match token.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    return Err(EmbeddingError::NonFiniteValue {
                        line,
                        token: token.to_string(),
                    })
                }
            }
        }
        if values.len() != dim {
            return Err(EmbeddingError::DimMismatch {
                line,
                expected: dim,
                found: values.len(),
            });
        }
        if entries
            .insert(key.to_string(), Embedding::new(values))
            .is_some()
        {
            return Err(EmbeddingError::DuplicateKey {
                line,
                key: key.to_string(),
            });
        }
    }
    Ok(EmbeddingCache {
        dim,
        entries,
        source_label: source_label.to_string(),
    })
}

pub fn load_cache(path: &Path) -> Result<EmbeddingCache, EmbeddingError> {
    let content = fs::read_to_string(path)?;
    parse_cache(&content, &path.display().to_string())
}

fn token_hash(token: &str, seed: u64) -> u64 {
    let mut h = XxHash64::with_seed(seed);
    h.write(token.as_bytes());
    h.finish()
}

fn hash_into(tokens: &[&str], dim: usize, seed: u64) -> Vec<f64> {
    let mut acc = vec![0.0; dim];
    for token in tokens {
        let h = token_hash(token, seed);
        let bucket = (h % dim as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        acc[bucket] += sign;
    }
    acc
}

/// Signed feature hashing of the whitespace tokens of `normalize_key(text)`,
/// L2-normalized.
///
/// Blank text gives the zero vector. When opposite-signed tokens collide and
/// cancel to zero, the tokens are rehashed under a derived seed so that any
/// text with at least one token gets a unit vector.
pub fn hash_embed(text: &str, dim: usize, seed: u64) -> Embedding {
    assert!(dim >= 1, "embedding dimension must be positive");
    let key = normalize_key(text);
    let tokens: Vec<&str> = key.split(' ').filter(|t| !t.is_empty()).collect();
    if tokens.is_empty() {
        return Embedding::zeros(dim);
    }
    let mut probe_seed = seed;
    loop {
        let mut acc = hash_into(&tokens, dim, probe_seed);
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            acc.iter_mut().for_each(|v| *v /= norm);
            return Embedding::new(acc);
        }
        probe_seed = probe_seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingSource {
    Cache,
    Fallback,
}

/// Cache lookup with hashing fallback.
#[derive(Debug, Clone)]
pub struct Embedder {
    cache: Arc<EmbeddingCache>,
    fallback_dim: usize,
    seed: u64,
}

impl Embedder {
    pub fn new(cache: EmbeddingCache, fallback_dim: usize, seed: u64) -> Self {
        Self {
            cache: Arc::new(cache),
            fallback_dim,
            seed,
        }
    }

    /// Hash-only embedder used when no cache file is configured.
    pub fn fallback_only(dim: usize, seed: u64) -> Self {
        Self::new(EmbeddingCache::empty(dim), dim, seed)
    }

    pub fn cache(&self) -> &EmbeddingCache {
        &self.cache
    }

    /// Width of every vector this embedder returns.
    pub fn dim(&self) -> usize {
        if self.cache.is_empty() {
            self.fallback_dim
        } else {
            self.cache.dim()
        }
    }

    pub fn embed_text(&self, text: &str) -> (Embedding, EmbeddingSource) {
        let key = normalize_key(text);
        match self.cache.get(&key) {
            Some(e) => (e.clone(), EmbeddingSource::Cache),
            None => (hash_embed(&key, self.dim(), self.seed), EmbeddingSource::Fallback),
        }
    }

    /// Mean of the per-symptom vectors; an empty list gives the zero vector.
    ///
    /// The source flag is `Cache` only when every symptom hit the cache.
    pub fn embed_symptom_list<S: AsRef<str>>(&self, symptoms: &[S]) -> (Embedding, EmbeddingSource) {
        let dim = self.dim();
        if symptoms.is_empty() {
            return (Embedding::zeros(dim), EmbeddingSource::Fallback);
        }
        let mut acc = vec![0.0; dim];
        let mut source = EmbeddingSource::Cache;
        for s in symptoms {
            let (e, src) = self.embed_text(s.as_ref());
            if src == EmbeddingSource::Fallback {
                source = EmbeddingSource::Fallback;
            }
            for (a, v) in acc.iter_mut().zip(e.values()) {
                *a += v;
            }
        }
        let n = symptoms.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        (Embedding::new(acc), source)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_key("  High   Fever "), "high fever");
        assert_eq!(normalize_key("fever"), "fever");
        assert_eq!(normalize_key("Mostly Cloudy"), "mostly cloudy");
        assert_eq!(normalize_key("\tA\n b "), "a b");
        assert_eq!(normalize_key("   "), "");
    }

    fn small_cache_text() -> String {
        let mut s = String::from("EMBCACHE v1 dim=768\n");
        for (k, base) in [("fever", 0.5), ("cough", -0.25), ("haze", 1.0e-3)] {
            s.push_str(k);
            s.push('\t');
            let vals: Vec<String> = (0..768).map(|i| format!("{:.8e}", base + i as f64 * 1e-4)).collect();
            s.push_str(&vals.join(" "));
            s.push('\n');
        }
        s
    }

    #[test]
    fn load_three_rows_at_768() {
        let cache = parse_cache(&small_cache_text(), "t").unwrap();
        assert_eq!(cache.dim(), 768);
        assert_eq!(cache.len(), 3);
        assert_eq!(cache.keys(), vec!["cough", "fever", "haze"]);
        assert!((cache.get("fever").unwrap().values()[10] - 0.501).abs() < 1e-12);
    }

    #[test]
    fn header_only_is_empty_cache() {
        let cache = parse_cache("EMBCACHE v1 dim=768\n", "t").unwrap();
        assert_eq!(cache.dim(), 768);
        assert!(cache.is_empty());
    }

    #[test]
    fn short_row_is_dim_mismatch() {
        let vals: Vec<String> = (0..767).map(|_| "1.0e0".to_string()).collect();
        let text = format!("EMBCACHE v1 dim=768\nfever\t{}\n", vals.join(" "));
        match parse_cache(&text, "t") {
            Err(EmbeddingError::DimMismatch { line: 2, expected: 768, found: 767 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn loader_errors() {
        assert!(matches!(parse_cache("EMBCACHE v2 dim=3\n", "t"), Err(EmbeddingError::BadMagic)));
        assert!(matches!(parse_cache("", "t"), Err(EmbeddingError::BadMagic)));
        assert!(matches!(parse_cache("EMBCACHE v1 dim=0\n", "t"), Err(EmbeddingError::BadMagic)));
        assert!(matches!(
            parse_cache("EMBCACHE v1 dim=1\na\t1\na\t2\n", "t"),
            Err(EmbeddingError::DuplicateKey { line: 3, .. })
        ));
        assert!(matches!(
            parse_cache("EMBCACHE v1 dim=1\na\tnan\n", "t"),
            Err(EmbeddingError::NonFiniteValue { line: 2, .. })
        ));
        assert!(matches!(
            parse_cache("EMBCACHE v1 dim=1\nFever\t1\n", "t"),
            Err(EmbeddingError::UnnormalizedKey { line: 2, .. })
        ));
        assert!(matches!(
            parse_cache("EMBCACHE v1 dim=1\nfever 1\n", "t"),
            Err(EmbeddingError::MissingSeparator { line: 2 })
        ));
    }

    #[test]
    fn write_read_write_is_byte_identical() {
        let cache = parse_cache(&small_cache_text(), "t").unwrap();
        let mut first = Vec::new();
        cache.write_to(&mut first).unwrap();
        let again = parse_cache(std::str::from_utf8(&first).unwrap(), "t").unwrap();
        let mut second = Vec::new();
        again.write_to(&mut second).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn hash_embed_contract() {
        let a = hash_embed("fever cough", 64, 7);
        let b = hash_embed("fever cough", 64, 7);
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-9);
        assert_eq!(hash_embed("   ", 64, 7), Embedding::zeros(64));
        assert_eq!(hash_embed("Fever  Cough", 64, 7), a);
        assert_ne!(hash_embed("fever cough", 64, 8), a);
    }

    #[test]
    fn embed_text_paths() {
        let cache = EmbeddingCache::from_entries(2, vec![("fever".to_string(), vec![0.3, 0.4])], "t").unwrap();
        let embedder = Embedder::new(cache, 64, 1);
        assert_eq!(embedder.dim(), 2);
        let (e, src) = embedder.embed_text("FEVER");
        assert_eq!(src, EmbeddingSource::Cache);
        assert_eq!(e.values(), &[0.3, 0.4]);
        let (e, src) = embedder.embed_text("rash");
        assert_eq!(src, EmbeddingSource::Fallback);
        assert_eq!(e, hash_embed("rash", 2, 1));
    }

    #[test]
    fn empty_cache_uses_fallback_dim() {
        let embedder = Embedder::fallback_only(DEFAULT_FALLBACK_DIM, 3);
        let (e, src) = embedder.embed_text("fever");
        assert_eq!(e.dim(), 64);
        assert_eq!(src, EmbeddingSource::Fallback);
    }

    #[test]
    fn symptom_pooling() {
        let cache = EmbeddingCache::from_entries(
            2,
            vec![("fever".to_string(), vec![1.0, 2.0]), ("cough".to_string(), vec![3.0, -4.0])],
            "t",
        )
        .unwrap();
        let embedder = Embedder::new(cache, 64, 1);
        let empty: [&str; 0] = [];
        assert_eq!(embedder.embed_symptom_list(&empty).0, Embedding::zeros(2));
        assert_eq!(embedder.embed_symptom_list(&["fever"]).0.values(), &[1.0, 2.0]);
        let (mean, src) = embedder.embed_symptom_list(&["fever", "cough"]);
        assert_eq!(mean.values(), &[2.0, -1.0]);
        assert_eq!(src, EmbeddingSource::Cache);
    }
}
