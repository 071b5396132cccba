//! Class-name tokenization and dense vectors per class.
//!
//! Two sources are supported: precomputed vectors from a file (the output of
//! any external code-embedding model) and a built-in lexical embedder that
//! hashes TF-IDF weighted word and character-trigram features.

use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::CorpusManifest;
use crate::error::{Error, Result};
use crate::seed::{fnv1a, mix64};

pub const DEFAULT_DIM: usize = 256;
pub const MIN_DIM: usize = 8;

/// Relative weight of a character trigram compared with a whole word.
const TRIGRAM_WEIGHT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedName {
    pub fqcn: String,
    pub tokens: Vec<String>,
}

/// Splits a name on dots, underscores and `$`, then on camel-case
/// boundaries. Digits stay attached to the token before them, and an
/// uppercase run followed by a lowercase letter splits before its last
/// capital (`XMLParser` → `xml`, `parser`).
pub fn tokenize_text(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for part in text.split(['.', '_', '$']).filter(|p| !p.is_empty()) {
        let chars: Vec<char> = part.chars().collect();
        let mut start = 0;
        for i in 1..chars.len() {
            let prev = chars[i - 1];
            let cur = chars[i];
            let boundary = if cur.is_uppercase() {
                prev.is_lowercase()
                    || prev.is_ascii_digit()
                    || prev.is_uppercase() && chars.get(i + 1).is_some_and(|n| n.is_lowercase())
            } else {
                false
            };
            if boundary {
                tokens.push(chars[start..i].iter().collect::<String>().to_lowercase());
                start = i;
            }
        }
        tokens.push(chars[start..].iter().collect::<String>().to_lowercase());
    }
    tokens
}

pub fn tokenize(fqcn: &str) -> TokenizedName {
    TokenizedName {
        fqcn: fqcn.to_string(),
        tokens: tokenize_text(fqcn),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ExternalFile,
    Lexical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    pub fqcns: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
    pub dim: usize,
    pub provenance: Provenance,
}

impl EmbeddingMatrix {
    pub fn new(fqcns: Vec<String>, vectors: Vec<Vec<f64>>, provenance: Provenance) -> Result<Self> {
        if fqcns.len() != vectors.len() {
            return Err(Error::InvalidInput(format!(
                "{} names but {} vectors",
                fqcns.len(),
                vectors.len()
            )));
        }
        let dim = vectors.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(Error::InvalidInput("embedding dimension must be positive".into()));
        }
        for (name, v) in fqcns.iter().zip(&vectors) {
            if v.len() != dim {
                return Err(Error::InvalidInput(format!(
                    "vector for `{name}` has length {}, expected {dim}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput(format!("vector for `{name}` is not finite")));
            }
            if v.iter().all(|&x| x == 0.0) {
                return Err(Error::InvalidInput(format!("vector for `{name}` is all zeros")));
            }
        }
        Ok(EmbeddingMatrix {
            fqcns,
            vectors,
            dim,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.fqcns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fqcns.is_empty()
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Word features and their `<word>`-bounded character trigrams, each tagged
/// with its kind so a word and a trigram never collide.
fn features(tokens: &[String]) -> HashMap<String, f64> {
    let mut out: HashMap<String, f64> = HashMap::new();
    for tok in tokens {
        *out.entry(format!("w:{tok}")).or_default() += 1.0;
        let bounded: Vec<char> = format!("<{tok}>").chars().collect();
        for gram in bounded.windows(3) {
            let g: String = gram.iter().collect();
            *out.entry(format!("g:{g}")).or_default() += TRIGRAM_WEIGHT;
        }
    }
    out
}

/// Deterministic lexical embedding: TF-IDF over word and trigram features,
/// feature-hashed into `dim` signed buckets and L2-normalized.
pub fn embed_lexical(manifest: &CorpusManifest, dim: usize, seed: u64) -> Result<EmbeddingMatrix> {
    if dim < MIN_DIM {
        return Err(Error::InvalidInput(format!("embedding dim must be >= {MIN_DIM}, got {dim}")));
    }
    let n = manifest.len();
    if n < 2 {
        return Err(Error::Degenerate(format!(
            "lexical embedding needs at least 2 classes, got {n}"
        )));
    }
    let docs: Vec<HashMap<String, f64>> = manifest
        .entities
        .par_iter()
        .map(|e| features(&tokenize_text(&e.text)))
        .collect();

    let mut df: HashMap<&str, usize> = HashMap::new();
    for doc in &docs {
        for key in doc.keys() {
            *df.entry(key.as_str()).or_default() += 1;
        }
    }
    let nf = n as f64;
    let idf: HashMap<&str, f64> = df
        .into_iter()
        .map(|(k, d)| (k, ((1.0 + nf) / (1.0 + d as f64)).ln() + 1.0))
        .collect();

    let bucket_basis = mix64(seed);
    let sign_basis = mix64(seed ^ 0x5bd1_e995);
    let vectors: Vec<Vec<f64>> = manifest
        .entities
        .par_iter()
        .zip(docs.par_iter())
        .map(|(entity, doc)| {
            let mut v = vec![0.0; dim];
            // Sorted keys make floating-point accumulation order fixed.
            let mut keys: Vec<&String> = doc.keys().collect();
            keys.sort();
            for key in keys {
                let weight = doc[key] * idf[key.as_str()];
                let bucket = (fnv1a(key.as_bytes(), bucket_basis) % dim as u64) as usize;
                let sign = if fnv1a(key.as_bytes(), sign_basis) & 1 == 0 { 1.0 } else { -1.0 };
                v[bucket] += sign * weight;
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                v.iter_mut().for_each(|x| *x /= norm);
            } else {
                // All features cancelled out in the hash; fall back to a
                // single bucket chosen by the name itself.
                let b = (fnv1a(entity.fqcn.as_bytes(), bucket_basis) % dim as u64) as usize;
                v[b] = 1.0;
            }
            v
        })
        .collect();

    EmbeddingMatrix::new(
        manifest.entities.iter().map(|e| e.fqcn.clone()).collect(),
        vectors,
        Provenance::Lexical,
    )
}

fn parse_vector_file(path: &Path, text: &str) -> Result<Vec<(String, Vec<f64>, usize)>> {
    if text.trim_start().starts_with('{') {
        let map: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(text).map_err(|e| Error::json(path, e))?;
        return map
            .into_iter()
            .map(|(k, v)| {
                let v: Vec<f64> = serde_json::from_value(v).map_err(|e| Error::json(path, e))?;
                Ok((k, v, 0))
            })
            .collect();
    }
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| Error::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let (name, rest) = line
            .split_once('\t')
            .ok_or_else(|| malformed("expected `<fqcn>\\t<values>`".into()))?;
        let values = rest
            .split_whitespace()
            .map(f64::from_str)
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| malformed(format!("bad number: {e}")))?;
        out.push((name.trim().to_string(), values, i + 1));
    }
    Ok(out)
}

/// Loads precomputed vectors and restricts them to the manifest, in
/// manifest order. Extra names in the file are dropped.
pub fn load_external_embeddings(path: &Path, manifest: &CorpusManifest) -> Result<EmbeddingMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let records = parse_vector_file(path, &text)?;
    let mut dim = None;
    let mut table: HashMap<String, Vec<f64>> = HashMap::with_capacity(records.len());
    for (name, v, line) in records {
        match dim {
            None => dim = Some(v.len()),
            Some(d) if d != v.len() => {
                return Err(Error::Malformed {
                    path: path.to_path_buf(),
                    line,
                    message: format!("vector for `{name}` has length {}, expected {d}", v.len()),
                })
            }
            _ => {}
        }
        table.insert(name, v);
    }
    let missing: Vec<String> = manifest
        .entities
        .iter()
        .filter(|e| !table.contains_key(&e.fqcn))
        .map(|e| e.fqcn.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingEmbeddings(missing));
    }
    let fqcns: Vec<String> = manifest.entities.iter().map(|e| e.fqcn.clone()).collect();
    let vectors = fqcns.iter().map(|f| table.remove(f).expect("checked")).collect();
    EmbeddingMatrix::new(fqcns, vectors, Provenance::ExternalFile)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    #[default]
    ClassName,
    PackageName,
}

impl FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "class" | "class_name" => Ok(Granularity::ClassName),
            "package" | "package_name" => Ok(Granularity::PackageName),
            other => Err(Error::InvalidInput(format!("unknown granularity `{other}`"))),
        }
    }
}

/// Chooses the text each entity is embedded from. Package mode falls back
/// to the simple name for default-package classes.
pub fn granularity_view(manifest: &CorpusManifest, mode: Granularity) -> CorpusManifest {
    let mut out = manifest.clone();
    if mode == Granularity::PackageName {
        for e in &mut out.entities {
            e.text = if e.package_name.is_empty() {
                e.simple_name.clone()
            } else {
                e.package_name.clone()
            };
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s).tokens
    }

    #[test]
    fn tokenizer_cases() {
        assert_eq!(toks("pkg2.Class1"), ["pkg2", "class1"]);
        assert_eq!(toks("org.http.XMLParserFactory"), ["org", "http", "xml", "parser", "factory"]);
        assert_eq!(toks("a.b.C"), ["a", "b", "c"]);
        assert_eq!(toks("io.Utf8Reader"), ["io", "utf8", "reader"]);
        assert_eq!(toks("io.UTF8Encoder"), ["io", "utf8", "encoder"]);
        assert_eq!(toks("x.snake_case_Name"), ["x", "snake", "case", "name"]);
        assert_eq!(toks("x.Outer$Inner"), ["x", "outer", "inner"]);
        assert_eq!(toks("x.getHTTPResponse2Code"), ["x", "get", "http", "response2", "code"]);
    }

    #[test]
    fn tokenizer_idempotent_on_plain_tokens() {
        for t in ["abc", "utf8", "x", "class1"] {
            assert_eq!(toks(t), [t]);
        }
    }

    #[test]
    fn lexical_rejects_tiny_corpus_and_dim() {
        let one = CorpusManifest::from_names(["a.B"]).unwrap();
        assert!(embed_lexical(&one, 64, 0).is_err());
        let two = CorpusManifest::from_names(["a.B", "a.C"]).unwrap();
        assert!(embed_lexical(&two, 4, 0).is_err());
    }

    #[test]
    fn granularity_modes() {
        let m = CorpusManifest::from_names(["p.A", "p.B", "C"]).unwrap();
        assert_eq!(granularity_view(&m, Granularity::ClassName), m);
        let pv = granularity_view(&m, Granularity::PackageName);
        assert_eq!(pv.entities[0].text, "p");
        assert_eq!(pv.entities[1].text, "p");
        assert_eq!(pv.entities[2].text, "C");
        assert_eq!(pv.entities[0].fqcn, "p.A");
    }
}
