//! Text embedders and cosine similarity.

use thiserror::Error;

use crate::metrics::bleu_tokens;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{0}")]
pub struct EmbedError(pub String);

/// Maps texts to fixed-dimension vectors, one per input, deterministically.
pub trait Embedder: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError>;
}

/// Cosine similarity; `None` if either vector has zero norm or the
/// dimensions differ.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    // sqrt of the squared-norm product keeps cos(v, v) exactly 1
    Some((dot / (na * nb).sqrt()).clamp(-1.0, 1.0))
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Offline embedder: hashed word unigrams and character trigrams.
///
/// Dimension 0 is a constant bias so no text maps to the zero vector.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub const DEFAULT_DIM: usize = 256;

    pub fn new(dim: usize) -> Self {
        assert!(dim >= 2, "hash embedder needs at least two dimensions");
        Self { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        v[0] = 1.0;
        let buckets = (self.dim - 1) as u64;
        let mut bump = |feature: &str| {
            let h = fnv1a(feature.as_bytes());
            let idx = 1 + (h % buckets) as usize;
            let sign = if (h >> 63) & 1 == 0 { 1.0 } else { -1.0 };
            v[idx] += sign;
        };
        for tok in bleu_tokens(text) {
            bump(&format!("w:{tok}"));
            let chars: Vec<char> = format!("^{tok}$").chars().collect();
            for tri in chars.windows(3) {
                bump(&format!("c:{}", tri.iter().collect::<String>()));
            }
        }
        v
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIM)
    }
}

impl Embedder for HashEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_basics() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 2.0]), Some(0.0));
        assert!((cosine(&[1.0, 1.0], &[2.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        let v = [0.3, -1.7, 2.9, 1e-3];
        assert_eq!(cosine(&v, &v), Some(1.0));
        assert_eq!(cosine(&[1.0, 0.0], &[-3.0, 0.0]), Some(-1.0));
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), None);
        assert_eq!(cosine(&[1.0], &[1.0, 0.0]), None);
    }

    #[test]
    fn hash_embedder_is_deterministic_and_nonzero() {
        let e = HashEmbedder::default();
        let texts = vec!["10 mL".to_string(), "10 mL".to_string(), String::new()];
        let v = e.embed(&texts).unwrap();
        assert_eq!(v[0], v[1]);
        assert_eq!(v[0].len(), HashEmbedder::DEFAULT_DIM);
        assert!(cosine(&v[2], &v[0]).is_some());
        let near = e.embed(&["10 mL".into(), "10 uL".into(), "overnight".into()]).unwrap();
        assert!(cosine(&near[0], &near[1]).unwrap() > cosine(&near[0], &near[2]).unwrap());
    }
}
