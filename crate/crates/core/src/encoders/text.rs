use super::{l2_norm, mat_vec, seeded_gaussian, Embedding, TanhNormalize, WeightFile};
use crate::error::{Error, Result};

pub const TEXT_HASH_BINS: usize = 4096;
const DOMAIN: u64 = 0x7e47_5eed_0000_0003;
const START: char = '\u{2}';
const END: char = '\u{3}';

pub(super) const PROJ_TENSOR: &str = "text_proj";

pub fn fnv1a_64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Counts of lowercase character trigrams hashed into 4096 bins. The text is
/// framed by start/end markers so one- and two-character strings still
/// produce trigrams.
pub fn text_trigram_counts(text: &str) -> Vec<f64> {
    let chars: Vec<char> = std::iter::once(START)
        .chain(text.to_lowercase().chars())
        .chain(std::iter::once(END))
        .collect();
    let mut counts = vec![0.0; TEXT_HASH_BINS];
    let mut buf = [0u8; 12];
    for w in chars.windows(3) {
        let mut len = 0;
        for c in w {
            len += c.encode_utf8(&mut buf[len..]).len();
        }
        counts[(fnv1a_64(&buf[..len]) % TEXT_HASH_BINS as u64) as usize] += 1.0;
    }
    counts
}

/// Reference text encoder: L2-normalized trigram counts, random projection,
/// `tanh`, L2 normalization.
#[derive(Clone, Debug)]
pub struct TextEncoder {
    dim: usize,
    proj: Vec<f64>,
}

impl TextEncoder {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self {
            dim,
            proj: seeded_gaussian(seed, DOMAIN, dim, TEXT_HASH_BINS, 1.0),
        }
    }

    /// Loads `text_proj [dim x 4096]`.
    pub fn from_weights(w: &WeightFile, dim: usize) -> Result<Self> {
        Ok(Self {
            dim,
            proj: w.expect(PROJ_TENSOR, &[dim, TEXT_HASH_BINS])?.to_f64(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn encode(&self, text: &str) -> Result<Embedding> {
        if text.is_empty() {
            return Err(Error::param("cannot encode empty text"));
        }
        let mut counts = text_trigram_counts(text);
        let norm = l2_norm(&counts);
        for c in &mut counts {
            *c /= norm;
        }
        let mut h = vec![0.0; self.dim];
        mat_vec(&self.proj, &counts, &mut h);
        Ok(TanhNormalize::forward(&h)?.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a_64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a_64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a_64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn case_folding() {
        let enc = TextEncoder::new(128, 0);
        assert_eq!(enc.encode("A").unwrap(), enc.encode("a").unwrap());
        assert_eq!(
            enc.encode("A Frog").unwrap(),
            enc.encode("a frog").unwrap()
        );
    }

    #[test]
    fn trailing_space_changes_embedding() {
        let enc = TextEncoder::new(128, 0);
        let a = enc.encode("a frog").unwrap();
        let b = enc.encode("a frog ").unwrap();
        let cos = a.cosine_similarity(&b);
        assert!(cos < 1.0 - 1e-9, "cos = {cos}");
        assert!((a.norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn empty_text_rejected() {
        assert!(TextEncoder::new(8, 0).encode("").is_err());
    }

    #[test]
    fn trigram_count_total() {
        // "ab" framed -> [START, a, b, END] -> 2 trigrams
        assert_eq!(text_trigram_counts("ab").iter().sum::<f64>(), 2.0);
        assert_eq!(text_trigram_counts("héllo").iter().sum::<f64>(), 5.0);
    }
}
