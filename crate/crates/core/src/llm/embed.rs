//! Deterministic offline embedder: hashed bag of words, L2-normalized.

/// Model id that selects the local embedder instead of a provider model.
pub const FALLBACK_EMBEDDING_MODEL: &str = "local-hash-bow";

/// Output dimension of the local embedder.
pub const FALLBACK_DIM: usize = 64;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

/// Lowercased alphanumeric runs.
pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Each token adds +-1 to bucket `hash % dim`; the sign is the hash's top bit.
/// Text without tokens embeds to the zero vector.
pub fn fallback_embed(text: &str, dim: usize) -> Vec<f32> {
    assert!(dim > 0, "embedding dimension must be positive");
    let mut v = vec![0.0f64; dim];
    for token in tokens(text) {
        let h = fnv1a(token.as_bytes());
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        v[(h % dim as u64) as usize] += sign;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v.into_iter().map(|x| x as f32).collect()
}
