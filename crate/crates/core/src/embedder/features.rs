use std::collections::BTreeMap;

use xxhash_rust::xxh64::xxh64;

use super::tokenize::{tokenize, TokenSeq};

/// Sparse, L2-normalized hashed feature vector. Entries are sorted by index
/// and indices are unique.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureVector {
    pub entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
    }

    pub fn indices(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().map(|&(i, _)| i)
    }
}

/// The string that character 3-grams are taken from: tokens joined by one
/// space, padded with two spaces on each side so every word contributes its
/// own boundary grams.
pub fn char_gram_text(tokens: &TokenSeq) -> String {
    let mut s = String::from("  ");
    s.push_str(&tokens.tokens.join(" "));
    s.push_str("  ");
    s
}

/// Feature keys before hashing: `u:<token>`, `b:<token> <token>` and
/// `c:<3 chars>`. Returned with their counts, sorted by key.
pub fn feature_keys(tokens: &TokenSeq) -> BTreeMap<String, u32> {
    let mut counts = BTreeMap::new();
    if tokens.is_empty() {
        return counts;
    }
    for t in tokens.iter() {
        *counts.entry(format!("u:{t}")).or_insert(0) += 1;
    }
    for w in tokens.tokens.windows(2) {
        *counts.entry(format!("b:{} {}", w[0], w[1])).or_insert(0) += 1;
    }
    let chars: Vec<char> = char_gram_text(tokens).chars().collect();
    for w in chars.windows(3) {
        let mut k = String::with_capacity(2 + 12);
        k.push_str("c:");
        k.extend(w.iter());
        *counts.entry(k).or_insert(0) += 1;
    }
    counts
}

/// Bucket of a feature key: xxHash64 of the key bytes seeded with `hash_seed`,
/// reduced modulo `feat_dim`.
pub fn feature_index(key: &str, feat_dim: usize, hash_seed: u64) -> u32 {
    (xxh64(key.as_bytes(), hash_seed) % feat_dim as u64) as u32
}

/// Hashed, sublinear-tf weighted, L2-normalized features of a token sequence.
/// Weight of a key is `1 + ln(count)`; colliding keys add.
pub fn featurize_tokens(tokens: &TokenSeq, feat_dim: usize, hash_seed: u64) -> FeatureVector {
    let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
    for (key, count) in feature_keys(tokens) {
        let w = 1.0 + f64::from(count).ln();
        *acc.entry(feature_index(&key, feat_dim, hash_seed)).or_insert(0.0) += w;
    }
    let norm = acc.values().map(|w| w * w).sum::<f64>().sqrt();
    if norm == 0.0 {
        return FeatureVector::default();
    }
    FeatureVector {
        entries: acc.into_iter().map(|(i, w)| (i, w / norm)).collect(),
    }
}

pub fn featurize_text(text: &str, feat_dim: usize, hash_seed: u64) -> FeatureVector {
    featurize_tokens(&tokenize(text), feat_dim, hash_seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    const DIM: usize = 1 << 18;

    fn grams(text: &str, prefix: &str) -> BTreeSet<String> {
        feature_keys(&tokenize(text))
            .into_keys()
            .filter(|k| k.starts_with(prefix))
            .collect()
    }

    #[test]
    fn deterministic() {
        let a = featurize_text("What is the legal status?", DIM, 7);
        let b = featurize_text("What is the legal status?", DIM, 7);
        assert_eq!(a, b);
    }

    #[test]
    fn unit_norm() {
        for t in ["a", "patent law", "發明專利 annual fee 2024", "aaaa aaaa aaaa"] {
            let f = featurize_text(t, DIM, 0);
            assert!((f.norm() - 1.0).abs() < 1e-9, "{t}");
        }
    }

    #[test]
    fn empty_is_zero_vector() {
        assert!(featurize_text("", DIM, 0).is_empty());
        assert!(featurize_text("?!", DIM, 0).is_empty());
    }

    #[test]
    fn indices_in_range_and_sorted() {
        let f = featurize_text("the quick brown fox jumps over the lazy dog", 97, 3);
        assert!(f.indices().all(|i| (i as usize) < 97));
        assert!(f.entries.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn token_order_changes_char_grams_not_unigrams() {
        // "a b c" vs "a c b": same unigram features, different character 3-grams.
        let (x, y) = ("a b c", "a c b");
        assert_eq!(grams(x, "u:"), grams(y, "u:"));
        assert_ne!(grams(x, "c:"), grams(y, "c:"));
        // enumerated by hand
        let expect: BTreeSet<String> = ["c:  a", "c: a ", "c:a b", "c: b ", "c:b c", "c: c ", "c:c  "]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(grams(x, "c:"), expect);
    }

    #[test]
    fn literal_transposed_word_shares_boundary_gram() {
        // single tokens "abc" / "acb": unigrams differ, the leading boundary gram is shared
        let (x, y) = (grams("abc", "c:"), grams("acb", "c:"));
        assert!(x.contains("c:  a") && y.contains("c:  a"));
        assert_ne!(grams("abc", "u:"), grams("acb", "u:"));
    }

    #[test]
    fn sublinear_tf() {
        let keys = feature_keys(&tokenize("fee fee fee"));
        assert_eq!(keys["u:fee"], 3);
        assert_eq!(keys["b:fee fee"], 2);
    }
}
