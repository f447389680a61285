//! Synthetic oracle corpora.
//!
//! Two regimes:
//!
//! - **bag-separable** (`order_sensitive = false`): every class owns
//!   `vocab_per_class` exclusive marker words; each word of a document is a
//!   marker of its class with probability `marker_rate`, otherwise a shared
//!   word. Every document carries at least one marker, so classes are linearly
//!   separable under bag-of-words features.
//! - **order-only** (`order_sensitive = true`): all classes use the same `k`
//!   marker words (`k!` ≥ number of classes) exactly once per document, and the
//!   class is the permutation in which they appear. Token bags carry no class
//!   information.
//!
//! Labels run over `0..num_classes`; label 0 doubles as the unrelated class.

use rand::Rng;

use super::{ClassTable, LabeledCorpus, Tweet};
use crate::seed;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub docs_per_class: usize,
    pub vocab_per_class: usize,
    pub shared_vocab: usize,
    pub marker_rate: f64,
    pub order_sensitive: bool,
    pub seed: u64,
    /// Document length range in words (bag-separable regime).
    pub min_words: usize,
    pub max_words: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_classes: 6,
            docs_per_class: 1000,
            vocab_per_class: 5,
            shared_vocab: 200,
            marker_rate: 0.3,
            order_sensitive: false,
            seed: 7,
            min_words: 8,
            max_words: 16,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("num_classes", self.num_classes),
            ("docs_per_class", self.docs_per_class),
            ("vocab_per_class", self.vocab_per_class),
            ("shared_vocab", self.shared_vocab),
            ("min_words", self.min_words),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("synthetic {name} must be positive")));
            }
        }
        if self.num_classes < 2 {
            return Err(Error::Config("synthetic corpora need at least 2 classes".into()));
        }
        if !(self.marker_rate > 0.0 && self.marker_rate <= 1.0) {
            return Err(Error::Config(format!(
                "marker_rate {} must be in (0, 1]",
                self.marker_rate
            )));
        }
        if self.max_words < self.min_words {
            return Err(Error::Config("max_words < min_words".into()));
        }
        Ok(())
    }

    /// Number of ordered markers used by the order-only regime.
    pub fn order_markers(&self) -> usize {
        let mut k = 1;
        let mut perms = 1usize;
        while perms < self.num_classes {
            k += 1;
            perms *= k;
        }
        k.max(2)
    }
}

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// Distinct pronounceable pseudo-word for index `i` (two or more syllables).
pub(crate) fn pseudo_word(i: usize) -> String {
    let base = CONSONANTS.len() * VOWELS.len();
    let mut n = i;
    let mut syllables = Vec::new();
    loop {
        syllables.push(n % base);
        n /= base;
        if n == 0 && syllables.len() >= 2 {
            break;
        }
    }
    let mut w = String::with_capacity(syllables.len() * 2);
    for s in syllables.iter().rev() {
        w.push(CONSONANTS[s / VOWELS.len()] as char);
        w.push(VOWELS[s % VOWELS.len()] as char);
    }
    w
}

/// `index`-th permutation of `0..k` in lexicographic order.
fn nth_permutation(k: usize, mut index: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..k).collect();
    let mut fact: Vec<usize> = vec![1; k + 1];
    for i in 1..=k {
        fact[i] = fact[i - 1] * i;
    }
    let mut out = Vec::with_capacity(k);
    for remaining in (1..=k).rev() {
        let f = fact[remaining - 1];
        let pos = index / f;
        index %= f;
        out.push(pool.remove(pos));
    }
    out
}

/// Generates a corpus; identical specs give identical corpora.
pub fn synthesize(spec: &SynthSpec) -> Result<LabeledCorpus> {
    spec.validate()?;
    let mut rng = seed::rng(seed::derive(spec.seed, seed::ns::SYNTH));
    let shared: Vec<String> = (0..spec.shared_vocab).map(pseudo_word).collect();
    let tag = format!("SYN{}", spec.num_classes);
    let mut tweets = Vec::with_capacity(spec.num_classes * spec.docs_per_class);

    if spec.order_sensitive {
        let k = spec.order_markers();
        let markers: Vec<String> = (0..k).map(|j| pseudo_word(spec.shared_vocab + j)).collect();
        let perms: Vec<Vec<usize>> = (0..spec.num_classes).map(|c| nth_permutation(k, c)).collect();
        let target = (k as f64 / spec.marker_rate).round() as usize;
        for j in 0..spec.docs_per_class {
            for (c, perm) in perms.iter().enumerate() {
                let len = (target + rng.random_range(0..=4)).saturating_sub(2).max(k);
                let mut slots: Vec<usize> = rand::seq::index::sample(&mut rng, len, k).into_vec();
                slots.sort_unstable();
                let mut words: Vec<&str> = (0..len)
                    .map(|_| shared[rng.random_range(0..shared.len())].as_str())
                    .collect();
                for (slot, &m) in slots.iter().zip(perm) {
                    words[*slot] = &markers[m];
                }
                tweets.push(Tweet {
                    id: format!("syn{c}-{j}"),
                    text: words.join(" "),
                    class_label: c as u32,
                    source_tag: tag.clone(),
                });
            }
        }
    } else {
        let markers: Vec<Vec<String>> = (0..spec.num_classes)
            .map(|c| {
                (0..spec.vocab_per_class)
                    .map(|j| pseudo_word(spec.shared_vocab + c * spec.vocab_per_class + j))
                    .collect()
            })
            .collect();
        for j in 0..spec.docs_per_class {
            for (c, own) in markers.iter().enumerate() {
                let len = rng.random_range(spec.min_words..=spec.max_words);
                let mut has_marker = false;
                let mut words: Vec<&str> = (0..len)
                    .map(|_| {
                        if rng.random_bool(spec.marker_rate) {
                            has_marker = true;
                            own[rng.random_range(0..own.len())].as_str()
                        } else {
                            shared[rng.random_range(0..shared.len())].as_str()
                        }
                    })
                    .collect();
                if !has_marker {
                    let pos = rng.random_range(0..len);
                    words[pos] = own[rng.random_range(0..own.len())].as_str();
                }
                tweets.push(Tweet {
                    id: format!("syn{c}-{j}"),
                    text: words.join(" "),
                    class_label: c as u32,
                    source_tag: tag.clone(),
                });
            }
        }
    }
    LabeledCorpus::new(
        tweets,
        ClassTable::numbered(spec.num_classes - 1, &tag).class_names(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{BTreeMap, HashSet};

    fn small(order_sensitive: bool) -> SynthSpec {
        SynthSpec {
            docs_per_class: 50,
            order_sensitive,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn pseudo_words_are_distinct() {
        let words: HashSet<String> = (0..5000).map(pseudo_word).collect();
        assert_eq!(words.len(), 5000);
        assert!(words.iter().all(|w| w.len() >= 4 && w.chars().all(|c| c.is_ascii_lowercase())));
    }

    #[test]
    fn permutations_are_lexicographic() {
        let all: Vec<Vec<usize>> = (0..6).map(|i| nth_permutation(3, i)).collect();
        assert_eq!(all[0], vec![0, 1, 2]);
        assert_eq!(all[1], vec![0, 2, 1]);
        assert_eq!(all[5], vec![2, 1, 0]);
    }

    #[test]
    fn same_seed_same_corpus() {
        let spec = SynthSpec { docs_per_class: 1000, ..SynthSpec::default() };
        let a = synthesize(&spec).unwrap();
        let b = synthesize(&spec).unwrap();
        let (mut x, mut y) = (Vec::new(), Vec::new());
        a.write_tsv(&mut x).unwrap();
        b.write_tsv(&mut y).unwrap();
        assert_eq!(x, y);
        assert_eq!(a.len(), 6000);
        let other = synthesize(&SynthSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(other, a);
    }

    #[test]
    fn separable_regime_has_class_exclusive_markers() {
        let spec = small(false);
        let c = synthesize(&spec).unwrap();
        let shared: HashSet<String> = (0..spec.shared_vocab).map(pseudo_word).collect();
        let mut owner: BTreeMap<String, u32> = BTreeMap::new();
        for t in c.tweets() {
            let markers: Vec<&str> = t.text.split(' ').filter(|w| !shared.contains(*w)).collect();
            assert!(!markers.is_empty());
            for m in markers {
                let prev = owner.insert(m.to_string(), t.class_label);
                assert!(prev.is_none() || prev == Some(t.class_label));
            }
        }
    }

    #[test]
    fn order_regime_has_identical_marker_bags() {
        let spec = small(true);
        let c = synthesize(&spec).unwrap();
        let k = spec.order_markers();
        assert_eq!(k, 3);
        let markers: Vec<String> = (0..k).map(|j| pseudo_word(spec.shared_vocab + j)).collect();
        let mut orders: BTreeMap<u32, HashSet<Vec<usize>>> = BTreeMap::new();
        for t in c.tweets() {
            let seq: Vec<usize> = t
                .text
                .split(' ')
                .filter_map(|w| markers.iter().position(|m| m == w))
                .collect();
            let mut bag = seq.clone();
            bag.sort_unstable();
            assert_eq!(bag, vec![0, 1, 2]);
            orders.entry(t.class_label).or_default().insert(seq);
        }
        // one order per class, all different
        let distinct: HashSet<Vec<usize>> = orders.values().map(|s| {
            assert_eq!(s.len(), 1);
            s.iter().next().unwrap().clone()
        }).collect();
        assert_eq!(distinct.len(), spec.num_classes);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(synthesize(&SynthSpec { marker_rate: 0.0, ..small(false) }).is_err());
        assert!(synthesize(&SynthSpec { marker_rate: 1.5, ..small(false) }).is_err());
        assert!(synthesize(&SynthSpec { docs_per_class: 0, ..small(false) }).is_err());
        assert!(synthesize(&SynthSpec { num_classes: 1, ..small(false) }).is_err());
    }
}
