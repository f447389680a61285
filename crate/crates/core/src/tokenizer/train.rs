use std::collections::HashMap;

use super::{pretokenize, Vocab, CONTINUATION, RESERVED, URL, USER};
use crate::corpus::LabeledCorpus;
use crate::{Error, Result};

/// Learns a subword vocabulary of at most `size` entries (reserved tokens
/// included).
///
/// Every character seen in the corpus enters the vocabulary, in both its
/// word-initial and `##`-continuation form as observed. Then the most frequent
/// adjacent symbol pair is merged repeatedly until `size` is reached or no
/// pairs remain. Count ties go to the pair that occurs first in corpus order.
pub fn train_vocab(corpus: &LabeledCorpus, size: usize) -> Result<Vocab> {
    if corpus.is_empty() {
        return Err(Error::Config("cannot train a vocabulary on an empty corpus".into()));
    }

    // Symbol interning.
    let mut symbols: Vec<String> = Vec::new();
    let mut symbol_ids: HashMap<String, u32> = HashMap::new();
    let mut intern = |s: String, symbols: &mut Vec<String>| -> u32 {
        *symbol_ids.entry(s.clone()).or_insert_with(|| {
            symbols.push(s);
            symbols.len() as u32 - 1
        })
    };

    // Unique words in first-appearance order, as symbol sequences with counts.
    let mut word_index: HashMap<String, usize> = HashMap::new();
    let mut words: Vec<(Vec<u32>, u64)> = Vec::new();
    for tweet in corpus.tweets() {
        for w in pretokenize(&tweet.text) {
            if w == URL || w == USER {
                continue;
            }
            if let Some(&i) = word_index.get(&w) {
                words[i].1 += 1;
                continue;
            }
            let seq: Vec<u32> = w
                .chars()
                .enumerate()
                .map(|(i, c)| {
                    let s = if i == 0 { c.to_string() } else { format!("{CONTINUATION}{c}") };
                    intern(s, &mut symbols)
                })
                .collect();
            word_index.insert(w, words.len());
            words.push((seq, 1));
        }
    }

    let alphabet = symbols.len();
    if size < RESERVED.len() + alphabet {
        return Err(Error::Config(format!(
            "vocabulary size {size} is smaller than the {} reserved tokens plus the {alphabet}-symbol character alphabet",
            RESERVED.len()
        )));
    }

    let mut vocab_tokens: Vec<String> = symbols.clone();
    let mut in_vocab: std::collections::HashSet<String> = vocab_tokens.iter().cloned().collect();

    while RESERVED.len() + vocab_tokens.len() < size {
        // (count, first position) per adjacent pair
        let mut stats: HashMap<(u32, u32), (u64, usize)> = HashMap::new();
        let mut position = 0usize;
        for (seq, count) in &words {
            for pair in seq.windows(2) {
                let e = stats.entry((pair[0], pair[1])).or_insert((0, position));
                e.0 += count;
                position += 1;
            }
            position += 1;
        }
        let Some((&(left, right), _)) = stats
            .iter()
            .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
        else {
            break;
        };

        let merged = format!(
            "{}{}",
            symbols[left as usize],
            symbols[right as usize]
                .strip_prefix(CONTINUATION)
                .unwrap_or(&symbols[right as usize])
        );
        let merged_id = intern(merged.clone(), &mut symbols);
        if in_vocab.insert(merged.clone()) {
            vocab_tokens.push(merged);
        }

        for (seq, _) in words.iter_mut() {
            if seq.len() < 2 {
                continue;
            }
            let mut out = Vec::with_capacity(seq.len());
            let mut i = 0;
            while i < seq.len() {
                if i + 1 < seq.len() && seq[i] == left && seq[i + 1] == right {
                    out.push(merged_id);
                    i += 2;
                } else {
                    out.push(seq[i]);
                    i += 1;
                }
            }
            *seq = out;
        }
    }

    Vocab::from_tokens(vocab_tokens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ClassTable, LabeledCorpus, Tweet};
    use crate::tokenizer::{tokenize, UNK_ID};

    fn corpus(texts: &[&str]) -> LabeledCorpus {
        let tweets = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Tweet {
                id: i.to_string(),
                text: t.to_string(),
                class_label: 0,
                source_tag: String::new(),
            })
            .collect();
        LabeledCorpus::new(tweets, ClassTable::c6().class_names()).unwrap()
    }

    #[test]
    fn most_frequent_pair_is_merged_first() {
        // Plain character pairs: "aa" occurs 3 times, "ab" twice.
        let c = corpus(&["aaab", "aab"]);
        let mut counts: HashMap<(char, char), usize> = HashMap::new();
        for w in ["aaab", "aab"] {
            let cs: Vec<char> = w.chars().collect();
            for p in cs.windows(2) {
                *counts.entry((p[0], p[1])).or_default() += 1;
            }
        }
        assert_eq!(counts[&('a', 'a')], 3);
        assert_eq!(counts.values().max(), Some(&3));

        let v = train_vocab(&c, 260).unwrap();
        assert!(v.id("aa").is_some());
        // first merge after the alphabet
        assert_eq!(v.tokens()[RESERVED.len() + 3], "aa");
        for ch in ["a", "##a", "##b"] {
            assert!(v.id(ch).is_some(), "{ch}");
        }
    }

    #[test]
    fn deterministic() {
        let texts = ["Flooding in Calgary #yycflood", "flood waters rise", "calgary flood relief"];
        let a = train_vocab(&corpus(&texts), 300).unwrap();
        let b = train_vocab(&corpus(&texts), 300).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn size_below_alphabet_is_rejected() {
        let err = train_vocab(&corpus(&["abcdefgh"]), 8).unwrap_err();
        assert!(err.to_string().contains("alphabet"));
    }

    #[test]
    fn seen_characters_never_map_to_unk() {
        let texts = ["storm surge warning", "évacuation ordered ✈"];
        let v = train_vocab(&corpus(&texts), 40).unwrap();
        for t in texts {
            let s = tokenize(t, &v, 64);
            assert!(!s.ids.contains(&UNK_ID), "{t}");
        }
        // whole frequent words become single pieces when the budget allows
        let big = train_vocab(&corpus(&texts), 400).unwrap();
        assert!(big.id("storm").is_some());
    }
}
