//! Subword tokenization.
//!
//! Text is lowercased and NFC-normalized, URLs and @-mentions collapse to the
//! `<url>` / `<user>` sentinels, and the rest is split on whitespace and
//! punctuation. Words are then segmented by greedy longest match against the
//! vocabulary; non-initial pieces carry the `##` continuation prefix.

mod train;

use std::collections::HashMap;
use std::path::Path;

use sha2::{Digest, Sha256};
use unicode_normalization::UnicodeNormalization;

pub use train::train_vocab;

use crate::{Error, Result};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const URL: &str = "<url>";
pub const USER: &str = "<user>";
pub const CONTINUATION: &str = "##";

/// Reserved tokens, in id order.
pub const RESERVED: [&str; 5] = [PAD, UNK, CLS, URL, USER];

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const CLS_ID: u32 = 2;

/// Default sequence length in subword positions (including `[CLS]`).
pub const DEFAULT_MAX_LEN: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    /// Builds a vocabulary from non-reserved tokens; reserved tokens are
    /// prepended.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let all = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(tokens.into_iter().map(Into::into));
        Self::from_full_list(all.collect())
    }

    fn from_full_list(tokens: Vec<String>) -> Result<Self> {
        for (i, r) in RESERVED.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(r) {
                return Err(Error::data(
                    "vocabulary",
                    format!("line {} must be the reserved token {r}", i + 1),
                ));
            }
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t == CONTINUATION {
                return Err(Error::data("vocabulary", format!("line {}: empty token", i + 1)));
            }
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::data("vocabulary", format!("line {}: duplicate token '{t}'", i + 1)));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn is_special(id: u32) -> bool {
        id == PAD_ID || id == UNK_ID || id == CLS_ID
    }

    /// One token per line; the line number is the id.
    pub fn to_text(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_full_list(text.lines().map(str::to_string).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// SHA-256 of the vocabulary file contents, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

/// A `[CLS]`-prefixed, padded sequence of token ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub mask: Vec<u8>,
    /// Length before truncation, counting `[CLS]`.
    pub original_length: usize,
}

impl TokenSequence {
    /// Number of real (unmasked) positions.
    pub fn real_len(&self) -> usize {
        self.mask.iter().take_while(|&&m| m == 1).count()
    }

    pub fn max_len(&self) -> usize {
        self.ids.len()
    }
}

fn is_url(word: &str) -> bool {
    word.starts_with("http://") || word.starts_with("https://") || word.starts_with("www.")
}

fn is_mention(word: &str) -> bool {
    word.len() > 1 && word.starts_with('@') && word[1..].chars().next().is_some_and(|c| c.is_alphanumeric() || c == '_')
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(c,
            '\u{00A1}'..='\u{00BF}' | '\u{2000}'..='\u{206F}' | '\u{3000}'..='\u{303F}' | '\u{FF01}'..='\u{FF0F}')
}

/// Normalizes and splits text into words (before subword segmentation).
pub fn pretokenize(text: &str) -> Vec<String> {
    let normalized: String = text.nfc().collect::<String>().to_lowercase();
    let mut words = Vec::new();
    for raw in normalized.split_whitespace() {
        if is_url(raw) {
            words.push(URL.to_string());
            continue;
        }
        if is_mention(raw) {
            words.push(USER.to_string());
            continue;
        }
        let mut current = String::new();
        for c in raw.chars() {
            if c.is_control() {
                continue;
            }
            if is_punctuation(c) {
                if !current.is_empty() {
                    words.push(std::mem::take(&mut current));
                }
                words.push(c.to_string());
            } else {
                current.push(c);
            }
        }
        if !current.is_empty() {
            words.push(current);
        }
    }
    words
}

/// Greedy longest-match segmentation of one word. Characters with no
/// vocabulary entry become `[UNK]` individually.
pub fn segment_word(word: &str, vocab: &Vocab, out: &mut Vec<u32>) {
    if let Some(id) = vocab.id(word) {
        out.push(id);
        return;
    }
    let chars: Vec<(usize, char)> = word.char_indices().collect();
    let mut start = 0;
    let mut piece = String::new();
    while start < chars.len() {
        let mut matched = None;
        for end in (start + 1..=chars.len()).rev() {
            let from = chars[start].0;
            let to = chars.get(end).map_or(word.len(), |c| c.0);
            piece.clear();
            if start > 0 {
                piece.push_str(CONTINUATION);
            }
            piece.push_str(&word[from..to]);
            if let Some(id) = vocab.id(&piece) {
                matched = Some((id, end));
                break;
            }
        }
        match matched {
            Some((id, end)) => {
                out.push(id);
                start = end;
            }
            None => {
                out.push(UNK_ID);
                start += 1;
            }
        }
    }
}

/// Tokenizes `text` into a `[CLS]`-prefixed sequence of exactly `max_len`
/// positions, truncating (keeping `[CLS]`) or padding as needed.
pub fn tokenize(text: &str, vocab: &Vocab, max_len: usize) -> TokenSequence {
    assert!(max_len >= 2, "max_len must leave room for [CLS] and one token");
    let mut ids = vec![CLS_ID];
    for word in pretokenize(text) {
        segment_word(&word, vocab, &mut ids);
    }
    let original_length = ids.len();
    ids.truncate(max_len);
    let real = ids.len();
    ids.resize(max_len, PAD_ID);
    let mut mask = vec![1u8; real];
    mask.resize(max_len, 0);
    TokenSequence {
        ids,
        mask,
        original_length,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy() -> Vocab {
        Vocab::from_tokens(["fl", "ood", "flood", "##ood", "a", "##a", "##b", "ab", "hurricane", "!"]).unwrap()
    }

    #[test]
    fn reserved_ids() {
        let v = toy();
        assert_eq!(v.id(PAD), Some(0));
        assert_eq!(v.id(UNK), Some(UNK_ID));
        assert_eq!(v.id(CLS), Some(CLS_ID));
        assert!(UNK_ID < 10 && CLS_ID < 10 && UNK_ID != CLS_ID);
    }

    #[test]
    fn empty_text() {
        let s = tokenize("", &toy(), 8);
        assert_eq!(s.ids, vec![CLS_ID, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(s.mask, vec![1, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(s.original_length, 1);
    }

    #[test]
    fn truncation_keeps_cls_and_records_length() {
        let text = vec!["flood"; 100].join(" ");
        let s = tokenize(&text, &toy(), 64);
        assert_eq!(s.original_length, 101);
        assert_eq!(s.ids.len(), 64);
        assert_eq!(s.ids[0], CLS_ID);
        assert!(s.mask.iter().all(|&m| m == 1));
    }

    /// All segmentations of `word` into vocabulary pieces.
    fn segmentations(word: &str, vocab: &Vocab, initial: bool) -> Vec<Vec<String>> {
        if word.is_empty() {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for end in 1..=word.len() {
            let piece = if initial { word[..end].to_string() } else { format!("##{}", &word[..end]) };
            if vocab.id(&piece).is_some() {
                for mut rest in segmentations(&word[end..], vocab, false) {
                    rest.insert(0, piece.clone());
                    out.push(rest);
                }
            }
        }
        out
    }

    #[test]
    fn longest_match_wins() {
        let v = toy();
        let all = segmentations("flood", &v, true);
        assert_eq!(all.len(), 2);
        // greedy longest match = the segmentation whose first piece is longest
        let best = all.iter().max_by_key(|s| s[0].len()).unwrap();
        assert_eq!(best, &vec!["flood".to_string()]);
        let s = tokenize("flood", &v, 4);
        assert_eq!(s.ids, vec![CLS_ID, v.id("flood").unwrap(), 0, 0]);
        let mut pieces = Vec::new();
        segment_word("flood", &Vocab::from_tokens(["fl", "##ood"]).unwrap(), &mut pieces);
        assert_eq!(pieces.len(), 2);
    }

    #[test]
    fn preprocessing() {
        assert_eq!(
            pretokenize("RT @FEMA: Flooding!! see https://t.co/x #Sandy"),
            vec!["rt", USER, "flooding", "!", "!", "see", URL, "#", "sandy"]
        );
        let v = toy();
        let s = tokenize("Hurricane!", &v, 5);
        assert_eq!(&s.ids[..3], &[CLS_ID, v.id("hurricane").unwrap(), v.id("!").unwrap()]);
    }

    #[test]
    fn unknown_characters_map_to_unk() {
        let v = toy();
        let s = tokenize("aab zz", &v, 8);
        assert_eq!(
            &s.ids[..6],
            &[CLS_ID, v.id("a").unwrap(), v.id("##a").unwrap(), v.id("##b").unwrap(), UNK_ID, UNK_ID]
        );
    }

    #[test]
    fn vocab_file_round_trip() {
        let v = toy();
        let back = Vocab::from_text(&v.to_text()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.hash(), v.hash());
        assert!(Vocab::from_text("[UNK]\n[PAD]\n").is_err());
    }

    proptest! {
        #[test]
        fn sequence_invariants(text in "\\PC{0,80}", max_len in 2usize..24) {
            let v = toy();
            let s = tokenize(&text, &v, max_len);
            prop_assert_eq!(s.ids.len(), max_len);
            prop_assert_eq!(s.mask.len(), max_len);
            prop_assert_eq!(s.ids[0], CLS_ID);
            prop_assert_eq!(s.mask[0], 1);
            let real = s.real_len();
            prop_assert!(s.mask[real..].iter().all(|&m| m == 0));
            for (id, m) in s.ids.iter().zip(&s.mask) {
                prop_assert_eq!(*id == PAD_ID, *m == 0);
                prop_assert!((*id as usize) < v.len());
            }
            prop_assert_eq!(tokenize(&text, &v, max_len), s);
        }
    }
}
