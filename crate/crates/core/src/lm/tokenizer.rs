//! Word-level tokenizer over a small closed vocabulary.
//!
//! Words are lowercased, punctuation is split into its own pieces, and
//! angle-bracket literals (`<12>`, `<video>`) are kept whole so they can be
//! resolved against a [`TemporalVocab`].

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::codec::TemporalVocab;

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const EOS: &str = "</s>";

const PUNCTUATION: &[char] = &[',', '.', '?', '!', ':', ';', '(', ')', '"'];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tokenizer {
    words: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

/// Split text into pieces: lowercase words, single punctuation marks and
/// `<...>` literals.
pub fn split_pieces(text: &str) -> Vec<String> {
    let mut pieces = Vec::new();
    let mut word = String::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    let flush = |word: &mut String, pieces: &mut Vec<String>| {
        if !word.is_empty() {
            pieces.push(std::mem::take(word).to_lowercase());
        }
    };
    while i < chars.len() {
        let c = chars[i];
        if c == '<' {
            if let Some(len) = chars[i + 1..].iter().position(|&ch| ch == '>' || ch == '<' || ch.is_whitespace()) {
                if chars[i + 1 + len] == '>' && len > 0 {
                    flush(&mut word, &mut pieces);
                    pieces.push(chars[i..=i + 1 + len].iter().collect());
                    i += len + 2;
                    continue;
                }
            }
        }
        if c.is_whitespace() {
            flush(&mut word, &mut pieces);
        } else if PUNCTUATION.contains(&c) {
            flush(&mut word, &mut pieces);
            pieces.push(c.to_string());
        } else {
            word.push(c);
        }
        i += 1;
    }
    flush(&mut word, &mut pieces);
    pieces
}

impl Tokenizer {
    /// Build a vocabulary from every piece in `texts`. Ids are assigned in
    /// sorted order after the `<pad>`, `<unk>`, `</s>` specials, so the same
    /// corpus always yields the same ids. Angle-bracket literals are skipped.
    pub fn from_corpus<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut set = BTreeSet::new();
        for text in texts {
            for piece in split_pieces(text) {
                if !piece.starts_with('<') {
                    set.insert(piece);
                }
            }
        }
        let mut words = vec![PAD.to_string(), UNK.to_string(), EOS.to_string()];
        words.extend(set);
        Self::from_words(words)
    }

    pub fn from_words(words: Vec<String>) -> Self {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Self { words, index }
    }

    /// Rebuild the lookup table after deserialization.
    pub fn reindex(&mut self) {
        self.index = self.words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
    }

    pub fn size(&self) -> usize {
        self.words.len()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn eos_id(&self) -> usize {
        self.index[EOS]
    }

    pub fn unk_id(&self) -> usize {
        self.index[UNK]
    }

    pub fn encode(&self, text: &str, vocab: Option<&TemporalVocab>) -> Vec<usize> {
        split_pieces(text)
            .into_iter()
            .map(|piece| {
                if piece.starts_with('<') {
                    if let Some(id) = vocab.and_then(|v| v.lookup_literal(&piece)) {
                        return id;
                    }
                }
                self.id(&piece).unwrap_or_else(|| self.unk_id())
            })
            .collect()
    }

    pub fn decode(&self, ids: &[usize], vocab: Option<&TemporalVocab>) -> String {
        let mut out = String::new();
        let mut no_space_next = true;
        for &id in ids {
            let piece = match self.words.get(id) {
                Some(w) => w.clone(),
                None => vocab.and_then(|v| v.literal(id)).unwrap_or_else(|| UNK.to_string()),
            };
            let attaches_left = matches!(piece.as_str(), "," | "." | "?" | "!" | ":" | ";" | ")");
            if !no_space_next && !attaches_left {
                out.push(' ');
            }
            no_space_next = piece == "(";
            out.push_str(&piece);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::vocab_layout;

    #[test]
    fn splits_words_punctuation_and_literals() {
        assert_eq!(
            split_pieces("From <0> to <6>, a baby is crying."),
            vec!["from", "<0>", "to", "<6>", ",", "a", "baby", "is", "crying", "."]
        );
        assert_eq!(split_pieces("a<b c"), vec!["a<b", "c"]);
        assert_eq!(split_pieces("<video></video>"), vec!["<video>", "</video>"]);
    }

    #[test]
    fn encode_decode_round_trip() {
        let tok = Tokenizer::from_corpus(["from to , a baby is crying ."]);
        let vocab = vocab_layout(tok.size(), 10).unwrap();
        let ids = tok.encode("From <0> to <6>, a baby is crying.", Some(&vocab));
        assert_eq!(ids[1], vocab.temporal_id(0).unwrap());
        assert_eq!(tok.decode(&ids, Some(&vocab)), "from <0> to <6>, a baby is crying.");
    }

    #[test]
    fn unknown_words_and_literals() {
        let tok = Tokenizer::from_corpus(["hello"]);
        let ids = tok.encode("hello stranger <5>", None);
        assert_eq!(ids, vec![tok.id("hello").unwrap(), tok.unk_id(), tok.unk_id()]);
    }

    #[test]
    fn ids_are_deterministic() {
        let a = Tokenizer::from_corpus(["b a c", "a d"]);
        let b = Tokenizer::from_corpus(["a d", "c b a"]);
        assert_eq!(a.words(), b.words());
        assert_eq!(&a.words()[..3], &[PAD, UNK, EOS]);
    }
}
