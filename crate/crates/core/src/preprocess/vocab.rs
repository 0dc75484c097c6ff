use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;
pub const CLS: u32 = 4;
pub const RESERVED: [&str; 5] = ["<pad>", "<bos>", "<eos>", "<unk>", "<cls>"];

/// Word-level vocabulary. Ids `0..5` are reserved; the remaining ids follow
/// descending corpus frequency, ties broken lexicographically.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::invalid(format!("duplicate vocabulary token `{t}`")));
            }
        }
        for (i, r) in RESERVED.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*r) {
                return Err(Error::invalid(format!("reserved id {i} must be `{r}`")));
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

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn fingerprint(&self) -> String {
        crate::fingerprint::sha256_hex(self.tokens.join("\n").as_bytes())
    }
}

impl Serialize for Vocabulary {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let map: BTreeMap<&str, u32> = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i as u32))
            .collect();
        map.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let map = BTreeMap::<String, u32>::deserialize(d)?;
        let mut tokens = vec![None; map.len()];
        for (t, id) in map {
            let slot = tokens
                .get_mut(id as usize)
                .ok_or_else(|| serde::de::Error::custom(format!("token id {id} out of range")))?;
            if slot.is_some() {
                return Err(serde::de::Error::custom(format!("token id {id} assigned twice")));
            }
            *slot = Some(t);
        }
        let tokens: Vec<String> = tokens.into_iter().map(Option::unwrap).collect();
        Vocabulary::from_tokens(tokens).map_err(serde::de::Error::custom)
    }
}

/// Lowercases and splits on whitespace; every punctuation character becomes
/// its own token.
pub fn split_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars().flat_map(char::to_lowercase) {
        if ch.is_alphanumeric() {
            cur.push(ch);
        } else {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            if !ch.is_whitespace() {
                out.push(ch.to_string());
            }
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

pub fn build_vocab<'a>(corpus: impl IntoIterator<Item = &'a str>, min_count: usize) -> Result<Vocabulary> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    let mut texts = 0;
    for text in corpus {
        texts += 1;
        for w in split_words(text) {
            *counts.entry(w).or_default() += 1;
        }
    }
    if texts == 0 {
        return Err(Error::invalid("cannot build a vocabulary from an empty corpus"));
    }
    let mut entries: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(t, c)| *c >= min_count.max(1) && !RESERVED.contains(&t.as_str()))
        .collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let tokens = RESERVED
        .iter()
        .map(|s| s.to_string())
        .chain(entries.into_iter().map(|(t, _)| t))
        .collect();
    Vocabulary::from_tokens(tokens)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Framing {
    Plain,
    /// Leading `<cls>`, for encoder inputs.
    Cls,
    /// `<bos> … <eos>`, for decoder targets.
    BosEos,
}

/// Token ids padded with [`PAD`] to a fixed length; the first `len` ids are
/// valid.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub len: usize,
}

impl TokenSequence {
    pub fn valid(&self) -> &[u32] {
        &self.ids[..self.len]
    }

    pub fn mask(&self) -> Vec<bool> {
        (0..self.ids.len()).map(|i| i < self.len).collect()
    }

    pub fn max_len(&self) -> usize {
        self.ids.len()
    }
}

/// Truncation keeps the leading tokens; framing tokens count towards `max_len`.
pub fn tokenize(text: &str, vocab: &Vocabulary, max_len: usize, framing: Framing) -> TokenSequence {
    let words: Vec<u32> = split_words(text).iter().map(|w| vocab.id(w)).collect();
    let mut ids = Vec::with_capacity(max_len);
    match framing {
        Framing::Plain => ids.extend(words.iter().take(max_len)),
        Framing::Cls => {
            if max_len > 0 {
                ids.push(CLS);
                ids.extend(words.iter().take(max_len - 1));
            }
        }
        Framing::BosEos => {
            if max_len >= 2 {
                ids.push(BOS);
                ids.extend(words.iter().take(max_len - 2));
                ids.push(EOS);
            }
        }
    }
    let len = ids.len();
    ids.resize(max_len, PAD);
    TokenSequence { ids, len }
}

/// Joins the non-framing tokens with single spaces.
pub fn detokenize(ids: &[u32], vocab: &Vocabulary) -> String {
    ids.iter()
        .take_while(|&&id| id != EOS)
        .filter(|&&id| !matches!(id, PAD | BOS | CLS))
        .filter_map(|&id| vocab.token(id))
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequency_ordering() {
        let v = build_vocab(["stop stop go"], 1).unwrap();
        assert!(v.contains("stop") && v.contains("go"));
        assert!(v.id("stop") < v.id("go"));
        assert_eq!(v.id("stop"), 5);
    }

    #[test]
    fn min_count_filters() {
        let v = build_vocab(["stop stop go"], 2).unwrap();
        assert!(v.contains("stop"));
        assert!(!v.contains("go"));
        let t = tokenize("go", &v, 10, Framing::Plain);
        assert_eq!(t.valid(), &[UNK]);
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(build_vocab(std::iter::empty(), 1).is_err());
    }

    #[test]
    fn empty_text_with_cls() {
        let v = build_vocab(["a"], 1).unwrap();
        let t = tokenize("", &v, 50, Framing::Cls);
        assert_eq!(t.ids[0], CLS);
        assert!(t.ids[1..].iter().all(|&i| i == PAD));
        assert_eq!(t.len, 1);
        assert_eq!(t.mask().iter().filter(|m| **m).count(), 1);
    }

    #[test]
    fn truncation_keeps_leading_tokens() {
        let words: Vec<String> = (0..60).map(|i| format!("w{i}")).collect();
        let text = words.join(" ");
        let v = build_vocab([text.as_str()], 1).unwrap();
        let t = tokenize(&text, &v, 50, Framing::Cls);
        assert_eq!(t.len, 50);
        assert_eq!(t.ids.len(), 50);
        for i in 0..49 {
            assert_eq!(v.token(t.ids[i + 1]), Some(words[i].as_str()));
        }
        let d = tokenize(&text, &v, 50, Framing::BosEos);
        assert_eq!(d.len, 50);
        assert_eq!(d.ids[49], EOS);
        assert_eq!(v.token(d.ids[48]), Some("w47"));
    }

    #[test]
    fn round_trip_in_vocab_text() {
        let text = "stop because of red light";
        let v = build_vocab([text], 1).unwrap();
        for framing in [Framing::Plain, Framing::Cls, Framing::BosEos] {
            assert_eq!(detokenize(&tokenize(text, &v, 50, framing).ids, &v), text);
        }
    }

    #[test]
    fn punctuation_splits() {
        assert_eq!(split_words("Stop, NOW!"), vec!["stop", ",", "now", "!"]);
    }

    #[test]
    fn json_round_trip() {
        let v = build_vocab(["b a a c"], 1).unwrap();
        let s = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&s).unwrap();
        assert_eq!(v, back);
        assert!(serde_json::from_str::<Vocabulary>(r#"{"<pad>":0,"x":1}"#).is_err());
    }
}
