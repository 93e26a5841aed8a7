use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use super::TokenizerError;

pub const UNK: &str = "<unk>";

/// Lower-case, split on whitespace, and split every ASCII punctuation
/// character into its own token.
pub fn normalize_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for raw in text.split_whitespace() {
        let mut cur = String::new();
        for ch in raw.chars() {
            if ch.is_ascii_punctuation() {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(ch.to_string());
            } else {
                cur.extend(ch.to_lowercase());
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

/// Closed-vocabulary word tokenizer. Id 0 is always the unknown-word token.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TextTokenizer {
    words: Vec<String>,
    index: HashMap<String, u32>,
}

impl TextTokenizer {
    pub fn new<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        let mut tok = Self { words: vec![UNK.to_string()], index: HashMap::from([(UNK.to_string(), 0)]) };
        for w in words {
            for norm in normalize_words(w) {
                if !tok.index.contains_key(&norm) {
                    tok.index.insert(norm.clone(), tok.words.len() as u32);
                    tok.words.push(norm);
                }
            }
        }
        tok
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn unk_id(&self) -> u32 {
        0
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        normalize_words(text).iter().map(|w| self.id(w).unwrap_or(0)).collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Result<String, TokenizerError> {
        let words = ids
            .iter()
            .map(|&id| self.words.get(id as usize).map(String::as_str).ok_or(TokenizerError::BadTokenId(id)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(words.join(" "))
    }

    pub fn to_json(&self) -> String {
        let map: BTreeMap<&str, u32> = self.words.iter().enumerate().map(|(i, w)| (w.as_str(), i as u32)).collect();
        serde_json::to_string_pretty(&map).expect("string map serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, TokenizerError> {
        let map: HashMap<String, u32> = serde_json::from_str(s).map_err(|e| TokenizerError::InvalidVocab(e.to_string()))?;
        let mut words = vec![None; map.len()];
        for (w, &id) in &map {
            let slot = words
                .get_mut(id as usize)
                .ok_or_else(|| TokenizerError::InvalidVocab(format!("id {id} for {w:?} leaves 0..{}", map.len())))?;
            *slot = Some(w.clone());
        }
        let words: Vec<String> =
            words.into_iter().collect::<Option<_>>().ok_or_else(|| TokenizerError::InvalidVocab("ids are not contiguous".into()))?;
        if words.first().map(String::as_str) != Some(UNK) {
            return Err(TokenizerError::InvalidVocab(format!("id 0 must be {UNK}")));
        }
        Ok(Self { index: map, words })
    }

    pub fn save(&self, path: &Path) -> Result<(), TokenizerError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TokenizerError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
