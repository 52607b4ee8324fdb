use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::LangError;

pub const PAD_ID: u32 = 0;
pub const OOV_ID: u32 = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const OOV_TOKEN: &str = "<oov>";

/// Token ids for one model family. Ids 0 and 1 are reserved for padding and
/// out-of-vocabulary words.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::from(vec![PAD_TOKEN.to_string(), OOV_TOKEN.to_string()])
    }
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self { tokens, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    /// Builds a vocabulary from training text, ids assigned in first-seen order.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut v = Self::default();
        for text in texts {
            for w in words(text) {
                v.insert(&w);
            }
        }
        v
    }

    fn insert(&mut self, word: &str) {
        if !self.index.contains_key(word) {
            self.index.insert(word.to_string(), self.tokens.len() as u32);
            self.tokens.push(word.to_string());
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 2
    }

    pub fn id(&self, word: &str) -> u32 {
        self.index.get(word).copied().unwrap_or(OOV_ID)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.get(word).is_some_and(|&id| id > OOV_ID)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Validates the reserved slots; used after deserializing a sidecar.
    pub fn check(&self) -> Result<(), LangError> {
        if self.tokens.first().map(String::as_str) != Some(PAD_TOKEN)
            || self.tokens.get(1).map(String::as_str) != Some(OOV_TOKEN)
            || self.index.len() != self.tokens.len()
        {
            return Err(LangError::Vocab(
                "reserved ids 0/1 missing or duplicate tokens".into(),
            ));
        }
        Ok(())
    }
}

/// Lowercases, drops `. , ! ? '` and splits on whitespace.
pub fn words(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .filter(|c| !matches!(c, '.' | ',' | '!' | '?' | '\''))
        .flat_map(char::to_lowercase)
        .collect();
    cleaned.split_whitespace().map(str::to_string).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_ids() {
        let v = Vocab::build(["move down"]);
        assert_eq!(v.token(0), Some(PAD_TOKEN));
        assert_eq!(v.token(1), Some(OOV_TOKEN));
        assert_eq!(v.id("move"), 2);
        assert_eq!(v.id("down"), 3);
        assert_eq!(v.id("sideways"), OOV_ID);
        v.check().unwrap();
    }

    #[test]
    fn words_strip_punctuation() {
        assert_eq!(words("The Block's region, is the LOWER left!"), [
            "the", "blocks", "region", "is", "the", "lower", "left"
        ]);
    }

    #[test]
    fn serde_round_trip_keeps_ids() {
        let v = Vocab::build(["the target is in the top left"]);
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocab = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
        back.check().unwrap();
    }
}
