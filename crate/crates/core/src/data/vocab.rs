use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::Pair;

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<s>", "</s>", "<unk>"];

/// Token/id bijection with the four reserved ids at `0..4`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocabulary {
    /// Every distinct token in `sequences`, in first-seen order after the
    /// reserved entries.
    pub fn build<'a, I, S>(sequences: I) -> Self
    where
        I: IntoIterator<Item = &'a S>,
        S: AsRef<[String]> + 'a + ?Sized,
    {
        let mut vocab = Vocabulary::from(Vec::new());
        for seq in sequences {
            for tok in seq.as_ref() {
                if !vocab.ids.contains_key(tok) {
                    vocab.ids.insert(tok.clone(), vocab.tokens.len());
                    vocab.tokens.push(tok.clone());
                }
            }
        }
        vocab
    }

    pub fn source_side(pairs: &[Pair]) -> Self {
        Vocabulary::build(pairs.iter().map(|p| &p.source))
    }

    pub fn target_side(pairs: &[Pair]) -> Self {
        Vocabulary::build(pairs.iter().map(|p| &p.target))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= RESERVED.len()
    }

    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map_or(RESERVED[UNK], String::as_str)
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    /// Map ids back to tokens, stopping at end-of-sequence.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().take_while(|&&i| i != EOS).map(|&i| self.token(i).to_string()).collect()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

impl From<Vec<String>> for Vocabulary {
    fn from(list: Vec<String>) -> Self {
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        tokens.extend(list.into_iter().filter(|t| !RESERVED.contains(&t.as_str())));
        let ids = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens, ids }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens.into_iter().skip(RESERVED.len()).collect()
    }
}
