use std::collections::{BTreeMap, HashMap};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<bos>", "<eos>"];

/// Token/id mapping with four reserved ids (padding, unknown, begin, end).
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Keeps every token seen at least `min_freq` times. Ids after the
    /// reserved block follow lexicographic token order, so the result does
    /// not depend on sentence order.
    pub fn build<'a, I, S>(sentences: I, min_freq: usize) -> Self
    where
        I: IntoIterator<Item = &'a S>,
        S: AsRef<[String]> + 'a + ?Sized,
    {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for s in sentences {
            for t in s.as_ref() {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
        let kept = counts
            .into_iter()
            .filter(|(t, c)| *c >= min_freq && !RESERVED.contains(t))
            .map(|(t, _)| t.to_string());
        Self::from_tokens(RESERVED.iter().map(|s| s.to_string()).chain(kept).collect())
    }

    /// Rebuilds from a full id-ordered token list (reserved tokens first).
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map_or("<unk>", String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).to_string()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sents(words: &[&[&str]]) -> Vec<Vec<String>> {
        words
            .iter()
            .map(|s| s.iter().map(|w| w.to_string()).collect())
            .collect()
    }

    #[test]
    fn frequency_threshold_and_reserved_ids() {
        let s = sents(&[&["a", "pub", "a"], &["pub", "rare"]]);
        let v = Vocabulary::build(&s, 2);
        assert_eq!(v.tokens(), &["<pad>", "<unk>", "<bos>", "<eos>", "a", "pub"]);
        assert_eq!(v.id("rare"), UNK);
        assert_eq!(v.id("<eos>"), EOS);
    }

    #[test]
    fn sentence_order_does_not_matter() {
        let a = sents(&[&["x", "y"], &["y", "z", "x"]]);
        let b = sents(&[&["y", "z", "x"], &["x", "y"]]);
        assert_eq!(Vocabulary::build(&a, 1), Vocabulary::build(&b, 1));
    }

    proptest! {
        #[test]
        fn in_vocabulary_round_trip(words in prop::collection::vec("[a-z]{1,6}", 1..30)) {
            let v = Vocabulary::build(&[words.clone()], 1);
            for w in &words {
                prop_assert_eq!(v.token(v.id(w)), w.as_str());
            }
            prop_assert_eq!(v.decode(&v.encode(&words)), words);
        }
    }
}
