use std::collections::{BTreeSet, HashMap};

use hoi_core::dataset::instruction::{HPOSE_TOKEN, HUMAN_TOKEN, IMAGE_TOKEN, OBJECT_TOKEN, OPOSE_TOKEN, POINTS_TOKEN};
use hoi_core::{HoiError, Result};
use serde::{Deserialize, Serialize};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const HUMAN: usize = 3;
pub const OBJECT: usize = 4;
pub const IMG: usize = 5;
pub const PC: usize = 6;
pub const HPOSE: usize = 7;
pub const OPOSE: usize = 8;
pub const UNK: usize = 9;

pub const UNK_TEXT: &str = "<unk>";

const SPECIALS: [&str; 10] = [
    "<pad>",
    "<s>",
    "</s>",
    HUMAN_TOKEN,
    OBJECT_TOKEN,
    IMAGE_TOKEN,
    POINTS_TOKEN,
    HPOSE_TOKEN,
    OPOSE_TOKEN,
    UNK_TEXT,
];

/// Word-level token table: fixed special ids followed by sorted words.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    words: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a table from every whitespace-separated word of `texts`.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut set = BTreeSet::new();
        for t in texts {
            for w in t.split_whitespace() {
                if !SPECIALS.contains(&w) {
                    set.insert(w.to_string());
                }
            }
        }
        let words = SPECIALS.iter().map(|s| s.to_string()).chain(set).collect();
        Self::from_words(words).expect("specials are unique")
    }

    pub fn from_words(words: Vec<String>) -> Result<Self> {
        if words.len() < SPECIALS.len() || words[..SPECIALS.len()].iter().zip(SPECIALS).any(|(a, b)| a != b) {
            return Err(HoiError::Format("vocabulary does not start with the reserved tokens".into()));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(HoiError::Format(format!("duplicate vocabulary entry {w:?}")));
            }
        }
        Ok(Self { words, index })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(UNK)
    }

    pub fn word(&self, id: usize) -> &str {
        self.words.get(id).map(String::as_str).unwrap_or(UNK_TEXT)
    }

    pub fn tokenize(&self, text: &str) -> Vec<usize> {
        text.split_whitespace().map(|w| self.id(w)).collect()
    }

    pub fn detokenize(&self, ids: &[usize]) -> String {
        ids.iter().map(|&i| self.word(i)).collect::<Vec<_>>().join(" ")
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = HoiError;
    fn try_from(words: Vec<String>) -> Result<Self> {
        Self::from_words(words)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.words
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use hoi_core::dataset::{script_motion, Describer, MotionConfig, MotionFamily};
    use hoi_core::kinematics::{AssetLibrary, SkeletonTemplate};

    fn grammar_vocab() -> Vocabulary {
        let words = Describer::standard().words();
        Vocabulary::build(words.iter().map(String::as_str))
    }

    #[test]
    fn specials_have_fixed_ids() {
        let v = grammar_vocab();
        for (i, s) in SPECIALS.iter().enumerate() {
            assert_eq!(v.id(s), i);
        }
        assert_eq!(v.id(HUMAN_TOKEN), HUMAN);
        assert_eq!(v.id(OPOSE_TOKEN), OPOSE);
    }

    #[test]
    fn empty_text_round_trips() {
        let v = grammar_vocab();
        assert!(v.tokenize("").is_empty());
        assert_eq!(v.detokenize(&[]), "");
    }

    #[test]
    fn grammar_sentences_round_trip() {
        let v = grammar_vocab();
        let skel = SkeletonTemplate::default();
        let assets = AssetLibrary::standard();
        let d = Describer::standard();
        for (i, f) in MotionFamily::ALL.into_iter().enumerate() {
            for obj in f.compatible_objects() {
                let clip = script_motion(&MotionConfig::new(f, obj), i as u64, &skel, &assets).unwrap();
                let states = &clip.states;
                for w in states.windows(2) {
                    for text in [
                        d.describe_state(&w[0]).unwrap().render(),
                        d.describe_transition(&w[0], &w[1]).unwrap().render(),
                    ] {
                        let ids = v.tokenize(&text);
                        assert!(!ids.contains(&UNK), "unknown word in {text:?}");
                        assert_eq!(v.detokenize(&ids), text);
                    }
                }
            }
        }
    }

    #[test]
    fn unknown_word_is_lossy() {
        let v = grammar_vocab();
        let ids = v.tokenize("the zebra");
        assert_eq!(ids[1], UNK);
        assert_eq!(v.detokenize(&ids), "the <unk>");
    }

    #[test]
    fn serde_is_a_bijection() {
        let v = Vocabulary::build(["b a", "c"]);
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.id("c"), v.id("c"));
        for i in 0..v.len() {
            assert_eq!(v.id(v.word(i)), i);
        }
        assert!(serde_json::from_str::<Vocabulary>(r#"["a"]"#).is_err());
    }
}
