//! Tokenization and the category lexicon shared by the encoder, the
//! simulated user and the metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{CategorySet, PreferenceCategory};

/// Lowercase whitespace tokenization with surrounding punctuation stripped.
/// Inner hyphens survive, so `quiet-hours` stays one token.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| {
            t.trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

/// 64-bit FNV-1a over `bytes`, keyed by `seed`. Stable across platforms
/// and toolchains, which `std`'s hasher is not.
pub fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for b in seed.to_le_bytes().iter().chain(bytes) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(PRIME);
    }
    h
}

/// Which end of a category's behavioral axis a keyword names.
///
/// `High` keywords push the category's behavior readout up (intervene now,
/// keep it brief, ask first, ...), `Low` keywords name the opposite end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pole {
    High,
    Low,
}

impl Pole {
    pub fn sign(self) -> f64 {
        match self {
            Pole::High => 1.0,
            Pole::Low => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub keyword: String,
    pub category: PreferenceCategory,
    pub pole: Pole,
}

/// Keyword table mapping preference vocabulary to categories.
///
/// The first `High` keyword of each category is its canonical keyword.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<LexiconEntry>", into = "Vec<LexiconEntry>")]
pub struct Lexicon {
    entries: Vec<LexiconEntry>,
    index: BTreeMap<String, usize>,
}

impl Lexicon {
    pub fn new(entries: Vec<LexiconEntry>) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            let toks = tokenize(&e.keyword);
            if toks.len() != 1 || toks[0] != e.keyword {
                return Err(Error::validation(
                    "lexicon.keyword",
                    format!("`{}` is not a single lowercase token", e.keyword),
                ));
            }
            if index.insert(e.keyword.clone(), i).is_some() {
                return Err(Error::validation(
                    "lexicon.keyword",
                    format!("duplicate keyword `{}`", e.keyword),
                ));
            }
        }
        for c in PreferenceCategory::ALL {
            let n = entries.iter().filter(|e| e.category == c).count();
            if n < 3 {
                return Err(Error::validation(
                    "lexicon",
                    format!("category {c} has {n} keywords, need at least 3"),
                ));
            }
            if !entries.iter().any(|e| e.category == c && e.pole == Pole::High) {
                return Err(Error::validation(
                    "lexicon",
                    format!("category {c} has no high-pole keyword"),
                ));
            }
        }
        Ok(Lexicon { entries, index })
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn lookup(&self, token: &str) -> Option<&LexiconEntry> {
        self.index.get(token).map(|i| &self.entries[*i])
    }

    pub fn canonical(&self, c: PreferenceCategory) -> &str {
        self.keywords(c, Pole::High)
            .next()
            .expect("validated: every category has a high-pole keyword")
    }

    pub fn keywords(&self, c: PreferenceCategory, pole: Pole) -> impl Iterator<Item = &str> {
        self.entries
            .iter()
            .filter(move |e| e.category == c && e.pole == pole)
            .map(|e| e.keyword.as_str())
    }

    /// Categories whose keywords occur in `text`.
    pub fn hits(&self, text: &str) -> CategorySet {
        tokenize(text)
            .iter()
            .filter_map(|t| self.lookup(t))
            .map(|e| e.category)
            .collect()
    }
}

impl TryFrom<Vec<LexiconEntry>> for Lexicon {
    type Error = Error;

    fn try_from(entries: Vec<LexiconEntry>) -> Result<Self> {
        Lexicon::new(entries)
    }
}

impl From<Lexicon> for Vec<LexiconEntry> {
    fn from(l: Lexicon) -> Self {
        l.entries
    }
}

impl Default for Lexicon {
    fn default() -> Self {
        use PreferenceCategory::*;
        use Pole::*;
        let table: [(PreferenceCategory, Pole, &str); 30] = [
            (Scheduling, High, "timely"),
            (Scheduling, High, "heads-up"),
            (Scheduling, High, "proactive"),
            (Scheduling, Low, "quiet-hours"),
            (Scheduling, Low, "later"),
            (Scheduling, Low, "undisturbed"),
            (DomainPrioritization, High, "priority"),
            (DomainPrioritization, High, "focus"),
            (DomainPrioritization, High, "important"),
            (DomainPrioritization, Low, "optional"),
            (DomainPrioritization, Low, "unimportant"),
            (DomainPrioritization, Low, "deprioritize"),
            (Autonomy, High, "ask-first"),
            (Autonomy, High, "confirm"),
            (Autonomy, High, "permission"),
            (Autonomy, Low, "go-ahead"),
            (Autonomy, Low, "automatically"),
            (Autonomy, Low, "handle-it"),
            (CommunicationStyle, High, "brief"),
            (CommunicationStyle, High, "concise"),
            (CommunicationStyle, High, "short"),
            (CommunicationStyle, Low, "detailed"),
            (CommunicationStyle, Low, "thorough"),
            (CommunicationStyle, Low, "elaborate"),
            (ContextAdaptation, High, "adapt"),
            (ContextAdaptation, High, "situational"),
            (ContextAdaptation, High, "surroundings"),
            (ContextAdaptation, Low, "consistent"),
            (ContextAdaptation, Low, "uniform"),
            (ContextAdaptation, Low, "regardless"),
        ];
        let entries = table
            .into_iter()
            .map(|(category, pole, kw)| LexiconEntry {
                keyword: kw.to_owned(),
                category,
                pole,
            })
            .collect();
        Lexicon::new(entries).expect("default lexicon is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_strips_punctuation_keeps_hyphens() {
        assert_eq!(
            tokenize("Please, Ask-First! (quiet-hours)  ok."),
            vec!["please", "ask-first", "quiet-hours", "ok"]
        );
        assert!(tokenize("  ... ").is_empty());
    }

    #[test]
    fn default_lexicon_covers_every_category() {
        let lex = Lexicon::default();
        assert_eq!(lex.canonical(PreferenceCategory::CommunicationStyle), "brief");
        assert_eq!(lex.canonical(PreferenceCategory::Autonomy), "ask-first");
        assert_eq!(
            lex.lookup("quiet-hours").map(|e| e.category),
            Some(PreferenceCategory::Scheduling)
        );
        let hits = lex.hits("Keep it brief and ask-first.");
        assert!(hits.contains(PreferenceCategory::CommunicationStyle));
        assert!(hits.contains(PreferenceCategory::Autonomy));
        assert_eq!(hits.len(), 2);
    }

    #[test]
    fn lexicon_rejects_thin_categories() {
        let mut entries: Vec<LexiconEntry> = Lexicon::default().into();
        entries.retain(|e| !(e.category == PreferenceCategory::Autonomy && e.pole == Pole::Low));
        assert!(Lexicon::new(entries).is_ok());
        let mut entries: Vec<LexiconEntry> = Lexicon::default().into();
        entries.retain(|e| !["confirm", "permission", "go-ahead", "automatically"].contains(&e.keyword.as_str()));
        assert!(Lexicon::new(entries).is_err());
    }

    #[test]
    fn fnv_is_stable() {
        assert_eq!(fnv1a(0, b""), fnv1a(0, b""));
        assert_ne!(fnv1a(0, b"a"), fnv1a(1, b"a"));
        assert_ne!(fnv1a(0, b"a"), fnv1a(0, b"b"));
    }
}
