//! Data-file backed word lists: the stop-word list and the light-stemmer
//! rule table.

use std::collections::HashSet;

use super::TextprepError;

pub const BUNDLED_STOPWORDS: &str = include_str!("../../data/stopwords.txt");
pub const BUNDLED_STEM_RULES: &str = include_str!("../../data/stem_rules.tsv");

/// Tokens at or below this many letters are never stemmed.
pub const MIN_STEMMABLE_LEN: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopWords {
    words: HashSet<String>,
}

impl StopWords {
    /// Parses one word per line; blank lines and `#` comments are skipped.
    pub fn parse(source: &str) -> Self {
        let words = source
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_owned)
            .collect();
        Self { words }
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_STOPWORDS)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn filter(&self, tokens: Vec<String>) -> Vec<String> {
        tokens.into_iter().filter(|t| !self.contains(t)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AffixKind {
    Prefix,
    Suffix,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StemRule {
    pub kind: AffixKind,
    pub affix: String,
    affix_len: usize,
    pub min_remaining: usize,
}

impl StemRule {
    pub fn new(kind: AffixKind, affix: &str, min_remaining: usize) -> Self {
        Self {
            kind,
            affix: affix.to_owned(),
            affix_len: affix.chars().count(),
            min_remaining,
        }
    }

    fn apply<'a>(&self, token: &'a str, len: usize) -> Option<&'a str> {
        if self.affix_len == 0 || len < self.affix_len + self.min_remaining {
            return None;
        }
        match self.kind {
            AffixKind::Prefix => token.strip_prefix(self.affix.as_str()),
            AffixKind::Suffix => token.strip_suffix(self.affix.as_str()),
        }
    }
}

/// Rule-based light stemmer. Rules run top-to-bottom, each firing at most
/// once per pass; passes repeat until nothing fires, so the output is a
/// fixed point of the stemmer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LightStemmer {
    rules: Vec<StemRule>,
}

impl LightStemmer {
    pub fn new(rules: Vec<StemRule>) -> Self {
        Self { rules }
    }

    /// Parses `kind<TAB>affix<TAB>min_remaining_length` lines.
    pub fn parse(source: &str) -> Result<Self, TextprepError> {
        let mut rules = Vec::new();
        for (lineno, line) in source.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: &str| TextprepError::RuleFile {
                line: lineno + 1,
                message: msg.to_owned(),
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(bad("expected three tab-separated fields"));
            }
            let kind = match fields[0] {
                "prefix" => AffixKind::Prefix,
                "suffix" => AffixKind::Suffix,
                _ => return Err(bad("kind must be `prefix` or `suffix`")),
            };
            if fields[1].is_empty() {
                return Err(bad("empty affix"));
            }
            let min_remaining = fields[2]
                .trim()
                .parse::<usize>()
                .map_err(|_| bad("min_remaining_length is not an integer"))?;
            rules.push(StemRule::new(kind, fields[1], min_remaining));
        }
        Ok(Self { rules })
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_STEM_RULES).expect("bundled stem rules are well-formed")
    }

    pub fn rules(&self) -> &[StemRule] {
        &self.rules
    }

    pub fn stem(&self, token: &str) -> String {
        self.stem_guarded(token, |_| true)
    }

    /// Stems `token`, refusing any single strip whose result fails `accept`.
    pub fn stem_guarded(&self, token: &str, accept: impl Fn(&str) -> bool) -> String {
        let mut current = token.to_owned();
        loop {
            let mut changed = false;
            for rule in &self.rules {
                let len = current.chars().count();
                if len < MIN_STEMMABLE_LEN {
                    break;
                }
                if let Some(rest) = rule.apply(&current, len) {
                    if accept(rest) {
                        current = rest.to_owned();
                        changed = true;
                    }
                }
            }
            if !changed {
                return current;
            }
        }
    }
}
