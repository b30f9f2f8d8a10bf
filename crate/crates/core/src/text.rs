//! Text word embeddings: the pyramidal histogram of characters (PHOC) and the
//! discrete cosine transform of words (DCToW).
//!
//! Both embeddings operate on labels that were first passed through
//! [`normalize_label`], so every symbol is guaranteed to be in the alphabet.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_SYMBOLS: &str = "0123456789abcdefghijklmnopqrstuvwxyz";

/// Ordered set of symbols; the position of a symbol is its channel index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    chars: Vec<char>,
    lookup: BTreeMap<char, usize>,
}

impl Alphabet {
    /// Builds an alphabet from the characters of `symbols`, in order.
    pub fn new(symbols: &str) -> Result<Self> {
        let chars: Vec<char> = symbols.chars().collect();
        let mut lookup = BTreeMap::new();
        for (i, &c) in chars.iter().enumerate() {
            if lookup.insert(c, i).is_some() {
                return Err(Error::InvalidConfig(alloc::format!(
                    "duplicate alphabet symbol {c:?}"
                )));
            }
        }
        if chars.is_empty() {
            return Err(Error::InvalidConfig("empty alphabet".into()));
        }
        Ok(Self { chars, lookup })
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn index_of(&self, c: char) -> Option<usize> {
        self.lookup.get(&c).copied()
    }

    pub fn contains(&self, c: char) -> bool {
        self.lookup.contains_key(&c)
    }

    pub fn as_string(&self) -> String {
        self.chars.iter().collect()
    }

    fn indices(&self, word: &str) -> Result<Vec<usize>> {
        let idx = word
            .chars()
            .map(|c| self.index_of(c).ok_or(Error::UnknownSymbol(c)))
            .collect::<Result<Vec<_>>>()?;
        if idx.is_empty() {
            return Err(Error::EmptyLabel);
        }
        Ok(idx)
    }
}

impl Default for Alphabet {
    /// Digits followed by lowercase ASCII letters (36 symbols).
    fn default() -> Self {
        Self::new(DEFAULT_SYMBOLS).expect("default alphabet is valid")
    }
}

impl Serialize for Alphabet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.as_string())
    }
}

impl<'de> Deserialize<'de> for Alphabet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Alphabet::new(&s).map_err(serde::de::Error::custom)
    }
}

/// Lowercases `raw` and drops every symbol outside the alphabet.
pub fn normalize_label(raw: &str, alphabet: &Alphabet) -> Result<String> {
    let out: String = raw
        .chars()
        .flat_map(char::to_lowercase)
        .filter(|&c| alphabet.contains(c))
        .collect();
    if out.is_empty() {
        Err(Error::EmptyLabel)
    } else {
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    Phoc,
    Dctow,
    Learned,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub kind: EmbeddingKind,
    pub values: Vec<f64>,
}

impl Embedding {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhocConfig {
    pub levels: Vec<usize>,
    pub alphabet: Alphabet,
}

impl Default for PhocConfig {
    fn default() -> Self {
        Self { levels: vec![1, 2, 3, 4, 5], alphabet: Alphabet::default() }
    }
}

impl PhocConfig {
    pub fn dim(&self) -> usize {
        self.alphabet.len() * self.levels.iter().sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DctowConfig {
    /// Retained low-frequency coefficients per alphabet channel.
    pub r: usize,
    pub alphabet: Alphabet,
}

impl Default for DctowConfig {
    fn default() -> Self {
        Self { r: 3, alphabet: Alphabet::default() }
    }
}

impl DctowConfig {
    pub fn dim(&self) -> usize {
        self.r * self.alphabet.len()
    }
}

/// Binary PHOC vector of `word`.
///
/// Character `k` of an `m`-character word occupies `[k/m, (k+1)/m)`. It is
/// counted in region `r` of level `l` when at least half of that interval
/// falls inside `[r/l, (r+1)/l)`. All comparisons are done on integers
/// scaled by `m * l`, so the assignment is exact.
pub fn phoc(word: &str, cfg: &PhocConfig) -> Result<Embedding> {
    let idx = cfg.alphabet.indices(word)?;
    let k = cfg.alphabet.len();
    let m = idx.len();
    let mut values = vec![0.0; cfg.dim()];
    let mut offset = 0;
    for &level in &cfg.levels {
        for (pos, &c) in idx.iter().enumerate() {
            // occupancy scaled by m*level: [pos*level, (pos+1)*level)
            let lo = pos * level;
            let hi = lo + level;
            // only regions whose scaled span [r*m, (r+1)*m) can touch it
            let first = lo / m;
            let last = ((hi - 1) / m).min(level - 1);
            for region in first..=last {
                let overlap = hi.min((region + 1) * m).saturating_sub(lo.max(region * m));
                if 2 * overlap >= level {
                    values[(offset + region) * k + c] = 1.0;
                }
            }
        }
        offset += level;
    }
    Ok(Embedding { kind: EmbeddingKind::Phoc, values })
}

/// DCToW vector of `word`: orthonormal DCT-II of the one-hot character
/// matrix along the word axis, first `r` coefficients of every channel,
/// flattened frequency-major. Coefficients beyond the word length are zero.
pub fn dctow(word: &str, cfg: &DctowConfig) -> Result<Embedding> {
    let idx = cfg.alphabet.indices(word)?;
    let k = cfg.alphabet.len();
    let m = idx.len();
    let mut values = vec![0.0; cfg.dim()];
    let mf = m as f64;
    for freq in 0..cfg.r.min(m) {
        let scale = if freq == 0 { libm::sqrt(1.0 / mf) } else { libm::sqrt(2.0 / mf) };
        for (pos, &c) in idx.iter().enumerate() {
            let angle = core::f64::consts::PI * (pos as f64 + 0.5) * freq as f64 / mf;
            values[freq * k + c] += scale * libm::cos(angle);
        }
    }
    Ok(Embedding { kind: EmbeddingKind::Dctow, values })
}

/// Text embedding used as the training target and the QbS query encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TextEmbedder {
    Phoc(PhocConfig),
    Dctow(DctowConfig),
}

impl TextEmbedder {
    pub fn phoc() -> Self {
        TextEmbedder::Phoc(PhocConfig::default())
    }

    pub fn dctow() -> Self {
        TextEmbedder::Dctow(DctowConfig::default())
    }

    pub fn kind(&self) -> EmbeddingKind {
        match self {
            TextEmbedder::Phoc(_) => EmbeddingKind::Phoc,
            TextEmbedder::Dctow(_) => EmbeddingKind::Dctow,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            TextEmbedder::Phoc(c) => c.dim(),
            TextEmbedder::Dctow(c) => c.dim(),
        }
    }

    pub fn alphabet(&self) -> &Alphabet {
        match self {
            TextEmbedder::Phoc(c) => &c.alphabet,
            TextEmbedder::Dctow(c) => &c.alphabet,
        }
    }

    /// Normalizes `raw` and embeds it.
    pub fn embed(&self, raw: &str) -> Result<Embedding> {
        let word = normalize_label(raw, self.alphabet())?;
        match self {
            TextEmbedder::Phoc(c) => phoc(&word, c),
            TextEmbedder::Dctow(c) => dctow(&word, c),
        }
    }
}
