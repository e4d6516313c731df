//! The 40-symbol character vocabulary and text/token codecs.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SymbolLayout;

pub const VOCAB_SIZE: usize = 40;
pub const SPACE_LABEL: &str = "[space]";
pub const BLANK_LABEL: &str = "[blank]";
pub const EOS_LABEL: &str = "[eos]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenRole {
    Reference,
    Hypothesis,
    TeacherForcingTarget,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
    pub role: TokenRole,
}

impl TokenSequence {
    pub fn new(ids: Vec<usize>, role: TokenRole) -> Self {
        Self { ids, role }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.ids
    }
}

/// Character vocabulary: A-Z, 0-9, apostrophe, space, blank and a shared
/// start/end-of-sentence token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    symbols: Vec<String>,
    blank_id: usize,
    eos_sos_id: usize,
    space_id: usize,
    by_char: HashMap<char, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        let mut symbols: Vec<String> = ('A'..='Z').map(String::from).collect();
        symbols.extend(('0'..='9').map(String::from));
        symbols.push("'".into());
        symbols.push(SPACE_LABEL.into());
        symbols.push(BLANK_LABEL.into());
        symbols.push(EOS_LABEL.into());
        Self::from_symbols(symbols).expect("built-in vocabulary is valid")
    }
}

impl Vocabulary {
    /// Builds a vocabulary from 40 labels in index order.
    pub fn from_symbols(symbols: Vec<String>) -> Result<Self> {
        if symbols.len() != VOCAB_SIZE {
            return Err(Error::InvalidVocabulary(format!(
                "expected {VOCAB_SIZE} symbols, got {}",
                symbols.len()
            )));
        }
        let mut by_char = HashMap::new();
        let (mut blank, mut eos, mut space) = (None, None, None);
        for (id, label) in symbols.iter().enumerate() {
            match label.as_str() {
                BLANK_LABEL => blank = Some(id),
                EOS_LABEL => eos = Some(id),
                SPACE_LABEL => {
                    space = Some(id);
                    by_char.insert(' ', id);
                }
                other => {
                    let mut chars = other.chars();
                    let ch = match (chars.next(), chars.next()) {
                        (Some(c), None) if c.is_ascii_uppercase() || c.is_ascii_digit() || c == '\'' => c,
                        _ => {
                            return Err(Error::InvalidVocabulary(format!(
                                "unexpected symbol {other:?}"
                            )))
                        }
                    };
                    if by_char.insert(ch, id).is_some() {
                        return Err(Error::InvalidVocabulary(format!("duplicate symbol {other:?}")));
                    }
                }
            }
        }
        match (blank, eos, space) {
            (Some(blank_id), Some(eos_sos_id), Some(space_id)) if by_char.len() == 38 => Ok(Self {
                symbols,
                blank_id,
                eos_sos_id,
                space_id,
                by_char,
            }),
            _ => Err(Error::InvalidVocabulary(
                "vocabulary must hold A-Z, 0-9, apostrophe, [space], [blank] and [eos] exactly once"
                    .into(),
            )),
        }
    }

    /// Loads a JSON array of 40 labels.
    pub fn from_json(text: &str) -> Result<Self> {
        let symbols: Vec<String> = serde_json::from_str(text)?;
        Self::from_symbols(symbols)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.symbols).expect("labels serialize")
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn blank_id(&self) -> usize {
        self.blank_id
    }

    pub fn eos_sos_id(&self) -> usize {
        self.eos_sos_id
    }

    pub fn space_id(&self) -> usize {
        self.space_id
    }

    pub fn layout(&self) -> SymbolLayout {
        SymbolLayout::new(VOCAB_SIZE, self.blank_id, self.eos_sos_id).expect("valid layout")
    }

    pub fn id_of(&self, ch: char) -> Option<usize> {
        self.by_char.get(&ch.to_ascii_uppercase()).copied()
    }

    pub fn label(&self, id: usize) -> Option<&str> {
        self.symbols.get(id).map(String::as_str)
    }

    /// Id of a label as written in the vocabulary file (`"A"`, `"[space]"`, ...).
    pub fn id_of_label(&self, label: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == label)
    }

    pub fn encode_text(&self, text: &str) -> Result<TokenSequence> {
        let ids = text
            .chars()
            .enumerate()
            .map(|(position, ch)| {
                self.id_of(ch)
                    .ok_or(Error::UnknownCharacter { position, ch })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TokenSequence::new(ids, TokenRole::Reference))
    }

    /// Renders ids as text. The start/end token renders as nothing.
    pub fn decode_ids(&self, ids: &[usize]) -> Result<String> {
        let mut out = String::with_capacity(ids.len());
        for (pos, &id) in ids.iter().enumerate() {
            if id >= self.len() {
                return Err(Error::TokenOutOfRange { id, size: self.len() });
            }
            if id == self.blank_id {
                return Err(Error::BlankInText(pos));
            }
            if id == self.eos_sos_id {
                continue;
            }
            if id == self.space_id {
                out.push(' ');
            } else {
                out.push_str(&self.symbols[id]);
            }
        }
        Ok(out)
    }

    pub fn decode_tokens(&self, tokens: &TokenSequence) -> Result<String> {
        self.decode_ids(&tokens.ids)
    }
}
