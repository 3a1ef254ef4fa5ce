use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::ModelError;

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;

const SPECIALS: [&str; 3] = ["<pad>", "<bos>", "<eos>"];

/// Multi-character pieces merged into single tokens: prompt headers, code
/// fences, keywords, input slots and spaced operators of the canonical
/// minilang layout.
const MERGES: &[&str] = &[
    "### Instruction:",
    "### Response:",
    "```",
    "while (",
    "print(",
    "if (",
    " else ",
    "in0",
    "in1",
    "in2",
    "in3",
    "in4",
    "in5",
    "in6",
    "in7",
    "in8",
    "in9",
    " = ",
    "; ",
    " + ",
    " - ",
    " * ",
    " / ",
    " % ",
    " <= ",
    " < ",
    " >= ",
    " > ",
    " == ",
    " != ",
    " && ",
    " || ",
    ") { ",
    "; }",
    "\n\n",
];

/// Character-plus-merge tokenizer with greedy longest-match encoding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "TokenizerRepr", into = "TokenizerRepr")]
pub struct Tokenizer {
    vocab: Vec<String>,
    lookup: HashMap<String, usize>,
    max_piece_chars: usize,
}

#[derive(Serialize, Deserialize)]
struct TokenizerRepr {
    vocab: Vec<String>,
}

impl From<TokenizerRepr> for Tokenizer {
    fn from(repr: TokenizerRepr) -> Self {
        Tokenizer::from_vocab(repr.vocab)
    }
}

impl From<Tokenizer> for TokenizerRepr {
    fn from(tok: Tokenizer) -> Self {
        TokenizerRepr { vocab: tok.vocab }
    }
}

impl Default for Tokenizer {
    fn default() -> Self {
        Self::new()
    }
}

impl Tokenizer {
    /// The standard vocabulary: specials, merges, then printable ASCII, `\n` and `\t`.
    pub fn new() -> Self {
        let mut vocab: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        vocab.extend(MERGES.iter().map(|s| s.to_string()));
        vocab.push("\n".to_string());
        vocab.push("\t".to_string());
        vocab.extend((0x20u8..0x7f).map(|b| (b as char).to_string()));
        Self::from_vocab(vocab)
    }

    pub fn from_vocab(vocab: Vec<String>) -> Self {
        let lookup = vocab.iter().enumerate().skip(SPECIALS.len()).map(|(i, s)| (s.clone(), i)).collect();
        let max_piece_chars = vocab.iter().skip(SPECIALS.len()).map(|s| s.chars().count()).max().unwrap_or(1);
        Self { vocab, lookup, max_piece_chars }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    /// Encodes text without adding special tokens.
    pub fn encode(&self, text: &str) -> Result<Vec<usize>, ModelError> {
        let chars: Vec<char> = text.chars().collect();
        let mut ids = Vec::with_capacity(chars.len());
        let mut i = 0;
        let mut piece = String::new();
        while i < chars.len() {
            let longest = self.max_piece_chars.min(chars.len() - i);
            let mut matched = None;
            for len in (1..=longest).rev() {
                piece.clear();
                piece.extend(&chars[i..i + len]);
                if let Some(&id) = self.lookup.get(piece.as_str()) {
                    matched = Some((id, len));
                    break;
                }
            }
            match matched {
                Some((id, len)) => {
                    ids.push(id);
                    i += len;
                }
                None => return Err(ModelError::UnsupportedChar(chars[i])),
            }
        }
        Ok(ids)
    }

    /// Decodes ids; special tokens decode to nothing.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter(|&&id| id >= SPECIALS.len())
            .filter_map(|&id| self.vocab.get(id))
            .map(String::as_str)
            .collect()
    }

    pub fn token_str(&self, id: usize) -> &str {
        &self.vocab[id]
    }
}
