// SPDX-License-Identifier: MIT OR Apache-2.0

//! Vocabulary files: one entry per line, `id<TAB>token-string`. Token
//! strings may begin with a space, so only the single tab separates the
//! fields and the token runs to the end of the line.

use std::path::Path;

use idiom_circuits_core::Vocab;

use crate::error::{io_err, FormatError};

pub fn vocab_from_str(text: &str) -> Result<Vocab, FormatError> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (id, token) = line.split_once('\t').ok_or(FormatError::MalformedVocab {
            line: i + 1,
            reason: "expected `id<TAB>token`".into(),
        })?;
        let id: usize = id.parse().map_err(|_| FormatError::MalformedVocab {
            line: i + 1,
            reason: format!("`{}` is not a token id", id),
        })?;
        pairs.push((id, token.to_string()));
    }
    Vocab::from_pairs(pairs).map_err(FormatError::Core)
}

pub fn vocab_to_string(vocab: &Vocab) -> String {
    let mut out = String::new();
    for id in 0..vocab.len() {
        out.push_str(&format!("{}\t{}\n", id, vocab.token(id).unwrap()));
    }
    out
}

pub fn load_vocab(path: &Path) -> Result<Vocab, FormatError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    vocab_from_str(&text)
}

pub fn save_vocab(path: &Path, vocab: &Vocab) -> Result<(), FormatError> {
    std::fs::write(path, vocab_to_string(vocab)).map_err(|e| io_err(path, e))
}
