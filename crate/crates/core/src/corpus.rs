//! SMILES corpora turned into SELFIES token sequences and model id
//! sequences.

use std::io::{self, BufRead};

use thiserror::Error;

use crate::molgraph::{canonicalize, parse_smiles, CanonicalSmiles, SmilesError};
use crate::selfies::{encode, EncodeError, SelfiesToken};
use crate::tokenizer::Vocabulary;

#[derive(Debug, Error)]
pub enum ConvertError {
    #[error("SMILES: {0}")]
    Smiles(#[from] SmilesError),
    #[error("SELFIES: {0}")]
    Encode(#[from] EncodeError),
}

/// Parses `smiles` and encodes it as SELFIES tokens.
pub fn smiles_to_selfies(smiles: &str) -> Result<Vec<SelfiesToken>, ConvertError> {
    Ok(encode(&parse_smiles(smiles)?)?)
}

/// A corpus line that could not be used.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejected {
    /// 1-based line number.
    pub line: usize,
    pub text: String,
    pub reason: String,
}

/// Encoded molecules in file order.
#[derive(Debug, Clone, Default)]
pub struct SelfiesCorpus {
    pub molecules: Vec<Vec<SelfiesToken>>,
    pub canonical: Vec<CanonicalSmiles>,
    pub rejected: Vec<Rejected>,
}

/// The first whitespace-separated field of a line, so `SMILES name` files
/// load as well as bare SMILES.
pub fn first_field(line: &str) -> &str {
    line.split_whitespace().next().unwrap_or("")
}

/// Reads one molecule per non-blank line.
pub fn load_smiles<R: BufRead>(input: R) -> io::Result<SelfiesCorpus> {
    let mut corpus = SelfiesCorpus::default();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let smiles = first_field(&line);
        if smiles.is_empty() {
            continue;
        }
        let result = parse_smiles(smiles)
            .map_err(ConvertError::from)
            .and_then(|g| Ok((encode(&g)?, canonicalize(&g))));
        match result {
            Ok((tokens, canon)) => {
                corpus.molecules.push(tokens);
                corpus.canonical.push(canon);
            }
            Err(e) => corpus.rejected.push(Rejected {
                line: i + 1,
                text: smiles.to_owned(),
                reason: e.to_string(),
            }),
        }
    }
    Ok(corpus)
}

/// `<bos> … <eos>` id sequences no longer than `max_len`; returns the
/// sequences and how many molecules were too long.
pub fn id_sequences(vocab: &Vocabulary, molecules: &[Vec<SelfiesToken>], max_len: usize) -> (Vec<Vec<u32>>, usize) {
    let mut out = Vec::with_capacity(molecules.len());
    let mut dropped = 0;
    for m in molecules {
        if m.len() + 2 > max_len {
            dropped += 1;
        } else {
            out.push(vocab.encode_ids(m));
        }
    }
    (out, dropped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selfies::join_tokens;

    #[test]
    fn loads_and_rejects_lines() {
        let text = "CCO ethanol\n\nC1CC\n[Fe]\nc1ccccc1\n";
        let corpus = load_smiles(text.as_bytes()).unwrap();
        assert_eq!(corpus.molecules.len(), 2);
        assert_eq!(join_tokens(&corpus.molecules[0]), "[C][C][O]");
        assert_eq!(corpus.canonical[1].as_str(), "C1=CC=CC=C1");
        let lines: Vec<usize> = corpus.rejected.iter().map(|r| r.line).collect();
        assert_eq!(lines, vec![3, 4]);
    }

    #[test]
    fn long_molecules_are_dropped() {
        let corpus = load_smiles("CCCC\nCC\n".as_bytes()).unwrap();
        let vocab = Vocabulary::build(corpus.molecules.iter().map(Vec::as_slice)).unwrap();
        let (ids, dropped) = id_sequences(&vocab, &corpus.molecules, 5);
        assert_eq!(dropped, 1);
        assert_eq!(ids, vec![vec![1, 5, 5, 2]]);
    }
}
