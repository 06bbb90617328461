//! Vocabulary, id sequences framed by `<bos>`/`<eos>`, and mask corruption
//! for denoising pairs.

use std::collections::HashMap;
use std::io::{self, BufRead, Write};

use rand::Rng;
use thiserror::Error;

use crate::selfies::SelfiesToken;

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const MASK: u32 = 3;
pub const UNK: u32 = 4;

pub const SPECIALS: [&str; 5] = ["<pad>", "<bos>", "<eos>", "<mask>", "<unk>"];
pub const NUM_SPECIALS: usize = SPECIALS.len();

pub const DEFAULT_MASK_RATE: f64 = 0.15;

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("id {0} is outside the vocabulary")]
    IdOutOfRange(u32),
    #[error("vocabulary file line {line}: expected {expected:?}, found {found:?}")]
    BadHeader {
        line: usize,
        expected: &'static str,
        found: String,
    },
    #[error("vocabulary file line {line}: {text:?} is not a SELFIES token")]
    BadToken { line: usize, text: String },
    #[error("vocabulary file line {line}: duplicate token {text}")]
    Duplicate { line: usize, text: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Token text to id mapping; ids `0..5` are the special tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<SelfiesToken>,
    ids: HashMap<SelfiesToken, u32>,
}

impl Vocabulary {
    /// Specials first, then tokens in order of first appearance.
    pub fn build<'a, I>(corpus: I) -> Result<Vocabulary, VocabError>
    where
        I: IntoIterator<Item = &'a [SelfiesToken]>,
    {
        let mut vocab = Vocabulary {
            tokens: Vec::new(),
            ids: HashMap::new(),
        };
        let mut sequences = 0;
        for seq in corpus {
            sequences += 1;
            for &t in seq {
                vocab.insert(t);
            }
        }
        if sequences == 0 {
            return Err(VocabError::EmptyCorpus);
        }
        Ok(vocab)
    }

    fn insert(&mut self, token: SelfiesToken) -> bool {
        if self.ids.contains_key(&token) {
            return false;
        }
        self.ids.insert(token, (NUM_SPECIALS + self.tokens.len()) as u32);
        self.tokens.push(token);
        true
    }

    /// Total number of ids, specials included.
    pub fn len(&self) -> usize {
        NUM_SPECIALS + self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: SelfiesToken) -> Option<u32> {
        self.ids.get(&token).copied()
    }

    /// The token for a content id, or `None` for specials and unknown ids.
    pub fn token(&self, id: u32) -> Option<SelfiesToken> {
        (id as usize).checked_sub(NUM_SPECIALS).and_then(|i| self.tokens.get(i).copied())
    }

    /// Display text for any id.
    pub fn text(&self, id: u32) -> Option<&'static str> {
        match SPECIALS.get(id as usize) {
            Some(&s) => Some(s),
            None => self.token(id).map(SelfiesToken::text),
        }
    }

    /// `<bos>`, one id per token (`<unk>` when missing), `<eos>`.
    pub fn encode_ids(&self, tokens: &[SelfiesToken]) -> Vec<u32> {
        let mut ids = Vec::with_capacity(tokens.len() + 2);
        ids.push(BOS);
        ids.extend(tokens.iter().map(|&t| self.id(t).unwrap_or(UNK)));
        ids.push(EOS);
        ids
    }

    /// Tokens up to the first `<eos>`, with special ids dropped.
    pub fn decode_ids(&self, ids: &[u32]) -> Result<Vec<SelfiesToken>, VocabError> {
        let mut out = Vec::new();
        for &id in ids {
            if id as usize >= self.len() {
                return Err(VocabError::IdOutOfRange(id));
            }
            if id == EOS {
                break;
            }
            if let Some(t) = self.token(id) {
                out.push(t);
            }
        }
        Ok(out)
    }

    /// Five special lines, then one token per line so that line index = id.
    pub fn write_to<W: Write>(&self, mut out: W) -> io::Result<()> {
        for s in SPECIALS {
            writeln!(out, "{s}")?;
        }
        for t in &self.tokens {
            writeln!(out, "{t}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Vocabulary, VocabError> {
        let mut vocab = Vocabulary {
            tokens: Vec::new(),
            ids: HashMap::new(),
        };
        let mut lines = 0;
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let text = line.trim_end_matches('\r');
            lines += 1;
            if let Some(&expected) = SPECIALS.get(i) {
                if text != expected {
                    return Err(VocabError::BadHeader {
                        line: i + 1,
                        expected,
                        found: text.to_owned(),
                    });
                }
                continue;
            }
            let token = SelfiesToken::from_text(text).ok_or_else(|| VocabError::BadToken {
                line: i + 1,
                text: text.to_owned(),
            })?;
            if !vocab.insert(token) {
                return Err(VocabError::Duplicate {
                    line: i + 1,
                    text: text.to_owned(),
                });
            }
        }
        if lines < NUM_SPECIALS {
            return Err(VocabError::BadHeader {
                line: lines + 1,
                expected: SPECIALS[lines],
                found: String::new(),
            });
        }
        Ok(vocab)
    }
}

/// A denoising example: the corrupted input and the clean target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorruptedPair {
    pub input: Vec<u32>,
    pub target: Vec<u32>,
    pub mask_positions: Vec<usize>,
}

/// True for ids that stand for molecule content: vocabulary tokens and
/// `<unk>`.
pub fn is_content(id: u32) -> bool {
    id as usize >= NUM_SPECIALS || id == UNK
}

/// Replaces each non-special position with `<mask>` independently with
/// probability `mask_rate`.
pub fn corrupt<R: Rng + ?Sized>(ids: &[u32], mask_rate: f64, rng: &mut R) -> CorruptedPair {
    assert!((0.0..=1.0).contains(&mask_rate), "mask rate must lie in [0, 1]");
    let mut input = ids.to_vec();
    let mut mask_positions = Vec::new();
    for (i, id) in input.iter_mut().enumerate() {
        if !is_content(*id) {
            continue;
        }
        if rng.random::<f64>() < mask_rate {
            *id = MASK;
            mask_positions.push(i);
        }
    }
    CorruptedPair {
        input,
        target: ids.to_vec(),
        mask_positions,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selfies::split_selfies;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toks(s: &str) -> Vec<SelfiesToken> {
        split_selfies(s).unwrap()
    }

    fn vocab_of(corpus: &[&str]) -> Vocabulary {
        let seqs: Vec<Vec<SelfiesToken>> = corpus.iter().map(|s| toks(s)).collect();
        Vocabulary::build(seqs.iter().map(Vec::as_slice)).unwrap()
    }

    #[test]
    fn build_counts_specials_and_distinct_tokens() {
        assert_eq!(vocab_of(&["[C][C]"]).len(), 6);
        let v = vocab_of(&["[C][=O]", "[C]"]);
        assert_eq!(v.len(), 7);
        assert_eq!(v.id(toks("[C]")[0]), Some(5));
        assert_eq!(v.id(toks("[=O]")[0]), Some(6));
        assert_eq!(v, vocab_of(&["[C][=O]", "[C]"]));
        assert!(matches!(Vocabulary::build(std::iter::empty()), Err(VocabError::EmptyCorpus)));
    }

    #[test]
    fn encode_and_decode_ids() {
        let v = vocab_of(&["[C][=O]"]);
        assert_eq!(v.encode_ids(&[]), vec![BOS, EOS]);
        assert_eq!(v.encode_ids(&toks("[C]")), vec![1, 5, 2]);
        assert_eq!(v.encode_ids(&toks("[C][N]")), vec![1, 5, UNK, 2]);

        for s in ["", "[C]", "[=O][C][C]"] {
            let t = toks(s);
            assert_eq!(v.decode_ids(&v.encode_ids(&t)).unwrap(), t);
        }
        assert_eq!(v.decode_ids(&[1, 5, 2, 6]).unwrap(), toks("[C]"));
        assert!(matches!(v.decode_ids(&[1, 7]), Err(VocabError::IdOutOfRange(7))));
    }

    #[test]
    fn vocabulary_file_round_trip() {
        let v = vocab_of(&["[C][=O][Ring1]", "[Cl]"]);
        let mut buf = Vec::new();
        v.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("<pad>\n<bos>\n<eos>\n<mask>\n<unk>\n[C]\n"));
        assert_eq!(Vocabulary::read_from(&buf[..]).unwrap(), v);
        assert!(matches!(
            Vocabulary::read_from(&b"<pad>\n<eos>\n"[..]),
            Err(VocabError::BadHeader { line: 2, .. })
        ));
    }

    #[test]
    fn corruption_extremes() {
        let v = vocab_of(&["[C][=O][N]"]);
        let ids = v.encode_ids(&toks("[C][=O][N][C]"));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let none = corrupt(&ids, 0.0, &mut rng);
        assert_eq!(none.input, ids);
        assert!(none.mask_positions.is_empty());
        let all = corrupt(&ids, 1.0, &mut rng);
        assert_eq!(all.input, vec![BOS, MASK, MASK, MASK, MASK, EOS]);
        assert_eq!(all.mask_positions, vec![1, 2, 3, 4]);
        assert_eq!(all.target, ids);
    }

    #[test]
    fn masked_fraction_concentrates() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let ids: Vec<u32> = std::iter::once(BOS)
            .chain(std::iter::repeat_n(5, 100_000))
            .chain(std::iter::once(EOS))
            .collect();
        let pair = corrupt(&ids, DEFAULT_MASK_RATE, &mut rng);
        let fraction = pair.mask_positions.len() as f64 / 100_000.0;
        assert!((fraction - 0.15).abs() <= 0.01, "{fraction}");
        assert_eq!(pair.input[0], BOS);
        assert_eq!(pair.input[100_001], EOS);
    }
}
