//! SELFIES: a molecular string grammar in which every token sequence decodes
//! to a valid molecule.
//!
//! The alphabet is closed: atom tokens `[E]`, `[=E]`, `[#E]` for the supported
//! elements, plus `[BranchK]` and `[RingK]` tokens (optionally prefixed with
//! `=` or `#`) for `K` in 1..=3. Branch and ring tokens read the next `K`
//! tokens as base-16 digits through the index alphabet.

mod decoder;
mod encoder;

use std::fmt;

use rand::Rng;
use thiserror::Error;

use crate::molgraph::Element;

pub use decoder::decode;
pub use encoder::{encode, EncodeError};

const ATOM_ELEMENTS: [Element; 11] = [
    Element::B,
    Element::C,
    Element::N,
    Element::O,
    Element::S,
    Element::P,
    Element::F,
    Element::Cl,
    Element::Br,
    Element::I,
    Element::H,
];

const PREFIXES: [&str; 3] = ["", "=", "#"];

/// Number of tokens in the alphabet.
pub const ALPHABET_SIZE: usize = 51;

/// Tokens whose position in this list is their digit value.
const INDEX_ALPHABET: [&str; 16] = [
    "[C]", "[Ring1]", "[Ring2]", "[Branch1]", "[=Branch1]", "[#Branch1]", "[Branch2]", "[=Branch2]",
    "[#Branch2]", "[O]", "[N]", "[=N]", "[=C]", "[#C]", "[S]", "[P]",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    /// An atom bonded to the previous atom with the requested order.
    Atom { element: Element, order: u8 },
    /// A branch whose length is read from the next `size` tokens.
    Branch { order: u8, size: u8 },
    /// A ring closure whose reach-back is read from the next `size` tokens.
    Ring { order: u8, size: u8 },
}

/// One symbol of the alphabet, stored as its position in [`alphabet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SelfiesToken(u8);

struct TokenInfo {
    text: String,
    kind: TokenKind,
    digit: Option<u8>,
}

fn table() -> &'static [TokenInfo] {
    static TABLE: std::sync::OnceLock<Vec<TokenInfo>> = std::sync::OnceLock::new();
    TABLE.get_or_init(|| {
        let mut entries = Vec::with_capacity(ALPHABET_SIZE);
        for (order, prefix) in (1u8..).zip(PREFIXES) {
            for element in ATOM_ELEMENTS {
                entries.push((format!("[{prefix}{element}]"), TokenKind::Atom { element, order }));
            }
        }
        for size in 1u8..=3 {
            for (order, prefix) in (1u8..).zip(PREFIXES) {
                entries.push((format!("[{prefix}Branch{size}]"), TokenKind::Branch { order, size }));
            }
        }
        for size in 1u8..=3 {
            for (order, prefix) in (1u8..).zip(PREFIXES) {
                entries.push((format!("[{prefix}Ring{size}]"), TokenKind::Ring { order, size }));
            }
        }
        entries
            .into_iter()
            .map(|(text, kind)| {
                let digit = INDEX_ALPHABET.iter().position(|&t| t == text).map(|d| d as u8);
                TokenInfo { text, kind, digit }
            })
            .collect()
    })
}

impl SelfiesToken {
    pub fn from_text(text: &str) -> Option<SelfiesToken> {
        table()
            .iter()
            .position(|info| info.text == text)
            .map(|i| SelfiesToken(i as u8))
    }

    pub fn text(self) -> &'static str {
        &table()[self.0 as usize].text
    }

    pub fn kind(self) -> TokenKind {
        table()[self.0 as usize].kind
    }

    /// Digit value in the index alphabet, if this token is one of its sixteen.
    pub fn index_digit(self) -> Option<u8> {
        table()[self.0 as usize].digit
    }

    pub(crate) fn from_digit(digit: u8) -> SelfiesToken {
        SelfiesToken::from_text(INDEX_ALPHABET[digit as usize]).unwrap()
    }

    pub(crate) fn atom(element: Element, order: u8) -> SelfiesToken {
        let e = ATOM_ELEMENTS.iter().position(|&x| x == element).unwrap();
        SelfiesToken(((order - 1) as usize * ATOM_ELEMENTS.len() + e) as u8)
    }

    pub(crate) fn structural(ring: bool, order: u8, size: u8) -> SelfiesToken {
        let base = 3 * ATOM_ELEMENTS.len() + if ring { 9 } else { 0 };
        SelfiesToken((base + (size as usize - 1) * 3 + (order as usize - 1)) as u8)
    }
}

impl fmt::Display for SelfiesToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.text())
    }
}

/// Every token of the alphabet, atoms first.
pub fn alphabet() -> impl Iterator<Item = SelfiesToken> {
    (0..ALPHABET_SIZE as u8).map(SelfiesToken)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SelfiesError {
    #[error("unbalanced bracket at position {position}")]
    UnbalancedBracket { position: usize },
    #[error("unexpected character outside brackets at position {position}")]
    StrayCharacter { position: usize },
    #[error("symbol {symbol} at position {position} is not in the alphabet")]
    UnknownSymbol { position: usize, symbol: String },
}

/// Splits SELFIES text into tokens, validating each against the alphabet.
pub fn split_selfies(text: &str) -> Result<Vec<SelfiesToken>, SelfiesError> {
    let mut tokens = Vec::new();
    let bytes = text.as_bytes();
    let mut pos = 0;
    while pos < bytes.len() {
        if bytes[pos] != b'[' {
            return Err(if bytes[pos] == b']' {
                SelfiesError::UnbalancedBracket { position: pos }
            } else {
                SelfiesError::StrayCharacter { position: pos }
            });
        }
        let Some(len) = bytes[pos + 1..].iter().position(|&b| b == b']' || b == b'[') else {
            return Err(SelfiesError::UnbalancedBracket { position: pos });
        };
        let end = pos + 1 + len;
        if bytes[end] == b'[' {
            return Err(SelfiesError::UnbalancedBracket { position: pos });
        }
        let symbol = &text[pos..=end];
        let token = SelfiesToken::from_text(symbol).ok_or_else(|| SelfiesError::UnknownSymbol {
            position: pos,
            symbol: symbol.to_owned(),
        })?;
        tokens.push(token);
        pos = end + 1;
    }
    Ok(tokens)
}

/// Concatenates token texts.
pub fn join_tokens(tokens: &[SelfiesToken]) -> String {
    tokens.iter().map(|t| t.text()).collect()
}

/// `length` tokens drawn uniformly from the alphabet.
pub fn random_token_string<R: Rng + ?Sized>(rng: &mut R, length: usize) -> Vec<SelfiesToken> {
    (0..length)
        .map(|_| SelfiesToken(rng.random_range(0..ALPHABET_SIZE as u8)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn alphabet_has_fifty_one_distinct_tokens() {
        let texts: std::collections::BTreeSet<_> = alphabet().map(|t| t.text()).collect();
        assert_eq!(texts.len(), ALPHABET_SIZE);
        assert!(texts.contains("[=Cl]") && texts.contains("[#Ring3]") && texts.contains("[H]"));
    }

    #[test]
    fn index_alphabet_digits() {
        let digit = |s: &str| SelfiesToken::from_text(s).unwrap().index_digit();
        assert_eq!(digit("[C]"), Some(0));
        assert_eq!(digit("[Ring2]"), Some(2));
        assert_eq!(digit("[#Branch2]"), Some(8));
        assert_eq!(digit("[P]"), Some(15));
        assert_eq!(digit("[F]"), None);
        for d in 0..16 {
            assert_eq!(SelfiesToken::from_digit(d).index_digit(), Some(d));
        }
    }

    #[test]
    fn constructors_agree_with_text() {
        assert_eq!(SelfiesToken::atom(Element::Cl, 2).text(), "[=Cl]");
        assert_eq!(SelfiesToken::structural(false, 3, 2).text(), "[#Branch2]");
        assert_eq!(SelfiesToken::structural(true, 1, 3).text(), "[Ring3]");
    }

    #[test]
    fn splitting() {
        let t = split_selfies("[C][=O]").unwrap();
        assert_eq!(t.iter().map(|t| t.text()).collect::<Vec<_>>(), ["[C]", "[=O]"]);
        assert!(split_selfies("").unwrap().is_empty());
        let kinds: Vec<_> = split_selfies("[C][Branch1][C][F]")
            .unwrap()
            .iter()
            .map(|t| t.kind())
            .collect();
        assert!(matches!(kinds[1], TokenKind::Branch { order: 1, size: 1 }));
        assert!(matches!(kinds[3], TokenKind::Atom { element: Element::F, order: 1 }));

        assert_eq!(split_selfies("[C"), Err(SelfiesError::UnbalancedBracket { position: 0 }));
        assert_eq!(split_selfies("[C]]"), Err(SelfiesError::UnbalancedBracket { position: 3 }));
        assert_eq!(split_selfies("[C[O]"), Err(SelfiesError::UnbalancedBracket { position: 0 }));
        assert_eq!(split_selfies("C"), Err(SelfiesError::StrayCharacter { position: 0 }));
        assert_eq!(
            split_selfies("[C][Xe]"),
            Err(SelfiesError::UnknownSymbol {
                position: 3,
                symbol: "[Xe]".into()
            })
        );
    }

    #[test]
    fn random_strings_are_reproducible() {
        let a = random_token_string(&mut ChaCha8Rng::seed_from_u64(3), 40);
        let b = random_token_string(&mut ChaCha8Rng::seed_from_u64(3), 40);
        assert_eq!(a, b);
        assert!(random_token_string(&mut ChaCha8Rng::seed_from_u64(3), 0).is_empty());
        assert_eq!(split_selfies(&join_tokens(&a)).unwrap(), a);
    }
}
