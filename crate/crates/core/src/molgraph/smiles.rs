//! SMILES reader for a single connected molecule.
//!
//! Supports the organic subset, bracket atoms with hydrogen counts and
//! charges, explicit bonds (`- = # : / \`), branches and ring closures
//! (`1`-`9`, `%nn`). Stereo markers are accepted and dropped. Aromatic input is
//! kekulized before the graph is built.

use std::collections::BTreeMap;

use thiserror::Error;

use super::kekulize::{kekulize, KekuleAtom};
use super::{Atom, Bond, BondOrder, Element, GraphError, MolecularGraph};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmilesError {
    #[error("empty SMILES string")]
    Empty,
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: &'static str },
    #[error("unsupported element '{symbol}' at position {position}")]
    UnsupportedElement { position: usize, symbol: String },
    #[error("unsupported feature at position {position}: {feature}")]
    Unsupported { position: usize, feature: &'static str },
    #[error("ring bond {label} opened at position {position} is never closed")]
    UnclosedRing { label: u32, position: usize },
    #[error("branch opened at position {position} is never closed")]
    UnclosedBranch { position: usize },
    #[error("disconnected fragments ('.') at position {position}")]
    Disconnected { position: usize },
    #[error("aromatic system cannot be kekulized")]
    Kekulization,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum RawBond {
    Single,
    Double,
    Triple,
    Aromatic,
    /// No bond symbol was written.
    Implicit,
}

#[derive(Debug, Clone, Copy)]
struct RawAtom {
    element: Element,
    aromatic: bool,
    charge: i8,
    hydrogens: Option<u8>,
}

struct RingOpening {
    atom: usize,
    bond: Option<RawBond>,
    position: usize,
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
    atoms: Vec<RawAtom>,
    bonds: Vec<(usize, usize, RawBond)>,
    branches: Vec<(usize, usize, usize)>,
    prev: Option<usize>,
    pending: Option<RawBond>,
    rings: BTreeMap<u32, RingOpening>,
}

/// Parses a SMILES string into a validated [`MolecularGraph`].
///
/// Leading and trailing whitespace is ignored.
pub fn parse_smiles(text: &str) -> Result<MolecularGraph, SmilesError> {
    let text = text.trim();
    if text.is_empty() {
        return Err(SmilesError::Empty);
    }
    let mut parser = Parser {
        bytes: text.as_bytes(),
        pos: 0,
        atoms: Vec::new(),
        bonds: Vec::new(),
        branches: Vec::new(),
        prev: None,
        pending: None,
        rings: BTreeMap::new(),
    };
    parser.run()?;
    parser.finish()
}

fn syntax(position: usize, message: &'static str) -> SmilesError {
    SmilesError::Syntax { position, message }
}

impl Parser<'_> {
    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn run(&mut self) -> Result<(), SmilesError> {
        while let Some(c) = self.peek() {
            let start = self.pos;
            match c {
                b'(' => {
                    let Some(prev) = self.prev else {
                        return Err(syntax(start, "branch without a preceding atom"));
                    };
                    if self.pending.is_some() {
                        return Err(syntax(start, "bond symbol before '('"));
                    }
                    self.branches.push((prev, start, self.atoms.len()));
                    self.pos += 1;
                }
                b')' => {
                    let Some((atom, _, atoms_before)) = self.branches.pop() else {
                        return Err(syntax(start, "unmatched ')'"));
                    };
                    if self.pending.is_some() {
                        return Err(syntax(start, "bond symbol before ')'"));
                    }
                    if self.atoms.len() == atoms_before {
                        return Err(syntax(start, "empty branch"));
                    }
                    self.prev = Some(atom);
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                    if self.prev.is_none() {
                        return Err(syntax(start, "bond without a preceding atom"));
                    }
                    if self.pending.is_some() {
                        return Err(syntax(start, "two consecutive bond symbols"));
                    }
                    self.pending = Some(match c {
                        b'=' => RawBond::Double,
                        b'#' => RawBond::Triple,
                        b':' => RawBond::Aromatic,
                        _ => RawBond::Single,
                    });
                    self.pos += 1;
                }
                b'$' => {
                    return Err(SmilesError::Unsupported {
                        position: start,
                        feature: "quadruple bonds",
                    })
                }
                b'.' => return Err(SmilesError::Disconnected { position: start }),
                b'0'..=b'9' | b'%' => self.ring_bond()?,
                b'[' => {
                    let atom = self.bracket_atom()?;
                    self.add_atom(atom);
                }
                b'*' => {
                    return Err(SmilesError::UnsupportedElement {
                        position: start,
                        symbol: "*".into(),
                    })
                }
                _ => {
                    let atom = self.organic_atom()?;
                    self.add_atom(atom);
                }
            }
        }
        Ok(())
    }

    fn add_atom(&mut self, atom: RawAtom) {
        let idx = self.atoms.len();
        self.atoms.push(atom);
        if let Some(prev) = self.prev {
            let bond = self.pending.take().unwrap_or(RawBond::Implicit);
            self.bonds.push((prev, idx, bond));
        }
        self.prev = Some(idx);
    }

    fn ring_bond(&mut self) -> Result<(), SmilesError> {
        let start = self.pos;
        let Some(prev) = self.prev else {
            return Err(syntax(start, "ring bond without a preceding atom"));
        };
        let label = if self.peek() == Some(b'%') {
            let digits = self.bytes.get(self.pos + 1..self.pos + 3);
            match digits {
                Some(d) if d.iter().all(u8::is_ascii_digit) => {
                    self.pos += 3;
                    u32::from(d[0] - b'0') * 10 + u32::from(d[1] - b'0')
                }
                _ => return Err(syntax(start, "'%' must be followed by two digits")),
            }
        } else {
            let d = self.bytes[self.pos] - b'0';
            self.pos += 1;
            u32::from(d)
        };
        let bond = self.pending.take();
        match self.rings.remove(&label) {
            Some(open) => {
                if open.atom == prev {
                    return Err(syntax(start, "ring bond closes on its own atom"));
                }
                let kind = match (open.bond, bond) {
                    (Some(a), Some(b)) if a != b => {
                        return Err(syntax(start, "ring bond symbols disagree"))
                    }
                    (Some(a), _) => a,
                    (None, Some(b)) => b,
                    (None, None) => RawBond::Implicit,
                };
                self.bonds.push((open.atom, prev, kind));
            }
            None => {
                self.rings.insert(
                    label,
                    RingOpening {
                        atom: prev,
                        bond,
                        position: start,
                    },
                );
            }
        }
        Ok(())
    }

    fn organic_atom(&mut self) -> Result<RawAtom, SmilesError> {
        let start = self.pos;
        let c = self.bytes[self.pos];
        let next = self.bytes.get(self.pos + 1).copied();
        let (element, aromatic, len) = match (c, next) {
            (b'C', Some(b'l')) => (Element::Cl, false, 2),
            (b'B', Some(b'r')) => (Element::Br, false, 2),
            (b'B', _) => (Element::B, false, 1),
            (b'C', _) => (Element::C, false, 1),
            (b'N', _) => (Element::N, false, 1),
            (b'O', _) => (Element::O, false, 1),
            (b'P', _) => (Element::P, false, 1),
            (b'S', _) => (Element::S, false, 1),
            (b'F', _) => (Element::F, false, 1),
            (b'I', _) => (Element::I, false, 1),
            (b'b', _) => (Element::B, true, 1),
            (b'c', _) => (Element::C, true, 1),
            (b'n', _) => (Element::N, true, 1),
            (b'o', _) => (Element::O, true, 1),
            (b'p', _) => (Element::P, true, 1),
            (b's', _) => (Element::S, true, 1),
            (c, next) if c.is_ascii_uppercase() => {
                let mut symbol = String::from(c as char);
                if let Some(n) = next.filter(u8::is_ascii_lowercase) {
                    symbol.push(n as char);
                }
                return Err(SmilesError::UnsupportedElement {
                    position: start,
                    symbol,
                });
            }
            (c, _) if c.is_ascii_lowercase() => {
                return Err(SmilesError::UnsupportedElement {
                    position: start,
                    symbol: (c as char).to_string(),
                })
            }
            _ => return Err(syntax(start, "unexpected character")),
        };
        self.pos += len;
        Ok(RawAtom {
            element,
            aromatic,
            charge: 0,
            hydrogens: None,
        })
    }

    fn read_number(&mut self) -> Option<u32> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == start || self.pos - start > 3 {
            return None;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()?
            .parse()
            .ok()
    }

    fn bracket_atom(&mut self) -> Result<RawAtom, SmilesError> {
        let open = self.pos;
        self.pos += 1;
        if self.peek().is_some_and(|c| c.is_ascii_digit()) {
            return Err(SmilesError::Unsupported {
                position: self.pos,
                feature: "isotopes",
            });
        }

        let sym_start = self.pos;
        let (element, aromatic) = match self.peek() {
            Some(c) if c.is_ascii_uppercase() => {
                let len = if self.bytes.get(self.pos + 1).is_some_and(u8::is_ascii_lowercase) { 2 } else { 1 };
                let symbol = String::from_utf8_lossy(&self.bytes[self.pos..self.pos + len]).into_owned();
                match Element::from_symbol(&symbol) {
                    Some(e) => {
                        self.pos += len;
                        (e, false)
                    }
                    None => {
                        return Err(SmilesError::UnsupportedElement {
                            position: sym_start,
                            symbol,
                        })
                    }
                }
            }
            Some(c) if c.is_ascii_lowercase() => {
                let element = match c {
                    b'b' => Element::B,
                    b'c' => Element::C,
                    b'n' => Element::N,
                    b'o' => Element::O,
                    b'p' => Element::P,
                    b's' => Element::S,
                    _ => {
                        return Err(SmilesError::UnsupportedElement {
                            position: sym_start,
                            symbol: (c as char).to_string(),
                        })
                    }
                };
                if self.bytes.get(self.pos + 1).is_some_and(u8::is_ascii_lowercase) {
                    let symbol = String::from_utf8_lossy(&self.bytes[self.pos..self.pos + 2]).into_owned();
                    return Err(SmilesError::UnsupportedElement {
                        position: sym_start,
                        symbol,
                    });
                }
                self.pos += 1;
                (element, true)
            }
            Some(b'*') => {
                return Err(SmilesError::UnsupportedElement {
                    position: sym_start,
                    symbol: "*".into(),
                })
            }
            _ => return Err(syntax(sym_start, "missing element symbol in bracket atom")),
        };

        // Chirality is parsed and discarded.
        let mut chiral = false;
        while self.peek() == Some(b'@') {
            self.pos += 1;
            chiral = true;
        }
        if chiral {
            let tag = self.bytes.get(self.pos..self.pos + 2);
            if matches!(tag, Some(b"TH" | b"AL" | b"SP" | b"TB" | b"OH")) {
                self.pos += 2;
                self.read_number();
            }
        }

        let mut hydrogens = 0u8;
        if self.peek() == Some(b'H') {
            self.pos += 1;
            hydrogens = if self.peek().is_some_and(|c| c.is_ascii_digit()) {
                match self.read_number() {
                    Some(h) if h <= 9 => h as u8,
                    _ => return Err(syntax(self.pos, "hydrogen count out of range")),
                }
            } else {
                1
            };
        }

        let mut charge: i32 = 0;
        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            let unit = if sign == b'+' { 1 } else { -1 };
            self.pos += 1;
            if self.peek().is_some_and(|c| c.is_ascii_digit()) {
                match self.read_number() {
                    Some(m) if m <= 9 => charge = unit * m as i32,
                    _ => return Err(syntax(self.pos, "charge out of range")),
                }
            } else {
                charge = unit;
                while self.peek() == Some(sign) {
                    charge += unit;
                    self.pos += 1;
                }
            }
        }

        if self.peek() == Some(b':') {
            self.pos += 1;
            if self.read_number().is_none() {
                return Err(syntax(self.pos, "atom class must be a number"));
            }
        }

        if self.peek() != Some(b']') {
            return Err(if self.pos >= self.bytes.len() {
                syntax(open, "unterminated bracket atom")
            } else {
                syntax(self.pos, "unexpected character in bracket atom")
            });
        }
        self.pos += 1;
        if charge.abs() > 4 {
            return Err(syntax(open, "charge out of range"));
        }

        Ok(RawAtom {
            element,
            aromatic,
            charge: charge as i8,
            hydrogens: Some(hydrogens),
        })
    }

    fn finish(self) -> Result<MolecularGraph, SmilesError> {
        if self.pending.is_some() {
            return Err(syntax(self.bytes.len(), "dangling bond symbol"));
        }
        if let Some(&(_, position, _)) = self.branches.last() {
            return Err(SmilesError::UnclosedBranch { position });
        }
        if let Some((&label, open)) = self.rings.iter().next() {
            return Err(SmilesError::UnclosedRing {
                label,
                position: open.position,
            });
        }

        let kekule_atoms: Vec<KekuleAtom> = self
            .atoms
            .iter()
            .map(|a| KekuleAtom {
                element: a.element,
                aromatic: a.aromatic,
                charge: a.charge,
                hydrogens: a.hydrogens,
            })
            .collect();
        let orders = kekulize(&kekule_atoms, &self.bonds).ok_or(SmilesError::Kekulization)?;

        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom {
                element: a.element,
                charge: a.charge,
                explicit_h: a.hydrogens,
            })
            .collect();
        let bonds = self
            .bonds
            .iter()
            .zip(orders)
            .map(|(&(a, b, _), order)| Bond { a, b, order })
            .collect();
        Ok(MolecularGraph::new(atoms, bonds)?)
    }
}

/// Maps explicit non-aromatic bond symbols to orders.
pub(crate) fn plain_order(bond: RawBond) -> Option<BondOrder> {
    match bond {
        RawBond::Single => Some(BondOrder::Single),
        RawBond::Double => Some(BondOrder::Double),
        RawBond::Triple => Some(BondOrder::Triple),
        RawBond::Aromatic | RawBond::Implicit => None,
    }
}
