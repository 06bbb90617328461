//! Token sequence to molecular graph.
//!
//! Derivation keeps a "state": the number of bonds the most recent atom can
//! still form. Atom tokens clip their bond to that state and to their own
//! capacity; a branch runs a nested derivation seeded from the current atom;
//! ring tokens queue a bond back to an earlier atom. Queued ring bonds are
//! formed after the whole sequence is read, each clipped to the free valence
//! of both ends; a ring bond onto an existing bond raises its order instead.

use super::{SelfiesToken, TokenKind};
use crate::molgraph::{Atom, Bond, BondOrder, Element, MolecularGraph};

struct Frame {
    max_derive: usize,
    derived: usize,
    /// `None` once the frame has ended and only consumes its remaining budget.
    state: Option<u8>,
    prev: Option<usize>,
}

#[derive(Default)]
struct Builder {
    elements: Vec<Element>,
    bonds: Vec<(usize, usize, u8)>,
    bond_count: Vec<u8>,
}

impl Builder {
    fn add_atom(&mut self, element: Element) -> usize {
        self.elements.push(element);
        self.bond_count.push(0);
        self.elements.len() - 1
    }

    fn add_bond(&mut self, a: usize, b: usize, order: u8) {
        self.bonds.push((a, b, order));
        self.bond_count[a] += order;
        self.bond_count[b] += order;
    }

    fn free(&self, atom: usize) -> i32 {
        i32::from(self.elements[atom].max_valence()) - i32::from(self.bond_count[atom])
    }

    fn form_ring(&mut self, left: usize, right: usize, order: u8) {
        if left == right {
            return;
        }
        let (lfree, rfree) = (self.free(left), self.free(right));
        if lfree <= 0 || rfree <= 0 {
            return;
        }
        let order = (order as i32).min(lfree).min(rfree) as u8;
        let existing = self
            .bonds
            .iter()
            .position(|&(a, b, _)| (a, b) == (left, right) || (a, b) == (right, left));
        match existing {
            Some(i) => {
                let old = self.bonds[i].2;
                let new = (old + order).min(3);
                self.bonds[i].2 = new;
                self.bond_count[left] += new - old;
                self.bond_count[right] += new - old;
            }
            None => self.add_bond(left, right, order),
        }
    }

    fn finish(self) -> MolecularGraph {
        let atoms = self
            .elements
            .iter()
            .map(|&e| if e == Element::H { Atom::bracket(e, 0, 0) } else { Atom::new(e) })
            .collect();
        let bonds = self
            .bonds
            .iter()
            .map(|&(a, b, order)| Bond {
                a,
                b,
                order: BondOrder::from_value(order).unwrap(),
            })
            .collect();
        MolecularGraph::new(atoms, bonds).expect("derivation respects valences")
    }
}

/// Reads up to `size` tokens as base-16 digits; missing tokens and tokens
/// outside the index alphabet count as zero.
fn read_index(tokens: &[SelfiesToken], pos: &mut usize, size: u8) -> usize {
    let mut value = 0;
    for _ in 0..size {
        let digit = match tokens.get(*pos) {
            Some(t) => {
                *pos += 1;
                t.index_digit().unwrap_or(0)
            }
            None => 0,
        };
        value = value * 16 + digit as usize;
    }
    value
}

/// Decodes any token sequence into a valid molecular graph.
///
/// The empty sequence decodes to the empty graph.
pub fn decode(tokens: &[SelfiesToken]) -> MolecularGraph {
    let mut mol = Builder::default();
    let mut rings: Vec<(usize, usize, u8)> = Vec::new();
    let mut pos = 0;
    let mut stack = vec![Frame {
        max_derive: usize::MAX,
        derived: 0,
        state: Some(0),
        prev: None,
    }];

    while let Some(frame) = stack.last_mut() {
        let Some(state) = frame.state.filter(|_| frame.derived < frame.max_derive) else {
            // The frame is over: swallow the rest of its token budget.
            let remaining = tokens.len() - pos;
            let take = remaining.min(frame.max_derive.saturating_sub(frame.derived));
            pos += take;
            let derived = frame.derived + take;
            stack.pop();
            if let Some(parent) = stack.last_mut() {
                parent.derived += derived;
            }
            continue;
        };
        let Some(&token) = tokens.get(pos) else {
            frame.state = None;
            continue;
        };
        pos += 1;
        frame.derived += 1;

        match token.kind() {
            TokenKind::Branch { order, size } => {
                if state <= 1 {
                    continue;
                }
                let init = (state - 1).min(order);
                frame.state = Some(state - init);
                let q = read_index(tokens, &mut pos, size);
                frame.derived += size as usize;
                let prev = frame.prev;
                stack.push(Frame {
                    max_derive: q + 1,
                    derived: 0,
                    state: Some(init),
                    prev,
                });
            }
            TokenKind::Ring { order, size } => {
                if state == 0 {
                    continue;
                }
                let ring_order = order.min(state);
                let left = state - ring_order;
                let q = read_index(tokens, &mut pos, size);
                frame.derived += size as usize;
                let prev = frame.prev.expect("a positive state implies a previous atom");
                rings.push((prev.saturating_sub(q + 1), prev, ring_order));
                frame.state = (left > 0).then_some(left);
            }
            TokenKind::Atom { element, order } => {
                let cap = element.max_valence();
                let bond = if state == 0 { 0 } else { order.min(state).min(cap) };
                let left = cap - bond;
                let atom = mol.add_atom(element);
                if bond > 0 {
                    let prev = frame.prev.expect("a positive state implies a previous atom");
                    mol.add_bond(prev, atom, bond);
                }
                frame.prev = Some(atom);
                frame.state = (left > 0).then_some(left);
            }
        }
    }

    for (left, right, order) in rings {
        mol.form_ring(left, right, order);
    }
    mol.finish()
}

#[cfg(test)]
mod tests {
    use super::super::split_selfies;
    use super::*;
    use crate::molgraph::{canonicalize, parse_smiles};

    fn decoded(selfies: &str) -> String {
        canonicalize(&decode(&split_selfies(selfies).unwrap())).0
    }

    fn canon(smiles: &str) -> String {
        canonicalize(&parse_smiles(smiles).unwrap()).0
    }

    #[test]
    fn small_molecules() {
        let methane = decode(&split_selfies("[C]").unwrap());
        assert_eq!(methane.atom_count(), 1);
        assert_eq!(methane.total_hydrogens(0), 4);
        assert_eq!(decoded("[C][=O]"), canon("C=O"));
        assert_eq!(decoded("[F][=C]"), canon("FC"));
        assert_eq!(decoded("[C][C][C][C][C][C][Ring1][=Branch1]"), canon("C1CCCCC1"));
        assert!(decode(&[]).is_empty());
    }

    #[test]
    fn branches() {
        assert_eq!(decoded("[C][Branch1][C][F][Cl]"), canon("C(F)Cl"));
        // a branch from an atom with one bond left is skipped and its
        // operand is read as an ordinary token
        assert_eq!(decoded("[C][#C][Branch1][C][F]"), canon("C#CCF"));
    }

    #[test]
    fn hydrogen_tokens() {
        assert_eq!(decoded("[H]"), "[H]");
        assert_eq!(decoded("[C][=H]"), canon("C[H]"));
    }

    #[test]
    fn ring_onto_existing_bond_raises_its_order() {
        assert_eq!(decoded("[C][=C][Ring1][C][#C]"), canon("C#CC"));
    }
}
