//! Molecular graph to token sequence.
//!
//! The graph is walked depth-first from atom 0. Each atom is written with the
//! order of the bond that leads into it. Ring closures are written at the
//! later atom of the pair and reach back by the difference in atom position;
//! every child except the last is written as a branch whose length prefixes
//! it, and the last child continues the main chain.

use thiserror::Error;

use super::SelfiesToken;
use crate::molgraph::{implicit_hydrogens_for, Element, MolecularGraph};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("atom {atom} carries charge {charge}; the alphabet has no charged atoms")]
    Charged { atom: usize, charge: i8 },
    #[error("atom {atom} has {hydrogens} hydrogens, which the alphabet cannot express")]
    Hydrogens { atom: usize, hydrogens: u8 },
    #[error("a branch or ring spans {0} positions; at most 4096 can be encoded")]
    TooLong(usize),
}

/// Base-16 digits of `value` as index-alphabet tokens, most significant first.
fn index_tokens(value: usize) -> Vec<SelfiesToken> {
    let mut digits = Vec::new();
    let mut v = value;
    loop {
        digits.push(SelfiesToken::from_digit((v % 16) as u8));
        v /= 16;
        if v == 0 {
            break;
        }
    }
    digits.reverse();
    digits
}

struct Walk {
    position: Vec<usize>,
    children: Vec<Vec<usize>>,
    closings: Vec<Vec<usize>>,
}

fn walk(graph: &MolecularGraph) -> Walk {
    let n = graph.atom_count();
    let mut position = vec![usize::MAX; n];
    let mut children = vec![Vec::new(); n];
    let mut closings = vec![Vec::new(); n];
    let mut finished = vec![false; n];
    let mut stack: Vec<(usize, usize, usize)> = vec![(0, usize::MAX, 0)];
    position[0] = 0;
    let mut next_position = 1;
    while let Some(&mut (v, parent, ref mut next)) = stack.last_mut() {
        let Some(&(u, _)) = graph.neighbors(v).get(*next) else {
            finished[v] = true;
            stack.pop();
            continue;
        };
        *next += 1;
        if u == parent {
            continue;
        }
        if position[u] == usize::MAX {
            position[u] = next_position;
            next_position += 1;
            children[v].push(u);
            stack.push((u, v, 0));
        } else if !finished[u] {
            closings[v].push(u);
        }
    }
    Walk {
        position,
        children,
        closings,
    }
}

/// Encodes a graph whose atoms are uncharged and carry their standard
/// hydrogen counts.
pub fn encode(graph: &MolecularGraph) -> Result<Vec<SelfiesToken>, EncodeError> {
    for (i, atom) in graph.atoms().iter().enumerate() {
        if atom.charge != 0 {
            return Err(EncodeError::Charged { atom: i, charge: atom.charge });
        }
        let expected = if atom.element == Element::H {
            Some(0)
        } else {
            implicit_hydrogens_for(atom.element, graph.bond_order_sum(i))
        };
        let hydrogens = graph.total_hydrogens(i);
        if expected != Some(hydrogens) {
            return Err(EncodeError::Hydrogens { atom: i, hydrogens });
        }
    }
    if graph.is_empty() {
        return Ok(Vec::new());
    }
    let walk = walk(graph);
    chain(graph, &walk, 0, 1)
}

fn chain(graph: &MolecularGraph, walk: &Walk, start: usize, order_in: u8) -> Result<Vec<SelfiesToken>, EncodeError> {
    let mut out = Vec::new();
    let (mut v, mut order) = (start, order_in);
    loop {
        out.push(SelfiesToken::atom(graph.atoms()[v].element, order));
        for &earlier in &walk.closings[v] {
            let reach = walk.position[v] - walk.position[earlier];
            let digits = index_tokens(reach - 1);
            if digits.len() > 3 {
                return Err(EncodeError::TooLong(reach));
            }
            let ring_order = graph.bond_between(v, earlier).unwrap().value();
            out.push(SelfiesToken::structural(true, ring_order, digits.len() as u8));
            out.extend(digits);
        }
        let Some((&last, branches)) = walk.children[v].split_last() else {
            return Ok(out);
        };
        for &child in branches {
            let bond = graph.bond_between(v, child).unwrap().value();
            let body = chain(graph, walk, child, bond)?;
            let digits = index_tokens(body.len() - 1);
            if digits.len() > 3 {
                return Err(EncodeError::TooLong(body.len()));
            }
            out.push(SelfiesToken::structural(false, bond, digits.len() as u8));
            out.extend(digits);
            out.extend(body);
        }
        order = graph.bond_between(v, last).unwrap().value();
        v = last;
    }
}

#[cfg(test)]
mod tests {
    use super::super::{decode, join_tokens};
    use super::*;
    use crate::molgraph::{canonicalize, parse_smiles};

    fn encoded(smiles: &str) -> String {
        join_tokens(&encode(&parse_smiles(smiles).unwrap()).unwrap())
    }

    #[test]
    fn small_molecules() {
        assert_eq!(encoded("C"), "[C]");
        assert_eq!(encoded("C=O"), "[C][=O]");
        assert_eq!(encoded("CCO"), "[C][C][O]");
        assert_eq!(encoded("C(F)Cl"), "[C][Branch1][C][F][Cl]");
        assert_eq!(encoded("C1CCCCC1"), "[C][C][C][C][C][C][Ring1][=Branch1]");
    }

    #[test]
    fn index_digits() {
        let text = |v| join_tokens(&index_tokens(v));
        assert_eq!(text(0), "[C]");
        assert_eq!(text(15), "[P]");
        assert_eq!(text(16), "[Ring1][C]");
        assert_eq!(text(4095), "[P][P][P]");
    }

    #[test]
    fn rejects_what_the_alphabet_cannot_express() {
        let charged = parse_smiles("C[O-]").unwrap();
        assert_eq!(encode(&charged), Err(EncodeError::Charged { atom: 1, charge: -1 }));
        let radical = parse_smiles("[CH2]C").unwrap();
        assert_eq!(encode(&radical), Err(EncodeError::Hydrogens { atom: 0, hydrogens: 2 }));
    }

    #[test]
    fn round_trips_fused_rings() {
        for smiles in ["c1ccc2ccccc2c1", "C1CC2CCC1C2", "OC(=O)c1ccccc1C#N", "C12C3C4C1C5C2C3C45"] {
            let g = parse_smiles(smiles).unwrap();
            let back = decode(&encode(&g).unwrap());
            assert_eq!(canonicalize(&back), canonicalize(&g), "{smiles}");
        }
    }
}
