//! Assignment of alternating single/double bonds to aromatic SMILES input.
//!
//! Each aromatic atom that still needs a pi bond must receive exactly one
//! double bond to an aromatic neighbor that also needs one. This is a perfect
//! matching on the subgraph of such atoms, found by backtracking that always
//! extends the most constrained atom first.

use super::smiles::{plain_order, RawBond};
use super::{bonding_capacity, BondOrder, Element};

#[derive(Debug, Clone, Copy)]
pub(crate) struct KekuleAtom {
    pub element: Element,
    pub aromatic: bool,
    pub charge: i8,
    pub hydrogens: Option<u8>,
}

/// Returns one order per input bond, or `None` when no kekule form exists.
pub(crate) fn kekulize(atoms: &[KekuleAtom], bonds: &[(usize, usize, RawBond)]) -> Option<Vec<BondOrder>> {
    let in_ring = ring_bonds(atoms.len(), bonds);
    let mut aromatic_bond = vec![false; bonds.len()];
    let mut orders = Vec::with_capacity(bonds.len());
    for (i, &(a, b, kind)) in bonds.iter().enumerate() {
        let both = atoms[a].aromatic && atoms[b].aromatic;
        match kind {
            RawBond::Aromatic => {
                if !both {
                    return None;
                }
                aromatic_bond[i] = true;
            }
            RawBond::Implicit if both && in_ring[i] => aromatic_bond[i] = true,
            _ => {}
        }
        orders.push(plain_order(kind).unwrap_or(BondOrder::Single));
    }

    let n = atoms.len();
    let mut sigma = vec![0u8; n];
    let mut has_aromatic_bond = vec![false; n];
    for (i, &(a, b, _)) in bonds.iter().enumerate() {
        let order = if aromatic_bond[i] { 1 } else { orders[i].value() };
        sigma[a] += order;
        sigma[b] += order;
        if aromatic_bond[i] {
            has_aromatic_bond[a] = true;
            has_aromatic_bond[b] = true;
        }
    }

    let mut needs_pi = vec![false; n];
    for (i, atom) in atoms.iter().enumerate() {
        if !atom.aromatic {
            continue;
        }
        if !has_aromatic_bond[i] {
            return None;
        }
        needs_pi[i] = needs_double_bond(atom, sigma[i]);
    }

    // Candidate edges: aromatic bonds whose both ends need a pi bond.
    let mut options: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (i, &(a, b, _)) in bonds.iter().enumerate() {
        if aromatic_bond[i] && needs_pi[a] && needs_pi[b] {
            options[a].push((b, i));
            options[b].push((a, i));
        }
    }

    let mut matched = vec![false; n];
    let mut chosen = Vec::new();
    if !match_remaining(&needs_pi, &options, &mut matched, &mut chosen) {
        return None;
    }
    for i in chosen {
        orders[i] = BondOrder::Double;
    }
    Some(orders)
}

/// Whether an aromatic atom with the given sigma valence (aromatic bonds
/// counted as single, explicit hydrogens included) must take a double bond.
fn needs_double_bond(atom: &KekuleAtom, sigma_bonds: u8) -> bool {
    let sigma = sigma_bonds + atom.hydrogens.unwrap_or(0);
    if atom.charge != 0 {
        return sigma < bonding_capacity(atom.element, atom.charge);
    }
    match (atom.element, atom.hydrogens) {
        // Pyrrole-type nitrogen is written [nH] and so has sigma 3.
        (Element::N | Element::B, _) => sigma < 3,
        (Element::C, _) => sigma < 4,
        (Element::O, _) => false,
        (Element::S, _) => sigma == 3 || sigma == 5,
        (Element::P, _) => sigma == 2 || sigma == 4,
        _ => false,
    }
}

fn match_remaining(
    needs_pi: &[bool],
    options: &[Vec<(usize, usize)>],
    matched: &mut [bool],
    chosen: &mut Vec<usize>,
) -> bool {
    // Pick the unmatched atom with the fewest live partners.
    let mut best: Option<(usize, usize)> = None;
    for v in 0..needs_pi.len() {
        if !needs_pi[v] || matched[v] {
            continue;
        }
        let live = options[v].iter().filter(|&&(u, _)| !matched[u]).count();
        if best.is_none_or(|(_, count)| live < count) {
            best = Some((v, live));
            if live == 0 {
                break;
            }
        }
    }
    let Some((v, live)) = best else {
        return true;
    };
    if live == 0 {
        return false;
    }
    matched[v] = true;
    for &(u, bond) in &options[v] {
        if matched[u] {
            continue;
        }
        matched[u] = true;
        chosen.push(bond);
        if match_remaining(needs_pi, options, matched, chosen) {
            return true;
        }
        chosen.pop();
        matched[u] = false;
    }
    matched[v] = false;
    false
}

/// Marks bonds that lie on a cycle (i.e. are not bridges).
fn ring_bonds(n: usize, bonds: &[(usize, usize, RawBond)]) -> Vec<bool> {
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (i, &(a, b, _)) in bonds.iter().enumerate() {
        adj[a].push((b, i));
        adj[b].push((a, i));
    }
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut is_bridge = vec![false; bonds.len()];
    let mut time = 0;
    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        // Iterative DFS: (vertex, bond used to enter it, next neighbor index).
        let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
        disc[root] = time;
        low[root] = time;
        time += 1;
        while let Some(&mut (v, via, ref mut next)) = stack.last_mut() {
            if let Some(&(u, bond)) = adj[v].get(*next) {
                *next += 1;
                if bond == via {
                    continue;
                }
                if disc[u] == usize::MAX {
                    disc[u] = time;
                    low[u] = time;
                    time += 1;
                    stack.push((u, bond, 0));
                } else {
                    low[v] = low[v].min(disc[u]);
                }
            } else {
                stack.pop();
                if let Some(&(parent, _, _)) = stack.last() {
                    low[parent] = low[parent].min(low[v]);
                    if low[v] > disc[parent] {
                        is_bridge[via] = true;
                    }
                }
            }
        }
    }
    is_bridge.into_iter().map(|b| !b).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bridges_are_not_ring_bonds() {
        // cyclopropane with a methyl tail: 0-1-2-0 ring, 2-3 tail
        let bonds = [
            (0, 1, RawBond::Implicit),
            (1, 2, RawBond::Implicit),
            (2, 0, RawBond::Implicit),
            (2, 3, RawBond::Implicit),
        ];
        assert_eq!(ring_bonds(4, &bonds), vec![true, true, true, false]);
    }

    #[test]
    fn pi_requirements() {
        let atom = |element, hydrogens| KekuleAtom {
            element,
            aromatic: true,
            charge: 0,
            hydrogens,
        };
        assert!(needs_double_bond(&atom(Element::C, None), 2));
        assert!(!needs_double_bond(&atom(Element::C, Some(1)), 3));
        assert!(needs_double_bond(&atom(Element::N, None), 2));
        assert!(!needs_double_bond(&atom(Element::N, Some(1)), 2));
        assert!(!needs_double_bond(&atom(Element::N, None), 3));
        assert!(!needs_double_bond(&atom(Element::O, None), 2));
        assert!(!needs_double_bond(&atom(Element::S, None), 2));
    }
}
