//! Molecular graphs and the cheminformatics substrate around them: SMILES
//! parsing (with kekulization of aromatic input), SMILES writing, canonical
//! SMILES, and circular fingerprints with Tanimoto similarity.
//!
//! A [`MolecularGraph`] only ever holds heavy atoms plus any hydrogens that
//! were written as explicit `[H]` atoms. Hydrogens attached to an atom are
//! either fixed by a bracket (`[NH]`, `[CH2]`) or follow from the standard
//! valence of the element.

mod canon;
mod fingerprint;
mod kekulize;
mod smiles;
mod writer;

use std::fmt;

use thiserror::Error;

pub use canon::{canonicalize, CanonicalSmiles};
pub use fingerprint::{fingerprint, tanimoto, Fingerprint, WidthMismatch, DEFAULT_RADIUS, DEFAULT_WIDTH};
pub use smiles::{parse_smiles, SmilesError};
pub use writer::write_smiles;

/// Elements the toolkit understands, ordered by atomic number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Element {
    H,
    B,
    C,
    N,
    O,
    F,
    P,
    S,
    Cl,
    Br,
    I,
}

impl Element {
    pub const ALL: [Element; 11] = [
        Element::H,
        Element::B,
        Element::C,
        Element::N,
        Element::O,
        Element::F,
        Element::P,
        Element::S,
        Element::Cl,
        Element::Br,
        Element::I,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Element::H => "H",
            Element::B => "B",
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::F => "F",
            Element::P => "P",
            Element::S => "S",
            Element::Cl => "Cl",
            Element::Br => "Br",
            Element::I => "I",
        }
    }

    pub fn from_symbol(symbol: &str) -> Option<Element> {
        Element::ALL.into_iter().find(|e| e.symbol() == symbol)
    }

    pub fn atomic_number(self) -> u8 {
        match self {
            Element::H => 1,
            Element::B => 5,
            Element::C => 6,
            Element::N => 7,
            Element::O => 8,
            Element::F => 9,
            Element::P => 15,
            Element::S => 16,
            Element::Cl => 17,
            Element::Br => 35,
            Element::I => 53,
        }
    }

    /// Maximum total bond order (plus attached hydrogens) of a neutral atom.
    pub fn max_valence(self) -> u8 {
        match self {
            Element::B => 3,
            Element::C => 4,
            Element::N => 3,
            Element::O => 2,
            Element::S => 6,
            Element::P => 5,
            Element::F | Element::Cl | Element::Br | Element::I | Element::H => 1,
        }
    }

    /// Elements that may appear without brackets in SMILES.
    pub fn is_organic_subset(self) -> bool {
        self != Element::H
    }

    /// Valences used to derive implicit hydrogens for bare atoms.
    fn standard_valences(self) -> &'static [u8] {
        match self {
            Element::B => &[3],
            Element::C => &[4],
            Element::N => &[3],
            Element::O => &[2],
            Element::P => &[3, 5],
            Element::S => &[2, 4, 6],
            Element::F | Element::Cl | Element::Br | Element::I | Element::H => &[1],
        }
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Bonding capacity of an atom with the given formal charge.
///
/// Neutral atoms use [`Element::max_valence`]; singly charged B, C, N, O, P
/// and S follow the usual isoelectronic shifts (N+ behaves like C, O- like F).
pub fn bonding_capacity(element: Element, charge: i8) -> u8 {
    use Element::*;
    match (element, charge) {
        (_, 0) => element.max_valence(),
        (B, 1) => 2,
        (B, -1) => 4,
        (C, 1) | (C, -1) => 3,
        (N, 1) => 4,
        (N, -1) => 2,
        (O, 1) => 3,
        (O, -1) => 1,
        (P, 1) => 4,
        (P, -1) => 6,
        (S, 1) | (S, -1) => 5,
        _ => element.max_valence(),
    }
}

/// Hydrogens a bare (unbracketed) atom carries given its total bond order, or
/// `None` when no standard valence can accommodate the bonds.
pub fn implicit_hydrogens_for(element: Element, bond_sum: u8) -> Option<u8> {
    let cap = element.max_valence();
    element
        .standard_valences()
        .iter()
        .copied()
        .filter(|&v| v <= cap)
        .find(|&v| v >= bond_sum)
        .map(|v| v - bond_sum)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Atom {
    pub element: Element,
    pub charge: i8,
    /// `Some(n)` when the hydrogen count is fixed (bracket atoms); `None` when
    /// it follows from the element's standard valence.
    pub explicit_h: Option<u8>,
}

impl Atom {
    pub fn new(element: Element) -> Self {
        Atom {
            element,
            charge: 0,
            explicit_h: None,
        }
    }

    pub fn bracket(element: Element, charge: i8, hydrogens: u8) -> Self {
        Atom {
            element,
            charge,
            explicit_h: Some(hydrogens),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondOrder {
    Single = 1,
    Double = 2,
    Triple = 3,
}

impl BondOrder {
    pub fn value(self) -> u8 {
        self as u8
    }

    pub fn from_value(order: u8) -> Option<BondOrder> {
        match order {
            1 => Some(BondOrder::Single),
            2 => Some(BondOrder::Double),
            3 => Some(BondOrder::Triple),
            _ => None,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BondOrder::Single => "",
            BondOrder::Double => "=",
            BondOrder::Triple => "#",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("bond {bond} references atom {atom}, but the graph has {atoms} atoms")]
    AtomIndex { bond: usize, atom: usize, atoms: usize },
    #[error("bond {bond} connects atom {atom} to itself")]
    SelfBond { bond: usize, atom: usize },
    #[error("atoms {a} and {b} are bonded more than once")]
    DuplicateBond { a: usize, b: usize },
    #[error("graph has more than one connected component")]
    Disconnected,
    #[error("atom {atom} ({element}) uses valence {used}, maximum is {max}")]
    Valence {
        atom: usize,
        element: Element,
        used: u8,
        max: u8,
    },
}

/// A connected molecular graph whose atoms all respect their bonding capacity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MolecularGraph {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    adjacency: Vec<Vec<(usize, BondOrder)>>,
}

impl MolecularGraph {
    /// Builds a graph, checking every structural and valence invariant.
    pub fn new(atoms: Vec<Atom>, bonds: Vec<Bond>) -> Result<Self, GraphError> {
        let n = atoms.len();
        let mut adjacency: Vec<Vec<(usize, BondOrder)>> = vec![Vec::new(); n];
        for (i, bond) in bonds.iter().enumerate() {
            for atom in [bond.a, bond.b] {
                if atom >= n {
                    return Err(GraphError::AtomIndex { bond: i, atom, atoms: n });
                }
            }
            if bond.a == bond.b {
                return Err(GraphError::SelfBond { bond: i, atom: bond.a });
            }
            if adjacency[bond.a].iter().any(|&(j, _)| j == bond.b) {
                return Err(GraphError::DuplicateBond {
                    a: bond.a.min(bond.b),
                    b: bond.a.max(bond.b),
                });
            }
            adjacency[bond.a].push((bond.b, bond.order));
            adjacency[bond.b].push((bond.a, bond.order));
        }
        let graph = MolecularGraph {
            atoms,
            bonds,
            adjacency,
        };
        if !graph.is_connected() {
            return Err(GraphError::Disconnected);
        }
        for i in 0..n {
            graph.check_valence(i)?;
        }
        Ok(graph)
    }

    pub fn empty() -> Self {
        MolecularGraph {
            atoms: Vec::new(),
            bonds: Vec::new(),
            adjacency: Vec::new(),
        }
    }

    fn is_connected(&self) -> bool {
        if self.atoms.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.atoms.len()];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for &(j, _) in &self.adjacency[i] {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    stack.push(j);
                }
            }
        }
        count == self.atoms.len()
    }

    fn check_valence(&self, i: usize) -> Result<(), GraphError> {
        let atom = self.atoms[i];
        let bonds = self.bond_order_sum(i);
        let max = bonding_capacity(atom.element, atom.charge);
        let used = bonds.saturating_add(atom.explicit_h.unwrap_or(0));
        let fits = match atom.explicit_h {
            Some(_) => used <= max,
            None if atom.charge == 0 => implicit_hydrogens_for(atom.element, bonds).is_some(),
            None => used <= max,
        };
        if fits {
            Ok(())
        } else {
            Err(GraphError::Valence {
                atom: i,
                element: atom.element,
                used,
                max,
            })
        }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn heavy_atom_count(&self) -> usize {
        self.atoms.iter().filter(|a| a.element != Element::H).count()
    }

    pub fn neighbors(&self, atom: usize) -> &[(usize, BondOrder)] {
        &self.adjacency[atom]
    }

    pub fn degree(&self, atom: usize) -> usize {
        self.adjacency[atom].len()
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<BondOrder> {
        self.adjacency[a]
            .iter()
            .find(|&&(j, _)| j == b)
            .map(|&(_, order)| order)
    }

    pub fn bond_order_sum(&self, atom: usize) -> u8 {
        self.adjacency[atom].iter().map(|&(_, o)| o.value()).sum()
    }

    /// Hydrogens attached to `atom`, whether bracketed or implied.
    pub fn total_hydrogens(&self, atom: usize) -> u8 {
        let a = self.atoms[atom];
        match a.explicit_h {
            Some(h) => h,
            None => {
                let bonds = self.bond_order_sum(atom);
                if a.charge == 0 {
                    implicit_hydrogens_for(a.element, bonds).unwrap_or(0)
                } else {
                    bonding_capacity(a.element, a.charge).saturating_sub(bonds)
                }
            }
        }
    }

    /// Remaining bonding capacity once bonds and fixed hydrogens are counted.
    pub fn free_valence(&self, atom: usize) -> u8 {
        let a = self.atoms[atom];
        bonding_capacity(a.element, a.charge)
            .saturating_sub(self.bond_order_sum(atom))
            .saturating_sub(a.explicit_h.unwrap_or(0))
    }

    /// Relabels atoms so that old atom `i` becomes atom `perm[i]`.
    ///
    /// Panics if `perm` is not a permutation of `0..atom_count()`.
    pub fn permuted(&self, perm: &[usize]) -> MolecularGraph {
        let n = self.atoms.len();
        assert_eq!(perm.len(), n, "permutation length mismatch");
        let mut atoms = vec![None; n];
        for (old, &new) in perm.iter().enumerate() {
            assert!(atoms[new].is_none(), "not a permutation");
            atoms[new] = Some(self.atoms[old]);
        }
        let atoms = atoms.into_iter().map(Option::unwrap).collect();
        let bonds = self
            .bonds
            .iter()
            .map(|b| Bond {
                a: perm[b.a],
                b: perm[b.b],
                order: b.order,
            })
            .collect();
        MolecularGraph::new(atoms, bonds).expect("relabeling preserves validity")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn carbon_chain(n: usize) -> MolecularGraph {
        let atoms = vec![Atom::new(Element::C); n];
        let bonds = (1..n)
            .map(|i| Bond {
                a: i - 1,
                b: i,
                order: BondOrder::Single,
            })
            .collect();
        MolecularGraph::new(atoms, bonds).unwrap()
    }

    #[test]
    fn implicit_hydrogens_follow_standard_valences() {
        assert_eq!(implicit_hydrogens_for(Element::C, 0), Some(4));
        assert_eq!(implicit_hydrogens_for(Element::N, 3), Some(0));
        assert_eq!(implicit_hydrogens_for(Element::N, 4), None);
        assert_eq!(implicit_hydrogens_for(Element::S, 3), Some(1));
        assert_eq!(implicit_hydrogens_for(Element::P, 4), Some(1));
        assert_eq!(implicit_hydrogens_for(Element::Cl, 1), Some(0));
    }

    #[test]
    fn rejects_structural_violations() {
        let c = Atom::new(Element::C);
        let single = BondOrder::Single;
        assert!(matches!(
            MolecularGraph::new(vec![c], vec![Bond { a: 0, b: 1, order: single }]),
            Err(GraphError::AtomIndex { .. })
        ));
        assert!(matches!(
            MolecularGraph::new(vec![c], vec![Bond { a: 0, b: 0, order: single }]),
            Err(GraphError::SelfBond { .. })
        ));
        assert!(matches!(
            MolecularGraph::new(
                vec![c, c],
                vec![Bond { a: 0, b: 1, order: single }, Bond { a: 1, b: 0, order: single }]
            ),
            Err(GraphError::DuplicateBond { a: 0, b: 1 })
        ));
        assert!(matches!(
            MolecularGraph::new(vec![c, c], vec![]),
            Err(GraphError::Disconnected)
        ));
    }

    #[test]
    fn rejects_overvalent_atoms() {
        let f = Atom::new(Element::F);
        let err = MolecularGraph::new(
            vec![f, Atom::new(Element::C)],
            vec![Bond { a: 0, b: 1, order: BondOrder::Double }],
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::Valence { atom: 0, .. }));

        // explicit hydrogens count against the capacity too
        let err = MolecularGraph::new(vec![Atom::bracket(Element::C, 0, 5)], vec![]).unwrap_err();
        assert!(matches!(err, GraphError::Valence { used: 5, max: 4, .. }));
    }

    #[test]
    fn charged_atoms_use_shifted_capacity() {
        let ammonium = MolecularGraph::new(vec![Atom::bracket(Element::N, 1, 4)], vec![]);
        assert!(ammonium.is_ok());
        let neutral = MolecularGraph::new(vec![Atom::bracket(Element::N, 0, 4)], vec![]);
        assert!(neutral.is_err());
    }

    #[test]
    fn permutation_preserves_structure() {
        let g = carbon_chain(4);
        let p = g.permuted(&[3, 1, 0, 2]);
        assert_eq!(p.atom_count(), 4);
        assert_eq!(p.bond_between(3, 1), Some(BondOrder::Single));
        assert_eq!(p.bond_between(1, 0), Some(BondOrder::Single));
        assert_eq!(p.bond_between(0, 2), Some(BondOrder::Single));
        assert_eq!(p.total_hydrogens(3), 3);
        assert_eq!(p.total_hydrogens(1), 2);
    }
}
