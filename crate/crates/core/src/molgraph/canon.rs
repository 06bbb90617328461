//! Canonical SMILES.
//!
//! Atoms are first partitioned by local invariants and the partition is
//! refined by neighbor colors until stable. Remaining ties are broken by
//! individualizing each atom of the first ambiguous cell in turn; every
//! resulting discrete partition yields a SMILES string and the smallest one
//! wins. Leaves that produce identical strings reveal automorphisms, which are
//! used to skip branches equivalent to ones already explored.
//!
//! Kekule structures that differ only by shifting double bonds around
//! alternating cycles describe the same molecule, so bonds that could take
//! part in such a shift are treated alike during ranking, and each leaf
//! re-places the double bonds with the first perfect matching in rank order.

use std::fmt;

use super::writer::write_ranked;
use super::{Bond, BondOrder, MolecularGraph};

/// SMILES text in canonical form: byte-equal exactly for isomorphic graphs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalSmiles(pub String);

impl CanonicalSmiles {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CanonicalSmiles {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Canonical SMILES of `graph`, independent of its atom numbering.
pub fn canonicalize(graph: &MolecularGraph) -> CanonicalSmiles {
    let n = graph.atom_count();
    if n == 0 {
        return CanonicalSmiles(String::new());
    }
    let view = ResonanceView::new(graph);
    let initial: Vec<Vec<u32>> = (0..n)
        .map(|v| {
            let atom = graph.atoms()[v];
            vec![
                u32::from(atom.element.atomic_number()),
                (i32::from(atom.charge) + 128) as u32,
                graph.degree(v) as u32,
                u32::from(graph.total_hydrogens(v)),
                u32::from(graph.bond_order_sum(v)),
            ]
        })
        .collect();
    let colors = refine(&view, colors_from_keys(&initial));
    let mut search = Search {
        graph,
        view: &view,
        best: None,
        generators: Vec::new(),
    };
    let mut fixed = Vec::new();
    search.visit(colors, &mut fixed);
    CanonicalSmiles(search.best.unwrap().0)
}

/// Bond labels with double/single bonds that can swap along an alternating
/// path merged into a single "resonant" label.
pub(crate) struct ResonanceView {
    pub(crate) adjacency: Vec<Vec<(usize, u8)>>,
    /// Atoms carrying exactly one double bond whose partner also carries one.
    resonant: Vec<bool>,
}

pub(crate) const RESONANT: u8 = 4;

impl ResonanceView {
    pub(crate) fn new(graph: &MolecularGraph) -> Self {
        let n = graph.atom_count();
        let doubles: Vec<usize> = (0..n)
            .map(|v| graph.neighbors(v).iter().filter(|&&(_, o)| o == BondOrder::Double).count())
            .collect();
        let triples = |v: usize| graph.neighbors(v).iter().any(|&(_, o)| o == BondOrder::Triple);
        let resonant: Vec<bool> = (0..n)
            .map(|v| {
                doubles[v] == 1
                    && !triples(v)
                    && graph
                        .neighbors(v)
                        .iter()
                        .any(|&(u, o)| o == BondOrder::Double && doubles[u] == 1 && !triples(u))
            })
            .collect();
        let adjacency = (0..n)
            .map(|v| {
                graph
                    .neighbors(v)
                    .iter()
                    .map(|&(u, o)| {
                        let label = if resonant[v] && resonant[u] && o != BondOrder::Triple {
                            RESONANT
                        } else {
                            o.value()
                        };
                        (u, label)
                    })
                    .collect()
            })
            .collect();
        ResonanceView { adjacency, resonant }
    }

    /// Copy of `graph` whose resonant bonds follow the first perfect matching
    /// found when atoms and their partners are tried in rank order.
    fn normalized(&self, graph: &MolecularGraph, rank: &[usize]) -> MolecularGraph {
        let mut atoms: Vec<usize> = (0..rank.len()).filter(|&v| self.resonant[v]).collect();
        if atoms.is_empty() {
            return graph.clone();
        }
        atoms.sort_by_key(|&v| rank[v]);
        let partners: Vec<Vec<usize>> = (0..rank.len())
            .map(|v| {
                let mut p: Vec<usize> = self.adjacency[v]
                    .iter()
                    .filter(|&&(_, label)| label == RESONANT)
                    .map(|&(u, _)| u)
                    .collect();
                p.sort_by_key(|&u| rank[u]);
                p
            })
            .collect();
        let mut mate = vec![usize::MAX; rank.len()];
        let found = first_matching(&atoms, &partners, &mut mate);
        assert!(found, "the input double bonds are themselves a perfect matching");
        let bonds = graph
            .bonds()
            .iter()
            .map(|b| {
                let resonant = self.resonant[b.a] && self.resonant[b.b] && b.order != BondOrder::Triple;
                let order = if !resonant {
                    b.order
                } else if mate[b.a] == b.b {
                    BondOrder::Double
                } else {
                    BondOrder::Single
                };
                Bond { order, ..*b }
            })
            .collect();
        MolecularGraph::new(graph.atoms().to_vec(), bonds).expect("bond shift keeps valences")
    }
}

fn first_matching(atoms: &[usize], partners: &[Vec<usize>], mate: &mut [usize]) -> bool {
    let Some(&v) = atoms.iter().find(|&&v| mate[v] == usize::MAX) else {
        return true;
    };
    // Fail early when some unmatched atom has no free partner left.
    if atoms
        .iter()
        .any(|&w| mate[w] == usize::MAX && partners[w].iter().all(|&u| mate[u] != usize::MAX))
    {
        return false;
    }
    for &u in &partners[v] {
        if mate[u] != usize::MAX {
            continue;
        }
        mate[v] = u;
        mate[u] = v;
        if first_matching(atoms, partners, mate) {
            return true;
        }
        mate[v] = usize::MAX;
        mate[u] = usize::MAX;
    }
    false
}

/// Color of each atom = number of atoms with a strictly smaller key, so a
/// cell of color `c` and size `s` spans ranks `c..c + s`.
fn colors_from_keys<K: Ord>(keys: &[K]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
    let mut colors = vec![0; keys.len()];
    for (pos, &v) in idx.iter().enumerate() {
        colors[v] = if pos > 0 && keys[idx[pos - 1]] == keys[v] {
            colors[idx[pos - 1]]
        } else {
            pos
        };
    }
    colors
}

fn cell_count(colors: &[usize]) -> usize {
    let mut seen = colors.to_vec();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

fn refine(view: &ResonanceView, mut colors: Vec<usize>) -> Vec<usize> {
    let mut cells = cell_count(&colors);
    loop {
        let keys: Vec<(usize, Vec<(usize, u8)>)> = (0..colors.len())
            .map(|v| {
                let mut around: Vec<(usize, u8)> =
                    view.adjacency[v].iter().map(|&(u, label)| (colors[u], label)).collect();
                around.sort_unstable();
                (colors[v], around)
            })
            .collect();
        let next = colors_from_keys(&keys);
        let next_cells = cell_count(&next);
        colors = next;
        if next_cells == cells {
            return colors;
        }
        cells = next_cells;
    }
}

struct Search<'a> {
    graph: &'a MolecularGraph,
    view: &'a ResonanceView,
    best: Option<(String, Vec<usize>)>,
    generators: Vec<Vec<usize>>,
}

impl Search<'_> {
    fn visit(&mut self, colors: Vec<usize>, fixed: &mut Vec<usize>) {
        let n = colors.len();
        let mut size = vec![0usize; n];
        for &c in &colors {
            size[c] += 1;
        }
        let Some(target) = (0..n).find(|&c| size[c] > 1) else {
            self.leaf(&colors);
            return;
        };
        let cell: Vec<usize> = (0..n).filter(|&v| colors[v] == target).collect();
        let mut explored: Vec<usize> = Vec::new();
        for &v in &cell {
            if !explored.is_empty() && self.equivalent_to_explored(v, &explored, fixed) {
                continue;
            }
            let mut next = colors.clone();
            for &u in &cell {
                if u != v {
                    next[u] = target + 1;
                }
            }
            let next = refine(self.view, next);
            fixed.push(v);
            self.visit(next, fixed);
            fixed.pop();
            explored.push(v);
        }
    }

    fn leaf(&mut self, colors: &[usize]) {
        let normalized = self.view.normalized(self.graph, colors);
        let (text, order) = write_ranked(&normalized, colors);
        match &self.best {
            None => self.best = Some((text, order)),
            Some((best, best_order)) => {
                if text == *best {
                    // Same string: output position i holds isomorphic atoms.
                    let mut perm = vec![0; order.len()];
                    for (&a, &b) in best_order.iter().zip(&order) {
                        perm[a] = b;
                    }
                    if perm.iter().enumerate().any(|(i, &p)| i != p) {
                        self.generators.push(perm);
                    }
                } else if text < *best {
                    self.best = Some((text, order));
                }
            }
        }
    }

    /// Whether `v` lies in the orbit of an explored atom under the known
    /// automorphisms that fix every individualized atom on the current path.
    fn equivalent_to_explored(&self, v: usize, explored: &[usize], fixed: &[usize]) -> bool {
        let n = self.graph.atom_count();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let mut any = false;
        for g in &self.generators {
            if fixed.iter().any(|&f| g[f] != f) {
                continue;
            }
            any = true;
            for (i, &j) in g.iter().enumerate() {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a] = b;
                }
            }
        }
        if !any {
            return false;
        }
        let root = find(&mut parent, v);
        explored.iter().any(|&e| find(&mut parent, e) == root)
    }
}
