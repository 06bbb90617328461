//! Kekule SMILES output.
//!
//! The writer walks the graph depth-first, always starting from the atom with
//! the lowest rank and visiting neighbors in rank order. With atom indices as
//! ranks this gives [`write_smiles`]; canonical ranks give canonical SMILES.

use std::fmt::Write as _;

use super::{implicit_hydrogens_for, MolecularGraph};

/// Writes `graph` as a kekule SMILES string following atom index order.
pub fn write_smiles(graph: &MolecularGraph) -> String {
    let rank: Vec<usize> = (0..graph.atom_count()).collect();
    write_ranked(graph, &rank).0
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Visit {
    New,
    Open,
    Done,
}

struct Tree {
    children: Vec<Vec<usize>>,
    /// Ring bonds opened at an atom, as (partner that closes it).
    openings: Vec<Vec<usize>>,
    /// Ring bonds closed at an atom, as (partner that opened it).
    closings: Vec<Vec<usize>>,
}

/// Writes `graph` with traversal guided by `rank` (lower first) and returns the
/// string together with the atoms in output order.
pub(crate) fn write_ranked(graph: &MolecularGraph, rank: &[usize]) -> (String, Vec<usize>) {
    let n = graph.atom_count();
    if n == 0 {
        return (String::new(), Vec::new());
    }
    let sorted_neighbors: Vec<Vec<usize>> = (0..n)
        .map(|v| {
            let mut ns: Vec<usize> = graph.neighbors(v).iter().map(|&(u, _)| u).collect();
            ns.sort_by_key(|&u| rank[u]);
            ns
        })
        .collect();
    let root = (0..n).min_by_key(|&v| rank[v]).unwrap();

    let mut tree = Tree {
        children: vec![Vec::new(); n],
        openings: vec![Vec::new(); n],
        closings: vec![Vec::new(); n],
    };
    let mut state = vec![Visit::New; n];
    let mut order = Vec::with_capacity(n);
    // Iterative DFS: (atom, parent, next neighbor position).
    let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
    state[root] = Visit::Open;
    order.push(root);
    while let Some(&mut (v, parent, ref mut next)) = stack.last_mut() {
        let Some(&u) = sorted_neighbors[v].get(*next) else {
            state[v] = Visit::Done;
            stack.pop();
            continue;
        };
        *next += 1;
        if u == parent {
            continue;
        }
        match state[u] {
            Visit::New => {
                tree.children[v].push(u);
                state[u] = Visit::Open;
                order.push(u);
                stack.push((u, v, 0));
            }
            // Back edge to an ancestor still on the stack: the ring opens at
            // the ancestor and closes here.
            Visit::Open => {
                tree.openings[u].push(v);
                tree.closings[v].push(u);
            }
            Visit::Done => {}
        }
    }

    let mut position = vec![0usize; n];
    for (i, &v) in order.iter().enumerate() {
        position[v] = i;
    }
    for list in tree.openings.iter_mut().chain(tree.closings.iter_mut()) {
        list.sort_by_key(|&u| position[u]);
    }

    let mut out = String::new();
    let mut labels = Labels::default();
    let mut open_label: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut emitted = Vec::with_capacity(n);
    emit(graph, &tree, root, &mut out, &mut labels, &mut open_label, &mut emitted);
    (out, emitted)
}

#[derive(Default)]
struct Labels {
    in_use: Vec<bool>,
}

impl Labels {
    fn take(&mut self) -> usize {
        match self.in_use.iter().position(|&used| !used) {
            Some(i) => {
                self.in_use[i] = true;
                i + 1
            }
            None => {
                self.in_use.push(true);
                self.in_use.len()
            }
        }
    }

    fn release(&mut self, label: usize) {
        self.in_use[label - 1] = false;
    }
}

fn push_label(out: &mut String, label: usize) {
    if label < 10 {
        write!(out, "{label}").unwrap();
    } else {
        write!(out, "%{label:02}").unwrap();
    }
}

fn emit(
    graph: &MolecularGraph,
    tree: &Tree,
    root: usize,
    out: &mut String,
    labels: &mut Labels,
    open_label: &mut [Vec<(usize, usize)>],
    emitted: &mut Vec<usize>,
) {
    enum Step {
        Atom(usize),
        Text(&'static str),
    }
    let mut work = vec![Step::Atom(root)];
    while let Some(step) = work.pop() {
        let v = match step {
            Step::Text(t) => {
                out.push_str(t);
                continue;
            }
            Step::Atom(v) => v,
        };
        emitted.push(v);
        write_atom(graph, v, out);

        let mut released = Vec::new();
        for &opener in &tree.closings[v] {
            let slot = open_label[opener].iter().position(|&(closer, _)| closer == v).unwrap();
            let (_, label) = open_label[opener].swap_remove(slot);
            push_label(out, label);
            released.push(label);
        }
        for &closer in &tree.openings[v] {
            let label = labels.take();
            out.push_str(graph.bond_between(v, closer).unwrap().symbol());
            push_label(out, label);
            open_label[v].push((closer, label));
        }
        for label in released {
            labels.release(label);
        }

        // Children are pushed in reverse so the first one is written first;
        // all but the last go inside parentheses.
        let children = &tree.children[v];
        for (i, &c) in children.iter().enumerate().rev() {
            let last = i + 1 == children.len();
            if !last {
                work.push(Step::Text(")"));
            }
            work.push(Step::Atom(c));
            work.push(Step::Text(graph.bond_between(v, c).unwrap().symbol()));
            if !last {
                work.push(Step::Text("("));
            }
        }
    }
}

fn write_atom(graph: &MolecularGraph, v: usize, out: &mut String) {
    let atom = graph.atoms()[v];
    let hydrogens = graph.total_hydrogens(v);
    let bare = atom.element.is_organic_subset()
        && atom.charge == 0
        && implicit_hydrogens_for(atom.element, graph.bond_order_sum(v)) == Some(hydrogens);
    if bare {
        out.push_str(atom.element.symbol());
        return;
    }
    out.push('[');
    out.push_str(atom.element.symbol());
    match hydrogens {
        0 => {}
        1 => out.push('H'),
        h => write!(out, "H{h}").unwrap(),
    }
    match atom.charge {
        0 => {}
        1 => out.push('+'),
        -1 => out.push('-'),
        c if c > 0 => write!(out, "+{c}").unwrap(),
        c => write!(out, "-{}", -c).unwrap(),
    }
    out.push(']');
}
