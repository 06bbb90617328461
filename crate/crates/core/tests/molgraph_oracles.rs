//! Checks the SMILES toolkit against fixtures generated with RDKit
//! (see tools/make_fixtures.py) and against permutation fuzzing.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use selfbart::molgraph::{canonicalize, fingerprint, parse_smiles, write_smiles, BondOrder, MolecularGraph};

const KEKULE: &str = include_str!("../data/kekule_oracle.tsv");
const RANDOM_SMILES: &str = include_str!("../data/random_smiles.tsv");
const CORPUS: &str = include_str!("../data/corpus.smi");

fn isomorphic(a: &MolecularGraph, b: &MolecularGraph) -> bool {
    use petgraph::algo::is_isomorphic_matching;
    use petgraph::graph::UnGraph;
    fn to_petgraph(g: &MolecularGraph) -> UnGraph<(u8, i8, u8), u8> {
        let mut pg = UnGraph::new_undirected();
        let nodes: Vec<_> = (0..g.atom_count())
            .map(|i| {
                let a = g.atoms()[i];
                pg.add_node((a.element.atomic_number(), a.charge, g.total_hydrogens(i)))
            })
            .collect();
        for b in g.bonds() {
            pg.add_edge(nodes[b.a], nodes[b.b], b.order.value());
        }
        pg
    }
    is_isomorphic_matching(&to_petgraph(a), &to_petgraph(b), |x, y| x == y, |x, y| x == y)
}

#[test]
fn kekulization_matches_reference_hydrogens_and_double_bonds() {
    let mut rows = 0;
    for line in KEKULE.lines().skip(1) {
        let fields: Vec<&str> = line.split('\t').collect();
        let g = parse_smiles(fields[0]).unwrap_or_else(|e| panic!("{}: {e}", fields[0]));
        let expected: Vec<u8> = fields[1].split(',').map(|h| h.parse().unwrap()).collect();
        let got: Vec<u8> = (0..g.atom_count()).map(|i| g.total_hydrogens(i)).collect();
        assert_eq!(got, expected, "{}", fields[0]);
        let doubles = g.bonds().iter().filter(|b| b.order == BondOrder::Double).count();
        assert_eq!(doubles, fields[2].parse::<usize>().unwrap(), "{}", fields[0]);
        rows += 1;
    }
    assert!(rows >= 1000);
}

#[test]
fn randomized_smiles_share_one_canonical_form() {
    for line in RANDOM_SMILES.lines().skip(1) {
        let (smiles, variants) = line.split_once('\t').unwrap();
        let reference = canonicalize(&parse_smiles(smiles).unwrap());
        for v in variants.split(' ') {
            let g = parse_smiles(v).unwrap_or_else(|e| panic!("{v}: {e}"));
            assert_eq!(canonicalize(&g), reference, "{smiles} vs {v}");
        }
    }
}

#[test]
fn write_then_parse_is_isomorphic() {
    for smiles in CORPUS.lines() {
        let g = parse_smiles(smiles).unwrap();
        let back = parse_smiles(&write_smiles(&g)).unwrap();
        assert!(isomorphic(&g, &back), "{smiles}");
    }
}

#[test]
fn canonical_form_is_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let g = parse_smiles("C1CCCCC1").unwrap();
    let mut seen = std::collections::BTreeSet::new();
    for _ in 0..100 {
        let mut perm: Vec<usize> = (0..g.atom_count()).collect();
        perm.shuffle(&mut rng);
        seen.insert(canonicalize(&g.permuted(&perm)));
    }
    assert_eq!(seen.len(), 1);

    for smiles in CORPUS.lines().step_by(97) {
        let g = parse_smiles(smiles).unwrap();
        let canon = canonicalize(&g);
        let fp = fingerprint(&g, 2, 1024);
        for _ in 0..20 {
            let mut perm: Vec<usize> = (0..g.atom_count()).collect();
            perm.shuffle(&mut rng);
            let p = g.permuted(&perm);
            assert_eq!(canonicalize(&p), canon, "{smiles}");
            assert_eq!(fingerprint(&p, 2, 1024), fp, "{smiles}");
        }
    }
}

#[test]
fn canonical_form_separates_corpus_molecules() {
    // The corpus was deduplicated by RDKit canonical SMILES, so distinct
    // lines must stay distinct here as well.
    let mut seen = std::collections::HashMap::new();
    for smiles in CORPUS.lines() {
        let canon = canonicalize(&parse_smiles(smiles).unwrap());
        if let Some(previous) = seen.insert(canon.clone(), smiles) {
            panic!("{previous} and {smiles} collide as {canon}");
        }
    }
}
