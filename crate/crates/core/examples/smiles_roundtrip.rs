//! Parses SMILES, prints the canonical form and the hydrogen count of every
//! atom, and shows that resonance forms share one canonical string.
//!
//! cargo run --example smiles_roundtrip -- 'c1ccccc1O' 'OC1=CC=CC=C1'

use selfbart::molgraph::{canonicalize, parse_smiles, write_smiles};

fn main() {
    let mut inputs: Vec<String> = std::env::args().skip(1).collect();
    if inputs.is_empty() {
        inputs = ["c1ccccc1O", "OC1=CC=CC=C1", "CC(=O)[O-]", "C1CC"].map(String::from).to_vec();
    }
    for text in &inputs {
        match parse_smiles(text) {
            Ok(g) => {
                let hs: Vec<String> = (0..g.atom_count())
                    .map(|i| format!("{}H{}", g.atoms()[i].element, g.total_hydrogens(i)))
                    .collect();
                println!("{text}");
                println!("  written   {}", write_smiles(&g));
                println!("  canonical {}", canonicalize(&g).as_str());
                println!("  atoms     {}", hs.join(" "));
            }
            Err(e) => println!("{text}\n  rejected: {e}"),
        }
    }
}
