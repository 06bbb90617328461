//! Encodes SMILES to SELFIES and back, then decodes random token strings to
//! show that every string names a valid molecule.
//!
//! cargo run --example selfies_codec -- 'CC(=O)Nc1ccc(O)cc1'

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use selfbart::molgraph::{canonicalize, parse_smiles};
use selfbart::selfies::{decode, encode, join_tokens, random_token_string, split_selfies};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut inputs: Vec<String> = std::env::args().skip(1).collect();
    if inputs.is_empty() {
        inputs = ["CC(=O)Nc1ccc(O)cc1", "C1=CC=CC=C1C#N", "FC(F)(F)S(=O)(=O)N"].map(String::from).to_vec();
    }
    for smiles in &inputs {
        let graph = parse_smiles(smiles)?;
        let selfies = join_tokens(&encode(&graph)?);
        let back = canonicalize(&decode(&split_selfies(&selfies)?));
        println!("{smiles}\n  selfies {selfies}\n  decoded {}", back.as_str());
    }

    println!("random token strings:");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for len in [3, 8, 15, 30] {
        let tokens = random_token_string(&mut rng, len);
        let g = decode(&tokens);
        println!("  {}\n    -> {} ({} atoms)", join_tokens(&tokens), canonicalize(&g).as_str(), g.atom_count());
    }
    Ok(())
}
