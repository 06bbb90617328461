//! Ranks corpus molecules by Tanimoto similarity of circular fingerprints
//! to a query.
//!
//! cargo run --release --example fingerprint_similarity -- 'c1ccccc1C(=O)O' [top]

use selfbart::molgraph::{canonicalize, fingerprint, parse_smiles, tanimoto, DEFAULT_RADIUS, DEFAULT_WIDTH};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let query = args.next().unwrap_or_else(|| "c1ccccc1C(=O)O".into());
    let top: usize = args.next().map(|a| a.parse()).transpose()?.unwrap_or(10);

    let q = parse_smiles(&query)?;
    let qfp = fingerprint(&q, DEFAULT_RADIUS, DEFAULT_WIDTH);
    println!("query {} ({} bits set)", canonicalize(&q).as_str(), qfp.popcount());

    let mut scored: Vec<(f64, String)> = include_str!("../data/corpus.smi")
        .lines()
        .filter_map(|line| parse_smiles(line).ok())
        .map(|g| {
            let fp = fingerprint(&g, DEFAULT_RADIUS, DEFAULT_WIDTH);
            (tanimoto(&qfp, &fp).unwrap(), canonicalize(&g).0)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    scored.dedup_by(|a, b| a.1 == b.1);
    for (sim, smiles) in scored.iter().take(top) {
        println!("{sim:.3}  {smiles}");
    }
    Ok(())
}
