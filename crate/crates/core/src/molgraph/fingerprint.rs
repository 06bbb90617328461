//! Circular (Morgan/ECFP-style) fingerprints and Tanimoto similarity.

use std::collections::BTreeSet;

use thiserror::Error;

use super::canon::ResonanceView;
use super::MolecularGraph;

pub const DEFAULT_RADIUS: u32 = 2;
pub const DEFAULT_WIDTH: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    words: Vec<u64>,
    width: usize,
    radius: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("fingerprint widths differ: {0} vs {1}")]
pub struct WidthMismatch(pub usize, pub usize);

impl Fingerprint {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn popcount(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn contains(&self, bit: usize) -> bool {
        self.words[bit / 64] >> (bit % 64) & 1 == 1
    }

    /// Builds a fingerprint from explicit bit positions.
    pub fn from_bits(width: usize, bits: impl IntoIterator<Item = usize>) -> Self {
        let mut fp = Fingerprint {
            words: vec![0; width.div_ceil(64)],
            width,
            radius: 0,
        };
        for bit in bits {
            assert!(bit < width, "bit {bit} out of range for width {width}");
            fp.words[bit / 64] |= 1 << (bit % 64);
        }
        fp
    }
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn hash_sequence(values: impl IntoIterator<Item = u64>) -> u64 {
    values
        .into_iter()
        .fold(0x9e37_79b9_7f4a_7c15, |h, v| mix(h.rotate_left(17) ^ v.wrapping_add(0x632b_e59b_d9b4_e019)))
}

/// Distinct environment identifiers for radii `0..=radius`.
pub(crate) fn environment_ids(graph: &MolecularGraph, radius: u32) -> BTreeSet<u64> {
    let n = graph.atom_count();
    let view = ResonanceView::new(graph);
    let mut ids: Vec<u64> = (0..n)
        .map(|v| {
            let atom = graph.atoms()[v];
            hash_sequence([
                u64::from(atom.element.atomic_number()),
                (i64::from(atom.charge) as u64),
                graph.degree(v) as u64,
                u64::from(graph.total_hydrogens(v)),
                u64::from(graph.bond_order_sum(v)),
            ])
        })
        .collect();
    let mut all: BTreeSet<u64> = ids.iter().copied().collect();
    for r in 1..=radius {
        ids = (0..n)
            .map(|v| {
                let mut around: Vec<(u8, u64)> =
                    view.adjacency[v].iter().map(|&(u, label)| (label, ids[u])).collect();
                around.sort_unstable();
                let tail = around.into_iter().flat_map(|(label, id)| [u64::from(label), id]);
                hash_sequence([u64::from(r), ids[v]].into_iter().chain(tail))
            })
            .collect();
        all.extend(ids.iter().copied());
    }
    all
}

/// Hashed circular fingerprint: every atom environment of radius
/// `0..=radius` sets bit `hash % width`.
///
/// Panics unless `width` is a power of two of at least 64.
pub fn fingerprint(graph: &MolecularGraph, radius: u32, width: usize) -> Fingerprint {
    assert!(width >= 64 && width.is_power_of_two(), "width must be a power of two >= 64");
    let bits = environment_ids(graph, radius)
        .into_iter()
        .map(|id| (id % width as u64) as usize);
    Fingerprint {
        radius,
        ..Fingerprint::from_bits(width, bits)
    }
}

/// `|a & b| / |a | b|`, with two empty fingerprints counting as identical.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64, WidthMismatch> {
    if a.width != b.width {
        return Err(WidthMismatch(a.width, b.width));
    }
    let (mut both, mut either) = (0u32, 0u32);
    for (x, y) in a.words.iter().zip(&b.words) {
        both += (x & y).count_ones();
        either += (x | y).count_ones();
    }
    if either == 0 {
        return Ok(1.0);
    }
    Ok(f64::from(both) / f64::from(either))
}
