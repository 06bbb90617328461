#!/usr/bin/env python3
"""Regenerate the frozen test fixtures under crates/core/data/.

Requires RDKit and the `selfies` package (2.1.x). The Rust test suite never
calls Python; it only reads the files written here.

    python3 tools/make_fixtures.py
"""

import os
import random
import sys

import selfies as sf
from rdkit import Chem, RDLogger
from rdkit.Chem import Crippen, rdMolDescriptors
from rdkit.Chem.MolStandardize import rdMolStandardize

RDLogger.DisableLog("rdApp.*")

RDKIT_DIR = os.path.dirname(Chem.__file__).rsplit(os.sep, 1)[0]
OUT = os.path.join(os.path.dirname(__file__), "..", "crates", "core", "data")

ELEMENTS = {"B", "C", "N", "O", "S", "P", "F", "Cl", "Br", "I", "H"}
MAX_VALENCE = {"B": 3, "C": 4, "N": 3, "O": 2, "S": 6, "P": 5,
               "F": 1, "Cl": 1, "Br": 1, "I": 1, "H": 1}
MAX_HEAVY = 64
MAX_SELFIES_TOKENS = 126

SEED = 20240611


def read_sources():
    nci = os.path.join(RDKIT_DIR, "Data", "NCI", "first_5K.smi")
    wehi = os.path.join(RDKIT_DIR, "Data", "Pains", "test_data", "wehi_mols.csv")
    chembl = os.path.join(RDKIT_DIR, "Contrib", "FreeWilson", "data",
                          "CHEMBL2321810.smi")
    out = []
    with open(nci) as fh:
        for line in fh:
            parts = line.split()
            if parts:
                out.append(("nci", parts[0]))
    with open(wehi) as fh:
        for line in fh:
            smi = line.split(",")[0].strip().strip('"')
            if smi:
                out.append(("wehi", smi))
    with open(chembl) as fh:
        for line in fh:
            parts = line.split()
            if parts:
                out.append(("chembl", parts[0]))
    return out


def acceptable(mol):
    if mol.GetNumHeavyAtoms() > MAX_HEAVY or mol.GetNumHeavyAtoms() < 1:
        return False
    for atom in mol.GetAtoms():
        if atom.GetSymbol() not in ELEMENTS:
            return False
        if atom.GetFormalCharge() != 0 or atom.GetIsotope() != 0:
            return False
        if atom.GetNumRadicalElectrons() != 0:
            return False
        valence = atom.GetTotalValence()
        if valence > MAX_VALENCE[atom.GetSymbol()]:
            return False
    return True


def clean(smiles, chooser):
    mol = Chem.MolFromSmiles(smiles)
    if mol is None:
        return None
    mol = chooser.choose(mol)
    Chem.RemoveStereochemistry(mol)
    if not acceptable(mol):
        return None
    return mol


def implicit_hydrogen_kekule(mol):
    # [nH] survives kekulization as a bracket [NH]; drop the explicit count so
    # the encoder emits a plain [N] token instead of [NH1].
    kek = Chem.Mol(mol)
    Chem.Kekulize(kek, clearAromaticFlags=True)
    before = [a.GetTotalNumHs() for a in kek.GetAtoms()]
    for atom in kek.GetAtoms():
        atom.SetNoImplicit(False)
        atom.SetNumExplicitHs(0)
    Chem.SanitizeMol(kek, Chem.SanitizeFlags.SANITIZE_ALL
                     ^ Chem.SanitizeFlags.SANITIZE_SETAROMATICITY)
    if [a.GetTotalNumHs() for a in kek.GetAtoms()] != before:
        return None
    return kek


def alphabet():
    atoms = ["[{}{}]".format(b, e) for b in ("", "=", "#")
             for e in ("B", "C", "N", "O", "S", "P", "F", "Cl", "Br", "I", "H")]
    structural = ["[{}{}{}]".format(b, kind, k) for kind in ("Branch", "Ring")
                  for b in ("", "=", "#") for k in (1, 2, 3)]
    return atoms + structural


def main():
    rng = random.Random(SEED)
    chooser = rdMolStandardize.LargestFragmentChooser()
    seen = set()
    corpus = []  # (source, canonical smiles, mol, kekule mol, selfies)
    for source, smi in read_sources():
        mol = clean(smi, chooser)
        if mol is None:
            continue
        canon = Chem.MolToSmiles(mol, isomericSmiles=False)
        if canon in seen:
            continue
        kek = implicit_hydrogen_kekule(mol)
        if kek is None:
            continue
        kek_smi = Chem.MolToSmiles(kek, isomericSmiles=False, kekuleSmiles=True)
        try:
            selfies = sf.encoder(kek_smi)
        except sf.EncoderError:
            continue
        if len(list(sf.split_selfies(selfies))) > MAX_SELFIES_TOKENS:
            continue
        seen.add(canon)
        corpus.append((source, canon, mol, kek, selfies))

    os.makedirs(OUT, exist_ok=True)

    with open(os.path.join(OUT, "corpus.smi"), "w") as fh:
        for _, canon, _, _, _ in corpus:
            fh.write(canon + "\n")

    # Per-atom hydrogen counts and double-bond count of RDKit's kekule form,
    # in the atom order of the aromatic SMILES written above.
    with open(os.path.join(OUT, "kekule_oracle.tsv"), "w") as fh:
        fh.write("smiles\thydrogens\tdouble_bonds\n")
        n = 0
        for _, canon, _, _, _ in corpus:
            if not any(c in canon for c in "bcnops"):
                continue
            mol = Chem.MolFromSmiles(canon)
            if not any(a.GetIsAromatic() for a in mol.GetAtoms()):
                continue
            Chem.Kekulize(mol, clearAromaticFlags=True)
            hs = ",".join(str(a.GetTotalNumHs()) for a in mol.GetAtoms())
            doubles = sum(1 for b in mol.GetBonds()
                          if b.GetBondType() == Chem.BondType.DOUBLE)
            fh.write("{}\t{}\t{}\n".format(canon, hs, doubles))
            n += 1
            if n >= 1500:
                break

    # Randomized atom orderings of the same molecule, aromatic and kekule.
    with open(os.path.join(OUT, "random_smiles.tsv"), "w") as fh:
        fh.write("smiles\tvariants\n")
        for i, (_, canon, mol, kek, _) in enumerate(corpus[:1200]):
            variants = set()
            for _ in range(3):
                variants.add(Chem.MolToSmiles(mol, isomericSmiles=False,
                                              doRandom=True))
                variants.add(Chem.MolToSmiles(kek, isomericSmiles=False,
                                              kekuleSmiles=True, doRandom=True))
            fh.write("{}\t{}\n".format(canon, " ".join(sorted(variants))))

    # Reference decoder output for encoded corpus strings and random strings.
    symbols = alphabet()
    with open(os.path.join(OUT, "selfies_oracle.tsv"), "w") as fh:
        fh.write("kind\tselfies\treference_smiles\n")
        for _, _, _, _, selfies in corpus[:1500]:
            fh.write("corpus\t{}\t{}\n".format(selfies, sf.decoder(selfies)))
        for _ in range(1500):
            length = rng.randint(1, 60)
            s = "".join(rng.choice(symbols) for _ in range(length))
            fh.write("random\t{}\t{}\n".format(s, sf.decoder(s)))

    # Property table: RDKit-computed descriptors as surrogate labels.
    with open(os.path.join(OUT, "properties.csv"), "w") as fh:
        fh.write("smiles,tpsa,logp,heavy_atoms,high_logp\n")
        for source, canon, mol, _, _ in corpus:
            if source != "nci":
                continue
            tpsa = rdMolDescriptors.CalcTPSA(mol)
            logp = Crippen.MolLogP(mol)
            fh.write("{},{:.4f},{:.4f},{},{}\n".format(
                canon, tpsa, logp, mol.GetNumHeavyAtoms(), int(logp > 2.0)))

    print("corpus: {} molecules".format(len(corpus)), file=sys.stderr)


if __name__ == "__main__":
    main()
