//! A small synthetic synergy set with a known labelling rule, and a random
//! molecule generator for property tests.
//!
//! A pair is labelled synergistic when, between the two drugs, there is at
//! least one nitrogen atom and at least one halogen atom. Cell lines carry
//! random profiles that do not influence the label.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CellLineTable, Dataset, SynergySample};
use crate::chem::{build_graph, parse_smiles, Atom, Bond, BondOrder, Element, Molecule, MolecularGraph};

pub const TOY_SMILES: [&str; 20] = [
    "CCN",
    "NCCO",
    "c1ccncc1",
    "CC(=O)N",
    "CN(C)C",
    "c1cc[nH]c1",
    "NC(=O)c1ccccc1",
    "CC#N",
    "ClC(Cl)Cl",
    "CCBr",
    "Fc1ccccc1",
    "CC(F)(F)F",
    "ICC",
    "Clc1ccc(Cl)cc1",
    "Nc1ccc(Cl)cc1",
    "FC(F)C(=O)N",
    "CCO",
    "c1ccccc1",
    "CC(=O)O",
    "CCCCCC",
];

pub const TOY_CELL_LINES: usize = 4;
pub const TOY_GENES: usize = 16;
pub const TOY_PAIRS: usize = 500;

fn contains(smiles: &str, pred: impl Fn(&Element) -> bool) -> bool {
    parse_smiles(smiles)
        .map(|m| m.atoms().iter().any(|a| pred(&a.element)))
        .unwrap_or(false)
}

fn has_nitrogen(smiles: &str) -> bool {
    contains(smiles, |e| *e == Element::N)
}

fn has_halogen(smiles: &str) -> bool {
    contains(smiles, |e| matches!(e, Element::F | Element::Cl | Element::Br | Element::I))
}

/// The labelling rule.
pub fn toy_label(drug_a: &str, drug_b: &str) -> u8 {
    let nitrogen = has_nitrogen(drug_a) || has_nitrogen(drug_b);
    let halogen = has_halogen(drug_a) || has_halogen(drug_b);
    u8::from(nitrogen && halogen)
}

pub fn toy_cell_id(i: usize) -> String {
    format!("CL{i}")
}

pub fn toy_cells(seed: u64) -> CellLineTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..TOY_CELL_LINES)
        .map(|i| (toy_cell_id(i), (0..TOY_GENES).map(|_| rng.gen_range(-1.0..1.0)).collect()))
        .collect();
    CellLineTable::from_rows(rows).expect("uniform widths and distinct ids")
}

/// Number of distinct ordered (drug A, drug B, cell line) combinations with `A ≠ B`.
pub fn max_pairs() -> usize {
    TOY_SMILES.len() * (TOY_SMILES.len() - 1) * TOY_CELL_LINES
}

/// `pairs` distinct (drug A, drug B, cell line) combinations with `A ≠ B`,
/// drawn without replacement.
///
/// # Panics
///
/// If `pairs` exceeds the number of distinct combinations.
pub fn toy_samples(pairs: usize, seed: u64) -> Vec<SynergySample> {
    let n = TOY_SMILES.len();
    assert!(pairs <= max_pairs(), "at most {} toy pairs exist", max_pairs());
    let combos: Vec<(usize, usize, usize)> = (0..n)
        .flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| (a, b)))
        .flat_map(|(a, b)| (0..TOY_CELL_LINES).map(move |c| (a, b, c)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample(&mut rng, combos.len(), pairs)
        .into_iter()
        .map(|i| {
            let (a, b, c) = combos[i];
            SynergySample::new(TOY_SMILES[a], TOY_SMILES[b], toy_cell_id(c), toy_label(TOY_SMILES[a], TOY_SMILES[b]))
        })
        .collect()
}

pub fn toy_dataset(pairs: usize, seed: u64) -> Dataset {
    Dataset::new(toy_samples(pairs, seed), toy_cells(seed.wrapping_add(1))).expect("toy data is valid")
}

/// Writes `samples.csv` and `expression.tsv` into `dir`, returning their paths.
pub fn write_toy_files(dir: impl AsRef<Path>, pairs: usize, seed: u64) -> io::Result<(PathBuf, PathBuf)> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let samples_path = dir.join("samples.csv");
    let cells_path = dir.join("expression.tsv");
    let mut buf = Vec::new();
    super::write_samples(&mut buf, &toy_samples(pairs, seed)).map_err(io::Error::other)?;
    fs::write(&samples_path, buf)?;
    let mut buf = Vec::new();
    toy_cells(seed.wrapping_add(1)).write_tsv(&mut buf)?;
    fs::write(&cells_path, buf)?;
    Ok((samples_path, cells_path))
}

const RANDOM_ELEMENTS: [(Element, f64); 7] = [
    (Element::C, 0.55),
    (Element::N, 0.15),
    (Element::O, 0.15),
    (Element::S, 0.05),
    (Element::F, 0.04),
    (Element::Cl, 0.04),
    (Element::P, 0.02),
];

/// A random connected molecule with `atoms` heavy atoms: a random tree plus a
/// few ring-closing single bonds.
pub fn random_molecule<R: Rng + ?Sized>(rng: &mut R, atoms: usize) -> Molecule {
    let mut list = Vec::with_capacity(atoms);
    for _ in 0..atoms {
        let mut u: f64 = rng.gen();
        let element = RANDOM_ELEMENTS
            .iter()
            .find(|(_, w)| {
                u -= w;
                u < 0.0
            })
            .map_or(Element::C, |(e, _)| e.clone());
        list.push(Atom::organic(element, false));
    }
    let mut bonds = Vec::new();
    let mut has = std::collections::HashSet::new();
    for v in 1..atoms {
        let u = rng.gen_range(0..v);
        let order = if rng.gen_bool(0.15) { BondOrder::Double } else { BondOrder::Single };
        bonds.push(Bond { a: u, b: v, order });
        has.insert((u, v));
    }
    let extra = if atoms >= 4 { rng.gen_range(0..=atoms / 4) } else { 0 };
    for _ in 0..extra {
        let a = rng.gen_range(0..atoms);
        let b = rng.gen_range(0..atoms);
        let key = (a.min(b), a.max(b));
        if a != b && has.insert(key) {
            bonds.push(Bond {
                a: key.0,
                b: key.1,
                order: BondOrder::Single,
            });
        }
    }
    Molecule::from_parts(list, bonds, "").expect("generated bonds are valid")
}

pub fn random_graph<R: Rng + ?Sized>(rng: &mut R, min_atoms: usize, max_atoms: usize) -> MolecularGraph {
    let n = rng.gen_range(min_atoms..=max_atoms);
    build_graph(&random_molecule(rng, n))
}
