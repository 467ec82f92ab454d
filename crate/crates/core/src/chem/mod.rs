//! Molecules from SMILES text, and the graphs and atom features derived from them.

mod features;
mod smiles;

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

pub use features::{
    build_graph, featurize_atom, symbol_slot, MolecularGraph, ATOM_FEATURE_DIM, ATOM_SYMBOLS,
    DEGREE_SLOTS, HYDROGEN_SLOTS, VALENCE_SLOTS,
};
pub use smiles::parse_smiles;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChemError {
    #[error("empty SMILES")]
    EmptyInput,
    #[error("branch opened at byte {offset} is never closed")]
    UnclosedBranch { offset: usize },
    #[error("')' at byte {offset} has no matching '('")]
    UnmatchedBranchClose { offset: usize },
    #[error("ring bond {label} opened at byte {offset} is never closed")]
    UnmatchedRingBond { label: u32, offset: usize },
    #[error("unknown symbol {symbol:?} at byte {offset}")]
    UnknownSymbol { symbol: String, offset: usize },
    #[error("unsupported SMILES feature {feature:?} at byte {offset}")]
    UnsupportedFeature { feature: String, offset: usize },
    #[error("malformed SMILES at byte {offset}: {reason}")]
    Malformed { offset: usize, reason: &'static str },
    #[error("invalid bond between atoms {a} and {b}: {reason}")]
    InvalidBond { a: usize, b: usize, reason: &'static str },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Element {
    B,
    C,
    N,
    O,
    P,
    S,
    F,
    Cl,
    Br,
    I,
    /// Any element outside the organic subset, by its symbol.
    Other(String),
}

impl Element {
    pub fn from_symbol(symbol: &str) -> Element {
        match symbol {
            "B" => Element::B,
            "C" => Element::C,
            "N" => Element::N,
            "O" => Element::O,
            "P" => Element::P,
            "S" => Element::S,
            "F" => Element::F,
            "Cl" => Element::Cl,
            "Br" => Element::Br,
            "I" => Element::I,
            other => Element::Other(other.to_string()),
        }
    }

    pub fn symbol(&self) -> &str {
        match self {
            Element::B => "B",
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::P => "P",
            Element::S => "S",
            Element::F => "F",
            Element::Cl => "Cl",
            Element::Br => "Br",
            Element::I => "I",
            Element::Other(s) => s,
        }
    }

    /// Lowest standard valence for organic-subset elements.
    pub fn default_valence(&self) -> Option<u8> {
        match self {
            Element::B => Some(3),
            Element::C => Some(4),
            Element::N | Element::P => Some(3),
            Element::O | Element::S => Some(2),
            Element::F | Element::Cl | Element::Br | Element::I => Some(1),
            Element::Other(_) => None,
        }
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Contribution to an atom's valence; aromatic bonds count 1.5.
    pub fn valence(self) -> f64 {
        match self {
            BondOrder::Single => 1.0,
            BondOrder::Double => 2.0,
            BondOrder::Triple => 3.0,
            BondOrder::Aromatic => 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Atom {
    pub element: Element,
    pub aromatic: bool,
    pub formal_charge: i8,
    /// Hydrogen count written inside brackets; `None` for organic-subset atoms.
    pub explicit_h: Option<u8>,
    /// Number of bonded (heavy-atom) neighbours.
    pub degree: u8,
    /// Hydrogens attached but not written as atoms.
    pub implicit_h: u8,
}

impl Atom {
    pub fn organic(element: Element, aromatic: bool) -> Self {
        Self {
            element,
            aromatic,
            formal_charge: 0,
            explicit_h: None,
            degree: 0,
            implicit_h: 0,
        }
    }

    pub fn is_bracket(&self) -> bool {
        self.explicit_h.is_some()
    }

    pub fn total_h(&self) -> u8 {
        self.implicit_h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Molecule {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    source: String,
}

/// Hydrogens implied by the valence rule for an organic-subset atom:
/// default valence minus the bond-order sum, floored at zero.
pub fn implicit_hydrogens(atom: &Atom, incident: &[BondOrder]) -> u8 {
    let Some(valence) = atom.element.default_valence() else {
        return 0;
    };
    let used: f64 = incident.iter().map(|o| o.valence()).sum();
    (f64::from(valence) - used).floor().max(0.0) as u8
}

impl Molecule {
    /// Assembles a molecule, validating bonds and filling in each atom's
    /// degree and hydrogen count.
    pub fn from_parts(mut atoms: Vec<Atom>, bonds: Vec<Bond>, source: impl Into<String>) -> Result<Self, ChemError> {
        let n = atoms.len();
        let mut seen = HashSet::new();
        let mut incident: Vec<Vec<BondOrder>> = vec![Vec::new(); n];
        for bond in &bonds {
            if bond.a >= n || bond.b >= n {
                return Err(ChemError::InvalidBond {
                    a: bond.a,
                    b: bond.b,
                    reason: "endpoint out of range",
                });
            }
            if bond.a == bond.b {
                return Err(ChemError::InvalidBond {
                    a: bond.a,
                    b: bond.b,
                    reason: "atom bonded to itself",
                });
            }
            if !seen.insert((bond.a.min(bond.b), bond.a.max(bond.b))) {
                return Err(ChemError::InvalidBond {
                    a: bond.a,
                    b: bond.b,
                    reason: "duplicate bond",
                });
            }
            incident[bond.a].push(bond.order);
            incident[bond.b].push(bond.order);
        }
        for (atom, orders) in atoms.iter_mut().zip(&incident) {
            atom.degree = orders.len().min(u8::MAX as usize) as u8;
            atom.implicit_h = match atom.explicit_h {
                Some(h) => h,
                None => implicit_hydrogens(atom, orders),
            };
        }
        Ok(Self {
            atoms,
            bonds,
            source: source.into(),
        })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn bond_count(&self) -> usize {
        self.bonds.len()
    }

    pub fn neighbor_lists(&self) -> Vec<Vec<usize>> {
        let mut lists = vec![Vec::new(); self.atoms.len()];
        for bond in &self.bonds {
            lists[bond.a].push(bond.b);
            lists[bond.b].push(bond.a);
        }
        lists
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isolated_carbon_has_four_hydrogens() {
        let c = Atom::organic(Element::C, false);
        assert_eq!(implicit_hydrogens(&c, &[]), 4);
    }

    #[test]
    fn hydroxyl_oxygen_has_one_hydrogen() {
        let o = Atom::organic(Element::O, false);
        assert_eq!(implicit_hydrogens(&o, &[BondOrder::Single]), 1);
    }

    #[test]
    fn aromatic_bonds_count_one_and_a_half() {
        let c = Atom::organic(Element::C, true);
        assert_eq!(implicit_hydrogens(&c, &[BondOrder::Aromatic; 2]), 1);
        assert_eq!(implicit_hydrogens(&c, &[BondOrder::Aromatic; 3]), 0);
        let n = Atom::organic(Element::N, true);
        assert_eq!(implicit_hydrogens(&n, &[BondOrder::Aromatic; 2]), 0);
    }

    #[test]
    fn overfull_valence_floors_at_zero() {
        let n = Atom::organic(Element::N, false);
        assert_eq!(
            implicit_hydrogens(&n, &[BondOrder::Double, BondOrder::Double, BondOrder::Single]),
            0
        );
    }

    #[test]
    fn bracket_atoms_keep_explicit_hydrogens() {
        let mol = parse_smiles("[NH4+]").unwrap();
        let atom = &mol.atoms()[0];
        assert_eq!(atom.explicit_h, Some(4));
        assert_eq!(atom.implicit_h, 4);
        assert_eq!(atom.formal_charge, 1);
    }

    #[test]
    fn from_parts_rejects_bad_bonds() {
        let atoms = vec![Atom::organic(Element::C, false); 2];
        let dup = vec![
            Bond { a: 0, b: 1, order: BondOrder::Single },
            Bond { a: 1, b: 0, order: BondOrder::Single },
        ];
        assert!(Molecule::from_parts(atoms.clone(), dup, "").is_err());
        let self_loop = vec![Bond { a: 1, b: 1, order: BondOrder::Single }];
        assert!(Molecule::from_parts(atoms.clone(), self_loop, "").is_err());
        let out = vec![Bond { a: 0, b: 2, order: BondOrder::Single }];
        assert!(Molecule::from_parts(atoms, out, "").is_err());
    }
}
