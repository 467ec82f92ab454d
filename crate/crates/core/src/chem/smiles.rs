use std::collections::BTreeMap;

use super::{Atom, Bond, BondOrder, ChemError, Element, Molecule};

const ELEMENTS: [&str; 118] = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl", "Ar", "K",
    "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr",
    "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I",
    "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb",
    "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr",
    "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf",
    "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og",
];

/// Aromatic symbols accepted inside brackets.
const BRACKET_AROMATIC: [&str; 8] = ["se", "as", "b", "c", "n", "o", "p", "s"];

struct OpenRing {
    atom: usize,
    order: Option<BondOrder>,
    offset: usize,
}

struct Parser<'a> {
    text: &'a str,
    bytes: &'a [u8],
    pos: usize,
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    prev: Option<usize>,
    pending: Option<(BondOrder, usize)>,
    branches: Vec<(Option<usize>, usize)>,
    rings: BTreeMap<u32, OpenRing>,
}

/// Parses the supported SMILES subset: organic-subset and bracket atoms,
/// branches, ring closures (`1`–`9`, `%nn`), bond symbols `- = # :` and
/// disconnected components (`.`). Stereo marks and isotopes are read and
/// discarded.
pub fn parse_smiles(text: &str) -> Result<Molecule, ChemError> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(ChemError::EmptyInput);
    }
    let mut parser = Parser {
        text: trimmed,
        bytes: trimmed.as_bytes(),
        pos: 0,
        atoms: Vec::new(),
        bonds: Vec::new(),
        prev: None,
        pending: None,
        branches: Vec::new(),
        rings: BTreeMap::new(),
    };
    parser.run()?;
    Molecule::from_parts(parser.atoms, parser.bonds, trimmed)
}

impl Parser<'_> {
    fn run(&mut self) -> Result<(), ChemError> {
        while self.pos < self.bytes.len() {
            let offset = self.pos;
            match self.bytes[offset] {
                b'(' => {
                    if self.prev.is_none() || self.pending.is_some() {
                        return Err(ChemError::Malformed {
                            offset,
                            reason: "branch must follow an atom",
                        });
                    }
                    self.branches.push((self.prev, offset));
                    self.pos += 1;
                }
                b')' => {
                    let Some((anchor, _)) = self.branches.pop() else {
                        return Err(ChemError::UnmatchedBranchClose { offset });
                    };
                    self.check_no_pending()?;
                    self.prev = anchor;
                    self.pos += 1;
                }
                b'-' | b'/' | b'\\' => self.set_bond(BondOrder::Single)?,
                b'=' => self.set_bond(BondOrder::Double)?,
                b'#' => self.set_bond(BondOrder::Triple)?,
                b':' => self.set_bond(BondOrder::Aromatic)?,
                b'$' => {
                    return Err(ChemError::UnsupportedFeature {
                        feature: "quadruple bond".into(),
                        offset,
                    })
                }
                b'.' => {
                    self.check_no_pending()?;
                    self.prev = None;
                    self.pos += 1;
                }
                b'0'..=b'9' => {
                    let label = u32::from(self.bytes[offset] - b'0');
                    self.pos += 1;
                    self.ring_bond(label, offset)?;
                }
                b'%' => {
                    let digits = self.bytes.get(offset + 1..offset + 3);
                    let label = match digits {
                        Some([a, b]) if a.is_ascii_digit() && b.is_ascii_digit() => {
                            u32::from(a - b'0') * 10 + u32::from(b - b'0')
                        }
                        _ => {
                            return Err(ChemError::Malformed {
                                offset,
                                reason: "'%' must be followed by two digits",
                            })
                        }
                    };
                    self.pos += 3;
                    self.ring_bond(label, offset)?;
                }
                b'[' => {
                    let atom = self.bracket_atom()?;
                    self.add_atom(atom)?;
                }
                b'*' => {
                    return Err(ChemError::UnsupportedFeature {
                        feature: "wildcard atom".into(),
                        offset,
                    })
                }
                _ => {
                    let atom = self.organic_atom()?;
                    self.add_atom(atom)?;
                }
            }
        }
        if let Some((_, offset)) = self.branches.first() {
            return Err(ChemError::UnclosedBranch { offset: *offset });
        }
        if let Some((label, ring)) = self.rings.iter().next() {
            return Err(ChemError::UnmatchedRingBond {
                label: *label,
                offset: ring.offset,
            });
        }
        self.check_no_pending()
    }

    fn check_no_pending(&self) -> Result<(), ChemError> {
        match self.pending {
            Some((_, offset)) => Err(ChemError::Malformed {
                offset,
                reason: "bond symbol not followed by an atom",
            }),
            None => Ok(()),
        }
    }

    fn set_bond(&mut self, order: BondOrder) -> Result<(), ChemError> {
        let offset = self.pos;
        if self.prev.is_none() || self.pending.is_some() {
            return Err(ChemError::Malformed {
                offset,
                reason: "bond symbol must follow an atom",
            });
        }
        self.pending = Some((order, offset));
        self.pos += 1;
        Ok(())
    }

    fn default_order(&self, a: usize, b: usize) -> BondOrder {
        if self.atoms[a].aromatic && self.atoms[b].aromatic {
            BondOrder::Aromatic
        } else {
            BondOrder::Single
        }
    }

    fn add_atom(&mut self, atom: Atom) -> Result<(), ChemError> {
        let idx = self.atoms.len();
        self.atoms.push(atom);
        if let Some(prev) = self.prev {
            let order = match self.pending.take() {
                Some((order, _)) => order,
                None => self.default_order(prev, idx),
            };
            self.bonds.push(Bond { a: prev, b: idx, order });
        }
        self.prev = Some(idx);
        Ok(())
    }

    fn ring_bond(&mut self, label: u32, offset: usize) -> Result<(), ChemError> {
        let Some(current) = self.prev else {
            return Err(ChemError::Malformed {
                offset,
                reason: "ring bond must follow an atom",
            });
        };
        let here = self.pending.take().map(|(o, _)| o);
        match self.rings.remove(&label) {
            Some(open) => {
                let order = match (open.order, here) {
                    (Some(a), Some(b)) if a != b => {
                        return Err(ChemError::Malformed {
                            offset,
                            reason: "conflicting ring-closure bond symbols",
                        })
                    }
                    (Some(o), _) | (None, Some(o)) => o,
                    (None, None) => self.default_order(open.atom, current),
                };
                self.bonds.push(Bond {
                    a: open.atom,
                    b: current,
                    order,
                });
            }
            None => {
                self.rings.insert(
                    label,
                    OpenRing {
                        atom: current,
                        order: here,
                        offset,
                    },
                );
            }
        }
        Ok(())
    }

    fn organic_atom(&mut self) -> Result<Atom, ChemError> {
        let offset = self.pos;
        let rest = &self.text[offset..];
        let (symbol, aromatic, len) = if rest.starts_with("Cl") {
            ("Cl", false, 2)
        } else if rest.starts_with("Br") {
            ("Br", false, 2)
        } else {
            match self.bytes[offset] {
                b'B' => ("B", false, 1),
                b'C' => ("C", false, 1),
                b'N' => ("N", false, 1),
                b'O' => ("O", false, 1),
                b'P' => ("P", false, 1),
                b'S' => ("S", false, 1),
                b'F' => ("F", false, 1),
                b'I' => ("I", false, 1),
                b'b' => ("B", true, 1),
                b'c' => ("C", true, 1),
                b'n' => ("N", true, 1),
                b'o' => ("O", true, 1),
                b'p' => ("P", true, 1),
                b's' => ("S", true, 1),
                _ => {
                    let symbol = rest.chars().next().map(String::from).unwrap_or_default();
                    return Err(ChemError::UnknownSymbol { symbol, offset });
                }
            }
        };
        self.pos += len;
        Ok(Atom::organic(Element::from_symbol(symbol), aromatic))
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn read_number(&mut self) -> Option<u32> {
        let start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        (self.pos > start).then(|| self.text[start..self.pos].parse().unwrap_or(u32::MAX))
    }

    fn bracket_atom(&mut self) -> Result<Atom, ChemError> {
        let open = self.pos;
        self.pos += 1;
        // isotope
        self.read_number();

        let sym_offset = self.pos;
        let rest = &self.text[sym_offset..];
        if rest.starts_with('*') {
            return Err(ChemError::UnsupportedFeature {
                feature: "wildcard atom".into(),
                offset: sym_offset,
            });
        }
        let (symbol, aromatic) = if let Some(arom) = BRACKET_AROMATIC.iter().find(|s| rest.starts_with(*s)) {
            self.pos += arom.len();
            let mut upper = arom.to_string();
            upper[..1].make_ascii_uppercase();
            (upper, true)
        } else {
            let two = rest.get(..2).filter(|s| {
                s.as_bytes()[1].is_ascii_lowercase() && ELEMENTS.contains(s)
            });
            let one = rest.get(..1).filter(|s| ELEMENTS.contains(s));
            match two.or(one) {
                Some(s) => {
                    self.pos += s.len();
                    (s.to_string(), false)
                }
                None => {
                    let symbol = rest.chars().take_while(|c| c.is_ascii_alphabetic()).take(2).collect();
                    return Err(ChemError::UnknownSymbol {
                        symbol,
                        offset: sym_offset,
                    });
                }
            }
        };

        // chirality: @, @@, @TH1, @SP2, @OH12, ...
        while self.peek() == Some(b'@') {
            self.pos += 1;
        }
        let rest = &self.text[self.pos..];
        if ["TH", "AL", "SP", "TB", "OH"].iter().any(|p| rest.starts_with(p)) {
            self.pos += 2;
            self.read_number();
        }

        let mut hydrogens = 0u8;
        if self.peek() == Some(b'H') {
            self.pos += 1;
            hydrogens = self.read_number().map_or(1, |n| n.min(u32::from(u8::MAX)) as u8);
        }

        let mut charge: i32 = 0;
        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            let unit = if sign == b'+' { 1 } else { -1 };
            self.pos += 1;
            if let Some(n) = self.read_number() {
                charge = unit * n.min(15) as i32;
            } else {
                charge = unit;
                while self.peek() == Some(sign) {
                    self.pos += 1;
                    charge += unit;
                }
            }
        }

        // atom class
        if self.peek() == Some(b':') {
            self.pos += 1;
            self.read_number();
        }

        match self.peek() {
            Some(b']') => self.pos += 1,
            Some(_) => {
                return Err(ChemError::UnknownSymbol {
                    symbol: self.text[self.pos..].chars().next().map(String::from).unwrap_or_default(),
                    offset: self.pos,
                })
            }
            None => {
                return Err(ChemError::Malformed {
                    offset: open,
                    reason: "unterminated bracket atom",
                })
            }
        }

        Ok(Atom {
            element: Element::from_symbol(&symbol),
            aromatic,
            formal_charge: charge.clamp(i8::MIN.into(), i8::MAX.into()) as i8,
            explicit_h: Some(hydrogens),
            degree: 0,
            implicit_h: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orders(m: &Molecule) -> Vec<BondOrder> {
        m.bonds().iter().map(|b| b.order).collect()
    }

    #[test]
    fn methane() {
        let m = parse_smiles("C").unwrap();
        assert_eq!(m.atom_count(), 1);
        assert_eq!(m.bond_count(), 0);
        assert_eq!(m.atoms()[0].element, Element::C);
        assert_eq!(m.atoms()[0].implicit_h, 4);
    }

    #[test]
    fn empty_input() {
        assert_eq!(parse_smiles(""), Err(ChemError::EmptyInput));
        assert_eq!(parse_smiles("   "), Err(ChemError::EmptyInput));
    }

    #[test]
    fn benzene_ring() {
        let m = parse_smiles("c1ccccc1").unwrap();
        assert_eq!(m.atom_count(), 6);
        assert!(m.atoms().iter().all(|a| a.aromatic && a.element == Element::C));
        assert_eq!(orders(&m), vec![BondOrder::Aromatic; 6]);
        assert!(m.neighbor_lists().iter().all(|n| n.len() == 2));
        assert!(m.atoms().iter().all(|a| a.implicit_h == 1));
    }

    #[test]
    fn acetic_acid() {
        let m = parse_smiles("CC(=O)O").unwrap();
        assert_eq!(m.atom_count(), 4);
        assert_eq!(m.bond_count(), 3);
        assert_eq!(orders(&m).iter().filter(|o| **o == BondOrder::Double).count(), 1);
        let h: Vec<u8> = m.atoms().iter().map(|a| a.implicit_h).collect();
        assert_eq!(h, vec![3, 0, 0, 1]);
        // the branch hangs off atom 1, and the trailing O bonds back to it
        assert_eq!(m.bonds()[2], Bond { a: 1, b: 3, order: BondOrder::Single });
    }

    #[test]
    fn two_digit_ring_closure() {
        let m = parse_smiles("C%10CCCCC%10").unwrap();
        assert_eq!(m.atom_count(), 6);
        assert_eq!(m.bond_count(), 6);
    }

    #[test]
    fn ring_label_reuse() {
        let m = parse_smiles("C1CC1C1CC1").unwrap();
        assert_eq!(m.atom_count(), 6);
        assert_eq!(m.bond_count(), 7);
    }

    #[test]
    fn ring_closure_bond_symbol() {
        let m = parse_smiles("C=1CCCCC1").unwrap();
        assert_eq!(m.bonds().last().unwrap().order, BondOrder::Double);
        let m = parse_smiles("C1CCCCC=1").unwrap();
        assert_eq!(m.bonds().last().unwrap().order, BondOrder::Double);
        assert!(parse_smiles("C=1CCCCC#1").is_err());
    }

    #[test]
    fn stereo_and_isotopes_are_ignored() {
        let m = parse_smiles("F/C=C/F").unwrap();
        assert_eq!(m.atom_count(), 4);
        assert_eq!(m.bond_count(), 3);
        let m = parse_smiles("N[C@@H](C)C(=O)O").unwrap();
        assert_eq!(m.atom_count(), 6);
        assert_eq!(m.atoms()[1].explicit_h, Some(1));
        let m = parse_smiles("[13CH4]").unwrap();
        assert_eq!(m.atoms()[0].implicit_h, 4);
    }

    #[test]
    fn charges() {
        let m = parse_smiles("C[N+](=O)[O-]").unwrap();
        assert_eq!(m.atoms()[1].formal_charge, 1);
        assert_eq!(m.atoms()[3].formal_charge, -1);
        assert_eq!(parse_smiles("[Fe++]").unwrap().atoms()[0].formal_charge, 2);
        assert_eq!(parse_smiles("[Fe+3]").unwrap().atoms()[0].formal_charge, 3);
    }

    #[test]
    fn dot_separates_components() {
        let m = parse_smiles("CC(=O)[O-].[Na+]").unwrap();
        assert_eq!(m.atom_count(), 5);
        assert_eq!(m.bond_count(), 3);
        assert_eq!(m.atoms()[4].element, Element::Other("Na".into()));
    }

    #[test]
    fn bracket_aromatics() {
        let m = parse_smiles("c1cc[nH]c1").unwrap();
        assert_eq!(m.bond_count(), 5);
        assert!(m.atoms()[3].aromatic);
        assert_eq!(m.atoms()[3].implicit_h, 1);
        let m = parse_smiles("c1cc[se]c1").unwrap();
        assert_eq!(m.atoms()[3].element, Element::Other("Se".into()));
    }

    #[test]
    fn error_cases() {
        assert_eq!(parse_smiles("CC(C"), Err(ChemError::UnclosedBranch { offset: 2 }));
        assert_eq!(parse_smiles("CC)C"), Err(ChemError::UnmatchedBranchClose { offset: 2 }));
        assert_eq!(
            parse_smiles("C1CC"),
            Err(ChemError::UnmatchedRingBond { label: 1, offset: 1 })
        );
        assert_eq!(
            parse_smiles("CCX"),
            Err(ChemError::UnknownSymbol {
                symbol: "X".into(),
                offset: 2
            })
        );
        assert!(matches!(parse_smiles("[Xx]"), Err(ChemError::UnknownSymbol { offset: 1, .. })));
        assert!(matches!(parse_smiles("C*"), Err(ChemError::UnsupportedFeature { .. })));
        assert!(matches!(parse_smiles("C$C"), Err(ChemError::UnsupportedFeature { .. })));
        assert!(matches!(parse_smiles("CC="), Err(ChemError::Malformed { .. })));
        assert!(matches!(parse_smiles("[CH4"), Err(ChemError::Malformed { .. })));
        assert!(matches!(parse_smiles("C11"), Err(ChemError::InvalidBond { .. })));
        assert!(matches!(parse_smiles("C12CCCC12"), Err(ChemError::InvalidBond { .. })));
    }

    #[test]
    fn parsing_is_deterministic() {
        let s = "CC(=O)Oc1ccccc1C(=O)O";
        assert_eq!(parse_smiles(s).unwrap(), parse_smiles(s).unwrap());
    }
}
