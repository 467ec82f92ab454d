use crate::diffcore::Tensor;

use super::{Atom, Molecule};

/// Element vocabulary of the symbol block; the final entry catches everything else.
pub const ATOM_SYMBOLS: [&str; 44] = [
    "C", "N", "O", "S", "F", "Si", "P", "Cl", "Br", "Mg", "Na", "Ca", "Fe", "As", "Al", "I", "B", "V", "K", "Tl",
    "Yb", "Sb", "Sn", "Ag", "Pd", "Co", "Se", "Ti", "Zn", "H", "Li", "Ge", "Cu", "Au", "Ni", "Cd", "In", "Mn",
    "Zr", "Cr", "Pt", "Hg", "Pb", "Unknown",
];
pub const DEGREE_SLOTS: usize = 11;
pub const HYDROGEN_SLOTS: usize = 11;
pub const VALENCE_SLOTS: usize = 11;
/// symbol (44) + degree (11) + total H (11) + implicit valence (11) + aromatic (1)
pub const ATOM_FEATURE_DIM: usize = ATOM_SYMBOLS.len() + DEGREE_SLOTS + HYDROGEN_SLOTS + VALENCE_SLOTS + 1;

const DEGREE_OFFSET: usize = ATOM_SYMBOLS.len();
const HYDROGEN_OFFSET: usize = DEGREE_OFFSET + DEGREE_SLOTS;
const VALENCE_OFFSET: usize = HYDROGEN_OFFSET + HYDROGEN_SLOTS;
const AROMATIC_OFFSET: usize = VALENCE_OFFSET + VALENCE_SLOTS;

/// Position of an element symbol in the symbol block.
pub fn symbol_slot(symbol: &str) -> usize {
    ATOM_SYMBOLS[..ATOM_SYMBOLS.len() - 1]
        .iter()
        .position(|s| *s == symbol)
        .unwrap_or(ATOM_SYMBOLS.len() - 1)
}

/// One-hot atom descriptor. Counts past the end of a block land in its last slot.
pub fn featurize_atom(atom: &Atom) -> [f64; ATOM_FEATURE_DIM] {
    let mut x = [0.0; ATOM_FEATURE_DIM];
    x[symbol_slot(atom.element.symbol())] = 1.0;
    x[DEGREE_OFFSET + usize::from(atom.degree).min(DEGREE_SLOTS - 1)] = 1.0;
    x[HYDROGEN_OFFSET + usize::from(atom.total_h()).min(HYDROGEN_SLOTS - 1)] = 1.0;
    let implicit_valence = if atom.is_bracket() { 0 } else { atom.implicit_h };
    x[VALENCE_OFFSET + usize::from(implicit_valence).min(VALENCE_SLOTS - 1)] = 1.0;
    if atom.aromatic {
        x[AROMATIC_OFFSET] = 1.0;
    }
    x
}

/// Node features and adjacency of one molecule.
#[derive(Debug, Clone, PartialEq)]
pub struct MolecularGraph {
    node_features: Tensor,
    neighbor_lists: Vec<Vec<usize>>,
}

impl MolecularGraph {
    /// Builds a graph from arbitrary node features; neighbour lists must be symmetric.
    pub fn new(node_features: Tensor, neighbor_lists: Vec<Vec<usize>>) -> Result<Self, String> {
        let n = node_features.rows();
        if neighbor_lists.len() != n {
            return Err(format!("{} neighbour lists for {} nodes", neighbor_lists.len(), n));
        }
        for (i, list) in neighbor_lists.iter().enumerate() {
            for &j in list {
                if j >= n || j == i {
                    return Err(format!("node {i} has invalid neighbour {j}"));
                }
                if !neighbor_lists[j].contains(&i) {
                    return Err(format!("edge {i}->{j} is not mirrored"));
                }
            }
        }
        Ok(Self {
            node_features,
            neighbor_lists,
        })
    }

    pub fn node_features(&self) -> &Tensor {
        &self.node_features
    }

    pub fn neighbor_lists(&self) -> &[Vec<usize>] {
        &self.neighbor_lists
    }

    pub fn num_nodes(&self) -> usize {
        self.node_features.rows()
    }

    /// Relabels nodes so that new node `i` is old node `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> MolecularGraph {
        let n = self.num_nodes();
        let mut new_index = vec![0; n];
        for (new, &old) in order.iter().enumerate() {
            new_index[old] = new;
        }
        let mut features = Tensor::zeros(n, self.node_features.cols());
        let mut lists = vec![Vec::new(); n];
        for (new, &old) in order.iter().enumerate() {
            features.row_mut(new).copy_from_slice(self.node_features.row(old));
            lists[new] = self.neighbor_lists[old].iter().map(|&j| new_index[j]).collect();
        }
        MolecularGraph {
            node_features: features,
            neighbor_lists: lists,
        }
    }
}

pub fn build_graph(mol: &Molecule) -> MolecularGraph {
    let n = mol.atom_count();
    let mut features = Tensor::zeros(n, ATOM_FEATURE_DIM);
    for (i, atom) in mol.atoms().iter().enumerate() {
        features.row_mut(i).copy_from_slice(&featurize_atom(atom));
    }
    MolecularGraph {
        node_features: features,
        neighbor_lists: mol.neighbor_lists(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    #[test]
    fn width_is_78() {
        assert_eq!(ATOM_FEATURE_DIM, 78);
    }

    #[test]
    fn methane_carbon_blocks() {
        let m = parse_smiles("C").unwrap();
        let x = featurize_atom(&m.atoms()[0]);
        assert_eq!(x[0], 1.0);
        assert_eq!(x[DEGREE_OFFSET], 1.0);
        assert_eq!(x[HYDROGEN_OFFSET + 4], 1.0);
        assert_eq!(x[VALENCE_OFFSET + 4], 1.0);
        assert_eq!(x[AROMATIC_OFFSET], 0.0);
        assert_eq!(x.iter().sum::<f64>(), 4.0);
    }

    #[test]
    fn benzene_is_aromatic() {
        let m = parse_smiles("c1ccccc1").unwrap();
        for atom in m.atoms() {
            assert_eq!(featurize_atom(atom)[AROMATIC_OFFSET], 1.0);
        }
    }

    #[test]
    fn unknown_element_uses_last_symbol_slot() {
        assert_eq!(symbol_slot("U"), 43);
        assert_eq!(symbol_slot("Pt"), 40);
        let m = parse_smiles("[U]").unwrap();
        assert_eq!(featurize_atom(&m.atoms()[0])[43], 1.0);
    }

    #[test]
    fn graphs_from_smiles() {
        let methane = build_graph(&parse_smiles("C").unwrap());
        assert_eq!(methane.num_nodes(), 1);
        assert!(methane.neighbor_lists()[0].is_empty());

        let ethane = build_graph(&parse_smiles("CC").unwrap());
        assert_eq!(ethane.neighbor_lists(), &[vec![1], vec![0]]);

        let benzene = build_graph(&parse_smiles("c1ccccc1").unwrap());
        assert!(benzene.neighbor_lists().iter().all(|l| l.len() == 2));
        assert_eq!(benzene.node_features().cols(), 78);
    }

    #[test]
    fn new_rejects_asymmetric_lists() {
        assert!(MolecularGraph::new(Tensor::zeros(2, 1), vec![vec![1], vec![]]).is_err());
        assert!(MolecularGraph::new(Tensor::zeros(2, 1), vec![vec![1], vec![0]]).is_ok());
    }
}
