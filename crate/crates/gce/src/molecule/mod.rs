//! Molecules over a fixed heavy-atom alphabet.
//!
//! Bonds are kekulized integer orders 1..=3; hydrogens are implicit.
//! Validity is valence-based: an atom may not exceed the largest
//! allowed valence of its element, and a valid molecule is connected
//! and nonempty.

mod canon;
mod convert;
mod smiles;

pub use canon::{canonical_key, canonical_order};
pub use convert::{graph_to_molecule, molecule_to_graph, ConvertError};
pub use smiles::{
    load_smiles_file, parse_smiles, parse_smiles_lines, write_smiles, SmilesError,
    SmilesFileError, WriteError,
};

/// Supported heavy atoms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Element {
    C,
    N,
    O,
    F,
    S,
    Cl,
    Br,
    P,
}

/// Standard atomic mass of implicit hydrogen.
pub const HYDROGEN_MASS: f64 = 1.008;

impl Element {
    pub const ALL: [Element; 8] = [
        Element::C,
        Element::N,
        Element::O,
        Element::F,
        Element::S,
        Element::Cl,
        Element::Br,
        Element::P,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::F => "F",
            Element::S => "S",
            Element::Cl => "Cl",
            Element::Br => "Br",
            Element::P => "P",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Element> {
        Element::ALL.into_iter().find(|e| e.symbol() == s)
    }

    /// Standard atomic mass.
    pub fn mass(self) -> f64 {
        match self {
            Element::C => 12.011,
            Element::N => 14.007,
            Element::O => 15.999,
            Element::F => 18.998,
            Element::S => 32.06,
            Element::Cl => 35.45,
            Element::Br => 79.904,
            Element::P => 30.974,
        }
    }
}

/// Allowed valences per element: C:4, N:3, O:2, F:1, S:{2,4,6}, Cl:1,
/// Br:1, P:{3,5}.
#[derive(Debug, Clone, Copy, Default)]
pub struct ValenceTable;

impl ValenceTable {
    /// Allowed valences for `e`, ascending.
    pub fn allowed(self, e: Element) -> &'static [usize] {
        match e {
            Element::C => &[4],
            Element::N => &[3],
            Element::O => &[2],
            Element::F => &[1],
            Element::S => &[2, 4, 6],
            Element::Cl => &[1],
            Element::Br => &[1],
            Element::P => &[3, 5],
        }
    }

    /// Largest allowed valence for `e`.
    pub fn max(self, e: Element) -> usize {
        *self.allowed(e).last().expect("valence sets nonempty")
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MoleculeError {
    #[error("bond ({i}, {j}) endpoint out of range for {atoms} atoms")]
    BondOutOfRange { i: usize, j: usize, atoms: usize },
    #[error("bond ({i}, {i}) is a self-loop")]
    SelfBond { i: usize },
    #[error("duplicate bond between atoms {i} and {j}")]
    DuplicateBond { i: usize, j: usize },
    #[error("bond order {order} out of range (1..=3)")]
    BadOrder { order: u8 },
}

/// An immutable molecule: heavy atoms plus undirected integer-order
/// bonds. Duplicate bonds and self-bonds are rejected at construction;
/// valence violations are representable and flagged by
/// [`check_validity`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Molecule {
    atoms: Vec<Element>,
    bonds: Vec<(usize, usize, u8)>,
}

impl Molecule {
    pub fn new(atoms: Vec<Element>, bonds: Vec<(usize, usize, u8)>) -> Result<Molecule, MoleculeError> {
        let n = atoms.len();
        let mut seen = std::collections::HashSet::new();
        for &(i, j, order) in &bonds {
            if i >= n || j >= n {
                return Err(MoleculeError::BondOutOfRange { i, j, atoms: n });
            }
            if i == j {
                return Err(MoleculeError::SelfBond { i });
            }
            if !(1..=3).contains(&order) {
                return Err(MoleculeError::BadOrder { order });
            }
            if !seen.insert((i.min(j), i.max(j))) {
                return Err(MoleculeError::DuplicateBond { i: i.min(j), j: i.max(j) });
            }
        }
        Ok(Molecule { atoms, bonds })
    }

    pub fn atoms(&self) -> &[Element] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[(usize, usize, u8)] {
        &self.bonds
    }

    pub fn num_atoms(&self) -> usize {
        self.atoms.len()
    }

    /// Sum of bond orders at atom `i`.
    pub fn bond_order_sum(&self, i: usize) -> usize {
        self.bonds
            .iter()
            .filter(|&&(a, b, _)| a == i || b == i)
            .map(|&(_, _, o)| o as usize)
            .sum()
    }

    /// Neighbors of atom `i` as `(other, order)`.
    pub fn neighbors(&self, i: usize) -> Vec<(usize, u8)> {
        self.bonds
            .iter()
            .filter_map(|&(a, b, o)| {
                if a == i {
                    Some((b, o))
                } else if b == i {
                    Some((a, o))
                } else {
                    None
                }
            })
            .collect()
    }

    /// Implicit hydrogens per atom: the smallest allowed valence that
    /// covers the bond order sum, minus that sum. Atoms exceeding every
    /// allowed valence get 0 (and fail validity).
    pub fn implicit_hydrogens(&self) -> Vec<usize> {
        self.atoms
            .iter()
            .enumerate()
            .map(|(i, &e)| {
                let used = self.bond_order_sum(i);
                ValenceTable
                    .allowed(e)
                    .iter()
                    .find(|&&v| v >= used)
                    .map_or(0, |&v| v - used)
            })
            .collect()
    }

    /// Number of connected components (0 for an empty molecule).
    pub fn component_count(&self) -> usize {
        let n = self.atoms.len();
        let mut comp = vec![usize::MAX; n];
        let mut count = 0;
        for start in 0..n {
            if comp[start] != usize::MAX {
                continue;
            }
            let mut stack = vec![start];
            comp[start] = count;
            while let Some(i) = stack.pop() {
                for (j, _) in self.neighbors(i) {
                    if comp[j] == usize::MAX {
                        comp[j] = count;
                        stack.push(j);
                    }
                }
            }
            count += 1;
        }
        count
    }

    pub fn is_connected(&self) -> bool {
        self.component_count() == 1
    }

    /// Independent cycle count `E - N + 1` of a connected molecule.
    pub fn ring_count(&self) -> usize {
        (self.bonds.len() + 1).saturating_sub(self.atoms.len())
    }

    /// Molecular weight including implicit hydrogens.
    pub fn molecular_weight(&self) -> f64 {
        let heavy: f64 = self.atoms.iter().map(|e| e.mass()).sum();
        let h: usize = self.implicit_hydrogens().iter().sum();
        heavy + h as f64 * HYDROGEN_MASS
    }
}

/// One atom exceeding its element's largest allowed valence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValenceViolation {
    pub atom: usize,
    /// Bond order sum beyond the largest allowed valence.
    pub excess: usize,
}

/// Validity judgment: valence violations, connectivity, nonemptiness.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidityReport {
    pub valid: bool,
    pub violations: Vec<ValenceViolation>,
    pub connected: bool,
}

/// Judges a molecule valid iff no atom exceeds its largest allowed
/// valence, the molecule is connected, and it has at least one atom.
pub fn check_validity(mol: &Molecule) -> ValidityReport {
    let mut violations = Vec::new();
    for (i, &e) in mol.atoms().iter().enumerate() {
        let used = mol.bond_order_sum(i);
        let max = ValenceTable.max(e);
        if used > max {
            violations.push(ValenceViolation { atom: i, excess: used - max });
        }
    }
    let connected = mol.is_connected();
    ValidityReport {
        valid: violations.is_empty() && connected && mol.num_atoms() > 0,
        violations,
        connected,
    }
}

/// Names of the [`descriptors`] entries, in order.
pub const DESCRIPTOR_NAMES: [&str; 14] = [
    "heavy_atoms",
    "count_C",
    "count_N",
    "count_O",
    "count_F",
    "count_S",
    "count_Cl",
    "count_Br",
    "count_P",
    "single_bonds",
    "double_bonds",
    "triple_bonds",
    "rings",
    "molecular_weight",
];

/// Fixed-order descriptor vector of a valid molecule: heavy-atom count,
/// per-element counts, bond-order counts, ring count, molecular weight.
///
/// Panics on an invalid molecule.
pub fn descriptors(mol: &Molecule) -> Vec<f64> {
    assert!(check_validity(mol).valid, "descriptors of an invalid molecule");
    let mut v = Vec::with_capacity(DESCRIPTOR_NAMES.len());
    v.push(mol.num_atoms() as f64);
    for e in Element::ALL {
        v.push(mol.atoms().iter().filter(|&&a| a == e).count() as f64);
    }
    for order in 1..=3u8 {
        v.push(mol.bonds().iter().filter(|&&(_, _, o)| o == order).count() as f64);
    }
    v.push(mol.ring_count() as f64);
    v.push(mol.molecular_weight());
    v
}
