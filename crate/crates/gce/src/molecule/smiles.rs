//! A restricted SMILES dialect.
//!
//! Grammar: element symbols from the supported set (two-letter symbols
//! `Cl`/`Br` first), bond symbols `-`, `=`, `#` (single when omitted),
//! branches in parentheses, ring-closure digits 1-9 with an optional
//! bond symbol before the digit. No aromatic lowercase, brackets,
//! charges, or stereo marks. Parse errors carry the byte offset of the
//! offending character.

use super::{canonical_order, Element, Molecule, MoleculeError};
use std::collections::HashMap;
use std::fs;
use std::path::Path;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SmilesError {
    #[error("offset {offset}: unknown symbol {found:?}")]
    UnknownSymbol { offset: usize, found: char },
    #[error("offset {offset}: bond symbol with no preceding atom")]
    BondBeforeAtom { offset: usize },
    #[error("offset {offset}: bond symbol must be followed by an atom or ring digit")]
    DanglingBond { offset: usize },
    #[error("offset {offset}: ring digit with no preceding atom")]
    RingBeforeAtom { offset: usize },
    #[error("offset {offset}: ring digit {digit} bonds an atom to itself")]
    RingSelfLoop { offset: usize, digit: u8 },
    #[error("offset {offset}: ring digit {digit} closed with conflicting bond orders {a} and {b}")]
    RingBondConflict { offset: usize, digit: u8, a: u8, b: u8 },
    #[error("unclosed ring digit {digit} opened at offset {offset}")]
    UnclosedRing { offset: usize, digit: u8 },
    #[error("offset {offset}: branch must follow an atom")]
    BranchBeforeAtom { offset: usize },
    #[error("offset {offset}: unmatched ')'")]
    UnmatchedClose { offset: usize },
    #[error("unclosed '(' opened at offset {offset}")]
    UnclosedOpen { offset: usize },
    #[error("offset {offset}: {source}")]
    Structure { offset: usize, source: MoleculeError },
    #[error("empty SMILES")]
    Empty,
}

/// Parses the restricted grammar into a molecule. Bonds appear exactly
/// as written; no normalization happens here.
pub fn parse_smiles(text: &str) -> Result<Molecule, SmilesError> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut atoms: Vec<Element> = Vec::new();
    let mut bonds: Vec<(usize, usize, u8)> = Vec::new();
    let mut prev: Option<usize> = None;
    // Branch anchors as (atom, offset of '(').
    let mut stack: Vec<(usize, usize)> = Vec::new();
    // Bond symbol waiting for its right-hand side, with its offset.
    let mut pending: Option<(u8, usize)> = None;
    // Open ring digits: digit -> (atom, bond before the digit, offset).
    let mut rings: HashMap<u8, (usize, Option<u8>, usize)> = HashMap::new();

    let push_bond = |bonds: &mut Vec<(usize, usize, u8)>,
                         i: usize,
                         j: usize,
                         order: u8,
                         offset: usize|
     -> Result<(), SmilesError> {
        let dup = bonds
            .iter()
            .any(|&(a, b, _)| (a.min(b), a.max(b)) == (i.min(j), i.max(j)));
        if dup {
            return Err(SmilesError::Structure {
                offset,
                source: MoleculeError::DuplicateBond { i: i.min(j), j: i.max(j) },
            });
        }
        bonds.push((i, j, order));
        Ok(())
    };

    let mut k = 0;
    while k < chars.len() {
        let (offset, c) = chars[k];
        match c {
            'A'..='Z' => {
                let two: Option<Element> = chars.get(k + 1).and_then(|&(_, next)| {
                    Element::from_symbol(&format!("{c}{next}"))
                });
                let (element, consumed) = match two {
                    Some(e) => (e, 2),
                    None => match Element::from_symbol(&c.to_string()) {
                        Some(e) => (e, 1),
                        None => return Err(SmilesError::UnknownSymbol { offset, found: c }),
                    },
                };
                let idx = atoms.len();
                atoms.push(element);
                if let Some(p) = prev {
                    let order = pending.take().map_or(1, |(o, _)| o);
                    push_bond(&mut bonds, p, idx, order, offset)?;
                }
                prev = Some(idx);
                k += consumed;
                continue;
            }
            '-' | '=' | '#' => {
                if prev.is_none() {
                    return Err(SmilesError::BondBeforeAtom { offset });
                }
                if let Some((_, first)) = pending {
                    return Err(SmilesError::DanglingBond { offset: first });
                }
                let order = match c {
                    '-' => 1,
                    '=' => 2,
                    _ => 3,
                };
                pending = Some((order, offset));
            }
            '1'..='9' => {
                let digit = c as u8 - b'0';
                let Some(p) = prev else {
                    return Err(SmilesError::RingBeforeAtom { offset });
                };
                match rings.remove(&digit) {
                    Some((other, opened_bond, _)) => {
                        if other == p {
                            return Err(SmilesError::RingSelfLoop { offset, digit });
                        }
                        let closing_bond = pending.take().map(|(o, _)| o);
                        let order = match (opened_bond, closing_bond) {
                            (Some(a), Some(b)) if a != b => {
                                return Err(SmilesError::RingBondConflict { offset, digit, a, b })
                            }
                            (Some(a), _) => a,
                            (None, Some(b)) => b,
                            (None, None) => 1,
                        };
                        push_bond(&mut bonds, other, p, order, offset)?;
                    }
                    None => {
                        rings.insert(digit, (p, pending.take().map(|(o, _)| o), offset));
                    }
                }
            }
            '(' => {
                let Some(p) = prev else {
                    return Err(SmilesError::BranchBeforeAtom { offset });
                };
                if let Some((_, first)) = pending {
                    return Err(SmilesError::DanglingBond { offset: first });
                }
                stack.push((p, offset));
            }
            ')' => {
                if let Some((_, first)) = pending {
                    return Err(SmilesError::DanglingBond { offset: first });
                }
                match stack.pop() {
                    Some((p, _)) => prev = Some(p),
                    None => return Err(SmilesError::UnmatchedClose { offset }),
                }
            }
            other => return Err(SmilesError::UnknownSymbol { offset, found: other }),
        }
        k += 1;
    }

    if let Some((_, offset)) = pending {
        return Err(SmilesError::DanglingBond { offset });
    }
    if let Some(&(_, offset)) = stack.last() {
        return Err(SmilesError::UnclosedOpen { offset });
    }
    if let Some((&digit, &(_, _, offset))) = rings.iter().min_by_key(|&(&d, _)| d) {
        return Err(SmilesError::UnclosedRing { offset, digit });
    }
    if atoms.is_empty() {
        return Err(SmilesError::Empty);
    }

    Molecule::new(atoms, bonds).map_err(|source| SmilesError::Structure { offset: 0, source })
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum WriteError {
    #[error("molecule has {components} components; the writer emits exactly one")]
    Disconnected { components: usize },
    #[error("more than 9 rings open at once")]
    TooManyRings,
    #[error("cannot write an empty molecule")]
    Empty,
}

/// Writes canonical SMILES: atoms ordered by canonical rank, depth-first
/// from the lowest rank, branches and ring digits emitted in rank order.
/// Two isomorphic molecules always produce the same string.
pub fn write_smiles(mol: &Molecule) -> Result<String, WriteError> {
    if mol.num_atoms() == 0 {
        return Err(WriteError::Empty);
    }
    let components = mol.component_count();
    if components != 1 {
        return Err(WriteError::Disconnected { components });
    }

    let rank = canonical_order(mol);
    let n = mol.num_atoms();
    let root = (0..n).find(|&i| rank[i] == 0).expect("rank 0 exists");

    // Classification pass: tree children in rank order, back edges
    // recorded at their later-visited endpoint.
    let mut pre = vec![usize::MAX; n];
    let mut children: Vec<Vec<(usize, u8)>> = vec![Vec::new(); n];
    let mut back_edges: Vec<(usize, usize, u8)> = Vec::new(); // (earlier, later, order)
    let mut classified: std::collections::HashSet<(usize, usize)> = std::collections::HashSet::new();
    let mut counter = 0;
    classify(mol, root, &rank, &mut pre, &mut counter, &mut children, &mut back_edges, &mut classified);

    // Emission pass, preorder identical to classification.
    let mut out = String::new();
    let mut digit_of: HashMap<(usize, usize), u8> = HashMap::new();
    let mut free_digits: Vec<u8> = (1..=9).rev().collect(); // pop() yields 1 first
    emit(
        mol,
        root,
        &children,
        &back_edges,
        &pre,
        &mut digit_of,
        &mut free_digits,
        &mut out,
    )?;
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn classify(
    mol: &Molecule,
    i: usize,
    rank: &[usize],
    pre: &mut [usize],
    counter: &mut usize,
    children: &mut [Vec<(usize, u8)>],
    back_edges: &mut Vec<(usize, usize, u8)>,
    classified: &mut std::collections::HashSet<(usize, usize)>,
) {
    pre[i] = *counter;
    *counter += 1;
    let mut nbrs = mol.neighbors(i);
    nbrs.sort_by_key(|&(j, _)| rank[j]);
    for (j, order) in nbrs {
        if !classified.insert((i.min(j), i.max(j))) {
            continue;
        }
        if pre[j] == usize::MAX {
            children[i].push((j, order));
            classify(mol, j, rank, pre, counter, children, back_edges, classified);
        } else {
            back_edges.push((j, i, order));
        }
    }
}

fn bond_symbol(order: u8) -> &'static str {
    match order {
        1 => "",
        2 => "=",
        _ => "#",
    }
}

#[allow(clippy::too_many_arguments)]
fn emit(
    mol: &Molecule,
    i: usize,
    children: &[Vec<(usize, u8)>],
    back_edges: &[(usize, usize, u8)],
    pre: &[usize],
    digit_of: &mut HashMap<(usize, usize), u8>,
    free_digits: &mut Vec<u8>,
    out: &mut String,
) -> Result<(), WriteError> {
    out.push_str(mol.atoms()[i].symbol());

    // Closings first (freeing digits), then openings.
    let mut closings: Vec<&(usize, usize, u8)> =
        back_edges.iter().filter(|&&(_, later, _)| later == i).collect();
    closings.sort_by_key(|&&(earlier, _, _)| pre[earlier]);
    for &&(earlier, later, order) in &closings {
        let digit = digit_of
            .remove(&(earlier, later))
            .expect("closing digit was opened at the earlier endpoint");
        out.push_str(bond_symbol(order));
        out.push((b'0' + digit) as char);
        free_digits.push(digit);
    }

    let mut openings: Vec<&(usize, usize, u8)> =
        back_edges.iter().filter(|&&(earlier, _, _)| earlier == i).collect();
    openings.sort_by_key(|&&(_, later, _)| pre[later]);
    for &&(earlier, later, _) in &openings {
        let digit = free_digits.pop().ok_or(WriteError::TooManyRings)?;
        digit_of.insert((earlier, later), digit);
        out.push((b'0' + digit) as char);
    }

    for (pos, &(child, order)) in children[i].iter().enumerate() {
        let last = pos + 1 == children[i].len();
        if !last {
            out.push('(');
        }
        out.push_str(bond_symbol(order));
        emit(mol, child, children, back_edges, pre, digit_of, free_digits, out)?;
        if !last {
            out.push(')');
        }
    }
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum SmilesFileError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse { line: usize, source: SmilesError },
}

/// Loads a SMILES file: one molecule per line, `#` starts a comment,
/// blank lines ignored. Errors carry the 1-based line number.
pub fn load_smiles_file(path: &Path) -> Result<Vec<Molecule>, SmilesFileError> {
    parse_smiles_lines(&fs::read_to_string(path)?)
}

/// Same as [`load_smiles_file`] for in-memory text.
pub fn parse_smiles_lines(text: &str) -> Result<Vec<Molecule>, SmilesFileError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mol = parse_smiles(line)
            .map_err(|source| SmilesFileError::Parse { line: idx + 1, source })?;
        out.push(mol);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molecule::check_validity;

    fn bonds_of(s: &str) -> Vec<(usize, usize, u8)> {
        parse_smiles(s).expect("parses").bonds().to_vec()
    }

    #[test]
    fn linear_chain() {
        let m = parse_smiles("CCO").unwrap();
        assert_eq!(m.atoms(), &[Element::C, Element::C, Element::O]);
        assert_eq!(m.bonds(), &[(0, 1, 1), (1, 2, 1)]);
    }

    #[test]
    fn ring_closure_forms_triangle() {
        let m = parse_smiles("C1CC1").unwrap();
        assert_eq!(m.num_atoms(), 3);
        let mut canon: Vec<_> = m
            .bonds()
            .iter()
            .map(|&(i, j, o)| (i.min(j), i.max(j), o))
            .collect();
        canon.sort_unstable();
        assert_eq!(canon, vec![(0, 1, 1), (0, 2, 1), (1, 2, 1)]);
    }

    #[test]
    fn double_bonds() {
        assert_eq!(bonds_of("O=C=O"), vec![(0, 1, 2), (1, 2, 2)]);
        assert_eq!(bonds_of("C#N"), vec![(0, 1, 3)]);
        assert_eq!(bonds_of("C-C"), vec![(0, 1, 1)]);
    }

    #[test]
    fn two_letter_elements() {
        let m = parse_smiles("ClCBr").unwrap();
        assert_eq!(m.atoms(), &[Element::Cl, Element::C, Element::Br]);
    }

    #[test]
    fn branches_attach_to_anchor() {
        let m = parse_smiles("CC(=O)O").unwrap();
        assert_eq!(m.atoms(), &[Element::C, Element::C, Element::O, Element::O]);
        assert_eq!(m.bonds(), &[(0, 1, 1), (1, 2, 2), (1, 3, 1)]);
    }

    #[test]
    fn nested_branches() {
        let m = parse_smiles("CC(C(C)C)C").unwrap();
        assert_eq!(m.num_atoms(), 6);
        assert_eq!(m.bonds(), &[(0, 1, 1), (1, 2, 1), (2, 3, 1), (2, 4, 1), (1, 5, 1)]);
    }

    #[test]
    fn ring_bond_order_on_either_side() {
        assert_eq!(bonds_of("C=1CCC=1"), bonds_of("C1CCC=1"));
        assert_eq!(bonds_of("C=1CCC1"), bonds_of("C1CCC=1"));
    }

    #[test]
    fn kekulized_benzene_is_valid() {
        let m = parse_smiles("C1=CC=CC=C1").unwrap();
        assert_eq!(m.num_atoms(), 6);
        assert!(check_validity(&m).valid);
        assert_eq!(m.implicit_hydrogens(), vec![1; 6]);
    }

    #[test]
    fn parse_errors_carry_offsets() {
        assert_eq!(
            parse_smiles("CxC"),
            Err(SmilesError::UnknownSymbol { offset: 1, found: 'x' })
        );
        assert_eq!(parse_smiles("=CC"), Err(SmilesError::BondBeforeAtom { offset: 0 }));
        assert_eq!(parse_smiles("CC="), Err(SmilesError::DanglingBond { offset: 2 }));
        assert_eq!(parse_smiles("C=)C"), Err(SmilesError::DanglingBond { offset: 1 }));
        assert_eq!(parse_smiles("C=-C"), Err(SmilesError::DanglingBond { offset: 1 }));
        assert_eq!(parse_smiles("1CC"), Err(SmilesError::RingBeforeAtom { offset: 0 }));
        assert_eq!(parse_smiles("C11"), Err(SmilesError::RingSelfLoop { offset: 2, digit: 1 }));
        assert_eq!(parse_smiles("C1CC"), Err(SmilesError::UnclosedRing { offset: 1, digit: 1 }));
        assert_eq!(parse_smiles("CC)C"), Err(SmilesError::UnmatchedClose { offset: 2 }));
        assert_eq!(parse_smiles("C(CC"), Err(SmilesError::UnclosedOpen { offset: 1 }));
        assert_eq!(parse_smiles("(CC)"), Err(SmilesError::BranchBeforeAtom { offset: 0 }));
        assert_eq!(parse_smiles(""), Err(SmilesError::Empty));
        assert_eq!(
            parse_smiles("C=1CCC#1"),
            Err(SmilesError::RingBondConflict { offset: 7, digit: 1, a: 2, b: 3 })
        );
    }

    #[test]
    fn aromatics_and_brackets_are_rejected() {
        assert!(matches!(
            parse_smiles("c1ccccc1"),
            Err(SmilesError::UnknownSymbol { offset: 0, found: 'c' })
        ));
        assert!(matches!(
            parse_smiles("[CH4]"),
            Err(SmilesError::UnknownSymbol { offset: 0, found: '[' })
        ));
    }

    #[test]
    fn duplicate_ring_bond_is_rejected() {
        // Ring digit pair would duplicate the explicit bond.
        assert!(matches!(
            parse_smiles("C12CC12"),
            Err(SmilesError::Structure { .. })
        ));
    }

    #[test]
    fn single_atom_writes_bare_symbol() {
        let m = parse_smiles("C").unwrap();
        assert_eq!(write_smiles(&m).unwrap(), "C");
        let m = parse_smiles("Cl").unwrap();
        assert_eq!(write_smiles(&m).unwrap(), "Cl");
    }

    #[test]
    fn writer_canonicalizes_spelling() {
        let a = parse_smiles("CCO").unwrap();
        let b = parse_smiles("OCC").unwrap();
        assert_eq!(write_smiles(&a).unwrap(), write_smiles(&b).unwrap());
        let text = write_smiles(&a).unwrap();
        let reparsed = parse_smiles(&text).unwrap();
        assert_eq!(write_smiles(&reparsed).unwrap(), text);
    }

    #[test]
    fn writer_round_trips_rings_and_branches() {
        for s in [
            "C1CC1",
            "C1=CC=CC=C1",
            "CC(=O)OC",
            "C1CC2CCC1CC2",
            "O=S(=O)(O)O",
            "C(F)(F)(F)C1=CC=CC=C1",
            "N#CC1CC1Br",
        ] {
            let m = parse_smiles(s).expect(s);
            let text = write_smiles(&m).expect(s);
            let reparsed = parse_smiles(&text).expect(&text);
            // Same canonical spelling again: the writer is a fixpoint.
            assert_eq!(write_smiles(&reparsed).unwrap(), text, "input {s} wrote {text}");
            assert_eq!(reparsed.num_atoms(), m.num_atoms());
            assert_eq!(reparsed.bonds().len(), m.bonds().len());
        }
    }

    #[test]
    fn writer_rejects_disconnected() {
        let m = Molecule::new(vec![Element::C, Element::C], vec![]).unwrap();
        assert_eq!(write_smiles(&m), Err(WriteError::Disconnected { components: 2 }));
        let empty = Molecule::new(vec![], vec![]).unwrap();
        assert_eq!(write_smiles(&empty), Err(WriteError::Empty));
    }

    #[test]
    fn smiles_files_skip_comments_and_blanks() {
        let text = "# corpus\nCCO\n\nC1CC1 # cyclopropane\n";
        let mols = parse_smiles_lines(text).unwrap();
        assert_eq!(mols.len(), 2);
        assert_eq!(mols[0].num_atoms(), 3);
    }

    #[test]
    fn smiles_file_errors_name_the_line() {
        let text = "CCO\nC(\n";
        let err = parse_smiles_lines(text).unwrap_err();
        assert!(matches!(err, SmilesFileError::Parse { line: 2, .. }), "got {err}");
    }
}
