//! Canonical atom ordering and isomorphism-invariant keys.
//!
//! Color refinement (1-WL over element plus bond-order neighborhood
//! multisets) runs until stable; ties are broken by individualizing
//! each member of the first ambiguous cell and keeping the branch with
//! the lexicographically smallest encoding. The winning encoding is the
//! key, the winning coloring is the atom order used by the SMILES
//! writer.

use super::Molecule;

/// Canonical rank of every atom: `rank[i]` is atom `i`'s position in
/// the canonical order. Isomorphic molecules rank corresponding atoms
/// identically.
pub fn canonical_order(mol: &Molecule) -> Vec<usize> {
    canonicalize(mol).1
}

/// Isomorphism-invariant key: the canonical adjacency encoding. Two
/// molecules in the supported class get equal keys iff isomorphic.
pub fn canonical_key(mol: &Molecule) -> String {
    canonicalize(mol).0
}

fn canonicalize(mol: &Molecule) -> (String, Vec<usize>) {
    let n = mol.num_atoms();
    if n == 0 {
        return (String::new(), Vec::new());
    }
    // Initial colors: element identity.
    let elements: Vec<usize> = mol
        .atoms()
        .iter()
        .map(|&e| super::Element::ALL.iter().position(|&x| x == e).expect("supported element"))
        .collect();
    let mut colors = elements.clone();
    relabel_dense(&mut colors);
    search(mol, &elements, colors)
}

/// One refinement-plus-branching pass; returns the minimal encoding and
/// its coloring.
fn search(mol: &Molecule, elements: &[usize], mut colors: Vec<usize>) -> (String, Vec<usize>) {
    refine(mol, elements, &mut colors);
    match first_ambiguous_cell(&colors) {
        None => (encode(mol, &colors), colors),
        Some(cell_color) => {
            let mut best: Option<(String, Vec<usize>)> = None;
            for a in 0..colors.len() {
                if colors[a] != cell_color {
                    continue;
                }
                let candidate = search(mol, elements, individualize(&colors, a));
                if best.as_ref().map_or(true, |(enc, _)| candidate.0 < *enc) {
                    best = Some(candidate);
                }
            }
            best.expect("ambiguous cell has members")
        }
    }
}

/// Refines colors by neighborhood signatures until the partition stops
/// splitting. Splitting is monotone, so this equals running atom-count
/// rounds.
fn refine(mol: &Molecule, elements: &[usize], colors: &mut Vec<usize>) {
    let n = mol.num_atoms();
    loop {
        let sigs: Vec<(usize, usize, Vec<(u8, usize)>)> = (0..n)
            .map(|i| {
                let mut nbrs: Vec<(u8, usize)> =
                    mol.neighbors(i).into_iter().map(|(j, o)| (o, colors[j])).collect();
                nbrs.sort_unstable();
                (colors[i], elements[i], nbrs)
            })
            .collect();
        let mut next: Vec<usize> = {
            let mut sorted: Vec<&(usize, usize, Vec<(u8, usize)>)> = sigs.iter().collect();
            sorted.sort();
            sorted.dedup();
            sigs.iter()
                .map(|s| sorted.binary_search(&s).expect("own signature present"))
                .collect()
        };
        let stable = next == *colors;
        std::mem::swap(colors, &mut next);
        if stable {
            return;
        }
    }
}

/// Smallest color shared by more than one atom, if any.
fn first_ambiguous_cell(colors: &[usize]) -> Option<usize> {
    let mut counts = vec![0usize; colors.len()];
    for &c in colors {
        counts[c] += 1;
    }
    counts.iter().position(|&c| c > 1)
}

/// Splits atom `a` out of its cell, ordering it first.
fn individualize(colors: &[usize], a: usize) -> Vec<usize> {
    let mut out: Vec<usize> = colors
        .iter()
        .enumerate()
        .map(|(i, &c)| 2 * c + usize::from(i != a))
        .collect();
    relabel_dense(&mut out);
    out
}

/// Maps color values onto 0..k preserving order.
fn relabel_dense(colors: &mut [usize]) {
    let mut sorted: Vec<usize> = colors.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    for c in colors.iter_mut() {
        *c = sorted.binary_search(c).expect("own color present");
    }
}

/// Adjacency encoding under a discrete coloring: elements in canonical
/// position order, then sorted `(position, position, order)` bonds.
fn encode(mol: &Molecule, rank: &[usize]) -> String {
    let n = mol.num_atoms();
    let mut symbols = vec![""; n];
    for (i, &r) in rank.iter().enumerate() {
        symbols[r] = mol.atoms()[i].symbol();
    }
    let mut edges: Vec<(usize, usize, u8)> = mol
        .bonds()
        .iter()
        .map(|&(i, j, o)| (rank[i].min(rank[j]), rank[i].max(rank[j]), o))
        .collect();
    edges.sort_unstable();
    let edge_text: Vec<String> =
        edges.iter().map(|(a, b, o)| format!("{a}-{b}:{o}")).collect();
    format!("{}|{}", symbols.join(","), edge_text.join(";"))
}
