//! Molecule to graph conversion and back.
//!
//! Bonds become undirected categorical edges named by order. Going back,
//! `no_bond` edges are dropped and `masked` edges are an error: a
//! reconstruction must be decoded to concrete categories first.

use super::{Element, Molecule, MoleculeError};
use crate::graph::{FeatureCodec, Graph, GraphError};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConvertError {
    #[error("codec has no node category for element {symbol}")]
    MissingElement { symbol: &'static str },
    #[error("codec has no edge category for bond order {order}")]
    MissingOrder { order: u8 },
    #[error("edge pair {pair} is masked; decode the reconstruction before converting")]
    MaskedEdge { pair: usize },
    #[error("node {node} category {name:?} is not a supported element")]
    UnknownElement { node: usize, name: String },
    #[error("edge pair {pair} category {name:?} is not a bond order")]
    UnknownEdgeCategory { pair: usize, name: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Molecule(#[from] MoleculeError),
}

fn order_name(order: u8) -> &'static str {
    match order {
        1 => "single",
        2 => "double",
        _ => "triple",
    }
}

fn name_order(name: &str) -> Option<u8> {
    match name {
        "single" => Some(1),
        "double" => Some(2),
        "triple" => Some(3),
        _ => None,
    }
}

/// Encodes a molecule as an attributed graph (atoms as nodes, bonds as
/// undirected categorical edges, no label).
pub fn molecule_to_graph(mol: &Molecule, codec: &FeatureCodec) -> Result<Graph, ConvertError> {
    let node_cats: Vec<usize> = mol
        .atoms()
        .iter()
        .map(|e| {
            codec
                .node_index(e.symbol())
                .ok_or(ConvertError::MissingElement { symbol: e.symbol() })
        })
        .collect::<Result<_, _>>()?;
    let undirected: Vec<(usize, usize, usize)> = mol
        .bonds()
        .iter()
        .map(|&(i, j, order)| {
            codec
                .edge_index(order_name(order))
                .map(|c| (i, j, c))
                .ok_or(ConvertError::MissingOrder { order })
        })
        .collect::<Result<_, _>>()?;
    Ok(Graph::from_categories(codec, &node_cats, &undirected, None)?)
}

/// Decodes an attributed graph back into a molecule. `no_bond` edges
/// are removed; a `masked` edge is an error.
pub fn graph_to_molecule(g: &Graph, codec: &FeatureCodec) -> Result<Molecule, ConvertError> {
    let atoms: Vec<Element> = (0..g.num_nodes())
        .map(|i| {
            let name = &codec.node_categories[g.node_category(i)];
            Element::from_symbol(name).ok_or_else(|| ConvertError::UnknownElement {
                node: i,
                name: name.clone(),
            })
        })
        .collect::<Result<_, _>>()?;

    let masked = codec.masked_index();
    let no_bond = codec.no_bond_index();
    let mut bonds = Vec::with_capacity(g.num_undirected_edges());
    for p in 0..g.num_undirected_edges() {
        let (i, j, cat) = g.undirected_edge(p);
        if Some(cat) == masked {
            return Err(ConvertError::MaskedEdge { pair: p });
        }
        if Some(cat) == no_bond {
            continue;
        }
        let name = &codec.edge_categories[cat];
        let order = name_order(name).ok_or_else(|| ConvertError::UnknownEdgeCategory {
            pair: p,
            name: name.clone(),
        })?;
        bonds.push((i, j, order));
    }
    Ok(Molecule::new(atoms, bonds)?)
}
