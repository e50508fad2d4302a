//! Attributed graphs with categorical node and edge features.
//!
//! Undirected edges are stored as two directed entries at adjacent
//! positions `2p` and `2p+1` with duplicated features, so message
//! passing iterates plain directed edges and masking hits both
//! directions atomically. Batches are disjoint unions with node index
//! offsets.

mod io;
mod synth;

pub use io::{load_dataset, read_dataset, save_dataset, write_dataset, DatasetError};
pub use synth::{synth_dataset, SynthKind};

use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("node index {index} out of range for {num_nodes} nodes")]
    NodeIndexOutOfRange { index: usize, num_nodes: usize },
    #[error("self-loop at node {node}")]
    SelfLoop { node: usize },
    #[error("duplicate undirected edge ({i}, {j})")]
    DuplicateEdge { i: usize, j: usize },
    #[error("category index {index} out of range for {size} categories")]
    CategoryOutOfRange { index: usize, size: usize },
    #[error("{count} nodes but {rows} node feature rows")]
    NodeFeatureMismatch { count: usize, rows: usize },
    #[error("{count} edges but {rows} edge feature rows")]
    EdgeFeatureMismatch { count: usize, rows: usize },
    #[error("directed entry ({i}, {j}) has no reverse with identical features")]
    MissingReverse { i: usize, j: usize },
    #[error("feature row {row} is not one-hot")]
    NotOneHot { row: usize },
    #[error("edge categories must contain exactly one {name:?} entry, found {count}")]
    SpecialCategory { name: &'static str, count: usize },
    #[error("duplicate category name {name:?}")]
    DuplicateCategory { name: String },
}

/// A row of zeros with a single 1 at `index`.
pub fn encode_one_hot(index: usize, size: usize) -> Result<Vec<f64>, GraphError> {
    if index >= size {
        return Err(GraphError::CategoryOutOfRange { index, size });
    }
    let mut row = vec![0.0; size];
    row[index] = 1.0;
    Ok(row)
}

/// Index of the 1 in a one-hot row (argmax, lowest index on ties).
pub fn decode_one_hot(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn is_one_hot(row: &[f64]) -> bool {
    let ones = row.iter().filter(|&&v| v == 1.0).count();
    let zeros = row.iter().filter(|&&v| v == 0.0).count();
    ones == 1 && ones + zeros == row.len()
}

fn is_zero_row(row: &[f64]) -> bool {
    row.iter().all(|&v| v == 0.0)
}

/// Ordered category names for nodes and edges.
///
/// The edge list always carries one `no_bond` and one `masked` entry;
/// corruption labels pseudo-edges with them and decoding strips them
/// back out.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureCodec {
    pub node_categories: Vec<String>,
    pub edge_categories: Vec<String>,
}

impl FeatureCodec {
    pub const NO_BOND: &'static str = "no_bond";
    pub const MASKED: &'static str = "masked";

    pub fn new(node_categories: Vec<String>, edge_categories: Vec<String>) -> Self {
        FeatureCodec { node_categories, edge_categories }
    }

    /// The codec for the molecule dialect: 8 heavy-atom elements and
    /// bond orders plus the two special edge categories.
    pub fn molecule() -> Self {
        FeatureCodec {
            node_categories: ["C", "N", "O", "F", "S", "Cl", "Br", "P"]
                .iter()
                .map(ToString::to_string)
                .collect(),
            edge_categories: ["single", "double", "triple", Self::NO_BOND, Self::MASKED]
                .iter()
                .map(ToString::to_string)
                .collect(),
        }
    }

    pub fn num_node_categories(&self) -> usize {
        self.node_categories.len()
    }

    pub fn num_edge_categories(&self) -> usize {
        self.edge_categories.len()
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.node_categories.iter().position(|c| c == name)
    }

    pub fn edge_index(&self, name: &str) -> Option<usize> {
        self.edge_categories.iter().position(|c| c == name)
    }

    /// Position of the `no_bond` edge category.
    pub fn no_bond_index(&self) -> Option<usize> {
        self.edge_index(Self::NO_BOND)
    }

    /// Position of the `masked` edge category.
    pub fn masked_index(&self) -> Option<usize> {
        self.edge_index(Self::MASKED)
    }

    /// Checks the codec invariants: unique names, exactly one `no_bond`
    /// and one `masked` edge category.
    pub fn validate(&self) -> Result<(), GraphError> {
        for cats in [&self.node_categories, &self.edge_categories] {
            let mut seen = std::collections::HashSet::new();
            for name in cats {
                if !seen.insert(name) {
                    return Err(GraphError::DuplicateCategory { name: name.clone() });
                }
            }
        }
        for name in [Self::NO_BOND, Self::MASKED] {
            let count = self.edge_categories.iter().filter(|c| *c == name).count();
            if count != 1 {
                return Err(GraphError::SpecialCategory { name, count });
            }
        }
        Ok(())
    }
}

/// An attributed graph.
///
/// `edges` holds directed entries; entry `2p+1` is always the reverse
/// of entry `2p` and shares its feature row.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    node_features: Tensor,
    edge_features: Tensor,
    label: Option<usize>,
}

impl Graph {
    /// Builds a validated graph from category indices. Each undirected
    /// edge `(i, j, category)` expands to the directed pair
    /// `(i,j),(j,i)` with a shared one-hot feature row.
    pub fn from_categories(
        codec: &FeatureCodec,
        node_cats: &[usize],
        undirected: &[(usize, usize, usize)],
        label: Option<usize>,
    ) -> Result<Graph, GraphError> {
        let n = node_cats.len();
        let d_n = codec.num_node_categories();
        let d_e = codec.num_edge_categories();

        let mut x = Vec::with_capacity(n * d_n);
        for &c in node_cats {
            x.extend(encode_one_hot(c, d_n)?);
        }

        let mut seen = std::collections::HashSet::new();
        let mut edges = Vec::with_capacity(undirected.len() * 2);
        let mut e = Vec::with_capacity(undirected.len() * 2 * d_e);
        for &(i, j, c) in undirected {
            for endpoint in [i, j] {
                if endpoint >= n {
                    return Err(GraphError::NodeIndexOutOfRange { index: endpoint, num_nodes: n });
                }
            }
            if i == j {
                return Err(GraphError::SelfLoop { node: i });
            }
            if !seen.insert((i.min(j), i.max(j))) {
                return Err(GraphError::DuplicateEdge { i: i.min(j), j: i.max(j) });
            }
            let row = encode_one_hot(c, d_e)?;
            edges.push((i, j));
            edges.push((j, i));
            e.extend_from_slice(&row);
            e.extend_from_slice(&row);
        }

        Ok(Graph {
            num_nodes: n,
            edges,
            node_features: Tensor::matrix(n, d_n, x),
            edge_features: Tensor::matrix(undirected.len() * 2, d_e, e),
            label,
        })
    }

    /// Assembles a graph from already-built pieces. Checks only basic
    /// consistency (counts, bounds, paired reverses); feature rows may
    /// be arbitrary, which is what masked graphs need.
    pub fn from_parts(
        num_nodes: usize,
        edges: Vec<(usize, usize)>,
        node_features: Tensor,
        edge_features: Tensor,
        label: Option<usize>,
    ) -> Graph {
        assert_eq!(
            node_features.rows(),
            num_nodes,
            "{} nodes but {} feature rows",
            num_nodes,
            node_features.rows()
        );
        assert_eq!(
            edge_features.rows(),
            edges.len(),
            "{} directed edges but {} feature rows",
            edges.len(),
            edge_features.rows()
        );
        assert!(edges.len() % 2 == 0, "directed entries must come in reverse pairs");
        for p in 0..edges.len() / 2 {
            let (i, j) = edges[2 * p];
            let (rj, ri) = edges[2 * p + 1];
            assert!(
                i == ri && j == rj,
                "entry {} is ({rj}, {ri}), expected reverse of ({i}, {j})",
                2 * p + 1
            );
            assert!(i < num_nodes && j < num_nodes, "edge ({i}, {j}) out of range");
        }
        Graph { num_nodes, edges, node_features, edge_features, label }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Directed edge entries, reverse pairs adjacent.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Count of directed entries (twice the undirected edge count).
    pub fn num_edge_entries(&self) -> usize {
        self.edges.len()
    }

    pub fn num_undirected_edges(&self) -> usize {
        self.edges.len() / 2
    }

    pub fn node_features(&self) -> &Tensor {
        &self.node_features
    }

    pub fn edge_features(&self) -> &Tensor {
        &self.edge_features
    }

    pub fn label(&self) -> Option<usize> {
        self.label
    }

    pub fn with_label(mut self, label: Option<usize>) -> Graph {
        self.label = label;
        self
    }

    /// Category of node `i` (feature row argmax).
    pub fn node_category(&self, i: usize) -> usize {
        decode_one_hot(self.node_features.row(i))
    }

    /// Category of directed entry `m` (feature row argmax).
    pub fn edge_category(&self, m: usize) -> usize {
        decode_one_hot(self.edge_features.row(m))
    }

    /// Undirected edge `p` as `(i, j, category)` with `i < j`.
    pub fn undirected_edge(&self, p: usize) -> (usize, usize, usize) {
        let (a, b) = self.edges[2 * p];
        (a.min(b), a.max(b), self.edge_category(2 * p))
    }

    /// Relabels nodes: node `i` becomes `perm[i]`. Edge order and node
    /// feature rows follow the relabeling.
    pub fn permute(&self, perm: &[usize]) -> Graph {
        assert_eq!(perm.len(), self.num_nodes, "permutation length mismatch");
        let mut seen = vec![false; self.num_nodes];
        for &p in perm {
            assert!(p < self.num_nodes && !seen[p], "not a permutation: {perm:?}");
            seen[p] = true;
        }
        let d_n = self.node_features.cols();
        let mut x = vec![0.0; self.num_nodes * d_n];
        for i in 0..self.num_nodes {
            x[perm[i] * d_n..(perm[i] + 1) * d_n].copy_from_slice(self.node_features.row(i));
        }
        let edges = self.edges.iter().map(|&(i, j)| (perm[i], perm[j])).collect();
        Graph {
            num_nodes: self.num_nodes,
            edges,
            node_features: Tensor::matrix(self.num_nodes, d_n, x),
            edge_features: self.edge_features.clone(),
            label: self.label,
        }
    }

    /// Checks the graph invariants. With `allow_masked`, node rows may
    /// be all-zero and edge rows may select any single category; without
    /// it every row must be one-hot.
    pub fn validate(&self, codec: &FeatureCodec, allow_masked: bool) -> Result<(), GraphError> {
        if self.node_features.rows() != self.num_nodes {
            return Err(GraphError::NodeFeatureMismatch {
                count: self.num_nodes,
                rows: self.node_features.rows(),
            });
        }
        if self.node_features.cols() != codec.num_node_categories()
            || self.edge_features.cols() != codec.num_edge_categories()
        {
            return Err(GraphError::CategoryOutOfRange {
                index: self.node_features.cols().max(self.edge_features.cols()),
                size: codec.num_node_categories().max(codec.num_edge_categories()),
            });
        }
        if self.edge_features.rows() != self.edges.len() {
            return Err(GraphError::EdgeFeatureMismatch {
                count: self.edges.len(),
                rows: self.edge_features.rows(),
            });
        }
        for (m, &(i, j)) in self.edges.iter().enumerate() {
            if i >= self.num_nodes || j >= self.num_nodes {
                return Err(GraphError::NodeIndexOutOfRange {
                    index: i.max(j),
                    num_nodes: self.num_nodes,
                });
            }
            if i == j {
                return Err(GraphError::SelfLoop { node: i });
            }
            // Reverse entry with identical features must exist.
            let reverse = self
                .edges
                .iter()
                .enumerate()
                .find(|&(r, &(a, b))| a == j && b == i && self.edge_features.row(r) == self.edge_features.row(m));
            if reverse.is_none() {
                return Err(GraphError::MissingReverse { i, j });
            }
        }
        for r in 0..self.num_nodes {
            let row = self.node_features.row(r);
            let ok = is_one_hot(row) || (allow_masked && is_zero_row(row));
            if !ok {
                return Err(GraphError::NotOneHot { row: r });
            }
        }
        for m in 0..self.edges.len() {
            if !is_one_hot(self.edge_features.row(m)) {
                return Err(GraphError::NotOneHot { row: m });
            }
        }
        Ok(())
    }
}

/// Disjoint union of graphs for one forward pass.
#[derive(Debug, Clone)]
pub struct Batch {
    merged: Graph,
    node_offsets: Vec<usize>,
    edge_offsets: Vec<usize>,
    graph_of_node: Vec<usize>,
    labels: Vec<Option<usize>>,
}

/// Merges graphs into one disjoint union, offsetting node indices.
///
/// Panics on an empty list or on graphs with differing feature widths.
pub fn batch_graphs<'a, I>(graphs: I) -> Batch
where
    I: IntoIterator<Item = &'a Graph>,
{
    let graphs: Vec<&Graph> = graphs.into_iter().collect();
    assert!(!graphs.is_empty(), "batch_graphs needs at least one graph");

    let mut node_offsets = vec![0];
    let mut edge_offsets = vec![0];
    let mut graph_of_node = Vec::new();
    let mut edges = Vec::new();
    let mut labels = Vec::new();
    for (g, graph) in graphs.iter().enumerate() {
        let base = *node_offsets.last().expect("offsets nonempty");
        for &(i, j) in graph.edges() {
            edges.push((i + base, j + base));
        }
        graph_of_node.extend(std::iter::repeat(g).take(graph.num_nodes()));
        node_offsets.push(base + graph.num_nodes());
        edge_offsets.push(edge_offsets.last().expect("offsets nonempty") + graph.num_edge_entries());
        labels.push(graph.label());
    }

    let node_features =
        Tensor::vstack(&graphs.iter().map(|g| g.node_features()).collect::<Vec<_>>());
    let edge_features =
        Tensor::vstack(&graphs.iter().map(|g| g.edge_features()).collect::<Vec<_>>());
    let num_nodes = *node_offsets.last().expect("offsets nonempty");

    Batch {
        merged: Graph::from_parts(num_nodes, edges, node_features, edge_features, None),
        node_offsets,
        edge_offsets,
        graph_of_node,
        labels,
    }
}

/// Splits a batch back into its constituent graphs.
pub fn unbatch(batch: &Batch) -> Vec<Graph> {
    (0..batch.num_graphs())
        .map(|g| {
            let (ns, ne) = batch.node_range(g);
            let (es, ee) = batch.edge_range(g);
            let edges = batch.merged.edges()[es..ee]
                .iter()
                .map(|&(i, j)| (i - ns, j - ns))
                .collect();
            Graph::from_parts(
                ne - ns,
                edges,
                batch.slice_rows(batch.merged.node_features(), ns, ne),
                batch.slice_rows(batch.merged.edge_features(), es, ee),
                batch.labels[g],
            )
        })
        .collect()
}

impl Batch {
    pub fn num_graphs(&self) -> usize {
        self.labels.len()
    }

    /// The disjoint-union graph.
    pub fn merged(&self) -> &Graph {
        &self.merged
    }

    /// Graph id owning each merged node.
    pub fn graph_of_node(&self) -> &[usize] {
        &self.graph_of_node
    }

    /// Node index range `[start, end)` of graph `g` in the union.
    pub fn node_range(&self, g: usize) -> (usize, usize) {
        (self.node_offsets[g], self.node_offsets[g + 1])
    }

    /// Directed-edge index range `[start, end)` of graph `g`.
    pub fn edge_range(&self, g: usize) -> (usize, usize) {
        (self.edge_offsets[g], self.edge_offsets[g + 1])
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    fn slice_rows(&self, t: &Tensor, start: usize, end: usize) -> Tensor {
        let c = t.cols();
        Tensor::matrix(end - start, c, t.data()[start * c..end * c].to_vec())
    }

    /// Splits per-node rows of `t` back into per-graph tensors.
    pub fn split_node_rows(&self, t: &Tensor) -> Vec<Tensor> {
        assert_eq!(t.rows(), self.merged.num_nodes(), "row count is not the batch node count");
        (0..self.num_graphs())
            .map(|g| {
                let (s, e) = self.node_range(g);
                self.slice_rows(t, s, e)
            })
            .collect()
    }

    /// Splits per-edge rows of `t` back into per-graph tensors.
    pub fn split_edge_rows(&self, t: &Tensor) -> Vec<Tensor> {
        assert_eq!(t.rows(), self.merged.num_edge_entries(), "row count is not the batch edge count");
        (0..self.num_graphs())
            .map(|g| {
                let (s, e) = self.edge_range(g);
                self.slice_rows(t, s, e)
            })
            .collect()
    }
}
