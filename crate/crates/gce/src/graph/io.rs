//! Line-delimited JSON datasets.
//!
//! Line 1 is the codec header; every following non-blank line is one
//! graph with each undirected edge listed once in canonical `i < j`
//! order. The writer always emits the canonical form, so write-read
//! round trips are byte-identical.

use super::{FeatureCodec, Graph, GraphError};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("missing codec header line")]
    MissingHeader,
    #[error("line {line}: invalid JSON: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error("line {line}: {source}")]
    Graph { line: usize, source: GraphError },
    #[error("line {line}: node count {n} does not match {rows} node categories")]
    NodeCountMismatch { line: usize, n: usize, rows: usize },
    #[error("line {line}: {count} edge categories for {edges} edges")]
    EdgeCountMismatch { line: usize, count: usize, edges: usize },
    #[error("line {line}: edge ({i}, {j}) is not in canonical i<j order")]
    NonCanonicalEdge { line: usize, i: usize, j: usize },
}

#[derive(serde::Serialize, serde::Deserialize)]
struct GraphLine {
    n: usize,
    edges: Vec<(usize, usize)>,
    x: Vec<usize>,
    e: Vec<usize>,
    label: Option<usize>,
}

/// Parses a dataset from a reader. See the module docs for the format.
pub fn read_dataset<R: BufRead>(reader: R) -> Result<(Vec<Graph>, FeatureCodec), DatasetError> {
    let mut lines = reader.lines();
    let header = lines.next().ok_or(DatasetError::MissingHeader)??;
    let codec: FeatureCodec =
        serde_json::from_str(&header).map_err(|source| DatasetError::Json { line: 1, source })?;
    codec
        .validate()
        .map_err(|source| DatasetError::Graph { line: 1, source })?;

    let mut graphs = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: GraphLine = serde_json::from_str(&line)
            .map_err(|source| DatasetError::Json { line: line_no, source })?;
        if parsed.x.len() != parsed.n {
            return Err(DatasetError::NodeCountMismatch {
                line: line_no,
                n: parsed.n,
                rows: parsed.x.len(),
            });
        }
        if parsed.e.len() != parsed.edges.len() {
            return Err(DatasetError::EdgeCountMismatch {
                line: line_no,
                count: parsed.e.len(),
                edges: parsed.edges.len(),
            });
        }
        for &(i, j) in &parsed.edges {
            if i >= j {
                return Err(DatasetError::NonCanonicalEdge { line: line_no, i, j });
            }
        }
        let undirected: Vec<(usize, usize, usize)> = parsed
            .edges
            .iter()
            .zip(&parsed.e)
            .map(|(&(i, j), &c)| (i, j, c))
            .collect();
        let graph = Graph::from_categories(&codec, &parsed.x, &undirected, parsed.label)
            .map_err(|source| DatasetError::Graph { line: line_no, source })?;
        graphs.push(graph);
    }
    Ok((graphs, codec))
}

/// Writes a dataset in canonical form. Graphs must be strictly one-hot
/// (no masked rows) and are validated before anything is written.
pub fn write_dataset<W: Write>(
    mut writer: W,
    graphs: &[Graph],
    codec: &FeatureCodec,
) -> Result<(), DatasetError> {
    codec
        .validate()
        .map_err(|source| DatasetError::Graph { line: 1, source })?;
    for (idx, g) in graphs.iter().enumerate() {
        g.validate(codec, false)
            .map_err(|source| DatasetError::Graph { line: idx + 2, source })?;
    }

    let header = serde_json::to_string(codec).expect("codec serializes");
    writeln!(writer, "{header}")?;
    for g in graphs {
        let mut edges = Vec::with_capacity(g.num_undirected_edges());
        let mut e = Vec::with_capacity(g.num_undirected_edges());
        for p in 0..g.num_undirected_edges() {
            let (i, j, c) = g.undirected_edge(p);
            edges.push((i, j));
            e.push(c);
        }
        let line = GraphLine {
            n: g.num_nodes(),
            edges,
            x: (0..g.num_nodes()).map(|i| g.node_category(i)).collect(),
            e,
            label: g.label(),
        };
        writeln!(writer, "{}", serde_json::to_string(&line).expect("graph line serializes"))?;
    }
    Ok(())
}

/// Loads a dataset file.
pub fn load_dataset(path: &Path) -> Result<(Vec<Graph>, FeatureCodec), DatasetError> {
    read_dataset(BufReader::new(File::open(path)?))
}

/// Saves a dataset file in canonical form.
pub fn save_dataset(path: &Path, graphs: &[Graph], codec: &FeatureCodec) -> Result<(), DatasetError> {
    let mut writer = BufWriter::new(File::create(path)?);
    write_dataset(&mut writer, graphs, codec)?;
    writer.flush()?;
    Ok(())
}
