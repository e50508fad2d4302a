//! n-shot generation: corrupt a seed molecule, reconstruct it, and feed
//! the decoded result back in, n times. A distribution-metric suite
//! (validity, uniqueness, novelty, KL score) lives in [`metrics`].
//!
//! Every shot draws from its own derived stream, so generation over a
//! molecule list is order-independent and safely parallel.

mod metrics;

pub use metrics::{
    evaluate, metric_kl_score, metric_novelty, metric_uniqueness, metric_validity, MetricCounts,
    MetricsError, MetricsReport,
};

use serde::{Deserialize, Serialize};

use crate::graph::{batch_graphs, FeatureCodec, Graph};
use crate::masking::{corrupt, MaskPlan, MaskSettings};
use crate::model::GceModel;
use crate::molecule::{
    check_validity, graph_to_molecule, molecule_to_graph, write_smiles, ConvertError, Molecule,
};
use crate::rng::{derive, tag};
use crate::tensor::{Tape, Tensor};

/// How to run n-shot generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    /// Mask-and-reconstruct rounds per seed molecule, at least 1.
    pub shots: usize,
    /// Node and edge masking rate for every round.
    pub mask_rate: f64,
    /// Pseudo-edge budget per masked node.
    pub pseudo_per_node: usize,
    pub seed: u64,
    /// Drop invalid outputs instead of keeping them for scoring.
    pub sanitize: bool,
}

impl Default for GenerationConfig {
    fn default() -> GenerationConfig {
        GenerationConfig { shots: 1, mask_rate: 0.1, pseudo_per_node: 5, seed: 0, sanitize: false }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GenerationError {
    #[error("shot count must be at least 1")]
    NoShots,
    #[error("mask rate {0} is outside [0, 1]")]
    BadMaskRate(f64),
    #[error("seed molecule {index}: {source}")]
    Convert { index: usize, source: ConvertError },
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), GenerationError> {
        if self.shots == 0 {
            return Err(GenerationError::NoShots);
        }
        if !(0.0..=1.0).contains(&self.mask_rate) || !self.mask_rate.is_finite() {
            return Err(GenerationError::BadMaskRate(self.mask_rate));
        }
        Ok(())
    }

    fn mask_settings(&self) -> MaskSettings {
        MaskSettings {
            node_rate: self.mask_rate,
            edge_rate: self.mask_rate,
            pseudo_per_node: self.pseudo_per_node,
        }
    }
}

/// Audit trail of one seed molecule's generation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub index: usize,
    pub seed_smiles: String,
    pub shots: usize,
    /// One corruption plan per shot, in order.
    pub plans: Vec<MaskPlan>,
    /// Canonical SMILES of the final output; absent when the output
    /// graph is disconnected and has no single-molecule notation.
    pub output_smiles: Option<String>,
    pub valid: bool,
}

/// Generated molecules plus a provenance record per seed. Under
/// `sanitize`, `molecules` keeps only the valid outputs; `provenance`
/// always covers every seed.
#[derive(Debug, Clone)]
pub struct GenerationOutput {
    pub molecules: Vec<Molecule>,
    pub provenance: Vec<Provenance>,
}

/// Seed of shot `shot` (1-based) for the molecule at `index`: each
/// (molecule, shot) cell owns an independent stream.
pub fn shot_seed(seed: u64, index: usize, shot: usize) -> u64 {
    derive(seed, &[tag::GENERATE, index as u64, shot as u64])
}

fn argmax_excluding(row: &[f64], skip: Option<usize>) -> usize {
    let mut best = usize::MAX;
    let mut best_v = f64::NEG_INFINITY;
    for (c, &v) in row.iter().enumerate() {
        if Some(c) == skip {
            continue;
        }
        // Ties go to the lowest category index.
        if v > best_v {
            best = c;
            best_v = v;
        }
    }
    assert!(best != usize::MAX, "argmax over an empty category set");
    best
}

/// Snaps a reconstruction back to a categorical graph.
///
/// Node categories are per-row argmaxes of `node_recon`. Each
/// undirected pair averages its two directed `edge_recon` rows and
/// takes the argmax over concrete categories: `masked` is never a
/// decode outcome, and a `no_bond` winner deletes the pair. The result
/// is symmetric by construction and never contains `masked` features,
/// so it always converts to a molecule under a molecule codec.
pub fn decode_reconstruction(
    node_recon: &Tensor,
    edge_recon: &Tensor,
    masked: &Graph,
    codec: &FeatureCodec,
) -> Graph {
    assert_eq!(
        (node_recon.rows(), node_recon.cols()),
        (masked.num_nodes(), codec.num_node_categories()),
        "node reconstruction shape"
    );
    assert_eq!(
        (edge_recon.rows(), edge_recon.cols()),
        (masked.num_edge_entries(), codec.num_edge_categories()),
        "edge reconstruction shape"
    );

    let node_cats: Vec<usize> =
        (0..node_recon.rows()).map(|i| argmax_excluding(node_recon.row(i), None)).collect();

    let skip = codec.masked_index();
    let no_bond = codec.no_bond_index();
    let mut undirected = Vec::new();
    for p in 0..masked.num_undirected_edges() {
        let fwd = edge_recon.row(2 * p);
        let rev = edge_recon.row(2 * p + 1);
        let avg: Vec<f64> = fwd.iter().zip(rev).map(|(a, b)| (a + b) / 2.0).collect();
        let cat = argmax_excluding(&avg, skip);
        if Some(cat) == no_bond {
            continue;
        }
        let (i, j, _) = masked.undirected_edge(p);
        undirected.push((i, j, cat));
    }

    Graph::from_categories(codec, &node_cats, &undirected, masked.label())
        .expect("decoding preserves the graph invariants")
}

/// One mask-and-reconstruct round: corrupt `g` with the stream keyed by
/// `seed`, run the model on the corrupted graph, decode. Returns the
/// decoded graph and the corruption plan that produced it.
pub fn reconstruct_once(
    model: &GceModel,
    codec: &FeatureCodec,
    g: &Graph,
    settings: &MaskSettings,
    seed: u64,
) -> (Graph, MaskPlan) {
    let pair = corrupt(g, codec, settings, seed);
    let batch = batch_graphs(std::iter::once(&pair.masked));
    let mut tape = Tape::new();
    let out = model.forward(&mut tape, &batch);
    let node_recon = tape.value(out.node_recon).clone();
    let edge_recon = tape.value(out.edge_recon).clone();
    (decode_reconstruction(&node_recon, &edge_recon, &pair.masked, codec), pair.plan)
}

/// Runs n-shot generation over a list of seed molecules. Shot t's
/// decoded output is shot t+1's input; the final graph converts back to
/// a molecule. Deterministic in `config.seed` regardless of processing
/// order.
pub fn generate_nshot(
    model: &GceModel,
    codec: &FeatureCodec,
    seeds: &[Molecule],
    config: &GenerationConfig,
) -> Result<GenerationOutput, GenerationError> {
    generate_nshot_at(model, codec, seeds, config, 0)
}

/// [`generate_nshot`] over a slice of a larger seed list whose first
/// molecule sits at `first_index`. Streams are keyed by absolute index,
/// so concatenating slice outputs reproduces the full run exactly; this
/// is the parallel-worker entry point.
pub fn generate_nshot_at(
    model: &GceModel,
    codec: &FeatureCodec,
    seeds: &[Molecule],
    config: &GenerationConfig,
    first_index: usize,
) -> Result<GenerationOutput, GenerationError> {
    config.validate()?;
    let settings = config.mask_settings();

    let mut molecules = Vec::new();
    let mut provenance = Vec::with_capacity(seeds.len());
    for (offset, mol) in seeds.iter().enumerate() {
        let index = first_index + offset;
        let mut g = molecule_to_graph(mol, codec)
            .map_err(|source| GenerationError::Convert { index, source })?;
        let mut plans = Vec::with_capacity(config.shots);
        for shot in 1..=config.shots {
            let (next, plan) = reconstruct_once(model, codec, &g, &settings, shot_seed(config.seed, index, shot));
            g = next;
            plans.push(plan);
        }
        let out = graph_to_molecule(&g, codec).expect("decoded graphs always convert");
        let valid = check_validity(&out).valid;
        provenance.push(Provenance {
            index,
            seed_smiles: write_smiles(mol).expect("seed molecules are writable"),
            shots: config.shots,
            plans,
            output_smiles: write_smiles(&out).ok(),
            valid,
        });
        if valid || !config.sanitize {
            molecules.push(out);
        }
    }
    Ok(GenerationOutput { molecules, provenance })
}
