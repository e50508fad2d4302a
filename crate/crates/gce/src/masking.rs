//! Corruption of graphs into (ground truth, masked) training pairs.
//!
//! Node masking zeroes randomly chosen feature rows. Pseudo-edges then
//! connect each masked node to random non-neighbours: the ground truth
//! labels them `no_bond`, the masked graph labels them `masked`, so
//! both graphs keep identical adjacency shape. Edge masking finally
//! hides a fraction of the original edges. The reconstruction loss is
//! deliberately blind: it runs over every node and edge, masked or
//! not, and the model never learns which rows were corrupted.

use crate::graph::{encode_one_hot, FeatureCodec, Graph};
use crate::rng::{self, sample_indices, tag};
use crate::tensor::{Tape, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// Corruption hyperparameters. Defaults: 10% node and edge masking,
/// up to 5 pseudo-edges per masked node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSettings {
    pub node_rate: f64,
    pub edge_rate: f64,
    pub pseudo_per_node: usize,
}

impl Default for MaskSettings {
    fn default() -> MaskSettings {
        MaskSettings { node_rate: 0.1, edge_rate: 0.1, pseudo_per_node: 5 }
    }
}

/// Everything a corruption pass decided, enough to replay or audit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskPlan {
    /// Masked node indices, ascending.
    pub masked_nodes: Vec<usize>,
    /// `(masked node, partner)` pairs in insertion order.
    pub pseudo_edges: Vec<(usize, usize)>,
    /// Masked original undirected pair ids, ascending.
    pub masked_edges: Vec<usize>,
    pub rng_seed: u64,
}

/// A ground-truth/masked pair sharing node count and edge lists.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedPair {
    pub ground_truth: Graph,
    pub masked: Graph,
    pub plan: MaskPlan,
}

/// Number of nodes to mask: `max(1, round(rate * n))` for positive
/// rates, zero otherwise.
pub fn mask_count(rate: f64, n: usize) -> usize {
    assert!((0.0..=1.0).contains(&rate), "mask rate {rate} outside [0, 1]");
    if rate == 0.0 || n == 0 {
        0
    } else {
        ((rate * n as f64).round() as usize).clamp(1, n)
    }
}

/// Zeroes the feature rows of a uniform random node subset. Returns
/// the corrupted feature matrix and the ascending masked indices.
pub fn mask_nodes(g: &Graph, rate: f64, rng: &mut impl Rng) -> (Tensor, Vec<usize>) {
    let n = g.num_nodes();
    let k = mask_count(rate, n);
    let mut omega = sample_indices(rng, n, k);
    omega.sort_unstable();
    let d = g.node_features().cols();
    let mut data = g.node_features().data().to_vec();
    for &i in &omega {
        for c in 0..d {
            data[i * d + c] = 0.0;
        }
    }
    (Tensor::matrix(n, d, data), omega)
}

/// Connects each masked node to up to `l_pe` uniform random partners it
/// is not already connected to (existing or earlier pseudo-edges), with
/// `no_bond` features in the returned ground truth. Saturated nodes get
/// fewer.
pub fn add_pseudo_edges(
    g: &Graph,
    codec: &FeatureCodec,
    omega: &[usize],
    l_pe: usize,
    rng: &mut impl Rng,
) -> (Graph, Vec<(usize, usize)>) {
    let n = g.num_nodes();
    let mut connected: HashSet<(usize, usize)> = (0..g.num_undirected_edges())
        .map(|p| {
            let (a, b, _) = g.undirected_edge(p);
            (a, b)
        })
        .collect();
    let mut pseudo = Vec::new();
    for &w in omega {
        let eligible: Vec<usize> = (0..n)
            .filter(|&v| v != w && !connected.contains(&(w.min(v), w.max(v))))
            .collect();
        let picks = sample_indices(rng, eligible.len(), l_pe.min(eligible.len()));
        for pos in picks {
            let v = eligible[pos];
            connected.insert((w.min(v), w.max(v)));
            pseudo.push((w, v));
        }
    }

    let no_bond = codec.no_bond_index().expect("codec lacks a no_bond category");
    let d_e = codec.num_edge_categories();
    let mut edges = g.edges().to_vec();
    let mut e_data = g.edge_features().data().to_vec();
    let no_bond_row = encode_one_hot(no_bond, d_e).expect("no_bond fits the codec");
    for &(a, b) in &pseudo {
        edges.push((a, b));
        edges.push((b, a));
        e_data.extend_from_slice(&no_bond_row);
        e_data.extend_from_slice(&no_bond_row);
    }
    let e = Tensor::matrix(edges.len(), d_e, e_data);
    let truth = Graph::from_parts(n, edges, g.node_features().clone(), e, g.label());
    (truth, pseudo)
}

/// Produces the masked graph's edge features from the augmented ground
/// truth: every pseudo-edge (pair ids at and beyond
/// `num_original_pairs`) becomes `masked`, plus `round(rate * M)`
/// original pairs sampled without replacement. Returns the feature
/// matrix and the ascending masked original pair ids.
pub fn mask_edges(
    truth: &Graph,
    codec: &FeatureCodec,
    num_original_pairs: usize,
    edge_rate: f64,
    rng: &mut impl Rng,
) -> (Tensor, Vec<usize>) {
    assert!((0.0..=1.0).contains(&edge_rate), "edge rate {edge_rate} outside [0, 1]");
    assert!(num_original_pairs <= truth.num_undirected_edges());
    let masked_cat = codec.masked_index().expect("codec lacks a masked category");
    let d_e = codec.num_edge_categories();
    let masked_row = encode_one_hot(masked_cat, d_e).expect("masked fits the codec");

    let k = (edge_rate * num_original_pairs as f64).round() as usize;
    let mut chosen = sample_indices(rng, num_original_pairs, k);
    chosen.sort_unstable();

    let mut data = truth.edge_features().data().to_vec();
    let mut blank = |p: usize| {
        for m in [2 * p, 2 * p + 1] {
            data[m * d_e..(m + 1) * d_e].copy_from_slice(&masked_row);
        }
    };
    for &p in &chosen {
        blank(p);
    }
    for p in num_original_pairs..truth.num_undirected_edges() {
        blank(p);
    }
    (Tensor::matrix(truth.num_edge_entries(), d_e, data), chosen)
}

/// Runs the full corruption pipeline with a stream keyed by `seed`.
pub fn corrupt(g: &Graph, codec: &FeatureCodec, s: &MaskSettings, seed: u64) -> MaskedPair {
    let mut rng = rng::stream(seed, &[tag::CORRUPT]);
    let (masked_x, omega) = mask_nodes(g, s.node_rate, &mut rng);
    let (truth, pseudo) = add_pseudo_edges(g, codec, &omega, s.pseudo_per_node, &mut rng);
    let (masked_e, masked_ids) =
        mask_edges(&truth, codec, g.num_undirected_edges(), s.edge_rate, &mut rng);
    let masked =
        Graph::from_parts(truth.num_nodes(), truth.edges().to_vec(), masked_x, masked_e, g.label());
    MaskedPair {
        ground_truth: truth,
        masked,
        plan: MaskPlan {
            masked_nodes: omega,
            pseudo_edges: pseudo,
            masked_edges: masked_ids,
            rng_seed: seed,
        },
    }
}

fn mean_row_norm(tape: &mut Tape, pred: Var, target: Var) -> Var {
    let rows = tape.value(target).rows();
    let diff = tape.sub(pred, target);
    let sq = tape.mul(diff, diff);
    let ss = tape.row_sums(sq);
    // Smoothing keeps the norm differentiable at zero residual.
    let eps = tape.constant(Tensor::scalar(1e-12));
    let ss = tape.add(ss, eps);
    let norms = tape.sqrt(ss);
    let total = tape.sum_all(norms);
    tape.scale(total, 1.0 / rows as f64)
}

/// The two halves of the loss before weighting: mean node residual
/// norm and mean edge residual norm (zero when the graph has no
/// edges).
pub fn reconstruction_terms(
    tape: &mut Tape,
    node_recon: Var,
    edge_recon: Var,
    truth: &Graph,
) -> (Var, Var) {
    let (nr, nc) = (tape.value(node_recon).rows(), tape.value(node_recon).cols());
    assert_eq!(
        (nr, nc),
        (truth.num_nodes(), truth.node_features().cols()),
        "node reconstruction is {nr}x{nc}, ground truth wants {}x{}",
        truth.num_nodes(),
        truth.node_features().cols()
    );
    let (er, ec) = (tape.value(edge_recon).rows(), tape.value(edge_recon).cols());
    assert_eq!(
        (er, ec),
        (truth.num_edge_entries(), truth.edge_features().cols()),
        "edge reconstruction is {er}x{ec}, ground truth wants {}x{}",
        truth.num_edge_entries(),
        truth.edge_features().cols()
    );
    let x = tape.constant(truth.node_features().clone());
    let node_term = mean_row_norm(tape, node_recon, x);
    let edge_term = if truth.num_edge_entries() == 0 {
        tape.constant(Tensor::scalar(0.0))
    } else {
        let e = tape.constant(truth.edge_features().clone());
        mean_row_norm(tape, edge_recon, e)
    };
    (node_term, edge_term)
}

/// Total loss: mean node residual norm plus `lambda` times the mean
/// edge residual norm, every row counted whether masked or not.
pub fn reconstruction_loss(
    tape: &mut Tape,
    node_recon: Var,
    edge_recon: Var,
    truth: &Graph,
    lambda: f64,
) -> Var {
    assert!(lambda >= 0.0, "lambda must be nonnegative, got {lambda}");
    let (node_term, edge_term) = reconstruction_terms(tape, node_recon, edge_recon, truth);
    let scaled = tape.scale(edge_term, lambda);
    tape.add(node_term, scaled)
}
