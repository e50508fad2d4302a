//! Synthetic labeled datasets for pretraining and transfer experiments.

use super::{FeatureCodec, Graph};
use crate::rng::{self, tag};
use rand::Rng;

/// Family of synthetic graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    /// Label 0: a cycle. Label 1: a path whose endpoints carry the
    /// `end` node category.
    CyclesVsPaths,
    /// Label 0: a chain capped with a triangle. Label 1: the same chain
    /// capped with a square. Motif nodes carry their own category.
    TwoMotifs,
}

impl std::str::FromStr for SynthKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cycles_vs_paths" => Ok(SynthKind::CyclesVsPaths),
            "two_motifs" => Ok(SynthKind::TwoMotifs),
            other => Err(format!(
                "unknown synthetic dataset kind {other:?} (expected cycles_vs_paths or two_motifs)"
            )),
        }
    }
}

impl std::fmt::Display for SynthKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SynthKind::CyclesVsPaths => "cycles_vs_paths",
            SynthKind::TwoMotifs => "two_motifs",
        })
    }
}

impl SynthKind {
    fn codec(self) -> FeatureCodec {
        let nodes = match self {
            SynthKind::CyclesVsPaths => vec!["mid".to_string(), "end".to_string()],
            SynthKind::TwoMotifs => vec!["chain".to_string(), "motif".to_string()],
        };
        FeatureCodec::new(
            nodes,
            vec!["link".to_string(), "no_bond".to_string(), "masked".to_string()],
        )
    }

    fn min_size(self) -> usize {
        match self {
            // A cycle needs 3 nodes.
            SynthKind::CyclesVsPaths => 3,
            // Square motif (4) plus at least one chain node.
            SynthKind::TwoMotifs => 5,
        }
    }
}

/// Builds a deterministic labeled dataset. Labels alternate, so counts
/// are balanced within one. Graph `g` draws only from its own stream,
/// making the result independent of construction order.
///
/// Panics when `n_graphs < 2` or the size range is degenerate for the
/// kind.
pub fn synth_dataset(
    kind: SynthKind,
    n_graphs: usize,
    size_range: (usize, usize),
    seed: u64,
) -> (Vec<Graph>, FeatureCodec) {
    assert!(n_graphs >= 2, "synthetic dataset needs at least 2 graphs, asked for {n_graphs}");
    let (lo, hi) = size_range;
    assert!(
        kind.min_size() <= lo && lo <= hi,
        "degenerate size range [{lo}, {hi}] for {kind} (minimum size {})",
        kind.min_size()
    );

    let codec = kind.codec();
    let graphs = (0..n_graphs)
        .map(|g| {
            let mut rng = rng::stream(seed, &[tag::SYNTH, g as u64]);
            let n = rng.gen_range(lo..=hi);
            let label = g % 2;
            match kind {
                SynthKind::CyclesVsPaths => cycle_or_path(&codec, n, label),
                SynthKind::TwoMotifs => lollipop(&codec, n, label),
            }
        })
        .collect();
    (graphs, codec)
}

fn cycle_or_path(codec: &FeatureCodec, n: usize, label: usize) -> Graph {
    if label == 0 {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, 0)).collect();
        Graph::from_categories(codec, &vec![0; n], &edges, Some(0)).expect("cycle is valid")
    } else {
        let mut cats = vec![0; n];
        cats[0] = 1;
        cats[n - 1] = 1;
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1, 0)).collect();
        Graph::from_categories(codec, &cats, &edges, Some(1)).expect("path is valid")
    }
}

fn lollipop(codec: &FeatureCodec, n: usize, label: usize) -> Graph {
    let motif = 3 + label;
    let chain = n - motif;
    let mut cats = vec![0; chain];
    cats.extend(std::iter::repeat(1).take(motif));
    let mut edges: Vec<(usize, usize, usize)> =
        (0..chain.saturating_sub(1)).map(|i| (i, i + 1, 0)).collect();
    edges.push((chain - 1, chain, 0));
    for i in 0..motif {
        edges.push((chain + i, chain + (i + 1) % motif, 0));
    }
    Graph::from_categories(codec, &cats, &edges, Some(label)).expect("lollipop is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn same_seed_same_dataset() {
        let (a, _) = synth_dataset(SynthKind::CyclesVsPaths, 10, (4, 8), 7);
        let (b, _) = synth_dataset(SynthKind::CyclesVsPaths, 10, (4, 8), 7);
        assert_eq!(a, b);
    }

    #[test]
    fn cycles_and_paths_have_expected_edge_counts() {
        let (graphs, _) = synth_dataset(SynthKind::CyclesVsPaths, 10, (4, 8), 7);
        for g in &graphs {
            let n = g.num_nodes();
            match g.label() {
                Some(0) => assert_eq!(g.num_edge_entries(), 2 * n, "cycle"),
                Some(1) => assert_eq!(g.num_edge_entries(), 2 * (n - 1), "path"),
                other => panic!("unexpected label {other:?}"),
            }
        }
    }

    #[test]
    fn labels_are_balanced() {
        let (graphs, _) = synth_dataset(SynthKind::CyclesVsPaths, 10, (4, 8), 7);
        let ones = graphs.iter().filter(|g| g.label() == Some(1)).count();
        assert_eq!(ones, 5);

        let (graphs, _) = synth_dataset(SynthKind::TwoMotifs, 11, (5, 9), 3);
        let ones = graphs.iter().filter(|g| g.label() == Some(1)).count();
        assert_eq!(ones, 5);
    }

    #[test]
    fn path_endpoints_carry_end_category() {
        let (graphs, codec) = synth_dataset(SynthKind::CyclesVsPaths, 10, (4, 8), 7);
        let end = codec.node_index("end").unwrap();
        for g in graphs.iter().filter(|g| g.label() == Some(1)) {
            assert_eq!(g.node_category(0), end);
            assert_eq!(g.node_category(g.num_nodes() - 1), end);
            assert_eq!(g.node_category(1), codec.node_index("mid").unwrap());
        }
    }

    #[test]
    #[should_panic(expected = "degenerate size range")]
    fn too_small_sizes_panic() {
        synth_dataset(SynthKind::TwoMotifs, 4, (4, 8), 7);
    }

    #[test]
    #[should_panic(expected = "at least 2 graphs")]
    fn single_graph_dataset_panics() {
        synth_dataset(SynthKind::CyclesVsPaths, 1, (4, 8), 7);
    }

    proptest! {
        #[test]
        fn generated_graphs_pass_invariants(
            seed in 0u64..1000,
            kind in prop_oneof![Just(SynthKind::CyclesVsPaths), Just(SynthKind::TwoMotifs)],
            lo in 5usize..8,
            extra in 0usize..5,
        ) {
            let (graphs, codec) = synth_dataset(kind, 6, (lo, lo + extra), seed);
            for g in &graphs {
                prop_assert!(g.validate(&codec, false).is_ok());
            }
        }
    }
}
