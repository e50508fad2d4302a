//! Dataset resolution for `--data` arguments.
//!
//! Three spellings: `synth:<kind>:<count>:<lo>-<hi>[:<seed>]` builds a
//! synthetic labeled dataset, a `.smi` path loads molecules under the
//! molecule codec, and anything else is read as a line-delimited JSON
//! graph dataset.

use std::path::Path;

use anyhow::{Context, Result};
use gce::graph::{load_dataset, synth_dataset, FeatureCodec, Graph, SynthKind};
use gce::molecule::{load_smiles_file, molecule_to_graph, Molecule};

use crate::config::{require_readable, usage};

pub struct LoadedData {
    pub graphs: Vec<Graph>,
    pub codec: FeatureCodec,
}

fn parse_synth(spec: &str) -> Result<LoadedData> {
    let bad = || usage(format!(
        "malformed synthetic dataset spec {spec:?} (expected synth:<kind>:<count>:<lo>-<hi>[:<seed>])"
    ));
    let mut parts = spec.splitn(5, ':');
    parts.next(); // the "synth" prefix
    let kind: SynthKind = parts.next().ok_or_else(bad)?.parse().map_err(usage)?;
    let count: usize = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
    let range = parts.next().ok_or_else(bad)?;
    let (lo, hi) = range.split_once('-').ok_or_else(bad)?;
    let lo: usize = lo.parse().map_err(|_| bad())?;
    let hi: usize = hi.parse().map_err(|_| bad())?;
    let seed: u64 = match parts.next() {
        None => 0,
        Some(s) => s.parse().map_err(|_| bad())?,
    };
    let (graphs, codec) = synth_dataset(kind, count, (lo, hi), seed);
    Ok(LoadedData { graphs, codec })
}

/// Loads molecules and encodes them under the molecule codec.
pub fn load_molecules_as_graphs(path: &Path) -> Result<LoadedData> {
    let mols = load_molecule_file(path)?;
    let codec = FeatureCodec::molecule();
    let graphs = mols
        .iter()
        .enumerate()
        .map(|(i, m)| {
            molecule_to_graph(m, &codec)
                .with_context(|| format!("{} molecule {}", path.display(), i + 1))
        })
        .collect::<Result<_>>()?;
    Ok(LoadedData { graphs, codec })
}

pub fn load_molecule_file(path: &Path) -> Result<Vec<Molecule>> {
    require_readable(path, "molecule file")?;
    load_smiles_file(path).with_context(|| format!("loading {}", path.display()))
}

pub fn load_graph_data(spec: &str) -> Result<LoadedData> {
    if spec.starts_with("synth:") {
        return parse_synth(spec);
    }
    let path = Path::new(spec);
    require_readable(path, "dataset")?;
    if spec.ends_with(".smi") {
        return load_molecules_as_graphs(path);
    }
    let (graphs, codec) =
        load_dataset(path).with_context(|| format!("loading {}", path.display()))?;
    Ok(LoadedData { graphs, codec })
}
