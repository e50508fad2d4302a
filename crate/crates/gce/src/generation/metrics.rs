//! Distribution-learning metrics over generated molecule sets.
//!
//! Validity is the fraction of valence-respecting outputs; uniqueness
//! and novelty are computed over valid molecules only, keyed by
//! canonical form. The KL score compares descriptor histograms against
//! a reference set and is 1.0 exactly when the distributions agree.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::molecule::{canonical_key, check_validity, descriptors, Molecule, DESCRIPTOR_NAMES};

/// Metrics over an empty set are undefined rather than zero.
#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("the {0} set is empty; the metric is undefined")]
    EmptySet(&'static str),
}

/// Set sizes behind the fractions of a [`MetricsReport`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricCounts {
    pub generated: usize,
    pub valid: usize,
    pub unique: usize,
    pub novel: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub validity: f64,
    pub uniqueness: f64,
    pub novelty: f64,
    pub kl_score: f64,
    /// Per-descriptor KL(reference, generated), in descriptor order.
    pub per_descriptor_kl: Vec<(String, f64)>,
    pub counts: MetricCounts,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str =
        "validity,uniqueness,novelty,kl_score,generated,valid,unique,novel";

    /// The report as one CSV row matching [`Self::CSV_HEADER`].
    pub fn csv_row(&self) -> String {
        format!(
            "{:.6},{:.6},{:.6},{:.6},{},{},{},{}",
            self.validity,
            self.uniqueness,
            self.novelty,
            self.kl_score,
            self.counts.generated,
            self.counts.valid,
            self.counts.unique,
            self.counts.novel
        )
    }
}

fn valid_subset(mols: &[Molecule]) -> Vec<&Molecule> {
    mols.iter().filter(|m| check_validity(m).valid).collect()
}

/// Distinct canonical keys, insertion-ordered.
fn unique_keys(mols: &[&Molecule]) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut keys = Vec::new();
    for m in mols {
        let k = canonical_key(m);
        if seen.insert(k.clone()) {
            keys.push(k);
        }
    }
    keys
}

/// Fraction of generated molecules that respect valence rules.
pub fn metric_validity(generated: &[Molecule]) -> Result<f64, MetricsError> {
    if generated.is_empty() {
        return Err(MetricsError::EmptySet("generated"));
    }
    Ok(valid_subset(generated).len() as f64 / generated.len() as f64)
}

/// Fraction of distinct canonical keys among the valid molecules.
/// Invalid molecules count in neither numerator nor denominator.
pub fn metric_uniqueness(generated: &[Molecule]) -> Result<f64, MetricsError> {
    let valid = valid_subset(generated);
    if valid.is_empty() {
        return Err(MetricsError::EmptySet("valid generated"));
    }
    Ok(unique_keys(&valid).len() as f64 / valid.len() as f64)
}

/// Fraction of unique valid molecules whose canonical key is absent
/// from the training set.
pub fn metric_novelty(generated: &[Molecule], training: &[Molecule]) -> Result<f64, MetricsError> {
    let valid = valid_subset(generated);
    if valid.is_empty() {
        return Err(MetricsError::EmptySet("valid generated"));
    }
    let keys = unique_keys(&valid);
    let known: HashSet<String> = training.iter().map(canonical_key).collect();
    let novel = keys.iter().filter(|k| !known.contains(*k)).count();
    Ok(novel as f64 / keys.len() as f64)
}

const SMOOTHING: f64 = 1e-10;
const WEIGHT_BINS: usize = 20;

/// Smoothed histogram probabilities of both sets under one shared
/// binning: unit bins over the combined range for integer-valued
/// descriptors, 20 equal bins for molecular weight.
fn histogram_pair(reference: &[f64], generated: &[f64], integer: bool) -> (Vec<f64>, Vec<f64>) {
    let lo = reference.iter().chain(generated).cloned().fold(f64::INFINITY, f64::min);
    let hi = reference.iter().chain(generated).cloned().fold(f64::NEG_INFINITY, f64::max);
    let bins = if integer {
        (hi - lo).round() as usize + 1
    } else if hi > lo {
        WEIGHT_BINS
    } else {
        1
    };
    let index = |v: f64| -> usize {
        if integer {
            (v - lo).round() as usize
        } else if hi > lo {
            (((v - lo) / (hi - lo) * bins as f64) as usize).min(bins - 1)
        } else {
            0
        }
    };
    let smooth = |values: &[f64]| -> Vec<f64> {
        let mut counts = vec![0usize; bins];
        for &v in values {
            counts[index(v)] += 1;
        }
        let n = values.len() as f64;
        let norm = 1.0 + bins as f64 * SMOOTHING;
        counts.iter().map(|&c| (c as f64 / n + SMOOTHING) / norm).collect()
    };
    (smooth(reference), smooth(generated))
}

fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(&pi, &qi)| pi * (pi / qi).ln()).sum()
}

/// Mean of exp(-KL) over the descriptor set, with the per-descriptor
/// divergences. KL runs from the reference distribution to the
/// generated one, so mass the reference has and the generation misses
/// is what costs score. Both sets must be nonempty and valid-only.
pub fn metric_kl_score(
    generated: &[Molecule],
    reference: &[Molecule],
) -> Result<(f64, Vec<(String, f64)>), MetricsError> {
    if generated.is_empty() {
        return Err(MetricsError::EmptySet("generated"));
    }
    if reference.is_empty() {
        return Err(MetricsError::EmptySet("reference"));
    }
    let gen_desc: Vec<Vec<f64>> = generated.iter().map(descriptors).collect();
    let ref_desc: Vec<Vec<f64>> = reference.iter().map(descriptors).collect();

    let mut per = Vec::with_capacity(DESCRIPTOR_NAMES.len());
    let mut total = 0.0;
    for (d, name) in DESCRIPTOR_NAMES.iter().enumerate() {
        let gv: Vec<f64> = gen_desc.iter().map(|v| v[d]).collect();
        let rv: Vec<f64> = ref_desc.iter().map(|v| v[d]).collect();
        let (p, q) = histogram_pair(&rv, &gv, *name != "molecular_weight");
        let kl = kl_divergence(&p, &q);
        total += (-kl).exp();
        per.push((name.to_string(), kl));
    }
    Ok((total / DESCRIPTOR_NAMES.len() as f64, per))
}

/// Full metric suite. The reference set for the KL score defaults to
/// the training set; both are filtered to their valid molecules first.
pub fn evaluate(
    generated: &[Molecule],
    training: &[Molecule],
    reference: Option<&[Molecule]>,
) -> Result<MetricsReport, MetricsError> {
    let validity = metric_validity(generated)?;
    let valid: Vec<Molecule> = valid_subset(generated).into_iter().cloned().collect();
    if valid.is_empty() {
        return Err(MetricsError::EmptySet("valid generated"));
    }
    let keys = unique_keys(&valid.iter().collect::<Vec<_>>());
    let known: HashSet<String> = training.iter().map(canonical_key).collect();
    let novel = keys.iter().filter(|k| !known.contains(*k)).count();

    let reference = reference.unwrap_or(training);
    let ref_valid: Vec<Molecule> = valid_subset(reference).into_iter().cloned().collect();
    if ref_valid.is_empty() {
        return Err(MetricsError::EmptySet("valid reference"));
    }
    let (kl_score, per_descriptor_kl) = metric_kl_score(&valid, &ref_valid)?;

    Ok(MetricsReport {
        validity,
        uniqueness: keys.len() as f64 / valid.len() as f64,
        novelty: novel as f64 / keys.len() as f64,
        kl_score,
        per_descriptor_kl,
        counts: MetricCounts {
            generated: generated.len(),
            valid: valid.len(),
            unique: keys.len(),
            novel,
        },
    })
}
