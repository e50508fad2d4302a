//! Subcommands and their execution.
//!
//! Artifact-producing commands write into `--out`: the manifest goes in
//! last, so a directory with `manifest.json` holds a complete run and a
//! directory with a `FAILED` marker holds the debris of a failed one.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use gce::generation::{
    evaluate, generate_nshot, generate_nshot_at, reconstruct_once, GenerationConfig,
    GenerationOutput, MetricsReport,
};
use gce::graph::FeatureCodec;
use gce::masking::MaskSettings;
use gce::model::{GceConfig, GceModel};
use gce::molecule::{molecule_to_graph, parse_smiles, write_smiles, Molecule, WriteError};
use gce::tensor::Tensor;
use gce::training::{
    finetune_csv, load_checkpoint, pretrain, pretrain_csv, pretrain_resume, save_checkpoint,
    train_classifier, transfer_weights, Checkpoint, TrainConfig,
};

use crate::config::{require_readable, usage, KvConfig};
use crate::data;
use crate::manifest::Manifest;

#[derive(Parser)]
#[command(name = "gce", version, about = "Graph context encoder toolkit")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pretrain a reconstruction model on a graph dataset.
    Pretrain(PretrainArgs),
    /// Transfer a pretrained encoder and train a graph classifier.
    Finetune(FinetuneArgs),
    /// Run n-shot generation from seed molecules.
    Generate(GenerateArgs),
    /// Score a generated molecule set against training/reference sets.
    Evaluate(EvaluateArgs),
    /// Corrupt one molecule, reconstruct it, and print both.
    Reconstruct(ReconstructArgs),
    /// Print checkpoint metadata and parameter statistics.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct Common {
    /// key=value configuration file, one entry per line, `#` comments.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one configuration key (repeatable), e.g. --set epochs=20.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Root RNG seed of the run.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker-thread cap for parallel stages.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct PretrainArgs {
    /// synth:<kind>:<count>:<lo>-<hi>[:<seed>], a .smi file, or a JSONL graph dataset.
    #[arg(long)]
    data: String,
    /// Output directory (model.ckpt, pretrain.csv, manifest.json).
    #[arg(long)]
    out: PathBuf,
    /// Continue this checkpoint up to the configured epoch count.
    #[arg(long, value_name = "CKPT")]
    resume: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct FinetuneArgs {
    /// Labeled training dataset (same spellings as pretrain --data).
    #[arg(long)]
    data: String,
    /// Optional labeled validation dataset.
    #[arg(long)]
    val: Option<String>,
    /// Pretrained checkpoint whose encoder seeds the classifier.
    #[arg(long, value_name = "CKPT")]
    model: PathBuf,
    /// Output directory (model.ckpt, finetune.csv, transfer.json, manifest.json).
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct GenerateArgs {
    /// Trained reconstruction checkpoint.
    #[arg(long, value_name = "CKPT")]
    model: PathBuf,
    /// Seed molecules, one SMILES per line.
    #[arg(long, value_name = "SMI")]
    seeds: PathBuf,
    /// Output directory (generated.smi, provenance.json, manifest.json).
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Generated molecules, one SMILES per line.
    #[arg(long, value_name = "SMI")]
    generated: PathBuf,
    /// Training set for novelty (defaults to --reference).
    #[arg(long, value_name = "SMI")]
    training: Option<PathBuf>,
    /// Reference set for the KL score (defaults to --training).
    #[arg(long, value_name = "SMI")]
    reference: Option<PathBuf>,
    /// Optional output directory (report.json, report.csv, manifest.json).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReconstructArgs {
    /// Trained reconstruction checkpoint.
    #[arg(long, value_name = "CKPT")]
    model: PathBuf,
    /// Input molecule.
    #[arg(long)]
    smiles: String,
    /// Node and edge masking rate.
    #[arg(long, default_value_t = 0.1)]
    mask_rate: f64,
    /// Pseudo-edge budget per masked node.
    #[arg(long, default_value_t = 5)]
    pseudo_per_node: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct InspectArgs {
    /// Checkpoint to describe.
    #[arg(long, value_name = "CKPT")]
    model: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Pretrain(a) => cmd_pretrain(a),
        Command::Finetune(a) => cmd_finetune(a),
        Command::Generate(a) => cmd_generate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::Inspect(a) => cmd_inspect(a),
    }
}

const PRETRAIN_KEYS: &[&str] = &[
    "epochs", "batch_size", "lr", "lambda", "beta1", "beta2", "adam_eps", "node_mask_rate",
    "edge_mask_rate", "pseudo_per_node", "num_layers", "hidden_channels", "pooling_rate",
    "use_residual", "edge_updates", "train_epsilon",
];

const FINETUNE_KEYS: &[&str] = &["epochs", "batch_size", "lr", "beta1", "beta2", "adam_eps"];

const GENERATE_KEYS: &[&str] = &["shots", "mask_rate", "pseudo_per_node", "sanitize", "draws"];

/// Runs the artifact-producing body of a command. A failure leaves a
/// `FAILED` marker next to whatever partial outputs exist; success
/// writes the manifest last.
fn with_artifacts(out: &Path, body: impl FnOnce() -> Result<Manifest>) -> Result<()> {
    std::fs::create_dir_all(out)
        .with_context(|| format!("creating output directory {}", out.display()))?;
    let marker = out.join("FAILED");
    let _ = std::fs::remove_file(&marker);
    match body() {
        Ok(manifest) => manifest.write(out),
        Err(e) => {
            let _ = std::fs::write(&marker, format!("{e:#}\n"));
            Err(e)
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    require_readable(path, "checkpoint")?;
    load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

/// Training hyperparameters from the resolved config, recorded back so
/// the manifest shows every effective value.
fn train_config(kv: &mut KvConfig, seed: u64, with_pretrain_keys: bool) -> Result<TrainConfig> {
    let mut tc = TrainConfig::defaults(seed);
    tc.epochs = kv.get_or("epochs", tc.epochs)?;
    tc.batch_size = kv.get_or("batch_size", tc.batch_size)?;
    tc.learning_rate = kv.get_or("lr", tc.learning_rate)?;
    tc.beta1 = kv.get_or("beta1", tc.beta1)?;
    tc.beta2 = kv.get_or("beta2", tc.beta2)?;
    tc.adam_eps = kv.get_or("adam_eps", tc.adam_eps)?;
    kv.record("epochs", tc.epochs);
    kv.record("batch_size", tc.batch_size);
    kv.record("lr", tc.learning_rate);
    kv.record("beta1", tc.beta1);
    kv.record("beta2", tc.beta2);
    kv.record("adam_eps", tc.adam_eps);
    if with_pretrain_keys {
        tc.lambda = kv.get_or("lambda", tc.lambda)?;
        tc.mask.node_rate = kv.get_or("node_mask_rate", tc.mask.node_rate)?;
        tc.mask.edge_rate = kv.get_or("edge_mask_rate", tc.mask.edge_rate)?;
        tc.mask.pseudo_per_node = kv.get_or("pseudo_per_node", tc.mask.pseudo_per_node)?;
        kv.record("lambda", tc.lambda);
        kv.record("node_mask_rate", tc.mask.node_rate);
        kv.record("edge_mask_rate", tc.mask.edge_rate);
        kv.record("pseudo_per_node", tc.mask.pseudo_per_node);
    }
    Ok(tc)
}

fn model_config(kv: &mut KvConfig, codec: &FeatureCodec) -> Result<GceConfig> {
    let mut gc = GceConfig::defaults(codec.num_node_categories(), codec.num_edge_categories());
    gc.num_layers = kv.get_or("num_layers", gc.num_layers)?;
    gc.hidden_channels = kv.get_or("hidden_channels", gc.hidden_channels)?;
    gc.pooling_rate = kv.get_or("pooling_rate", gc.pooling_rate)?;
    gc.use_residual = kv.get_or("use_residual", gc.use_residual)?;
    gc.edge_updates = kv.get_or("edge_updates", gc.edge_updates)?;
    gc.train_epsilon = kv.get_or("train_epsilon", gc.train_epsilon)?;
    kv.record("num_layers", gc.num_layers);
    kv.record("hidden_channels", gc.hidden_channels);
    kv.record("pooling_rate", gc.pooling_rate);
    kv.record("use_residual", gc.use_residual);
    kv.record("edge_updates", gc.edge_updates);
    kv.record("train_epsilon", gc.train_epsilon);
    Ok(gc)
}

fn cmd_pretrain(a: PretrainArgs) -> Result<()> {
    let mut kv = KvConfig::load(a.common.config.as_deref(), &a.common.set, PRETRAIN_KEYS)?;
    let data = data::load_graph_data(&a.data)?;
    let tc = train_config(&mut kv, a.common.seed, true)?;
    let gc = model_config(&mut kv, &data.codec)?;
    let resume = match &a.resume {
        None => None,
        Some(p) => Some(read_checkpoint(p)?),
    };

    with_artifacts(&a.out, || {
        let ckpt = match &resume {
            None => pretrain(&data.graphs, &data.codec, &gc, &tc)?,
            Some(old) => pretrain_resume(old, &data.graphs, &data.codec, &tc)?,
        };
        save_checkpoint(a.out.join("model.ckpt"), &ckpt).context("writing model.ckpt")?;
        write_text(&a.out.join("pretrain.csv"), &pretrain_csv(&ckpt.loss_history))?;
        println!(
            "pretrained {} epochs on {} graphs, final loss {:.6}",
            ckpt.epoch,
            data.graphs.len(),
            ckpt.loss_history.last().copied().unwrap_or(f64::NAN)
        );

        let mut m = Manifest::new("pretrain", a.common.seed, a.common.threads);
        m.input("data", &a.data);
        if let Some(p) = &a.resume {
            m.input("resume", p.display());
        }
        m.config = kv.resolved();
        m.artifacts = vec!["model.ckpt".into(), "pretrain.csv".into()];
        Ok(m)
    })
}

fn cmd_finetune(a: FinetuneArgs) -> Result<()> {
    let mut kv = KvConfig::load(a.common.config.as_deref(), &a.common.set, FINETUNE_KEYS)?;
    let train = data::load_graph_data(&a.data)?;
    let val = match &a.val {
        None => None,
        Some(spec) => Some(data::load_graph_data(spec)?),
    };
    let tc = train_config(&mut kv, a.common.seed, false)?;
    let ckpt = read_checkpoint(&a.model)?;

    with_artifacts(&a.out, || {
        if ckpt.codec != train.codec {
            anyhow::bail!(
                "checkpoint codec does not match the dataset codec; \
                 the encoder was pretrained on different features"
            );
        }
        if let Some(v) = &val {
            if v.codec != train.codec {
                anyhow::bail!("validation dataset codec does not match the training dataset");
            }
        }
        let val_graphs = val.as_ref().map(|v| v.graphs.as_slice()).unwrap_or(&[]);
        let num_classes = train
            .graphs
            .iter()
            .chain(val_graphs)
            .filter_map(|g| g.label())
            .max()
            .map(|m| m + 1)
            .ok_or_else(|| anyhow::anyhow!("dataset has no labels to classify"))?;

        let (mut model, report) = transfer_weights(&ckpt, &ckpt.config, num_classes, a.common.seed)?;
        let result = train_classifier(&mut model, &train.graphs, val_graphs, &train.codec, &tc)?;
        if result.single_class_warning {
            eprintln!("warning: training labels contain a single class");
        }

        save_checkpoint(a.out.join("model.ckpt"), &result.checkpoint)
            .context("writing model.ckpt")?;
        write_text(&a.out.join("finetune.csv"), &finetune_csv(&result.history))?;
        let transfer_json =
            serde_json::to_string_pretty(&report).expect("transfer report serializes");
        write_text(&a.out.join("transfer.json"), &(transfer_json + "\n"))?;
        let last = result.history.last();
        println!(
            "fine-tuned {} epochs, {} classes, train accuracy {:.4}{}",
            result.history.len(),
            num_classes,
            last.map(|e| e.train_accuracy).unwrap_or(f64::NAN),
            last.and_then(|e| e.val_accuracy)
                .map(|v| format!(", val accuracy {v:.4}"))
                .unwrap_or_default()
        );

        let mut m = Manifest::new("finetune", a.common.seed, a.common.threads);
        m.input("data", &a.data);
        if let Some(v) = &a.val {
            m.input("val", v);
        }
        m.input("model", a.model.display());
        m.config = kv.resolved();
        m.artifacts = vec!["model.ckpt".into(), "finetune.csv".into(), "transfer.json".into()];
        Ok(m)
    })
}

/// Splits the seed list across worker threads; absolute indices keep
/// the result identical to the sequential run.
fn generate_parallel(
    model: &GceModel,
    codec: &FeatureCodec,
    seeds: &[Molecule],
    cfg: &GenerationConfig,
    threads: usize,
) -> Result<GenerationOutput> {
    let workers = threads.max(1).min(seeds.len().max(1));
    if workers <= 1 {
        return Ok(generate_nshot(model, codec, seeds, cfg)?);
    }
    let chunk = seeds.len().div_ceil(workers);
    let parts: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let lo = (w * chunk).min(seeds.len());
                let hi = ((w + 1) * chunk).min(seeds.len());
                s.spawn(move || generate_nshot_at(model, codec, &seeds[lo..hi], cfg, lo))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("generation worker panicked")).collect()
    });
    let mut out = GenerationOutput { molecules: Vec::new(), provenance: Vec::new() };
    for part in parts {
        let part = part?;
        out.molecules.extend(part.molecules);
        out.provenance.extend(part.provenance);
    }
    Ok(out)
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let mut kv = KvConfig::load(a.common.config.as_deref(), &a.common.set, GENERATE_KEYS)?;
    let cfg = GenerationConfig {
        shots: kv.get_or("shots", 1)?,
        mask_rate: kv.get_or("mask_rate", 0.1)?,
        pseudo_per_node: kv.get_or("pseudo_per_node", 5)?,
        seed: a.common.seed,
        sanitize: kv.get_or("sanitize", false)?,
    };
    let draws: usize = kv.get_or("draws", 1)?;
    kv.record("shots", cfg.shots);
    kv.record("mask_rate", cfg.mask_rate);
    kv.record("pseudo_per_node", cfg.pseudo_per_node);
    kv.record("sanitize", cfg.sanitize);
    kv.record("draws", draws);

    let ckpt = read_checkpoint(&a.model)?;
    let seeds = data::load_molecule_file(&a.seeds)?;

    with_artifacts(&a.out, || {
        let model = ckpt.instantiate().context("instantiating the checkpoint")?;
        // Each draw revisits the full seed list; indices keep counting,
        // so every (draw, molecule) cell has its own streams.
        let tiled: Vec<Molecule> =
            std::iter::repeat(seeds.iter().cloned()).take(draws).flatten().collect();
        let out = generate_parallel(&model, &ckpt.codec, &tiled, &cfg, a.common.threads)?;

        let mut smi = String::new();
        let mut written = 0usize;
        for mol in &out.molecules {
            // Disconnected outputs have no single-molecule notation;
            // they stay in provenance.json with output_smiles null.
            if let Ok(s) = write_smiles(mol) {
                smi.push_str(&s);
                smi.push('\n');
                written += 1;
            }
        }
        write_text(&a.out.join("generated.smi"), &smi)?;
        let prov = serde_json::to_string_pretty(&out.provenance).expect("provenance serializes");
        write_text(&a.out.join("provenance.json"), &(prov + "\n"))?;
        println!(
            "generated {} molecules from {} seeds x {} draws ({} written as SMILES)",
            out.molecules.len(),
            seeds.len(),
            draws,
            written
        );

        let mut m = Manifest::new("generate", a.common.seed, a.common.threads);
        m.input("model", a.model.display());
        m.input("seeds", a.seeds.display());
        m.config = kv.resolved();
        m.artifacts = vec!["generated.smi".into(), "provenance.json".into()];
        Ok(m)
    })
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let generated = data::load_molecule_file(&a.generated)?;
    let training_path = a.training.as_ref().or(a.reference.as_ref()).ok_or_else(|| {
        usage("evaluate needs --training or --reference for novelty and the KL score")
    })?;
    let training = data::load_molecule_file(training_path)?;
    let reference = match &a.reference {
        None => None,
        Some(p) => Some(data::load_molecule_file(p)?),
    };

    let report = evaluate(&generated, &training, reference.as_deref())?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    println!("{json}");

    if let Some(out) = &a.out {
        with_artifacts(out, || {
            write_text(&out.join("report.json"), &(json.clone() + "\n"))?;
            write_text(
                &out.join("report.csv"),
                &format!("{}\n{}\n", MetricsReport::CSV_HEADER, report.csv_row()),
            )?;
            let mut m = Manifest::new("evaluate", 0, 1);
            m.input("generated", a.generated.display());
            m.input("training", training_path.display());
            if let Some(p) = &a.reference {
                m.input("reference", p.display());
            }
            m.artifacts = vec!["report.json".into(), "report.csv".into()];
            Ok(m)
        })?;
    }
    Ok(())
}

fn pair_list(pairs: &[(usize, usize)]) -> String {
    if pairs.is_empty() {
        return "(none)".into();
    }
    pairs.iter().map(|(i, j)| format!("{i}-{j}")).collect::<Vec<_>>().join(", ")
}

fn cmd_reconstruct(a: ReconstructArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.mask_rate) {
        return Err(usage(format!("--mask-rate {} is outside [0, 1]", a.mask_rate)));
    }
    let ckpt = read_checkpoint(&a.model)?;
    let mol = parse_smiles(&a.smiles)
        .map_err(|e| usage(format!("--smiles {:?}: {e}", a.smiles)))?;
    let model = ckpt.instantiate().context("instantiating the checkpoint")?;
    let g = molecule_to_graph(&mol, &ckpt.codec)
        .context("the checkpoint codec does not cover this molecule")?;

    let settings = MaskSettings {
        node_rate: a.mask_rate,
        edge_rate: a.mask_rate,
        pseudo_per_node: a.pseudo_per_node,
    };
    let (decoded, plan) = reconstruct_once(&model, &ckpt.codec, &g, &settings, a.seed);
    let reconstructed = gce::molecule::graph_to_molecule(&decoded, &ckpt.codec)
        .expect("decoded graphs always convert");

    println!("seed: {}", write_smiles(&mol).expect("parsed molecules are writable"));
    let nodes = if plan.masked_nodes.is_empty() {
        "(none)".into()
    } else {
        plan.masked_nodes.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
    };
    println!("masked nodes: {nodes}");
    println!("pseudo edges: {}", pair_list(&plan.pseudo_edges));
    let masked_pairs: Vec<(usize, usize)> = plan
        .masked_edges
        .iter()
        .map(|&p| {
            let (i, j, _) = g.undirected_edge(p);
            (i, j)
        })
        .collect();
    println!("masked edges: {}", pair_list(&masked_pairs));
    match write_smiles(&reconstructed) {
        Ok(s) => println!("reconstructed: {s}"),
        Err(WriteError::Disconnected { components }) => {
            println!("reconstructed: (disconnected, {components} components)")
        }
        Err(e) => return Err(e).context("writing the reconstruction"),
    }
    Ok(())
}

fn tensor_stats(t: &Tensor) -> (f64, f64) {
    let d = t.data();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn cmd_inspect(a: InspectArgs) -> Result<()> {
    let ckpt = read_checkpoint(&a.model)?;
    println!("checkpoint: {}", a.model.display());
    println!("  epochs completed: {}", ckpt.epoch);
    match ckpt.num_classes {
        None => println!("  classifier head: none"),
        Some(c) => println!("  classifier head: {c} classes"),
    }
    println!(
        "  architecture: {} layers, {} hidden channels, pooling rate {}",
        ckpt.config.num_layers, ckpt.config.hidden_channels, ckpt.config.pooling_rate
    );
    println!(
        "  inputs: {} node categories, {} edge categories",
        ckpt.config.node_in_dim, ckpt.config.edge_in_dim
    );
    println!(
        "  residual: {}, edge updates: {}, trainable epsilon: {}",
        ckpt.config.use_residual, ckpt.config.edge_updates, ckpt.config.train_epsilon
    );
    match ckpt.loss_history.last() {
        None => println!("  loss history: empty"),
        Some(l) => println!("  loss history: {} epochs, last {l:.6}", ckpt.loss_history.len()),
    }
    if !ckpt.accuracy_history.is_empty() {
        println!("  accuracy history: {} epochs", ckpt.accuracy_history.len());
    }
    println!("  adam steps: {}", ckpt.adam.step_count());

    let scalars: usize = ckpt.params.values().map(|t| t.data().len()).sum();
    println!("  parameters: {} tensors, {scalars} scalars", ckpt.params.len());
    let width = ckpt.params.keys().map(|n| n.len()).max().unwrap_or(4).max(4);
    println!("{:<width$}  {:>5} {:>5}  {:>12} {:>12}", "name", "rows", "cols", "mean", "std");
    for (name, t) in &ckpt.params {
        let (mean, std) = tensor_stats(t);
        println!(
            "{name:<width$}  {:>5} {:>5}  {:>12.6} {:>12.6}",
            t.rows(),
            t.cols(),
            mean,
            std
        );
    }
    Ok(())
}
