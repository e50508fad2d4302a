use gce::graph::{batch_graphs, decode_one_hot, FeatureCodec};
use gce::masking::{corrupt, MaskSettings};
use gce::model::GceConfig;
use gce::molecule::{molecule_to_graph, parse_smiles_lines};
use gce::rng;
use gce::tensor::Tape;
use gce::training::{pretrain, TrainConfig};

fn main() {
    let text = std::fs::read_to_string("/root/crate/crates/gce-cli/tests/data/toy50.smi").unwrap();
    let mols = parse_smiles_lines(&text).unwrap();
    let codec = FeatureCodec::molecule();
    let graphs: Vec<_> = mols.iter().map(|m| molecule_to_graph(m, &codec).unwrap()).collect();
    let gc = GceConfig::defaults(codec.num_node_categories(), codec.num_edge_categories());
    let seed: u64 = std::env::args().nth(1).unwrap().parse().unwrap();
    let epochs: usize = std::env::args().nth(2).unwrap().parse().unwrap();
    let batch: usize = std::env::args().nth(3).unwrap().parse().unwrap();
    let mut tc = TrainConfig::defaults(seed);
    tc.epochs = epochs;
    tc.batch_size = batch;
    let t0 = std::time::Instant::now();
    let ckpt = pretrain(&graphs, &codec, &gc, &tc).unwrap();
    let h = &ckpt.loss_history;
    print!("seed {seed} batch {batch}: e1 {:.4}", h[0]);
    for &at in &[50usize, 100, 150, 200, 250, 300, 400] {
        if at <= h.len() {
            print!(" | e{at} {:.4} ({:.1}%)", h[at - 1], 100.0 * h[at - 1] / h[0]);
        }
    }
    let model = ckpt.instantiate().unwrap();
    let settings = MaskSettings::default();
    let (mut hits, mut total) = (0usize, 0usize);
    for (i, g) in graphs.iter().enumerate() {
        for rep in 0..4u64 {
            let pair = corrupt(g, &codec, &settings, rng::derive(900, &[i as u64, rep]));
            let mut tape = Tape::new();
            let out = model.forward(&mut tape, &batch_graphs([&pair.masked]));
            let recon = tape.value(out.node_recon);
            for &node in &pair.plan.masked_nodes {
                if decode_one_hot(recon.row(node)) == g.node_category(node) {
                    hits += 1;
                }
                total += 1;
            }
        }
    }
    println!(" | acc {:.3} ({hits}/{total}) | {:.1}s", hits as f64 / total as f64, t0.elapsed().as_secs_f64());
}
