use gce::graph::{batch_graphs, Batch, FeatureCodec};
use gce::masking::{corrupt, MaskSettings};
use gce::model::{
    edge_update, gine_conv, mlp_forward, topk_pool, unpool, GceConfig, GceModel, Stage,
};
use gce::molecule::{molecule_to_graph, parse_smiles_lines};
use gce::tensor::Tape;
use gce::training::{pretrain, TrainConfig};

fn message_report(model: &GceModel, batch: &Batch, label: &str) {
    let cfg = model.config().clone();
    let mut tape = Tape::new();
    let (vars, _) = model.register(&mut tape);
    let g = batch.merged();
    let x_in = tape.constant(g.node_features().clone());
    let e_in = tape.constant(g.edge_features().clone());
    let mut x = mlp_forward(&mut tape, &vars.node_in, x_in);
    let mut e = mlp_forward(&mut tape, &vars.edge_in, e_in);
    let mut stage = Stage::of_batch(batch);
    let mut skips = Vec::new();
    let mut records = Vec::new();
    let mut report = |tape: &mut Tape, name: &str, x, e, edges: &[(usize, usize)], conv: &gce::model::ConvVars| {
        let src: Vec<usize> = edges.iter().map(|&(a, _)| a).collect();
        let phi_e = mlp_forward(tape, &conv.phi, e);
        let x_src = tape.index_select(x, &src);
        let pre = tape.add(x_src, phi_e);
        let msg = tape.relu(pre);
        let pre_v = tape.value(pre);
        let msg_v = tape.value(msg);
        let mean_abs = |d: &[f64]| d.iter().map(|v| v.abs()).sum::<f64>() / d.len().max(1) as f64;
        let frac_pos = pre_v.data().iter().filter(|v| **v > 0.0).count() as f64
            / pre_v.data().len().max(1) as f64;
        println!(
            "  {name}: edges={} mean|pre|={:.4} frac(pre>0)={:.4} mean|msg|={:.6}",
            edges.len(),
            mean_abs(pre_v.data()),
            frac_pos,
            mean_abs(msg_v.data())
        );
    };
    println!("{label}:");
    for (i, (conv, edge_mlp, pool_p)) in vars.enc.iter().enumerate() {
        report(&mut tape, &format!("enc{i}"), x, e, &stage.edges, conv);
        x = gine_conv(&mut tape, x, &stage.edges, e, conv);
        if cfg.edge_updates {
            e = edge_update(&mut tape, e, x, &stage.edges, edge_mlp);
        }
        skips.push((x, e));
        let (xp, ep, next_stage, record) =
            topk_pool(&mut tape, x, e, &stage, *pool_p, cfg.pooling_rate);
        x = xp;
        e = ep;
        stage = next_stage;
        records.push(record);
    }
    let depth = vars.dec.len();
    for (i, (conv, edge_mlp)) in vars.dec.iter().enumerate() {
        let record = &records[depth - 1 - i];
        let (skip_x, skip_e) = skips[depth - 1 - i];
        x = unpool(&mut tape, x, record);
        if cfg.use_residual {
            x = tape.add(x, skip_x);
        }
        e = skip_e;
        report(&mut tape, &format!("dec{i}"), x, e, &record.pre.edges, conv);
        x = gine_conv(&mut tape, x, &record.pre.edges, e, conv);
        if cfg.edge_updates {
            e = edge_update(&mut tape, e, x, &record.pre.edges, edge_mlp);
        }
    }
}

fn main() {
    let text = std::fs::read_to_string("/root/crate/crates/gce-cli/tests/data/toy50.smi").unwrap();
    let mols = parse_smiles_lines(&text).unwrap();
    let codec = FeatureCodec::molecule();
    let graphs: Vec<_> =
        mols.iter().map(|m| molecule_to_graph(m, &codec).unwrap()).collect();
    let gc = GceConfig::defaults(codec.num_node_categories(), codec.num_edge_categories());

    let corrupted: Vec<_> = graphs
        .iter()
        .enumerate()
        .map(|(i, g)| corrupt(g, &codec, &MaskSettings::default(), 1000 + i as u64).masked)
        .collect();
    let batch = batch_graphs(corrupted.iter().take(10));

    let fresh = GceModel::new(gc.clone(), 1).unwrap();
    message_report(&fresh, &batch, "at init (seed 1)");

    let mut tc = TrainConfig::defaults(1);
    tc.epochs = 200;
    tc.batch_size = 10;
    let ckpt = pretrain(&graphs, &codec, &gc, &tc).unwrap();
    let model = ckpt.instantiate().unwrap();
    message_report(&model, &batch, "after 200 epochs (seed 1, batch 10)");
}
