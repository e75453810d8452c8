use mpbfn_core::*;
use mpbfn_core::train::{forward_case, multitask_loss, toy_probe, Phase};
use mpbfn_core::tensor::Tape;

fn loss_of(params: &ModelParams, graph: &TaskGraph, case: &IndexedCase, opts: &DecodeOptions) -> f64 {
    let tape = Tape::new();
    let out = forward_case(&tape, params, graph, case, opts, Phase::Eval).unwrap();
    multitask_loss(&tape, &out, &case.labels, graph).unwrap().item()
}

#[test]
fn inspect_worst_coords() {
    let cfg = ModelConfig::toy();
    let graph = TaskGraph::default_ljp(3, 4, 5);
    let opts = DecodeOptions::default();
    for (seed, step) in [(0u64, 1e-3), (2, 1e-3)] {
        let (vocab, case) = toy_probe(&cfg, &graph, seed).unwrap();
        let params = ModelParams::init(&cfg, &graph, vocab.len(), seed).unwrap();
        let named = params.named_tensors();
        // analytic
        for (_, t) in &named { t.zero_grad(); }
        let tape = Tape::new();
        let out = forward_case(&tape, &params, &graph, &case, &opts, Phase::Eval).unwrap();
        let loss = multitask_loss(&tape, &out, &case.labels, &graph).unwrap();
        tape.backward(&loss).unwrap();
        drop(tape);
        let mut worst = (0.0f64, String::new(), 0usize, 0.0, 0.0);
        for (name, t) in &named {
            let g = t.grad().unwrap_or_else(|| vec![0.0; t.numel()]);
            for i in 0..t.numel() {
                let orig = t.get(i);
                t.set_coord(i, orig + step);
                let fp = loss_of(&params, &graph, &case, &opts);
                t.set_coord(i, orig - step);
                let fm = loss_of(&params, &graph, &case, &opts);
                t.set_coord(i, orig);
                let num = (fp - fm) / (2.0 * step);
                let err = (g[i] - num).abs() / g[i].abs().max(num.abs()).max(1e-8);
                if err > worst.0 { worst = (err, name.clone(), i, g[i], num); }
            }
        }
        println!("seed {seed}: worst err {:.3e} at {}[{}], analytic {:.6e} numeric {:.6e}", worst.0, worst.1, worst.2, worst.3, worst.4);
    }
}
