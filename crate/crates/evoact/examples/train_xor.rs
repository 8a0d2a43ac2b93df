//! Trains a small network with a tanh tree on XOR and prints the epoch
//! history in the JSONL format run artifacts use.
//!
//! ```bash
//! cargo run --example train_xor
//! ```

use ndarray::Axis;

use evoact::data::{synth, SynthKind};
use evoact::init::InitScheme;
use evoact::nn::{
    self, Activation, FitnessMetric, MetricKind, NetworkSpec, OutputKind, TrainConfig,
};
use evoact::rng::{derive, StreamAddress};

fn main() {
    let addr = StreamAddress::root();
    // Eight rows: the four XOR corners twice. Train on the first copy,
    // validate on the second.
    let data = synth(
        SynthKind::Xor,
        8,
        0.0,
        &mut derive(1, &addr.child("xor", 0)),
    );
    let train_idx: Vec<usize> = (0..4).collect();
    let val_idx: Vec<usize> = (4..8).collect();
    let train_x = data.features.select(Axis(0), &train_idx);
    let val_x = data.features.select(Axis(0), &val_idx);
    let train_y = data.targets.select(&train_idx);
    let val_y = data.targets.select(&val_idx);

    let spec = NetworkSpec {
        input_dim: 2,
        hidden: vec![8],
        dropout_rate: 0.0,
        l2_enabled: false,
        l2_lambda: 0.0,
        output: OutputKind::BinarySigmoid,
    };
    let cfg = TrainConfig {
        max_epochs: 2000,
        batch_size: 4,
        learning_rate: 0.01,
        fitness_metric: FitnessMetric::F1,
        ..TrainConfig::default()
    };
    let activation = Activation::Tree("(tanh x)".parse().unwrap());
    let trained = nn::train(
        &spec,
        &activation,
        InitScheme::GlorotUniform,
        (train_x.view(), &train_y),
        (val_x.view(), &val_y),
        &cfg,
        7,
        &addr.child("train", 0),
    );

    let out = nn::predict(&trained.model, &spec, &activation, train_x.view()).unwrap();
    let m = nn::metrics(out.view(), &train_y);
    println!(
        "training accuracy {:.0}/4 after {} epochs (best epoch {})",
        4.0 * m.get(MetricKind::Accuracy).unwrap(),
        trained.history.len(),
        trained.best_epoch
    );

    println!("\nfirst and last epochs of the history (JSONL):");
    let mut buf = Vec::new();
    nn::write_history_jsonl(&trained, &mut buf).unwrap();
    let lines: Vec<&str> = std::str::from_utf8(&buf).unwrap().lines().collect();
    for line in lines.iter().take(3) {
        println!("{line}");
    }
    println!("...");
    for line in lines.iter().rev().take(2).rev() {
        println!("{line}");
    }
}
