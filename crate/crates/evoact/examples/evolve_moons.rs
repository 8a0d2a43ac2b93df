//! A small end-to-end evolutionary search on the two-moons dataset:
//! generational loop, property tracking, finalization, and the report table
//! with baselines.
//!
//! ```bash
//! cargo run --example evolve_moons
//! ```

use evoact::data::{synth, Scaling, SplitSpec, SynthKind};
use evoact::evolution::{self, EvolutionConfig, Problem};
use evoact::nn::{NetworkSpec, OutputKind, TrainConfig};
use evoact::rng::{derive, StreamAddress};

fn main() {
    let master = 42;
    let data = synth(
        SynthKind::Moons,
        400,
        0.2,
        &mut derive(master, &StreamAddress::root().child("synth", 0)),
    );
    let net = NetworkSpec {
        input_dim: 2,
        hidden: vec![12],
        dropout_rate: 0.0,
        l2_enabled: false,
        l2_lambda: 0.01,
        output: OutputKind::BinarySigmoid,
    };
    let problem = Problem::new(
        &data,
        Scaling::MinMax01,
        &SplitSpec::default(),
        net,
        TrainConfig::default(),
    )
    .unwrap();
    let cfg = EvolutionConfig {
        population_size: 12,
        generations: 5,
        search_epochs: 20,
        search_patience: 5,
        final_epochs: 40,
        repeats: 3,
        ..EvolutionConfig::default()
    };

    println!("gen   best    mean   zero  mono  upper lower");
    let result = evolution::run(&problem, &cfg, master, |s| {
        let f = &s.property_fractions;
        println!(
            "{:>3}  {:.4}  {:.4}   {:.2}  {:.2}  {:.2}  {:.2}",
            s.gen,
            s.best_fitness,
            s.mean_fitness,
            f.zero_on_nonpositive,
            f.monotone,
            f.upper_unbounded,
            f.lower_unbounded
        );
    });

    let report = evolution::finalize(&result.final_population, &problem, &cfg, master);
    println!(
        "\n{:<34} {:<16} {:<10} mean (std)",
        "function", "init", "metric"
    );
    for entry in &report.entries {
        for m in &entry.metrics {
            println!(
                "{:<34} {:<16} {:<10} {:.4} ({:.4})",
                entry.label,
                entry.init.name(),
                m.kind.name(),
                m.mean,
                m.std
            );
        }
    }
}
