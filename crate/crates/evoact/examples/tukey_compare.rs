//! Repeated-run summaries and pairwise Tukey HSD significance.
//!
//! ```bash
//! cargo run --example tukey_compare
//! ```

use rand::Rng;

use evoact::rng::{derive, StreamAddress};
use evoact::stats::{studentized_range_critical, summarize, tukey_hsd, RunReport};

fn main() {
    // Thirty repeated F1 scores per system, two close and one clearly worse.
    let mut rng = derive(9, &StreamAddress::root().child("tukey_example", 0));
    let mut scores = |center: f64| -> Vec<f64> {
        (0..30)
            .map(|_| center + rng.random_range(-0.02..0.02))
            .collect()
    };
    let groups = [
        RunReport::new("f1", scores(0.93)),
        RunReport::new("f2", scores(0.925)),
        RunReport::new("ReLU (baseline)", scores(0.88)),
    ];

    for g in &groups {
        let (mean, std) = summarize(&g.samples);
        println!("{:<18} mean {mean:.4}  std {std:.4}", g.label);
    }

    println!("\npairwise Tukey HSD:");
    for r in tukey_hsd(&groups).unwrap() {
        let p = if r.p_value < 0.001 {
            "< .001".to_string()
        } else {
            format!("{:.3}", r.p_value)
        };
        println!(
            "  {:<28} diff {:>8.4}  q {:>7.3}  p {p}",
            format!("{} vs {}", r.a, r.b),
            r.mean_diff,
            r.q
        );
    }

    let q = studentized_range_critical(0.05, 3, 10.0);
    println!("\nstudentized-range critical value q(0.05, k=3, df=10) = {q:.3}");
}
