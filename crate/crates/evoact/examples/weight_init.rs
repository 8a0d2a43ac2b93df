//! The eleven weight-initialization schemes the `w` gene ranges over.
//!
//! ```bash
//! cargo run --example weight_init
//! ```

use evoact::init::{sample_weights, InitScheme};
use evoact::rng::{derive, StreamAddress};

fn main() {
    let addr = StreamAddress::root();
    println!(
        "{:<18} {:>10} {:>10}  (fan_in=64, fan_out=32, 200x200 draw)",
        "scheme", "mean", "std"
    );
    for (i, scheme) in InitScheme::ALL.into_iter().enumerate() {
        let mut rng = derive(42, &addr.child("weight_init", i as u64));
        let m = sample_weights(scheme, 64, 32, 200, 200, &mut rng);
        let n = m.len() as f64;
        let mean = m.sum() / n;
        let std = (m.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        println!("{:<18} {mean:>10.5} {std:>10.5}", scheme.name());
    }

    // Orthogonal kernels: the square case gives Q
    // with Q^T Q = I to machine precision.
    let mut rng = derive(42, &addr.child("orthogonal_demo", 0));
    let q = sample_weights(InitScheme::Orthogonal, 6, 6, 6, 6, &mut rng);
    let qtq = q.t().dot(&q);
    let max_off = (0..6)
        .flat_map(|i| (0..6).map(move |j| (i, j)))
        .map(|(i, j)| (qtq[[i, j]] - f64::from(i == j)).abs())
        .fold(0.0f64, f64::max);
    println!("\northogonal 6x6: max |Q^T Q - I| = {max_off:.2e}");
}
