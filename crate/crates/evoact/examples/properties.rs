//! Shape properties of activation functions: monotonicity, hard zeroes on
//! the nonpositive axis, and upper/lower unboundedness.
//!
//! ```bash
//! cargo run --example properties
//! ```

use evoact::expr::ActivationTree;
use evoact::nn::Activation;
use evoact::props::{analyze, analyze_fn, population_fractions, PropertyGrid};

fn main() {
    let functions = [
        "(relu x)",
        "(tanh x)",
        "(cos x)",
        "(sub x (abs x))",
        "(leaky_relu x)",
        "(softplus x)",
        "(max (relu x) (swish x))",
    ];
    println!(
        "{:<26} {:>5} {:>5} {:>6} {:>6}",
        "function", "mono", "zero", "upper", "lower"
    );
    let mut vectors = Vec::new();
    for text in functions {
        let tree: ActivationTree = text.parse().unwrap();
        let v = analyze(&tree);
        vectors.push(v);
        println!(
            "{text:<26} {:>5} {:>5} {:>6} {:>6}",
            v.monotone_nondecreasing, v.zero_on_nonpositive, v.upper_unbounded, v.lower_unbounded
        );
    }

    // SELU is a baseline, not a tree; any scalar function can be analyzed.
    let selu = analyze_fn(|x| Activation::Selu.eval(x), &PropertyGrid::default());
    println!(
        "{:<26} {:>5} {:>5} {:>6} {:>6}",
        "selu (baseline)",
        selu.monotone_nondecreasing,
        selu.zero_on_nonpositive,
        selu.upper_unbounded,
        selu.lower_unbounded
    );

    let f = population_fractions(vectors.iter());
    println!(
        "\nfractions over the {} functions above: zero {:.2}, monotone {:.2}, upper {:.2}, lower {:.2}",
        functions.len(),
        f.zero_on_nonpositive,
        f.monotone,
        f.upper_unbounded,
        f.lower_unbounded
    );
}
