//! Expression-tree activations: parsing, evaluation, derivatives, and
//! random generation.
//!
//! ```bash
//! cargo run --example activation_trees
//! ```

use evoact::expr::ActivationTree;
use evoact::rng::{derive, StreamAddress};

fn main() {
    // The tree for max(relu(x), swish(x)).
    let tree: ActivationTree = "(max (relu x) (swish x))".parse().unwrap();
    println!("function: {tree}");
    println!("depth {}, {} nodes", tree.depth(), tree.node_count());

    for x in [-2.0, -0.5, 0.0, 0.5, 2.0] {
        let dual = tree.eval_dual(x).unwrap();
        println!(
            "  f({x:>4}) = {:>8.5}   f'({x:>4}) = {:>8.5}",
            dual.value, dual.derivative
        );
    }

    // Overflow is an explicit signal, never a silent infinity.
    let explosive: ActivationTree = "(cosh (cosh (cosh x)))".parse().unwrap();
    println!("\n{explosive} at x=100: {:?}", explosive.eval(100.0));

    // Random trees stay inside the requested depth band and serialize to
    // text that parses back to the same structure.
    let mut rng = derive(7, &StreamAddress::root().child("example", 0));
    println!("\nrandom trees of initial depth 1..=4:");
    for _ in 0..5 {
        let t = ActivationTree::random(&mut rng, 1, 4);
        let back: ActivationTree = t.to_string().parse().unwrap();
        assert_eq!(back, t);
        println!("  depth {}  {t}", t.depth());
    }
}
