//! The two-gene chromosome and its variation operators: init-gene swap,
//! leaf-biased subtree crossover, shrink mutation, and bloat control.
//!
//! ```bash
//! cargo run --example genome_operators
//! ```

use evoact::genome::{bloat_control, crossover, mutate_shrink, Chromosome};
use evoact::init::InitScheme;
use evoact::rng::{derive, StreamAddress};

fn main() {
    let mut rng = derive(3, &StreamAddress::root().child("genome_example", 0));

    let p1 = Chromosome::new(
        "(mul (relu x) (abs x))".parse().unwrap(),
        InitScheme::GlorotUniform,
    );
    let p2 = Chromosome::new(
        "(add (sigmoid x) (sinh x))".parse().unwrap(),
        InitScheme::HeNormal,
    );
    println!("parent 1: {}", p1.to_record());
    println!("parent 2: {}", p2.to_record());

    // Children carry the parents' init genes swapped and exchange one
    // subtree each (a leaf is the exchange point only 10% of the time).
    let (c1, c2) = crossover(&p1, &p2, 10, &mut rng);
    println!("child 1:  {}", c1.to_record());
    println!("child 2:  {}", c2.to_record());

    // Shrink mutation collapses one internal node onto one of its children.
    let before = c1.tree.node_count();
    let shrunk = mutate_shrink(&c1, &mut rng);
    println!(
        "\nshrink: {} nodes -> {} nodes: {}",
        before,
        shrunk.tree.node_count(),
        shrunk.tree
    );

    // Bloat control replaces an over-deep child with a parent tree.
    let mut deep = evoact::expr::ActivationTree::leaf();
    for _ in 0..12 {
        deep = evoact::expr::ActivationTree::unary(evoact::expr::UnaryOp::Sin, deep);
    }
    let child = Chromosome::new(deep, InitScheme::Orthogonal);
    println!("\nover-deep child (depth {}):", child.tree.depth());
    let checked = bloat_control(child, (&p1, &p2), 10, &mut rng);
    println!(
        "after bloat control (depth {}): {}",
        checked.tree.depth(),
        checked.to_record()
    );
}
