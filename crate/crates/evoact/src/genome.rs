//! The two-gene chromosome and its variation operators.
//!
//! An individual pairs an activation tree `f` with a weight-initialization
//! gene `w`. Crossover swaps the `w` genes at the chromosome level and then
//! exchanges one subtree per parent, choosing a leaf as the exchange point
//! only 10% of the time. Mutation is the shrink operator. Static bloat
//! control replaces any child deeper than the limit with a randomly chosen
//! parent tree. Mutation never touches the `w` gene, so initialization
//! alleles only recombine from the initial population.

use rand::Rng;

use crate::expr::{ActivationTree, NodePath};
use crate::init::InitScheme;
use crate::rng::Stream;

/// Probability that a crossover point is a leaf rather than an internal node.
pub const LEAF_CROSSOVER_PROB: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Chromosome {
    pub tree: ActivationTree,
    pub init: InitScheme,
}

impl Chromosome {
    pub fn new(tree: ActivationTree, init: InitScheme) -> Self {
        Self { tree, init }
    }

    /// Random individual: tree depth within `[min_depth, max_depth]`, init
    /// gene uniform over the eleven schemes.
    pub fn random(rng: &mut Stream, min_depth: usize, max_depth: usize) -> Self {
        let tree = ActivationTree::random(rng, min_depth, max_depth);
        let init = InitScheme::ALL[rng.random_range(0..InitScheme::ALL.len())];
        Self { tree, init }
    }

    /// Text record used in run logs and best-function files.
    pub fn to_record(&self) -> String {
        format!(
            "{{tree = \"{}\", init = \"{}\"}}",
            self.tree,
            self.init.name()
        )
    }
}

/// Single-point chromosome crossover: children carry the parents' `w` genes
/// swapped, and their trees exchange one subtree each (leaf point with 10%
/// probability). Both children pass through bloat control against the
/// parents before they are returned.
pub fn crossover(
    p1: &Chromosome,
    p2: &Chromosome,
    max_depth: usize,
    rng: &mut Stream,
) -> (Chromosome, Chromosome) {
    let point1 = pick_crossover_point(&p1.tree, rng);
    let point2 = pick_crossover_point(&p2.tree, rng);
    let (t1, t2) = crossover_at(&p1.tree, &p2.tree, &point1, &point2);
    let c1 = bloat_control(Chromosome::new(t1, p2.init), (p1, p2), max_depth, rng);
    let c2 = bloat_control(Chromosome::new(t2, p1.init), (p1, p2), max_depth, rng);
    (c1, c2)
}

/// Exchanges the subtree of `t1` at `point1` with the subtree of `t2` at
/// `point2`.
pub(crate) fn crossover_at(
    t1: &ActivationTree,
    t2: &ActivationTree,
    point1: &NodePath,
    point2: &NodePath,
) -> (ActivationTree, ActivationTree) {
    let s1 = t1.subtree(point1);
    let s2 = t2.subtree(point2);
    (t1.replaced(point1, &s2), t2.replaced(point2, &s1))
}

fn pick_crossover_point(tree: &ActivationTree, rng: &mut Stream) -> NodePath {
    let internal = tree.internal_paths();
    // A lone leaf has no internal nodes; the point is then always the leaf.
    if internal.is_empty() || rng.random::<f64>() < LEAF_CROSSOVER_PROB {
        let leaves = tree.leaf_paths();
        leaves[rng.random_range(0..leaves.len())].clone()
    } else {
        internal[rng.random_range(0..internal.len())].clone()
    }
}

/// Shrink mutation: one uniformly chosen internal node is replaced by the
/// subtree of one of its children (uniform among them). Strictly decreases
/// the node count. A lone leaf is returned unchanged. The `w` gene is never
/// mutated.
pub fn mutate_shrink(c: &Chromosome, rng: &mut Stream) -> Chromosome {
    let internal = c.tree.internal_paths();
    if internal.is_empty() {
        return c.clone();
    }
    let path = &internal[rng.random_range(0..internal.len())];
    let child = rng.random_range(0..c.tree.arity_at(path));
    Chromosome::new(shrink_at(&c.tree, path, child), c.init)
}

pub(crate) fn shrink_at(tree: &ActivationTree, path: &NodePath, child: usize) -> ActivationTree {
    let mut child_path = path.clone();
    child_path.push(child);
    let replacement = tree.subtree(&child_path);
    tree.replaced(path, &replacement)
}

/// Static bloat control: a child whose tree exceeds `max_depth` has its tree
/// replaced by a uniformly chosen parent's tree; the child keeps its own `w`
/// gene. Children within the limit pass through unchanged.
pub fn bloat_control(
    child: Chromosome,
    parents: (&Chromosome, &Chromosome),
    max_depth: usize,
    rng: &mut Stream,
) -> Chromosome {
    if child.tree.depth() <= max_depth {
        child
    } else {
        let donor = if rng.random::<bool>() {
            parents.0
        } else {
            parents.1
        };
        Chromosome::new(donor.tree.clone(), child.init)
    }
}
