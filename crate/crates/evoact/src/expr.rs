//! Activation functions as expression trees.
//!
//! A tree is built from a fixed primitive set: 14 unary operations, 5 binary
//! operations, and the single leaf `x` (the scalar input of the activation).
//! Evaluation is pure; the forward-mode dual evaluator returns the value and
//! the first derivative in one pass, which is what backpropagation through an
//! evolved activation needs. Any non-finite intermediate aborts evaluation —
//! callers translate that into worst-possible fitness instead of letting
//! infinities propagate through training.
//!
//! Trees serialize to prefix s-expressions, e.g. `(max (relu x) (swish x))`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::rng::Stream;

/// Unary primitives. `leaky_relu` uses the 0.2 negative slope of the tensor
/// framework the function set was lifted from, not the 0.01 of the original
/// publication; see the crate README.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Relu,
    Elu,
    Sigmoid,
    Tanh,
    Swish,
    Sin,
    Cos,
    Atan,
    Sinh,
    Cosh,
    LeakyRelu,
    Softplus,
    Erf,
    Abs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Max,
    Min,
}

pub const LEAKY_RELU_SLOPE: f64 = 0.2;

impl UnaryOp {
    pub const ALL: [UnaryOp; 14] = [
        UnaryOp::Relu,
        UnaryOp::Elu,
        UnaryOp::Sigmoid,
        UnaryOp::Tanh,
        UnaryOp::Swish,
        UnaryOp::Sin,
        UnaryOp::Cos,
        UnaryOp::Atan,
        UnaryOp::Sinh,
        UnaryOp::Cosh,
        UnaryOp::LeakyRelu,
        UnaryOp::Softplus,
        UnaryOp::Erf,
        UnaryOp::Abs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Relu => "relu",
            UnaryOp::Elu => "elu",
            UnaryOp::Sigmoid => "sigmoid",
            UnaryOp::Tanh => "tanh",
            UnaryOp::Swish => "swish",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Atan => "atan",
            UnaryOp::Sinh => "sinh",
            UnaryOp::Cosh => "cosh",
            UnaryOp::LeakyRelu => "leaky_relu",
            UnaryOp::Softplus => "softplus",
            UnaryOp::Erf => "erf",
            UnaryOp::Abs => "abs",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|op| op.name() == name)
    }

    /// f(x) for this primitive.
    pub fn apply(self, x: f64) -> f64 {
        match self {
            UnaryOp::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            UnaryOp::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp() - 1.0
                }
            }
            UnaryOp::Sigmoid => sigmoid(x),
            UnaryOp::Tanh => x.tanh(),
            UnaryOp::Swish => x * sigmoid(x),
            UnaryOp::Sin => x.sin(),
            UnaryOp::Cos => x.cos(),
            UnaryOp::Atan => x.atan(),
            UnaryOp::Sinh => x.sinh(),
            UnaryOp::Cosh => x.cosh(),
            UnaryOp::LeakyRelu => {
                if x >= 0.0 {
                    x
                } else {
                    LEAKY_RELU_SLOPE * x
                }
            }
            UnaryOp::Softplus => softplus(x),
            UnaryOp::Erf => statrs::function::erf::erf(x),
            UnaryOp::Abs => x.abs(),
        }
    }

    /// df/dx at `x`. Kink conventions: relu'(0) = 0, abs'(0) = 0,
    /// leaky_relu'(0) = 0.2.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            UnaryOp::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            UnaryOp::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    x.exp()
                }
            }
            UnaryOp::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            UnaryOp::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            UnaryOp::Swish => {
                let s = sigmoid(x);
                s + x * s * (1.0 - s)
            }
            UnaryOp::Sin => x.cos(),
            UnaryOp::Cos => -x.sin(),
            UnaryOp::Atan => 1.0 / (1.0 + x * x),
            UnaryOp::Sinh => x.cosh(),
            UnaryOp::Cosh => x.sinh(),
            UnaryOp::LeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    LEAKY_RELU_SLOPE
                }
            }
            UnaryOp::Softplus => sigmoid(x),
            UnaryOp::Erf => 2.0 / std::f64::consts::PI.sqrt() * (-x * x).exp(),
            UnaryOp::Abs => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 5] = [
        BinaryOp::Add,
        BinaryOp::Sub,
        BinaryOp::Mul,
        BinaryOp::Max,
        BinaryOp::Min,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::Max => "max",
            BinaryOp::Min => "min",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|op| op.name() == name)
    }

    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            // Ties take the first (left) argument.
            BinaryOp::Max => {
                if a >= b {
                    a
                } else {
                    b
                }
            }
            BinaryOp::Min => {
                if a <= b {
                    a
                } else {
                    b
                }
            }
        }
    }

    fn apply_dual(self, a: DualValue, b: DualValue) -> DualValue {
        let value = self.apply(a.value, b.value);
        let derivative = match self {
            BinaryOp::Add => a.derivative + b.derivative,
            BinaryOp::Sub => a.derivative - b.derivative,
            BinaryOp::Mul => a.derivative * b.value + a.value * b.derivative,
            BinaryOp::Max => {
                if a.value >= b.value {
                    a.derivative
                } else {
                    b.derivative
                }
            }
            BinaryOp::Min => {
                if a.value <= b.value {
                    a.derivative
                } else {
                    b.derivative
                }
            }
        };
        DualValue { value, derivative }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

// Stable form: ln(1 + e^x) = max(x, 0) + ln(1 + e^-|x|).
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Value and first derivative of a scalar function at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualValue {
    pub value: f64,
    pub derivative: f64,
}

/// Signalled whenever an evaluation produces an overflow or NaN anywhere in
/// the tree. Never propagated silently.
#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("non-finite value during evaluation")]
pub struct NonFinite;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Node {
    Leaf,
    Unary(UnaryOp, Box<Node>),
    Binary(BinaryOp, Box<Node>, Box<Node>),
}

impl Node {
    fn eval(&self, x: f64) -> Result<f64, NonFinite> {
        let v = match self {
            Node::Leaf => x,
            Node::Unary(op, c) => op.apply(c.eval(x)?),
            Node::Binary(op, l, r) => op.apply(l.eval(x)?, r.eval(x)?),
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(NonFinite)
        }
    }

    fn eval_dual(&self, x: f64) -> Result<DualValue, NonFinite> {
        let d = match self {
            Node::Leaf => DualValue {
                value: x,
                derivative: 1.0,
            },
            Node::Unary(op, c) => {
                let inner = c.eval_dual(x)?;
                DualValue {
                    value: op.apply(inner.value),
                    derivative: op.derivative(inner.value) * inner.derivative,
                }
            }
            Node::Binary(op, l, r) => op.apply_dual(l.eval_dual(x)?, r.eval_dual(x)?),
        };
        if d.value.is_finite() && d.derivative.is_finite() {
            Ok(d)
        } else {
            Err(NonFinite)
        }
    }

    fn depth(&self) -> usize {
        match self {
            Node::Leaf => 0,
            Node::Unary(_, c) => 1 + c.depth(),
            Node::Binary(_, l, r) => 1 + l.depth().max(r.depth()),
        }
    }

    fn node_count(&self) -> usize {
        match self {
            Node::Leaf => 1,
            Node::Unary(_, c) => 1 + c.node_count(),
            Node::Binary(_, l, r) => 1 + l.node_count() + r.node_count(),
        }
    }

    fn arity(&self) -> usize {
        match self {
            Node::Leaf => 0,
            Node::Unary(..) => 1,
            Node::Binary(..) => 2,
        }
    }

    fn child(&self, i: usize) -> &Node {
        match (self, i) {
            (Node::Unary(_, c), 0) => c,
            (Node::Binary(_, l, _), 0) => l,
            (Node::Binary(_, _, r), 1) => r,
            _ => panic!("child index {i} out of range"),
        }
    }

    fn collect_paths(
        &self,
        here: &mut NodePath,
        leaves: &mut Vec<NodePath>,
        internal: &mut Vec<NodePath>,
    ) {
        if self.arity() == 0 {
            leaves.push(here.clone());
        } else {
            internal.push(here.clone());
            for i in 0..self.arity() {
                here.push(i);
                self.child(i).collect_paths(here, leaves, internal);
                here.pop();
            }
        }
    }

    fn at(&self, path: &[usize]) -> &Node {
        match path.split_first() {
            None => self,
            Some((&i, rest)) => self.child(i).at(rest),
        }
    }

    fn replaced(&self, path: &[usize], sub: &Node) -> Node {
        match path.split_first() {
            None => sub.clone(),
            Some((&i, rest)) => match self {
                Node::Leaf => panic!("path descends below a leaf"),
                Node::Unary(op, c) => {
                    debug_assert_eq!(i, 0);
                    Node::Unary(*op, Box::new(c.replaced(rest, sub)))
                }
                Node::Binary(op, l, r) => {
                    if i == 0 {
                        Node::Binary(*op, Box::new(l.replaced(rest, sub)), r.clone())
                    } else {
                        Node::Binary(*op, l.clone(), Box::new(r.replaced(rest, sub)))
                    }
                }
            },
        }
    }

    fn write(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Leaf => write!(f, "x"),
            Node::Unary(op, c) => {
                write!(f, "({} ", op.name())?;
                c.write(f)?;
                write!(f, ")")
            }
            Node::Binary(op, l, r) => {
                write!(f, "({} ", op.name())?;
                l.write(f)?;
                write!(f, " ")?;
                r.write(f)?;
                write!(f, ")")
            }
        }
    }
}

/// Path from the root to a node, as child indices.
pub(crate) type NodePath = Vec<usize>;

/// An activation function, represented as an expression tree over the scalar
/// input `x`. Structural equality (`==`) is what finalization uses to decide
/// distinctness.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ActivationTree {
    root: Node,
}

impl ActivationTree {
    /// The lone leaf `x`.
    pub fn leaf() -> Self {
        Self { root: Node::Leaf }
    }

    pub fn unary(op: UnaryOp, child: ActivationTree) -> Self {
        Self {
            root: Node::Unary(op, Box::new(child.root)),
        }
    }

    pub fn binary(op: BinaryOp, left: ActivationTree, right: ActivationTree) -> Self {
        Self {
            root: Node::Binary(op, Box::new(left.root), Box::new(right.root)),
        }
    }

    /// f(x). Errors on any non-finite intermediate.
    pub fn eval(&self, x: f64) -> Result<f64, NonFinite> {
        self.root.eval(x)
    }

    /// f(x) and f'(x) by forward-mode differentiation. The value component
    /// is bit-identical to [`eval`](Self::eval).
    pub fn eval_dual(&self, x: f64) -> Result<DualValue, NonFinite> {
        self.root.eval_dual(x)
    }

    /// Edge count of the longest root-to-leaf path. A lone leaf has depth 0.
    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn node_count(&self) -> usize {
        self.root.node_count()
    }

    /// Grows a random tree with depth in `[min_depth, max_depth]`. Below
    /// `min_depth` every node is an operator; at `max_depth` every node is
    /// the leaf; in between leaf/unary/binary are equally likely.
    pub fn random(rng: &mut Stream, min_depth: usize, max_depth: usize) -> Self {
        assert!(
            min_depth <= max_depth,
            "min_depth {min_depth} > max_depth {max_depth}"
        );
        Self {
            root: grow(rng, 0, min_depth, max_depth),
        }
    }

    pub(crate) fn leaf_paths(&self) -> Vec<NodePath> {
        let mut leaves = Vec::new();
        let mut internal = Vec::new();
        self.root
            .collect_paths(&mut Vec::new(), &mut leaves, &mut internal);
        leaves
    }

    pub(crate) fn internal_paths(&self) -> Vec<NodePath> {
        let mut leaves = Vec::new();
        let mut internal = Vec::new();
        self.root
            .collect_paths(&mut Vec::new(), &mut leaves, &mut internal);
        internal
    }

    pub(crate) fn arity_at(&self, path: &[usize]) -> usize {
        self.root.at(path).arity()
    }

    pub(crate) fn subtree(&self, path: &[usize]) -> ActivationTree {
        ActivationTree {
            root: self.root.at(path).clone(),
        }
    }

    pub(crate) fn replaced(&self, path: &[usize], sub: &ActivationTree) -> ActivationTree {
        ActivationTree {
            root: self.root.replaced(path, &sub.root),
        }
    }

    /// Kink arguments at `x`: the input value of every relu/leaky_relu/abs
    /// node and the left-right difference of every max/min node. Used by
    /// derivative tests to reject probe points whose finite-difference
    /// window straddles a kink.
    pub fn kink_arguments(&self, x: f64) -> Result<Vec<f64>, NonFinite> {
        fn walk(node: &Node, x: f64, out: &mut Vec<f64>) -> Result<f64, NonFinite> {
            let v = match node {
                Node::Leaf => x,
                Node::Unary(op, c) => {
                    let inner = walk(c, x, out)?;
                    if matches!(op, UnaryOp::Relu | UnaryOp::LeakyRelu | UnaryOp::Abs) {
                        out.push(inner);
                    }
                    op.apply(inner)
                }
                Node::Binary(op, l, r) => {
                    let a = walk(l, x, out)?;
                    let b = walk(r, x, out)?;
                    if matches!(op, BinaryOp::Max | BinaryOp::Min) {
                        out.push(a - b);
                    }
                    op.apply(a, b)
                }
            };
            if v.is_finite() {
                Ok(v)
            } else {
                Err(NonFinite)
            }
        }
        let mut out = Vec::new();
        walk(&self.root, x, &mut out)?;
        Ok(out)
    }
}

fn grow(rng: &mut Stream, depth: usize, min_depth: usize, max_depth: usize) -> Node {
    let choice = if depth >= max_depth {
        0
    } else if depth < min_depth {
        rng.random_range(1..3usize)
    } else {
        rng.random_range(0..3usize)
    };
    match choice {
        0 => Node::Leaf,
        1 => {
            let op = UnaryOp::ALL[rng.random_range(0..UnaryOp::ALL.len())];
            Node::Unary(op, Box::new(grow(rng, depth + 1, min_depth, max_depth)))
        }
        _ => {
            let op = BinaryOp::ALL[rng.random_range(0..BinaryOp::ALL.len())];
            Node::Binary(
                op,
                Box::new(grow(rng, depth + 1, min_depth, max_depth)),
                Box::new(grow(rng, depth + 1, min_depth, max_depth)),
            )
        }
    }
}

impl fmt::Display for ActivationTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.write(f)
    }
}

/// Parse failure for the prefix s-expression format, with the byte position
/// and what was expected there.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("parse error at byte {position}: expected {expected}, found {found}")]
pub struct ParseError {
    pub position: usize,
    pub expected: String,
    pub found: String,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Token<'a> {
    LParen(usize),
    RParen(usize),
    Atom(usize, &'a str),
}

impl Token<'_> {
    fn position(&self) -> usize {
        match *self {
            Token::LParen(p) | Token::RParen(p) => p,
            Token::Atom(p, _) => p,
        }
    }

    fn describe(&self) -> String {
        match self {
            Token::LParen(_) => "'('".to_string(),
            Token::RParen(_) => "')'".to_string(),
            Token::Atom(_, s) => format!("'{s}'"),
        }
    }
}

fn tokenize(text: &str) -> Vec<Token<'_>> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'(' => {
                tokens.push(Token::LParen(i));
                i += 1;
            }
            b')' => {
                tokens.push(Token::RParen(i));
                i += 1;
            }
            c if c.is_ascii_whitespace() => i += 1,
            _ => {
                let start = i;
                while i < bytes.len()
                    && !bytes[i].is_ascii_whitespace()
                    && bytes[i] != b'('
                    && bytes[i] != b')'
                {
                    i += 1;
                }
                tokens.push(Token::Atom(start, &text[start..i]));
            }
        }
    }
    tokens
}

struct Parser<'a> {
    tokens: Vec<Token<'a>>,
    pos: usize,
    len: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<Token<'a>> {
        self.tokens.get(self.pos).copied()
    }

    fn error(&self, expected: &str) -> ParseError {
        match self.peek() {
            Some(tok) => ParseError {
                position: tok.position(),
                expected: expected.to_string(),
                found: tok.describe(),
            },
            None => ParseError {
                position: self.len,
                expected: expected.to_string(),
                found: "end of input".to_string(),
            },
        }
    }

    fn parse_node(&mut self) -> Result<Node, ParseError> {
        match self.peek() {
            Some(Token::Atom(pos, s)) => {
                self.pos += 1;
                if s == "x" {
                    Ok(Node::Leaf)
                } else {
                    Err(ParseError {
                        position: pos,
                        expected: "'x' or '('".to_string(),
                        found: format!("'{s}'"),
                    })
                }
            }
            Some(Token::LParen(_)) => {
                self.pos += 1;
                let (pos, name) = match self.peek() {
                    Some(Token::Atom(p, s)) => {
                        self.pos += 1;
                        (p, s)
                    }
                    _ => return Err(self.error("operator name")),
                };
                let node = if let Some(op) = UnaryOp::from_name(name) {
                    Node::Unary(op, Box::new(self.parse_node()?))
                } else if let Some(op) = BinaryOp::from_name(name) {
                    let left = self.parse_node()?;
                    let right = self.parse_node()?;
                    Node::Binary(op, Box::new(left), Box::new(right))
                } else {
                    return Err(ParseError {
                        position: pos,
                        expected: "operator name".to_string(),
                        found: format!("'{name}'"),
                    });
                };
                match self.peek() {
                    Some(Token::RParen(_)) => {
                        self.pos += 1;
                        Ok(node)
                    }
                    _ => Err(self.error("')'")),
                }
            }
            _ => Err(self.error("'x' or '('")),
        }
    }
}

impl FromStr for ActivationTree {
    type Err = ParseError;

    fn from_str(text: &str) -> Result<Self, ParseError> {
        let mut parser = Parser {
            tokens: tokenize(text),
            pos: 0,
            len: text.len(),
        };
        let root = parser.parse_node()?;
        if parser.pos != parser.tokens.len() {
            return Err(parser.error("end of input"));
        }
        Ok(ActivationTree { root })
    }
}
