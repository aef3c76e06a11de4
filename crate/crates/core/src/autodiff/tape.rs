use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{EitError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Input,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Scale,
    Offset,
    Tanh,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Max,
    Softplus,
    Sigmoid,
    Powi,
}

/// One tape entry: value plus local partials with respect to up to two
/// parents, which always precede it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub op: Op,
    pub parents: [usize; 2],
    pub partials: [f64; 2],
    pub value: f64,
}

/// Append-only record of a scalar computation for reverse-mode
/// differentiation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a tape node.
#[derive(Debug, Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    index: usize,
    value: f64,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Leaf node.
    pub fn var(&self, value: f64) -> Var<'_> {
        self.push(Op::Input, [0, 0], [0.0, 0.0], value)
    }

    pub fn vars(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.var(v)).collect()
    }

    /// Copy of every node, for bitwise comparison of two recordings.
    pub fn snapshot(&self) -> Vec<Node> {
        self.nodes.borrow().clone()
    }

    fn push(&self, op: Op, parents: [usize; 2], partials: [f64; 2], value: f64) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let index = nodes.len();
        nodes.push(Node {
            op,
            parents,
            partials,
            value,
        });
        Var {
            tape: self,
            index,
            value,
        }
    }

    fn check(&self, v: &Var<'_>) -> Result<()> {
        if !std::ptr::eq(self, v.tape) || v.index >= self.len() {
            return Err(EitError::InvalidNode { index: v.index });
        }
        Ok(())
    }

    /// Adjoints of `output` with respect to every node on the tape.
    pub fn gradient(&self, output: Var<'_>) -> Result<Gradients> {
        self.check(&output)?;
        let nodes = self.nodes.borrow();
        let mut adj = vec![0.0; output.index + 1];
        adj[output.index] = 1.0;
        for i in (0..=output.index).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let n = &nodes[i];
            match n.op {
                Op::Input => {}
                Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Max => {
                    adj[n.parents[0]] += a * n.partials[0];
                    adj[n.parents[1]] += a * n.partials[1];
                }
                _ => adj[n.parents[0]] += a * n.partials[0],
            }
        }
        Ok(Gradients {
            tape: self as *const Tape,
            adjoints: adj,
        })
    }

    /// `∂output/∂w` for each `w` in `wrt`.
    pub fn grad(&self, output: Var<'_>, wrt: &[Var<'_>]) -> Result<Vec<f64>> {
        let g = self.gradient(output)?;
        wrt.iter().map(|w| g.get(w)).collect()
    }
}

/// Reverse-mode adjoints produced by [`Tape::gradient`].
#[derive(Debug, Clone)]
pub struct Gradients {
    tape: *const Tape,
    adjoints: Vec<f64>,
}

impl Gradients {
    pub fn get(&self, v: &Var<'_>) -> Result<f64> {
        if !std::ptr::eq(self.tape, v.tape) || v.index >= v.tape.len() {
            return Err(EitError::InvalidNode { index: v.index });
        }
        // Nodes recorded after the output do not influence it.
        Ok(self.adjoints.get(v.index).copied().unwrap_or(0.0))
    }
}

impl<'t> Var<'t> {
    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    fn unary(self, op: Op, partial: f64, value: f64) -> Var<'t> {
        self.tape.push(op, [self.index, 0], [partial, 0.0], value)
    }

    fn binary(self, other: Var<'t>, op: Op, partials: [f64; 2], value: f64) -> Var<'t> {
        assert!(std::ptr::eq(self.tape, other.tape), "operands recorded on different tapes");
        self.tape.push(op, [self.index, other.index], partials, value)
    }

    pub fn tanh(self) -> Var<'t> {
        let t = self.value.tanh();
        self.unary(Op::Tanh, 1.0 - t * t, t)
    }

    pub fn exp(self) -> Var<'t> {
        let e = self.value.exp();
        self.unary(Op::Exp, e, e)
    }

    pub fn ln(self) -> Var<'t> {
        self.unary(Op::Ln, 1.0 / self.value, self.value.ln())
    }

    pub fn sqrt(self) -> Var<'t> {
        let s = self.value.sqrt();
        self.unary(Op::Sqrt, 0.5 / s, s)
    }

    /// Subgradient 0 at the origin.
    pub fn abs(self) -> Var<'t> {
        let d = if self.value > 0.0 {
            1.0
        } else if self.value < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.unary(Op::Abs, d, self.value.abs())
    }

    /// Ties send the whole derivative to `self`.
    pub fn max(self, other: Var<'t>) -> Var<'t> {
        if self.value >= other.value {
            self.binary(other, Op::Max, [1.0, 0.0], self.value)
        } else {
            self.binary(other, Op::Max, [0.0, 1.0], other.value)
        }
    }

    pub fn softplus(self) -> Var<'t> {
        self.unary(Op::Softplus, sigmoid(self.value), softplus(self.value))
    }

    pub fn sigmoid(self) -> Var<'t> {
        let s = sigmoid(self.value);
        self.unary(Op::Sigmoid, s * (1.0 - s), s)
    }

    pub fn powi(self, n: i32) -> Var<'t> {
        let d = n as f64 * self.value.powi(n - 1);
        self.unary(Op::Powi, d, self.value.powi(n))
    }

    pub fn square(self) -> Var<'t> {
        self.powi(2)
    }
}

/// Numerically stable `ln(1 + e^z)`.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, o: Var<'t>) -> Var<'t> {
        self.binary(o, Op::Add, [1.0, 1.0], self.value + o.value)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, o: Var<'t>) -> Var<'t> {
        self.binary(o, Op::Sub, [1.0, -1.0], self.value - o.value)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, o: Var<'t>) -> Var<'t> {
        self.binary(o, Op::Mul, [o.value, self.value], self.value * o.value)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, o: Var<'t>) -> Var<'t> {
        let q = self.value / o.value;
        self.binary(o, Op::Div, [1.0 / o.value, -q / o.value], q)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(Op::Neg, -1.0, -self.value)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, c: f64) -> Var<'t> {
        self.unary(Op::Offset, 1.0, self.value + c)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, c: f64) -> Var<'t> {
        self.unary(Op::Offset, 1.0, self.value - c)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, c: f64) -> Var<'t> {
        self.unary(Op::Scale, c, self.value * c)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, c: f64) -> Var<'t> {
        self.unary(Op::Scale, 1.0 / c, self.value / c)
    }
}

impl<'t> Add<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn add(self, v: Var<'t>) -> Var<'t> {
        v + self
    }
}

impl<'t> Sub<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn sub(self, v: Var<'t>) -> Var<'t> {
        v.unary(Op::Offset, -1.0, self - v.value)
    }
}

impl<'t> Mul<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn mul(self, v: Var<'t>) -> Var<'t> {
        v * self
    }
}

/// Sum of a nonempty slice; a fresh zero leaf for an empty one.
pub fn sum<'t>(tape: &'t Tape, terms: &[Var<'t>]) -> Var<'t> {
    match terms.split_first() {
        None => tape.var(0.0),
        Some((first, rest)) => rest.iter().fold(*first, |acc, &t| acc + t),
    }
}

/// `Σ w_i x_i`.
pub fn dot<'t>(weights: &[Var<'t>], xs: &[Var<'t>]) -> Var<'t> {
    let mut it = weights.iter().zip(xs).map(|(&w, &x)| w * x);
    let first = it.next().expect("nonempty dot product");
    it.fold(first, |acc, t| acc + t)
}
