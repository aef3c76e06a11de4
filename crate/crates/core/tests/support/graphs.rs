//! Random expression graphs for reverse-mode gradient checks.

use eit_core::autodiff::{Tape, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random expression DAG over a few inputs.
#[derive(Debug, Clone, Copy)]
pub enum GraphOp {
    Add(usize, usize),
    Mul(usize, usize),
    Tanh(usize),
    Exp(usize),
    Max(usize, usize),
}

pub struct Graph {
    pub inputs: usize,
    pub ops: Vec<GraphOp>,
}

impl Graph {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let inputs = rng.random_range(1..=4);
        let len = rng.random_range(3..=20);
        let mut ops = Vec::with_capacity(len);
        for i in 0..len {
            let n = inputs + i;
            let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
            ops.push(match rng.random_range(0..5) {
                0 => GraphOp::Add(a, b),
                1 => GraphOp::Mul(a, b),
                2 => GraphOp::Tanh(a),
                3 => GraphOp::Exp(a),
                _ => GraphOp::Max(a, b),
            });
        }
        Graph { inputs, ops }
    }

    /// Node values plus the smallest gap between the arguments of any max.
    pub fn eval(&self, x: &[f64]) -> (Vec<f64>, f64) {
        let mut v = x.to_vec();
        let mut gap = f64::INFINITY;
        for op in &self.ops {
            let y = match *op {
                GraphOp::Add(a, b) => v[a] + v[b],
                GraphOp::Mul(a, b) => v[a] * v[b],
                GraphOp::Tanh(a) => v[a].tanh(),
                GraphOp::Exp(a) => v[a].exp(),
                GraphOp::Max(a, b) => {
                    if a != b {
                        gap = gap.min((v[a] - v[b]).abs());
                    }
                    v[a].max(v[b])
                }
            };
            v.push(y);
        }
        (v, gap)
    }

    pub fn record<'t>(&self, x: &[Var<'t>]) -> Var<'t> {
        let mut v = x.to_vec();
        for op in &self.ops {
            let y = match *op {
                GraphOp::Add(a, b) => v[a] + v[b],
                GraphOp::Mul(a, b) => v[a] * v[b],
                GraphOp::Tanh(a) => v[a].tanh(),
                GraphOp::Exp(a) => v[a].exp(),
                GraphOp::Max(a, b) => v[a].max(v[b]),
            };
            v.push(y);
        }
        *v.last().expect("non-empty graph")
    }
}

/// Relative gradient errors of `count` random graphs whose max nodes are at
/// least `1e-3` from their kink, against central differences.
pub fn gradient_check_suite(count: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut errors = Vec::with_capacity(count);
    while errors.len() < count {
        let g = Graph::random(&mut rng);
        let x: Vec<f64> = (0..g.inputs).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (vals, gap) = g.eval(&x);
        let out = *vals.last().unwrap();
        if gap < 1e-3 || !out.is_finite() || out.abs() > 1e6 {
            continue;
        }
        let tape = Tape::new();
        let xs = tape.vars(&x);
        let y = g.record(&xs);
        assert_eq!(y.value(), out);
        let grad = tape.grad(y, &xs).unwrap();
        let h = 1e-6;
        let fd: Vec<f64> = (0..g.inputs)
            .map(|i| {
                let (mut p, mut m) = (x.clone(), x.clone());
                p[i] += h;
                m[i] -= h;
                (g.eval(&p).0.last().unwrap() - g.eval(&m).0.last().unwrap()) / (2.0 * h)
            })
            .collect();
        let diff = grad.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = fd.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
        errors.push(diff / scale);
    }
    errors
}
