use crate::error::{EitError, Result};
use crate::fem::sparse::{CsrMatrix, SkylineCholesky};
use crate::mesh::{Point, TriMesh};

/// Nodal potential with zero mean over all nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct FemSolution {
    pub nodal_u: Vec<f64>,
}

/// Factored pure-Neumann operator, reusable across right-hand sides.
///
/// The constant nullspace is removed by pinning node 0 during factorization
/// and projecting the result onto zero mean, which selects the same solution
/// as a zero-mean constraint.
#[derive(Debug, Clone)]
pub struct NeumannSolver {
    stiffness: CsrMatrix,
    factor: SkylineCholesky,
}

const PINNED: usize = 0;

impl NeumannSolver {
    pub fn new(stiffness: &CsrMatrix) -> Result<Self> {
        let factor = SkylineCholesky::factor(stiffness, &[PINNED])?;
        Ok(NeumannSolver {
            stiffness: stiffness.clone(),
            factor,
        })
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    pub fn n(&self) -> usize {
        self.stiffness.n
    }

    pub fn solve(&self, current: &[f64]) -> Result<FemSolution> {
        if current.len() != self.n() {
            return Err(EitError::ShapeMismatch {
                expected: self.n(),
                got: current.len(),
            });
        }
        let sum: f64 = current.iter().sum();
        let scale = current.iter().map(|c| c.abs()).sum::<f64>().max(1.0);
        if sum.abs() > 1e-10 * scale {
            return Err(EitError::Compatibility { sum });
        }
        let mut u = current.to_vec();
        u[PINNED] = 0.0;
        self.factor.solve_in_place(&mut u);
        let mean = u.iter().sum::<f64>() / u.len() as f64;
        u.iter_mut().for_each(|x| *x -= mean);
        Ok(FemSolution { nodal_u: u })
    }
}

/// One-shot Neumann solve `K u = current`, `mean(u) = 0`.
pub fn solve_neumann(stiffness: &CsrMatrix, current: &[f64]) -> Result<FemSolution> {
    NeumannSolver::new(stiffness)?.solve(current)
}

/// Gauge-invariant L2 distance between a nodal P1 field and `exact`:
/// the area-weighted mean of the difference is removed first. Uses the
/// edge-midpoint rule on each element.
pub fn l2_error(mesh: &TriMesh, nodal: &[f64], exact: impl Fn(Point) -> f64) -> f64 {
    let mut samples = Vec::with_capacity(3 * mesh.n_elements());
    for (e, nodes) in mesh.elements.iter().enumerate() {
        let v = mesh.vertices(e);
        let w = mesh.signed_area(e) / 3.0;
        for k in 0..3 {
            let (i, j) = (k, (k + 1) % 3);
            let p = [0.5 * (v[i][0] + v[j][0]), 0.5 * (v[i][1] + v[j][1])];
            let uh = 0.5 * (nodal[nodes[i]] + nodal[nodes[j]]);
            samples.push((w, uh - exact(p)));
        }
    }
    let area: f64 = samples.iter().map(|s| s.0).sum();
    let mean = samples.iter().map(|(w, d)| w * d).sum::<f64>() / area;
    samples.iter().map(|(w, d)| w * (d - mean).powi(2)).sum::<f64>().sqrt()
}
