use crate::error::{EitError, Result};
use crate::fem::sparse::CsrMatrix;
use crate::mesh::{Point, TriMesh};

/// Gradients of the three hat functions and the element area.
pub fn element_gradients(v: [Point; 3]) -> ([[f64; 2]; 3], f64) {
    let [a, b, c] = v;
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    let area = 0.5 * det;
    let g = [
        [(b[1] - c[1]) / det, (c[0] - b[0]) / det],
        [(c[1] - a[1]) / det, (a[0] - c[0]) / det],
        [(a[1] - b[1]) / det, (b[0] - a[0]) / det],
    ];
    (g, area)
}

/// Local P1 stiffness `σ·A·∇φ_i·∇φ_j`.
pub fn element_stiffness(v: [Point; 3], sigma: f64) -> [[f64; 3]; 3] {
    let (g, area) = element_gradients(v);
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = sigma * area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
        }
    }
    k
}

/// Global stiffness matrix for per-element conductivities.
pub fn assemble_stiffness(mesh: &TriMesh, sigma_elem: &[f64]) -> Result<CsrMatrix> {
    if sigma_elem.len() != mesh.n_elements() {
        return Err(EitError::ShapeMismatch {
            expected: mesh.n_elements(),
            got: sigma_elem.len(),
        });
    }
    let mut triplets = Vec::with_capacity(9 * mesh.n_elements());
    for (e, (&nodes, &s)) in mesh.elements.iter().zip(sigma_elem).enumerate() {
        if !(s > 0.0) || !s.is_finite() {
            return Err(EitError::InvalidConductivity { element: e, value: s });
        }
        let k = element_stiffness(mesh.vertices(e), s);
        for i in 0..3 {
            for j in 0..3 {
                triplets.push((nodes[i], nodes[j], k[i][j]));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(mesh.n_nodes(), triplets))
}
