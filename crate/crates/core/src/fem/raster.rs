use crate::fem::FemSolution;
use crate::gridfield::{GridField, GridSource, GridSpec, PotentialGrid};
use crate::mesh::TriMesh;

/// Precomputed element and barycentric weights for every in-mask pixel.
#[derive(Debug, Clone)]
pub struct RasterMap {
    spec: GridSpec,
    /// `(pixel, element nodes, weights)`.
    entries: Vec<(usize, [usize; 3], [f64; 3])>,
}

impl RasterMap {
    pub fn new(mesh: &TriMesh, spec: &GridSpec) -> Self {
        let entries = spec
            .mask_indices()
            .into_iter()
            .filter_map(|i| {
                let (e, w) = mesh.locate_point(spec.coord(i)).element()?;
                Some((i, mesh.elements[e], w))
            })
            .collect();
        RasterMap {
            spec: spec.clone(),
            entries,
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    /// Interpolates nodal values onto the grid; masked pixels are NaN.
    pub fn apply(&self, nodal: &[f64]) -> Vec<f64> {
        let mut out = vec![f64::NAN; self.spec.len()];
        for &(i, nodes, w) in &self.entries {
            out[i] = w[0] * nodal[nodes[0]] + w[1] * nodal[nodes[1]] + w[2] * nodal[nodes[2]];
        }
        out
    }

    pub fn potential(&self, sol: &FemSolution, excitation_id: u32) -> PotentialGrid {
        GridField {
            spec: self.spec.clone(),
            values: self.apply(&sol.nodal_u),
            source: GridSource::Fem,
            excitation_id,
        }
    }
}

/// Barycentric interpolation of a nodal solution at every pixel center.
pub fn rasterize_potential(mesh: &TriMesh, sol: &FemSolution, grid: &GridSpec) -> PotentialGrid {
    RasterMap::new(mesh, grid).potential(sol, 0)
}
