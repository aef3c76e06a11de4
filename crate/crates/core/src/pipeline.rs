//! End-to-end building blocks shared by the CLI and the experiment drivers.

use std::f64::consts::PI;

use crate::error::Result;
use crate::fem::{add_noise, apply_excitation, assemble_stiffness, electrode_voltages, ExcitationPattern, NeumannSolver, NoiseSpec, RasterMap};
use crate::gridfield::{GridSpec, PotentialGrid};
use crate::mesh::TriMesh;
use crate::phantom::{element_sigma, Phantom};

/// FEM potential grids of `phantom` under each excitation; grid `k` carries
/// `excitation_id = k`.
pub fn fem_potential_grids(
    phantom: &Phantom,
    mesh: &TriMesh,
    spec: &GridSpec,
    excitations: &[ExcitationPattern],
) -> Result<Vec<PotentialGrid>> {
    noisy_potential_grids(phantom, mesh, spec, excitations, None)
}

/// As [`fem_potential_grids`], optionally perturbed by measurement noise.
///
/// Gaussian noise at `noise.snr_db` is drawn on the 16 electrode voltages of
/// each excitation (seed `noise.seed + k` for grid `k`). The perturbation
/// enters the grid as the harmonic function whose boundary trace
/// interpolates the zero-mean part of that noise at the electrode centers.
pub fn noisy_potential_grids(
    phantom: &Phantom,
    mesh: &TriMesh,
    spec: &GridSpec,
    excitations: &[ExcitationPattern],
    noise: Option<NoiseSpec>,
) -> Result<Vec<PotentialGrid>> {
    let k = assemble_stiffness(mesh, &element_sigma(phantom, mesh))?;
    let solver = NeumannSolver::new(&k)?;
    let raster = RasterMap::new(mesh, spec);
    let centers: Vec<f64> = mesh.arcs.iter().map(|a| a.center).collect();
    excitations
        .iter()
        .enumerate()
        .map(|(id, ex)| {
            let sol = solver.solve(&apply_excitation(mesh, ex))?;
            let mut grid = raster.potential(&sol, id as u32);
            if let Some(n) = noise {
                let v = electrode_voltages(mesh, &sol.nodal_u);
                let noisy = add_noise(&v, n.snr_db, n.seed.wrapping_add(id as u64));
                let dv: Vec<f64> = noisy.iter().zip(&v).map(|(a, b)| a - b).collect();
                let ext = HarmonicExtension::interpolating(&centers, &dv);
                for i in spec.mask_indices() {
                    grid.values[i] += ext.eval(spec.coord(i));
                }
            }
            Ok(grid)
        })
        .collect()
}

/// Harmonic polynomial `Σ rⁿ (aₙ cos nθ + bₙ sin nθ)`, `n ≥ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicExtension {
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl HarmonicExtension {
    /// Trigonometric interpolant of `values` at equispaced `angles`, with the
    /// mean removed. For even counts the alternating mode is carried by
    /// `cos n(θ - θ₀)`.
    pub fn interpolating(angles: &[f64], values: &[f64]) -> Self {
        let m = angles.len();
        let top = m / 2;
        let (mut cos, mut sin) = (vec![0.0; top], vec![0.0; top]);
        for n in 1..=top {
            let k = n as f64;
            if 2 * n == m {
                let c = values.iter().enumerate().map(|(j, v)| if j % 2 == 0 { *v } else { -*v }).sum::<f64>() / m as f64;
                cos[n - 1] = c * (k * angles[0]).cos();
                sin[n - 1] = c * (k * angles[0]).sin();
                continue;
            }
            let w = 2.0 / m as f64;
            for (&t, &v) in angles.iter().zip(values) {
                cos[n - 1] += w * v * (k * t).cos();
                sin[n - 1] += w * v * (k * t).sin();
            }
        }
        HarmonicExtension { cos, sin }
    }

    pub fn eval(&self, p: [f64; 2]) -> f64 {
        let r = p[0].hypot(p[1]);
        let t = p[1].atan2(p[0]);
        let mut rn = 1.0;
        let mut s = 0.0;
        for (n, (a, b)) in self.cos.iter().zip(&self.sin).enumerate() {
            rn *= r;
            let k = (n + 1) as f64;
            s += rn * (a * (k * t).cos() + b * (k * t).sin());
        }
        s
    }
}

/// Equispaced electrode-center angles `2πk/n + offset`.
pub fn equispaced(n: usize, offset: f64) -> Vec<f64> {
    (0..n).map(|k| offset + 2.0 * PI * k as f64 / n as f64).collect()
}
