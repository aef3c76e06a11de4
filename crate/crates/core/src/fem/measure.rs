use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fem::excitation::{apply_excitation, ExcitationPattern};
use crate::fem::{assemble_stiffness, NeumannSolver};
use crate::mesh::TriMesh;
use crate::phantom::{element_sigma, Phantom};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Adjacent drive, adjacent measurement, skipping the pairs that touch a
    /// driven electrode: 13 values per drive.
    AdjacentSkip,
    /// Adjacent drive, all 16 adjacent measurement pairs.
    Full,
}

impl Protocol {
    pub fn len(self, n_electrodes: usize) -> usize {
        match self {
            Protocol::AdjacentSkip => n_electrodes * (n_electrodes - 3),
            Protocol::Full => n_electrodes * n_electrodes,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Protocol::AdjacentSkip => "adjacent_skip",
            Protocol::Full => "full",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "adjacent_skip" => Some(Protocol::AdjacentSkip),
            "full" => Some(Protocol::Full),
            _ => None,
        }
    }

    /// `(drive, measurement pair)` index of every value, in frame order.
    pub fn pairs(self, n_electrodes: usize) -> Vec<(usize, usize)> {
        let n = n_electrodes;
        let mut out = Vec::with_capacity(self.len(n));
        for d in 0..n {
            for m in 0..n {
                let touches = m == d || m == (d + 1) % n || (m + 1) % n == d;
                if self == Protocol::Full || !touches {
                    out.push((d, m));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub snr_db: f64,
    pub seed: u64,
}

/// Differential boundary voltages for one protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementFrame {
    pub protocol: Protocol,
    pub values: Vec<f64>,
    pub snr_db: Option<f64>,
}

/// Arc-length weighted mean potential over each electrode.
pub fn electrode_voltages(mesh: &TriMesh, u: &[f64]) -> Vec<f64> {
    mesh.electrode_groups
        .iter()
        .zip(&mesh.electrode_weights)
        .enumerate()
        .map(|(k, (g, w))| g.iter().zip(w).map(|(&n, &wn)| wn * u[n]).sum::<f64>() / mesh.electrode_length(k))
        .collect()
}

/// `m[d][p]`: voltage across pair `(p, p+1)` while driving `(d, d+1)`.
pub fn full_measurement_matrix(solver: &NeumannSolver, mesh: &TriMesh, amplitude: f64) -> Result<Vec<Vec<f64>>> {
    let n = mesh.n_electrodes();
    (0..n)
        .map(|d| {
            let pattern = ExcitationPattern::adjacent(d, n).with_amplitude(amplitude);
            let sol = solver.solve(&apply_excitation(mesh, &pattern))?;
            let v = electrode_voltages(mesh, &sol.nodal_u);
            Ok((0..n).map(|p| v[p] - v[(p + 1) % n]).collect())
        })
        .collect()
}

/// Noise-free frame from an already factored operator.
pub fn measure_frame(solver: &NeumannSolver, mesh: &TriMesh, protocol: Protocol, amplitude: f64) -> Result<MeasurementFrame> {
    let full = full_measurement_matrix(solver, mesh, amplitude)?;
    let values = protocol
        .pairs(mesh.n_electrodes())
        .into_iter()
        .map(|(d, m)| full[d][m])
        .collect();
    Ok(MeasurementFrame {
        protocol,
        values,
        snr_db: None,
    })
}

/// Adds zero-mean Gaussian noise with `10 log10(P_signal / P_noise) = snr_db`,
/// where `P_signal` is the mean square of `values`.
pub fn add_noise(values: &[f64], snr_db: f64, seed: u64) -> Vec<f64> {
    let power = values.iter().map(|v| v * v).sum::<f64>() / values.len().max(1) as f64;
    let std = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, std).expect("finite noise level");
    values.iter().map(|v| v + normal.sample(&mut rng)).collect()
}

/// Solves the forward problem for `phantom` and records one frame.
pub fn simulate_measurements(
    phantom: &Phantom,
    mesh: &TriMesh,
    protocol: Protocol,
    noise: Option<NoiseSpec>,
) -> Result<MeasurementFrame> {
    let k = assemble_stiffness(mesh, &element_sigma(phantom, mesh))?;
    let solver = NeumannSolver::new(&k)?;
    let mut frame = measure_frame(&solver, mesh, protocol, 1.0)?;
    if let Some(spec) = noise {
        frame.values = add_noise(&frame.values, spec.snr_db, spec.seed);
        frame.snr_db = Some(spec.snr_db);
    }
    Ok(frame)
}
