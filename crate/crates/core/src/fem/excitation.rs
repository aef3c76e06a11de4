use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::mesh::TriMesh;

/// Angular frequency of the default sinusoidal pattern, radians per
/// electrode index.
pub const TRIG_OMEGA: f64 = PI / 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExcitationKind {
    /// `ζ_k = amplitude · sin(ω k + φ) / √(2π)` with one-based electrode
    /// index `k`.
    Trig { omega: f64, phase: f64 },
    /// `+amplitude` into `source`, `-amplitude` out of `sink` (zero-based).
    Adjacent { source: usize, sink: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcitationPattern {
    pub kind: ExcitationKind,
    pub amplitude: f64,
}

impl ExcitationPattern {
    pub fn trig(omega: f64, phase: f64) -> Self {
        ExcitationPattern {
            kind: ExcitationKind::Trig { omega, phase },
            amplitude: 1.0,
        }
    }

    /// Drive through electrodes `d` and `d + 1`.
    pub fn adjacent(d: usize, n_electrodes: usize) -> Self {
        ExcitationPattern {
            kind: ExcitationKind::Adjacent {
                source: d % n_electrodes,
                sink: (d + 1) % n_electrodes,
            },
            amplitude: 1.0,
        }
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }

    /// Total current through each electrode, shifted to sum to zero.
    pub fn electrode_currents(&self, n_electrodes: usize) -> Vec<f64> {
        let mut c = vec![0.0; n_electrodes];
        match self.kind {
            ExcitationKind::Trig { omega, phase } => {
                let s = self.amplitude / (2.0 * PI).sqrt();
                for (k, ck) in c.iter_mut().enumerate() {
                    *ck = s * (omega * (k + 1) as f64 + phase).sin();
                }
            }
            ExcitationKind::Adjacent { source, sink } => {
                c[source] += self.amplitude;
                c[sink] -= self.amplitude;
            }
        }
        let mean = c.iter().sum::<f64>() / n_electrodes as f64;
        c.iter_mut().for_each(|x| *x -= mean);
        c
    }
}

/// The four sinusoidal patterns used for inversion: `ω = π/8` at phases
/// `0, π/4, π/2, 3π/4`.
pub fn default_trig_patterns() -> Vec<ExcitationPattern> {
    trig_patterns(TRIG_OMEGA, 4)
}

/// `count` sinusoidal patterns at frequency `omega` with phases `kπ/count`.
pub fn trig_patterns(omega: f64, count: usize) -> Vec<ExcitationPattern> {
    (0..count)
        .map(|k| ExcitationPattern::trig(omega, PI * k as f64 / count as f64))
        .collect()
}

/// Per-node boundary current: each electrode's total current spread over
/// its nodes in proportion to boundary arc length.
pub fn apply_excitation(mesh: &TriMesh, pattern: &ExcitationPattern) -> Vec<f64> {
    let currents = pattern.electrode_currents(mesh.n_electrodes());
    let mut f = vec![0.0; mesh.n_nodes()];
    for (k, (group, weights)) in mesh.electrode_groups.iter().zip(&mesh.electrode_weights).enumerate() {
        let len = mesh.electrode_length(k);
        for (&n, &w) in group.iter().zip(weights) {
            f[n] += currents[k] * w / len;
        }
    }
    f
}

/// Consistent load vector `f_i = ∫ g φ_i ds` for a boundary flux density
/// `g(θ)`, integrated along each boundary edge with 3-point Gauss.
pub fn boundary_flux_load(mesh: &TriMesh, g: impl Fn(f64) -> f64) -> Vec<f64> {
    const GAUSS: [(f64, f64); 3] = [
        (0.112_701_665_379_258_31, 5.0 / 18.0),
        (0.5, 8.0 / 18.0),
        (0.887_298_334_620_741_7, 5.0 / 18.0),
    ];
    let mut f = vec![0.0; mesh.n_nodes()];
    for (a, b) in mesh.boundary_edges() {
        let (pa, pb) = (mesh.nodes[a], mesh.nodes[b]);
        let len = (pb[0] - pa[0]).hypot(pb[1] - pa[1]);
        for &(t, w) in &GAUSS {
            let q = [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])];
            let gv = g(q[1].atan2(q[0])) * w * len;
            f[a] += (1.0 - t) * gv;
            f[b] += t * gv;
        }
    }
    let mean = f.iter().sum::<f64>() / mesh.boundary_nodes.len() as f64;
    for &n in &mesh.boundary_nodes {
        f[n] -= mean;
    }
    f
}
