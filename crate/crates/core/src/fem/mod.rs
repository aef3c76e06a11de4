//! Linear finite elements for `-∇·(σ∇u) = 0` with Neumann electrode data.

mod excitation;
mod measure;
mod raster;
mod solve;
pub mod sparse;
mod stiffness;

pub use excitation::{
    apply_excitation, boundary_flux_load, default_trig_patterns, trig_patterns, ExcitationKind, ExcitationPattern, TRIG_OMEGA,
};
pub use measure::{
    add_noise, electrode_voltages, full_measurement_matrix, measure_frame, simulate_measurements, MeasurementFrame,
    NoiseSpec, Protocol,
};
pub use raster::{rasterize_potential, RasterMap};
pub use solve::{l2_error, solve_neumann, FemSolution, NeumannSolver};
pub use sparse::CsrMatrix;
pub use stiffness::{assemble_stiffness, element_gradients, element_stiffness};
