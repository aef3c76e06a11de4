//! One-step linearized Gauss-Newton reconstructions from σ ≡ 1 with
//! Tikhonov, NOSER and total-variation priors.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;

use crate::error::{EitError, Result};
use crate::fem::{
    apply_excitation, assemble_stiffness, element_gradients, measure_frame, ExcitationPattern, MeasurementFrame,
    NeumannSolver, Protocol,
};
use crate::gridfield::{GridField, GridSource, GridSpec, SigmaGrid};
use crate::mesh::TriMesh;

pub const NOSER_EXPONENT: f64 = 0.5;
pub const TV_ITERATIONS: usize = 30;
/// Smoothing of `√((Dσ)² + β)` in the TV objective.
pub const TV_BETA: f64 = 1e-4;
/// Conjugate-gradient iterations per lagged-diffusivity step.
pub const TV_CG_ITERATIONS: usize = 300;
/// Multiples of the mean diagonal of `J R⁻¹ Jᵀ` tried by [`lambda_sweep`].
pub const LAMBDA_SWEEP: [f64; 8] = [1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0];
/// Multiple of the data-term scale used as λ when no truth is available
/// to select one.
pub const DEFAULT_LAMBDA_FACTOR: f64 = 1e-2;

/// Sensitivities `∂V_m / ∂σ_e` at `sigma_ref`.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    /// Rows follow the protocol's frame order, columns the mesh elements.
    pub matrix: Array2<f64>,
    pub sigma_ref: Vec<f64>,
    pub protocol: Protocol,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prior {
    /// `R = diag(JᵀJ)^p`.
    Noser { p: f64 },
    Tikhonov,
    /// Lagged-diffusivity iterations on the element adjacency graph.
    Tv { iterations: usize },
}

impl Prior {
    pub fn noser() -> Self {
        Prior::Noser { p: NOSER_EXPONENT }
    }

    pub fn tv() -> Self {
        Prior::Tv {
            iterations: TV_ITERATIONS,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Prior::Noser { .. } => "noser",
            Prior::Tikhonov => "l2",
            Prior::Tv { .. } => "tv",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "noser" => Some(Prior::noser()),
            "l2" | "tikhonov" => Some(Prior::Tikhonov),
            "tv" => Some(Prior::tv()),
            _ => None,
        }
    }
}

/// Adjoint sensitivities. With adjacent drives the adjoint field of the
/// measurement pair `(m, m+1)` is the unit-current drive field of that pair,
/// so each entry is `−A ∫_e ∇u_d · ∇u_m` with `A` the drive amplitude.
pub fn compute_jacobian(mesh: &TriMesh, sigma_ref: &[f64], protocol: Protocol, amplitude: f64) -> Result<Jacobian> {
    if sigma_ref.len() != mesh.n_elements() {
        return Err(EitError::ShapeMismatch {
            expected: mesh.n_elements(),
            got: sigma_ref.len(),
        });
    }
    let k = assemble_stiffness(mesh, sigma_ref)?;
    let solver = NeumannSolver::new(&k)?;
    let n = mesh.n_electrodes();
    let fields: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|d| Ok(solver.solve(&apply_excitation(mesh, &ExcitationPattern::adjacent(d, n)))?.nodal_u))
        .collect::<Result<_>>()?;
    // Per-element gradient of every drive field.
    let ne = mesh.n_elements();
    let mut grads = vec![[0.0f64; 2]; n * ne];
    let mut areas = vec![0.0; ne];
    for e in 0..ne {
        let (g, area) = element_gradients(mesh.vertices(e));
        areas[e] = area;
        let nodes = mesh.elements[e];
        for (d, u) in fields.iter().enumerate() {
            let mut gu = [0.0; 2];
            for (j, &node) in nodes.iter().enumerate() {
                gu[0] += g[j][0] * u[node];
                gu[1] += g[j][1] * u[node];
            }
            grads[d * ne + e] = gu;
        }
    }
    let pairs = protocol.pairs(n);
    let data: Vec<f64> = pairs
        .par_iter()
        .flat_map_iter(|&(d, m)| {
            let (gd, gm, areas) = (&grads[d * ne..(d + 1) * ne], &grads[m * ne..(m + 1) * ne], &areas);
            (0..ne).map(move |e| -amplitude * areas[e] * (gd[e][0] * gm[e][0] + gd[e][1] * gm[e][1]))
        })
        .collect();
    let matrix = Array2::from_shape_vec((pairs.len(), ne), data).expect("row-major jacobian");
    Ok(Jacobian {
        matrix,
        sigma_ref: sigma_ref.to_vec(),
        protocol,
    })
}

/// Per-element estimate and, for TV, the objective before each lagged
/// step and after the last one.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineReconstruction {
    pub element_sigma: Vec<f64>,
    pub delta: Vec<f64>,
    pub tv_objective: Vec<f64>,
}

/// Jacobian and homogeneous prediction at σ ≡ 1, shared by every prior and
/// every regularization weight.
#[derive(Debug, Clone)]
pub struct BaselineSolver {
    pub jacobian: Jacobian,
    pub homogeneous: Vec<f64>,
    /// `(element, element, shared edge length)` for every interior edge.
    adjacency: Vec<(usize, usize, f64)>,
    amplitude: f64,
}

impl BaselineSolver {
    pub fn new(mesh: &TriMesh, protocol: Protocol, amplitude: f64) -> Result<Self> {
        let ones = vec![1.0; mesh.n_elements()];
        let jacobian = compute_jacobian(mesh, &ones, protocol, amplitude)?;
        let solver = NeumannSolver::new(&assemble_stiffness(mesh, &ones)?)?;
        let homogeneous = measure_frame(&solver, mesh, protocol, amplitude)?.values;
        Ok(BaselineSolver {
            jacobian,
            homogeneous,
            adjacency: element_adjacency(mesh),
            amplitude,
        })
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    fn prior_weights(&self, prior: Prior) -> Array1<f64> {
        let j = &self.jacobian.matrix;
        match prior {
            Prior::Noser { p } => j.map_axis(Axis(0), |c| c.dot(&c).powf(p)),
            Prior::Tikhonov | Prior::Tv { .. } => Array1::ones(j.ncols()),
        }
    }

    /// Mean diagonal of `J R⁻¹ Jᵀ`; the natural unit of `λ_reg`.
    pub fn lambda_scale(&self, prior: Prior) -> f64 {
        let r = self.prior_weights(prior);
        let j = &self.jacobian.matrix;
        let total: f64 = j
            .axis_iter(Axis(0))
            .map(|row| row.iter().zip(&r).map(|(a, w)| a * a / w).sum::<f64>())
            .sum();
        total / j.nrows() as f64
    }

    pub fn residual(&self, frame: &MeasurementFrame) -> Result<Array1<f64>> {
        if frame.protocol != self.jacobian.protocol || frame.values.len() != self.homogeneous.len() {
            return Err(EitError::ShapeMismatch {
                expected: self.homogeneous.len(),
                got: frame.values.len(),
            });
        }
        Ok(frame.values.iter().zip(&self.homogeneous).map(|(v, h)| v - h).collect())
    }

    pub fn reconstruct(&self, frame: &MeasurementFrame, prior: Prior, lambda: f64) -> Result<BaselineReconstruction> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(EitError::InvalidConfig(format!("lambda_reg must be > 0, got {lambda}")));
        }
        let r = self.residual(frame)?;
        let (delta, tv_objective) = match prior {
            Prior::Tv { iterations } => self.solve_tv(&r, lambda, iterations),
            _ => (self.solve_quadratic(&r, &self.prior_weights(prior), lambda)?, Vec::new()),
        };
        Ok(BaselineReconstruction {
            element_sigma: delta.iter().map(|d| 1.0 + d).collect(),
            delta: delta.to_vec(),
            tv_objective,
        })
    }

    /// `(JᵀJ + λR)⁻¹ Jᵀ r` for diagonal `R`, through the measurement-space
    /// system `(J R⁻¹ Jᵀ + λI) y = r`, `Δσ = R⁻¹ Jᵀ y`.
    fn solve_quadratic(&self, r: &Array1<f64>, weights: &Array1<f64>, lambda: f64) -> Result<Array1<f64>> {
        let j = &self.jacobian.matrix;
        let jr = j / weights;
        let mut gram = jr.dot(&j.t());
        gram.diag_mut().iter_mut().for_each(|g| *g += lambda);
        let y = cholesky_solve(gram, r.view()).ok_or(EitError::RegularizationTooSmall { lambda })?;
        Ok(jr.t().dot(&y))
    }

    /// `‖JΔ − r‖² + λ Σ ℓ √((DΔ)² + β)` over interior element edges.
    pub fn tv_objective(&self, r: &Array1<f64>, delta: &Array1<f64>, lambda: f64) -> f64 {
        let misfit = self.jacobian.matrix.dot(delta) - r;
        let tv: f64 = self
            .adjacency
            .iter()
            .map(|&(a, b, l)| l * ((delta[a] - delta[b]).powi(2) + TV_BETA).sqrt())
            .sum();
        misfit.dot(&misfit) + lambda * tv
    }

    /// Lagged diffusivity: each step minimizes the quadratic majorizer
    /// `‖JΔ − r‖² + (λ/2) Σ w (DΔ)²` with `w = ℓ / √((DΔ_old)² + β)` by
    /// Jacobi-preconditioned conjugate gradients warm-started at `Δ_old`,
    /// so the objective cannot increase.
    fn solve_tv(&self, r: &Array1<f64>, lambda: f64, iterations: usize) -> (Array1<f64>, Vec<f64>) {
        let j = &self.jacobian.matrix;
        let ne = j.ncols();
        let rhs = j.t().dot(r);
        let col_sq = j.map_axis(Axis(0), |c| c.dot(&c));
        let mut x = Array1::zeros(ne);
        let mut history = vec![self.tv_objective(r, &x, lambda)];
        for _ in 0..iterations {
            let w: Vec<f64> = self
                .adjacency
                .iter()
                .map(|&(a, b, l)| 0.5 * lambda * l / ((x[a] - x[b]).powi(2) + TV_BETA).sqrt())
                .collect();
            let apply = |v: &Array1<f64>| {
                let mut out = j.t().dot(&j.dot(v));
                for (&(a, b, _), &wk) in self.adjacency.iter().zip(&w) {
                    let d = wk * (v[a] - v[b]);
                    out[a] += d;
                    out[b] -= d;
                }
                out
            };
            let mut diag = col_sq.clone();
            for (&(a, b, _), &wk) in self.adjacency.iter().zip(&w) {
                diag[a] += wk;
                diag[b] += wk;
            }
            x = conjugate_gradient(apply, &rhs, x, &diag, TV_CG_ITERATIONS);
            history.push(self.tv_objective(r, &x, lambda));
        }
        (x, history)
    }
}

/// Interior edges of the element adjacency graph.
pub fn element_adjacency(mesh: &TriMesh) -> Vec<(usize, usize, f64)> {
    let mut owner = std::collections::HashMap::new();
    let mut out = Vec::new();
    for (e, &[a, b, c]) in mesh.elements.iter().enumerate() {
        for (p, q) in [(a, b), (b, c), (c, a)] {
            match owner.remove(&(q, p)) {
                Some(other) => {
                    let (u, v) = (mesh.nodes[p], mesh.nodes[q]);
                    let len = ((u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2)).sqrt();
                    out.push((other, e, len));
                }
                None => {
                    owner.insert((p, q), e);
                }
            }
        }
    }
    out.sort_unstable_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
    out
}

fn conjugate_gradient(
    apply: impl Fn(&Array1<f64>) -> Array1<f64>,
    b: &Array1<f64>,
    mut x: Array1<f64>,
    diag: &Array1<f64>,
    max_iter: usize,
) -> Array1<f64> {
    let mut r = b - &apply(&x);
    let tol = 1e-12 * b.dot(b);
    let mut z = &r / diag;
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    for _ in 0..max_iter {
        if r.dot(&r) <= tol {
            break;
        }
        let ap = apply(&p);
        let pap = p.dot(&ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        x.scaled_add(alpha, &p);
        r.scaled_add(-alpha, &ap);
        z = &r / diag;
        let rz_new = r.dot(&z);
        p = &z + &(rz_new / rz * &p);
        rz = rz_new;
    }
    x
}

/// Relative pivot below which a dense system counts as singular.
const PIVOT_TOLERANCE: f64 = 1e-13;

/// Dense Cholesky solve of an SPD system; `None` if a pivot falls below
/// [`PIVOT_TOLERANCE`] times its original diagonal entry.
fn cholesky_solve(mut a: Array2<f64>, b: ArrayView1<f64>) -> Option<Array1<f64>> {
    let n = a.nrows();
    for k in 0..n {
        let mut d = a[[k, k]];
        let floor = PIVOT_TOLERANCE * d.abs();
        for j in 0..k {
            d -= a[[k, j]] * a[[k, j]];
        }
        if !(d > floor) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        a[[k, k]] = d;
        for i in k + 1..n {
            let mut s = a[[i, k]];
            for j in 0..k {
                s -= a[[i, j]] * a[[k, j]];
            }
            a[[i, k]] = s / d;
        }
    }
    let mut y = b.to_owned();
    for i in 0..n {
        for j in 0..i {
            y[i] -= a[[i, j]] * y[j];
        }
        y[i] /= a[[i, i]];
    }
    for i in (0..n).rev() {
        for j in i + 1..n {
            y[i] -= a[[j, i]] * y[j];
        }
        y[i] /= a[[i, i]];
    }
    Some(y)
}

/// Pixel-to-element lookup for per-element fields.
#[derive(Debug, Clone)]
pub struct ElementRaster {
    spec: GridSpec,
    entries: Vec<(usize, usize)>,
}

impl ElementRaster {
    pub fn new(mesh: &TriMesh, spec: &GridSpec) -> Self {
        let entries = spec
            .mask_indices()
            .into_iter()
            .filter_map(|i| Some((i, mesh.locate_point(spec.coord(i)).element()?.0)))
            .collect();
        ElementRaster {
            spec: spec.clone(),
            entries,
        }
    }

    pub fn apply(&self, element_values: &[f64]) -> SigmaGrid {
        let mut values = vec![f64::NAN; self.spec.len()];
        for &(i, e) in &self.entries {
            values[i] = element_values[e];
        }
        GridField {
            spec: self.spec.clone(),
            values,
            source: GridSource::Sigma,
            excitation_id: 0,
        }
    }
}

/// One sweep entry.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub lambda: f64,
    pub ssim: f64,
    pub sigma_grid: SigmaGrid,
}

/// Reconstructs at every multiple in [`LAMBDA_SWEEP`] of
/// [`BaselineSolver::lambda_scale`] and returns all points plus the index of
/// the one with the highest SSIM against `truth` (the first on ties).
pub fn lambda_sweep(
    solver: &BaselineSolver,
    raster: &ElementRaster,
    frame: &MeasurementFrame,
    prior: Prior,
    truth: &SigmaGrid,
) -> Result<(Vec<SweepPoint>, usize)> {
    let scale = solver.lambda_scale(prior);
    let mut points = Vec::with_capacity(LAMBDA_SWEEP.len());
    for f in LAMBDA_SWEEP {
        let lambda = f * scale;
        let rec = solver.reconstruct(frame, prior, lambda)?;
        let grid = raster.apply(&rec.element_sigma);
        points.push(SweepPoint {
            lambda,
            ssim: crate::metrics::ssim(&grid, truth)?,
            sigma_grid: grid,
        });
    }
    let best = (0..points.len()).fold(0, |b, i| if points[i].ssim > points[b].ssim { i } else { b });
    Ok((points, best))
}
