use crate::autodiff::{sum, SigmaNet, Tape, Var};
use crate::error::{EitError, Result};
use crate::fem::ExcitationPattern;
use crate::gridfield::{
    d2dx2, d2dy2, ddx, ddy, normal_derivative_ring, ring_current_density, GridSpec, PotentialGrid, StencilSets,
};
use crate::mesh::{ElectrodeArc, Point};
use crate::pinn::InverseConfig;

/// Finite-difference data of one potential grid.
#[derive(Debug, Clone)]
pub struct GridTerms {
    pub excitation_id: u32,
    /// Per interior point.
    pub ux: Vec<f64>,
    pub uy: Vec<f64>,
    pub lap: Vec<f64>,
    /// Positions (into the problem's point list) of ring pixels with a usable
    /// normal derivative.
    pub ring_pos: Vec<usize>,
    pub normal_derivative: Vec<f64>,
    /// Applied current density at `ring_pos`.
    pub zeta: Vec<f64>,
}

/// Collocation points and stencil data shared by every loss evaluation.
#[derive(Debug, Clone)]
pub struct InverseProblem {
    pub spec: GridSpec,
    /// Every in-mask pixel center, row-major.
    pub points: Vec<Point>,
    /// Pixel index of each point.
    pub pixels: Vec<usize>,
    /// Positions of interior points.
    pub interior: Vec<usize>,
    /// Positions of all ring points.
    pub ring: Vec<usize>,
    pub grids: Vec<GridTerms>,
}

impl InverseProblem {
    /// Grid `k` must carry `excitation_id = k` and pairs with
    /// `excitations[k]`.
    pub fn new(grids: &[PotentialGrid], excitations: &[ExcitationPattern], arcs: &[ElectrodeArc]) -> Result<Self> {
        let first = grids
            .first()
            .ok_or_else(|| EitError::InvalidConfig("at least one potential grid is required".into()))?;
        if grids.len() != excitations.len() {
            return Err(EitError::ShapeMismatch {
                expected: excitations.len(),
                got: grids.len(),
            });
        }
        let spec = first.spec.clone();
        let pixels = spec.mask_indices();
        let mut pos = vec![usize::MAX; spec.len()];
        for (k, &i) in pixels.iter().enumerate() {
            pos[i] = k;
        }
        let points = pixels.iter().map(|&i| spec.coord(i)).collect();
        let sets = StencilSets::new(&spec);
        let interior: Vec<usize> = sets.interior.iter().map(|&i| pos[i]).collect();
        let ring = sets.ring.iter().map(|&i| pos[i]).collect();
        let mut terms = Vec::with_capacity(grids.len());
        for (k, (g, ex)) in grids.iter().zip(excitations).enumerate() {
            if g.spec != spec {
                return Err(EitError::GridMismatch);
            }
            if g.excitation_id != k as u32 {
                return Err(EitError::ExcitationMismatch {
                    grid: g.excitation_id,
                    expected: k as u32,
                });
            }
            let (dx, dy, xx, yy) = (ddx(g), ddy(g), d2dx2(g), d2dy2(g));
            let nd = normal_derivative_ring(g);
            let currents = ex.electrode_currents(arcs.len());
            let zeta = ring_current_density(&spec, &nd.pixels, arcs, &currents);
            terms.push(GridTerms {
                excitation_id: g.excitation_id,
                ux: sets.interior.iter().map(|&i| dx[i]).collect(),
                uy: sets.interior.iter().map(|&i| dy[i]).collect(),
                lap: sets.interior.iter().map(|&i| xx[i] + yy[i]).collect(),
                ring_pos: nd.pixels.iter().map(|&i| pos[i]).collect(),
                normal_derivative: nd.values,
                zeta,
            });
        }
        Ok(InverseProblem {
            spec,
            points,
            pixels,
            interior,
            ring,
            grids: terms,
        })
    }

    /// Interior points.
    pub fn interior_points(&self) -> Vec<Point> {
        self.interior.iter().map(|&k| self.points[k]).collect()
    }
}

/// Unweighted loss components and the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub pde_mse: f64,
    pub pde_top: f64,
    pub neumann: f64,
    pub boundary: f64,
    pub hinge: f64,
    pub tv: f64,
    pub param: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub const CSV_HEADER: &'static str = "iteration,pde_mse,pde_top,neumann,boundary,hinge,tv,param,total";

    pub fn csv_row(&self, iteration: usize) -> String {
        format!(
            "{iteration},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            self.pde_mse, self.pde_top, self.neumann, self.boundary, self.hinge, self.tv, self.param, self.total
        )
    }

    pub fn is_finite(&self) -> bool {
        [
            self.pde_mse,
            self.pde_top,
            self.neumann,
            self.boundary,
            self.hinge,
            self.tv,
            self.param,
            self.total,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// `∇σ·∇u + σΔu` at interior points. `sigma` and `grad` are indexed by
/// problem point.
pub fn pde_residual(problem: &InverseProblem, g: &GridTerms, sigma: &[f64], grad: &[[f64; 2]]) -> Vec<f64> {
    problem
        .interior
        .iter()
        .enumerate()
        .map(|(j, &k)| grad[k][0] * g.ux[j] + grad[k][1] * g.uy[j] + sigma[k] * g.lap[j])
        .collect()
}

/// `σ ∂u/∂n − ζ` at the grid's usable ring points.
pub fn neumann_residual(g: &GridTerms, sigma: &[f64]) -> Vec<f64> {
    g.ring_pos
        .iter()
        .zip(&g.normal_derivative)
        .zip(&g.zeta)
        .map(|((&k, &nd), &z)| sigma[k] * nd - z)
        .collect()
}

/// `σ − σ*` at every ring point.
pub fn boundary_sigma_residual(problem: &InverseProblem, sigma: &[f64], sigma_star: f64) -> Vec<f64> {
    problem.ring.iter().map(|&k| sigma[k] - sigma_star).collect()
}

/// `√(σx² + σy² + ξ)`.
pub fn tv_value(grad: [f64; 2], xi: f64) -> f64 {
    (grad[0] * grad[0] + grad[1] * grad[1] + xi).sqrt()
}

/// `max(0, threshold − σ)`.
pub fn hinge_value(sigma: f64, threshold: f64) -> f64 {
    (threshold - sigma).max(0.0)
}

/// Indices of the `t` largest `|values|`, ties broken by lower index. `t` is
/// clamped to the length.
pub fn top_t_indices(values: &[f64], t: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()).then(a.cmp(&b)));
    idx.truncate(t.min(values.len()));
    idx
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Loss value and its adjoints with respect to σ and ∇σ at every point.
#[derive(Debug, Clone)]
pub struct LossAdjoints {
    pub breakdown: LossBreakdown,
    pub g_sigma: Vec<f64>,
    pub g_grad: Vec<[f64; 2]>,
}

/// Evaluates the inverse loss given network outputs at every problem point.
/// `weight_norm_sq` is `Σ w²` over network weights.
pub fn loss_from_outputs(
    problem: &InverseProblem,
    config: &InverseConfig,
    sigma: &[f64],
    grad: &[[f64; 2]],
    weight_norm_sq: f64,
) -> LossAdjoints {
    let n = problem.points.len();
    let mut gs = vec![0.0; n];
    let mut gg = vec![[0.0; 2]; n];
    let mut b = LossBreakdown::default();
    let n_grids = problem.grids.len() as f64;
    let n_int = problem.interior.len() as f64;
    let t = config.top_t.min(problem.interior.len()).max(1);
    for g in &problem.grids {
        let r = pde_residual(problem, g, sigma, grad);
        // d/dr of α·mean(r²)/G and β·topmean|r|/G.
        let mut dr: Vec<f64> = r.iter().map(|&v| config.alpha * 2.0 * v / (n_int * n_grids)).collect();
        b.pde_mse += r.iter().map(|v| v * v).sum::<f64>() / n_int / n_grids;
        let top = top_t_indices(&r, t);
        b.pde_top += top.iter().map(|&j| r[j].abs()).sum::<f64>() / t as f64 / n_grids;
        for &j in &top {
            dr[j] += config.beta * sign(r[j]) / (t as f64 * n_grids);
        }
        for (j, &k) in problem.interior.iter().enumerate() {
            gs[k] += dr[j] * g.lap[j];
            gg[k][0] += dr[j] * g.ux[j];
            gg[k][1] += dr[j] * g.uy[j];
        }
        let nr = neumann_residual(g, sigma);
        let m = nr.len().max(1) as f64;
        b.neumann += nr.iter().map(|v| v.abs()).sum::<f64>() / m / n_grids;
        for ((&k, &nd), &v) in g.ring_pos.iter().zip(&g.normal_derivative).zip(&nr) {
            gs[k] += config.gamma * sign(v) * nd / (m * n_grids);
        }
    }
    let br = boundary_sigma_residual(problem, sigma, config.boundary_sigma_star);
    let m = br.len().max(1) as f64;
    b.boundary = br.iter().map(|v| v.abs()).sum::<f64>() / m;
    for (&k, &v) in problem.ring.iter().zip(&br) {
        gs[k] += sign(v) / m;
    }
    let nf = n as f64;
    for (k, &s) in sigma.iter().enumerate() {
        let h = hinge_value(s, config.hinge_threshold);
        b.hinge += h / nf;
        if h > 0.0 {
            gs[k] -= config.mu / nf;
        }
    }
    for &k in &problem.interior {
        let v = tv_value(grad[k], config.xi);
        b.tv += v / n_int;
        gg[k][0] += config.lambda * grad[k][0] / (v * n_int);
        gg[k][1] += config.lambda * grad[k][1] / (v * n_int);
    }
    b.param = weight_norm_sq;
    b.total = config.alpha * b.pde_mse
        + config.beta * b.pde_top
        + config.gamma * b.neumann
        + b.boundary
        + config.mu * b.hinge
        + config.lambda * b.tv
        + config.rho * b.param;
    LossAdjoints {
        breakdown: b,
        g_sigma: gs,
        g_grad: gg,
    }
}

/// Loss and full parameter gradient, evaluating the network in precision `R`.
pub fn loss_and_gradient<R: crate::autodiff::Real>(
    net: &SigmaNet,
    problem: &InverseProblem,
    config: &InverseConfig,
) -> (LossBreakdown, Vec<f64>) {
    let eval = net.evaluate::<R>(&problem.points);
    let (sigma, grad) = eval.outputs();
    let adj = loss_from_outputs(problem, config, &sigma, &grad, net.weight_norm_sq());
    let mut g = eval.backward(net, &adj.g_sigma, &adj.g_grad);
    for ((gk, &p), w) in g.iter_mut().zip(net.params()).zip(SigmaNet::weight_mask()) {
        if w {
            *gk += 2.0 * config.rho * p;
        }
    }
    (adj.breakdown, g)
}

/// Loss value only, evaluated in f64.
pub fn inverse_loss(net: &SigmaNet, problem: &InverseProblem, config: &InverseConfig) -> LossBreakdown {
    let (sigma, grad) = net.with_spatial_grad(&problem.points);
    loss_from_outputs(problem, config, &sigma, &grad, net.weight_norm_sq()).breakdown
}

/// The same loss recorded entirely on a scalar tape, with the network's
/// spatial gradient propagated by tape operations. Intended for small
/// problems; used to cross-check [`loss_and_gradient`].
pub fn assemble_inverse_loss<'t>(
    tape: &'t Tape,
    params: &[Var<'t>],
    problem: &InverseProblem,
    config: &InverseConfig,
) -> Var<'t> {
    let outs: Vec<[Var<'t>; 3]> = problem
        .points
        .iter()
        .map(|&p| SigmaNet::forward_tape_with_grad(tape, params, p))
        .collect();
    let n_grids = problem.grids.len() as f64;
    let n_int = problem.interior.len() as f64;
    let t = config.top_t.min(problem.interior.len()).max(1);
    let mut terms = Vec::new();
    for g in &problem.grids {
        let r: Vec<Var<'t>> = problem
            .interior
            .iter()
            .enumerate()
            .map(|(j, &k)| outs[k][1] * g.ux[j] + outs[k][2] * g.uy[j] + outs[k][0] * g.lap[j])
            .collect();
        let sq: Vec<Var<'t>> = r.iter().map(|v| v.square()).collect();
        terms.push(sum(tape, &sq) * (config.alpha / (n_int * n_grids)));
        let values: Vec<f64> = r.iter().map(|v| v.value()).collect();
        let top: Vec<Var<'t>> = top_t_indices(&values, t).into_iter().map(|j| r[j].abs()).collect();
        terms.push(sum(tape, &top) * (config.beta / (t as f64 * n_grids)));
        let nr: Vec<Var<'t>> = g
            .ring_pos
            .iter()
            .zip(&g.normal_derivative)
            .zip(&g.zeta)
            .map(|((&k, &nd), &z)| (outs[k][0] * nd - z).abs())
            .collect();
        let m = nr.len().max(1) as f64;
        terms.push(sum(tape, &nr) * (config.gamma / (m * n_grids)));
    }
    let br: Vec<Var<'t>> = problem
        .ring
        .iter()
        .map(|&k| (outs[k][0] - config.boundary_sigma_star).abs())
        .collect();
    terms.push(sum(tape, &br) / br.len().max(1) as f64);
    let zero = tape.var(0.0);
    let hinge: Vec<Var<'t>> = outs
        .iter()
        .map(|o| (config.hinge_threshold - o[0]).max(zero))
        .collect();
    terms.push(sum(tape, &hinge) * (config.mu / outs.len() as f64));
    let tv: Vec<Var<'t>> = problem
        .interior
        .iter()
        .map(|&k| (outs[k][1].square() + outs[k][2].square() + config.xi).sqrt())
        .collect();
    terms.push(sum(tape, &tv) * (config.lambda / n_int));
    let w2: Vec<Var<'t>> = params
        .iter()
        .zip(SigmaNet::weight_mask())
        .filter(|(_, m)| *m)
        .map(|(p, _)| p.square())
        .collect();
    terms.push(sum(tape, &w2) * config.rho);
    sum(tape, &terms)
}
