use std::io::Write;

use crate::autodiff::{adam_step, AdamState, SigmaNet, PARAM_COUNT};
use crate::error::{EitError, Result};
use crate::gridfield::{GridField, GridSource, SigmaGrid};
use crate::pinn::loss::{inverse_loss, loss_and_gradient, InverseProblem, LossBreakdown};
use crate::pinn::InverseConfig;

#[derive(Debug, Clone)]
pub struct InverseResult {
    pub sigma_grid: SigmaGrid,
    /// Loss before each update.
    pub loss_history: Vec<LossBreakdown>,
    pub net: SigmaNet,
}

impl InverseResult {
    pub fn write_loss_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", LossBreakdown::CSV_HEADER)?;
        for (i, b) in self.loss_history.iter().enumerate() {
            writeln!(w, "{}", b.csv_row(i))?;
        }
        Ok(())
    }
}

/// Network at initialization: Glorot weights from `config.seed`, read-out
/// bias set so that the mean output starts at `boundary_sigma_star`.
pub fn initial_net(config: &InverseConfig) -> SigmaNet {
    let mut net = SigmaNet::new(config.seed);
    net.set_output_level(config.boundary_sigma_star);
    net
}

/// σ of `net` at every in-mask pixel.
pub fn rasterize_net(net: &SigmaNet, problem: &InverseProblem) -> SigmaGrid {
    let (sigma, _) = net.with_spatial_grad(&problem.points);
    let mut values = vec![f64::NAN; problem.spec.len()];
    for (&i, &s) in problem.pixels.iter().zip(&sigma) {
        values[i] = s;
    }
    GridField {
        spec: problem.spec.clone(),
        values,
        source: GridSource::Sigma,
        excitation_id: 0,
    }
}

/// Adam minimization of the inverse loss over all collocation points.
pub fn train_inverse(problem: &InverseProblem, config: &InverseConfig) -> Result<InverseResult> {
    train_inverse_with(problem, config, |_, _| {})
}

/// As [`train_inverse`], calling `progress(iteration, loss)` before every
/// update.
pub fn train_inverse_with(
    problem: &InverseProblem,
    config: &InverseConfig,
    mut progress: impl FnMut(usize, &LossBreakdown),
) -> Result<InverseResult> {
    config.validate()?;
    if config.top_t > problem.interior.len() {
        log::warn!(
            "top_t = {} exceeds the {} interior points; clamping",
            config.top_t,
            problem.interior.len()
        );
    }
    let mut net = initial_net(config);
    let mut state = AdamState::new(PARAM_COUNT);
    let mut history = Vec::with_capacity(config.iterations);
    let a = &config.adam;
    for it in 0..config.iterations {
        let (loss, grad) = loss_and_gradient::<f32>(&net, problem, config);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(EitError::NonFiniteLoss {
                iteration: it,
                components: format!("{loss:?}"),
            });
        }
        progress(it, &loss);
        history.push(loss);
        adam_step(net.params_mut(), &grad, &mut state, a.lr_at(it), a.beta1, a.beta2, a.eps)?;
    }
    let last = inverse_loss(&net, problem, config);
    if !last.is_finite() {
        return Err(EitError::NonFiniteLoss {
            iteration: config.iterations,
            components: format!("{last:?}"),
        });
    }
    Ok(InverseResult {
        sigma_grid: rasterize_net(&net, problem),
        loss_history: history,
        net,
    })
}
