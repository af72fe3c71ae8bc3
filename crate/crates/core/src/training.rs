//! AdamW, the full-batch training loops and error metrics.

use std::io::Write;

use crate::autodiff::{loss_gradients, residual_gradients, residual_loss, GradientSet, LossSpec, PinnObjective};
use crate::error::{KanError, Result};
use crate::fmt::fmt_f64;
use crate::network::{KanNetwork, Precision};
use crate::sampling::PointSet;

/// Adaptive-moment optimizer settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Added to `sqrt(v_hat)` in the denominator.
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub adam: AdamConfig,
    pub precision: Precision,
    pub seed: u64,
    /// Epochs (1-based) after which validation RMSE is recorded.
    pub checkpoints: Vec<usize>,
    pub loss: LossSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10_000,
            adam: AdamConfig::default(),
            precision: Precision::Double,
            seed: 0,
            checkpoints: Vec::new(),
            loss: LossSpec::MeanSquared,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(KanError::Config("epochs must be >= 1".into()));
        }
        let a = &self.adam;
        if !(a.learning_rate > 0.0 && a.learning_rate.is_finite()) {
            return Err(KanError::Config(format!("learning rate must be positive, got {}", a.learning_rate)));
        }
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2)) {
            return Err(KanError::Config("betas must lie in [0, 1)".into()));
        }
        if !(a.eps > 0.0) || a.weight_decay < 0.0 {
            return Err(KanError::Config("eps must be positive and weight decay non-negative".into()));
        }
        Ok(())
    }
}

/// First and second moment estimates for a list of parameter blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: i32,
}

impl AdamState {
    pub fn new(block_sizes: &[usize]) -> Self {
        Self {
            m: block_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: block_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn for_network(net: &KanNetwork) -> Self {
        let sizes: Vec<usize> = net.layers().iter().map(|l| l.coefficients().as_slice().len()).collect();
        Self::new(&sizes)
    }

    pub fn steps(&self) -> i32 {
        self.step
    }
}

/// One AdamW update of `params` (one slice per block) in place:
/// `p <- p (1 - lr wd)` followed by the bias-corrected Adam step.
pub fn adamw_step(params: &mut [&mut [f64]], grads: &[&[f64]], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(KanError::InvalidInput("parameter, gradient and state blocks differ".into()));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.len() != g.len() {
            return Err(KanError::InvalidInput("parameter and gradient shapes differ".into()));
        }
    }
    if grads.iter().any(|g| g.iter().any(|x| !x.is_finite())) {
        return Err(KanError::Diverged {
            last_finite_epoch: None,
        });
    }
    state.step += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.step);
    let bc2 = 1.0 - cfg.beta2.powi(state.step);
    let decay = 1.0 - cfg.learning_rate * cfg.weight_decay;
    for (b, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[b], &mut state.v[b]);
        for j in 0..p.len() {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] = p[j] * decay - cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

fn apply_update(net: &mut KanNetwork, grads: &GradientSet, state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    let n_layers = net.layers().len();
    let mut blocks: Vec<Vec<f64>> = (0..n_layers)
        .map(|l| net.coefficients(l).map(|c| c.as_slice().to_vec()))
        .collect::<Result<_>>()?;
    {
        let mut params: Vec<&mut [f64]> = blocks.iter_mut().map(Vec::as_mut_slice).collect();
        let g: Vec<&[f64]> = grads.layers.iter().map(|m| m.as_slice()).collect();
        adamw_step(&mut params, &g, state, cfg)?;
    }
    for (l, block) in blocks.into_iter().enumerate() {
        net.coefficients_mut(l)?.as_mut_slice().copy_from_slice(&block);
    }
    net.round_parameters();
    Ok(())
}

/// Root mean square difference.
pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(KanError::InvalidInput(format!(
            "rmse needs equal non-empty lengths, got {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    let sse: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sse / pred.len() as f64).sqrt())
}

/// Per-epoch history of one run.
///
/// `train_loss[e - 1]` is the loss at the parameters used in epoch `e`
/// (after `e - 1` updates); `final_train_loss` is the loss after the last
/// update. Validation entries are taken after the update of their epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainTrace {
    pub train_loss: Vec<f64>,
    pub final_train_loss: f64,
    pub val_rmse: Vec<(usize, f64)>,
}

impl TrainTrace {
    /// Training loss after `e` updates (`e <= epochs`).
    pub fn train_loss_after(&self, e: usize) -> Option<f64> {
        match e.cmp(&self.train_loss.len()) {
            std::cmp::Ordering::Less => Some(self.train_loss[e]),
            std::cmp::Ordering::Equal => Some(self.final_train_loss),
            std::cmp::Ordering::Greater => None,
        }
    }

    /// Validation RMSE recorded after the final epoch, if it was checkpointed.
    pub fn final_val_rmse(&self) -> Option<f64> {
        self.val_rmse
            .last()
            .filter(|(e, _)| *e == self.train_loss.len())
            .map(|&(_, r)| r)
    }

    /// CSV `epoch,train_mse,val_rmse`, one row per epoch; `val_rmse` is blank
    /// where no checkpoint was taken.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,train_mse,val_rmse")?;
        let mut val = self.val_rmse.iter().peekable();
        for (i, &loss) in self.train_loss.iter().enumerate() {
            let epoch = i + 1;
            let v = match val.peek() {
                Some(&&(e, r)) if e == epoch => {
                    val.next();
                    fmt_f64(r)
                }
                _ => String::new(),
            };
            writeln!(w, "{epoch},{},{v}", fmt_f64(loss))?;
        }
        Ok(())
    }
}

/// Held-out evaluation set.
#[derive(Clone, Copy, Debug)]
pub struct Validation<'a> {
    pub points: &'a PointSet,
    pub truth: &'a [f64],
}

fn diverged(epoch: usize) -> KanError {
    KanError::Diverged {
        last_finite_epoch: epoch.checked_sub(1).filter(|&e| e > 0),
    }
}

fn run_loop<G, L>(
    mut net: KanNetwork,
    cfg: &TrainConfig,
    val: Option<Validation>,
    mut grad: G,
    mut loss_only: L,
) -> Result<(KanNetwork, TrainTrace)>
where
    G: FnMut(&KanNetwork) -> Result<GradientSet>,
    L: FnMut(&KanNetwork) -> Result<f64>,
{
    cfg.validate()?;
    net = net.with_precision(cfg.precision);
    let mut state = AdamState::for_network(&net);
    let mut train_loss = Vec::with_capacity(cfg.epochs);
    let mut val_rmse = Vec::new();
    for epoch in 1..=cfg.epochs {
        let g = match grad(&net) {
            Ok(g) if g.is_finite() => g,
            Ok(_) | Err(KanError::DivergedForward { .. }) => return Err(diverged(epoch)),
            Err(e) => return Err(e),
        };
        train_loss.push(g.loss);
        match apply_update(&mut net, &g, &mut state, &cfg.adam) {
            Err(KanError::Diverged { .. }) => return Err(diverged(epoch)),
            other => other?,
        }
        if let Some(v) = val.filter(|_| cfg.checkpoints.contains(&epoch)) {
            let pred = match net.predict(v.points) {
                Err(KanError::DivergedForward { .. }) => return Err(diverged(epoch + 1)),
                other => other?,
            };
            val_rmse.push((epoch, rmse(&pred, v.truth)?));
        }
    }
    let final_train_loss = match loss_only(&net) {
        Ok(l) if l.is_finite() => l,
        Ok(_) | Err(KanError::DivergedForward { .. }) => return Err(diverged(cfg.epochs + 1)),
        Err(e) => return Err(e),
    };
    Ok((
        net,
        TrainTrace {
            train_loss,
            final_train_loss,
            val_rmse,
        },
    ))
}

/// Full-batch regression with AdamW; deterministic given the inputs.
pub fn train_regression(
    net: KanNetwork,
    train_pts: &PointSet,
    targets: &[f64],
    val: Option<Validation>,
    cfg: &TrainConfig,
) -> Result<(KanNetwork, TrainTrace)> {
    let factor = match cfg.loss {
        LossSpec::MeanSquared => 1.0,
        LossSpec::HalfMeanSquared => 0.5,
    };
    run_loop(
        net,
        cfg,
        val,
        |n| loss_gradients(n, train_pts, targets, cfg.loss),
        |n| Ok(factor * rmse(&n.predict(train_pts)?, targets)?.powi(2)),
    )
}

/// Full-batch physics-informed training on the residual loss.
pub fn train_pinn(
    net: KanNetwork,
    problem: &dyn PinnObjective,
    interior: &PointSet,
    boundary: &PointSet,
    val: Option<Validation>,
    cfg: &TrainConfig,
) -> Result<(KanNetwork, TrainTrace)> {
    run_loop(
        net,
        cfg,
        val,
        |n| residual_gradients(n, problem, interior, boundary),
        |n| residual_loss(n, problem, interior, boundary),
    )
}
