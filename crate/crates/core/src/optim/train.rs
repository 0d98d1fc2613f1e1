//! Full-batch training with early stopping on validation loss.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::lbfgs::{gd_step, initial_step, LbfgsState};
use super::line_search::{wolfe_line_search, WolfeParams};
use crate::dataio::{apply_mask, GenotypeGroup};
use crate::error::{Error, Result};
use crate::losses::{correlation_loss_value, mse_value, total_loss_value, LossReport, LossTerms};
use crate::model::{BoundParams, ModelKind, ModelParams};
use crate::numcore::{Matrix, Tape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Lbfgs,
    Gd,
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lbfgs" => Ok(OptimizerKind::Lbfgs),
            "gd" => Ok(OptimizerKind::Gd),
            other => Err(Error::invalid(format!("unknown optimizer `{other}` (expected lbfgs or gd)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    /// L-BFGS history size.
    pub history: usize,
    pub wolfe: WolfeParams,
    /// Step size for the gradient-descent fallback.
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub lambda_corr: f64,
    pub mask_fraction: f64,
    /// Seeds the per-epoch input masks.
    pub seed: u64,
    /// Per-tensor initial inverse-Hessian scaling in L-BFGS.
    pub block_scaling: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::Lbfgs,
            history: 10,
            wolfe: WolfeParams::default(),
            learning_rate: 1e-2,
            max_epochs: 500,
            patience: 15,
            lambda_corr: 1.0,
            mask_fraction: 0.0,
            seed: 0,
            block_scaling: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.wolfe.validate()?;
        if self.patience == 0 {
            return Err(Error::invalid("patience must be at least 1"));
        }
        if self.history == 0 {
            return Err(Error::invalid("L-BFGS history must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.mask_fraction) {
            return Err(Error::invalid(format!(
                "mask fraction must lie in [0, 1), got {}",
                self.mask_fraction
            )));
        }
        if !(self.lambda_corr >= 0.0 && self.lambda_corr.is_finite()) {
            return Err(Error::invalid("lambda_corr must be finite and non-negative"));
        }
        if self.optimizer == OptimizerKind::Gd && !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        Ok(())
    }

    /// Correlation weight actually applied for a model kind.
    pub fn effective_lambda(&self, kind: ModelKind) -> f64 {
        match kind {
            ModelKind::Cae => self.lambda_corr,
            ModelKind::Vanilla => 0.0,
        }
    }
}

/// One row of the training log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_recon: f64,
    pub train_corr: f64,
    pub val_recon: f64,
    pub val_corr: f64,
    pub val_total: f64,
    pub alpha: f64,
}

/// Patience counter over a strictly-improving validation metric.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            since_best: 0,
        }
    }

    /// Records a validation value; returns (improved, should_stop).
    pub fn observe(&mut self, epoch: usize, value: f64) -> (bool, bool) {
        if value < self.best {
            self.best = value;
            self.best_epoch = epoch;
            self.since_best = 0;
            (true, false)
        } else {
            self.since_best += 1;
            (false, self.since_best >= self.patience)
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters at the lowest validation loss.
    pub params: ModelParams,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    pub early_stopped: bool,
    pub best_val: LossReport,
}

/// Stacks groups into a G·P × D matrix, group-major.
pub fn stack_groups(groups: &[GenotypeGroup]) -> Matrix {
    let rows: Vec<&[f64]> = groups
        .iter()
        .flat_map(|g| g.plants.iter().map(|p| p.reflectance.as_slice()))
        .collect();
    Matrix::from_rows(&rows).expect("records of one dataset share a width")
}

/// Loss of `params` on `input` (possibly masked) against `target`, with the
/// flat gradient in [`ModelParams::flatten`] order.
pub fn loss_and_gradient(
    params: &ModelParams,
    input: &Matrix,
    target: &Matrix,
    lambda_corr: f64,
) -> Result<(LossReport, Vec<f64>)> {
    let tape = Tape::new();
    let bound = BoundParams::bind(params, &tape);
    let terms = forward_loss(&bound, &tape, input, target, lambda_corr)?;
    let grads = terms.total.backward()?;
    Ok((terms.report(), bound.flat_gradient(&grads)))
}

/// Loss only, for validation.
pub fn evaluate_loss(params: &ModelParams, input: &Matrix, target: &Matrix, lambda_corr: f64) -> Result<LossReport> {
    let tape = Tape::new();
    let bound = BoundParams::bind(params, &tape);
    Ok(forward_loss(&bound, &tape, input, target, lambda_corr)?.report())
}

fn forward_loss(
    bound: &BoundParams,
    tape: &Tape,
    input: &Matrix,
    target: &Matrix,
    lambda_corr: f64,
) -> Result<LossTerms> {
    let x = tape.constant(input.clone());
    let t = tape.constant(target.clone());
    match bound.kind() {
        ModelKind::Cae => {
            // per-group MSEs summed, one correlation term over the batch
            let trace = bound.cae(&x)?;
            let groups = (input.rows() / bound.layout().plants()) as f64;
            let reconstruction = mse_value(&trace.recon, &t)?.scale(groups);
            let correlation = correlation_loss_value(&trace.fused)?;
            let total = if lambda_corr != 0.0 {
                reconstruction.add(&correlation.scale(lambda_corr))?
            } else {
                reconstruction.clone()
            };
            Ok(LossTerms {
                total,
                reconstruction,
                correlation: Some(correlation),
                correlation_weight: lambda_corr,
            })
        }
        ModelKind::Vanilla => {
            let (recon, _) = bound.vanilla(&x)?;
            total_loss_value(&recon, &t, None, 0.0)
        }
    }
}

/// Flat index range of each parameter tensor.
pub fn tensor_blocks(params: &ModelParams) -> Vec<std::ops::Range<usize>> {
    let mut start = 0;
    params
        .tensor_layout()
        .into_iter()
        .map(|(_, r, c)| {
            let b = start..start + r * c;
            start = b.end;
            b
        })
        .collect()
}

fn mask_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn check_finite(report: &LossReport, epoch: usize, what: &str) -> Result<()> {
    if report.total.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged {
            epoch,
            msg: format!("{what} loss is {} (recon {}, corr {})", report.total, report.reconstruction, report.correlation),
        })
    }
}

/// Trains from `init` with one optimizer step per epoch over the full
/// training batch. For the compositional model both matrices hold whole
/// groups stacked group-major.
pub fn train(init: &ModelParams, train_x: &Matrix, val_x: &Matrix, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    init.validate()?;
    if train_x.rows() == 0 || val_x.rows() == 0 {
        return Err(Error::invalid("training and validation sets must be non-empty"));
    }
    if init.kind == ModelKind::Cae {
        let p = init.layout.plants();
        if !train_x.rows().is_multiple_of(p) || !val_x.rows().is_multiple_of(p) {
            return Err(Error::invalid(format!("compositional training needs whole groups of {p} plants")));
        }
        if train_x.rows() / p < 2 || val_x.rows() / p < 2 {
            return Err(Error::invalid("correlation loss needs at least 2 groups per split"));
        }
    }
    let lambda = cfg.effective_lambda(init.kind);
    let mut template = init.clone();
    let mut w = init.flatten();
    let mut state = LbfgsState::new(cfg.history);
    if cfg.block_scaling {
        state = state.with_blocks(tensor_blocks(init));
    }
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best_w = w.clone();
    // validation sees the same corruption as training, under one fixed mask
    let val_input = if cfg.mask_fraction > 0.0 {
        apply_mask(val_x, cfg.mask_fraction, mask_seed(cfg.seed, 0))?.0
    } else {
        val_x.clone()
    };
    let mut best_val = evaluate_loss(init, &val_input, val_x, lambda)?;
    let mut log = Vec::new();
    let mut early_stopped = false;
    let mut stopped_epoch = 0;

    for epoch in 1..=cfg.max_epochs {
        stopped_epoch = epoch;
        let input = if cfg.mask_fraction > 0.0 {
            apply_mask(train_x, cfg.mask_fraction, mask_seed(cfg.seed, epoch))?.0
        } else {
            train_x.clone()
        };
        template.set_flat(&w)?;
        let (train_report, g) = loss_and_gradient(&template, &input, train_x, lambda)?;
        check_finite(&train_report, epoch, "training")?;

        let alpha = match cfg.optimizer {
            OptimizerKind::Lbfgs => {
                let mut p = state.direction(&g);
                if !(dot(&p, &g) < 0.0) {
                    state.clear();
                    p = g.iter().map(|v| -v).collect();
                }
                let alpha0 = initial_step(&state, &g);
                let scratch = &mut template;
                let mut objective = |flat: &[f64]| -> Result<(f64, Vec<f64>)> {
                    scratch.set_flat(flat)?;
                    let (report, grad) = loss_and_gradient(scratch, &input, train_x, lambda)?;
                    Ok((report.total, grad))
                };
                if dot(&g, &g) == 0.0 {
                    0.0
                } else {
                    let ls = wolfe_line_search(&mut objective, &w, train_report.total, &g, &p, alpha0, &cfg.wolfe)?;
                    if ls.alpha > 0.0 {
                        let s: Vec<f64> = p.iter().map(|v| ls.alpha * v).collect();
                        let y: Vec<f64> = ls.grad.iter().zip(&g).map(|(a, b)| a - b).collect();
                        w.iter_mut().zip(&s).for_each(|(wi, si)| *wi += si);
                        state.push(s, y);
                        state.iterations += 1;
                    } else {
                        state.clear();
                    }
                    ls.alpha
                }
            }
            OptimizerKind::Gd => {
                w = gd_step(&w, &g, cfg.learning_rate)?;
                cfg.learning_rate
            }
        };

        template.set_flat(&w)?;
        let val = evaluate_loss(&template, &val_input, val_x, lambda)?;
        check_finite(&val, epoch, "validation")?;
        log.push(EpochLog {
            epoch,
            train_recon: train_report.reconstruction,
            train_corr: train_report.correlation,
            val_recon: val.reconstruction,
            val_corr: val.correlation,
            val_total: val.total,
            alpha,
        });
        let (improved, stop) = stopper.observe(epoch, val.total);
        if improved {
            best_w.clone_from(&w);
            best_val = val;
        }
        if stop {
            early_stopped = true;
            break;
        }
    }

    let mut params = init.clone();
    params.set_flat(&best_w)?;
    Ok(TrainOutcome {
        params,
        log,
        best_epoch: stopper.best_epoch(),
        stopped_epoch,
        early_stopped,
        best_val,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn write_training_log(path: impl AsRef<Path>, log: &[EpochLog]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    for row in log {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
