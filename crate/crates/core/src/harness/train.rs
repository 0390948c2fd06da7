use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kfactor::spectrum;
use crate::linalg::RngState;
use crate::network::Network;
use crate::optimizer::{apply_update, kl_clip_factor, preconditioned_step, Method, StepContext};

use super::config::ExperimentConfig;
use super::data::Dataset;

const INIT_STREAM: u64 = 0x1A17;
const SHUFFLE_STREAM: u64 = 0x5AFF;

/// One optimizer step. Times are wall-clock seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    /// Accuracy on the step's own batch, before the update.
    pub acc: f64,
    pub t_factor: f64,
    pub t_decomp: f64,
    pub t_apply: f64,
    pub t_step: f64,
}

/// End-of-epoch evaluation on the full train and test sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
    /// Sum of `t_step` over the epoch; evaluation and snapshots excluded.
    pub t_epoch: f64,
}

/// Factor spectra of one layer at the start of `step`, before that step's
/// factor update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: usize,
    pub layer: usize,
    pub forward: Vec<f64>,
    pub backward: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub method: Method,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
    pub snapshots: Vec<Snapshot>,
}

impl RunLog {
    /// Every numeric trajectory value, timings excluded, as raw bits.
    pub fn fingerprint(&self) -> Vec<u64> {
        let mut out = Vec::new();
        for s in &self.steps {
            out.extend([
                s.step as u64,
                s.epoch as u64,
                s.loss.to_bits(),
                s.acc.to_bits(),
            ]);
        }
        for e in &self.epochs {
            out.extend([
                e.epoch as u64,
                e.steps as u64,
                e.train_loss.to_bits(),
                e.train_acc.to_bits(),
                e.test_loss.to_bits(),
                e.test_acc.to_bits(),
            ]);
        }
        for s in &self.snapshots {
            out.extend([s.step as u64, s.layer as u64]);
            out.extend(s.forward.iter().chain(&s.backward).map(|v| v.to_bits()));
        }
        out
    }

    pub fn total_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn final_epoch(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

fn snapshot_due(cfg: &ExperimentConfig, step: usize) -> bool {
    let t = &cfg.train;
    if !t.snapshots {
        return false;
    }
    let period = if step < t.cadence_switch {
        t.cadence_early
    } else {
        t.cadence_late
    };
    step.is_multiple_of(period)
}

fn take_snapshots(net: &Network, step: usize, out: &mut Vec<Snapshot>) -> Result<()> {
    for layer in net.layers() {
        out.push(Snapshot {
            step,
            layer: layer.index,
            forward: spectrum(&layer.a_factor)?.eigenvalues,
            backward: spectrum(&layer.g_factor)?.eigenvalues,
        });
    }
    Ok(())
}

/// Trains a fresh network on `data` with `method`, using `cfg.optimizer`
/// for everything else. `seed` drives initialization, shuffling and sketches.
pub fn train_run(
    cfg: &ExperimentConfig,
    data: &Dataset,
    method: Method,
    seed: u64,
) -> Result<(RunLog, Network)> {
    cfg.validate()?;
    let opt = &cfg.optimizer;
    let mut net = Network::new(
        data.d_in(),
        &cfg.arch.hidden,
        data.n_classes,
        opt.rho,
        &mut RngState::substream(seed, &[INIT_STREAM]),
    )?;
    let bs = opt.batch_size.min(data.n_train());
    let per_epoch = data.n_train() / bs;
    let max_steps = cfg.train.max_steps.unwrap_or(usize::MAX);
    let mut log = RunLog {
        method,
        seed,
        steps: Vec::new(),
        epochs: Vec::new(),
        snapshots: Vec::new(),
    };
    let mut step = 0;
    let mut order: Vec<usize> = (0..data.n_train()).collect();

    for epoch in 0..cfg.train.epochs {
        if step >= max_steps {
            break;
        }
        let resolved = opt.resolve(epoch);
        RngState::substream(seed, &[SHUFFLE_STREAM, epoch as u64]).shuffle(&mut order);
        let mut t_epoch = 0.0;
        let mut steps_this_epoch = 0;
        for chunk in order.chunks_exact(bs).take(per_epoch) {
            if step >= max_steps {
                break;
            }
            if snapshot_due(cfg, step) {
                take_snapshots(&net, step, &mut log.snapshots)?;
            }
            let batch = data.batch(chunk)?;
            let start = Instant::now();
            let fwd = net.forward(&batch)?;
            if !fwd.loss.is_finite() {
                return Err(Error::Diverged { step });
            }
            let back = net.backward()?;
            let mut t_factor = 0.0;
            if step.is_multiple_of(opt.t_ku) {
                let t0 = Instant::now();
                net.accumulate_factors(&fwd.a_matrices, &back.g_matrices)?;
                t_factor = t0.elapsed().as_secs_f64();
            }
            let ctx = StepContext { step, epoch, seed };
            let mut result = preconditioned_step(method, &mut net, &back.grads, opt, ctx)?;
            if let Some(clip) = opt.kl_clip {
                let nu = kl_clip_factor(&result.updates, &back.grads, resolved.alpha, clip);
                result.updates.iter_mut().for_each(|u| u.scale(nu));
            }
            apply_update(&mut net, &result.updates, resolved.alpha, opt.weight_decay)?;
            let t_step = start.elapsed().as_secs_f64();
            let timing = result.timing();
            log.steps.push(StepRecord {
                step,
                epoch,
                loss: fwd.loss,
                acc: fwd.accuracy,
                t_factor,
                t_decomp: timing.decomposition,
                t_apply: timing.application,
                t_step,
            });
            t_epoch += t_step;
            steps_this_epoch += 1;
            step += 1;
        }
        let (train_loss, train_acc) = net.evaluate(&data.train_x, &data.train_y)?;
        let (test_loss, test_acc) = net.evaluate(&data.test_x, &data.test_y)?;
        log.epochs.push(EpochRecord {
            epoch,
            steps: steps_this_epoch,
            train_loss,
            train_acc,
            test_loss,
            test_acc,
            t_epoch,
        });
    }
    if cfg.train.snapshots && log.snapshots.last().is_none_or(|s| s.step != step) {
        take_snapshots(&net, step, &mut log.snapshots)?;
    }
    Ok((log, net))
}
