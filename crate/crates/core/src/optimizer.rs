//! K-FAC step rules: exact eigendecomposition, randomized SVD, and symmetric
//! randomized EVD of the EA factors, with epoch schedules and damping.

use std::time::Instant;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kfactor::{apply_eig_damped_inverse, apply_lowrank_damped_inverse, Side};
use crate::linalg::{DenseMatrix, RngState};
use crate::network::Network;
use crate::rnla::{rsvd_psd, srevd, DecompMethod, LowRankEig, SketchParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Kfac,
    RsKfac,
    SreKfac,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Kfac => "kfac",
            Method::RsKfac => "rs-kfac",
            Method::SreKfac => "sre-kfac",
        }
    }

    fn decomposition(self) -> DecompMethod {
        match self {
            Method::Kfac => DecompMethod::Exact,
            Method::RsKfac => DecompMethod::Rsvd,
            Method::SreKfac => DecompMethod::Srevd,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Piecewise-constant function of the epoch: `base + Σ delta_i · [epoch ≥ e_i]`.
///
/// In JSON either a bare number or `{"base": .., "changes": [[epoch, delta], ..]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Schedule {
    Constant(f64),
    Piecewise {
        base: f64,
        changes: Vec<(usize, f64)>,
    },
}

impl Schedule {
    pub fn piecewise(base: f64, changes: &[(usize, f64)]) -> Self {
        Schedule::Piecewise {
            base,
            changes: changes.to_vec(),
        }
    }

    pub fn value_at(&self, epoch: usize) -> f64 {
        match self {
            Schedule::Constant(v) => *v,
            Schedule::Piecewise { base, changes } => changes
                .iter()
                .filter(|(e, _)| epoch >= *e)
                .fold(*base, |acc, (_, d)| acc + d),
        }
    }

    pub fn count_at(&self, epoch: usize) -> usize {
        self.value_at(epoch).round().max(0.0) as usize
    }

    /// Epochs at which the value can change, including 0.
    fn breakpoints(&self) -> Vec<usize> {
        let mut out = vec![0];
        if let Schedule::Piecewise { changes, .. } = self {
            out.extend(changes.iter().map(|(e, _)| *e));
        }
        out
    }
}

fn default_method() -> Method {
    Method::Kfac
}
fn default_rho() -> f64 {
    0.95
}
fn default_damping() -> Schedule {
    Schedule::piecewise(0.1, &[(25, -0.05), (35, -0.04)])
}
fn default_step_size() -> Schedule {
    Schedule::piecewise(
        0.3,
        &[
            (2, -0.1),
            (3, -0.1),
            (13, -0.07),
            (18, -0.02),
            (27, -0.007),
            (40, -0.002),
        ],
    )
}
fn default_weight_decay() -> f64 {
    7e-4
}
fn default_t_ku() -> usize {
    10
}
fn default_t_ki() -> Schedule {
    Schedule::piecewise(50.0, &[(20, -20.0)])
}
fn default_rank() -> Schedule {
    Schedule::piecewise(220.0, &[(15, 10.0)])
}
fn default_oversampling() -> Schedule {
    Schedule::piecewise(10.0, &[(22, 1.0), (30, 1.0)])
}
fn default_power_iters() -> usize {
    4
}
fn default_batch_size() -> usize {
    256
}
fn default_kl_clip() -> Option<f64> {
    Some(1e-3)
}

/// All optimizer scalars and schedules. Missing JSON fields take the
/// `Default` values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_damping")]
    pub damping: Schedule,
    #[serde(default = "default_step_size")]
    pub step_size: Schedule,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    /// Factor update period.
    #[serde(default = "default_t_ku")]
    pub t_ku: usize,
    /// Decomposition refresh period.
    #[serde(default = "default_t_ki")]
    pub t_ki: Schedule,
    #[serde(default = "default_rank")]
    pub rank: Schedule,
    #[serde(default = "default_oversampling")]
    pub oversampling: Schedule,
    #[serde(default = "default_power_iters")]
    pub power_iters: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// Trust-region clip: when set, steps are scaled by
    /// `min(1, sqrt(kl_clip / (α² Σ⟨S, g⟩)))`.
    #[serde(default = "default_kl_clip")]
    pub kl_clip: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            method: default_method(),
            rho: default_rho(),
            damping: default_damping(),
            step_size: default_step_size(),
            weight_decay: default_weight_decay(),
            t_ku: default_t_ku(),
            t_ki: default_t_ki(),
            rank: default_rank(),
            oversampling: default_oversampling(),
            power_iters: default_power_iters(),
            batch_size: default_batch_size(),
            kl_clip: default_kl_clip(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(0.0..1.0).contains(&self.rho) {
            return bad(format!("rho must lie in [0, 1), got {}", self.rho));
        }
        if self.t_ku == 0 {
            return bad("t_ku must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if let Some(c) = self.kl_clip {
            if !(c > 0.0) {
                return bad(format!("kl_clip must be > 0, got {c}"));
            }
        }
        if !(self.weight_decay >= 0.0) {
            return bad(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            ));
        }
        let mut epochs: Vec<usize> = [
            &self.damping,
            &self.step_size,
            &self.t_ki,
            &self.rank,
            &self.oversampling,
        ]
        .iter()
        .flat_map(|s| s.breakpoints())
        .collect();
        epochs.sort_unstable();
        epochs.dedup();
        for e in epochs {
            let r = self.resolve(e);
            if !(r.damping > 0.0) {
                return bad(format!(
                    "damping must be > 0, got {} at epoch {e}",
                    r.damping
                ));
            }
            if !(r.alpha > 0.0) {
                return bad(format!(
                    "step size must be > 0, got {} at epoch {e}",
                    r.alpha
                ));
            }
            if r.t_ki < self.t_ku {
                return bad(format!(
                    "t_ki ({}) must be >= t_ku ({}) at epoch {e}",
                    r.t_ki, self.t_ku
                ));
            }
            if r.rank == 0 {
                return bad(format!("rank must be >= 1 at epoch {e}"));
            }
        }
        Ok(())
    }

    /// Schedules evaluated at `epoch`.
    pub fn resolve(&self, epoch: usize) -> Resolved {
        Resolved {
            alpha: self.step_size.value_at(epoch),
            damping: self.damping.value_at(epoch),
            rank: self.rank.count_at(epoch),
            oversampling: self.oversampling.count_at(epoch),
            t_ki: self.t_ki.count_at(epoch),
        }
    }
}

/// Scalars in effect for one epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub alpha: f64,
    pub damping: f64,
    pub rank: usize,
    pub oversampling: usize,
    pub t_ki: usize,
}

pub fn run_schedules(cfg: &OptimizerConfig, epoch: usize) -> Resolved {
    cfg.resolve(epoch)
}

/// Position of a step in training; also seeds the sketch substreams.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepContext {
    pub step: usize,
    pub epoch: usize,
    pub seed: u64,
}

/// Wall-clock seconds spent per phase.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub factor_update: f64,
    pub decomposition: f64,
    pub application: f64,
}

impl PhaseTiming {
    pub fn total(&self) -> f64 {
        self.factor_update + self.decomposition + self.application
    }

    pub fn accumulate(&mut self, other: &PhaseTiming) {
        self.factor_update += other.factor_update;
        self.decomposition += other.decomposition;
        self.application += other.application;
    }
}

#[derive(Clone, Debug)]
pub struct StepResult {
    /// Preconditioned step per layer, shaped like the layer weights.
    pub updates: Vec<DenseMatrix>,
    /// Per-layer timings; `factor_update` is filled in by the caller.
    pub layer_timing: Vec<PhaseTiming>,
    /// Whether decompositions were recomputed on this step.
    pub refreshed: bool,
}

impl StepResult {
    pub fn timing(&self) -> PhaseTiming {
        let mut t = PhaseTiming::default();
        self.layer_timing.iter().for_each(|l| t.accumulate(l));
        t
    }

    /// All layer updates concatenated row-major.
    pub fn flattened(&self) -> Vec<f64> {
        self.updates
            .iter()
            .flat_map(|u| u.as_slice().iter().copied())
            .collect()
    }
}

/// Sketch parameters for one factor. A sketch that covers the whole factor
/// keeps every mode, which makes the randomized step exact.
pub fn layer_sketch(r: &Resolved, power_iters: usize, dim: usize) -> SketchParams {
    if r.rank + r.oversampling >= dim {
        SketchParams::new(dim, 0, power_iters)
    } else {
        SketchParams::new(r.rank, r.oversampling, power_iters)
    }
}

/// Exact K-FAC: full eigendecompositions of both factors.
pub fn kfac_step(
    net: &mut Network,
    grads: &[DenseMatrix],
    cfg: &OptimizerConfig,
    ctx: StepContext,
) -> Result<StepResult> {
    preconditioned_step(Method::Kfac, net, grads, cfg, ctx)
}

/// Randomized SVD of both factors plus the low-rank damped inverse.
pub fn rs_kfac_step(
    net: &mut Network,
    grads: &[DenseMatrix],
    cfg: &OptimizerConfig,
    ctx: StepContext,
) -> Result<StepResult> {
    preconditioned_step(Method::RsKfac, net, grads, cfg, ctx)
}

/// Symmetric randomized EVD of both factors plus the low-rank damped inverse.
pub fn sre_kfac_step(
    net: &mut Network,
    grads: &[DenseMatrix],
    cfg: &OptimizerConfig,
    ctx: StepContext,
) -> Result<StepResult> {
    preconditioned_step(Method::SreKfac, net, grads, cfg, ctx)
}

/// Dispatches on `method`, ignoring `cfg.method`.
pub fn preconditioned_step(
    method: Method,
    net: &mut Network,
    grads: &[DenseMatrix],
    cfg: &OptimizerConfig,
    ctx: StepContext,
) -> Result<StepResult> {
    if grads.len() != net.n_layers() {
        return Err(Error::dims(
            "step",
            format!("{} gradients", net.n_layers()),
            grads.len(),
        ));
    }
    let r = cfg.resolve(ctx.epoch);
    if !(r.damping > 0.0) {
        return Err(Error::DampingNonpositive(r.damping));
    }
    let wanted = method.decomposition();
    let boundary = ctx.step.is_multiple_of(r.t_ki.max(1));
    let mut refreshed = false;
    let mut updates = Vec::with_capacity(grads.len());
    let mut layer_timing = Vec::with_capacity(grads.len());

    for (l, (layer, grad)) in net.layers_mut().iter_mut().zip(grads).enumerate() {
        if grad.shape() != layer.weights.shape() {
            return Err(Error::dims(
                "step",
                format!("{:?}", layer.weights.shape()),
                format!("{:?}", grad.shape()),
            ));
        }
        let mut timing = PhaseTiming::default();
        let stale = |c: &Option<LowRankEig>| c.as_ref().is_none_or(|d| d.method != wanted);
        if boundary || stale(&layer.cached_a) || stale(&layer.cached_g) {
            let start = Instant::now();
            let tags = |factor: u64| [ctx.step as u64, l as u64, factor];
            layer.cached_a = Some(decompose(
                method,
                layer.a_factor.matrix(),
                &r,
                cfg.power_iters,
                &mut RngState::substream(ctx.seed, &tags(0)),
            )?);
            layer.cached_g = Some(decompose(
                method,
                layer.g_factor.matrix(),
                &r,
                cfg.power_iters,
                &mut RngState::substream(ctx.seed, &tags(1)),
            )?);
            timing.decomposition = start.elapsed().as_secs_f64();
            refreshed = true;
        }

        let start = Instant::now();
        let a = layer.cached_a.as_ref().expect("decomposition cached above");
        let g = layer.cached_g.as_ref().expect("decomposition cached above");
        let update = match method {
            Method::Kfac => {
                let m = apply_eig_damped_inverse(a, r.damping, grad, Side::Right)?;
                apply_eig_damped_inverse(g, r.damping, &m, Side::Left)?
            }
            Method::RsKfac | Method::SreKfac => {
                let m = apply_lowrank_damped_inverse(a, r.damping, grad, Side::Right)?;
                apply_lowrank_damped_inverse(g, r.damping, &m, Side::Left)?
            }
        };
        timing.application = start.elapsed().as_secs_f64();
        updates.push(update);
        layer_timing.push(timing);
    }
    Ok(StepResult {
        updates,
        layer_timing,
        refreshed,
    })
}

fn decompose(
    method: Method,
    factor: &DenseMatrix,
    r: &Resolved,
    power_iters: usize,
    rng: &mut RngState,
) -> Result<LowRankEig> {
    let sketch = layer_sketch(r, power_iters, factor.rows());
    match method {
        Method::Kfac => LowRankEig::exact(factor),
        Method::RsKfac => rsvd_psd(factor, sketch, rng),
        Method::SreKfac => srevd(factor, sketch, rng),
    }
}

/// Factor `ν = min(1, sqrt(clip / (α² Σ_l ⟨S_l, g_l⟩)))` bounding the
/// predicted KL change of a step; 1 when the inner product is not positive.
pub fn kl_clip_factor(
    updates: &[DenseMatrix],
    grads: &[DenseMatrix],
    alpha: f64,
    clip: f64,
) -> f64 {
    let vg: f64 = updates
        .iter()
        .zip(grads)
        .map(|(s, g)| {
            s.as_slice()
                .iter()
                .zip(g.as_slice())
                .map(|(a, b)| a * b)
                .sum::<f64>()
        })
        .sum::<f64>()
        * alpha
        * alpha;
    if vg > clip {
        (clip / vg).sqrt()
    } else {
        1.0
    }
}

/// `θ ← θ − α (S + wd · θ)` for every layer.
pub fn apply_update(
    net: &mut Network,
    updates: &[DenseMatrix],
    alpha: f64,
    weight_decay: f64,
) -> Result<()> {
    if updates.len() != net.n_layers() {
        return Err(Error::dims("apply_update", net.n_layers(), updates.len()));
    }
    for (layer, s) in net.layers_mut().iter_mut().zip(updates) {
        if s.shape() != layer.weights.shape() {
            return Err(Error::dims(
                "apply_update",
                format!("{:?}", layer.weights.shape()),
                format!("{:?}", s.shape()),
            ));
        }
        layer.weights.scale(1.0 - alpha * weight_decay);
        layer.weights.axpy(-alpha, s);
    }
    Ok(())
}
