//! Fully connected ReLU classifier with hand-written backpropagation.
//!
//! Samples are columns. Layer `l` holds `W` of shape `d_out × (d_in + 1)`, the
//! last column being the bias, and sees the augmented input `A = [h; 1ᵀ]`.
//!
//! Factor scaling: with `n` samples, `Â = A/√n` and `G = √n · ∂L/∂Z`, so
//! `ÂÂᵀ` and `GGᵀ` are batch means of per-sample outer products and the weight
//! gradient is exactly `G Âᵀ`.

use crate::error::{Error, Result};
use crate::kfactor::EaKFactor;
use crate::linalg::{DenseMatrix, RngState};
use crate::rnla::LowRankEig;

/// One dense layer with its Kronecker factors.
#[derive(Clone, Debug)]
pub struct LayerState {
    /// `d_out × (d_in + 1)`, bias in the last column.
    pub weights: DenseMatrix,
    /// Forward factor, dimension `d_in + 1`.
    pub a_factor: EaKFactor,
    /// Backward factor, dimension `d_out`.
    pub g_factor: EaKFactor,
    pub cached_a: Option<LowRankEig>,
    pub cached_g: Option<LowRankEig>,
    pub index: usize,
}

impl LayerState {
    pub fn d_in(&self) -> usize {
        self.weights.cols() - 1
    }

    pub fn d_out(&self) -> usize {
        self.weights.rows()
    }
}

/// Inputs as columns plus integer labels.
#[derive(Clone, Debug)]
pub struct Batch {
    /// `d_in × n`
    pub x: DenseMatrix,
    pub y: Vec<usize>,
}

impl Batch {
    pub fn new(x: DenseMatrix, y: Vec<usize>) -> Result<Self> {
        if y.is_empty() || x.cols() != y.len() {
            return Err(Error::dims(
                "batch",
                format!("{} labels", x.cols()),
                y.len(),
            ));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Loss and per-layer augmented inputs from a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    pub loss: f64,
    /// Fraction of the batch whose most probable class is the label.
    pub accuracy: f64,
    /// Layer `l`: `(d_in + 1) × n`, unscaled, last row all ones.
    pub a_matrices: Vec<DenseMatrix>,
}

/// Gradients and scaled pre-activation gradients from a backward pass.
#[derive(Clone, Debug)]
pub struct BackwardPass {
    /// `∂L/∂W` per layer, same shape as `W`.
    pub grads: Vec<DenseMatrix>,
    /// `√n · ∂L/∂Z` per layer, `d_out × n`.
    pub g_matrices: Vec<DenseMatrix>,
}

#[derive(Clone, Debug)]
struct ForwardCache {
    a_matrices: Vec<DenseMatrix>,
    probs: DenseMatrix,
    labels: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Network {
    layers: Vec<LayerState>,
    n_classes: usize,
    cache: Option<ForwardCache>,
}

impl Network {
    /// Layer widths `d_in, hidden..., n_classes`. Weights are He-uniform,
    /// `U(−√(6/fan_in), √(6/fan_in))`, biases zero, factors identity.
    pub fn new(
        d_in: usize,
        hidden: &[usize],
        n_classes: usize,
        rho: f64,
        rng: &mut RngState,
    ) -> Result<Self> {
        let mut widths = vec![d_in];
        widths.extend_from_slice(hidden);
        widths.push(n_classes);
        if widths.contains(&0) || n_classes < 2 {
            return Err(Error::InvalidConfig(format!(
                "invalid layer widths {widths:?}"
            )));
        }
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(index, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / fan_in as f64).sqrt();
                let weights = DenseMatrix::from_fn(fan_out, fan_in + 1, |_, j| {
                    if j == fan_in {
                        0.0
                    } else {
                        rng.uniform_range(-bound, bound)
                    }
                });
                Self::layer(weights, rho, index)
            })
            .collect();
        Ok(Self {
            layers,
            n_classes,
            cache: None,
        })
    }

    /// Builds a network from explicit weight matrices.
    pub fn from_weights(weights: Vec<DenseMatrix>, rho: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidConfig(
                "network needs at least one layer".into(),
            ));
        }
        for (l, pair) in weights.windows(2).enumerate() {
            if pair[1].cols() != pair[0].rows() + 1 {
                return Err(Error::dims(
                    "from_weights",
                    format!("layer {} with {} columns", l + 1, pair[0].rows() + 1),
                    pair[1].cols(),
                ));
            }
        }
        let n_classes = weights.last().map(|w| w.rows()).unwrap_or(0);
        let layers = weights
            .into_iter()
            .enumerate()
            .map(|(index, w)| Self::layer(w, rho, index))
            .collect();
        Ok(Self {
            layers,
            n_classes,
            cache: None,
        })
    }

    fn layer(weights: DenseMatrix, rho: f64, index: usize) -> LayerState {
        LayerState {
            a_factor: EaKFactor::identity(weights.cols(), rho),
            g_factor: EaKFactor::identity(weights.rows(), rho),
            weights,
            cached_a: None,
            cached_g: None,
            index,
        }
    }

    pub fn layers(&self) -> &[LayerState] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerState] {
        &mut self.layers
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn d_in(&self) -> usize {
        self.layers[0].d_in()
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.rows() * l.weights.cols())
            .sum()
    }

    fn check_batch(&self, x: &DenseMatrix, y: &[usize]) -> Result<()> {
        if x.rows() != self.d_in() {
            return Err(Error::dims(
                "forward",
                format!("{} input rows", self.d_in()),
                x.rows(),
            ));
        }
        if x.cols() != y.len() || y.is_empty() {
            return Err(Error::dims(
                "forward",
                format!("{} labels", x.cols()),
                y.len(),
            ));
        }
        if let Some(&bad) = y.iter().find(|&&c| c >= self.n_classes) {
            return Err(Error::dims(
                "forward",
                format!("labels < {}", self.n_classes),
                bad,
            ));
        }
        Ok(())
    }

    /// Augmented inputs of every layer and the output logits.
    fn propagate(&self, x: &DenseMatrix) -> (Vec<DenseMatrix>, DenseMatrix) {
        let mut a_matrices = Vec::with_capacity(self.layers.len());
        let mut h = augment(x);
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = layer.weights.matmul(&h);
            a_matrices.push(h);
            if l + 1 == self.layers.len() {
                return (a_matrices, z);
            }
            z.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
            h = augment(&z);
        }
        unreachable!("network has at least one layer")
    }

    /// Mean softmax cross-entropy; caches activations for [`Network::backward`].
    pub fn forward(&mut self, batch: &Batch) -> Result<ForwardPass> {
        self.check_batch(&batch.x, &batch.y)?;
        let (a_matrices, logits) = self.propagate(&batch.x);
        let (loss, probs) = softmax_nll(&logits, &batch.y);
        let accuracy = accuracy(&probs, &batch.y);
        self.cache = Some(ForwardCache {
            a_matrices: a_matrices.clone(),
            probs,
            labels: batch.y.clone(),
        });
        Ok(ForwardPass {
            loss,
            accuracy,
            a_matrices,
        })
    }

    /// Backpropagates the cached forward pass using the batch labels.
    pub fn backward(&self) -> Result<BackwardPass> {
        let cache = self
            .cache
            .as_ref()
            .ok_or(Error::State("backward called before forward"))?;
        let n = cache.labels.len() as f64;
        let root_n = n.sqrt();
        // δ = ∂L/∂Z for the output layer: (p − onehot(y)) / n.
        let mut delta = cache.probs.clone();
        for (j, &c) in cache.labels.iter().enumerate() {
            let cols = delta.cols();
            delta.as_mut_slice()[c * cols + j] -= 1.0;
        }
        delta.scale(1.0 / n);

        let depth = self.layers.len();
        let mut grads = vec![DenseMatrix::zeros(0, 0); depth];
        let mut g_matrices = vec![DenseMatrix::zeros(0, 0); depth];
        for l in (0..depth).rev() {
            let a = &cache.a_matrices[l];
            grads[l] = delta.matmul_nt(a);
            g_matrices[l] = delta.scaled(root_n);
            if l > 0 {
                let back = self.layers[l].weights.matmul_tn(&delta);
                // Drop the bias row and apply the ReLU mask of the layer input.
                let d_in = back.rows() - 1;
                let mut next = DenseMatrix::from_vec(
                    d_in,
                    back.cols(),
                    back.as_slice()[..d_in * back.cols()].to_vec(),
                )?;
                for (g, &act) in next.as_mut_slice().iter_mut().zip(a.as_slice()) {
                    if act <= 0.0 {
                        *g = 0.0;
                    }
                }
                delta = next;
            }
        }
        Ok(BackwardPass { grads, g_matrices })
    }

    /// EA update of every layer's factors with `A/√n` and `G`.
    pub fn accumulate_factors(
        &mut self,
        a_matrices: &[DenseMatrix],
        g_matrices: &[DenseMatrix],
    ) -> Result<()> {
        if a_matrices.len() != self.layers.len() || g_matrices.len() != self.layers.len() {
            return Err(Error::dims(
                "accumulate_factors",
                format!("{} layers", self.layers.len()),
                format!("{} / {}", a_matrices.len(), g_matrices.len()),
            ));
        }
        for ((layer, a), g) in self.layers.iter_mut().zip(a_matrices).zip(g_matrices) {
            let scaled = a.scaled(1.0 / (a.cols() as f64).sqrt());
            layer.a_factor.update(&scaled)?;
            layer.g_factor.update(g)?;
        }
        Ok(())
    }

    /// Loss and accuracy without touching the forward cache.
    pub fn evaluate(&self, x: &DenseMatrix, y: &[usize]) -> Result<(f64, f64)> {
        self.check_batch(x, y)?;
        let (_, logits) = self.propagate(x);
        let (loss, probs) = softmax_nll(&logits, y);
        Ok((loss, accuracy(&probs, y)))
    }

    pub fn predict(&self, x: &DenseMatrix) -> Result<Vec<usize>> {
        if x.rows() != self.d_in() {
            return Err(Error::dims(
                "predict",
                format!("{} input rows", self.d_in()),
                x.rows(),
            ));
        }
        let (_, logits) = self.propagate(x);
        Ok((0..logits.cols())
            .map(|j| argmax_column(&logits, j))
            .collect())
    }

    /// Drops cached decompositions, e.g. after replacing factors.
    pub fn clear_decompositions(&mut self) {
        for layer in &mut self.layers {
            layer.cached_a = None;
            layer.cached_g = None;
        }
    }
}

fn augment(h: &DenseMatrix) -> DenseMatrix {
    let mut data = h.as_slice().to_vec();
    data.extend(std::iter::repeat_n(1.0, h.cols()));
    DenseMatrix::from_vec(h.rows() + 1, h.cols(), data).expect("augmented shape is consistent")
}

fn accuracy(probs: &DenseMatrix, y: &[usize]) -> f64 {
    let correct = y
        .iter()
        .enumerate()
        .filter(|&(j, &c)| argmax_column(probs, j) == c)
        .count();
    correct as f64 / y.len() as f64
}

fn argmax_column(m: &DenseMatrix, j: usize) -> usize {
    let mut best = 0;
    for i in 1..m.rows() {
        if m[(i, j)] > m[(best, j)] {
            best = i;
        }
    }
    best
}

/// Column-wise softmax probabilities and mean negative log-likelihood.
fn softmax_nll(logits: &DenseMatrix, y: &[usize]) -> (f64, DenseMatrix) {
    let (k, n) = logits.shape();
    let mut probs = logits.clone();
    let mut total = 0.0;
    let mut col = vec![0.0; k];
    for j in 0..n {
        for (i, c) in col.iter_mut().enumerate() {
            *c = logits[(i, j)];
        }
        let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = col.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        total += log_z - col[y[j]];
        let p = probs.as_mut_slice();
        for (i, &c) in col.iter().enumerate() {
            p[i * n + j] = (c - log_z).exp();
        }
    }
    (total / n as f64, probs)
}
