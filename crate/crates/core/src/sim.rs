//! Finite-width network instantiation and empirical signal-propagation
//! statistics.
//!
//! Networks are dense stacks or 1-D CNNs with circular padding, weights
//! i.i.d. Gaussian with variance `σ_w²/fan-in` and biases with variance
//! `σ_b²`. Layerwise statistics (pre-activation variance, activation
//! sparsity, backward error norms) verify the mean-field predictions at
//! finite width.
//!
//! Everything is deterministic given the spec: each layer's weights and
//! biases come from their own RNG substream, batch elements are processed
//! independently, and reductions run in input order, so numbers do not
//! depend on thread count.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::activation::ActivationSpec;
use crate::error::{Error, Result};
use crate::meanfield::MeanFieldParams;
use crate::par;
use crate::rng::{substream, StreamTag};

/// Network architecture family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arch {
    Dense,
    Conv1d,
}

/// Description of a finite-width network to instantiate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub arch: Arch,
    /// Number of layers L.
    pub depth: usize,
    /// Units per layer (channels for Conv1d).
    pub width: usize,
    /// Conv1d kernel half width k (kernel covers 2k+1 taps).
    #[serde(default)]
    pub kernel_half_width: usize,
    /// Conv1d spatial length.
    #[serde(default)]
    pub spatial_len: usize,
    pub activation: ActivationSpec,
    pub init: MeanFieldParams,
    pub seed: u64,
    /// Initialize layer 1 with weight variance `1/fan` and zero bias so
    /// the raw (not-yet-activated) input's variance is preserved.
    pub first_layer_variance_preserving: bool,
}

impl NetworkSpec {
    fn validate(&self) -> Result<()> {
        if self.depth < 1 {
            return Err(Error::Domain("depth must be >= 1".into()));
        }
        if self.width < 1 {
            return Err(Error::Domain("width must be >= 1".into()));
        }
        if self.arch == Arch::Conv1d && self.spatial_len <= 2 * self.kernel_half_width {
            return Err(Error::Domain(format!(
                "Conv1d needs spatial_len > 2k, got len {} with k {}",
                self.spatial_len, self.kernel_half_width
            )));
        }
        Ok(())
    }

    /// Flattened input dimension expected by the first layer.
    pub fn input_dim(&self) -> usize {
        match self.arch {
            Arch::Dense => self.width,
            Arch::Conv1d => self.width * self.spatial_len,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Layer {
    /// Dense: out×in row-major. Conv1d: out_c × in_c × (2k+1).
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
}

/// An instantiated network: sampled weight tensors and bias vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: NetworkSpec,
    pub(crate) layers: Vec<Layer>,
    /// Feature dimension fed to layer 1 (dense only; equals `width` for
    /// square stacks, differs when an input layer adapts external data).
    pub(crate) input_dim: usize,
}

/// Per-layer empirical statistics, averaged over the batch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerStats {
    /// 1-based layer index.
    pub layer: usize,
    /// Mean over the batch of `‖h^l‖²/N`.
    pub q_emp: f64,
    /// Mean fraction of exact zeros in the activations `x^l`.
    pub sparsity_emp: f64,
    /// `sqrt(mean over batch of ‖δ^l‖²)`; absent for forward-only passes.
    pub grad_norm: Option<f64>,
}

/// True when any layer's empirical variance exceeds `10·q_star` — the
/// blow-up criterion, far outside O(1/√N) fluctuation.
pub fn diverged(stats: &[LayerStats], q_star: f64) -> bool {
    stats.iter().any(|s| s.q_emp > 10.0 * q_star)
}

/// Instantiate the network described by `spec` (input dimension equal to
/// the layer width).
pub fn init_network(spec: &NetworkSpec) -> Result<Network> {
    let input_dim = match spec.arch {
        Arch::Dense => spec.width,
        Arch::Conv1d => spec.width,
    };
    Network::sample(spec, input_dim)
}

impl Network {
    /// Instantiate with an explicit first-layer input dimension (feature
    /// count for dense, input channels for Conv1d).
    pub fn sample(spec: &NetworkSpec, input_dim: usize) -> Result<Self> {
        spec.validate()?;
        if input_dim < 1 {
            return Err(Error::Domain("input dimension must be >= 1".into()));
        }
        let taps = match spec.arch {
            Arch::Dense => 1,
            Arch::Conv1d => 2 * spec.kernel_half_width + 1,
        };
        let layers = par::map_range(spec.depth, |l| {
            let in_dim = if l == 0 { input_dim } else { spec.width };
            let fan = in_dim * taps;
            let (w_var, b_var) = if l == 0 && spec.first_layer_variance_preserving {
                (1.0 / fan as f64, 0.0)
            } else {
                (spec.init.sigma_w2 / fan as f64, spec.init.sigma_b2)
            };
            let w_std = w_var.sqrt();
            let b_std = b_var.sqrt();
            let mut wrng = substream(spec.seed, StreamTag::Weights, l as u64);
            let weights = (0..spec.width * fan)
                .map(|_| w_std * wrng.sample::<f64, _>(StandardNormal))
                .collect();
            let mut brng = substream(spec.seed, StreamTag::Biases, l as u64);
            let biases = (0..spec.width)
                .map(|_| b_std * brng.sample::<f64, _>(StandardNormal))
                .collect();
            Layer {
                weights,
                biases,
                in_dim,
                out_dim: spec.width,
            }
        });
        Ok(Network {
            spec: spec.clone(),
            layers,
            input_dim,
        })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub(crate) fn layer(&self, l: usize) -> &Layer {
        &self.layers[l]
    }

    pub(crate) fn layer_mut(&mut self, l: usize) -> &mut Layer {
        &mut self.layers[l]
    }

    pub fn input_dim(&self) -> usize {
        match self.spec.arch {
            Arch::Dense => self.input_dim,
            Arch::Conv1d => self.input_dim * self.spec.spatial_len,
        }
    }

    // Pre-activations h^l for one sample, all layers. `x` is the raw
    // input (flattened channels×positions for Conv1d).
    pub(crate) fn forward_preactivations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut hs = Vec::with_capacity(self.layers.len());
        let mut act = x.to_vec();
        for layer in &self.layers {
            let h = match self.spec.arch {
                Arch::Dense => dense_apply(layer, &act),
                Arch::Conv1d => conv_apply(
                    layer,
                    &act,
                    self.spec.spatial_len,
                    self.spec.kernel_half_width,
                ),
            };
            act = h.iter().map(|&v| self.spec.activation.apply(v)).collect();
            hs.push(h);
        }
        hs
    }
}

fn dense_apply(layer: &Layer, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(x.len(), layer.in_dim);
    let mut out = layer.biases.clone();
    for (j, o) in out.iter_mut().enumerate() {
        let row = &layer.weights[j * layer.in_dim..(j + 1) * layer.in_dim];
        let mut acc = 0.0;
        for (w, v) in row.iter().zip(x) {
            acc += w * v;
        }
        *o += acc;
    }
    out
}

// Circular cross-correlation: h_j(α) = Σ_i Σ_β W_ji(β) x_i(α+β) + b_j.
fn conv_apply(layer: &Layer, x: &[f64], len: usize, k: usize) -> Vec<f64> {
    let taps = 2 * k + 1;
    let in_c = layer.in_dim;
    let out_c = layer.out_dim;
    debug_assert_eq!(x.len(), in_c * len);
    let mut out = vec![0.0; out_c * len];
    for j in 0..out_c {
        let w_j = &layer.weights[j * in_c * taps..(j + 1) * in_c * taps];
        for alpha in 0..len {
            let mut acc = layer.biases[j];
            for i in 0..in_c {
                let w_ji = &w_j[i * taps..(i + 1) * taps];
                let x_i = &x[i * len..(i + 1) * len];
                for (t, w) in w_ji.iter().enumerate() {
                    // β = t - k, wrapped circularly.
                    let pos = (alpha + len + t - k) % len;
                    acc += w * x_i[pos];
                }
            }
            out[j * len + alpha] = acc;
        }
    }
    out
}

fn check_batch(net: &Network, inputs: &[Vec<f64>]) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::DimensionMismatch("empty input batch".into()));
    }
    let want = net.input_dim();
    for (i, x) in inputs.iter().enumerate() {
        if x.len() != want {
            return Err(Error::DimensionMismatch(format!(
                "input {i} has length {}, network expects {want}",
                x.len()
            )));
        }
    }
    Ok(())
}

// Rescale a sample so that ‖x‖²/n equals `target`.
fn normalize_to_q(x: &[f64], target: f64) -> Result<Vec<f64>> {
    let n = x.len() as f64;
    let q0: f64 = x.iter().map(|v| v * v).sum::<f64>() / n;
    if q0 <= 0.0 {
        return Err(Error::Domain(
            "cannot normalize a zero input vector to a positive variance".into(),
        ));
    }
    let scale = (target / q0).sqrt();
    Ok(x.iter().map(|v| v * scale).collect())
}

fn prepare_inputs(inputs: &[Vec<f64>], normalize_input_q: Option<f64>) -> Result<Vec<Vec<f64>>> {
    match normalize_input_q {
        None => Ok(inputs.to_vec()),
        Some(q0) => {
            if !(q0 > 0.0) {
                return Err(Error::Domain(format!("input variance must be > 0, got {q0}")));
            }
            inputs.iter().map(|x| normalize_to_q(x, q0)).collect()
        }
    }
}

/// Forward pass over a batch: per-layer empirical variance and sparsity,
/// averaged over the batch. `normalize_input_q` rescales each input so
/// `q⁰ = ‖x⁰‖²/n` hits the requested value first.
pub fn forward_stats(
    net: &Network,
    inputs: &[Vec<f64>],
    normalize_input_q: Option<f64>,
) -> Result<Vec<LayerStats>> {
    check_batch(net, inputs)?;
    let batch = prepare_inputs(inputs, normalize_input_q)?;
    let per_sample: Vec<Vec<(f64, f64)>> = par::map_slice(&batch, |x| {
        net.forward_preactivations(x)
            .iter()
            .map(|h| {
                let n = h.len() as f64;
                let q = h.iter().map(|v| v * v).sum::<f64>() / n;
                let zeros = h
                    .iter()
                    .filter(|&&v| net.spec.activation.apply(v) == 0.0)
                    .count();
                (q, zeros as f64 / n)
            })
            .collect()
    });
    Ok(average_layer_stats(&per_sample, None))
}

/// Forward + backward pass with squared-error loss against fixed random
/// unit targets; adds `‖δ^l‖` (root mean square over the batch) to each
/// layer's statistics. Backward uses the true forward weights.
pub fn backward_stats(
    net: &Network,
    inputs: &[Vec<f64>],
    normalize_input_q: Option<f64>,
) -> Result<Vec<LayerStats>> {
    check_batch(net, inputs)?;
    let batch = prepare_inputs(inputs, normalize_input_q)?;
    let width = net.spec.width;
    let spatial = match net.spec.arch {
        Arch::Dense => 1,
        Arch::Conv1d => net.spec.spatial_len,
    };
    let out_len = width * spatial;

    let per_sample: Vec<Vec<(f64, f64, f64)>> = par::map_range(batch.len(), |idx| {
        let x = &batch[idx];
        let hs = net.forward_preactivations(x);
        let last = hs.last().unwrap();
        let x_last: Vec<f64> = last.iter().map(|&v| net.spec.activation.apply(v)).collect();

        // Fixed random unit target for this sample.
        let mut trng = substream(net.spec.seed, StreamTag::Targets, idx as u64);
        let mut target: Vec<f64> = (0..out_len)
            .map(|_| trng.sample::<f64, _>(StandardNormal))
            .collect();
        let norm = target.iter().map(|v| v * v).sum::<f64>().sqrt();
        for t in &mut target {
            *t /= norm;
        }

        // δ^L = φ'(h^L) ⊙ (x^L - t), then δ^l = φ'(h^l) ⊙ W^{l+1}ᵀ δ^{l+1}.
        let depth = hs.len();
        let mut deltas = vec![Vec::new(); depth];
        deltas[depth - 1] = hs[depth - 1]
            .iter()
            .zip(x_last.iter().zip(&target))
            .map(|(&h, (&xl, &t))| net.spec.activation.derivative(h) * (xl - t))
            .collect();
        for l in (0..depth - 1).rev() {
            let back = match net.spec.arch {
                Arch::Dense => dense_backprop(&net.layers[l + 1], &deltas[l + 1]),
                Arch::Conv1d => conv_backprop(
                    &net.layers[l + 1],
                    &deltas[l + 1],
                    net.spec.spatial_len,
                    net.spec.kernel_half_width,
                ),
            };
            deltas[l] = hs[l]
                .iter()
                .zip(&back)
                .map(|(&h, &b)| net.spec.activation.derivative(h) * b)
                .collect();
        }

        hs.iter()
            .zip(&deltas)
            .map(|(h, d)| {
                let n = h.len() as f64;
                let q = h.iter().map(|v| v * v).sum::<f64>() / n;
                let zeros = h
                    .iter()
                    .filter(|&&v| net.spec.activation.apply(v) == 0.0)
                    .count();
                let g2 = d.iter().map(|v| v * v).sum::<f64>();
                (q, zeros as f64 / n, g2)
            })
            .collect()
    });

    let stats: Vec<Vec<(f64, f64)>> = per_sample
        .iter()
        .map(|layers| layers.iter().map(|&(q, s, _)| (q, s)).collect())
        .collect();
    let grads: Vec<Vec<f64>> = per_sample
        .iter()
        .map(|layers| layers.iter().map(|&(_, _, g)| g).collect())
        .collect();
    Ok(average_layer_stats(&stats, Some(&grads)))
}

fn average_layer_stats(
    per_sample: &[Vec<(f64, f64)>],
    grad_sq: Option<&[Vec<f64>]>,
) -> Vec<LayerStats> {
    let batch = per_sample.len() as f64;
    let depth = per_sample[0].len();
    (0..depth)
        .map(|l| {
            let mut q = 0.0;
            let mut s = 0.0;
            for sample in per_sample {
                q += sample[l].0;
                s += sample[l].1;
            }
            let grad_norm = grad_sq.map(|gs| {
                let mean: f64 = gs.iter().map(|g| g[l]).sum::<f64>() / batch;
                mean.sqrt()
            });
            LayerStats {
                layer: l + 1,
                q_emp: q / batch,
                sparsity_emp: s / batch,
                grad_norm,
            }
        })
        .collect()
}

// Dense transpose-multiply: (Wᵀ δ)_i = Σ_j W_ji δ_j.
fn dense_backprop(layer: &Layer, delta: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; layer.in_dim];
    for (j, &d) in delta.iter().enumerate() {
        let row = &layer.weights[j * layer.in_dim..(j + 1) * layer.in_dim];
        for (o, w) in out.iter_mut().zip(row) {
            *o += w * d;
        }
    }
    out
}

// Adjoint of the circular cross-correlation.
fn conv_backprop(layer: &Layer, delta: &[f64], len: usize, k: usize) -> Vec<f64> {
    let taps = 2 * k + 1;
    let in_c = layer.in_dim;
    let out_c = layer.out_dim;
    let mut out = vec![0.0; in_c * len];
    for j in 0..out_c {
        let w_j = &layer.weights[j * in_c * taps..(j + 1) * in_c * taps];
        let d_j = &delta[j * len..(j + 1) * len];
        for i in 0..in_c {
            let w_ji = &w_j[i * taps..(i + 1) * taps];
            let o_i = &mut out[i * len..(i + 1) * len];
            for alpha in 0..len {
                let d = d_j[alpha];
                for (t, w) in w_ji.iter().enumerate() {
                    let pos = (alpha + len + t - k) % len;
                    o_i[pos] += w * d;
                }
            }
        }
    }
    out
}

/// Sample covariance of the layer-`l` pre-activations across channels and
/// batch, at the requested spatial positions: `M[i][j]` is the mean of
/// `h_c(α_i)·h_c(α_j)`.
pub fn empirical_cnn_covariance(
    net: &Network,
    inputs: &[Vec<f64>],
    layer: usize,
    positions: &[usize],
) -> Result<Vec<Vec<f64>>> {
    if net.spec.arch != Arch::Conv1d {
        return Err(Error::DimensionMismatch(
            "empirical_cnn_covariance requires a Conv1d network".into(),
        ));
    }
    if layer == 0 || layer > net.depth() {
        return Err(Error::Domain(format!(
            "layer index {layer} out of range 1..={}",
            net.depth()
        )));
    }
    let len = net.spec.spatial_len;
    if positions.iter().any(|&p| p >= len) {
        return Err(Error::Domain(format!(
            "positions must be < spatial_len = {len}"
        )));
    }
    check_batch(net, inputs)?;
    let channels = net.spec.width;
    let k = positions.len();

    let partials: Vec<Vec<f64>> = par::map_slice(inputs, |x| {
        let hs = net.forward_preactivations(x);
        let h = &hs[layer - 1];
        let mut m = vec![0.0; k * k];
        for c in 0..channels {
            let row = &h[c * len..(c + 1) * len];
            for (i, &pi) in positions.iter().enumerate() {
                for (j, &pj) in positions.iter().enumerate() {
                    m[i * k + j] += row[pi] * row[pj];
                }
            }
        }
        m
    });
    let denom = (inputs.len() * channels) as f64;
    let mut acc = vec![0.0; k * k];
    for m in &partials {
        for (a, v) in acc.iter_mut().zip(m) {
            *a += v;
        }
    }
    Ok((0..k)
        .map(|i| (0..k).map(|j| acc[i * k + j] / denom).collect())
        .collect())
}

/// One-layer Monte Carlo estimate of the variance map: Gaussian
/// pre-activations of variance `q` are activated and pushed through a
/// freshly sampled layer; returns the mean and standard error of the
/// output variance over `trials` independent layers.
///
/// This is the sampling oracle for the closed-form variance map.
pub fn monte_carlo_variance_map(
    spec: &ActivationSpec,
    params: &MeanFieldParams,
    q: f64,
    width: usize,
    trials: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if width < 100 {
        return Err(Error::Domain(format!("width must be >= 100, got {width}")));
    }
    if trials < 10 {
        return Err(Error::Domain(format!("trials must be >= 10, got {trials}")));
    }
    if !(q > 0.0) {
        return Err(Error::Domain(format!("variance q must be > 0, got {q}")));
    }
    let sq = q.sqrt();
    let w_std = (params.sigma_w2 / width as f64).sqrt();
    let b_std = params.sigma_b2.sqrt();
    let estimates: Vec<f64> = par::map_range(trials, |t| {
        let mut rng = substream(seed, StreamTag::Trial, t as u64);
        let x: Vec<f64> = (0..width)
            .map(|_| spec.apply(sq * rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let mut acc = 0.0;
        for _ in 0..width {
            let mut h = b_std * rng.sample::<f64, _>(StandardNormal);
            for v in &x {
                h += w_std * rng.sample::<f64, _>(StandardNormal) * v;
            }
            acc += h * h;
        }
        acc / width as f64
    });
    let n = trials as f64;
    let mean = estimates.iter().sum::<f64>() / n;
    let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}
