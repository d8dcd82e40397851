//! Desk-scale SGD training of dense stacks with a linear readout.
//!
//! The point is not accuracy records but the trainability dichotomy: EoC
//! initializations with a stable variance fixed point train to high
//! accuracy while maintaining their activation sparsity, whereas unstable
//! configurations collapse (exploding gradients, then all activations in
//! the zero-gradient region) and sit at chance level.
//!
//! Training is plain SGD on softmax cross-entropy. The readout layer maps
//! the last hidden activation to class logits, is initialized with weight
//! variance `1/N` and zero bias, and is excluded from sparsity statistics.
//! Runs are deterministic given the network seed and the shuffle seed.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::rng::{substream, StreamTag};
use crate::sim::{Arch, Network, NetworkSpec};

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// A classification dataset with features normalized to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// Row-major `n_samples × n_features`.
    pub features: Vec<f64>,
    pub n_features: usize,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        n_features: usize,
        labels: Vec<usize>,
        n_classes: usize,
    ) -> Result<Self> {
        if n_features == 0 || n_classes == 0 {
            return Err(Error::Domain("empty feature or class space".into()));
        }
        if features.len() != labels.len() * n_features {
            return Err(Error::DimensionMismatch(format!(
                "{} feature values for {} labels x {} features",
                features.len(),
                labels.len(),
                n_features
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::Domain(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        Ok(Self {
            features,
            n_features,
            labels,
            n_classes,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    /// Borrow a subset of rows as a new dataset (copies the rows).
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self::new(features, self.n_features, labels, self.n_classes)
    }
}

fn read_file(path: &str) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_string(),
        source,
    })
}

fn read_u32_be(buf: &[u8], offset: usize, path: &str) -> Result<u32> {
    let end = offset + 4;
    if buf.len() < end {
        return Err(Error::IdxTruncated {
            path: path.to_string(),
            expected: end,
            actual: buf.len(),
        });
    }
    Ok(u32::from_be_bytes([
        buf[offset],
        buf[offset + 1],
        buf[offset + 2],
        buf[offset + 3],
    ]))
}

/// Parse an IDX image/label file pair (the MNIST container format):
/// big-endian 32-bit magic (0x00000803 images, 0x00000801 labels),
/// dimension header, unsigned-byte payload. Pixels are scaled to `[0, 1]`.
pub fn load_idx(images_path: &str, labels_path: &str) -> Result<Dataset> {
    let img = read_file(images_path)?;
    let magic = read_u32_be(&img, 0, images_path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::IdxBadMagic {
            path: images_path.to_string(),
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        });
    }
    let n = read_u32_be(&img, 4, images_path)? as usize;
    let rows = read_u32_be(&img, 8, images_path)? as usize;
    let cols = read_u32_be(&img, 12, images_path)? as usize;
    let expected = 16 + n * rows * cols;
    if img.len() != expected {
        return Err(Error::IdxTruncated {
            path: images_path.to_string(),
            expected,
            actual: img.len(),
        });
    }
    let features: Vec<f64> = img[16..].iter().map(|&b| b as f64 / 255.0).collect();

    let lab = read_file(labels_path)?;
    let magic = read_u32_be(&lab, 0, labels_path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::IdxBadMagic {
            path: labels_path.to_string(),
            expected: IDX_LABELS_MAGIC,
            found: magic,
        });
    }
    let n_lab = read_u32_be(&lab, 4, labels_path)? as usize;
    let expected = 8 + n_lab;
    if lab.len() != expected {
        return Err(Error::IdxTruncated {
            path: labels_path.to_string(),
            expected,
            actual: lab.len(),
        });
    }
    if n != n_lab {
        return Err(Error::IdxCountMismatch {
            images: n,
            labels: n_lab,
        });
    }
    let labels: Vec<usize> = lab[8..].iter().map(|&b| b as usize).collect();
    let n_classes = labels.iter().copied().max().unwrap_or(0) + 1;
    Dataset::new(features, rows * cols, labels, n_classes)
}

/// Gaussian-blob synthetic dataset: class means are random unit directions
/// scaled by `separation`, unit-variance noise, globally min-max rescaled
/// to `[0, 1]`. `separation = 0` makes the classes indistinguishable.
pub fn synthetic_dataset(
    n_classes: usize,
    n_features: usize,
    n_samples: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_classes == 0 || n_features == 0 || n_samples == 0 {
        return Err(Error::Domain(
            "n_classes, n_features, n_samples must all be positive".into(),
        ));
    }
    if !(separation >= 0.0) {
        return Err(Error::Domain(format!(
            "separation must be >= 0, got {separation}"
        )));
    }
    let means: Vec<Vec<f64>> = (0..n_classes)
        .map(|c| {
            let mut rng = substream(seed, StreamTag::Data, c as u64);
            let mut u: Vec<f64> = (0..n_features)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
            for v in &mut u {
                *v *= separation / norm;
            }
            u
        })
        .collect();

    let mut features = Vec::with_capacity(n_samples * n_features);
    let mut labels = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let class = i % n_classes;
        let mut rng = substream(seed, StreamTag::Data, (n_classes + i) as u64);
        for f in 0..n_features {
            features.push(means[class][f] + rng.sample::<f64, _>(StandardNormal));
        }
        labels.push(class);
    }

    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in &features {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = hi - lo;
    if span > 0.0 {
        for v in &mut features {
            *v = (*v - lo) / span;
        }
    } else {
        for v in &mut features {
            *v = 0.5;
        }
    }
    Dataset::new(features, n_features, labels, n_classes)
}

/// SGD hyperparameters. `input_q` is the target `q⁰ = ‖x⁰‖²/d` each input
/// is rescaled to before entering the network.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub input_q: f64,
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Domain(
                "learning_rate, epochs, batch_size must all be positive".into(),
            ));
        }
        if !(self.input_q > 0.0) {
            return Err(Error::Domain(format!(
                "input_q must be > 0, got {}",
                self.input_q
            )));
        }
        Ok(())
    }
}

/// Per-step gradient norms are logged for this many leading steps.
pub const GRAD_LOG_STEPS: usize = 15;

/// Training outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean batch loss per SGD step.
    pub loss_curve: Vec<f64>,
    pub test_accuracy: f64,
    /// Mean zero fraction of hidden activations over the test set.
    pub test_sparsity: f64,
    /// `‖δ^l‖` per hidden layer for each of the first 15 steps.
    pub grad_norm_log: Vec<Vec<f64>>,
    pub diverged: bool,
}

/// A dense stack plus a linear softmax readout.
#[derive(Debug, Clone)]
pub struct Classifier {
    pub hidden: Network,
    readout_w: Vec<f64>, // n_classes × width
    readout_b: Vec<f64>,
    n_classes: usize,
    input_q: f64,
}

impl Classifier {
    /// Initialize hidden layers from `spec` (first layer adapted to
    /// `n_features` inputs) and the readout with variance `1/N`, zero bias.
    pub fn init(spec: &NetworkSpec, n_features: usize, n_classes: usize, input_q: f64) -> Result<Self> {
        if spec.arch != Arch::Dense {
            return Err(Error::Domain("training supports dense networks only".into()));
        }
        let hidden = Network::sample(spec, n_features)?;
        let width = spec.width;
        let mut rng = substream(spec.seed, StreamTag::Readout, 0);
        let std = (1.0 / width as f64).sqrt();
        let readout_w = (0..n_classes * width)
            .map(|_| std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Ok(Self {
            hidden,
            readout_w,
            readout_b: vec![0.0; n_classes],
            n_classes,
            input_q,
        })
    }

    fn normalize(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len() as f64;
        let q0 = x.iter().map(|v| v * v).sum::<f64>() / n;
        if q0 <= 0.0 {
            return x.to_vec();
        }
        let scale = (self.input_q / q0).sqrt();
        x.iter().map(|v| v * scale).collect()
    }

    // Forward pass returning per-layer pre-activations, activations, and
    // logits.
    fn forward(&self, raw: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>) {
        let x = self.normalize(raw);
        let hs = self.hidden.forward_preactivations(&x);
        let acts: Vec<Vec<f64>> = hs
            .iter()
            .map(|h| h.iter().map(|&v| self.hidden.spec.activation.apply(v)).collect())
            .collect();
        let last = acts.last().unwrap();
        let width = last.len();
        let mut logits = self.readout_b.clone();
        for (c, l) in logits.iter_mut().enumerate() {
            let row = &self.readout_w[c * width..(c + 1) * width];
            let mut acc = 0.0;
            for (w, a) in row.iter().zip(last) {
                acc += w * a;
            }
            *l += acc;
        }
        (hs, acts, logits)
    }

    pub fn predict(&self, raw: &[f64]) -> usize {
        let (_, _, logits) = self.forward(raw);
        argmax(&logits)
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - mx).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

// Per-sample gradient contribution.
struct SampleGrad {
    loss: f64,
    // One (dW, db) pair per hidden layer, then the readout pair.
    weight_grads: Vec<Vec<f64>>,
    bias_grads: Vec<Vec<f64>>,
    readout_w_grad: Vec<f64>,
    readout_b_grad: Vec<f64>,
    // ‖δ^l‖² per hidden layer.
    delta_sq: Vec<f64>,
    // Fraction of zero activations, averaged over hidden layers.
    sparsity: f64,
}

fn sample_gradient(model: &Classifier, raw: &[f64], label: usize) -> SampleGrad {
    let (hs, acts, logits) = model.forward(raw);
    let probs = softmax(&logits);
    let loss = -(probs[label].max(1e-300)).ln();
    let depth = hs.len();
    let width = acts.last().unwrap().len();
    let act = &model.hidden.spec.activation;

    // Readout gradients.
    let dlogits: Vec<f64> = probs
        .iter()
        .enumerate()
        .map(|(c, &p)| p - if c == label { 1.0 } else { 0.0 })
        .collect();
    let last_act = acts.last().unwrap();
    let mut readout_w_grad = vec![0.0; model.n_classes * width];
    for (c, &d) in dlogits.iter().enumerate() {
        for (g, a) in readout_w_grad[c * width..(c + 1) * width]
            .iter_mut()
            .zip(last_act)
        {
            *g = d * a;
        }
    }

    // Backpropagate through the hidden stack.
    let mut deltas: Vec<Vec<f64>> = vec![Vec::new(); depth];
    let mut back = vec![0.0; width];
    for (c, &d) in dlogits.iter().enumerate() {
        for (b, w) in back
            .iter_mut()
            .zip(&model.readout_w[c * width..(c + 1) * width])
        {
            *b += w * d;
        }
    }
    deltas[depth - 1] = hs[depth - 1]
        .iter()
        .zip(&back)
        .map(|(&h, &b)| act.derivative(h) * b)
        .collect();
    for l in (0..depth - 1).rev() {
        let layer = model.hidden.layer(l + 1);
        let mut b = vec![0.0; layer.in_dim];
        for (j, &d) in deltas[l + 1].iter().enumerate() {
            let row = &layer.weights[j * layer.in_dim..(j + 1) * layer.in_dim];
            for (o, w) in b.iter_mut().zip(row) {
                *o += w * d;
            }
        }
        deltas[l] = hs[l]
            .iter()
            .zip(&b)
            .map(|(&h, &bb)| act.derivative(h) * bb)
            .collect();
    }

    // Weight gradients: dW^l = δ^l ⊗ x^{l-1}.
    let x0 = model.normalize(raw);
    let mut weight_grads = Vec::with_capacity(depth);
    let mut bias_grads = Vec::with_capacity(depth);
    for l in 0..depth {
        let input: &[f64] = if l == 0 { &x0 } else { &acts[l - 1] };
        let mut g = vec![0.0; deltas[l].len() * input.len()];
        for (j, &d) in deltas[l].iter().enumerate() {
            if d != 0.0 {
                for (gg, &v) in g[j * input.len()..(j + 1) * input.len()]
                    .iter_mut()
                    .zip(input)
                {
                    *gg = d * v;
                }
            }
        }
        weight_grads.push(g);
        bias_grads.push(deltas[l].clone());
    }

    let delta_sq: Vec<f64> = deltas
        .iter()
        .map(|d| d.iter().map(|v| v * v).sum())
        .collect();
    let sparsity = acts
        .iter()
        .map(|a| a.iter().filter(|&&v| v == 0.0).count() as f64 / a.len() as f64)
        .sum::<f64>()
        / depth as f64;

    SampleGrad {
        loss,
        weight_grads,
        bias_grads,
        readout_w_grad,
        readout_b_grad: dlogits,
        delta_sq,
        sparsity,
    }
}

/// Plain SGD with softmax cross-entropy on a dense stack plus readout.
///
/// A 10% slice of `train` is held out (never trained on); the report's
/// accuracy and sparsity come from `test`. Per-layer gradient norms are
/// logged for the first 15 steps. `diverged` is set when the loss goes
/// non-finite or every hidden activation in a batch is zero (the
/// zero-gradient collapse), at which point training stops early.
pub fn train_sgd(
    spec: &NetworkSpec,
    train: &Dataset,
    test: &Dataset,
    config: &TrainConfig,
) -> Result<(Classifier, TrainReport)> {
    config.validate()?;
    if train.n_samples() == 0 || test.n_samples() == 0 {
        return Err(Error::Domain("empty dataset".into()));
    }
    if train.n_features != test.n_features || train.n_classes != test.n_classes {
        return Err(Error::DimensionMismatch(
            "train/test feature or class mismatch".into(),
        ));
    }
    let mut model = Classifier::init(spec, train.n_features, train.n_classes, config.input_q)?;

    // 10% validation holdout: trained on the remaining 90%.
    let n = train.n_samples();
    let mut order: Vec<usize> = (0..n).collect();
    shuffle(&mut order, config.seed, 0);
    let n_holdout = n / 10;
    let train_idx: Vec<usize> = order[n_holdout..].to_vec();

    let width = spec.width;
    let depth = spec.depth;
    let lr = config.learning_rate;
    let mut loss_curve = Vec::new();
    let mut grad_norm_log = Vec::new();
    let mut diverged = false;
    let mut step = 0usize;

    'epochs: for epoch in 0..config.epochs {
        let mut idx = train_idx.clone();
        shuffle(&mut idx, config.seed, 1 + epoch as u64);
        for batch in idx.chunks(config.batch_size) {
            let grads: Vec<SampleGrad> =
                par::map_slice(batch, |&i| sample_gradient(&model, train.row(i), train.labels[i]));
            let bsz = batch.len() as f64;

            let mean_loss = grads.iter().map(|g| g.loss).sum::<f64>() / bsz;
            loss_curve.push(mean_loss);
            if step < GRAD_LOG_STEPS {
                let norms: Vec<f64> = (0..depth)
                    .map(|l| {
                        (grads.iter().map(|g| g.delta_sq[l]).sum::<f64>() / bsz).sqrt()
                    })
                    .collect();
                grad_norm_log.push(norms);
            }
            let batch_sparsity = grads.iter().map(|g| g.sparsity).sum::<f64>() / bsz;
            if !mean_loss.is_finite() || batch_sparsity == 1.0 {
                diverged = true;
                break 'epochs;
            }

            // Fixed-order accumulation, then one update.
            let scale = lr / bsz;
            for l in 0..depth {
                let layer = model.hidden.layer_mut(l);
                for g in &grads {
                    for (w, d) in layer.weights.iter_mut().zip(&g.weight_grads[l]) {
                        *w -= scale * d;
                    }
                    for (b, d) in layer.biases.iter_mut().zip(&g.bias_grads[l]) {
                        *b -= scale * d;
                    }
                }
            }
            for g in &grads {
                for (w, d) in model.readout_w.iter_mut().zip(&g.readout_w_grad) {
                    *w -= scale * d;
                }
                for (b, d) in model.readout_b.iter_mut().zip(&g.readout_b_grad) {
                    *b -= scale * d;
                }
            }
            step += 1;
            let _ = width;
        }
        let _ = epoch;
    }

    let eval = evaluate(&model, test)?;
    let report = TrainReport {
        loss_curve,
        test_accuracy: eval.accuracy,
        test_sparsity: eval.mean_sparsity,
        grad_norm_log,
        diverged,
    };
    Ok((model, report))
}

/// Accuracy and mean hidden-activation sparsity over a dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mean_sparsity: f64,
}

pub fn evaluate(model: &Classifier, data: &Dataset) -> Result<Evaluation> {
    if data.n_samples() == 0 {
        return Err(Error::Domain("empty dataset".into()));
    }
    if data.n_features != model.hidden.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "dataset has {} features, model expects {}",
            data.n_features,
            model.hidden.input_dim()
        )));
    }
    let results: Vec<(bool, f64)> = par::map_range(data.n_samples(), |i| {
        let (_, acts, logits) = model.forward(data.row(i));
        let correct = argmax(&logits) == data.labels[i];
        let sparsity = acts
            .iter()
            .map(|a| a.iter().filter(|&&v| v == 0.0).count() as f64 / a.len() as f64)
            .sum::<f64>()
            / acts.len() as f64;
        (correct, sparsity)
    });
    let n = results.len() as f64;
    Ok(Evaluation {
        accuracy: results.iter().filter(|r| r.0).count() as f64 / n,
        mean_sparsity: results.iter().map(|r| r.1).sum::<f64>() / n,
    })
}

// Fisher–Yates with a dedicated substream.
fn shuffle(indices: &mut [usize], seed: u64, round: u64) {
    let mut rng = substream(seed, StreamTag::Shuffle, round);
    for i in (1..indices.len()).rev() {
        let j = rng.gen_range(0..=i);
        indices.swap(i, j);
    }
}
