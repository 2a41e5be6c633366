//! Small differentiable classifiers and the local optimizers clients run.
//!
//! Parameter layout (row-major, flattened in this order):
//!
//! * `Softmax { features: F, classes: N }`: `W[N×F]`, then `b[N]`.
//! * `Mlp { features: F, hidden: H, classes: N }`: `W1[H×F]`, `b1[H]`,
//!   `W2[N×H]`, `b2[N]`. Hidden units use `tanh`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::seed;

/// Probability floor applied inside the cross-entropy logarithm.
pub const PROB_FLOOR: f64 = 1e-12;
const INIT_RANGE: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    Softmax {
        features: usize,
        classes: usize,
    },
    Mlp {
        features: usize,
        hidden: usize,
        classes: usize,
    },
}

impl Architecture {
    pub fn num_params(&self) -> usize {
        match *self {
            Architecture::Softmax { features, classes } => classes * features + classes,
            Architecture::Mlp {
                features,
                hidden,
                classes,
            } => hidden * features + hidden + classes * hidden + classes,
        }
    }

    pub fn num_classes(&self) -> usize {
        match *self {
            Architecture::Softmax { classes, .. } | Architecture::Mlp { classes, .. } => classes,
        }
    }

    pub fn feature_dim(&self) -> usize {
        match *self {
            Architecture::Softmax { features, .. } | Architecture::Mlp { features, .. } => features,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Architecture::Softmax { features, classes } => features > 0 && classes >= 2,
            Architecture::Mlp {
                features,
                hidden,
                classes,
            } => features > 0 && hidden > 0 && classes >= 2,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(
                "model",
                "layer sizes must be positive and classes >= 2",
            ))
        }
    }
}

/// Flat model weights tagged with the architecture that fixes their layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    arch: Architecture,
    values: Vec<f64>,
}

impl ParameterVector {
    pub fn zeros(arch: Architecture) -> Self {
        ParameterVector {
            values: vec![0.0; arch.num_params()],
            arch,
        }
    }

    /// Uniform(-0.05, 0.05) initialization from a seeded generator.
    pub fn init_uniform(arch: Architecture, seed: u64) -> Self {
        let mut rng = seed::rng(seed, &[seed::tag::INIT]);
        let values = (0..arch.num_params())
            .map(|_| rng.random_range(-INIT_RANGE..INIT_RANGE))
            .collect();
        ParameterVector { arch, values }
    }

    pub fn from_values(arch: Architecture, values: Vec<f64>) -> Result<Self> {
        if values.len() != arch.num_params() {
            return Err(Error::Dimension {
                context: "parameter vector",
                expected: arch.num_params(),
                actual: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "parameter vector",
                index,
            });
        }
        Ok(ParameterVector { arch, values })
    }

    pub fn arch(&self) -> Architecture {
        self.arch
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn check_same_shape(&self, other: &ParameterVector) -> Result<()> {
        if self.arch != other.arch || self.len() != other.len() {
            return Err(Error::Dimension {
                context: "parameter shapes",
                expected: self.len(),
                actual: other.len(),
            });
        }
        Ok(())
    }

    /// `self - base`, elementwise.
    pub fn delta_from(&self, base: &ParameterVector) -> Result<ParameterVector> {
        self.check_same_shape(base)?;
        Ok(ParameterVector {
            arch: self.arch,
            values: self
                .values
                .iter()
                .zip(&base.values)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, scale: f64, other: &ParameterVector) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
        Ok(())
    }

    /// Infinity-norm distance.
    pub fn max_abs_diff(&self, other: &ParameterVector) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

/// A borrowed mini-batch of feature rows and their labels.
#[derive(Clone, Debug)]
pub struct Batch<'a> {
    rows: Vec<&'a [f64]>,
    labels: Vec<usize>,
}

impl<'a> Batch<'a> {
    pub fn new(rows: Vec<&'a [f64]>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::config("batch", "batch must contain at least one sample"));
        }
        if rows.len() != labels.len() {
            return Err(Error::Dimension {
                context: "batch labels",
                expected: rows.len(),
                actual: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::config(
                "batch",
                format!("label {bad} out of range for {num_classes} classes"),
            ));
        }
        Ok(Batch { rows, labels })
    }

    /// Batch over an index subset of a dataset.
    pub fn from_indices(data: &'a LabeledDataset, indices: &[usize]) -> Result<Self> {
        let rows = indices
            .iter()
            .map(|&i| data.samples()[i].features.as_slice())
            .collect();
        let labels = indices.iter().map(|&i| data.samples()[i].label).collect();
        Batch::new(rows, labels, data.num_classes())
    }

    pub fn from_dataset(data: &'a LabeledDataset) -> Result<Self> {
        let rows = data.samples().iter().map(|s| s.features.as_slice()).collect();
        let labels = data.samples().iter().map(|s| s.label).collect();
        Batch::new(rows, labels, data.num_classes())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

fn check_row(arch: &Architecture, row: &[f64]) -> Result<()> {
    if row.len() != arch.feature_dim() {
        return Err(Error::Dimension {
            context: "feature row",
            expected: arch.feature_dim(),
            actual: row.len(),
        });
    }
    Ok(())
}

fn affine(weights: &[f64], bias: &[f64], x: &[f64], out: &mut Vec<f64>) {
    let cols = x.len();
    out.clear();
    out.extend(bias.iter().enumerate().map(|(r, b)| {
        let w = &weights[r * cols..(r + 1) * cols];
        b + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }));
}

/// Per-sample forward pass. Returns the logits; `hidden` receives the MLP
/// activations (left empty for softmax regression).
fn logits_into(params: &ParameterVector, x: &[f64], hidden: &mut Vec<f64>, logits: &mut Vec<f64>) {
    let v = &params.values;
    match params.arch {
        Architecture::Softmax { features, classes } => {
            hidden.clear();
            let (w, b) = v.split_at(classes * features);
            affine(w, b, x, logits);
        }
        Architecture::Mlp {
            features,
            hidden: h,
            classes,
        } => {
            let (w1, rest) = v.split_at(h * features);
            let (b1, rest) = rest.split_at(h);
            let (w2, b2) = rest.split_at(classes * h);
            affine(w1, b1, x, hidden);
            hidden.iter_mut().for_each(|z| *z = z.tanh());
            affine(w2, b2, hidden, logits);
        }
    }
}

/// In-place softmax; returns log-sum-exp of the input logits.
fn softmax_in_place(z: &mut [f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
    let lse = max + sum.ln();
    z.iter_mut().for_each(|v| *v = (*v - lse).exp());
    lse
}

/// Class probabilities for each input row.
pub fn forward(params: &ParameterVector, rows: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
    let mut hidden = Vec::new();
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            check_row(&params.arch, row)?;
            let mut z = Vec::new();
            logits_into(params, row, &mut hidden, &mut z);
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: "logits",
                    index: i,
                });
            }
            softmax_in_place(&mut z);
            Ok(z)
        })
        .collect()
}

/// Arg-max class for one row; ties resolve to the lowest class id.
pub fn predict(params: &ParameterVector, row: &[f64]) -> Result<usize> {
    check_row(&params.arch, row)?;
    let (mut hidden, mut z) = (Vec::new(), Vec::new());
    logits_into(params, row, &mut hidden, &mut z);
    Ok(argmax(&z))
}

pub(crate) fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in z.iter().enumerate().skip(1) {
        if *v > z[best] {
            best = i;
        }
    }
    best
}

/// Mean categorical cross-entropy over the batch and its gradient.
pub fn loss_and_grad(params: &ParameterVector, batch: &Batch<'_>) -> Result<(f64, ParameterVector)> {
    let arch = params.arch;
    let n_classes = arch.num_classes();
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    let (mut hidden, mut z) = (Vec::new(), Vec::new());
    let floor_ln = PROB_FLOOR.ln();

    for (i, (row, &y)) in batch.rows.iter().zip(&batch.labels).enumerate() {
        check_row(&arch, row)?;
        if y >= n_classes {
            return Err(Error::config("batch", format!("label {y} out of range")));
        }
        logits_into(params, row, &mut hidden, &mut z);
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "logits",
                index: i,
            });
        }
        let zy = z[y];
        let lse = softmax_in_place(&mut z);
        loss -= (zy - lse).max(floor_ln);
        // z now holds probabilities; turn it into dL/dlogits.
        z[y] -= 1.0;

        match arch {
            Architecture::Softmax { features, classes } => {
                let (gw, gb) = grad.split_at_mut(classes * features);
                for (c, d) in z.iter().enumerate() {
                    gb[c] += d;
                    for (g, x) in gw[c * features..(c + 1) * features].iter_mut().zip(*row) {
                        *g += d * x;
                    }
                }
            }
            Architecture::Mlp {
                features,
                hidden: h,
                classes,
            } => {
                let w2 = &params.values[h * features + h..h * features + h + classes * h];
                let (gw1, rest) = grad.split_at_mut(h * features);
                let (gb1, rest) = rest.split_at_mut(h);
                let (gw2, gb2) = rest.split_at_mut(classes * h);
                let mut dh = vec![0.0; h];
                for (c, d) in z.iter().enumerate() {
                    gb2[c] += d;
                    for j in 0..h {
                        gw2[c * h + j] += d * hidden[j];
                        dh[j] += w2[c * h + j] * d;
                    }
                }
                for j in 0..h {
                    let dz = dh[j] * (1.0 - hidden[j] * hidden[j]);
                    gb1[j] += dz;
                    for (g, x) in gw1[j * features..(j + 1) * features].iter_mut().zip(*row) {
                        *g += dz * x;
                    }
                }
            }
        }
    }

    let n = batch.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            context: "gradient",
            index,
        });
    }
    Ok((loss / n, ParameterVector { arch, values: grad }))
}

/// Mean cross-entropy without the gradient.
pub fn loss(params: &ParameterVector, batch: &Batch<'_>) -> Result<f64> {
    let floor_ln = PROB_FLOOR.ln();
    let (mut hidden, mut z) = (Vec::new(), Vec::new());
    let mut total = 0.0;
    for (i, (row, &y)) in batch.rows.iter().zip(&batch.labels).enumerate() {
        check_row(&params.arch, row)?;
        logits_into(params, row, &mut hidden, &mut z);
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "logits",
                index: i,
            });
        }
        let zy = z[y];
        let lse = softmax_in_place(&mut z);
        total -= (zy - lse).max(floor_ln);
    }
    Ok(total / batch.len() as f64)
}

/// Fraction of samples whose arg-max prediction equals the label.
pub fn top1_accuracy(params: &ParameterVector, data: &LabeledDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::config("dataset", "accuracy needs a nonempty dataset"));
    }
    let mut correct = 0usize;
    for s in data.samples() {
        if predict(params, &s.features)? == s.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::config(
                "optimizer",
                format!("expected `sgd` or `adam`, got `{other}`"),
            )),
        }
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Optimizer hyper-parameters plus (for Adam) the running moments.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    kind: OptimizerKind,
    learning_rate: f64,
    first: Vec<f64>,
    second: Vec<f64>,
    steps: u32,
}

impl OptimizerState {
    /// A fresh optimizer. Learning rate must be finite and nonnegative.
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Result<Self> {
        if !learning_rate.is_finite() || learning_rate < 0.0 {
            return Err(Error::config(
                "lr",
                "learning rate must be finite and nonnegative",
            ));
        }
        Ok(OptimizerState {
            kind,
            learning_rate,
            first: Vec::new(),
            second: Vec::new(),
            steps: 0,
        })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    /// Apply one update to `params` in place.
    pub fn step(&mut self, params: &mut ParameterVector, grad: &ParameterVector) -> Result<()> {
        params.check_same_shape(grad)?;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.values.iter_mut().zip(&grad.values) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam => {
                if self.first.is_empty() {
                    self.first = vec![0.0; params.len()];
                    self.second = vec![0.0; params.len()];
                } else if self.first.len() != params.len() {
                    return Err(Error::Dimension {
                        context: "adam moments",
                        expected: self.first.len(),
                        actual: params.len(),
                    });
                }
                self.steps += 1;
                let t = self.steps as i32;
                let bc1 = 1.0 - ADAM_BETA1.powi(t);
                let bc2 = 1.0 - ADAM_BETA2.powi(t);
                for (((p, g), m), v) in params
                    .values
                    .iter_mut()
                    .zip(&grad.values)
                    .zip(self.first.iter_mut())
                    .zip(self.second.iter_mut())
                {
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                }
                return Ok(());
            }
        }
        self.steps += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{LabeledDataset, Sample};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn softmax_arch(features: usize, classes: usize) -> Architecture {
        Architecture::Softmax { features, classes }
    }

    /// Central differences on the loss; independent of the analytic backward pass.
    fn numeric_grad(params: &ParameterVector, batch: &Batch<'_>, h: f64) -> Vec<f64> {
        (0..params.len())
            .map(|i| {
                let mut plus = params.clone();
                plus.values_mut()[i] += h;
                let mut minus = params.clone();
                minus.values_mut()[i] -= h;
                (loss(&plus, batch).unwrap() - loss(&minus, batch).unwrap()) / (2.0 * h)
            })
            .collect()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    #[test]
    fn zero_weights_give_uniform_rows() {
        let arch = softmax_arch(3, 4);
        let p = ParameterVector::zeros(arch);
        let x = [1.0, -2.0, 5.0];
        let out = forward(&p, &[&x]).unwrap();
        for v in &out[0] {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn identity_weights_pick_larger_coordinate() {
        // W = I, b = 0 on 2 features / 2 classes: logits equal the input.
        let arch = softmax_arch(2, 2);
        let p = ParameterVector::from_values(arch, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(predict(&p, &[0.3, 0.9]).unwrap(), 1);
        assert_eq!(predict(&p, &[2.0, -1.0]).unwrap(), 0);
        // exp(0.9)/(exp(0.3)+exp(0.9)) = 1/(1+exp(-0.6))
        let probs = forward(&p, &[&[0.3, 0.9]]).unwrap();
        assert!((probs[0][1] - 1.0 / (1.0 + (-0.6f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn rows_are_normalized() {
        let arch = Architecture::Mlp {
            features: 4,
            hidden: 5,
            classes: 3,
        };
        let p = ParameterVector::init_uniform(arch, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows: Vec<Vec<f64>> = (0..100)
            .map(|_| (0..4).map(|_| rng.random_range(-10.0..10.0)).collect())
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        for row in forward(&p, &refs).unwrap() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let p = ParameterVector::zeros(softmax_arch(3, 2));
        assert!(matches!(
            forward(&p, &[&[1.0, 2.0]]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn uniform_model_loss_is_ln_classes() {
        let p = ParameterVector::zeros(softmax_arch(2, 10));
        let rows = [[0.5, 1.0], [3.0, -1.0]];
        let batch = Batch::new(rows.iter().map(|r| r.as_slice()).collect(), vec![3, 7], 10).unwrap();
        let (l, _) = loss_and_grad(&p, &batch).unwrap();
        assert!((l - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let arch = softmax_arch(5, 3);
        let p = ParameterVector::init_uniform(arch, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..5).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let labels: Vec<usize> = (0..8).map(|i| i % 3).collect();
        let batch = Batch::new(rows.iter().map(|r| r.as_slice()).collect(), labels, 3).unwrap();
        let (_, g) = loss_and_grad(&p, &batch).unwrap();
        let num = numeric_grad(&p, &batch, 1e-5);
        for (a, b) in g.values().iter().zip(&num) {
            assert!(rel_err(*a, *b) <= 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn mlp_gradient_matches_finite_differences() {
        let arch = Architecture::Mlp {
            features: 4,
            hidden: 6,
            classes: 3,
        };
        let mut p = ParameterVector::init_uniform(arch, 2);
        p.values_mut().iter_mut().for_each(|v| *v *= 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let labels = vec![0, 1, 2, 2, 1, 0];
        let batch = Batch::new(rows.iter().map(|r| r.as_slice()).collect(), labels, 3).unwrap();
        let (_, g) = loss_and_grad(&p, &batch).unwrap();
        let num = numeric_grad(&p, &batch, 1e-5);
        for (a, b) in g.values().iter().zip(&num) {
            assert!(rel_err(*a, *b) <= 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn duplicated_batch_has_same_loss_and_grad() {
        let arch = softmax_arch(3, 3);
        let p = ParameterVector::init_uniform(arch, 4);
        let rows = [[1.0, 0.0, -1.0], [0.5, 0.5, 0.5]];
        let single = Batch::new(rows.iter().map(|r| r.as_slice()).collect(), vec![0, 2], 3).unwrap();
        let doubled = Batch::new(
            rows.iter().chain(rows.iter()).map(|r| r.as_slice()).collect(),
            vec![0, 2, 0, 2],
            3,
        )
        .unwrap();
        let (l1, g1) = loss_and_grad(&p, &single).unwrap();
        let (l2, g2) = loss_and_grad(&p, &doubled).unwrap();
        assert!((l1 - l2).abs() < 1e-14);
        assert!(g1.max_abs_diff(&g2).unwrap() < 1e-14);
    }

    #[test]
    fn non_finite_input_names_sample() {
        let p = ParameterVector::init_uniform(softmax_arch(2, 2), 0);
        let rows = [[0.0, 1.0], [f64::NAN, 1.0]];
        let batch = Batch::new(rows.iter().map(|r| r.as_slice()).collect(), vec![0, 1], 2).unwrap();
        match loss_and_grad(&p, &batch) {
            Err(Error::NonFinite { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn sgd_step_arithmetic() {
        let arch = softmax_arch(1, 2);
        let mut p = ParameterVector::from_values(arch, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let g = ParameterVector::from_values(arch, vec![2.0, 0.0, 0.0, 0.0]).unwrap();
        let mut opt = OptimizerState::new(OptimizerKind::Sgd, 0.1).unwrap();
        opt.step(&mut p, &g).unwrap();
        assert!((p.values()[0] - 0.8).abs() < 1e-15);

        let before = p.clone();
        opt.step(&mut p, &ParameterVector::zeros(arch)).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn adam_first_step_matches_hand_formula() {
        // t = 1: m = 0.1 g, v = 0.001 g^2, m_hat = g, v_hat = g^2,
        // so the step is lr * g / (|g| + eps).
        let arch = softmax_arch(1, 2);
        let g0 = -0.3;
        let mut p = ParameterVector::zeros(arch);
        let g = ParameterVector::from_values(arch, vec![g0, 0.0, 0.0, 0.0]).unwrap();
        let mut opt = OptimizerState::new(OptimizerKind::Adam, 0.001).unwrap();
        opt.step(&mut p, &g).unwrap();
        let expected = -0.001 * g0 / (g0.abs() + 1e-8);
        assert!((p.values()[0] - expected).abs() < 1e-15);
        assert!(p.values()[0] > 0.0);
        assert_eq!(p.values()[1], 0.0);
    }

    #[test]
    fn negative_learning_rate_rejected() {
        assert!(OptimizerState::new(OptimizerKind::Sgd, -1.0).is_err());
        assert!(OptimizerState::new(OptimizerKind::Adam, f64::NAN).is_err());
    }

    fn dataset(points: &[(f64, usize)]) -> LabeledDataset {
        let samples = points
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| Sample {
                id: i as u64,
                features: vec![x],
                label: y,
            })
            .collect();
        LabeledDataset::new(samples, 2).unwrap()
    }

    #[test]
    fn accuracy_extremes() {
        // Zero weights: uniform logits, ties go to class 0.
        let p = ParameterVector::zeros(softmax_arch(1, 2));
        assert_eq!(top1_accuracy(&p, &dataset(&[(1.0, 0), (2.0, 0)])).unwrap(), 1.0);
        assert_eq!(top1_accuracy(&p, &dataset(&[(1.0, 1), (2.0, 1)])).unwrap(), 0.0);
    }

    #[test]
    fn accuracy_on_balanced_random_labels_is_near_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let pts: Vec<(f64, usize)> = (0..1000)
            .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(0..2)))
            .collect();
        let p = ParameterVector::zeros(softmax_arch(1, 2));
        let acc = top1_accuracy(&p, &dataset(&pts)).unwrap();
        assert!((acc - 0.5).abs() <= 0.1, "{acc}");
    }
}
