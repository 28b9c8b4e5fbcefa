use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Gradients, Tape, Var};
use super::tensor::{Param, Scalar, Tensor};
use crate::error::{Error, Result};

pub const NUM_CLASSES: usize = 3;
pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; running statistics are updated.
    Train,
    /// Running statistics; rows are independent of each other.
    Eval,
}

/// Architecture of a [`Classifier`]: an empty `hidden` list means the head
/// sits directly on the input features (embedding probe).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
}

impl ModelSpec {
    pub fn feature_dim(&self) -> usize {
        self.hidden.last().copied().unwrap_or(self.input_dim)
    }
}

fn uniform_matrix<T: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor<T> {
    let bound = 1.0 / (cols as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| T::lit(rng.random_range(-bound..=bound)))
        .collect();
    Tensor::new(vec![rows, cols], data).expect("matrix shape")
}

/// Batch normalization followed by a 3-way linear layer.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadModel<T> {
    pub bn_gamma: Param<T>,
    pub bn_beta: Param<T>,
    pub bn_running_mean: Tensor<T>,
    pub bn_running_var: Tensor<T>,
    pub momentum: T,
    pub eps: T,
    pub linear_w: Param<T>,
    pub linear_b: Param<T>,
}

impl<T: Scalar> HeadModel<T> {
    /// Linear weights uniform in ±1/√feature_dim, bias 0, gamma 1, beta 0,
    /// running statistics (0, 1).
    pub fn new<R: Rng + ?Sized>(feature_dim: usize, rng: &mut R) -> Self {
        Self {
            bn_gamma: Param::new("head.bn.gamma", Tensor::full(vec![feature_dim], T::one())),
            bn_beta: Param::new("head.bn.beta", Tensor::zeros(vec![feature_dim])),
            bn_running_mean: Tensor::zeros(vec![feature_dim]),
            bn_running_var: Tensor::full(vec![feature_dim], T::one()),
            momentum: T::lit(BN_MOMENTUM),
            eps: T::lit(BN_EPS),
            linear_w: Param::new("head.linear.weight", uniform_matrix(NUM_CLASSES, feature_dim, rng)),
            linear_b: Param::new("head.linear.bias", Tensor::zeros(vec![NUM_CLASSES])),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.bn_gamma.value.len()
    }

    fn cast<U: Scalar>(&self) -> HeadModel<U> {
        HeadModel {
            bn_gamma: self.bn_gamma.cast(),
            bn_beta: self.bn_beta.cast(),
            bn_running_mean: self.bn_running_mean.cast(),
            bn_running_var: self.bn_running_var.cast(),
            momentum: U::lit(self.momentum.to_f64().unwrap()),
            eps: U::lit(self.eps.to_f64().unwrap()),
            linear_w: self.linear_w.cast(),
            linear_b: self.linear_b.cast(),
        }
    }
}

/// Fully connected layers over pooled log-mel statistics, each followed by ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpBackbone<T> {
    pub layers: Vec<(Param<T>, Param<T>)>,
}

impl<T: Scalar> MlpBackbone<T> {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut fan_in = input_dim;
        let layers = hidden
            .iter()
            .enumerate()
            .map(|(i, &width)| {
                let w = Param::new(format!("backbone.{i}.weight"), uniform_matrix(width, fan_in, rng));
                let b = Param::new(format!("backbone.{i}.bias"), Tensor::zeros(vec![width]));
                fan_in = width;
                (w, b)
            })
            .collect();
        Self { layers }
    }

    /// Backbone output for `x` (the head's input).
    pub fn features(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let mut h = tape.leaf(x.clone(), false)?;
        for (w, b) in &self.layers {
            let wv = tape.leaf(w.value.clone(), false)?;
            let bv = tape.leaf(b.value.clone(), false)?;
            let z = tape.matmul_t(h, wv)?;
            let z = tape.add_row(z, bv)?;
            h = tape.relu(z)?;
        }
        Ok(tape.value(h).clone())
    }

    /// Sign pattern of every pre-activation for `x`; used to detect ReLU kinks.
    pub fn activation_pattern(&self, x: &Tensor<T>) -> Result<Vec<bool>> {
        let mut tape = Tape::new();
        let mut h = tape.leaf(x.clone(), false)?;
        let mut pattern = Vec::new();
        for (w, b) in &self.layers {
            let wv = tape.leaf(w.value.clone(), false)?;
            let bv = tape.leaf(b.value.clone(), false)?;
            let z = tape.matmul_t(h, wv)?;
            let z = tape.add_row(z, bv)?;
            pattern.extend(tape.value(z).data().iter().map(|&v| v > T::zero()));
            h = tape.relu(z)?;
        }
        Ok(pattern)
    }
}

/// Optional MLP backbone with the batch-norm + linear head on top.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier<T> {
    spec: ModelSpec,
    pub backbone: MlpBackbone<T>,
    pub head: HeadModel<T>,
}

/// Result of a recorded forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub logits: Var,
    /// Tape variables of the trainable parameters, in [`Classifier::params`] order.
    pub params: Vec<Var>,
}

impl Forward {
    /// Gradients of the parameters in [`Classifier::params`] order.
    pub fn param_grads<T: Scalar>(&self, tape: &Tape<T>, grads: &mut Gradients<T>) -> Vec<Tensor<T>> {
        self.params
            .iter()
            .map(|&v| {
                grads
                    .take(v)
                    .unwrap_or_else(|| Tensor::zeros(tape.value(v).shape().to_vec()))
            })
            .collect()
    }
}

struct BatchStats<T> {
    mean: Vec<T>,
    var: Vec<T>,
    n: usize,
}

impl<T: Scalar> Classifier<T> {
    pub fn new<R: Rng + ?Sized>(spec: ModelSpec, rng: &mut R) -> Result<Self> {
        if spec.input_dim == 0 || spec.hidden.contains(&0) {
            return Err(Error::Precondition(format!("invalid model dimensions {spec:?}")));
        }
        let backbone = MlpBackbone::new(spec.input_dim, &spec.hidden, rng);
        let head = HeadModel::new(spec.feature_dim(), rng);
        Ok(Self { spec, backbone, head })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        let mut out: Vec<&Param<T>> = self.backbone.layers.iter().flat_map(|(w, b)| [w, b]).collect();
        out.extend([&self.head.bn_gamma, &self.head.bn_beta, &self.head.linear_w, &self.head.linear_b]);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out: Vec<&mut Param<T>> = self
            .backbone
            .layers
            .iter_mut()
            .flat_map(|(w, b)| [w, b])
            .collect();
        let h = &mut self.head;
        out.extend([&mut h.bn_gamma, &mut h.bn_beta, &mut h.linear_w, &mut h.linear_b]);
        out
    }

    /// Every tensor that defines the model: parameters followed by the
    /// batch-norm running statistics.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out: Vec<(String, &Tensor<T>)> = self.params().into_iter().map(|p| (p.name.clone(), &p.value)).collect();
        out.push(("head.bn.running_mean".into(), &self.head.bn_running_mean));
        out.push(("head.bn.running_var".into(), &self.head.bn_running_var));
        out
    }

    /// Mutable counterpart of [`Classifier::named_tensors`], same order.
    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out: Vec<(String, &mut Tensor<T>)> = self
            .backbone
            .layers
            .iter_mut()
            .flat_map(|(w, b)| [w, b])
            .map(|p| (p.name.clone(), &mut p.value))
            .collect();
        let h = &mut self.head;
        for p in [&mut h.bn_gamma, &mut h.bn_beta, &mut h.linear_w, &mut h.linear_b] {
            out.push((p.name.clone(), &mut p.value));
        }
        out.push(("head.bn.running_mean".into(), &mut h.bn_running_mean));
        out.push(("head.bn.running_var".into(), &mut h.bn_running_var));
        out
    }

    pub fn cast<U: Scalar>(&self) -> Classifier<U> {
        Classifier {
            spec: self.spec.clone(),
            backbone: MlpBackbone {
                layers: self.backbone.layers.iter().map(|(w, b)| (w.cast(), b.cast())).collect(),
            },
            head: self.head.cast(),
        }
    }

    fn record(&self, tape: &mut Tape<T>, x: &Tensor<T>, mode: Mode, grads: bool) -> Result<(Forward, Option<BatchStats<T>>)> {
        let (n, d) = x.expect_matrix("classifier input")?;
        if d != self.spec.input_dim {
            return Err(Error::Shape(format!(
                "input has {d} features, model expects {}",
                self.spec.input_dim
            )));
        }
        if n == 0 {
            return Err(Error::Precondition("empty batch".into()));
        }
        if mode == Mode::Train && n < 2 {
            return Err(Error::Precondition(
                "train-mode batch normalization needs a batch of at least 2".into(),
            ));
        }
        let mut params = Vec::new();
        let mut h = tape.leaf(x.clone(), false)?;
        for (w, b) in &self.backbone.layers {
            let wv = tape.leaf(w.value.clone(), grads)?;
            let bv = tape.leaf(b.value.clone(), grads)?;
            params.extend([wv, bv]);
            let z = tape.matmul_t(h, wv)?;
            let z = tape.add_row(z, bv)?;
            h = tape.relu(z)?;
        }

        let head = &self.head;
        let gamma = tape.leaf(head.bn_gamma.value.clone(), grads)?;
        let beta = tape.leaf(head.bn_beta.value.clone(), grads)?;
        let (normed, stats) = match mode {
            Mode::Train => {
                let mean = tape.col_mean(h)?;
                let centered = tape.sub_row(h, mean)?;
                let sq = tape.square(centered)?;
                let var = tape.col_mean(sq)?;
                let shifted = tape.add_scalar(var, head.eps)?;
                let std = tape.sqrt(shifted)?;
                let stats = BatchStats {
                    mean: tape.value(mean).data().to_vec(),
                    var: tape.value(var).data().to_vec(),
                    n,
                };
                (tape.div_row(centered, std)?, Some(stats))
            }
            Mode::Eval => {
                let mean = tape.leaf(head.bn_running_mean.clone(), false)?;
                let std = tape.leaf(head.bn_running_var.map(|v| (v + head.eps).sqrt()), false)?;
                let centered = tape.sub_row(h, mean)?;
                (tape.div_row(centered, std)?, None)
            }
        };
        let scaled = tape.mul_row(normed, gamma)?;
        let y = tape.add_row(scaled, beta)?;
        let w = tape.leaf(head.linear_w.value.clone(), grads)?;
        let b = tape.leaf(head.linear_b.value.clone(), grads)?;
        params.extend([gamma, beta, w, b]);
        let z = tape.matmul_t(y, w)?;
        let logits = tape.add_row(z, b)?;
        Ok((Forward { logits, params }, stats))
    }

    /// Records a forward pass on `tape`. In train mode the batch statistics
    /// normalize the features and update the running statistics with
    /// momentum 0.1 (unbiased variance, as the running estimate).
    pub fn forward(&mut self, tape: &mut Tape<T>, x: &Tensor<T>, mode: Mode) -> Result<Forward> {
        let (fwd, stats) = self.record(tape, x, mode, true)?;
        if let Some(s) = stats {
            let m = self.head.momentum;
            let keep = T::one() - m;
            let unbias = T::from_usize(s.n).unwrap() / T::from_usize(s.n - 1).unwrap();
            for (r, &b) in self.head.bn_running_mean.data_mut().iter_mut().zip(&s.mean) {
                *r = keep * *r + m * b;
            }
            for (r, &b) in self.head.bn_running_var.data_mut().iter_mut().zip(&s.var) {
                *r = keep * *r + m * b * unbias;
            }
        }
        Ok(fwd)
    }

    /// Eval-mode logits `[batch, 3]` without touching any state.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let (fwd, _) = self.record(&mut tape, x, Mode::Eval, false)?;
        Ok(tape.value(fwd.logits).clone())
    }

    /// Train-mode logits without updating running statistics.
    pub fn train_logits(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let (fwd, _) = self.record(&mut tape, x, Mode::Train, false)?;
        Ok(tape.value(fwd.logits).clone())
    }
}
