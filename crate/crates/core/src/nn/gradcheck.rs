//! Finite-difference check of the autodiff gradients in 64-bit precision.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{weighted_cross_entropy, weighted_cross_entropy_value};
use super::model::{Classifier, ModelSpec, Mode, NUM_CLASSES};
use super::tape::Tape;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const FD_STEP: f64 = 1e-3;
pub const TOLERANCE: f64 = 1e-4;
/// Gradients smaller than this are compared in absolute terms.
pub const ABS_FLOOR: f64 = 1e-2;
/// Smallest batch standard deviation accepted for a live batch-norm input
/// column. Below it the loss curves on the scale of the step and central
/// differences stop approximating the derivative.
pub const MIN_COLUMN_STD: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckCase {
    pub spec: ModelSpec,
    pub batch: usize,
    pub max_rel_error: f64,
    pub worst_param: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub cases: Vec<GradCheckCase>,
    /// Draws discarded because a perturbation crossed a ReLU kink or a
    /// batch-norm column was nearly constant.
    pub rejected: usize,
    pub max_rel_error: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < TOLERANCE
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ABS_FLOOR)
}

struct Problem {
    model: Classifier<f64>,
    x: Tensor<f64>,
    labels: Vec<usize>,
    weights: Vec<f64>,
}

fn random_problem(rng: &mut ChaCha8Rng, with_hidden: bool) -> Result<Problem> {
    let input_dim = rng.random_range(1..=16);
    let hidden = match with_hidden {
        false => Vec::new(),
        true => (0..rng.random_range(1..=2)).map(|_| rng.random_range(2..=16)).collect(),
    };
    let spec = ModelSpec { input_dim, hidden };
    // Weights keep their initialization scale; biases, beta and gamma move
    // away from their constant initial values.
    let mut model = Classifier::<f64>::new(spec, rng)?;
    for (_, b) in model.backbone.layers.iter_mut() {
        b.value.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
    }
    let head = &mut model.head;
    for v in head.bn_beta.value.data_mut().iter_mut().chain(head.linear_b.value.data_mut()) {
        *v = rng.random_range(-0.5..0.5);
    }
    for g in head.bn_gamma.value.data_mut() {
        *g = rng.random_range(0.5..1.5);
    }
    let batch = rng.random_range(2..=8);
    let x = Tensor::new(
        vec![batch, input_dim],
        (0..batch * input_dim).map(|_| rng.random_range(-2.0..2.0)).collect(),
    )?;
    let labels = (0..batch).map(|_| rng.random_range(0..NUM_CLASSES)).collect();
    let weights = (0..NUM_CLASSES).map(|_| rng.random_range(0.2..3.0)).collect();
    Ok(Problem { model, x, labels, weights })
}

impl Problem {
    fn loss(&self) -> Result<f64> {
        let logits = self.model.train_logits(&self.x)?;
        weighted_cross_entropy_value(&logits, &self.labels, &self.weights)
    }

    /// Every batch-norm input column is either dead (all zero) or has a batch
    /// standard deviation of at least [`MIN_COLUMN_STD`].
    fn well_conditioned(&self) -> Result<bool> {
        let h = self.model.backbone.features(&self.x)?;
        let (n, d) = (h.rows(), h.cols());
        for j in 0..d {
            let col: Vec<f64> = (0..n).map(|i| h.row(i)[j]).collect();
            if col.iter().all(|&v| v == 0.0) {
                continue;
            }
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            if var.sqrt() < MIN_COLUMN_STD {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn pattern(&self) -> Result<Vec<bool>> {
        self.model.backbone.activation_pattern(&self.x)
    }

    /// `None` when the draw is ill-conditioned or some perturbation changes
    /// the ReLU activation pattern.
    fn check(&mut self, step: f64) -> Result<Option<(f64, String)>> {
        if !self.well_conditioned()? {
            return Ok(None);
        }
        let mut model = self.model.clone();
        let mut tape = Tape::new();
        let fwd = model.forward(&mut tape, &self.x, Mode::Train)?;
        let loss = weighted_cross_entropy(&mut tape, fwd.logits, &self.labels, &self.weights)?;
        let mut grads = tape.backward(loss)?;
        let analytic = fwd.param_grads(&tape, &mut grads);

        let base = self.pattern()?;
        let mut worst = (0.0f64, String::new());
        for (pi, g) in analytic.iter().enumerate() {
            for k in 0..g.len() {
                let orig = self.model.params()[pi].value.data()[k];
                let mut eval = |delta: f64| -> Result<Option<f64>> {
                    self.model.params_mut()[pi].value.data_mut()[k] = orig + delta;
                    let same = self.pattern()? == base;
                    let l = self.loss();
                    self.model.params_mut()[pi].value.data_mut()[k] = orig;
                    Ok(if same { Some(l?) } else { None })
                };
                let (Some(up), Some(down)) = (eval(step)?, eval(-step)?) else {
                    return Ok(None);
                };
                let numeric = (up - down) / (2.0 * step);
                let err = relative_error(g.data()[k], numeric);
                if err > worst.0 || worst.1.is_empty() {
                    worst = (err, format!("{}[{k}]", self.model.params()[pi].name));
                }
            }
        }
        Ok(Some(worst))
    }
}

/// Checks `configs` random head or MLP configurations (input dim ≤ 16,
/// batch 2–8). `with_hidden` forces the backbone on or off; `None` alternates
/// head-only and MLP cases, so redrawn configurations keep their kind.
pub fn gradcheck(configs: usize, seed: u64, with_hidden: Option<bool>) -> Result<GradCheckReport> {
    gradcheck_with_step(configs, seed, with_hidden, FD_STEP)
}

/// [`gradcheck`] with a custom central-difference step.
pub fn gradcheck_with_step(configs: usize, seed: u64, with_hidden: Option<bool>, step: f64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::with_capacity(configs);
    let mut rejected = 0;
    while cases.len() < configs {
        let hidden = with_hidden.unwrap_or(cases.len() % 2 == 1);
        let mut problem = random_problem(&mut rng, hidden)?;
        match problem.check(step)? {
            Some((err, worst_param)) => cases.push(GradCheckCase {
                spec: problem.model.spec().clone(),
                batch: problem.x.rows(),
                max_rel_error: err,
                worst_param,
            }),
            None => {
                rejected += 1;
                if rejected > 100 * configs.max(1) {
                    return Err(Error::Numerics("too many ill-conditioned draws".into()));
                }
            }
        }
    }
    let max_rel_error = cases.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport { cases, rejected, max_rel_error })
}
