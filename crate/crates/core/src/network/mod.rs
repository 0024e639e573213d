//! Two-hidden-layer feed-forward network with interchangeable output heads.
//!
//! The map is `ℓ2 = g(g(x W1 + b1) W2 + b2) W3 + b3` with `g = softplus`,
//! optionally preceded by an input batch-normalization layer. Raw outputs are
//! laid out block-major: output parameter `k` for hour `h` is slot `k * 24 + h`.

mod adam;
mod checkpoint;
mod loss;
mod train;

pub use adam::{AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use checkpoint::{ModelCheckpoint, CHECKPOINT_VERSION};
pub use loss::{distribution_nll, head_loss_grad, pinball_loss};
pub use train::{loss_gradient, train_member, validation_split, TrainConfig, TrainedMember};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::Uniform;
use serde::{Deserialize, Serialize};

use crate::distributions::special::{sigmoid, softplus};
use crate::ensemble::QuantileGrid;
use crate::error::{ensure, Result};
use crate::HORIZON;

/// Output head attached to the last linear layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HeadKind {
    /// One value per hour, trained on MAE.
    Point,
    /// One value per hour and level, trained on the pinball loss.
    Quantile {
        #[serde(default = "QuantileGrid::deciles")]
        grid: QuantileGrid,
    },
    Normal,
    StudentT,
    #[serde(alias = "jsu")]
    JohnsonSu,
}

impl HeadKind {
    /// Number of raw outputs per hour.
    pub fn n_params(&self) -> usize {
        match self {
            HeadKind::Point => 1,
            HeadKind::Quantile { grid } => grid.len(),
            HeadKind::Normal => 2,
            HeadKind::StudentT => 3,
            HeadKind::JohnsonSu => 4,
        }
    }

    pub fn n_outputs(&self) -> usize {
        self.n_params() * HORIZON
    }

    pub fn is_distributional(&self) -> bool {
        matches!(self, HeadKind::Normal | HeadKind::StudentT | HeadKind::JohnsonSu)
    }

    pub fn name(&self) -> &'static str {
        match self {
            HeadKind::Point => "point",
            HeadKind::Quantile { .. } => "quantile",
            HeadKind::Normal => "normal",
            HeadKind::StudentT => "student_t",
            HeadKind::JohnsonSu => "jsu",
        }
    }
}

/// Trainable tensors. Also used for gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w3: Array2<f64>,
    pub b3: Array1<f64>,
}

impl Weights {
    pub fn zeros(n_x: usize, n_u1: usize, n_u2: usize, n_out: usize) -> Self {
        Self {
            w1: Array2::zeros((n_x, n_u1)),
            b1: Array1::zeros(n_u1),
            w2: Array2::zeros((n_u1, n_u2)),
            b2: Array1::zeros(n_u2),
            w3: Array2::zeros((n_u2, n_out)),
            b3: Array1::zeros(n_out),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.n_inputs(), self.w1.ncols(), self.w2.ncols(), self.n_outputs())
    }

    pub fn n_inputs(&self) -> usize {
        self.w1.nrows()
    }

    pub fn n_outputs(&self) -> usize {
        self.b3.len()
    }

    pub fn slices(&self) -> [&[f64]; 6] {
        [
            self.w1.as_slice().expect("standard layout"),
            self.b1.as_slice().expect("standard layout"),
            self.w2.as_slice().expect("standard layout"),
            self.b2.as_slice().expect("standard layout"),
            self.w3.as_slice().expect("standard layout"),
            self.b3.as_slice().expect("standard layout"),
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.w1.as_slice_mut().expect("standard layout"),
            self.b1.as_slice_mut().expect("standard layout"),
            self.w2.as_slice_mut().expect("standard layout"),
            self.b2.as_slice_mut().expect("standard layout"),
            self.w3.as_slice_mut().expect("standard layout"),
            self.b3.as_slice_mut().expect("standard layout"),
        ]
    }

    pub fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// Running statistics of the input batch-normalization layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputNorm {
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl InputNorm {
    pub fn new(n_x: usize) -> Self {
        Self {
            running_mean: Array1::zeros(n_x),
            running_var: Array1::ones(n_x),
            momentum: 0.99,
            eps: 1e-3,
        }
    }

    fn apply(&self, x: ArrayView2<f64>, mean: ArrayView1<f64>, var: ArrayView1<f64>) -> Array2<f64> {
        let inv_std = var.mapv(|v| 1.0 / (v + self.eps).sqrt());
        let mut out = &x - &mean;
        out *= &inv_std;
        out
    }

    fn update(&mut self, batch_mean: &Array1<f64>, batch_var: &Array1<f64>) {
        let m = self.momentum;
        Zip::from(&mut self.running_mean)
            .and(batch_mean)
            .for_each(|r, &b| *r = m * *r + (1.0 - m) * b);
        Zip::from(&mut self.running_var)
            .and(batch_var)
            .for_each(|r, &b| *r = m * *r + (1.0 - m) * b);
    }
}

/// Network parameters: trainable weights plus optional input normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub weights: Weights,
    pub input_norm: Option<InputNorm>,
}

/// How the input normalization layer sees a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    /// Use frozen running statistics.
    Inference,
    /// Use the batch's own mean and variance (training behaviour).
    Batch,
}

/// Intermediate activations kept for back-propagation.
pub(crate) struct ForwardCache {
    xn: Array2<f64>,
    z1: Array2<f64>,
    a1: Array2<f64>,
    z2: Array2<f64>,
    a2: Array2<f64>,
    /// Batch mean and variance, present when `NormMode::Batch` was used.
    batch_stats: Option<(Array1<f64>, Array1<f64>)>,
}

impl MlpParams {
    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(
        n_x: usize,
        n_u1: usize,
        n_u2: usize,
        head: &HeadKind,
        input_norm: bool,
        rng: &mut R,
    ) -> Self {
        let n_out = head.n_outputs();
        let mut w = Weights::zeros(n_x, n_u1, n_u2, n_out);
        glorot(&mut w.w1, rng);
        glorot(&mut w.w2, rng);
        glorot(&mut w.w3, rng);
        Self {
            weights: w,
            input_norm: input_norm.then(|| InputNorm::new(n_x)),
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.weights.n_inputs()
    }

    pub fn n_outputs(&self) -> usize {
        self.weights.n_outputs()
    }

    pub(crate) fn forward_cached(&self, x: ArrayView2<f64>, mode: NormMode) -> (Array2<f64>, ForwardCache) {
        let w = &self.weights;
        let (xn, batch_stats) = match (&self.input_norm, mode) {
            (None, _) => (x.to_owned(), None),
            (Some(norm), NormMode::Inference) => {
                (norm.apply(x, norm.running_mean.view(), norm.running_var.view()), None)
            }
            (Some(norm), NormMode::Batch) => {
                let mean = x.mean_axis(Axis(0)).expect("non-empty batch");
                let var = x.var_axis(Axis(0), 0.0);
                (norm.apply(x, mean.view(), var.view()), Some((mean, var)))
            }
        };
        let z1 = xn.dot(&w.w1) + &w.b1;
        let a1 = z1.mapv(softplus);
        let z2 = a1.dot(&w.w2) + &w.b2;
        let a2 = z2.mapv(softplus);
        let out = a2.dot(&w.w3) + &w.b3;
        (
            out,
            ForwardCache {
                xn,
                z1,
                a1,
                z2,
                a2,
                batch_stats,
            },
        )
    }

    /// Batch forward pass using frozen normalization statistics.
    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.forward_cached(x, NormMode::Inference).0
    }

    /// Gradient of the loss w.r.t. every weight given `d_out = ∂loss/∂ℓ2`.
    pub(crate) fn backward(&self, cache: &ForwardCache, d_out: ArrayView2<f64>) -> Weights {
        let w = &self.weights;
        let g_w3 = cache.a2.t().dot(&d_out);
        let g_b3 = d_out.sum_axis(Axis(0));
        let mut d_z2 = d_out.dot(&w.w3.t());
        Zip::from(&mut d_z2).and(&cache.z2).for_each(|d, &z| *d *= sigmoid(z));
        let g_w2 = cache.a1.t().dot(&d_z2);
        let g_b2 = d_z2.sum_axis(Axis(0));
        let mut d_z1 = d_z2.dot(&w.w2.t());
        Zip::from(&mut d_z1).and(&cache.z1).for_each(|d, &z| *d *= sigmoid(z));
        let g_w1 = cache.xn.t().dot(&d_z1);
        let g_b1 = d_z1.sum_axis(Axis(0));
        Weights {
            w1: g_w1,
            b1: g_b1,
            w2: g_w2,
            b2: g_b2,
            w3: g_w3,
            b3: g_b3,
        }
    }

    pub(crate) fn absorb_batch_stats(&mut self, cache: &ForwardCache) {
        if let (Some(norm), Some((mean, var))) = (self.input_norm.as_mut(), cache.batch_stats.as_ref()) {
            norm.update(mean, var);
        }
    }
}

fn glorot<R: Rng + ?Sized>(w: &mut Array2<f64>, rng: &mut R) {
    let limit = (6.0 / (w.nrows() + w.ncols()) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
    w.iter_mut().for_each(|v| *v = rng.sample(dist));
}

/// Forward one feature vector through the network, returning `ℓ2`.
pub fn mlp_forward(params: &MlpParams, x: &[f64], head: &HeadKind) -> Result<Vec<f64>> {
    ensure(x.len() == params.n_inputs(), || {
        format!("feature length {} but network expects {}", x.len(), params.n_inputs())
    })?;
    ensure(head.n_outputs() == params.n_outputs(), || {
        format!(
            "head {} needs {} outputs but network has {}",
            head.name(),
            head.n_outputs(),
            params.n_outputs()
        )
    })?;
    let xv = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
    Ok(params.forward(xv).row(0).to_vec())
}
