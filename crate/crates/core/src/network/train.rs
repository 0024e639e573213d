use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::network::{head_loss_grad, AdamState, HeadKind, MlpParams, NormMode, Weights};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Units in each of the two hidden layers.
    pub hidden: usize,
    /// Chronological tail fraction held out for early stopping.
    pub validation_fraction: f64,
    pub input_norm: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 800,
            patience: 50,
            hidden: 640,
            validation_fraction: 0.2,
            input_norm: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Domain(format!("train config: {what}")));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.hidden == 0 {
            return bad("batch_size, max_epochs and hidden must be positive");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation_fraction must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Split a window of `n` rows into `(n_train, n_val)` with the validation
/// rows forming the chronological tail.
pub fn validation_split(n: usize, fraction: f64) -> Result<(usize, usize)> {
    let n_val = ((n as f64 * fraction).round() as usize).max(1);
    if n < n_val + 2 {
        return Err(Error::Domain(format!(
            "window of {n} rows too small for a {:.0}% validation tail",
            fraction * 100.0
        )));
    }
    Ok((n - n_val, n_val))
}

#[derive(Debug, Clone)]
pub struct TrainedMember {
    pub params: MlpParams,
    /// 1-based epoch with the best validation loss.
    pub best_epoch: usize,
    pub epochs_run: usize,
    /// `(train_loss, val_loss)` per epoch.
    pub history: Vec<(f64, f64)>,
}

/// Loss and exact gradient of a batch with frozen input normalization.
pub fn loss_gradient(
    params: &MlpParams,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    head: &HeadKind,
) -> Result<(f64, Weights)> {
    batch_loss_grad(params, x, y, head, NormMode::Inference).map(|(l, g, _)| (l, g))
}

fn batch_loss_grad(
    params: &MlpParams,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    head: &HeadKind,
    mode: NormMode,
) -> Result<(f64, Weights, super::ForwardCache)> {
    ensure(x.nrows() > 0 && x.nrows() == y.nrows(), || {
        format!("batch rows: features {} targets {}", x.nrows(), y.nrows())
    })?;
    ensure(x.ncols() == params.n_inputs(), || {
        format!(
            "features have {} columns, network expects {}",
            x.ncols(),
            params.n_inputs()
        )
    })?;
    let (out, cache) = params.forward_cached(x, mode);
    let (loss, d_out) = head_loss_grad(head, out.view(), y)?;
    let grad = params.backward(&cache, d_out.view());
    Ok((loss, grad, cache))
}

fn eval_loss(params: &MlpParams, x: ArrayView2<f64>, y: ArrayView2<f64>, head: &HeadKind) -> f64 {
    let out = params.forward(x);
    head_loss_grad(head, out.view(), y)
        .map(|(l, _)| l)
        .unwrap_or(f64::INFINITY)
}

/// Train one ensemble member on standardized `x`/`y`.
///
/// The last `validation_fraction` of rows (chronologically) drive early
/// stopping; the parameters with the best validation loss are returned.
/// `init` continues from existing weights instead of a fresh Glorot draw.
pub fn train_member(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    head: &HeadKind,
    cfg: &TrainConfig,
    init: Option<&MlpParams>,
) -> Result<TrainedMember> {
    cfg.validate()?;
    ensure(x.nrows() == y.nrows(), || "features and targets differ in rows".into())?;
    let (n_train, _) = validation_split(x.nrows(), cfg.validation_fraction)?;
    let (x_tr, x_val) = x.split_at(Axis(0), n_train);
    let (y_tr, y_val) = y.split_at(Axis(0), n_train);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = match init {
        Some(p) => {
            ensure(p.n_inputs() == x.ncols() && p.n_outputs() == head.n_outputs(), || {
                "warm-start parameters do not match the data".into()
            })?;
            p.clone()
        }
        None => MlpParams::init(x.ncols(), cfg.hidden, cfg.hidden, head, cfg.input_norm, &mut rng),
    };
    let mut adam = AdamState::new(&params.weights);
    let mut order: Vec<usize> = (0..n_train).collect();

    let mut best = (eval_loss(&params, x_val, y_val, head), params.clone(), 0usize);
    let mut history = Vec::new();
    let mut since_best = 0usize;
    let mut epochs_run = 0usize;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut train_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let xb: Array2<f64> = x_tr.select(Axis(0), chunk);
            let yb: Array2<f64> = y_tr.select(Axis(0), chunk);
            let mode = if chunk.len() > 1 {
                NormMode::Batch
            } else {
                NormMode::Inference
            };
            let (loss, grad, cache) = batch_loss_grad(&params, xb.view(), yb.view(), head, mode)?;
            params.absorb_batch_stats(&cache);
            adam.step(&mut params.weights, &grad, cfg.learning_rate);
            train_loss += loss * chunk.len() as f64;
        }
        train_loss /= n_train as f64;
        let val_loss = eval_loss(&params, x_val, y_val, head);
        history.push((train_loss, val_loss));
        epochs_run = epoch;
        if !params.weights.is_finite() {
            break;
        }
        if val_loss < best.0 {
            best = (val_loss, params.clone(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience.max(1) {
                break;
            }
        }
    }
    if !best.0.is_finite() {
        return Err(Error::Domain("training never reached a finite validation loss".into()));
    }
    Ok(TrainedMember {
        params: best.1,
        best_epoch: best.2,
        epochs_run,
        history,
    })
}
