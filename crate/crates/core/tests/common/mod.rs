#![allow(dead_code)]

use ndarray::Array2;
use pepf_core::ensemble::QuantileGrid;
use pepf_core::network::{loss_gradient, HeadKind, MlpParams};
use pepf_core::HORIZON;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

pub fn trainable_heads() -> Vec<HeadKind> {
    vec![
        HeadKind::Quantile {
            grid: QuantileGrid::deciles(),
        },
        HeadKind::Normal,
        HeadKind::StudentT,
        HeadKind::JohnsonSu,
        HeadKind::Point,
    ]
}

/// Worst per-parameter relative error between the analytic gradient and
/// central differences, for one random small network. Entries where both
/// gradients are below 1e-6 in magnitude are compared against 1e-6.
pub fn fd_max_rel_error(head: &HeadKind, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_x = rng.random_range(2..6);
    let hidden = 4;
    let batch = 3;
    let mut params = MlpParams::init(n_x, hidden, hidden, head, true, &mut rng);
    for s in params.weights.slices_mut() {
        for v in s.iter_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    if let Some(norm) = params.input_norm.as_mut() {
        norm.running_mean.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        norm.running_var.mapv_inplace(|_| rng.random_range(0.5..2.0));
    }
    let x = Array2::from_shape_fn((batch, n_x), |_| rng.random_range(-1.5..1.5));
    // Targets sit at least 0.2 away from every output the loss compares them
    // with, so no step crosses a pinball or absolute-error kink.
    let out = params.forward(x.view());
    let y = Array2::from_shape_fn((batch, HORIZON), |(b, h)| {
        let lo = (0..out.ncols() / HORIZON)
            .map(|k| out[[b, k * HORIZON + h]])
            .fold(f64::INFINITY, f64::min);
        let hi = (0..out.ncols() / HORIZON)
            .map(|k| out[[b, k * HORIZON + h]])
            .fold(f64::NEG_INFINITY, f64::max);
        if rng.random_bool(0.5) {
            hi + rng.random_range(0.2..1.0)
        } else {
            lo - rng.random_range(0.2..1.0)
        }
    });
    let (_, grad) = loss_gradient(&params, x.view(), y.view(), head).expect("gradient");
    let analytic: Vec<f64> = grad.slices().iter().flat_map(|s| s.iter().copied()).collect();

    let mut worst: f64 = 0.0;
    let mut idx = 0;
    for block in 0..6 {
        let len = params.weights.slices()[block].len();
        for i in 0..len {
            let orig = params.weights.slices()[block][i];
            params.weights.slices_mut()[block][i] = orig + FD_STEP;
            let (lp, _) = loss_gradient(&params, x.view(), y.view(), head).expect("loss");
            params.weights.slices_mut()[block][i] = orig - FD_STEP;
            let (lm, _) = loss_gradient(&params, x.view(), y.view(), head).expect("loss");
            params.weights.slices_mut()[block][i] = orig;
            let numeric = (lp - lm) / (2.0 * FD_STEP);
            let a = analytic[idx];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
            idx += 1;
        }
    }
    worst
}
