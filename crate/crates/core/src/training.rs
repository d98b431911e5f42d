//! Full-batch gradient-descent backpropagation on mean squared error.
//!
//! Epoch `e` evaluates the loss of the current parameters, records it in the
//! error curve and, unless training stops there, applies one update. Training
//! stops as soon as the recorded loss reaches the error goal or the epoch
//! budget is spent, so the returned network is always the one whose loss was
//! recorded last.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::WindowedDataset;
use crate::error::{Error, Result};
use crate::nn::{dot, initialize, Family, NetworkState, StructureSpec};
use crate::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub error_goal: f64,
    pub learning_rate: f64,
    pub restarts: usize,
    pub seed: u64,
    /// Number of steps gradients flow back through the Elman context (1 = context as input).
    pub bptt_truncation: usize,
    /// Keep the Elman recurrent matrix fixed at its initial value.
    #[serde(default)]
    pub freeze_recurrent: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 2000,
            error_goal: 1e-10,
            learning_rate: 0.01,
            restarts: 10,
            seed: 0,
            bptt_truncation: 1,
            freeze_recurrent: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if !(self.error_goal > 0.0) {
            return Err(Error::invalid("error goal must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be finite and non-negative"));
        }
        if self.restarts == 0 {
            return Err(Error::invalid("restarts must be at least 1"));
        }
        if self.bptt_truncation == 0 {
            return Err(Error::invalid("bptt truncation must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainResult<T> {
    pub best: NetworkState<T>,
    /// Training MSE (normalized units) recorded at every epoch.
    pub error_curve: Vec<T>,
    pub stopped_at_epoch: usize,
    pub goal_reached: bool,
    /// Final training error of every restart in seed order; `inf` for diverged restarts.
    pub restart_errors: Vec<T>,
    /// Initialization seed of `best`, when it came from [`train_multi_restart`].
    pub seed: Option<u64>,
}

impl<T: Scalar> TrainResult<T> {
    pub fn final_error(&self) -> T {
        *self.error_curve.last().expect("error curve is never empty")
    }
}

pub fn mse<T: Scalar>(predictions: &[T], targets: &[T]) -> Result<T> {
    if predictions.len() != targets.len() || predictions.is_empty() {
        return Err(Error::invalid(format!(
            "mse needs equal non-empty lengths, got {} and {}",
            predictions.len(),
            targets.len()
        )));
    }
    let sum: T = predictions
        .iter()
        .zip(targets)
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum();
    Ok(sum / T::of(predictions.len() as f64))
}

/// Scratch buffers reused across samples.
struct Scratch<T> {
    h1: Vec<T>,
    h2: Vec<T>,
    d1: Vec<T>,
    d2: Vec<T>,
    dh: Vec<T>,
}

impl<T: Scalar> Scratch<T> {
    fn new(net: &NetworkState<T>) -> Self {
        let (l1, l2, _) = net.structure.neurons();
        Scratch {
            h1: vec![T::zero(); l1],
            h2: vec![T::zero(); l2],
            d1: vec![T::zero(); l1],
            d2: vec![T::zero(); l2],
            dh: vec![T::zero(); l1],
        }
    }
}

/// Forward step into scratch buffers; returns the output.
fn forward_into<T: Scalar>(
    net: &NetworkState<T>,
    input: &[T],
    context: &[T],
    h1: &mut [T],
    h2: &mut [T],
) -> T {
    let [a1, a2, a3] = net.structure.activations;
    for (j, h) in h1.iter_mut().enumerate() {
        let mut z = dot(net.w1.row(j), input) + net.b1[j];
        if !context.is_empty() {
            z += dot(net.recurrent.row(j), context);
        }
        *h = a1.apply(z);
    }
    for (j, h) in h2.iter_mut().enumerate() {
        *h = a2.apply(dot(net.w2.row(j), h1) + net.b2[j]);
    }
    a3.apply(dot(net.w3.row(0), h2) + net.b3[0])
}

/// Adds `delta ⊗ input` / `delta ⊗ context` / `delta` to the first-layer gradients.
fn accumulate_layer1<T: Scalar>(grad: &mut NetworkState<T>, delta: &[T], input: &[T], context: &[T]) {
    for (j, &d) in delta.iter().enumerate() {
        for (g, &x) in grad.w1.row_mut(j).iter_mut().zip(input) {
            *g += d * x;
        }
        grad.b1[j] += d;
        if !context.is_empty() {
            for (g, &c) in grad.recurrent.row_mut(j).iter_mut().zip(context) {
                *g += d * c;
            }
        }
    }
}

/// Backpropagates `dloss_dy` (derivative of the loss w.r.t. the output) through
/// one step, leaving the first-layer pre-activation error in `s.d1`.
fn backward_step<T: Scalar>(
    net: &NetworkState<T>,
    input: &[T],
    context: &[T],
    output: T,
    dloss_dy: T,
    s: &mut Scratch<T>,
    grad: &mut NetworkState<T>,
) {
    let [a1, a2, a3] = net.structure.activations;
    let d3 = dloss_dy * a3.derivative_from_output(output);
    for (j, (g, &h)) in grad.w3.row_mut(0).iter_mut().zip(&s.h2).enumerate() {
        *g += d3 * h;
        s.d2[j] = d3 * net.w3.get(0, j) * a2.derivative_from_output(h);
    }
    grad.b3[0] += d3;

    s.d1.iter_mut().for_each(|d| *d = T::zero());
    for (j, &d) in s.d2.iter().enumerate() {
        let w_row = net.w2.row(j);
        for (g, &h) in grad.w2.row_mut(j).iter_mut().zip(&s.h1) {
            *g += d * h;
        }
        grad.b2[j] += d;
        for (acc, &w) in s.d1.iter_mut().zip(w_row) {
            *acc += d * w;
        }
    }
    for (d, &h) in s.d1.iter_mut().zip(&s.h1) {
        *d *= a1.derivative_from_output(h);
    }
    accumulate_layer1(grad, &s.d1, input, context);
}

/// Earlier step kept for truncated backpropagation through time.
struct HistoryStep<T> {
    row: usize,
    context: Vec<T>,
    hidden1: Vec<T>,
}

/// One pass over the dataset in row order. Returns the MSE of the current
/// parameters and, when `grad` is given, accumulates its gradient there.
fn epoch_pass<T: Scalar>(
    net: &NetworkState<T>,
    ds: &WindowedDataset<T>,
    truncation: usize,
    mut grad: Option<&mut NetworkState<T>>,
) -> T {
    let n = T::of(ds.len() as f64);
    let two_over_n = T::of(2.0) / n;
    let recurrent = net.family == Family::Elman;
    let [a1, _, _] = net.structure.activations;
    let mut s = Scratch::new(net);
    let mut context = if recurrent {
        vec![T::zero(); net.structure.layer1_neurons]
    } else {
        Vec::new()
    };
    let mut history: VecDeque<HistoryStep<T>> = VecDeque::with_capacity(truncation);
    let mut sum = T::zero();

    for (row, (x, &target)) in ds.inputs.iter().zip(&ds.targets).enumerate() {
        let y = forward_into(net, x, &context, &mut s.h1, &mut s.h2);
        let e = y - target;
        sum += e * e;

        if let Some(g) = grad.as_deref_mut() {
            backward_step(net, x, &context, y, two_over_n * e, &mut s, g);
            if recurrent && truncation > 1 {
                // dL/d(previous hidden1) flows through the recurrent matrix.
                s.dh.copy_from_slice(&s.d1);
                for past in history.iter().rev() {
                    let mut delta = vec![T::zero(); s.dh.len()];
                    for (i, d) in delta.iter_mut().enumerate() {
                        let mut acc = T::zero();
                        for (j, &dj) in s.dh.iter().enumerate() {
                            acc += dj * net.recurrent.get(j, i);
                        }
                        *d = acc * a1.derivative_from_output(past.hidden1[i]);
                    }
                    accumulate_layer1(g, &delta, &ds.inputs[past.row], &past.context);
                    s.dh.copy_from_slice(&delta);
                }
            }
        }

        if recurrent {
            if truncation > 1 {
                if history.len() == truncation - 1 {
                    history.pop_front();
                }
                history.push_back(HistoryStep {
                    row,
                    context: context.clone(),
                    hidden1: s.h1.clone(),
                });
            }
            context.copy_from_slice(&s.h1);
        }
    }
    sum / n
}

/// MSE of `net` over `ds`, with the Elman context reset at the start of the pass.
pub fn dataset_mse<T: Scalar>(net: &NetworkState<T>, ds: &WindowedDataset<T>) -> Result<T> {
    check_compatible(net, ds)?;
    Ok(epoch_pass(net, ds, 1, None))
}

/// MSE of `net` over `ds` together with its gradient, using the given
/// Elman truncation depth. Gradients are laid out like the network.
pub fn batch_gradient<T: Scalar>(
    net: &NetworkState<T>,
    ds: &WindowedDataset<T>,
    truncation: usize,
) -> Result<(T, NetworkState<T>)> {
    check_compatible(net, ds)?;
    if truncation == 0 {
        return Err(Error::invalid("bptt truncation must be at least 1"));
    }
    let mut grad = NetworkState::zeros(net.family, net.structure, net.input_count);
    let loss = epoch_pass(net, ds, truncation, Some(&mut grad));
    Ok((loss, grad))
}

fn check_compatible<T: Scalar>(net: &NetworkState<T>, ds: &WindowedDataset<T>) -> Result<()> {
    if ds.spec.input_count != net.input_count {
        return Err(Error::invalid(format!(
            "dataset has {} inputs, network expects {}",
            ds.spec.input_count, net.input_count
        )));
    }
    if ds.is_empty() {
        return Err(Error::invalid("dataset is empty"));
    }
    Ok(())
}

/// Trains `net` in place for at most `cfg.epochs` epochs. Used for both families.
pub fn train<T: Scalar>(
    mut net: NetworkState<T>,
    ds: &WindowedDataset<T>,
    cfg: &TrainConfig,
) -> Result<TrainResult<T>> {
    cfg.validate()?;
    net.validate()?;
    check_compatible(&net, ds)?;
    let lr = T::of(cfg.learning_rate);
    let goal = T::of(cfg.error_goal);
    let freeze = cfg.freeze_recurrent;
    let mut grad = NetworkState::zeros(net.family, net.structure, net.input_count);
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let last = epoch == cfg.epochs;
        let loss = if last {
            epoch_pass(&net, ds, cfg.bptt_truncation, None)
        } else {
            for g in grad.param_slices_mut() {
                g.iter_mut().for_each(|v| *v = T::zero());
            }
            epoch_pass(&net, ds, cfg.bptt_truncation, Some(&mut grad))
        };
        if !loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                loss: loss.to_f64_lossy(),
            });
        }
        curve.push(loss);
        if loss <= goal || last {
            break;
        }
        let mut params = net.param_slices_mut();
        let grads = grad.param_slices();
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            if freeze && k == 6 {
                continue;
            }
            for (pv, &gv) in p.iter_mut().zip(g) {
                *pv -= lr * gv;
            }
        }
    }

    net.reset_context();
    let final_error = *curve.last().expect("at least one epoch");
    Ok(TrainResult {
        best: net,
        stopped_at_epoch: curve.len(),
        goal_reached: final_error <= goal,
        error_curve: curve,
        restart_errors: vec![final_error],
        seed: None,
    })
}

pub fn backprop_feedforward<T: Scalar>(
    net: NetworkState<T>,
    ds: &WindowedDataset<T>,
    cfg: &TrainConfig,
) -> Result<TrainResult<T>> {
    if net.family != Family::Feedforward {
        return Err(Error::invalid("backprop_feedforward needs a feedforward network"));
    }
    train(net, ds, cfg)
}

/// Elman training: rows are visited in order with the context carried from row
/// to row and reset to zero at the start of every epoch.
pub fn backprop_elman<T: Scalar>(
    net: NetworkState<T>,
    ds: &WindowedDataset<T>,
    cfg: &TrainConfig,
) -> Result<TrainResult<T>> {
    if net.family != Family::Elman {
        return Err(Error::invalid("backprop_elman needs an Elman network"));
    }
    train(net, ds, cfg)
}

/// Trains `cfg.restarts` networks from seeds `cfg.seed + i` and keeps the one
/// with the lowest final training error (ties go to the lowest seed).
pub fn train_multi_restart<T: Scalar>(
    family: Family,
    structure: StructureSpec,
    ds: &WindowedDataset<T>,
    cfg: &TrainConfig,
) -> Result<TrainResult<T>> {
    cfg.validate()?;
    let runs: Vec<Result<TrainResult<T>>> = (0..cfg.restarts as u64)
        .into_par_iter()
        .map(|i| {
            let seed = cfg.seed.wrapping_add(i);
            let net = initialize(family, structure, ds.spec.input_count, seed)?;
            train(net, ds, cfg).map(|mut r| {
                r.seed = Some(seed);
                r
            })
        })
        .collect();

    let mut restart_errors = Vec::with_capacity(runs.len());
    let mut best: Option<TrainResult<T>> = None;
    for run in runs {
        match run {
            Ok(r) => {
                let err = r.final_error();
                restart_errors.push(err);
                if best.as_ref().is_none_or(|b| err < b.final_error()) {
                    best = Some(r);
                }
            }
            Err(Error::Divergence { .. }) => restart_errors.push(T::infinity()),
            Err(e) => return Err(e),
        }
    }
    let mut best = best.ok_or(Error::TrainingFailed {
        restarts: cfg.restarts,
    })?;
    best.restart_errors = restart_errors;
    Ok(best)
}

/// Analytic gradient of the per-sample squared error `(y - target)^2` w.r.t.
/// every parameter, in [`NetworkState::param_slices`] order. Elman nets use
/// their stored context as a constant input.
pub fn sample_gradient<T: Scalar>(
    net: &NetworkState<T>,
    input: &[T],
    target: T,
) -> Result<NetworkState<T>> {
    net.validate()?;
    if input.len() != net.input_count {
        return Err(Error::invalid("input length does not match the network"));
    }
    let mut s = Scratch::new(net);
    let mut grad = NetworkState::zeros(net.family, net.structure, net.input_count);
    let context: &[T] = &net.context;
    let y = forward_into(net, input, context, &mut s.h1, &mut s.h2);
    backward_step(net, input, context, y, T::of(2.0) * (y - target), &mut s, &mut grad);
    Ok(grad)
}

/// Largest relative discrepancy between the analytic per-sample gradient and
/// central finite differences with step 1e-5.
pub fn gradient_check(net: &NetworkState<f64>, input: &[f64], target: f64) -> Result<f64> {
    const H: f64 = 1e-5;
    let analytic = sample_gradient(net, input, target)?;
    let loss = |n: &NetworkState<f64>| {
        let y = n.trace(input, &n.context).output;
        (y - target) * (y - target)
    };
    let mut probe = net.clone();
    let mut worst = 0.0_f64;
    for (k, a_slice) in analytic.param_slices().iter().enumerate() {
        for (i, &a) in a_slice.iter().enumerate() {
            let orig = probe.param_slices()[k][i];
            probe.param_slices_mut()[k][i] = orig + H;
            let plus = loss(&probe);
            probe.param_slices_mut()[k][i] = orig - H;
            let minus = loss(&probe);
            probe.param_slices_mut()[k][i] = orig;
            let numeric = (plus - minus) / (2.0 * H);
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
