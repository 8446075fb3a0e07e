//! Mini-batch training, evaluation and early stopping.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::Network;
use crate::par;
use crate::pruning::Mask;
use crate::scalar::Scalar;
use crate::tensor::{AdamConfig, AdamState, Tape, Tensor};

const EVAL_CHUNK: usize = 250;

/// Test-set style metrics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
}

/// Accuracy and mean cross-entropy of `net` over `indices` of `ds`.
pub fn evaluate<T: Scalar>(net: &Network<T>, ds: &Dataset, indices: &[usize]) -> Result<Evaluation> {
    if indices.is_empty() {
        return Err(Error::Validation("cannot evaluate on an empty set".into()));
    }
    let chunks: Vec<&[usize]> = indices.chunks(EVAL_CHUNK).collect();
    let parts = par::map_collect(chunks, |idx| -> Result<(usize, f64)> {
        let (x, y) = ds.batch::<T>(idx);
        let mut tape = Tape::inference();
        let vars = net.bind(&mut tape, false);
        let xv = tape.constant(x);
        let logits = net.forward(&mut tape, xv, &vars)?;
        let correct = argmax_rows(tape.value(logits)?)
            .iter()
            .zip(&y)
            .filter(|(p, t)| p == t)
            .count();
        let loss = tape.softmax_cross_entropy(logits, &y)?;
        let l = tape.value(loss)?.item().to_f64_lossy();
        Ok((correct, l * idx.len() as f64))
    });
    let (mut correct, mut loss) = (0usize, 0.0);
    for p in parts {
        let (c, l) = p?;
        correct += c;
        loss += l;
    }
    let loss = loss / indices.len() as f64;
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("evaluation loss is {loss}")));
    }
    Ok(Evaluation {
        accuracy: correct as f64 / indices.len() as f64,
        loss,
    })
}

fn argmax_rows<T: Scalar>(logits: &Tensor<T>) -> Vec<usize> {
    let c = logits.shape()[1];
    logits
        .data()
        .chunks_exact(c)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Stop rule over a stream of validation losses: stop once `patience`
/// evaluations in a row fail to set a new minimum.
#[derive(Clone, Debug)]
pub struct EarlyStopMonitor {
    patience: usize,
    best: f64,
    best_index: Option<usize>,
    seen: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StopSignal {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopMonitor {
    pub fn new(patience: usize) -> Self {
        EarlyStopMonitor {
            patience,
            best: f64::INFINITY,
            best_index: None,
            seen: 0,
        }
    }

    pub fn observe(&mut self, loss: f64) -> StopSignal {
        let index = self.seen;
        self.seen += 1;
        let improved = loss < self.best;
        if improved {
            self.best = loss;
            self.best_index = Some(index);
        }
        let since = match self.best_index {
            Some(b) => index - b,
            None => index + 1,
        };
        StopSignal {
            improved,
            stop: since >= self.patience,
        }
    }

    pub fn best_index(&self) -> Option<usize> {
        self.best_index
    }

    pub fn evaluations(&self) -> usize {
        self.seen
    }
}

/// Feeds `losses` to a monitor. Returns the index of the evaluation that
/// triggered the stop (if any) and the index of the best evaluation.
pub fn early_stop_monitor(losses: impl IntoIterator<Item = f64>, patience: usize) -> (Option<usize>, Option<usize>) {
    let mut m = EarlyStopMonitor::new(patience);
    for (i, l) in losses.into_iter().enumerate() {
        if m.observe(l).stop {
            return (Some(i), m.best_index());
        }
    }
    (None, m.best_index())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    /// Training steps between validation evaluations.
    pub every: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub early_stopping: Option<EarlyStopping>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub steps: usize,
    /// Completed epochs.
    pub epochs: usize,
    pub stopped_early: bool,
    /// Step count at the best validation evaluation.
    pub best_step: Option<usize>,
    pub validation_losses: Vec<f64>,
}

/// Trains `net` with Adam on `train_idx` of `ds`, holding masked weights at
/// zero. `on_epoch(e, net)` runs after every completed epoch. With early
/// stopping, the weights from the best validation evaluation are restored
/// at the end.
#[allow(clippy::too_many_arguments)]
pub fn train<T: Scalar>(
    net: &mut Network<T>,
    mask: &Mask,
    ds: &Dataset,
    train_idx: &[usize],
    validation: Option<&[usize]>,
    settings: &TrainSettings,
    rng: &mut ChaCha8Rng,
    mut on_epoch: impl FnMut(usize, &Network<T>) -> Result<()>,
) -> Result<TrainReport> {
    if settings.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    mask.check(net)?;
    let stopping = match (settings.early_stopping, validation) {
        (Some(es), Some(v)) if !v.is_empty() => Some((es, v)),
        (Some(_), _) => return Err(Error::Config("early stopping needs a validation split".into())),
        (None, _) => None,
    };
    let mut adam = AdamState::new(
        AdamConfig::with_lr(settings.learning_rate),
        net.params().iter().map(|p| &p.value),
    );
    let mut monitor = stopping.map(|(es, _)| EarlyStopMonitor::new(es.patience));
    let mut best: Option<Vec<Tensor<T>>> = None;
    let mut report = TrainReport::default();
    let mut order = train_idx.to_vec();

    'epochs: for epoch in 1..=settings.epochs {
        order.shuffle(rng);
        for batch in order.chunks(settings.batch_size) {
            step(net, mask, ds, batch, &mut adam)?;
            report.steps += 1;
            if let (Some((es, val)), Some(m)) = (stopping, monitor.as_mut()) {
                if report.steps % es.every == 0 {
                    let loss = evaluate(net, ds, val)?.loss;
                    report.validation_losses.push(loss);
                    let signal = m.observe(loss);
                    if signal.improved {
                        best = Some(net.params().iter().map(|p| p.value.clone()).collect());
                        report.best_step = Some(report.steps);
                    }
                    if signal.stop {
                        report.stopped_early = true;
                        break 'epochs;
                    }
                }
            }
        }
        report.epochs = epoch;
        on_epoch(epoch, net)?;
    }
    if let Some(values) = best {
        for (p, v) in net.params_mut().iter_mut().zip(values) {
            p.value = v;
        }
    }
    Ok(report)
}

fn step<T: Scalar>(net: &mut Network<T>, mask: &Mask, ds: &Dataset, batch: &[usize], adam: &mut AdamState<T>) -> Result<()> {
    let (x, y) = ds.batch::<T>(batch);
    let mut tape = Tape::new();
    let vars = net.bind(&mut tape, true);
    let xv = tape.constant(x);
    let logits = net.forward(&mut tape, xv, &vars)?;
    let loss = tape.softmax_cross_entropy(logits, &y)?;
    let l = tape.value(loss)?.item();
    if !l.is_finite() {
        return Err(Error::Numerical(format!(
            "training loss became {l} (model `{}`, optimizer step {})",
            net.spec.name,
            adam.steps() + 1
        )));
    }
    let mut grads = tape.backward(loss)?;
    let grads: Vec<Tensor<T>> = vars
        .iter()
        .zip(net.params())
        .map(|(&v, p)| grads.take(v).unwrap_or_else(|| Tensor::zeros(p.value.shape())))
        .collect();
    let grad_refs: Vec<&Tensor<T>> = grads.iter().collect();
    let mut params: Vec<&mut Tensor<T>> = net.params_mut().iter_mut().map(|p| &mut p.value).collect();
    adam.step(&mut params, &grad_refs, Some(mask))
}
