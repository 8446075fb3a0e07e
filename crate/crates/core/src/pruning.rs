//! Global unstructured magnitude pruning and the rewind-and-retrain loop.
//!
//! Every prunable entry of every weight tensor (convolutional, hidden and
//! output layers alike) competes in one global pool. Quaternion weights are
//! pruned per real component, exactly like real weights; biases never are.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Network;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Binary keep-mask over the prunable tensors of a network registry.
/// `1` keeps an entry, `0` prunes it; non-prunable tensors have no entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    entries: Vec<Option<Vec<u8>>>,
}

impl Mask {
    /// Keeps everything.
    pub fn full<T: Scalar>(net: &Network<T>) -> Self {
        Mask {
            entries: net
                .params()
                .iter()
                .map(|p| p.prunable().then(|| vec![1u8; p.value.numel()]))
                .collect(),
        }
    }

    /// Prunes every prunable entry.
    pub fn empty<T: Scalar>(net: &Network<T>) -> Self {
        let mut m = Self::full(net);
        for e in m.entries.iter_mut().flatten() {
            e.fill(0);
        }
        m
    }

    pub fn from_entries(entries: Vec<Option<Vec<u8>>>) -> Result<Self> {
        if entries.iter().flatten().flatten().any(|&b| b > 1) {
            return Err(Error::Validation("mask entries must be 0 or 1".into()));
        }
        Ok(Mask { entries })
    }

    pub fn entries(&self) -> &[Option<Vec<u8>>] {
        &self.entries
    }

    /// Keep flags of registry tensor `param`, if it is prunable.
    pub fn get(&self, param: usize) -> Option<&[u8]> {
        self.entries.get(param).and_then(|e| e.as_deref())
    }

    pub fn get_mut(&mut self, param: usize) -> Option<&mut [u8]> {
        self.entries.get_mut(param).and_then(|e| e.as_deref_mut())
    }

    pub fn kept(&self) -> usize {
        self.entries
            .iter()
            .flatten()
            .map(|e| e.iter().filter(|&&b| b != 0).count())
            .sum()
    }

    pub fn total(&self) -> usize {
        self.entries.iter().flatten().map(Vec::len).sum()
    }

    /// True when every entry kept here is also kept in `other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.entries.len() == other.entries.len()
            && self.entries.iter().zip(&other.entries).all(|(a, b)| match (a, b) {
                (None, None) => true,
                (Some(a), Some(b)) => {
                    a.len() == b.len() && a.iter().zip(b).all(|(&x, &y)| x <= y)
                }
                _ => false,
            })
    }

    /// Checks that the mask covers exactly the prunable tensors of `net`.
    pub fn check<T: Scalar>(&self, net: &Network<T>) -> Result<()> {
        if self.entries.len() != net.params().len() {
            return Err(Error::dim(format!(
                "mask covers {} tensors, network has {}",
                self.entries.len(),
                net.params().len()
            )));
        }
        for (e, p) in self.entries.iter().zip(net.params()) {
            match (e, p.prunable()) {
                (Some(e), true) if e.len() == p.value.numel() => {}
                (None, false) => {}
                (Some(e), true) => {
                    return Err(Error::dim(format!(
                        "mask for {} has {} entries, tensor {:?} has {}",
                        p.name,
                        e.len(),
                        p.value.shape(),
                        p.value.numel()
                    )))
                }
                (Some(_), false) => {
                    return Err(Error::dim(format!("mask covers non-prunable {}", p.name)))
                }
                (None, true) => return Err(Error::dim(format!("mask is missing {}", p.name))),
            }
        }
        Ok(())
    }
}

/// Fraction of prunable weights still kept, in `[0, 1]`.
pub fn sparsity(mask: &Mask) -> f64 {
    let total = mask.total();
    if total == 0 {
        return 1.0;
    }
    mask.kept() as f64 / total as f64
}

/// Parameter values captured at initialization.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot<T> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
}

impl<T: Scalar> Snapshot<T> {
    pub fn capture(net: &Network<T>) -> Self {
        Snapshot {
            names: net.params().iter().map(|p| p.name.clone()).collect(),
            values: net.params().iter().map(|p| p.value.clone()).collect(),
        }
    }

    pub fn from_parts(names: Vec<String>, values: Vec<Tensor<T>>) -> Result<Self> {
        if names.len() != values.len() {
            return Err(Error::State("snapshot names and values disagree".into()));
        }
        Ok(Snapshot { names, values })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Tensor<T>] {
        &self.values
    }

    fn check(&self, net: &Network<T>) -> Result<()> {
        let matches = self.values.len() == net.params().len()
            && net
                .params()
                .iter()
                .zip(self.names.iter().zip(&self.values))
                .all(|(p, (n, v))| *n == p.name && v.shape() == p.value.shape());
        if matches {
            Ok(())
        } else {
            Err(Error::State(format!(
                "snapshot was not captured from network `{}`",
                net.spec.name
            )))
        }
    }
}

/// Per-round pruning policy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneSchedule {
    /// Fraction of the remaining weights removed per round.
    pub rate: f64,
    /// Accuracy below which a round counts as failed.
    pub stop_threshold: f64,
    /// Consecutive failed rounds that end the loop.
    pub consecutive_failures: usize,
    /// Optional cap on pruning rounds.
    pub max_rounds: Option<usize>,
}

impl Default for PruneSchedule {
    fn default() -> Self {
        PruneSchedule {
            rate: 0.2,
            stop_threshold: 0.3,
            consecutive_failures: 2,
            max_rounds: None,
        }
    }
}

impl PruneSchedule {
    pub fn validate(&self) -> Result<()> {
        validate_rate(self.rate)?;
        if self.consecutive_failures == 0 {
            return Err(Error::Validation("consecutive failure count must be >= 1".into()));
        }
        Ok(())
    }
}

fn validate_rate(rate: f64) -> Result<()> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(Error::Validation(format!(
            "prune rate {rate} must lie strictly between 0 and 1"
        )));
    }
    Ok(())
}

/// `floor(rate * remaining)`. The tolerance absorbs binary rounding of
/// decimal rates such as `0.29 * 100`.
pub fn prune_count(rate: f64, remaining: usize) -> usize {
    let raw = rate * remaining as f64;
    ((raw + 1e-7 * raw.max(1.0)).floor() as usize).min(remaining)
}

/// Prunes the `floor(rate * kept)` kept weights of smallest magnitude,
/// ranking all prunable tensors jointly. Ties go to the lower registry
/// index. Returns the new mask; `mask` itself is unchanged.
pub fn global_magnitude_prune<T: Scalar>(net: &Network<T>, mask: &Mask, rate: f64) -> Result<Mask> {
    validate_rate(rate)?;
    mask.check(net)?;
    let mut candidates: Vec<(f64, usize, u32)> = Vec::with_capacity(mask.kept());
    for (pi, p) in net.params().iter().enumerate() {
        let Some(keep) = mask.get(pi) else { continue };
        for (j, (&k, &w)) in keep.iter().zip(p.value.data()).enumerate() {
            if k != 0 {
                candidates.push((w.abs().to_f64_lossy(), pi, j as u32));
            }
        }
    }
    let k = prune_count(rate, candidates.len());
    let mut next = mask.clone();
    if k == 0 {
        return Ok(next);
    }
    // Registry order is (tensor index, flat offset), so tuple order on
    // (|w|, tensor, offset) is magnitude then registry index.
    let order = |a: &(f64, usize, u32), b: &(f64, usize, u32)| {
        a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
    };
    if k < candidates.len() {
        candidates.select_nth_unstable_by(k - 1, order);
    }
    for &(_, pi, j) in &candidates[..k] {
        if let Some(e) = next.get_mut(pi) {
            e[j as usize] = 0;
        }
    }
    Ok(next)
}

/// Zeroes every weight the mask prunes.
pub fn apply_mask<T: Scalar>(net: &mut Network<T>, mask: &Mask) -> Result<()> {
    mask.check(net)?;
    for (pi, p) in net.params_mut().iter_mut().enumerate() {
        if let Some(keep) = mask.get(pi) {
            for (w, &k) in p.value.data_mut().iter_mut().zip(keep) {
                if k == 0 {
                    *w = T::zero();
                }
            }
        }
    }
    Ok(())
}

/// Resets parameters to `snapshot ⊙ mask`; biases return to their
/// snapshot values.
pub fn rewind<T: Scalar>(net: &mut Network<T>, snapshot: &Snapshot<T>, mask: &Mask) -> Result<()> {
    snapshot.check(net)?;
    mask.check(net)?;
    for (p, init) in net.params_mut().iter_mut().zip(&snapshot.values) {
        p.value.data_mut().copy_from_slice(init.data());
    }
    apply_mask(net, mask)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 0 is the dense network.
    pub round: usize,
    pub kept: usize,
    pub total: usize,
    pub accuracy: f64,
}

impl RoundRecord {
    pub fn sparsity(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.kept as f64 / self.total as f64
        }
    }
}

pub struct LotteryOutcome<T> {
    pub rounds: Vec<RoundRecord>,
    pub snapshot: Snapshot<T>,
    pub mask: Mask,
}

/// Iterative magnitude pruning with rewinding to initialization.
///
/// Trains the freshly initialized `net`, then repeatedly prunes, rewinds
/// the survivors to their initial values and retrains. Each round's
/// reported accuracy is that of the retrained pruned network. The loop ends
/// after `consecutive_failures` successive pruned rounds below the
/// accuracy threshold, when a round would prune nothing, or at
/// `max_rounds`.
pub fn iterative_lottery<T, Train, Eval>(
    net: &mut Network<T>,
    schedule: &PruneSchedule,
    mut train: Train,
    mut eval: Eval,
) -> Result<LotteryOutcome<T>>
where
    T: Scalar,
    Train: FnMut(&mut Network<T>, &Mask, usize) -> Result<()>,
    Eval: FnMut(&Network<T>, &Mask, usize) -> Result<f64>,
{
    schedule.validate()?;
    let snapshot = Snapshot::capture(net);
    let mut mask = Mask::full(net);
    let mut rounds = Vec::new();

    train(net, &mask, 0)?;
    rounds.push(RoundRecord {
        round: 0,
        kept: mask.kept(),
        total: mask.total(),
        accuracy: eval(net, &mask, 0)?,
    });

    let mut failures = 0;
    let mut round = 0;
    loop {
        if schedule.max_rounds.is_some_and(|m| round >= m) {
            break;
        }
        if prune_count(schedule.rate, mask.kept()) < 1 {
            break;
        }
        round += 1;
        mask = global_magnitude_prune(net, &mask, schedule.rate)?;
        rewind(net, &snapshot, &mask)?;
        train(net, &mask, round)?;
        let accuracy = eval(net, &mask, round)?;
        rounds.push(RoundRecord {
            round,
            kept: mask.kept(),
            total: mask.total(),
            accuracy,
        });
        if accuracy < schedule.stop_threshold {
            failures += 1;
            if failures >= schedule.consecutive_failures {
                break;
            }
        } else {
            failures = 0;
        }
    }
    Ok(LotteryOutcome {
        rounds,
        snapshot,
        mask,
    })
}
