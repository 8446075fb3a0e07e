//! Multi-trial training and pruning experiments.

mod report;
mod train;

pub use report::{emit_results, parse_sparsity_sweep, parse_training_curve, TRAINING_CURVE_HEADER, SPARSITY_SWEEP_HEADER};
pub use train::{
    early_stop_monitor, evaluate, train, EarlyStopMonitor, EarlyStopping, Evaluation, StopSignal, TrainReport,
    TrainSettings,
};

use std::path::PathBuf;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::{self, split_indices, Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::models::{build_network, Architecture, DatasetKind, Field, ModelSpec, Network, ParamFilter};
use crate::par;
use crate::pruning::{iterative_lottery, PruneSchedule, RoundRecord};

/// Everything that determines an experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub model: Architecture,
    pub dataset: DatasetKind,
    pub field: Field,
    pub trials: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub prune_rate: f64,
    pub stop_threshold: f64,
    pub early_stop: bool,
    pub patience: usize,
    /// Training steps between validation evaluations.
    pub eval_every: usize,
    pub validation_size: usize,
    pub seed: u64,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub workers: usize,
    /// Train on only the first N training images.
    pub train_subset: Option<usize>,
    /// Evaluate on only the first N test images.
    pub test_subset: Option<usize>,
    /// Cap on pruning rounds; 0 trains the dense model only.
    pub max_rounds: Option<usize>,
}

impl ExperimentConfig {
    /// Defaults for `model` on `dataset`, with the preset epochs, batch size and
    /// learning rate.
    pub fn new(model: Architecture, dataset: DatasetKind, field: Field) -> Result<Self> {
        let spec = ModelSpec::preset(model, dataset, field)?;
        Ok(ExperimentConfig {
            model,
            dataset,
            field,
            trials: 5,
            epochs: spec.epochs,
            batch_size: spec.batch_size,
            learning_rate: spec.learning_rate,
            prune_rate: 0.2,
            stop_threshold: 0.3,
            early_stop: false,
            patience: 10,
            eval_every: 100,
            validation_size: 5000,
            seed: 0,
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("results"),
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            train_subset: None,
            test_subset: None,
            max_rounds: None,
        })
    }

    pub fn spec(&self) -> Result<ModelSpec> {
        let mut s = ModelSpec::preset(self.model, self.dataset, self.field)?;
        s.epochs = self.epochs;
        s.batch_size = self.batch_size;
        s.learning_rate = self.learning_rate;
        Ok(s)
    }

    pub fn schedule(&self) -> PruneSchedule {
        PruneSchedule {
            rate: self.prune_rate,
            stop_threshold: self.stop_threshold,
            consecutive_failures: 2,
            max_rounds: self.max_rounds,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec()?;
        let bad = |m: String| Err(Error::Config(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if !(self.prune_rate > 0.0 && self.prune_rate < 1.0) {
            return bad(format!("prune rate {} must lie strictly between 0 and 1", self.prune_rate));
        }
        if !(0.0..=1.0).contains(&self.stop_threshold) {
            return bad(format!("stop threshold {} must lie in [0, 1]", self.stop_threshold));
        }
        if self.early_stop && (self.patience == 0 || self.eval_every == 0 || self.validation_size == 0) {
            return bad("early stopping needs positive patience, cadence and validation size".into());
        }
        if self.train_subset == Some(0) || self.test_subset == Some(0) {
            return bad("subsets must be non-empty".into());
        }
        Ok(())
    }

    fn train_settings(&self) -> TrainSettings {
        TrainSettings {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            early_stopping: self.early_stop.then_some(EarlyStopping {
                patience: self.patience,
                every: self.eval_every,
            }),
        }
    }
}

/// Encoded datasets shared by all trials of an experiment.
#[derive(Clone, Debug)]
pub struct ExperimentData {
    pub train: Dataset,
    pub test: Dataset,
}

impl ExperimentData {
    /// Loads from `config.data_dir`, applies subsets and encodes for the model.
    pub fn load(config: &ExperimentConfig) -> Result<Self> {
        let (train, test) = data::load(config.dataset, &config.data_dir)?;
        Self::prepare(config, train, test)
    }

    /// Applies subsets and the model input encoding to raw images.
    pub fn prepare(config: &ExperimentConfig, train: Dataset, test: Dataset) -> Result<Self> {
        let spec = config.spec()?;
        let train = match config.train_subset {
            Some(n) => train.head(n),
            None => train,
        };
        let test = match config.test_subset {
            Some(n) => test.head(n),
            None => test,
        };
        Ok(ExperimentData {
            train: data::encode_for(&spec, &train)?,
            test: data::encode_for(&spec, &test)?,
        })
    }
}

/// Outcome of one seeded trial.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRecord {
    pub seed: u64,
    /// Test accuracy of the dense model before training (index 0) and after
    /// each completed epoch.
    pub curve: Vec<f64>,
    pub rounds: Vec<RoundRecord>,
    /// Epochs completed in each round.
    pub epochs_per_round: Vec<usize>,
    pub stopped_early: Vec<bool>,
}

/// Runs the full train, prune, rewind, retrain loop for one seed.
pub fn run_trial(config: &ExperimentConfig, data: &ExperimentData, seed: u64) -> Result<TrialRecord> {
    config.validate()?;
    let spec = config.spec()?;
    let mut net: Network<f32> = build_network(&spec, seed)?;
    let mut order_rng = ChaCha8Rng::seed_from_u64(seed);
    order_rng.set_stream(1);
    let (train_idx, val_idx) = if config.early_stop {
        split_indices(
            data.train.len(),
            SplitSpec {
                validation: config.validation_size,
                seed: seed ^ 0x5eed_5eed,
            },
        )?
    } else {
        ((0..data.train.len()).collect(), Vec::new())
    };
    let test_idx: Vec<usize> = (0..data.test.len()).collect();
    let settings = config.train_settings();

    let mut curve = vec![evaluate(&net, &data.test, &test_idx)?.accuracy];
    let mut epochs_per_round = Vec::new();
    let mut stopped_early = Vec::new();
    let outcome = iterative_lottery(
        &mut net,
        &config.schedule(),
        |net, mask, round| {
            let report = train(
                net,
                mask,
                &data.train,
                &train_idx,
                config.early_stop.then_some(&val_idx[..]),
                &settings,
                &mut order_rng,
                |_, net| {
                    if round == 0 {
                        curve.push(evaluate(net, &data.test, &test_idx)?.accuracy);
                    }
                    Ok(())
                },
            )?;
            epochs_per_round.push(report.epochs);
            stopped_early.push(report.stopped_early);
            Ok(())
        },
        |net, _, _| Ok(evaluate(net, &data.test, &test_idx)?.accuracy),
    )?;
    Ok(TrialRecord {
        seed,
        curve,
        rounds: outcome.rounds,
        epochs_per_round,
        stopped_early,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub round: usize,
    /// Kept fraction of this model's prunable weights.
    pub sparsity: f64,
    /// Kept weights over the real-valued counterpart's prunable weights.
    pub real_relative: f64,
    pub mean: f64,
    pub std: f64,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregateResult {
    pub field: Field,
    pub curve: Vec<CurvePoint>,
    pub sweep: Vec<SweepPoint>,
    pub completed: usize,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-epoch and per-round statistics over completed trials. Points that
/// only some trials reached are averaged over those trials.
pub fn aggregate(field: Field, trials: &[TrialRecord], real_prunable: usize) -> AggregateResult {
    let epochs = trials.iter().map(|t| t.curve.len()).max().unwrap_or(0);
    let curve = (0..epochs)
        .map(|e| {
            let vals: Vec<f64> = trials.iter().filter_map(|t| t.curve.get(e).copied()).collect();
            let (mean, std) = mean_std(&vals);
            CurvePoint {
                epoch: e,
                mean,
                std,
                n: vals.len(),
            }
        })
        .collect();
    let rounds = trials.iter().map(|t| t.rounds.len()).max().unwrap_or(0);
    let sweep = (0..rounds)
        .map(|r| {
            let hits: Vec<&RoundRecord> = trials.iter().filter_map(|t| t.rounds.get(r)).collect();
            let values: Vec<f64> = hits.iter().map(|h| h.accuracy).collect();
            let (mean, std) = mean_std(&values);
            SweepPoint {
                round: r,
                sparsity: hits[0].sparsity(),
                real_relative: hits[0].kept as f64 / real_prunable.max(1) as f64,
                mean,
                std,
                values,
            }
        })
        .collect();
    AggregateResult {
        field,
        curve,
        sweep,
        completed: trials.len(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialFailure {
    pub seed: u64,
    pub exit_code: i32,
    pub message: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub aggregate: AggregateResult,
    pub trials: Vec<TrialRecord>,
    pub failures: Vec<TrialFailure>,
    pub parameters: usize,
    pub prunable: usize,
    /// Prunable weights of the real-valued counterpart model.
    pub real_prunable: usize,
    pub wall_time_s: f64,
}

/// Prunable weight count of the real-valued model for the same architecture.
pub fn real_reference_prunable(config: &ExperimentConfig) -> Result<usize> {
    let mut real = config.spec()?;
    real.field = Field::Real;
    Ok(build_network::<f32>(&real, 0)?.count(ParamFilter::Prunable))
}

/// Runs trials with seeds `seed..seed + trials` on up to `workers` threads.
/// Failed trials are reported, not aggregated.
pub fn run_experiment(config: &ExperimentConfig, data: &ExperimentData) -> Result<ExperimentResult> {
    config.validate()?;
    let start = Instant::now();
    let net: Network<f32> = build_network(&config.spec()?, config.seed)?;
    let parameters = net.count(ParamFilter::All);
    let prunable = net.count(ParamFilter::Prunable);
    drop(net);
    let real_prunable = real_reference_prunable(config)?;
    let seeds: Vec<u64> = (0..config.trials as u64).map(|i| config.seed + i).collect();
    let outcomes = par::with_workers(config.workers, || {
        par::map_collect(seeds.clone(), |s| (s, run_trial(config, data, s)))
    });
    let mut trials = Vec::new();
    let mut failures = Vec::new();
    for (seed, o) in outcomes {
        match o {
            Ok(t) => trials.push(t),
            Err(e) => failures.push(TrialFailure {
                seed,
                exit_code: e.exit_code(),
                message: e.to_string(),
            }),
        }
    }
    Ok(ExperimentResult {
        config: config.clone(),
        aggregate: aggregate(config.field, &trials, real_prunable),
        trials,
        failures,
        parameters,
        prunable,
        real_prunable,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}
