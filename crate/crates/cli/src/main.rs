use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use qlottery::harness::{emit_results, run_experiment, ExperimentConfig, ExperimentData};
use qlottery::models::{Architecture, DatasetKind, Field};
use qlottery::{verify, Error};

#[derive(Parser)]
#[command(name = "qlottery", version, about = "Quaternion lottery-ticket experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train, prune and retrain over several seeds; write CSVs and a manifest.
    Run(Box<RunArgs>),
    /// Run the built-in oracle checks.
    Verify,
}

#[derive(Args)]
struct RunArgs {
    /// lenet300, lenet12, conv2, conv4 or conv6
    #[arg(long)]
    model: Architecture,
    /// mnist, cifar10 or cifar100 (defaults to the model's first dataset)
    #[arg(long)]
    dataset: Option<DatasetKind>,
    /// real or quat
    #[arg(long)]
    field: Field,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    prune_rate: Option<f64>,
    #[arg(long)]
    stop_threshold: Option<f64>,
    #[arg(long)]
    early_stop: bool,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Dataset root directory
    #[arg(long, default_value = "data")]
    data: PathBuf,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Concurrent trials (default: available cores)
    #[arg(long)]
    workers: Option<usize>,
    /// Maximum pruning rounds; 0 trains only the dense model
    #[arg(long)]
    rounds: Option<usize>,
    /// Train on the first N training images
    #[arg(long)]
    train_subset: Option<usize>,
    /// Evaluate on the first N test images
    #[arg(long)]
    test_subset: Option<usize>,
    /// Steps between validation evaluations when early stopping
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    validation_size: Option<usize>,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig, Error> {
        let dataset = self.dataset.unwrap_or(self.model.default_dataset());
        let mut c = ExperimentConfig::new(self.model, dataset, self.field)?;
        macro_rules! set {
            ($($arg:ident => $field:ident),*) => {
                $(if let Some(v) = self.$arg { c.$field = v; })*
            };
        }
        set!(trials => trials, epochs => epochs, batch => batch_size, lr => learning_rate,
             prune_rate => prune_rate, stop_threshold => stop_threshold, patience => patience,
             seed => seed, workers => workers, eval_every => eval_every,
             validation_size => validation_size);
        c.early_stop = self.early_stop;
        c.data_dir = self.data.clone();
        c.out_dir = self.out.clone();
        c.max_rounds = self.rounds;
        c.train_subset = self.train_subset;
        c.test_subset = self.test_subset;
        c.validate()?;
        Ok(c)
    }
}

fn run(args: &RunArgs) -> Result<ExitCode, Error> {
    let config = args.config()?;
    let data = ExperimentData::load(&config)?;
    eprintln!(
        "{} {} on {}: {} train / {} test images, {} trial(s)",
        config.model,
        config.field,
        config.dataset,
        data.train.len(),
        data.test.len(),
        config.trials
    );
    let result = run_experiment(&config, &data)?;
    emit_results(&result, &config.out_dir)?;
    for p in &result.aggregate.sweep {
        eprintln!(
            "sparsity {:.4}  accuracy {:.4} ± {:.4}  ({} trials)",
            p.sparsity,
            p.mean,
            p.std,
            p.values.len()
        );
    }
    eprintln!("results in {} ({:.1} s)", config.out_dir.display(), result.wall_time_s);
    match result.failures.first() {
        None => Ok(ExitCode::SUCCESS),
        Some(_) => {
            for f in &result.failures {
                eprintln!("trial seed {} failed: {}", f.seed, f.message);
            }
            let code = result.failures.iter().map(|f| f.exit_code).max().unwrap_or(3);
            Ok(ExitCode::from(code as u8))
        }
    }
}

fn verify() -> ExitCode {
    let checks = verify::run_all();
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if checks.iter().all(|c| c.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match cli.command {
        Command::Verify => verify(),
        Command::Run(args) => match run(&args) {
            Ok(code) => code,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code() as u8)
            }
        },
    }
}
