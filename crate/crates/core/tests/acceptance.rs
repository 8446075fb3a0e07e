//! End-to-end acceptance criteria. Prints one PASS/FAIL line per criterion
//! straight to stdout (not captured), then fails if any criterion failed.
//!
//! Datasets are read from `$QLOTTERY_DATA`, else `<workspace>/data`.
//! `$QLOTTERY_AC8_TRAIN_SUBSET=N` trains the Conv-2 accuracy check on the
//! first N CIFAR-10 images instead of all 50000 (5000 = smoke profile).

mod common;

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use qlottery::harness::{
    early_stop_monitor, emit_results, parse_sparsity_sweep, parse_training_curve, run_experiment, run_trial,
    ExperimentConfig, ExperimentData,
};
use qlottery::models::{build_network, Architecture, DatasetKind, Field, ModelSpec, ParamFilter};
use qlottery::pruning::{global_magnitude_prune, rewind, Mask, Snapshot};
use qlottery::verify;

type Outcome = Result<(bool, String), String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn config(model: Architecture, field: Field) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(model, model.default_dataset(), field).unwrap();
    c.data_dir = common::data_root();
    c.trials = 1;
    c.max_rounds = Some(0);
    c
}

fn need(kind: DatasetKind) -> Result<(), String> {
    match qlottery::data::load(kind, &common::data_root()) {
        Ok(_) => Ok(()),
        Err(e) => Err(format!("{kind} unavailable: {e}")),
    }
}

fn ac1() -> Outcome {
    let rows = verify::table_counts().map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, total, printed, conv, printed_conv) in &rows {
        ok &= (*total as f64 - printed).abs() <= 0.02 * printed;
        if let Some(pc) = printed_conv {
            ok &= (*conv as f64 - pc).abs() <= 0.02 * pc;
        }
        notes.push(format!("{name} {total}/{conv}"));
    }
    let exact = |arch: Architecture, field: Field, filter: ParamFilter| {
        let spec = ModelSpec::preset(arch, arch.default_dataset(), field).unwrap();
        build_network::<f32>(&spec, 0).unwrap().count(filter)
    };
    ok &= exact(Architecture::Lenet300, Field::Real, ParamFilter::All) == 266_610;
    ok &= exact(Architecture::Lenet300, Field::Quaternion, ParamFilter::All) == 67_710;
    ok &= exact(Architecture::Conv2, Field::Real, ParamFilter::ConvWeights) == 38_592;
    ok &= exact(Architecture::Conv4, Field::Real, ParamFilter::ConvWeights) == 259_776;
    ok &= exact(Architecture::Conv6, Field::Real, ParamFilter::ConvWeights) == 1_144_512;
    Ok((ok, notes.join("; ")))
}

fn ac2() -> Outcome {
    let gap = verify::hamilton_matrix_gap(10_000, 2024);
    Ok((gap < 1e-6, format!("10000 pairs, max abs gap {gap:.2e}")))
}

fn ac3() -> Outcome {
    let mut worst = (0.0f64, 0.0f64);
    for seed in 0..8 {
        worst.0 = worst.0.max(verify::quat_linear_gap(seed).map_err(|e| e.to_string())?);
        worst.1 = worst.1.max(verify::quat_conv_gap(seed).map_err(|e| e.to_string())?);
    }
    Ok((worst.0 < 1e-5 && worst.1 < 1e-5, format!("linear {:.2e}, conv {:.2e}", worst.0, worst.1)))
}

fn ac4() -> Outcome {
    let gaps = verify::gradient_suite(1e-4).map_err(|e| e.to_string())?;
    let ok = gaps.iter().all(|(_, g)| *g < 1e-5);
    let detail = gaps.iter().map(|(n, g)| format!("{n} {g:.1e}")).collect::<Vec<_>>().join(", ");
    Ok((ok, detail))
}

fn ac5() -> Outcome {
    let ladder = verify::pruning_ladder(100_000, 5, 0.2).map_err(|e| e.to_string())?;
    let mut ok = ladder == [80000, 64000, 51200, 40960, 32768];
    // Monotone masks and exact rewind on a real network.
    let spec = ModelSpec::preset(Architecture::Lenet300, DatasetKind::Mnist, Field::Quaternion).unwrap();
    let mut net = build_network::<f64>(&spec, 11).unwrap();
    let snap = Snapshot::capture(&net);
    let mut mask = Mask::full(&net);
    for round in 0..5 {
        for p in net.params_mut() {
            p.value = p.value.map(|v| v * 1.7 - 0.01 * round as f64);
        }
        let next = global_magnitude_prune(&net, &mask, 0.2).map_err(|e| e.to_string())?;
        ok &= next.is_subset_of(&mask);
        mask = next;
        rewind(&mut net, &snap, &mask).map_err(|e| e.to_string())?;
        for (i, (p, init)) in net.params().iter().zip(snap.values()).enumerate() {
            for (j, (&w, &w0)) in p.value.data().iter().zip(init.data()).enumerate() {
                let keep = mask.get(i).is_none_or(|k| k[j] != 0);
                ok &= w.to_bits() == if keep { w0 } else { 0.0 }.to_bits();
            }
        }
    }
    Ok((ok, format!("kept {ladder:?}; masks nested and rewind exact over 5 rounds")))
}

fn ac6() -> Outcome {
    need(DatasetKind::Mnist)?;
    let c = config(Architecture::Lenet300, Field::Real);
    let data = ExperimentData::load(&c).map_err(|e| e.to_string())?;
    let t = run_trial(&c, &data, 0).map_err(|e| e.to_string())?;
    let acc = t.rounds[0].accuracy;
    Ok((acc >= 0.975, format!("lenet300 real, {} epochs: test accuracy {:.4}", c.epochs, acc)))
}

fn ac7() -> Outcome {
    need(DatasetKind::Mnist)?;
    let mut c = config(Architecture::Lenet300, Field::Quaternion);
    c.max_rounds = Some(3);
    let data = ExperimentData::load(&c).map_err(|e| e.to_string())?;
    let t = run_trial(&c, &data, 0).map_err(|e| e.to_string())?;
    let dense = t.rounds[0].accuracy;
    let r = t.rounds.last().unwrap();
    let ladder: Vec<String> = t.rounds.iter().map(|r| format!("{:.3}:{:.4}", r.sparsity(), r.accuracy)).collect();
    let ok = (r.sparsity() - 0.512).abs() < 1e-3 && r.accuracy >= dense - 0.005;
    Ok((ok, format!("dense {dense:.4}, 51.2% remaining {:.4} ({})", r.accuracy, ladder.join(" "))))
}

fn ac8(out: &Path) -> Outcome {
    need(DatasetKind::Cifar10)?;
    let subset = std::env::var("QLOTTERY_AC8_TRAIN_SUBSET").ok().and_then(|v| v.parse::<usize>().ok());
    let mut accs = Vec::new();
    for field in [Field::Real, Field::Quaternion] {
        let mut c = config(Architecture::Conv2, field);
        c.epochs = 10;
        c.train_subset = subset;
        let data = ExperimentData::load(&c).map_err(|e| e.to_string())?;
        let t = run_trial(&c, &data, 0).map_err(|e| e.to_string())?;
        accs.push(t.curve.iter().copied().fold(0.0, f64::max));
    }
    let a = accs.iter().all(|&x| x > 0.5);

    let mut c = config(Architecture::Conv2, Field::Quaternion);
    c.epochs = 1;
    c.max_rounds = Some(2);
    c.train_subset = Some(1000);
    c.test_subset = Some(1000);
    c.out_dir = out.join("conv2");
    let data = ExperimentData::load(&c).map_err(|e| e.to_string())?;
    let r = run_experiment(&c, &data).map_err(|e| e.to_string())?;
    emit_results(&r, &c.out_dir).map_err(|e| e.to_string())?;
    let sweep = std::fs::read_to_string(c.out_dir.join("sparsity_sweep.csv")).map_err(|e| e.to_string())?;
    let curve = std::fs::read_to_string(c.out_dir.join("training_curve.csv")).map_err(|e| e.to_string())?;
    let rows = parse_sparsity_sweep(&sweep).map_err(|e| e.to_string())?;
    let b = r.failures.is_empty() && rows.len() == 3 && parse_training_curve(&curve).is_ok();

    let total = |field| {
        let spec = ModelSpec::preset(Architecture::Conv2, DatasetKind::Cifar10, field).unwrap();
        build_network::<f32>(&spec, 0).unwrap().count(ParamFilter::All) as f64
    };
    let ratio = total(Field::Quaternion) / total(Field::Real);
    let cc = (ratio - 0.251).abs() <= 0.005;
    Ok((
        a && b && cc,
        format!(
            "(a) {} training images, best of 10 epochs: real {:.4}, quat {:.4}; (b) {} sweep rows; (c) ratio {:.4}",
            subset.map_or("50000".to_string(), |n| n.to_string()),
            accs[0],
            accs[1],
            rows.len(),
            ratio
        ),
    ))
}

fn ac9() -> Outcome {
    let mut ok = true;
    for min_at in [0usize, 3, 17] {
        let stream: Vec<f64> = (0..60)
            .map(|i| if i <= min_at { 2.0 - i as f64 * 0.01 } else { 2.0 - min_at as f64 * 0.01 + ((i * 7) % 5) as f64 * 1e-3 })
            .collect();
        ok &= early_stop_monitor(stream, 10) == (Some(min_at + 10), Some(min_at));
    }
    need(DatasetKind::Mnist)?;
    let mut c = config(Architecture::Lenet300, Field::Real);
    c.early_stop = true;
    let data = ExperimentData::load(&c).map_err(|e| e.to_string())?;
    let t = run_trial(&c, &data, 0).map_err(|e| e.to_string())?;
    ok &= t.stopped_early[0] && t.epochs_per_round[0] < c.epochs;
    Ok((
        ok,
        format!(
            "scripted streams stop at min+10; MNIST run stopped in epoch {} of {} at accuracy {:.4}",
            t.epochs_per_round[0],
            c.epochs,
            t.rounds[0].accuracy
        ),
    ))
}

fn ac10(out: &Path) -> Outcome {
    need(DatasetKind::Mnist)?;
    let mut bytes = Vec::new();
    for (i, workers) in [2usize, 1].into_iter().enumerate() {
        let mut c = config(Architecture::Lenet300, Field::Quaternion);
        c.trials = 2;
        c.epochs = 2;
        c.max_rounds = Some(2);
        c.train_subset = Some(3000);
        c.test_subset = Some(2000);
        c.seed = 42;
        c.workers = workers;
        c.out_dir = out.join(format!("det{i}"));
        let data = ExperimentData::load(&c).map_err(|e| e.to_string())?;
        let r = run_experiment(&c, &data).map_err(|e| e.to_string())?;
        emit_results(&r, &c.out_dir).map_err(|e| e.to_string())?;
        bytes.push(std::fs::read(c.out_dir.join("sparsity_sweep.csv")).map_err(|e| e.to_string())?);
    }
    Ok((bytes[0] == bytes[1], format!("two runs, {} bytes each, identical: {}", bytes[0].len(), bytes[0] == bytes[1])))
}

#[test]
fn acceptance_criteria() {
    let out = tempfile::tempdir().unwrap();
    let criteria: Vec<Criterion> = vec![
        ("AC1 parameter counts", Box::new(ac1)),
        ("AC2 Hamilton product oracle", Box::new(ac2)),
        ("AC3 quaternion layer equivalence", Box::new(ac3)),
        ("AC4 gradient checks", Box::new(ac4)),
        ("AC5 pruning arithmetic", Box::new(ac5)),
        ("AC6 MNIST dense accuracy", Box::new(ac6)),
        ("AC7 quaternion lottery ticket", Box::new(ac7)),
        ("AC8 Conv-2 substitute criteria", Box::new(|| ac8(out.path()))),
        ("AC9 early stopping", Box::new(ac9)),
        ("AC10 determinism", Box::new(|| ac10(out.path()))),
    ];
    let mut failed = Vec::new();
    for (name, check) in &criteria {
        let t0 = Instant::now();
        let (passed, detail) = check().unwrap_or_else(|e| (false, e));
        let line = format!(
            "{} {}: {} [{:.1} s]",
            name,
            if passed { "PASS" } else { "FAIL" },
            detail,
            t0.elapsed().as_secs_f64()
        );
        let mut stdout = std::io::stdout().lock();
        writeln!(stdout, "{line}").unwrap();
        stdout.flush().unwrap();
        if !passed {
            failed.push(*name);
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
