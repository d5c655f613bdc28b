use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use kspace_policy::baselines::{
    equispaced_schedule, evaluate_adaptive_oracle, evaluate_random, evaluate_schedule,
    na_oracle_for_items, random_schedule, MaskSchedule, Side,
};
use kspace_policy::datagen::{generate_phantoms, load_pgm_dataset, split_dataset, write_pgm, DataItem, Dataset, Split};
use kspace_policy::diagnostics::{
    bootstrap_mi_std, collect_gradient_batches, column_heatmap, gradient_snr, mean_mutual_information,
    snapshots_for_items, MiRow,
};
use kspace_policy::estimators::{evaluate, train_epoch, EvalSummary};
use kspace_policy::policynet::{load_checkpoint, save_checkpoint, Architecture, OptimizerState, PolicyNetwork};
use kspace_policy::recon::{ExternalTable, Reconstructor};
use kspace_policy::seeding::{derive_seed, rng_from_seed};

use crate::config::{DataSource, RunConfig};
use crate::{CliError, VERSION};

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Creates the output directory and records the merged config, the derived
/// seeds and the version. Commands other than `train` prefix the files with
/// their name so they can share a training run's directory.
fn prepare_out(cfg: &RunConfig, command: &str) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::Io(format!("{}: {e}", cfg.out.display())))?;
    let prefix = if command == "train" { String::new() } else { format!("{command}_") };
    write(&cfg.out.join(format!("{prefix}config.txt")), &cfg.to_text())?;
    write(&cfg.out.join(format!("{prefix}seeds.txt")), &cfg.seeds().to_text())?;
    write(&cfg.out.join(format!("{prefix}version.txt")), &format!("{VERSION}\n"))
}

/// The dataset described by `cfg`, split into train, validation and test.
pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset, CliError> {
    let seeds = cfg.seeds();
    let ds = match &cfg.data {
        DataSource::Generate { count, size } => generate_phantoms(*count, *size, seeds.data)?,
        DataSource::Pgm(dir) => load_pgm_dataset(dir)?,
    };
    if let Some(w) = cfg.width {
        if ds.width() != w {
            return Err(CliError::Config(format!(
                "dataset width {} differs from configured width {w}",
                ds.width()
            )));
        }
    }
    Ok(split_dataset(ds, cfg.split, seeds.split)?)
}

fn reconstructor(cfg: &RunConfig) -> Result<Reconstructor, CliError> {
    Ok(match &cfg.recon_dir {
        Some(dir) => Reconstructor::ExternalTable(ExternalTable::load(dir)?),
        None => Reconstructor::ZeroFilled,
    })
}

fn architecture(cfg: &RunConfig, ds: &Dataset) -> Result<Architecture, CliError> {
    let arch = match &cfg.arch {
        Some(a) => Architecture::from_str(a)?,
        None => Architecture::standard(ds.height(), ds.width())?,
    };
    if arch.height != ds.height() || arch.width != ds.width() || arch.num_actions() != ds.width() {
        return Err(CliError::Config(format!(
            "architecture `{arch}` does not fit {}x{} images",
            ds.height(),
            ds.width()
        )));
    }
    Ok(arch)
}

fn load_net(path: &Path, ds: &Dataset) -> Result<PolicyNetwork, CliError> {
    let (net, _) = load_checkpoint(path)?;
    let a = net.architecture();
    if a.height != ds.height() || a.width != ds.width() || a.num_actions() != ds.width() {
        return Err(CliError::Config(format!(
            "checkpoint {} does not fit the configured data",
            path.display()
        )));
    }
    Ok(net)
}

pub fn checkpoint_name(epoch: usize) -> String {
    format!("epoch_{epoch:02}.ckpt")
}

/// Epoch number encoded in a checkpoint file name, if any.
pub fn checkpoint_epoch(path: &Path) -> Option<usize> {
    path.file_stem()?.to_str()?.strip_prefix("epoch_")?.parse().ok()
}

const SUMMARY_HEADER: &str = "mean_ssim,std_over_images,std_over_trajectories,mean_return";

fn summary_fields(s: &EvalSummary) -> String {
    format!(
        "{},{},{},{}",
        s.mean, s.std_over_images, s.mean_std_over_trajectories, s.mean_return
    )
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub out: PathBuf,
    pub test: EvalSummary,
    pub net: PolicyNetwork,
}

/// Trains for `cfg.epochs` epochs, writing `metrics.csv`, one checkpoint per
/// epoch and a final test evaluation into `cfg.out`.
pub fn train(cfg: &RunConfig) -> Result<TrainReport, CliError> {
    cfg.validate()?;
    let ds = load_dataset(cfg)?;
    let acq = cfg.acquisition(ds.width())?;
    let arch = architecture(cfg, &ds)?;
    let recon = reconstructor(cfg)?;
    let seeds = cfg.seeds();
    prepare_out(cfg, "train")?;
    ds.write_manifest(&cfg.out.join("manifest.csv"))?;

    let (train_items, val_items, test_items) = (ds.split(Split::Train), ds.split(Split::Val), ds.split(Split::Test));
    let settings = cfg.settings();
    let mut net = PolicyNetwork::new(arch, seeds.init)?;
    let mut opt = OptimizerState::new(net.num_params(), cfg.learning_rate);
    let mut rng = rng_from_seed(seeds.train);
    let mut metrics = String::from("epoch,split,mean_ssim,mean_return,wall_seconds\n");
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let stats = train_epoch(
            &train_items,
            &mut net,
            &mut opt,
            &recon,
            &acq,
            &settings,
            cfg.lr_schedule(),
            epoch,
            &mut rng,
        )?;
        let train_secs = start.elapsed().as_secs_f64();
        let start = Instant::now();
        let val = evaluate(
            &val_items,
            &net,
            &recon,
            &acq,
            cfg.q_eval,
            &settings,
            derive_seed(seeds.eval, "val", epoch as u64),
        )?;
        let val_secs = start.elapsed().as_secs_f64();
        let _ = writeln!(
            metrics,
            "{epoch},train,{},{},{train_secs:.3}",
            stats.mean_final_score, stats.mean_return
        );
        let _ = writeln!(metrics, "{epoch},val,{},{},{val_secs:.3}", val.mean, val.mean_return);
        write(&cfg.out.join("metrics.csv"), &metrics)?;
        save_checkpoint(&cfg.out.join(checkpoint_name(epoch)), &net, &opt)?;
        println!(
            "epoch {epoch:>3}  train_ssim {:.5}  val_ssim {:.5}  lr {:.3e}",
            stats.mean_final_score, val.mean, opt.learning_rate
        );
    }
    let test = evaluate(&test_items, &net, &recon, &acq, cfg.q_eval, &settings, seeds.eval)?;
    write(
        &cfg.out.join("test.csv"),
        &format!("split,{SUMMARY_HEADER}\ntest,{}\n", summary_fields(&test)),
    )?;
    println!(
        "test_ssim {:.5} +- {:.5} over {} images",
        test.mean,
        test.std_over_images,
        test_items.len()
    );
    Ok(TrainReport {
        out: cfg.out.clone(),
        test,
        net,
    })
}

/// Evaluates each checkpoint on the test split and reports the mean and
/// standard deviation across checkpoints.
pub fn eval(cfg: &RunConfig, checkpoints: &[PathBuf]) -> Result<Vec<EvalSummary>, CliError> {
    cfg.validate()?;
    if checkpoints.is_empty() {
        return Err(CliError::Config("eval needs at least one checkpoint".into()));
    }
    let ds = load_dataset(cfg)?;
    let acq = cfg.acquisition(ds.width())?;
    let recon = reconstructor(cfg)?;
    let test = ds.split(Split::Test);
    let settings = cfg.settings();
    let mut csv = format!("checkpoint,{SUMMARY_HEADER}\n");
    let mut results = Vec::new();
    for path in checkpoints {
        let net = load_net(path, &ds)?;
        let s = evaluate(&test, &net, &recon, &acq, cfg.q_eval, &settings, cfg.seeds().eval)?;
        let _ = writeln!(csv, "{},{}", path.display(), summary_fields(&s));
        results.push(s);
    }
    let means: Vec<f64> = results.iter().map(|s| s.mean).collect();
    let n = means.len() as f64;
    let mean = means.iter().sum::<f64>() / n;
    let std = if means.len() > 1 {
        (means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let _ = writeln!(csv, "# mean over checkpoints {mean}, std {std}");
    prepare_out(cfg, "eval")?;
    write(&cfg.out.join("eval.csv"), &csv)?;
    println!("{} {mean:.4} +- {std:.4} ({} checkpoints)", cfg.mode, results.len());
    Ok(results)
}

#[derive(Clone, Debug)]
pub struct OracleRow {
    pub strategy: String,
    pub summary: EvalSummary,
}

/// Compares the non-learned strategies on the test split.
pub fn oracle(cfg: &RunConfig) -> Result<Vec<OracleRow>, CliError> {
    cfg.validate()?;
    let ds = load_dataset(cfg)?;
    let acq = cfg.acquisition(ds.width())?;
    let recon = reconstructor(cfg)?;
    let test = ds.split(Split::Test);
    let (w, l, t) = (acq.width, acq.initial_budget, acq.horizon());
    let seeds = cfg.seeds();
    let mut rows = vec![OracleRow {
        strategy: "random".into(),
        summary: evaluate_random(&test, &recon, cfg.window, l, t, cfg.q_eval, seeds.analysis)?,
    }];
    for (name, side) in [("equi_one", Side::One), ("equi_two", Side::Two)] {
        match equispaced_schedule(w, l, t, side) {
            Ok(s) => rows.push(OracleRow {
                strategy: name.into(),
                summary: evaluate_schedule(&test, &recon, cfg.window, l, &s)?,
            }),
            Err(e) => eprintln!("skipping {name}: {e}"),
        }
    }
    let na = na_oracle_for_items(&test, &recon, cfg.window, l, t, cfg.workers)?;
    rows.push(OracleRow {
        strategy: "na_oracle".into(),
        summary: evaluate_schedule(&test, &recon, cfg.window, l, &na)?,
    });
    rows.push(OracleRow {
        strategy: "adaptive_oracle".into(),
        summary: evaluate_adaptive_oracle(&test, &recon, cfg.window, l, t, cfg.workers)?,
    });
    let mut csv = format!("strategy,{SUMMARY_HEADER}\n");
    for r in &rows {
        let _ = writeln!(csv, "{},{}", r.strategy, summary_fields(&r.summary));
        println!("{:<16} {:.4} +- {:.4}", r.strategy, r.summary.mean, r.summary.std_over_images);
    }
    prepare_out(cfg, "oracle")?;
    write(&cfg.out.join("oracle.csv"), &csv)?;
    Ok(rows)
}

#[derive(Clone, Debug)]
pub struct MiReport {
    pub rows: Vec<MiRow>,
    pub mean_mi: f64,
    pub bootstrap_std: f64,
}

/// Per-step entropies and mutual information of a checkpoint's policy on
/// the test split.
pub fn mi(cfg: &RunConfig, checkpoint: &Path) -> Result<MiReport, CliError> {
    cfg.validate()?;
    let ds = load_dataset(cfg)?;
    let acq = cfg.acquisition(ds.width())?;
    let recon = reconstructor(cfg)?;
    let net = load_net(checkpoint, &ds)?;
    let test = ds.split(Split::Test);
    let seeds = cfg.seeds();
    let snaps = snapshots_for_items(&test, &net, &recon, &acq, cfg.mi_replicates, &cfg.settings(), seeds.analysis)?;
    let rows: Vec<MiRow> = snaps.iter().map(MiRow::from_snapshot).collect();
    let mean_mi = mean_mutual_information(&snaps);
    let mut rng = rng_from_seed(derive_seed(seeds.analysis, "bootstrap", 0));
    let bootstrap_std = bootstrap_mi_std(&snaps, cfg.bootstrap, &mut rng)?;
    let mut csv = String::from("step,marginal_entropy,conditional_entropy,mutual_information,mutual_information_raw\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            r.step, r.marginal_entropy, r.conditional_entropy, r.mutual_information, r.mutual_information_raw
        );
    }
    prepare_out(cfg, "mi")?;
    write(&cfg.out.join("mi.csv"), &csv)?;
    write(
        &cfg.out.join("mi_summary.csv"),
        &format!(
            "mean_mutual_information,bootstrap_std,resamples,replicates\n{mean_mi},{bootstrap_std},{},{}\n",
            cfg.bootstrap, cfg.mi_replicates
        ),
    )?;
    println!("mean MI {mean_mi:.5} nats, bootstrap std {bootstrap_std:.5}");
    Ok(MiReport {
        rows,
        mean_mi,
        bootstrap_std,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct SnrRow {
    pub epoch: usize,
    pub snr: f64,
}

/// Gradient SNR of the configured estimator at each checkpoint, from
/// `snr_batches` batch gradients drawn from the training split.
pub fn snr(cfg: &RunConfig, checkpoints: &[PathBuf]) -> Result<Vec<SnrRow>, CliError> {
    cfg.validate()?;
    if checkpoints.is_empty() {
        return Err(CliError::Config("snr needs at least one checkpoint".into()));
    }
    let ds = load_dataset(cfg)?;
    let acq = cfg.acquisition(ds.width())?;
    let recon = reconstructor(cfg)?;
    let train_items = ds.split(Split::Train);
    let seeds = cfg.seeds();
    let mut csv = String::from("epoch,snr,B,q,reduction\n");
    let mut rows = Vec::new();
    for (k, path) in checkpoints.iter().enumerate() {
        let net = load_net(path, &ds)?;
        let epoch = checkpoint_epoch(path).unwrap_or(k);
        let set = collect_gradient_batches(
            &train_items,
            &net,
            &recon,
            &acq,
            &cfg.settings(),
            cfg.snr_batches,
            derive_seed(seeds.analysis, "snr", epoch as u64),
        )?;
        let value = gradient_snr(&set)?;
        let _ = writeln!(csv, "{epoch},{value},{},{},norm_ratio", cfg.snr_batches, acq.samples_per_step);
        println!("epoch {epoch:>3}  snr {value:.4}");
        rows.push(SnrRow { epoch, snr: value });
    }
    prepare_out(cfg, "snr")?;
    write(&cfg.out.join("snr.csv"), &csv)?;
    Ok(rows)
}

/// Writes the baseline schedules and, given a checkpoint, the per-step
/// column sampling frequencies of its policy on the test split.
pub fn masks(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<Vec<MaskSchedule>, CliError> {
    cfg.validate()?;
    let ds = load_dataset(cfg)?;
    let acq = cfg.acquisition(ds.width())?;
    let recon = reconstructor(cfg)?;
    let test = ds.split(Split::Test);
    let seeds = cfg.seeds();
    let (w, l, t) = (acq.width, acq.initial_budget, acq.horizon());
    let mut schedules = vec![random_schedule(
        w,
        l,
        t,
        &mut rng_from_seed(derive_seed(seeds.analysis, "mask", 0)),
    )?];
    for side in [Side::One, Side::Two] {
        match equispaced_schedule(w, l, t, side) {
            Ok(s) => schedules.push(s),
            Err(e) => eprintln!("skipping equispaced schedule: {e}"),
        }
    }
    schedules.push(na_oracle_for_items(&test, &recon, cfg.window, l, t, cfg.workers)?);
    let mut csv = String::from("provenance,step,column\n");
    for s in &schedules {
        for (step, c) in s.columns.iter().enumerate() {
            let _ = writeln!(csv, "{},{step},{c}", s.provenance);
        }
    }
    prepare_out(cfg, "masks")?;
    write(&cfg.out.join("schedules.csv"), &csv)?;
    if let Some(path) = checkpoint {
        let net = load_net(path, &ds)?;
        let heat = column_heatmap(&test, &net, &recon, &acq, cfg.q_eval, &cfg.settings(), seeds.analysis)?;
        let mut csv = String::from("step,column,fraction\n");
        for (step, row) in heat.iter().enumerate() {
            for (c, f) in row.iter().enumerate() {
                let _ = writeln!(csv, "{step},{c},{f}");
            }
        }
        write(&cfg.out.join("heatmap.csv"), &csv)?;
    }
    Ok(schedules)
}

/// Writes the configured dataset as PGM files plus a manifest.
pub fn phantoms(cfg: &RunConfig) -> Result<Dataset, CliError> {
    cfg.validate()?;
    let ds = load_dataset(cfg)?;
    prepare_out(cfg, "phantoms")?;
    for item in ds.items() {
        let item: &DataItem = item;
        write_pgm(&item.image, item.dynamic_range, &cfg.out.join(format!("{}.pgm", item.id)))?;
    }
    ds.write_manifest(&cfg.out.join("manifest.csv"))?;
    println!("wrote {} images to {}", ds.len(), cfg.out.display());
    Ok(ds)
}
