use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use metasense::dataset::{load_dataset, load_split, save_dataset, save_split, split_dataset, DatasetError};
use metasense::harness::{
    self, echo_config, evaluate_checkpoint, generate, read_report, report_render, run_suite, train_condition,
    Experiment, ExperimentConfig, HarnessError, RunReport,
};

#[derive(Parser)]
#[command(
    name = "metasense",
    version,
    about = "Target sensing and super-resolution experiments"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment configuration (JSON). Missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dataset generation seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for dataset generation.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset and write it with the condition splits.
    Gen,
    /// Train the multitask model on one split.
    Train {
        /// Existing dataset directory; generated from the config when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Condition number (1-based) selecting the split seed.
        #[arg(long, default_value_t = 1)]
        condition: usize,
        /// Override the weight-initialisation seed.
        #[arg(long)]
        init_seed: Option<u64>,
    },
    /// Score a checkpoint on a split's test set.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 1)]
        condition: usize,
    },
    /// Run one experiment suite end to end.
    Suite {
        #[arg(value_parser = parse_experiment)]
        experiment: Experiment,
    },
    /// Re-render a run's report, or combine several runs into one.
    Report {
        /// Run directories to combine into `--out`.
        #[arg(long = "from")]
        from: Vec<PathBuf>,
    },
}

fn parse_experiment(s: &str) -> Result<Experiment, String> {
    Experiment::parse(s).ok_or_else(|| format!("expected one of table1, table2, table3, table4, surrogate; got `{s}`"))
}

fn resolve(global: &Global) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &global.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = global.seed {
        cfg.dataset.seed = seed;
    }
    if global.threads.is_some() {
        cfg.threads = global.threads;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(global: &Global, default: &str) -> PathBuf {
    global
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(default))
}

fn condition_seed(cfg: &ExperimentConfig, condition: usize) -> anyhow::Result<u64> {
    condition
        .checked_sub(1)
        .and_then(|i| cfg.conditions.get(i).copied())
        .with_context(|| format!("condition {condition} not in 1..={}", cfg.conditions.len()))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = resolve(&cli.global)?;
    match cli.command {
        Command::Gen => {
            let out = out_dir(&cli.global, "dataset");
            echo_config(&cfg, &out)?;
            let dataset = generate(&cfg)?;
            save_dataset(&dataset, &out).with_context(|| format!("writing {}", out.display()))?;
            for &seed in &cfg.conditions {
                save_split(&split_dataset(dataset.len(), seed)?, &out)?;
            }
            let [one, two, three] = dataset.count_histogram();
            println!(
                "{} samples ({one}/{two}/{three} by target count) in {}",
                dataset.len(),
                out.display()
            );
        }
        Command::Train {
            data,
            condition,
            init_seed,
        } => {
            let out = out_dir(&cli.global, "train");
            let mut cfg = cfg;
            if let Some(seed) = init_seed {
                cfg.training.seed = seed;
            }
            echo_config(&cfg, &out)?;
            let dataset = match data {
                Some(dir) => load_dataset(&dir).with_context(|| format!("loading {}", dir.display()))?,
                None => generate(&cfg)?,
            };
            let split = split_dataset(dataset.len(), condition_seed(&cfg, condition)?)?;
            let row = train_condition(
                &condition.to_string(),
                &cfg.model,
                &cfg.training,
                &dataset,
                None,
                &split,
                &out,
                &out,
            )?;
            let report = RunReport {
                config_hash: cfg.hash(),
                dataset_seed: dataset.config.seed,
                training_seed: cfg.training.seed,
                rows: vec![row],
                ..RunReport::default()
            };
            report_render(&report, &out)?;
            print!("{}", report.metrics_csv());
        }
        Command::Eval { data, model, condition } => {
            let dataset = load_dataset(&data).with_context(|| format!("loading {}", data.display()))?;
            let seed = condition_seed(&cfg, condition)?;
            let split = match load_split(&data, seed) {
                Ok(split) => split,
                Err(_) => split_dataset(dataset.len(), seed)?,
            };
            let metrics = evaluate_checkpoint(&model, &dataset, &split)?;
            println!("{}", harness::METRICS_HEADER);
            println!("{condition},{}", metrics.csv_fields());
        }
        Command::Suite { experiment } => {
            let mut cfg = cfg;
            cfg.experiment = experiment;
            let out = out_dir(&cli.global, experiment.name());
            let report = run_suite(&cfg, &out)?;
            print!("{}", report.metrics_csv());
            if let Some(s) = &report.surrogate {
                println!("surrogate mean test PSNR {:.3} dB", s.test.mean_psnr_db);
            }
            eprintln!("wrote {} in {:.1} s", out.display(), report.wall_clock_s);
        }
        Command::Report { from } => {
            let out = out_dir(&cli.global, "report");
            let report = if from.is_empty() {
                read_report(&out)?
            } else {
                let reports = from.iter().map(|d| read_report(d)).collect::<Result<Vec<_>, _>>()?;
                RunReport::combine(&reports)
            };
            report_render(&report, &out)?;
            print!("{}", report.metrics_csv());
        }
    }
    Ok(())
}

fn stage_of(err: &anyhow::Error) -> &'static str {
    match err.downcast_ref::<HarnessError>() {
        Some(HarnessError::Config(_)) => "config",
        Some(e) => e.stage().unwrap_or("io"),
        None if err.downcast_ref::<DatasetError>().is_some() => "dataset",
        None => "setup",
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let stage = stage_of(&err);
            log::error!("stage {stage} failed: {err:#}");
            eprintln!("metasense: {stage}: {err:#}");
            ExitCode::from(if stage == "config" { 2 } else { 1 })
        }
    }
}
