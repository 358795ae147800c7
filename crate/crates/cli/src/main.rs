use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hierhead::conformal::ScoreVariant;
use hierhead::pipeline::{self, Artifacts, RunConfig};
use hierhead::synth::PlantedSpec;
use hierhead::{Error, Result};

/// Interpretable hierarchical classification heads with built-in conformal sets.
#[derive(Parser)]
#[command(name = "hierhead", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (flat TOML). Flags below override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Miscoverage levels; repeat or separate with commas.
    #[arg(long, global = true, value_delimiter = ',')]
    alpha: Vec<f64>,
    /// Score variants (up, sel, limited, thr, aps); all when omitted.
    #[arg(long, global = true, value_delimiter = ',')]
    variant: Vec<ScoreVariant>,
    #[arg(long, global = true)]
    rho: Option<f64>,
    /// Directory for dataset files.
    #[arg(long, global = true, default_value = "data")]
    data_dir: PathBuf,
    /// Directory for artifacts.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Write a planted dataset into the data directory.
    Generate {
        /// Planted dataset description (TOML, or JSON by extension).
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Compute class similarities and the enforced pair set.
    Similarity,
    /// Solve the assignment and fit the head.
    Solve,
    /// Apply the head's feature transform to every split.
    Transform,
    /// Calibrate each variant at each alpha.
    Calibrate,
    /// Write prediction sets for the test split.
    Predict,
    /// Write explanation graphs for test samples.
    Explain {
        #[arg(long = "sample-id", required = true)]
        sample_id: Vec<String>,
    },
    /// Write interpretability and set metrics.
    Metrics,
    /// Write coverage, size and coherence per variant and alpha.
    Evaluate,
}

fn run_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if !common.alpha.is_empty() {
        cfg.alphas = common.alpha.clone();
    }
    if let Some(rho) = common.rho {
        cfg.rho = rho;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let common = &cli.common;
    let data = common.data_dir.as_path();
    let out = Artifacts::new(&common.out_dir);
    let variants = if common.variant.is_empty() {
        ScoreVariant::ALL.to_vec()
    } else {
        common.variant.clone()
    };
    if let Command::Generate { spec } = &cli.command {
        let mut spec = match spec {
            Some(path) => PlantedSpec::load(path)?,
            None => PlantedSpec::default(),
        };
        if let Some(seed) = common.seed {
            spec.seed = seed;
        }
        let truth = pipeline::generate_dataset(&spec, data)?;
        println!(
            "wrote {} classes over {} raw features to {}",
            truth.n_classes(),
            truth.n_raw_features,
            data.display()
        );
        return Ok(());
    }
    let cfg = run_config(common)?;
    match &cli.command {
        Command::Generate { .. } => unreachable!(),
        Command::Similarity => {
            let bundle = pipeline::run_similarity::<f64>(&cfg, data, &out)?;
            println!("|K| = {}", bundle.pair_set.len());
        }
        Command::Solve => {
            let s = pipeline::run_solve::<f64>(&cfg, data, &out)?;
            println!("|K| = {}", s.enforced_pairs);
            println!("|P| = {}", s.pairs);
            println!("objective = {}", s.objective);
            println!("gap = {}", s.gap);
            println!("|P| >= |K|: {}", s.pairs >= s.enforced_pairs);
            if let Some(r) = s.recovery {
                println!("recovery = {r}");
            }
        }
        Command::Transform => pipeline::run_transform::<f64>(&cfg, data, &out)?,
        Command::Calibrate => {
            for rec in pipeline::run_calibrate::<f64>(&cfg, &variants, data, &out)? {
                let n_limit = rec.n_limit.map_or_else(|| "-".into(), |n| n.to_string());
                println!("{} alpha={} quantile={} n_limit={n_limit}", rec.variant, rec.alpha, rec.quantile);
            }
        }
        Command::Predict => pipeline::run_predict::<f64>(&cfg, &variants, data, &out)?,
        Command::Explain { sample_id } => {
            pipeline::run_explain::<f64>(&cfg, sample_id, data, &out)?;
        }
        Command::Metrics => {
            for (name, v) in pipeline::run_metrics::<f64>(&cfg, data, &out)? {
                println!("{name} = {v}");
            }
        }
        Command::Evaluate => {
            for r in pipeline::run_evaluate::<f64>(&cfg, &variants, data, &out)? {
                println!(
                    "{} alpha={} coverage={:.4} mean_size={:.3}",
                    r.variant, r.alpha, r.coverage, r.mean_size
                );
            }
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Infeasible { .. } => 3,
        Error::MissingArtifact(_) => 4,
        Error::Io { .. } => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
