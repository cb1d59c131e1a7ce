//! Thin subcommand front-end over `dgff::cli::run`.

use clap::{Args, Parser, Subcommand};
use dgff::cli::{self, Command as RunCommand, ExperimentSpec};
use dgff::field::ModelTag;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dgff", version, about = "DGFF maximum simulation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args)]
struct Common {
    /// Output directory for artifacts and the run manifest.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed; required for every randomized command.
    #[arg(long)]
    seed: Option<u64>,
    /// Overwrite existing artifacts.
    #[arg(long)]
    force: bool,
    /// Worker threads (default: DGFF_WORKERS or the core count).
    #[arg(long)]
    workers: Option<usize>,
    /// Flat key=value config file merged under command-line options.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Sub {
    /// Draw one field sample and persist it.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        /// Also write a plot-ready x,y,value CSV.
        #[arg(long)]
        csv: bool,
    },
    /// Run a recentered-maximum ensemble.
    Ensemble {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Fit the right tail of a stored law.
    Tail {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        law: PathBuf,
        #[arg(long)]
        z_min: Option<f64>,
        #[arg(long)]
        z_max: Option<f64>,
    },
    /// Sample a GFF and split it into coarse and fine fields.
    Decompose {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Exact and empirical checks of the hierarchical fields.
    HierarchyCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Brownian barrier densities (closed form and Monte Carlo).
    Barrier {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        y: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        bent: bool,
        #[arg(long)]
        bent_c: Option<f64>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        step: Option<f64>,
    },
    /// Calibrate and sample the limit process.
    Limitlaw {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        ensemble_a: Option<PathBuf>,
        #[arg(long)]
        ensemble_b: Option<PathBuf>,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long)]
        n_ref: Option<usize>,
    },
    /// Distances between two laws, or between a law and the limit process.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        law_a: PathBuf,
        #[arg(long)]
        law_b: Option<PathBuf>,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        draws: Option<usize>,
    },
}

fn parse_model(s: Option<String>) -> Option<ModelTag> {
    s.and_then(|m| ModelTag::parse(&m))
}

fn build_spec(cli: Sub) -> Result<ExperimentSpec, dgff::DgffError> {
    let (mut spec, common) = match cli {
        Sub::Sample {
            common,
            model,
            n,
            csv,
        } => {
            let mut s = ExperimentSpec::new(RunCommand::Sample, &common.out);
            s.model = parse_model(model);
            s.n = n;
            s.csv = csv;
            (s, common)
        }
        Sub::Ensemble {
            common,
            model,
            n,
            reps,
        } => {
            let mut s = ExperimentSpec::new(RunCommand::Ensemble, &common.out);
            s.model = parse_model(model);
            s.n = n;
            s.reps = reps;
            (s, common)
        }
        Sub::Tail {
            common,
            law,
            z_min,
            z_max,
        } => {
            let mut s = ExperimentSpec::new(RunCommand::Tail, &common.out);
            s.law_a = Some(law);
            s.z_min = z_min;
            s.z_max = z_max;
            (s, common)
        }
        Sub::Decompose { common, n, k, delta } => {
            let mut s = ExperimentSpec::new(RunCommand::Decompose, &common.out);
            s.n = n;
            s.k = k;
            s.delta = delta;
            (s, common)
        }
        Sub::HierarchyCheck { common, n, reps } => {
            let mut s = ExperimentSpec::new(RunCommand::HierarchyCheck, &common.out);
            s.n = n;
            s.reps = reps;
            (s, common)
        }
        Sub::Barrier {
            common,
            t,
            y,
            sigma,
            bent,
            bent_c,
            paths,
            step,
        } => {
            let mut s = ExperimentSpec::new(RunCommand::Barrier, &common.out);
            s.t = t;
            s.y = y;
            s.sigma = sigma;
            s.bent = bent;
            s.bent_c = bent_c;
            s.paths = paths;
            s.step = step;
            (s, common)
        }
        Sub::Limitlaw {
            common,
            k,
            delta,
            ensemble_a,
            ensemble_b,
            params,
            draws,
            n_ref,
        } => {
            let mut s = ExperimentSpec::new(RunCommand::Limitlaw, &common.out);
            s.k = k;
            s.delta = delta;
            s.ensemble_a = ensemble_a;
            s.ensemble_b = ensemble_b;
            s.params = params;
            s.draws = draws;
            s.n_ref = n_ref;
            (s, common)
        }
        Sub::Compare {
            common,
            law_a,
            law_b,
            params,
            draws,
        } => {
            let mut s = ExperimentSpec::new(RunCommand::Compare, &common.out);
            s.law_a = Some(law_a);
            s.law_b = law_b;
            s.params = params;
            s.draws = draws;
            (s, common)
        }
    };
    spec.master_seed = common.seed;
    spec.force = spec.force || common.force;
    spec.workers = common.workers;
    if let Some(cfg_path) = &common.config {
        let text = std::fs::read_to_string(cfg_path)?;
        let map = cli::parse_config(&text)?;
        spec.apply_config(&map)?;
    }
    Ok(spec)
}

fn error_json(err: &dgff::DgffError) -> String {
    serde_json::json!({
        "error": {
            "kind": err.kind(),
            "message": err.to_string(),
        }
    })
    .to_string()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let spec = match build_spec(cli.command) {
        Ok(s) => s,
        Err(e) => {
            println!("{}", error_json(&e));
            return ExitCode::from(2);
        }
    };
    if let Err(e) = cli::validate(&spec) {
        println!("{}", error_json(&e));
        return ExitCode::from(2);
    }
    match cli::run(&spec) {
        Ok(manifest) => {
            for a in &manifest.artifacts {
                println!("{}", spec.out_dir.join(a).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            println!("{}", error_json(&e));
            ExitCode::from(1)
        }
    }
}
