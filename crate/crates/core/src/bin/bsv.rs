use std::path::PathBuf;
use std::process::ExitCode;

use bsv::acquisition::AcquisitionSet;
use bsv::estimator::EstimateMode;
use bsv::experiment::{cmd_ablation, cmd_compare, cmd_metrics, cmd_run, Method, RunConfig, ENV_OUTPUT_DIR, ENV_WORKERS};
use bsv::systems::{serve, Problem};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bsv", version, about = "Bayesian safety validation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one method over every seed
    Run(Common),
    /// Run all seven acquisition subsets (defaults to the squares problem)
    Ablation(Common),
    /// Relative-error convergence curves for several methods
    Compare(Common),
    /// Recompute the metric report from a records CSV
    Metrics {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        records: PathBuf,
    },
    /// Serve a built-in problem over the subprocess protocol on stdin/stdout
    Serve { problem: String },
}

#[derive(Args)]
struct Common {
    /// JSON config file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    method: Option<Method>,
    /// Comma-separated methods for `compare`
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    budget: Option<usize>,
    /// Comma-separated seeds
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    grid_resolution: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    mode: Option<EstimateMode>,
    /// Active acquisitions, e.g. `1,3` or `explore,boundary`
    #[arg(long)]
    acquisitions: Option<AcquisitionSet>,
    #[arg(long)]
    ablation_budget: Option<usize>,
    #[arg(long, env = ENV_OUTPUT_DIR)]
    output_dir: Option<PathBuf>,
    #[arg(long, env = ENV_WORKERS)]
    workers: Option<usize>,
}

impl Common {
    fn resolve(self, default_problem: Option<&str>) -> bsv::Result<RunConfig> {
        let mut c = match (&self.config, self.problem.as_deref().or(default_problem)) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, Some(p)) => RunConfig::new(p),
            (None, None) => {
                return Err(bsv::BsvError::InvalidParameter("either --config or --problem is required".into()))
            }
        };
        if let Some(v) = self.problem {
            c.problem = v;
        }
        if let Some(v) = self.method {
            c.method = v;
        }
        if let Some(v) = self.methods {
            c.methods = v;
        }
        if let Some(v) = self.iterations {
            c.iterations = v;
        }
        if let Some(v) = self.budget {
            c.budget = Some(v);
        }
        if let Some(v) = self.seeds {
            c.seeds = v;
        }
        if let Some(v) = self.grid_resolution {
            c.grid_resolution = v;
        }
        if let Some(v) = self.lambda {
            c.lambda = v;
        }
        if let Some(v) = self.mode {
            c.mode = v;
        }
        if let Some(v) = self.acquisitions {
            c.acquisitions = v;
        }
        if let Some(v) = self.ablation_budget {
            c.ablation_budget = v;
        }
        if let Some(v) = self.output_dir {
            c.output_dir = v;
        }
        if let Some(v) = self.workers {
            c.workers = v;
        }
        c.validate()?;
        Ok(c)
    }
}

fn usage_error(e: bsv::BsvError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(2)
}

fn runtime<T>(r: bsv::Result<T>, print: impl FnOnce(T)) -> ExitCode {
    match r {
        Ok(v) => {
            print(v);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Serve { problem } => {
            let kind = match Problem::by_name(&problem) {
                Ok(p) => p.kind,
                Err(e) => return usage_error(e),
            };
            runtime(serve(kind, std::io::stdin().lock(), std::io::stdout().lock()), |_| {})
        }
        Command::Run(common) => match common.resolve(None) {
            Ok(c) => runtime(cmd_run(&c), |runs| {
                for s in runs {
                    println!(
                        "{} {} seed {}: estimate {:.6e}, {} evaluations, {} failures",
                        s.problem,
                        s.method,
                        s.seed,
                        s.estimate,
                        s.num_evaluations,
                        s.failures.len()
                    );
                }
            }),
            Err(e) => usage_error(e),
        },
        Command::Ablation(common) => match common.resolve(Some("squares")) {
            Ok(c) => runtime(cmd_ablation(&c), |rows| {
                println!("subset,r_fail,l_star,delta_fail,c_input,c_output");
                let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.5}"));
                for r in rows {
                    println!(
                        "{},{:.5},{},{},{:.5},{}",
                        r.subset,
                        r.r_fail,
                        opt(r.l_star),
                        opt(r.delta_fail),
                        r.c_input,
                        opt(r.c_output)
                    );
                }
            }),
            Err(e) => usage_error(e),
        },
        Command::Compare(common) => match common.resolve(None) {
            Ok(c) => runtime(cmd_compare(&c), |rows| {
                for r in rows {
                    println!(
                        "{} seed {}: {} samples, relative error {:.5}",
                        r.method, r.seed, r.num_samples, r.relative_error
                    );
                }
            }),
            Err(e) => usage_error(e),
        },
        Command::Metrics { common, records } => match common.resolve(None) {
            Ok(c) => runtime(cmd_metrics(&c, &records), |m| {
                println!("{}", serde_json::to_string_pretty(&m).expect("serializable"));
            }),
            Err(e) => usage_error(e),
        },
    }
}
