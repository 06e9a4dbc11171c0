use clap::{Parser, Subcommand};
use gradtrack_bench::compare::{check_comparable, compare_comm_efficiency, write_csv};
use gradtrack_bench::experiment::{self, run_experiment, simulate, write_artifacts, write_json, CERTIFICATE_FILE};
use gradtrack_bench::{plot, sweep, BenchError, ExperimentConfig, Result};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "gradtrack", version, about = "Triggered gradient tracking experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configured experiment.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also compute and write the certificate.
        #[arg(long)]
        certify: bool,
    },
    /// Sweep one parameter, e.g. `--param lambda=0.05,0.1,0.2`.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        param: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Communication needed by the most efficient agent to reach a target error.
    Compare {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        #[arg(long, default_value_t = 1e-4)]
        target: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the certificate only.
    Certify {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render SVG charts of a finished run.
    Plot {
        run_dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(path: &Path) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    cfg.apply_env()?;
    Ok(cfg)
}

fn out_dir(flag: Option<PathBuf>, cfg: &ExperimentConfig, fallback: &str) -> PathBuf {
    flag.or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from(fallback))
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run { config, out, certify } => {
            let mut cfg = load(&config)?;
            cfg.certify |= certify;
            let dir = out_dir(out, &cfg, "runs/latest");
            let summary = run_experiment(&cfg, &dir)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Sweep { config, param, out } => {
            let cfg = load(&config)?;
            let (name, values) = sweep::parse_param(&param)?;
            let root = out_dir(out, &cfg, "runs/sweep");
            let mut worst = None;
            for (v, res) in sweep::sweep(&cfg, &name, &values, &root)? {
                match res {
                    Ok(s) => println!(
                        "{name}={v}\tstatus=ok\tfinal_err={:e}\ttotal_comm={}",
                        s.final_err.unwrap_or(f64::NAN),
                        s.total_comm
                    ),
                    Err(e) => {
                        println!("{name}={v}\tstatus=failed\t{e}");
                        worst.get_or_insert(e);
                    }
                }
            }
            if let Some(e) = worst {
                return Err(e);
            }
        }
        Command::Compare { configs, target, out } => {
            let cfgs = configs.iter().map(|p| load(p)).collect::<Result<Vec<_>>>()?;
            check_comparable(&cfgs)?;
            let root = out_dir(out, &cfgs[0], "runs/compare");
            let mut runs = Vec::new();
            for (k, cfg) in cfgs.iter().enumerate() {
                let run = simulate(cfg)?;
                write_artifacts(&run, &root.join(format!("{}_{}", k + 1, cfg.variant.name())))?;
                runs.push((cfg.variant.name(), run.trace));
            }
            let rows = compare_comm_efficiency(runs.iter().map(|(n, t)| (*n, t)), target);
            std::fs::create_dir_all(&root)?;
            write_csv(&rows, std::fs::File::create(root.join("compare.csv"))?)?;
            write_csv(&rows, std::io::stdout())?;
        }
        Command::Certify { config, out } => {
            let cfg = load(&config)?;
            let report = experiment::certify(&cfg)?;
            if let Some(dir) = out.or(cfg.out_dir) {
                std::fs::create_dir_all(&dir)?;
                write_json(&dir, CERTIFICATE_FILE, &report)?;
            }
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Plot { run_dir, out } => {
            let out = out.unwrap_or_else(|| run_dir.clone());
            for p in plot::plot_run(&run_dir, &out)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &BenchError) -> u8 {
    e.exit_code() as u8
}
