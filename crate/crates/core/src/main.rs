use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Arg, ArgMatches, Args, Command, FromArgMatches, Parser, Subcommand};
use diffbc::cli::{self, all_keys, Figure, RunConfig};

#[derive(Parser)]
#[command(name = "diffbc", version, about = "Diffusion behaviour cloning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate training and held-out demonstrations.
    GenData(Common),
    /// Train the configured method and write a checkpoint plus loss curve.
    Train(Common),
    /// Draw actions for every observation from a checkpoint.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Samples per observation; defaults to `eval.samples`.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Score a sample file (or dataset file) against held-out demonstrations.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        samples: PathBuf,
        /// Reference set; defaults to the config's held-out split.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Sample under several guidance weights and summarise each.
    SweepGuidance {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,1,4,8")]
        weights: Vec<f64>,
    },
    /// Regenerate the data behind a figure: fig1, fig3, fig4 or appendixE.
    Reproduce {
        #[command(flatten)]
        common: Common,
        figure: String,
    },
}

#[derive(Args)]
struct Common {
    /// Config file: `key=value` lines or a JSON object.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

/// One `--dotted.key VALUE` flag per configuration key.
struct Overrides(BTreeMap<String, String>);

impl FromArgMatches for Overrides {
    fn from_arg_matches(m: &ArgMatches) -> Result<Self, clap::Error> {
        let mut map = BTreeMap::new();
        for k in all_keys() {
            if let Some(v) = m.get_one::<String>(k) {
                map.insert(k.to_owned(), v.clone());
            }
        }
        Ok(Self(map))
    }

    fn update_from_arg_matches(&mut self, m: &ArgMatches) -> Result<(), clap::Error> {
        *self = Self::from_arg_matches(m)?;
        Ok(())
    }
}

impl Args for Overrides {
    fn augment_args(mut cmd: Command) -> Command {
        for k in all_keys() {
            cmd = cmd.arg(Arg::new(k).long(k).value_name("VALUE").help_heading("Run configuration"));
        }
        cmd
    }

    fn augment_args_for_update(cmd: Command) -> Command {
        Self::augment_args(cmd)
    }
}

impl Common {
    fn load(&self, default_env: Option<&str>) -> Result<RunConfig> {
        let mut pairs = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| diffbc::Error::io(path, e))
                    .with_context(|| format!("reading config {}", path.display()))?;
                RunConfig::parse_text(&text)?
            }
            None => BTreeMap::new(),
        };
        pairs.extend(self.overrides.0.clone());
        if let Some(env) = default_env {
            pairs.entry("environment".into()).or_insert_with(|| env.into());
        }
        Ok(RunConfig::from_pairs(&pairs)?)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Cmd::GenData(common) => {
            let cfg = common.load(None)?;
            let m = cli::cmd_gen_data(&cfg)?;
            println!("wrote {} artifacts to {}", m.artifacts.len(), cfg.output_dir);
        }
        Cmd::Train(common) => {
            let cfg = common.load(None)?;
            cli::cmd_train(&cfg)?;
            println!("trained {} on {}; outputs in {}", cfg.method.name(), cfg.environment_name(), cfg.output_dir);
        }
        Cmd::Sample { common, checkpoint, n } => {
            let cfg = common.load(None)?;
            let path = cli::cmd_sample(&cfg, &checkpoint, n.unwrap_or(cfg.eval_samples))?;
            println!("{}", path.display());
        }
        Cmd::Eval {
            common,
            samples,
            reference,
        } => {
            let cfg = common.load(None)?;
            let report = cli::cmd_eval(&cfg, &samples, reference.as_deref())?;
            print!("{}", report.to_json());
        }
        Cmd::SweepGuidance {
            common,
            checkpoint,
            weights,
        } => {
            let cfg = common.load(None)?;
            match cli::cmd_sweep_guidance(&cfg, &checkpoint, &weights)? {
                Some(path) => println!("{}", path.display()),
                None => eprintln!(
                    "warning: checkpoint was trained without conditioning dropout; \
                     the unconditional branch is untrained, refusing to sweep"
                ),
            }
        }
        Cmd::Reproduce { common, figure } => {
            let figure: Figure = figure.parse()?;
            let cfg = common.load(Some("claw"))?;
            let m = cli::cmd_reproduce(&cfg, figure)?;
            println!("wrote {} artifacts to {}", m.artifacts.len(), cfg.output_dir);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.chain().find_map(|c| c.downcast_ref::<diffbc::Error>()).map_or(1, |e| e.exit_code());
            ExitCode::from(code as u8)
        }
    }
}
