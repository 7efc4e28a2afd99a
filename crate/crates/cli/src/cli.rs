use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ensrlab::biso::BisoSpec;
use ensrlab::gaussian::{GaussianSpec, DEFAULT_BINS};

use crate::commands::{self, CurveKindArg};
use crate::config::{parse_eps_grid, read_json, OutputFormat, RunConfig};
use crate::error::{CliError, CliResult};
use crate::suites::Suite;

#[derive(Debug, Parser)]
#[command(
    name = "ensrlab",
    version,
    about = "Privacy-aware MMSE estimation toolkit"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Grid step of the filter search.
    #[arg(long, global = true, default_value_t = 0.02)]
    pub resolution: f64,
    /// Random restarts of the gradient search.
    #[arg(long, global = true, default_value_t = 32)]
    pub restarts: usize,
    /// Budget overshoot tolerated before a solution is rejected.
    #[arg(long, global = true, default_value_t = 1e-6)]
    pub tolerance: f64,
    /// Defaults to csv for curves and json for reports.
    #[arg(long, global = true, value_enum)]
    pub format: Option<OutputFormat>,
    /// Write here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Maximal correlation and its singular vectors.
    Maxcorr {
        #[arg(long)]
        joint: PathBuf,
    },
    /// Sampled M_eps, W_eps or error-probability curve.
    Curve {
        #[arg(long)]
        joint: PathBuf,
        #[arg(long, value_enum)]
        kind: CurveKindArg,
        /// `start:stop:step` or a comma-separated list.
        #[arg(long)]
        eps: String,
    },
    /// Run a verification suite; exits 1 if any claim fails.
    Verify {
        #[arg(value_enum)]
        suite: Suite,
        /// Use this joint instead of random ones in the bounds and convexity suites.
        #[arg(long)]
        joint: Option<PathBuf>,
    },
    /// Additive Gaussian noise filters on a continuous source.
    Gaussian {
        /// JSON source description; overrides --rho.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        var_x: f64,
        #[arg(long, default_value_t = 1.0)]
        var_y: f64,
        #[arg(long)]
        eps: String,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
    },
    /// Closed forms for a binary-input symmetric-output source.
    Biso {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        eps: String,
    },
}

impl Cli {
    fn config(&self, default_format: OutputFormat) -> CliResult<RunConfig> {
        let g = &self.global;
        let cfg = RunConfig {
            seed: g.seed,
            grid_resolution: g.resolution,
            restarts: g.restarts,
            tolerance: g.tolerance,
            output_format: g.format.unwrap_or(default_format),
            output_path: g.out.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Maxcorr { joint } => {
            commands::cmd_maxcorr(&cli.config(OutputFormat::Json)?, joint)
        }
        Command::Curve { joint, kind, eps } => commands::cmd_curve(
            &cli.config(OutputFormat::Csv)?,
            joint,
            *kind,
            &parse_eps_grid(eps)?,
        ),
        Command::Verify { suite, joint } => {
            commands::cmd_verify(&cli.config(OutputFormat::Json)?, *suite, joint.as_deref())
                .map(|_| ())
        }
        Command::Gaussian {
            params,
            rho,
            var_x,
            var_y,
            eps,
            bins,
        } => {
            let spec = match (params, rho) {
                (Some(p), _) => read_json::<GaussianSpec>(p)?,
                (None, Some(rho)) => GaussianSpec::Pair {
                    rho: *rho,
                    var_y: *var_y,
                    var_x: *var_x,
                },
                (None, None) => {
                    return Err(CliError::Input("gaussian needs --params or --rho".into()))
                }
            };
            commands::cmd_gaussian(
                &cli.config(OutputFormat::Csv)?,
                &spec,
                &parse_eps_grid(eps)?,
                *bins,
            )
        }
        Command::Biso { params, eps } => {
            let spec: BisoSpec = read_json(params)?;
            commands::cmd_biso(
                &cli.config(OutputFormat::Csv)?,
                &spec,
                &parse_eps_grid(eps)?,
            )
        }
    }
}
