use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use log::info;
use plstab::diagnostics::write_constants_table;
use plstab::experiments::{
    example1, example2, sweep, write_example1_csv, write_example2_csv, write_sweep_csv,
    Example1Config, Example2Config, SweepConfig,
};
use plstab::{
    constants_table, deficit_of, stability_decompose, sup_convolution, symmetric_decreasing,
    DecomposeConfig, GridFunctionF64, PlTripleF64,
};

const EXIT_PRECONDITION: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(
    name = "plstab",
    version,
    about = "Prekopa-Leindler stability laboratory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Deficit of a triple; `h` defaults to the sup-convolution of `f` and `g`.
    Deficit {
        f: PathBuf,
        g: PathBuf,
        #[arg(long)]
        h: Option<PathBuf>,
        #[arg(long)]
        lambda: f64,
    },
    /// Symmetric decreasing rearrangement, written as grid-function JSON.
    Rearrange {
        f: PathBuf,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Stability decomposition of `(f, g, sup-convolution)`.
    Reconstruct {
        f: PathBuf,
        g: PathBuf,
        #[arg(long)]
        lambda: f64,
        /// Defaults to `min(lambda, 1 - lambda)`.
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long, default_value_t = 4096)]
        n_levels: usize,
        /// Also write the report JSON here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Gaussian with an odd bump: deficit against min-shift distance.
    Example1 {
        #[arg(long, num_args = 1.., value_delimiter = ',', required = true)]
        etas: Vec<f64>,
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        #[arg(long, default_value_t = 5.0)]
        half_width: f64,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Two separated exponential pieces: small deficit, far from the hull.
    Example2 {
        #[arg(long = "A", num_args = 1.., value_delimiter = ',', required = true)]
        a: Vec<f64>,
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        /// Skip the decomposition columns.
        #[arg(long)]
        no_reconstruct: bool,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Seeded perturbation sweep from a JSON config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output path.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Table of the explicit constants.
    Constants {
        #[arg(long, num_args = 1.., value_delimiter = ',', required = true)]
        tau: Vec<f64>,
        #[arg(long, default_value_t = plstab::constants::DEFAULT_OMEGA0)]
        omega0: f64,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

fn read_grid(path: &Path) -> Result<GridFunctionF64> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    GridFunctionF64::from_json_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    let mut out = sink(path)?;
    writeln!(out, "{text}")?;
    out.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Deficit { f, g, h, lambda } => {
            let (f, g) = (read_grid(&f)?, read_grid(&g)?);
            let canonical = h.is_none();
            let h = match h {
                Some(p) => read_grid(&p)?,
                None => sup_convolution(&f, &g, lambda)?,
            };
            let t = PlTripleF64::new(f, g, h, lambda)?;
            let d = deficit_of(&t.f, &t.g, &t.h, lambda)?;
            let body = serde_json::json!({
                "lambda": lambda,
                "canonical_h": canonical,
                "int_f": d.int_f,
                "int_g": d.int_g,
                "int_h": d.int_h,
                "geo_mean": d.geo_mean,
                "epsilon": d.epsilon,
                "a": d.a,
                "quadrature_tol": t.quadrature_tol(),
                "condition": t.condition_report(),
            });
            write_text(None, &serde_json::to_string_pretty(&body)?)
        }
        Command::Rearrange { f, output } => {
            let r = symmetric_decreasing(&read_grid(&f)?)?;
            write_text(output.as_deref(), &r.to_json_string()?)
        }
        Command::Reconstruct {
            f,
            g,
            lambda,
            tau,
            n_levels,
            report,
        } => {
            let (f, g) = (read_grid(&f)?, read_grid(&g)?);
            let h = sup_convolution(&f, &g, lambda)?;
            let t = match tau {
                Some(tau) => PlTripleF64::with_tau(f, g, h, lambda, tau)?,
                None => PlTripleF64::new(f, g, h, lambda)?,
            };
            let config = DecomposeConfig {
                n_levels,
                ..DecomposeConfig::default()
            };
            let json = stability_decompose(&t, &config)?.report.to_json()?;
            if let Some(p) = &report {
                write_text(Some(p), &json)?;
            }
            write_text(None, &json)
        }
        Command::Example1 {
            etas,
            step,
            half_width,
            output,
        } => {
            let res = example1(&etas, &Example1Config { half_width, step })?;
            eprintln!(
                "slope {:.4}  c_eps {:.4}  c_dist {:.4}",
                res.slope, res.c_eps, res.c_dist
            );
            let mut out = sink(output.as_deref())?;
            write_example1_csv(&res, &mut out)?;
            out.flush()?;
            Ok(())
        }
        Command::Example2 {
            a,
            step,
            no_reconstruct,
            output,
        } => {
            let rows = example2(
                &a,
                &Example2Config {
                    step,
                    reconstruct: !no_reconstruct,
                },
            )?;
            for r in rows.iter().filter(|r| r.hull_gap_ratio < 0.5) {
                eprintln!("A = {}: hull gap ratio {} below 1/2", r.a, r.hull_gap_ratio);
            }
            let mut out = sink(output.as_deref())?;
            write_example2_csv(&rows, &mut out)?;
            out.flush()?;
            Ok(())
        }
        Command::Sweep { config, output } => {
            let text = fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let cfg: SweepConfig = serde_json::from_str(&text)
                .map_err(plstab::Error::from)
                .with_context(|| format!("parsing {}", config.display()))?;
            let rows = sweep(&cfg)?;
            let failed = rows.iter().filter(|r| r.failed()).count();
            info!("{} instances, {failed} failed", rows.len());
            let path = output.or(cfg.output.map(PathBuf::from));
            let mut out = sink(path.as_deref())?;
            write_sweep_csv(&rows, &mut out)?;
            out.flush()?;
            Ok(())
        }
        Command::Constants {
            tau,
            omega0,
            output,
        } => {
            let rows = constants_table(&tau, omega0)?;
            let mut out = sink(output.as_deref())?;
            write_constants_table(&rows, &mut out)?;
            out.flush()?;
            Ok(())
        }
    }
}

/// I/O anywhere in the chain maps to the I/O exit code; everything else is a
/// failed precondition on the inputs.
fn exit_code(err: &anyhow::Error) -> u8 {
    let io = err.chain().any(|c| {
        c.downcast_ref::<io::Error>().is_some()
            || match c.downcast_ref::<plstab::Error>() {
                Some(plstab::Error::Io(_)) => true,
                Some(plstab::Error::Csv(e)) => e.is_io_error(),
                _ => false,
            }
    });
    if io {
        EXIT_IO
    } else {
        EXIT_PRECONDITION
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
