mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use srasym::normal::RegionCase;
use srasym::spectrum::SweepMode;

use commands::{BoundsArgs, CmdResult, GaussianArgs, GaussianQuery};
use output::{emit, Format, Units};

#[derive(Parser)]
#[command(
    name = "srasym",
    version,
    about = "Fundamental limits of successive-refinement source coding"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Instance JSON file.
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Output file (stdout when absent); a directory for figure2.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Units of rate outputs. Inputs are always in nats.
    #[arg(long, value_enum)]
    units: Option<Units>,
}

impl Common {
    fn units(&self, default: Units) -> Units {
        self.units.unwrap_or(default)
    }
}

#[derive(Args, Clone, Copy)]
struct RateArg {
    /// First-stage rate in nats.
    #[arg(long, conflicts_with = "margin")]
    r1: Option<f64>,
    /// First-stage rate as R_Y(D1) plus this margin, in nats.
    #[arg(long, default_value_t = 0.0)]
    margin: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exact,
    Mc,
}

#[derive(Subcommand)]
enum Command {
    /// Rate-distortion functions of both decoders.
    Rd {
        #[command(flatten)]
        common: Common,
    },
    /// Minimal sum rate at a first-stage rate.
    Sr {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        rate: RateArg,
    },
    /// Rate-dispersion matrix and related moments.
    Dispersion {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        rate: RateArg,
    },
    /// Boundary of the second-order coding region.
    Region {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        rate: RateArg,
        #[arg(long, default_value = "iii")]
        case: RegionCase,
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
    },
    /// Moderate deviations constant.
    Mdc {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        rate: RateArg,
        #[arg(long, default_value = "iii")]
        case: RegionCase,
        #[arg(long, default_value_t = 1.0)]
        theta1: f64,
        #[arg(long, default_value_t = 1.0)]
        theta2: f64,
    },
    /// Finite-blocklength bounds on the joint excess-distortion probability.
    Bounds {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: u64,
        #[arg(long = "logM1")]
        log_m1: f64,
        #[arg(long = "logM1M2")]
        log_m1m2: f64,
        #[arg(long, value_enum, default_value_t = Mode::Exact)]
        mode: Mode,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Reference first-stage rate of the normal approximation (default R_Y).
        #[arg(long)]
        r1: Option<f64>,
        #[arg(long, default_value = "iii")]
        case: RegionCase,
    },
    /// Gaussian source with quadratic distortion.
    Gaussian {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = GaussianQuery::Rd)]
        query: GaussianQuery,
        #[arg(long, default_value = "iii")]
        case: RegionCase,
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        #[arg(long, default_value_t = 1.0)]
        theta1: f64,
        #[arg(long, default_value_t = 1.0)]
        theta2: f64,
        #[arg(long)]
        n: Option<u64>,
        #[arg(long = "logM1")]
        log_m1: Option<f64>,
        #[arg(long = "logM1M2")]
        log_m1m2: Option<f64>,
        #[arg(long)]
        xi: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Rate-dispersion function V(D) of a source (default: the quaternary example).
    Figure1 {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 50)]
        points: usize,
        /// Upper end of the open distortion interval.
        #[arg(long, default_value_t = 0.74)]
        dmax: f64,
    },
    /// Second-order boundaries at D2 = 0.3, D1 in {0.5, 0.55, 0.6}, epsilon = 0.005.
    Figure2 {
        #[command(flatten)]
        common: Common,
    },
}

fn run(cli: Cli) -> CmdResult<()> {
    use commands as c;
    let (common, report) = match cli.command {
        Command::Rd { common } => {
            let inst = c::load_instance(common.instance.as_ref())?;
            let r = c::rd(&inst, common.units(Units::Nats))?;
            (common, r)
        }
        Command::Sr { common, rate } => {
            let inst = c::load_instance(common.instance.as_ref())?;
            let r1 = c::first_rate(&inst, rate.r1, rate.margin)?;
            let r = c::sr(&inst, r1, common.units(Units::Nats))?;
            (common, r)
        }
        Command::Dispersion { common, rate } => {
            let inst = c::load_instance(common.instance.as_ref())?;
            let r1 = c::first_rate(&inst, rate.r1, rate.margin)?;
            let r = c::dispersion(&inst, r1, common.units(Units::Nats))?;
            (common, r)
        }
        Command::Region {
            common,
            rate,
            case,
            epsilon,
        } => {
            let inst = c::load_instance(common.instance.as_ref())?;
            let r1 = c::first_rate(&inst, rate.r1, rate.margin)?;
            let r = c::region(&inst, r1, case, epsilon, common.units(Units::Nats))?;
            (common, r)
        }
        Command::Mdc {
            common,
            rate,
            case,
            theta1,
            theta2,
        } => {
            let inst = c::load_instance(common.instance.as_ref())?;
            let r1 = c::first_rate(&inst, rate.r1, rate.margin)?;
            let r = c::mdc(&inst, r1, case, theta1, theta2)?;
            (common, r)
        }
        Command::Bounds {
            common,
            n,
            log_m1,
            log_m1m2,
            mode,
            trials,
            seed,
            r1,
            case,
        } => {
            let inst = c::load_instance(common.instance.as_ref())?;
            let mode = match mode {
                Mode::Exact => SweepMode::Exact,
                Mode::Mc => SweepMode::MonteCarlo { trials, seed },
            };
            let args = BoundsArgs {
                n,
                log_m1,
                log_m1m2,
                mode,
                r1,
                case,
            };
            let r = c::bounds(&inst, &args, common.units(Units::Nats))?;
            (common, r)
        }
        Command::Gaussian {
            common,
            query,
            case,
            epsilon,
            theta1,
            theta2,
            n,
            log_m1,
            log_m1m2,
            xi,
            delta,
        } => {
            let g = c::load_gaussian(common.instance.as_ref())?;
            let args = GaussianArgs {
                query,
                case,
                epsilon,
                theta1,
                theta2,
                n,
                log_m1,
                log_m1m2,
                xi,
                delta,
            };
            let r = c::gaussian(&g, &args, common.units(Units::Nats))?;
            (common, r)
        }
        Command::Figure1 {
            common,
            points,
            dmax,
        } => {
            let inst = match &common.instance {
                Some(_) => c::load_instance(common.instance.as_ref())?,
                None => c::quaternary(),
            };
            let r = c::figure1(
                inst.px(),
                inst.d1(),
                points,
                dmax,
                common.units(Units::Nats),
            )?;
            (common, r)
        }
        Command::Figure2 { common } => {
            let inst = match &common.instance {
                Some(_) => c::load_instance(common.instance.as_ref())?,
                None => c::quaternary(),
            };
            let reports = c::figure2(&inst, common.units(Units::Bits))?;
            let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
            for p in c::write_figure2(&reports, common.format, &dir)? {
                println!("{}", p.display());
            }
            return Ok(());
        }
    };
    emit(&report.render(common.format)?, common.out.as_deref())
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("error: {}", one_line(first.trim_start_matches("error: ")));
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", one_line(&e));
            ExitCode::from(1)
        }
    }
}
