//! Command-line front end: single solves, sweeps, rate regions, error-rate
//! validation and the acceptance self-test.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 solver
//! non-convergence (or a failed self-test), 3 I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wpcn::baselines::SchemeId;
use wpcn::harness::acceptance::all_criteria;
use wpcn::harness::{run_experiment, solve_point, write_output, write_table, Experiment, ExperimentKind, Table};
use wpcn::phy::BackscatterLink;
use wpcn::sysmodel::{ChannelState, Config, LinePlacement, SystemParams};
use wpcn::Error;

#[derive(Parser)]
#[command(name = "wpcn", version, about = "Max-min throughput of a backscatter-assisted wireless-powered network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance for each selected scheme.
    Solve(Common),
    /// Run a beta, d1, d2 or convergence sweep.
    Sweep {
        /// beta_sweep, d1_sweep, d2_sweep or convergence; overrides `experiment` in the config.
        #[arg(long)]
        experiment: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Trace weighted-sum-rate boundaries for each relay distance.
    Region(Common),
    /// Compare simulated and closed-form backscatter error rates.
    Ber(Common),
    /// Run the acceptance checks and print one line per criterion.
    Selftest,
}

#[derive(Args)]
struct Common {
    /// `key = value` file with system parameters and experiment keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated scheme names (proposed_ab, coop_no_ab, independent).
    #[arg(long)]
    scheme: Option<String>,
}

enum Failure {
    Usage(String),
    Error(Error),
    /// Work completed, but some solves did not converge.
    NonConverged(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn exit_code(f: &Failure) -> u8 {
    match f {
        Failure::Usage(_) => 1,
        Failure::NonConverged(_) => 2,
        Failure::Error(e) => match e {
            Error::Config(_) | Error::Domain(_) | Error::Precision(_) => 1,
            Error::Io(_) => 3,
            _ => 2,
        },
    }
}

fn load_config(common: &Common) -> Result<Config, Error> {
    match &common.config {
        Some(path) => Config::from_file(path),
        None => Ok(Config::default()),
    }
}

fn parse_schemes(list: &str) -> Result<Vec<SchemeId>, Error> {
    list.split(',').map(|s| s.trim().parse()).collect()
}

/// System parameters and experiment from the config file and flags.
/// `kind` is the experiment the subcommand implies, if any.
fn load_experiment(common: &Common, kind: Option<ExperimentKind>) -> Result<(SystemParams, Experiment), Failure> {
    let mut cfg = load_config(common)?;
    let params = SystemParams::default().apply_config(&mut cfg)?;
    let from_file = cfg.take::<String>("experiment")?.map(|s| s.parse::<ExperimentKind>()).transpose()?;
    let kind = match (kind, from_file) {
        (Some(k), Some(f)) if k != f => {
            return Err(Failure::Usage(format!("config asks for `{f}` but the command runs `{k}`")));
        }
        (Some(k), _) | (None, Some(k)) => k,
        (None, None) => return Err(Failure::Usage("no experiment given (use --experiment or `experiment =`)".into())),
    };
    let mut e = Experiment::defaults(kind);
    e.apply_config(&mut cfg)?;
    cfg.finish()?;
    if let Some(out) = &common.out {
        e.output = out.clone();
    }
    if let Some(seed) = common.seed {
        e.seed = seed;
    }
    if let Some(list) = &common.scheme {
        e.schemes = parse_schemes(list)?;
    }
    Ok((params, e))
}

fn run(e: &Experiment, params: &SystemParams) -> Result<(), Failure> {
    let out = run_experiment(e, params)?;
    write_output(&out)?;
    for line in &out.summary {
        println!("{line}");
    }
    for t in &out.tables {
        println!("wrote {}", t.path.display());
    }
    if out.non_converged > 0 {
        return Err(Failure::NonConverged(format!("{} solves hit the iteration limit", out.non_converged)));
    }
    Ok(())
}

const SOLVE_COLUMNS: [(&str, &str, &str); 14] = [
    ("scheme", "-", "transmission scheme"),
    ("rbar", "bit/frame", "common throughput"),
    ("r1", "bit/frame", "far device throughput"),
    ("r2", "bit/frame", "relay own throughput"),
    ("t1", "frame", "energy transfer time"),
    ("t2", "frame", "backscatter time"),
    ("t3", "frame", "far device active time"),
    ("t41", "frame", "relay forwarding time"),
    ("t42", "frame", "relay own-data time"),
    ("tau41", "J", "relay energy spent forwarding"),
    ("tau42", "J", "relay energy spent on own data"),
    ("iterations", "-", "multiplier updates (0 for the barrier method)"),
    ("certified_gap", "-", "relative duality gap certified by the returned multipliers"),
    ("status", "-", "ok, or the failure"),
];

fn solve_cmd(common: &Common) -> Result<(), Failure> {
    let mut cfg = load_config(common)?;
    let params = SystemParams::default().apply_config(&mut cfg)?;
    let keys = cfg.remaining_keys();
    let by_distance = keys.iter().any(|k| k == "d1" || k == "d2");
    let by_gain = keys.iter().any(|k| k == "h1" || k == "h2" || k == "h12");
    if by_distance && by_gain {
        return Err(Failure::Usage("give either channel gains or distances, not both".into()));
    }
    // The beta-sweep defaults carry the reference gains and solver settings.
    let mut e = Experiment::defaults(ExperimentKind::BetaSweep);
    e.apply_config(&mut cfg)?;
    cfg.finish()?;
    if let Some(list) = &common.scheme {
        e.schemes = parse_schemes(list)?;
    }
    let ch = if by_distance {
        LinePlacement::new(e.d1, e.d2)?.channels(&params)?
    } else {
        ChannelState::real(e.gains.0, e.gains.1, e.gains.2, &params)?
    };
    let link = BackscatterLink::new(params, ch)?;

    let mut table = Table::new(common.out.clone().unwrap_or_default(), SOLVE_COLUMNS.to_vec());
    let mut failed = 0;
    for &scheme in &e.schemes {
        let start = std::time::Instant::now();
        let result = solve_point(scheme, &link, &e.solver);
        let wall = start.elapsed().as_secs_f64();
        let row = match &result {
            Ok(r) => {
                let a = &r.alloc;
                println!(
                    "{scheme}: rbar = {:.6} bit, R1 = {:.6}, R2 = {:.6}, iterations = {}",
                    r.rbar, r.rates.r1, r.rates.r2, r.iterations
                );
                let mut row = vec![scheme.name().to_string()];
                row.extend(
                    [r.rbar, r.rates.r1, r.rates.r2, a.t1, a.t2, a.t3, a.t41, a.t42, a.tau41, a.tau42].map(|v| v.to_string()),
                );
                row.push(r.iterations.to_string());
                row.push(r.certified_gap.map(|g| g.to_string()).unwrap_or_default());
                row.push("ok".into());
                row
            }
            Err(err) => {
                eprintln!("{scheme}: {err}");
                if exit_code(&Failure::Error(err.clone())) != 2 {
                    return Err(err.clone().into());
                }
                failed += 1;
                let mut row = vec![scheme.name().to_string()];
                row.extend(std::iter::repeat_n(String::new(), 12));
                row.push(format!("failed: {err}"));
                row
            }
        };
        table.push(row, wall);
    }
    if common.out.is_some() {
        write_table(&table)?;
        println!("wrote {}", table.path.display());
    }
    if failed > 0 {
        return Err(Failure::NonConverged(format!("{failed} of {} schemes failed", table.rows.len())));
    }
    Ok(())
}

fn selftest() -> Result<(), Failure> {
    let reports = all_criteria();
    for r in &reports {
        println!("{}", r.line());
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    println!("{} of {} criteria passed", reports.len() - failed, reports.len());
    if failed > 0 {
        return Err(Failure::NonConverged(format!("{failed} criteria failed")));
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Solve(common) => solve_cmd(&common),
        Command::Sweep { experiment, common } => {
            let kind = experiment.map(|s| s.parse::<ExperimentKind>()).transpose()?;
            if let Some(k) = kind {
                if matches!(k, ExperimentKind::RateRegion | ExperimentKind::BerValidation) {
                    return Err(Failure::Usage(format!("`{k}` has its own subcommand")));
                }
            }
            let (params, e) = load_experiment(&common, kind)?;
            run(&e, &params)
        }
        Command::Region(common) => {
            let (params, e) = load_experiment(&common, Some(ExperimentKind::RateRegion))?;
            run(&e, &params)
        }
        Command::Ber(common) => {
            let (params, e) = load_experiment(&common, Some(ExperimentKind::BerValidation))?;
            run(&e, &params)
        }
        Command::Selftest => selftest(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(msg) | Failure::NonConverged(msg) => eprintln!("error: {msg}"),
                Failure::Error(e) => eprintln!("error: {e}"),
            }
            ExitCode::from(exit_code(&f))
        }
    }
}
