//! Command-line front end.
//!
//! Exit codes: 0 success / tracked / not excluded, 1 failed / violates,
//! 2 usage or configuration error.

pub mod config;
mod output;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::allocation::{charge_slack_equalized, discharge_slack_equalized};
use crate::capacity::{area_condition_holds, frontier_curve, region_flag, tradeoff_feasible, tradeoff_margin, Tradeoff};
use crate::error::{Error, Result};
use crate::model::{denormalize, normalize, BatterySpec, LoadClass, MaxPower, NormalizedBattery};
use crate::numeric::fmt9;
use crate::signals::{self, extremal_probe, project_to_battery_from, ProbePattern, Trajectory};
use crate::simulate::suite;
use crate::simulate::{Fleet, PolicyKind, SimResult, Verdict};

use config::{echo_config, parse_config, parse_triple, RunConfig};
use output::OutputSet;

/// Environment variable naming the default output directory of `simulate`.
pub const OUT_DIR_ENV: &str = "VBCAP_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "vbcap", version, about = "Battery capacity of deferrable load fleets")]
pub struct Cli {
    /// Seed for random generators; overrides a config file's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (default: standard output).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output directory for multi-file commands.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Suppress progress and summary messages.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Analytic frontier curves as `c,w_bar,w_under`.
    Frontier(FrontierArgs),
    /// Upper, lower and nominal energy envelopes of a load class.
    Envelope(EnvelopeArgs),
    /// Slack-equalized energy allocation storing a given energy.
    Alloc(AllocArgs),
    /// Simulate a fleet tracking a battery signal.
    Simulate(SimulateArgs),
    /// Check a battery against the necessary conditions.
    Verify(VerifyArgs),
    /// Emit an extremal or generated battery signal.
    Probe(ProbeArgs),
}

#[derive(Debug, Args)]
struct FrontierArgs {
    /// Normalized volumes.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.1, 0.5, 0.9, 1.0])]
    c: Vec<f64>,
    /// Points per curve.
    #[arg(long, default_value_t = 101)]
    n: usize,
}

#[derive(Debug, Args)]
struct EnvelopeArgs {
    /// Load class `E,T,Pbar`; `Pbar` may be `unbounded`.
    #[arg(long)]
    load: String,
    /// Grid intervals.
    #[arg(long, default_value_t = 200)]
    n: usize,
}

#[derive(Debug, Args)]
struct AllocArgs {
    #[arg(long)]
    load: String,
    /// Stored energy per average active load.
    #[arg(long, allow_hyphen_values = true)]
    chi: f64,
    /// `charge` or `discharge`.
    #[arg(long, default_value = "charge")]
    kind: String,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Config file (a previous run's manifest also works).
    #[arg(long)]
    config: PathBuf,
    /// Signal source: a trajectory CSV, `probe:<pattern>` or `suite`.
    #[arg(long)]
    trajectory: Option<String>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long)]
    load: String,
    /// Battery `C,Wbar,Wunder`.
    #[arg(long, conflicts_with = "normalized", required_unless_present = "normalized")]
    battery: Option<String>,
    /// Normalized battery `c,wbar,wunder`.
    #[arg(long)]
    normalized: Option<String>,
    /// Also run the probe suite under every policy.
    #[arg(long)]
    empirical: bool,
}

#[derive(Debug, Args)]
struct ProbeArgs {
    /// Battery `C,Wbar,Wunder`.
    #[arg(long)]
    battery: String,
    /// Time step.
    #[arg(long, default_value_t = 0.001)]
    dt: f64,
    /// Initial stored energy.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    chi0: f64,
    /// Extremal pattern, e.g. `charge_then_discharge`.
    #[arg(long, group = "source")]
    pattern: Option<String>,
    /// Constant level.
    #[arg(long, group = "source", allow_hyphen_values = true)]
    constant: Option<f64>,
    /// Square wave `amplitude,period`.
    #[arg(long, group = "source")]
    square: Option<String>,
    /// Gaussian random walk with this step deviation.
    #[arg(long, group = "source")]
    random_walk: Option<f64>,
    /// Length of generated signals.
    #[arg(long, default_value_t = 1.0)]
    duration: f64,
    /// Project generated signals onto the battery.
    #[arg(long)]
    project: bool,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Frontier(a) => cmd_frontier(cli, a),
        Command::Envelope(a) => cmd_envelope(cli, a),
        Command::Alloc(a) => cmd_alloc(cli, a),
        Command::Simulate(a) => cmd_simulate(cli, a),
        Command::Verify(a) => cmd_verify(cli, a),
        Command::Probe(a) => cmd_probe(cli, a),
    }
}

fn parse_load(s: &str) -> Result<LoadClass> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::Parse(format!("--load expects E,T,Pbar, got `{s}`")));
    }
    let num = |p: &str| p.parse::<f64>().map_err(|_| Error::Parse(format!("`{p}` is not a number")));
    let max_power = match parts[2] {
        "unbounded" | "inf" => MaxPower::Unbounded,
        p => MaxPower::Finite(num(p)?),
    };
    LoadClass::new(num(parts[0])?, num(parts[1])?, max_power)
}

fn parse_battery(s: &str) -> Result<BatterySpec> {
    let [c, wb, wu] = parse_triple(s)?;
    BatterySpec::new(c, wb, wu)
}

/// Writes `text` to `--out` atomically, or to standard output.
fn emit(cli: &Cli, text: &str) -> Result<()> {
    match &cli.out {
        Some(path) => {
            let mut set = OutputSet::new(path.parent().unwrap_or(Path::new(".")))?;
            set.add(path.file_name().map(PathBuf::from).unwrap_or_else(|| path.clone()), text.to_string());
            set.commit()
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            match stdout.write_all(text.as_bytes()).and_then(|()| stdout.flush()) {
                // a closed pipe (`| head`) is not an error
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                r => r.map_err(|e| Error::InvalidArgument(format!("cannot write output: {e}"))),
            }
        }
    }
}

fn cmd_frontier(cli: &Cli, a: &FrontierArgs) -> Result<i32> {
    let mut s = String::from("c,w_bar,w_under\n");
    for &c in &a.c {
        for (wb, wu) in frontier_curve(c, a.n)? {
            s.push_str(&format!("{},{},{}\n", fmt9(c), fmt9(wb), fmt9(wu)));
        }
    }
    emit(cli, &s)?;
    Ok(0)
}

fn cmd_envelope(cli: &Cli, a: &EnvelopeArgs) -> Result<i32> {
    let lc = parse_load(&a.load)?;
    let mut s = String::from("sigma,x_upper,x_lower,x_nominal\n");
    for sigma in lc.envelope_grid(a.n.max(1)) {
        s.push_str(&format!(
            "{},{},{},{}\n",
            fmt9(sigma),
            fmt9(lc.upper_envelope(sigma)?),
            fmt9(lc.lower_envelope(sigma)?),
            fmt9(lc.nominal_energy(sigma)?)
        ));
    }
    emit(cli, &s)?;
    Ok(0)
}

fn cmd_alloc(cli: &Cli, a: &AllocArgs) -> Result<i32> {
    let lc = parse_load(&a.load)?;
    let profile = match a.kind.as_str() {
        "charge" => charge_slack_equalized(&lc, a.chi)?,
        "discharge" => discharge_slack_equalized(&lc, a.chi)?,
        k => return Err(Error::InvalidArgument(format!("--kind must be charge or discharge, got `{k}`"))),
    };
    emit(cli, &profile.to_csv())?;
    Ok(0)
}

fn load_trajectory(source: &str, cfg: &RunConfig, config_dir: &Path) -> Result<Trajectory> {
    if let Some(name) = source.strip_prefix("probe:") {
        let pattern: ProbePattern = name.parse()?;
        let spec = cfg
            .battery
            .ok_or_else(|| Error::Config("probe trajectories need a [battery] section".into()))?;
        return extremal_probe(&spec, pattern, cfg.sim.initial_profile.chi(), cfg.sim.dt);
    }
    let path = config_dir.join(source);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Config(format!("cannot read trajectory {}: {e}", path.display())))?;
    Trajectory::from_csv(&text)
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out_dir
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn cmd_simulate(cli: &Cli, a: &SimulateArgs) -> Result<i32> {
    let text = std::fs::read_to_string(&a.config)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", a.config.display())))?;
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = cli.seed {
        cfg.sim.seed = seed;
    }
    cfg.sim.validate()?;
    let source = a
        .trajectory
        .clone()
        .or_else(|| cfg.trajectory.clone())
        .ok_or_else(|| Error::Config("no trajectory given (use --trajectory or [run] trajectory)".into()))?;
    cfg.trajectory = Some(source.clone());
    let config_dir = a.config.parent().unwrap_or(Path::new(".")).to_path_buf();

    let mut runs: Vec<(String, SimResult)> = Vec::new();
    if source == "suite" {
        let spec = cfg
            .battery
            .ok_or_else(|| Error::Config("the probe suite needs a [battery] section".into()))?;
        let chi0 = cfg.sim.initial_profile.chi();
        for (i, (probe, result)) in suite::suite_results(&cfg.sim, &spec, chi0)?.into_iter().enumerate() {
            runs.push((format!("probe{:02}_{}", i, sanitize(&probe.name)), result));
        }
    } else {
        let traj = load_trajectory(&source, &cfg, &config_dir)?;
        runs.push(("simulation".into(), Fleet::warm(&cfg.sim)?.track(&traj)?));
    }

    let mut set = OutputSet::new(&out_dir(cli))?;
    let mut manifest = format!(
        "# vbcap run manifest; usable as a config file\n{}\n[run]\nversion = {}\nseed = {}\ntrajectory = {}\n\n[outputs]\n",
        echo_config(&cfg),
        env!("CARGO_PKG_VERSION"),
        cfg.sim.seed,
        source
    );
    let mut all_tracked = true;
    for (stem, r) in &runs {
        let csv = format!("{stem}.csv");
        let events = format!("{stem}_events.csv");
        manifest.push_str(&format!("{csv} = {}\n{events} = {} events\n", r.verdict, r.events.len()));
        set.add(csv.into(), r.to_csv());
        set.add(events.into(), r.events_csv());
        all_tracked &= r.tracked();
        if !cli.quiet {
            eprintln!(
                "{stem}: {} ({} infeasible steps, {} missed deadlines, max tracking error {})",
                r.verdict,
                r.events.len(),
                r.deadline_failures.len(),
                fmt9(r.max_tracking_error)
            );
        }
    }
    set.add("manifest.txt".into(), manifest);
    set.commit()?;
    Ok(if all_tracked { 0 } else { 1 })
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

fn cmd_verify(cli: &Cli, a: &VerifyArgs) -> Result<i32> {
    let lc = parse_load(&a.load)?;
    let spec = match (&a.battery, &a.normalized) {
        (Some(b), _) => parse_battery(b)?,
        (None, Some(n)) => {
            let [c, wb, wu] = parse_triple(n)?;
            denormalize(&NormalizedBattery::new(c, wb, wu)?, &lc)?
        }
        (None, None) => unreachable!("clap requires one of the battery forms"),
    };
    let nb = normalize(&spec, &lc)?;
    let area = area_condition_holds(&lc, &spec)?;
    let region = region_flag(&nb);
    let tradeoff = tradeoff_feasible(&nb);

    let mut s = String::new();
    s.push_str(&format!(
        "battery = {},{},{}\nnormalized = {},{},{}\n",
        fmt9(spec.capacity),
        fmt9(spec.charge_rate),
        fmt9(spec.discharge_rate),
        fmt9(nb.c()),
        fmt9(nb.w_bar()),
        fmt9(nb.w_under())
    ));
    s.push_str(&format!("region = {}\n", if region.in_region_s { "closed_form".to_string() } else { format!("{:?}", region.reason) }));
    let tradeoff_name = match tradeoff {
        Tradeoff::SatisfiesNecessary => "satisfies_necessary",
        Tradeoff::Violates => "violates",
        Tradeoff::OutsideRegion => "outside_region",
    };
    s.push_str(&format!("tradeoff = {tradeoff_name}\ntradeoff_margin = {}\n", fmt9(tradeoff_margin(&nb))));
    s.push_str(&format!(
        "max_area = {}\narea_budget = {}\narea_ratio = {}\n",
        fmt9(area.max_area),
        fmt9(area.area_budget),
        fmt9(area.ratio())
    ));
    let verdict = if area.holds { "not_excluded" } else { "violates_necessary" };
    s.push_str(&format!("verdict = {verdict}\n"));
    if let Some(w) = area.witness {
        s.push_str(&format!("witness_chi = {}\n", fmt9(w)));
    }

    if a.empirical {
        if lc.is_unbounded() {
            return Err(Error::Unsupported("a finite power limit for --empirical"));
        }
        let mut base = crate::simulate::SimConfig::new(lc);
        base.seed = cli.seed.unwrap_or(0);
        for policy in PolicyKind::ALL {
            let mut cfg = base;
            cfg.policy = policy;
            let out = suite::run_suite(&cfg, &spec, &[0.0], false)?;
            let failed = out.probes.iter().filter(|p| p.verdict == Verdict::Failed).count();
            s.push_str(&format!(
                "empirical {} = {} ({failed}/{} probes failed)\n",
                policy.name(),
                out.verdict,
                out.probes.len()
            ));
        }
    }
    emit(cli, &s)?;
    Ok(if area.holds { 0 } else { 1 })
}

fn cmd_probe(cli: &Cli, a: &ProbeArgs) -> Result<i32> {
    let spec = parse_battery(&a.battery)?;
    let tr = if let Some(p) = &a.pattern {
        extremal_probe(&spec, p.parse()?, a.chi0, a.dt)?
    } else {
        let raw = if let Some(level) = a.constant {
            signals::constant(level, a.duration, a.dt)?
        } else if let Some(sq) = &a.square {
            let (amp, period) = sq
                .split_once(',')
                .ok_or_else(|| Error::Parse("--square expects amplitude,period".into()))?;
            let num = |p: &str| p.trim().parse::<f64>().map_err(|_| Error::Parse(format!("`{p}` is not a number")));
            signals::square_wave(num(amp)?, num(period)?, a.duration, a.dt)?
        } else if let Some(sd) = a.random_walk {
            signals::random_walk(cli.seed.unwrap_or(0), sd, a.duration, a.dt)?
        } else {
            return Err(Error::InvalidArgument(
                "choose one of --pattern, --constant, --square, --random-walk".into(),
            ));
        };
        if a.project {
            spec.check_chi(a.chi0)?;
            project_to_battery_from(&raw, &spec, a.chi0)
        } else {
            raw
        }
    };
    emit(cli, &tr.to_csv())?;
    Ok(0)
}
