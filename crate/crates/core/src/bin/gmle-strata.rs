//! Command-line front end: `fit`, `simulate`, `ci`, `general`, `thin`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use strata_gmle::bounds::{ci_bounds, CiConfig, ConstraintMode};
use strata_gmle::error::Error;
use strata_gmle::general::{build_threshold_plan, general_estimate};
use strata_gmle::io;
use strata_gmle::model::{default_grid, GridSpec, OutcomeTable, Scenario};
use strata_gmle::sim::{self, StrataDesign};
use strata_gmle::{estimate, EmConfig};

#[derive(Parser)]
#[command(
    name = "gmle-strata",
    version,
    about = "GMLE estimation of strata averages with empty strata"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the mixing distribution and report every estimator.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Replicated simulation on a built-in preset or a design file.
    Simulate {
        #[arg(long, conflicts_with = "design")]
        preset: Option<String>,
        #[arg(long)]
        design: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        reps: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Likelihood-ratio confidence bounds for the population average.
    Ci {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, value_enum, default_value_t = Mode::Chi2)]
        mode: Mode,
        #[arg(long, default_value_t = 0.1)]
        alpha_exp: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Weighted non-binary outcomes by threshold integration.
    General {
        /// Long-format CSV `stratum,a,value`.
        #[arg(long)]
        input: PathBuf,
        /// Optional `stratum,a` CSV declaring every stratum, including empty ones.
        #[arg(long)]
        strata: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        max_thresholds: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Keep each sampled unit independently with probability gamma.
    Thin {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        gamma: f64,
        /// Input is long-format `stratum,a,value` rather than `x,k`.
        #[arg(long)]
        long: bool,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Copy, Clone, ValueEnum, Serialize, Deserialize, Debug)]
#[serde(rename_all = "lowercase")]
enum Mode {
    Chi2,
    Logpower,
}

#[derive(Copy, Clone, ValueEnum, Serialize, Deserialize, Debug, PartialEq)]
#[serde(rename_all = "lowercase")]
enum ScenarioArg {
    Binomial,
    Poisson,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, value_enum)]
    scenario: Option<ScenarioArg>,
    #[arg(long)]
    kappa: Option<u64>,
    /// Grid shape, e.g. `40x40`.
    #[arg(long)]
    grid: Option<String>,
    /// `t1min,t1max,t2min,t2max`.
    #[arg(long, allow_hyphen_values = true)]
    grid_range: Option<String>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// TOML config; flags take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    scenario: Option<ScenarioArg>,
    kappa: Option<u64>,
    seed: Option<u64>,
    threads: Option<usize>,
    out: Option<PathBuf>,
    #[serde(default)]
    grid: FileGrid,
    #[serde(default)]
    em: FileEm,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileGrid {
    n1: Option<usize>,
    n2: Option<usize>,
    t1min: Option<f64>,
    t1max: Option<f64>,
    t2min: Option<f64>,
    t2max: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileEm {
    iters: Option<usize>,
    tol: Option<f64>,
}

/// Effective configuration after merging flags, config file, and defaults.
#[derive(Serialize)]
struct RunConfig {
    command: String,
    input: Option<PathBuf>,
    output_dir: PathBuf,
    seed: u64,
    scenario: Option<Scenario>,
    grid: GridSpec,
    em: EmConfig,
    threads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ci: Option<CiConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    extra: Option<serde_json::Value>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn parse_pair(s: &str) -> Result<(usize, usize), Error> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| config_err(format!("grid {s:?} is not of the form N1xN2")))?;
    let p = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|_| config_err(format!("bad grid size {s:?}")))
    };
    Ok((p(a)?, p(b)?))
}

fn parse_range(s: &str) -> Result<[f64; 4], Error> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| config_err(format!("bad grid range {s:?}")))
        })
        .collect::<Result<_, _>>()?;
    v.try_into()
        .map_err(|_| config_err("grid range needs four numbers: t1min,t1max,t2min,t2max"))
}

fn resolve(command: &str, input: Option<&Path>, c: &Common) -> Result<RunConfig, Error> {
    let file: FileConfig = match &c.config {
        Some(p) => toml::from_str(&fs::read_to_string(p)?)
            .map_err(|e| config_err(format!("{}: {e}", p.display())))?,
        None => FileConfig::default(),
    };
    let scenario_arg = c.scenario.or(file.scenario);
    let kappa = c.kappa.or(file.kappa);
    let scenario = match scenario_arg {
        Some(ScenarioArg::Poisson) => Some(Scenario::PoissonSampleSize),
        Some(ScenarioArg::Binomial) => Some(Scenario::BinomialSampleSize {
            kappa: kappa.ok_or_else(|| config_err("--scenario binomial requires --kappa"))?,
        }),
        None => None,
    };

    let mut grid = GridSpec::default();
    if let Some(n) = file.grid.n1 {
        grid.n1 = n;
    }
    if let Some(n) = file.grid.n2 {
        grid.n2 = n;
    }
    let fg = &file.grid;
    let pair = |lo: Option<f64>, hi: Option<f64>| -> Result<Option<(f64, f64)>, Error> {
        match (lo, hi) {
            (Some(a), Some(b)) => Ok(Some((a, b))),
            (None, None) => Ok(None),
            _ => Err(config_err("grid range keys must be given in min/max pairs")),
        }
    };
    grid.t1 = pair(fg.t1min, fg.t1max)?;
    grid.t2 = pair(fg.t2min, fg.t2max)?;
    if let Some(g) = &c.grid {
        (grid.n1, grid.n2) = parse_pair(g)?;
    }
    if let Some(r) = &c.grid_range {
        let [a, b, d, e] = parse_range(r)?;
        grid.t1 = Some((a, b));
        grid.t2 = Some((d, e));
    }

    let mut em = EmConfig::default();
    if let Some(n) = c.iters.or(file.em.iters) {
        em.max_iter = n;
    }
    if let Some(t) = file.em.tol {
        em.tol = t;
    }
    if em.max_iter == 0 {
        return Err(config_err("--iters must be positive"));
    }

    Ok(RunConfig {
        command: command.into(),
        input: input.map(Path::to_path_buf),
        output_dir: c
            .out
            .clone()
            .or(file.out)
            .unwrap_or_else(|| PathBuf::from(".")),
        seed: c.seed.or(file.seed).unwrap_or(0),
        scenario,
        grid,
        em,
        threads: c.threads.or(file.threads),
        ci: None,
        extra: None,
    })
}

fn require_scenario(cfg: &RunConfig) -> Result<Scenario, Error> {
    cfg.scenario
        .ok_or_else(|| config_err("--scenario is required for this command"))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Error> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_run_config(cfg: &RunConfig) -> Result<(), Error> {
    let f = create(&cfg.output_dir, "run.json")?;
    serde_json::to_writer_pretty(f, cfg).map_err(|e| Error::Io(e.into()))
}

fn setup(cfg: &RunConfig) -> Result<(), Error> {
    fs::create_dir_all(&cfg.output_dir)?;
    if let Some(n) = cfg.threads {
        // Fails only if a pool already exists, which cannot happen in this binary.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Fit { input, common } => {
            let cfg = resolve("fit", Some(&input), &common)?;
            setup(&cfg)?;
            let scenario = require_scenario(&cfg)?;
            let obs = io::read_observations(File::open(&input)?)?;
            let fit = estimate(&obs, scenario, &cfg.grid, &cfg.em)?;
            let dir = &cfg.output_dir;
            io::write_weights(create(dir, "weights.tsv")?, &fit.grid, &fit.em.weights)?;
            io::write_trace(create(dir, "trace.tsv")?, &fit.em)?;
            io::write_estimates(create(dir, "estimates.tsv")?, &fit.report)?;
            io::write_posteriors(create(dir, "posteriors.tsv")?, &obs, &fit.report)?;
            write_run_config(&cfg)?;
            for (name, v) in fit.report.rows() {
                println!(
                    "{name}\t{}",
                    v.map(io::fmt_num).unwrap_or_else(|| io::ABSENT.into())
                );
            }
        }
        Command::Simulate {
            preset,
            design,
            reps,
            common,
        } => {
            let mut cfg = resolve("simulate", design.as_deref(), &common)?;
            setup(&cfg)?;
            let design = match (preset.as_deref(), design) {
                (Some(name), _) => sim::preset(name).ok_or_else(|| {
                    config_err(format!(
                        "unknown preset {name:?}; available: {}",
                        sim::PRESETS.join(", ")
                    ))
                })?,
                (None, Some(path)) => StrataDesign::from_toml(&fs::read_to_string(path)?)?,
                (None, None) => {
                    return Err(config_err(format!(
                        "give --preset ({}) or --design FILE",
                        sim::PRESETS.join(", ")
                    )))
                }
            };
            cfg.scenario = Some(design.scenario);
            cfg.extra = Some(
                serde_json::json!({ "reps": reps, "preset": preset, "design": design.to_toml() }),
            );
            let summary = sim::run_replications(&design, reps, &cfg.em, &cfg.grid, cfg.seed)?;
            io::write_summary(create(&cfg.output_dir, "summary.tsv")?, &summary)?;
            write_run_config(&cfg)?;
            io::write_summary(std::io::stdout().lock(), &summary)?;
        }
        Command::Ci {
            input,
            alpha,
            mode,
            alpha_exp,
            common,
        } => {
            let mut cfg = resolve("ci", Some(&input), &common)?;
            setup(&cfg)?;
            let scenario = require_scenario(&cfg)?;
            let obs = io::read_observations(File::open(&input)?)?;
            scenario.validate(&obs)?;
            let ci_cfg = CiConfig {
                alpha,
                mode: match mode {
                    Mode::Chi2 => ConstraintMode::ChiSquare,
                    Mode::Logpower => ConstraintMode::LogPower { alpha_exp },
                },
                ..CiConfig::default()
            };
            cfg.ci = Some(ci_cfg);
            let grid = default_grid(scenario, &obs, &cfg.grid)?;
            let table = OutcomeTable::from_observations(&obs);
            let ci = ci_bounds(&table, &grid, &ci_cfg)?;
            io::write_ci(create(&cfg.output_dir, "ci.tsv")?, &ci, &ci_cfg)?;
            write_run_config(&cfg)?;
            println!(
                "lower\t{}\ngmle\t{}\nupper\t{}",
                io::fmt_num(ci.lower),
                io::fmt_num(ci.gmle_plugin),
                io::fmt_num(ci.upper)
            );
        }
        Command::General {
            input,
            strata,
            max_thresholds,
            common,
        } => {
            let mut cfg = resolve("general", Some(&input), &common)?;
            setup(&cfg)?;
            let scenario = require_scenario(&cfg)?;
            let declared = strata.as_ref().map(File::open).transpose()?;
            let data = io::read_general(File::open(&input)?, declared)?;
            let plan = build_threshold_plan(&data.strata, max_thresholds)?;
            cfg.extra = Some(
                serde_json::json!({ "max_thresholds": max_thresholds, "strata_file": strata }),
            );
            let est = general_estimate(&data.strata, scenario, &cfg.grid, &cfg.em, &plan)?;
            io::write_general(create(&cfg.output_dir, "general.tsv")?, &est)?;
            let mut f = create(&cfg.output_dir, "estimate.tsv")?;
            writeln!(
                f,
                "estimator\tvalue\ngeneral\t{}",
                io::fmt_num(est.estimate)
            )?;
            write_run_config(&cfg)?;
            println!("general\t{}", io::fmt_num(est.estimate));
            if est.monotonicity_violations > 0 {
                eprintln!(
                    "note: {} threshold(s) had non-monotone raw survival estimates",
                    est.monotonicity_violations
                );
            }
        }
        Command::Thin {
            input,
            gamma,
            long,
            common,
        } => {
            let mut cfg = resolve("thin", Some(&input), &common)?;
            setup(&cfg)?;
            cfg.extra = Some(serde_json::json!({ "gamma": gamma, "long": long }));
            if long {
                let data = io::read_general(File::open(&input)?, None::<File>)?;
                let thinned = sim::thin_strata(&data.strata, gamma, cfg.seed)?;
                io::write_general_long(
                    create(&cfg.output_dir, "thinned.csv")?,
                    &data.ids,
                    &thinned,
                )?;
                io::write_general_declared(
                    create(&cfg.output_dir, "strata.csv")?,
                    &data.ids,
                    &thinned,
                )?;
            } else {
                let obs = io::read_observations(File::open(&input)?)?;
                let thinned = sim::thin_dataset(&obs, gamma, cfg.seed)?;
                io::write_observations(create(&cfg.output_dir, "thinned.csv")?, &thinned)?;
            }
            write_run_config(&cfg)?;
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Parse { .. }
        | Error::Config(_)
        | Error::InvalidObservation { .. }
        | Error::InvalidDesign(_)
        | Error::InvalidGrid(_)
        | Error::EmptyData => 2,
        Error::ZeroLikelihoodRow { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
