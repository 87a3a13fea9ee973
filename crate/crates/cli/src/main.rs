use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use simrec::geometry::{AlphaChoice, ConeKind, ObjectiveSpec};
use simrec::harness::{self, EnsembleCase, ExperimentConfig, TestSignal};
use simrec::measurements::{DrawOptions, EnsembleKind};
use simrec::Rng;

mod objective;

#[derive(Parser)]
#[command(name = "simrec", version, about = "Simultaneously structured recovery experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a phase-transition grid; rows are appended to the CSV as cells finish.
    Grid {
        config: PathBuf,
        /// Output CSV; defaults to the config path with a `.csv` extension.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Success-rate boundary per d from a cells CSV.
    Boundary {
        cells: PathBuf,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// Only this config hash (a CSV may hold several programs).
        #[arg(long)]
        hash: Option<String>,
        #[arg(long)]
        json: bool,
    },
    /// Lower and upper sample-complexity bounds for a signal.
    Bounds(BoundsArgs),
    /// Measurement-ensemble statistics against their analytic bounds.
    Ensembles(EnsembleArgs),
    /// Adaptive search for the m reaching a target success rate.
    Complexity {
        config: PathBuf,
        #[arg(long = "d", required = true)]
        d: Vec<usize>,
        #[arg(long, default_value_t = 0.5)]
        target: f64,
        /// First m to probe.
        #[arg(long)]
        start: Option<usize>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct BoundsArgs {
    /// Signal CSV (with or without a JSON sidecar).
    signal: PathBuf,
    /// `l1+nuclear`, `l1:0.5+nuclear:2` or `max(nuclear,l12)`.
    #[arg(long)]
    objective: String,
    #[arg(long, default_value = "full")]
    cone: String,
    /// Ensemble for the certified-failure threshold.
    #[arg(long)]
    ensemble: Option<String>,
    /// `recipe`, `grid` or comma-separated dilations per norm.
    #[arg(long, default_value = "recipe")]
    alpha: String,
    #[arg(long, default_value_t = 500)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SignalArg {
    Gaussian,
    Flat,
    Spiky,
}

#[derive(Args)]
struct EnsembleArgs {
    /// JSON list of cases; overrides the single-case flags.
    #[arg(long)]
    cases: Option<PathBuf>,
    #[arg(long, default_value = "gaussian")]
    kind: String,
    #[arg(long, default_value_t = 20)]
    d1: usize,
    #[arg(long)]
    d2: Option<usize>,
    #[arg(long, default_value_t = 100)]
    m: usize,
    #[arg(long, value_enum, default_value_t = SignalArg::Gaussian)]
    signal: SignalArg,
    #[arg(long)]
    dedup: bool,
    #[arg(long)]
    sphere: bool,
    #[arg(long, default_value_t = 200)]
    seeds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    json: bool,
}

/// Config or input problems exit with 1; a grid with solver errors exits with 2.
fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Grid { config, out } => grid(&config, out),
        Command::Boundary {
            cells,
            level,
            hash,
            json,
        } => boundary(&cells, level, hash.as_deref(), json),
        Command::Bounds(args) => bounds(&args),
        Command::Ensembles(args) => ensembles(&args),
        Command::Complexity {
            config,
            d,
            target,
            start,
            json,
        } => complexity(&config, &d, target, start, json),
    }
}

fn load_config(path: &Path) -> anyhow::Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ExperimentConfig::from_json(&text).with_context(|| format!("invalid config {}", path.display()))
}

fn grid(config_path: &Path, out: Option<PathBuf>) -> anyhow::Result<ExitCode> {
    let config = load_config(config_path)?;
    let out = out.unwrap_or_else(|| config_path.with_extension("csv"));
    if out == config_path {
        bail!("output would overwrite the config; pass --out");
    }
    let run = harness::run_grid(&config, Some(&out))?;
    for (p, program) in config.programs.iter().enumerate() {
        let cells = run.for_program(p);
        let successes: usize = cells.iter().map(|c| c.successes).sum();
        let trials: usize = cells.iter().map(|c| c.trials).sum();
        println!(
            "{} {}: {} cells, {successes}/{trials} recovered",
            config.config_hash(p),
            program.describe(),
            cells.len()
        );
    }
    if run.resumed > 0 {
        println!("{} cells reused from {}", run.resumed, out.display());
    }
    println!("wrote {}", out.display());
    let errors = run.solver_errors();
    if errors > 0 {
        eprintln!("{errors} instances ended in solver errors");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn boundary(path: &Path, level: f64, hash: Option<&str>, json: bool) -> anyhow::Result<ExitCode> {
    let cells = harness::read_cells(path).with_context(|| format!("reading {}", path.display()))?;
    let mut groups: BTreeMap<String, Vec<_>> = BTreeMap::new();
    for c in cells.into_iter().filter(|c| hash.is_none_or(|h| c.config_hash == h)) {
        groups.entry(c.config_hash.clone()).or_default().push(c);
    }
    if groups.is_empty() {
        bail!("no cells to read");
    }
    let mut curves = BTreeMap::new();
    for (h, cells) in &groups {
        match harness::extract_boundary(cells, level) {
            Ok(curve) => {
                curves.insert(h.clone(), curve);
            }
            Err(e) => eprintln!("{h}: {e}"),
        }
    }
    if curves.is_empty() {
        bail!("no config brackets level {level}");
    }
    if json {
        println!("{}", serde_json::to_string_pretty(&curves)?);
        return Ok(ExitCode::SUCCESS);
    }
    println!("config_hash,d,m_star");
    for (h, curve) in &curves {
        for (d, m) in &curve.points {
            println!("{h},{d},{m:.3}");
        }
        for d in &curve.omitted {
            eprintln!("{h}: d = {d} does not bracket level {level}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn bounds(args: &BoundsArgs) -> anyhow::Result<ExitCode> {
    let x0 = harness::load_signal(&args.signal).with_context(|| format!("reading {}", args.signal.display()))?;
    let cone = ConeKind::parse(&args.cone).with_context(|| format!("unknown cone {:?}", args.cone))?;
    let objective: ObjectiveSpec = objective::parse(&args.objective, cone)?;
    objective.validate()?;
    let ensemble = match &args.ensemble {
        Some(e) => Some(EnsembleKind::parse(e).with_context(|| format!("unknown ensemble {e:?}"))?),
        None => None,
    };
    let alphas = match args.alpha.as_str() {
        "recipe" => AlphaChoice::Recipe,
        "grid" => AlphaChoice::GridSearch,
        list => AlphaChoice::Given(objective::parse_list(list)?),
    };
    let mut rng = Rng::new(args.seed);
    let summary = harness::bound_report(&x0, &objective, ensemble, &alphas, args.samples, &mut rng)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&summary)?);
    } else {
        print!("{}", summary.text);
    }
    Ok(ExitCode::SUCCESS)
}

fn ensembles(args: &EnsembleArgs) -> anyhow::Result<ExitCode> {
    let cases: Vec<EnsembleCase> = match &args.cases {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("invalid cases {}", path.display()))?
        }
        None => {
            let kind = EnsembleKind::parse(&args.kind).with_context(|| format!("unknown ensemble {:?}", args.kind))?;
            vec![EnsembleCase {
                kind,
                d1: args.d1,
                d2: args.d2.unwrap_or(args.d1),
                m: args.m,
                signal: match args.signal {
                    SignalArg::Gaussian => TestSignal::Gaussian,
                    SignalArg::Flat => TestSignal::Flat,
                    SignalArg::Spiky => TestSignal::Spiky,
                },
                options: DrawOptions {
                    dedup: args.dedup,
                    sphere: args.sphere,
                },
            }]
        }
    };
    let rows = harness::ensemble_report(&cases, args.seeds, args.seed)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&rows)?);
    } else {
        print!("{}", harness::render_ensemble_table(&rows));
    }
    Ok(ExitCode::SUCCESS)
}

fn complexity(path: &Path, ds: &[usize], target: f64, start: Option<usize>, json: bool) -> anyhow::Result<ExitCode> {
    let config = load_config(path)?;
    if !(target > 0.0 && target < 1.0) {
        bail!("target must lie in (0, 1)");
    }
    let mut results = Vec::new();
    for &d in ds {
        let sc = harness::find_sample_complexity_from(&config, d, target, start)?;
        if sc.non_monotone {
            eprintln!("d = {d}: success rates are not monotone in m beyond binomial noise");
        }
        if !json {
            let probes: Vec<String> = sc
                .probes
                .iter()
                .map(|p| format!("{}:{}/{}", p.m, p.successes, p.trials))
                .collect();
            let interp = sc.m_interpolated.map_or("-".to_string(), |m| format!("{m:.2}"));
            println!(
                "d={d} m*={} interpolated={interp} probes=[{}]",
                sc.m_star,
                probes.join(" ")
            );
        }
        results.push(sc);
    }
    if json {
        // Per-instance outcomes are dropped; the probe counts are enough to plot.
        for sc in &mut results {
            for p in &mut sc.probes {
                p.outcomes.clear();
            }
        }
        println!("{}", serde_json::to_string_pretty(&results)?);
    }
    Ok(ExitCode::SUCCESS)
}
