use std::path::{Path, PathBuf};
use std::io::Write;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use dynlab::attractor_decomposer::{attractors_csv, conservative_kernel, decompose, recurrence_csv, AttractorClass, DecomposeConfig, RecurrenceConfig};
use dynlab::chain_lab::{check_lemma_3_1, depth, pull_back, stats, Side};
use dynlab::orbit_engine::{Classifier, OrbitConfig};
use dynlab::rng::substream;
use dynlab::{FamilyHandle, Interval, LabError, MapSpec};

#[derive(Parser, Debug)]
#[command(name = "dynlab", version, about = "Measurable dynamics of smooth interval maps")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct GlobalArgs {
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Grid cell width; the default depends on the command.
    #[arg(long, global = true)]
    grid: Option<f64>,
    #[arg(long, global = true, default_value_t = 1_000_000)]
    budget: usize,
    #[arg(long, global = true)]
    samples: Option<usize>,
    #[arg(long, global = true, default_value_t = 4096)]
    pmax: usize,
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Report path; CSV side files are written next to it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone)]
enum Command {
    /// Parse a map file and run the validation suite.
    Validate { map: PathBuf },
    /// Classify the orbits of given or random points.
    Classify {
        map: PathBuf,
        #[arg(long = "x")]
        xs: Vec<f64>,
        #[arg(long)]
        random: Option<usize>,
    },
    /// Pull an interval back along an orbit and certify its depth.
    Pullback {
        map: PathBuf,
        #[arg(long)]
        x: f64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        lo: f64,
        #[arg(long)]
        hi: f64,
    },
    /// Ergodic components, primitive attractors and the conservative kernel.
    Decompose { map: PathBuf },
    /// Per-cell recurrence and the conservative kernel.
    Recurrence {
        map: PathBuf,
        /// Also run the decomposition and compare the kernel with A(f).
        #[arg(long)]
        compare: bool,
        #[arg(long, default_value_t = 10)]
        r_min: usize,
    },
    /// Attractor class, period, component count and kernel measure along a
    /// one-parameter family.
    Scan {
        #[arg(long, default_value = "logistic")]
        family: String,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long)]
        steps: usize,
    },
}

#[derive(Serialize, Debug)]
struct RunConfig {
    command: &'static str,
    seed: u64,
    grid_h: f64,
    budget: usize,
    samples: usize,
    p_max: usize,
    threads: Option<usize>,
    out: Option<PathBuf>,
    tolerances: OrbitConfig,
    params: serde_json::Value,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    config: &'a RunConfig,
    report: T,
}

/// Usage-level failure (exit 2) as opposed to an analysis failure (exit 1).
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(Usage(msg.into()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn load_map(path: &Path) -> anyhow::Result<MapSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    MapSpec::from_json(&text).map_err(|e| match e {
        LabError::Parse(_) | LabError::Parameter(_) => usage(format!("{}: {e}", path.display())),
        other => anyhow!(other),
    })
}

fn orbit_config(g: &GlobalArgs) -> OrbitConfig {
    OrbitConfig { p_max: g.pmax, ..OrbitConfig::default() }
}

fn run_config(g: &GlobalArgs, command: &'static str, grid_default: f64, samples_default: usize, params: serde_json::Value) -> RunConfig {
    RunConfig {
        command,
        seed: g.seed,
        grid_h: g.grid.unwrap_or(grid_default),
        budget: g.budget,
        samples: g.samples.unwrap_or(samples_default),
        p_max: g.pmax,
        threads: g.threads,
        out: g.out.clone(),
        tolerances: orbit_config(g),
        params,
    }
}

/// Writes the JSON report to `--out` (or stdout) and each CSV side file
/// next to it as `<stem>.<name>.csv`.
fn emit<T: Serialize>(cfg: &RunConfig, report: T, csvs: &[(&str, String)]) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(&Envelope { config: cfg, report })?;
    match &cfg.out {
        Some(path) => {
            std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
            for (name, body) in csvs {
                let side = path.with_extension(format!("{name}.csv"));
                std::fs::write(&side, body).with_context(|| format!("writing {}", side.display()))?;
            }
        }
        None => writeln!(std::io::stdout().lock(), "{text}")?,
    }
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    let g = &cli.global;
    match &cli.command {
        Command::Validate { map } => {
            let m = load_map(map)?;
            let report = m.validate();
            let cfg = run_config(g, "validate", 0.0, 0, serde_json::json!({ "map": map }));
            for c in report.failed() {
                eprintln!("failed: {} ({})", c.name, c.detail);
            }
            let ok = report.passed;
            emit(&cfg, &report, &[])?;
            Ok(ok)
        }
        Command::Classify { map, xs, random } => {
            let m = load_map(map)?;
            if xs.is_empty() && random.is_none() {
                return Err(usage("classify needs --x or --random"));
            }
            if let Some(x) = xs.iter().find(|&&x| !m.in_domain(x)) {
                return Err(usage(format!("{x} lies outside the phase space")));
            }
            let mut points = xs.clone();
            if let Some(n) = random {
                use rand::Rng;
                let hull = m.hull();
                let mut rng = substream(g.seed, 0);
                points.extend((0..*n).map(|_| m.clamp(rng.gen_range(hull.lo..=hull.hi))));
            }
            let cfg = run_config(g, "classify", 0.0, points.len(), serde_json::json!({ "map": map, "points": points }));
            let cl = Classifier::new(&m, &cfg.tolerances);
            use rayon::prelude::*;
            let records: Vec<_> = points.par_iter().map(|&x| cl.classify(x, g.budget)).collect();
            emit(&cfg, &records, &[])?;
            Ok(true)
        }
        Command::Pullback { map, x, n, lo, hi } => {
            let m = load_map(map)?;
            let target = Interval::new(*lo, *hi).map_err(|e| usage(e.to_string()))?;
            if !m.in_domain(*x) {
                return Err(usage(format!("{x} lies outside the phase space")));
            }
            let cfg = run_config(g, "pullback", 0.0, 0, serde_json::json!({ "map": map, "x": x, "n": n, "target": target }));
            let chain = pull_back(&m, *x, *n, &target).map_err(|e| anyhow!("{e}"))?;
            let chain_stats = stats(&m, &chain);
            let cert = depth(&m, *x, *n, &target).ok();
            let lemma: Vec<_> = [Side::A, Side::B].iter().filter_map(|&s| check_lemma_3_1(&m, *x, *n, &target, s).ok()).collect();
            let corollary = cert.as_ref().map(|c| {
                let bound = 2 * (c.dp + 1);
                serde_json::json!({ "bound": bound, "multiplicity": chain_stats.multiplicity, "holds": chain_stats.multiplicity <= bound })
            });
            emit(
                &cfg,
                serde_json::json!({ "chain": chain, "stats": chain_stats, "depth": cert, "lemma_3_1": lemma, "corollary_3_1": corollary }),
                &[],
            )?;
            Ok(true)
        }
        Command::Decompose { map } => {
            let m = load_map(map)?;
            let cfg = run_config(g, "decompose", 1.0 / (1u64 << 20) as f64, 10_000, serde_json::json!({ "map": map }));
            let dc = decompose_config(&cfg);
            let report = decompose(&m, &dc)?;
            let ok = report.theorem2.all_pass();
            let csvs = [("attractors", attractors_csv(&report)), ("recurrence", recurrence_csv(&report.recurrence))];
            emit(&cfg, &report, &csvs)?;
            Ok(ok)
        }
        Command::Recurrence { map, compare, r_min } => {
            let m = load_map(map)?;
            let cfg = run_config(g, "recurrence", 1.0 / 1024.0, 10_000, serde_json::json!({ "map": map, "compare": compare, "r_min": r_min }));
            let rc = RecurrenceConfig { grid_h: cfg.grid_h, r_min: *r_min, samples: cfg.samples, budget: cfg.budget, seed: cfg.seed, ..Default::default() };
            let report = if *compare {
                let mut dc = decompose_config(&run_config(g, "decompose", 1.0 / (1u64 << 20) as f64, 10_000, serde_json::Value::Null));
                dc.recurrence = rc;
                decompose(&m, &dc)?.recurrence
            } else {
                conservative_kernel(&Classifier::new(&m, &cfg.tolerances), &rc)
            };
            let csvs = [("cells", recurrence_csv(&report))];
            emit(&cfg, &report, &csvs)?;
            Ok(true)
        }
        Command::Scan { family, from, to, steps } => {
            let cfg = run_config(g, "scan", 1.0 / 4096.0, 64, serde_json::json!({ "family": family, "from": from, "to": to, "steps": steps }));
            let body = scan(&cfg, family, *from, *to, *steps)?;
            match &cfg.out {
                Some(path) => {
                    std::fs::write(path, &body)?;
                    let side = path.with_extension("config.json");
                    std::fs::write(side, serde_json::to_string_pretty(&cfg)? + "\n")?;
                }
                None => std::io::stdout().lock().write_all(body.as_bytes())?,
            }
            Ok(true)
        }
    }
}

fn decompose_config(cfg: &RunConfig) -> DecomposeConfig {
    DecomposeConfig {
        grid_h: cfg.grid_h,
        budget: cfg.budget,
        samples: cfg.samples,
        burn_in: DecomposeConfig::default().burn_in.min(cfg.budget / 10),
        recurrence: RecurrenceConfig { samples: cfg.samples, budget: cfg.budget, ..Default::default() },
        orbit: cfg.tolerances.clone(),
        seed: cfg.seed,
        ..Default::default()
    }
}

fn class_name(c: AttractorClass) -> &'static str {
    match c {
        AttractorClass::A1LimitCycle => "A1_limit_cycle",
        AttractorClass::A2IntervalCycle => "A2_interval_cycle",
        AttractorClass::A3Cantor => "A3_cantor",
        AttractorClass::Ambiguous => "ambiguous",
    }
}

/// One row per parameter. The period column is the period of the limit
/// cycle or of the cycle of intervals, when there is one.
fn scan(cfg: &RunConfig, family: &str, from: f64, to: f64, steps: usize) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["param", "class", "period", "components", "kernel_measure"])?;
    let params: Vec<f64> = if steps == 0 || from > to {
        vec![]
    } else if steps == 1 {
        vec![from]
    } else {
        (0..steps).map(|i| from + (to - from) * i as f64 / (steps - 1) as f64).collect()
    };
    for p in params {
        let m = MapSpec::from_family(&FamilyHandle { family: family.to_string(), params: vec![p] }).map_err(|e| usage(e.to_string()))?;
        let mut dc = decompose_config(cfg);
        dc.support_orbits = 8;
        dc.recurrence = RecurrenceConfig { grid_h: 1.0 / 256.0, samples: 256, budget: cfg.budget, seed: cfg.seed, ..Default::default() };
        let (class, period, comps, kernel) = if m.validate().passed {
            let r = decompose(&m, &dc)?;
            let infinite = r.attractors.first();
            let class = match infinite {
                Some(a) => class_name(a.klass),
                None if !r.limit_cycles.is_empty() => class_name(AttractorClass::A1LimitCycle),
                None => "none",
            };
            let period = infinite.and_then(|a| a.period).or_else(|| r.limit_cycles.first().and_then(|c| c.period));
            (class, period, r.components.len(), r.recurrence.kernel_measure)
        } else {
            ("invalid", None, 0, 0.0)
        };
        w.write_record([format!("{p:.16e}"), class.to_string(), period.map(|q| q.to_string()).unwrap_or_default(), comps.to_string(), format!("{kernel:.16e}")])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}
