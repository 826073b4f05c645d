//! `agmf`: runs the shape-approximation and tracking experiments and writes CSV.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use agmf_core::scenarios::{run_shape, run_tracking, FilterKind, ShapeScenario, TrackScenario, TrackSummary};
use agmf_core::{FilterConfig, SchemeConfig};
use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "agmf", version, about = "Adaptive Gaussian mixture filter experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Approximate the density of a scalar growth process by recursive splitting.
    Shape(ShapeArgs),
    /// Monte-Carlo bicycle tracking with a glint-corrupted radar.
    Track(TrackArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Scheme {
    Ut,
    Ge2,
    Ge4,
}

impl Scheme {
    fn config(self, kappa: f64) -> SchemeConfig {
        match self {
            Scheme::Ut => SchemeConfig::unscented(kappa),
            Scheme::Ge2 => SchemeConfig::gaussian_estimator_n2(),
            Scheme::Ge4 => SchemeConfig::gaussian_estimator_n4(),
        }
    }
}

#[derive(Debug, clap::Args, Serialize)]
struct ShapeArgs {
    /// Output CSV (`scheme,components,kld_x10`).
    #[arg(long)]
    out: PathBuf,
    /// Weight exponent of the error-driven scheme.
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    /// Regression-point scheme.
    #[arg(long, value_enum, default_value_t = Scheme::Ge4)]
    scheme: Scheme,
    /// Unscented-transform spread (only used with `--scheme ut`).
    #[arg(long, default_value_t = 0.5)]
    kappa: f64,
    /// Gauss–Hermite nodes per eigendirection for the direction scores.
    #[arg(long, default_value_t = 5)]
    direction_nodes: usize,
    /// Optional CSV of tabulated densities (`series,components,y,density`).
    #[arg(long)]
    density_out: Option<PathBuf>,
}

#[derive(Debug, clap::Args, Serialize)]
struct TrackArgs {
    /// Output CSV (`filter,beta,reduction,rmse,runtime_s,avg_splits,diverged_runs`).
    #[arg(long)]
    out: PathBuf,
    /// Glint probabilities, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0,0.2,0.4,0.6,0.8,1")]
    beta: Vec<f64>,
    /// Monte-Carlo runs per configuration.
    #[arg(long, default_value_t = 50)]
    runs: usize,
    /// Time steps per run.
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Filters to run, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "agmf,mwe,ukf,pf")]
    filters: Vec<String>,
    /// Reduction thresholds after prediction and update, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "2,8,32")]
    reduction: Vec<usize>,
    /// Error threshold of the stopping rule.
    #[arg(long, default_value_t = 0.05)]
    eps_max: f64,
    /// Deviation threshold of the stopping rule.
    #[arg(long, default_value_t = 1.0)]
    d_max: f64,
    /// Component threshold of the stopping rule.
    #[arg(long, default_value_t = 128)]
    l_max: usize,
    /// Weight exponent of the selection criterion.
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    /// Regression-point scheme of the mixture filters.
    #[arg(long, value_enum, default_value_t = Scheme::Ut)]
    scheme: Scheme,
    /// Unscented-transform spread, also used by the UKF.
    #[arg(long, default_value_t = 0.5)]
    kappa: f64,
    /// Particle count of the particle filter.
    #[arg(long, default_value_t = 10_000)]
    particles: usize,
    /// Gauss–Hermite nodes per eigendirection for the direction scores.
    #[arg(long, default_value_t = 5)]
    direction_nodes: usize,
    /// Start the true trajectory at the prior mean instead of a prior draw.
    #[arg(long)]
    truth_at_prior_mean: bool,
}

/// Formats with six significant digits, trailing zeros removed.
fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let scientific = format!("{x:.5e}");
    let rounded: f64 = scientific.parse().expect("formatted float parses");
    let exponent = rounded.abs().log10().floor() as i32;
    if !(-5..15).contains(&exponent) {
        return scientific;
    }
    let decimals = (5 - exponent).max(0) as usize;
    let s = format!("{rounded:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn usage_error(msg: impl std::fmt::Display) -> ! {
    Cli::command().error(ErrorKind::ValueValidation, msg).exit()
}

fn write_file(path: &Path, contents: &str) -> Result<(), String> {
    fs::write(path, contents).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn meta_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

fn write_meta(out: &Path, config: serde_json::Value, seed: Option<u64>) -> Result<(), String> {
    let meta = serde_json::json!({
        "config": config,
        "seed": seed,
        "version": env!("CARGO_PKG_VERSION"),
        "timestamp": chrono::Utc::now().to_rfc3339(),
    });
    let text = serde_json::to_string_pretty(&meta).map_err(|e| e.to_string())?;
    write_file(&meta_path(out), &(text + "\n"))
}

fn cmd_shape(args: &ShapeArgs) -> Result<(), String> {
    if !(0.0..=1.0).contains(&args.gamma) {
        usage_error(format!("--gamma must lie in [0, 1], got {}", args.gamma));
    }
    if args.direction_nodes == 0 {
        usage_error("--direction-nodes must be positive");
    }
    let scn = ShapeScenario {
        gamma: args.gamma,
        scheme: args.scheme.config(args.kappa),
        direction_nodes: args.direction_nodes,
        ..ShapeScenario::default()
    };
    let result = run_shape(&scn).map_err(|e| e.to_string())?;
    let mut csv = String::from("scheme,components,kld_x10\n");
    for row in &result.rows {
        csv.push_str(&format!("{},{},{}\n", row.scheme, row.components, sig6(row.kld_x10)));
    }
    write_file(&args.out, &csv)?;

    if let Some(path) = &args.density_out {
        let ys = result.truth.grid.points();
        let mut dump = String::from("series,components,y,density\n");
        for (y, p) in ys.iter().zip(&result.truth.values) {
            dump.push_str(&format!("truth,,{},{}\n", sig6(*y), sig6(*p)));
        }
        for row in &result.rows {
            let table = agmf_core::scenarios::tabulate(&row.approximation, &result.truth.grid).map_err(|e| e.to_string())?;
            for (y, p) in ys.iter().zip(&table.values) {
                dump.push_str(&format!("{},{},{},{}\n", row.scheme, row.components, sig6(*y), sig6(*p)));
            }
        }
        write_file(path, &dump)?;
    }

    let fractions: serde_json::Map<String, serde_json::Value> = result
        .xi_split_fraction
        .iter()
        .map(|(k, v)| (k.clone(), serde_json::json!(v)))
        .collect();
    let mut config = serde_json::to_value(args).map_err(|e| e.to_string())?;
    config["xi_split_fraction"] = serde_json::Value::Object(fractions);
    write_meta(&args.out, config, None)
}

fn track_config(args: &TrackArgs, reduction: usize) -> FilterConfig {
    FilterConfig {
        gamma: args.gamma,
        eps_max: args.eps_max,
        l_max: args.l_max,
        d_max: args.d_max,
        scheme: args.scheme.config(args.kappa),
        direction_nodes: args.direction_nodes,
        ..FilterConfig::default()
    }
    .with_reduction(reduction)
}

fn cmd_track(args: &TrackArgs) -> Result<(), String> {
    let mut filters = Vec::new();
    for name in &args.filters {
        match FilterKind::parse(name) {
            Ok(f) if !filters.contains(&f) => filters.push(f),
            Ok(_) => {}
            Err(e) => usage_error(e),
        }
    }
    if filters.is_empty() {
        usage_error("--filters must name at least one filter");
    }
    if args.beta.is_empty() || args.beta.iter().any(|b| !(0.0..=1.0).contains(b)) {
        usage_error("--beta values must lie in [0, 1]");
    }
    if args.reduction.is_empty() || args.reduction.iter().any(|&r| r == 0 || r > args.l_max) {
        usage_error(format!("--reduction values must lie in 1..={}", args.l_max));
    }
    if args.runs == 0 || args.steps == 0 {
        usage_error("--runs and --steps must be positive");
    }
    if filters.contains(&FilterKind::Pf) && args.particles == 0 {
        usage_error("--particles must be positive");
    }
    if let Err(e) = track_config(args, args.reduction[0]).validate() {
        usage_error(e);
    }
    if args.scheme == Scheme::Ut && args.kappa <= -1.0 {
        usage_error("--kappa must exceed -1 so that n + kappa > 0");
    }

    let mixture: Vec<FilterKind> = filters.iter().copied().filter(FilterKind::uses_reduction).collect();
    let single: Vec<FilterKind> = filters.iter().copied().filter(|f| !f.uses_reduction()).collect();
    let mut rows: Vec<TrackSummary> = Vec::new();
    for &beta in &args.beta {
        let scn = TrackScenario {
            beta,
            steps: args.steps,
            runs: args.runs,
            seed: args.seed,
            particles: args.particles,
            truth_from_prior: !args.truth_at_prior_mean,
            ..TrackScenario::default()
        };
        if !single.is_empty() {
            rows.extend(run_tracking(&scn, &single, &track_config(args, args.reduction[0])).map_err(|e| e.to_string())?);
        }
        if !mixture.is_empty() {
            for &r in &args.reduction {
                rows.extend(run_tracking(&scn, &mixture, &track_config(args, r)).map_err(|e| e.to_string())?);
            }
        }
    }
    rows.sort_by(|a, b| {
        a.filter
            .name()
            .cmp(b.filter.name())
            .then(a.beta.total_cmp(&b.beta))
            .then(a.reduction.cmp(&b.reduction))
    });

    let mut csv = String::from("filter,beta,reduction,rmse,runtime_s,avg_splits,diverged_runs\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.filter.name(),
            sig6(r.beta),
            r.reduction.map(|v| v.to_string()).unwrap_or_default(),
            sig6(r.rmse),
            sig6(r.runtime_s),
            sig6(r.avg_splits),
            r.diverged_runs
        ));
    }
    write_file(&args.out, &csv)?;

    let details: Vec<serde_json::Value> = rows
        .iter()
        .map(|r| {
            serde_json::json!({
                "filter": r.filter.name(),
                "beta": r.beta,
                "reduction": r.reduction,
                "predict_s": r.predict_s,
                "update_s": r.update_s,
                "degenerate_runs": r.degenerate_runs,
            })
        })
        .collect();
    let mut config = serde_json::to_value(args).map_err(|e| e.to_string())?;
    config["phase_times"] = serde_json::Value::Array(details);
    write_meta(&args.out, config, Some(args.seed))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Shape(args) => cmd_shape(args),
        Command::Track(args) => cmd_track(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
