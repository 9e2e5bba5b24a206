//! `aseq`: validate models, tabulate divergences, compute exponent regions
//! and run Monte Carlo experiments from the command line.
//!
//! Exit codes: 0 success, 1 invalid model or inputs, 2 usage error or
//! unreadable file. Diagnostics go to stderr; data goes to `--out` or stdout.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use aseq_core::config::{load_environment, ConfigError, ModelFile};
use aseq_core::policy::{Artifacts, ParamOptions, PolicyError};
use aseq_core::region::{
    decision_risk_exponents, exponent_region, individual_hypothesis_region_slice,
    nonadaptive_slice, tuncel_slice, ConstraintPolytope, Facet, SliceFamily, TuncelOptions,
};
use aseq_core::sim::{
    estimate_errors, fit_exponents, verify_constraints, ConstraintCheck, ExperimentConfig,
    ExperimentReport, ExponentEntry, SimError,
};
use aseq_core::{build_table, validate_model, Environment, SelectionFrequency, SourceSet};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(
    name = "aseq",
    version,
    about = "Active sequential multi-hypothesis testing toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model file and print the LLR bound and separability flags.
    Validate {
        #[arg(long)]
        model: PathBuf,
        /// Write the normalized model (joint tables, all defaults explicit).
        #[arg(long, value_name = "FILE")]
        dump_normalized: Option<PathBuf>,
    },
    /// Tabulate D(P_m || P_theta) for every (action, availability) pair as CSV.
    Divergence {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the exponent region (JSON) or a 2-D slice of it (CSV).
    Region(RegionArgs),
    /// Estimate error probabilities of the adaptive test; one CSV row per (T, truth, declared).
    Simulate {
        #[command(flatten)]
        experiment: ExperimentArgs,
        /// CSV destination (stdout if absent).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the full report as JSON.
        #[arg(long, value_name = "FILE")]
        summary: Option<PathBuf>,
    },
    /// Fit error exponents across the T grid and compare with analytic bounds (JSON).
    Exponents {
        #[command(flatten)]
        experiment: ExperimentArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RegionArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fix exponent e_K of hypothesis K (0-based) to v, e.g. `e2=0.1`; repeatable.
    #[arg(long, value_name = "eK=v")]
    slice: Vec<String>,
    /// Emit a slice even without fixed coordinates (two-hypothesis models).
    #[arg(long)]
    plane: bool,
    /// Per-source proportions for the fixed-proportion family, comma separated.
    #[arg(long, value_delimiter = ',')]
    tuncel_beta: Option<Vec<f64>>,
    /// Grid columns used to trace the fixed-proportion family.
    #[arg(long, default_value_t = 64)]
    columns: usize,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    model: PathBuf,
    /// Stopping-time budgets, strictly increasing, comma separated.
    #[arg(long = "T", value_delimiter = ',', required = true)]
    t_grid: Vec<f64>,
    /// Selection-frequency file, or `auto` for the decision-risk optimal choice.
    #[arg(long, default_value = "auto")]
    beta: String,
    /// Ground truth hypothesis (0-based) or `all`.
    #[arg(long, default_value = "all")]
    truth: String,
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-trial step cap (default 200·T); capped trials count as invalid.
    #[arg(long)]
    max_steps: Option<u64>,
    /// Two-sided confidence level of reported intervals.
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
    /// Run the adaptive test even where the parameter rule prescribes a guess.
    #[arg(long)]
    force_adaptive: bool,
    /// Override the exploration probability (0 gives pure exploitation).
    #[arg(long)]
    epsilon: Option<f64>,
}

/// An error with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn usage(error: anyhow::Error) -> Failure {
    Failure { code: 2, error }
}

fn invalid(error: anyhow::Error) -> Failure {
    Failure { code: 1, error }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => usage(e.into()),
            _ => invalid(e.into()),
        }
    }
}

impl From<PolicyError> for Failure {
    fn from(e: PolicyError) -> Self {
        invalid(e.into())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidConfig(_) => usage(e.into()),
            SimError::Policy(p) => p.into(),
        }
    }
}

/// I/O failures while writing results.
impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        invalid(e.into())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        invalid(e.into())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(f) = configure_threads() {
        eprintln!("error: {:#}", f.error);
        return ExitCode::from(f.code);
    }
    let result = match cli.command {
        Command::Validate {
            model,
            dump_normalized,
        } => validate(&model, dump_normalized.as_deref()),
        Command::Divergence { model, out } => divergence(&model, out.as_deref()),
        Command::Region(args) => region(&args),
        Command::Simulate {
            experiment,
            out,
            summary,
        } => simulate(&experiment, out.as_deref(), summary.as_deref()),
        Command::Exponents { experiment, out } => exponents(&experiment, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            if f.code == 2 {
                eprintln!("usage: aseq <validate|divergence|region|simulate|exponents> --model <FILE> [OPTIONS]; see `aseq --help`");
            }
            ExitCode::from(f.code)
        }
    }
}

/// `ASEQ_THREADS` caps the rayon worker pool.
fn configure_threads() -> Outcome {
    let Ok(value) = std::env::var("ASEQ_THREADS") else {
        return Ok(());
    };
    let threads: usize = value.parse().ok().filter(|&t| t > 0).ok_or_else(|| {
        usage(anyhow!(
            "ASEQ_THREADS must be a positive integer, got `{value}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| usage(e.into()))
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path)
                .with_context(|| format!("cannot create {}", path.display()))
                .map_err(usage)?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Outcome {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| invalid(e.into()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn validate(model: &Path, dump: Option<&Path>) -> Outcome {
    let env = load_environment(model)?;
    let report = validate_model(&env).map_err(|e| invalid(e.into()))?;
    println!("hypotheses: {}", env.hypotheses());
    println!("sources: {}", env.sources());
    println!("actions: {}", env.actions.len());
    println!("availability_sets: {}", env.availability.len());
    println!("budgets: {}", env.budgets.len());
    println!("max_llr: {}", report.max_llr);
    println!("separable: {}", report.separable);
    println!("uniformly_separable: {}", report.uniformly_separable);
    if let Some(path) = dump {
        std::fs::write(path, ModelFile::from_environment(&env).to_json() + "\n")
            .with_context(|| format!("cannot write {}", path.display()))
            .map_err(usage)?;
    }
    if !report.separable {
        return Err(invalid(anyhow!(
            "some pair of hypotheses is not separated by any action"
        )));
    }
    Ok(())
}

fn divergence(model: &Path, out: Option<&Path>) -> Outcome {
    let env = load_environment(model)?;
    let table = build_table(&env).map_err(|e| invalid(e.into()))?;
    let mut w = csv::Writer::from_writer(sink(out)?);
    w.write_record(["action", "z", "m", "theta", "kl_nats"])?;
    for a in 0..table.actions() {
        for z in 0..table.sets() {
            for (m, theta) in table.ordered_pairs() {
                w.write_record([
                    env.actions.action(a).to_string(),
                    env.availability.set(z).to_string(),
                    m.to_string(),
                    theta.to_string(),
                    table.get(a, z, m, theta).to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct PerHypothesisJson {
    declared: usize,
    coords: Vec<usize>,
    corners: Vec<Vec<f64>>,
    vertices: Option<Vec<Vec<f64>>>,
    facets: Option<Vec<Facet>>,
}

#[derive(Serialize)]
struct RegionJson {
    /// Vertices of the constraint polytope, `[a][z]`.
    constraint_vertices: Vec<Vec<Vec<f64>>>,
    per_hypothesis: Vec<PerHypothesisJson>,
    /// `max_{β} e*_{m|θ}(β)`, `[m][θ]`.
    maxima: Vec<Vec<f64>>,
    decision_risk: Vec<f64>,
    decision_risk_beta: Vec<Vec<Vec<f64>>>,
}

fn beta_matrix(beta: &SelectionFrequency) -> Vec<Vec<f64>> {
    (0..beta.actions())
        .map(|a| (0..beta.sets()).map(|z| beta.get(a, z)).collect())
        .collect()
}

fn parse_fixed(spec: &str) -> Result<(usize, f64), Failure> {
    let bad = || {
        usage(anyhow!(
            "slice coordinates look like `e2=0.1`, got `{spec}`"
        ))
    };
    let (k, v) = spec
        .strip_prefix('e')
        .and_then(|s| s.split_once('='))
        .ok_or_else(bad)?;
    let k: usize = k.trim().parse().map_err(|_| bad())?;
    let v: f64 = v.trim().parse().map_err(|_| bad())?;
    if !(v.is_finite() && v >= 0.0) {
        return Err(bad());
    }
    Ok((k, v))
}

fn region(args: &RegionArgs) -> Outcome {
    let env = load_environment(&args.model)?;
    let table = build_table(&env).map_err(|e| invalid(e.into()))?;
    let poly = ConstraintPolytope::from_env(&env);
    let region = exponent_region(&table, &poly).map_err(|e| invalid(e.into()))?;
    if args.slice.is_empty() && !args.plane {
        let h = env.hypotheses();
        let maxima = region.maxima();
        let risk = decision_risk_exponents(&table, &poly).map_err(|e| invalid(e.into()))?;
        let json = RegionJson {
            constraint_vertices: region.vertices_c.iter().map(beta_matrix).collect(),
            per_hypothesis: region
                .per_hypothesis
                .iter()
                .map(|r| PerHypothesisJson {
                    declared: r.declared,
                    coords: r.coords.clone(),
                    corners: r.hull.corners().to_vec(),
                    vertices: r.hull.vertices().map(<[_]>::to_vec),
                    facets: r.hull.facets().map(<[_]>::to_vec),
                })
                .collect(),
            maxima: (0..h)
                .map(|m| (0..h).map(|t| maxima.get(m, t)).collect())
                .collect(),
            decision_risk: risk.gamma,
            decision_risk_beta: risk.beta.iter().map(beta_matrix).collect(),
        };
        return write_json(&json, args.out.as_deref());
    }

    let fixed = args
        .slice
        .iter()
        .map(|s| parse_fixed(s))
        .collect::<Result<Vec<_>, _>>()?;
    let slice_err = |e: aseq_core::region::RegionError| usage(e.into());
    let mut families = vec![
        (
            SliceFamily::Adaptive,
            individual_hypothesis_region_slice(&region, &fixed).map_err(slice_err)?,
        ),
        (
            SliceFamily::Nonadaptive,
            nonadaptive_slice(&table, &poly, &fixed).map_err(slice_err)?,
        ),
    ];
    if is_chernoff_form(&env) && env.model.is_product_form(env.tolerances.normalization) {
        let n = env.sources();
        let beta = args
            .tuncel_beta
            .clone()
            .unwrap_or_else(|| vec![1.0 / n as f64; n]);
        let polygon = tuncel_slice(
            &env.model,
            &beta,
            &fixed,
            &TuncelOptions::default(),
            args.columns.max(2),
        )
        .map_err(|e| invalid(e.into()))?;
        families.push((SliceFamily::Tuncel, polygon));
    } else {
        eprintln!("note: fixed-proportion family needs independent sources in the classical setup; omitted");
    }
    let mut w = csv::Writer::from_writer(sink(args.out.as_deref())?);
    w.write_record(["x", "y", "family"])?;
    for (family, polygon) in families {
        for [x, y] in polygon {
            w.write_record([x.to_string(), y.to_string(), family.label().to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn is_chernoff_form(env: &Environment) -> bool {
    let n = env.sources();
    env.availability.sets() == [SourceSet::full(n)]
        && env.actions == aseq_core::ActionSpace::singletons(n)
        && env.budgets.is_empty()
}

/// Selection frequencies on disk: `beta[m][a][z]`, actions in model order
/// with the empty action first.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BetaFile {
    beta: Vec<Vec<Vec<f64>>>,
}

fn load_betas(spec: &str, artifacts: &Artifacts) -> Result<Vec<SelectionFrequency>, Failure> {
    if spec == "auto" {
        return Ok(artifacts.auto_betas()?);
    }
    let path = Path::new(spec);
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(usage)?;
    let file: BetaFile = serde_json::from_str(&text)
        .with_context(|| format!("invalid selection-frequency file {}", path.display()))
        .map_err(invalid)?;
    let env = &artifacts.env;
    let (na, nz) = (env.actions.len(), env.availability.len());
    if file.beta.len() != env.hypotheses() {
        return Err(invalid(anyhow!(
            "expected {} selection frequencies, got {}",
            env.hypotheses(),
            file.beta.len()
        )));
    }
    file.beta
        .iter()
        .enumerate()
        .map(|(m, rows)| {
            if rows.len() != na || rows.iter().any(|r| r.len() != nz) {
                return Err(invalid(anyhow!(
                    "selection frequency {m} must be {na} actions by {nz} availability sets"
                )));
            }
            let values = rows.iter().flatten().copied().collect();
            SelectionFrequency::from_values(na, nz, values).map_err(|e| invalid(e.into()))
        })
        .collect()
}

struct Prepared {
    artifacts: Artifacts,
    betas: Vec<SelectionFrequency>,
    config: ExperimentConfig,
}

fn prepare(args: &ExperimentArgs) -> Result<Prepared, Failure> {
    let env = load_environment(&args.model)?;
    let artifacts = Artifacts::new(env)?;
    let betas = load_betas(&args.beta, &artifacts)?;
    let h = artifacts.env.hypotheses();
    let truths = if args.truth == "all" {
        (0..h).collect()
    } else {
        vec![args
            .truth
            .parse::<usize>()
            .ok()
            .filter(|&t| t < h)
            .ok_or_else(|| usage(anyhow!("--truth must be `all` or a hypothesis in 0..{h}")))?]
    };
    let mut config = ExperimentConfig::new(args.t_grid.clone(), truths, args.trials, args.seed);
    config.confidence = args.confidence;
    config.max_steps = args.max_steps;
    config.options = ParamOptions {
        epsilon: args.epsilon,
        force_adaptive: args.force_adaptive,
    };
    Ok(Prepared {
        artifacts,
        betas,
        config,
    })
}

fn run(prepared: &Prepared) -> Result<ExperimentReport, Failure> {
    let report = estimate_errors(&prepared.artifacts, &prepared.betas, &prepared.config)?;
    for cell in report.cells.iter().filter(|c| c.forced) {
        eprintln!(
            "note: T = {} runs the adaptive test below its natural range (forced)",
            cell.t
        );
    }
    Ok(report)
}

fn simulate(args: &ExperimentArgs, out: Option<&Path>, summary: Option<&Path>) -> Outcome {
    let prepared = prepare(args)?;
    let report = run(&prepared)?;
    let mut w = csv::Writer::from_writer(sink(out)?);
    let mut header: Vec<String> = [
        "T", "truth", "declared", "count", "pi_hat", "ci_lo", "ci_hi", "mean_tau",
    ]
    .map(String::from)
    .to_vec();
    header.extend((1..=report.budgets.len()).map(|i| format!("budget_{i}_usage")));
    let sources = prepared.artifacts.env.sources();
    header.extend((1..=sources).map(|j| format!("source_{j}_usage")));
    header.extend(["invalid_fraction".into(), "regime".into()]);
    w.write_record(&header)?;
    for c in &report.cells {
        for m in 0..report.hypotheses {
            let mut row = vec![
                c.t.to_string(),
                c.truth.to_string(),
                m.to_string(),
                c.declared[m].to_string(),
                c.pi_hat[m].to_string(),
                c.pi_ci[m].0.to_string(),
                c.pi_ci[m].1.to_string(),
                c.mean_tau.to_string(),
            ];
            row.extend(c.budget_usage.iter().map(f64::to_string));
            row.extend(c.source_usage.iter().map(f64::to_string));
            row.push(c.invalid_fraction().to_string());
            row.push(c.regime.number().to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    if let Some(path) = summary {
        write_json(&report, Some(path))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct FitJson {
    #[serde(flatten)]
    entry: ExponentEntry,
    /// `e*_{m|θ}(β^m)`, the exponent the selection frequencies aim for.
    analytic_bound: f64,
}

#[derive(Serialize)]
struct ExponentsJson {
    fits: Vec<FitJson>,
    constraints: Vec<ConstraintCheck>,
    regimes: Vec<(f64, u8)>,
}

fn exponents(args: &ExperimentArgs, out: Option<&Path>) -> Outcome {
    let prepared = prepare(args)?;
    let report = run(&prepared)?;
    let table = &prepared.artifacts.table;
    let fits = fit_exponents(&report)
        .into_iter()
        .map(|entry| FitJson {
            analytic_bound: table.exponent(
                &prepared.betas[entry.declared],
                entry.declared,
                entry.truth,
            ),
            entry,
        })
        .collect();
    let mut regimes: Vec<(f64, u8)> = report
        .cells
        .iter()
        .map(|c| (c.t, c.regime.number()))
        .collect();
    regimes.dedup();
    let json = ExponentsJson {
        fits,
        constraints: verify_constraints(&report, 0.99),
        regimes,
    };
    write_json(&json, out)
}
