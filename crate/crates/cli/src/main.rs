//! `trimap` command-line driver.
//!
//! Exit codes: 0 on success, 1 on usage or input errors, 2 on numerical
//! failures. Failures print `ERROR <code> <detail>` on stderr.

mod settings;
mod targets;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use trimap::bod::{self, ConditionVia, MomentRow, MOMENT_COLUMNS};
use trimap::conditioning::condition;
use trimap::diagnostics::{kl_variance_direct, kl_variance_inverse, log_normalizing_constant};
use trimap::direct::{build_direct, ConstraintMode, DirectBuildConfig, Integration};
use trimap::inverse::{build_inverse, gaussianity_check, regress_direct_from_pairs, InverseBuildConfig};
use trimap::io::{fmt_real, load_map, load_samples, map_to_string, save_samples, SampleHeader};
use trimap::map::{ComponentKind, Direction, MapTemplate, TriangularMap};
use trimap::mcmc::{preconditioned_sample, sample_target, AdaptiveConfig};
use trimap::quadrature::{sample_reference, Provenance, SampleSet};
use trimap::report::OptimizationReport;
use trimap::solver::push_inverse;
use trimap::target::TargetDensity;
use trimap::TrimapError;

use settings::Settings;
use targets::BuiltTarget;

#[derive(Parser, Debug)]
#[command(name = "trimap", version, about = "Monotone triangular transport maps")]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, env = "TRIMAP_THREADS")]
    threads: Option<usize>,

    /// `key = value` file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Increase log verbosity (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a direct map to an unnormalized target density.
    BuildDirect(BuildDirectArgs),
    /// Fit an inverse map to target samples.
    BuildInverse(BuildInverseArgs),
    /// Solve `map(x) = r` for every row `r` of a point file.
    Invert(InvertArgs),
    /// Draw samples from the map's pushforward of the standard normal.
    Sample(SampleArgs),
    /// Sample a conditional from a joint map with the conditioning block first.
    Condition(ConditionArgs),
    /// Report map diagnostics against a target.
    Diagnose(DiagnoseArgs),
    /// Adaptive Metropolis on a target, optionally preconditioned by a map.
    Mcmc(McmcArgs),
    /// Run the biochemical oxygen demand benchmark.
    BodBench(BodBenchArgs),
}

#[derive(Args, Debug)]
struct TargetArgs {
    /// `gaussian`, `banana`, `bod-posterior` or `cmd:<program> [args]`.
    #[arg(long)]
    target: Option<String>,
    /// Dimension for `gaussian` and `cmd:` targets.
    #[arg(long)]
    dim: Option<usize>,
    /// Comma-separated mean of the `gaussian` target.
    #[arg(long)]
    mean: Option<String>,
    /// Row-major comma-separated covariance of the `gaussian` target.
    #[arg(long)]
    cov: Option<String>,
    /// Curvature of the `banana` target.
    #[arg(long)]
    curvature: Option<f64>,
    /// Comma-separated data for `bod-posterior`.
    #[arg(long)]
    data: Option<String>,
}

#[derive(Args, Debug)]
struct BuildDirectArgs {
    #[command(flatten)]
    target: TargetArgs,
    /// Total degree of the map.
    #[arg(long)]
    degree: Option<usize>,
    /// `total`, `nomixed`, `diagonal` or `monotone`.
    #[arg(long)]
    kind: Option<String>,
    /// `gauss-hermite` or `monte-carlo`.
    #[arg(long)]
    integration: Option<String>,
    /// Gauss-Hermite points per dimension.
    #[arg(long)]
    order: Option<usize>,
    /// Monte Carlo sample size.
    #[arg(long)]
    nodes: Option<usize>,
    /// `auto`, `monotone` or `pointwise`.
    #[arg(long)]
    constraint: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    maxiter: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BuildInverseArgs {
    #[arg(long)]
    samples: PathBuf,
    #[arg(long)]
    degree: Option<usize>,
    /// `total`, `nomixed`, `diagonal`, `monotone` or `rbf`.
    #[arg(long)]
    kind: Option<String>,
    /// Number of radial basis functions for `--kind rbf`.
    #[arg(long)]
    rbf_count: Option<usize>,
    /// Reorder sample columns at ingestion, e.g. `5,6,0,1,2,3,4`.
    #[arg(long)]
    columns: Option<String>,
    /// Fit on the raw samples without per-coordinate standardization.
    #[arg(long)]
    no_standardize: bool,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    maxiter: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Also regress a direct map from `(S(y_i), y_i)` and write it here.
    #[arg(long)]
    regress_direct: Option<PathBuf>,
    /// Test the pushed-forward samples for standard normality.
    #[arg(long)]
    check_gaussianity: bool,
    /// z-score threshold of the normality test.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InvertArgs {
    #[arg(long)]
    map: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Root-solve tolerance for inverse maps.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args, Debug)]
struct ConditionArgs {
    #[arg(long)]
    map: PathBuf,
    /// Number of leading conditioning coordinates.
    #[arg(long)]
    ny: usize,
    /// Comma-separated conditioning values.
    #[arg(long)]
    ystar: String,
    #[arg(long)]
    samples: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    #[arg(long)]
    map: PathBuf,
    #[command(flatten)]
    target: TargetArgs,
    /// Target samples; required for inverse maps.
    #[arg(long)]
    samples: Option<PathBuf>,
    /// Gauss-Hermite points per dimension for direct maps.
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args, Debug)]
struct McmcArgs {
    #[command(flatten)]
    target: TargetArgs,
    #[arg(long)]
    steps: usize,
    #[arg(long)]
    burn: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Sample the pullback through this map and push the chain forward.
    #[arg(long)]
    precondition: Option<PathBuf>,
    /// Comma-separated start point (default: origin).
    #[arg(long)]
    start: Option<String>,
    /// Keep the initial proposal covariance fixed.
    #[arg(long)]
    no_adapt: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Experiment {
    Inverse,
    Direct,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Via {
    Inverse,
    Regressed,
}

#[derive(Args, Debug)]
struct BodBenchArgs {
    #[arg(long, value_enum)]
    experiment: Experiment,
    #[arg(long)]
    degree: usize,
    /// Joint training samples for the inverse experiment.
    #[arg(long)]
    samples: Option<usize>,
    /// Gauss-Hermite points per dimension for the direct experiment.
    #[arg(long)]
    order: Option<usize>,
    /// How the inverse experiment forms the conditional.
    #[arg(long, value_enum, default_value = "regressed")]
    via: Via,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    outdir: PathBuf,
}

/// Either a usage problem (exit 1) or a library error (exit 1 or 2).
#[derive(Debug)]
enum Failure {
    Usage(String),
    Library(TrimapError),
}

impl From<TrimapError> for Failure {
    fn from(e: TrimapError) -> Self {
        Failure::Library(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Library(e.into())
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        if n == 0 {
            return report_failure(usage("--threads must be positive"));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report_failure(f),
    }
}

fn report_failure(f: Failure) -> ExitCode {
    match f {
        Failure::Usage(msg) => {
            eprintln!("ERROR usage {msg}");
            eprintln!("run `trimap --help` for usage");
            ExitCode::from(1)
        }
        Failure::Library(e) => {
            eprintln!("ERROR {} {e}", e.code());
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    let settings = match &cli.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    let ctx = Context {
        settings,
        command_line: command_line(),
    };
    match &cli.command {
        Command::BuildDirect(a) => ctx.build_direct(a),
        Command::BuildInverse(a) => ctx.build_inverse(a),
        Command::Invert(a) => ctx.invert(a),
        Command::Sample(a) => ctx.sample(a),
        Command::Condition(a) => ctx.condition(a),
        Command::Diagnose(a) => ctx.diagnose(a),
        Command::Mcmc(a) => ctx.mcmc(a),
        Command::BodBench(a) => ctx.bod_bench(a),
    }
}

fn command_line() -> String {
    std::env::args().collect::<Vec<_>>().join(" ")
}

struct Context {
    settings: Settings,
    command_line: String,
}

impl Context {
    fn header(&self, seed: Option<u64>) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# trimap {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "# command {}", self.command_line);
        match seed {
            Some(seed) => {
                let _ = writeln!(s, "# seed {seed}");
            }
            None => {
                let _ = writeln!(s, "# seed none");
            }
        }
        s
    }

    fn write_map(&self, map: &TriangularMap, path: &Path, seed: Option<u64>) -> CliResult<()> {
        fs::write(path, self.header(seed) + &map_to_string(map))?;
        Ok(())
    }

    fn write_text(&self, path: &Path, body: &str, seed: Option<u64>) -> CliResult<()> {
        fs::write(path, self.header(seed) + body)?;
        Ok(())
    }

    fn write_samples(&self, path: &Path, samples: &SampleSet, columns: Option<Vec<String>>, notes: Vec<String>) -> CliResult<()> {
        let header = SampleHeader {
            command: Some(self.command_line.clone()),
            columns,
            notes,
        };
        save_samples(path, samples, &header)?;
        Ok(())
    }

    fn target(&self, args: &TargetArgs) -> CliResult<BuiltTarget> {
        let name = self
            .settings
            .string(args.target.clone(), "target")
            .ok_or_else(|| usage("--target is required"))?;
        let spec = targets::TargetSpec {
            name,
            dim: self.settings.parse(args.dim, "target.dim")?,
            mean: self.settings.list(args.mean.as_deref(), "target.mean")?,
            cov: self.settings.list(args.cov.as_deref(), "target.cov")?,
            curvature: self.settings.parse(args.curvature, "target.curvature")?,
            data: self.settings.list(args.data.as_deref(), "target.data")?,
        };
        targets::build(&spec)
    }

    fn template(&self, kind: Option<&str>, degree: usize, rbf_count: Option<usize>) -> CliResult<MapTemplate> {
        let kind = kind.unwrap_or("total");
        Ok(match kind {
            "monotone" => MapTemplate::monotone(degree),
            "rbf" => MapTemplate::rbf(rbf_count.ok_or_else(|| usage("--kind rbf needs --rbf-count"))?),
            other => match ComponentKind::parse(other)? {
                ComponentKind::Polynomial(set) => MapTemplate::polynomial(set, degree),
                _ => return Err(usage(format!("unknown map kind `{other}`"))),
            },
        })
    }

    fn build_direct(&self, a: &BuildDirectArgs) -> CliResult<()> {
        let s = &self.settings;
        let target = self.target(&a.target)?;
        let degree = s.parse(a.degree, "map.degree")?.unwrap_or(1);
        let kind = s.string(a.kind.clone(), "map.kind");
        let template = self.template(kind.as_deref(), degree, None)?;
        let seed = s.parse(a.seed, "seed")?.unwrap_or(0);
        let integration = match s.string(a.integration.clone(), "integration.kind").as_deref() {
            None | Some("gauss-hermite") | Some("gh") => Integration::GaussHermite {
                order: s.parse(a.order, "integration.order")?.unwrap_or(10),
            },
            Some("monte-carlo") | Some("mc") => Integration::MonteCarlo {
                size: s.parse(a.nodes, "integration.samples")?.unwrap_or(10_000),
                seed,
            },
            Some(other) => return Err(usage(format!("unknown integration kind `{other}`"))),
        };
        let mut config = DirectBuildConfig::new(template, integration);
        config.constraint = match s.string(a.constraint.clone(), "map.constraint").as_deref() {
            None | Some("auto") => config.constraint,
            Some("monotone") => ConstraintMode::MonotoneParam,
            Some("pointwise") => ConstraintMode::PointwiseAtNodes,
            Some(other) => return Err(usage(format!("unknown constraint mode `{other}`"))),
        };
        if let Some(tol) = s.parse(a.tol, "optimizer.tol")? {
            config.optimizer.gradient_tol = tol;
        }
        if let Some(maxit) = s.parse(a.maxiter, "optimizer.maxiter")? {
            config.optimizer.max_iterations = maxit;
        }
        // Quadrature builds use no randomness.
        let used_seed = matches!(config.integration, Integration::MonteCarlo { .. }).then_some(seed);
        let (map, report) = build_direct(&target, &config)?;
        self.write_map(&map, &a.out, used_seed)?;
        if let Some(path) = &a.report {
            self.write_text(path, &report.to_text(), used_seed)?;
        }
        check_converged(&report)
    }

    fn build_inverse(&self, a: &BuildInverseArgs) -> CliResult<()> {
        let s = &self.settings;
        let mut samples = load_samples(&a.samples)?;
        if let Some(cols) = s.list(a.columns.as_deref(), "samples.columns")? {
            let idx = cols
                .iter()
                .map(|c| if *c >= 0.0 && c.fract() == 0.0 { Ok(*c as usize) } else { Err(usage(format!("bad column index {c}"))) })
                .collect::<CliResult<Vec<usize>>>()?;
            samples = samples.select_columns(&idx)?;
        }
        let degree = s.parse(a.degree, "map.degree")?.unwrap_or(1);
        let kind = s.string(a.kind.clone(), "map.kind");
        let rbf_count = s.parse(a.rbf_count, "map.rbf_count")?;
        let template = self.template(kind.as_deref(), degree, rbf_count)?;
        let mut config = InverseBuildConfig::new(template.clone());
        config.standardize = !(a.no_standardize || s.flag("map.no_standardize")?);
        if let Some(tol) = s.parse(a.tol, "optimizer.tol")? {
            config.optimizer.gradient_tol = tol;
        }
        if let Some(maxit) = s.parse(a.maxiter, "optimizer.maxiter")? {
            config.optimizer.max_iterations = maxit;
        }
        let seed = samples.seed();
        let (map, report) = build_inverse(&samples, &config)?;
        self.write_map(&map, &a.out, seed)?;

        let mut text = report.to_text();
        let check = a.check_gaussianity || s.flag("check_gaussianity")?;
        let mut gaussianity_failed = false;
        if check || a.regress_direct.is_some() {
            let mut pushed = Vec::with_capacity(samples.len() * samples.dim());
            for y in samples.rows() {
                pushed.extend(map.evaluate(y)?);
            }
            let pushed = SampleSet::new(samples.dim(), pushed, Provenance::Pushforward)?;
            if check {
                let threshold = s.parse(a.threshold, "gaussianity.threshold")?.unwrap_or(4.0);
                let g = gaussianity_check(&pushed, threshold);
                text.push_str(&gaussianity_text(&g));
                gaussianity_failed = !g.passed;
            }
            if let Some(path) = &a.regress_direct {
                let (direct, rep) = regress_direct_from_pairs(&pushed, &samples, &template, &config.optimizer)?;
                self.write_map(&direct, path, seed)?;
                let _ = writeln!(text, "regression_objective = {}", fmt_real(rep.objective));
                let _ = writeln!(text, "regression_violations = {}", rep.violations);
            }
        }
        if let Some(path) = &a.report {
            self.write_text(path, &text, seed)?;
        } else if check {
            print!("{text}");
        }
        if gaussianity_failed {
            log::warn!("pushed-forward samples fail the normality check");
        }
        check_converged(&report)
    }

    fn invert(&self, a: &InvertArgs) -> CliResult<()> {
        let map = load_map(&a.map)?;
        let points = load_samples(&a.input)?;
        let tol = self.settings.parse(a.tol, "solver.tol")?.unwrap_or(1e-10);
        let batch = push_inverse(&map, &points, tol)?;
        let mut notes = vec![format!("inverted {} of {} rows", batch.indices.len(), points.len())];
        for (i, e) in &batch.failures {
            notes.push(format!("failed row {i}: {} {e}", e.code()));
        }
        let mut out = batch.samples.clone();
        if let Some(seed) = points.seed() {
            out = out.with_seed(seed);
        }
        self.write_samples(&a.out, &out, None, notes)?;
        match batch.failures.into_iter().next() {
            Some((_, e)) => Err(e.into()),
            None => Ok(()),
        }
    }

    fn sample(&self, a: &SampleArgs) -> CliResult<()> {
        let map = load_map(&a.map)?;
        let seed = self.settings.parse(a.seed, "seed")?.unwrap_or(0);
        if a.n == 0 {
            return Err(usage("--n must be positive"));
        }
        let reference = sample_reference(a.n, map.dim(), seed)?;
        let out = match map.direction() {
            Direction::Direct => {
                let mut flat = Vec::with_capacity(a.n * map.dim());
                for x in reference.rows() {
                    flat.extend(map.evaluate(x)?);
                }
                SampleSet::new(map.dim(), flat, Provenance::Pushforward)?
            }
            Direction::Inverse => {
                let tol = self.settings.parse(a.tol, "solver.tol")?.unwrap_or(1e-10);
                let batch = push_inverse(&map, &reference, tol)?;
                if let Some((_, e)) = batch.failures.into_iter().next() {
                    return Err(e.into());
                }
                batch.samples
            }
        };
        self.write_samples(&a.out, &out.with_seed(seed), None, Vec::new())
    }

    fn condition(&self, a: &ConditionArgs) -> CliResult<()> {
        let map = load_map(&a.map)?;
        let y_star = settings::parse_list(&a.ystar).map_err(usage)?;
        let seed = self.settings.parse(a.seed, "seed")?.unwrap_or(0);
        let tol = self.settings.parse(a.tol, "solver.tol")?.unwrap_or(1e-12);
        let cond = condition(&map, a.ny, &y_star, tol)?;
        let samples = cond.sample(a.samples, seed)?;
        let star: Vec<String> = cond.x_star().iter().map(|v| fmt_real(*v)).collect();
        self.write_samples(&a.out, &samples, None, vec![format!("x_star {}", star.join(" "))])
    }

    fn diagnose(&self, a: &DiagnoseArgs) -> CliResult<()> {
        let map = load_map(&a.map)?;
        let target = self.target(&a.target)?;
        let mut text = String::new();
        let _ = writeln!(text, "direction = {}", map.direction().as_str());
        let _ = writeln!(text, "dim = {}", map.dim());
        match map.direction() {
            Direction::Direct => {
                let order = self.settings.parse(a.order, "integration.order")?.unwrap_or(10);
                let rule = Integration::GaussHermite { order }.rule(map.dim())?;
                let violations = map.monotonicity_violations((0..rule.len()).map(|i| rule.node(i)));
                let _ = writeln!(text, "nodes = {}", rule.len());
                let _ = writeln!(text, "monotonicity_violations = {violations}");
                if violations == 0 {
                    let _ = writeln!(text, "kl_variance = {}", fmt_real(kl_variance_direct(&map, &target, &rule)?));
                    let _ = writeln!(text, "log_normalizing_constant = {}", fmt_real(log_normalizing_constant(&map, &target, &rule)?));
                }
            }
            Direction::Inverse => {
                let path = a.samples.as_ref().ok_or_else(|| usage("inverse maps need --samples"))?;
                let samples = load_samples(path)?;
                let violations = map.monotonicity_violations(samples.rows());
                let _ = writeln!(text, "samples = {}", samples.len());
                let _ = writeln!(text, "monotonicity_violations = {violations}");
                if violations == 0 {
                    let _ = writeln!(text, "kl_variance = {}", fmt_real(kl_variance_inverse(&map, &samples, &target)?));
                }
                let mut pushed = Vec::with_capacity(samples.len() * samples.dim());
                for y in samples.rows() {
                    pushed.extend(map.evaluate(y)?);
                }
                let pushed = SampleSet::new(samples.dim(), pushed, Provenance::Pushforward)?;
                let threshold = self.settings.parse(a.threshold, "gaussianity.threshold")?.unwrap_or(4.0);
                text.push_str(&gaussianity_text(&gaussianity_check(&pushed, threshold)));
            }
        }
        self.write_text(&a.report, &text, None)
    }

    fn mcmc(&self, a: &McmcArgs) -> CliResult<()> {
        let target = self.target(&a.target)?;
        let seed = self.settings.parse(a.seed, "seed")?.unwrap_or(0);
        if a.steps <= a.burn {
            return Err(usage("--steps must exceed --burn"));
        }
        let mut config = AdaptiveConfig::new(a.steps, a.burn, seed);
        config.adapt = !a.no_adapt;
        let (samples, acceptance, ess) = match &a.precondition {
            Some(path) => {
                let map = load_map(path)?;
                let r = preconditioned_sample(&map, &target, &config)?;
                (r.samples, r.reference_chain.acceptance_rate, r.reference_chain.ess)
            }
            None => {
                let start = match &a.start {
                    Some(s) => settings::parse_list(s).map_err(usage)?,
                    None => vec![0.0; target.dim()],
                };
                let r = sample_target(&target, &start, &config)?;
                (r.chain, r.acceptance_rate, r.ess)
            }
        };
        let ess: Vec<String> = ess.iter().map(|v| fmt_real(*v)).collect();
        let notes = vec![format!("acceptance_rate {}", fmt_real(acceptance)), format!("ess {}", ess.join(" "))];
        self.write_samples(&a.out, &samples, None, notes)
    }

    fn bod_bench(&self, a: &BodBenchArgs) -> CliResult<()> {
        let seed = self.settings.parse(a.seed, "seed")?.unwrap_or(2024);
        fs::create_dir_all(&a.outdir)?;
        let p = a.degree;
        let theta_columns = Some(vec!["theta1".to_string(), "theta2".to_string()]);
        match a.experiment {
            Experiment::Inverse => {
                let m = self.settings.parse(a.samples, "samples")?.unwrap_or(5000);
                let via = match a.via {
                    Via::Inverse => ConditionVia::InverseMap,
                    Via::Regressed => ConditionVia::RegressedDirect,
                };
                let e = bod::run_inverse_experiment(m, p, seed, via)?;
                log::info!(
                    "offline {:.2} s + {:.2} s, online {:.2} s",
                    e.build_seconds,
                    e.regression_seconds,
                    e.online_seconds
                );
                let label = format!("p{p}_m{m}");
                self.write_moments(&a.outdir.join(format!("moments_{label}.txt")), &e.moments, &format!("p={p}"), m, seed)?;
                self.write_map(&e.inverse_map, &a.outdir.join(format!("inverse_{label}.trimap")), Some(seed))?;
                if let Some(t) = &e.direct_map {
                    self.write_map(t, &a.outdir.join(format!("direct_{label}.trimap")), Some(seed))?;
                }
                let mut text = e.inverse_report.to_text();
                let _ = writeln!(text, "build_seconds = {:.3}", e.build_seconds);
                let _ = writeln!(text, "regression_seconds = {:.3}", e.regression_seconds);
                let _ = writeln!(text, "online_seconds = {:.3}", e.online_seconds);
                self.write_text(&a.outdir.join(format!("report_{label}.txt")), &text, Some(seed))?;
                self.write_samples(&a.outdir.join(format!("conditional_{label}.txt")), &e.conditional, theta_columns, Vec::new())
            }
            Experiment::Direct => {
                let order = self.settings.parse(a.order, "integration.order")?.unwrap_or(10);
                let e = bod::run_direct_experiment(p, order, seed)?;
                let label = format!("p{p}");
                self.write_moments(&a.outdir.join(format!("moments_direct_{label}.txt")), &e.moments, &format!("direct p={p}"), 0, seed)?;
                self.write_map(&e.map, &a.outdir.join(format!("direct_{label}.trimap")), Some(seed))?;
                let mut text = e.report.to_text();
                let _ = writeln!(text, "build_seconds = {:.3}", e.build_seconds);
                self.write_text(&a.outdir.join(format!("report_direct_{label}.txt")), &text, Some(seed))?;
                self.write_samples(&a.outdir.join(format!("pushforward_{label}.txt")), &e.pushforward, theta_columns, Vec::new())?;
                check_converged(&e.report)
            }
        }
    }

    fn write_moments(&self, path: &Path, row: &MomentRow, label: &str, m: usize, seed: u64) -> CliResult<()> {
        let mut text = String::new();
        let _ = writeln!(text, "map_type training_samples {}", MOMENT_COLUMNS.join(" "));
        let vals: Vec<String> = row.as_array().iter().map(|v| fmt_real(*v)).collect();
        let _ = writeln!(text, "{} {m} {}", label.replace(' ', "_"), vals.join(" "));
        self.write_text(path, &text, Some(seed))
    }
}

fn check_converged(report: &OptimizationReport) -> CliResult<()> {
    if report.converged {
        return Ok(());
    }
    let detail = if report.unconverged_components.is_empty() {
        format!("optimizer stopped after {} iterations", report.iterations)
    } else {
        let list: Vec<String> = report.unconverged_components.iter().map(|k| k.to_string()).collect();
        format!("components {} did not converge", list.join(","))
    };
    Err(TrimapError::NonConvergence(detail).into())
}

fn gaussianity_text(g: &trimap::inverse::GaussianityReport) -> String {
    let join = |v: &[f64]| v.iter().map(|x| fmt_real(*x)).collect::<Vec<_>>().join(" ");
    let mut s = String::new();
    let _ = writeln!(s, "gaussianity_threshold = {}", fmt_real(g.threshold));
    let _ = writeln!(s, "gaussianity_mean = {}", join(&g.means));
    let _ = writeln!(s, "gaussianity_variance = {}", join(&g.variances));
    let _ = writeln!(s, "gaussianity_skewness = {}", join(&g.skewness));
    let _ = writeln!(s, "gaussianity_excess_kurtosis = {}", join(&g.excess_kurtosis));
    let _ = writeln!(s, "gaussianity_mean_z = {}", join(&g.mean_z));
    let _ = writeln!(s, "gaussianity_variance_z = {}", join(&g.variance_z));
    let _ = writeln!(s, "gaussianity_skewness_z = {}", join(&g.skewness_z));
    let _ = writeln!(s, "gaussianity_kurtosis_z = {}", join(&g.kurtosis_z));
    let max_corr_z = g.correlations.iter().map(|c| c.3.abs()).fold(0.0, f64::max);
    let _ = writeln!(s, "gaussianity_max_correlation_z = {}", fmt_real(max_corr_z));
    let _ = writeln!(s, "gaussianity_ks_distance = {}", join(&g.ks_distance));
    let _ = writeln!(s, "gaussianity_passed = {}", g.passed);
    s
}
