//! `kglab`: count solutions, compute region volumes, and run the
//! convergence, lattice-sampling and sandwich experiments.

mod config;
mod svg;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use kglab_core::approx_fn::ApproxFunction;
use kglab_core::counting::{
    count_solutions_report, count_via_lattice_points, CongruenceClass, ProblemInstance, ThetaMatrix,
};
use kglab_core::experiments::{median_ratio_path, run_to_files, ExperimentRecord};
use kglab_core::geometry::{
    beta_bound, default_perturbation_scale, sample_h_eps, sandwich_check, AxisBox, FamilyParams,
    PerturbationElement, Region,
};
use kglab_core::lattice_space::{variance_experiment, write_region_stats_file, SamplerConfig, DEFAULT_PRIME};
use kglab_core::norms::NormSpec;
use kglab_core::Error;
use serde::Serialize;

const SEED_ENV: &str = "KGLAB_SEED";

#[derive(Parser)]
#[command(name = "kglab", version, about = "Congruence-constrained Diophantine counting and lattice experiments")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Count solutions (p, q) for one ϑ and T.
    Count(CountArgs),
    /// Exact volume of a region, optionally with a Monte Carlo estimate.
    Volume(VolumeArgs),
    /// Convergence run from a JSON config; writes CSV and a .meta.json sidecar.
    Experiment(ExperimentArgs),
    /// Mean and variance of lattice point counts in nested boxes.
    Variance(VarianceArgs),
    /// Check that sampled perturbations keep h·E_T between the envelopes.
    Sandwich(SandwichArgs),
    /// Line chart of two CSV columns as SVG.
    Plot(PlotArgs),
}

#[derive(Args)]
struct SystemArgs {
    /// Dimension of p.
    #[arg(long)]
    m: usize,
    /// Dimension of q.
    #[arg(long)]
    n: usize,
    /// Norm on the p-space: sup, lp:<p> or scaled:<f>:<norm>.
    #[arg(long, default_value = "sup")]
    norm1: String,
    /// Norm on the q-space; must take minimum 1 on nonzero integer vectors.
    #[arg(long, default_value = "sup")]
    norm2: String,
    /// Approximating function: pow:c:s, powlog:c:s, const:c or table:<csv>.
    #[arg(long)]
    psi: String,
}

impl SystemArgs {
    fn norms(&self) -> Result<(NormSpec, NormSpec, ApproxFunction), Failure> {
        Ok((
            NormSpec::parse(&self.norm1, self.m)?,
            NormSpec::parse(&self.norm2, self.n)?,
            ApproxFunction::parse(&self.psi)?,
        ))
    }
}

#[derive(Args)]
struct CountArgs {
    #[command(flatten)]
    system: SystemArgs,
    /// ϑ as "r11,r12;r21,r22" or @path to a file with one row per line.
    #[arg(long)]
    theta: String,
    /// Upper bound T > 1 on ν₂(q)^n.
    #[arg(long = "T")]
    t: f64,
    /// Modulus N of the congruence condition.
    #[arg(long = "mod", default_value_t = 1)]
    modulus: u64,
    /// Residues v, comma separated, length m + n (default all zero).
    #[arg(long)]
    res: Option<String>,
    /// Also count lattice points of u(ϑ)(NZ^d + v) in E_T and compare.
    #[arg(long)]
    oracle: bool,
    /// Print a JSON object instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct VolumeArgs {
    #[command(flatten)]
    system: SystemArgs,
    /// Region parameter T > 1.
    #[arg(long = "T")]
    t: f64,
    /// ET, Eminus:<eps>, Eprime:<eps>, Eplus:<eps>, C0 or box:l,h;l,h;...
    #[arg(long, default_value = "ET")]
    region: String,
    /// Monte Carlo samples (0 skips the estimate).
    #[arg(long, default_value_t = 0)]
    samples: u64,
    /// Seed for the Monte Carlo estimate; KGLAB_SEED overrides it.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Records CSV; metadata goes to the same path with extension .meta.json.
    #[arg(long)]
    out: PathBuf,
    /// Also write a ratio-vs-T chart.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args)]
struct VarianceArgs {
    /// Lattice dimension.
    #[arg(long)]
    d: usize,
    /// Modulus N of the congruence condition.
    #[arg(long = "mod", default_value_t = 1)]
    modulus: u64,
    /// Residues v, comma separated, length d (default all zero).
    #[arg(long)]
    res: Option<String>,
    /// Hecke prime.
    #[arg(long, default_value_t = DEFAULT_PRIME)]
    prime: u64,
    /// Number of sampled affine lattices.
    #[arg(long, default_value_t = 2000)]
    samples: usize,
    /// Box volumes, comma separated; boxes are [1, 1 + vol^{1/d})^d.
    #[arg(long)]
    volumes: String,
    /// Seed; KGLAB_SEED overrides it.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SandwichArgs {
    #[command(flatten)]
    system: SystemArgs,
    /// ε in (0, 1/2).
    #[arg(long)]
    eps: f64,
    /// T values, comma separated, each > 10.
    #[arg(long = "T")]
    t: String,
    /// Sample points per check and direction.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    /// Number of sampled perturbations h.
    #[arg(long, default_value_t = 50)]
    elements: usize,
    /// Check the identity instead of sampled elements.
    #[arg(long, conflicts_with = "beta_factor")]
    identity: bool,
    /// Check one element whose shear is this multiple of the admissible bound.
    #[arg(long)]
    beta_factor: Option<f64>,
    /// Seed; KGLAB_SEED overrides it.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Per-check CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Input CSV with a header row.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output SVG.
    #[arg(long)]
    out: PathBuf,
    /// Column for the horizontal axis.
    #[arg(long)]
    x: String,
    /// Column for the vertical axis.
    #[arg(long)]
    y: String,
    /// Column splitting rows into series (default theta_id when present).
    #[arg(long)]
    group: Option<String>,
    /// Logarithmic horizontal axis.
    #[arg(long)]
    logx: bool,
    /// Logarithmic vertical axis.
    #[arg(long)]
    logy: bool,
    /// Dashed reference line at this y.
    #[arg(long)]
    reference: Option<f64>,
    /// Chart title.
    #[arg(long, default_value = "")]
    title: String,
}

/// A failed run and its exit code.
enum Failure {
    Usage(String),
    Oracle(String),
    Violation(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Oracle(_) => 3,
            Failure::Violation(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Oracle(m) | Failure::Violation(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::DimensionMismatch { .. }
            | Error::InvalidParameter(_)
            | Error::Parse { .. }
            | Error::NotNormalized { .. }
            | Error::UnsupportedRegion(_)
            | Error::InsufficientData { .. } => Failure::Usage(msg),
            Error::OracleMismatch(_) => Failure::Oracle(msg),
            _ => Failure::Runtime(msg),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// The seed to use and where it came from.
fn resolve_seed(flag: u64) -> Result<(u64, &'static str), Failure> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(|v| (v, "environment"))
            .map_err(|_| usage(format!("{SEED_ENV} must be an unsigned integer, got {s:?}"))),
        Err(_) => Ok((flag, "arguments")),
    }
}

fn parse_residues(text: Option<&str>, d: usize, modulus: u64) -> Result<CongruenceClass, Failure> {
    match text {
        None => Ok(CongruenceClass::new(vec![0; d], modulus)?),
        Some(t) => {
            let c = CongruenceClass::parse(t, modulus)?;
            if c.dim() != d {
                return Err(usage(format!("--res needs {d} entries, got {}", c.dim())));
            }
            Ok(c)
        }
    }
}

fn parse_list(text: &str, flag: &str) -> Result<Vec<f64>, Failure> {
    text.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| usage(format!("{flag}: cannot parse {s:?} as a number"))))
        .collect()
}

fn run_count(a: &CountArgs) -> Result<(), Failure> {
    let (nu1, nu2, psi) = a.system.norms()?;
    let cong = parse_residues(a.res.as_deref(), a.system.m + a.system.n, a.modulus)?;
    let inst = ProblemInstance::new(nu1, nu2, psi, cong)?;
    let theta = match a.theta.strip_prefix('@') {
        Some(path) => ThetaMatrix::from_file(Path::new(path), a.system.m, a.system.n)?,
        None => ThetaMatrix::parse(&a.theta, a.system.m, a.system.n)?,
    };
    let report = count_solutions_report(&inst, &theta, a.t)?;
    let lattice = if a.oracle {
        Some(count_via_lattice_points(&inst, &theta, a.t)?)
    } else {
        None
    };

    #[derive(Serialize)]
    struct Out {
        count: u64,
        near_ties: u64,
        #[serde(skip_serializing_if = "Option::is_none")]
        lattice_count: Option<u64>,
        below_dimension_hypothesis: bool,
    }
    if a.json {
        let out = Out {
            count: report.count,
            near_ties: report.near_ties,
            lattice_count: lattice,
            below_dimension_hypothesis: inst.below_dimension_hypothesis(),
        };
        println!("{}", serde_json::to_string(&out).expect("plain struct serializes"));
    } else {
        println!("{}", report.count);
        if let Some(l) = lattice {
            println!("lattice points: {l}");
        }
        if report.near_ties > 0 {
            eprintln!("warning: {} near ties at the ψ boundary", report.near_ties);
        }
        if inst.below_dimension_hypothesis() {
            eprintln!("warning: d = {} is below 3", inst.d());
        }
    }
    match lattice {
        Some(l) if l != report.count => Err(Failure::Oracle(format!(
            "direct count {} differs from lattice point count {l}",
            report.count
        ))),
        _ => Ok(()),
    }
}

fn run_volume(a: &VolumeArgs) -> Result<(), Failure> {
    let (nu1, nu2, psi) = a.system.norms()?;
    let params = Arc::new(FamilyParams::new(nu1, nu2, psi, a.t)?);
    let region = Region::parse(&a.region, Some(params))?;
    let exact = region.volume()?;
    println!("volume {exact}");
    if a.samples > 0 {
        let (seed, _) = resolve_seed(a.seed)?;
        let est = region.estimate_volume(a.samples, seed);
        println!("estimate {} ± {}", est.value, est.std_error);
        println!("z {}", est.z_score(exact));
    }
    Ok(())
}

fn ratio_chart(records: &[ExperimentRecord], path: &Path) -> Result<(), Failure> {
    let mut series: Vec<svg::Series> = Vec::new();
    for r in records {
        if series.last().map(|s: &svg::Series| s.label != r.theta_id.to_string()).unwrap_or(true) {
            series.push(svg::Series {
                label: r.theta_id.to_string(),
                points: Vec::new(),
            });
        }
        series.last_mut().expect("just pushed").points.push((r.t, r.ratio));
    }
    let chart = svg::Chart {
        title: "count / predicted".into(),
        x_label: "T".into(),
        y_label: "ratio".into(),
        logx: true,
        logy: false,
        reference_y: Some(1.0),
    };
    let text = svg::render(&chart, &series).map_err(usage)?;
    std::fs::write(path, text)?;
    Ok(())
}

fn run_experiment(a: &ExperimentArgs) -> Result<(), Failure> {
    let file = config::ConfigFile::load(&a.config)?;
    let env_seed = match std::env::var(SEED_ENV) {
        Ok(_) => Some(resolve_seed(file.seed)?.0),
        Err(_) => None,
    };
    let source = if env_seed.is_some() { "environment" } else { "config" };
    let cfg = file.into_run_config(env_seed)?;
    let out = run_to_files(&cfg, &a.out, source)?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(p) = &a.plot {
        ratio_chart(&out.records, p)?;
    }
    if let Some((t, med)) = median_ratio_path(&out.records).last() {
        println!("median ratio at T = {t}: {med}");
    }
    println!("{} records written to {}", out.records.len(), a.out.display());
    Ok(())
}

fn run_variance(a: &VarianceArgs) -> Result<(), Failure> {
    let volumes = parse_list(&a.volumes, "--volumes")?;
    if volumes.is_empty() {
        return Err(usage("--volumes needs at least one volume"));
    }
    if volumes.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(usage("--volumes must be non-negative"));
    }
    let cong = parse_residues(a.res.as_deref(), a.d, a.modulus)?;
    let (seed, _) = resolve_seed(a.seed)?;
    let regions = volumes
        .iter()
        .map(|v| AxisBox::cube(1.0, 1.0 + v.powf(1.0 / a.d as f64), a.d).map(Region::Box))
        .collect::<Result<Vec<_>, _>>()?;
    let cfg = SamplerConfig {
        dim: a.d,
        prime: a.prime,
        samples: a.samples,
        seed,
    };
    let stats = variance_experiment(&cfg, &cong, &regions)?;
    println!("region_id volume mean std_error variance ratio");
    for s in &stats {
        println!(
            "{} {} {} {} {} {}",
            s.region_id, s.volume, s.mean_count, s.std_error, s.variance, s.ratio
        );
    }
    if let Some(path) = &a.out {
        write_region_stats_file(path, &stats)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SandwichRow {
    element: usize,
    eps: f64,
    #[serde(rename = "T")]
    t: f64,
    outer_checked: usize,
    outer_violations: usize,
    inner_checked: usize,
    inner_violations: usize,
    seed: u64,
}

fn run_sandwich(a: &SandwichArgs) -> Result<(), Failure> {
    let (nu1, nu2, psi) = a.system.norms()?;
    let ts = parse_list(&a.t, "--T")?;
    if ts.is_empty() {
        return Err(usage("--T needs at least one value"));
    }
    let (seed, _) = resolve_seed(a.seed)?;
    let (m, n) = (a.system.m, a.system.n);
    let psi1 = psi.value(1.0);

    let elements: Vec<PerturbationElement> = if a.identity {
        vec![PerturbationElement::identity(m, n)]
    } else if let Some(f) = a.beta_factor {
        vec![PerturbationElement::identity(m, n).with_beta_norm(f * beta_bound(a.eps, m, n, psi1), &nu1, &nu2)?]
    } else {
        let scale = default_perturbation_scale(a.eps, m, n, psi1);
        (0..a.elements)
            .map(|k| sample_h_eps(a.eps, &nu1, &nu2, psi1, scale, seed.wrapping_add(k as u64)))
            .collect::<Result<_, _>>()?
    };

    let mut rows = Vec::new();
    let mut total = 0;
    for (ti, &t) in ts.iter().enumerate() {
        let params = Arc::new(FamilyParams::new(nu1.clone(), nu2.clone(), psi.clone(), t)?);
        for (k, h) in elements.iter().enumerate() {
            let check_seed = seed.wrapping_add(((ti * elements.len() + k) as u64) << 20);
            let r = sandwich_check(h, &params, a.eps, a.samples, check_seed)?;
            total += r.violations();
            if let Some(w) = r.witnesses.first() {
                eprintln!(
                    "violation ({:?}) at T = {t}, element {k}: z = {:?}, image = {:?}",
                    w.direction, w.point, w.image
                );
            }
            rows.push(SandwichRow {
                element: k,
                eps: a.eps,
                t,
                outer_checked: r.outer_checked,
                outer_violations: r.outer_violations,
                inner_checked: r.inner_checked,
                inner_violations: r.inner_violations,
                seed: check_seed,
            });
        }
    }
    if let Some(path) = &a.out {
        let mut w = csv_writer(path)?;
        for r in &rows {
            w.serialize(r).map_err(|e| Failure::Runtime(e.to_string()))?;
        }
        w.flush()?;
    }
    println!("checks {} violations {total}", rows.len());
    if total > 0 {
        return Err(Failure::Violation(format!("{total} sandwich violations")));
    }
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, Failure> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| Failure::Runtime(e.to_string()))
}

fn run_plot(a: &PlotArgs) -> Result<(), Failure> {
    let mut reader = csv::Reader::from_path(&a.input).map_err(|e| usage(e.to_string()))?;
    let headers = reader.headers().map_err(|e| usage(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| usage(format!("column {name:?} not found in {}", a.input.display())))
    };
    let (xi, yi) = (col(&a.x)?, col(&a.y)?);
    let gi = match &a.group {
        Some(g) => Some(col(g)?),
        None => headers.iter().position(|h| h == "theta_id"),
    };

    let mut series: Vec<svg::Series> = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| usage(e.to_string()))?;
        let num = |i: usize| {
            row[i]
                .parse::<f64>()
                .map_err(|_| usage(format!("cannot parse {:?} as a number", &row[i])))
        };
        let (x, y) = (num(xi)?, num(yi)?);
        let key = gi.map(|g| row[g].to_string()).unwrap_or_default();
        match series.iter_mut().find(|s| s.label == key) {
            Some(s) => s.points.push((x, y)),
            None => series.push(svg::Series {
                label: key,
                points: vec![(x, y)],
            }),
        }
    }
    let chart = svg::Chart {
        title: a.title.clone(),
        x_label: a.x.clone(),
        y_label: a.y.clone(),
        logx: a.logx,
        logy: a.logy,
        reference_y: a.reference,
    };
    let text = svg::render(&chart, &series).map_err(usage)?;
    std::fs::write(&a.out, text)?;
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    match &cli.command {
        Command::Count(a) => run_count(a),
        Command::Volume(a) => run_volume(a),
        Command::Experiment(a) => run_experiment(a),
        Command::Variance(a) => run_variance(a),
        Command::Sandwich(a) => run_sandwich(a),
        Command::Plot(a) => run_plot(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let _ = std::io::stdout().flush();
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
