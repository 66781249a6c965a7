//! Convergence of `𝒩(ϑ, T)` to the main term `N^{-d}·c_{ν₁}·c_{ν₂}·Ψ(T)`
//! for random `ϑ`, and fits of the error exponent.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use crate::approx_fn::{ApproxFunction, Divergence};
use crate::counting::{count_solutions_grid, CongruenceClass, ProblemInstance, ThetaMatrix};
use crate::error::{Error, Result};
use crate::norms::NormSpec;
use crate::rng::stream_rng;
use crate::stats::{fit_line, median, LineFit};

pub const DEFAULT_POINTS_PER_DECADE: usize = 12;

/// Minimum number of usable points for [`error_exponent_fit`].
pub const MIN_FIT_POINTS: usize = 5;

/// Geometric grid `T_min = g_0 < … < g_{k-1} = T_max`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridSpec {
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn new(t_min: f64, t_max: f64, points: usize) -> Result<Self> {
        if !(t_min > 1.0 && t_min.is_finite() && t_max.is_finite()) {
            return Err(Error::invalid(format!("grid needs finite 1 < T_min, got {t_min}")));
        }
        if points == 0 || (points == 1 && t_max != t_min) || (points > 1 && t_max <= t_min) {
            return Err(Error::invalid("grid must be increasing with at least one point"));
        }
        Ok(GridSpec { t_min, t_max, points })
    }

    /// A grid with `per_decade` points per factor of ten.
    pub fn per_decade(t_min: f64, t_max: f64, per_decade: usize) -> Result<Self> {
        let decades = (t_max / t_min).log10();
        let points = (decades * per_decade as f64).round() as usize + 1;
        Self::new(t_min, t_max, points.max(2))
    }

    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.t_min];
        }
        let step = (self.t_max / self.t_min).ln() / (self.points - 1) as f64;
        (0..self.points)
            .map(|i| {
                if i + 1 == self.points {
                    self.t_max
                } else {
                    self.t_min * (step * i as f64).exp()
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum ThetaSource {
    /// `count` i.i.d. uniform draws from `[0, 1)^{mn}`.
    Uniform { count: usize },
    Explicit(Vec<ThetaMatrix>),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub instance: ProblemInstance,
    pub thetas: ThetaSource,
    pub grid: GridSpec,
    pub seed: u64,
}

impl RunConfig {
    pub fn num_thetas(&self) -> usize {
        match &self.thetas {
            ThetaSource::Uniform { count } => *count,
            ThetaSource::Explicit(list) => list.len(),
        }
    }

    /// `ϑ` number `id`; uniform draws use seed stream `id`.
    pub fn theta(&self, id: usize) -> ThetaMatrix {
        let (m, n) = (self.instance.m(), self.instance.n());
        match &self.thetas {
            ThetaSource::Explicit(list) => list[id].clone(),
            ThetaSource::Uniform { .. } => {
                let mut rng = stream_rng(self.seed, id as u64);
                let data = (0..m * n).map(|_| rng.random::<f64>()).collect();
                ThetaMatrix::new(m, n, data).expect("uniform draws are finite")
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if self.num_thetas() == 0 {
            return Err(Error::invalid("need at least one ϑ"));
        }
        if let ThetaSource::Explicit(list) = &self.thetas {
            for t in list {
                if t.rows() != self.instance.m() || t.cols() != self.instance.n() {
                    return Err(Error::invalid("explicit ϑ has the wrong shape"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub theta_id: usize,
    #[serde(rename = "T")]
    pub t: f64,
    pub count: u64,
    pub predicted: f64,
    pub ratio: f64,
    pub abs_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunOutput {
    /// Ordered by `theta_id`, then `T`.
    pub records: Vec<ExperimentRecord>,
    pub warnings: Vec<String>,
    /// Bound on `|main term − |E_T||`, i.e. `N^{-d}·c_{ν₁}·c_{ν₂}·ψ(1)`.
    pub main_term_slack: f64,
}

/// Counts and main terms for every `ϑ` and grid point.
pub fn convergence_run(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let inst = &cfg.instance;
    let grid = cfg.grid.values();
    let mut warnings = Vec::new();
    if inst.psi().divergence() != Divergence::Divergent {
        warnings.push(format!("ψ = {} is not known to be divergent", inst.psi()));
    }
    if inst.below_dimension_hypothesis() {
        warnings.push(format!("d = {} is below 3", inst.d()));
    }

    let constant = inst.main_term_constant();
    let predicted: Vec<f64> = inst.psi().partial_sums(&grid).iter().map(|s| constant * s).collect();
    if predicted[0] <= 0.0 {
        return Err(Error::invalid("predicted main term is zero at T_min; raise T_min above 1"));
    }

    let per_theta: Vec<Vec<u64>> = (0..cfg.num_thetas())
        .into_par_iter()
        .map(|id| count_solutions_grid(inst, &cfg.theta(id), &grid))
        .collect::<Result<_>>()?;

    let mut records = Vec::with_capacity(per_theta.len() * grid.len());
    for (id, counts) in per_theta.into_iter().enumerate() {
        for ((&t, &count), &pred) in grid.iter().zip(&counts).zip(&predicted) {
            records.push(ExperimentRecord {
                theta_id: id,
                t,
                count,
                predicted: pred,
                ratio: count as f64 / pred,
                abs_error: (count as f64 - pred).abs(),
            });
        }
    }
    Ok(RunOutput {
        records,
        warnings,
        main_term_slack: constant * inst.psi().value(1.0),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub used: usize,
    /// Points with zero error, left out of the fit.
    pub dropped: usize,
}

/// Least-squares slope of `log abs_error` against `log predicted`.
pub fn error_exponent_fit(records: &[ExperimentRecord]) -> Result<ExponentFit> {
    let usable: Vec<&ExperimentRecord> = records.iter().filter(|r| r.abs_error > 0.0 && r.predicted > 0.0).collect();
    if usable.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientData {
            usable: usable.len(),
            needed: MIN_FIT_POINTS,
        });
    }
    let xs: Vec<f64> = usable.iter().map(|r| r.predicted.ln()).collect();
    let ys: Vec<f64> = usable.iter().map(|r| r.abs_error.ln()).collect();
    let LineFit {
        slope,
        intercept,
        r_squared,
    } = fit_line(&xs, &ys);
    Ok(ExponentFit {
        slope,
        intercept,
        r_squared,
        used: usable.len(),
        dropped: records.len() - usable.len(),
    })
}

/// Records of one `ϑ`, in grid order.
pub fn records_for_theta(records: &[ExperimentRecord], theta_id: usize) -> Vec<ExperimentRecord> {
    records.iter().filter(|r| r.theta_id == theta_id).cloned().collect()
}

/// Median ratio over all `ϑ` at each grid point.
pub fn median_ratio_path(records: &[ExperimentRecord]) -> Vec<(f64, f64)> {
    let mut ts: Vec<f64> = records.iter().map(|r| r.t).collect();
    ts.sort_by(|a, b| a.total_cmp(b));
    ts.dedup();
    ts.into_iter()
        .map(|t| {
            let ratios: Vec<f64> = records.iter().filter(|r| r.t == t).map(|r| r.ratio).collect();
            (t, median(&ratios))
        })
        .collect()
}

/// First grid `T` from which the ratio stays inside `[lo, hi]` up to the
/// last grid point. Says nothing about where the asymptotic regime starts.
pub fn ratio_onset(records: &[ExperimentRecord], lo: f64, hi: f64) -> Option<f64> {
    let mut onset = None;
    for r in records {
        if r.ratio >= lo && r.ratio <= hi {
            onset.get_or_insert(r.t);
        } else {
            onset = None;
        }
    }
    onset
}

/// The unconstrained case `m = 2, n = 1, N = 1` with sup norms, where the
/// main term must be exactly `2^d·Ψ(T) = 8·Ψ(T)`.
pub fn classical_schmidt_check(psi: ApproxFunction, grid: GridSpec, num_thetas: usize, seed: u64) -> Result<RunOutput> {
    let inst = ProblemInstance::new(NormSpec::sup(2), NormSpec::sup(1), psi, CongruenceClass::trivial(3))?;
    let cfg = RunConfig {
        instance: inst,
        thetas: ThetaSource::Uniform { count: num_thetas },
        grid,
        seed,
    };
    let out = convergence_run(&cfg)?;
    for r in &out.records {
        let expect = 8.0 * cfg.instance.psi().partial_sum(r.t);
        if r.predicted != expect {
            return Err(Error::OracleMismatch(format!(
                "predicted {} at T = {} differs from 8·Ψ(T) = {expect}",
                r.predicted, r.t
            )));
        }
    }
    Ok(out)
}

pub fn write_records<W: Write>(out: W, records: &[ExperimentRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Sidecar written next to a records CSV.
#[derive(Clone, Debug, Serialize)]
pub struct RunMetadata<'a> {
    pub config: &'a RunConfig,
    pub seed: u64,
    /// Where the seed came from, e.g. the config file or an environment override.
    pub seed_source: &'a str,
    pub threads: usize,
    pub version: &'static str,
    pub wall_time_secs: f64,
    pub warnings: &'a [String],
    pub main_term_slack: f64,
}

/// `out.csv` → `out.meta.json`.
pub fn metadata_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

/// Runs `cfg`, writes the CSV to `path` and the metadata sidecar beside it.
pub fn run_to_files(cfg: &RunConfig, path: &Path, seed_source: &str) -> Result<RunOutput> {
    let start = Instant::now();
    let out = convergence_run(cfg)?;
    write_records(std::fs::File::create(path)?, &out.records)?;
    let meta = RunMetadata {
        config: cfg,
        seed: cfg.seed,
        seed_source,
        threads: rayon::current_num_threads(),
        version: env!("CARGO_PKG_VERSION"),
        wall_time_secs: start.elapsed().as_secs_f64(),
        warnings: &out.warnings,
        main_term_slack: out.main_term_slack,
    };
    let mut text = serde_json::to_string_pretty(&meta).map_err(|e| Error::invalid(e.to_string()))?;
    text.push('\n');
    std::fs::write(metadata_path(path), text)?;
    Ok(out)
}
