//! The counting regions `E_T`, their inner and outer perturbation envelopes
//! `E⁻_{T,ε}`, `E'_{T,ε}`, `C₀`, `E⁺_{T,ε} = E'_{T,ε} ∪ C₀`, and axis-aligned
//! boxes; plus the block-lower-triangular perturbations `h = [[α, 0], [β, γ]]`
//! under which the envelopes sandwich `h·E_T`.
//!
//! A point of `R^{m+n}` is written `(x, y)` with `x ∈ R^m`, `y ∈ R^n`.
//! Throughout, `a = ν₁(x)^m` and `b = ν₂(y)^n`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::approx_fn::ApproxFunction;
use crate::error::{Error, Result};
use crate::norms::{operator_norm, NormSpec};
use crate::rng::stream_rng;
use crate::stats::{hit_ratio_estimate, Estimate};

/// Relative inflation applied to bounding boxes so that rounding in the
/// `1/m`-th and `1/n`-th roots never clips a boundary point.
const BOX_SLACK: f64 = 1e-9;

/// Parameters shared by the `E`-family regions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FamilyParams {
    pub m: usize,
    pub n: usize,
    pub nu1: NormSpec,
    pub nu2: NormSpec,
    pub psi: ApproxFunction,
    /// The height `T`.
    pub t: f64,
}

impl FamilyParams {
    pub fn new(nu1: NormSpec, nu2: NormSpec, psi: ApproxFunction, t: f64) -> Result<Self> {
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::invalid(format!("T must be finite and positive, got {t}")));
        }
        Ok(FamilyParams {
            m: nu1.dim(),
            n: nu2.dim(),
            nu1,
            nu2,
            psi,
            t,
        })
    }

    pub fn dim(&self) -> usize {
        self.m + self.n
    }

    /// `c_{ν₁}·c_{ν₂}`.
    pub fn volume_constant(&self) -> f64 {
        self.nu1.ball_volume_constant() * self.nu2.ball_volume_constant()
    }

    pub fn with_t(&self, t: f64) -> Self {
        FamilyParams { t, ..self.clone() }
    }

    /// `(ν₁(x)^m, ν₂(y)^n)` for a point `(x, y)`.
    #[inline]
    pub fn heights(&self, point: &[f64]) -> (f64, f64) {
        let (x, y) = point.split_at(self.m);
        (
            self.nu1.value(x).powi(self.m as i32),
            self.nu2.value(y).powi(self.n as i32),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum RegionKind {
    ET,
    EMinus(f64),
    EPrime(f64),
    C0,
    EPlus(f64),
}

/// Half-open axis-aligned box `Π [lo_i, hi_i)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AxisBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl AxisBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo.is_empty() {
            return Err(Error::invalid("box needs at least one axis"));
        }
        if lo.iter().chain(&hi).any(|v| !v.is_finite()) {
            return Err(Error::invalid("box bounds must be finite"));
        }
        Ok(AxisBox { lo, hi })
    }

    /// The cube `[lo, hi)^dim`.
    pub fn cube(lo: f64, hi: f64, dim: usize) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| (h - l).max(0.0))
            .product()
    }

    #[inline]
    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (l, h))| *l <= *v && *v < *h)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Region {
    Family {
        kind: RegionKind,
        params: Arc<FamilyParams>,
    },
    Box(AxisBox),
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::invalid(format!("ε must lie in (0, 1/2), got {eps}")));
    }
    Ok(())
}

impl Region {
    pub fn family(kind: RegionKind, params: Arc<FamilyParams>) -> Result<Self> {
        match kind {
            RegionKind::EMinus(e) | RegionKind::EPrime(e) | RegionKind::EPlus(e) => check_eps(e)?,
            RegionKind::ET | RegionKind::C0 => {}
        }
        Ok(Region::Family { kind, params })
    }

    pub fn e_t(params: Arc<FamilyParams>) -> Self {
        Region::Family {
            kind: RegionKind::ET,
            params,
        }
    }

    /// Parses `ET`, `Eminus:<ε>`, `Eprime:<ε>`, `Eplus:<ε>`, `C0` (using
    /// `params`) or `box:<lo1>,<hi1>;<lo2>,<hi2>;...`.
    pub fn parse(text: &str, params: Option<Arc<FamilyParams>>) -> Result<Self> {
        let s = text.trim();
        if let Some(rest) = s.strip_prefix("box:") {
            let mut lo = Vec::new();
            let mut hi = Vec::new();
            for axis in rest.split(';') {
                let (l, h) = axis
                    .split_once(',')
                    .ok_or_else(|| Error::parse("region", text, "box axes are <lo>,<hi>"))?;
                let num = |v: &str| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::parse("region", text, e.to_string()))
                };
                lo.push(num(l)?);
                hi.push(num(h)?);
            }
            return Ok(Region::Box(AxisBox::new(lo, hi)?));
        }
        let eps = |v: &str| {
            v.parse::<f64>()
                .map_err(|e| Error::parse("region", text, format!("bad ε: {e}")))
        };
        let kind = if s == "ET" {
            RegionKind::ET
        } else if s == "C0" {
            RegionKind::C0
        } else if let Some(e) = s.strip_prefix("Eminus:") {
            RegionKind::EMinus(eps(e)?)
        } else if let Some(e) = s.strip_prefix("Eprime:") {
            RegionKind::EPrime(eps(e)?)
        } else if let Some(e) = s.strip_prefix("Eplus:") {
            RegionKind::EPlus(eps(e)?)
        } else {
            return Err(Error::parse(
                "region",
                text,
                "expected ET, Eminus:<ε>, Eprime:<ε>, Eplus:<ε>, C0 or box:...",
            ));
        };
        let params =
            params.ok_or_else(|| Error::invalid("E-family regions need m, n, norms, ψ and T"))?;
        Self::family(kind, params)
    }

    pub fn dim(&self) -> usize {
        match self {
            Region::Family { params, .. } => params.dim(),
            Region::Box(b) => b.dim(),
        }
    }

    /// Membership with a dimension check.
    pub fn contains(&self, point: &[f64]) -> Result<bool> {
        if point.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: point.len(),
            });
        }
        Ok(self.contains_point(point))
    }

    /// Membership without the dimension check.
    pub fn contains_point(&self, point: &[f64]) -> bool {
        match self {
            Region::Box(b) => b.contains(point),
            Region::Family { kind, params } => {
                let (a, b) = params.heights(point);
                family_contains(*kind, params, a, b)
            }
        }
    }

    /// Closed axis-aligned box containing the region.
    pub fn bounding_box(&self) -> AxisBox {
        match self {
            Region::Box(b) => b.clone(),
            Region::Family { kind, params } => {
                let psi1 = params.psi.value(1.0);
                let t = params.t;
                let (a_max, b_max) = match *kind {
                    RegionKind::ET => (psi1, t),
                    RegionKind::EMinus(e) => (psi1, t / (1.0 + e)),
                    RegionKind::EPrime(e) => ((1.0 + e) * psi1, (1.0 + e) * t),
                    RegionKind::C0 => (2.0 * psi1, 1.5),
                    RegionKind::EPlus(e) => ((2.0 * psi1).max((1.0 + e) * psi1), (1.0 + e) * t),
                };
                let rx = a_max.powf(1.0 / params.m as f64) / params.nu1.kappa_low() * (1.0 + BOX_SLACK);
                let ry = b_max.max(0.0).powf(1.0 / params.n as f64) / params.nu2.kappa_low()
                    * (1.0 + BOX_SLACK);
                let mut lo = vec![-rx; params.m];
                lo.extend(std::iter::repeat_n(-ry, params.n));
                let hi = lo.iter().map(|v| -v).collect();
                AxisBox { lo, hi }
            }
        }
    }

    /// Exact Lebesgue measure.
    pub fn volume(&self) -> Result<f64> {
        match self {
            Region::Box(b) => Ok(b.volume()),
            Region::Family { kind, params } => Ok(family_volume(*kind, params)),
        }
    }

    /// Uniform sample of `count` points by rejection from the bounding box.
    pub fn sample(&self, seed: u64, count: usize) -> Result<RegionSample> {
        self.sample_stream(seed, 0, count)
    }

    pub(crate) fn sample_stream(&self, seed: u64, stream: u64, count: usize) -> Result<RegionSample> {
        const MIN_ATTEMPTS: u64 = 1_000_000;
        const MIN_RATE: f64 = 1e-6;
        let bbox = self.bounding_box();
        let mut rng = stream_rng(seed, stream);
        let mut points = Vec::with_capacity(count);
        let mut attempts = 0u64;
        let mut p = vec![0.0; self.dim()];
        while points.len() < count {
            draw_in_box(&mut rng, &bbox, &mut p);
            attempts += 1;
            if self.contains_point(&p) {
                points.push(p.clone());
            }
            if attempts >= MIN_ATTEMPTS && (points.len() as f64) < MIN_RATE * attempts as f64 {
                return Err(Error::DegenerateRegion {
                    accepted: points.len() as u64,
                    attempts,
                });
            }
        }
        Ok(RegionSample { points, attempts })
    }

    /// Monte Carlo volume: fraction of uniform bounding-box samples inside.
    pub fn estimate_volume(&self, samples: u64, seed: u64) -> Estimate {
        let bbox = self.bounding_box();
        let mut rng = stream_rng(seed, 0);
        let mut p = vec![0.0; self.dim()];
        let mut hits = 0;
        for _ in 0..samples {
            draw_in_box(&mut rng, &bbox, &mut p);
            if self.contains_point(&p) {
                hits += 1;
            }
        }
        hit_ratio_estimate(hits, samples, bbox.volume())
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Region::Box(b) => {
                write!(f, "box:")?;
                for (i, (l, h)) in b.lo.iter().zip(&b.hi).enumerate() {
                    if i > 0 {
                        write!(f, ";")?;
                    }
                    write!(f, "{l},{h}")?;
                }
                Ok(())
            }
            Region::Family { kind, .. } => match kind {
                RegionKind::ET => write!(f, "ET"),
                RegionKind::EMinus(e) => write!(f, "Eminus:{e}"),
                RegionKind::EPrime(e) => write!(f, "Eprime:{e}"),
                RegionKind::C0 => write!(f, "C0"),
                RegionKind::EPlus(e) => write!(f, "Eplus:{e}"),
            },
        }
    }
}

#[derive(Clone, Debug)]
pub struct RegionSample {
    pub points: Vec<Vec<f64>>,
    pub attempts: u64,
}

impl RegionSample {
    pub fn acceptance_rate(&self) -> f64 {
        self.points.len() as f64 / self.attempts as f64
    }
}

fn draw_in_box(rng: &mut impl Rng, bbox: &AxisBox, out: &mut [f64]) {
    for (v, (l, h)) in out.iter_mut().zip(bbox.lo.iter().zip(&bbox.hi)) {
        *v = if l < h { rng.random_range(*l..*h) } else { *l };
    }
}

#[inline]
fn family_contains(kind: RegionKind, p: &FamilyParams, a: f64, b: f64) -> bool {
    let psi = &p.psi;
    match kind {
        RegionKind::ET => (1.0..p.t).contains(&b) && a < psi.value(b),
        RegionKind::EMinus(e) => {
            (1.5..p.t / (1.0 + e)).contains(&b) && a < psi.value((1.0 + e) * b) / (1.0 + e)
        }
        RegionKind::EPrime(e) => {
            (1.5..(1.0 + e) * p.t).contains(&b) && a < (1.0 + e) * psi.value(b / (1.0 + e))
        }
        RegionKind::C0 => b > 0.5 && b <= 1.5 && a < 2.0 * psi.value(1.0),
        RegionKind::EPlus(e) => {
            family_contains(RegionKind::EPrime(e), p, a, b) || family_contains(RegionKind::C0, p, a, b)
        }
    }
}

/// Volumes by the layer-cake formula: `|{y : ν₂(y)^n < r}| = c_{ν₂}·r`, so
/// integrating the `x`-ball volume over `b` gives `c_{ν₁}c_{ν₂}∫ ψ-bound(b) db`.
fn family_volume(kind: RegionKind, p: &FamilyParams) -> f64 {
    let c = p.volume_constant();
    let psi = &p.psi;
    let t = p.t;
    match kind {
        RegionKind::ET => c * psi.integral(t),
        // (1+ε)^{-1} ∫_{3/2}^{T/(1+ε)} ψ((1+ε)r) dr = (1+ε)^{-2} ∫_{3(1+ε)/2}^{T} ψ
        RegionKind::EMinus(e) => {
            let s = 1.0 + e;
            c * psi.integral_between(1.5 * s, t) / (s * s)
        }
        // (1+ε) ∫_{3/2}^{(1+ε)T} ψ(r/(1+ε)) dr = (1+ε)^{2} ∫_{3/(2(1+ε))}^{T} ψ
        RegionKind::EPrime(e) => {
            let s = 1.0 + e;
            c * psi.integral_between(1.5 / s, t) * s * s
        }
        RegionKind::C0 => c * 2.0 * psi.value(1.0),
        RegionKind::EPlus(e) => {
            // E' needs b ≥ 3/2 and C₀ needs b ≤ 3/2: the overlap lies in the
            // null set b = 3/2.
            family_volume(RegionKind::EPrime(e), p) + family_volume(RegionKind::C0, p)
        }
    }
}

/// The two scalar inequalities used to show `h·E_T ⊆ E⁺_{T,ε}`:
/// `(1+ε/2)^{1/n} + ε/(4n) < (1+ε)^{1/n}` and
/// `(1+ε/2)^{-1/n} − ε/(4n) > 2^{-1/n}`.
pub fn admissible_epsilon(eps: f64, n: usize) -> Result<bool> {
    check_eps(eps)?;
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    let inv_n = 1.0 / n as f64;
    let slack = eps / (4.0 * n as f64);
    let upper = (1.0 + eps / 2.0).powf(inv_n) + slack < (1.0 + eps).powf(inv_n);
    let lower = (1.0 + eps / 2.0).powf(-inv_n) - slack > 0.5f64.powf(inv_n);
    Ok(upper && lower)
}

/// An element `h = [[α, 0], [β, γ]]` of the parabolic subgroup with
/// `α ∈ GL_m`, `γ ∈ GL_n`, `β ∈ M_{n×m}` and `det h = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationElement {
    alpha: DMatrix<f64>,
    beta: DMatrix<f64>,
    gamma: DMatrix<f64>,
}

const DET_TOL: f64 = 1e-10;

impl PerturbationElement {
    pub fn new(alpha: DMatrix<f64>, beta: DMatrix<f64>, gamma: DMatrix<f64>) -> Result<Self> {
        let m = alpha.nrows();
        let n = gamma.nrows();
        if alpha.ncols() != m || gamma.ncols() != n {
            return Err(Error::invalid("α and γ must be square"));
        }
        if beta.nrows() != n || beta.ncols() != m {
            return Err(Error::invalid(format!(
                "β must be {n}×{m}, got {}×{}",
                beta.nrows(),
                beta.ncols()
            )));
        }
        let det = alpha.determinant() * gamma.determinant();
        if (det - 1.0).abs() > DET_TOL {
            return Err(Error::invalid(format!("det h must be 1, got {det}")));
        }
        Ok(PerturbationElement { alpha, beta, gamma })
    }

    pub fn identity(m: usize, n: usize) -> Self {
        PerturbationElement {
            alpha: DMatrix::identity(m, m),
            beta: DMatrix::zeros(n, m),
            gamma: DMatrix::identity(n, n),
        }
    }

    pub fn alpha(&self) -> &DMatrix<f64> {
        &self.alpha
    }

    pub fn beta(&self) -> &DMatrix<f64> {
        &self.beta
    }

    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    pub fn m(&self) -> usize {
        self.alpha.nrows()
    }

    pub fn n(&self) -> usize {
        self.gamma.nrows()
    }

    /// `h·(x, y) = (αx, βx + γy)`.
    pub fn apply(&self, point: &[f64]) -> Vec<f64> {
        let m = self.m();
        let x = DVector::from_column_slice(&point[..m]);
        let y = DVector::from_column_slice(&point[m..]);
        let ax = &self.alpha * &x;
        let by = &self.beta * &x + &self.gamma * &y;
        ax.iter().chain(by.iter()).copied().collect()
    }

    /// `h^{-1} = [[α^{-1}, 0], [−γ^{-1}βα^{-1}, γ^{-1}]]`.
    pub fn inverse(&self) -> Result<Self> {
        let ai = self
            .alpha
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::invalid("α is singular"))?;
        let gi = self
            .gamma
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::invalid("γ is singular"))?;
        let beta = -(&gi * &self.beta * &ai);
        Ok(PerturbationElement {
            alpha: ai,
            beta,
            gamma: gi,
        })
    }

    /// Certified norms `(‖α‖_{ν₁}^m, ‖γ‖_{ν₂}^n, ‖β‖_{ν₁,ν₂})`, where
    /// `ν₂(βx) ≤ ‖β‖_{ν₁,ν₂}·ν₁(x)`.
    pub fn block_norms(&self, nu1: &NormSpec, nu2: &NormSpec) -> Result<(f64, f64, f64)> {
        let a = operator_norm(&self.alpha, nu1, nu1)?.value;
        let g = operator_norm(&self.gamma, nu2, nu2)?.value;
        let b = operator_norm(&self.beta, nu1, nu2)?.value;
        Ok((a.powi(self.m() as i32), g.powi(self.n() as i32), b))
    }

    /// Membership in `H̃_ε`:
    /// `max(‖α‖^m, ‖γ‖^n) < 1 + ε/2` and `‖β‖ < ε / (4n·ψ(1)^{1/m})`.
    pub fn in_h_tilde(&self, eps: f64, nu1: &NormSpec, nu2: &NormSpec, psi_at_one: f64) -> Result<bool> {
        let (a, g, b) = self.block_norms(nu1, nu2)?;
        Ok(a.max(g) < 1.0 + eps / 2.0 && b < beta_bound(eps, self.m(), self.n(), psi_at_one))
    }

    /// Membership in `H_ε = H̃_ε ∩ H̃_ε^{-1}`.
    pub fn in_h_eps(&self, eps: f64, nu1: &NormSpec, nu2: &NormSpec, psi_at_one: f64) -> Result<bool> {
        Ok(self.in_h_tilde(eps, nu1, nu2, psi_at_one)?
            && self.inverse()?.in_h_tilde(eps, nu1, nu2, psi_at_one)?)
    }

    /// Same `α`, `γ`, with `β` replaced by the all-ones direction rescaled so
    /// that `‖β‖_{ν₁,ν₂}` equals `target`.
    pub fn with_beta_norm(&self, target: f64, nu1: &NormSpec, nu2: &NormSpec) -> Result<Self> {
        let dir = DMatrix::from_element(self.n(), self.m(), 1.0);
        let norm = operator_norm(&dir, nu1, nu2)?.value;
        Ok(PerturbationElement {
            beta: dir * (target / norm),
            ..self.clone()
        })
    }
}

/// `ε / (4n·ψ(1)^{1/m})`.
pub fn beta_bound(eps: f64, m: usize, n: usize, psi_at_one: f64) -> f64 {
    eps / (4.0 * n as f64 * psi_at_one.powf(1.0 / m as f64))
}

/// Default entrywise perturbation scale for [`sample_h_eps`].
pub fn default_perturbation_scale(eps: f64, m: usize, n: usize, psi_at_one: f64) -> f64 {
    let d = (m + n) as f64;
    eps / (4.0 * d * d * psi_at_one.powf(1.0 / m as f64).max(1.0))
}

/// Draws `h ∈ H_ε` by rejection: `α = 1 + sR`, `γ ∝ 1 + sR'` rescaled so
/// `det α · det γ = 1`, `β = sR''`, with `R` entries uniform in `[-1, 1]`.
pub fn sample_h_eps(
    eps: f64,
    nu1: &NormSpec,
    nu2: &NormSpec,
    psi_at_one: f64,
    scale: f64,
    seed: u64,
) -> Result<PerturbationElement> {
    const BUDGET: usize = 10_000;
    let n = nu2.dim();
    let m = nu1.dim();
    if !admissible_epsilon(eps, n)? {
        return Err(Error::invalid(format!("ε = {eps} is not admissible for n = {n}")));
    }
    if !(scale.is_finite() && scale >= 0.0) {
        return Err(Error::invalid("perturbation scale must be non-negative"));
    }
    let mut rng = stream_rng(seed, 0);
    let mut noise = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| scale * rng.random_range(-1.0..=1.0));
    for _ in 0..BUDGET {
        let alpha = DMatrix::identity(m, m) + noise(m, m);
        let gamma0 = DMatrix::identity(n, n) + noise(n, n);
        let beta = noise(n, m);
        let det = alpha.determinant() * gamma0.determinant();
        if !(det > 0.0) {
            continue;
        }
        let gamma = gamma0 * det.powf(-1.0 / n as f64);
        let Ok(h) = PerturbationElement::new(alpha, beta, gamma) else {
            continue;
        };
        if h.in_h_eps(eps, nu1, nu2, psi_at_one)? {
            return Ok(h);
        }
    }
    Err(Error::BudgetExhausted { attempts: BUDGET })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SandwichDirection {
    /// `z ∈ E_T` but `h·z ∉ E⁺`.
    Outer,
    /// `z ∈ E⁻` but `h^{-1}·z ∉ E_T`.
    Inner,
}

#[derive(Clone, Debug, Serialize)]
pub struct Witness {
    pub direction: SandwichDirection,
    pub point: Vec<f64>,
    pub image: Vec<f64>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SandwichReport {
    pub outer_checked: usize,
    pub outer_violations: usize,
    pub inner_checked: usize,
    pub inner_violations: usize,
    pub witnesses: Vec<Witness>,
}

impl SandwichReport {
    pub fn violations(&self) -> usize {
        self.outer_violations + self.inner_violations
    }
}

const MAX_WITNESSES: usize = 16;

/// Checks `E⁻_{T,ε} ⊆ h·E_T ⊆ E⁺_{T,ε}` on random points: `h·z ∈ E⁺` for
/// uniform `z ∈ E_T`, and `h^{-1}·z ∈ E_T` for uniform `z ∈ E⁻`.
pub fn sandwich_check(
    h: &PerturbationElement,
    params: &Arc<FamilyParams>,
    eps: f64,
    num_samples: usize,
    seed: u64,
) -> Result<SandwichReport> {
    if !(params.t > 10.0) {
        return Err(Error::invalid(format!("sandwich check needs T > 10, got {}", params.t)));
    }
    if !admissible_epsilon(eps, params.n)? {
        return Err(Error::invalid(format!("ε = {eps} is not admissible for n = {}", params.n)));
    }
    if h.m() != params.m || h.n() != params.n {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            got: h.m() + h.n(),
        });
    }
    let e_t = Region::e_t(params.clone());
    let e_plus = Region::family(RegionKind::EPlus(eps), params.clone())?;
    let e_minus = Region::family(RegionKind::EMinus(eps), params.clone())?;
    let h_inv = h.inverse()?;

    let mut report = SandwichReport::default();
    for z in e_t.sample_stream(seed, 0, num_samples)?.points {
        let hz = h.apply(&z);
        report.outer_checked += 1;
        if !e_plus.contains_point(&hz) {
            report.outer_violations += 1;
            if report.witnesses.len() < MAX_WITNESSES {
                report.witnesses.push(Witness {
                    direction: SandwichDirection::Outer,
                    point: z,
                    image: hz,
                });
            }
        }
    }
    for z in e_minus.sample_stream(seed, 1, num_samples)?.points {
        let hz = h_inv.apply(&z);
        report.inner_checked += 1;
        if !e_t.contains_point(&hz) {
            report.inner_violations += 1;
            if report.witnesses.len() < MAX_WITNESSES {
                report.witnesses.push(Witness {
                    direction: SandwichDirection::Inner,
                    point: z,
                    image: hz,
                });
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(psi: &str, t: f64) -> Arc<FamilyParams> {
        Arc::new(
            FamilyParams::new(
                NormSpec::sup(2),
                NormSpec::sup(1),
                ApproxFunction::parse(psi).unwrap(),
                t,
            )
            .unwrap(),
        )
    }

    #[test]
    fn contains_examples() {
        let et = Region::e_t(params("const:0.9", 10.0));
        assert!(et.contains(&[0.0, 0.0, 1.0]).unwrap());
        assert!(!et.contains(&[0.0, 0.0, 10.0]).unwrap());
        assert!(!et.contains(&[0.0, 0.0, 0.999]).unwrap());
        assert!(et.contains(&[0.0, 0.0]).is_err());
        let c0 = Region::family(RegionKind::C0, params("const:0.9", 10.0)).unwrap();
        assert!(c0.contains(&[0.0, 0.0, 0.8]).unwrap());
        assert!(c0.contains(&[0.0, 0.0, 1.5]).unwrap());
        assert!(!c0.contains(&[0.0, 0.0, 0.5]).unwrap());
    }

    #[test]
    fn strict_psi_boundary() {
        // sup norm, m = 2: ν₁(x)² = 0.81 is not < 0.81
        let et = Region::e_t(params("const:0.81", 10.0));
        assert!(!et.contains(&[0.9, 0.0, 2.0]).unwrap());
        assert!(et.contains(&[0.899, 0.0, 2.0]).unwrap());
    }

    #[test]
    fn volume_examples() {
        let et = Region::e_t(params("pow:1:0.5", 4.0));
        assert!((et.volume().unwrap() - 16.0).abs() < 1e-12);
        let thin = Region::e_t(params("pow:1:0.5", 1.0 + 1e-12));
        assert!(thin.volume().unwrap() < 1e-10);
        let b = Region::parse("box:1,2;1,2;1,2", None).unwrap();
        assert_eq!(b.volume().unwrap(), 1.0);
    }

    #[test]
    fn e_t_volume_matches_monte_carlo() {
        let et = Region::e_t(params("pow:1:0.5", 4.0));
        let est = et.estimate_volume(400_000, 11);
        assert!(est.z_score(16.0) < 3.0, "{est:?}");
    }

    #[test]
    fn envelope_volumes_match_monte_carlo() {
        let p = params("pow:1:0.5", 30.0);
        for kind in [
            RegionKind::EMinus(0.2),
            RegionKind::EPrime(0.2),
            RegionKind::C0,
            RegionKind::EPlus(0.2),
        ] {
            let r = Region::family(kind, p.clone()).unwrap();
            let est = r.estimate_volume(400_000, 3);
            let exact = r.volume().unwrap();
            assert!(est.z_score(exact) < 3.5, "{kind:?}: {est:?} vs {exact}");
        }
    }

    #[test]
    fn envelope_volume_ratios_approach_one_plus_eps_squared() {
        for (psi, ts) in [("const:0.9", &[1e3, 1e5][..]), ("pow:1:0.5", &[1e5][..])] {
            for &t in ts {
                let p = params(psi, t);
                let et = Region::e_t(p.clone()).volume().unwrap();
                for eps in [0.05, 0.1, 0.3] {
                    let plus = Region::family(RegionKind::EPlus(eps), p.clone()).unwrap();
                    let minus = Region::family(RegionKind::EMinus(eps), p.clone()).unwrap();
                    let s2 = (1.0 + eps) * (1.0 + eps);
                    let rp = plus.volume().unwrap() / et / s2;
                    let rm = minus.volume().unwrap() / et * s2;
                    assert!((rp - 1.0).abs() < 0.02, "{psi} T={t} ε={eps}: {rp}");
                    assert!((rm - 1.0).abs() < 0.02, "{psi} T={t} ε={eps}: {rm}");
                }
            }
        }
    }

    #[test]
    fn identity_nesting_on_random_points() {
        let p = params("pow:1:0.5", 50.0);
        let eps = 0.1;
        let et = Region::e_t(p.clone());
        let minus = Region::family(RegionKind::EMinus(eps), p.clone()).unwrap();
        let plus = Region::family(RegionKind::EPlus(eps), p.clone()).unwrap();
        let bbox = plus.bounding_box();
        let mut rng = stream_rng(5, 0);
        let mut z = vec![0.0; 3];
        let mut hits = [0usize; 3];
        for _ in 0..1000 {
            draw_in_box(&mut rng, &bbox, &mut z);
            let (a, b, c) = (
                minus.contains_point(&z),
                et.contains_point(&z),
                plus.contains_point(&z),
            );
            assert!(!a || b);
            assert!(!b || c);
            hits[0] += a as usize;
            hits[1] += b as usize;
            hits[2] += c as usize;
        }
        assert!(hits[0] > 0);
    }

    #[test]
    fn e_t_is_increasing_in_t() {
        let small = Region::e_t(params("pow:1:1", 20.0));
        let large = Region::e_t(params("pow:1:1", 40.0));
        for z in small.sample(9, 2000).unwrap().points {
            assert!(large.contains_point(&z));
        }
    }

    #[test]
    fn sample_examples() {
        let b = Region::parse("box:0,1;0,1;0,1", None).unwrap();
        let s = b.sample(1, 100).unwrap();
        assert_eq!(s.points.len(), 100);
        assert!(s.points.iter().all(|p| b.contains_point(p)));
        assert_eq!(s.acceptance_rate(), 1.0);

        let et = Region::e_t(params("pow:1:0.5", 4.0));
        let s = et.sample(2, 10_000).unwrap();
        assert!(s.points.iter().all(|p| et.contains(p).unwrap()));
        // deterministic per seed
        assert_eq!(et.sample(2, 10).unwrap().points, s.points[..10]);

        let thin = Region::e_t(params("const:1e-9", 1.000_000_1));
        assert!(matches!(thin.sample(3, 10), Err(Error::DegenerateRegion { .. })));
    }

    #[test]
    fn admissible_epsilon_examples() {
        assert!(admissible_epsilon(0.01, 1).unwrap());
        assert!(admissible_epsilon(0.4, 1).unwrap());
        assert!(admissible_epsilon(0.4, 2).unwrap());
        assert!(admissible_epsilon(0.5, 1).is_err());
        assert!(admissible_epsilon(0.0, 1).is_err());
    }

    #[test]
    fn admissible_epsilon_by_direct_evaluation() {
        // (0.4, 2): 1.2^{1/2} + 0.05 vs 1.4^{1/2}; 1.2^{-1/2} − 0.05 vs 2^{-1/2}
        assert!(1.2f64.sqrt() + 0.05 < 1.4f64.sqrt());
        assert!(1.0 / 1.2f64.sqrt() - 0.05 > 0.5f64.sqrt());
    }

    #[test]
    fn perturbation_inverse_round_trip() {
        let h = sample_h_eps(0.3, &NormSpec::sup(2), &NormSpec::sup(1), 1.0, 0.02, 4).unwrap();
        let hi = h.inverse().unwrap();
        let z = [0.3, -0.2, 5.0];
        let back = hi.apply(&h.apply(&z));
        for (a, b) in back.iter().zip(z) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_scale_gives_identity() {
        let h = sample_h_eps(0.1, &NormSpec::sup(2), &NormSpec::sup(1), 1.0, 0.0, 1).unwrap();
        assert_eq!(h, PerturbationElement::identity(2, 1));
    }

    #[test]
    fn sampled_elements_are_in_h_eps() {
        let nu1 = NormSpec::sup(2);
        let nu2 = NormSpec::lp(2.0, 2).unwrap();
        for seed in 0..5 {
            let scale = default_perturbation_scale(0.2, 2, 2, 1.0);
            let h = sample_h_eps(0.2, &nu1, &nu2, 1.0, scale, seed).unwrap();
            assert!(h.in_h_eps(0.2, &nu1, &nu2, 1.0).unwrap());
            let det = h.alpha().determinant() * h.gamma().determinant();
            assert!((det - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn oversized_scale_exhausts_budget() {
        let r = sample_h_eps(0.01, &NormSpec::sup(2), &NormSpec::sup(1), 1.0, 0.5, 1);
        assert!(matches!(r, Err(Error::BudgetExhausted { attempts: 10_000 })));
    }

    #[test]
    fn perturbation_rejects_bad_shapes() {
        assert!(PerturbationElement::new(
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 1),
            DMatrix::identity(1, 1)
        )
        .is_err());
        assert!(PerturbationElement::new(
            DMatrix::identity(2, 2) * 2.0,
            DMatrix::zeros(1, 2),
            DMatrix::identity(1, 1)
        )
        .is_err());
    }

    #[test]
    fn identity_sandwich_has_no_violations() {
        let p = params("pow:1:0.5", 100.0);
        let r = sandwich_check(&PerturbationElement::identity(2, 1), &p, 0.1, 10_000, 1).unwrap();
        assert_eq!(r.violations(), 0);
        assert_eq!(r.outer_checked, 10_000);
        assert_eq!(r.inner_checked, 10_000);
    }

    #[test]
    fn sampled_h_sandwich_has_no_violations() {
        let p = params("pow:1:0.5", 100.0);
        let (nu1, nu2) = (NormSpec::sup(2), NormSpec::sup(1));
        let scale = default_perturbation_scale(0.1, 2, 1, 1.0);
        let h = sample_h_eps(0.1, &nu1, &nu2, 1.0, scale, 8).unwrap();
        let r = sandwich_check(&h, &p, 0.1, 10_000, 2).unwrap();
        assert_eq!(r.violations(), 0, "{:?}", r.witnesses);
    }

    #[test]
    fn oversized_shear_is_caught() {
        let p = params("pow:1:0.5", 11.0);
        let (nu1, nu2) = (NormSpec::sup(2), NormSpec::sup(1));
        let eps = 0.3;
        let h = PerturbationElement::identity(2, 1)
            .with_beta_norm(10.0 * beta_bound(eps, 2, 1, 1.0), &nu1, &nu2)
            .unwrap();
        assert!(!h.in_h_eps(eps, &nu1, &nu2, 1.0).unwrap());
        let r = sandwich_check(&h, &p, eps, 10_000, 3).unwrap();
        assert!(r.violations() > 0);
        assert!(!r.witnesses.is_empty());
        let w = &r.witnesses[0];
        assert_eq!(h.apply(&w.point), w.image);
    }

    #[test]
    fn sandwich_requires_t_above_ten() {
        let p = params("pow:1:0.5", 10.0);
        assert!(sandwich_check(&PerturbationElement::identity(2, 1), &p, 0.1, 10, 1).is_err());
    }

    #[test]
    fn region_text_round_trip() {
        let p = params("pow:1:0.5", 10.0);
        for s in ["ET", "Eminus:0.1", "Eprime:0.2", "Eplus:0.3", "C0", "box:0,1;-1,2.5"] {
            assert_eq!(Region::parse(s, Some(p.clone())).unwrap().to_string(), s);
        }
        assert!(Region::parse("Eplus:0.7", Some(p.clone())).is_err());
        assert!(Region::parse("ET", None).is_err());
        assert!(Region::parse("ball", Some(p)).is_err());
    }
}
