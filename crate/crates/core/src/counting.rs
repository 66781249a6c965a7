//! The solution counter `𝒩(ϑ, T)`: the number of `(p, q) ∈ Z^m × Z^n` with
//!
//! ```text
//! ν₁(ϑq + p)^m < ψ(ν₂(q)^n),   (p, q) ≡ v (mod N),   1 ≤ ν₂(q)^n < T.
//! ```
//!
//! [`count_solutions`] walks the admissible `q` and counts `p` per `q` in
//! closed form when `ν₁` is a multiple of the sup norm. [`count_via_lattice_points`]
//! counts the same thing as points of the affine lattice `u(ϑ)(NZ^d + v)`
//! inside `E_T`, and [`count_scaled_affine`] as points of `u(ϑ)(Z^d + v/N)`
//! inside `N^{-1}E_T`. The three must agree exactly.

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::approx_fn::ApproxFunction;
use crate::error::{Error, Result};
use crate::geometry::{FamilyParams, Region};
use crate::norms::NormSpec;

/// Distance from the `ψ` boundary below which a solution candidate is
/// reported as a near tie.
pub const NEAR_TIE_TOL: f64 = 1e-12;

/// Tolerance on `min_{w ≠ 0} ν₂(w) = 1`.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// A residue class `v mod N` in `Z^d`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CongruenceClass {
    residues: Vec<i64>,
    modulus: u64,
}

impl CongruenceClass {
    pub fn new(residues: Vec<i64>, modulus: u64) -> Result<Self> {
        if modulus == 0 {
            return Err(Error::invalid("modulus N must be at least 1"));
        }
        if modulus > i64::MAX as u64 {
            return Err(Error::invalid("modulus N is too large"));
        }
        if residues.is_empty() {
            return Err(Error::invalid("residue vector must be non-empty"));
        }
        let n = modulus as i64;
        Ok(CongruenceClass {
            residues: residues.into_iter().map(|r| r.rem_euclid(n)).collect(),
            modulus,
        })
    }

    /// `N = 1`: no constraint.
    pub fn trivial(dim: usize) -> Self {
        CongruenceClass {
            residues: vec![0; dim],
            modulus: 1,
        }
    }

    /// Parses a comma-separated residue list.
    pub fn parse(residues: &str, modulus: u64) -> Result<Self> {
        let v = residues
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<i64>()
                    .map_err(|e| Error::parse("residues", residues, e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(v, modulus)
    }

    pub fn residues(&self) -> &[i64] {
        &self.residues
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn dim(&self) -> usize {
        self.residues.len()
    }

    /// `gcd(v₁, …, v_d, N)`.
    pub fn content(&self) -> u64 {
        self.residues
            .iter()
            .fold(self.modulus, |g, &r| gcd(g, r.unsigned_abs()))
    }

    pub fn contains(&self, point: &[i64]) -> bool {
        let n = self.modulus as i64;
        point
            .iter()
            .zip(&self.residues)
            .all(|(x, r)| x.rem_euclid(n) == *r)
    }
}

pub(crate) fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// A real `m×n` matrix `ϑ`, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThetaMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ThetaMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("ϑ entries must be finite"));
        }
        Ok(ThetaMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        ThetaMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Parses `r11,r12;r21,r22` (rows separated by `;`).
    pub fn parse(text: &str, rows: usize, cols: usize) -> Result<Self> {
        Self::from_rows(text.trim().split(';'), text, rows, cols)
    }

    /// Reads one row per line, entries separated by commas or whitespace.
    /// Blank lines and `#` comments are skipped.
    pub fn from_file(path: &Path, rows: usize, cols: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let lines = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty());
        Self::from_rows(lines, &path.display().to_string(), rows, cols)
    }

    fn from_rows<'a>(
        lines: impl Iterator<Item = &'a str>,
        source: &str,
        rows: usize,
        cols: usize,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        let mut seen_rows = 0;
        for line in lines {
            seen_rows += 1;
            let entries: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            if entries.len() != cols {
                return Err(Error::parse(
                    "ϑ",
                    source,
                    format!("row {seen_rows} has {} entries, expected {cols}", entries.len()),
                ));
            }
            for e in entries {
                data.push(
                    e.parse::<f64>()
                        .map_err(|err| Error::parse("ϑ", source, err.to_string()))?,
                );
            }
        }
        if seen_rows != rows {
            return Err(Error::parse(
                "ϑ",
                source,
                format!("got {seen_rows} rows, expected {rows}"),
            ));
        }
        Self::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    /// `out = ϑq`, each row summed left to right.
    #[inline]
    pub fn apply_int(&self, q: &[i64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            let mut acc = 0.0;
            for (t, &qj) in row.iter().zip(q) {
                acc += t * qj as f64;
            }
            *o = acc;
        }
    }

    /// `out = ϑy` for a real vector, each row summed left to right.
    #[inline]
    pub fn apply(&self, y: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            let mut acc = 0.0;
            for (t, yj) in row.iter().zip(y) {
                acc += t * yj;
            }
            *o = acc;
        }
    }
}

/// The Diophantine system: norms, `ψ` and congruence class.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProblemInstance {
    nu1: NormSpec,
    nu2: NormSpec,
    psi: ApproxFunction,
    cong: CongruenceClass,
}

impl ProblemInstance {
    /// Fails unless `ν₂` takes minimum exactly one on nonzero integer vectors.
    pub fn new(nu1: NormSpec, nu2: NormSpec, psi: ApproxFunction, cong: CongruenceClass) -> Result<Self> {
        let d = nu1.dim() + nu2.dim();
        if cong.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: cong.dim(),
            });
        }
        let (min, _) = nu2.integer_min_norm();
        if (min - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::NotNormalized { min });
        }
        Ok(ProblemInstance {
            nu1,
            nu2,
            psi,
            cong,
        })
    }

    pub fn m(&self) -> usize {
        self.nu1.dim()
    }

    pub fn n(&self) -> usize {
        self.nu2.dim()
    }

    pub fn d(&self) -> usize {
        self.m() + self.n()
    }

    pub fn nu1(&self) -> &NormSpec {
        &self.nu1
    }

    pub fn nu2(&self) -> &NormSpec {
        &self.nu2
    }

    pub fn psi(&self) -> &ApproxFunction {
        &self.psi
    }

    pub fn congruence(&self) -> &CongruenceClass {
        &self.cong
    }

    pub fn with_congruence(&self, cong: CongruenceClass) -> Result<Self> {
        Self::new(self.nu1.clone(), self.nu2.clone(), self.psi.clone(), cong)
    }

    /// The asymptotic statement assumes `d ≥ 3`; counting works regardless.
    pub fn below_dimension_hypothesis(&self) -> bool {
        self.d() < 3
    }

    pub fn region_params(&self, t: f64) -> Result<FamilyParams> {
        FamilyParams::new(self.nu1.clone(), self.nu2.clone(), self.psi.clone(), t)
    }

    /// Main-term constant `N^{-d}·c_{ν₁}·c_{ν₂}`.
    pub fn main_term_constant(&self) -> f64 {
        let n = self.cong.modulus() as f64;
        n.powi(-(self.d() as i32)) * self.nu1.ball_volume_constant() * self.nu2.ball_volume_constant()
    }

    fn check_theta(&self, theta: &ThetaMatrix) -> Result<()> {
        if theta.rows != self.m() || theta.cols != self.n() {
            return Err(Error::invalid(format!(
                "ϑ must be {}×{}, got {}×{}",
                self.m(),
                self.n(),
                theta.rows,
                theta.cols
            )));
        }
        Ok(())
    }
}

fn check_t(t: f64) -> Result<()> {
    if !(t > 1.0 && t.is_finite()) {
        return Err(Error::invalid(format!("T must be finite and > 1, got {t}")));
    }
    Ok(())
}

/// Range `[k_lo, k_hi]` of `k` with `a < v + kN < b`, comparisons done on
/// `(v + kN) as f64`. Empty when `k_lo > k_hi`.
fn congruent_k_range(a: f64, b: f64, v: i64, modulus: i64) -> (i64, i64) {
    let x = |k: i64| (v + k * modulus) as f64;
    let nf = modulus as f64;
    let vf = v as f64;
    let mut lo = ((a - vf) / nf).floor() as i64 + 1;
    while x(lo - 1) > a {
        lo -= 1;
    }
    while x(lo) <= a {
        lo += 1;
    }
    let mut hi = ((b - vf) / nf).ceil() as i64 - 1;
    while x(hi + 1) < b {
        hi += 1;
    }
    while x(hi) >= b {
        hi -= 1;
    }
    (lo, hi)
}

/// `#{x ∈ Z : a < x < b, x ≡ v (mod N)}`.
pub fn count_congruent_in_interval(a: f64, b: f64, v: i64, modulus: u64) -> u64 {
    assert!(modulus >= 1, "modulus must be positive");
    if !(a < b) {
        return 0;
    }
    let (lo, hi) = congruent_k_range(a, b, v.rem_euclid(modulus as i64), modulus as i64);
    if hi < lo {
        0
    } else {
        (hi - lo + 1) as u64
    }
}

/// Integers `x ≡ v (mod N)` with `|x| ≤ radius`, ascending.
fn congruent_values(radius: i64, v: i64, modulus: i64) -> Vec<i64> {
    let start = v + (-radius - v).div_euclid(modulus) * modulus;
    let start = if start < -radius { start + modulus } else { start };
    (0..)
        .map(|k| start + k * modulus)
        .take_while(|&x| x <= radius)
        .collect()
}

/// The admissible `q`: candidate values per coordinate, enumerated as an
/// odometer, filtered by `1 ≤ ν₂(q)^n < T`.
struct QScan<'a> {
    inst: &'a ProblemInstance,
    t_max: f64,
    coords: Vec<Vec<i64>>,
}

impl<'a> QScan<'a> {
    fn new(inst: &'a ProblemInstance, t_max: f64) -> Self {
        let n = inst.n();
        let m = inst.m();
        let modulus = inst.cong.modulus() as i64;
        // ‖q‖_∞ ≤ ν₂(q)/κ_low < T^{1/n}/κ_low
        let radius = (t_max.powf(1.0 / n as f64) / inst.nu2.kappa_low()).floor() as i64 + 1;
        let coords = (0..n)
            .map(|j| congruent_values(radius, inst.cong.residues[m + j], modulus))
            .collect();
        QScan { inst, t_max, coords }
    }

    /// Calls `f(q, ν₂(q)^n)` for each admissible `q` whose first coordinate
    /// is `coords[0][first]`.
    fn for_each_with_first(&self, first: usize, mut f: impl FnMut(&[i64], f64)) {
        let n = self.coords.len();
        let mut idx = vec![0usize; n];
        idx[0] = first;
        let mut q: Vec<i64> = idx.iter().zip(&self.coords).map(|(&i, c)| c[i]).collect();
        let mut qf = vec![0.0; n];
        if self.coords.iter().skip(1).any(|c| c.is_empty()) {
            return;
        }
        loop {
            for (a, &b) in qf.iter_mut().zip(&q) {
                *a = b as f64;
            }
            let t = self.inst.nu2.value(&qf).powi(n as i32);
            if (1.0..self.t_max).contains(&t) {
                f(&q, t);
            }
            let mut k = 1;
            loop {
                if k >= n {
                    return;
                }
                idx[k] += 1;
                if idx[k] < self.coords[k].len() {
                    q[k] = self.coords[k][idx[k]];
                    break;
                }
                idx[k] = 0;
                q[k] = self.coords[k][0];
                k += 1;
            }
        }
    }

    fn first_len(&self) -> usize {
        self.coords[0].len()
    }
}

/// Every `q ≡ v_q (mod N)` with `1 ≤ ν₂(q)^n < T`, paired with `ν₂(q)^n`.
pub fn enumerate_q(inst: &ProblemInstance, t: f64) -> Result<Vec<(Vec<i64>, f64)>> {
    check_t(t)?;
    let scan = QScan::new(inst, t);
    let mut out = Vec::new();
    for first in 0..scan.first_len() {
        scan.for_each_with_first(first, |q, tq| out.push((q.to_vec(), tq)));
    }
    Ok(out)
}

/// Count plus diagnostics.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CountReport {
    pub count: u64,
    /// Candidates whose `ν₁(ϑq + p)^m` lies within [`NEAR_TIE_TOL`] of `ψ(ν₂(q)^n)`.
    pub near_ties: u64,
}

/// Per-`q` counter of admissible `p`.
struct PCounter<'a> {
    inst: &'a ProblemInstance,
    theta: &'a ThetaMatrix,
    modulus: i64,
    shift: Vec<f64>,
    u: Vec<f64>,
    near_ties: u64,
}

impl<'a> PCounter<'a> {
    fn new(inst: &'a ProblemInstance, theta: &'a ThetaMatrix) -> Self {
        let m = inst.m();
        PCounter {
            inst,
            theta,
            modulus: inst.cong.modulus() as i64,
            shift: vec![0.0; m],
            u: vec![0.0; m],
            near_ties: 0,
        }
    }

    fn count(&mut self, q: &[i64], tq: f64) -> Result<u64> {
        let psi_t = self.inst.psi.value(tq);
        self.theta.apply_int(q, &mut self.shift);
        if self.inst.nu1.is_sup_like() {
            self.count_sup(psi_t)
        } else {
            Ok(self.count_general(psi_t))
        }
    }

    /// For a multiple of the sup norm the condition splits per coordinate:
    /// `g(|s_i + p_i|) < ψ` with `g(z) = (f·z)^m`, and on each axis the
    /// solutions form one run of consecutive residues.
    fn count_sup(&mut self, psi_t: f64) -> Result<u64> {
        let m = self.inst.m();
        let nu1 = &self.inst.nu1;
        let n = self.modulus;
        let radius = psi_t.powf(1.0 / m as f64) / nu1.kappa_low();
        let mut total: u64 = 1;
        for i in 0..m {
            let s = self.shift[i];
            let v = self.inst.cong.residues[i];
            let g = |k: i64| nu1.apply_factor((s + (v + k * n) as f64).abs()).powi(m as i32);
            let ok = |k: i64| g(k) < psi_t;
            let (mut lo, mut hi) = congruent_k_range(-s - radius, -s + radius, v, n);
            if lo > hi {
                // empty by floor arithmetic; rounding can still admit a
                // single boundary residue
                lo = hi + 1;
                if ok(hi) {
                    lo = hi;
                } else if ok(lo) {
                    hi = lo;
                }
            }
            while lo <= hi && !ok(lo) {
                lo += 1;
            }
            while lo <= hi && !ok(hi) {
                hi -= 1;
            }
            if lo <= hi {
                while ok(lo - 1) {
                    lo -= 1;
                }
                while ok(hi + 1) {
                    hi += 1;
                }
            }
            for k in [lo - 1, lo, hi, hi + 1] {
                if (g(k) - psi_t).abs() < NEAR_TIE_TOL {
                    self.near_ties += 1;
                }
            }
            let c = if lo <= hi { (hi - lo + 1) as u64 } else { 0 };
            total = total.checked_mul(c).ok_or(Error::Overflow)?;
            if total == 0 {
                break;
            }
        }
        Ok(total)
    }

    /// Scan the `p`-box `‖ϑq + p‖_∞ ≤ r/κ_low` and test the norm directly.
    fn count_general(&mut self, psi_t: f64) -> u64 {
        let m = self.inst.m();
        let nu1 = &self.inst.nu1;
        let n = self.modulus;
        let radius = psi_t.powf(1.0 / m as f64) / nu1.kappa_low() * (1.0 + 1e-9);
        let mut ranges = Vec::with_capacity(m);
        for i in 0..m {
            let s = self.shift[i];
            let v = self.inst.cong.residues[i];
            let (lo, hi) = congruent_k_range(-s - radius, -s + radius, v, n);
            if lo > hi {
                return 0;
            }
            ranges.push((lo, hi));
        }
        let mut k: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        let mut count = 0;
        loop {
            for i in 0..m {
                self.u[i] = self.shift[i] + (self.inst.cong.residues[i] + k[i] * n) as f64;
            }
            let val = nu1.value(&self.u).powi(m as i32);
            if val < psi_t {
                count += 1;
            }
            if (val - psi_t).abs() < NEAR_TIE_TOL {
                self.near_ties += 1;
            }
            let mut j = 0;
            loop {
                if j == m {
                    return count;
                }
                if k[j] < ranges[j].1 {
                    k[j] += 1;
                    break;
                }
                k[j] = ranges[j].0;
                j += 1;
            }
        }
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid("T grid is empty"));
    }
    for &t in grid {
        check_t(t)?;
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("T grid must be strictly increasing"));
    }
    Ok(())
}

/// `𝒩(ϑ, T_i)` for every `T_i` of an increasing grid in a single pass over
/// `q`, with near-tie diagnostics summed over the whole pass.
pub fn count_solutions_grid_report(
    inst: &ProblemInstance,
    theta: &ThetaMatrix,
    grid: &[f64],
) -> Result<(Vec<u64>, u64)> {
    inst.check_theta(theta)?;
    check_grid(grid)?;
    let scan = QScan::new(inst, *grid.last().expect("grid is non-empty"));
    let buckets = grid.len();

    let partials: Vec<Result<(Vec<u64>, u64)>> = (0..scan.first_len())
        .into_par_iter()
        .map(|first| {
            let mut counter = PCounter::new(inst, theta);
            let mut hist = vec![0u64; buckets];
            let mut err = None;
            scan.for_each_with_first(first, |q, tq| {
                if err.is_some() {
                    return;
                }
                match counter.count(q, tq) {
                    Ok(0) => {}
                    Ok(c) => {
                        // first grid point strictly above t_q
                        let b = grid.partition_point(|&g| g <= tq);
                        hist[b] += c;
                    }
                    Err(e) => err = Some(e),
                }
            });
            match err {
                Some(e) => Err(e),
                None => Ok((hist, counter.near_ties)),
            }
        })
        .collect();

    let mut hist = vec![0u64; buckets];
    let mut near = 0u64;
    for part in partials {
        let (h, nt) = part?;
        for (a, b) in hist.iter_mut().zip(h) {
            *a = a.checked_add(b).ok_or(Error::Overflow)?;
        }
        near += nt;
    }
    let mut acc = 0u64;
    for h in hist.iter_mut() {
        acc = acc.checked_add(*h).ok_or(Error::Overflow)?;
        *h = acc;
    }
    Ok((hist, near))
}

pub fn count_solutions_grid(inst: &ProblemInstance, theta: &ThetaMatrix, grid: &[f64]) -> Result<Vec<u64>> {
    Ok(count_solutions_grid_report(inst, theta, grid)?.0)
}

pub fn count_solutions_report(inst: &ProblemInstance, theta: &ThetaMatrix, t: f64) -> Result<CountReport> {
    let (counts, near_ties) = count_solutions_grid_report(inst, theta, &[t])?;
    Ok(CountReport {
        count: counts[0],
        near_ties,
    })
}

/// `𝒩(ϑ, T)`.
pub fn count_solutions(inst: &ProblemInstance, theta: &ThetaMatrix, t: f64) -> Result<u64> {
    Ok(count_solutions_report(inst, theta, t)?.count)
}

/// `#(u(ϑ)(NZ^d + v) ∩ E_T)`: walk the lattice points `(ϑq + p, q)` inside
/// the bounding box of `E_T` and test region membership.
pub fn count_via_lattice_points(inst: &ProblemInstance, theta: &ThetaMatrix, t: f64) -> Result<u64> {
    inst.check_theta(theta)?;
    check_t(t)?;
    let region = Region::e_t(Arc::new(inst.region_params(t)?));
    let bbox = region.bounding_box();
    let (m, n) = (inst.m(), inst.n());
    let modulus = inst.cong.modulus() as i64;
    let res = inst.cong.residues();

    // integers x ≡ r (mod N) with lo ≤ x ≤ hi
    let residue_run = |lo: f64, hi: f64, r: i64| -> (i64, i64) {
        let k_lo = ((lo - r as f64) / modulus as f64).ceil() as i64 - 1;
        let k_hi = ((hi - r as f64) / modulus as f64).floor() as i64 + 1;
        (r + k_lo * modulus, r + k_hi * modulus)
    };

    let q_runs: Vec<(i64, i64)> = (0..n)
        .map(|j| residue_run(bbox.lo()[m + j], bbox.hi()[m + j], res[m + j]))
        .collect();
    let mut q: Vec<i64> = q_runs.iter().map(|r| r.0).collect();
    let mut point = vec![0.0; m + n];
    let mut shift = vec![0.0; m];
    let mut count = 0u64;
    'q: loop {
        for j in 0..n {
            point[m + j] = q[j] as f64;
        }
        theta.apply_int(&q, &mut shift);
        let p_runs: Vec<(i64, i64)> = (0..m)
            .map(|i| residue_run(bbox.lo()[i] - shift[i], bbox.hi()[i] - shift[i], res[i]))
            .collect();
        let mut p: Vec<i64> = p_runs.iter().map(|r| r.0).collect();
        'p: loop {
            for i in 0..m {
                point[i] = shift[i] + p[i] as f64;
            }
            if region.contains_point(&point) {
                count = count.checked_add(1).ok_or(Error::Overflow)?;
            }
            for i in 0..m {
                if p[i] < p_runs[i].1 {
                    p[i] += modulus;
                    continue 'p;
                }
                p[i] = p_runs[i].0;
            }
            break;
        }
        for j in 0..n {
            if q[j] < q_runs[j].1 {
                q[j] += modulus;
                continue 'q;
            }
            q[j] = q_runs[j].0;
        }
        break;
    }
    Ok(count)
}

/// `#(u(ϑ)(Z^d + v/N) ∩ N^{-1}E_T)`, testing membership in the scaled region
/// through homogeneity: `(x, y) ∈ N^{-1}E_T` iff
/// `ν₁(x)^m < N^{-m}ψ(N^n·ν₂(y)^n)` and `N^{-n} ≤ ν₂(y)^n < N^{-n}T`.
pub fn count_scaled_affine(inst: &ProblemInstance, theta: &ThetaMatrix, t: f64) -> Result<u64> {
    inst.check_theta(theta)?;
    check_t(t)?;
    let (m, n) = (inst.m(), inst.n());
    let nf = inst.cong.modulus() as f64;
    let inv_n = 1.0 / nf;
    let shift: Vec<f64> = inst.cong.residues().iter().map(|&r| r as f64 / nf).collect();
    let b_lo = inv_n.powi(n as i32);
    let b_hi = t * inv_n.powi(n as i32);

    let ry = (b_hi.powf(1.0 / n as f64) / inst.nu2.kappa_low()).ceil() as i64 + 1;
    let rx = (inst.psi.value(1.0).powf(1.0 / m as f64) * inv_n / inst.nu1.kappa_low()).ceil() as i64 + 1;

    let mut zq = vec![-ry; n];
    let mut y = vec![0.0; n];
    let mut sx = vec![0.0; m];
    let mut x = vec![0.0; m];
    let mut count = 0u64;
    'q: loop {
        for j in 0..n {
            y[j] = zq[j] as f64 + shift[m + j];
        }
        let b = inst.nu2.value(&y).powi(n as i32);
        if b >= b_lo && b < b_hi {
            let bound = inst.psi.value(b * nf.powi(n as i32)) * inv_n.powi(m as i32);
            theta.apply(&y, &mut sx);
            let centers: Vec<i64> = sx.iter().map(|s| (-s).round() as i64).collect();
            let mut zp: Vec<i64> = centers.iter().map(|c| c - rx).collect();
            'p: loop {
                for i in 0..m {
                    x[i] = sx[i] + (zp[i] as f64 + shift[i]);
                }
                if inst.nu1.value(&x).powi(m as i32) < bound {
                    count = count.checked_add(1).ok_or(Error::Overflow)?;
                }
                for i in 0..m {
                    if zp[i] < centers[i] + rx {
                        zp[i] += 1;
                        continue 'p;
                    }
                    zp[i] = centers[i] - rx;
                }
                break;
            }
        }
        for j in 0..n {
            if zq[j] < ry {
                zq[j] += 1;
                continue 'q;
            }
            zq[j] = -ry;
        }
        break;
    }
    Ok(count)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(norm1: &str, norm2: &str, m: usize, n: usize, psi: &str, res: &[i64], modulus: u64) -> ProblemInstance {
        ProblemInstance::new(
            NormSpec::parse(norm1, m).unwrap(),
            NormSpec::parse(norm2, n).unwrap(),
            ApproxFunction::parse(psi).unwrap(),
            CongruenceClass::new(res.to_vec(), modulus).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn interval_kernel_examples() {
        assert_eq!(count_congruent_in_interval(0.0, 10.0, 1, 3), 3);
        assert_eq!(count_congruent_in_interval(-0.5, 0.5, 0, 1), 1);
        assert_eq!(count_congruent_in_interval(-2.0, 2.0, 0, 2), 1);
        assert_eq!(count_congruent_in_interval(2.0, 2.0, 0, 1), 0);
        assert_eq!(count_congruent_in_interval(3.0, -3.0, 0, 1), 0);
        assert_eq!(count_congruent_in_interval(-7.5, 7.5, -1, 5), 3); // -6, -1, 4
    }

    #[test]
    fn interval_kernel_matches_scan() {
        let mut rng = crate::rng::stream_rng(1, 0);
        use rand::Rng;
        for _ in 0..2000 {
            let a: f64 = rng.random_range(-30.0..30.0);
            let b: f64 = a + rng.random_range(-2.0..25.0);
            let n: u64 = rng.random_range(1..6);
            let v: i64 = rng.random_range(-10..10);
            let scan = (-100i64..100)
                .filter(|&x| (x as f64) > a && (x as f64) < b && (x - v).rem_euclid(n as i64) == 0)
                .count() as u64;
            assert_eq!(count_congruent_in_interval(a, b, v, n), scan, "{a} {b} {v} {n}");
        }
    }

    #[test]
    fn congruence_class_basics() {
        let c = CongruenceClass::new(vec![-1, 4, 6], 4).unwrap();
        assert_eq!(c.residues(), &[3, 0, 2]);
        assert_eq!(c.content(), 1);
        assert_eq!(CongruenceClass::new(vec![2, 0, 6], 4).unwrap().content(), 2);
        assert_eq!(CongruenceClass::trivial(3).content(), 1);
        assert!(CongruenceClass::new(vec![0], 0).is_err());
        assert!(c.contains(&[3, -4, 2]));
        assert!(!c.contains(&[3, -4, 3]));
    }

    #[test]
    fn theta_parsing() {
        let t = ThetaMatrix::parse("0;0", 2, 1).unwrap();
        assert_eq!(t.entries(), &[0.0, 0.0]);
        let t = ThetaMatrix::parse("1,2;3,4", 2, 2).unwrap();
        let mut out = [0.0; 2];
        t.apply_int(&[1, -1], &mut out);
        assert_eq!(out, [-1.0, -1.0]);
        assert!(ThetaMatrix::parse("1,2;3", 2, 2).is_err());
        assert!(ThetaMatrix::parse("1;2;3", 2, 1).is_err());
        assert!(ThetaMatrix::parse("x;2", 2, 1).is_err());
    }

    #[test]
    fn instance_requires_normalized_nu2() {
        let r = ProblemInstance::new(
            NormSpec::sup(2),
            NormSpec::sup(1).scaled(2.0).unwrap(),
            ApproxFunction::constant(1.0).unwrap(),
            CongruenceClass::trivial(3),
        );
        assert!(matches!(r, Err(Error::NotNormalized { .. })));
        let r = ProblemInstance::new(
            NormSpec::sup(2),
            NormSpec::sup(1),
            ApproxFunction::constant(1.0).unwrap(),
            CongruenceClass::trivial(4),
        );
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
        let low = inst("sup", "sup", 1, 1, "const:1", &[0, 0], 1);
        assert!(low.below_dimension_hypothesis());
    }

    #[test]
    fn enumerate_q_examples() {
        let i = inst("sup", "sup", 2, 1, "const:1", &[0, 0, 1], 2);
        let qs: Vec<i64> = enumerate_q(&i, 5.0).unwrap().into_iter().map(|(q, _)| q[0]).collect();
        assert_eq!(qs, vec![-3, -1, 1, 3]);

        let i = inst("sup", "sup", 2, 1, "const:1", &[0, 0, 0], 1);
        let mut qs: Vec<i64> = enumerate_q(&i, 5.0).unwrap().into_iter().map(|(q, _)| q[0]).collect();
        qs.sort();
        assert_eq!(qs, vec![-4, -3, -2, -1, 1, 2, 3, 4]);

        let i = inst("sup", "sup", 1, 2, "const:1", &[0, 0, 0], 1);
        let all = enumerate_q(&i, 4.0).unwrap();
        assert_eq!(all.len(), 8);
        assert!(all.iter().all(|(q, t)| q.iter().map(|v| v.abs()).max() == Some(1) && *t == 1.0));
    }

    #[test]
    fn count_examples() {
        let i = inst("sup", "sup", 2, 1, "const:0.9", &[0, 0, 0], 1);
        let theta = ThetaMatrix::zeros(2, 1);
        assert_eq!(count_solutions(&i, &theta, 6.0).unwrap(), 10);
        assert_eq!(count_via_lattice_points(&i, &theta, 6.0).unwrap(), 10);
        let i2 = i.with_congruence(CongruenceClass::new(vec![0, 0, 1], 2).unwrap()).unwrap();
        assert_eq!(count_solutions(&i2, &theta, 6.0).unwrap(), 6);
        assert_eq!(count_via_lattice_points(&i2, &theta, 6.0).unwrap(), 6);
        assert_eq!(count_scaled_affine(&i2, &theta, 6.0).unwrap(), 6);
    }

    #[test]
    fn grid_examples() {
        let i = inst("sup", "sup", 2, 1, "const:0.9", &[0, 0, 0], 1);
        let theta = ThetaMatrix::zeros(2, 1);
        assert_eq!(count_solutions_grid(&i, &theta, &[6.0]).unwrap(), vec![10]);
        let g = count_solutions_grid(&i, &theta, &[2.0, 6.0]).unwrap();
        assert_eq!(g, vec![2, 10]);
        assert!(count_solutions_grid(&i, &theta, &[6.0, 2.0]).is_err());
        assert!(count_solutions_grid(&i, &theta, &[1.0]).is_err());
        assert!(count_solutions(&i, &theta, 0.5).is_err());
    }

    #[test]
    fn theta_shape_is_checked() {
        let i = inst("sup", "sup", 2, 1, "const:0.9", &[0, 0, 0], 1);
        assert!(count_solutions(&i, &ThetaMatrix::zeros(1, 2), 6.0).is_err());
        assert!(count_via_lattice_points(&i, &ThetaMatrix::zeros(1, 2), 6.0).is_err());
    }

    #[test]
    fn boundary_ties_follow_strict_inequality() {
        // ϑ = 1/2, ψ = 1/4 at q = 1 with m = 2: |1/2 + p|² = 1/4 is not < 1/4
        let i = inst("sup", "sup", 2, 1, "const:0.25", &[0, 0, 0], 1);
        let theta = ThetaMatrix::parse("0.5;0.5", 2, 1).unwrap();
        let r = count_solutions_report(&i, &theta, 1.5).unwrap();
        assert_eq!(r.count, 0);
        assert!(r.near_ties > 0);
        assert_eq!(count_via_lattice_points(&i, &theta, 1.5).unwrap(), 0);
    }

    #[test]
    fn lp_norm_path_agrees_with_lattice_walk() {
        let i = inst("lp:2", "lp:1", 2, 2, "pow:1:0.5", &[1, 0, 1, 2], 3);
        let theta = ThetaMatrix::parse("0.31,0.77;0.12,0.53", 2, 2).unwrap();
        for t in [3.3, 17.9, 40.2] {
            assert_eq!(
                count_solutions(&i, &theta, t).unwrap(),
                count_via_lattice_points(&i, &theta, t).unwrap()
            );
        }
    }
}
