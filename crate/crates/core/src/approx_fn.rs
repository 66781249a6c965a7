//! The approximating function `ψ : [1, ∞) → (0, ∞)`.

use std::fmt;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Whether `Σ_{t≥1} ψ(t)` diverges.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Divergence {
    Divergent,
    Convergent,
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Family {
    /// `c·t^{-s}`
    Power { c: f64, s: f64 },
    /// `c / (t·log(e·t)^s)`
    PowerLog { c: f64, s: f64 },
    Constant { c: f64 },
    /// Linear interpolation between knots, constant after the last one.
    Table { knots: Vec<(f64, f64)> },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ApproxFunction {
    family: Family,
    #[serde(skip)]
    source: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Admissibility {
    pub positive: bool,
    pub nonincreasing: bool,
    pub divergent: Divergence,
}

impl Admissibility {
    pub fn is_admissible(&self) -> bool {
        self.positive && self.nonincreasing && self.divergent == Divergence::Divergent
    }
}

fn check_coeff(c: f64, s: f64) -> Result<()> {
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::invalid(format!("ψ coefficient must be positive, got {c}")));
    }
    if !(s.is_finite() && s >= 0.0) {
        return Err(Error::invalid(format!("ψ exponent must be non-negative, got {s}")));
    }
    Ok(())
}

impl ApproxFunction {
    pub fn power(c: f64, s: f64) -> Result<Self> {
        check_coeff(c, s)?;
        Ok(Self::from_family(Family::Power { c, s }))
    }

    pub fn power_log(c: f64, s: f64) -> Result<Self> {
        check_coeff(c, s)?;
        Ok(Self::from_family(Family::PowerLog { c, s }))
    }

    pub fn constant(c: f64) -> Result<Self> {
        check_coeff(c, 0.0)?;
        Ok(Self::from_family(Family::Constant { c }))
    }

    /// Piecewise-linear table. Knots must start at `t ≤ 1`, be strictly
    /// increasing in `t`, and carry positive non-increasing values.
    pub fn table(knots: Vec<(f64, f64)>) -> Result<Self> {
        let first = knots
            .first()
            .ok_or_else(|| Error::invalid("ψ table needs at least one knot"))?;
        if first.0 > 1.0 {
            return Err(Error::invalid("first ψ table knot must be at t <= 1"));
        }
        for &(t, v) in &knots {
            if !(t.is_finite() && v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("bad ψ table knot ({t}, {v})")));
            }
        }
        for w in knots.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::invalid("ψ table knots must be strictly increasing in t"));
            }
            if w[1].1 > w[0].1 {
                return Err(Error::invalid("ψ table values must be non-increasing"));
            }
        }
        Ok(Self::from_family(Family::Table { knots }))
    }

    fn from_family(family: Family) -> Self {
        ApproxFunction {
            family,
            source: None,
        }
    }

    /// Parses `pow:<c>:<s>`, `powlog:<c>:<s>`, `const:<c>` or `table:<csv path>`.
    pub fn parse(text: &str) -> Result<Self> {
        let s = text.trim();
        let num = |field: &str| -> Result<f64> {
            field
                .parse::<f64>()
                .map_err(|e| Error::parse("ψ", text, format!("bad number {field:?}: {e}")))
        };
        let two = |rest: &str| -> Result<(f64, f64)> {
            let (a, b) = rest
                .split_once(':')
                .ok_or_else(|| Error::parse("ψ", text, "expected <c>:<s>"))?;
            Ok((num(a)?, num(b)?))
        };
        if let Some(rest) = s.strip_prefix("pow:") {
            let (c, e) = two(rest)?;
            return Self::power(c, e);
        }
        if let Some(rest) = s.strip_prefix("powlog:") {
            let (c, e) = two(rest)?;
            return Self::power_log(c, e);
        }
        if let Some(rest) = s.strip_prefix("const:") {
            return Self::constant(num(rest)?);
        }
        if let Some(path) = s.strip_prefix("table:") {
            let mut f = Self::table(read_table(Path::new(path))?)?;
            f.source = Some(s.to_owned());
            return Ok(f);
        }
        Err(Error::parse(
            "ψ",
            text,
            "expected pow:<c>:<s>, powlog:<c>:<s>, const:<c> or table:<path>",
        ))
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    /// Analytic divergence of `Σψ(t)`; tables are always `Unknown`.
    pub fn divergence(&self) -> Divergence {
        match self.family {
            Family::Power { s, .. } | Family::PowerLog { s, .. } => {
                if s <= 1.0 {
                    Divergence::Divergent
                } else {
                    Divergence::Convergent
                }
            }
            Family::Constant { .. } => Divergence::Divergent,
            Family::Table { .. } => Divergence::Unknown,
        }
    }

    /// `ψ(t)` for `t ≥ 1`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t >= 1.0) {
            return Err(Error::invalid(format!("ψ is defined on [1, ∞), got t = {t}")));
        }
        Ok(self.value(t))
    }

    /// `ψ(t)` without the domain check.
    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        match &self.family {
            Family::Power { c, s } => {
                if *s == 0.0 {
                    *c
                } else if *s == 0.5 {
                    c / t.sqrt()
                } else if *s == 1.0 {
                    c / t
                } else {
                    c * t.powf(-s)
                }
            }
            Family::PowerLog { c, s } => c / (t * (1.0 + t.ln()).powf(*s)),
            Family::Constant { c } => *c,
            Family::Table { knots } => table_value(knots, t),
        }
    }

    /// `Ψ(T) = Σ_{1 ≤ t < T} ψ(t)` over integers `t`.
    pub fn partial_sum(&self, upper: f64) -> f64 {
        let last = last_integer_below(upper);
        let mut acc = Neumaier::default();
        for t in 1..=last {
            acc.add(self.value(t as f64));
        }
        acc.total()
    }

    /// `Ψ` evaluated along an increasing grid in one pass.
    pub fn partial_sums(&self, grid: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(grid.len());
        let mut acc = Neumaier::default();
        let mut t = 1u64;
        for &upper in grid {
            let last = last_integer_below(upper);
            while t <= last {
                acc.add(self.value(t as f64));
                t += 1;
            }
            out.push(acc.total());
        }
        out
    }

    /// `∫_1^T ψ(r) dr`, zero for `T ≤ 1`.
    pub fn integral(&self, upper: f64) -> f64 {
        if upper <= 1.0 {
            return 0.0;
        }
        match &self.family {
            Family::Power { c, s } => {
                if *s == 1.0 {
                    c * upper.ln()
                } else {
                    c * (upper.powf(1.0 - s) - 1.0) / (1.0 - s)
                }
            }
            Family::PowerLog { c, s } => {
                let u = 1.0 + upper.ln();
                if *s == 1.0 {
                    c * u.ln()
                } else {
                    c * (u.powf(1.0 - s) - 1.0) / (1.0 - s)
                }
            }
            Family::Constant { c } => c * (upper - 1.0),
            Family::Table { knots } => table_integral(knots, upper),
        }
    }

    /// `∫_a^b ψ(r) dr` for `1 ≤ a`; zero when `b ≤ a`.
    pub fn integral_between(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            0.0
        } else {
            self.integral(b) - self.integral(a)
        }
    }

    /// Grid check of positivity and monotonicity on a geometric grid of
    /// 1000 points spanning `[1, 10⁶]`, plus the analytic divergence flag.
    pub fn check_admissible(&self) -> Admissibility {
        const POINTS: usize = 1000;
        let ratio = (1e6f64).powf(1.0 / (POINTS - 1) as f64);
        let mut positive = true;
        let mut nonincreasing = true;
        let mut prev = f64::INFINITY;
        for i in 0..POINTS {
            let t = if i + 1 == POINTS { 1e6 } else { ratio.powi(i as i32) };
            let v = self.value(t);
            positive &= v > 0.0 && v.is_finite();
            nonincreasing &= v <= prev;
            prev = v;
        }
        Admissibility {
            positive,
            nonincreasing,
            divergent: self.divergence(),
        }
    }
}

impl fmt::Display for ApproxFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(src) = &self.source {
            return write!(f, "{src}");
        }
        match &self.family {
            Family::Power { c, s } => write!(f, "pow:{c}:{s}"),
            Family::PowerLog { c, s } => write!(f, "powlog:{c}:{s}"),
            Family::Constant { c } => write!(f, "const:{c}"),
            Family::Table { knots } => write!(f, "table:<{} knots>", knots.len()),
        }
    }
}

/// Largest integer `t` with `t < upper`, or 0 when `upper ≤ 1`.
fn last_integer_below(upper: f64) -> u64 {
    if upper <= 1.0 {
        0
    } else {
        (upper.ceil() - 1.0) as u64
    }
}

#[derive(Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

fn table_value(knots: &[(f64, f64)], t: f64) -> f64 {
    let idx = knots.partition_point(|k| k.0 <= t);
    if idx == 0 {
        return knots[0].1;
    }
    if idx == knots.len() {
        return knots[idx - 1].1;
    }
    let (t0, v0) = knots[idx - 1];
    let (t1, v1) = knots[idx];
    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
}

fn table_integral(knots: &[(f64, f64)], upper: f64) -> f64 {
    // trapezoids are exact on linear pieces
    let mut total = 0.0;
    let mut a = 1.0;
    let mut breaks: Vec<f64> = knots
        .iter()
        .map(|k| k.0)
        .filter(|&t| t > 1.0 && t < upper)
        .collect();
    breaks.push(upper);
    for b in breaks {
        total += 0.5 * (b - a) * (table_value(knots, a) + table_value(knots, b));
        a = b;
    }
    total
}

fn read_table(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)?;
    let mut knots = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(Error::parse(
                "ψ table",
                &path.display().to_string(),
                format!("row {} has {} columns, expected 2", i + 1, rec.len()),
            ));
        }
        let parsed = (rec[0].parse::<f64>(), rec[1].parse::<f64>());
        match parsed {
            (Ok(t), Ok(v)) => knots.push((t, v)),
            // a non-numeric first row is a header
            _ if i == 0 => continue,
            _ => {
                return Err(Error::parse(
                    "ψ table",
                    &path.display().to_string(),
                    format!("row {} is not numeric", i + 1),
                ))
            }
        }
    }
    Ok(knots)
}
