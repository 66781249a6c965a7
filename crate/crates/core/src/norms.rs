//! Norms on `R^ℓ`: the supremum norm, `L^p` norms and positive multiples of
//! either.
//!
//! Every supported norm `ν` carries comparison constants with the supremum
//! norm, `κ_low·‖x‖_∞ ≤ ν(x) ≤ κ_up·‖x‖_∞`. Bounding boxes for lattice
//! enumeration and certified operator-norm bounds are derived from them.

use std::fmt;

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::stats::{hit_ratio_estimate, Estimate};
use crate::rng::stream_rng;

/// Scale factors closer to one than this collapse to exactly one.
const UNIT_FACTOR_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum BaseNorm {
    Sup,
    Lp(f64),
}

/// A norm `x ↦ factor · base(x)` on `R^dim`.
///
/// Nested scalings are flattened into a single factor so that evaluation
/// performs the same floating-point operations however the norm was built.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormSpec {
    base: BaseNorm,
    factor: f64,
    dim: usize,
}

impl NormSpec {
    pub fn sup(dim: usize) -> Self {
        assert!(dim >= 1, "norm dimension must be positive");
        NormSpec {
            base: BaseNorm::Sup,
            factor: 1.0,
            dim,
        }
    }

    pub fn lp(p: f64, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("norm dimension must be positive"));
        }
        if !(p.is_finite() && p >= 1.0) {
            return Err(Error::invalid(format!("L^p exponent must be finite and >= 1, got {p}")));
        }
        Ok(NormSpec {
            base: BaseNorm::Lp(p),
            factor: 1.0,
            dim,
        })
    }

    /// `factor · self`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::invalid(format!("scale factor must be positive, got {factor}")));
        }
        let mut f = self.factor * factor;
        if (f - 1.0).abs() <= UNIT_FACTOR_TOL {
            f = 1.0;
        }
        Ok(NormSpec { factor: f, ..self.clone() })
    }

    /// Parses the textual encoding `sup`, `lp:<p>` or `scaled:<factor>:<inner>`.
    pub fn parse(text: &str, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("norm dimension must be positive"));
        }
        let s = text.trim();
        if s == "sup" {
            return Ok(Self::sup(dim));
        }
        if let Some(p) = s.strip_prefix("lp:") {
            let p: f64 = p
                .parse()
                .map_err(|e| Error::parse("norm", text, format!("bad exponent: {e}")))?;
            return Self::lp(p, dim);
        }
        if let Some(rest) = s.strip_prefix("scaled:") {
            let (f, inner) = rest
                .split_once(':')
                .ok_or_else(|| Error::parse("norm", text, "expected scaled:<factor>:<inner>"))?;
            let f: f64 = f
                .parse()
                .map_err(|e| Error::parse("norm", text, format!("bad factor: {e}")))?;
            return Self::parse(inner, dim)?.scaled(f);
        }
        Err(Error::parse("norm", text, "expected sup, lp:<p> or scaled:<factor>:<inner>"))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn base(&self) -> BaseNorm {
        self.base
    }

    pub fn factor(&self) -> f64 {
        self.factor
    }

    /// True for the supremum norm and its multiples.
    pub fn is_sup_like(&self) -> bool {
        matches!(self.base, BaseNorm::Sup)
    }

    pub fn kappa_low(&self) -> f64 {
        self.factor
    }

    pub fn kappa_up(&self) -> f64 {
        match self.base {
            BaseNorm::Sup => self.factor,
            BaseNorm::Lp(p) => self.factor * (self.dim as f64).powf(1.0 / p),
        }
    }

    /// `ν(x)`, checking the dimension.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(self.value(x))
    }

    /// `ν(x)` without the dimension check; hot loops use this.
    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let raw = match self.base {
            BaseNorm::Sup => x.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())),
            BaseNorm::Lp(1.0) => x.iter().map(|v| v.abs()).sum(),
            BaseNorm::Lp(2.0) => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
            BaseNorm::Lp(p) => x.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p),
        };
        self.apply_factor(raw)
    }

    /// Multiplies by the scale factor the same way [`NormSpec::value`] does.
    #[inline]
    pub(crate) fn apply_factor(&self, raw: f64) -> f64 {
        if self.factor == 1.0 {
            raw
        } else {
            self.factor * raw
        }
    }

    /// Volume `c_ν` of the open unit ball `{x : ν(x) < 1}`.
    pub fn ball_volume_constant(&self) -> f64 {
        let l = self.dim as i32;
        let base = match self.base {
            BaseNorm::Sup => 2f64.powi(l),
            BaseNorm::Lp(p) => {
                2f64.powi(l) * gamma(1.0 + 1.0 / p).powi(l) / gamma(1.0 + self.dim as f64 / p)
            }
        };
        if self.factor == 1.0 {
            base
        } else {
            base / self.factor.powi(l)
        }
    }

    /// Minimum of `ν` over nonzero integer vectors, with the first minimizer
    /// found in a lexicographic scan.
    ///
    /// The search starts from `ν(e₁)` and scans the box
    /// `‖w‖_∞ ≤ ⌈ν(e₁)/κ_low⌉`, which contains every vector with `ν(w) ≤ ν(e₁)`.
    pub fn integer_min_norm(&self) -> (f64, Vec<i64>) {
        let l = self.dim;
        let mut best_w = vec![0i64; l];
        best_w[0] = 1;
        let e1: Vec<f64> = best_w.iter().map(|&c| c as f64).collect();
        let mut best = self.value(&e1);
        let radius = (best / self.kappa_low()).ceil() as i64;

        let mut w = vec![-radius; l];
        let mut buf = vec![0.0; l];
        loop {
            if w.iter().any(|&c| c != 0) {
                for (b, &c) in buf.iter_mut().zip(&w) {
                    *b = c as f64;
                }
                let v = self.value(&buf);
                if v < best {
                    best = v;
                    best_w.copy_from_slice(&w);
                }
            }
            // odometer increment
            let mut k = 0;
            loop {
                if k == l {
                    return (best, best_w);
                }
                if w[k] < radius {
                    w[k] += 1;
                    break;
                }
                w[k] = -radius;
                k += 1;
            }
        }
    }

    /// Rescales so the minimum over nonzero integer vectors is exactly one.
    pub fn normalize_for_integers(&self) -> NormSpec {
        let (mu, _) = self.integer_min_norm();
        self.scaled(1.0 / mu)
            .expect("integer minimum of a norm is positive and finite")
    }

    /// Monte Carlo estimate of `c_ν` by uniform sampling in the box
    /// `‖x‖_∞ < 1/κ_low`, which contains the unit ball.
    pub fn estimate_ball_volume(&self, samples: u64, seed: u64) -> Estimate {
        let r = 1.0 / self.kappa_low();
        let mut rng = stream_rng(seed, 0);
        let mut x = vec![0.0; self.dim];
        let mut hits = 0u64;
        for _ in 0..samples {
            for xi in x.iter_mut() {
                *xi = rng.random_range(-r..r);
            }
            if self.value(&x) < 1.0 {
                hits += 1;
            }
        }
        hit_ratio_estimate(hits, samples, (2.0 * r).powi(self.dim as i32))
    }
}

impl fmt::Display for NormSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.factor != 1.0 {
            write!(f, "scaled:{}:", self.factor)?;
        }
        match self.base {
            BaseNorm::Sup => write!(f, "sup"),
            BaseNorm::Lp(p) => write!(f, "lp:{p}"),
        }
    }
}

/// Operator norm value together with whether it is exact or only a
/// certified upper bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OperatorNorm {
    pub value: f64,
    pub exact: bool,
}

/// `sup{ν_to(Ax) : ν_from(x) = 1}` for `A` mapping `R^{cols}` to `R^{rows}`.
///
/// Exact for sup→sup (maximum row sum), `L¹→L¹` (maximum column sum) and
/// `L²→L²` (largest singular value by power iteration), each up to the ratio
/// of scale factors. Any other pair gets a certified upper bound.
pub fn operator_norm(a: &DMatrix<f64>, from: &NormSpec, to: &NormSpec) -> Result<OperatorNorm> {
    if a.ncols() != from.dim {
        return Err(Error::DimensionMismatch {
            expected: from.dim,
            got: a.ncols(),
        });
    }
    if a.nrows() != to.dim {
        return Err(Error::DimensionMismatch {
            expected: to.dim,
            got: a.nrows(),
        });
    }
    let ratio = to.factor / from.factor;
    let inf = max_row_sum(a);
    match (from.base, to.base) {
        (BaseNorm::Sup, BaseNorm::Sup) => Ok(OperatorNorm {
            value: ratio * inf,
            exact: true,
        }),
        (BaseNorm::Lp(p), BaseNorm::Lp(q)) if p == 1.0 && q == 1.0 => Ok(OperatorNorm {
            value: ratio * max_col_sum(a),
            exact: true,
        }),
        (BaseNorm::Lp(p), BaseNorm::Lp(q)) if p == 2.0 && q == 2.0 => Ok(OperatorNorm {
            value: ratio * largest_singular_value(a),
            exact: true,
        }),
        (BaseNorm::Lp(p), BaseNorm::Lp(q)) if p == q => {
            // Riesz–Thorin interpolation between the L¹ and sup operator norms.
            let interp = max_col_sum(a).powf(1.0 / p) * inf.powf(1.0 - 1.0 / p);
            let cmp = to.kappa_up() / from.kappa_low() * inf;
            Ok(OperatorNorm {
                value: (ratio * interp).min(cmp),
                exact: false,
            })
        }
        _ => Ok(OperatorNorm {
            value: to.kappa_up() / from.kappa_low() * inf,
            exact: false,
        }),
    }
}

fn max_row_sum(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn max_col_sum(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest singular value of `a` by power iteration on `AᵀA`.
fn largest_singular_value(a: &DMatrix<f64>) -> f64 {
    const TOL: f64 = 1e-12;
    const MAX_ITER: usize = 200_000;
    let gram = a.transpose() * a;
    let c = gram.nrows();
    // Start away from any coordinate-aligned invariant subspace.
    let mut v = nalgebra::DVector::from_fn(c, |i, _| 1.0 + 0.618_033_988_749_895 * (i as f64 + 1.0).sqrt());
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..MAX_ITER {
        let w = &gram * &v;
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / nw;
        if (next - lambda).abs() <= 1e-2 * TOL * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    // One more Rayleigh quotient on the converged vector.
    let w = &gram * &v;
    lambda.max(v.dot(&w)).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lp(p: f64, d: usize) -> NormSpec {
        NormSpec::lp(p, d).unwrap()
    }

    #[test]
    fn eval_examples() {
        assert_eq!(NormSpec::sup(2).eval(&[3.0, -4.0]).unwrap(), 4.0);
        assert_eq!(lp(2.0, 2).eval(&[3.0, 4.0]).unwrap(), 5.0);
        let s = NormSpec::sup(2).scaled(2.0).unwrap();
        assert_eq!(s.eval(&[1.0, 1.0]).unwrap(), 2.0);
    }

    #[test]
    fn eval_dimension_mismatch() {
        assert!(matches!(
            NormSpec::sup(3).eval(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn eval_zero_only_at_origin() {
        for nu in [NormSpec::sup(3), lp(1.0, 3), lp(2.0, 3), lp(3.5, 3)] {
            assert_eq!(nu.value(&[0.0; 3]), 0.0);
            assert!(nu.value(&[0.0, 1e-50, 0.0]) > 0.0);
        }
    }

    #[test]
    fn ball_volume_examples() {
        assert_eq!(NormSpec::sup(3).ball_volume_constant(), 8.0);
        assert!((lp(2.0, 2).ball_volume_constant() - std::f64::consts::PI).abs() < 1e-13);
        assert!((lp(1.0, 2).ball_volume_constant() - 2.0).abs() < 1e-13);
        for l in 1..=6 {
            assert_eq!(NormSpec::sup(l).ball_volume_constant(), 2f64.powi(l as i32));
        }
        // unit ball of lp:2 in R^3 is 4π/3
        assert!((lp(2.0, 3).ball_volume_constant() - 4.0 * std::f64::consts::PI / 3.0).abs() < 1e-12);
        // scaled ball shrinks by factor^ℓ
        let s = lp(1.0, 2).scaled(0.5).unwrap();
        assert!((s.ball_volume_constant() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn ball_volume_matches_monte_carlo() {
        for nu in [NormSpec::sup(2), lp(1.0, 3), lp(2.0, 4), lp(3.0, 2)] {
            let est = nu.estimate_ball_volume(200_000, 7);
            assert!(
                est.z_score(nu.ball_volume_constant()) < 3.0,
                "{nu}: {est:?} vs {}",
                nu.ball_volume_constant()
            );
        }
    }

    #[test]
    fn integer_min_examples() {
        assert_eq!(NormSpec::sup(2).integer_min_norm(), (1.0, vec![1, 0]));
        assert_eq!(lp(2.0, 3).integer_min_norm(), (1.0, vec![1, 0, 0]));
        let half = NormSpec::sup(2).scaled(0.5).unwrap();
        assert_eq!(half.integer_min_norm(), (0.5, vec![1, 0]));
    }

    #[test]
    fn normalize_examples() {
        let s = NormSpec::sup(2).scaled(2.0).unwrap().normalize_for_integers();
        assert_eq!(s, NormSpec::sup(2));
        assert_eq!(lp(2.0, 3).normalize_for_integers(), lp(2.0, 3));
        let s = lp(1.0, 2).scaled(0.5).unwrap().normalize_for_integers();
        assert_eq!(s, lp(1.0, 2));
    }

    #[test]
    fn normalize_is_idempotent() {
        for nu in [
            lp(3.0, 2).scaled(0.37).unwrap(),
            NormSpec::sup(3).scaled(4.2).unwrap(),
            lp(1.5, 3),
        ] {
            let once = nu.normalize_for_integers();
            let twice = once.normalize_for_integers();
            assert!((once.factor() - twice.factor()).abs() <= 1e-12 * once.factor());
            assert!((once.integer_min_norm().0 - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn parse_and_display() {
        assert_eq!(NormSpec::parse("sup", 2).unwrap(), NormSpec::sup(2));
        assert_eq!(NormSpec::parse("lp:2", 3).unwrap(), lp(2.0, 3));
        let s = NormSpec::parse("scaled:0.5:lp:1", 2).unwrap();
        assert_eq!(s.factor(), 0.5);
        assert_eq!(s.base(), BaseNorm::Lp(1.0));
        assert_eq!(s.to_string(), "scaled:0.5:lp:1");
        let nested = NormSpec::parse("scaled:2:scaled:0.5:sup", 1).unwrap();
        assert_eq!(nested, NormSpec::sup(1));
        assert!(NormSpec::parse("lp:0.5", 2).is_err());
        assert!(NormSpec::parse("l2", 2).is_err());
        assert!(NormSpec::parse("scaled:-1:sup", 2).is_err());
    }

    #[test]
    fn operator_norm_examples() {
        let id = DMatrix::<f64>::identity(2, 2);
        let r = operator_norm(&id, &NormSpec::sup(2), &NormSpec::sup(2)).unwrap();
        assert_eq!(r, OperatorNorm { value: 1.0, exact: true });

        let d = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]);
        let r = operator_norm(&d, &lp(2.0, 2), &lp(2.0, 2)).unwrap();
        assert!(r.exact);
        assert!((r.value - 3.0).abs() < 1e-12);

        let shear = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let r = operator_norm(&shear, &NormSpec::sup(2), &NormSpec::sup(2)).unwrap();
        assert_eq!(r, OperatorNorm { value: 2.0, exact: true });
        // golden-ratio singular value of the shear
        let r = operator_norm(&shear, &lp(2.0, 2), &lp(2.0, 2)).unwrap();
        assert!((r.value - (1.0 + 5f64.sqrt()) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn operator_norm_dimension_mismatch() {
        let a = DMatrix::<f64>::zeros(2, 3);
        assert!(operator_norm(&a, &NormSpec::sup(2), &NormSpec::sup(2)).is_err());
        assert!(operator_norm(&a, &NormSpec::sup(3), &NormSpec::sup(3)).is_err());
        assert!(operator_norm(&a, &NormSpec::sup(3), &NormSpec::sup(2)).is_ok());
    }

    #[test]
    fn operator_norm_mixed_is_upper_bound() {
        let a = DMatrix::from_row_slice(1, 2, &[0.3, -0.7]);
        let from = lp(2.0, 2);
        let to = NormSpec::sup(1);
        let r = operator_norm(&a, &from, &to).unwrap();
        assert!(!r.exact);
        // true value is the Euclidean length of the row
        assert!(r.value >= (0.3f64.powi(2) + 0.7f64.powi(2)).sqrt());
    }

    #[test]
    fn sup_operator_norm_is_attained() {
        // x = sign pattern of the heaviest row attains the row sum
        let a = DMatrix::from_row_slice(3, 3, &[0.2, -1.1, 0.4, 0.9, 0.9, -0.05, -0.3, 0.1, 0.2]);
        let r = operator_norm(&a, &NormSpec::sup(3), &NormSpec::sup(3)).unwrap();
        let x = nalgebra::DVector::from_vec(vec![1.0, 1.0, -1.0]);
        let ax = &a * &x;
        let got = NormSpec::sup(3).value(ax.as_slice());
        assert!((got - r.value).abs() < 1e-6);
    }

    fn arb_norm(dim: usize) -> impl Strategy<Value = NormSpec> {
        prop_oneof![
            Just(NormSpec::sup(dim)),
            (1.0f64..6.0).prop_map(move |p| NormSpec::lp(p, dim).unwrap()),
            Just(NormSpec::lp(1.0, dim).unwrap()),
            Just(NormSpec::lp(2.0, dim).unwrap()),
        ]
        .prop_flat_map(|n| (Just(n), 0.1f64..10.0))
        .prop_map(|(n, f)| n.scaled(f).unwrap())
    }

    proptest! {
        #[test]
        fn homogeneous_and_comparable(
            nu in arb_norm(3),
            x in prop::collection::vec(-100.0f64..100.0, 3),
            y in prop::collection::vec(-100.0f64..100.0, 3),
            r in 0.001f64..1000.0,
        ) {
            let vx = nu.value(&x);
            let rx: Vec<f64> = x.iter().map(|v| r * v).collect();
            prop_assert!((nu.value(&rx) - r * vx).abs() <= 1e-12 * r * vx + 1e-300);

            let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
            prop_assert!(nu.value(&sum) <= (vx + nu.value(&y)) * (1.0 + 1e-12));

            let inf = NormSpec::sup(3).value(&x);
            prop_assert!(nu.kappa_low() * inf <= vx * (1.0 + 1e-12));
            prop_assert!(vx <= nu.kappa_up() * inf * (1.0 + 1e-12));
        }

        #[test]
        fn exact_operator_norms_bound_images(
            entries in prop::collection::vec(-2.0f64..2.0, 6),
            x in prop::collection::vec(-1.0f64..1.0, 3),
            which in 0usize..3,
        ) {
            let a = DMatrix::from_row_slice(2, 3, &entries);
            let (from, to) = match which {
                0 => (NormSpec::sup(3), NormSpec::sup(2)),
                1 => (lp(1.0, 3), lp(1.0, 2)),
                _ => (lp(2.0, 3), lp(2.0, 2)),
            };
            let r = operator_norm(&a, &from, &to).unwrap();
            prop_assert!(r.exact);
            let nx = from.value(&x);
            prop_assume!(nx > 1e-9);
            let ax = &a * nalgebra::DVector::from_vec(x.clone());
            prop_assert!(to.value(ax.as_slice()) <= r.value * nx * (1.0 + 1e-10) + 1e-300);
        }

        #[test]
        fn certified_bounds_bound_images(
            entries in prop::collection::vec(-2.0f64..2.0, 4),
            x in prop::collection::vec(-1.0f64..1.0, 2),
            from in arb_norm(2),
            to in arb_norm(2),
        ) {
            let a = DMatrix::from_row_slice(2, 2, &entries);
            let r = operator_norm(&a, &from, &to).unwrap();
            let nx = from.value(&x);
            prop_assume!(nx > 1e-9);
            let ax = &a * nalgebra::DVector::from_vec(x.clone());
            prop_assert!(to.value(ax.as_slice()) <= r.value * nx * (1.0 + 1e-10));
        }
    }
}
