//! Random unimodular and affine lattices, and Monte Carlo checks of the
//! mean-value and second-moment behaviour of lattice point counts.
//!
//! Haar measure on the space of lattices is approximated by Hecke points:
//! the index-`p` sublattices `{x ∈ Z^d : ⟨x, a⟩ ≡ 0 (mod p)}` rescaled by
//! `p^{-1/d}`, for a uniform direction `a`. Samples are additionally turned
//! by a Haar-random rotation. The measure on lattices is invariant under
//! rotations, so this does not change the target distribution, but it
//! removes the alignment of every Hecke lattice with the grid
//! `p^{-1/d} Z^d`, which otherwise biases counts in axis-parallel boxes.
//!
//! The affine fiber over a lattice is sampled as a uniform shift class
//! `w mod N` with `gcd(w, N) = gcd(v, N)`; the affine lattice is
//! `B(Z^d + w/N)`.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::counting::{gcd, CongruenceClass};
use crate::error::{Error, Result};
use crate::geometry::Region;
use crate::rng::{stream_rng, Rng};
use crate::stats::mean_and_variance;

/// Default Hecke prime.
pub const DEFAULT_PRIME: u64 = 40009;

/// Largest condition number accepted by [`count_in_region`].
pub const MAX_CONDITION: f64 = 1e12;

const DET_TOL: f64 = 1e-9;

/// Where a sampled lattice came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct HeckeSource {
    pub prime: u64,
    pub direction: Vec<i64>,
}

/// A lattice of covolume one, given by a basis (columns).
#[derive(Clone, Debug, PartialEq)]
pub struct UnimodularLattice {
    basis: DMatrix<f64>,
    source: Option<HeckeSource>,
}

impl UnimodularLattice {
    pub fn from_basis(basis: DMatrix<f64>) -> Result<Self> {
        if !basis.is_square() || basis.nrows() == 0 {
            return Err(Error::invalid("lattice basis must be a non-empty square matrix"));
        }
        let det = basis.determinant();
        if (det.abs() - 1.0).abs() > DET_TOL {
            return Err(Error::invalid(format!("basis determinant is {det}, expected ±1")));
        }
        Ok(UnimodularLattice { basis, source: None })
    }

    /// `Z^d`.
    pub fn integer(dim: usize) -> Self {
        UnimodularLattice {
            basis: DMatrix::identity(dim, dim),
            source: None,
        }
    }

    /// `p^{-1/d}` times the basis from [`hnf_sublattice_basis`], unreduced and
    /// unrotated.
    pub fn from_hecke(direction: &[i64], prime: u64) -> Result<Self> {
        let int = hnf_sublattice_basis(direction, prime)?;
        Ok(Self::scaled_hecke(&int, direction, prime))
    }

    fn scaled_hecke(int: &DMatrix<i64>, direction: &[i64], prime: u64) -> Self {
        let d = int.nrows();
        let s = (prime as f64).powf(-1.0 / d as f64);
        UnimodularLattice {
            basis: int.map(|x| x as f64 * s),
            source: Some(HeckeSource {
                prime,
                direction: direction.to_vec(),
            }),
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn source(&self) -> Option<&HeckeSource> {
        self.source.as_ref()
    }
}

pub fn is_prime(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    let mut k = 2;
    while k * k <= p {
        if p.is_multiple_of(k) {
            return false;
        }
        k += 1;
    }
    true
}

fn mod_inverse(a: i64, p: i64) -> i64 {
    let (mut r0, mut r1) = (a.rem_euclid(p), p);
    let (mut s0, mut s1) = (1i64, 0i64);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (s0, s1) = (s1, s0 - q * s1);
    }
    s0.rem_euclid(p)
}

/// Integer basis (columns) of `{x ∈ Z^d : ⟨x, a⟩ ≡ 0 (mod p)}`, determinant `±p`.
pub fn hnf_sublattice_basis(a: &[i64], p: u64) -> Result<DMatrix<i64>> {
    if !is_prime(p) {
        return Err(Error::invalid(format!("{p} is not prime")));
    }
    let d = a.len();
    if d == 0 {
        return Err(Error::invalid("direction vector is empty"));
    }
    let pi = p as i64;
    let j = a
        .iter()
        .position(|x| x.rem_euclid(pi) != 0)
        .ok_or_else(|| Error::invalid("direction vector is zero mod p"))?;
    let inv = mod_inverse(a[j], pi);
    let mut b = DMatrix::<i64>::zeros(d, d);
    for i in 0..d {
        if i == j {
            b[(j, j)] = pi;
        } else {
            b[(i, i)] = 1;
            let c = ((a[i].rem_euclid(pi) as i128 * inv as i128) % pi as i128) as i64;
            b[(j, i)] = -c;
        }
    }
    Ok(b)
}

/// LLL reduction (δ = 0.99) of an integer basis given by columns. The
/// lattice is unchanged.
pub fn lll_reduce(basis: &DMatrix<i64>) -> DMatrix<i64> {
    const DELTA: f64 = 0.99;
    let d = basis.ncols();
    let mut cols: Vec<Vec<i64>> = (0..d).map(|j| basis.column(j).iter().copied().collect()).collect();
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();

    let gram_schmidt = |cols: &[Vec<i64>]| {
        let mut star: Vec<Vec<f64>> = Vec::with_capacity(d);
        let mut mu = vec![vec![0.0; d]; d];
        let mut norms = vec![0.0; d];
        for i in 0..d {
            let bi: Vec<f64> = cols[i].iter().map(|&x| x as f64).collect();
            let mut v = bi.clone();
            for j in 0..i {
                mu[i][j] = dot(&bi, &star[j]) / norms[j];
                for (vk, sk) in v.iter_mut().zip(&star[j]) {
                    *vk -= mu[i][j] * sk;
                }
            }
            norms[i] = dot(&v, &v);
            star.push(v);
        }
        (mu, norms)
    };

    let mut k = 1;
    while k < d {
        for j in (0..k).rev() {
            let (mu, _) = gram_schmidt(&cols);
            let r = mu[k][j].round() as i64;
            if r != 0 {
                let bj = cols[j].clone();
                for (x, y) in cols[k].iter_mut().zip(&bj) {
                    *x -= r * y;
                }
            }
        }
        let (mu, norms) = gram_schmidt(&cols);
        if norms[k] >= (DELTA - mu[k][k - 1] * mu[k][k - 1]) * norms[k - 1] {
            k += 1;
        } else {
            cols.swap(k, k - 1);
            k = (k - 1).max(1);
        }
    }
    DMatrix::from_fn(basis.nrows(), d, |i, j| cols[j][i])
}

/// Haar-random element of `SO(d)`.
pub fn haar_rotation(d: usize, rng: &mut Rng) -> DMatrix<f64> {
    let normal = Normal::standard();
    let g = DMatrix::from_fn(d, d, |_, _| {
        let u: f64 = loop {
            let u = rng.random::<f64>();
            if u > 0.0 {
                break u;
            }
        };
        normal.inverse_cdf(u)
    });
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if q.determinant() < 0.0 {
        q.column_mut(0).neg_mut();
    }
    q
}

fn hecke_from_rng(d: usize, p: u64, rng: &mut Rng) -> Result<UnimodularLattice> {
    if d < 2 {
        return Err(Error::invalid("Hecke sampling needs d ≥ 2"));
    }
    if !is_prime(p) {
        return Err(Error::invalid(format!("{p} is not prime")));
    }
    let a: Vec<i64> = loop {
        let a: Vec<i64> = (0..d).map(|_| rng.random_range(0..p as i64)).collect();
        if a.iter().any(|&x| x != 0) {
            break a;
        }
    };
    let int = lll_reduce(&hnf_sublattice_basis(&a, p)?);
    let mut lat = UnimodularLattice::scaled_hecke(&int, &a, p);
    lat.basis = haar_rotation(d, rng) * lat.basis;
    Ok(lat)
}

/// A random Hecke lattice of index `p`, LLL-reduced and rotated.
pub fn hecke_sample(d: usize, p: u64, seed: u64) -> Result<UnimodularLattice> {
    hecke_from_rng(d, p, &mut stream_rng(seed, 0))
}

/// The affine lattice `B(Z^d + w/N)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineLattice {
    lattice: UnimodularLattice,
    shift_class: Vec<i64>,
    modulus: u64,
}

impl AffineLattice {
    pub fn new(lattice: UnimodularLattice, shift_class: Vec<i64>, modulus: u64) -> Result<Self> {
        if modulus == 0 {
            return Err(Error::invalid("modulus N must be at least 1"));
        }
        if shift_class.len() != lattice.dim() {
            return Err(Error::DimensionMismatch {
                expected: lattice.dim(),
                got: shift_class.len(),
            });
        }
        let n = modulus as i64;
        Ok(AffineLattice {
            lattice,
            shift_class: shift_class.into_iter().map(|x| x.rem_euclid(n)).collect(),
            modulus,
        })
    }

    pub fn lattice(&self) -> &UnimodularLattice {
        &self.lattice
    }

    pub fn shift_class(&self) -> &[i64] {
        &self.shift_class
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    /// `B·(w/N)`.
    pub fn shift(&self) -> Vec<f64> {
        let n = self.modulus as f64;
        let w = nalgebra::DVector::from_iterator(self.shift_class.len(), self.shift_class.iter().map(|&x| x as f64 / n));
        (&self.lattice.basis * w).iter().copied().collect()
    }
}

fn fiber_from_rng(lat: UnimodularLattice, cong: &CongruenceClass, rng: &mut Rng) -> Result<AffineLattice> {
    let d = lat.dim();
    if cong.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: cong.dim(),
        });
    }
    let n = cong.modulus();
    let target = cong.content();
    let w = if n == 1 {
        vec![0; d]
    } else {
        loop {
            let w: Vec<i64> = (0..d).map(|_| rng.random_range(0..n as i64)).collect();
            if w.iter().fold(n, |g, &x| gcd(g, x as u64)) == target {
                break w;
            }
        }
    };
    AffineLattice::new(lat, w, n)
}

/// Uniform point of the fiber over `lat`: a shift class with the same
/// content as `v`.
pub fn sample_affine_cover(lat: UnimodularLattice, cong: &CongruenceClass, seed: u64) -> Result<AffineLattice> {
    fiber_from_rng(lat, cong, &mut stream_rng(seed, 1))
}

/// `#(B(Z^d + w/N) ∩ A)`, by scanning every coefficient vector whose image
/// can reach the bounding box of `A`.
pub fn count_in_region(lat: &AffineLattice, region: &Region) -> Result<u64> {
    let d = lat.lattice.dim();
    if region.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: region.dim(),
        });
    }
    let b = &lat.lattice.basis;
    let sv = b.singular_values();
    let cond = sv.max() / sv.min();
    if !(cond <= MAX_CONDITION) {
        return Err(Error::IllConditioned { cond });
    }
    let inv = b.clone().try_inverse().ok_or(Error::IllConditioned { cond: f64::INFINITY })?;
    let bbox = region.bounding_box();
    if bbox.lo().iter().zip(bbox.hi()).any(|(l, h)| h < l) {
        return Ok(0);
    }
    let nf = lat.modulus as f64;
    let w: Vec<f64> = lat.shift_class.iter().map(|&x| x as f64 / nf).collect();

    // coefficient range: B^{-1} of the box corners, minus w/N
    let mut zlo = vec![f64::INFINITY; d];
    let mut zhi = vec![f64::NEG_INFINITY; d];
    for corner in 0..(1usize << d) {
        let x: Vec<f64> = (0..d)
            .map(|i| if corner >> i & 1 == 1 { bbox.hi()[i] } else { bbox.lo()[i] })
            .collect();
        for r in 0..d {
            let c: f64 = (0..d).map(|k| inv[(r, k)] * x[k]).sum::<f64>() - w[r];
            zlo[r] = zlo[r].min(c);
            zhi[r] = zhi[r].max(c);
        }
    }
    let lo: Vec<i64> = zlo.iter().map(|v| v.floor() as i64 - 1).collect();
    let hi: Vec<i64> = zhi.iter().map(|v| v.ceil() as i64 + 1).collect();

    let mut z = lo.clone();
    let mut coeff = vec![0.0; d];
    let mut point = vec![0.0; d];
    let mut count = 0u64;
    loop {
        for i in 0..d {
            coeff[i] = z[i] as f64 + w[i];
        }
        for (r, p) in point.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, c) in coeff.iter().enumerate() {
                acc += b[(r, k)] * c;
            }
            *p = acc;
        }
        if region.contains_point(&point) {
            count += 1;
        }
        let mut i = 0;
        loop {
            if i == d {
                return Ok(count);
            }
            if z[i] < hi[i] {
                z[i] += 1;
                break;
            }
            z[i] = lo[i];
            i += 1;
        }
    }
}

/// Sampler settings shared by the mean-value and variance experiments.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SamplerConfig {
    pub dim: usize,
    pub prime: u64,
    pub samples: usize,
    pub seed: u64,
}

/// Per-region summary over all sampled affine lattices.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionStats {
    pub region_id: usize,
    pub volume: f64,
    pub mean_count: f64,
    #[serde(skip)]
    pub std_error: f64,
    pub variance: f64,
    /// `variance / volume`.
    pub ratio: f64,
    pub samples: usize,
    pub prime: u64,
    pub seed: u64,
}

/// Mean count against its target `|A|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeanValue {
    pub mean: f64,
    pub std_error: f64,
    pub target: f64,
}

impl MeanValue {
    pub fn within(&self, sigmas: f64) -> bool {
        (self.mean - self.target).abs() <= sigmas * self.std_error
    }
}

/// Counts `counts[sample][region]`; sample `k` draws from stream `k`.
fn sample_counts(cfg: &SamplerConfig, cong: &CongruenceClass, regions: &[Region]) -> Result<Vec<Vec<u64>>> {
    for r in regions {
        if r.dim() != cfg.dim {
            return Err(Error::DimensionMismatch {
                expected: cfg.dim,
                got: r.dim(),
            });
        }
    }
    if cong.dim() != cfg.dim {
        return Err(Error::DimensionMismatch {
            expected: cfg.dim,
            got: cong.dim(),
        });
    }
    (0..cfg.samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(cfg.seed, k as u64);
            let lat = hecke_from_rng(cfg.dim, cfg.prime, &mut rng)?;
            let aff = fiber_from_rng(lat, cong, &mut rng)?;
            regions.iter().map(|r| count_in_region(&aff, r)).collect()
        })
        .collect()
}

fn summarize(cfg: &SamplerConfig, regions: &[Region], counts: &[Vec<u64>]) -> Result<Vec<RegionStats>> {
    regions
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let xs: Vec<f64> = counts.iter().map(|c| c[i] as f64).collect();
            let (mean, variance) = mean_and_variance(&xs);
            let volume = r.volume()?;
            Ok(RegionStats {
                region_id: i,
                volume,
                mean_count: mean,
                std_error: (variance / xs.len().max(1) as f64).sqrt(),
                variance,
                ratio: if volume > 0.0 { variance / volume } else { 0.0 },
                samples: cfg.samples,
                prime: cfg.prime,
                seed: cfg.seed,
            })
        })
        .collect()
}

/// Sample mean of `#(Λ ∩ A)` over random affine lattices, with target `|A|`.
pub fn mean_value_experiment(cfg: &SamplerConfig, cong: &CongruenceClass, region: &Region) -> Result<MeanValue> {
    let regions = std::slice::from_ref(region);
    let stats = summarize(cfg, regions, &sample_counts(cfg, cong, regions)?)?;
    Ok(MeanValue {
        mean: stats[0].mean_count,
        std_error: stats[0].std_error,
        target: stats[0].volume,
    })
}

/// Per-region sample mean and variance of `#(Λ ∩ A_i)`; all regions are
/// counted on the same sampled lattices.
pub fn variance_experiment(cfg: &SamplerConfig, cong: &CongruenceClass, regions: &[Region]) -> Result<Vec<RegionStats>> {
    summarize(cfg, regions, &sample_counts(cfg, cong, regions)?)
}

pub fn write_region_stats<W: Write>(out: W, stats: &[RegionStats]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    for s in stats {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_region_stats_file(path: &Path, stats: &[RegionStats]) -> Result<()> {
    write_region_stats(std::fs::File::create(path)?, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::AxisBox;

    fn box_region(lo: f64, hi: f64, d: usize) -> Region {
        Region::Box(AxisBox::cube(lo, hi, d).unwrap())
    }

    fn int_det(b: &DMatrix<i64>) -> f64 {
        b.map(|x| x as f64).determinant()
    }

    #[test]
    fn hnf_examples() {
        let b = hnf_sublattice_basis(&[1, 0, 0], 5).unwrap();
        assert_eq!(b, DMatrix::from_row_slice(3, 3, &[5, 0, 0, 0, 1, 0, 0, 0, 1]));
        let b = hnf_sublattice_basis(&[0, 1, 0], 3).unwrap();
        assert!((int_det(&b).abs() - 3.0).abs() < 1e-9);
        for j in 0..3 {
            assert_eq!(b[(1, j)].rem_euclid(3), 0);
        }
        assert!(hnf_sublattice_basis(&[5, 10, 0], 5).is_err());
        assert!(hnf_sublattice_basis(&[1, 0, 0], 6).is_err());
    }

    #[test]
    fn hnf_random_directions() {
        let mut rng = stream_rng(3, 0);
        for _ in 0..50 {
            let a: Vec<i64> = (0..3).map(|_| rng.random_range(-200..200)).collect();
            if a.iter().all(|x| x % 101 == 0) {
                continue;
            }
            let b = hnf_sublattice_basis(&a, 101).unwrap();
            assert!((int_det(&b).abs() - 101.0).abs() < 1e-6);
            for j in 0..3 {
                let ip: i64 = (0..3).map(|i| b[(i, j)] * a[i]).sum();
                assert_eq!(ip.rem_euclid(101), 0);
            }
            let r = lll_reduce(&b);
            assert!((int_det(&r).abs() - 101.0).abs() < 1e-6);
            for j in 0..3 {
                let ip: i64 = (0..3).map(|i| r[(i, j)] * a[i]).sum();
                assert_eq!(ip.rem_euclid(101), 0);
            }
        }
    }

    #[test]
    fn hecke_example_and_determinant() {
        let lat = UnimodularLattice::from_hecke(&[1, 0, 0], 5).unwrap();
        let s = 5f64.powf(-1.0 / 3.0);
        let expect = DMatrix::from_row_slice(3, 3, &[5.0 * s, 0.0, 0.0, 0.0, s, 0.0, 0.0, 0.0, s]);
        assert!((lat.basis() - expect).amax() < 1e-15);
        for seed in 0..20 {
            let lat = hecke_sample(3, DEFAULT_PRIME, seed).unwrap();
            assert!((lat.basis().determinant().abs() - 1.0).abs() < 1e-9);
            assert_eq!(lat.source().unwrap().prime, DEFAULT_PRIME);
        }
        assert!(hecke_sample(3, 40008, 0).is_err());
        assert!(hecke_sample(1, 5, 0).is_err());
    }

    #[test]
    fn hecke_shortest_vector_bound() {
        // every nonzero vector of an integer sublattice has length ≥ 1
        let p = 40009u64;
        let floor = (p as f64).powf(-1.0 / 3.0);
        for seed in 0..10 {
            let lat = hecke_sample(3, p, seed).unwrap();
            let b = lat.basis();
            let mut shortest = f64::INFINITY;
            for z0 in -3i64..=3 {
                for z1 in -3i64..=3 {
                    for z2 in -3i64..=3 {
                        if (z0, z1, z2) == (0, 0, 0) {
                            continue;
                        }
                        let z = nalgebra::DVector::from_vec(vec![z0 as f64, z1 as f64, z2 as f64]);
                        shortest = shortest.min((b * z).norm());
                    }
                }
            }
            assert!(shortest >= floor * (1.0 - 1e-12), "{shortest} < {floor}");
        }
    }

    #[test]
    fn rotation_is_special_orthogonal() {
        let mut rng = stream_rng(9, 0);
        for d in 2..6 {
            let q = haar_rotation(d, &mut rng);
            assert!((q.transpose() * &q - DMatrix::identity(d, d)).amax() < 1e-12);
            assert!((q.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unimodular_check() {
        assert!(UnimodularLattice::from_basis(DMatrix::identity(3, 3) * 2.0).is_err());
        assert!(UnimodularLattice::from_basis(DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 0.0, 1.0])).is_ok());
    }

    #[test]
    fn fiber_examples() {
        let z3 = UnimodularLattice::integer(3);
        let aff = sample_affine_cover(z3.clone(), &CongruenceClass::trivial(3), 1).unwrap();
        assert_eq!(aff.shift(), vec![0.0; 3]);
        let c = CongruenceClass::new(vec![2, 0, 0], 4).unwrap();
        for seed in 0..200 {
            let aff = sample_affine_cover(z3.clone(), &c, seed).unwrap();
            let g = aff.shift_class().iter().fold(4u64, |g, &x| gcd(g, x as u64));
            assert_eq!(g, 2);
        }
    }

    #[test]
    fn count_in_region_examples() {
        let z3 = AffineLattice::new(UnimodularLattice::integer(3), vec![0; 3], 1).unwrap();
        let open_ish = Region::Box(AxisBox::cube(0.5, 1.5, 3).unwrap());
        assert_eq!(count_in_region(&z3, &open_ish).unwrap(), 1);
        let half = AffineLattice::new(UnimodularLattice::integer(3), vec![1, 0, 0], 2).unwrap();
        assert_eq!(count_in_region(&half, &box_region(0.0, 1.0, 3)).unwrap(), 1);
        assert_eq!(count_in_region(&z3, &box_region(2.0, 1.0, 3)).unwrap(), 0);
        assert!(count_in_region(&z3, &box_region(0.0, 1.0, 2)).is_err());
    }

    #[test]
    fn ill_conditioned_basis_is_rejected() {
        let b = DMatrix::from_row_slice(2, 2, &[1e7, 0.0, 0.0, 1e-7]);
        let lat = AffineLattice::new(UnimodularLattice::from_basis(b).unwrap(), vec![0, 0], 1).unwrap();
        assert!(matches!(
            count_in_region(&lat, &box_region(0.0, 1.0, 2)),
            Err(Error::IllConditioned { .. })
        ));
    }

    #[test]
    fn empty_regions_have_zero_mean_and_variance() {
        let cfg = SamplerConfig {
            dim: 3,
            prime: 101,
            samples: 20,
            seed: 4,
        };
        let empty = box_region(1.0, 1.0, 3);
        let mv = mean_value_experiment(&cfg, &CongruenceClass::trivial(3), &empty).unwrap();
        assert_eq!((mv.mean, mv.target), (0.0, 0.0));
        let stats = variance_experiment(&cfg, &CongruenceClass::trivial(3), &[empty.clone(), empty]).unwrap();
        assert!(stats.iter().all(|s| s.variance == 0.0 && s.ratio == 0.0));
    }

    #[test]
    fn csv_layout() {
        let cfg = SamplerConfig {
            dim: 3,
            prime: 101,
            samples: 5,
            seed: 4,
        };
        let stats = variance_experiment(&cfg, &CongruenceClass::trivial(3), &[box_region(1.0, 2.0, 3)]).unwrap();
        let mut buf = Vec::new();
        write_region_stats(&mut buf, &stats).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("region_id,volume,mean_count,variance,ratio,samples,prime,seed\n"));
        assert_eq!(text.lines().count(), 2);
    }
}
