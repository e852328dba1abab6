//! Axis-aligned boxes and tensor-product quadrature rules.
//!
//! Every integral in the crate goes through a [`QuadratureRule`]; the same
//! nodes and weights define the Nyström matrices used for composition and
//! the exponential, so discrete identities hold exactly at the nodes.

use std::f64::consts::PI;
use std::hash::{Hash, Hasher};

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Largest supported spatial dimension of a single factor (x or y).
pub const MAX_DIM: usize = 3;

/// Default cap on `dim * resolution^dim`.
pub const DEFAULT_NODE_BUDGET: usize = 10_000_000;

/// Default points per dimension.
pub const DEFAULT_RESOLUTION: usize = 32;

/// A closed axis-aligned box `[lo_1, hi_1] x ... x [lo_d, hi_d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cuboid {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Cuboid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::InvalidBox(format!("lo has {} coordinates, hi has {}", lo.len(), hi.len())));
        }
        if lo.is_empty() {
            return Err(Error::InvalidBox("zero-dimensional box".into()));
        }
        for (i, (a, b)) in lo.iter().zip(&hi).enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::InvalidBox(format!("axis {i}: need finite lo < hi, got [{a}, {b}]")));
            }
        }
        Ok(Self { lo, hi })
    }

    /// One-dimensional interval `[lo, hi]`.
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo], vec![hi])
    }

    /// The cube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    pub fn contains_point(&self, p: &[f64]) -> bool {
        p.len() == self.dim() && p.iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (a, b))| *a <= *x && *x <= *b)
    }

    pub fn contains_box(&self, other: &Cuboid) -> bool {
        other.dim() == self.dim()
            && (0..self.dim()).all(|i| self.lo[i] <= other.lo[i] && other.hi[i] <= self.hi[i])
    }

    /// Cartesian product `self x other`.
    pub fn product(&self, other: &Cuboid) -> Cuboid {
        Cuboid {
            lo: self.lo.iter().chain(&other.lo).copied().collect(),
            hi: self.hi.iter().chain(&other.hi).copied().collect(),
        }
    }

    /// Splits a product box after the first `first_dim` axes.
    pub fn split(&self, first_dim: usize) -> (Cuboid, Cuboid) {
        assert!(first_dim > 0 && first_dim < self.dim(), "split index out of range");
        (
            Cuboid { lo: self.lo[..first_dim].to_vec(), hi: self.hi[..first_dim].to_vec() },
            Cuboid { lo: self.lo[first_dim..].to_vec(), hi: self.hi[first_dim..].to_vec() },
        )
    }

    /// Smallest box containing both.
    pub fn hull(&self, other: &Cuboid) -> Result<Cuboid> {
        if other.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: other.dim() });
        }
        Ok(Cuboid {
            lo: self.lo.iter().zip(&other.lo).map(|(a, b)| a.min(*b)).collect(),
            hi: self.hi.iter().zip(&other.hi).map(|(a, b)| a.max(*b)).collect(),
        })
    }

    /// Intersection, `None` when it has empty interior.
    pub fn intersect(&self, other: &Cuboid) -> Option<Cuboid> {
        if other.dim() != self.dim() {
            return None;
        }
        let lo: Vec<f64> = self.lo.iter().zip(&other.lo).map(|(a, b)| a.max(*b)).collect();
        let hi: Vec<f64> = self.hi.iter().zip(&other.hi).map(|(a, b)| a.min(*b)).collect();
        Cuboid::new(lo, hi).ok()
    }

    /// Equispaced tensor grid with `n` points per axis including both ends
    /// (the midpoint when `n == 1`).
    pub fn sample_grid(&self, n: usize) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = (0..self.dim())
            .map(|i| {
                if n <= 1 {
                    vec![0.5 * (self.lo[i] + self.hi[i])]
                } else {
                    let h = (self.hi[i] - self.lo[i]) / (n - 1) as f64;
                    (0..n).map(|k| if k == n - 1 { self.hi[i] } else { self.lo[i] + k as f64 * h }).collect()
                }
            })
            .collect();
        tensor_points(&axes)
    }

    fn hash_bits<H: Hasher>(&self, state: &mut H) {
        for v in self.lo.iter().chain(&self.hi) {
            v.to_bits().hash(state);
        }
    }
}

fn tensor_points(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut pts: Vec<Vec<f64>> = vec![Vec::with_capacity(axes.len())];
    for axis in axes {
        pts = pts
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&c| {
                    let mut q = p.clone();
                    q.push(c);
                    q
                })
            })
            .collect();
    }
    pts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RuleKind {
    GaussLegendre,
    CompositeMidpoint,
}

/// Gauss-Legendre nodes and weights on [-1, 1], ascending.
///
/// Newton iteration on P_n from the asymptotic initial guess, stopped when
/// the update falls below 1e-15.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre needs at least one point");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-15 {
                dp = legendre_with_derivative(n, z).1;
                break;
            }
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// A tensor-product quadrature rule on a box.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    cuboid: Cuboid,
    kind: RuleKind,
    resolution: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// Builds the tensor rule with `resolution` points (Gauss-Legendre) or
    /// cells (composite midpoint) per axis.
    pub fn tensor(cuboid: &Cuboid, kind: RuleKind, resolution: usize) -> Result<Self> {
        Self::tensor_with_budget(cuboid, kind, resolution, DEFAULT_NODE_BUDGET)
    }

    pub fn tensor_with_budget(cuboid: &Cuboid, kind: RuleKind, resolution: usize, budget: usize) -> Result<Self> {
        let d = cuboid.dim();
        if d > MAX_DIM * 2 {
            return Err(Error::InvalidBox(format!("dimension {d} exceeds {}", MAX_DIM * 2)));
        }
        if resolution == 0 {
            return Err(Error::InvalidArgument("quadrature resolution must be at least 1".into()));
        }
        let requested = resolution
            .checked_pow(d as u32)
            .and_then(|n| n.checked_mul(d))
            .unwrap_or(usize::MAX);
        if requested > budget {
            return Err(Error::BudgetExceeded { requested, budget });
        }

        let (ref_nodes, ref_weights): (Vec<f64>, Vec<f64>) = match kind {
            RuleKind::GaussLegendre => {
                let (x, w) = gauss_legendre(resolution);
                (x.iter().map(|t| 0.5 * (t + 1.0)).collect(), w.iter().map(|w| 0.5 * w).collect())
            }
            RuleKind::CompositeMidpoint => {
                let h = 1.0 / resolution as f64;
                ((0..resolution).map(|k| (k as f64 + 0.5) * h).collect(), vec![h; resolution])
            }
        };

        let axes_x: Vec<Vec<f64>> = (0..d)
            .map(|i| {
                let (a, b) = (cuboid.lo[i], cuboid.hi[i]);
                ref_nodes.iter().map(|t| a + (b - a) * t).collect()
            })
            .collect();
        let axes_w: Vec<Vec<f64>> = (0..d)
            .map(|i| {
                let len = cuboid.hi[i] - cuboid.lo[i];
                ref_weights.iter().map(|w| w * len).collect()
            })
            .collect();

        let points = tensor_points(&axes_x);
        let weights: Vec<f64> = tensor_points(&axes_w).into_iter().map(|ws| ws.iter().product()).collect();
        let nodes = points.into_iter().flatten().collect();
        Ok(Self { cuboid: cuboid.clone(), kind, resolution, nodes, weights })
    }

    /// Gauss-Legendre shorthand.
    pub fn gauss(cuboid: &Cuboid, points_per_dim: usize) -> Result<Self> {
        Self::tensor(cuboid, RuleKind::GaussLegendre, points_per_dim)
    }

    /// Composite-midpoint shorthand.
    pub fn midpoint(cuboid: &Cuboid, cells_per_dim: usize) -> Result<Self> {
        Self::tensor(cuboid, RuleKind::CompositeMidpoint, cells_per_dim)
    }

    pub fn cuboid(&self) -> &Cuboid {
        &self.cuboid
    }

    pub fn kind(&self) -> RuleKind {
        self.kind
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn dim(&self) -> usize {
        self.cuboid.dim()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.nodes[i * d..(i + 1) * d]
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.nodes.chunks_exact(self.dim())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Stable fingerprint of kind, resolution and box, used as a cache key.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.kind.hash(&mut h);
        self.resolution.hash(&mut h);
        self.cuboid.hash_bits(&mut h);
        h.finish()
    }

    /// `sum_i w_i f(x_i)`.
    pub fn integrate<F>(&self, f: F) -> Result<f64>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let values: Vec<f64> = (0..self.len()).into_par_iter().map(|i| f(self.node(i))).collect();
        let mut sum = 0.0;
        for (i, (v, w)) in values.iter().zip(&self.weights).enumerate() {
            if !v.is_finite() {
                return Err(Error::non_finite(format!("integrand at node {:?}", self.node(i))));
            }
            sum += w * v;
        }
        Ok(sum)
    }
}
