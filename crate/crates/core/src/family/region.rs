//! Risk regions `U(v) = {θ : r(θ, θ₀) ≥ v}` and layers
//! `U_k(v) = {θ : A(k)v ≤ r(θ, θ₀) ≤ A(k+1)v}`, represented by finite grids.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{FamilyError, ParametricFamily, Risk};

/// Layer boundaries `A(k)`, with `A(1) = 1` and `A` increasing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    /// `A(k) = k`.
    #[default]
    Linear,
    /// `A(k) = ratio^(k−1)`.
    Geometric { ratio: f64 },
}

impl Schedule {
    pub fn boundary(&self, k: usize) -> f64 {
        match *self {
            Schedule::Linear => k as f64,
            Schedule::Geometric { ratio } => ratio.powi(k as i32 - 1),
        }
    }

    pub fn validate(&self) -> Result<(), FamilyError> {
        match *self {
            Schedule::Geometric { ratio } if !(ratio > 1.0 && ratio.is_finite()) => {
                Err(FamilyError::InvalidParameter(format!("geometric ratio {ratio} must exceed 1")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RiskRegion {
    pub family: Arc<ParametricFamily>,
    pub v: f64,
    /// `(k, schedule)` for a layer, `None` for the whole of `U(v)`.
    pub layer: Option<(usize, Schedule)>,
    pub points: Vec<Vec<f64>>,
    /// Grid points per connected piece (per axis in several dimensions).
    pub resolution: usize,
    /// Indices where each connected piece of a one-dimensional region starts.
    pub pieces: Vec<usize>,
}

impl RiskRegion {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Risk band `[lo, hi]` covered by the region.
    pub fn band(&self) -> (f64, f64) {
        band(self.v, self.layer)
    }

    /// Same region at another resolution.
    pub fn with_resolution(&self, resolution: usize) -> Result<Self, FamilyError> {
        build(self.family.clone(), self.v, self.layer, resolution)
    }

    /// Index range of the piece containing point `i`.
    pub fn piece_of(&self, i: usize) -> std::ops::Range<usize> {
        let k = self.pieces.partition_point(|&s| s <= i) - 1;
        let end = self.pieces.get(k + 1).copied().unwrap_or(self.points.len());
        self.pieces[k]..end
    }
}

fn band(v: f64, layer: Option<(usize, Schedule)>) -> (f64, f64) {
    match layer {
        None => (v, f64::INFINITY),
        Some((k, s)) => (s.boundary(k) * v, s.boundary(k + 1) * v),
    }
}

/// `U(v)` on a grid; the intersection with the parameter box must be bounded.
pub fn risk_region(family: Arc<ParametricFamily>, v: f64, resolution: usize) -> Result<RiskRegion, FamilyError> {
    build(family, v, None, resolution)
}

/// `U_k(v)` for the schedule `A`.
pub fn layer_region(
    family: Arc<ParametricFamily>,
    v: f64,
    k: usize,
    schedule: Schedule,
    resolution: usize,
) -> Result<RiskRegion, FamilyError> {
    if k == 0 {
        return Err(FamilyError::InvalidParameter("layers are numbered from 1".into()));
    }
    schedule.validate()?;
    build(family, v, Some((k, schedule)), resolution)
}

fn build(family: Arc<ParametricFamily>, v: f64, layer: Option<(usize, Schedule)>, resolution: usize) -> Result<RiskRegion, FamilyError> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(FamilyError::InvalidParameter(format!("risk level v = {v}")));
    }
    if resolution < 2 {
        return Err(FamilyError::InvalidParameter("resolution must be at least 2".into()));
    }
    let (lo, hi) = band(v, layer);
    let (points, pieces) = if family.dim() == 1 && matches!(family.risk, Risk::Euclidean) {
        interval_pieces(&family, lo, hi, resolution)?
    } else {
        (cube_filter(&family, lo, hi, resolution)?, vec![0])
    };
    Ok(RiskRegion { family, v, layer, points, resolution, pieces })
}

fn interval_pieces(
    family: &ParametricFamily,
    lo: f64,
    hi: f64,
    resolution: usize,
) -> Result<(Vec<Vec<f64>>, Vec<usize>), FamilyError> {
    let c = family.theta0[0];
    let (blo, bhi) = (family.bounds.lo[0], family.bounds.hi[0]);
    let mut points = Vec::new();
    let mut pieces = Vec::new();
    for (a, b) in [((c - hi).max(blo), (c - lo).min(bhi)), ((c + lo).max(blo), (c + hi).min(bhi))] {
        if a > b {
            continue;
        }
        if !(a.is_finite() && b.is_finite()) {
            return Err(FamilyError::Unbounded);
        }
        pieces.push(points.len());
        if b - a <= 1e-15 * (1.0 + a.abs()) {
            points.push(vec![a]);
            continue;
        }
        let n = resolution;
        for i in 0..n {
            let t = a + (b - a) * i as f64 / (n - 1) as f64;
            points.push(vec![if i == n - 1 { b } else { t }]);
        }
    }
    Ok((points, pieces))
}

fn cube_filter(family: &ParametricFamily, lo: f64, hi: f64, resolution: usize) -> Result<Vec<Vec<f64>>, FamilyError> {
    let d = family.dim();
    let mut ranges = Vec::with_capacity(d);
    for j in 0..d {
        let c = family.theta0[j];
        let (a, b) = ((c - hi).max(family.bounds.lo[j]), (c + hi).min(family.bounds.hi[j]));
        if !(a.is_finite() && b.is_finite()) {
            return Err(FamilyError::Unbounded);
        }
        ranges.push((a, b));
    }
    let total = resolution.checked_pow(d as u32).filter(|&t| t <= 4_000_000).ok_or_else(|| {
        FamilyError::InvalidParameter(format!("grid of {resolution}^{d} points is too large"))
    })?;
    let mut points = Vec::new();
    let mut idx = vec![0usize; d];
    for _ in 0..total {
        let theta: Vec<f64> = (0..d)
            .map(|j| {
                let (a, b) = ranges[j];
                a + (b - a) * idx[j] as f64 / (resolution - 1) as f64
            })
            .collect();
        let r = family.risk_of(&theta);
        if r >= lo && r <= hi && family.bounds.contains(&theta) {
            points.push(theta);
        }
        for j in 0..d {
            idx[j] += 1;
            if idx[j] < resolution {
                break;
            }
            idx[j] = 0;
        }
    }
    Ok(points)
}
