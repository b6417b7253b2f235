//! Covering numbers, metric entropy and the chaining functional
//! `G(δ) = Σ_{m≥1} δ^{m−1} H(δ^m) (1 − δ)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::family::{layer_region, FamilyError, ParametricFamily, RiskRegion, Schedule};
use crate::phi::{conjugate, golden_max, PhiFunction};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainingError {
    #[error("empty point set")]
    Empty,
    #[error("invalid epsilon grid: {0}")]
    InvalidGrid(String),
    #[error("not a semi-distance: {0}")]
    NotSemiMetric(String),
    #[error("entropy needed below the resolution floor at term {reachable} and the profile cannot be extrapolated")]
    GridLimited { reachable: usize },
    #[error("chaining functional is infinite at every probed delta")]
    Unbounded,
    #[error(transparent)]
    Family(#[from] FamilyError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cover {
    pub n: usize,
    pub centers: Vec<usize>,
}

/// Farthest-point order: `radii[k]` is the covering radius of the first
/// `k + 1` centers.
#[derive(Debug, Clone, PartialEq)]
pub struct Traversal {
    pub order: Vec<usize>,
    pub radii: Vec<f64>,
}

/// Greedy farthest-point traversal starting at point 0, stopping once the
/// radius is at most `stop`. Ties go to the lowest index.
pub fn farthest_point_traversal(n: usize, rho: &dyn Fn(usize, usize) -> f64, stop: f64) -> Traversal {
    let mut order = Vec::new();
    let mut radii = Vec::new();
    if n == 0 {
        return Traversal { order, radii };
    }
    let mut near = vec![f64::INFINITY; n];
    let mut c = 0;
    loop {
        order.push(c);
        near[c] = 0.0;
        let mut far = (c, 0.0);
        for i in 0..n {
            if near[i] > 0.0 {
                near[i] = near[i].min(rho(c, i));
            }
            if near[i] > far.1 {
                far = (i, near[i]);
            }
        }
        radii.push(far.1);
        if far.1 <= stop || order.len() == n {
            break;
        }
        c = far.0;
    }
    Traversal { order, radii }
}

/// Greedy cover by ε-balls: every point lies within ε of a center.
pub fn covering_number(n: usize, rho: &dyn Fn(usize, usize) -> f64, epsilon: f64) -> Cover {
    let t = farthest_point_traversal(n, rho, epsilon);
    Cover { n: t.order.len(), centers: t.order }
}

/// Checks symmetry and the triangle inequality on a deterministic sample of
/// triples of a row-major distance matrix.
pub fn check_semimetric(n: usize, dist: &[f64], samples: usize) -> Result<(), ChainingError> {
    if dist.len() != n * n {
        return Err(ChainingError::NotSemiMetric(format!("matrix has {} entries for {n} points", dist.len())));
    }
    let d = |i: usize, j: usize| dist[i * n + j];
    let mut s: u64 = 0x9e37_79b9_7f4a_7c15;
    let mut next = |m: usize| {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        (s % m as u64) as usize
    };
    for _ in 0..samples.min(n * n * n) {
        let (i, j, k) = (next(n), next(n), next(n));
        let tol = 1e-9 * (1.0 + d(i, j).abs());
        if !(d(i, j) >= 0.0) || (d(i, j) - d(j, i)).abs() > tol || d(i, i) != 0.0 {
            return Err(ChainingError::NotSemiMetric(format!("pair ({i}, {j})")));
        }
        if d(i, k) > d(i, j) + d(j, k) + 1e-9 * (1.0 + d(i, k)) {
            return Err(ChainingError::NotSemiMetric(format!("triangle ({i}, {j}, {k})")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyProfile {
    /// Decreasing radii.
    pub epsilons: Vec<f64>,
    /// `H(ε) = log N(ε)` at each radius.
    pub entropies: Vec<f64>,
    pub kappa_fit: f64,
    pub h0_fit: f64,
    pub resolution_floor: f64,
    pub diameter: f64,
    pub extrapolatable: bool,
    /// The underlying set is genuinely finite, so `H` stays at its floor
    /// value below the resolution floor.
    pub finite: bool,
}

/// Entropy evaluated from a profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyValue {
    pub value: f64,
    pub extrapolated: bool,
}

impl EntropyProfile {
    /// Profile of a finite set from its row-major distance matrix. With no
    /// grid the radii of the farthest-point traversal are used, which makes
    /// the step function exact.
    pub fn from_matrix(n: usize, dist: &[f64], eps_grid: Option<&[f64]>, finite: bool) -> Result<Self, ChainingError> {
        if n == 0 {
            return Err(ChainingError::Empty);
        }
        check_semimetric(n, dist, 256)?;
        let rho = |i: usize, j: usize| dist[i * n + j];
        let diameter = dist.iter().copied().fold(0.0, f64::max);
        let floor = (0..n)
            .map(|i| (0..n).filter(|&j| j != i).map(|j| rho(i, j)).fold(f64::INFINITY, f64::min))
            .fold(0.0, |a: f64, b| if b.is_finite() { a.max(b) } else { a });
        let trav = farthest_point_traversal(n, &rho, 0.0);
        let (epsilons, entropies) = match eps_grid {
            None => {
                let mut e = Vec::new();
                let mut h = Vec::new();
                for (k, &r) in trav.radii.iter().enumerate() {
                    if k + 1 < trav.radii.len() && trav.radii[k + 1] == r {
                        continue;
                    }
                    if r < floor && !finite {
                        break;
                    }
                    e.push(r);
                    h.push(((k + 1) as f64).ln());
                }
                (e, h)
            }
            Some(grid) => {
                validate_grid(grid)?;
                if *grid.last().expect("validated") < floor {
                    return Err(ChainingError::InvalidGrid(format!("grid ends below the resolution floor {floor}")));
                }
                let h = grid
                    .iter()
                    .map(|&eps| {
                        let k = trav.radii.iter().position(|&r| r <= eps).unwrap_or(trav.radii.len() - 1);
                        ((k + 1) as f64).ln()
                    })
                    .collect();
                (grid.to_vec(), h)
            }
        };
        Ok(Self::from_table(epsilons, entropies, floor, diameter, finite))
    }

    /// Profile from measured `(ε, H)` pairs with `ε` decreasing.
    pub fn from_table(epsilons: Vec<f64>, entropies: Vec<f64>, resolution_floor: f64, diameter: f64, finite: bool) -> Self {
        let (kappa, h0, ok) = fit(&epsilons, &entropies, resolution_floor);
        Self {
            epsilons,
            entropies,
            kappa_fit: kappa,
            h0_fit: h0,
            resolution_floor,
            diameter,
            extrapolatable: ok,
            finite,
        }
    }

    /// `H(ε) = H₀ + κ·log(1/ε)` for `ε < diameter`, used for closed-form checks.
    pub fn model(h0: f64, kappa: f64, diameter: f64) -> Self {
        Self {
            epsilons: Vec::new(),
            entropies: Vec::new(),
            kappa_fit: kappa.max(0.0),
            h0_fit: h0,
            resolution_floor: f64::INFINITY,
            diameter,
            extrapolatable: true,
            finite: false,
        }
    }

    /// Profile of a single point.
    pub fn singleton() -> Self {
        Self::from_table(vec![0.0], vec![0.0], 0.0, 0.0, true)
    }

    /// `H ≡ 0`: chaining costs nothing.
    pub fn is_trivial(&self) -> bool {
        self.diameter == 0.0 || (self.finite && self.entropies.iter().all(|&h| h == 0.0))
    }

    fn floor_entropy(&self) -> f64 {
        self.entropies.last().copied().unwrap_or(0.0)
    }

    /// `H(ε)`; `None` below the resolution floor of a profile that cannot be
    /// extrapolated.
    pub fn entropy(&self, eps: f64) -> Option<EntropyValue> {
        if eps >= self.diameter || self.is_trivial() {
            return Some(EntropyValue { value: 0.0, extrapolated: false });
        }
        if self.epsilons.last().is_some_and(|&e| eps >= e) {
            // Step function: the value at the nearest measured radius below ε.
            let j = self.epsilons.partition_point(|&e| e > eps);
            return Some(EntropyValue { value: self.entropies[j], extrapolated: false });
        }
        if self.finite {
            return Some(EntropyValue { value: self.floor_entropy(), extrapolated: false });
        }
        if !self.extrapolatable {
            return None;
        }
        let fitted = self.h0_fit + self.kappa_fit * (1.0 / eps).ln();
        Some(EntropyValue { value: fitted.max(self.floor_entropy()).max(0.0), extrapolated: true })
    }
}

fn validate_grid(grid: &[f64]) -> Result<(), ChainingError> {
    if grid.is_empty() {
        return Err(ChainingError::InvalidGrid("empty".into()));
    }
    if grid.iter().any(|&e| !(e > 0.0 && e.is_finite())) || grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(ChainingError::InvalidGrid("radii must be positive and strictly decreasing".into()));
    }
    Ok(())
}

/// Least squares `H ≈ H₀ + κ·log(1/ε)` over the measured radii at or above the
/// floor. The single-ball radius is left out: it reflects the diameter, not
/// the local dimension that the fit extrapolates. Fewer than three distinct
/// entropies make the fit degenerate.
fn fit(eps: &[f64], h: &[f64], floor: f64) -> (f64, f64, bool) {
    let pts: Vec<(f64, f64)> = eps
        .iter()
        .zip(h)
        .filter(|(&e, &h)| e > 0.0 && e >= floor && h > 0.0)
        .map(|(&e, &h)| ((1.0 / e).ln(), h))
        .collect();
    let mut distinct: Vec<f64> = h.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 || pts.len() < 2 {
        return (0.0, distinct.last().copied().unwrap_or(0.0), false);
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let kappa = (sxy / sxx).max(0.0);
    (kappa, my - kappa * mx, true)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GValue {
    pub value: f64,
    /// Series terms summed before the tail majorant was added.
    pub terms: usize,
    pub tail: f64,
    pub extrapolated: bool,
}

const G_MAX_TERMS: usize = 1_000_000;

/// `G(δ)`: partial sum plus the fitted tail majorant
/// `Σ_{m>M} δ^{m−1}(A + κ m log(1/δ))(1 − δ)`, an upper estimate.
pub fn entropy_g(profile: &EntropyProfile, delta: f64) -> Result<GValue, ChainingError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(ChainingError::InvalidGrid(format!("delta = {delta} outside (0, 1)")));
    }
    if profile.is_trivial() {
        return Ok(GValue { value: 0.0, terms: 0, tail: 0.0, extrapolated: false });
    }
    let l = (1.0 / delta).ln();
    let (kappa, a) = if profile.finite {
        (0.0, profile.floor_entropy())
    } else {
        (profile.kappa_fit, profile.h0_fit.max(profile.floor_entropy()).max(0.0))
    };
    let mut sum = 0.0;
    let mut extrapolated = false;
    let mut w = 1.0;
    for m in 1..=G_MAX_TERMS {
        let eps = delta.powi(m as i32);
        let h = profile.entropy(eps).ok_or(ChainingError::GridLimited { reachable: m - 1 })?;
        extrapolated |= h.extrapolated;
        let term = w * h.value * (1.0 - delta);
        sum += term;
        w *= delta;
        // `w` is now δ^m. Every later H(δ^j) is at most A + κ·j·log(1/δ).
        let tail = a * w + kappa * l * w * ((m as f64 + 1.0) * (1.0 - delta) + delta) / (1.0 - delta);
        if term <= 1e-12 * sum && tail < 1e-9 {
            return Ok(GValue { value: sum + tail, terms: m, tail, extrapolated });
        }
        if w == 0.0 {
            return Ok(GValue { value: sum, terms: m, tail: 0.0, extrapolated });
        }
    }
    Ok(GValue { value: f64::INFINITY, terms: G_MAX_TERMS, tail: f64::INFINITY, extrapolated })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainingEvaluation {
    pub delta_star: f64,
    pub g_value: f64,
    /// `ν*((1 − δ*)·y)`.
    pub conj_value: f64,
    /// `exp(g_value − conj_value)`.
    pub bound: f64,
    pub truncation_m: usize,
    pub extrapolated: bool,
}

const PSI_GRID: usize = 64;

/// `Ψ_ν = inf_δ exp(G(δ) − ν*((1 − δ)y))`, by a log-spaced grid on
/// `(0.001, 0.999)` and a golden-section polish around the best cell. Any
/// probed δ gives a valid bound, so grid suboptimality only costs sharpness.
pub fn psi_bound(profile: &EntropyProfile, nu: &PhiFunction, y: f64) -> Result<ChainingEvaluation, ChainingError> {
    if !(y > 0.0) {
        return Err(ChainingError::InvalidGrid(format!("level y = {y} must be positive")));
    }
    if profile.is_trivial() {
        let c = conjugate(nu, y);
        return Ok(ChainingEvaluation {
            delta_star: 0.0,
            g_value: 0.0,
            conj_value: c,
            bound: (-c).exp(),
            truncation_m: 0,
            extrapolated: false,
        });
    }
    let eval = |delta: f64| -> Option<(f64, GValue, f64)> {
        let g = entropy_g(profile, delta).ok()?;
        let c = conjugate(nu, (1.0 - delta) * y);
        Some((g.value - c, g, c))
    };
    let (lo, hi) = (0.001f64.ln(), 0.999f64.ln());
    let grid: Vec<f64> = (0..PSI_GRID).map(|i| (lo + (hi - lo) * i as f64 / (PSI_GRID - 1) as f64).exp()).collect();
    let vals: Vec<Option<(f64, GValue, f64)>> = grid.iter().map(|&d| eval(d)).collect();
    let best = vals
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.filter(|v| v.0.is_finite()).map(|v| (i, v)))
        .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0));
    let Some((i, mut rec)) = best else {
        return Err(match vals.iter().flatten().next() {
            None => match entropy_g(profile, grid[0]) {
                Err(e) => e,
                Ok(_) => ChainingError::Unbounded,
            },
            Some(_) => ChainingError::Unbounded,
        });
    };
    let mut delta = grid[i];
    let (a, b) = (grid[i.saturating_sub(1)].ln(), grid[(i + 1).min(PSI_GRID - 1)].ln());
    let f = |t: f64| eval(t.exp()).map(|v| -v.0).unwrap_or(f64::NEG_INFINITY);
    let (t, _) = golden_max(&f, a, b);
    if let Some(v) = eval(t.exp()) {
        if v.0 < rec.0 {
            rec = v;
            delta = t.exp();
        }
    }
    let (obj, g, c) = rec;
    Ok(ChainingEvaluation {
        delta_star: delta,
        g_value: g.value,
        conj_value: c,
        bound: obj.exp(),
        truncation_m: g.terms,
        extrapolated: g.extrapolated,
    })
}

/// Layers `U_k(v)`, `k = 1..=k_max`, with empty ones omitted.
pub fn partition_layers(
    family: Arc<ParametricFamily>,
    v: f64,
    schedule: Schedule,
    k_max: usize,
    resolution: usize,
) -> Result<Vec<RiskRegion>, ChainingError> {
    let mut out = Vec::new();
    for k in 1..=k_max {
        let layer = layer_region(family.clone(), v, k, schedule, resolution)?;
        if !layer.is_empty() {
            out.push(layer);
        }
    }
    Ok(out)
}
