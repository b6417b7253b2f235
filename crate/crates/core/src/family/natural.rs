//! Natural dominating functions, norms and distances over a region.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use std::sync::Arc;

use super::{field_norm, FamilyError, ParametricFamily, RiskRegion, KRAMER_CAP};
use crate::phi::{golden_max, NormProbe, PhiFunction};
use crate::quad::TiltRule;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NaturalOptions {
    /// Nodes of the tabulated λ grid (quadratically spaced).
    pub table_points: usize,
    /// Hard ceiling on the tabulated range.
    pub lambda_cap: f64,
    /// Smallest tabulated range tried when searching for a slope target.
    pub lambda_min: f64,
    /// Fraction of the smallest member's domain end kept in the table.
    pub kramer_margin: f64,
    /// Range used when no slope target is given.
    pub lambda_default: f64,
}

impl Default for NaturalOptions {
    fn default() -> Self {
        Self { table_points: 96, lambda_cap: 64.0, lambda_min: 0.25, kramer_margin: 0.98, lambda_default: 16.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeLimit {
    /// The chord slope `φ(Λ)/Λ` reached the requested target.
    Slope,
    /// A member's cumulant stops being finite just above Λ.
    Kramer,
    /// The hard ceiling was reached first.
    Cap,
    /// No target was requested.
    Default,
}

/// Centered field of one region member, integrated once and reused.
#[derive(Debug, Clone)]
pub struct Member {
    pub theta: Vec<f64>,
    pub rule: TiltRule,
    /// `h(θ)`.
    pub kl: f64,
}

#[derive(Debug, Clone)]
pub struct NaturalPhi {
    pub family: Arc<ParametricFamily>,
    pub phi: PhiFunction,
    pub lambda_max: f64,
    pub limit: RangeLimit,
    pub members: Vec<Member>,
}

impl NaturalPhi {
    /// `max_θ ‖L⁰(θ)‖_{B(φ)}` using the stored member rules.
    pub fn tau(&self, phi: &PhiFunction, probe: &NormProbe) -> Result<f64, FamilyError> {
        let fam = &self.family;
        let norms: Result<Vec<f64>, _> = self
            .members
            .par_iter()
            .map(|m| field_norm(&|top| fam.field_rule(&m.theta, top), Some(&m.rule), phi, probe))
            .collect();
        Ok(norms?.into_iter().fold(0.0, f64::max))
    }

    /// `min_θ h(θ)` over the grid.
    pub fn y_grid(&self) -> f64 {
        self.members.iter().map(|m| m.kl).fold(f64::INFINITY, f64::min)
    }
}

/// `φ(λ) = max_θ log E₀ exp(λL⁰(θ))` over the region grid at a single λ.
pub fn natural_phi(region: &RiskRegion, lambda: f64) -> Result<f64, FamilyError> {
    if region.is_empty() {
        return Err(FamilyError::EmptyRegion);
    }
    let fam = &region.family;
    let vals: Result<Vec<f64>, _> = region.points.par_iter().map(|t| fam.logmgf_contrast(t, lambda)).collect();
    Ok(vals?.into_iter().fold(0.0, f64::max))
}

/// Tabulates the natural φ of a region on `[0, Λ]`.
///
/// With `slope_target = Some(y)` the range is the smallest doubling of
/// `lambda_min` whose chord slope `φ(Λ)/Λ` reaches `y` (so that conjugates at
/// arguments up to `y` are not truncated), within the members' domains and
/// the cap.
pub fn natural_phi_table(region: &RiskRegion, slope_target: Option<f64>, opts: &NaturalOptions) -> Result<NaturalPhi, FamilyError> {
    if region.is_empty() {
        return Err(FamilyError::EmptyRegion);
    }
    let fam = &region.family;
    let t0 = fam.theta0.clone();
    let kramers: Result<Vec<f64>, _> =
        region.points.par_iter().map(|t| fam.difference_kramer(t, &t0, KRAMER_CAP)).collect();
    let kramers = kramers?;
    let k_min = kramers.iter().copied().fold(f64::INFINITY, f64::min);
    let k_cap = (opts.kramer_margin * k_min).min(opts.lambda_cap);
    let (lambda, limit) = match slope_target {
        None => {
            if opts.lambda_default >= k_cap {
                (k_cap, if k_cap < opts.lambda_cap { RangeLimit::Kramer } else { RangeLimit::Cap })
            } else {
                (opts.lambda_default, RangeLimit::Default)
            }
        }
        Some(y) => search_range(region, &kramers, y, k_cap, opts)?,
    };
    let members: Result<Vec<Member>, FamilyError> = region
        .points
        .par_iter()
        .zip(&kramers)
        .map(|(t, &k)| {
            let rule = fam.difference_rule_with(t, &t0, lambda, true, k)?;
            let kl = (-rule.mean()).max(0.0);
            Ok(Member { theta: t.clone(), rule, kl })
        })
        .collect();
    let members = members?;
    let n = opts.table_points.max(4);
    let grid: Vec<f64> = (0..=n).map(|i| lambda * (i as f64 / n as f64).powi(2)).collect();
    let values: Vec<f64> = grid
        .par_iter()
        .map(|&l| members.iter().map(|m| m.rule.cumulant(l)).fold(0.0, f64::max))
        .collect();
    let phi = convex_majorant(grid, values)?;
    Ok(NaturalPhi { family: fam.clone(), phi, lambda_max: lambda, limit, members })
}

fn search_range(
    region: &RiskRegion,
    kramers: &[f64],
    target: f64,
    k_cap: f64,
    opts: &NaturalOptions,
) -> Result<(f64, RangeLimit), FamilyError> {
    let fam = &region.family;
    let t0 = &fam.theta0;
    let reps = representatives(region);
    let mut lambda = opts.lambda_min.min(k_cap);
    loop {
        let slope = reps
            .iter()
            .map(|&i| -> Result<f64, FamilyError> {
                let rule = fam.difference_rule_with(&region.points[i], t0, lambda, false, kramers[i])?;
                Ok(rule.cumulant(lambda) / lambda)
            })
            .try_fold(0.0f64, |acc, s| s.map(|s| acc.max(s)))?;
        if slope >= target {
            return Ok((lambda, RangeLimit::Slope));
        }
        if lambda >= k_cap {
            let limit = if k_cap < opts.lambda_cap { RangeLimit::Kramer } else { RangeLimit::Cap };
            return Ok((k_cap, limit));
        }
        lambda = (2.0 * lambda).min(k_cap);
    }
}

/// Ends of each connected piece: the members with extreme risk.
fn representatives(region: &RiskRegion) -> Vec<usize> {
    let mut reps = Vec::new();
    if region.family.dim() == 1 {
        for (j, &s) in region.pieces.iter().enumerate() {
            let e = region.pieces.get(j + 1).copied().unwrap_or(region.len()) - 1;
            reps.push(s);
            if e != s {
                reps.push(e);
            }
        }
    } else {
        let mut idx: Vec<usize> = (0..region.len()).collect();
        idx.sort_by(|&a, &b| region.family.risk_of(&region.points[b]).total_cmp(&region.family.risk_of(&region.points[a])));
        reps.extend(idx.into_iter().take(8));
    }
    reps
}

/// Smallest convex table through the lower hull of `values`, lifted so that
/// it dominates every sample. Samples of a maximum of convex functions are
/// convex up to rounding, so the lift is tiny.
fn convex_majorant(lambdas: Vec<f64>, values: Vec<f64>) -> Result<PhiFunction, FamilyError> {
    let n = lambdas.len();
    let mut hull: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (lambdas[b] - lambdas[a]) * (values[i] - values[a]) - (values[b] - values[a]) * (lambdas[i] - lambdas[a]);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    let mut h = vec![0.0; n];
    for w in hull.windows(2) {
        let (a, b) = (w[0], w[1]);
        for i in a..=b {
            h[i] = values[a] + (values[b] - values[a]) * (lambdas[i] - lambdas[a]) / (lambdas[b] - lambdas[a]);
        }
    }
    let lift = values.iter().zip(&h).map(|(v, hv)| v - hv).fold(0.0, f64::max);
    let mut out: Vec<f64> = h.iter().map(|v| v + lift).collect();
    out[0] = 0.0;
    Ok(PhiFunction::tabulated(lambdas, out)?)
}

/// `τ(U) = max_θ ‖L⁰(θ)‖_{B(φ)}` over the region grid.
pub fn tau_sup(region: &RiskRegion, phi: &PhiFunction, probe: &NormProbe) -> Result<f64, FamilyError> {
    if region.is_empty() {
        return Err(FamilyError::EmptyRegion);
    }
    let fam = &region.family;
    let norms: Result<Vec<f64>, _> = region.points.par_iter().map(|t| fam.contrast_norm(t, phi, probe)).collect();
    Ok(norms?.into_iter().fold(0.0, f64::max))
}

/// `Y(U) = inf_θ h(θ)`: the grid minimum polished by a golden-section search
/// between its neighbours.
pub fn y_of_v(region: &RiskRegion) -> Result<f64, FamilyError> {
    if region.is_empty() {
        return Err(FamilyError::EmptyRegion);
    }
    let fam = &region.family;
    let kls: Result<Vec<f64>, _> = region.points.par_iter().map(|t| fam.kl(t)).collect();
    let kls = kls?;
    let (i, y) = kls.iter().copied().enumerate().fold((0, f64::INFINITY), |b, (i, v)| if v < b.1 { (i, v) } else { b });
    y_polish(region, i, y)
}

pub(crate) fn y_polish(region: &RiskRegion, i: usize, y: f64) -> Result<f64, FamilyError> {
    if region.family.dim() != 1 || region.len() < 2 {
        return Ok(y);
    }
    let piece = region.piece_of(i);
    if piece.len() < 2 {
        return Ok(y);
    }
    let lo = region.points[i.saturating_sub(1).max(piece.start)][0];
    let hi = region.points[(i + 1).min(piece.end - 1)][0];
    let fam = &region.family;
    let f = |t: f64| -fam.kl(&[t]).unwrap_or(f64::INFINITY);
    let (_, v) = golden_max(&f, lo, hi);
    Ok(y.min(-v))
}

/// Symmetric matrix of natural distances `‖L⁰(θᵢ) − L⁰(θⱼ)‖_{B(φ)}`, row-major.
pub fn natural_distance_matrix(region: &RiskRegion, phi: &PhiFunction, probe: &NormProbe) -> Result<Vec<f64>, FamilyError> {
    let n = region.len();
    let fam = &region.family;
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let d: Result<Vec<f64>, _> = pairs
        .par_iter()
        .map(|&(i, j)| fam.natural_distance(&region.points[i], &region.points[j], phi, probe))
        .collect();
    let d = d?;
    let mut m = vec![0.0; n * n];
    for (&(i, j), &v) in pairs.iter().zip(&d) {
        m[i * n + j] = v;
        m[j * n + i] = v;
    }
    Ok(m)
}
