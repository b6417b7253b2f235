//! Tail-bound pipelines: compact, partitioned, smooth and sample-size forms.
//!
//! Each pipeline returns the unclamped value alongside the clamped one so
//! that rate fits never see the truncation at 1.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chaining::{psi_bound, ChainingError, ChainingEvaluation, EntropyProfile};
use crate::family::{
    layer_region, natural_phi_table, risk_region, y_of_v, FamilyError, NaturalOptions, ParametricFamily,
    Risk, RiskRegion, Schedule,
};
use crate::phi::{conjugate, phi_bar, rescale_n, NormProbe, PhiError, PhiFunction};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error(transparent)]
    Chaining(#[from] ChainingError),
    #[error(transparent)]
    Phi(#[from] PhiError),
    #[error("partition truncation unsafe: layer terms still not decaying at k = {k}")]
    TruncationUnsafe { k: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Method {
    Compact,
    Partition,
    Smooth,
    Sample { n: u64, uniform: bool },
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::Compact => "compact",
            Method::Partition => "partition",
            Method::Smooth => "smooth",
            Method::Sample { uniform: false, .. } => "sample-n",
            Method::Sample { uniform: true, .. } => "sample-uniform",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundOptions {
    pub schedule: Schedule,
    pub k_max: usize,
    /// Starting grid points per piece; doubled until Y and τ settle.
    pub resolution: usize,
    pub max_resolution: usize,
    pub refine_tol: f64,
    /// Points per piece on which natural distances are computed for the
    /// entropy profile.
    pub entropy_points: usize,
    pub probe: NormProbe,
    pub natural: NaturalOptions,
    /// Relative size of the geometric tail majorant at which the layer sum
    /// may stop.
    pub truncation_tol: f64,
    /// Consecutive decreasing terms required before truncating.
    pub decay_run: usize,
    /// Largest n in the supremum defining φ̄.
    pub uniform_n_max: u64,
    /// Slope target for the fixed φ of the smooth pipeline.
    pub smooth_slope: f64,
    /// Recompute the member norms under their own natural φ instead of
    /// using the bound 1.
    pub verify_tau: bool,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self {
            schedule: Schedule::Geometric { ratio: 1.2 },
            k_max: 64,
            resolution: 32,
            max_resolution: 512,
            refine_tol: 0.01,
            entropy_points: 48,
            probe: NormProbe { points: 64, ..NormProbe::default() },
            natural: NaturalOptions::default(),
            truncation_tol: 1e-3,
            decay_run: 3,
            uniform_n_max: 4096,
            smooth_slope: 32.0,
            verify_tau: false,
        }
    }
}

impl BoundOptions {
    pub fn validate(&self) -> Result<(), BoundError> {
        self.schedule.validate()?;
        let bad = |m: &str| Err(BoundError::InvalidParameter(m.into()));
        if self.k_max == 0 {
            return bad("k_max must be positive");
        }
        if self.resolution < 2 || self.max_resolution < self.resolution {
            return bad("resolution must be at least 2 and at most max_resolution");
        }
        if self.entropy_points < 2 {
            return bad("entropy_points must be at least 2");
        }
        if !(self.refine_tol > 0.0) || !(self.truncation_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.probe.points < 3 {
            return bad("probe needs at least 3 points");
        }
        Ok(())
    }
}

/// Per-region record of one chaining evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerDiag {
    pub k: usize,
    pub band: (f64, f64),
    pub points: usize,
    pub resolution: usize,
    pub y: f64,
    pub tau: f64,
    pub level: f64,
    pub lambda_max: f64,
    pub kappa: f64,
    pub h0: f64,
    pub entropy_extrapolatable: bool,
    pub psi: Option<ChainingEvaluation>,
    pub term: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothDiag {
    pub c2: f64,
    pub c3: f64,
    /// `C₉ = C₃/(2C₂)` of the single-exponent form.
    pub c9: f64,
    pub single_exponent_bound: f64,
    /// Extremes of `h(θ)/|θ − θ₀|²` over the probed layers.
    pub h_ratio: (f64, f64),
    /// `τ_k/((k+1)v)` per layer.
    pub norm_ratios: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointBound {
    pub v: f64,
    /// `min(1, raw)`.
    pub bound: f64,
    pub raw: f64,
    pub method: String,
    /// δ* of the layer with the largest term.
    pub delta_star: f64,
    pub layers: usize,
    pub flags: Vec<String>,
    pub truncation_majorant: f64,
    pub layer_diags: Vec<LayerDiag>,
    pub smooth: Option<SmoothDiag>,
}

impl PointBound {
    fn new(v: f64, raw: f64, method: Method, layers: Vec<LayerDiag>, flags: Vec<String>, majorant: f64) -> Self {
        let lead = layers.iter().max_by(|a, b| a.term.total_cmp(&b.term));
        let delta_star = lead.and_then(|l| l.psi.map(|p| p.delta_star)).unwrap_or(0.0);
        Self {
            v,
            bound: raw.min(1.0),
            raw,
            method: method.tag().into(),
            delta_star,
            layers: layers.len(),
            flags,
            truncation_majorant: majorant,
            layer_diags: layers,
            smooth: None,
        }
    }

    fn empty(v: f64, method: Method) -> Self {
        Self::new(v, 0.0, method, Vec::new(), vec!["exact-empty".into()], 0.0)
    }
}

/// How the tail kernel of a region is formed from its natural φ.
#[derive(Debug, Clone, Copy)]
enum Kernel {
    Natural,
    Sample { n: u64, uniform: bool },
}

/// Builds the region at increasing resolution until `Y` moves by less than
/// the tolerance, returning the finer grid and its `Y`.
fn refined(
    build: &dyn Fn(usize) -> Result<RiskRegion, FamilyError>,
    extra: Option<&dyn Fn(&RiskRegion) -> Result<f64, BoundError>>,
    opts: &BoundOptions,
) -> Result<(RiskRegion, f64, Option<f64>), BoundError> {
    let mut res = opts.resolution;
    let mut region = build(res)?;
    if region.is_empty() {
        return Ok((region, f64::INFINITY, None));
    }
    let mut y = y_of_v(&region)?;
    let mut t = extra.map(|f| f(&region)).transpose()?;
    let close = |a: f64, b: f64| (a - b).abs() <= opts.refine_tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
    while !degenerate(&region) && res * 2 <= opts.max_resolution {
        res *= 2;
        let finer = build(res)?;
        let y2 = y_of_v(&finer)?;
        let t2 = extra.map(|f| f(&finer)).transpose()?;
        let settled = close(y, y2) && t.zip(t2).is_none_or(|(a, b)| close(a, b));
        region = finer;
        y = y2;
        t = t2;
        if settled {
            break;
        }
    }
    Ok((region, y, t))
}

/// Every piece is a single point.
fn degenerate(region: &RiskRegion) -> bool {
    region.family.dim() == 1 && region.pieces.len() == region.len()
}

/// Evenly spaced members of each piece, endpoints included.
fn entropy_subsample(region: &RiskRegion, per_piece: usize) -> Vec<usize> {
    let mut idx = Vec::new();
    let starts: Vec<usize> = if region.family.dim() == 1 { region.pieces.clone() } else { vec![0] };
    for (j, &s) in starts.iter().enumerate() {
        let e = starts.get(j + 1).copied().unwrap_or(region.len());
        let len = e - s;
        let m = per_piece.min(len);
        if m == 1 {
            idx.push(s);
            continue;
        }
        for i in 0..m {
            let p = s + ((len - 1) as f64 * i as f64 / (m - 1) as f64).round() as usize;
            if idx.last() != Some(&p) {
                idx.push(p);
            }
        }
    }
    idx
}

/// Entropy profile of a region under `d/τ` for the natural distance of `phi`.
///
/// One-dimensional pieces use the path metric through neighbouring grid
/// points, and the pieces are joined at their inner ends. By the triangle
/// inequality it dominates the natural distance, so its covers are covers
/// and the entropy is an upper estimate, at a cost linear in the points.
fn region_profile(region: &RiskRegion, phi: &PhiFunction, tau: f64, opts: &BoundOptions) -> Result<EntropyProfile, BoundError> {
    let idx = entropy_subsample(region, opts.entropy_points);
    let n = idx.len();
    if n == 1 {
        return Ok(EntropyProfile::singleton());
    }
    let fam = &region.family;
    let pt = |i: usize| &region.points[idx[i]];
    let m = if fam.dim() == 1 {
        // Links between consecutive subsample points; a link across a piece
        // boundary joins the inner end of one piece to the inner end of the
        // next, which are consecutive because pieces are ordered by θ.
        let links: Result<Vec<f64>, FamilyError> =
            (1..n).into_par_iter().map(|i| fam.natural_distance(pt(i - 1), pt(i), phi, &opts.probe)).collect();
        let links = links?;
        let mut pos = vec![0.0; n];
        for i in 1..n {
            pos[i] = pos[i - 1] + links[i - 1] / tau;
        }
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                m[i * n + j] = (pos[i] - pos[j]).abs();
            }
        }
        m
    } else {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let d: Result<Vec<f64>, FamilyError> =
            pairs.par_iter().map(|&(i, j)| fam.natural_distance(pt(i), pt(j), phi, &opts.probe)).collect();
        let mut m = vec![0.0; n * n];
        for (&(i, j), v) in pairs.iter().zip(d?) {
            m[i * n + j] = v / tau;
            m[j * n + i] = v / tau;
        }
        m
    };
    Ok(EntropyProfile::from_matrix(n, &m, None, degenerate(region))?)
}

/// `Ψ` of one region with its natural φ, distance `d/τ` and level
/// `√n·Y/τ`.
fn chained(region: &RiskRegion, y: f64, k: usize, kernel: Kernel, opts: &BoundOptions, flags: &mut Vec<String>) -> Result<LayerDiag, BoundError> {
    let nat = natural_phi_table(region, Some(y), &opts.natural)?;
    // Each member's cumulant is convex and lies below the table at the
    // nodes, hence below its chords, so every member has norm at most 1.
    let tau = if opts.verify_tau { nat.tau(&nat.phi, &opts.probe)?.max(1.0) } else { 1.0 };
    let (nu, root) = match kernel {
        Kernel::Natural => (nat.phi.clone(), 1.0),
        Kernel::Sample { n, uniform: false } => (rescale_n(&nat.phi, n), (n as f64).sqrt()),
        Kernel::Sample { n, uniform: true } => {
            let bar = phi_bar(&nat.phi, opts.uniform_n_max)?;
            if bar.divergent && !flags.iter().any(|f| f == "phi-bar-divergent") {
                flags.push("phi-bar-divergent".into());
            }
            (bar.phi, (n as f64).sqrt())
        }
    };
    let level = root * y / tau;
    let profile = region_profile(region, &nat.phi, tau, opts)?;
    let psi = psi_bound(&profile, &nu, level)?;
    if psi.extrapolated && !flags.iter().any(|f| f == "entropy-extrapolated") {
        flags.push("entropy-extrapolated".into());
    }
    Ok(LayerDiag {
        k,
        band: region.band(),
        points: region.len(),
        resolution: region.resolution,
        y,
        tau,
        level,
        lambda_max: nat.lambda_max,
        kappa: profile.kappa_fit,
        h0: profile.h0_fit,
        entropy_extrapolatable: profile.extrapolatable,
        psi: Some(psi),
        term: psi.bound,
    })
}

/// Largest risk reachable inside a bounded box, when it can be computed.
fn max_risk(fam: &ParametricFamily) -> Option<f64> {
    if !fam.bounds.is_bounded() || !matches!(fam.risk, Risk::Euclidean) {
        return None;
    }
    let s: f64 = (0..fam.dim())
        .map(|j| {
            let c = fam.theta0[j];
            (c - fam.bounds.lo[j]).abs().max((fam.bounds.hi[j] - c).abs()).powi(2)
        })
        .sum();
    Some(s.sqrt())
}

/// Sums layer terms `k = 1, 2, …` until the layers leave the box or a
/// geometric tail majorant over the last terms is below tolerance.
fn layer_sum(
    fam: &Arc<ParametricFamily>,
    v: f64,
    schedule: Schedule,
    opts: &BoundOptions,
    term: &mut dyn FnMut(usize, &RiskRegion, f64) -> Result<LayerDiag, BoundError>,
) -> Result<(f64, Vec<LayerDiag>, f64), BoundError> {
    let reach = max_risk(fam);
    let mut diags: Vec<LayerDiag> = Vec::new();
    let mut sum = 0.0;
    for k in 1..=opts.k_max {
        let lo = schedule.boundary(k) * v;
        if reach.is_some_and(|r| lo > r) {
            return Ok((sum, diags, 0.0));
        }
        let build = |res: usize| layer_region(fam.clone(), v, k, schedule, res);
        let (region, y, _) = refined(&build, None, opts)?;
        if region.is_empty() {
            continue;
        }
        let d = term(k, &region, y)?;
        sum += d.term;
        diags.push(d);
        if let Some(m) = tail_majorant(&diags, sum, opts) {
            return Ok((sum + m, diags, m));
        }
    }
    if reach.is_some_and(|r| schedule.boundary(opts.k_max + 1) * v > r) {
        return Ok((sum, diags, 0.0));
    }
    Err(BoundError::TruncationUnsafe { k: opts.k_max })
}

/// `t_K·r/(1 − r)` with `r` the largest ratio among the last `decay_run`
/// consecutive decreases, when that is small relative to the sum.
fn tail_majorant(diags: &[LayerDiag], sum: f64, opts: &BoundOptions) -> Option<f64> {
    let run = opts.decay_run;
    if diags.len() < run + 1 {
        return None;
    }
    let last = &diags[diags.len() - run - 1..];
    if last.windows(2).any(|w| w[1].k != w[0].k + 1) {
        return None;
    }
    let t_k = last[run].term;
    if t_k == 0.0 {
        return Some(0.0);
    }
    let r = last.windows(2).map(|w| w[1].term / w[0].term).fold(0.0, f64::max);
    if !(r < 1.0) {
        return None;
    }
    let m = t_k * r / (1.0 - r);
    (m <= opts.truncation_tol * sum).then_some(m)
}

/// One chaining bound over the whole of `U(v)` with its own natural φ.
pub fn bound_compact(fam: &Arc<ParametricFamily>, v: f64, opts: &BoundOptions) -> Result<PointBound, BoundError> {
    opts.validate()?;
    check_v(v)?;
    let build = |res: usize| risk_region(fam.clone(), v, res);
    let (region, y, _) = refined(&build, None, opts)?;
    if region.is_empty() {
        return Ok(PointBound::empty(v, Method::Compact));
    }
    let mut flags = Vec::new();
    let d = chained(&region, y, 1, Kernel::Natural, opts, &mut flags)?;
    Ok(PointBound::new(v, d.term, Method::Compact, vec![d], flags, 0.0))
}

/// `Σ_k Ψ_φk(U_k(v), d_k/τ_k, Y_k/τ_k)` over the layers of the schedule.
pub fn bound_partition(fam: &Arc<ParametricFamily>, v: f64, opts: &BoundOptions) -> Result<PointBound, BoundError> {
    opts.validate()?;
    check_v(v)?;
    layered(fam, v, Kernel::Natural, Method::Partition, opts)
}

/// The partition bound for `√n·r(θ̂ₙ, θ₀)`: layers of `U(v/√n)` with kernels
/// `φₙ` (or `φ̄` when `uniform`) and levels `√n·Y_k/τ_k`.
pub fn bound_sample(fam: &Arc<ParametricFamily>, n: u64, v: f64, uniform: bool, opts: &BoundOptions) -> Result<PointBound, BoundError> {
    opts.validate()?;
    check_v(v)?;
    if n == 0 {
        return Err(BoundError::InvalidParameter("sample size must be positive".into()));
    }
    let r = v / (n as f64).sqrt();
    let mut pb = layered(fam, r, Kernel::Sample { n, uniform }, Method::Sample { n, uniform }, opts)?;
    pb.v = v;
    Ok(pb)
}

fn layered(fam: &Arc<ParametricFamily>, r: f64, kernel: Kernel, method: Method, opts: &BoundOptions) -> Result<PointBound, BoundError> {
    let mut flags = Vec::new();
    let mut term = |k: usize, region: &RiskRegion, y: f64| chained(region, y, k, kernel, opts, &mut flags);
    let (raw, diags, majorant) = layer_sum(fam, r, opts.schedule, opts, &mut term)?;
    if diags.is_empty() {
        return Ok(PointBound::empty(r, method));
    }
    if majorant > 0.0 {
        flags.push("tail-majorant".into());
    }
    Ok(PointBound::new(r, raw, method, diags, flags, majorant))
}

/// The explicit smooth-case series `Σ_k exp(−φ*(C₃k²v²/(C₂(k+1)v)))` with
/// `A(k) = k`, φ the natural function of `U₁(1)`, `C₂ = max_k τ_k/((k+1)v)`
/// and `C₃ = min_k Y_k/(kv)²`.
pub fn bound_smooth(fam: &Arc<ParametricFamily>, v: f64, opts: &BoundOptions) -> Result<PointBound, BoundError> {
    opts.validate()?;
    check_v(v)?;
    let mut flags = Vec::new();
    if v < 1.0 {
        flags.push("v-below-one".into());
    }
    let base = layer_region(fam.clone(), 1.0, 1, Schedule::Linear, opts.resolution.max(64))?;
    if base.is_empty() {
        return Err(BoundError::Family(FamilyError::EmptyRegion));
    }
    let phi = natural_phi_table(&base, Some(opts.smooth_slope), &opts.natural)?.phi;
    let reach = max_risk(fam);
    // (k, τ_k, Y_k, h-ratio extremes)
    let mut rows: Vec<(usize, f64, f64, (f64, f64))> = Vec::new();
    let mut majorant = f64::NAN;
    let mut finished = false;
    for k in 1..=opts.k_max {
        let lo = k as f64 * v;
        if reach.is_some_and(|r| lo > r) {
            finished = true;
            majorant = 0.0;
            break;
        }
        let build = |res: usize| layer_region(fam.clone(), v, k, Schedule::Linear, res);
        let (region, y, _) = refined(&build, None, opts)?;
        if region.is_empty() {
            continue;
        }
        let tau = sampled_tau(&region, &phi, opts)?;
        let hr = h_ratios(&region)?;
        rows.push((k, tau, y, hr));
        let terms = smooth_terms(&rows, v, &phi);
        let sum: f64 = terms.iter().sum();
        // More layers only raise C₂ and lower C₃, so every term can only grow:
        // a partial sum of at least one already fixes the clamped bound.
        if sum >= 1.0 {
            flags.push("saturated".into());
            majorant = 0.0;
            finished = true;
            break;
        }
        let diags: Vec<LayerDiag> = rows
            .iter()
            .zip(&terms)
            .map(|(r, &t)| LayerDiag {
                k: r.0,
                band: (r.0 as f64 * v, (r.0 + 1) as f64 * v),
                points: 0,
                resolution: 0,
                y: r.2,
                tau: r.1,
                level: 0.0,
                lambda_max: 0.0,
                kappa: 0.0,
                h0: 0.0,
                entropy_extrapolatable: false,
                psi: None,
                term: t,
            })
            .collect();
        if let Some(m) = tail_majorant(&diags, sum, opts) {
            majorant = m;
            finished = true;
            break;
        }
    }
    if !finished && !reach.is_some_and(|r| (opts.k_max + 1) as f64 * v > r) {
        return Err(BoundError::TruncationUnsafe { k: opts.k_max });
    }
    if rows.is_empty() {
        return Ok(PointBound::empty(v, Method::Smooth));
    }
    let majorant = if majorant.is_nan() { 0.0 } else { majorant };
    let (c2, c3) = smooth_constants(&rows, v);
    let terms = smooth_terms(&rows, v, &phi);
    let raw = terms.iter().sum::<f64>() + majorant;
    let h_ratio = rows.iter().fold((f64::INFINITY, 0.0f64), |a, r| (a.0.min(r.3 .0), a.1.max(r.3 .1)));
    if !(h_ratio.1 <= 4.0 * h_ratio.0) {
        flags.push("smoothness hypothesis unverified".into());
    }
    if majorant > 0.0 {
        flags.push("tail-majorant".into());
    }
    let diags: Vec<LayerDiag> = rows
        .iter()
        .zip(&terms)
        .map(|(r, &t)| LayerDiag {
            k: r.0,
            band: (r.0 as f64 * v, (r.0 + 1) as f64 * v),
            points: 0,
            resolution: 0,
            y: r.2,
            tau: r.1,
            level: c3 * (r.0 as f64 * v).powi(2) / (c2 * (r.0 + 1) as f64 * v),
            lambda_max: phi.lambda0.min(phi_end(&phi)),
            kappa: 0.0,
            h0: 0.0,
            entropy_extrapolatable: false,
            psi: None,
            term: t,
        })
        .collect();
    let c9 = c3 / (2.0 * c2);
    let mut pb = PointBound::new(v, raw, Method::Smooth, diags, flags, majorant);
    pb.smooth = Some(SmoothDiag {
        c2,
        c3,
        c9,
        single_exponent_bound: (-conjugate(&phi, c9 * v)).exp(),
        h_ratio,
        norm_ratios: rows.iter().map(|r| r.1 / ((r.0 + 1) as f64 * v)).collect(),
    });
    Ok(pb)
}

/// `max ‖L⁰(θ)‖_{B(φ)}` over the evenly spaced subsample used for entropies.
fn sampled_tau(region: &RiskRegion, phi: &PhiFunction, opts: &BoundOptions) -> Result<f64, BoundError> {
    let fam = &region.family;
    let idx = entropy_subsample(region, opts.entropy_points);
    let norms: Result<Vec<f64>, FamilyError> =
        idx.par_iter().map(|&i| fam.contrast_norm(&region.points[i], phi, &opts.probe)).collect();
    Ok(norms?.into_iter().fold(0.0, f64::max))
}

fn phi_end(phi: &PhiFunction) -> f64 {
    match &phi.kind {
        crate::phi::PhiKind::Table { lambdas, .. } => *lambdas.last().expect("non-empty"),
        crate::phi::PhiKind::Power { .. } => f64::INFINITY,
    }
}

fn smooth_constants(rows: &[(usize, f64, f64, (f64, f64))], v: f64) -> (f64, f64) {
    let c2 = rows.iter().map(|r| r.1 / ((r.0 + 1) as f64 * v)).fold(0.0, f64::max);
    let c3 = rows.iter().map(|r| r.2 / (r.0 as f64 * v).powi(2)).fold(f64::INFINITY, f64::min);
    (c2, c3)
}

fn smooth_terms(rows: &[(usize, f64, f64, (f64, f64))], v: f64, phi: &PhiFunction) -> Vec<f64> {
    let (c2, c3) = smooth_constants(rows, v);
    rows.iter()
        .map(|r| {
            let k = r.0 as f64;
            (-conjugate(phi, c3 * k * k * v * v / (c2 * (k + 1.0) * v))).exp()
        })
        .collect()
}

/// Extremes of `h(θ)/r(θ, θ₀)²` on a thinned sample of the region.
fn h_ratios(region: &RiskRegion) -> Result<(f64, f64), BoundError> {
    let fam = &region.family;
    let step = (region.len() / 8).max(1);
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for t in region.points.iter().step_by(step) {
        let r = fam.risk_of(t);
        if r > 0.0 {
            let q = fam.kl(t)? / (r * r);
            lo = lo.min(q);
            hi = hi.max(q);
        }
    }
    Ok((lo, hi))
}

fn check_v(v: f64) -> Result<(), BoundError> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(BoundError::InvalidParameter(format!("v = {v} must be positive")));
    }
    Ok(())
}

pub fn bound_at(method: Method, fam: &Arc<ParametricFamily>, v: f64, opts: &BoundOptions) -> Result<PointBound, BoundError> {
    match method {
        Method::Compact => bound_compact(fam, v, opts),
        Method::Partition => bound_partition(fam, v, opts),
        Method::Smooth => bound_smooth(fam, v, opts),
        Method::Sample { n, uniform } => bound_sample(fam, n, v, uniform, opts),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub v: f64,
    /// Clamped and monotonized; `None` marks a gap.
    pub bound: Option<f64>,
    pub detail: Option<PointBound>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailCurve {
    pub method: String,
    pub points: Vec<CurvePoint>,
}

impl TailCurve {
    pub fn v_grid(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.v).collect()
    }

    pub fn bounds(&self) -> Vec<Option<f64>> {
        self.points.iter().map(|p| p.bound).collect()
    }

    pub fn has_gaps(&self) -> bool {
        self.points.iter().any(|p| p.bound.is_none())
    }
}

/// Maps a bound over an increasing v grid, clamps at 1 and takes the running
/// minimum (the tail is nonincreasing in v). Failures become gaps.
pub fn tail_curve(method: Method, fam: &Arc<ParametricFamily>, v_grid: &[f64], opts: &BoundOptions) -> Result<TailCurve, BoundError> {
    if v_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(BoundError::InvalidParameter("v grid must be increasing".into()));
    }
    let results: Vec<Result<PointBound, BoundError>> = v_grid.par_iter().map(|&v| bound_at(method, fam, v, opts)).collect();
    let mut run = 1.0f64;
    let points = v_grid
        .iter()
        .zip(results)
        .map(|(&v, r)| match r {
            Ok(pb) => {
                run = run.min(pb.bound);
                CurvePoint { v, bound: Some(run), detail: Some(pb), error: None }
            }
            Err(e) => CurvePoint { v, bound: None, detail: None, error: Some(e.to_string()) },
        })
        .collect();
    Ok(TailCurve { method: method.tag().into(), points })
}

/// Entropy profile of `U_k(v)` (or of `U(v)` when `layer` is `None`) under
/// its own natural distance, as the pipelines compute it.
pub fn region_entropy(fam: &Arc<ParametricFamily>, v: f64, layer: Option<usize>, opts: &BoundOptions) -> Result<EntropyProfile, BoundError> {
    check_v(v)?;
    opts.validate()?;
    let region = match layer {
        Some(k) => layer_region(fam.clone(), v, k, opts.schedule, opts.resolution)?,
        None => risk_region(fam.clone(), v, opts.resolution)?,
    };
    if region.is_empty() {
        return Err(FamilyError::EmptyRegion.into());
    }
    let y = y_of_v(&region)?;
    let nat = natural_phi_table(&region, Some(y), &opts.natural)?;
    let tau = if opts.verify_tau { nat.tau(&nat.phi, &opts.probe)?.max(1.0) } else { 1.0 };
    region_profile(&region, &nat.phi, tau, opts)
}

#[cfg(test)]
mod tests;
