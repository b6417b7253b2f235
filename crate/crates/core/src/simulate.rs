//! Monte Carlo ground truth: maximum likelihood fits, empirical deviation
//! tails with Wilson intervals, comparison against bound curves, and the
//! sum-tail experiment for Weibull-type variables.

use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::gamma;
use thiserror::Error;

use crate::bounds::TailCurve;
use crate::family::{FamilyError, ParametricFamily};
use crate::phi::{lemma31_envelope, SlowVar, TailEnvelope};
use crate::quad::{log_integral, Axis, QuadOptions};

/// Two-sided 99% normal quantile.
pub const Z99: f64 = 2.575_829_303_548_9;

/// Fraction of replications allowed to fail before a run is rejected.
pub const MAX_ABORT_FRACTION: f64 = 1e-3;

const GOLDEN_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("{aborted} of {replications} replications failed")]
    TooManyAborts { aborted: u64, replications: u64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error(transparent)]
    Family(#[from] FamilyError),
}

/// Search limits of the MLE grid, intersected with the parameter box.
fn search_box(fam: &ParametricFamily) -> (Vec<f64>, Vec<f64>) {
    let lo = fam.mle.lo.iter().zip(&fam.bounds.lo).map(|(a, b)| a.max(*b)).collect();
    let hi = fam.mle.hi.iter().zip(&fam.bounds.hi).map(|(a, b)| a.min(*b)).collect();
    (lo, hi)
}

fn log_likelihood(fam: &ParametricFamily, sample: &[f64], theta: &[f64]) -> f64 {
    if !fam.bounds.contains(theta) {
        return f64::NEG_INFINITY;
    }
    let m = fam.model().obs_dim();
    sample.chunks_exact(m).map(|x| fam.log_density(x, theta)).sum()
}

/// `(ll, risk)` ordering: larger likelihood wins, ties go to smaller risk.
fn better(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// Maximizes a unimodal `f` on `[a, b]` by golden-section search.
fn golden_max(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > GOLDEN_TOL * (1.0 + a.abs().max(b.abs())) {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Maximizer of the log-likelihood over the truncated search box: a global
/// grid search followed by golden-section refinement per coordinate, cycled
/// until no coordinate moves by more than 1e-8. Grid ties go to the point of
/// smallest risk.
pub fn mle_fit(fam: &ParametricFamily, sample: &[f64]) -> Result<Vec<f64>, SimError> {
    let m = fam.model().obs_dim();
    if sample.is_empty() || sample.len() % m != 0 {
        return Err(SimError::InvalidSample(format!("{} values for observations of dimension {m}", sample.len())));
    }
    if let Some(x) = sample.chunks_exact(m).find(|x| !fam.model().in_support(x) || x.iter().any(|v| !v.is_finite())) {
        return Err(SimError::InvalidSample(format!("observation {x:?} outside the support")));
    }
    let (lo, hi) = search_box(fam);
    let d = fam.dim();
    let pts = fam.mle.points;
    let mut theta = fam.theta0.clone();
    let mut steps = vec![0.0; d];
    for cycle in 0..64 {
        let mut moved = 0.0f64;
        for j in 0..d {
            let eval = |t: f64, theta: &mut Vec<f64>| {
                theta[j] = t;
                (log_likelihood(fam, sample, theta), fam.risk_of(theta))
            };
            let mut work = theta.clone();
            let (a, b, mut best) = if cycle == 0 {
                let h = (hi[j] - lo[j]) / (pts - 1) as f64;
                steps[j] = h;
                let mut best = (lo[j], eval(lo[j], &mut work));
                for i in 1..pts {
                    let t = if i == pts - 1 { hi[j] } else { lo[j] + i as f64 * h };
                    let s = eval(t, &mut work);
                    if better(s, best.1) {
                        best = (t, s);
                    }
                }
                if best.1 .0 == f64::NEG_INFINITY {
                    return Err(SimError::InvalidSample("log-likelihood is −∞ on the whole grid".into()));
                }
                ((best.0 - h).max(lo[j]), (best.0 + h).min(hi[j]), best)
            } else {
                let t = theta[j];
                ((t - steps[j]).max(lo[j]), (t + steps[j]).min(hi[j]), (t, eval(t, &mut work)))
            };
            let f = |t: f64| {
                let mut w = theta.clone();
                w[j] = t;
                log_likelihood(fam, sample, &w)
            };
            let (t, _) = golden_max(&f, a, b);
            let s = eval(t, &mut work);
            if better(s, best.1) {
                best = (t, s);
            }
            moved = moved.max((best.0 - theta[j]).abs());
            theta[j] = best.0;
        }
        if d == 1 || (cycle > 0 && moved <= GOLDEN_TOL) {
            break;
        }
    }
    Ok(theta)
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    let lo = if k == 0 { 0.0 } else { (center - half).clamp(0.0, p) };
    let hi = if k == n { 1.0 } else { (center + half).clamp(p, 1.0) };
    (lo, hi)
}

fn check_grid(v_grid: &[f64]) -> Result<(), SimError> {
    if v_grid.is_empty() {
        return Err(SimError::InvalidPlan("empty grid".into()));
    }
    if v_grid.iter().any(|v| !v.is_finite()) || v_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(SimError::InvalidPlan("grid must be finite and increasing".into()));
    }
    Ok(())
}

/// Child stream `index` of the master seed.
pub fn child_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone)]
pub struct SimulationPlan {
    pub family: Arc<ParametricFamily>,
    pub n: usize,
    pub replications: u64,
    pub v_grid: Vec<f64>,
    pub master_seed: u64,
    /// Multiply the risk by √n.
    pub scaled: bool,
}

impl SimulationPlan {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.replications < 100 {
            return Err(SimError::InvalidPlan(format!("{} replications; at least 100 required", self.replications)));
        }
        if self.n == 0 {
            return Err(SimError::InvalidPlan("sample size must be positive".into()));
        }
        check_grid(&self.v_grid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalTail {
    pub v_grid: Vec<f64>,
    /// Replications that produced an estimate.
    pub replications: u64,
    pub aborted: u64,
    pub exceed_counts: Vec<u64>,
    pub estimates: Vec<f64>,
    pub wilson_lo: Vec<f64>,
    pub wilson_hi: Vec<f64>,
    /// Estimates within 1% of the edge of the search box.
    pub boundary_hits: u64,
    /// Search box, recorded when `boundary_hits > 0`.
    pub truncation: Option<(Vec<f64>, Vec<f64>)>,
}

impl EmpiricalTail {
    /// Tail estimates from a list of deviations; every count is an integer
    /// so the result does not depend on the order the deviations arrived in.
    pub fn from_deviations(v_grid: &[f64], deviations: &[f64]) -> Self {
        let n = deviations.len() as u64;
        let exceed_counts: Vec<u64> = v_grid.iter().map(|&v| deviations.iter().filter(|&&r| r > v).count() as u64).collect();
        let estimates = exceed_counts.iter().map(|&k| if n == 0 { 0.0 } else { k as f64 / n as f64 }).collect();
        let (wilson_lo, wilson_hi) = exceed_counts.iter().map(|&k| wilson(k, n, Z99)).unzip();
        Self {
            v_grid: v_grid.to_vec(),
            replications: n,
            aborted: 0,
            exceed_counts,
            estimates,
            wilson_lo,
            wilson_hi,
            boundary_hits: 0,
            truncation: None,
        }
    }
}

/// Simulates `P(r(θ̂ₙ, θ₀) > v)` (or with the risk scaled by √n). Each
/// replication draws from its own child stream of the master seed, so the
/// counts are identical for any thread count.
pub fn empirical_tail(plan: &SimulationPlan) -> Result<EmpiricalTail, SimError> {
    plan.validate()?;
    let fam = &plan.family;
    let m = fam.model().obs_dim();
    let (lo, hi) = search_box(fam);
    let scale = if plan.scaled { (plan.n as f64).sqrt() } else { 1.0 };
    let fits: Vec<Option<(f64, bool)>> = (0..plan.replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = child_rng(plan.master_seed, r);
            let mut xs = vec![0.0; plan.n * m];
            for x in xs.chunks_exact_mut(m) {
                fam.model().sample(&fam.theta0, &mut rng, x);
            }
            let t = mle_fit(fam, &xs).ok()?;
            let edge = t.iter().enumerate().any(|(j, &t)| {
                let w = 0.01 * (hi[j] - lo[j]);
                t - lo[j] <= w || hi[j] - t <= w
            });
            Some((scale * fam.risk_of(&t), edge))
        })
        .collect();
    let aborted = fits.iter().filter(|f| f.is_none()).count() as u64;
    if aborted as f64 > MAX_ABORT_FRACTION * plan.replications as f64 {
        return Err(SimError::TooManyAborts { aborted, replications: plan.replications });
    }
    let devs: Vec<f64> = fits.iter().flatten().map(|f| f.0).collect();
    let hits = fits.iter().flatten().filter(|f| f.1).count() as u64;
    let mut tail = EmpiricalTail::from_deviations(&plan.v_grid, &devs);
    tail.aborted = aborted;
    tail.boundary_hits = hits;
    if hits > 0 {
        tail.truncation = Some((lo, hi));
    }
    Ok(tail)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
}

/// Ordinary least squares line through `(x, y)`; `None` with fewer than two
/// distinct abscissae.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some(LineFit { slope, intercept: my - slope * mx, points: n })
}

/// `c` minimizing `Σ ((y − c·a)/y)²`, the squared relative error of the
/// model `y ≈ c·a` for positive `y`.
fn relative_fit(a: &[f64], y: &[f64]) -> Option<f64> {
    if a.len() < 2 {
        return None;
    }
    let s1: f64 = a.iter().zip(y).map(|(a, y)| a / y).sum();
    let s2: f64 = a.iter().zip(y).map(|(a, y)| (a / y) * (a / y)).sum();
    (s2 > 0.0).then(|| s1 / s2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariate {
    V,
    V2,
    LogV,
}

impl Covariate {
    pub const ALL: [Covariate; 3] = [Covariate::V, Covariate::V2, Covariate::LogV];

    pub fn apply(self, v: f64) -> f64 {
        match self {
            Covariate::V => v,
            Covariate::V2 => v * v,
            Covariate::LogV => v.ln(),
        }
    }
}

/// Fit of `−log tail` against a covariate of v.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeFit {
    /// `bound` or `empirical`.
    pub target: String,
    pub covariate: Covariate,
    pub fit: Option<LineFit>,
}

/// Regresses `−log y` on each covariate over the points where `0 < y < 1`.
pub fn log_slope_fits(target: &str, v: &[f64], y: &[Option<f64>]) -> Vec<SlopeFit> {
    let (vs, ls): (Vec<f64>, Vec<f64>) =
        v.iter().zip(y).filter_map(|(&v, y)| y.filter(|&y| y > 0.0 && y < 1.0).map(|y| (v, -y.ln()))).unzip();
    Covariate::ALL
        .iter()
        .map(|&c| {
            let xs: Vec<f64> = vs.iter().map(|&v| c.apply(v)).collect();
            SlopeFit { target: target.into(), covariate: c, fit: least_squares(&xs, &ls) }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRecord {
    pub v: f64,
    pub bound: Option<f64>,
    pub empirical: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    /// The bound lies below the 99% lower confidence limit.
    pub violation: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub method: String,
    pub records: Vec<ComparisonRecord>,
    pub violations: usize,
    /// Grid points where the bound was unavailable.
    pub gaps: usize,
    pub fits: Vec<SlopeFit>,
    pub verdict: Verdict,
}

/// Checks `bound ≥ wilson_lo` at every grid point. Gaps are counted but are
/// not violations.
pub fn compare(curve: &TailCurve, tail: &EmpiricalTail) -> Result<ComparisonReport, SimError> {
    let v = curve.v_grid();
    if v.len() != tail.v_grid.len() || v.iter().zip(&tail.v_grid).any(|(a, b)| (a - b).abs() > 1e-12 * a.abs().max(1.0)) {
        return Err(SimError::GridMismatch(format!("curve has {} points, tail has {}", v.len(), tail.v_grid.len())));
    }
    let records: Vec<ComparisonRecord> = curve
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| ComparisonRecord {
            v: p.v,
            bound: p.bound,
            empirical: tail.estimates[i],
            wilson_lo: tail.wilson_lo[i],
            wilson_hi: tail.wilson_hi[i],
            violation: p.bound.is_some_and(|b| b < tail.wilson_lo[i]),
        })
        .collect();
    let violations = records.iter().filter(|r| r.violation).count();
    let gaps = records.iter().filter(|r| r.bound.is_none()).count();
    let mut fits = log_slope_fits("bound", &v, &curve.bounds());
    let emp: Vec<Option<f64>> = tail.estimates.iter().map(|&e| Some(e)).collect();
    fits.extend(log_slope_fits("empirical", &v, &emp));
    let verdict = if violations == 0 { Verdict::Pass } else { Verdict::Fail };
    Ok(ComparisonReport { method: curve.method.clone(), records, violations, gaps, fits, verdict })
}

/// Symmetric variable with `P(|η| > x) = exp(−x^q R(x))`, sampled by
/// inverting the tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeibullType {
    pub q: f64,
    pub slowvar: SlowVar,
}

impl WeibullType {
    pub fn new(q: f64, slowvar: SlowVar) -> Result<Self, SimError> {
        if !(q > 0.0 && q <= 2.0) {
            return Err(SimError::InvalidPlan(format!("q = {q} must lie in (0, 2]")));
        }
        slowvar.validate().map_err(|e| SimError::InvalidPlan(e.to_string()))?;
        Ok(Self { q, slowvar })
    }

    fn exponent(&self, x: f64) -> f64 {
        x.powf(self.q) * self.slowvar.eval(x)
    }

    pub fn tail(&self, x: f64) -> f64 {
        if x <= 0.0 {
            1.0
        } else {
            (-self.exponent(x)).exp()
        }
    }

    /// Solves `x^q R(x) = e` for `x ≥ 0`.
    pub fn invert(&self, e: f64) -> f64 {
        if let SlowVar::Const { c } = self.slowvar {
            return (e / c).powf(1.0 / self.q);
        }
        let mut hi = 1.0;
        while self.exponent(hi) < e {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.exponent(mid) < e {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        let e: f64 = Exp1.sample(rng);
        let x = self.invert(e);
        if rng.next_u32() & 1 == 0 {
            x
        } else {
            -x
        }
    }

    /// `Var η = ∫₀^∞ 2x P(|η| > x) dx`.
    pub fn variance(&self) -> f64 {
        if let SlowVar::Const { c } = self.slowvar {
            return gamma(1.0 + 2.0 / self.q) / c.powf(2.0 / self.q);
        }
        let f = |x: f64| if x <= 0.0 { f64::NEG_INFINITY } else { (2.0 * x).ln() - self.exponent(x) };
        log_integral(&f, &Axis::HalfLine { lower: 0.0, scale: 1.0 }, &QuadOptions::default()).map(f64::exp).unwrap_or(f64::NAN)
    }
}

/// Minimum exceedances for a tail point to enter fits and checks.
pub const MIN_EXCEEDANCES: u64 = 30;

/// Extent of the Gaussian fitting zone in units of σ.
pub const GAUSS_ZONE: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SumTail {
    pub n: usize,
    pub tail: EmpiricalTail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lemma31Report {
    pub q: f64,
    pub slowvar: SlowVar,
    pub replications: u64,
    pub seed: u64,
    pub x_grid: Vec<f64>,
    pub variance: f64,
    /// `P(|ζ(n)| > x)` per n.
    pub tails: Vec<SumTail>,
    /// `max_n` of the estimates, with the largest lower and upper limits.
    pub sup_estimate: Vec<f64>,
    pub sup_lo: Vec<f64>,
    pub sup_hi: Vec<f64>,
    /// Grid points where some n has at least `MIN_EXCEEDANCES` exceedances.
    pub qualifying: Vec<bool>,
    /// Relative least squares constant of `x^q R(x)` on the smallest n over the upper
    /// half of its qualifying points.
    pub c_weibull_fit: Option<f64>,
    /// Relative least squares constant of `x²` on the largest n over its qualifying
    /// points with `x ≤ 3σ`, σ² = Var η.
    pub c_gauss_fit: Option<f64>,
    /// Fitted constants capped so that the upper envelope stays above every
    /// qualifying lower limit.
    pub upper: Option<TailEnvelope>,
    pub upper_violations: usize,
    /// Envelope with the fitted constants multiplied by 4, checked against
    /// the upper limits.
    pub lower: Option<TailEnvelope>,
    pub lower_violations: usize,
    /// Mean relative log-distance of the largest-n tail to each fitted
    /// branch over the middle third of the Gaussian fitting points.
    pub gauss_distance: Option<f64>,
    pub weibull_distance: Option<f64>,
}

impl Lemma31Report {
    pub fn gaussian_closer(&self) -> Option<bool> {
        Some(self.gauss_distance? < self.weibull_distance?)
    }
}

/// Tails of `ζ(n) = n^{−1/2} Σ η(i)` for i.i.d. Weibull-type η, with fitted
/// envelope branches.
pub fn lemma31_experiment(
    q: f64,
    slowvar: SlowVar,
    n_set: &[usize],
    x_grid: &[f64],
    replications: u64,
    seed: u64,
) -> Result<Lemma31Report, SimError> {
    let gen = WeibullType::new(q, slowvar)?;
    check_grid(x_grid)?;
    if n_set.is_empty() || n_set.contains(&0) {
        return Err(SimError::InvalidPlan("sample sizes must be positive".into()));
    }
    if replications < 100 {
        return Err(SimError::InvalidPlan(format!("{replications} replications; at least 100 required")));
    }
    let mut ns = n_set.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let tails: Vec<SumTail> = ns
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let devs: Vec<f64> = (0..replications)
                .into_par_iter()
                .map(|r| {
                    let mut rng = child_rng(seed, ((k as u64) << 40) | r);
                    let s: f64 = (0..n).map(|_| gen.sample(&mut rng)).sum();
                    (s / (n as f64).sqrt()).abs()
                })
                .collect();
            SumTail { n, tail: EmpiricalTail::from_deviations(x_grid, &devs) }
        })
        .collect();

    let nx = x_grid.len();
    let ok = |t: &EmpiricalTail, i: usize| t.exceed_counts[i] >= MIN_EXCEEDANCES;
    let mut sup_estimate = vec![0.0; nx];
    let mut sup_lo = vec![0.0; nx];
    let mut sup_hi = vec![0.0; nx];
    let mut qualifying = vec![false; nx];
    for i in 0..nx {
        for st in &tails {
            let t = &st.tail;
            sup_estimate[i] = f64::max(sup_estimate[i], t.estimates[i]);
            sup_hi[i] = f64::max(sup_hi[i], t.wilson_hi[i]);
            if ok(t, i) {
                qualifying[i] = true;
                sup_lo[i] = f64::max(sup_lo[i], t.wilson_lo[i]);
            }
        }
    }

    let weibull_x = |x: f64| x.powf(q) * slowvar.eval(x);
    let branch_points = |t: &EmpiricalTail| -> Vec<usize> {
        (0..nx).filter(|&i| ok(t, i) && t.estimates[i] < 1.0 && x_grid[i] > 0.0).collect()
    };
    let first = &tails[0].tail;
    let last = &tails[tails.len() - 1].tail;
    let c_weibull_fit = {
        let idx = branch_points(first);
        let upper_half = &idx[idx.len() / 2..];
        let xs: Vec<f64> = upper_half.iter().map(|&i| weibull_x(x_grid[i])).collect();
        let ys: Vec<f64> = upper_half.iter().map(|&i| -first.estimates[i].ln()).collect();
        relative_fit(&xs, &ys).filter(|c| *c > 0.0)
    };
    // The Gaussian branch is fitted where the central limit theorem applies.
    let variance = gen.variance();
    let zone = if variance.is_finite() { GAUSS_ZONE * variance.sqrt() } else { f64::INFINITY };
    let last_idx: Vec<usize> = branch_points(last).into_iter().filter(|&i| x_grid[i] <= zone).collect();
    let c_gauss_fit = {
        let xs: Vec<f64> = last_idx.iter().map(|&i| x_grid[i] * x_grid[i]).collect();
        let ys: Vec<f64> = last_idx.iter().map(|&i| -last.estimates[i].ln()).collect();
        relative_fit(&xs, &ys).filter(|c| *c > 0.0)
    };

    let (mut upper, mut upper_violations, mut lower, mut lower_violations) = (None, 0, None, 0);
    let (mut gauss_distance, mut weibull_distance) = (None, None);
    if let (Some(c1), Some(c2)) = (c_weibull_fit, c_gauss_fit) {
        // exp(−c·a) ≥ L  ⇔  c ≤ −log L / a, for both branches of the min.
        let cap = |a: &dyn Fn(f64) -> f64, c: f64| {
            (0..nx)
                .filter(|&i| qualifying[i] && x_grid[i] > 0.0 && sup_lo[i] > 0.0)
                .map(|i| -sup_lo[i].ln() / a(x_grid[i]))
                .fold(c, f64::min)
                * (1.0 - 1e-12)
        };
        let env = lemma31_envelope(q, slowvar, cap(&weibull_x, c1), cap(&|x| x * x, c2));
        upper_violations = (0..nx).filter(|&i| qualifying[i] && env.eval(x_grid[i]) < sup_lo[i]).count();
        upper = Some(env);
        let low = lemma31_envelope(q, slowvar, 4.0 * c1, 4.0 * c2);
        lower_violations = (0..nx).filter(|&i| qualifying[i] && low.eval(x_grid[i]) > sup_hi[i]).count();
        lower = Some(low);

        let fitted = lemma31_envelope(q, slowvar, c1, c2);
        let mid = &last_idx[last_idx.len() / 3..(2 * last_idx.len()).div_ceil(3)];
        if !mid.is_empty() {
            let dist = |branch: &dyn Fn(f64) -> f64| {
                mid.iter()
                    .map(|&i| {
                        let le = last.estimates[i].ln();
                        (le - branch(x_grid[i]).ln()).abs() / le.abs()
                    })
                    .sum::<f64>()
                    / mid.len() as f64
            };
            gauss_distance = Some(dist(&|x| fitted.gauss_branch(x)));
            weibull_distance = Some(dist(&|x| fitted.weibull_branch(x)));
        }
    }

    Ok(Lemma31Report {
        q,
        slowvar,
        replications,
        seed,
        x_grid: x_grid.to_vec(),
        variance,
        tails,
        sup_estimate,
        sup_lo,
        sup_hi,
        qualifying,
        c_weibull_fit,
        c_gauss_fit,
        upper,
        upper_violations,
        lower,
        lower_violations,
        gauss_distance,
        weibull_distance,
    })
}

#[cfg(test)]
mod tests;
