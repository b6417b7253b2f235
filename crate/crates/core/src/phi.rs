//! Dominating functions for cumulant generating functions.
//!
//! A [`PhiFunction`] is a convex, nonnegative function on `[0, λ₀)` with
//! `φ(0) = 0`, used to control `log E exp(λX)`. This module provides the
//! Fenchel conjugate, the `n`-sample rescaling `nφ(λ/√n)` and its supremum
//! over `n`, the Orlicz-type norm `‖X‖_{B(φ)}`, and the tail bounds derived
//! from them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhiError {
    #[error("invalid table: {0}")]
    InvalidTable(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("λ = {lambda} lies outside the tabulated range [0, {max}]")]
    OutOfRange { lambda: f64, max: f64 },
    #[error("no finite norm: the cumulant function is not dominated by any dilation of φ")]
    NormInfinite,
    #[error("moment order {p} exceeds the range of φ (max value {max})")]
    RangeExceeded { p: f64, max: f64 },
}

/// Largest dilation accepted by [`bphi_norm`] before declaring the norm infinite.
pub const NORM_CAP: f64 = 1e12;

const SLOPE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhiKind {
    /// `coef · λ^exponent`.
    Power { coef: f64, exponent: f64 },
    /// Piecewise-linear interpolation of `(lambdas[i], values[i])`.
    Table { lambdas: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiFunction {
    pub kind: PhiKind,
    /// End of the domain. Closed-form kernels are `+∞` at and beyond it;
    /// tables are defined up to and including their last node.
    pub lambda0: f64,
}

impl PhiFunction {
    /// `λ²/2`.
    pub fn gaussian() -> Self {
        Self::power(0.5, 2.0).expect("valid constants")
    }

    pub fn power(coef: f64, exponent: f64) -> Result<Self, PhiError> {
        Self::truncated_power(coef, exponent, f64::INFINITY)
    }

    pub fn truncated_power(coef: f64, exponent: f64, lambda0: f64) -> Result<Self, PhiError> {
        if !(coef > 0.0 && coef.is_finite()) {
            return Err(PhiError::InvalidParameter(format!("coefficient {coef}")));
        }
        if !(exponent >= 1.0 && exponent.is_finite()) {
            return Err(PhiError::InvalidParameter(format!("exponent {exponent}")));
        }
        if !(lambda0 > 0.0) {
            return Err(PhiError::InvalidParameter(format!("domain end {lambda0}")));
        }
        Ok(Self { kind: PhiKind::Power { coef, exponent }, lambda0 })
    }

    /// Builds a table, rejecting anything that is not convex, nondecreasing and
    /// zero at the origin.
    pub fn tabulated(lambdas: Vec<f64>, values: Vec<f64>) -> Result<Self, PhiError> {
        validate_table(&lambdas, &values)?;
        let lambda0 = *lambdas.last().expect("validated non-empty");
        Ok(Self { kind: PhiKind::Table { lambdas, values }, lambda0 })
    }

    pub fn is_tabulated(&self) -> bool {
        matches!(self.kind, PhiKind::Table { .. })
    }

    /// Extended-value evaluation: `+∞` outside the domain.
    pub fn eval(&self, lambda: f64) -> f64 {
        let lambda = lambda.max(0.0);
        match &self.kind {
            PhiKind::Power { coef, exponent } => {
                if lambda >= self.lambda0 {
                    f64::INFINITY
                } else {
                    coef * lambda.powf(*exponent)
                }
            }
            PhiKind::Table { lambdas, values } => interpolate(lambdas, values, lambda),
        }
    }

    /// Like [`eval`](Self::eval) but refuses to evaluate a table beyond its range.
    pub fn try_eval(&self, lambda: f64) -> Result<f64, PhiError> {
        if let PhiKind::Table { lambdas, .. } = &self.kind {
            let max = *lambdas.last().expect("non-empty");
            if lambda > max || lambda < 0.0 {
                return Err(PhiError::OutOfRange { lambda, max });
            }
        }
        Ok(self.eval(lambda))
    }

    /// Largest λ at which the function is finite, when the domain is closed.
    fn last_finite(&self) -> Option<f64> {
        match &self.kind {
            PhiKind::Table { lambdas, .. } => lambdas.last().copied(),
            PhiKind::Power { .. } => None,
        }
    }

    /// `inf{μ ≥ 0 : φ(μ) ≥ y}`, capped at the domain end.
    fn inverse(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        match &self.kind {
            PhiKind::Power { coef, exponent } => (y / coef).powf(1.0 / exponent).min(self.lambda0),
            PhiKind::Table { lambdas, values } => {
                let last = values.len() - 1;
                if y > values[last] {
                    return lambdas[last];
                }
                let i = values.partition_point(|&v| v < y);
                if i == 0 {
                    return 0.0;
                }
                let (l0, l1, v0, v1) = (lambdas[i - 1], lambdas[i], values[i - 1], values[i]);
                if v1 <= v0 {
                    l0
                } else {
                    l0 + (l1 - l0) * (y - v0) / (v1 - v0)
                }
            }
        }
    }

    /// Value just inside the domain end, for closed-form kernels with finite λ₀.
    fn boundary_value(&self) -> f64 {
        match &self.kind {
            PhiKind::Power { coef, exponent } => coef * self.lambda0.powf(*exponent),
            PhiKind::Table { values, .. } => *values.last().expect("non-empty"),
        }
    }
}

fn validate_table(lambdas: &[f64], values: &[f64]) -> Result<(), PhiError> {
    if lambdas.len() != values.len() {
        return Err(PhiError::InvalidTable("length mismatch".into()));
    }
    if lambdas.len() < 2 {
        return Err(PhiError::InvalidTable("need at least two nodes".into()));
    }
    if lambdas[0] != 0.0 || values[0] != 0.0 {
        return Err(PhiError::InvalidTable("table must start at (0, 0)".into()));
    }
    if lambdas.iter().chain(values).any(|v| !v.is_finite()) {
        return Err(PhiError::InvalidTable("non-finite entry".into()));
    }
    if lambdas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(PhiError::InvalidTable("λ grid must be strictly increasing".into()));
    }
    let slopes: Vec<f64> = lambdas
        .windows(2)
        .zip(values.windows(2))
        .map(|(l, v)| (v[1] - v[0]) / (l[1] - l[0]))
        .collect();
    if slopes[0] < -SLOPE_TOL {
        return Err(PhiError::InvalidTable("values must be nondecreasing".into()));
    }
    for (i, w) in slopes.windows(2).enumerate() {
        if w[1] < w[0] - SLOPE_TOL * (1.0 + w[0].abs()) {
            return Err(PhiError::InvalidTable(format!(
                "not convex at node {}: slope {} after {}",
                i + 1,
                w[1],
                w[0]
            )));
        }
    }
    Ok(())
}

fn interpolate(lambdas: &[f64], values: &[f64], lambda: f64) -> f64 {
    let last = lambdas.len() - 1;
    if lambda > lambdas[last] {
        return f64::INFINITY;
    }
    if lambda == lambdas[last] {
        return values[last];
    }
    let i = lambdas.partition_point(|&l| l <= lambda);
    let (l0, l1) = (lambdas[i - 1], lambdas[i]);
    let (v0, v1) = (values[i - 1], values[i]);
    v0 + (v1 - v0) * (lambda - l0) / (l1 - l0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conjugate {
    pub value: f64,
    /// Maximizing λ; `+∞` when the supremum is infinite.
    pub argmax: f64,
    /// The supremum sits at the end of a finite domain.
    pub at_boundary: bool,
}

/// `φ*(x) = sup_{λ ∈ dom φ} (λx − φ(λ))`.
pub fn conjugate(phi: &PhiFunction, x: f64) -> f64 {
    conjugate_detail(phi, x).value
}

pub fn conjugate_detail(phi: &PhiFunction, x: f64) -> Conjugate {
    if x <= 0.0 || x.is_nan() {
        return Conjugate { value: 0.0, argmax: 0.0, at_boundary: false };
    }
    match &phi.kind {
        PhiKind::Table { lambdas, values } => {
            // Piecewise linear: the supremum is attained at a node.
            let mut best = (0.0, 0.0);
            for (&l, &v) in lambdas.iter().zip(values) {
                let g = l * x - v;
                if g > best.0 {
                    best = (g, l);
                }
            }
            let at_boundary = best.1 == *lambdas.last().expect("non-empty");
            Conjugate { value: best.0, argmax: best.1, at_boundary }
        }
        PhiKind::Power { .. } => conjugate_closed(phi, x),
    }
}

fn conjugate_closed(phi: &PhiFunction, x: f64) -> Conjugate {
    let g = |l: f64| l * x - phi.eval(l);
    let finite_end = phi.lambda0.is_finite();
    if finite_end {
        let end = phi.lambda0;
        let slope_end = (phi.boundary_value() - phi.eval(end * (1.0 - 1e-9))) / (end * 1e-9);
        if slope_end <= x {
            return Conjugate {
                value: end * x - phi.boundary_value(),
                argmax: end,
                at_boundary: true,
            };
        }
        let (l, v) = golden_max(&g, 0.0, end);
        return Conjugate { value: v.max(0.0), argmax: l, at_boundary: false };
    }
    let mut hi = 1.0;
    if g(hi) > 0.0 {
        while g(2.0 * hi) > g(hi) {
            hi *= 2.0;
            if hi > 1e250 {
                return Conjugate { value: f64::INFINITY, argmax: f64::INFINITY, at_boundary: false };
            }
        }
        hi *= 2.0;
    }
    let (l, v) = golden_max(&g, 0.0, hi);
    Conjugate { value: v.max(0.0), argmax: l, at_boundary: false }
}

/// Golden-section search for the maximum of a concave function on `[a, b]`.
pub(crate) fn golden_max(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    const R: f64 = 0.618_033_988_749_894_9;
    let mut c = b - R * (b - a);
    let mut d = a + R * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() <= 1e-14 * (1.0 + a.abs() + b.abs()) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - R * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + R * (b - a);
            fd = f(d);
        }
    }
    let mut best = if fc >= fd { (c, fc) } else { (d, fd) };
    for e in [a, b] {
        let fe = f(e);
        if fe > best.1 {
            best = (e, fe);
        }
    }
    best
}

/// `φₙ(λ) = nφ(λ/√n)`, the cumulant bound for a normalized sum of `n`
/// independent copies.
pub fn rescale_n(phi: &PhiFunction, n: u64) -> PhiFunction {
    let nf = n as f64;
    let root = nf.sqrt();
    match &phi.kind {
        PhiKind::Power { coef, exponent } => PhiFunction {
            kind: PhiKind::Power { coef: coef * nf.powf(1.0 - exponent / 2.0), exponent: *exponent },
            lambda0: phi.lambda0 * root,
        },
        PhiKind::Table { lambdas, values } => PhiFunction {
            kind: PhiKind::Table {
                lambdas: lambdas.iter().map(|l| l * root).collect(),
                values: values.iter().map(|v| v * nf).collect(),
            },
            lambda0: phi.lambda0 * root,
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhiBar {
    pub phi: PhiFunction,
    /// The supremum over `n` was still growing at `n_max`.
    pub divergent: bool,
}

/// Default tabulation range for `φ̄` when φ has an unbounded domain.
pub const PHI_BAR_RANGE: f64 = 32.0;

/// `φ̄(λ) = sup_{1 ≤ n ≤ n_max} nφ(λ/√n)`, tabulated on a uniform grid.
pub fn phi_bar(phi: &PhiFunction, n_max: u64) -> Result<PhiBar, PhiError> {
    let end = phi.last_finite().unwrap_or(phi.lambda0).min(PHI_BAR_RANGE);
    let end = if phi.lambda0.is_finite() && !phi.is_tabulated() { end * (1.0 - 1e-9) } else { end };
    let grid: Vec<f64> = (0..=256).map(|i| end * i as f64 / 256.0).collect();
    phi_bar_on(phi, n_max, &grid)
}

pub fn phi_bar_on(phi: &PhiFunction, n_max: u64, grid: &[f64]) -> Result<PhiBar, PhiError> {
    if n_max < 2 {
        return Err(PhiError::InvalidParameter("n_max must be at least 2".into()));
    }
    let half = n_max / 2;
    let mut values = Vec::with_capacity(grid.len());
    let mut divergent = false;
    for &l in grid {
        let mut best = 0.0f64;
        let mut best_half = 0.0f64;
        for n in 1..=n_max {
            let nf = n as f64;
            let v = nf * phi.eval(l / nf.sqrt());
            best = best.max(v);
            if n == half {
                best_half = best;
            }
        }
        if best > best_half * (1.0 + 1e-3) && best > 1e-12 {
            divergent = true;
        }
        values.push(best);
    }
    let phi = PhiFunction::tabulated(grid.to_vec(), values)?;
    Ok(PhiBar { phi, divergent })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormProbe {
    pub points: usize,
    /// Probe range when neither φ nor the caller bounds λ.
    pub lambda_max: f64,
    /// Lowest probe as a fraction of the highest.
    pub lower_fraction: f64,
    pub refine: bool,
}

impl Default for NormProbe {
    fn default() -> Self {
        Self { points: 256, lambda_max: 16.0, lower_fraction: 1e-3, refine: true }
    }
}

impl NormProbe {
    /// Log-spaced probe points on `(lower_fraction·M, M]` with `M = 0.99λ₀`
    /// (or `lambda_max` for unbounded domains).
    pub fn grid(&self, phi: &PhiFunction) -> Vec<f64> {
        let top = if phi.lambda0.is_finite() { 0.99 * phi.lambda0 } else { self.lambda_max };
        log_grid(self.lower_fraction * top, top, self.points)
    }
}

pub(crate) fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![hi];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// `‖X‖_{B(φ)}`: the least τ with `logmgf(λ) ≤ φ(λτ)` at every probe.
///
/// `logmgf` may return `+∞` outside its own domain. With `probe.refine` the
/// worst probe is polished by a golden-section search between its neighbours.
pub fn bphi_norm(logmgf: &dyn Fn(f64) -> f64, phi: &PhiFunction, probe: &NormProbe) -> Result<f64, PhiError> {
    bphi_norm_on(logmgf, phi, &probe.grid(phi), probe.refine)
}

/// [`bphi_norm`] on an explicit increasing probe grid.
pub fn bphi_norm_on(logmgf: &dyn Fn(f64) -> f64, phi: &PhiFunction, grid: &[f64], refine: bool) -> Result<f64, PhiError> {
    let values: Vec<f64> = grid.iter().map(|&l| logmgf(l)).collect();
    let tau = bphi_norm_sampled(grid, &values, phi)?;
    if !refine || tau == 0.0 || grid.len() < 3 {
        return Ok(tau);
    }
    let j = grid
        .iter()
        .zip(&values)
        .map(|(&l, &g)| probe_tau(l, g, phi).unwrap_or(f64::INFINITY))
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (i, t)| if t > b.1 { (i, t) } else { b })
        .0;
    let lo = grid[j.saturating_sub(1)];
    let hi = grid[(j + 1).min(grid.len() - 1)];
    let f = |l: f64| probe_tau(l, logmgf(l), phi).unwrap_or(f64::INFINITY);
    let (_, t) = golden_max(&f, lo, hi);
    let tau = tau.max(t);
    if !(tau <= NORM_CAP) {
        return Err(PhiError::NormInfinite);
    }
    Ok(tau)
}

/// Smallest τ with `g ≤ φ(λτ)` at a single λ.
fn probe_tau(l: f64, g: f64, phi: &PhiFunction) -> Result<f64, PhiError> {
    if g.is_nan() {
        return Err(PhiError::NormInfinite);
    }
    if g <= 0.0 {
        return Ok(0.0);
    }
    if g.is_infinite() {
        // Only an infinite value of φ dominates: λτ must leave the domain.
        if !phi.lambda0.is_finite() {
            return Err(PhiError::NormInfinite);
        }
        return Ok(phi.lambda0 / l * (1.0 + 1e-12));
    }
    let mu = phi.inverse(g);
    if phi.eval(mu) < g {
        // φ stays below g on its domain: step just past the end.
        Ok(mu * (1.0 + 1e-12) / l)
    } else {
        Ok(mu / l)
    }
}

/// [`bphi_norm`] for cumulant values already evaluated at `lambdas`.
pub fn bphi_norm_sampled(lambdas: &[f64], values: &[f64], phi: &PhiFunction) -> Result<f64, PhiError> {
    let mut tau = 0.0f64;
    for (&l, &g) in lambdas.iter().zip(values) {
        tau = tau.max(probe_tau(l, g, phi)?);
    }
    if !(tau <= NORM_CAP) {
        return Err(PhiError::NormInfinite);
    }
    Ok(tau)
}

/// `exp(−φ*(x/τ))`: the tail bound `P(X > x)` for `‖X‖_{B(φ)} ≤ τ`.
pub fn tail_from_norm(phi: &PhiFunction, tau: f64, x: f64) -> f64 {
    if tau == 0.0 {
        return if x > 0.0 { 0.0 } else { 1.0 };
    }
    (-conjugate(phi, x / tau)).exp()
}

/// `exp(−φₙ*(x))`, or `exp(−φ̄*(x))` with `uniform`, bounding
/// `P(n^{-1/2} Σ ξᵢ > x)` for variables dominated by φ.
pub fn chernoff_sum_tail(phi: &PhiFunction, n: u64, x: f64, uniform: bool) -> Result<f64, PhiError> {
    let nu = if uniform { phi_bar(phi, n.max(2))?.phi } else { rescale_n(phi, n) };
    Ok((-conjugate(&nu, x)).exp())
}

/// Slowly varying factor `R` in tail exponents `x^q R(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum SlowVar {
    /// A positive constant.
    Const { c: f64 },
    /// `[log(x+3)]^r · [log log(x+16)]^s`.
    LogPow { r: f64, s: f64 },
}

impl Default for SlowVar {
    fn default() -> Self {
        SlowVar::Const { c: 1.0 }
    }
}

impl SlowVar {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            SlowVar::Const { c } => c,
            SlowVar::LogPow { r, s } => (x + 3.0).ln().powf(r) * (x + 16.0).ln().ln().powf(s),
        }
    }

    pub fn validate(&self) -> Result<(), PhiError> {
        match *self {
            SlowVar::Const { c } if !(c > 0.0 && c.is_finite()) => {
                Err(PhiError::InvalidParameter(format!("slowly varying constant {c}")))
            }
            SlowVar::LogPow { r, s } if !(r.is_finite() && s.is_finite()) => {
                Err(PhiError::InvalidParameter("non-finite log-power exponents".into()))
            }
            _ => Ok(()),
        }
    }
}

/// `min(exp(−c_weibull·x^q·R(x)), exp(−c_gauss·x²))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEnvelope {
    pub q: f64,
    pub slowvar: SlowVar,
    pub c_weibull: f64,
    pub c_gauss: f64,
}

impl TailEnvelope {
    pub fn weibull_branch(&self, x: f64) -> f64 {
        (-self.c_weibull * x.powf(self.q) * self.slowvar.eval(x)).exp()
    }

    pub fn gauss_branch(&self, x: f64) -> f64 {
        (-self.c_gauss * x * x).exp()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.weibull_branch(x).min(self.gauss_branch(x))
    }
}

pub fn lemma31_envelope(q: f64, slowvar: SlowVar, c_weibull: f64, c_gauss: f64) -> TailEnvelope {
    TailEnvelope { q, slowvar, c_weibull, c_gauss }
}

/// Moment-type bound `p / φ̄⁻¹(p)`.
pub fn moment_bound(phi_bar: &PhiFunction, p: f64) -> Result<f64, PhiError> {
    if !(p > 0.0) {
        return Err(PhiError::InvalidParameter(format!("moment order {p}")));
    }
    let max = match &phi_bar.kind {
        PhiKind::Table { values, .. } => *values.last().expect("non-empty"),
        PhiKind::Power { .. } => {
            if phi_bar.lambda0.is_finite() {
                phi_bar.boundary_value()
            } else {
                f64::INFINITY
            }
        }
    };
    if p > max {
        return Err(PhiError::RangeExceeded { p, max });
    }
    Ok(p / phi_bar.inverse(p))
}
