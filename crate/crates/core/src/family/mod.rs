//! Parametric families and the log-likelihood ratio field.
//!
//! For a family `f(x, θ)` with true parameter θ₀ the contrast is
//! `L(θ) = log f(ξ, θ) − log f(ξ, θ₀)`, its mean is `−h(θ)` with
//! `h(θ) = KL(f_θ₀ ‖ f_θ) ≥ 0`, and `L⁰ = L + h` is the centered field.

mod builtin;
mod natural;
mod region;

use std::fmt;
use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use builtin::{CauchyShift, ExponentialScale, GaussianScale, GaussianShift, ModelSpec, SphericalUnimodal};
pub use natural::{natural_distance_matrix, natural_phi, natural_phi_table, tau_sup, y_of_v, NaturalOptions, NaturalPhi};
pub use region::{layer_region, risk_region, RiskRegion, Schedule};

use crate::phi::{bphi_norm_on, log_grid, NormProbe, PhiError, PhiFunction};
use crate::quad::{kramer_limit, Axis, QuadError, QuadOptions, TiltRule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FamilyError {
    #[error("quadrature failed: {0}")]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Phi(#[from] PhiError),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("region is unbounded; restrict the parameter box or use a layered partition")]
    Unbounded,
    #[error("region is empty")]
    EmptyRegion,
}

/// A density model `f(x, θ)` with a sampler.
pub trait Model: Send + Sync + fmt::Debug {
    fn name(&self) -> String;
    fn obs_dim(&self) -> usize;
    fn param_dim(&self) -> usize;
    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64;
    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore, out: &mut [f64]);
    /// Integration axis for one-dimensional observations under θ₀.
    fn axis(&self, theta0: &[f64]) -> Axis;
    fn in_support(&self, _x: &[f64]) -> bool {
        true
    }
    /// `g` with `f(x, θ) = g(|x − θ|)`, for spherically symmetric location models.
    fn radial_log_density(&self) -> Option<Box<dyn Fn(f64) -> f64 + Send + Sync>> {
        None
    }
}

pub type RiskFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;

#[derive(Clone, Default)]
pub enum Risk {
    #[default]
    Euclidean,
    Custom(Arc<RiskFn>),
}

impl fmt::Debug for Risk {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Risk::Euclidean => f.write_str("Euclidean"),
            Risk::Custom(_) => f.write_str("Custom"),
        }
    }
}

impl Risk {
    pub fn eval(&self, theta: &[f64], theta0: &[f64]) -> f64 {
        match self {
            Risk::Euclidean => theta.iter().zip(theta0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
            Risk::Custom(f) => f(theta, theta0),
        }
    }
}

/// Axis-aligned parameter box; bounds may be infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ParamBox {
    pub fn unbounded(dim: usize) -> Self {
        Self { lo: vec![f64::NEG_INFINITY; dim], hi: vec![f64::INFINITY; dim] }
    }

    pub fn interval(lo: f64, hi: f64) -> Self {
        Self { lo: vec![lo], hi: vec![hi] }
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.iter().zip(self.lo.iter().zip(&self.hi)).all(|(t, (l, h))| t >= l && t <= h)
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.iter().chain(&self.hi).all(|v| v.is_finite())
    }
}

/// Grid search settings for the maximum likelihood estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MleGrid {
    pub points: usize,
    /// Finite search limits per coordinate, intersected with the parameter box.
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Field of log-likelihood ratios over a parameter set, with everything
/// needed to integrate against `f(·, θ₀)`.
#[derive(Clone)]
pub struct ParametricFamily {
    model: Arc<dyn Model>,
    pub theta0: Vec<f64>,
    pub bounds: ParamBox,
    pub risk: Risk,
    pub quad: QuadOptions,
    pub mle: MleGrid,
}

impl fmt::Debug for ParametricFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParametricFamily")
            .field("model", &self.model.name())
            .field("theta0", &self.theta0)
            .field("bounds", &self.bounds)
            .field("risk", &self.risk)
            .finish()
    }
}

/// Largest λ probed when looking for the end of a cumulant's domain.
pub const KRAMER_CAP: f64 = 128.0;

/// Tilts a rule is refined for when it must serve every λ in `[0, top]`.
pub(crate) fn anchors(top: f64) -> Vec<f64> {
    let mut a = vec![0.0, top / 64.0, top / 16.0];
    a.extend((1..=8).map(|i| top * i as f64 / 8.0));
    a
}

impl ParametricFamily {
    pub fn new(model: Arc<dyn Model>, theta0: Vec<f64>, bounds: ParamBox, mle: MleGrid) -> Result<Self, FamilyError> {
        let d = model.param_dim();
        if theta0.len() != d || bounds.lo.len() != d || bounds.hi.len() != d || mle.lo.len() != d || mle.hi.len() != d {
            return Err(FamilyError::InvalidParameter("dimension mismatch".into()));
        }
        if !bounds.contains(&theta0) {
            return Err(FamilyError::InvalidParameter("θ₀ lies outside the parameter box".into()));
        }
        if mle.points < 3 {
            return Err(FamilyError::InvalidParameter("MLE grid needs at least 3 points".into()));
        }
        Ok(Self { model, theta0, bounds, risk: Risk::Euclidean, quad: QuadOptions::default(), mle })
    }

    /// A built-in model with its default θ₀, box and search grid.
    pub fn builtin(spec: &ModelSpec) -> Result<Self, FamilyError> {
        let model: Arc<dyn Model> = Arc::from(spec.build().map_err(FamilyError::InvalidParameter)?);
        let d = model.param_dim();
        let (theta0, bounds, mle) = match spec {
            ModelSpec::GaussianShift { .. } | ModelSpec::SphericalUnimodal { .. } => (
                vec![0.0; d],
                ParamBox::unbounded(d),
                MleGrid { points: 1024, lo: vec![-50.0; d], hi: vec![50.0; d] },
            ),
            ModelSpec::CauchyShift => (
                vec![0.0],
                ParamBox::interval(-200.0, 200.0),
                MleGrid { points: 2048, lo: vec![-200.0], hi: vec![200.0] },
            ),
            ModelSpec::GaussianScale | ModelSpec::ExponentialScale => (
                vec![1.0],
                ParamBox::interval(0.05, 50.0),
                MleGrid { points: 1024, lo: vec![0.05], hi: vec![50.0] },
            ),
        };
        Self::new(model, theta0, bounds, mle)
    }

    pub fn gaussian_shift() -> Self {
        Self::builtin(&ModelSpec::GaussianShift { dim: 1 }).expect("built-in")
    }

    pub fn cauchy_shift() -> Self {
        Self::builtin(&ModelSpec::CauchyShift).expect("built-in")
    }

    pub fn gaussian_scale() -> Self {
        Self::builtin(&ModelSpec::GaussianScale).expect("built-in")
    }

    pub fn exponential_scale() -> Self {
        Self::builtin(&ModelSpec::ExponentialScale).expect("built-in")
    }

    pub fn with_bounds(mut self, bounds: ParamBox) -> Result<Self, FamilyError> {
        if bounds.lo.len() != self.dim() || !bounds.contains(&self.theta0) {
            return Err(FamilyError::InvalidParameter("box must contain θ₀".into()));
        }
        self.bounds = bounds;
        Ok(self)
    }

    pub fn with_theta0(mut self, theta0: Vec<f64>) -> Result<Self, FamilyError> {
        if theta0.len() != self.dim() || !self.bounds.contains(&theta0) {
            return Err(FamilyError::InvalidParameter("θ₀ must lie in the box".into()));
        }
        self.theta0 = theta0;
        Ok(self)
    }

    pub fn with_risk(mut self, risk: Risk) -> Self {
        self.risk = risk;
        self
    }

    pub fn model(&self) -> &dyn Model {
        self.model.as_ref()
    }

    pub fn name(&self) -> String {
        self.model.name()
    }

    pub fn dim(&self) -> usize {
        self.model.param_dim()
    }

    pub fn log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
        self.model.log_density(x, theta)
    }

    pub fn risk_of(&self, theta: &[f64]) -> f64 {
        self.risk.eval(theta, &self.theta0)
    }

    fn axis(&self) -> Axis {
        self.model.axis(&self.theta0)
    }

    fn scalar_obs(&self) -> bool {
        self.model.obs_dim() == 1
    }

    /// `(log f₀(x), log f_{θ₁}(x) − log f_{θ₂}(x))` for scalar observations.
    fn contrast_point<'a>(&'a self, t1: &'a [f64], t2: &'a [f64]) -> impl Fn(f64) -> (f64, f64) + 'a {
        move |x: f64| {
            let xs = [x];
            let lf0 = self.model.log_density(&xs, &self.theta0);
            if lf0 == f64::NEG_INFINITY {
                return (lf0, 0.0);
            }
            let a = self.model.log_density(&xs, t1) - self.model.log_density(&xs, t2);
            (lf0, a)
        }
    }

    fn require_scalar(&self) -> Result<(), FamilyError> {
        if self.scalar_obs() {
            Ok(())
        } else {
            Err(FamilyError::Unsupported(
                "field rules need scalar observations; multivariate models support kl and logmgf_contrast only".into(),
            ))
        }
    }

    /// End of the domain of `λ ↦ log E₀ exp(λ(L(θ₁) − L(θ₂)))`, capped at `upper`.
    pub(crate) fn difference_kramer(&self, t1: &[f64], t2: &[f64], upper: f64) -> Result<f64, FamilyError> {
        self.require_scalar()?;
        let point = self.contrast_point(t1, t2);
        Ok(kramer_limit(&point, &self.axis(), upper, &self.quad)?)
    }

    pub(crate) fn difference_rule_with(
        &self,
        t1: &[f64],
        t2: &[f64],
        top: f64,
        moment: bool,
        kramer: f64,
    ) -> Result<TiltRule, FamilyError> {
        self.require_scalar()?;
        let point = self.contrast_point(t1, t2);
        let top = if top >= kramer { 0.99 * kramer } else { top };
        Ok(TiltRule::build(&point, &self.axis(), &anchors(top), moment, kramer, &self.quad)?)
    }

    /// Rule for the centered field `L⁰(θ₁) − L⁰(θ₂)` on tilts `[0, top]`.
    fn difference_rule(&self, t1: &[f64], t2: &[f64], top: f64, moment: bool) -> Result<TiltRule, FamilyError> {
        let kramer = self.difference_kramer(t1, t2, KRAMER_CAP.max(2.0 * top))?;
        self.difference_rule_with(t1, t2, top, moment, kramer)
    }

    /// Rule for the centered field `L⁰(θ)` on tilts `[0, top]`.
    pub fn field_rule(&self, theta: &[f64], top: f64) -> Result<TiltRule, FamilyError> {
        self.difference_rule(theta, &self.theta0.clone(), top, true)
    }

    /// `h(θ) = KL(f_θ₀ ‖ f_θ) = −E₀ L(θ)`.
    pub fn kl(&self, theta: &[f64]) -> Result<f64, FamilyError> {
        if !self.scalar_obs() {
            return self.radial_kl(theta);
        }
        let point = self.contrast_point(theta, &self.theta0);
        let rule = TiltRule::build(&point, &self.axis(), &[0.0], true, f64::INFINITY, &self.quad)?;
        Ok((-rule.mean()).max(0.0))
    }

    /// `log E₀ exp(λL⁰(θ))`; `+∞` outside the domain of the cumulant.
    pub fn logmgf_contrast(&self, theta: &[f64], lambda: f64) -> Result<f64, FamilyError> {
        if lambda == 0.0 {
            return Ok(0.0);
        }
        if !self.scalar_obs() {
            return self.radial_logmgf(theta, lambda);
        }
        let point = self.contrast_point(theta, &self.theta0);
        let axis = self.axis();
        let kramer = kramer_limit(&point, &axis, KRAMER_CAP.max(2.0 * lambda), &self.quad)?;
        if lambda >= kramer {
            return Ok(f64::INFINITY);
        }
        let rule = TiltRule::build(&point, &axis, &[0.0, lambda], true, kramer, &self.quad)?;
        Ok(rule.cumulant(lambda))
    }

    /// `‖L⁰(θ₁) − L⁰(θ₂)‖_{B(φ)}`.
    pub fn natural_distance(&self, t1: &[f64], t2: &[f64], phi: &PhiFunction, probe: &NormProbe) -> Result<f64, FamilyError> {
        if t1 == t2 {
            return Ok(0.0);
        }
        field_norm(&|top| self.difference_rule(t1, t2, top, false), None, phi, probe)
    }

    /// `‖L⁰(θ)‖_{B(φ)}`.
    pub fn contrast_norm(&self, theta: &[f64], phi: &PhiFunction, probe: &NormProbe) -> Result<f64, FamilyError> {
        field_norm(&|top| self.field_rule(theta, top), None, phi, probe)
    }

    /// Integrates over `x = t·e + s·u` with `e` along θ, reducing a spherically
    /// symmetric location model to the `(t, s)` half-plane.
    fn radial_parts(&self, theta: &[f64]) -> Result<(Box<dyn Fn(f64) -> f64 + Send + Sync>, f64, usize), FamilyError> {
        let g = self
            .model
            .radial_log_density()
            .ok_or_else(|| FamilyError::Unsupported(format!("{} has no radial form", self.name())))?;
        let d: f64 = theta.iter().zip(&self.theta0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        Ok((g, d, self.model.obs_dim()))
    }

    fn radial_kl(&self, theta: &[f64]) -> Result<f64, FamilyError> {
        let (g, d, m) = self.radial_parts(theta)?;
        let (mass, mean) = radial_integrate(&g, d, m, 0.0, &self.quad)?;
        debug_assert!(mass.abs() < 1e-6);
        Ok((-mean).max(0.0))
    }

    fn radial_logmgf(&self, theta: &[f64], lambda: f64) -> Result<f64, FamilyError> {
        let (g, d, m) = self.radial_parts(theta)?;
        let (_, mean) = radial_integrate(&g, d, m, 0.0, &self.quad)?;
        let (lt, _) = radial_integrate(&g, d, m, lambda, &self.quad)?;
        Ok((lt - lambda * mean).max(0.0))
    }
}

const SLICE_CUTOFF: f64 = 400.0;

/// Norm of the field whose rule on tilts `[0, top]` is `rule_to(top)`.
///
/// `ψ(λ) ≤ φ(λτ)` must hold for every λ with `λτ` inside the domain of φ, so
/// a norm τ < 1 also constrains tilts between the probe range `M` and `M/τ`;
/// those are checked with a second rule. `first` reuses an existing rule.
pub(crate) fn field_norm(
    rule_to: &dyn Fn(f64) -> Result<TiltRule, FamilyError>,
    first: Option<&TiltRule>,
    phi: &PhiFunction,
    probe: &NormProbe,
) -> Result<f64, FamilyError> {
    let grid = probe.grid(phi);
    let top = *grid.last().expect("non-empty probe grid");
    let built;
    let rule = match first {
        Some(r) if r.lambda_max >= top * (1.0 - 1e-9) => r,
        _ => {
            built = rule_to(top)?;
            &built
        }
    };
    let tau = bphi_norm_on(&|l| rule.cumulant(l), phi, &grid, probe.refine)?;
    if !(tau > 0.0 && tau < 1.0) {
        return Ok(tau);
    }
    let ext = top / tau;
    let rule = rule_to(ext)?;
    let grid = log_grid(top, ext, (probe.points / 4).max(8));
    Ok(tau.max(bphi_norm_on(&|l| rule.cumulant(l), phi, &grid, probe.refine)?))
}

/// `(log ∫ f₀ e^{λa}, ∫ f₀ a / ∫ f₀)` for `a = g(|x − d·e|) − g(|x|)` in `ℝ^m`.
fn radial_integrate(g: &(dyn Fn(f64) -> f64 + Send + Sync), d: f64, m: usize, lambda: f64, opts: &QuadOptions) -> Result<(f64, f64), FamilyError> {
    let ln_area = builtin::ln_sphere_area(m - 1);
    let coarse = QuadOptions { scan_step: 0.125, ..*opts };
    let mm2 = (m - 2) as f64;
    let peak = [0.0, d].iter().map(|&t: &f64| g(t.abs()) + lambda * (g((t - d).abs()) - g(t.abs()))).fold(f64::NEG_INFINITY, f64::max);
    let inner = |t: f64| -> (f64, f64) {
        let point = |s: f64| {
            let r0 = (t * t + s * s).sqrt();
            let r1 = ((t - d) * (t - d) + s * s).sqrt();
            let lf0 = g(r0) + if m > 2 { mm2 * s.ln() } else { 0.0 } + ln_area;
            (lf0, g(r1) - g(r0))
        };
        // Slices far out along the axis carry no mass; skipping them also
        // avoids rounding noise in the field difference there.
        let ridge = g(t.abs()) + lambda * (g((t - d).abs()) - g(t.abs()));
        if ridge < peak - SLICE_CUTOFF {
            return (f64::NEG_INFINITY, 0.0);
        }
        let axis = Axis::HalfLine { lower: 0.0, scale: 1.0 };
        match TiltRule::build(&point, &axis, &[0.0, lambda], true, f64::INFINITY, &coarse) {
            Ok(rule) if rule.log_mass().is_finite() => (rule.log_tilt(lambda), rule.mean()),
            Ok(_) | Err(QuadError::Empty) => (f64::NEG_INFINITY, 0.0),
            // Surfaces as a non-finite outer value.
            Err(_) => (f64::NAN, 0.0),
        }
    };
    let axis = Axis::Line { center: 0.5 * d, scale: 1.0 };
    let rule = TiltRule::build(&inner, &axis, &[0.0], true, f64::INFINITY, &coarse)?;
    if lambda == 0.0 {
        Ok((rule.log_mass(), rule.mean()))
    } else {
        // The outer node weights already carry the tilted inner integral.
        Ok((rule.log_mass(), f64::NAN))
    }
}
