//! Built-in parametric models.

use std::f64::consts::PI;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Model;
use crate::phi::SlowVar;
use crate::quad::{log_integral, Axis, QuadOptions};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Declarative description of a built-in model, as it appears in configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    GaussianShift {
        #[serde(default = "one")]
        dim: usize,
    },
    CauchyShift,
    GaussianScale,
    ExponentialScale,
    SphericalUnimodal {
        q: f64,
        #[serde(default)]
        slowvar: SlowVar,
        #[serde(default = "one")]
        dim: usize,
    },
}

fn one() -> usize {
    1
}

impl ModelSpec {
    pub fn build(&self) -> Result<Box<dyn Model>, String> {
        Ok(match *self {
            ModelSpec::GaussianShift { dim } => {
                if dim == 0 {
                    return Err("dimension must be positive".into());
                }
                Box::new(GaussianShift { dim })
            }
            ModelSpec::CauchyShift => Box::new(CauchyShift),
            ModelSpec::GaussianScale => Box::new(GaussianScale),
            ModelSpec::ExponentialScale => Box::new(ExponentialScale),
            ModelSpec::SphericalUnimodal { q, slowvar, dim } => Box::new(SphericalUnimodal::new(q, slowvar, dim)?),
        })
    }
}

#[inline]
fn sq_dist(x: &[f64], theta: &[f64]) -> f64 {
    x.iter().zip(theta).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn standard_normal(rng: &mut dyn RngCore) -> f64 {
    StandardNormal.sample(rng)
}

/// `N(θ, I_m)`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianShift {
    pub dim: usize,
}

impl Model for GaussianShift {
    fn name(&self) -> String {
        "gaussian_shift".into()
    }
    fn obs_dim(&self) -> usize {
        self.dim
    }
    fn param_dim(&self) -> usize {
        self.dim
    }
    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
        -0.5 * sq_dist(x, theta) - 0.5 * self.dim as f64 * LN_2PI
    }
    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore, out: &mut [f64]) {
        for (o, t) in out.iter_mut().zip(theta) {
            *o = t + standard_normal(rng);
        }
    }
    fn axis(&self, theta0: &[f64]) -> Axis {
        Axis::Line { center: theta0[0], scale: 1.0 }
    }
    fn radial_log_density(&self) -> Option<Box<dyn Fn(f64) -> f64 + Send + Sync>> {
        let c = -0.5 * self.dim as f64 * LN_2PI;
        Some(Box::new(move |r| c - 0.5 * r * r))
    }
}

/// Cauchy location family with unit scale.
#[derive(Debug, Clone, Copy)]
pub struct CauchyShift;

impl Model for CauchyShift {
    fn name(&self) -> String {
        "cauchy_shift".into()
    }
    fn obs_dim(&self) -> usize {
        1
    }
    fn param_dim(&self) -> usize {
        1
    }
    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
        let d = x[0] - theta[0];
        -(PI * (1.0 + d * d)).ln()
    }
    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore, out: &mut [f64]) {
        let u: f64 = rng.random();
        out[0] = theta[0] + (PI * (u - 0.5)).tan();
    }
    fn axis(&self, theta0: &[f64]) -> Axis {
        Axis::Line { center: theta0[0], scale: 1.0 }
    }
}

/// `N(0, θ)` with θ the variance.
#[derive(Debug, Clone, Copy)]
pub struct GaussianScale;

impl Model for GaussianScale {
    fn name(&self) -> String {
        "gaussian_scale".into()
    }
    fn obs_dim(&self) -> usize {
        1
    }
    fn param_dim(&self) -> usize {
        1
    }
    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
        let t = theta[0];
        if t <= 0.0 {
            return f64::NEG_INFINITY;
        }
        -0.5 * (LN_2PI + t.ln()) - 0.5 * x[0] * x[0] / t
    }
    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore, out: &mut [f64]) {
        out[0] = theta[0].sqrt() * standard_normal(rng);
    }
    fn axis(&self, theta0: &[f64]) -> Axis {
        Axis::Line { center: 0.0, scale: theta0[0].sqrt() }
    }
}

/// Exponential distribution with mean θ.
#[derive(Debug, Clone, Copy)]
pub struct ExponentialScale;

impl Model for ExponentialScale {
    fn name(&self) -> String {
        "exponential_scale".into()
    }
    fn obs_dim(&self) -> usize {
        1
    }
    fn param_dim(&self) -> usize {
        1
    }
    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
        let t = theta[0];
        if x[0] < 0.0 || t <= 0.0 {
            return f64::NEG_INFINITY;
        }
        -t.ln() - x[0] / t
    }
    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore, out: &mut [f64]) {
        let e: f64 = Exp1.sample(rng);
        out[0] = theta[0] * e;
    }
    fn axis(&self, theta0: &[f64]) -> Axis {
        Axis::HalfLine { lower: 0.0, scale: theta0[0] }
    }
    fn in_support(&self, x: &[f64]) -> bool {
        x[0] >= 0.0
    }
}

/// Spherically symmetric location family with `f₀(x) ∝ exp(−|x|^q R(|x|))`.
#[derive(Debug, Clone)]
pub struct SphericalUnimodal {
    pub q: f64,
    pub slowvar: SlowVar,
    pub dim: usize,
    log_norm: f64,
    /// Radial CDF on a grid, for inverse-transform sampling when R is not constant.
    cdf: Vec<(f64, f64)>,
}

/// `log Γ(m/2)` for a positive integer `m`.
fn ln_gamma_half(m: usize) -> f64 {
    let mut x = if m % 2 == 0 { 1.0 } else { 0.5 };
    let mut acc = if m % 2 == 0 { 0.0 } else { 0.5 * PI.ln() };
    while 2.0 * x < m as f64 {
        acc += x.ln();
        x += 1.0;
    }
    acc
}

/// Log surface area of the unit sphere in `ℝ^m` (2 for `m = 1`).
pub(crate) fn ln_sphere_area(m: usize) -> f64 {
    2f64.ln() + 0.5 * m as f64 * PI.ln() - ln_gamma_half(m)
}

impl SphericalUnimodal {
    pub fn new(q: f64, slowvar: SlowVar, dim: usize) -> Result<Self, String> {
        if !(q > 0.0 && q.is_finite()) {
            return Err(format!("tail exponent q = {q} must be positive"));
        }
        if dim == 0 {
            return Err("dimension must be positive".into());
        }
        slowvar.validate().map_err(|e| e.to_string())?;
        let expo = |r: f64| r.powf(q) * slowvar.eval(r);
        let mut prev = 0.0;
        for i in 1..=4000 {
            let r = i as f64 * 0.01;
            let e = expo(r);
            if e < prev {
                return Err(format!("r^q R(r) is not increasing near r = {r}"));
            }
            prev = e;
        }
        let m1 = (dim - 1) as f64;
        let radial = |r: f64| if r <= 0.0 { f64::NEG_INFINITY } else { m1 * r.ln() - expo(r) };
        let opts = QuadOptions::default();
        let ln_radial = log_integral(&radial, &Axis::HalfLine { lower: 0.0, scale: 1.0 }, &opts)
            .map_err(|e| format!("normalizing constant: {e}"))?;
        let log_norm = -(ln_sphere_area(dim) + ln_radial);
        let cdf = if matches!(slowvar, SlowVar::Const { .. }) { Vec::new() } else { radial_cdf(&radial, ln_radial) };
        Ok(Self { q, slowvar, dim, log_norm, cdf })
    }

    fn log_f0_radius(&self, r: f64) -> f64 {
        self.log_norm - r.powf(self.q) * self.slowvar.eval(r)
    }

    fn sample_radius(&self, rng: &mut dyn RngCore) -> f64 {
        if let SlowVar::Const { c } = self.slowvar {
            // c·r^q ~ Gamma(m/q, 1).
            let g: f64 = Gamma::new(self.dim as f64 / self.q, 1.0).expect("valid shape").sample(rng);
            return (g / c).powf(1.0 / self.q);
        }
        let u: f64 = rng.random();
        let i = self.cdf.partition_point(|&(_, c)| c < u);
        if i == 0 {
            return self.cdf[0].0;
        }
        if i >= self.cdf.len() {
            return self.cdf[self.cdf.len() - 1].0;
        }
        let (r0, c0) = self.cdf[i - 1];
        let (r1, c1) = self.cdf[i];
        if c1 <= c0 {
            r0
        } else {
            r0 + (r1 - r0) * (u - c0) / (c1 - c0)
        }
    }
}

fn radial_cdf(radial: &dyn Fn(f64) -> f64, ln_total: f64) -> Vec<(f64, f64)> {
    let mut rmax = 1.0;
    while radial(rmax) - ln_total > -45.0 {
        rmax *= 1.5;
    }
    let n = 1 << 14;
    let h = rmax / n as f64;
    let dens = |r: f64| (radial(r) - ln_total).exp();
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push((0.0, 0.0));
    for i in 0..n {
        let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
        // Simpson on each cell.
        acc += h / 6.0 * (dens(a) + 4.0 * dens(0.5 * (a + b)) + dens(b));
        out.push((b, acc));
    }
    let total = acc;
    for p in &mut out {
        p.1 /= total;
    }
    out
}

impl Model for SphericalUnimodal {
    fn name(&self) -> String {
        "spherical_unimodal".into()
    }
    fn obs_dim(&self) -> usize {
        self.dim
    }
    fn param_dim(&self) -> usize {
        self.dim
    }
    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
        self.log_f0_radius(sq_dist(x, theta).sqrt())
    }
    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore, out: &mut [f64]) {
        let r = self.sample_radius(rng);
        if self.dim == 1 {
            let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
            out[0] = theta[0] + s * r;
            return;
        }
        let mut norm = 0.0;
        for o in out.iter_mut() {
            *o = standard_normal(rng);
            norm += *o * *o;
        }
        let scale = r / norm.sqrt();
        for (o, t) in out.iter_mut().zip(theta) {
            *o = t + *o * scale;
        }
    }
    fn axis(&self, theta0: &[f64]) -> Axis {
        Axis::Line { center: theta0[0], scale: 1.0 }
    }
    fn radial_log_density(&self) -> Option<Box<dyn Fn(f64) -> f64 + Send + Sync>> {
        let s = self.clone();
        Some(Box::new(move |r| s.log_f0_radius(r)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sphere_areas() {
        assert_relative_eq!(ln_sphere_area(1), 2f64.ln(), max_relative = 1e-14);
        assert_relative_eq!(ln_sphere_area(2), (2.0 * PI).ln(), max_relative = 1e-14);
        assert_relative_eq!(ln_sphere_area(3), (4.0 * PI).ln(), max_relative = 1e-14);
    }

    #[test]
    fn spherical_normalizes_like_gaussian() {
        // q = 2, R = 1/2 is the standard normal.
        for dim in [1, 2, 3] {
            let s = SphericalUnimodal::new(2.0, SlowVar::Const { c: 0.5 }, dim).unwrap();
            let g = GaussianShift { dim };
            let x = vec![0.3; dim];
            let t = vec![0.0; dim];
            assert_relative_eq!(s.log_density(&x, &t), g.log_density(&x, &t), max_relative = 1e-10);
        }
    }

    #[test]
    fn spherical_rejects_bad_exponent() {
        assert!(SphericalUnimodal::new(-1.0, SlowVar::default(), 1).is_err());
    }
}
