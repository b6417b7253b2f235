//! Run configuration: parsing, validation and resolution of defaults.
//!
//! Unknown keys anywhere are errors. The resolved form has every default
//! written out, so re-running from it reproduces the same artifacts.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tailbound::bounds::{BoundOptions, Method};
use tailbound::family::{ModelSpec, ParamBox, ParametricFamily, Schedule};
use tailbound::phi::{PhiFunction, SlowVar};
use tailbound::quad::QuadOptions;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub family: FamilySection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<MethodSection>,
    pub grid: GridSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSection>,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropy: Option<EntropySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conjugate: Option<ConjugateSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySection {
    /// `gaussian_shift`, `cauchy_shift`, `gaussian_scale`,
    /// `exponential_scale` or `spherical_unimodal`.
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    /// `const(c)` or `logpow(r, s)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slowvar: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<Vec<f64>>,
    #[serde(default, rename = "box", skip_serializing_if = "Option::is_none")]
    pub bounds: Option<ParamBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mle: Option<tailbound::family::MleGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad: Option<QuadOptions>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Compact,
    Partition,
    Smooth,
    Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSection {
    pub kind: MethodKind,
    /// Sample size, for `sample`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uniform: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Schedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<BoundOptions>,
}

/// Either `start`/`stop`/`step` or an explicit `values` list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default = "default_replications")]
    pub replications: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    #[serde(default)]
    pub scaled: bool,
    /// Sample size per replication; defaults to the method's n, else 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

fn default_replications() -> u64 {
    100_000
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_directory")]
    pub directory: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { directory: default_directory(), formats: default_formats() }
    }
}

fn default_directory() -> String {
    "out".into()
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

/// Region for the `entropy` command: layer `k` of `U(v)`, or the whole
/// region when `layer` is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntropySection {
    pub v: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    Gaussian,
    Power { coef: f64, exponent: f64 },
    TruncatedPower { coef: f64, exponent: f64, lambda0: f64 },
    /// The natural φ of layer `layer` of `U(v)` for the configured family.
    Natural { v: f64, layer: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConjugateSection {
    pub kernel: KernelSpec,
    pub x: GridSection,
}

/// Parses `const(c)` or `logpow(r, s)`.
pub fn parse_slowvar(s: &str) -> Result<SlowVar, ConfigError> {
    let s = s.trim();
    let (name, rest) = s.split_once('(').ok_or_else(|| ConfigError(format!("slowvar `{s}`: expected const(c) or logpow(r, s)")))?;
    let args = rest.strip_suffix(')').ok_or_else(|| ConfigError(format!("slowvar `{s}`: missing `)`")))?;
    let nums: Result<Vec<f64>, _> = args.split(',').map(|a| a.trim().parse::<f64>()).collect();
    let nums = nums.map_err(|e| ConfigError(format!("slowvar `{s}`: {e}")))?;
    let sv = match (name.trim(), nums.as_slice()) {
        ("const", [c]) => SlowVar::Const { c: *c },
        ("logpow", [r, s]) => SlowVar::LogPow { r: *r, s: *s },
        _ => return err(format!("slowvar `{s}`: expected const(c) or logpow(r, s)")),
    };
    sv.validate().map_err(|e| ConfigError(format!("slowvar: {e}")))?;
    Ok(sv)
}

pub fn format_slowvar(s: &SlowVar) -> String {
    match *s {
        SlowVar::Const { c } => format!("const({c})"),
        SlowVar::LogPow { r, s } => format!("logpow({r}, {s})"),
    }
}

impl GridSection {
    pub fn values(&self, what: &str) -> Result<Vec<f64>, ConfigError> {
        let v = match (self.start, self.stop, self.step, &self.values) {
            (None, None, None, Some(v)) => v.clone(),
            (Some(a), Some(b), Some(h), None) => {
                if !(h > 0.0 && a.is_finite() && b.is_finite() && b >= a) {
                    return err(format!("{what}: need start ≤ stop and step > 0"));
                }
                let n = ((b - a) / h + 1e-9).floor() as usize;
                (0..=n).map(|i| a + i as f64 * h).collect()
            }
            _ => return err(format!("{what}: give either start, stop and step, or values")),
        };
        if v.is_empty() {
            return err(format!("{what}: grid is empty"));
        }
        if v.iter().any(|x| !x.is_finite()) || v.windows(2).any(|w| !(w[1] > w[0])) {
            return err(format!("{what}: grid must be finite and increasing"));
        }
        Ok(v)
    }

    fn explicit(values: Vec<f64>) -> Self {
        Self { start: None, stop: None, step: None, values: Some(values) }
    }
}

impl FamilySection {
    fn spec(&self) -> Result<ModelSpec, ConfigError> {
        let extra = |what: &str, present: bool| if present { err(format!("family.{what} does not apply to {}", self.name)) } else { Ok(()) };
        Ok(match self.name.as_str() {
            "gaussian_shift" => {
                extra("q", self.q.is_some())?;
                extra("slowvar", self.slowvar.is_some())?;
                ModelSpec::GaussianShift { dim: self.dim.unwrap_or(1) }
            }
            "spherical_unimodal" => {
                let q = self.q.ok_or_else(|| ConfigError("family.q: required for spherical_unimodal".into()))?;
                let slowvar = self.slowvar.as_deref().map(parse_slowvar).transpose()?.unwrap_or_default();
                ModelSpec::SphericalUnimodal { q, slowvar, dim: self.dim.unwrap_or(1) }
            }
            name @ ("cauchy_shift" | "gaussian_scale" | "exponential_scale") => {
                extra("q", self.q.is_some())?;
                extra("slowvar", self.slowvar.is_some())?;
                extra("dim", self.dim.is_some_and(|d| d != 1))?;
                match name {
                    "cauchy_shift" => ModelSpec::CauchyShift,
                    "gaussian_scale" => ModelSpec::GaussianScale,
                    _ => ModelSpec::ExponentialScale,
                }
            }
            other => return err(format!("family.name: unknown family `{other}`")),
        })
    }

    pub fn build(&self) -> Result<ParametricFamily, ConfigError> {
        let spec = self.spec()?;
        let fe = |e: tailbound::family::FamilyError| ConfigError(format!("family: {e}"));
        let mut fam = ParametricFamily::builtin(&spec).map_err(fe)?;
        if let Some(b) = &self.bounds {
            if b.lo.len() != fam.dim() || b.hi.len() != fam.dim() || b.lo.iter().zip(&b.hi).any(|(l, h)| !(l < h)) {
                return err("family.box: lo and hi need one entry per parameter with lo < hi");
            }
            if !b.contains(&self.theta0.clone().unwrap_or_else(|| fam.theta0.clone())) {
                return err("family.box: must contain theta0");
            }
            fam.bounds = b.clone();
        }
        if let Some(t) = &self.theta0 {
            fam = fam.with_theta0(t.clone()).map_err(|e| ConfigError(format!("family.theta0: {e}")))?;
        }
        if let Some(m) = &self.mle {
            if m.points < 3 || m.lo.len() != fam.dim() || m.hi.len() != fam.dim() || m.lo.iter().zip(&m.hi).any(|(l, h)| !(l < h)) {
                return err("family.mle: need points ≥ 3 and finite lo < hi per parameter");
            }
            fam.mle = m.clone();
        }
        if let Some(q) = self.quad {
            fam.quad = q;
        }
        Ok(fam)
    }

    fn resolved(&self, fam: &ParametricFamily) -> Result<Self, ConfigError> {
        let spec = self.spec()?;
        let (dim, q, slowvar) = match spec {
            ModelSpec::GaussianShift { dim } => (Some(dim), None, None),
            ModelSpec::SphericalUnimodal { q, slowvar, dim } => (Some(dim), Some(q), Some(format_slowvar(&slowvar))),
            _ => (None, None, None),
        };
        Ok(Self {
            name: self.name.clone(),
            dim,
            q,
            slowvar,
            theta0: Some(fam.theta0.clone()),
            bounds: Some(fam.bounds.clone()),
            mle: Some(fam.mle.clone()),
            quad: Some(fam.quad),
        })
    }
}

impl MethodSection {
    pub fn options(&self) -> Result<BoundOptions, ConfigError> {
        let mut o = self.options.clone().unwrap_or_default();
        if let Some(s) = self.schedule {
            o.schedule = s;
        }
        if let Some(k) = self.k_max {
            o.k_max = k;
        }
        o.validate().map_err(|e| ConfigError(format!("method.options: {e}")))?;
        Ok(o)
    }

    pub fn method(&self) -> Result<Method, ConfigError> {
        let uniform = self.uniform.unwrap_or(false);
        match self.kind {
            MethodKind::Sample => {
                let n = self.n.ok_or_else(|| ConfigError("method.n: required for sample".into()))?;
                if n == 0 {
                    return err("method.n: must be positive");
                }
                Ok(Method::Sample { n, uniform })
            }
            _ if self.n.is_some() || self.uniform.is_some() => err("method.n and method.uniform apply to sample only"),
            MethodKind::Compact => Ok(Method::Compact),
            MethodKind::Partition => Ok(Method::Partition),
            MethodKind::Smooth => Ok(Method::Smooth),
        }
    }
}

impl KernelSpec {
    pub fn phi(&self, fam: &Arc<ParametricFamily>, opts: &BoundOptions) -> Result<PhiFunction, String> {
        match *self {
            KernelSpec::Gaussian => Ok(PhiFunction::gaussian()),
            KernelSpec::Power { coef, exponent } => PhiFunction::power(coef, exponent).map_err(|e| e.to_string()),
            KernelSpec::TruncatedPower { coef, exponent, lambda0 } => {
                PhiFunction::truncated_power(coef, exponent, lambda0).map_err(|e| e.to_string())
            }
            KernelSpec::Natural { v, layer } => {
                use tailbound::family::{layer_region, natural_phi_table, y_of_v};
                let region = layer_region(fam.clone(), v, layer, opts.schedule, opts.resolution).map_err(|e| e.to_string())?;
                let y = y_of_v(&region).map_err(|e| e.to_string())?;
                Ok(natural_phi_table(&region, Some(y), &opts.natural).map_err(|e| e.to_string())?.phi)
            }
        }
    }
}

/// Which parts of the config a command needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Needs {
    Bound,
    Simulate,
    Compare,
    Entropy,
    Conjugate,
}

/// A validated configuration with everything derived from it.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub family: Arc<ParametricFamily>,
    pub grid: Vec<f64>,
    pub method: Option<Method>,
    pub options: BoundOptions,
}

impl Resolved {
    pub fn seed(&self) -> Option<u64> {
        self.config.simulation.as_ref().and_then(|s| s.master_seed)
    }

    /// Sample size per replication.
    pub fn sim_n(&self) -> usize {
        let s = self.config.simulation.as_ref();
        s.and_then(|s| s.n).unwrap_or(match self.method {
            Some(Method::Sample { n, .. }) => n as usize,
            _ => 1,
        })
    }
}

pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError(format!("config: {e}")))
}

/// Validates `cfg` for a command, applies a seed override and writes out
/// every default.
pub fn resolve(mut cfg: RunConfig, needs: Needs, seed: Option<u64>) -> Result<Resolved, ConfigError> {
    let family = cfg.family.build()?;
    let grid = cfg.grid.values("grid")?;
    if grid.iter().any(|&v| !(v > 0.0)) {
        return err("grid: risk levels must be positive");
    }
    let wants_method = matches!(needs, Needs::Bound | Needs::Compare);
    let method = match &cfg.method {
        Some(m) => Some(m.method()?),
        None if wants_method => return err("method: section required for this command"),
        None => None,
    };
    let options = cfg.method.as_ref().map(|m| m.options()).transpose()?.unwrap_or_default();
    if let Some(s) = seed {
        let sim = cfg.simulation.get_or_insert(SimulationSection {
            replications: default_replications(),
            master_seed: None,
            scaled: false,
            n: None,
        });
        sim.master_seed = Some(s);
    }
    if matches!(needs, Needs::Simulate | Needs::Compare) {
        let sim = cfg.simulation.as_ref().ok_or_else(|| ConfigError("simulation: section required for this command".into()))?;
        if sim.master_seed.is_none() {
            return err("simulation.master_seed: required for simulation (or pass --seed)");
        }
        if sim.replications < 100 {
            return err("simulation.replications: at least 100 required");
        }
        if sim.n == Some(0) {
            return err("simulation.n: must be positive");
        }
    }
    if needs == Needs::Entropy {
        let e = cfg.entropy.as_ref().ok_or_else(|| ConfigError("entropy: section required for this command".into()))?;
        if !(e.v > 0.0 && e.v.is_finite()) || e.layer == Some(0) {
            return err("entropy: need v > 0 and layer ≥ 1");
        }
    }
    if needs == Needs::Conjugate {
        let c = cfg.conjugate.as_ref().ok_or_else(|| ConfigError("conjugate: section required for this command".into()))?;
        let x = c.x.values("conjugate.x")?;
        if x[0] < 0.0 {
            return err("conjugate.x: arguments must be nonnegative");
        }
    }

    cfg.family = cfg.family.resolved(&family)?;
    cfg.grid = GridSection::explicit(grid.clone());
    if let Some(m) = &mut cfg.method {
        m.schedule = Some(options.schedule);
        m.k_max = Some(options.k_max);
        m.options = Some(options.clone());
        if m.kind == MethodKind::Sample {
            m.uniform = Some(m.uniform.unwrap_or(false));
        }
    }
    if let Some(c) = &mut cfg.conjugate {
        c.x = GridSection::explicit(c.x.values("conjugate.x")?);
    }
    let mut out = Resolved { config: cfg, family: Arc::new(family), grid, method, options };
    let n = out.sim_n();
    if let Some(s) = &mut out.config.simulation {
        s.n = Some(n);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[family]
name = "gaussian_shift"

[method]
kind = "partition"

[grid]
start = 1.0
stop = 4.0
step = 0.5
"#;

    #[test]
    fn minimal_config_resolves() {
        let r = resolve(parse(MINIMAL).unwrap(), Needs::Bound, None).unwrap();
        assert_eq!(r.grid, vec![1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0]);
        assert_eq!(r.method, Some(Method::Partition));
        assert_eq!(r.options, BoundOptions::default());
    }

    #[test]
    fn resolved_config_round_trips() {
        let r = resolve(parse(MINIMAL).unwrap(), Needs::Bound, Some(9)).unwrap();
        let text = toml::to_string(&r.config).unwrap();
        let again = resolve(parse(&text).unwrap(), Needs::Bound, None).unwrap();
        assert_eq!(again.config, r.config);
        assert_eq!(again.seed(), Some(9));
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_location() {
        let bad = MINIMAL.replace("kind = \"partition\"", "kind = \"partition\"\nk_maxx = 3");
        let e = parse(&bad).unwrap_err().0;
        assert!(e.contains("k_maxx") && e.contains("line"), "{e}");
        let bad = MINIMAL.replace("[grid]", "[method.options]\nprobe = { points = 8, extra = 1 }\n[grid]");
        assert!(parse(&bad).is_err());
    }

    #[test]
    fn simulation_needs_a_seed() {
        let cfg = format!("{MINIMAL}\n[simulation]\nreplications = 1000\n");
        let e = resolve(parse(&cfg).unwrap(), Needs::Simulate, None).unwrap_err().0;
        assert!(e.contains("master_seed"), "{e}");
        assert!(resolve(parse(&cfg).unwrap(), Needs::Simulate, Some(1)).is_ok());
    }

    #[test]
    fn slowvar_forms_parse() {
        assert_eq!(parse_slowvar("const(2)").unwrap(), SlowVar::Const { c: 2.0 });
        assert_eq!(parse_slowvar(" logpow(1, 0.5) ").unwrap(), SlowVar::LogPow { r: 1.0, s: 0.5 });
        assert!(parse_slowvar("const(-1)").is_err());
        assert!(parse_slowvar("log(1)").is_err());
        let s = SlowVar::LogPow { r: 2.0, s: -1.5 };
        assert_eq!(parse_slowvar(&format_slowvar(&s)).unwrap(), s);
    }

    #[test]
    fn sample_method_needs_n() {
        let cfg = MINIMAL.replace("\"partition\"", "\"sample\"");
        assert!(resolve(parse(&cfg).unwrap(), Needs::Bound, None).unwrap_err().0.contains("method.n"));
        let cfg = MINIMAL.replace("kind = \"partition\"", "kind = \"partition\"\nn = 3");
        assert!(resolve(parse(&cfg).unwrap(), Needs::Bound, None).is_err());
    }

    #[test]
    fn grids_are_checked() {
        let g = GridSection { start: None, stop: None, step: None, values: Some(vec![1.0, 1.0]) };
        assert!(g.values("grid").is_err());
        let g = GridSection { start: Some(1.0), stop: Some(2.0), step: None, values: None };
        assert!(g.values("grid").is_err());
    }
}
