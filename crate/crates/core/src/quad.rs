//! Log-space Gauss–Kronrod rules for densities tilted by `exp(λ·a(x))`.
//!
//! The real line (or half-line) is mapped to `t ∈ ℝ` by `x = c + s·sinh t`
//! (or `x = c + s·eᵗ`), a fine scan in `t` locates the significant region and
//! the peaks of every requested tilt, and adaptive G7K15 refinement runs on all
//! tilts at once. The resulting node set is reused for any λ in the anchored
//! range, so cumulants built from it are exactly convex in λ.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("integral diverges at λ = {lambda}")]
    Divergent { lambda: f64 },
    #[error("integrand is not finite at x = {x}")]
    NonFinite { x: f64 },
    #[error("no convergence after {panels} panels")]
    NoConvergence { panels: usize },
    #[error("integrand vanishes on the whole axis")]
    Empty,
}

/// Integration axis with a location and scale used by the variable change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Axis {
    Line { center: f64, scale: f64 },
    HalfLine { lower: f64, scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub max_panels: usize,
    /// Scan spacing in the mapped variable over the core of the axis.
    pub scan_step: f64,
    /// Integrand values below `max − cutoff` (in log space) are dropped.
    pub cutoff: f64,
    /// Widest initial panel in the mapped variable.
    pub panel_width: f64,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-10, max_panels: 4000, scan_step: 1.0 / 32.0, cutoff: 40.0, panel_width: 4.0 }
    }
}

const NOISE_ULPS: f64 = 16.0;
const PEAK_OFFSETS: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 16.0];
const T_FAR: f64 = 46.0;
const T_CORE: f64 = 9.0;
const T_NEAR: f64 = -12.0;
const T_FLOOR: f64 = -40.0;

impl Axis {
    #[inline]
    fn map(&self, t: f64) -> (f64, f64) {
        match *self {
            Axis::Line { center, scale } => (center + scale * t.sinh(), (scale * t.cosh()).ln()),
            Axis::HalfLine { lower, scale } => (lower + scale * t.exp(), scale.ln() + t),
        }
    }

    fn range(&self) -> (f64, f64) {
        match self {
            Axis::Line { .. } => (-T_FAR, T_FAR),
            Axis::HalfLine { .. } => (T_FLOOR, T_FAR),
        }
    }

    fn lower_infinite(&self) -> bool {
        matches!(self, Axis::Line { .. })
    }

    fn scan(&self, step: f64) -> Vec<f64> {
        let (lo, hi) = self.range();
        let (core_lo, core_hi) = match self {
            Axis::Line { .. } => (-T_CORE, T_CORE),
            Axis::HalfLine { .. } => (T_NEAR, T_CORE),
        };
        let mut ts = Vec::new();
        let mut t = lo;
        while t < core_lo {
            ts.push(t);
            t += 0.5;
        }
        let n = ((core_hi - core_lo) / step).round() as usize;
        for i in 0..=n {
            ts.push(core_lo + (core_hi - core_lo) * i as f64 / n as f64);
        }
        let mut t = core_hi + 0.5;
        while t <= hi + 1e-12 {
            ts.push(t);
            t += 0.5;
        }
        ts
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One evaluation of the integrand building blocks: `(log f₀(x), a(x))`.
pub type PointFn<'a> = dyn Fn(f64) -> (f64, f64) + 'a;

#[derive(Clone, Copy)]
struct Node {
    /// log of Kronrod weight × half-width × Jacobian.
    lw: f64,
    lf: f64,
    a: f64,
}

struct Panel {
    lo: f64,
    hi: f64,
    nodes: [Node; 15],
    ints: Vec<f64>,
    /// Error estimates net of the rounding noise of the log-integrand.
    errs: Vec<f64>,
}

fn eval_point(point: &PointFn, axis: &Axis, t: f64) -> Result<(f64, f64, f64), QuadError> {
    let (x, lj) = axis.map(t);
    let (lf, a) = point(x);
    if lf.is_nan() || lf == f64::INFINITY {
        return Err(QuadError::NonFinite { x });
    }
    if lf == f64::NEG_INFINITY {
        return Ok((lj, lf, 0.0));
    }
    if !a.is_finite() {
        return Err(QuadError::NonFinite { x });
    }
    Ok((lj, lf, a))
}

/// Integrand `k` on the scan: tilts by `anchors[k]`, then optionally `f₀·a`.
struct Targets<'a> {
    anchors: &'a [f64],
    moment: bool,
    shifts: Vec<f64>,
}

impl Targets<'_> {
    fn count(&self) -> usize {
        self.anchors.len() + usize::from(self.moment)
    }

    /// Size of the terms added to `log f₀` in the exponent of integrand `k`.
    #[inline]
    fn magnitude(&self, k: usize, a: f64) -> f64 {
        let j = k.min(self.anchors.len() - 1);
        let lam = if k < self.anchors.len() { self.anchors[k] } else { 0.0 };
        (lam * a).abs() + self.shifts[j].abs()
    }

    /// Value of integrand `k` at a node, rescaled by its shift.
    #[inline]
    fn value(&self, k: usize, lw_or_lj: f64, lf: f64, a: f64) -> f64 {
        if lf == f64::NEG_INFINITY {
            return 0.0;
        }
        if k < self.anchors.len() {
            (lw_or_lj + lf + self.anchors[k] * a - self.shifts[k]).exp()
        } else {
            (lw_or_lj + lf - self.shifts[0]).exp() * a
        }
    }
}

fn panel(point: &PointFn, axis: &Axis, lo: f64, hi: f64, tg: &Targets) -> Result<Panel, QuadError> {
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    let mut nodes = [Node { lw: 0.0, lf: 0.0, a: 0.0 }; 15];
    let mut lj = [0.0; 15];
    for i in 0..15 {
        let (xi, w) = if i < 7 {
            (-XGK[i], WGK[i])
        } else if i == 7 {
            (0.0, WGK[7])
        } else {
            (XGK[14 - i], WGK[14 - i])
        };
        let (j, lf, a) = eval_point(point, axis, c + h * xi)?;
        lj[i] = j;
        nodes[i] = Node { lw: (w * h).ln() + j, lf, a };
    }
    let m = tg.count();
    let mut ints = vec![0.0; m];
    let mut errs = vec![0.0; m];
    for k in 0..m {
        let mut kr = 0.0;
        let mut ga = 0.0;
        let mut vals = [0.0; 15];
        for i in 0..15 {
            vals[i] = tg.value(k, lj[i], nodes[i].lf, nodes[i].a);
            let wk = if i <= 7 { WGK[i] } else { WGK[14 - i] };
            kr += wk * vals[i];
        }
        // Gauss nodes are the odd-indexed Kronrod abscissae.
        for (g, &i) in [1usize, 3, 5, 7, 9, 11, 13].iter().enumerate() {
            let wg = if g <= 3 { WG[g] } else { WG[6 - g] };
            ga += wg * vals[i];
        }
        let mean = kr * 0.5;
        let mut asc = 0.0;
        for i in 0..15 {
            let wk = if i <= 7 { WGK[i] } else { WGK[14 - i] };
            asc += wk * (vals[i] - mean).abs();
        }
        // Nodes carry rounding noise proportional to the magnitude of the
        // log-integrand; errors at that level cannot be refined away.
        let mut noise = 0.0;
        for i in 0..15 {
            let wk = if i <= 7 { WGK[i] } else { WGK[14 - i] };
            let mag = nodes[i].lf.abs() + tg.magnitude(k, nodes[i].a) + lj[i].abs();
            noise += wk * vals[i].abs() * mag;
        }
        ints[k] = kr * h;
        errs[k] = (rescale_error((kr - ga) * h, asc * h) - NOISE_ULPS * f64::EPSILON * noise * h).max(0.0);
    }
    Ok(Panel { lo, hi, nodes, ints, errs })
}

fn rescale_error(err: f64, asc: f64) -> f64 {
    let mut e = err.abs();
    if asc != 0.0 && e != 0.0 {
        e = asc * (200.0 * e / asc).powf(1.5).min(1.0);
    }
    e
}

/// Node set resolving `f₀·exp(λa)` for λ in a bracket of anchors.
#[derive(Debug, Clone)]
pub struct TiltRule {
    lwf: Vec<f64>,
    a: Vec<f64>,
    log_mass: f64,
    mean: f64,
    /// Largest anchor the rule was refined for.
    pub lambda_max: f64,
    /// Detected end of the domain where `∫ f₀ e^{λa}` is finite.
    pub kramer: f64,
}

impl TiltRule {
    /// Builds a rule refined jointly for every anchor tilt (and `f₀·a` when
    /// `moment` is set). `kramer` is the known domain end; anchors at or
    /// beyond it are dropped.
    pub fn build(
        point: &PointFn,
        axis: &Axis,
        anchors: &[f64],
        moment: bool,
        kramer: f64,
        opts: &QuadOptions,
    ) -> Result<Self, QuadError> {
        let mut anchors: Vec<f64> = anchors.iter().copied().filter(|&l| l < kramer).collect();
        if !anchors.contains(&0.0) {
            anchors.insert(0, 0.0);
        }
        anchors.sort_by(f64::total_cmp);
        let ts = axis.scan(opts.scan_step);
        let mut scan = Vec::with_capacity(ts.len());
        for &t in &ts {
            scan.push(eval_point(point, axis, t)?);
        }
        let scan_anchor = |lam: f64| -> Result<AnchorScan, QuadError> {
            let u: Vec<f64> = scan
                .iter()
                .map(|&(lj, lf, a)| if lf == f64::NEG_INFINITY { f64::NEG_INFINITY } else { lj + lf + lam * a })
                .collect();
            let (peak, m) = u.iter().copied().enumerate().fold((0, f64::NEG_INFINITY), |b, (i, v)| if v > b.1 { (i, v) } else { b });
            if m == f64::NEG_INFINITY {
                return Err(QuadError::Empty);
            }
            if !m.is_finite() {
                return Err(QuadError::Divergent { lambda: lam });
            }
            check_tails(&u, m, axis, opts.cutoff).map_err(|_| QuadError::Divergent { lambda: lam })?;
            let ueval = |t: f64| match eval_point(point, axis, t) {
                Ok((lj, lf, a)) if lf > f64::NEG_INFINITY => lj + lf + lam * a,
                _ => f64::NEG_INFINITY,
            };
            let sharp = polish_sharp_peaks(&ts, &u, &ueval);
            let mut top = (ts[peak], m, opts.scan_step);
            for &p in &sharp {
                if p.1 > top.1 {
                    top = p;
                }
            }
            Ok(AnchorScan { lam, u, sharp, top })
        };
        let mut entries: Vec<AnchorScan> = anchors.iter().map(|&l| scan_anchor(l)).collect::<Result<_, _>>()?;
        // Sharp peaks move far between anchors; bisect level by level while
        // consecutive peaks are apart so that intermediate tilts stay resolved.
        loop {
            let mut mids = Vec::new();
            for w in entries.windows(2) {
                let (a, b) = (&w[0], &w[1]);
                let apart = (a.top.0 - b.top.0).abs() > PEAK_SPREAD * (a.top.2 + b.top.2);
                let mid = 0.5 * (a.lam + b.lam);
                if (!a.sharp.is_empty() || !b.sharp.is_empty()) && apart && mid > a.lam && mid < b.lam {
                    mids.push(mid);
                }
            }
            if mids.is_empty() || entries.len() + mids.len() > MAX_ANCHORS {
                break;
            }
            for m in mids {
                entries.push(scan_anchor(m)?);
            }
            entries.sort_by(|a, b| a.lam.total_cmp(&b.lam));
        }
        let anchors: Vec<f64> = entries.iter().map(|e| e.lam).collect();
        let mut breaks: Vec<f64> = Vec::new();
        let mut shifts = Vec::with_capacity(anchors.len());
        for e in &entries {
            let m = e.sharp.iter().map(|p| p.1).fold(e.top.1, f64::max);
            shifts.push(m);
            collect_breaks(&ts, &e.u, m, opts, &mut breaks);
            for &(t, _, w) in &e.sharp {
                breaks.push(t);
                for s in PEAK_OFFSETS {
                    breaks.push(t - s * w);
                    breaks.push(t + s * w);
                }
            }
        }
        breaks.sort_by(f64::total_cmp);
        breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        if breaks.len() < 2 {
            return Err(QuadError::Empty);
        }
        let tg = Targets { anchors: &anchors, moment, shifts };
        let mut panels: Vec<Panel> = Vec::new();
        for w in breaks.windows(2) {
            panels.push(panel(point, axis, w[0], w[1], &tg)?);
        }
        refine(point, axis, &tg, &mut panels, opts)?;

        let mut lwf = Vec::with_capacity(panels.len() * 15);
        let mut av = Vec::with_capacity(panels.len() * 15);
        for p in &panels {
            for n in &p.nodes {
                if n.lf > f64::NEG_INFINITY {
                    lwf.push(n.lw + n.lf);
                    av.push(n.a);
                }
            }
        }
        let log_mass = log_sum_exp(&lwf, &av, 0.0);
        let mean = lwf.iter().zip(&av).map(|(l, a)| (l - log_mass).exp() * a).sum();
        let lambda_max = *anchors.last().expect("non-empty");
        Ok(Self { lwf, a: av, log_mass, mean, lambda_max, kramer })
    }

    pub fn len(&self) -> usize {
        self.lwf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lwf.is_empty()
    }

    /// `log ∫ f₀·e^{λa}`.
    pub fn log_tilt(&self, lambda: f64) -> f64 {
        if lambda >= self.kramer {
            return f64::INFINITY;
        }
        log_sum_exp(&self.lwf, &self.a, lambda)
    }

    /// `log ∫ f₀`.
    pub fn log_mass(&self) -> f64 {
        self.log_mass
    }

    /// `∫ f₀·a / ∫ f₀`.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Centered cumulant `log E₀ exp(λ(a − E₀a))` under the normalized rule.
    pub fn cumulant(&self, lambda: f64) -> f64 {
        if lambda == 0.0 {
            return 0.0;
        }
        let v = self.log_tilt(lambda) - self.log_mass - lambda * self.mean;
        v.max(0.0)
    }
}

fn log_sum_exp(lw: &[f64], a: &[f64], lambda: f64) -> f64 {
    let mut m = f64::NEG_INFINITY;
    for (l, x) in lw.iter().zip(a) {
        m = m.max(l + lambda * x);
    }
    if !m.is_finite() {
        return m;
    }
    let s: f64 = lw.iter().zip(a).map(|(l, x)| (l + lambda * x - m).exp()).sum();
    m + s.ln()
}

fn check_tails(u: &[f64], m: f64, axis: &Axis, cutoff: f64) -> Result<(), ()> {
    let n = u.len();
    let ok = |a: f64, b: f64, c: f64| c < b && b < a && c < m - cutoff || c == f64::NEG_INFINITY;
    if !ok(u[n - 3], u[n - 2], u[n - 1]) {
        return Err(());
    }
    if axis.lower_infinite() && !ok(u[2], u[1], u[0]) {
        return Err(());
    }
    Ok(())
}

struct AnchorScan {
    lam: f64,
    u: Vec<f64>,
    sharp: Vec<(f64, f64, f64)>,
    /// `(t, u, width)` of the highest peak.
    top: (f64, f64, f64),
}

/// Ceiling on anchors after bisection.
const MAX_ANCHORS: usize = 96;
/// Consecutive peaks further apart than this many widths are bisected.
const PEAK_SPREAD: f64 = 6.0;

/// Scan jump (in log units) beyond which a local maximum is not resolved by
/// the scan and is located by a golden-section search instead.
const SHARP_JUMP: f64 = 4.0;

/// `(t*, u(t*), width)` for every scan maximum that the scan under-resolves.
fn polish_sharp_peaks(ts: &[f64], u: &[f64], ueval: &dyn Fn(f64) -> f64) -> Vec<(f64, f64, f64)> {
    let n = ts.len();
    let mut out = Vec::new();
    for p in 1..n.saturating_sub(1) {
        let (l, c, r) = (u[p - 1], u[p], u[p + 1]);
        if !(c.is_finite() && c >= l && c >= r && c - l.min(r) > SHARP_JUMP) {
            continue;
        }
        let (mut a, mut b) = (ts[p - 1], ts[p + 1]);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut x1 = b - g * (b - a);
        let mut x2 = a + g * (b - a);
        let (mut f1, mut f2) = (ueval(x1), ueval(x2));
        for _ in 0..80 {
            if f1 >= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - g * (b - a);
                f1 = ueval(x1);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + g * (b - a);
                f2 = ueval(x2);
            }
            if b - a <= 1e-15 * (1.0 + a.abs()) {
                break;
            }
        }
        let (t, mut um) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
        if c > um {
            um = c;
        }
        if !um.is_finite() {
            continue;
        }
        // Width: the offset at which the log-integrand has dropped by about one.
        let mut w = ts[p + 1] - ts[p];
        while w > 1e-14 * (1.0 + t.abs()) && um - ueval(t - w).max(ueval(t + w)) > 1.0 {
            w *= 0.25;
        }
        out.push((t, um, w));
    }
    out
}

fn collect_breaks(ts: &[f64], u: &[f64], m: f64, opts: &QuadOptions, out: &mut Vec<f64>) {
    let thr = m - opts.cutoff;
    let n = ts.len();
    let mut i = 0;
    while i + 1 < n {
        if u[i].max(u[i + 1]) < thr {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < n && u[i].max(u[i + 1]) >= thr {
            i += 1;
        }
        let (a, b) = (ts[start], ts[i]);
        out.push(a);
        out.push(b);
        let k = ((b - a) / opts.panel_width).ceil() as usize;
        for j in 1..k {
            out.push(a + (b - a) * j as f64 / k as f64);
        }
        for p in start..=i {
            let left = if p > 0 { u[p - 1] } else { f64::NEG_INFINITY };
            let right = if p + 1 < n { u[p + 1] } else { f64::NEG_INFINITY };
            if u[p] >= thr && u[p] >= left && u[p] >= right {
                let h = if p + 1 < n { ts[p + 1] - ts[p] } else { ts[p] - ts[p - 1] };
                let curv = (left - 2.0 * u[p] + right) / (h * h);
                let w = if curv < 0.0 && curv.is_finite() { (1.0 / -curv).sqrt().min(h) } else { h };
                for s in PEAK_OFFSETS {
                    for t in [ts[p] - s * w, ts[p] + s * w] {
                        if t > a && t < b {
                            out.push(t);
                        }
                    }
                }
                out.push(ts[p]);
            }
        }
    }
}

fn refine(point: &PointFn, axis: &Axis, tg: &Targets, panels: &mut Vec<Panel>, opts: &QuadOptions) -> Result<(), QuadError> {
    let m = tg.count();
    loop {
        let mut tot = vec![0.0; m];
        let mut err = vec![0.0; m];
        let mut abs_ref = 0.0;
        for p in panels.iter() {
            for k in 0..m {
                tot[k] += p.ints[k];
                err[k] += p.errs[k];
            }
        }
        if tg.moment {
            // Scale for the signed moment: the mass times the spread of `a`.
            let mut s = 0.0;
            for p in panels.iter() {
                for n in &p.nodes {
                    if n.lf > f64::NEG_INFINITY {
                        s += (n.lw + n.lf - tg.shifts[0]).exp() * n.a.abs();
                    }
                }
            }
            abs_ref = s;
        }
        let scale = |k: usize| -> f64 {
            if k < tg.anchors.len() {
                tot[k].abs().max(f64::MIN_POSITIVE)
            } else {
                abs_ref.max(f64::MIN_POSITIVE)
            }
        };
        let done = (0..m).all(|k| err[k] <= opts.rel_tol * scale(k));
        if done {
            return Ok(());
        }
        if panels.len() >= opts.max_panels {
            return Err(QuadError::NoConvergence { panels: panels.len() });
        }
        let mut worst = (0usize, -1.0f64);
        for (i, p) in panels.iter().enumerate() {
            let key = (0..m).map(|k| p.errs[k] / scale(k)).fold(0.0, f64::max);
            if key > worst.1 {
                worst = (i, key);
            }
        }
        // Split the worst few panels per sweep to limit the bookkeeping cost.
        let mut keys: Vec<(f64, usize)> = panels
            .iter()
            .enumerate()
            .map(|(i, p)| ((0..m).map(|k| p.errs[k] / scale(k)).fold(0.0, f64::max), i))
            .collect();
        keys.sort_by(|a, b| b.0.total_cmp(&a.0));
        let cut = (worst.1 * 1e-2).max(opts.rel_tol * 1e-3);
        let mut chosen: Vec<usize> = keys.iter().take(16).filter(|k| k.0 >= cut).map(|k| k.1).collect();
        if chosen.is_empty() {
            chosen.push(worst.0);
        }
        chosen.sort_unstable_by(|a, b| b.cmp(a));
        for i in chosen {
            let p = panels.swap_remove(i);
            let mid = 0.5 * (p.lo + p.hi);
            if mid <= p.lo || mid >= p.hi {
                return Err(QuadError::NoConvergence { panels: panels.len() });
            }
            panels.push(panel(point, axis, p.lo, mid, tg)?);
            panels.push(panel(point, axis, mid, p.hi, tg)?);
        }
        panels.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    }
}

/// Detects the end of the interval `{λ ≥ 0 : ∫ f₀ e^{λa} < ∞}` below `upper`.
/// Returns `+∞` when the integral converges at `upper`.
pub fn kramer_limit(point: &PointFn, axis: &Axis, upper: f64, opts: &QuadOptions) -> Result<f64, QuadError> {
    let (lo, hi) = axis.range();
    let n = (hi - lo).round() as usize;
    let mut scan = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let t = lo + (hi - lo) * i as f64 / n as f64;
        scan.push(eval_point(point, axis, t)?);
    }
    let converges = |lam: f64| -> bool {
        let u: Vec<f64> = scan
            .iter()
            .map(|&(lj, lf, a)| if lf == f64::NEG_INFINITY { f64::NEG_INFINITY } else { lj + lf + lam * a })
            .collect();
        let m = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        m.is_finite() && check_tails_spaced(&u, m, axis, opts.cutoff)
    };
    if converges(upper) {
        return Ok(f64::INFINITY);
    }
    if !converges(0.0) {
        return Err(QuadError::Divergent { lambda: 0.0 });
    }
    let (mut good, mut bad) = (0.0, upper);
    for _ in 0..60 {
        let mid = 0.5 * (good + bad);
        if converges(mid) {
            good = mid;
        } else {
            bad = mid;
        }
        if bad - good <= 1e-13 * bad {
            break;
        }
    }
    Ok(good)
}

/// Tail test on a unit-spaced scan: the last three of every eight points.
fn check_tails_spaced(u: &[f64], m: f64, axis: &Axis, cutoff: f64) -> bool {
    let n = u.len();
    let ok = |a: f64, b: f64, c: f64| c == f64::NEG_INFINITY || (c < b && b < a && c < m - cutoff);
    if !ok(u[n - 17], u[n - 9], u[n - 1]) {
        return false;
    }
    !axis.lower_infinite() || ok(u[16], u[8], u[0])
}

/// `log ∫ exp(logf(x)) dx` on the axis.
pub fn log_integral(logf: &dyn Fn(f64) -> f64, axis: &Axis, opts: &QuadOptions) -> Result<f64, QuadError> {
    let point = |x: f64| (logf(x), 0.0);
    Ok(TiltRule::build(&point, axis, &[0.0], false, f64::INFINITY, opts)?.log_mass())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    const LINE: Axis = Axis::Line { center: 0.0, scale: 1.0 };

    #[test]
    fn gaussian_mass_and_tilts() {
        let opts = QuadOptions::default();
        let point = |x: f64| (-0.5 * x * x - 0.5 * (2.0 * PI).ln(), x);
        let rule = TiltRule::build(&point, &LINE, &[0.0, 1.0, 4.0, 16.0], true, f64::INFINITY, &opts).unwrap();
        assert!(rule.log_mass().abs() < 1e-12);
        assert!(rule.mean().abs() < 1e-12);
        for l in [0.5, 2.0, 7.0, 16.0] {
            assert_relative_eq!(rule.cumulant(l), l * l / 2.0, max_relative = 1e-9);
        }
    }

    #[test]
    fn cauchy_heavy_tail_mass() {
        let opts = QuadOptions::default();
        let v = log_integral(&|x: f64| -(PI * (1.0 + x * x)).ln(), &LINE, &opts).unwrap();
        assert!(v.abs() < 1e-10, "{v}");
    }

    #[test]
    fn far_narrow_peak_is_found() {
        let opts = QuadOptions::default();
        let v = log_integral(&|x: f64| -0.5 * ((x - 300.0) / 0.5).powi(2), &LINE, &opts).unwrap();
        assert_relative_eq!(v, (0.5 * (2.0 * PI).sqrt()).ln(), max_relative = 1e-10);
    }

    #[test]
    fn half_line_exponential() {
        let opts = QuadOptions::default();
        let axis = Axis::HalfLine { lower: 0.0, scale: 1.0 };
        let point = |x: f64| (-x, x);
        let k = kramer_limit(&point, &axis, 64.0, &opts).unwrap();
        assert_relative_eq!(k, 1.0, max_relative = 1e-9);
        let rule = TiltRule::build(&point, &axis, &[0.0, 0.5, 0.9], true, k, &opts).unwrap();
        // log E e^{λ(X−1)} for X ~ Exp(1).
        for l in [0.3, 0.9] {
            let exact = -(1.0f64 - l).ln() - l;
            assert_relative_eq!(rule.cumulant(l), exact, max_relative = 1e-9);
        }
        assert_eq!(rule.log_tilt(1.5), f64::INFINITY);
    }

    #[test]
    fn divergence_reported() {
        let opts = QuadOptions::default();
        let point = |x: f64| (-(PI * (1.0 + x * x)).ln(), x);
        let r = TiltRule::build(&point, &LINE, &[0.0, 0.1], false, f64::INFINITY, &opts);
        assert!(matches!(r, Err(QuadError::Divergent { .. })));
    }

    /// Brute-force `log ∫ exp(u)` by the trapezoid rule on a dense window.
    fn dense_log_integral(u: &dyn Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
        let h = (hi - lo) / n as f64;
        let vals: Vec<f64> = (0..=n).map(|i| u(lo + h * i as f64)).collect();
        let m = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = vals.iter().enumerate().map(|(i, v)| if i == 0 || i == n { 0.5 } else { 1.0 } * (v - m).exp()).sum();
        m + (s * h).ln()
    }

    #[test]
    fn sharp_far_tilted_peaks_are_resolved() {
        // f₀ ∝ exp(−x⁴) tilted by a = x⁴ − (x − 8)⁴: peaks of width ~1e-2 near x ≈ 24λ.
        let opts = QuadOptions::default();
        let point = |x: f64| (-x.powi(4), x.powi(4) - (x - 8.0).powi(4));
        let rule = TiltRule::build(&point, &LINE, &[0.0, 1.0, 2.0, 4.0], false, f64::INFINITY, &opts).unwrap();
        for l in [1.0, 1.5, 2.0, 3.0, 4.0] {
            let u = |x: f64| -x.powi(4) + l * (x.powi(4) - (x - 8.0).powi(4));
            let exact = dense_log_integral(&u, -10.0, 120.0, 4_000_000);
            assert!((rule.log_tilt(l) - exact).abs() < 1e-6, "λ = {l}: {} vs {exact}", rule.log_tilt(l));
        }
    }
}
