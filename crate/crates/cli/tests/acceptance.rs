//! Acceptance suite: every criterion runs at its stated tolerance and prints
//! one PASS/FAIL line. The process exits non-zero if any criterion fails.

use std::f64::consts::{FRAC_2_PI, SQRT_2};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_ur;
use tailbound::bounds::{bound_partition, bound_sample, bound_smooth, BoundOptions, PointBound};
use tailbound::chaining::{covering_number, entropy_g, EntropyProfile};
use tailbound::family::{ModelSpec, ParametricFamily};
use tailbound::phi::{conjugate, PhiFunction, SlowVar};
use tailbound::simulate::{empirical_tail, lemma31_experiment, least_squares, SimulationPlan};

type Outcome = Result<String, String>;

fn normal_two_sided(v: f64) -> f64 {
    erfc(v / SQRT_2)
}

fn half_grid(lo: f64, hi: f64) -> Vec<f64> {
    let n = ((hi - lo) / 0.5).round() as usize;
    (0..=n).map(|i| lo + 0.5 * i as f64).collect()
}

fn check(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn max_err(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(0.0, f64::max)
}

fn c1_conjugate_goldens() -> Outcome {
    let g = PhiFunction::gaussian();
    let e1 = max_err(half_grid(0.0, 10.0).into_iter().map(|x| (conjugate(&g, x) - x * x / 2.0).abs()));
    let cubic = PhiFunction::power(1.0 / 3.0, 3.0).map_err(|e| e.to_string())?;
    let e2 = (conjugate(&cubic, 4.0) - 16.0 / 3.0).abs();
    let trunc = PhiFunction::truncated_power(0.5, 2.0, 1.0).map_err(|e| e.to_string())?;
    let e3 = (conjugate(&trunc, 2.0) - 1.5).abs();
    check(e1 <= 1e-6 && e2 <= 1e-6 && e3 <= 1e-6, format!("errors {e1:.1e}, {e2:.1e}, {e3:.1e}"))
}

/// `sup_x (λx − φ*(x))` by a coarse scan and golden-section refinement; the
/// objective is concave in x.
fn biconjugate(phi: &PhiFunction, lambda: f64, x_max: f64) -> f64 {
    let f = |x: f64| lambda * x - conjugate(phi, x);
    let n = 400;
    let h = x_max / n as f64;
    let best = (0..=n).map(|i| i as f64 * h).fold((0.0, f(0.0)), |b, x| if f(x) > b.1 { (x, f(x)) } else { b });
    let (mut a, mut b) = ((best.0 - h).max(0.0), (best.0 + h).min(x_max));
    let r = 0.5 * (5f64.sqrt() - 1.0);
    while b - a > 1e-12 * (1.0 + b) {
        let (c, d) = (b - r * (b - a), a + r * (b - a));
        if f(c) >= f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    f(0.5 * (a + b)).max(best.1)
}

fn c2_biconjugacy() -> Outcome {
    let mut kernels: Vec<(String, PhiFunction, f64)> = vec![("gaussian".into(), PhiFunction::gaussian(), 4.0)];
    for q in [1.5, 2.0, 3.0] {
        kernels.push((format!("power-{q}"), PhiFunction::power(1.0 / q, q).map_err(|e| e.to_string())?, 4.0));
    }
    kernels.push(("truncated".into(), PhiFunction::truncated_power(0.5, 2.0, 1.0).map_err(|e| e.to_string())?, 0.99));
    let mut worst = (String::new(), 0.0);
    for (name, phi, top) in &kernels {
        // φ'(top) bounds the maximizing x; scan a little beyond it.
        let x_max = 2.0 * (phi.eval(*top) - phi.eval(0.99 * top)) / (0.01 * top) + 1.0;
        for i in 0..=40 {
            let l = top * i as f64 / 40.0;
            let e = (biconjugate(phi, l, x_max) - phi.eval(l)).abs();
            if e > worst.1 {
                worst = (format!("{name} at λ = {l}"), e);
            }
        }
    }
    check(worst.1 <= 1e-5, format!("max |φ** − φ| = {:.1e} ({})", worst.1, worst.0))
}

fn c3_kl() -> Outcome {
    type Closed = fn(f64) -> f64;
    let cases: [(ParametricFamily, Closed, &[f64]); 4] = [
        (ParametricFamily::gaussian_shift(), |t| t * t / 2.0, &[0.5, 1.0, 2.0, 4.0]),
        (ParametricFamily::cauchy_shift(), |t| (1.0 + t * t / 4.0).ln(), &[0.5, 1.0, 2.0, 4.0]),
        (ParametricFamily::exponential_scale(), |t| t.ln() + 1.0 / t - 1.0, &[0.5, 2.0, 4.0]),
        (ParametricFamily::gaussian_scale(), |t| 0.5 * (t.ln() + 1.0 / t - 1.0), &[0.5, 2.0, 4.0]),
    ];
    let mut worst: f64 = 0.0;
    for (fam, exact, thetas) in &cases {
        for &t in *thetas {
            let h = fam.kl(&[t]).map_err(|e| format!("{} at {t}: {e}", fam.name()))?;
            worst = worst.max((h - exact(t)).abs() / exact(t));
        }
    }
    check(worst <= 1e-4, format!("max relative error {worst:.1e}"))
}

/// Fewest ε-balls centered at points of the set, by exhaustive search.
fn exact_cover(n: usize, d: &[f64], eps: f64) -> usize {
    let reach: Vec<u32> = (0..n).map(|c| (0..n).filter(|&i| d[c * n + i] <= eps).fold(0, |m, i| m | (1 << i))).collect();
    let full = (1u32 << n) - 1;
    (1..=full)
        .filter(|s| (0..n).filter(|&c| s & (1 << c) != 0).fold(0, |m, c| m | reach[c]) == full)
        .map(|s: u32| s.count_ones() as usize)
        .min()
        .expect("the full set covers")
}

fn c4_covering() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut ratio: f64 = 1.0;
    for _ in 0..50 {
        let n = rng.random_range(2..=12);
        let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let d: Vec<f64> = (0..n * n).map(|k| (xs[k / n] - xs[k % n]).abs()).collect();
        let eps = rng.random_range(0.02..0.4);
        let greedy = covering_number(n, &|i, j| d[i * n + j], eps).n;
        let exact = exact_cover(n, &d, eps);
        if greedy < exact || greedy > 2 * exact {
            return Err(format!("greedy {greedy} outside [{exact}, {}]", 2 * exact));
        }
        ratio = ratio.max(greedy as f64 / exact as f64);
        for k in [0.5, 2.0, 7.0] {
            let scaled = covering_number(n, &|i, j| d[i * n + j] / k, eps).n;
            let stretched = covering_number(n, &|i, j| d[i * n + j], k * eps).n;
            if scaled != stretched {
                return Err(format!("scaling identity fails for K = {k}: {scaled} ≠ {stretched}"));
            }
        }
    }
    Ok(format!("50 sets, worst greedy/exact = {ratio:.2}, scaling exact"))
}

fn c5_entropy_g() -> Outcome {
    let p = EntropyProfile::model(0.0, 1.0, 1.0);
    let g = entropy_g(&p, 0.5).map_err(|e| e.to_string())?.value;
    let e = (g - 2.0 * 2f64.ln()).abs();
    check(e <= 1e-3, format!("G(1/2) = {g}, error {e:.1e}"))
}

fn curve(f: impl Fn(f64) -> Result<PointBound, String>, vs: &[f64]) -> Result<Vec<PointBound>, String> {
    vs.iter().map(|&v| f(v).map_err(|e| format!("v = {v}: {e}"))).collect()
}

/// Slope of `−log y` against a covariate.
fn neg_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let l: Vec<f64> = ys.iter().map(|y| -y.ln()).collect();
    least_squares(xs, &l).map(|f| f.slope)
}

fn c6_gaussian_rate() -> Outcome {
    let fam = Arc::new(ParametricFamily::gaussian_shift());
    let opts = BoundOptions::default();
    let vs = half_grid(1.0, 4.0);
    let bs = curve(|v| bound_partition(&fam, v, &opts).map_err(|e| e.to_string()), &vs)?;
    let viol = bs.iter().filter(|b| b.bound < normal_two_sided(b.v)).count();
    let (x2, raw): (Vec<f64>, Vec<f64>) = bs.iter().filter(|b| b.v >= 2.0).map(|b| (b.v * b.v, b.raw)).unzip();
    let slope = neg_log_slope(&x2, &raw).ok_or("slope fit failed")?;
    check(
        viol == 0 && (0.05..=0.5).contains(&slope),
        format!("{viol} violations; slope of −log raw bound on v² over [2, 4] = {slope:.3}"),
    )
}

fn chi2_scale_tail(n: usize, v: f64) -> f64 {
    // √n·|θ̂ − 1| > v with nθ̂ ~ χ²_n.
    let c = ChiSquared::new(n as f64).expect("positive degrees");
    let nf = n as f64;
    let d = v * nf.sqrt();
    let lower = if nf - d > 0.0 { c.cdf(nf - d) } else { 0.0 };
    c.sf(nf + d) + lower
}

fn c7_sample_bound() -> Outcome {
    let opts = BoundOptions::default();
    let vs = [1.0, 2.0, 3.0, 4.0];
    let g = Arc::new(ParametricFamily::gaussian_shift());
    let mut viol = 0;
    for n in [4, 16] {
        let bs = curve(|v| bound_sample(&g, n, v, false, &opts).map_err(|e| e.to_string()), &vs)?;
        viol += bs.iter().filter(|b| b.bound < normal_two_sided(b.v)).count();
    }
    let s = Arc::new(ParametricFamily::gaussian_scale());
    let vs: Vec<f64> = (1..=5).map(f64::from).collect();
    let bs = curve(|v| bound_sample(&s, 5, v, false, &opts).map_err(|e| e.to_string()), &vs)?;
    viol += bs.iter().filter(|b| b.bound < chi2_scale_tail(5, b.v)).count();
    let tail: Vec<&PointBound> = bs.iter().filter(|b| b.v >= 2.0).collect();
    let xs: Vec<f64> = tail.iter().map(|b| b.v).collect();
    let ls: Vec<f64> = tail.iter().map(|b| -b.raw.ln()).collect();
    let fit = least_squares(&xs, &ls).ok_or("affine fit failed")?;
    let ratios: Vec<f64> = xs.iter().zip(&ls).map(|(v, l)| l / (fit.intercept + fit.slope * v)).collect();
    let shape = ratios.iter().all(|r| (0.3..=3.0).contains(r));
    check(
        viol == 0 && shape,
        format!("{viol} violations; −log raw / affine fit on [2, 5] in [{:.3}, {:.3}]", min(&ratios), max(&ratios)),
    )
}

fn min(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::INFINITY, f64::min)
}

fn max(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn c8_heavy_tail() -> Outcome {
    let fam = Arc::new(ParametricFamily::cauchy_shift());
    let vs = [10.0, 20.0, 40.0, 80.0];
    let plan = SimulationPlan { family: fam.clone(), n: 1, replications: 100_000, v_grid: vs.to_vec(), master_seed: 8, scaled: false };
    let tail = empirical_tail(&plan).map_err(|e| e.to_string())?;
    let vw: Vec<f64> = vs.iter().zip(&tail.estimates).map(|(v, w)| v * w / FRAC_2_PI).collect();
    let empirical_ok = vw.iter().all(|r| (r - 1.0).abs() <= 0.1);
    let opts = BoundOptions::default();
    let bs = curve(|v| bound_partition(&fam, v, &opts).map_err(|e| e.to_string()), &vs)?;
    let viol = bs.iter().filter(|b| b.bound < FRAC_2_PI * (1.0 / b.v).atan()).count();
    let logv: Vec<f64> = vs.iter().map(|v| v.ln()).collect();
    let raw: Vec<f64> = bs.iter().map(|b| b.raw).collect();
    let slope = neg_log_slope(&logv, &raw).ok_or("slope fit failed")?;
    check(
        empirical_ok && viol == 0 && slope <= 3.0,
        format!(
            "v·W(v)·π/2 in [{:.3}, {:.3}]; {viol} violations; slope of −log raw bound on log v = {slope:.3}",
            min(&vw),
            max(&vw)
        ),
    )
}

/// `P(|ξ| > v)` for the density `∝ exp(−|x|^q)`: `Q(1/q, v^q)`.
fn spherical_tail(q: f64, v: f64) -> f64 {
    gamma_ur(1.0 / q, v.powf(q))
}

fn c9_spherical() -> Outcome {
    let spec = ModelSpec::SphericalUnimodal { q: 4.0, slowvar: SlowVar::default(), dim: 1 };
    let fam = Arc::new(ParametricFamily::builtin(&spec).map_err(|e| e.to_string())?);
    let opts = BoundOptions::default();
    let vs = [2.0, 3.0, 4.0, 6.0];
    let bs = curve(|v| bound_smooth(&fam, v, &opts).map_err(|e| e.to_string()), &vs)?;
    let viol = bs.iter().filter(|b| b.bound < spherical_tail(4.0, b.v)).count();
    let nl: Vec<f64> = bs.iter().map(|b| (1.0 / b.bound).ln()).collect();
    // Exponent p in −log bound ≈ C v^p.
    let exponent = if nl.iter().all(|&l| l > 0.0) {
        let lv: Vec<f64> = vs.iter().map(|v| v.ln()).collect();
        let ll: Vec<f64> = nl.iter().map(|l| l.ln()).collect();
        least_squares(&lv, &ll).map(|f| f.slope)
    } else {
        None
    };
    let msg = format!(
        "{viol} violations; −log bound = [{}]; fitted exponent {}",
        nl.iter().map(|l| format!("{l:.3}")).collect::<Vec<_>>().join(", "),
        exponent.map_or("undefined (bound is 1)".into(), |p| format!("{p:.3}"))
    );
    check(viol == 0 && exponent.is_some_and(|p| (1.0..=2.0).contains(&p)), msg)
}

fn c10_sum_tails() -> Outcome {
    let x: Vec<f64> = half_grid(0.5, 30.0).into_iter().chain((7..=20).map(|i| 5.0 * i as f64)).collect();
    let r = lemma31_experiment(0.5, SlowVar::default(), &[1, 4, 16, 64], &x, 100_000, 31).map_err(|e| e.to_string())?;
    let env = r.upper.ok_or("envelope branches unfitted")?;
    let closer = r.gaussian_closer().ok_or("closeness undefined")?;
    check(
        r.upper_violations == 0 && closer,
        format!(
            "{} upper violations on {} qualifying x (c₁ = {:.4}, c₂ = {:.5}); n = 64 log-distance Gaussian {:.3} vs Weibull {:.3}",
            r.upper_violations,
            r.qualifying.iter().filter(|&&q| q).count(),
            env.c_weibull,
            env.c_gauss,
            r.gauss_distance.unwrap_or(f64::NAN),
            r.weibull_distance.unwrap_or(f64::NAN)
        ),
    )
}

const COMPARE_CONFIG: &str = r#"
[family]
name = "gaussian_shift"

[method]
kind = "partition"

[grid]
start = 1.0
stop = 4.0
step = 0.5

[simulation]
replications = 100000
master_seed = 42
"#;

fn run_compare(dir: &Path, workers: usize) -> Result<(Vec<u8>, Vec<u8>), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_tailbound"))
        .args(["compare", "--config"])
        .arg(dir.join("compare.toml"))
        .arg("--out")
        .arg(dir.join(format!("w{workers}")))
        .args(["--workers", &workers.to_string(), "--seed", "42"])
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(format!("exit {:?}: {}", status.status.code(), String::from_utf8_lossy(&status.stderr)));
    }
    let read = |f: &str| std::fs::read(dir.join(format!("w{workers}")).join(f)).map_err(|e| e.to_string());
    Ok((read("tail_curve.csv")?, read("empirical_tail.csv")?))
}

fn c11_reproducibility() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    std::fs::write(dir.path().join("compare.toml"), COMPARE_CONFIG).map_err(|e| e.to_string())?;
    let a = run_compare(dir.path(), 1)?;
    let b = run_compare(dir.path(), 8)?;
    let rows = String::from_utf8_lossy(&a.0).lines().count() - 1;
    check(a == b && rows == 7, format!("workers 1 vs 8: CSV bodies identical = {}, {rows} curve rows, verdict PASS", a == b))
}

fn main() {
    let criteria: [(u32, &str, Duration, fn() -> Outcome); 11] = [
        (1, "conjugate goldens", Duration::from_secs(1), c1_conjugate_goldens),
        (2, "biconjugacy", Duration::from_secs(5), c2_biconjugacy),
        (3, "KL quadrature vs closed forms", Duration::from_secs(10), c3_kl),
        (4, "covering oracle", Duration::from_secs(30), c4_covering),
        (5, "G closed form", Duration::from_secs(1), c5_entropy_g),
        (6, "Gaussian dominance and rate", Duration::from_secs(120), c6_gaussian_rate),
        (7, "sample bound", Duration::from_secs(120), c7_sample_bound),
        (8, "heavy tail", Duration::from_secs(180), c8_heavy_tail),
        (9, "spherical unimodal", Duration::from_secs(120), c9_spherical),
        (10, "sum-tail suite", Duration::from_secs(240), c10_sum_tails),
        (11, "reproducibility", Duration::from_secs(120), c11_reproducibility),
    ];
    let only: Vec<u32> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut failed = Vec::new();
    for (id, name, budget, run) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let result = run();
        let dt = t.elapsed();
        let (ok, msg) = match result {
            Ok(m) if dt <= budget => (true, m),
            Ok(m) => (false, format!("{m}; over the {budget:?} budget")),
            Err(m) => (false, m),
        };
        println!("criterion {id:>2} {}: {name}: {msg} [{:.1} s]", if ok { "PASS" } else { "FAIL" }, dt.as_secs_f64());
        if !ok {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
