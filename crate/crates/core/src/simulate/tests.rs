use super::*;
use crate::bounds::CurvePoint;
use rand::Rng;
use statrs::function::erf::erfc;

fn gaussian() -> Arc<ParametricFamily> {
    Arc::new(ParametricFamily::gaussian_shift())
}

fn normal_two_sided(v: f64) -> f64 {
    erfc(v / std::f64::consts::SQRT_2)
}

fn plan(fam: Arc<ParametricFamily>, n: usize, reps: u64, v_grid: &[f64], seed: u64) -> SimulationPlan {
    SimulationPlan { family: fam, n, replications: reps, v_grid: v_grid.to_vec(), master_seed: seed, scaled: false }
}

fn curve(v: &[f64], b: f64) -> TailCurve {
    TailCurve {
        method: "test".into(),
        points: v.iter().map(|&v| CurvePoint { v, bound: Some(b), detail: None, error: None }).collect(),
    }
}

#[test]
fn shift_mle_is_the_observation() {
    let t = mle_fit(&ParametricFamily::gaussian_shift(), &[1.7]).unwrap();
    assert!((t[0] - 1.7).abs() < 1e-7, "{}", t[0]);
    let t = mle_fit(&ParametricFamily::cauchy_shift(), &[-13.25]).unwrap();
    assert!((t[0] + 13.25).abs() < 1e-6, "{}", t[0]);
}

#[test]
fn scale_mles_match_closed_forms() {
    let t = mle_fit(&ParametricFamily::gaussian_scale(), &[1.0, -1.0, 2.0]).unwrap();
    assert!((t[0] - 2.0).abs() < 1e-6, "{}", t[0]);
    let t = mle_fit(&ParametricFamily::exponential_scale(), &[2.0, 4.0]).unwrap();
    assert!((t[0] - 3.0).abs() < 1e-6, "{}", t[0]);
}

#[test]
fn optimizer_agrees_with_closed_forms_on_random_samples() {
    let fams = [
        ParametricFamily::gaussian_shift(),
        ParametricFamily::gaussian_scale(),
        ParametricFamily::exponential_scale(),
    ];
    let mut rng = child_rng(7, 0);
    for (k, fam) in fams.iter().enumerate() {
        let (lo, hi) = search_box(fam);
        for _ in 0..1000 {
            let n = rng.random_range(1..12);
            let mut xs = vec![0.0; n];
            for x in &mut xs {
                fam.model().sample(&fam.theta0, &mut rng, std::slice::from_mut(x));
            }
            let closed = match k {
                1 => xs.iter().map(|x| x * x).sum::<f64>() / n as f64,
                _ => xs.iter().sum::<f64>() / n as f64,
            }
            .clamp(lo[0], hi[0]);
            let t = mle_fit(fam, &xs).unwrap()[0];
            assert!((t - closed).abs() <= 1e-5 * closed.abs().max(1.0), "family {k}: {t} vs {closed}");
        }
    }
}

#[test]
fn bad_samples_are_rejected() {
    let exp = ParametricFamily::exponential_scale();
    assert!(matches!(mle_fit(&exp, &[1.0, -0.5]), Err(SimError::InvalidSample(_))));
    assert!(matches!(mle_fit(&exp, &[]), Err(SimError::InvalidSample(_))));
}

#[test]
fn multivariate_shift_mle_is_the_observation() {
    let fam = ParametricFamily::builtin(&crate::family::ModelSpec::GaussianShift { dim: 2 }).unwrap();
    let t = mle_fit(&fam, &[0.3, -1.1, 1.0, 0.2]).unwrap();
    assert!((t[0] - 0.65).abs() < 1e-6 && (t[1] + 0.45).abs() < 1e-6, "{t:?}");
}

#[test]
fn wilson_interval_properties() {
    let (lo, hi) = wilson(0, 1000, Z99);
    assert_eq!(lo, 0.0);
    assert!(hi > 0.0);
    // z²/(n + z²) is the upper limit at zero successes.
    assert!((hi - Z99 * Z99 / (1000.0 + Z99 * Z99)).abs() < 1e-15);
    let (lo, hi) = wilson(50, 100, Z99);
    assert!((0.5 - lo - (hi - 0.5)).abs() < 1e-15);
    assert!(lo < 0.5 && hi > 0.5);
}

#[test]
fn gaussian_tail_matches_normal_oracle() {
    let tail = empirical_tail(&plan(gaussian(), 1, 100_000, &[1.0, 2.0, 50.0], 11)).unwrap();
    let exact = normal_two_sided(2.0);
    assert!((exact - 0.0455).abs() < 1e-4);
    assert!(tail.wilson_lo[1] <= exact && exact <= tail.wilson_hi[1], "{} {:?}", exact, tail);
    // Nothing deviates by 50.
    assert_eq!(tail.exceed_counts[2], 0);
    assert_eq!(tail.estimates[2], 0.0);
    assert!(tail.wilson_hi[2] > 0.0);
    assert!(tail.estimates.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(tail.replications, 100_000);
}

#[test]
fn cauchy_tail_matches_arctangent_oracle() {
    let fam = Arc::new(ParametricFamily::cauchy_shift());
    let tail = empirical_tail(&plan(fam, 1, 100_000, &[20.0], 3)).unwrap();
    let exact = 2.0 / std::f64::consts::PI * (1.0f64 / 20.0).atan();
    assert!(tail.wilson_lo[0] <= exact && exact <= tail.wilson_hi[0], "{exact} {:?}", tail);
    // Observations beyond ±200 put the estimate on the edge of the box.
    assert!(tail.boundary_hits > 0 && tail.truncation.is_some());
}

#[test]
fn wilson_band_covers_exact_tail() {
    let grid = [0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.25, 2.5];
    let (mut inside, mut total) = (0, 0);
    for seed in 0..20 {
        let tail = empirical_tail(&plan(gaussian(), 1, 2000, &grid, 1000 + seed)).unwrap();
        for (i, &v) in grid.iter().enumerate() {
            let e = normal_two_sided(v);
            total += 1;
            if tail.wilson_lo[i] <= e && e <= tail.wilson_hi[i] {
                inside += 1;
            }
        }
    }
    assert!(inside as f64 >= 0.95 * total as f64, "{inside}/{total}");
}

#[test]
fn scaled_gaussian_tail_does_not_depend_on_n() {
    let grid = [0.5, 1.0, 1.5, 2.0];
    let a = empirical_tail(&plan(gaussian(), 1, 20_000, &grid, 5)).unwrap();
    let mut p = plan(gaussian(), 4, 20_000, &grid, 6);
    p.scaled = true;
    let b = empirical_tail(&p).unwrap();
    for i in 0..grid.len() {
        assert!(a.wilson_lo[i] <= b.wilson_hi[i] && b.wilson_lo[i] <= a.wilson_hi[i], "v = {}", grid[i]);
    }
}

#[test]
fn runs_are_reproducible_across_thread_counts() {
    let p = plan(Arc::new(ParametricFamily::gaussian_scale()), 3, 3000, &[0.5, 1.0, 2.0], 42);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| empirical_tail(&p)).unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(|| empirical_tail(&p)).unwrap();
    assert_eq!(one, four);
    let other = empirical_tail(&SimulationPlan { master_seed: 43, ..p }).unwrap();
    assert_ne!(one.exceed_counts, other.exceed_counts);
}

#[test]
fn plans_are_validated() {
    assert!(matches!(empirical_tail(&plan(gaussian(), 1, 99, &[1.0], 0)), Err(SimError::InvalidPlan(_))));
    assert!(matches!(empirical_tail(&plan(gaussian(), 1, 100, &[2.0, 1.0], 0)), Err(SimError::InvalidPlan(_))));
    assert!(matches!(empirical_tail(&plan(gaussian(), 0, 100, &[1.0], 0)), Err(SimError::InvalidPlan(_))));
}

#[test]
fn compare_trivial_bounds() {
    let v = [0.5, 1.0, 2.0];
    let tail = EmpiricalTail::from_deviations(&v, &[0.1, 0.7, 1.5, 3.0, 0.2, 0.9, 2.5, 0.6]);
    let r = compare(&curve(&v, 1.0), &tail).unwrap();
    assert_eq!(r.verdict, Verdict::Pass);
    assert_eq!(r.violations, 0);
    let r = compare(&curve(&v, 0.0), &tail).unwrap();
    assert_eq!(r.verdict, Verdict::Fail);
    assert_eq!(r.violations, v.len());
    assert!(r.records.iter().all(|x| x.violation));
    assert!(compare(&curve(&[0.5, 1.0], 1.0), &tail).is_err());
}

#[test]
fn log_slope_fits_recover_a_quadratic_rate() {
    let v: Vec<f64> = (1..=6).map(|i| i as f64 * 0.5).collect();
    let y: Vec<Option<f64>> = v.iter().map(|v| Some((-0.3 * v * v - 0.1).exp())).collect();
    let fits = log_slope_fits("bound", &v, &y);
    let q = fits.iter().find(|f| f.covariate == Covariate::V2).unwrap().fit.unwrap();
    assert!((q.slope - 0.3).abs() < 1e-12 && (q.intercept - 0.1).abs() < 1e-12);
    assert_eq!(q.points, 6);
}

#[test]
fn generator_tail_is_exact() {
    let g = WeibullType::new(0.5, SlowVar::default()).unwrap();
    assert!((g.tail(9.0) - (-3.0f64).exp()).abs() < 1e-15);
    let r = lemma31_experiment(0.5, SlowVar::default(), &[1], &[1.0, 9.0], 100_000, 9).unwrap();
    let t = &r.tails[0].tail;
    let exact = (-3.0f64).exp();
    assert!(t.wilson_lo[1] <= exact && exact <= t.wilson_hi[1], "{:?}", t);
    // Var η = Γ(5) = 24 for q = 1/2.
    assert!((r.variance - 24.0).abs() < 1e-9, "{}", r.variance);
}

#[test]
fn generator_inverts_a_log_power_tail() {
    let g = WeibullType::new(0.8, SlowVar::LogPow { r: 1.0, s: 0.5 }).unwrap();
    for e in [0.1, 1.0, 7.5, 40.0] {
        let x = g.invert(e);
        assert!((-g.tail(x).ln() - e).abs() < 1e-9 * e.max(1.0), "{e} {x}");
    }
    assert!(g.variance().is_finite() && g.variance() > 0.0);
    assert!(WeibullType::new(2.5, SlowVar::default()).is_err());
}

#[test]
fn quadratic_tail_branches_coincide() {
    // With q = 2 and n = 1 both branch designs are x², fitted on the same data.
    let x: Vec<f64> = (1..=8).map(|i| 0.25 * i as f64).collect();
    let r = lemma31_experiment(2.0, SlowVar::default(), &[1], &x, 20_000, 1).unwrap();
    let (c1, c2) = (r.c_weibull_fit.unwrap(), r.c_gauss_fit.unwrap());
    assert!((c1 - 1.0).abs() < 0.05 && (c2 - 1.0).abs() < 0.1, "{c1} {c2}");
    assert_eq!(r.upper_violations, 0);
}

#[test]
fn too_few_exceedances_leave_branches_unfitted() {
    let r = lemma31_experiment(0.5, SlowVar::default(), &[1, 4], &[1e4, 2e4], 200, 1).unwrap();
    assert!(r.c_weibull_fit.is_none() && r.upper.is_none());
    assert!(r.qualifying.iter().all(|q| !q));
}
