use super::*;
use crate::family::ParamBox;
use statrs::function::erf::erfc;

fn gaussian() -> Arc<ParametricFamily> {
    Arc::new(ParametricFamily::gaussian_shift())
}

fn boxed(lo: f64, hi: f64) -> Arc<ParametricFamily> {
    Arc::new(ParametricFamily::gaussian_shift().with_bounds(ParamBox::interval(lo, hi)).unwrap())
}

/// `P(|ξ| > v)` for a standard normal ξ.
fn normal_two_sided(v: f64) -> f64 {
    erfc(v / std::f64::consts::SQRT_2)
}

#[test]
fn gaussian_partition_dominates_and_decreases() {
    let fam = gaussian();
    let opts = BoundOptions::default();
    let mut last = f64::INFINITY;
    for v in [1.0, 2.0, 3.0] {
        let b = bound_partition(&fam, v, &opts).unwrap();
        assert!(b.bound >= normal_two_sided(v), "v = {v}: {} < exact", b.bound);
        assert!(b.raw < last, "raw bound rose at v = {v}");
        assert!(b.bound <= 1.0 && b.bound == b.raw.min(1.0));
        last = b.raw;
    }
}

#[test]
fn single_sample_reduces_to_partition() {
    let fam = gaussian();
    let opts = BoundOptions::default();
    let a = bound_sample(&fam, 1, 2.0, false, &opts).unwrap();
    let b = bound_partition(&fam, 2.0, &opts).unwrap();
    assert!((a.raw - b.raw).abs() <= 1e-12 * b.raw, "{} vs {}", a.raw, b.raw);
    assert_eq!(a.method, "sample-n");
}

#[test]
fn single_layer_box_matches_compact() {
    // U(2) ∩ [−2.3, 2.3] lies inside the first layer [2, 2.4].
    let fam = boxed(-2.3, 2.3);
    let opts = BoundOptions::default();
    let p = bound_partition(&fam, 2.0, &opts).unwrap();
    let c = bound_compact(&fam, 2.0, &opts).unwrap();
    assert_eq!(p.layers, 1);
    assert!((p.raw - c.raw).abs() <= 1e-12 * c.raw, "{} vs {}", p.raw, c.raw);
}

#[test]
fn empty_region_is_exactly_zero() {
    let fam = boxed(-1.0, 1.0);
    let opts = BoundOptions::default();
    for b in [bound_compact(&fam, 2.0, &opts).unwrap(), bound_partition(&fam, 2.0, &opts).unwrap()] {
        assert_eq!(b.bound, 0.0);
        assert!(b.flags.iter().any(|f| f == "exact-empty"));
    }
}

#[test]
fn singleton_region_is_a_chernoff_bound() {
    // U(2) ∩ [0, 2] = {2}: L⁰(2) ~ N(0, 4) and Y = h(2) = 2, so the bound
    // is exp(−sup_λ(2λ − 2λ²)) = exp(−1/2).
    let fam = boxed(0.0, 2.0);
    let opts = BoundOptions::default();
    let b = bound_compact(&fam, 2.0, &opts).unwrap();
    let d = &b.layer_diags[0];
    assert_eq!(d.points, 1);
    assert_eq!(d.psi.unwrap().g_value, 0.0);
    assert!((b.bound - (-0.5f64).exp()).abs() < 1e-4, "{}", b.bound);
}

#[test]
fn smooth_gaussian_dominates() {
    let fam = gaussian();
    let opts = BoundOptions::default();
    let b = bound_smooth(&fam, 2.0, &opts).unwrap();
    assert!(b.bound >= normal_two_sided(2.0));
    let s = b.smooth.as_ref().unwrap();
    assert!(s.c2 > 0.0 && s.c3 > 0.0);
    assert!((s.c9 - s.c3 / (2.0 * s.c2)).abs() < 1e-15);
    // h(θ) = θ²/2 exactly, so the ratio check passes.
    assert!(!b.flags.iter().any(|f| f.starts_with("smoothness")));
    let edge = bound_smooth(&fam, 1.0, &opts).unwrap();
    assert!(edge.bound.is_finite() && edge.bound <= 1.0);
}

#[test]
fn smooth_below_one_is_flagged() {
    let b = bound_smooth(&gaussian(), 0.8, &BoundOptions::default()).unwrap();
    assert!(b.flags.iter().any(|f| f == "v-below-one"));
}

#[test]
fn too_few_layers_is_unsafe() {
    let opts = BoundOptions { k_max: 2, ..BoundOptions::default() };
    let r = bound_partition(&gaussian(), 2.0, &opts);
    assert_eq!(r.unwrap_err(), BoundError::TruncationUnsafe { k: 2 });
}

#[test]
fn curve_is_clamped_and_monotone() {
    let fam = boxed(-3.0, 3.0);
    let grid = [0.5, 1.0, 2.0, 2.5, 3.5];
    let c = tail_curve(Method::Partition, &fam, &grid, &BoundOptions::default()).unwrap();
    assert_eq!(c.method, "partition");
    assert!(!c.has_gaps());
    let b: Vec<f64> = c.bounds().into_iter().map(|b| b.unwrap()).collect();
    assert!(b.iter().all(|&x| (0.0..=1.0).contains(&x)));
    assert!(b.windows(2).all(|w| w[1] <= w[0]));
    // Beyond the box the region is empty.
    assert_eq!(b[4], 0.0);
}

#[test]
fn options_reject_unknown_fields_and_bad_values() {
    let o = BoundOptions::default();
    let s = serde_json::to_string(&o).unwrap();
    let back: BoundOptions = serde_json::from_str(&s).unwrap();
    assert_eq!(back, o);
    assert!(serde_json::from_str::<BoundOptions>(r#"{"k_maxx": 3}"#).is_err());
    let bad = BoundOptions { entropy_points: 1, ..o };
    assert!(matches!(bad.validate(), Err(BoundError::InvalidParameter(_))));
}
