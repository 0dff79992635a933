use hetbf::abf::ln_abf_single;
use hetbf::laplace::{bf_known_variance, bfhat};
use hetbf::oracle::{bf_quad, bf_quad_detailed, h0_expectation_mc, replicate_rng, simulate_dataset, simulate_with_rng, McModel, McPrior, McVariant, SimEffect, SimSpec};
use hetbf::par::{ordered_map_range, Parallelism};
use hetbf::priors::EffectPrior;
use hetbf::quadrature::{integrate, QuadOptions};
use hetbf::special::ln_t_pdf;
use hetbf::stats::{suffstats_from_raw, summarize};

#[test]
fn null_t_statistic_variance() {
    let n = 12;
    let reps = 100_000;
    let t: Vec<f64> = ordered_map_range(reps, Parallelism::Parallel, |i| {
        let spec = SimSpec::null(vec![n], vec![0.35]);
        let d = simulate_with_rng(&spec, &mut replicate_rng(11, i as u64)).unwrap();
        summarize(&suffstats_from_raw(&d[0].y, &d[0].g).unwrap()).unwrap().t_stat
    });
    let m4: f64 = t.iter().map(|t| t.powi(4)).sum::<f64>() / reps as f64;
    let var: f64 = t.iter().map(|t| t * t).sum::<f64>() / reps as f64;
    let df = (n - 2) as f64;
    let expected = df / (df - 2.0);
    let se = ((m4 - var * var) / reps as f64).sqrt();
    assert!((var - expected).abs() < 3.0 * se, "{var} vs {expected} (se {se})");
}

#[test]
fn uncorrected_abf_null_mean_exceeds_one() {
    // E(ABF | H0) with T ~ t_8 and prior variance 4·δ², truncated to |T| ≤ c,
    // already exceeds 1 and grows without bound in c.
    let f = |t: f64| (ln_t_pdf(t, 8.0) + ln_abf_single(t * t, 1.0, 4.0)).exp();
    let opts = QuadOptions { rel_tol: 1e-10, ..Default::default() };
    let e8 = 2.0 * integrate(f, 0.0, 8.0, opts).unwrap().value;
    let e16 = 2.0 * integrate(f, 0.0, 16.0, opts).unwrap().value;
    assert!(e8 > 1.0 && e16 > 10.0 * e8, "{e8} {e16}");
    // with the normal quantile correction the same prior integrates to 1
    let g = |z: f64| (-0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln() + ln_abf_single(z * z, 1.0, 0.2)).exp();
    let e = 2.0 * integrate(g, 0.0, 40.0, opts).unwrap().value;
    assert!((e - 1.0).abs() < 1e-9, "{e}");
}

#[test]
fn monte_carlo_is_reproducible() {
    let model = McModel { variant: McVariant::Corrected, prior: McPrior::Prior(EffectPrior::es(0.1, 0.2).unwrap()), allele_freq: 0.3 };
    let a = h0_expectation_mc(&model, &[15, 20], 10_000, 3, Parallelism::Parallel).unwrap();
    let b = h0_expectation_mc(&model, &[15, 20], 10_000, 3, Parallelism::Sequential).unwrap();
    assert_eq!(a.0.to_bits(), b.0.to_bits());
    assert_eq!(a.1.to_bits(), b.1.to_bits());
    assert!(h0_expectation_mc(&model, &[15], 999, 3, Parallelism::Sequential).is_err());
}

#[test]
fn three_methods_agree_at_large_n() {
    let spec = SimSpec { n: vec![20_000, 20_000], allele_freq: vec![0.3, 0.2], sigma: vec![1.0, 1.0], effect: SimEffect::Es { bbar: 0.03, phi: 0.01 } };
    let d = simulate_dataset(&spec, 21).unwrap();
    let suff: Vec<_> = d.iter().map(|x| suffstats_from_raw(&x.y, &x.g).unwrap()).collect();
    let sums: Vec<_> = suff.iter().map(|s| summarize(s).unwrap()).collect();
    let p = EffectPrior::es(0.02, 0.05).unwrap();
    let q = bf_quad_detailed(&suff, &p, 1e-8).unwrap();
    assert!(q.rel_err < 1e-6);
    let l = bfhat(&suff, &p).unwrap().log10_bf;
    let k = bf_known_variance(&sums, &p, &[1.0, 1.0]).unwrap().log10_bf;
    assert!((q.bf.log10_bf - l).abs() < 1e-4, "{} {l}", q.bf.log10_bf);
    assert!((q.bf.log10_bf - k).abs() < 0.05, "{} {k}", q.bf.log10_bf);
}

#[test]
fn cefn_quadrature_is_finite_and_symmetric() {
    let spec = SimSpec { n: vec![50, 50], allele_freq: vec![0.3, 0.3], sigma: vec![1.0, 1.0], effect: SimEffect::PerSubgroup(vec![0.5, -0.5]) };
    let d = simulate_dataset(&spec, 5).unwrap();
    let suff: Vec<_> = d.iter().map(|x| suffstats_from_raw(&x.y, &x.g).unwrap()).collect();
    let flipped: Vec<_> = d.iter().map(|x| suffstats_from_raw(&x.y.iter().map(|v| -v).collect::<Vec<_>>(), &x.g).unwrap()).collect();
    let p = EffectPrior::cefn(hetbf::priors::Family::CefnEs, 0.5, 0.4).unwrap();
    let a = bf_quad(&suff, &p, 1e-8).unwrap().log10_bf;
    let b = bf_quad(&flipped, &p, 1e-8).unwrap().log10_bf;
    assert!(a.is_finite() && (a - b).abs() < 1e-8, "{a} {b}");
}
