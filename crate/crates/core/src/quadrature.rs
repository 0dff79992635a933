//! Globally adaptive Gauss–Kronrod (10/21-point) integration, with a mapping
//! of the real line onto (−1, 1).

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::{Error, Result};

// QUADPACK qk21 abscissae and weights.
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub abs_err: f64,
    pub evals: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-10, abs_tol: 0.0, max_intervals: 2000 }
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

fn gk21<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Segment {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[10] * fc;
    let mut gauss = 0.0;
    let mut abs_k = WGK[10] * fc.abs();
    let mut fv = [0.0; 21];
    fv[10] = fc;
    for j in 0..10 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        fv[j] = f1;
        fv[20 - j] = f2;
        kronrod += WGK[j] * (f1 + f2);
        abs_k += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kronrod;
    let mut asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        asc += WGK[j] * ((fv[j] - mean).abs() + (fv[20 - j] - mean).abs());
    }
    let value = kronrod * h;
    let asc = asc * h.abs();
    let abs_k = abs_k * h.abs();
    let mut err = ((kronrod - gauss) * h).abs();
    if asc != 0.0 && err != 0.0 {
        err = asc * (200.0 * err / asc).powf(1.5).min(1.0);
    }
    if abs_k > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * abs_k);
    }
    Segment { a, b, value, err }
}

/// Integrates `f` over the panels delimited by consecutive `breaks`.
pub fn integrate_panels<F: FnMut(f64) -> f64>(
    mut f: F,
    breaks: &[f64],
    opts: QuadOptions,
) -> Result<QuadResult> {
    if breaks.len() < 2 {
        return Err(Error::InvalidInput("need at least two break points".into()));
    }
    let mut heap = BinaryHeap::new();
    let mut value = 0.0;
    let mut err = 0.0;
    let mut evals = 0;
    for w in breaks.windows(2) {
        let s = gk21(&mut f, w[0], w[1]);
        evals += 21;
        value += s.value;
        err += s.err;
        heap.push(s);
    }
    loop {
        if !value.is_finite() {
            return Err(Error::InvalidInput("integrand produced a non-finite value".into()));
        }
        if err <= opts.abs_tol.max(opts.rel_tol * value.abs()) {
            return Ok(QuadResult { value, abs_err: err, evals });
        }
        if heap.len() >= opts.max_intervals {
            let rel = if value != 0.0 { err / value.abs() } else { err };
            return Err(Error::QuadratureTolerance(rel));
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval cannot be split further
            let rel = if value != 0.0 { err / value.abs() } else { err };
            return Err(Error::QuadratureTolerance(rel));
        }
        let l = gk21(&mut f, worst.a, mid);
        let r = gk21(&mut f, mid, worst.b);
        evals += 42;
        value += l.value + r.value - worst.value;
        err += l.err + r.err - worst.err;
        heap.push(l);
        heap.push(r);
        // re-accumulate occasionally to shed rounding drift in the running sums
        if heap.len() % 64 == 0 {
            value = heap.iter().map(|s| s.value).sum();
            err = heap.iter().map(|s| s.err).sum();
        }
    }
}

pub fn integrate<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64, opts: QuadOptions) -> Result<QuadResult> {
    integrate_panels(f, &[a, b], opts)
}

/// Integrates `f` over the real line through `x = center + scale·t/(1−|t|)`.
///
/// `t_breaks` are interior panel boundaries in `(−1, 1)`; mass concentrated
/// within a few `scale` units of `center` is resolved well.
pub fn integrate_real_line<F: FnMut(f64) -> f64>(
    mut f: F,
    center: f64,
    scale: f64,
    t_breaks: &[f64],
    opts: QuadOptions,
) -> Result<QuadResult> {
    let mut breaks = Vec::with_capacity(t_breaks.len() + 2);
    breaks.push(-1.0);
    breaks.extend(t_breaks.iter().copied().filter(|t| t.abs() < 1.0));
    breaks.push(1.0);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    integrate_panels(
        |t| {
            let d = 1.0 - t.abs();
            if d <= 0.0 {
                return 0.0;
            }
            let x = center + scale * t / d;
            let jac = scale / (d * d);
            let v = f(x);
            if v == 0.0 {
                0.0
            } else {
                v * jac
            }
        },
        &breaks,
        opts,
    )
}

/// Panel boundaries in the mapped coordinate placed at `x = center ± scale·k`.
pub fn standard_breaks() -> Vec<f64> {
    // t/(1−t) = 1, 3, 8 and their negatives
    let mut v = vec![0.0];
    for u in [1.0f64, 3.0, 8.0] {
        let t = u / (1.0 + u);
        v.push(t);
        v.push(-t);
    }
    v.sort_by(f64::total_cmp);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::norm_cdf;
    const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
    use approx::assert_relative_eq;

    #[test]
    fn polynomial_exact() {
        let r = integrate(|x| 3.0 * x * x, 0.0, 2.0, QuadOptions::default()).unwrap();
        assert_relative_eq!(r.value, 8.0, max_relative = 1e-14);
    }

    #[test]
    fn endpoint_singularity() {
        let r = integrate(|x: f64| 1.0 / x.sqrt(), 0.0, 1.0, QuadOptions { rel_tol: 1e-10, ..Default::default() })
            .unwrap();
        assert_relative_eq!(r.value, 2.0, max_relative = 1e-9);
    }

    #[test]
    fn gaussian_over_real_line() {
        let c = 3.0;
        let r = integrate_real_line(
            |x| (-0.5 * (x - c) * (x - c) / 0.04 - LN_SQRT_2PI).exp() / 0.2,
            c,
            0.2,
            &standard_breaks(),
            QuadOptions { rel_tol: 1e-12, ..Default::default() },
        )
        .unwrap();
        assert_relative_eq!(r.value, 1.0, max_relative = 1e-12);
        // half line via the same map
        let r = integrate_real_line(
            |x| if x < 1.0 { (-0.5 * x * x - LN_SQRT_2PI).exp() } else { 0.0 },
            0.0,
            1.0,
            &[0.5],
            QuadOptions { rel_tol: 1e-10, ..Default::default() },
        )
        .unwrap();
        assert_relative_eq!(r.value, norm_cdf(1.0), max_relative = 1e-9);
    }

    #[test]
    fn budget_exhaustion_reports() {
        let r = integrate(
            |x: f64| (1.0 / x).sin(),
            1e-8,
            1.0,
            QuadOptions { rel_tol: 1e-14, abs_tol: 0.0, max_intervals: 10 },
        );
        assert!(matches!(r, Err(Error::QuadratureTolerance(_))));
    }
}
