//! Bayes factors under the curved exponential family normal (CEFN) prior,
//! where subgroup effects scatter around the mean b̄ with variance tied to b̄².
//!
//! The per-subgroup precisions are handled by the same Laplace step as the
//! closed-form ABF, leaving a one-dimensional integral over b̄ that is done
//! by adaptive quadrature on the real line.

use std::f64::consts::PI;

use crate::abf::{BFResult, Method, Observations};
use crate::priors::{EffectPrior, Family};
use crate::quadrature::{integrate_real_line, standard_breaks, QuadOptions};
use crate::stats::SubgroupSummary;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CefnOptions {
    /// Use heterogeneity variance `k·b̄²` instead of `k²·b̄²`.
    pub literal_k: bool,
    /// Use `(1 + T²/(n−2))^{n/2}` for the likelihood-ratio prefactor instead of `e^{T²/2}`.
    pub sample_size_prefactor: bool,
    /// Apply the t-to-normal quantile correction to each subgroup.
    pub corrected: bool,
    pub rel_tol: f64,
}

impl Default for CefnOptions {
    fn default() -> Self {
        Self { literal_k: false, sample_size_prefactor: false, corrected: false, rel_tol: 1e-8 }
    }
}

struct Integrand {
    x: Vec<f64>,
    v: Vec<f64>,
    /// Per-subgroup `ln LR_s` replacing `x²/(2v)`.
    prefactor: Vec<f64>,
    kk: f64,
    m: f64,
}

impl Integrand {
    fn ln_at(&self, b: f64) -> f64 {
        let h = self.kk * b * b;
        let mut total = -0.5 * b * b / self.m - 0.5 * (2.0 * PI * self.m).ln();
        for ((&x, &v), &pf) in self.x.iter().zip(&self.v).zip(&self.prefactor) {
            let vh = v + h;
            let d = x - b;
            total += -0.5 * (h / v).ln_1p() - 0.5 * d * d / vh + pf;
        }
        total
    }
}

/// ABF under the CEFN prior with parameter `k` and mean-effect sd `mean_sd`.
pub fn abf_cefn(
    summaries: &[SubgroupSummary],
    k: f64,
    mean_sd: f64,
    family: Family,
    opts: CefnOptions,
) -> Result<BFResult> {
    if !(k >= 0.0) || !k.is_finite() {
        return Err(Error::InvalidInput(format!("k must be non-negative, got {k}")));
    }
    if !(mean_sd > 0.0) || !mean_sd.is_finite() {
        return Err(Error::InvalidInput(format!("mean_sd must be positive, got {mean_sd}")));
    }
    let prior = EffectPrior::cefn(family, k, mean_sd)?;
    let mut obs = Observations::new(summaries, family.base())?;
    if opts.corrected {
        obs = obs.corrected()?;
    }
    let prefactor = (0..obs.x.len())
        .map(|i| {
            if opts.sample_size_prefactor {
                let n = obs.df[i] + 2.0;
                0.5 * n * (obs.t[i] * obs.t[i] / obs.df[i]).ln_1p()
            } else {
                0.5 * obs.x[i] * obs.x[i] / obs.v[i]
            }
        })
        .collect();
    let m = mean_sd * mean_sd;
    let f = Integrand {
        kk: if opts.literal_k { k } else { k * k },
        m,
        x: obs.x,
        v: obs.v,
        prefactor,
    };

    // fixed-effect posterior of b̄ as a starting picture of where the mass sits
    let p: f64 = f.v.iter().map(|v| 1.0 / v).sum();
    let a: f64 = f.x.iter().zip(&f.v).map(|(x, v)| x / v).sum();
    let post_var = 1.0 / (p + 1.0 / m);
    let post_mean = a * post_var;
    let sd = post_var.sqrt();
    let (mut best_b, mut best) = (0.0, f.ln_at(0.0));
    let span = post_mean.abs() + 12.0 * sd;
    for i in -96..=96 {
        for b in [post_mean + sd * i as f64 / 8.0, span * i as f64 / 96.0] {
            let l = f.ln_at(b);
            if l > best {
                best = l;
                best_b = b;
            }
        }
    }
    let scale = sd.max(0.05 * best_b.abs()).max(1e-300);
    let opts_q = QuadOptions { rel_tol: opts.rel_tol, abs_tol: 0.0, max_intervals: 4000 };
    let r = integrate_real_line(|b| (f.ln_at(b) - best).exp(), best_b, scale, &standard_breaks(), opts_q)?;
    if !(r.value > 0.0) {
        return Err(Error::QuadratureTolerance(f64::INFINITY));
    }
    Ok(BFResult::from_ln(best + r.value.ln(), Method::CefnQuad, Some(prior)))
}

/// Evaluates a CEFN `EffectPrior` with default options plus the correction flag.
pub fn abf_cefn_prior(summaries: &[SubgroupSummary], prior: &EffectPrior, corrected: bool) -> Result<BFResult> {
    let k = prior
        .cefn_k
        .ok_or_else(|| Error::InvalidInput("prior is not a CEFN prior".into()))?;
    abf_cefn(summaries, k, prior.mean_sd, prior.family, CefnOptions { corrected, ..Default::default() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abf::{abf_fix, abf_prior};
    use crate::stats::summary_from_effect_se;
    use approx::assert_relative_eq;

    fn es(b: f64, d2: f64, n: usize) -> SubgroupSummary {
        let mut s = summary_from_effect_se(b, d2.sqrt(), n, Some(1.0)).unwrap();
        s.delta2 = Some(d2);
        s.b_hat = Some(b);
        s
    }

    #[test]
    fn k_zero_is_fixed_effects() {
        let s = [es(0.4, 0.02, 80), es(0.1, 0.05, 60), es(0.3, 0.03, 70)];
        for omega in [0.1, 0.4, 1.6] {
            let c = abf_cefn(&s, 0.0, omega, Family::Es, CefnOptions::default()).unwrap();
            let f = abf_fix(&s, Family::Es, omega).unwrap();
            assert!((c.log10_bf - f.log10_bf).abs() < 1e-6, "{} {}", c.log10_bf, f.log10_bf);
        }
    }

    #[test]
    fn null_signal_shrinks() {
        let s = [es(0.0, 0.02, 80), es(0.0, 0.05, 60)];
        for k in [0.0, 0.3, 1.0] {
            assert!(abf_cefn(&s, k, 0.4, Family::Es, CefnOptions::default()).unwrap().log10_bf < 0.0);
        }
    }

    #[test]
    fn matches_dense_trapezoid() {
        let s = [es(0.35, 0.03, 50), es(-0.05, 0.04, 50)];
        let (k, omega) = (0.5, 0.3);
        let got = abf_cefn(&s, k, omega, Family::Es, CefnOptions::default()).unwrap();
        let ln = |b: f64| {
            let mut t = -0.5 * b * b / (omega * omega) - 0.5 * (2.0 * PI * omega * omega).ln();
            for (x, v) in [(0.35, 0.03), (-0.05, 0.04)] {
                let h = k * k * b * b;
                t += -0.5 * ((v + h) / v).ln() - 0.5 * (x - b) * (x - b) / (v + h) + 0.5 * x * x / v;
            }
            t
        };
        let (lo, hi, n) = (-6.0, 6.0, 2_000_000);
        let dx = (hi - lo) / n as f64;
        let mut sum = 0.5 * (ln(lo).exp() + ln(hi).exp());
        for i in 1..n {
            sum += ln(lo + dx * i as f64).exp();
        }
        let reference = (sum * dx).log10();
        assert_relative_eq!(got.log10_bf, reference, epsilon = 1e-6);
    }

    #[test]
    fn sign_flip_symmetry() {
        let s = [es(0.35, 0.03, 50), es(-0.15, 0.04, 50)];
        let t = [es(-0.35, 0.03, 50), es(0.15, 0.04, 50)];
        let a = abf_cefn(&s, 0.4, 0.3, Family::Es, CefnOptions::default()).unwrap();
        let b = abf_cefn(&t, 0.4, 0.3, Family::Es, CefnOptions::default()).unwrap();
        assert_relative_eq!(a.log10_bf, b.log10_bf, epsilon = 1e-9);
    }

    #[test]
    fn heterogeneity_direction() {
        let opposite = [es(0.5, 0.01, 200), es(-0.5, 0.01, 200)];
        let lo = abf_cefn(&opposite, 0.1, 0.5, Family::Es, CefnOptions::default()).unwrap().log10_bf;
        let hi = abf_cefn(&opposite, 2.0, 0.5, Family::Es, CefnOptions::default()).unwrap().log10_bf;
        assert!(hi > lo);
        let same = [es(0.5, 0.01, 200), es(0.5, 0.01, 200)];
        let at0 = abf_cefn(&same, 0.0, 0.5, Family::Es, CefnOptions::default()).unwrap().log10_bf;
        let sup = (0..=50)
            .map(|i| abf_cefn(&same, 0.01 * i as f64, 0.5, Family::Es, CefnOptions::default()).unwrap().log10_bf)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(sup - at0 < 0.1);
    }

    #[test]
    fn options() {
        let s = [es(0.4, 0.02, 30), es(0.2, 0.05, 30)];
        let base = abf_cefn(&s, 0.3, 0.4, Family::Es, CefnOptions::default()).unwrap().log10_bf;
        // k·b̄² with k = 0.09 is k²·b̄² with k = 0.3
        let lit = abf_cefn(&s, 0.09, 0.4, Family::Es, CefnOptions { literal_k: true, ..Default::default() })
            .unwrap()
            .log10_bf;
        assert_relative_eq!(lit, base, epsilon = 1e-9);
        let ss = abf_cefn(&s, 0.0, 0.4, Family::Es, CefnOptions { sample_size_prefactor: true, ..Default::default() })
            .unwrap()
            .log10_bf;
        let fix = abf_prior(&s, &EffectPrior::es(0.0, 0.4).unwrap(), false).unwrap().log10_bf;
        let shift: f64 = s
            .iter()
            .map(|x| 15.0 * (x.t_stat * x.t_stat / 28.0).ln_1p() - 0.5 * x.t_stat * x.t_stat)
            .sum();
        assert_relative_eq!(ss - fix, shift / std::f64::consts::LN_10, epsilon = 1e-7);
        assert!(abf_cefn(&s, 0.3, 0.0, Family::Es, CefnOptions::default()).is_err());
    }
}
