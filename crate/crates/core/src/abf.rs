//! Closed-form approximate Bayes factors, their fixed-effect and
//! maximum-heterogeneity corners, the small-sample correction, and grid
//! averaging.
//!
//! Everything is carried as natural logs internally; `log10_bf` appears only
//! on [`BFResult`].

use std::f64::consts::LN_10;

use crate::priors::{EffectPrior, Family, PriorGrid};
use crate::special::{ln_weighted_sum_exp, t_to_normal};
use crate::stats::SubgroupSummary;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Abf,
    AbfCorrected,
    Laplace,
    CefnQuad,
    OracleQuad,
    CcAbf,
    KnownVariance,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Abf => "abf",
            Method::AbfCorrected => "abf_corrected",
            Method::Laplace => "laplace",
            Method::CefnQuad => "cefn_quad",
            Method::OracleQuad => "oracle_quad",
            Method::CcAbf => "cc_abf",
            Method::KnownVariance => "known_variance",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BFResult {
    pub log10_bf: f64,
    pub method: Method,
    /// The single prior evaluated, `None` for grid averages.
    pub prior: Option<EffectPrior>,
    /// Set when the requested method failed and a corrected ABF was substituted.
    pub fallback: bool,
}

impl BFResult {
    pub fn from_ln(ln_bf: f64, method: Method, prior: Option<EffectPrior>) -> Self {
        Self { log10_bf: ln_bf / LN_10, method, prior, fallback: false }
    }

    pub fn ln_bf(&self) -> f64 {
        self.log10_bf * LN_10
    }
}

/// Natural-log single-study ABF.
#[inline]
pub fn ln_abf_single(t2: f64, se2: f64, prior_var: f64) -> f64 {
    let r = prior_var / (se2 + prior_var);
    -0.5 * (prior_var / se2).ln_1p() + 0.5 * t2 * r
}

/// Single-study ABF for statistic `t2 = estimate² / se2`, as log10.
pub fn abf_single(t2: f64, se2: f64, prior_var: f64) -> Result<f64> {
    if !(se2 > 0.0) || prior_var < 0.0 || t2 < 0.0 || prior_var.is_nan() || t2.is_nan() {
        return Err(Error::InvalidInput(format!(
            "abf_single needs t2 >= 0, se2 > 0, prior_var >= 0 (got {t2}, {se2}, {prior_var})"
        )));
    }
    Ok(ln_abf_single(t2, se2, prior_var) / LN_10)
}

/// Generic product-form ABF over observations `x` with sampling variances
/// `v`, per-observation heterogeneity variances `h` and mean-effect variance
/// `m`.
///
/// The meta term and each per-subgroup term are single-study ABFs, so with
/// `m = 0` the result is literally the sum of the per-subgroup terms.
pub fn ln_abf_generic(x: &[f64], v: &[f64], h: &[f64], m: f64) -> f64 {
    let mut p = 0.0;
    let mut a = 0.0;
    let mut per = 0.0;
    for ((&xs, &vs), &hs) in x.iter().zip(v).zip(h) {
        let w = 1.0 / (vs + hs);
        p += w;
        a += xs * w;
        per += ln_abf_single(xs * xs / vs, vs, hs);
    }
    if m == 0.0 {
        return per;
    }
    let zeta2 = 1.0 / p;
    let bar = a * zeta2;
    ln_abf_single(bar * bar / zeta2, zeta2, m) + per
}

/// Informative observations on the scale of `family`, with degrees of freedom.
pub(crate) struct Observations {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub t: Vec<f64>,
    pub df: Vec<f64>,
}

impl Observations {
    pub fn new(summaries: &[SubgroupSummary], family: Family) -> Result<Self> {
        let mut obs = Observations { x: vec![], v: vec![], t: vec![], df: vec![] };
        for (i, s) in summaries.iter().enumerate() {
            if !s.informative {
                continue;
            }
            let (x, v) = if family.is_standardized() { s.es_pair(i)? } else { s.ee_pair() };
            obs.x.push(x);
            obs.v.push(v);
            obs.t.push(s.t_stat);
            obs.df.push(s.df());
        }
        if obs.x.is_empty() {
            return Err(Error::NoInformativeSubgroup);
        }
        Ok(obs)
    }

    /// Replaces each estimate by `√v · q(T)` where `q` maps `t_{n−2}` quantiles to normal ones.
    pub fn corrected(mut self) -> Result<Self> {
        for i in 0..self.x.len() {
            if self.df[i] <= 2.0 {
                return Err(Error::TooFewObservations { needed: 5, got: self.df[i] as usize + 2 });
            }
            let q = t_to_normal(self.t[i], self.df[i]);
            self.x[i] = self.v[i].sqrt() * q;
            self.t[i] = q;
        }
        Ok(self)
    }

    pub fn ln_abf(&self, het_var: f64, mean_var: f64) -> f64 {
        let h = vec![het_var; self.x.len()];
        ln_abf_generic(&self.x, &self.v, &h, mean_var)
    }
}

fn single_prior_abf(
    summaries: &[SubgroupSummary],
    prior: EffectPrior,
    corrected: bool,
) -> Result<BFResult> {
    if prior.family.is_cefn() {
        return Err(Error::Unsupported("CEFN priors are evaluated by cefn::abf_cefn".into()));
    }
    let mut obs = Observations::new(summaries, prior.family)?;
    let method = if corrected {
        obs = obs.corrected()?;
        Method::AbfCorrected
    } else {
        Method::Abf
    };
    let ln = obs.ln_abf(prior.het_sd.powi(2), prior.mean_sd.powi(2));
    Ok(BFResult::from_ln(ln, method, Some(prior)))
}

pub fn abf_es(summaries: &[SubgroupSummary], phi: f64, omega: f64) -> Result<BFResult> {
    single_prior_abf(summaries, EffectPrior::es(phi, omega)?, false)
}

pub fn abf_ee(summaries: &[SubgroupSummary], psi: f64, w: f64) -> Result<BFResult> {
    single_prior_abf(summaries, EffectPrior::ee(psi, w)?, false)
}

/// ABF under a single non-CEFN prior, optionally with the small-sample correction.
pub fn abf_prior(summaries: &[SubgroupSummary], prior: &EffectPrior, corrected: bool) -> Result<BFResult> {
    single_prior_abf(summaries, *prior, corrected)
}

pub fn abf_fix(summaries: &[SubgroupSummary], family: Family, mean_sd: f64) -> Result<BFResult> {
    single_prior_abf(summaries, EffectPrior::new(family.base(), 0.0, mean_sd)?, false)
}

pub fn abf_maxh(summaries: &[SubgroupSummary], family: Family, het_sd: f64) -> Result<BFResult> {
    single_prior_abf(summaries, EffectPrior::new(family.base(), het_sd, 0.0)?, false)
}

pub fn abf_corrected(
    summaries: &[SubgroupSummary],
    het_sd: f64,
    mean_sd: f64,
    family: Family,
) -> Result<BFResult> {
    single_prior_abf(summaries, EffectPrior::new(family.base(), het_sd, mean_sd)?, true)
}

/// Fixed-effect ABF under the implicit prior `ω = K·ζ`, where ζ is the
/// standard error of the pooled estimate.
pub fn abf_fix_implicit(summaries: &[SubgroupSummary], family: Family, k: f64) -> Result<BFResult> {
    let obs = Observations::new(summaries, family)?;
    let zeta2 = 1.0 / obs.v.iter().map(|v| 1.0 / v).sum::<f64>();
    let ln = obs.ln_abf(0.0, k * k * zeta2);
    Ok(BFResult::from_ln(ln, Method::Abf, None))
}

/// Max-heterogeneity ABF under the implicit prior `φ²_s = K·δ²_s`.
pub fn abf_maxh_implicit(summaries: &[SubgroupSummary], family: Family, k: f64) -> Result<BFResult> {
    let obs = Observations::new(summaries, family)?;
    let h: Vec<f64> = obs.v.iter().map(|v| k * v).collect();
    let ln = ln_abf_generic(&obs.x, &obs.v, &h, 0.0);
    Ok(BFResult::from_ln(ln, Method::Abf, None))
}

/// Weighted average of Bayes factors given as `(log10 BF, weight)`.
pub fn abf_average(results: &[(f64, f64)]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::InvalidInput("cannot average an empty list of Bayes factors".into()));
    }
    if results.iter().any(|&(l, w)| !(w > 0.0) || l.is_nan()) {
        return Err(Error::InvalidInput("weights must be positive and log BFs not NaN".into()));
    }
    let total: f64 = results.iter().map(|r| r.1).sum();
    if results.len() == 1 {
        return Ok(results[0].0);
    }
    let ln = ln_weighted_sum_exp(results.iter().map(|&(l, w)| (l * LN_10, w / total)));
    let out = ln / LN_10;
    // rounding can push the average a hair outside the component range
    let (lo, hi) = results
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.0), hi.max(r.0)));
    Ok(out.clamp(lo, hi))
}

/// Grid-averaged ABF over non-CEFN grid points.
pub fn abf_grid(summaries: &[SubgroupSummary], grid: &PriorGrid, corrected: bool) -> Result<BFResult> {
    let comps = grid
        .points()
        .iter()
        .map(|(p, w)| Ok((single_prior_abf(summaries, *p, corrected)?.log10_bf, *w)))
        .collect::<Result<Vec<_>>>()?;
    let method = if corrected { Method::AbfCorrected } else { Method::Abf };
    Ok(BFResult { log10_bf: abf_average(&comps)?, method, prior: None, fallback: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::summary_from_effect_se;
    use approx::assert_relative_eq;

    fn es(b: f64, d2: f64) -> SubgroupSummary {
        let mut s = summary_from_effect_se(b, d2.sqrt(), 100, Some(1.0)).unwrap();
        s.delta2 = Some(d2);
        s.b_hat = Some(b);
        s
    }

    #[test]
    fn single_study_values() {
        assert_relative_eq!(abf_single(0.0, 2.0, 2.0).unwrap(), -0.150514997831990597, max_relative = 1e-14);
        assert_relative_eq!(abf_single(25.0, 1.0, 1.0).unwrap(), (6.25 - 0.5 * 2f64.ln()) / LN_10, max_relative = 1e-14);
        assert_eq!(abf_single(13.0, 0.7, 0.0).unwrap(), 0.0);
        assert!(abf_single(1.0, 0.0, 1.0).is_err());
        assert!(abf_single(1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn product_form() {
        let s = [es(3.0, 1.0), es(3.0, 1.0)];
        // √(1/3)·e⁶
        let v = abf_es(&s, 0.0, 1.0).unwrap().log10_bf;
        assert_relative_eq!(v, ((1.0f64 / 3.0).sqrt() * 6f64.exp()).log10(), max_relative = 1e-14);
        assert_relative_eq!(v, 2.367206, epsilon = 5e-7);
        let v = abf_es(&s, 1.0, 0.0).unwrap().log10_bf;
        assert_relative_eq!(v, 2.0 * abf_single(9.0, 1.0, 1.0).unwrap(), max_relative = 1e-14);
        assert_relative_eq!(v, 1.653295, epsilon = 5e-7);
        assert_eq!(abf_es(&s, 0.0, 0.0).unwrap().log10_bf, 0.0);
    }

    #[test]
    fn non_informative_contributes_nothing() {
        let s = [es(3.0, 1.0), es(-1.0, 0.5)];
        let mut t = s.to_vec();
        t.push(SubgroupSummary::non_informative(30));
        for (phi, om) in [(0.0, 1.0), (0.5, 0.5), (1.0, 0.0)] {
            assert_eq!(abf_es(&s, phi, om).unwrap().log10_bf, abf_es(&t, phi, om).unwrap().log10_bf);
        }
        assert!(matches!(
            abf_es(&[SubgroupSummary::non_informative(5)], 1.0, 1.0),
            Err(Error::NoInformativeSubgroup)
        ));
    }

    #[test]
    fn corners() {
        let s = [es(2.0, 0.3), es(-0.4, 0.2), es(1.1, 0.9)];
        let v = abf_maxh(&s, Family::Es, 0.7).unwrap().log10_bf;
        let sum: f64 = s.iter().map(|x| abf_single(x.t_stat.powi(2), x.delta2.unwrap(), 0.49).unwrap()).sum();
        assert!((v - sum).abs() <= 1e-12);
        let one = abf_fix(&s[..1], Family::Es, 0.8).unwrap().log10_bf;
        assert_relative_eq!(one, abf_single(s[0].t_stat.powi(2), 0.3, 0.64).unwrap(), max_relative = 1e-14);
    }

    #[test]
    fn es_needs_standardized_input() {
        let s = [summary_from_effect_se(1.0, 0.5, 100, None).unwrap()];
        assert!(matches!(abf_es(&s, 0.0, 1.0), Err(Error::MissingStandardized(0))));
        assert!(abf_ee(&s, 0.0, 1.0).is_ok());
    }

    #[test]
    fn correction() {
        let mut s = es(0.003, 1e-6);
        s.n = 1_000_000;
        s.t_stat = 3.0;
        let a = abf_es(&[s], 0.0, 0.1).unwrap().log10_bf;
        let b = abf_corrected(&[s], 0.0, 0.1, Family::Es).unwrap().log10_bf;
        assert!((a - b).abs() < 1e-3, "{a} {b}");
        let mut z = es(0.0, 0.1);
        z.n = 10;
        z.t_stat = 0.0;
        assert_eq!(
            abf_corrected(&[z, z], 0.2, 0.3, Family::Es).unwrap().log10_bf,
            abf_es(&[z, z], 0.2, 0.3).unwrap().log10_bf
        );
        z.n = 4;
        assert!(abf_corrected(&[z], 0.2, 0.3, Family::Es).is_err());
    }

    #[test]
    fn averaging() {
        assert_eq!(abf_average(&[(3.5, 1.0)]).unwrap(), 3.5);
        assert_relative_eq!(abf_average(&[(2.0, 0.3), (2.0, 0.7)]).unwrap(), 2.0, max_relative = 1e-15);
        let v = abf_average(&[(1e4, 0.5), (-1e4, 0.5)]).unwrap();
        assert_relative_eq!(v, 1e4 - 2f64.log10(), max_relative = 1e-15);
        assert!(abf_average(&[]).is_err());
    }
}
