//! Reference machinery: Bayes factors by direct numerical integration,
//! simulation of subgroup data, and Monte-Carlo estimates of E(BF | H0).
//!
//! Under the null the subgroup precisions are independent
//! `Gamma(n/2, RSS0/2)` variables, and given the mean effect b̄ the
//! alternative likelihood ratio factorizes over subgroups. The exact Bayes
//! factor is therefore
//!
//! ```text
//! BF = ∫ N(b̄; 0, ω²) Π_s E_τs[ L_s(τ_s, b̄) ] db̄
//! ```
//!
//! which is evaluated as an outer adaptive integral over b̄ around inner
//! adaptive integrals over `ln τ_s`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::abf::{abf_corrected, abf_prior, ln_abf_generic, BFResult, Method};
use crate::par::{ordered_map_range, Parallelism};
use crate::priors::{EffectPrior, Family};
use crate::quadrature::{integrate_real_line, standard_breaks, QuadOptions};
use crate::laplace::bf_known_variance;
use crate::stats::{suffstats_from_raw, summarize, SubgroupSuffStats, SubgroupSummary};
use crate::{Error, Result};

pub const MAX_QUAD_SUBGROUPS: usize = 3;
pub const DEFAULT_REL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleResult {
    pub bf: BFResult,
    /// Estimated relative error of the Bayes factor (not of its log).
    pub rel_err: f64,
}

struct Sub {
    a: f64,
    rate: f64,
    ln_norm: f64,
    beta: f64,
    delta2: f64,
    mode_u: f64,
    sd_u: f64,
}

struct Problem {
    subs: Vec<Sub>,
    standardized: bool,
    m: f64,
    het: f64,
    cefn_kk: Option<f64>,
    inner_opts: QuadOptions,
}

impl Problem {
    fn het_at(&self, b: f64) -> f64 {
        match self.cefn_kk {
            Some(kk) => kk * b * b,
            None => self.het,
        }
    }

    /// `ln L_s(e^u, b̄)` plus the log Gamma density of `u = ln τ`. For
    /// standardized effects the term `−b̄²/2(δ²+h)` does not depend on `u` and
    /// is left out here (see [`Problem::ln_r`]).
    fn inner_log(&self, s: &Sub, u: f64, b: f64, h: f64) -> f64 {
        let tau = u.exp();
        let ln_l = if self.standardized {
            let (x, v) = (s.beta * tau.sqrt(), s.delta2);
            -0.5 * (h / v).ln_1p() + x * b / (v + h) + 0.5 * x * x * h / (v * (v + h))
        } else {
            let (x, v) = (s.beta, s.delta2 / tau);
            let d = x - b;
            -0.5 * (h / v).ln_1p() - 0.5 * d * d / (v + h) + 0.5 * x * x / v
        };
        let r = s.a * u - s.rate * tau + s.ln_norm + ln_l;
        if r.is_nan() { f64::NEG_INFINITY } else { r }
    }

    /// `ln E_τ[L_s(τ, b̄)]` and its estimated relative error.
    fn ln_r(&self, s: &Sub, b: f64) -> Result<(f64, f64)> {
        let h = self.het_at(b);
        let g = |u: f64| self.inner_log(s, u, b, h);
        let step = 0.5 * s.sd_u;
        let mut best_u = s.mode_u;
        let mut best = g(best_u);
        for k in -16..=16 {
            let u = s.mode_u + k as f64 * step;
            let l = g(u);
            if l > best {
                best = l;
                best_u = u;
            }
        }
        for dir in [-1.0, 1.0] {
            for _ in 0..400 {
                let u = best_u + dir * step;
                let l = g(u);
                if !(l > best) {
                    break;
                }
                best = l;
                best_u = u;
            }
        }
        if best == f64::NEG_INFINITY {
            return Ok((best, 0.0));
        }
        let (mut lo, mut hi) = (best_u - step, best_u + step);
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..60 {
            let u1 = hi - phi * (hi - lo);
            let u2 = lo + phi * (hi - lo);
            if g(u1) > g(u2) {
                hi = u2;
            } else {
                lo = u1;
            }
        }
        let um = 0.5 * (lo + hi);
        if g(um) > best {
            best = g(um);
            best_u = um;
        }
        let e = 1e-3 * s.sd_u;
        let curv = -(g(best_u + e) - 2.0 * best + g(best_u - e)) / (e * e);
        let scale = if curv.is_finite() && curv > 0.0 { curv.sqrt().recip() } else { s.sd_u };
        // the log integrand carries roundoff of order ε·|best|
        let mut opts = self.inner_opts;
        opts.rel_tol = opts.rel_tol.max(64.0 * f64::EPSILON * (1.0 + best.abs()));
        let r = integrate_real_line(|u| (g(u) - best).exp(), best_u, scale, &standard_breaks(), opts)?;
        let shift = if self.standardized { -0.5 * b * b / (s.delta2 + h) } else { 0.0 };
        Ok((best + r.value.ln() + shift, r.abs_err / r.value))
    }
}

fn setup(suff: &[SubgroupSuffStats], prior: &EffectPrior, rel_tol: f64) -> Result<Problem> {
    let mut subs = Vec::new();
    for s in suff {
        if s.is_monomorphic() {
            continue;
        }
        if s.n < 3 {
            return Err(Error::TooFewObservations { needed: 3, got: s.n });
        }
        let (sxx, sxy, rss0) = s.centered();
        if !(rss0 > 0.0) {
            return Err(Error::DegenerateFit);
        }
        let a = 0.5 * s.n as f64;
        let rate = 0.5 * rss0;
        subs.push(Sub {
            a,
            rate,
            ln_norm: a * rate.ln() - ln_gamma(a),
            beta: sxy / sxx,
            delta2: 1.0 / sxx,
            mode_u: (a / rate).ln(),
            sd_u: 1.0 / a.sqrt(),
        });
    }
    if subs.is_empty() {
        return Err(Error::NoInformativeSubgroup);
    }
    if subs.len() > MAX_QUAD_SUBGROUPS {
        return Err(Error::TooManySubgroups(subs.len(), MAX_QUAD_SUBGROUPS));
    }
    let (standardized, cefn_kk) = match prior.family {
        Family::Es => (true, None),
        Family::Ee => (false, None),
        Family::CefnEs => (true, prior.cefn_k.map(|k| k * k)),
        Family::CefnEe => (false, prior.cefn_k.map(|k| k * k)),
    };
    Ok(Problem {
        subs,
        standardized,
        m: prior.mean_sd * prior.mean_sd,
        het: prior.het_sd * prior.het_sd,
        cefn_kk,
        inner_opts: QuadOptions { rel_tol: rel_tol * 1e-2, abs_tol: 0.0, max_intervals: 500 },
    })
}

/// Bayes factor by adaptive quadrature of the exact integrals, with error estimate.
pub fn bf_quad_detailed(suff: &[SubgroupSuffStats], prior: &EffectPrior, rel_tol: f64) -> Result<OracleResult> {
    if !(rel_tol > 0.0) {
        return Err(Error::InvalidInput("rel_tol must be positive".into()));
    }
    let p = setup(suff, prior, rel_tol)?;
    if prior.is_null() {
        return Ok(OracleResult { bf: BFResult::from_ln(0.0, Method::OracleQuad, Some(*prior)), rel_err: 0.0 });
    }
    if p.m == 0.0 {
        // max heterogeneity: b̄ ≡ 0 and the integral factorizes
        let mut ln = 0.0;
        let mut err = 0.0;
        for s in &p.subs {
            let (l, e) = p.ln_r(s, 0.0)?;
            ln += l;
            err += e;
        }
        return Ok(OracleResult { bf: BFResult::from_ln(ln, Method::OracleQuad, Some(*prior)), rel_err: err });
    }

    // Surrogate at the REML precisions to place the outer panels.
    let tau_hat: Vec<f64> = suff
        .iter()
        .filter(|s| !s.is_monomorphic())
        .map(|s| {
            let (sxx, sxy, rss0) = s.centered();
            (s.n as f64 - 2.0) / (rss0 - sxy * sxy / sxx)
        })
        .collect();
    let (xs, vs): (Vec<f64>, Vec<f64>) = p
        .subs
        .iter()
        .zip(&tau_hat)
        .map(|(s, &t)| if p.standardized { (s.beta * t.sqrt(), s.delta2) } else { (s.beta, s.delta2 / t) })
        .unzip();
    let surrogate = |b: f64| {
        let h = p.het_at(b);
        let mut t = -0.5 * b * b / p.m;
        for (&x, &v) in xs.iter().zip(&vs) {
            t += -0.5 * (h / v).ln_1p() - 0.5 * (x - b) * (x - b) / (v + h);
        }
        t
    };
    let prec: f64 = vs.iter().map(|v| 1.0 / (v + p.het)).sum::<f64>() + 1.0 / p.m;
    let sd0 = (1.0 / prec).sqrt();
    let mean0 = xs.iter().zip(&vs).map(|(x, v)| x / (v + p.het)).sum::<f64>() / prec;
    let span = mean0.abs() + 12.0 * sd0;
    let (mut center, mut best) = (0.0, surrogate(0.0));
    for i in -128..=128 {
        for b in [mean0 + sd0 * i as f64 / 8.0, span * i as f64 / 128.0] {
            let l = surrogate(b);
            if l > best {
                best = l;
                center = b;
            }
        }
    }
    let scale = sd0.max(0.05 * center.abs());

    let mut first_err: Option<Error> = None;
    let mut inner_err: f64 = 0.0;
    let ln_outer = |b: f64, first_err: &mut Option<Error>, inner_err: &mut f64| -> f64 {
        let mut t = -0.5 * b * b / p.m - 0.5 * (2.0 * PI * p.m).ln();
        for s in &p.subs {
            match p.ln_r(s, b) {
                Ok((l, e)) => {
                    t += l;
                    *inner_err = inner_err.max(e);
                }
                Err(e) => {
                    first_err.get_or_insert(e);
                    return f64::NEG_INFINITY;
                }
            }
        }
        t
    };
    let offset = ln_outer(center, &mut first_err, &mut inner_err);
    if let Some(e) = first_err.take() {
        return Err(e);
    }
    let r = integrate_real_line(
        |b| (ln_outer(b, &mut first_err, &mut inner_err) - offset).exp(),
        center,
        scale,
        &standard_breaks(),
        QuadOptions { rel_tol, abs_tol: 0.0, max_intervals: 2000 },
    )?;
    if let Some(e) = first_err {
        return Err(e);
    }
    let rel_err = r.abs_err / r.value + p.subs.len() as f64 * inner_err;
    Ok(OracleResult { bf: BFResult::from_ln(offset + r.value.ln(), Method::OracleQuad, Some(*prior)), rel_err })
}

pub fn bf_quad(suff: &[SubgroupSuffStats], prior: &EffectPrior, rel_tol: f64) -> Result<BFResult> {
    bf_quad_detailed(suff, prior, rel_tol).map(|r| r.bf)
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimEffect {
    Null,
    /// Standardized effects `b_s ~ N(b̄, φ²)`, so `β_s = σ_s b_s`.
    Es { bbar: f64, phi: f64 },
    /// Unstandardized effects `β_s ~ N(β̄, ψ²)`.
    Ee { beta_bar: f64, psi: f64 },
    /// Fixed standardized effect per subgroup.
    PerSubgroup(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSpec {
    pub n: Vec<usize>,
    pub allele_freq: Vec<f64>,
    pub sigma: Vec<f64>,
    pub effect: SimEffect,
}

impl SimSpec {
    pub fn null(n: Vec<usize>, allele_freq: Vec<f64>) -> Self {
        let s = n.len();
        Self { n, allele_freq, sigma: vec![1.0; s], effect: SimEffect::Null }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSubgroup {
    pub y: Vec<f64>,
    pub g: Vec<f64>,
    /// True unstandardized effect.
    pub beta: f64,
}

fn validate(spec: &SimSpec) -> Result<()> {
    let s = spec.n.len();
    if spec.allele_freq.len() != s {
        return Err(Error::LengthMismatch(spec.allele_freq.len(), s));
    }
    if spec.sigma.len() != s {
        return Err(Error::LengthMismatch(spec.sigma.len(), s));
    }
    if spec.allele_freq.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
        return Err(Error::InvalidInput("allele frequencies must lie in (0, 1)".into()));
    }
    if spec.sigma.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::InvalidInput("residual sds must be positive".into()));
    }
    if spec.n.iter().any(|&n| n < 3) {
        return Err(Error::TooFewObservations { needed: 3, got: *spec.n.iter().min().unwrap_or(&0) });
    }
    if let SimEffect::PerSubgroup(b) = &spec.effect {
        if b.len() != s {
            return Err(Error::LengthMismatch(b.len(), s));
        }
    }
    Ok(())
}

/// Simulates genotypes at Hardy–Weinberg proportions and phenotypes from the linear model.
pub fn simulate_with_rng<R: Rng>(spec: &SimSpec, rng: &mut R) -> Result<Vec<SimSubgroup>> {
    validate(spec)?;
    let s = spec.n.len();
    let betas: Vec<f64> = match &spec.effect {
        SimEffect::Null => vec![0.0; s],
        SimEffect::Es { bbar, phi } => (0..s)
            .map(|i| spec.sigma[i] * (bbar + phi * rng.sample::<f64, _>(StandardNormal)))
            .collect(),
        SimEffect::Ee { beta_bar, psi } => {
            (0..s).map(|_| beta_bar + psi * rng.sample::<f64, _>(StandardNormal)).collect()
        }
        SimEffect::PerSubgroup(b) => b.iter().zip(&spec.sigma).map(|(b, s)| b * s).collect(),
    };
    let mut out = Vec::with_capacity(s);
    for i in 0..s {
        let binom = Binomial::new(2, spec.allele_freq[i]).map_err(|e| Error::InvalidInput(e.to_string()))?;
        let g: Vec<f64> = (0..spec.n[i]).map(|_| binom.sample(rng) as f64).collect();
        let y: Vec<f64> = g
            .iter()
            .map(|&gi| betas[i] * gi + spec.sigma[i] * rng.sample::<f64, _>(StandardNormal))
            .collect();
        out.push(SimSubgroup { y, g, beta: betas[i] });
    }
    Ok(out)
}

pub fn simulate_dataset(spec: &SimSpec, seed: u64) -> Result<Vec<SimSubgroup>> {
    simulate_with_rng(spec, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Independent generator for replicate `index` derived from `seed`.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum McVariant {
    /// Exact BF with the true residual sd.
    KnownVariance,
    Abf,
    Corrected,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum McPrior {
    Prior(EffectPrior),
    /// Max-heterogeneity prior with `φ²_s = K·δ²_s`.
    MaxHImplicit(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct McModel {
    pub variant: McVariant,
    pub prior: McPrior,
    pub allele_freq: f64,
}

fn null_bf(model: &McModel, summaries: &[SubgroupSummary]) -> Result<f64> {
    if summaries.iter().all(|s| !s.informative) {
        return Ok(0.0);
    }
    let ln = match (model.prior, model.variant) {
        (McPrior::Prior(p), McVariant::KnownVariance) => {
            bf_known_variance(summaries, &p, &vec![1.0; summaries.len()])?.ln_bf()
        }
        (McPrior::Prior(p), McVariant::Abf) => abf_prior(summaries, &p, false)?.ln_bf(),
        (McPrior::Prior(p), McVariant::Corrected) => {
            abf_corrected(summaries, p.het_sd, p.mean_sd, p.family)?.ln_bf()
        }
        (McPrior::MaxHImplicit(k), variant) => {
            let mut x = Vec::new();
            let mut v = Vec::new();
            for s in summaries.iter().filter(|s| s.informative) {
                let s = if variant == McVariant::KnownVariance { s.with_sigma(1.0) } else { *s };
                let (b, d2) = s.es_pair(0)?;
                let b = if variant == McVariant::Corrected {
                    d2.sqrt() * crate::special::t_to_normal(s.t_stat, s.df())
                } else {
                    b
                };
                x.push(b);
                v.push(d2);
            }
            let h: Vec<f64> = v.iter().map(|d| k * d).collect();
            ln_abf_generic(&x, &v, &h, 0.0)
        }
    };
    Ok(ln)
}

/// Mean and Monte-Carlo standard error of the BF over simulated null data
/// with unit residual variance.
pub fn h0_expectation_mc(
    model: &McModel,
    n_s: &[usize],
    replicates: usize,
    seed: u64,
    par: Parallelism,
) -> Result<(f64, f64)> {
    if replicates < 10_000 {
        return Err(Error::InvalidInput(format!("need at least 10^4 replicates, got {replicates}")));
    }
    let spec = SimSpec::null(n_s.to_vec(), vec![model.allele_freq; n_s.len()]);
    validate(&spec)?;
    let values = ordered_map_range(replicates, par, |i| -> Result<f64> {
        let mut rng = replicate_rng(seed, i as u64);
        let data = simulate_with_rng(&spec, &mut rng)?;
        let summaries = data
            .iter()
            .map(|d| summarize(&suffstats_from_raw(&d.y, &d.g)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(null_bf(model, &summaries)?.exp())
    });
    let values = values.into_iter().collect::<Result<Vec<f64>>>()?;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}
