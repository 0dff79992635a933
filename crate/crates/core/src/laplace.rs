//! Laplace approximation of the Bayes factor integrals over subgroup
//! residual precisions τ_s, and the exact Bayes factor when the residual
//! variances are known.
//!
//! The optimization runs in `u = ln τ`. Both integrals are approximated by
//! `(2π)^{S/2} |H_τ|^{-1/2} K(τ̂)`, where `H_τ` is the Hessian of `ln K` in
//! τ, evaluated through its relation to the Hessian in `u` at a stationary
//! point.

use std::f64::consts::PI;

use crate::abf::{abf_corrected, abf_prior, ln_abf_generic, BFResult, Method};
use crate::priors::{EffectPrior, Family};
use crate::stats::{SubgroupSuffStats, SubgroupSummary};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionPoint {
    pub log_tau: Vec<f64>,
    pub objective: f64,
    pub hessian_logdet: f64,
    pub iterations: usize,
}

/// Per-subgroup quantities the integrands depend on.
#[derive(Debug, Clone, Copy)]
struct Reg {
    half_n: f64,
    rss0: f64,
    rss1: f64,
    beta: f64,
    delta2: f64,
}

fn regs(suff: &[SubgroupSuffStats], skip_monomorphic: bool) -> Result<Vec<Reg>> {
    let mut out = Vec::with_capacity(suff.len());
    for (i, s) in suff.iter().enumerate() {
        if s.n < 3 {
            return Err(Error::TooFewObservations { needed: 3, got: s.n });
        }
        if s.is_monomorphic() {
            if skip_monomorphic {
                continue;
            }
            return Err(Error::InvalidInput(format!("subgroup {i} is non-informative")));
        }
        let (sxx, sxy, rss0) = s.centered();
        let rss1 = rss0 - sxy * sxy / sxx;
        if rss1 <= 1e-13 * rss0.max(f64::MIN_POSITIVE) {
            return Err(Error::DegenerateFit);
        }
        out.push(Reg { half_n: 0.5 * s.n as f64, rss0, rss1, beta: sxy / sxx, delta2: 1.0 / sxx });
    }
    if out.is_empty() {
        return Err(Error::NoInformativeSubgroup);
    }
    Ok(out)
}

fn check_prior(prior: &EffectPrior) -> Result<(bool, f64, f64)> {
    match prior.family {
        Family::Es => Ok((true, prior.het_sd.powi(2), prior.mean_sd.powi(2))),
        Family::Ee => Ok((false, prior.het_sd.powi(2), prior.mean_sd.powi(2))),
        _ => Err(Error::Unsupported("the Laplace route covers ES and EE priors only".into())),
    }
}

/// Objective `ln K_Ha(e^u)` (or `ln K_H0` when `prior` is `None`) and its gradient in `u`.
struct Objective {
    regs: Vec<Reg>,
    standardized: bool,
    het: f64,
    mean: f64,
    null: bool,
    x: Vec<f64>,
    v: Vec<f64>,
    h: Vec<f64>,
}

impl Objective {
    fn new(regs: Vec<Reg>, prior: Option<&EffectPrior>) -> Result<Self> {
        let s = regs.len();
        let (standardized, het, mean, null) = match prior {
            Some(p) => {
                let (st, h, m) = check_prior(p)?;
                (st, h, m, h == 0.0 && m == 0.0)
            }
            None => (true, 0.0, 0.0, true),
        };
        Ok(Self { regs, standardized, het, mean, null, x: vec![0.0; s], v: vec![0.0; s], h: vec![het; s] })
    }

    fn fill(&mut self, u: &[f64]) {
        for (i, r) in self.regs.iter().enumerate() {
            let tau = u[i].exp();
            if self.standardized {
                self.x[i] = r.beta * tau.sqrt();
                self.v[i] = r.delta2;
            } else {
                self.x[i] = r.beta;
                self.v[i] = r.delta2 / tau;
            }
        }
    }

    fn value(&mut self, u: &[f64]) -> f64 {
        let mut f = 0.0;
        for (r, &ui) in self.regs.iter().zip(u) {
            f += (r.half_n - 1.0) * ui - 0.5 * ui.exp() * r.rss0;
        }
        if self.null {
            return f;
        }
        self.fill(u);
        f + ln_abf_generic(&self.x, &self.v, &self.h, self.mean)
    }

    fn gradient(&mut self, u: &[f64], g: &mut [f64]) {
        for (i, r) in self.regs.iter().enumerate() {
            g[i] = (r.half_n - 1.0) - 0.5 * u[i].exp() * r.rss0;
        }
        if self.null {
            return;
        }
        self.fill(u);
        let h = self.het;
        let m = self.mean;
        let (mut p, mut a) = (0.0, 0.0);
        for (x, v) in self.x.iter().zip(&self.v) {
            p += 1.0 / (v + h);
            a += x / (v + h);
        }
        let (dm_dp, dm_da) = if m == 0.0 {
            (0.0, 0.0)
        } else {
            let q = 1.0 + m * p;
            (-0.5 * m / q - 0.5 * m * m * a * a / (q * q), m * a / q)
        };
        for i in 0..self.regs.len() {
            let (x, v) = (self.x[i], self.v[i]);
            let vh = v + h;
            if self.standardized {
                let dx = x * h / (v * vh) + dm_da / vh;
                g[i] += dx * 0.5 * x;
            } else {
                let dv = 0.5 * (1.0 / v - 1.0 / vh) - 0.5 * x * x * h * (2.0 * v + h) / (v * v * vh * vh)
                    - dm_dp / (vh * vh)
                    - dm_da * x / (vh * vh);
                g[i] -= dv * v;
            }
        }
    }
}

pub fn log_k_h0(suff: &[SubgroupSuffStats], tau: &[f64]) -> Result<f64> {
    let regs = regs(suff, false)?;
    check_tau(tau, regs.len())?;
    let u: Vec<f64> = tau.iter().map(|t| t.ln()).collect();
    Objective::new(regs, None).map(|mut o| o.value(&u))
}

pub fn log_k_ha(suff: &[SubgroupSuffStats], prior: &EffectPrior, tau: &[f64]) -> Result<f64> {
    let regs = regs(suff, false)?;
    check_tau(tau, regs.len())?;
    let u: Vec<f64> = tau.iter().map(|t| t.ln()).collect();
    Objective::new(regs, Some(prior)).map(|mut o| o.value(&u))
}

/// Gradient of `ln K_Ha` with respect to `ln τ`.
pub fn log_k_ha_grad(suff: &[SubgroupSuffStats], prior: &EffectPrior, tau: &[f64]) -> Result<Vec<f64>> {
    let regs = regs(suff, false)?;
    check_tau(tau, regs.len())?;
    let u: Vec<f64> = tau.iter().map(|t| t.ln()).collect();
    let mut g = vec![0.0; u.len()];
    Objective::new(regs, Some(prior))?.gradient(&u, &mut g);
    Ok(g)
}

fn check_tau(tau: &[f64], s: usize) -> Result<()> {
    if tau.len() != s {
        return Err(Error::LengthMismatch(tau.len(), s));
    }
    if tau.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
        return Err(Error::InvalidInput("precisions must be positive and finite".into()));
    }
    Ok(())
}

fn inf_norm(g: &[f64]) -> f64 {
    g.iter().fold(0.0, |m, x| m.max(x.abs()))
}

const GRAD_TOL: f64 = 1e-9;
const MAX_ITER: usize = 200;
const RESTARTS: usize = 3;

/// BFGS ascent on the objective from `u0`; returns the optimum and iteration count.
fn bfgs(obj: &mut Objective, u0: &[f64]) -> Option<(Vec<f64>, usize)> {
    let s = u0.len();
    let mut u = u0.to_vec();
    let mut g = vec![0.0; s];
    obj.gradient(&u, &mut g);
    let mut f = obj.value(&u);
    // inverse Hessian of −f, started at the curvature of the null integrand
    let mut hinv = vec![0.0; s * s];
    for i in 0..s {
        hinv[i * s + i] = 1.0 / obj.regs[i].half_n;
    }
    let mut un = vec![0.0; s];
    let mut gn = vec![0.0; s];
    for iter in 0..MAX_ITER {
        if inf_norm(&g) < GRAD_TOL {
            return Some((u, iter));
        }
        // ascent direction d = Hinv·g
        let d: Vec<f64> = (0..s).map(|i| (0..s).map(|j| hinv[i * s + j] * g[j]).sum()).collect();
        let slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        if !(slope > 0.0) {
            // lost positive definiteness; reset to steepest ascent scaling
            for i in 0..s {
                for j in 0..s {
                    hinv[i * s + j] = if i == j { 1.0 / obj.regs[i].half_n } else { 0.0 };
                }
            }
            continue;
        }
        let mut step = 1.0;
        let mut fnew;
        loop {
            for i in 0..s {
                un[i] = u[i] + step * d[i];
            }
            fnew = obj.value(&un);
            if fnew.is_finite() && fnew >= f + 1e-4 * step * slope {
                break;
            }
            step *= 0.5;
            if step < 1e-20 {
                // no further progress is possible in floating point
                return if inf_norm(&g) < 1e3 * GRAD_TOL { Some((u, iter)) } else { None };
            }
        }
        obj.gradient(&un, &mut gn);
        // s_k = Δu, y_k = −Δg (curvature of −f)
        let sk: Vec<f64> = (0..s).map(|i| un[i] - u[i]).collect();
        let yk: Vec<f64> = (0..s).map(|i| g[i] - gn[i]).collect();
        let sy: f64 = sk.iter().zip(&yk).map(|(a, b)| a * b).sum();
        if sy > 1e-300 {
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..s).map(|i| (0..s).map(|j| hinv[i * s + j] * yk[j]).sum()).collect();
            let yhy: f64 = yk.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..s {
                for j in 0..s {
                    hinv[i * s + j] += -rho * (hy[i] * sk[j] + sk[i] * hy[j]) + (rho * rho * yhy + rho) * sk[i] * sk[j];
                }
            }
        }
        u.copy_from_slice(&un);
        g.copy_from_slice(&gn);
        f = fnew;
    }
    if inf_norm(&g) < GRAD_TOL {
        Some((u, MAX_ITER))
    } else {
        None
    }
}

/// Hessian in `u` by Richardson-extrapolated central differences of the gradient.
fn hessian(obj: &mut Objective, u: &[f64]) -> Vec<f64> {
    let s = u.len();
    let mut hm = vec![0.0; s * s];
    let mut up = u.to_vec();
    let mut gp = vec![0.0; s];
    let mut gm = vec![0.0; s];
    let mut central = |obj: &mut Objective, j: usize, h: f64, out: &mut Vec<f64>| {
        up[j] = u[j] + h;
        obj.gradient(&up, &mut gp);
        up[j] = u[j] - h;
        obj.gradient(&up, &mut gm);
        up[j] = u[j];
        for i in 0..s {
            out[i] = (gp[i] - gm[i]) / (2.0 * h);
        }
    };
    let mut d1 = vec![0.0; s];
    let mut d2 = vec![0.0; s];
    for j in 0..s {
        let h = 1e-4 * u[j].abs().max(1.0);
        central(obj, j, h, &mut d1);
        central(obj, j, 0.5 * h, &mut d2);
        for i in 0..s {
            hm[i * s + j] = (4.0 * d2[i] - d1[i]) / 3.0;
        }
    }
    for i in 0..s {
        for j in 0..i {
            let a = 0.5 * (hm[i * s + j] + hm[j * s + i]);
            hm[i * s + j] = a;
            hm[j * s + i] = a;
        }
    }
    hm
}

/// `ln det(A)` for symmetric positive definite `A`, `None` otherwise.
fn chol_logdet(a: &[f64], s: usize) -> Option<f64> {
    let mut l = vec![0.0; s * s];
    let mut logdet = 0.0;
    for i in 0..s {
        for j in 0..=i {
            let mut sum = a[i * s + j];
            for k in 0..j {
                sum -= l[i * s + k] * l[j * s + k];
            }
            if i == j {
                if !(sum > 0.0) {
                    return None;
                }
                l[i * s + i] = sum.sqrt();
                logdet += sum.ln();
            } else {
                l[i * s + j] = sum / l[j * s + j];
            }
        }
    }
    Some(logdet)
}

fn maximize(obj: &mut Objective) -> Result<PrecisionPoint> {
    let u0: Vec<f64> = obj.regs.iter().map(|r| ((2.0 * r.half_n - 2.0) / r.rss1).ln()).collect();
    let s = u0.len();
    for attempt in 0..=RESTARTS {
        let start: Vec<f64> = u0
            .iter()
            .enumerate()
            .map(|(i, &u)| {
                if attempt == 0 {
                    u
                } else {
                    // deterministic jitter, alternating in sign across subgroups
                    let sign = if (i + attempt) % 2 == 0 { 1.0 } else { -1.0 };
                    u + sign * 0.25 * attempt as f64
                }
            })
            .collect();
        let Some((u, iterations)) = bfgs(obj, &start) else { continue };
        let hm = hessian(obj, &u);
        let neg: Vec<f64> = hm.iter().map(|x| -x).collect();
        let Some(logdet_u) = chol_logdet(&neg, s) else { continue };
        let objective = obj.value(&u);
        // |H_τ| = |H_u| / Π τ² at a stationary point
        let hessian_logdet = logdet_u - 2.0 * u.iter().sum::<f64>();
        return Ok(PrecisionPoint { log_tau: u, objective, hessian_logdet, iterations });
    }
    Err(Error::NoConvergence(format!("BFGS did not converge after {RESTARTS} restarts")))
}

fn laplace_log_integral(p: &PrecisionPoint) -> f64 {
    0.5 * p.log_tau.len() as f64 * (2.0 * PI).ln() - 0.5 * p.hessian_logdet + p.objective
}

/// Maximizes `ln K_Ha` over the precisions of the informative subgroups.
pub fn maximize_log_k_ha(suff: &[SubgroupSuffStats], prior: &EffectPrior) -> Result<PrecisionPoint> {
    let mut obj = Objective::new(regs(suff, true)?, Some(prior))?;
    maximize(&mut obj)
}

/// Laplace estimate of `ln ∫K_H0`, available in closed form.
fn null_log_integral(regs: &[Reg]) -> f64 {
    let mut total = 0.0;
    for r in regs {
        let a = r.half_n - 1.0;
        let u = (2.0 * a / r.rss0).ln();
        let f = a * u - a;
        // |H_u| = a, |H_τ| = a / τ̂²
        total += 0.5 * (2.0 * PI).ln() - 0.5 * (a.ln() - 2.0 * u) + f;
    }
    total
}

fn bfhat_inner(suff: &[SubgroupSuffStats], prior: &EffectPrior) -> Result<BFResult> {
    let regs = regs(suff, true)?;
    if prior.is_null() {
        check_prior(prior)?;
        return Ok(BFResult::from_ln(0.0, Method::Laplace, Some(*prior)));
    }
    let den = null_log_integral(&regs);
    let mut obj = Objective::new(regs, Some(prior))?;
    let p = maximize(&mut obj)?;
    Ok(BFResult::from_ln(laplace_log_integral(&p) - den, Method::Laplace, Some(*prior)))
}

/// Laplace-approximated Bayes factor from full sufficient statistics.
///
/// If the optimizer fails, returns the corrected ABF with `fallback` set.
pub fn bfhat(suff: &[SubgroupSuffStats], prior: &EffectPrior) -> Result<BFResult> {
    match bfhat_inner(suff, prior) {
        Err(Error::NoConvergence(_)) => {
            let summaries = suff.iter().map(crate::stats::summarize).collect::<Result<Vec<_>>>()?;
            let r = abf_corrected(&summaries, prior.het_sd, prior.mean_sd, prior.family)
                .or_else(|_| abf_prior(&summaries, prior, false))?;
            Ok(BFResult { fallback: true, ..r })
        }
        other => other,
    }
}

/// Exact Bayes factor when each subgroup's residual sd is known.
pub fn bf_known_variance(
    summaries: &[SubgroupSummary],
    prior: &EffectPrior,
    sigma: &[f64],
) -> Result<BFResult> {
    if sigma.len() != summaries.len() {
        return Err(Error::LengthMismatch(sigma.len(), summaries.len()));
    }
    if sigma.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(Error::InvalidInput("residual sds must be positive".into()));
    }
    let known: Vec<SubgroupSummary> = summaries.iter().zip(sigma).map(|(s, &sd)| s.with_sigma(sd)).collect();
    let r = abf_prior(&known, prior, false)?;
    Ok(BFResult { method: Method::KnownVariance, ..r })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{suffstats_from_raw, summarize};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn data(seed: u64, ns: &[usize], beta: f64) -> Vec<SubgroupSuffStats> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ns.iter()
            .map(|&n| {
                let g: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() < 0.3) as u8 as f64 + (rng.random::<f64>() < 0.3) as u8 as f64).collect();
                let y: Vec<f64> = g.iter().map(|&gi| beta * gi + rng.sample::<f64, _>(StandardNormal)).collect();
                suffstats_from_raw(&y, &g).unwrap()
            })
            .collect()
    }

    #[test]
    fn null_prior_reduces_to_null() {
        let s = data(1, &[30, 40], 0.4);
        let p = EffectPrior::es(0.0, 0.0).unwrap();
        let tau = [0.7, 1.3];
        assert_eq!(log_k_ha(&s, &p, &tau).unwrap(), log_k_h0(&s, &tau).unwrap());
        assert_eq!(bfhat(&s, &p).unwrap().log10_bf, 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let s = data(2, &[25, 40, 33], 0.5);
        for prior in [EffectPrior::es(0.3, 0.4).unwrap(), EffectPrior::ee(0.2, 0.5).unwrap()] {
            let tau = [0.8, 1.7, 1.1];
            let g = log_k_ha_grad(&s, &prior, &tau).unwrap();
            for j in 0..3 {
                let h: f64 = 1e-5;
                let mut tp = tau;
                let mut tm = tau;
                tp[j] *= h.exp();
                tm[j] *= (-h).exp();
                let fd = (log_k_ha(&s, &prior, &tp).unwrap() - log_k_ha(&s, &prior, &tm).unwrap()) / (2.0 * h);
                assert_relative_eq!(g[j], fd, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn single_subgroup_known_tau_is_known_variance_bf() {
        let s = data(3, &[50], 0.3);
        let m = summarize(&s[0]).unwrap();
        let prior = EffectPrior::es(0.0, 0.5).unwrap();
        let tau = 1.3f64;
        let ratio = log_k_ha(&s, &prior, &[tau]).unwrap() - log_k_h0(&s, &[tau]).unwrap();
        let kv = bf_known_variance(&[m], &prior, &[1.0 / tau.sqrt()]).unwrap();
        assert_relative_eq!(ratio, kv.ln_bf(), max_relative = 1e-12);
    }

    #[test]
    fn single_subgroup_is_exact() {
        // ∫K_Ha / ∫K_H0 in closed form for S = 1 under ES
        for seed in 0..5 {
            let s = data(10 + seed, &[20], 0.6);
            let prior = EffectPrior::es(0.2, 0.4).unwrap();
            let (sxx, sxy, rss0) = s[0].centered();
            let v = 1.0 / sxx;
            let h = 0.04;
            let c = -0.5 * ((h + 0.16) / v).ln_1p();
            let q = rss0 - (sxy * sxy / sxx) * (h + 0.16) / (v + h + 0.16);
            let exact = c - 10.0 * (q / rss0).ln();
            let got = bfhat(&s, &prior).unwrap();
            assert!(!got.fallback);
            assert_relative_eq!(got.ln_bf(), exact, max_relative = 1e-10);
        }
    }

    #[test]
    fn known_variance_matches_abf_with_sigma() {
        let s = data(4, &[30, 45], 0.2);
        let ms: Vec<_> = s.iter().map(|x| summarize(x).unwrap()).collect();
        let prior = EffectPrior::es(0.1, 0.3).unwrap();
        let kv = bf_known_variance(&ms, &prior, &[1.0, 1.2]).unwrap();
        let manual: Vec<_> = ms.iter().zip([1.0, 1.2]).map(|(m, sd)| m.with_sigma(sd)).collect();
        assert_eq!(kv.log10_bf, abf_prior(&manual, &prior, false).unwrap().log10_bf);
        assert_eq!(bf_known_variance(&ms, &EffectPrior::es(0.0, 0.0).unwrap(), &[1.0, 1.0]).unwrap().log10_bf, 0.0);
    }

    #[test]
    fn optimizer_converges_quickly() {
        let s = data(5, &[41, 59, 41], 0.4);
        for prior in [EffectPrior::es(0.4, 0.4).unwrap(), EffectPrior::ee(0.8, 0.0).unwrap()] {
            let p = maximize_log_k_ha(&s, &prior).unwrap();
            assert!(p.iterations < 50, "{}", p.iterations);
        }
        assert!(bfhat(&s, &EffectPrior::cefn(Family::Es, 0.3, 0.4).unwrap()).is_err());
    }
}
