//! Logistic regression per subgroup and the case-control ABF built on the
//! Wald statistics.

use crate::abf::{ln_abf_generic, BFResult, Method};
use crate::priors::EffectPrior;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CCSubgroupSummary {
    pub n: usize,
    pub beta_hat: f64,
    /// Asymptotic variance of `beta_hat` with the intercept profiled out.
    pub gamma2: f64,
    pub z2: f64,
    pub mu_hat: f64,
    /// Expected Fisher information at the MLE, ordered (μ, β).
    pub info: [[f64; 2]; 2],
    pub informative: bool,
}

const SEPARATION_BETA: f64 = 15.0;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_lik(y: &[f64], g: &[f64], mu: f64, beta: f64) -> f64 {
    y.iter()
        .zip(g)
        .map(|(&yi, &gi)| {
            let eta = mu + beta * gi;
            // y·η − ln(1 + e^η), stable for either sign of η
            yi * eta - if eta > 0.0 { eta + (-eta).exp().ln_1p() } else { eta.exp().ln_1p() }
        })
        .sum()
}

fn score_info(y: &[f64], g: &[f64], mu: f64, beta: f64) -> ([f64; 2], [[f64; 2]; 2]) {
    let mut u = [0.0; 2];
    let mut i = [[0.0; 2]; 2];
    for (&yi, &gi) in y.iter().zip(g) {
        let p = sigmoid(mu + beta * gi);
        let w = p * (1.0 - p);
        u[0] += yi - p;
        u[1] += gi * (yi - p);
        i[0][0] += w;
        i[0][1] += w * gi;
        i[1][1] += w * gi * gi;
    }
    i[1][0] = i[0][1];
    (u, i)
}

/// Logistic MLE of `logit P(y = 1) = μ + β g` by Newton–Raphson with step halving.
pub fn logistic_mle(y: &[f64], g: &[f64]) -> Result<CCSubgroupSummary> {
    if y.len() != g.len() {
        return Err(Error::LengthMismatch(y.len(), g.len()));
    }
    if y.len() < 3 {
        return Err(Error::TooFewObservations { needed: 3, got: y.len() });
    }
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidInput("case-control phenotype must be 0 or 1".into()));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite genotype".into()));
    }
    let n = y.len();
    let cases: f64 = y.iter().sum();
    if cases == 0.0 || cases == n as f64 {
        return Err(Error::SingleClass);
    }
    let gbar = g.iter().sum::<f64>() / n as f64;
    let sxx: f64 = g.iter().map(|x| (x - gbar) * (x - gbar)).sum();
    let ybar = cases / n as f64;
    if sxx <= 1e-12 * n as f64 {
        let mu = (ybar / (1.0 - ybar)).ln();
        let (_, info) = score_info(y, g, mu, 0.0);
        return Ok(CCSubgroupSummary {
            n,
            beta_hat: 0.0,
            gamma2: f64::INFINITY,
            z2: 0.0,
            mu_hat: mu,
            info,
            informative: false,
        });
    }
    let (mut mu, mut beta) = ((ybar / (1.0 - ybar)).ln(), 0.0);
    let mut ll = log_lik(y, g, mu, beta);
    for _ in 0..200 {
        let (u, i) = score_info(y, g, mu, beta);
        if u[0].abs().max(u[1].abs()) < 1e-10 {
            if beta.abs() > SEPARATION_BETA {
                return Err(Error::Separation);
            }
            let det = i[0][0] * i[1][1] - i[0][1] * i[1][0];
            let gamma2 = i[0][0] / det;
            return Ok(CCSubgroupSummary {
                n,
                beta_hat: beta,
                gamma2,
                z2: beta * beta / gamma2,
                mu_hat: mu,
                info: i,
                informative: true,
            });
        }
        let det = i[0][0] * i[1][1] - i[0][1] * i[1][0];
        if !(det > 0.0) || !det.is_finite() {
            return Err(Error::Separation);
        }
        let dmu = (i[1][1] * u[0] - i[0][1] * u[1]) / det;
        let dbeta = (i[0][0] * u[1] - i[1][0] * u[0]) / det;
        let mut step = 1.0;
        loop {
            let (m2, b2) = (mu + step * dmu, beta + step * dbeta);
            let ll2 = log_lik(y, g, m2, b2);
            if ll2 >= ll - 1e-12 * ll.abs() {
                mu = m2;
                beta = b2;
                ll = ll2;
                break;
            }
            step *= 0.5;
            if step < 1e-10 {
                return Err(Error::NoConvergence("logistic Newton step could not improve the likelihood".into()));
            }
        }
        if beta.abs() > 2.0 * SEPARATION_BETA || ll > -1e-8 {
            return Err(Error::Separation);
        }
    }
    Err(Error::Separation)
}

/// Case-control ABF with heterogeneity sd `psi` and mean-effect sd `w` on the log-odds scale.
pub fn abf_cc(summaries: &[CCSubgroupSummary], psi: f64, w: f64) -> Result<BFResult> {
    let prior = EffectPrior::ee(psi, w)?;
    if summaries.is_empty() {
        return Err(Error::InvalidInput("no case-control subgroups".into()));
    }
    let (x, v): (Vec<f64>, Vec<f64>) = summaries
        .iter()
        .filter(|s| s.informative && s.gamma2.is_finite())
        .map(|s| (s.beta_hat, s.gamma2))
        .unzip();
    if x.is_empty() {
        return Err(Error::NoInformativeSubgroup);
    }
    let h = vec![psi * psi; x.len()];
    let ln = ln_abf_generic(&x, &v, &h, w * w);
    Ok(BFResult::from_ln(ln, Method::CcAbf, Some(prior)))
}
