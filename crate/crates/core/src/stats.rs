//! Per-subgroup regression summaries and the frequentist meta-analysis
//! statistics that the Bayes factors are built from.

use crate::special::{chi2_sf, norm_isf, norm_ppf, t_isf};
use crate::{Error, Result};

/// The six sufficient statistics of one subgroup at one SNP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubgroupSuffStats {
    pub n: usize,
    pub sum_y: f64,
    pub sum_g: f64,
    pub sum_yy: f64,
    pub sum_gg: f64,
    pub sum_yg: f64,
}

/// Derived per-subgroup quantities.
///
/// Fields that cannot be recovered from the available input are `None`:
/// summaries built from an effect and standard error carry no residual sums
/// of squares, and carry standardized quantities only when `sigma_hat` was
/// supplied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubgroupSummary {
    pub n: usize,
    pub beta_hat: f64,
    pub se_beta: f64,
    pub sigma_hat2: Option<f64>,
    pub b_hat: Option<f64>,
    pub delta2: Option<f64>,
    pub d2: f64,
    pub t_stat: f64,
    pub rss0: Option<f64>,
    pub rss1: Option<f64>,
    pub informative: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetaStat {
    pub bar_hat: f64,
    pub se2: f64,
    pub t2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZScheme {
    Es,
    Ee,
    SqrtN,
}

/// Neumaier-compensated running sum.
#[derive(Default, Clone, Copy)]
struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.comp
    }
}

pub fn suffstats_from_raw(y: &[f64], g: &[f64]) -> Result<SubgroupSuffStats> {
    if y.len() != g.len() {
        return Err(Error::LengthMismatch(y.len(), g.len()));
    }
    if y.len() < 3 {
        return Err(Error::TooFewObservations { needed: 3, got: y.len() });
    }
    let mut acc = [KahanSum::default(); 5];
    for (&yi, &gi) in y.iter().zip(g) {
        if !yi.is_finite() || !gi.is_finite() {
            return Err(Error::InvalidInput("non-finite phenotype or genotype".into()));
        }
        acc[0].add(yi);
        acc[1].add(gi);
        acc[2].add(yi * yi);
        acc[3].add(gi * gi);
        acc[4].add(yi * gi);
    }
    Ok(SubgroupSuffStats {
        n: y.len(),
        sum_y: acc[0].value(),
        sum_g: acc[1].value(),
        sum_yy: acc[2].value(),
        sum_gg: acc[3].value(),
        sum_yg: acc[4].value(),
    })
}

impl SubgroupSuffStats {
    /// Centered sums `(Sxx, Sxy, Syy)`.
    pub fn centered(&self) -> (f64, f64, f64) {
        let n = self.n as f64;
        let sxx = self.sum_gg - self.sum_g * self.sum_g / n;
        let sxy = self.sum_yg - self.sum_y * self.sum_g / n;
        let syy = self.sum_yy - self.sum_y * self.sum_y / n;
        (sxx, sxy, syy.max(0.0))
    }

    /// True when the genotype carries no variation in this subgroup.
    pub fn is_monomorphic(&self) -> bool {
        let (sxx, _, _) = self.centered();
        sxx <= 1e-12 * self.n as f64
    }

    /// Concatenation of two disjoint samples.
    pub fn merge(&self, other: &Self) -> Self {
        Self {
            n: self.n + other.n,
            sum_y: self.sum_y + other.sum_y,
            sum_g: self.sum_g + other.sum_g,
            sum_yy: self.sum_yy + other.sum_yy,
            sum_gg: self.sum_gg + other.sum_gg,
            sum_yg: self.sum_yg + other.sum_yg,
        }
    }
}

pub fn summarize(s: &SubgroupSuffStats) -> Result<SubgroupSummary> {
    if s.n < 3 {
        return Err(Error::TooFewObservations { needed: 3, got: s.n });
    }
    let n = s.n as f64;
    let (sxx, sxy, rss0) = s.centered();
    if s.is_monomorphic() {
        return Ok(SubgroupSummary {
            rss0: Some(rss0),
            rss1: Some(rss0),
            sigma_hat2: Some(rss0 / (n - 2.0)),
            ..SubgroupSummary::non_informative(s.n)
        });
    }
    let beta_hat = sxy / sxx;
    let rss1 = rss0 - sxy * sxy / sxx;
    if rss1 <= 1e-13 * rss0.max(f64::MIN_POSITIVE) {
        return Err(Error::DegenerateFit);
    }
    let sigma_hat2 = rss1 / (n - 2.0);
    let delta2 = 1.0 / sxx;
    let d2 = sigma_hat2 * delta2;
    let se_beta = d2.sqrt();
    Ok(SubgroupSummary {
        n: s.n,
        beta_hat,
        se_beta,
        sigma_hat2: Some(sigma_hat2),
        b_hat: Some(beta_hat / sigma_hat2.sqrt()),
        delta2: Some(delta2),
        d2,
        t_stat: beta_hat / se_beta,
        rss0: Some(rss0),
        rss1: Some(rss1),
        informative: true,
    })
}

pub fn summary_from_effect_se(
    beta_hat: f64,
    se_beta: f64,
    n: usize,
    sigma_hat: Option<f64>,
) -> Result<SubgroupSummary> {
    if !(se_beta > 0.0) || !se_beta.is_finite() {
        return Err(Error::InvalidInput(format!("se_beta must be positive, got {se_beta}")));
    }
    if !beta_hat.is_finite() {
        return Err(Error::InvalidInput(format!("beta_hat must be finite, got {beta_hat}")));
    }
    if n < 3 {
        return Err(Error::TooFewObservations { needed: 3, got: n });
    }
    let (b_hat, delta2, sigma_hat2) = match sigma_hat {
        Some(sd) if sd > 0.0 && sd.is_finite() => {
            (Some(beta_hat / sd), Some((se_beta / sd).powi(2)), Some(sd * sd))
        }
        Some(sd) => return Err(Error::InvalidInput(format!("sigma_hat must be positive, got {sd}"))),
        None => (None, None, None),
    };
    Ok(SubgroupSummary {
        n,
        beta_hat,
        se_beta,
        sigma_hat2,
        b_hat,
        delta2,
        d2: se_beta * se_beta,
        t_stat: beta_hat / se_beta,
        rss0: None,
        rss1: None,
        informative: true,
    })
}

impl SubgroupSummary {
    /// A subgroup that contributes nothing: infinite sampling variance, T = 0.
    pub fn non_informative(n: usize) -> Self {
        Self {
            n,
            beta_hat: 0.0,
            se_beta: f64::INFINITY,
            sigma_hat2: None,
            b_hat: Some(0.0),
            delta2: Some(f64::INFINITY),
            d2: f64::INFINITY,
            t_stat: 0.0,
            rss0: None,
            rss1: None,
            informative: false,
        }
    }

    /// `(b̂, δ²)` for the standardized model.
    pub fn es_pair(&self, index: usize) -> Result<(f64, f64)> {
        match (self.b_hat, self.delta2) {
            (Some(b), Some(d)) => Ok((b, d)),
            _ => Err(Error::MissingStandardized(index)),
        }
    }

    /// `(β̂, d²)` for the unstandardized model.
    pub fn ee_pair(&self) -> (f64, f64) {
        (self.beta_hat, self.d2)
    }

    /// Degrees of freedom of the residual variance estimate.
    pub fn df(&self) -> f64 {
        self.n as f64 - 2.0
    }

    /// The summary the data would give if the residual sd were known to be `sigma`.
    pub fn with_sigma(&self, sigma: f64) -> Self {
        if !self.informative {
            return *self;
        }
        let s2 = sigma * sigma;
        // δ² depends only on the genotypes: δ² = d² / σ̂²
        let delta2 = match (self.delta2, self.sigma_hat2) {
            (Some(d), _) => d,
            (None, Some(s)) => self.d2 / s,
            (None, None) => self.d2 / s2,
        };
        let d2 = s2 * delta2;
        Self {
            sigma_hat2: Some(s2),
            b_hat: Some(self.beta_hat / sigma),
            delta2: Some(delta2),
            d2,
            se_beta: d2.sqrt(),
            t_stat: self.beta_hat / d2.sqrt(),
            ..*self
        }
    }
}

pub fn se_from_pvalue(beta_hat: f64, p_two_sided: f64, df: Option<f64>) -> Result<f64> {
    if !(p_two_sided > 0.0 && p_two_sided < 1.0) {
        return Err(Error::InvalidInput(format!("p-value must lie in (0, 1), got {p_two_sided}")));
    }
    if beta_hat == 0.0 || !beta_hat.is_finite() {
        return Err(Error::InvalidInput("beta_hat must be finite and non-zero".into()));
    }
    let q = match df {
        None => norm_isf(0.5 * p_two_sided),
        Some(df) if df > 0.0 => t_isf(0.5 * p_two_sided, df),
        Some(df) => return Err(Error::InvalidInput(format!("df must be positive, got {df}"))),
    };
    Ok(beta_hat.abs() / q)
}

fn meta_from_pairs(pairs: impl Iterator<Item = (f64, f64)>) -> Result<MetaStat> {
    let mut wsum = 0.0;
    let mut wx = 0.0;
    let mut only = None;
    let mut count = 0;
    for (x, v) in pairs {
        if v.is_finite() {
            wsum += 1.0 / v;
            wx += x / v;
            only = Some((x, v));
            count += 1;
        }
    }
    if let (1, Some((x, v))) = (count, only) {
        return Ok(MetaStat { bar_hat: x, se2: v, t2: x * x / v });
    }
    if wsum <= 0.0 {
        return Err(Error::NoInformativeSubgroup);
    }
    let bar_hat = wx / wsum;
    let se2 = 1.0 / wsum;
    Ok(MetaStat { bar_hat, se2, t2: bar_hat * bar_hat / se2 })
}

pub fn meta_stat_es(summaries: &[SubgroupSummary], phi: f64) -> Result<MetaStat> {
    let phi2 = phi * phi;
    let mut pairs = Vec::with_capacity(summaries.len());
    for (i, s) in summaries.iter().enumerate() {
        if s.informative {
            let (b, d) = s.es_pair(i)?;
            pairs.push((b, d + phi2));
        }
    }
    meta_from_pairs(pairs.into_iter())
}

pub fn meta_stat_ee(summaries: &[SubgroupSummary], psi: f64) -> Result<MetaStat> {
    let psi2 = psi * psi;
    meta_from_pairs(
        summaries
            .iter()
            .filter(|s| s.informative)
            .map(|s| (s.beta_hat, s.d2 + psi2)),
    )
}

pub fn weighted_z(summaries: &[SubgroupSummary], scheme: ZScheme) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, s) in summaries.iter().enumerate() {
        if !s.informative {
            continue;
        }
        let w = match scheme {
            ZScheme::Es => 1.0 / s.es_pair(i)?.1.sqrt(),
            ZScheme::Ee => 1.0 / s.se_beta,
            ZScheme::SqrtN => (s.n as f64).sqrt(),
        };
        num += w * s.t_stat;
        den += w * w;
    }
    if den == 0.0 {
        return Err(Error::NoInformativeSubgroup);
    }
    Ok(num / den.sqrt())
}

/// Sum of squared T statistics and its χ² upper-tail probability.
pub fn maxh_chi2(summaries: &[SubgroupSummary]) -> Result<(f64, f64)> {
    let informative: Vec<_> = summaries.iter().filter(|s| s.informative).collect();
    if informative.is_empty() {
        return Err(Error::NoInformativeSubgroup);
    }
    let sum: f64 = informative.iter().map(|s| s.t_stat * s.t_stat).sum();
    Ok((sum, chi2_sf(sum, informative.len() as f64)))
}

/// Rank-based inverse normal transform with average ranks for ties.
pub fn quantile_normal_transform(x: &[f64]) -> Result<Vec<f64>> {
    if x.len() < 2 {
        return Err(Error::TooFewObservations { needed: 2, got: x.len() });
    }
    if x.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("NaN in quantile transform input".into()));
    }
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = 0.5 * ((i + 1) + (j + 1)) as f64;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    if ranks.iter().all(|&r| r == ranks[0]) {
        return Err(Error::InvalidInput("all values tied; transform has zero variance".into()));
    }
    Ok(ranks.iter().map(|&r| norm_ppf((r - 0.5) / n as f64)).collect())
}
