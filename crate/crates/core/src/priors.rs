//! Alternative-model hyper-parameters and weighted grids of them.

use std::fmt;
use std::str::FromStr;

use crate::special::{norm_cdf, norm_ppf};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Es,
    Ee,
    CefnEs,
    CefnEe,
}

impl Family {
    pub fn is_cefn(self) -> bool {
        matches!(self, Family::CefnEs | Family::CefnEe)
    }

    /// Whether effects are measured in residual-sd units.
    pub fn is_standardized(self) -> bool {
        matches!(self, Family::Es | Family::CefnEs)
    }

    pub fn base(self) -> Family {
        match self {
            Family::Es | Family::CefnEs => Family::Es,
            Family::Ee | Family::CefnEe => Family::Ee,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Es => "es",
            Family::Ee => "ee",
            Family::CefnEs => "cefn-es",
            Family::CefnEe => "cefn-ee",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "es" => Ok(Family::Es),
            "ee" => Ok(Family::Ee),
            "cefn-es" => Ok(Family::CefnEs),
            "cefn-ee" => Ok(Family::CefnEe),
            other => Err(Error::InvalidInput(format!("unknown prior family '{other}'"))),
        }
    }
}

/// One alternative model.
///
/// `het_sd` is φ (standardized) or ψ (unstandardized); `mean_sd` is ω or w.
/// CEFN priors tie the heterogeneity to the mean through `cefn_k` and keep
/// `het_sd` at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectPrior {
    pub family: Family,
    pub het_sd: f64,
    pub mean_sd: f64,
    pub cefn_k: Option<f64>,
}

fn check_sd(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} must be finite and non-negative, got {v}")))
    }
}

impl EffectPrior {
    pub fn new(family: Family, het_sd: f64, mean_sd: f64) -> Result<Self> {
        if family.is_cefn() {
            return Err(Error::InvalidInput("CEFN priors are built with EffectPrior::cefn".into()));
        }
        check_sd("het_sd", het_sd)?;
        check_sd("mean_sd", mean_sd)?;
        Ok(Self { family, het_sd, mean_sd, cefn_k: None })
    }

    pub fn es(phi: f64, omega: f64) -> Result<Self> {
        Self::new(Family::Es, phi, omega)
    }

    pub fn ee(psi: f64, w: f64) -> Result<Self> {
        Self::new(Family::Ee, psi, w)
    }

    pub fn cefn(family: Family, k: f64, mean_sd: f64) -> Result<Self> {
        let family = match family {
            Family::Es | Family::CefnEs => Family::CefnEs,
            Family::Ee | Family::CefnEe => Family::CefnEe,
        };
        check_sd("cefn_k", k)?;
        check_sd("mean_sd", mean_sd)?;
        Ok(Self { family, het_sd: 0.0, mean_sd, cefn_k: Some(k) })
    }

    pub fn is_null(&self) -> bool {
        self.het_sd == 0.0 && self.mean_sd == 0.0
    }

    /// Prior sd of a single subgroup's effect.
    pub fn marginal_sd(&self) -> f64 {
        match self.cefn_k {
            Some(k) => self.mean_sd * (1.0 + k * k).sqrt(),
            None => self.het_sd.hypot(self.mean_sd),
        }
    }

    /// `φ²/ω²`, infinite at the max-heterogeneity corner.
    pub fn het_ratio(&self) -> f64 {
        if self.het_sd == 0.0 {
            0.0
        } else {
            (self.het_sd / self.mean_sd).powi(2)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorGrid {
    points: Vec<(EffectPrior, f64)>,
}

impl PriorGrid {
    /// Builds a grid; weights must be positive and are normalized to sum to 1.
    pub fn new(points: Vec<(EffectPrior, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("prior grid is empty".into()));
        }
        let total: f64 = points.iter().map(|p| p.1).sum();
        if points.iter().any(|p| !(p.1 > 0.0) || !p.1.is_finite()) {
            return Err(Error::InvalidInput("grid weights must be positive and finite".into()));
        }
        Ok(Self { points: points.into_iter().map(|(p, w)| (p, w / total)).collect() })
    }

    pub fn uniform(priors: Vec<EffectPrior>) -> Result<Self> {
        Self::new(priors.into_iter().map(|p| (p, 1.0)).collect())
    }

    pub fn single(prior: EffectPrior) -> Self {
        Self { points: vec![(prior, 1.0)] }
    }

    pub fn points(&self) -> &[(EffectPrior, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Distinct marginal sds in first-seen order.
    pub fn marginals(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for (p, _) in &self.points {
            let m = p.marginal_sd();
            if !out.iter().any(|&x| (x - m).abs() <= 1e-12 * m.max(1.0)) {
                out.push(m);
            }
        }
        out
    }

    pub fn family(&self) -> Family {
        self.points[0].0.family
    }
}

/// Cartesian product of marginal sizes `√(φ²+ω²)` and ratios `φ²/ω²`.
pub fn grid_from_marginal_heterogeneity(
    family: Family,
    marginals: &[f64],
    ratios: &[f64],
    weights: Option<&[f64]>,
) -> Result<PriorGrid> {
    if marginals.is_empty() || ratios.is_empty() {
        return Err(Error::InvalidInput("marginal and ratio lists must be non-empty".into()));
    }
    if family.is_cefn() {
        return Err(Error::InvalidInput("use cefn_grid for CEFN families".into()));
    }
    let mut priors = Vec::with_capacity(marginals.len() * ratios.len());
    for &m in marginals {
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::InvalidInput(format!("marginal sd must be positive, got {m}")));
        }
        for &r in ratios {
            let (het, mean) = if r == 0.0 {
                (0.0, m)
            } else if r == f64::INFINITY {
                (m, 0.0)
            } else if r > 0.0 {
                (m * (r / (1.0 + r)).sqrt(), m / (1.0 + r).sqrt())
            } else {
                return Err(Error::InvalidInput(format!("heterogeneity ratio must be >= 0, got {r}")));
            };
            priors.push(EffectPrior::new(family, het, mean)?);
        }
    }
    match weights {
        None => PriorGrid::uniform(priors),
        Some(w) if w.len() == priors.len() => {
            PriorGrid::new(priors.into_iter().zip(w.iter().copied()).collect())
        }
        Some(w) => Err(Error::LengthMismatch(w.len(), priors.len())),
    }
}

/// CEFN priors whose marginal sd `ω√(1+k²)` runs over `marginals`.
pub fn cefn_grid(family: Family, marginals: &[f64], k: f64) -> Result<PriorGrid> {
    if marginals.is_empty() {
        return Err(Error::InvalidInput("marginal list must be non-empty".into()));
    }
    let scale = (1.0 + k * k).sqrt();
    PriorGrid::uniform(
        marginals
            .iter()
            .map(|&m| EffectPrior::cefn(family, k, m / scale))
            .collect::<Result<_>>()?,
    )
}

/// Parses a heterogeneity ratio: a decimal, a fraction `a/b`, or an infinity token.
pub fn parse_ratio(token: &str) -> Result<f64> {
    let t = token.trim();
    match t {
        "Inf" | "inf" | "INF" | "INFINITY" | "Infinity" | "infinity" => return Ok(f64::INFINITY),
        _ => {}
    }
    let bad = || Error::InvalidInput(format!("cannot parse ratio '{t}'"));
    let v = if let Some((a, b)) = t.split_once('/') {
        let a: f64 = a.trim().parse().map_err(|_| bad())?;
        let b: f64 = b.trim().parse().map_err(|_| bad())?;
        a / b
    } else {
        t.parse().map_err(|_| bad())?
    };
    if v.is_nan() || v < 0.0 {
        return Err(bad());
    }
    Ok(v)
}

/// Parses the `"m1,m2,...:r1,r2,..."` shorthand into marginals and ratios.
pub fn parse_grid_shorthand(s: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let (m, r) = s
        .split_once(':')
        .ok_or_else(|| Error::InvalidInput(format!("grid '{s}' must look like 'm1,m2:r1,r2'")))?;
    let marginals = m
        .split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("cannot parse marginal '{x}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    let ratios = r.split(',').map(parse_ratio).collect::<Result<Vec<_>>>()?;
    Ok((marginals, ratios))
}

pub const EQTL_MARGINALS: [f64; 5] = [0.1, 0.2, 0.4, 0.8, 1.6];
pub const EQTL_RATIOS: [f64; 7] = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0, f64::INFINITY];
pub const LIPIDS_MARGINALS: [f64; 5] = [0.1, 0.2, 0.4, 0.6, 0.8];

/// The 35-point standardized-effect grid used for expression QTL scans.
pub fn default_eqtl_grid(family: Family) -> PriorGrid {
    grid_from_marginal_heterogeneity(family, &EQTL_MARGINALS, &EQTL_RATIOS, None)
        .expect("built-in grid is valid")
}

/// Marginal-only grid at one heterogeneity ratio over the lipids marginal set.
pub fn default_lipids_grid(family: Family, ratio: f64) -> PriorGrid {
    grid_from_marginal_heterogeneity(family, &LIPIDS_MARGINALS, &[ratio], None)
        .expect("built-in grid is valid")
}

/// Probability that a subgroup effect has the opposite sign to the mean, `Φ(−1/k)`.
pub fn cefn_sign_prob(k: f64) -> Result<f64> {
    if k < 0.0 || k.is_nan() {
        return Err(Error::InvalidInput(format!("k must be non-negative, got {k}")));
    }
    if k == 0.0 {
        return Ok(0.0);
    }
    Ok(norm_cdf(-1.0 / k))
}

pub fn k_from_sign_prob(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 0.5) {
        return Err(Error::InvalidInput(format!("sign-flip probability must lie in (0, 0.5), got {p}")));
    }
    Ok(-1.0 / norm_ppf(p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImplicitKind {
    Fixed,
    MaxH,
}

/// Prior variance of the implicit p-value priors: `K²ζ²` (fixed) or `Kδ²` (max-het).
pub fn implicit_prior_scale(kind: ImplicitKind, k: f64, se2: f64) -> Result<f64> {
    if !(k > 0.0) || !(se2 > 0.0) {
        return Err(Error::InvalidInput("K and the squared standard error must be positive".into()));
    }
    Ok(match kind {
        ImplicitKind::Fixed => k * k * se2,
        ImplicitKind::MaxH => k * se2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn grid_corners() {
        let g = grid_from_marginal_heterogeneity(Family::Ee, &[5.0, 10.0, 20.0], &[0.0, 1.0, f64::INFINITY], None).unwrap();
        assert_eq!(g.len(), 9);
        let p = g.points()[0].0;
        assert_eq!((p.het_sd, p.mean_sd), (0.0, 5.0));
        let p = g.points()[5].0;
        assert_eq!((p.het_sd, p.mean_sd), (10.0, 0.0));
        let p = g.points()[7].0;
        assert_relative_eq!(p.het_sd, 14.142135623730951, max_relative = 1e-15);
        assert_relative_eq!(p.mean_sd, 14.142135623730951, max_relative = 1e-15);
        assert!(g.points().iter().all(|&(_, w)| (w - 1.0 / 9.0).abs() < 1e-15));
        assert_eq!(g.marginals(), vec![5.0, 10.0, 20.0]);
        assert!(grid_from_marginal_heterogeneity(Family::Es, &[], &[0.0], None).is_err());
    }

    #[test]
    fn ratio_tokens() {
        for t in ["Inf", "inf", "INFINITY"] {
            assert_eq!(parse_ratio(t).unwrap(), f64::INFINITY);
        }
        assert_eq!(parse_ratio("1/4").unwrap(), 0.25);
        assert!(parse_ratio("-1").is_err());
        let (m, r) = parse_grid_shorthand("0.1,0.2:0,1,Inf").unwrap();
        assert_eq!(m, vec![0.1, 0.2]);
        assert_eq!(r, vec![0.0, 1.0, f64::INFINITY]);
    }

    #[test]
    fn default_grids() {
        let g = default_eqtl_grid(Family::Es);
        assert_eq!(g.len(), 35);
        assert_eq!(g.marginals(), EQTL_MARGINALS.to_vec());
        assert_eq!(default_lipids_grid(Family::Ee, 0.0).len(), 5);
    }

    #[test]
    fn sign_probability() {
        assert_relative_eq!(cefn_sign_prob(0.5).unwrap(), 0.022750131948179195, max_relative = 1e-12);
        let p = cefn_sign_prob(0.326).unwrap();
        assert!((p - 1.08e-3).abs() < 1e-5, "{p}");
        assert_eq!(cefn_sign_prob(0.0).unwrap(), 0.0);
        assert!(cefn_sign_prob(1e-3).unwrap() < 1e-300);
        assert_relative_eq!(k_from_sign_prob(cefn_sign_prob(0.314).unwrap()).unwrap(), 0.314, max_relative = 1e-10);
    }

    #[test]
    fn implicit_scales() {
        assert_eq!(implicit_prior_scale(ImplicitKind::Fixed, 1.0, 0.25).unwrap(), 0.25);
        assert_relative_eq!(implicit_prior_scale(ImplicitKind::MaxH, 2.0, 0.1).unwrap(), 0.2);
        assert!(implicit_prior_scale(ImplicitKind::MaxH, 0.0, 0.1).is_err());
    }

    #[test]
    fn cefn_priors() {
        let g = cefn_grid(Family::Es, &LIPIDS_MARGINALS, 0.326).unwrap();
        for ((p, _), m) in g.points().iter().zip(LIPIDS_MARGINALS) {
            assert_eq!(p.family, Family::CefnEs);
            assert_relative_eq!(p.marginal_sd(), m, max_relative = 1e-14);
        }
        assert!(EffectPrior::new(Family::CefnEs, 0.0, 1.0).is_err());
    }
}
