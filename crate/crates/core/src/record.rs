//! Per-SNP data across subgroups, and evaluation of a Bayes factor for one
//! SNP by any of the supported methods.

use std::fmt;
use std::str::FromStr;

use crate::abf::{abf_average, abf_prior, BFResult, Method};
use crate::casecontrol::{abf_cc, CCSubgroupSummary};
use crate::cefn::abf_cefn_prior;
use crate::laplace::bfhat;
use crate::priors::{EffectPrior, PriorGrid};
use crate::stats::{SubgroupSuffStats, SubgroupSummary};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum SubgroupData {
    /// Quantitative trait: a regression summary, with the sufficient
    /// statistics when the input carried them.
    Linear { summary: SubgroupSummary, suff: Option<SubgroupSuffStats> },
    CaseControl(CCSubgroupSummary),
}

impl SubgroupData {
    pub fn from_suffstats(s: SubgroupSuffStats) -> Result<Self> {
        Ok(SubgroupData::Linear { summary: crate::stats::summarize(&s)?, suff: Some(s) })
    }

    pub fn from_summary(summary: SubgroupSummary) -> Self {
        SubgroupData::Linear { summary, suff: None }
    }

    /// Effect estimate and its standard error, for reporting.
    pub fn effect_se(&self) -> (f64, f64) {
        match self {
            SubgroupData::Linear { summary, .. } => (summary.beta_hat, summary.se_beta),
            SubgroupData::CaseControl(c) => (c.beta_hat, c.gamma2.sqrt()),
        }
    }

    pub fn informative(&self) -> bool {
        match self {
            SubgroupData::Linear { summary, .. } => summary.informative,
            SubgroupData::CaseControl(c) => c.informative,
        }
    }
}

/// One SNP; `subgroups[i]` is `None` when subgroup `i` has no data for it.
#[derive(Debug, Clone, PartialEq)]
pub struct SnpRecord {
    pub id: String,
    pub gene: Option<String>,
    pub subgroups: Vec<Option<SubgroupData>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub subgroup_names: Vec<String>,
    pub snps: Vec<SnpRecord>,
}

impl SnpRecord {
    pub fn new(id: impl Into<String>, subgroups: Vec<Option<SubgroupData>>) -> Self {
        Self { id: id.into(), gene: None, subgroups }
    }

    pub fn n_subgroups(&self) -> usize {
        self.subgroups.len()
    }

    pub fn is_case_control(&self) -> bool {
        self.subgroups.iter().flatten().any(|d| matches!(d, SubgroupData::CaseControl(_)))
    }

    /// Regression summaries of the subgroups that have data.
    pub fn summaries(&self) -> Result<Vec<SubgroupSummary>> {
        self.subgroups
            .iter()
            .flatten()
            .map(|d| match d {
                SubgroupData::Linear { summary, .. } => Ok(*summary),
                SubgroupData::CaseControl(_) => {
                    Err(Error::Unsupported("linear-model Bayes factor requested on case-control data".into()))
                }
            })
            .collect()
    }

    pub fn suffstats(&self) -> Result<Vec<SubgroupSuffStats>> {
        self.subgroups
            .iter()
            .enumerate()
            .filter_map(|(i, d)| d.as_ref().map(|d| (i, d)))
            .map(|(i, d)| match d {
                SubgroupData::Linear { suff: Some(s), .. } => Ok(*s),
                _ => Err(Error::MissingSuffStats(i)),
            })
            .collect()
    }

    pub fn cc_summaries(&self) -> Result<Vec<CCSubgroupSummary>> {
        self.subgroups
            .iter()
            .flatten()
            .map(|d| match d {
                SubgroupData::CaseControl(c) => Ok(*c),
                SubgroupData::Linear { .. } => {
                    Err(Error::Unsupported("case-control Bayes factor requested on linear data".into()))
                }
            })
            .collect()
    }

    /// The record with only the `active` subgroups kept, in order.
    pub fn restrict(&self, active: &[bool]) -> Result<SnpRecord> {
        if active.len() != self.subgroups.len() {
            return Err(Error::LengthMismatch(active.len(), self.subgroups.len()));
        }
        let mut subgroups = Vec::new();
        for (i, (d, &on)) in self.subgroups.iter().zip(active).enumerate() {
            if on {
                if d.is_none() {
                    return Err(Error::InvalidInput(format!("active subgroup {i} has no data for {}", self.id)));
                }
                subgroups.push(d.clone());
            }
        }
        Ok(SnpRecord { id: self.id.clone(), gene: self.gene.clone(), subgroups })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BfMethod {
    Abf,
    Corrected,
    Laplace,
}

impl FromStr for BfMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "abf" => Ok(BfMethod::Abf),
            "corrected" | "abf_corrected" => Ok(BfMethod::Corrected),
            "laplace" | "bfhat" => Ok(BfMethod::Laplace),
            other => Err(Error::InvalidInput(format!("unknown method '{other}'"))),
        }
    }
}

impl fmt::Display for BfMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BfMethod::Abf => "abf",
            BfMethod::Corrected => "corrected",
            BfMethod::Laplace => "laplace",
        })
    }
}

/// Bayes factor of one SNP under one prior.
pub fn evaluate_prior(record: &SnpRecord, prior: &EffectPrior, method: BfMethod) -> Result<BFResult> {
    if record.is_case_control() {
        if prior.family.is_cefn() || prior.family.is_standardized() {
            return Err(Error::Unsupported("case-control data supports EE priors only".into()));
        }
        return abf_cc(&record.cc_summaries()?, prior.het_sd, prior.mean_sd);
    }
    match method {
        BfMethod::Laplace => {
            if prior.family.is_cefn() {
                return Err(Error::Unsupported("CEFN priors are not available with the Laplace method".into()));
            }
            bfhat(&record.suffstats()?, prior)
        }
        BfMethod::Abf | BfMethod::Corrected => {
            let s = record.summaries()?;
            let corrected = method == BfMethod::Corrected;
            if prior.family.is_cefn() {
                abf_cefn_prior(&s, prior, corrected)
            } else {
                abf_prior(&s, prior, corrected)
            }
        }
    }
}

/// Grid-averaged Bayes factor of one SNP.
pub fn evaluate_grid(record: &SnpRecord, grid: &PriorGrid, method: BfMethod) -> Result<BFResult> {
    let mut comps = Vec::with_capacity(grid.len());
    let mut fallback = false;
    let mut tag = None;
    for (p, w) in grid.points() {
        let r = evaluate_prior(record, p, method)?;
        fallback |= r.fallback;
        tag.get_or_insert(r.method);
        comps.push((r.log10_bf, *w));
    }
    let single = if grid.len() == 1 { Some(grid.points()[0].0) } else { None };
    Ok(BFResult {
        log10_bf: abf_average(&comps)?,
        method: tag.unwrap_or(Method::Abf),
        prior: single,
        fallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::summary_from_effect_se;

    #[test]
    fn restriction_keeps_active_subgroups() {
        let s = |b| Some(SubgroupData::from_summary(summary_from_effect_se(b, 0.5, 50, Some(1.0)).unwrap()));
        let r = SnpRecord::new("rs1", vec![s(1.0), None, s(2.0)]);
        let sub = r.restrict(&[true, false, true]).unwrap();
        assert_eq!(sub.subgroups.len(), 2);
        assert!(r.restrict(&[false, true, false]).is_err());
        assert!(matches!(r.suffstats(), Err(Error::MissingSuffStats(0))));
        assert_eq!(r.summaries().unwrap().len(), 2);
    }
}
