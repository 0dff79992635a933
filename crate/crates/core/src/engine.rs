//! Batch scans over SNPs: grid-averaged Bayes factors per method, the fixed
//! and maximum-heterogeneity side channels, heterogeneity diagnostics, and
//! ranking.

use std::fmt;
use std::str::FromStr;

use crate::configbf::{config_scan, default_config_grid, Configuration};
use crate::par::{ordered_map, Parallelism};
use crate::priors::{cefn_grid, EffectPrior, Family, PriorGrid};
use crate::record::{evaluate_grid, BfMethod, SnpRecord};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScanMethod {
    Abf,
    Corrected,
    Laplace,
    Cefn,
}

impl ScanMethod {
    pub fn name(self) -> &'static str {
        match self {
            ScanMethod::Abf => "abf",
            ScanMethod::Corrected => "corrected",
            ScanMethod::Laplace => "laplace",
            ScanMethod::Cefn => "cefn",
        }
    }
}

impl fmt::Display for ScanMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScanMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "abf" => Ok(ScanMethod::Abf),
            "corrected" | "abf_corrected" => Ok(ScanMethod::Corrected),
            "laplace" | "bfhat" => Ok(ScanMethod::Laplace),
            "cefn" => Ok(ScanMethod::Cefn),
            other => Err(Error::InvalidInput(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanConfig {
    /// ES or EE; CEFN variants are reduced to their base family.
    pub family: Family,
    pub grid: PriorGrid,
    pub methods: Vec<ScanMethod>,
    pub fix: bool,
    pub maxh: bool,
    pub cefn_k: f64,
    /// Use the t-to-normal corrected ABF for the fix, maxH and CEFN columns.
    pub corrected: bool,
    /// Report the best configuration per SNP.
    pub configurations: bool,
    pub parallelism: Parallelism,
}

impl ScanConfig {
    pub fn new(grid: PriorGrid, methods: Vec<ScanMethod>) -> Self {
        Self {
            family: grid.family().base(),
            grid,
            methods,
            fix: false,
            maxh: false,
            cefn_k: crate::configbf::DEFAULT_CONFIG_K,
            corrected: false,
            configurations: false,
            parallelism: Parallelism::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::InvalidInput("at least one method is required".into()));
        }
        if self.grid.is_empty() {
            return Err(Error::InvalidInput("empty prior grid".into()));
        }
        if !(self.cefn_k >= 0.0) {
            return Err(Error::InvalidInput(format!("CEFN k must be non-negative, got {}", self.cefn_k)));
        }
        Ok(())
    }

    fn side_method(&self) -> BfMethod {
        if self.corrected {
            BfMethod::Corrected
        } else {
            BfMethod::Abf
        }
    }

    fn side_grid(&self, fix: bool) -> Result<PriorGrid> {
        let priors = self
            .grid
            .marginals()
            .into_iter()
            .map(|m| if fix { EffectPrior::new(self.family, 0.0, m) } else { EffectPrior::new(self.family, m, 0.0) })
            .collect::<Result<Vec<_>>>()?;
        PriorGrid::uniform(priors)
    }

    fn cefn_family(&self) -> Family {
        if self.family.is_standardized() {
            Family::CefnEs
        } else {
            Family::CefnEe
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub snp: String,
    pub gene: Option<String>,
    /// Grid-averaged log10 BF per requested method; `None` where it failed.
    pub bf_av: Vec<(ScanMethod, Option<f64>)>,
    pub bf_fix: Option<f64>,
    pub bf_maxh: Option<f64>,
    /// Per-subgroup effect estimate and standard error.
    pub subgroups: Vec<Option<(f64, f64)>>,
    pub best_config: Option<(Configuration, f64)>,
    /// Laplace fell back to the corrected ABF.
    pub fallback: bool,
    pub error: Option<String>,
}

impl ScanRow {
    pub fn method(&self, m: ScanMethod) -> Option<f64> {
        self.bf_av.iter().find(|(k, _)| *k == m).and_then(|(_, v)| *v)
    }

    pub fn bf_cefn(&self) -> Option<f64> {
        self.method(ScanMethod::Cefn)
    }

    /// log10 BF_cefn − log10 BF_fix.
    pub fn cefn_minus_fix(&self) -> Option<f64> {
        Some(self.bf_cefn()? - self.bf_fix?)
    }

    /// log10 BF_maxH − log10 BF_fix.
    pub fn maxh_minus_fix(&self) -> Option<f64> {
        Some(self.bf_maxh? - self.bf_fix?)
    }

    pub fn is_flagged(&self) -> bool {
        self.error.is_some()
    }
}

struct Prepared {
    fix: Option<PriorGrid>,
    maxh: Option<PriorGrid>,
    cefn: Option<PriorGrid>,
    config: Option<PriorGrid>,
}

fn prepare(cfg: &ScanConfig) -> Result<Prepared> {
    cfg.validate()?;
    let cefn = if cfg.methods.contains(&ScanMethod::Cefn) {
        Some(cefn_grid(cfg.cefn_family(), &cfg.grid.marginals(), cfg.cefn_k)?)
    } else {
        None
    };
    Ok(Prepared {
        fix: if cfg.fix { Some(cfg.side_grid(true)?) } else { None },
        maxh: if cfg.maxh { Some(cfg.side_grid(false)?) } else { None },
        cefn,
        config: if cfg.configurations { Some(default_config_grid()) } else { None },
    })
}

/// Errors when `record` lacks what the configured methods need.
pub fn check_compatible(record: &SnpRecord, cfg: &ScanConfig) -> Result<()> {
    if cfg.methods.contains(&ScanMethod::Laplace) && !record.is_case_control() {
        if let Err(Error::MissingSuffStats(_)) = record.suffstats() {
            return Err(Error::Unsupported("the Laplace method needs sufficient statistics or raw data".into()));
        }
    }
    if cfg.family.is_standardized() && !record.is_case_control() {
        let s = record.summaries()?;
        if s.iter().any(|s| s.informative && s.delta2.is_none()) {
            return Err(Error::Unsupported("standardized priors need residual sds in the input".into()));
        }
    }
    Ok(())
}

fn scan_one(record: &SnpRecord, cfg: &ScanConfig, prep: &Prepared) -> ScanRow {
    let mut error: Option<String> = None;
    let mut fallback = false;
    let mut keep = |r: Result<crate::abf::BFResult>, error: &mut Option<String>| match r {
        Ok(b) => {
            fallback |= b.fallback;
            Some(b.log10_bf)
        }
        Err(e) => {
            error.get_or_insert_with(|| e.to_string());
            None
        }
    };
    let bf_av = cfg
        .methods
        .iter()
        .map(|&m| {
            let r = match m {
                ScanMethod::Abf => evaluate_grid(record, &cfg.grid, BfMethod::Abf),
                ScanMethod::Corrected => evaluate_grid(record, &cfg.grid, BfMethod::Corrected),
                ScanMethod::Laplace => evaluate_grid(record, &cfg.grid, BfMethod::Laplace),
                ScanMethod::Cefn => evaluate_grid(record, prep.cefn.as_ref().expect("prepared"), cfg.side_method()),
            };
            (m, keep(r, &mut error))
        })
        .collect();
    let bf_fix = prep.fix.as_ref().and_then(|g| keep(evaluate_grid(record, g, cfg.side_method()), &mut error));
    let bf_maxh = prep.maxh.as_ref().and_then(|g| keep(evaluate_grid(record, g, cfg.side_method()), &mut error));
    let best_config = prep.config.as_ref().and_then(|g| {
        match config_scan(record, g, cfg.side_method(), Parallelism::Sequential) {
            Ok(rows) => rows
                .into_iter()
                .filter_map(|(c, r)| r.ok().map(|b| (c, b.log10_bf)))
                .max_by(|a, b| a.1.total_cmp(&b.1)),
            Err(e) => {
                error.get_or_insert_with(|| e.to_string());
                None
            }
        }
    });
    ScanRow {
        snp: record.id.clone(),
        gene: record.gene.clone(),
        bf_av,
        bf_fix,
        bf_maxh,
        subgroups: record.subgroups.iter().map(|d| d.as_ref().map(|d| d.effect_se())).collect(),
        best_config,
        fallback,
        error,
    }
}

/// One row per record in input order; per-record failures become flagged rows.
pub fn scan(records: &[SnpRecord], cfg: &ScanConfig) -> Result<Vec<ScanRow>> {
    if records.is_empty() {
        return Err(Error::InvalidInput("empty input".into()));
    }
    let prep = prepare(cfg)?;
    check_compatible(&records[0], cfg)?;
    Ok(ordered_map(records, cfg.parallelism, |r| scan_one(r, cfg, &prep)))
}

/// Streaming scan: records are pulled in chunks, each chunk evaluated with
/// the configured parallelism, and rows yielded in input order.
pub struct ScanStream<I> {
    input: I,
    cfg: ScanConfig,
    prep: Prepared,
    chunk: usize,
    buffer: std::vec::IntoIter<Result<ScanRow>>,
    checked: bool,
}

impl<I: Iterator<Item = Result<SnpRecord>>> Iterator for ScanStream<I> {
    type Item = Result<ScanRow>;

    fn next(&mut self) -> Option<Self::Item> {
        if let Some(r) = self.buffer.next() {
            return Some(r);
        }
        let mut batch = Vec::with_capacity(self.chunk);
        for item in self.input.by_ref() {
            match item {
                Ok(rec) => {
                    batch.push(Ok(rec));
                    if batch.len() == self.chunk {
                        break;
                    }
                }
                Err(e) => {
                    batch.push(Err(e));
                    break;
                }
            }
        }
        if batch.is_empty() {
            return None;
        }
        if !self.checked {
            if let Some(Ok(first)) = batch.first() {
                if let Err(e) = check_compatible(first, &self.cfg) {
                    self.buffer = vec![Err(e)].into_iter();
                    self.input_exhaust();
                    return self.buffer.next();
                }
            }
            self.checked = true;
        }
        let (cfg, prep) = (&self.cfg, &self.prep);
        let rows = ordered_map(&batch, cfg.parallelism, |item| match item {
            Ok(rec) => Ok(scan_one(rec, cfg, prep)),
            Err(e) => Err(Error::InvalidInput(e.to_string())),
        });
        self.buffer = rows.into_iter();
        self.buffer.next()
    }
}

impl<I: Iterator<Item = Result<SnpRecord>>> ScanStream<I> {
    fn input_exhaust(&mut self) {
        for _ in self.input.by_ref() {}
    }
}

pub fn scan_stream<I>(input: I, cfg: ScanConfig, chunk: usize) -> Result<ScanStream<I::IntoIter>>
where
    I: IntoIterator<Item = Result<SnpRecord>>,
{
    let prep = prepare(&cfg)?;
    Ok(ScanStream {
        input: input.into_iter(),
        cfg,
        prep,
        chunk: chunk.max(1),
        buffer: Vec::new().into_iter(),
        checked: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankColumn {
    Method(ScanMethod),
    Fix,
    MaxH,
}

impl FromStr for RankColumn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fix" => Ok(RankColumn::Fix),
            "maxh" => Ok(RankColumn::MaxH),
            other => other
                .parse::<ScanMethod>()
                .map(RankColumn::Method)
                .map_err(|_| Error::InvalidInput(format!("unknown ranking column '{s}'"))),
        }
    }
}

impl RankColumn {
    pub fn value(self, row: &ScanRow) -> Option<f64> {
        match self {
            RankColumn::Method(m) => row.method(m),
            RankColumn::Fix => row.bf_fix,
            RankColumn::MaxH => row.bf_maxh,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ranked {
    pub rank: usize,
    /// Index into the scanned rows.
    pub index: usize,
    pub value: f64,
}

/// Rows ordered by `column` descending, ties broken by SNP id. Rows without
/// a value in the column are left out. With `by_gene`, only the top row of
/// each gene is kept (rows without a gene form their own groups).
pub fn rank_and_group(rows: &[ScanRow], column: RankColumn, by_gene: bool) -> Result<Vec<Ranked>> {
    if let Some(r) = rows.first() {
        let present = match column {
            RankColumn::Method(m) => r.bf_av.iter().any(|(k, _)| *k == m),
            _ => rows.iter().any(|r| column.value(r).is_some()),
        };
        if !present {
            return Err(Error::InvalidInput(format!("ranking column {column:?} was not computed")));
        }
    }
    let mut idx: Vec<(usize, f64)> =
        rows.iter().enumerate().filter_map(|(i, r)| column.value(r).map(|v| (i, v))).collect();
    idx.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| rows[a.0].snp.cmp(&rows[b.0].snp)));
    let mut seen = std::collections::HashSet::new();
    let kept = idx.into_iter().filter(|(i, _)| match (&rows[*i].gene, by_gene) {
        (Some(g), true) => seen.insert(g.clone()),
        _ => true,
    });
    Ok(kept.enumerate().map(|(k, (index, value))| Ranked { rank: k + 1, index, value }).collect())
}

/// Rows supported only under heterogeneity: maxH or CEFN at or above
/// `threshold_log10` while the fixed-effect BF stays below it.
pub fn het_only(rows: &[ScanRow], threshold_log10: f64) -> Vec<usize> {
    rows.iter()
        .enumerate()
        .filter(|(_, r)| {
            let het = r.bf_maxh.is_some_and(|v| v >= threshold_log10) || r.bf_cefn().is_some_and(|v| v >= threshold_log10);
            het && r.bf_fix.is_some_and(|v| v < threshold_log10)
        })
        .map(|(i, _)| i)
        .collect()
}
