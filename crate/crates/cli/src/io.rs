//! Input parsing and TSV output.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use hetbf::casecontrol::logistic_mle;
use hetbf::engine::{ScanConfig, ScanMethod, ScanRow};
use hetbf::priors::{EffectPrior, Family, PriorGrid};
use hetbf::record::{Dataset, SnpRecord, SubgroupData};
use hetbf::stats::{suffstats_from_raw, summary_from_effect_se, SubgroupSuffStats};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<hetbf::Error> for CliError {
    fn from(e: hetbf::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn at(path: &Path, line: usize, msg: impl fmt::Display) -> CliError {
    CliError::Data(format!("{}:{line}: {msg}", path.display()))
}

fn io_err(path: &Path, e: io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| io_err(path, e))
}

/// Non-empty lines split on tabs or spaces, with 1-based line numbers.
fn rows(path: &Path) -> CliResult<Vec<(usize, Vec<String>)>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        out.push((i + 1, line.split_whitespace().map(str::to_owned).collect()));
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(path: &Path, line: usize, field: &str, value: &str) -> CliResult<T> {
    value.parse().map_err(|_| at(path, line, format!("{field} is not a number: '{value}'")))
}

fn check_header(path: &Path, got: Option<&(usize, Vec<String>)>, allowed: &[&[&str]]) -> CliResult<usize> {
    let Some((line, cols)) = got else {
        return Err(CliError::Data(format!("{}: missing header", path.display())));
    };
    for (k, want) in allowed.iter().enumerate() {
        if cols.len() == want.len() && cols.iter().zip(want.iter()).all(|(a, b)| a == b) {
            return Ok(k);
        }
    }
    Err(at(path, *line, format!("malformed header, expected '{}'", allowed[0].join("\t"))))
}

/// Collects per-(snp, subgroup) entries into records in first-appearance order.
#[derive(Default)]
struct Builder {
    names: Vec<String>,
    name_idx: HashMap<String, usize>,
    snps: Vec<(String, Vec<Option<SubgroupData>>)>,
    snp_idx: HashMap<String, usize>,
}

impl Builder {
    fn insert(&mut self, path: &Path, line: usize, snp: &str, subgroup: &str, data: SubgroupData) -> CliResult<()> {
        let s = *self.name_idx.entry(subgroup.to_owned()).or_insert_with(|| {
            self.names.push(subgroup.to_owned());
            self.names.len() - 1
        });
        let r = *self.snp_idx.entry(snp.to_owned()).or_insert_with(|| {
            self.snps.push((snp.to_owned(), Vec::new()));
            self.snps.len() - 1
        });
        let slots = &mut self.snps[r].1;
        if slots.len() <= s {
            slots.resize(s + 1, None);
        }
        if slots[s].is_some() {
            return Err(at(path, line, format!("duplicate entry for snp '{snp}' in subgroup '{subgroup}'")));
        }
        slots[s] = Some(data);
        Ok(())
    }

    fn finish(self) -> Dataset {
        let s = self.names.len();
        Dataset {
            subgroup_names: self.names,
            snps: self
                .snps
                .into_iter()
                .map(|(id, mut subs)| {
                    subs.resize(s, None);
                    SnpRecord::new(id, subs)
                })
                .collect(),
        }
    }
}

const SUMSTATS: &[&str] = &["snp", "subgroup", "n", "beta_hat", "se_beta"];
const SUMSTATS_SIGMA: &[&str] = &["snp", "subgroup", "n", "beta_hat", "se_beta", "sigma_hat"];
const SUFFSTATS: &[&str] = &["snp", "subgroup", "n", "sum_y", "sum_g", "sum_yy", "sum_gg", "sum_yg"];

pub fn read_sumstats(path: &Path) -> CliResult<Dataset> {
    let rows = rows(path)?;
    check_header(path, rows.first(), &[SUMSTATS_SIGMA, SUMSTATS])?;
    let width = rows[0].1.len();
    let mut b = Builder::default();
    for (line, f) in &rows[1..] {
        if f.len() != width {
            return Err(at(path, *line, format!("expected {width} fields, found {}", f.len())));
        }
        let n: usize = num(path, *line, "n", &f[2])?;
        let beta: f64 = num(path, *line, "beta_hat", &f[3])?;
        let se: f64 = num(path, *line, "se_beta", &f[4])?;
        let sigma = match f.get(5).map(String::as_str) {
            None | Some("NA") => None,
            Some(v) => Some(num::<f64>(path, *line, "sigma_hat", v)?),
        };
        let summary = summary_from_effect_se(beta, se, n, sigma).map_err(|e| at(path, *line, e))?;
        b.insert(path, *line, &f[0], &f[1], SubgroupData::from_summary(summary))?;
    }
    Ok(b.finish())
}

pub fn read_suffstats(path: &Path) -> CliResult<Dataset> {
    let rows = rows(path)?;
    check_header(path, rows.first(), &[SUFFSTATS])?;
    let mut b = Builder::default();
    for (line, f) in &rows[1..] {
        if f.len() != SUFFSTATS.len() {
            return Err(at(path, *line, format!("expected {} fields, found {}", SUFFSTATS.len(), f.len())));
        }
        let v: Vec<f64> = (3..8).map(|k| num(path, *line, SUFFSTATS[k], &f[k])).collect::<CliResult<_>>()?;
        let s = SubgroupSuffStats {
            n: num(path, *line, "n", &f[2])?,
            sum_y: v[0],
            sum_g: v[1],
            sum_yy: v[2],
            sum_gg: v[3],
            sum_yg: v[4],
        };
        let data = SubgroupData::from_suffstats(s).map_err(|e| at(path, *line, e))?;
        b.insert(path, *line, &f[0], &f[1], data)?;
    }
    Ok(b.finish())
}

/// One subgroup of raw data: a phenotype file `id y` and a genotype file
/// `id <snp> [<snp> ...]`, joined on `id`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSpec {
    pub subgroup: String,
    pub pheno: PathBuf,
    pub geno: PathBuf,
}

impl std::str::FromStr for RawSpec {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        let parts: Vec<&str> = s.splitn(3, ':').collect();
        match parts.as_slice() {
            [name, p, g] if !name.is_empty() => {
                Ok(RawSpec { subgroup: (*name).into(), pheno: PathBuf::from(p), geno: PathBuf::from(g) })
            }
            _ => Err(CliError::Usage(format!("raw input '{s}' must be NAME:PHENO:GENO"))),
        }
    }
}

fn read_pheno(path: &Path, binary: bool) -> CliResult<HashMap<String, f64>> {
    let rows = rows(path)?;
    check_header(path, rows.first(), &[&["id", "y"]])?;
    let mut map = HashMap::new();
    for (line, f) in &rows[1..] {
        if f.len() != 2 {
            return Err(at(path, *line, "expected 2 fields"));
        }
        if f[1] == "NA" {
            continue;
        }
        let y: f64 = num(path, *line, "y", &f[1])?;
        if binary && y != 0.0 && y != 1.0 {
            return Err(at(path, *line, format!("case-control phenotype must be 0 or 1, got {y}")));
        }
        if map.insert(f[0].clone(), y).is_some() {
            return Err(at(path, *line, format!("duplicate id '{}'", f[0])));
        }
    }
    Ok(map)
}

pub fn read_raw(specs: &[RawSpec], case_control: bool) -> CliResult<Dataset> {
    let mut b = Builder::default();
    for spec in specs {
        let pheno = read_pheno(&spec.pheno, case_control)?;
        let rows = rows(&spec.geno)?;
        let Some((hline, header)) = rows.first() else {
            return Err(CliError::Data(format!("{}: missing header", spec.geno.display())));
        };
        if header.len() < 2 || header[0] != "id" {
            return Err(at(&spec.geno, *hline, "malformed header, expected 'id' followed by SNP ids"));
        }
        let snps = &header[1..];
        let mut cols: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); snps.len()];
        let mut seen = std::collections::HashSet::new();
        for (line, f) in &rows[1..] {
            if f.len() != header.len() {
                return Err(at(&spec.geno, *line, format!("expected {} fields, found {}", header.len(), f.len())));
            }
            if !seen.insert(f[0].clone()) {
                return Err(at(&spec.geno, *line, format!("duplicate id '{}'", f[0])));
            }
            let Some(&y) = pheno.get(&f[0]) else { continue };
            for (k, v) in f[1..].iter().enumerate() {
                if v == "NA" {
                    continue;
                }
                cols[k].0.push(y);
                cols[k].1.push(num(&spec.geno, *line, "genotype", v)?);
            }
        }
        for (snp, (y, g)) in snps.iter().zip(cols) {
            let data = if case_control {
                SubgroupData::CaseControl(logistic_mle(&y, &g).map_err(|e| {
                    CliError::Data(format!("{}: snp '{snp}': {e}", spec.geno.display()))
                })?)
            } else {
                let s = suffstats_from_raw(&y, &g)
                    .map_err(|e| CliError::Data(format!("{}: snp '{snp}': {e}", spec.geno.display())))?;
                SubgroupData::from_suffstats(s)
                    .map_err(|e| CliError::Data(format!("{}: snp '{snp}': {e}", spec.geno.display())))?
            };
            b.insert(&spec.geno, *hline, snp, &spec.subgroup, data)?;
        }
    }
    Ok(b.finish())
}

pub fn write_suffstats<W: Write>(ds: &Dataset, mut w: W) -> CliResult<()> {
    let wr = |e: io::Error| CliError::Data(format!("write failed: {e}"));
    writeln!(w, "{}", SUFFSTATS.join("\t")).map_err(wr)?;
    for rec in &ds.snps {
        for (name, d) in ds.subgroup_names.iter().zip(&rec.subgroups) {
            match d {
                None => {}
                Some(SubgroupData::Linear { suff: Some(s), .. }) => writeln!(
                    w,
                    "{}\t{name}\t{}\t{}\t{}\t{}\t{}\t{}",
                    rec.id, s.n, s.sum_y, s.sum_g, s.sum_yy, s.sum_gg, s.sum_yg
                )
                .map_err(wr)?,
                Some(_) => {
                    return Err(CliError::Data(format!("snp '{}' has no sufficient statistics for '{name}'", rec.id)))
                }
            }
        }
    }
    Ok(())
}

pub fn write_sumstats<W: Write>(ds: &Dataset, mut w: W) -> CliResult<()> {
    let wr = |e: io::Error| CliError::Data(format!("write failed: {e}"));
    writeln!(w, "{}", SUMSTATS_SIGMA.join("\t")).map_err(wr)?;
    for rec in &ds.snps {
        for (name, d) in ds.subgroup_names.iter().zip(&rec.subgroups) {
            if let Some(SubgroupData::Linear { summary: s, .. }) = d {
                let sigma = s.sigma_hat2.map_or("NA".to_string(), |v| v.sqrt().to_string());
                writeln!(w, "{}\t{name}\t{}\t{}\t{}\t{sigma}", rec.id, s.n, s.beta_hat, s.se_beta).map_err(wr)?;
            }
        }
    }
    Ok(())
}

/// `x` to 6 significant digits in the style of `%g`.
pub fn fmt_g6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x > 0.0 { "Inf".into() } else { "-Inf".into() };
    }
    let sci = format!("{x:.5e}");
    let (mant, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if !(-5..6).contains(&exp) {
        let mant = mant.trim_end_matches('0').trim_end_matches('.');
        return format!("{mant}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs());
    }
    let s = format!("{x:.*}", (5 - exp) as usize);
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or("NA".into(), fmt_g6)
}

/// Which columns a results file carries.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultLayout {
    pub methods: Vec<ScanMethod>,
    pub fix: bool,
    pub maxh: bool,
    pub configurations: bool,
    pub rank: bool,
}

impl ResultLayout {
    pub fn from_config(cfg: &ScanConfig) -> Self {
        Self {
            methods: cfg.methods.clone(),
            fix: cfg.fix,
            maxh: cfg.maxh,
            configurations: cfg.configurations,
            rank: false,
        }
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = Vec::new();
        if self.rank {
            h.push("rank".into());
        }
        h.push("snp".into());
        h.extend(self.methods.iter().map(|m| format!("log10_bf_{m}")));
        if self.fix {
            h.push("log10_bf_fix".into());
        }
        if self.maxh {
            h.push("log10_bf_maxh".into());
        }
        if self.fix && self.methods.contains(&ScanMethod::Cefn) {
            h.push("cefn_minus_fix".into());
        }
        if self.fix && self.maxh {
            h.push("maxh_minus_fix".into());
        }
        if self.configurations {
            h.push("best_config".into());
            h.push("log10_bf_best_config".into());
        }
        h.push("fallback".into());
        h.push("error".into());
        h
    }

    fn cells(&self, row: &ScanRow, rank: Option<usize>) -> Vec<String> {
        let mut c = Vec::new();
        if self.rank {
            c.push(rank.map_or("NA".into(), |r| r.to_string()));
        }
        c.push(row.snp.clone());
        c.extend(self.methods.iter().map(|&m| opt(row.method(m))));
        if self.fix {
            c.push(opt(row.bf_fix));
        }
        if self.maxh {
            c.push(opt(row.bf_maxh));
        }
        if self.fix && self.methods.contains(&ScanMethod::Cefn) {
            c.push(opt(row.cefn_minus_fix()));
        }
        if self.fix && self.maxh {
            c.push(opt(row.maxh_minus_fix()));
        }
        if self.configurations {
            match &row.best_config {
                Some((cfg, v)) => {
                    c.push(cfg.to_string());
                    c.push(fmt_g6(*v));
                }
                None => c.extend(["NA".to_string(), "NA".to_string()]),
            }
        }
        c.push(u8::from(row.fallback).to_string());
        c.push(row.error.as_ref().map_or("NA".into(), |e| e.replace(['\t', '\n'], " ")));
        c
    }
}

pub struct ResultWriter<W: Write> {
    layout: ResultLayout,
    w: W,
}

impl<W: Write> ResultWriter<W> {
    pub fn new(layout: ResultLayout, mut w: W) -> CliResult<Self> {
        writeln!(w, "{}", layout.header().join("\t")).map_err(|e| CliError::Data(format!("write failed: {e}")))?;
        Ok(Self { layout, w })
    }

    pub fn row(&mut self, row: &ScanRow, rank: Option<usize>) -> CliResult<()> {
        writeln!(self.w, "{}", self.layout.cells(row, rank).join("\t"))
            .map_err(|e| CliError::Data(format!("write failed: {e}")))
    }

    pub fn finish(mut self) -> CliResult<W> {
        self.w.flush().map_err(|e| CliError::Data(format!("write failed: {e}")))?;
        Ok(self.w)
    }
}

pub fn write_results<'a, W: Write>(
    rows: impl IntoIterator<Item = &'a ScanRow>,
    layout: &ResultLayout,
    w: W,
) -> CliResult<W> {
    let mut out = ResultWriter::new(layout.clone(), w)?;
    for r in rows {
        out.row(r, None)?;
    }
    out.finish()
}

/// Forest-plot data: one line per SNP and subgroup with a 95% interval.
pub fn emit_forest<'a, W: Write>(
    rows: impl IntoIterator<Item = &'a ScanRow>,
    subgroup_names: &[String],
    mut w: W,
) -> CliResult<W> {
    let wr = |e: io::Error| CliError::Data(format!("write failed: {e}"));
    writeln!(w, "snp\tsubgroup\tbeta_hat\tci_lo\tci_hi").map_err(wr)?;
    for r in rows {
        for (name, s) in subgroup_names.iter().zip(&r.subgroups) {
            if let Some((b, se)) = s {
                let (lo, hi) = (b - 1.96 * se, b + 1.96 * se);
                writeln!(w, "{}\t{name}\t{}\t{}\t{}", r.snp, fmt_g6(*b), fmt_g6(lo), fmt_g6(hi)).map_err(wr)?;
            }
        }
    }
    w.flush().map_err(wr)?;
    Ok(w)
}

/// Grid file with header `family het_sd mean_sd cefn_k weight`; `cefn_k` is
/// `NA` for non-CEFN families.
pub fn read_grid_file(path: &Path) -> CliResult<PriorGrid> {
    let rows = rows(path)?;
    check_header(path, rows.first(), &[&["family", "het_sd", "mean_sd", "cefn_k", "weight"]])?;
    let mut points = Vec::new();
    for (line, f) in &rows[1..] {
        if f.len() != 5 {
            return Err(at(path, *line, format!("expected 5 fields, found {}", f.len())));
        }
        let family: Family = f[0].parse().map_err(|e| at(path, *line, e))?;
        let het: f64 = num(path, *line, "het_sd", &f[1])?;
        let mean: f64 = num(path, *line, "mean_sd", &f[2])?;
        let weight: f64 = num(path, *line, "weight", &f[4])?;
        let prior = if family.is_cefn() {
            let k: f64 = num(path, *line, "cefn_k", &f[3])?;
            EffectPrior::cefn(family, k, mean)
        } else {
            EffectPrior::new(family, het, mean)
        }
        .map_err(|e| at(path, *line, e))?;
        points.push((prior, weight));
    }
    if points.is_empty() {
        return Err(CliError::Data(format!("{}: grid has no points", path.display())));
    }
    PriorGrid::new(points).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Two-column `snp gene` map.
pub fn read_gene_map(path: &Path) -> CliResult<HashMap<String, String>> {
    let rows = rows(path)?;
    check_header(path, rows.first(), &[&["snp", "gene"]])?;
    let mut map = HashMap::new();
    for (line, f) in &rows[1..] {
        if f.len() != 2 {
            return Err(at(path, *line, "expected 2 fields"));
        }
        if map.insert(f[0].clone(), f[1].clone()).is_some() {
            return Err(at(path, *line, format!("duplicate snp '{}'", f[0])));
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt_g6(13.912345678), "13.9123");
        assert_eq!(fmt_g6(0.02), "0.02");
        assert_eq!(fmt_g6(-1.5e-7), "-1.5e-07");
        assert_eq!(fmt_g6(1234567.0), "1.23457e+06");
        assert_eq!(fmt_g6(100.0), "100");
        assert_eq!(fmt_g6(0.0), "0");
        assert_eq!(fmt_g6(999999.5), "1e+06");
    }

    #[test]
    fn raw_spec_parsing() {
        let r: RawSpec = "liver:p.tsv:g.tsv".parse().unwrap();
        assert_eq!(r.subgroup, "liver");
        assert!("liver:p.tsv".parse::<RawSpec>().is_err());
    }
}
