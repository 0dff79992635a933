use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hetbf::configbf::{config_scan, default_config_grid};
use hetbf::engine::{check_compatible, het_only, rank_and_group, scan, scan_stream, RankColumn, ScanConfig, ScanMethod};
use hetbf::oracle::{bf_quad_detailed, simulate_dataset, SimEffect, SimSpec, DEFAULT_REL_TOL};
use hetbf::abf::abf_average;
use hetbf::par::Parallelism;
use hetbf::priors::{
    cefn_grid, default_eqtl_grid, grid_from_marginal_heterogeneity, parse_grid_shorthand, Family, PriorGrid,
    EQTL_RATIOS, LIPIDS_MARGINALS,
};
use hetbf::record::{BfMethod, Dataset, SnpRecord, SubgroupData};
use hetbf::stats::suffstats_from_raw;

use crate::io::{
    emit_forest, fmt_g6, read_gene_map, read_grid_file, read_raw, read_suffstats, read_sumstats, write_suffstats,
    write_sumstats, CliError, CliResult, RawSpec, ResultLayout, ResultWriter,
};

#[derive(Parser, Debug)]
#[command(name = "hetbf", version, about = "Bayes factors for association across heterogeneous subgroups")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Grid-averaged Bayes factors for every SNP
    Scan(ScanArgs),
    /// Bayes factors for every pattern of active subgroups
    ConfigScan(ConfigArgs),
    /// Bayes factors by numerical integration (at most 3 subgroups)
    Oracle(OracleArgs),
    /// Simulate subgroup data
    Simulate(SimulateArgs),
    /// Effect estimates with 95% intervals for forest plots
    Forest(ForestArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Sumstats,
    Suffstats,
    Raw,
    CcRaw,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Model {
    Es,
    Ee,
    CefnEs,
    CefnEe,
    Cc,
}

impl Model {
    fn family(self) -> Family {
        match self {
            Model::Es | Model::CefnEs => Family::Es,
            Model::Ee | Model::CefnEe | Model::Cc => Family::Ee,
        }
    }

    fn is_cefn(self) -> bool {
        matches!(self, Model::CefnEs | Model::CefnEe)
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum MethodArg {
    Abf,
    Corrected,
    Laplace,
}

impl From<MethodArg> for BfMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Abf => BfMethod::Abf,
            MethodArg::Corrected => BfMethod::Corrected,
            MethodArg::Laplace => BfMethod::Laplace,
        }
    }
}

#[derive(Args, Debug)]
pub struct InputArgs {
    /// Summary-statistic or sufficient-statistic file
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "sumstats")]
    pub format: Format,
    /// Raw subgroup data as NAME:PHENO:GENO, repeated per subgroup
    #[arg(long = "raw", value_name = "NAME:PHENO:GENO")]
    pub raw: Vec<String>,
}

#[derive(Args, Debug)]
pub struct GridArgs {
    /// `eqtl`, `lipids`, or marginals and ratios as `m1,m2:r1,r2`
    #[arg(long)]
    pub grid: Option<String>,
    /// Grid file with header `family het_sd mean_sd cefn_k weight`
    #[arg(long, conflicts_with = "grid")]
    pub grid_file: Option<PathBuf>,
    /// CEFN k; also adds a CEFN column to `scan`
    #[arg(long)]
    pub cefn_k: Option<f64>,
}

#[derive(Args, Debug)]
pub struct ScanArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value = "es")]
    pub model: Model,
    /// Repeat to report several methods
    #[arg(long, value_enum, default_values = ["abf"])]
    pub method: Vec<MethodArg>,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Report the fixed-effect (no heterogeneity) Bayes factor
    #[arg(long)]
    pub fix: bool,
    /// Report the maximum-heterogeneity Bayes factor
    #[arg(long)]
    pub maxh: bool,
    /// Report the best configuration of active subgroups
    #[arg(long)]
    pub configs: bool,
    /// Sort output by this column (abf, corrected, laplace, cefn, fix, maxh)
    #[arg(long)]
    pub rank: Option<String>,
    /// Keep the top SNP per gene; file with header `snp gene`
    #[arg(long, requires = "rank")]
    pub gene_map: Option<PathBuf>,
    /// Keep SNPs whose maxH or CEFN log10 BF reaches this value while the fixed one does not
    #[arg(long, requires = "fix")]
    pub het_only: Option<f64>,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ConfigArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value = "cefn-es")]
    pub model: Model,
    #[arg(long, value_enum, default_value = "abf")]
    pub method: MethodArg,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value = "es")]
    pub model: Model,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = DEFAULT_REL_TOL)]
    pub rel_tol: f64,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SimFormat {
    Suffstats,
    Sumstats,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Sample size per subgroup, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    pub n: Vec<usize>,
    /// Allele frequency per subgroup, or one value for all
    #[arg(long, value_delimiter = ',', default_values_t = [0.3])]
    pub freq: Vec<f64>,
    /// Residual sd per subgroup, or one value for all
    #[arg(long, value_delimiter = ',', default_values_t = [1.0])]
    pub sigma: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    pub snps: usize,
    /// `null`, `es:BBAR:PHI`, `ee:BETA:PSI` or `per:b1,b2,...`
    #[arg(long, default_value = "null")]
    pub effect: String,
    #[arg(long, required = true)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "suffstats")]
    pub format: SimFormat,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ForestArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Only these SNPs (repeatable)
    #[arg(long)]
    pub snp: Vec<String>,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

fn output(path: &Option<PathBuf>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load(input: &InputArgs, model: Model) -> CliResult<Dataset> {
    let raw = || -> CliResult<Vec<RawSpec>> {
        if input.raw.is_empty() {
            return Err(CliError::Usage("raw formats need at least one --raw NAME:PHENO:GENO".into()));
        }
        input.raw.iter().map(|s| s.parse()).collect()
    };
    let file = || input.input.clone().ok_or_else(|| CliError::Usage("--input is required for this format".into()));
    if (model == Model::Cc) != (input.format == Format::CcRaw) {
        return Err(CliError::Usage("--model cc goes with --format cc-raw".into()));
    }
    match input.format {
        Format::Sumstats => read_sumstats(&file()?),
        Format::Suffstats => read_suffstats(&file()?),
        Format::Raw => read_raw(&raw()?, false),
        Format::CcRaw => read_raw(&raw()?, true),
    }
}

fn base_grid(args: &GridArgs, family: Family) -> CliResult<PriorGrid> {
    if let Some(path) = &args.grid_file {
        return read_grid_file(path);
    }
    let usage = |e: hetbf::Error| CliError::Usage(e.to_string());
    match args.grid.as_deref() {
        None | Some("eqtl") => Ok(default_eqtl_grid(family)),
        Some("lipids") => grid_from_marginal_heterogeneity(family, &LIPIDS_MARGINALS, &EQTL_RATIOS, None).map_err(usage),
        Some(s) => {
            let (m, r) = parse_grid_shorthand(s).map_err(usage)?;
            grid_from_marginal_heterogeneity(family, &m, &r, None).map_err(usage)
        }
    }
}

fn cefn_k(args: &GridArgs) -> CliResult<f64> {
    let k = args.cefn_k.unwrap_or(hetbf::configbf::DEFAULT_CONFIG_K);
    if !(k >= 0.0) || !k.is_finite() {
        return Err(CliError::Usage(format!("--cefn-k must be a non-negative number, got {k}")));
    }
    Ok(k)
}

fn cefn_family(family: Family) -> Family {
    if family.is_standardized() {
        Family::CefnEs
    } else {
        Family::CefnEe
    }
}

/// Grid actually evaluated: CEFN models turn the marginals into a CEFN grid.
fn model_grid(args: &GridArgs, model: Model) -> CliResult<PriorGrid> {
    let grid = base_grid(args, model.family())?;
    if model.is_cefn() && !grid.family().is_cefn() {
        return cefn_grid(cefn_family(model.family()), &grid.marginals(), cefn_k(args)?).map_err(CliError::from);
    }
    Ok(grid)
}

fn run_scan(a: ScanArgs) -> CliResult<()> {
    let ds = load(&a.input, a.model)?;
    let methods: Vec<MethodArg> = {
        let mut m = a.method.clone();
        m.dedup();
        m
    };
    let has_suff = matches!(a.input.format, Format::Suffstats | Format::Raw);
    if methods.contains(&MethodArg::Laplace) && !has_suff {
        return Err(CliError::Usage("--method laplace needs --format suffstats or raw".into()));
    }
    if a.model == Model::Cc && methods.iter().any(|m| *m != MethodArg::Abf) {
        return Err(CliError::Usage("--model cc supports --method abf only".into()));
    }
    if a.model.is_cefn() && methods.contains(&MethodArg::Laplace) {
        return Err(CliError::Usage("CEFN models are not available with --method laplace".into()));
    }
    let grid = base_grid(&a.grid, a.model.family())?;
    let mut scan_methods: Vec<ScanMethod> = Vec::new();
    if !a.model.is_cefn() {
        scan_methods.extend(methods.iter().map(|m| match m {
            MethodArg::Abf => ScanMethod::Abf,
            MethodArg::Corrected => ScanMethod::Corrected,
            MethodArg::Laplace => ScanMethod::Laplace,
        }));
    }
    if a.model.is_cefn() || a.grid.cefn_k.is_some() {
        scan_methods.push(ScanMethod::Cefn);
    }
    let mut cfg = ScanConfig::new(grid, scan_methods);
    cfg.family = a.model.family();
    cfg.fix = a.fix;
    cfg.maxh = a.maxh;
    cfg.configurations = a.configs;
    cfg.cefn_k = cefn_k(&a.grid)?;
    cfg.corrected = methods.contains(&MethodArg::Corrected);
    cfg.parallelism = Parallelism::from_threads(a.threads);
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let mut layout = ResultLayout::from_config(&cfg);
    let out = output(&a.out)?;
    if ds.snps.is_empty() {
        ResultWriter::new(layout, out)?.finish()?;
        return Ok(());
    }
    check_compatible(&ds.snps[0], &cfg)?;
    let mut snps = ds.snps;
    if let Some(path) = &a.gene_map {
        let genes = read_gene_map(path)?;
        for s in &mut snps {
            s.gene = genes.get(&s.id).cloned();
        }
    }
    if a.rank.is_none() && a.het_only.is_none() {
        let stream = scan_stream(snps.into_iter().map(Ok), cfg, 4096)?;
        let mut w = ResultWriter::new(layout, out)?;
        for row in stream {
            w.row(&row?, None)?;
        }
        w.finish()?;
        return Ok(());
    }
    let rows = scan(&snps, &cfg)?;
    let keep: Vec<usize> = match a.het_only {
        Some(t) => het_only(&rows, t),
        None => (0..rows.len()).collect(),
    };
    match &a.rank {
        Some(col) => {
            let col: RankColumn = col.parse().map_err(|e: hetbf::Error| CliError::Usage(e.to_string()))?;
            let ranked = rank_and_group(&rows, col, a.gene_map.is_some()).map_err(|e| CliError::Usage(e.to_string()))?;
            layout.rank = true;
            let mut w = ResultWriter::new(layout, out)?;
            for r in ranked.iter().filter(|r| keep.contains(&r.index)) {
                w.row(&rows[r.index], Some(r.rank))?;
            }
            w.finish()?;
        }
        None => {
            let mut w = ResultWriter::new(layout, out)?;
            for &i in &keep {
                w.row(&rows[i], None)?;
            }
            w.finish()?;
        }
    }
    Ok(())
}

fn run_config_scan(a: ConfigArgs) -> CliResult<()> {
    let ds = load(&a.input, a.model)?;
    if a.method == MethodArg::Laplace && a.model.is_cefn() {
        return Err(CliError::Usage("CEFN models are not available with --method laplace".into()));
    }
    let grid = if a.grid.grid.is_none() && a.grid.grid_file.is_none() && a.model == Model::CefnEs && a.grid.cefn_k.is_none() {
        default_config_grid()
    } else {
        model_grid(&a.grid, a.model)?
    };
    let par = Parallelism::from_threads(a.threads);
    let mut out = output(&a.out)?;
    let wr = |e: io::Error| CliError::Data(format!("write failed: {e}"));
    writeln!(out, "snp\tconfig\tlog10_bf\terror").map_err(wr)?;
    for rec in &ds.snps {
        let rows = config_scan(rec, &grid, a.method.into(), par)?;
        for (c, r) in rows {
            let (v, e) = match r {
                Ok(b) => (fmt_g6(b.log10_bf), "NA".to_string()),
                Err(e) => ("NA".to_string(), e.to_string().replace(['\t', '\n'], " ")),
            };
            writeln!(out, "{}\t{c}\t{v}\t{e}", rec.id).map_err(wr)?;
        }
    }
    out.flush().map_err(wr)
}

fn run_oracle(a: OracleArgs) -> CliResult<()> {
    if !matches!(a.input.format, Format::Suffstats | Format::Raw) {
        return Err(CliError::Usage("oracle needs --format suffstats or raw".into()));
    }
    if !(a.rel_tol > 0.0) {
        return Err(CliError::Usage("--rel-tol must be positive".into()));
    }
    let ds = load(&a.input, a.model)?;
    let grid = model_grid(&a.grid, a.model)?;
    let par = Parallelism::from_threads(a.threads);
    let results = hetbf::par::ordered_map(&ds.snps, par, |rec| -> hetbf::Result<(f64, f64)> {
        let suff = rec.suffstats()?;
        let mut comps = Vec::new();
        let mut err: f64 = 0.0;
        for (p, w) in grid.points() {
            let r = bf_quad_detailed(&suff, p, a.rel_tol)?;
            err = err.max(r.rel_err);
            comps.push((r.bf.log10_bf, *w));
        }
        Ok((abf_average(&comps)?, err))
    });
    let mut out = output(&a.out)?;
    let wr = |e: io::Error| CliError::Data(format!("write failed: {e}"));
    writeln!(out, "snp\tlog10_bf_quad\trel_err\terror").map_err(wr)?;
    for (rec, r) in ds.snps.iter().zip(results) {
        match r {
            Ok((v, e)) => writeln!(out, "{}\t{}\t{}\tNA", rec.id, fmt_g6(v), fmt_g6(e)),
            Err(e) => writeln!(out, "{}\tNA\tNA\t{}", rec.id, e.to_string().replace(['\t', '\n'], " ")),
        }
        .map_err(wr)?;
    }
    out.flush().map_err(wr)
}

fn per_subgroup(v: &[f64], s: usize, what: &str) -> CliResult<Vec<f64>> {
    match v.len() {
        1 => Ok(vec![v[0]; s]),
        k if k == s => Ok(v.to_vec()),
        k => Err(CliError::Usage(format!("--{what} has {k} values for {s} subgroups"))),
    }
}

fn parse_effect(s: &str, n_sub: usize) -> CliResult<SimEffect> {
    let bad = || CliError::Usage(format!("cannot parse effect '{s}'"));
    let parts: Vec<&str> = s.split(':').collect();
    let f = |x: &str| x.parse::<f64>().map_err(|_| bad());
    match parts.as_slice() {
        ["null"] => Ok(SimEffect::Null),
        ["es", b, p] => Ok(SimEffect::Es { bbar: f(b)?, phi: f(p)? }),
        ["ee", b, p] => Ok(SimEffect::Ee { beta_bar: f(b)?, psi: f(p)? }),
        ["per", list] => {
            let v = list.split(',').map(f).collect::<CliResult<Vec<_>>>()?;
            if v.len() != n_sub {
                return Err(CliError::Usage(format!("effect lists {} values for {n_sub} subgroups", v.len())));
            }
            Ok(SimEffect::PerSubgroup(v))
        }
        _ => Err(bad()),
    }
}

fn run_simulate(a: SimulateArgs) -> CliResult<()> {
    let s = a.n.len();
    let spec = SimSpec {
        n: a.n.clone(),
        allele_freq: per_subgroup(&a.freq, s, "freq")?,
        sigma: per_subgroup(&a.sigma, s, "sigma")?,
        effect: parse_effect(&a.effect, s)?,
    };
    let mut snps = Vec::with_capacity(a.snps);
    for i in 0..a.snps {
        let data = simulate_dataset(&spec, a.seed.wrapping_add(i as u64)).map_err(|e| CliError::Usage(e.to_string()))?;
        let subs = data
            .iter()
            .map(|d| Ok(Some(SubgroupData::from_suffstats(suffstats_from_raw(&d.y, &d.g)?)?)))
            .collect::<hetbf::Result<Vec<_>>>()?;
        snps.push(SnpRecord::new(format!("snp{}", i + 1), subs));
    }
    let ds = Dataset { subgroup_names: (1..=s).map(|k| format!("s{k}")).collect(), snps };
    let mut out = output(&a.out)?;
    match a.format {
        SimFormat::Suffstats => write_suffstats(&ds, &mut out)?,
        SimFormat::Sumstats => write_sumstats(&ds, &mut out)?,
    }
    out.flush().map_err(|e| CliError::Data(format!("write failed: {e}")))
}

fn run_forest(a: ForestArgs) -> CliResult<()> {
    let model = if a.input.format == Format::CcRaw { Model::Cc } else { Model::Ee };
    let ds = load(&a.input, model)?;
    let rows: Vec<hetbf::engine::ScanRow> = ds
        .snps
        .iter()
        .filter(|r| a.snp.is_empty() || a.snp.contains(&r.id))
        .map(|r| hetbf::engine::ScanRow {
            snp: r.id.clone(),
            gene: r.gene.clone(),
            bf_av: Vec::new(),
            bf_fix: None,
            bf_maxh: None,
            subgroups: r.subgroups.iter().map(|d| d.as_ref().map(|d| d.effect_se())).collect(),
            best_config: None,
            fallback: false,
            error: None,
        })
        .collect();
    emit_forest(&rows, &ds.subgroup_names, output(&a.out)?)?;
    Ok(())
}

pub fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Scan(a) => run_scan(a),
        Command::ConfigScan(a) => run_config_scan(a),
        Command::Oracle(a) => run_oracle(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Forest(a) => run_forest(a),
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("hetbf: {e}");
            e.exit_code()
        }
    }
}
