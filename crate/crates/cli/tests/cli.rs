use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hetbf_cli::io::{read_suffstats, read_sumstats, write_suffstats};
use tempfile::TempDir;

fn hetbf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hetbf")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &TempDir, name: &str, body: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

const SUMSTATS: &str = "snp\tsubgroup\tn\tbeta_hat\tse_beta\n\
rs1\tliver\t100\t0.3\t0.1\n\
rs1\tbrain\t120\t0.25\t0.09\n\
rs1\tblood\t90\t-0.05\t0.12\n";

#[test]
fn three_lines_make_one_record() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "a.tsv", SUMSTATS);
    let ds = read_sumstats(Path::new(&p)).unwrap();
    assert_eq!(ds.snps.len(), 1);
    assert_eq!(ds.subgroup_names, ["liver", "brain", "blood"]);
    assert!(ds.snps[0].subgroups.iter().all(Option::is_some));
}

#[test]
fn duplicate_row_names_its_line() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "dup.tsv", &format!("{SUMSTATS}rs1\tbrain\t120\t0.2\t0.09\n"));
    let err = read_sumstats(Path::new(&p)).unwrap_err().to_string();
    assert!(err.contains(":5:"), "{err}");
    let o = hetbf(&["scan", "-i", &p, "--model", "ee"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains(":5:"));
}

#[test]
fn suffstats_round_trip() {
    let dir = TempDir::new().unwrap();
    let o = hetbf(&["simulate", "--n", "30,40", "--snps", "3", "--seed", "9", "--effect", "per:0.2,-0.1"]);
    assert!(o.status.success());
    let p = write(&dir, "s.tsv", &stdout(&o));
    let ds = read_suffstats(Path::new(&p)).unwrap();
    let mut again = Vec::new();
    write_suffstats(&ds, &mut again).unwrap();
    assert_eq!(String::from_utf8(again).unwrap(), stdout(&o));
}

#[test]
fn simulate_is_reproducible_by_seed() {
    let a = hetbf(&["simulate", "--n", "25", "--snps", "2", "--seed", "3"]);
    let b = hetbf(&["simulate", "--n", "25", "--snps", "2", "--seed", "3"]);
    let c = hetbf(&["simulate", "--n", "25", "--snps", "2", "--seed", "4"]);
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
    assert_eq!(hetbf(&["simulate", "--n", "25"]).status.code(), Some(1));
}

#[test]
fn forest_interval() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "f.tsv", "snp\tsubgroup\tn\tbeta_hat\tse_beta\nrs9\tA\t50\t1\t0.5\n");
    let o = hetbf(&["forest", "-i", &p]);
    assert!(o.status.success());
    let line = stdout(&o).lines().nth(1).unwrap().to_string();
    let f: Vec<&str> = line.split('\t').collect();
    assert_eq!(f[..2], ["rs9", "A"]);
    let lo: f64 = f[3].parse().unwrap();
    let hi: f64 = f[4].parse().unwrap();
    assert!((lo - 0.02).abs() < 1e-9 && (hi - 1.98).abs() < 1e-9, "{line}");
}

#[test]
fn empty_input_gives_header_only() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "e.tsv", "snp\tsubgroup\tn\tbeta_hat\tse_beta\n");
    let o = hetbf(&["scan", "-i", &p, "--fix"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "snp\tlog10_bf_abf\tlog10_bf_fix\tfallback\terror\n");
}

#[test]
fn column_order_is_stable() {
    let dir = TempDir::new().unwrap();
    let sim = hetbf(&["simulate", "--n", "40,50", "--snps", "4", "--seed", "1", "--effect", "es:0.4:0.1"]);
    let p = write(&dir, "s.tsv", &stdout(&sim));
    let args = [
        "scan", "-i", &p, "--format", "suffstats", "--method", "laplace", "--method", "abf", "--maxh", "--fix",
        "--configs", "--cefn-k", "1", "--rank", "abf",
    ];
    let o = hetbf(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let header = out.lines().next().unwrap();
    assert_eq!(
        header,
        "rank\tsnp\tlog10_bf_laplace\tlog10_bf_abf\tlog10_bf_cefn\tlog10_bf_fix\tlog10_bf_maxh\t\
         cefn_minus_fix\tmaxh_minus_fix\tbest_config\tlog10_bf_best_config\tfallback\terror"
    );
    assert_eq!(out.lines().count(), 5);
    assert_eq!(hetbf(&args).stdout, o.stdout);
    let single = hetbf(&["scan", "-i", &p, "--format", "suffstats", "--threads", "1"]);
    let multi = hetbf(&["scan", "-i", &p, "--format", "suffstats", "--threads", "3"]);
    assert_eq!(single.stdout, multi.stdout);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "a.tsv", SUMSTATS);
    assert_eq!(hetbf(&["scan", "-i", &p, "--model", "ee"]).status.code(), Some(0));
    let o = hetbf(&["scan", "-i", &p, "--model", "es"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
    assert_eq!(hetbf(&["--help"]).status.code(), Some(0));
    assert_eq!(hetbf(&["scan", "--nonsense"]).status.code(), Some(1));
    assert_eq!(hetbf(&["scan", "-i", &p, "--method", "laplace"]).status.code(), Some(1));
    assert_eq!(hetbf(&["scan", "-i", "/nonexistent/file.tsv"]).status.code(), Some(2));
    let bad = write(&dir, "bad.tsv", "snp\tsubgroup\tn\tbeta_hat\tse_beta\nrs1\tA\t100\tx\t0.1\n");
    let o = hetbf(&["scan", "-i", &bad]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains(":2:"));
}
