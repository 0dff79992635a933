use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use hetbf::engine::{scan, ScanConfig, ScanMethod};
use hetbf::oracle::{simulate_dataset, SimEffect, SimSpec};
use hetbf::par::Parallelism;
use hetbf::priors::{default_eqtl_grid, Family};
use hetbf::record::{SnpRecord, SubgroupData};
use hetbf::stats::suffstats_from_raw;

fn records(n: usize) -> Vec<SnpRecord> {
    (0..n)
        .map(|i| {
            let spec = SimSpec {
                n: vec![41, 59, 41],
                allele_freq: vec![0.2, 0.3, 0.4],
                sigma: vec![1.0; 3],
                effect: if i % 3 == 0 { SimEffect::Es { bbar: 0.4, phi: 0.2 } } else { SimEffect::Null },
            };
            let subs = simulate_dataset(&spec, i as u64)
                .unwrap()
                .iter()
                .map(|d| Some(SubgroupData::from_suffstats(suffstats_from_raw(&d.y, &d.g).unwrap()).unwrap()))
                .collect();
            SnpRecord::new(format!("rs{i}"), subs)
        })
        .collect()
}

fn modes() -> Vec<(&'static str, Parallelism)> {
    let mut v = vec![("sequential", Parallelism::Sequential)];
    if cfg!(feature = "parallel") {
        v.push(("parallel", Parallelism::Parallel));
    }
    v
}

fn bench_method(c: &mut Criterion, name: &str, method: ScanMethod, n: usize) {
    let recs = records(n);
    let mut group = c.benchmark_group(name);
    group.throughput(Throughput::Elements(n as u64));
    group.sample_size(10);
    for (label, par) in modes() {
        let mut cfg = ScanConfig::new(default_eqtl_grid(Family::Es), vec![method]);
        cfg.parallelism = par;
        group.bench_with_input(BenchmarkId::new(label, n), &recs, |b, recs| {
            b.iter(|| scan(black_box(recs), &cfg).unwrap())
        });
    }
    group.finish();
}

fn abf_scan(c: &mut Criterion) {
    bench_method(c, "scan_abf", ScanMethod::Abf, 20_000);
}

fn laplace_scan(c: &mut Criterion) {
    bench_method(c, "scan_laplace", ScanMethod::Laplace, 500);
}

fn cefn_scan(c: &mut Criterion) {
    bench_method(c, "scan_cefn", ScanMethod::Cefn, 2_000);
}

criterion_group!(benches, abf_scan, laplace_scan, cefn_scan);
criterion_main!(benches);
