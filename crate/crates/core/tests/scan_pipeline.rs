use hetbf::engine::{het_only, rank_and_group, scan, scan_stream, RankColumn, ScanConfig, ScanMethod, ScanRow};
use hetbf::oracle::{simulate_dataset, SimEffect, SimSpec};
use hetbf::par::Parallelism;
use hetbf::priors::{default_eqtl_grid, Family};
use hetbf::record::{SnpRecord, SubgroupData};
use hetbf::stats::suffstats_from_raw;

fn panel(n: usize) -> Vec<SnpRecord> {
    (0..n)
        .map(|i| {
            let effect = match i % 4 {
                0 => SimEffect::Null,
                1 => SimEffect::Es { bbar: 0.5, phi: 0.0 },
                2 => SimEffect::PerSubgroup(vec![0.6, -0.6, 0.0]),
                _ => SimEffect::Es { bbar: 0.1, phi: 0.4 },
            };
            let spec = SimSpec { n: vec![41, 59, 41], allele_freq: vec![0.2, 0.3, 0.4], sigma: vec![1.0; 3], effect };
            let subs = simulate_dataset(&spec, i as u64)
                .unwrap()
                .iter()
                .map(|d| Some(SubgroupData::from_suffstats(suffstats_from_raw(&d.y, &d.g).unwrap()).unwrap()))
                .collect();
            SnpRecord { id: format!("rs{i:04}"), gene: Some(format!("g{}", i / 5)), subgroups: subs }
        })
        .collect()
}

fn full_config() -> ScanConfig {
    let mut cfg = ScanConfig::new(
        default_eqtl_grid(Family::Es),
        vec![ScanMethod::Abf, ScanMethod::Corrected, ScanMethod::Laplace, ScanMethod::Cefn],
    );
    cfg.fix = true;
    cfg.maxh = true;
    cfg.configurations = true;
    cfg
}

fn bits(rows: &[ScanRow]) -> Vec<u64> {
    rows.iter()
        .flat_map(|r| {
            r.bf_av
                .iter()
                .map(|(_, v)| *v)
                .chain([r.bf_fix, r.bf_maxh, r.best_config.as_ref().map(|c| c.1)])
                .map(|v| v.map_or(u64::MAX, f64::to_bits))
                .collect::<Vec<_>>()
        })
        .collect()
}

#[test]
fn thread_count_does_not_change_output() {
    let recs = panel(40);
    let mut cfg = full_config();
    cfg.parallelism = Parallelism::Sequential;
    let one = scan(&recs, &cfg).unwrap();
    cfg.parallelism = Parallelism::Threads(4);
    let four = scan(&recs, &cfg).unwrap();
    assert_eq!(bits(&one), bits(&four));
    assert!(one.iter().all(|r| r.error.is_none()));
    let streamed: Vec<ScanRow> = scan_stream(recs.into_iter().map(Ok), cfg, 6).unwrap().map(Result::unwrap).collect();
    assert_eq!(bits(&one), bits(&streamed));
}

#[test]
fn ranking_and_diagnostics() {
    let rows = scan(&panel(40), &full_config()).unwrap();
    let ranked = rank_and_group(&rows, RankColumn::Method(ScanMethod::Laplace), false).unwrap();
    assert_eq!(ranked.len(), 40);
    assert!(ranked.windows(2).all(|w| w[0].value >= w[1].value));
    let per_gene = rank_and_group(&rows, "laplace".parse().unwrap(), true).unwrap();
    assert_eq!(per_gene.len(), 8);
    // opposite-sign effects favour heterogeneous models over the fixed one
    let opposite = &rows[2];
    assert!(opposite.maxh_minus_fix().unwrap() > 1.0);
    assert!(!opposite.best_config.as_ref().unwrap().0.is_null());
    let het = het_only(&rows, 3.0);
    assert!(het.iter().all(|&i| rows[i].bf_fix.unwrap() < 3.0));
}
