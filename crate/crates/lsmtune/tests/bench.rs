use std::path::Path;
use std::sync::Arc;

use lsmtune::bench::{compare_policies, run_benchmark, BenchOptions, BenchReport, TRACE_HEADER};
use lsmtune::fs::{FaultFs, Fs, MemFs};
use lsmtune::workload::{CompoundWorkload, MixSpec, Phase};
use lsmtune::{EngineConfig, PolicyKind, SearchSettings};

fn config(policy: &str) -> EngineConfig {
    EngineConfig {
        memtable_size: 16 * 1024,
        key_size: 24,
        value_size: 104,
        block_size: 512,
        stats_period: 500,
        search: SearchSettings { max_iter: 40, ..SearchSettings::default() },
        policy: PolicyKind::parse(policy).unwrap(),
        ..EngineConfig::default()
    }
}

fn workload(phases: &[(char, u64)], preload_bytes: u64) -> CompoundWorkload {
    CompoundWorkload {
        name: "T".into(),
        phases: phases.iter().map(|&(m, ops)| Phase { mix: MixSpec::named(m).unwrap(), ops }).collect(),
        distribution: lsmtune::workload::KeyDistribution::Uniform,
        preload_bytes,
    }
}

fn opts(sample_every: u64) -> BenchOptions {
    BenchOptions { seed: 11, sample_every, workers: 1 }
}

fn run(policy: &str, w: &CompoundWorkload, sample_every: u64) -> BenchReport {
    run_benchmark(Arc::new(MemFs::new()), Path::new("/db"), &config(policy), w, &opts(sample_every)).unwrap()
}

#[test]
fn zero_op_workload_gives_an_empty_trace() {
    let w = workload(&[('J', 0)], 0);
    let r = run("arce", &w, 100);
    assert!(r.trace.is_empty());
    assert_eq!(r.summary.ops, 0);
    assert_eq!(r.summary.throughput, 0.0);
    assert_eq!(r.trace_csv(), format!("{TRACE_HEADER}\n"));
    assert!(r.summary.to_key_values().contains("ops=0"));
}

#[test]
fn same_seed_gives_identical_logical_metrics() {
    let w = workload(&[('B', 4000), ('J', 4000)], 256 * 1024);
    for policy in ["arce", "leveling"] {
        let a = run(policy, &w, 500);
        let b = run(policy, &w, 500);
        assert_eq!(a.trace, b.trace, "{policy}");
        assert_eq!(a.compactions, b.compactions, "{policy}");
        let strip = |r: &BenchReport| lsmtune::bench::BenchSummary { wall_secs: 0.0, ..r.summary.clone() };
        assert_eq!(strip(&a), strip(&b), "{policy}");
    }
}

#[test]
fn trace_rows_are_complete_and_evenly_spaced() {
    let w = workload(&[('A', 3000), ('B', 3000)], 128 * 1024);
    let r = run("tiering", &w, 500);
    assert_eq!(r.trace.len(), 12);
    for (i, row) in r.trace.iter().enumerate() {
        assert_eq!(row.ops, 500 * (i as u64 + 1));
        assert_eq!(row.phase, usize::from(row.ops > 3000));
        assert!(row.throughput > 0.0 && row.space_amp > 0.0);
    }
    let csv = r.trace_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(TRACE_HEADER));
    let columns = TRACE_HEADER.split(',').count();
    for line in lines {
        assert_eq!(line.split(',').count(), columns, "{line}");
        assert!(line.split(',').all(|f| !f.is_empty() && f.parse::<f64>().is_ok()), "{line}");
    }
    let clocks: Vec<f64> = r.trace.iter().map(|t| t.clock_us).collect();
    assert!(clocks.windows(2).all(|p| p[0] < p[1]));
}

#[test]
fn reports_are_written_under_the_stem() {
    let dir = tempfile::tempdir().unwrap();
    let r = run("leveling", &workload(&[('J', 1000)], 64 * 1024), 250);
    let (trace, summary) = r.write(dir.path(), "T-leveling-seed11").unwrap();
    assert_eq!(std::fs::read_to_string(trace).unwrap(), r.trace_csv());
    let text = std::fs::read_to_string(summary).unwrap();
    assert!(text.lines().all(|l| l.contains('=')));
    assert!(text.contains("policy=leveling"));
}

#[test]
fn adaptive_stalls_no_more_than_tiering_when_writing() {
    let w = workload(&[('B', 30_000)], 256 * 1024);
    let arce = run("arce", &w, 5000);
    let tiering = run("tiering", &w, 5000);
    assert!(
        arce.summary.stall_us <= 1.5 * tiering.summary.stall_us,
        "arce {} us vs tiering {} us",
        arce.summary.stall_us,
        tiering.summary.stall_us
    );
}

#[test]
fn reads_on_a_many_run_tree_leave_fewer_runs_than_tiering() {
    let read_only = MixSpec::custom('R', 50, 0, 50).unwrap();
    let mut w = workload(&[('B', 20_000)], 128 * 1024);
    w.phases.push(Phase { mix: read_only, ops: 20_000 });
    let make_fs = || -> Arc<dyn Fs> { Arc::new(MemFs::new()) };
    let configs: Vec<_> = ["tiering", "leveling", "arce"].iter().map(|p| config(p)).collect();
    let cmp = compare_policies(&make_fs, Path::new("/db"), &configs, &w, &opts(5000)).unwrap();
    let end = |i: usize| cmp.reports[i].summary.phases[1].end_runs;
    let (tiering, leveling, arce) = (end(0), end(1), end(2));
    assert!(cmp.reports[0].summary.phases[0].end_runs > 2, "write phase left a small tree");
    assert!(leveling < tiering, "leveling {leveling} vs tiering {tiering}");
    assert!(arce < tiering, "arce {arce} vs tiering {tiering}");
}

#[test]
fn single_policy_comparison_has_one_row() {
    let make_fs = || -> Arc<dyn Fs> { Arc::new(MemFs::new()) };
    let w = workload(&[('J', 500), ('C', 500)], 64 * 1024);
    let cmp = compare_policies(&make_fs, Path::new("/db"), &[config("leveling")], &w, &opts(100)).unwrap();
    let table = cmp.table();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("policy") && lines[0].contains('J') && lines[0].contains('C'));
    assert!(lines[1].starts_with("leveling"));
    assert!(compare_policies(&make_fs, Path::new("/db"), &[], &w, &opts(100)).is_err());
}

#[test]
fn engine_failure_keeps_the_partial_trace() {
    let w = workload(&[('B', 20_000)], 64 * 1024);
    let cfg = config("leveling");
    let counting = Arc::new(FaultFs::counting(Arc::new(MemFs::new())));
    run_benchmark(counting.clone(), Path::new("/db"), &cfg, &w, &opts(1000)).unwrap();
    let total = counting.calls();
    let faulty = Arc::new(FaultFs::new(Arc::new(MemFs::new()), total * 3 / 4));
    let r = run_benchmark(faulty, Path::new("/db"), &cfg, &w, &opts(1000)).unwrap();
    assert!(r.summary.aborted.is_some());
    assert!(!r.trace.is_empty());
    assert!(r.summary.ops < 20_000);
}

#[test]
fn multiple_replay_workers_apply_every_operation() {
    let w = workload(&[('J', 3000), ('B', 3000)], 64 * 1024);
    let cfg = config("leveling");
    let r = run_benchmark(Arc::new(MemFs::new()), Path::new("/db"), &cfg, &w, &BenchOptions { workers: 3, ..opts(1000) })
        .unwrap();
    assert_eq!(r.summary.ops, 6000);
    assert_eq!(r.summary.phases.iter().map(|p| p.ops).sum::<u64>(), 6000);
    assert!(r.summary.aborted.is_none());
}
