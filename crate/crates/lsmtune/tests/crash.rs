mod common;

use common::CrashScript;

#[test]
fn recovery_after_faults_around_compaction_install() {
    let script = CrashScript::new();
    let record = script.record();
    assert!(record.compactions.len() >= 4, "script compacted {} times", record.compactions.len());
    let points = script.fault_points(&record, 100);
    assert_eq!(points.len(), 100);
    let failures: Vec<_> = points.iter().map(|&p| script.trial(&record, p)).filter(|t| t.problem.is_some()).collect();
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn a_fault_free_reopen_keeps_everything() {
    let script = CrashScript::new();
    let record = script.record();
    let trial = script.trial(&record, u64::MAX);
    assert_eq!(trial.problem, None);
    assert!(trial.recovered_runs > 0);
}
