//! End-to-end pipeline over a tiny generated suite: scripted and planner
//! backends across all four topologies, evaluated to perfect scores.

use workbench_core::backends::tokens::PriceTable;
use workbench_core::benchmark::runner::{run_item, BackendChoice, DEFAULT_BUDGET};
use workbench_core::benchmark::suite::{generate_suite, SuiteConfig};
use workbench_core::eval::metrics::evaluate_run;
use workbench_core::kernel::agents::Topology;

#[test]
fn tiny_suite_replays_and_plans_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = generate_suite(&SuiteConfig::tiny(4242), dir.path()).unwrap();
    let prices = PriceTable::with_offline_defaults();
    let work = dir.path().join("work");
    std::fs::create_dir_all(&work).unwrap();

    for backend in [BackendChoice::Scripted, BackendChoice::Planner] {
        for item in &dataset.items {
            let case = dataset.case(&item.case_id).unwrap();
            for topology in Topology::ALL {
                let run = run_item(
                    item,
                    case,
                    dir.path(),
                    &work,
                    topology,
                    &backend,
                    0.0,
                    DEFAULT_BUDGET,
                )
                .unwrap_or_else(|e| {
                    panic!(
                        "{} {topology} {}: {e}",
                        item.item_id,
                        backend.name()
                    )
                });
                assert!(
                    !run.result.budget_exceeded,
                    "{} {topology} exceeded budget",
                    item.item_id
                );
                let report =
                    evaluate_run(&run.result.trace, item, topology, &run.model_name, &prices)
                        .unwrap();
                assert_eq!(
                    report.metrics.errors, 0,
                    "{} {topology} {}: errors\n{}",
                    item.item_id,
                    backend.name(),
                    run.result.trace.to_jsonl()
                );
                assert_eq!(
                    report.fidelity.precision, 1.0,
                    "{} {topology} {}: precision\ntrace:\n{}",
                    item.item_id,
                    backend.name(),
                    run.result.trace.to_jsonl()
                );
                assert_eq!(
                    report.fidelity.recall, 1.0,
                    "{} {topology} {}: recall\ntrace:\n{}",
                    item.item_id,
                    backend.name(),
                    run.result.trace.to_jsonl()
                );
                assert_eq!(
                    report.metrics.inclusion_rate, 1.0,
                    "{} {topology} {}: inclusion\nanswer:\n{}",
                    item.item_id,
                    backend.name(),
                    run.result.final_text
                );
                assert_eq!(
                    report.metrics.accuracy, 1.0,
                    "{} {topology} {}: accuracy\nanswer:\n{}\nexpected:\n{:?}",
                    item.item_id,
                    backend.name(),
                    run.result.final_text,
                    item.expected_answer
                );
            }
        }
    }
}

#[test]
fn scripted_episode_traces_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = generate_suite(&SuiteConfig::tiny(99), dir.path()).unwrap();
    let item = &dataset.items[1];
    let case = dataset.case(&item.case_id).unwrap();
    let work = dir.path().join("work");
    std::fs::create_dir_all(&work).unwrap();
    let run = |n: u32| {
        let w = work.join(n.to_string());
        std::fs::create_dir_all(&w).unwrap();
        run_item(
            item,
            case,
            dir.path(),
            &w,
            Topology::Orchestrator,
            &BackendChoice::Scripted,
            0.0,
            DEFAULT_BUDGET,
        )
        .unwrap()
        .result
        .trace
        .to_jsonl()
    };
    assert_eq!(run(1), run(2));
}
