//! Subcommand implementations. Exit codes: 0 success, 1 hard failure,
//! 2 partial (some items failed).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use workbench_core::backends::remote::RemoteConfig;
use workbench_core::benchmark::dataset::{load_dataset, save_dataset, Dataset};
use workbench_core::benchmark::runner::{run_item, BackendChoice};
use workbench_core::benchmark::suite::{generate_suite, suite_stats, SuiteConfig};
use workbench_core::eval::metrics::evaluate_run;
use workbench_core::eval::report::aggregate;
use workbench_core::kernel::agents::Topology;
use workbench_core::kernel::trace::Trace;

use crate::config::{apply_config, load_prices, parse_config_file, RunConfig};

fn fail(message: impl std::fmt::Display) -> i32 {
    eprintln!("error: {message}");
    1
}

fn parse_profile(profile: &str, seed: u64) -> Result<SuiteConfig, String> {
    match profile {
        "default" => Ok(SuiteConfig {
            seed,
            ..SuiteConfig::default()
        }),
        "tiny" => Ok(SuiteConfig::tiny(seed)),
        other => {
            let parts: Vec<&str> = other.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(format!(
                    "profile '{other}' must be default, tiny, or '<t1>,<t2>,<t3>'"
                ));
            }
            let parse = |s: &str| s.parse::<usize>().map_err(|_| format!("bad count '{s}'"));
            Ok(SuiteConfig {
                tier1: parse(parts[0])?,
                tier2: parse(parts[1])?,
                tier3: parse(parts[2])?,
                seed,
            })
        }
    }
}

pub fn cmd_generate(
    out: PathBuf,
    profile: String,
    seed: Option<u64>,
    config: Option<PathBuf>,
) -> i32 {
    let mut profile = profile;
    let mut seed = seed;
    if let Some(path) = config {
        match parse_config_file(&path) {
            Ok(map) => {
                if profile == "default" {
                    if let Some(p) = map.get("profile") {
                        profile = p.clone();
                    }
                }
                if seed.is_none() {
                    seed = map.get("seed").and_then(|v| v.parse().ok());
                }
            }
            Err(e) => return fail(e),
        }
    }
    let seed = seed.unwrap_or(SuiteConfig::default().seed);
    let config = match parse_profile(&profile, seed) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    if let Err(e) = std::fs::create_dir_all(&out) {
        return fail(format!("cannot create {}: {e}", out.display()));
    }
    let dataset = match generate_suite(&config, &out) {
        Ok(d) => d,
        Err(e) => return fail(e),
    };
    let path = out.join("dataset.jsonl");
    if let Err(e) = save_dataset(&dataset, &path) {
        return fail(e);
    }
    let stats = suite_stats(&dataset);
    println!(
        "{} items ({} tier-1, {} tier-2, {} tier-3) over {} cases, seed {}",
        dataset.items.len(),
        stats.items_per_tier[0],
        stats.items_per_tier[1],
        stats.items_per_tier[2],
        dataset.cases.len(),
        config.seed,
    );
    println!("mean expected plan length per topology (tiers 1/2/3):");
    for (topology, means) in &stats.mean_plan_len {
        println!(
            "  {topology:<16} {:.2} / {:.2} / {:.2}",
            means[0], means[1], means[2]
        );
    }
    println!("dataset written to {}", path.display());
    0
}

fn resolve_topologies(names: &[String]) -> Result<Vec<Topology>, String> {
    if names.is_empty() {
        return Ok(Topology::ALL.to_vec());
    }
    names
        .iter()
        .map(|n| Topology::parse(n).ok_or_else(|| format!("unknown topology '{n}'")))
        .collect()
}

fn resolve_backend(config: &RunConfig) -> Result<BackendChoice, String> {
    match config.backend.as_str() {
        "scripted" => Ok(BackendChoice::Scripted),
        "planner" => Ok(BackendChoice::Planner),
        other => {
            let model = other
                .strip_prefix("remote:")
                .map(str::to_string)
                .or_else(|| (other == "remote").then(|| config.model.clone()).flatten())
                .ok_or_else(|| {
                    format!("backend '{other}' must be scripted, planner, or remote:<model>")
                })?;
            let endpoint = config
                .endpoint
                .clone()
                .ok_or("remote backends need --endpoint or endpoint.url in the config file")?;
            let remote = RemoteConfig::from_env(&endpoint, &model).map_err(|e| e.to_string())?;
            Ok(BackendChoice::Remote(remote))
        }
    }
}

fn trace_file(out: &Path, item_id: &str, topology: Topology) -> PathBuf {
    out.join("traces")
        .join(format!("{item_id}__{topology}.jsonl"))
}

/// Header line of a trace stream, followed by one event per line.
#[derive(serde::Serialize, serde::Deserialize)]
struct RunHeader {
    record: String,
    item_id: String,
    topology: String,
    backend: String,
    budget_exceeded: bool,
}

pub fn cmd_run(mut config: RunConfig, config_path: Option<PathBuf>) -> i32 {
    if let Some(path) = config_path {
        match parse_config_file(&path) {
            Ok(map) => apply_config(&mut config, &map),
            Err(e) => return fail(e),
        }
    }
    let dataset_path = if config.dataset.is_dir() {
        config.dataset.join("dataset.jsonl")
    } else {
        config.dataset.clone()
    };
    let dataset_dir = dataset_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let dataset = match load_dataset(&dataset_path) {
        Ok(d) => d,
        Err(e) => return fail(e),
    };
    let topologies = match resolve_topologies(&config.topologies) {
        Ok(t) => t,
        Err(e) => return fail(e),
    };
    let backend = match resolve_backend(&config) {
        Ok(b) => b,
        Err(e) => return fail(e),
    };
    if let Err(e) = std::fs::create_dir_all(config.out.join("traces")) {
        return fail(e);
    }

    // Jobs ordered by (item, topology); completed pairs are skipped so long
    // suites resume where they stopped.
    struct Job<'a> {
        item: &'a workbench_core::benchmark::dataset::BenchmarkItem,
        topology: Topology,
    }
    let mut jobs = Vec::new();
    let mut skipped = 0usize;
    for item in &dataset.items {
        for &topology in &topologies {
            if trace_file(&config.out, &item.item_id, topology).exists() {
                skipped += 1;
                continue;
            }
            jobs.push(Job { item, topology });
        }
    }

    let delay = std::time::Duration::from_secs(config.delay_seconds);
    let parallel = if config.delay_seconds > 0 {
        // The inter-case delay is a rate limit; it implies sequential order.
        1
    } else {
        config.parallel.max(1)
    };

    let next = Mutex::new(0usize);
    let failures: Mutex<Vec<String>> = Mutex::new(Vec::new());
    let last_case: Mutex<Option<String>> = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..parallel {
            scope.spawn(|| loop {
                let index = {
                    let mut guard = next.lock().unwrap();
                    let i = *guard;
                    *guard += 1;
                    i
                };
                let Some(job) = jobs.get(index) else {
                    break;
                };
                if config.delay_seconds > 0 {
                    let mut last = last_case.lock().unwrap();
                    if last.as_deref().is_some_and(|c| c != job.item.case_id) {
                        std::thread::sleep(delay);
                    }
                    *last = Some(job.item.case_id.clone());
                }
                let Some(case) = dataset.case(&job.item.case_id) else {
                    failures
                        .lock()
                        .unwrap()
                        .push(format!("{}: case {} missing", job.item.item_id, job.item.case_id));
                    continue;
                };
                let work = config
                    .out
                    .join("work")
                    .join(format!("{}__{}", job.item.item_id, job.topology));
                let _ = std::fs::create_dir_all(&work);
                match run_item(
                    job.item,
                    case,
                    &dataset_dir,
                    &work,
                    job.topology,
                    &backend,
                    config.noise,
                    config.budget,
                ) {
                    Ok(run) => {
                        let header = RunHeader {
                            record: "run".into(),
                            item_id: job.item.item_id.clone(),
                            topology: job.topology.as_str().into(),
                            backend: run.model_name.clone(),
                            budget_exceeded: run.result.budget_exceeded,
                        };
                        let mut text =
                            serde_json::to_string(&header).expect("headers serialize");
                        text.push('\n');
                        text.push_str(&run.result.trace.to_jsonl());
                        let path = trace_file(&config.out, &job.item.item_id, job.topology);
                        if let Err(e) = std::fs::write(&path, text) {
                            failures
                                .lock()
                                .unwrap()
                                .push(format!("{}: write failed: {e}", job.item.item_id));
                        }
                    }
                    Err(e) => {
                        failures
                            .lock()
                            .unwrap()
                            .push(format!("{} {}: {e}", job.item.item_id, job.topology));
                    }
                }
            });
        }
    });

    let failures = failures.into_inner().unwrap();
    println!(
        "completed {} runs ({} skipped as already done), {} failed",
        jobs.len() - failures.len(),
        skipped,
        failures.len()
    );
    for f in &failures {
        eprintln!("failed: {f}");
    }
    if failures.is_empty() {
        0
    } else {
        2
    }
}

pub fn cmd_eval(
    traces: PathBuf,
    dataset: PathBuf,
    out: Option<PathBuf>,
    prices: Option<PathBuf>,
    config_path: Option<PathBuf>,
) -> i32 {
    let mut extra = BTreeMap::new();
    if let Some(path) = config_path {
        match parse_config_file(&path) {
            Ok(map) => extra = map,
            Err(e) => return fail(e),
        }
    }
    let prices = match load_prices(prices.as_deref(), &extra) {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    let dataset_path = if dataset.is_dir() {
        dataset.join("dataset.jsonl")
    } else {
        dataset
    };
    let dataset: Dataset = match load_dataset(&dataset_path) {
        Ok(d) => d,
        Err(e) => return fail(e),
    };
    let traces_dir = if traces.join("traces").is_dir() {
        traces.join("traces")
    } else {
        traces
    };
    let mut entries: Vec<PathBuf> = match std::fs::read_dir(&traces_dir) {
        Ok(dir) => dir
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect(),
        Err(e) => return fail(format!("{}: {e}", traces_dir.display())),
    };
    entries.sort();
    if entries.is_empty() {
        eprintln!("error: no runs found in {}", traces_dir.display());
        return 1;
    }

    let mut reports = Vec::new();
    let mut item_errors = Vec::new();
    for path in &entries {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                item_errors.push(format!("{}: {e}", path.display()));
                continue;
            }
        };
        let mut lines = text.lines();
        let header: RunHeader = match lines.next().map(serde_json::from_str) {
            Some(Ok(h)) => h,
            _ => {
                item_errors.push(format!("{}: missing run header", path.display()));
                continue;
            }
        };
        let trace = match Trace::from_jsonl(&text[text.find('\n').map(|i| i + 1).unwrap_or(0)..]) {
            Ok(t) => t,
            Err(e) => {
                item_errors.push(format!("{}: {e}", path.display()));
                continue;
            }
        };
        let Some(item) = dataset.items.iter().find(|i| i.item_id == header.item_id) else {
            item_errors.push(format!("{}: unknown item {}", path.display(), header.item_id));
            continue;
        };
        let Some(topology) = Topology::parse(&header.topology) else {
            item_errors.push(format!("{}: unknown topology {}", path.display(), header.topology));
            continue;
        };
        match evaluate_run(&trace, item, topology, &header.backend, &prices) {
            Ok(report) => reports.push(report),
            Err(e) => item_errors.push(format!("{}: {e}", header.item_id)),
        }
    }

    reports.sort_by(|a, b| (&a.item_id, &a.topology).cmp(&(&b.item_id, &b.topology)));
    let table = aggregate(&reports);
    print!("{}", table.to_text());
    if let Some(out) = out {
        if let Err(e) = std::fs::create_dir_all(&out) {
            return fail(e);
        }
        let mut runs_text = String::new();
        for r in &reports {
            runs_text.push_str(&serde_json::to_string(r).expect("reports serialize"));
            runs_text.push('\n');
        }
        let writes = [
            (out.join("runs.jsonl"), runs_text),
            (out.join("report.csv"), table.to_csv()),
            (out.join("report.txt"), table.to_text()),
        ];
        for (path, content) in writes {
            if let Err(e) = std::fs::write(&path, content) {
                return fail(format!("{}: {e}", path.display()));
            }
        }
    }
    for e in &item_errors {
        eprintln!("item error: {e}");
    }
    if item_errors.is_empty() {
        0
    } else {
        2
    }
}
