//! Experiment orchestration for the polymer laboratory: TOML configs,
//! per-task seeding, parallel dispatch, JSON-lines records and verdicts.

pub mod config;
pub mod experiments;
pub mod record;
pub mod summarize;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use config::ExperimentConfig;
use record::{read_records, write_records, RECORDS_FILE, SUMMARY_FILE};
use summarize::{evaluate, Status, Verdict, CRITERIA};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;
pub const EXIT_CRITERION: i32 = 3;

/// Command-line overrides of config fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

/// Load, run and write results. Returns the process exit code.
pub fn run(config_path: &Path, overrides: &Overrides) -> i32 {
    let mut cfg = match ExperimentConfig::load(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Some(s) = overrides.seed {
        cfg.seed = s;
    }
    if let Some(w) = overrides.workers {
        if w == 0 {
            eprintln!("config error: --workers must be positive");
            return EXIT_CONFIG;
        }
        cfg.workers = Some(w);
    }
    if let Some(o) = &overrides.out {
        cfg.out = Some(o.clone());
    }
    let out = cfg.out_dir();
    let workers = cfg.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let outcome = experiments::run_experiment(&cfg, workers);

    if let Err(e) = std::fs::create_dir_all(&out).and_then(|_| write_records(&out.join(RECORDS_FILE), &outcome.records)) {
        eprintln!("cannot write results to {}: {e}", out.display());
        return EXIT_PARTIAL;
    }
    let mut text = String::new();
    let _ = writeln!(text, "experiment {} seed {} workers {workers}", cfg.kind.name(), cfg.seed);
    let _ = writeln!(text, "{} records, {} failed tasks", outcome.records.len(), outcome.failures.len());
    for r in &outcome.records {
        let params: Vec<String> = r.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let value = r.value.map_or("-".to_string(), |v| format!("{v:.6}"));
        let se = r.stderr.map_or(String::new(), |s| format!(" ± {s:.3e}"));
        let _ = writeln!(text, "  [{}] {} = {value}{se}  ({})", r.task, r.metric, params.join(", "));
    }
    for (task, params, err) in &outcome.failures {
        let _ = writeln!(text, "  task {task} FAILED ({}): {err}", serde_json::Value::Object(params.clone()));
        eprintln!("task {task} failed: {err}");
    }
    print!("{text}");
    if let Err(e) = std::fs::write(out.join(SUMMARY_FILE), &text) {
        eprintln!("cannot write summary: {e}");
        return EXIT_PARTIAL;
    }
    if outcome.failures.is_empty() {
        EXIT_OK
    } else {
        EXIT_PARTIAL
    }
}

/// Verdicts for `criterion` (or every criterion for `"all"`) from the
/// records in `dir`. Unknown criteria are an error.
pub fn summarize_dir(dir: &Path, criterion: &str) -> Result<Vec<Verdict>, String> {
    let names: Vec<&str> = if criterion == "all" { CRITERIA.to_vec() } else { vec![criterion] };
    let path = dir.join(RECORDS_FILE);
    let records = if path.exists() {
        read_records(&path).map_err(|e| e.to_string())?
    } else {
        eprintln!("missing input: {}", path.display());
        Vec::new()
    };
    names
        .into_iter()
        .map(|c| evaluate(c, &records).ok_or_else(|| format!("unknown criterion `{c}`; known: all, {}", CRITERIA.join(", "))))
        .collect()
}

pub fn verdict_exit_code(verdicts: &[Verdict]) -> i32 {
    if verdicts.iter().any(|v| v.status == Status::Fail) {
        EXIT_CRITERION
    } else {
        EXIT_OK
    }
}
