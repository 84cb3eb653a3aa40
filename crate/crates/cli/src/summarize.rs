//! Verdicts computed from result records only.

use polymer_core::tails::{exponent_fit, FitScale};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::record::ResultRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// No records to judge.
    Missing,
    /// Report-only criterion; never gates.
    Report,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub criterion: String,
    pub status: Status,
    pub detail: String,
}

pub const CRITERIA: &[&str] = &[
    "identities",
    "oracle",
    "green",
    "level_sets",
    "tails_xi",
    "tails_n",
    "d2_slope",
    "folded_slope",
    "gibbs_bounds",
    "gibbs_phase",
    "conjecture",
];

fn verdict(criterion: &str, status: Status, detail: impl Into<String>) -> Verdict {
    Verdict {
        criterion: criterion.to_string(),
        status,
        detail: detail.into(),
    }
}

fn of<'a>(records: &'a [ResultRecord], experiment: &str, metric: &str) -> Vec<&'a ResultRecord> {
    records.iter().filter(|r| r.experiment == experiment && r.metric == metric).collect()
}

/// Pass when every value satisfies `ok`; missing when there is none.
fn all_values(name: &str, rs: &[&ResultRecord], what: &str, ok: impl Fn(f64) -> bool) -> Verdict {
    if rs.is_empty() {
        return verdict(name, Status::Missing, format!("no `{what}` records"));
    }
    let bad: Vec<String> = rs
        .iter()
        .filter(|r| !r.value.is_some_and(&ok))
        .map(|r| format!("task {} {what} = {:?}", r.task, r.value))
        .collect();
    if bad.is_empty() {
        verdict(name, Status::Pass, format!("{} records within tolerance", rs.len()))
    } else {
        verdict(name, Status::Fail, bad.join("; "))
    }
}

/// `(task, metric) -> value` for one experiment.
fn by_task(records: &[ResultRecord], experiment: &str) -> BTreeMap<usize, BTreeMap<String, f64>> {
    let mut out: BTreeMap<usize, BTreeMap<String, f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.experiment == experiment) {
        if let Some(v) = r.value {
            out.entry(r.task).or_default().insert(r.metric.clone(), v);
        }
    }
    out
}

/// Fit `neg_log_p` against `abscissa` within groups sharing `group_keys`.
fn slope_check(
    name: &str,
    records: &[ResultRecord],
    methods: &[&str],
    abscissa: &str,
    group_keys: &[&str],
    target: f64,
    tol: f64,
) -> Verdict {
    let tasks = by_task(records, "tails_scan");
    let mut groups: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.experiment == "tails_scan" && r.metric == "neg_log_p") {
        let Some(method) = r.param_str("method") else { continue };
        if !methods.contains(&method) {
            continue;
        }
        let (Some(y), Some(x)) = (r.value, r.param_f64(abscissa).or_else(|| tasks.get(&r.task).and_then(|t| t.get(abscissa).copied())))
        else {
            continue;
        };
        let key = std::iter::once(format!("method={method}"))
            .chain(group_keys.iter().map(|k| format!("{k}={}", r.params.get(*k).map(|v| v.to_string()).unwrap_or_default())))
            .collect::<Vec<_>>()
            .join(",");
        groups.entry(key).or_default().push((x, y));
    }
    let mut lines = Vec::new();
    let mut failed = false;
    for (key, pts) in groups {
        // A group without two distinct abscissas is not a scan along this axis.
        if pts.iter().all(|p| p.0 == pts[0].0) {
            continue;
        }
        match exponent_fit(&pts, FitScale::LogLog) {
            Ok(f) => {
                let ok = (f.slope - target).abs() <= tol;
                failed |= !ok;
                lines.push(format!(
                    "[{key}] slope {:.3} ± {:.3} over {} points, target {target:.3} ± {tol}: {}",
                    f.slope,
                    f.half_width,
                    pts.len(),
                    if ok { "ok" } else { "off" }
                ));
            }
            Err(e) => {
                failed = true;
                lines.push(format!("[{key}] not fitted: {e}"));
            }
        }
    }
    let status = if lines.is_empty() {
        Status::Missing
    } else if failed {
        Status::Fail
    } else {
        Status::Pass
    };
    let detail = if lines.is_empty() { format!("no `neg_log_p` scan along `{abscissa}`") } else { lines.join("; ") };
    verdict(name, status, detail)
}

fn level_sets(records: &[ResultRecord]) -> Verdict {
    let name = "level_sets";
    let fr = of(records, "level_sets", "level_fraction");
    if fr.is_empty() {
        return verdict(name, Status::Missing, "no `level_fraction` records");
    }
    let mut bad = Vec::new();
    for r in &fr {
        let pred = records.iter().find(|p| {
            p.experiment == "level_sets" && p.task == r.task && p.metric == "level_prediction" && p.params.get("k") == r.params.get("k")
        });
        match (r.value, pred.and_then(|p| p.value)) {
            (Some(v), Some(p)) if (v / p - 1.0).abs() < 0.05 => {}
            (v, p) => bad.push(format!("task {} k={:?}: {v:?} vs {p:?}", r.task, r.params.get("k"))),
        }
    }
    if bad.is_empty() {
        verdict(name, Status::Pass, format!("{} levels within 5%", fr.len()))
    } else {
        verdict(name, Status::Fail, bad.join("; "))
    }
}

fn gibbs_bounds(records: &[ResultRecord]) -> Verdict {
    let name = "gibbs_bounds";
    let tasks = by_task(records, "gibbs_scan");
    let mut bad = Vec::new();
    let mut seen = 0;
    for (task, m) in &tasks {
        if let (Some(&z), Some(&up)) = (m.get("log_z"), m.get("log_z_upper")) {
            seen += 1;
            if !(z >= 0.0 && z <= up) {
                bad.push(format!("task {task}: log Z = {z} outside [0, {up}]"));
            }
        }
    }
    match (seen, bad.is_empty()) {
        (0, _) => verdict(name, Status::Missing, "no `log_z` records"),
        (_, true) => verdict(name, Status::Pass, format!("{seen} runs inside [0, β_eff n]")),
        _ => verdict(name, Status::Fail, bad.join("; ")),
    }
}

fn gibbs_phase(records: &[ResultRecord]) -> Verdict {
    let name = "gibbs_phase";
    let mid = of(records, "gibbs_scan", "mid_level_freq");
    let max = of(records, "gibbs_scan", "max_local_freq");
    let betas: Vec<f64> = mid.iter().filter_map(|r| r.param_f64("beta")).collect();
    if betas.is_empty() {
        return verdict(name, Status::Missing, "no `mid_level_freq` records");
    }
    let hi = betas.iter().cloned().fold(f64::MIN, f64::max);
    let lo = betas.iter().cloned().fold(f64::MAX, f64::min);
    let best_mid = mid
        .iter()
        .filter(|r| r.param_f64("beta") == Some(hi))
        .filter_map(|r| r.value)
        .fold(0.0, f64::max);
    let low_max = max
        .iter()
        .filter(|r| r.param_f64("beta") == Some(lo) && r.param_f64("b") == Some(8.0))
        .filter_map(|r| r.value)
        .fold(0.0, f64::max);
    let ok = best_mid >= 0.9 && low_max <= 0.1;
    verdict(
        name,
        if ok { Status::Pass } else { Status::Fail },
        format!("β = {hi}: best mid-level frequency {best_mid:.3} (need >= 0.9); β = {lo}: max-local frequency at b = 8 {low_max:.3} (need <= 0.1)"),
    )
}

pub fn evaluate(criterion: &str, records: &[ResultRecord]) -> Option<Verdict> {
    Some(match criterion {
        "identities" => all_values(criterion, &of(records, "identity_suite", "violations"), "violations", |v| v == 0.0),
        "oracle" => {
            let tv = all_values(criterion, &of(records, "oracle_compare", "tv"), "tv", |v| v < 0.005);
            let z = all_values(criterion, &of(records, "oracle_compare", "max_tail_z"), "max_tail_z", |v| v < 3.0);
            match (tv.status, z.status) {
                (Status::Pass, Status::Pass) => tv,
                (Status::Pass, _) => z,
                _ => tv,
            }
        }
        "green" => all_values(criterion, &of(records, "green", "max_rel_diff"), "max_rel_diff", |v| v < 1e-6),
        "level_sets" => level_sets(records),
        "tails_xi" => slope_check(criterion, records, &["strategy", "tilted"], "xi", &["n", "d"], 0.8, 0.15),
        "tails_n" => slope_check(criterion, records, &["strategy", "tilted"], "n", &["xi", "d"], 1.0 / 3.0, 0.1),
        "d2_slope" => slope_check(criterion, records, &["d2"], "xi", &["d"], 2.0, 0.2),
        "folded_slope" => slope_check(criterion, records, &["folded"], "x", &["d", "xi"], 2.0 / 3.0, 0.15),
        "gibbs_bounds" => gibbs_bounds(records),
        "gibbs_phase" => gibbs_phase(records),
        "conjecture" => {
            let p = of(records, "conjecture_probe", "p_hat");
            if p.is_empty() {
                verdict(criterion, Status::Missing, "no `p_hat` records")
            } else {
                let values: Vec<String> = p
                    .iter()
                    .map(|r| format!("n={:?} y={:?}: {:?}", r.param_f64("n"), r.param_f64("y"), r.value))
                    .collect();
                verdict(criterion, Status::Report, values.join("; "))
            }
        }
        _ => return None,
    })
}
