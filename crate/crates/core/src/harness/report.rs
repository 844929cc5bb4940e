//! Summary tables computed from cell logs alone.
//!
//! Every CSV begins with one `#` provenance line carrying the config hash(es)
//! and seeds of the logs it was computed from, followed by a header row.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::adversary::AttackKind;
use crate::aggregators::RuleKind;
use crate::error::{Error, Result};
use crate::fedsim::compute_metrics;

use super::store::CellLog;

fn provenance(logs: &[CellLog]) -> String {
    let hashes: BTreeSet<&str> = logs.iter().map(|l| l.header.config_hash.as_str()).collect();
    let seeds: BTreeSet<u64> = logs.iter().map(|l| l.header.seed).collect();
    let join = |it: Vec<String>| it.join(";");
    format!(
        "# config_hash={} seeds={}\n",
        join(hashes.into_iter().map(String::from).collect()),
        join(seeds.into_iter().map(|s| s.to_string()).collect())
    )
}

fn nonempty(logs: &[CellLog]) -> Result<()> {
    if logs.is_empty() {
        return Err(Error::Empty("no cell logs"));
    }
    Ok(())
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Table-ordered rule list: defaults first, then anything else (e.g. `mean`).
fn rule_order(rules: &BTreeSet<RuleKind>) -> Vec<RuleKind> {
    let mut order: Vec<RuleKind> = super::config::DEFAULT_RULES
        .into_iter()
        .filter(|r| rules.contains(r))
        .collect();
    let extra: Vec<RuleKind> = rules
        .iter()
        .copied()
        .filter(|r| !order.contains(r))
        .collect();
    order.extend(extra);
    order
}

/// `(rules, attacks, cells)` where `cells[i][j]` is the seed-averaged AUC
/// in percent, if that cell ran.
pub type AucGrid = (Vec<RuleKind>, Vec<AttackKind>, Vec<Vec<Option<f64>>>);

/// AUC grid as numbers.
pub fn auc_grid(logs: &[CellLog]) -> Result<AucGrid> {
    nonempty(logs)?;
    let mut per_cell: BTreeMap<(RuleKind, AttackKind), Vec<f64>> = BTreeMap::new();
    for log in logs {
        let summary = compute_metrics(&log.records)?;
        per_cell
            .entry((log.header.rule, log.header.attack))
            .or_default()
            .push(100.0 * summary.auc);
    }
    let rules = rule_order(&per_cell.keys().map(|k| k.0).collect());
    let attacks: Vec<AttackKind> = per_cell
        .keys()
        .map(|k| k.1)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let grid = rules
        .iter()
        .map(|&r| {
            attacks
                .iter()
                .map(|&a| per_cell.get(&(r, a)).map(|v| mean(v)))
                .collect()
        })
        .collect();
    Ok((rules, attacks, grid))
}

fn cell_text(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_default()
}

/// Rows = rules, columns = attacks, plus a per-rule `grand_total` column and
/// a closing `grand_mean` row of column means. Values are percentages.
pub fn emit_auc_table(logs: &[CellLog]) -> Result<String> {
    let (rules, attacks, grid) = auc_grid(logs)?;
    let mut out = provenance(logs);
    out.push_str("rule");
    for a in &attacks {
        write!(out, ",{a}").unwrap();
    }
    out.push_str(",grand_total\n");
    let mut totals = Vec::new();
    for (rule, row) in rules.iter().zip(&grid) {
        let present: Vec<f64> = row.iter().flatten().copied().collect();
        let total = mean(&present);
        totals.push(total);
        write!(out, "{rule}").unwrap();
        for v in row {
            write!(out, ",{}", cell_text(*v)).unwrap();
        }
        writeln!(out, ",{total:.2}").unwrap();
    }
    out.push_str("grand_mean");
    for j in 0..attacks.len() {
        let col: Vec<f64> = grid.iter().filter_map(|row| row[j]).collect();
        write!(out, ",{}", cell_text((!col.is_empty()).then(|| mean(&col)))).unwrap();
    }
    writeln!(out, ",{:.2}", mean(&totals)).unwrap();
    Ok(out)
}

/// Per-rule mean aggregation time over every round of every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct OverheadRow {
    pub rule: RuleKind,
    pub mean_ms: f64,
    /// Mean subspace-build share, for rules that build one.
    pub mean_subspace_build_ms: Option<f64>,
    pub rounds: usize,
}

pub fn overhead_rows(logs: &[CellLog]) -> Result<Vec<OverheadRow>> {
    nonempty(logs)?;
    let mut acc: BTreeMap<RuleKind, (u128, usize, u128, usize)> = BTreeMap::new();
    for log in logs {
        let e = acc.entry(log.header.rule).or_default();
        for t in &log.timings {
            e.0 += u128::from(t.wall_time_ns);
            e.1 += 1;
            if let Some(b) = t.subspace_build_ns {
                e.2 += u128::from(b);
                e.3 += 1;
            }
        }
    }
    let mut rows: Vec<OverheadRow> = acc
        .into_iter()
        .filter(|(_, v)| v.1 > 0)
        .map(|(rule, (total, n, build, nb))| OverheadRow {
            rule,
            mean_ms: total as f64 / n as f64 / 1e6,
            mean_subspace_build_ms: (nb > 0).then(|| build as f64 / nb as f64 / 1e6),
            rounds: n,
        })
        .collect();
    rows.sort_by(|a, b| {
        a.mean_ms
            .total_cmp(&b.mean_ms)
            .then_with(|| a.rule.name().cmp(b.rule.name()))
    });
    Ok(rows)
}

/// Mean milliseconds per round, ascending; ties broken by rule name.
pub fn emit_overhead_table(logs: &[CellLog]) -> Result<String> {
    let rows = overhead_rows(logs)?;
    let mut out = provenance(logs);
    out.push_str("rule,mean_ms,mean_subspace_build_ms,rounds\n");
    for r in rows {
        let build = r
            .mean_subspace_build_ms
            .map(|b| format!("{b:.6}"))
            .unwrap_or_default();
        writeln!(out, "{},{:.6},{},{}", r.rule, r.mean_ms, build, r.rounds).unwrap();
    }
    Ok(out)
}

/// Long-format `(round, rule, seed, accuracy)` rows for one attack.
pub fn emit_curves(logs: &[CellLog], attack: AttackKind) -> Result<String> {
    let selected: Vec<&CellLog> = logs.iter().filter(|l| l.header.attack == attack).collect();
    if selected.is_empty() {
        return Err(Error::Empty("no logs for this attack"));
    }
    let owned: Vec<CellLog> = selected.iter().map(|l| (*l).clone()).collect();
    let mut out = provenance(&owned);
    out.push_str("round,rule,seed,accuracy\n");
    let rules = rule_order(&selected.iter().map(|l| l.header.rule).collect());
    for rule in rules {
        let mut series: Vec<&&CellLog> =
            selected.iter().filter(|l| l.header.rule == rule).collect();
        series.sort_by_key(|l| l.header.seed);
        for log in series {
            for r in &log.records {
                writeln!(
                    out,
                    "{},{},{},{}",
                    r.round, rule, log.header.seed, r.accuracy
                )
                .unwrap();
            }
        }
    }
    Ok(out)
}

/// Rules whose no-attack final accuracy (seed mean) falls more than `band`
/// below the `mean` rule's. Empty when there is no `mean`/`none` baseline.
pub fn no_attack_band_violations(logs: &[CellLog], band: f64) -> Result<Vec<(RuleKind, f64)>> {
    let mut finals: BTreeMap<RuleKind, Vec<f64>> = BTreeMap::new();
    for log in logs.iter().filter(|l| l.header.attack == AttackKind::None) {
        finals
            .entry(log.header.rule)
            .or_default()
            .push(compute_metrics(&log.records)?.final_accuracy);
    }
    let Some(reference) = finals.get(&RuleKind::Mean).map(|v| mean(v)) else {
        return Ok(Vec::new());
    };
    Ok(finals
        .iter()
        .map(|(&r, v)| (r, mean(v)))
        .filter(|&(_, acc)| acc < reference - band)
        .collect())
}

/// Writes `summary/auc.csv`, `summary/overhead.csv` and one
/// `summary/curves_<attack>.csv` per attack under `root`.
pub fn write_summaries(root: &Path, logs: &[CellLog]) -> Result<Vec<PathBuf>> {
    let dir = root.join("summary");
    fs::create_dir_all(&dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };
    put("auc.csv".into(), emit_auc_table(logs)?)?;
    put("overhead.csv".into(), emit_overhead_table(logs)?)?;
    let attacks: BTreeSet<AttackKind> = logs.iter().map(|l| l.header.attack).collect();
    for attack in attacks {
        put(format!("curves_{attack}.csv"), emit_curves(logs, attack)?)?;
    }
    Ok(written)
}
