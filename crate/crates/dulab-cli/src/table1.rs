//! Saturated-state comparison table built from multipartite-profile runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{Experiment, ExperimentConfig};
use crate::error::{CliError, CliResult};
use crate::output::{col, f, log_col, Table};
use dulab::stats;

/// The four `(L, q)` combinations and their published values
/// `(Scott, E_GM, S̄_VN)`.
pub const REFERENCE: [((usize, usize), [f64; 3]); 4] = [
    ((8, 2), [0.933, 0.947, 3.22]),
    ((12, 2), [0.984, 0.986, 5.27]),
    ((8, 3), [0.987, 0.992, 3.54]),
    ((12, 3), [0.998, 0.999, 5.54]),
];

pub const MEASURES: [&str; 3] = ["scott_half", "e_gm", "s_vn_half"];

#[derive(Clone, Debug, Serialize)]
pub struct MeasureRow {
    pub measure: &'static str,
    pub value: f64,
    pub stderr: f64,
    pub maximum: f64,
    /// `maximum − value`.
    pub distance_to_max: f64,
    pub reference: f64,
    pub deviation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Combination {
    pub l: usize,
    pub q: usize,
    pub members: usize,
    pub from_t: Vec<usize>,
    pub rows: Vec<MeasureRow>,
}

/// Runs found for each combination; members are pooled across runs.
#[derive(Clone, Debug, Serialize)]
pub struct Table1 {
    pub combinations: Vec<Combination>,
    pub missing: Vec<(usize, usize)>,
    /// Runs at `(L, q)` outside the table, skipped.
    pub ignored: Vec<(usize, usize)>,
}

fn sidecars(p: &Path) -> CliResult<Vec<PathBuf>> {
    if p.is_dir() {
        let mut v: Vec<PathBuf> = std::fs::read_dir(p)
            .map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|q| q.to_string_lossy().ends_with(".meta.json"))
            .collect();
        v.sort();
        return Ok(v);
    }
    let s = p.to_string_lossy();
    let meta = if s.ends_with(".meta.json") {
        p.to_path_buf()
    } else if let Some(stem) = s.strip_suffix(".csv") {
        PathBuf::from(format!("{stem}.meta.json"))
    } else {
        PathBuf::from(format!("{s}.meta.json"))
    };
    Ok(vec![meta])
}

struct RunData {
    l: usize,
    q: usize,
    from_t: usize,
    /// Per member: late-window means of the three measures.
    members: Vec<[f64; 3]>,
}

fn read_run(meta_path: &Path) -> CliResult<Option<RunData>> {
    let text = std::fs::read_to_string(meta_path)
        .map_err(|e| CliError::Io(format!("{}: {e}", meta_path.display())))?;
    let meta: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", meta_path.display())))?;
    let cfg: ExperimentConfig = serde_json::from_value(meta["config"].clone())
        .map_err(|e| CliError::Validation(format!("{}: config echo: {e}", meta_path.display())))?;
    if cfg.experiment != Experiment::MultipartiteProfile {
        return Ok(None);
    }
    let l = cfg.sites()?;
    let from_t = cfg.saturation_start();
    let file = meta["files"][0]["file"]
        .as_str()
        .ok_or_else(|| CliError::Validation(format!("{}: no data file listed", meta_path.display())))?;
    let csv_path = meta_path.parent().unwrap_or(Path::new(".")).join(file);
    let mut rdr = csv::Reader::from_path(&csv_path)
        .map_err(|e| CliError::Io(format!("{}: {e}", csv_path.display())))?;
    let headers = rdr.headers()?.clone();
    let idx = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Validation(format!("{}: missing column {name}", csv_path.display())))
    };
    let (i_run, i_t) = (idx("run_id")?, idx("t")?);
    let cols = [idx("Q_half")?, idx("E_GM")?, idx("S_VN_half")?];
    let mut acc: BTreeMap<String, (usize, [f64; 3], usize)> = BTreeMap::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |i: usize| -> CliResult<f64> {
            rec[i].parse::<f64>().map_err(|e| {
                CliError::Validation(format!("{}: row {}: column {i}: {e}", csv_path.display(), n + 2))
            })
        };
        let t = parse(i_t)? as usize;
        if t < from_t {
            continue;
        }
        let order = acc.len();
        let e = acc.entry(rec[i_run].to_string()).or_insert((order, [0.0; 3], 0));
        for (k, &c) in cols.iter().enumerate() {
            e.1[k] += parse(c)?;
        }
        e.2 += 1;
    }
    let mut members: Vec<(usize, [f64; 3])> = acc
        .into_values()
        .map(|(order, s, n)| (order, s.map(|x| x / n as f64)))
        .collect();
    members.sort_by_key(|m| m.0);
    if members.is_empty() {
        return Err(CliError::Validation(format!(
            "{}: no rows at t >= {from_t}",
            csv_path.display()
        )));
    }
    Ok(Some(RunData { l, q: cfg.q, from_t, members: members.into_iter().map(|m| m.1).collect() }))
}

/// Per (L, q): member late-window means and each run's window start.
type Pooled = BTreeMap<(usize, usize), (Vec<[f64; 3]>, Vec<usize>)>;

pub fn build_table1(paths: &[PathBuf], partial: bool) -> CliResult<Table1> {
    let mut pooled = Pooled::new();
    for p in paths {
        for meta in sidecars(p)? {
            if let Some(run) = read_run(&meta)? {
                let e = pooled.entry((run.l, run.q)).or_default();
                e.0.extend(run.members);
                e.1.push(run.from_t);
            }
        }
    }
    let mut combinations = Vec::new();
    let mut missing = Vec::new();
    for ((l, q), refs) in REFERENCE {
        let Some((members, from_t)) = pooled.remove(&(l, q)) else {
            missing.push((l, q));
            continue;
        };
        let maxima = [1.0, 1.0, (l / 2) as f64];
        let rows = (0..3)
            .map(|k| {
                let s = stats::summary(&members.iter().map(|m| m[k]).collect::<Vec<_>>());
                MeasureRow {
                    measure: MEASURES[k],
                    value: s.mean,
                    stderr: s.stderr,
                    maximum: maxima[k],
                    distance_to_max: maxima[k] - s.mean,
                    reference: refs[k],
                    deviation: (s.mean - refs[k]).abs(),
                }
            })
            .collect();
        combinations.push(Combination { l, q, members: members.len(), from_t, rows });
    }
    let ignored: Vec<(usize, usize)> = pooled.into_keys().collect();
    if !missing.is_empty() && !partial {
        let m: Vec<String> = missing.iter().map(|(l, q)| format!("L={l} q={q}")).collect();
        return Err(CliError::Validation(format!("missing combinations: {}", m.join(", "))));
    }
    Ok(Table1 { combinations, missing, ignored })
}

impl Table1 {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>3} {:>2} {:>7}  {:<10} {:>9} {:>9} {:>7} {:>9} {:>9} {:>9}",
            "L", "q", "members", "measure", "value", "stderr", "max", "max-val", "reference", "|dev|"
        );
        for c in &self.combinations {
            for r in &c.rows {
                let _ = writeln!(
                    s,
                    "{:>3} {:>2} {:>7}  {:<10} {:>9.4} {:>9.4} {:>7.1} {:>9.4} {:>9.3} {:>9.4}",
                    c.l, c.q, c.members, r.measure, r.value, r.stderr, r.maximum, r.distance_to_max, r.reference, r.deviation
                );
            }
        }
        for (l, q) in &self.missing {
            let _ = writeln!(s, "{l:>3} {q:>2}  (no runs)");
        }
        for (l, q) in &self.ignored {
            let _ = writeln!(s, "note: runs at L={l} q={q} are not part of the table and were skipped");
        }
        s
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(
            "",
            vec![
                col("L", "chain length"),
                col("q", "local dimension"),
                col("members", "ensemble members pooled"),
                col("measure", "scott_half, e_gm or s_vn_half"),
                log_col("value", "late-window ensemble mean (s_vn_half is base q)", "q"),
                col("stderr", "standard error over members"),
                col("maximum", "algebraic maximum of the measure"),
                col("distance_to_max", "maximum - value"),
                col("reference", "published saturated value"),
                col("deviation", "|value - reference|"),
            ],
        );
        for c in &self.combinations {
            for r in &c.rows {
                t.push(vec![
                    c.l.to_string(),
                    c.q.to_string(),
                    c.members.to_string(),
                    r.measure.into(),
                    f(r.value),
                    f(r.stderr),
                    f(r.maximum),
                    f(r.distance_to_max),
                    f(r.reference),
                    f(r.deviation),
                ]);
            }
        }
        t
    }
}
