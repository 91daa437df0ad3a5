//! CSV output and summary tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bound::SqrtBound;
use crate::error::{HarnessError, Result};
use crate::metrics::{bound_interval, rms_interval, RunMetrics, COMPONENTS};

pub const HEADER: &str = "frame,sensor,metric,value,ci_low,ci_high";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CRLB_FILE: &str = "crlb.csv";
pub const META_FILE: &str = "run.json";

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub frame: usize,
    /// 1-based sensor id, or `all` for fused quantities.
    pub sensor: String,
    pub metric: String,
    pub value: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

/// 17 significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

impl Row {
    fn new(
        frame: usize,
        sensor: String,
        metric: impl Into<String>,
        value: f64,
        ci: Option<(f64, f64)>,
    ) -> Self {
        Self {
            frame,
            sensor,
            metric: metric.into(),
            value,
            ci_low: ci.map(|c| c.0),
            ci_high: ci.map(|c| c.1),
        }
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.frame,
            self.sensor,
            self.metric,
            fmt_float(self.value),
            fmt_opt(self.ci_low),
            fmt_opt(self.ci_high)
        )
    }

    fn parse(line: &str, path: &Path) -> Result<Self> {
        let bad = |what: &str| {
            HarnessError::Report(format!(
                "{}: malformed row `{line}` ({what})",
                path.display()
            ))
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(bad("expected 6 fields"));
        }
        let num = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse::<f64>().map(Some).map_err(|_| bad("number"))
            }
        };
        Ok(Self {
            frame: f[0].parse().map_err(|_| bad("frame"))?,
            sensor: f[1].to_string(),
            metric: f[2].to_string(),
            value: num(f[3])?.ok_or_else(|| bad("value"))?,
            ci_low: num(f[4])?,
            ci_high: num(f[5])?,
        })
    }
}

pub fn crlb_rows(bound: &SqrtBound, runs: usize) -> Vec<Row> {
    let mut rows = Vec::new();
    for (k, per_sensor) in bound.iter().enumerate() {
        for (s, v) in per_sensor.iter().enumerate() {
            if let Some(v) = v {
                for (c, b) in v.iter().enumerate() {
                    rows.push(Row::new(
                        k,
                        (s + 1).to_string(),
                        format!("crlb_sqrt_{}", COMPONENTS[c]),
                        *b,
                        Some(bound_interval(*b, runs)),
                    ));
                }
            }
        }
    }
    rows
}

pub fn metric_rows(m: &RunMetrics) -> Vec<Row> {
    let mut rows = Vec::new();
    for k in 0..=m.frames {
        for s in 0..m.sensors {
            let id = (s + 1).to_string();
            for c in 0..m.bias_dim {
                let rmse = m.bias_rmse[k][s][c];
                rows.push(Row::new(
                    k,
                    id.clone(),
                    format!("bias_rmse_{}", COMPONENTS[c]),
                    rmse,
                    Some(rms_interval(rmse, m.runs)),
                ));
                rows.push(Row::new(
                    k,
                    id.clone(),
                    format!("bias_sqrt_sigma_{}", COMPONENTS[c]),
                    m.bias_sqrt_sigma[k][s][c],
                    None,
                ));
            }
            rows.push(Row::new(
                k,
                id.clone(),
                "bias_nees",
                m.bias_nees[k][s],
                Some((m.nees.lower, m.nees.upper)),
            ));
            rows.push(Row {
                ci_low: None,
                ci_high: Some(m.nees.one_sided_upper),
                ..Row::new(
                    k,
                    id.clone(),
                    "bias_nees_one_sided",
                    m.bias_nees[k][s],
                    None,
                )
            });
        }
        let track = |name: &str, v: crate::metrics::TrackRmse| {
            Row::new(
                k,
                "all".into(),
                name,
                v.rmse,
                Some((v.rmse - 1.96 * v.se, v.rmse + 1.96 * v.se)),
            )
        };
        rows.push(Row {
            sensor: "1".into(),
            ..track("track_rmse_local", m.local_rmse[k])
        });
        if let Some(v) = m.fused_rmse[k] {
            rows.push(track("track_rmse_fused", v));
        }
        if let Some(v) = m.nobias_rmse[k] {
            rows.push(track("track_rmse_fused_nobias", v));
        }
    }
    if let Some(bound) = &m.crlb {
        rows.extend(crlb_rows(bound, m.runs));
    }
    rows
}

pub fn to_csv(rows: &[Row]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

pub fn read_csv(path: &Path) -> Result<Vec<Row>> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == HEADER => {}
        _ => {
            return Err(HarnessError::Report(format!(
                "{}: missing header `{HEADER}`",
                path.display()
            )))
        }
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| Row::parse(l, path))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub scenario: String,
    pub method: String,
    pub local_filter: String,
    pub runs: usize,
    pub seed: u64,
    pub frames: usize,
    pub sensors: usize,
    pub bias_dim: usize,
}

fn write(path: PathBuf, contents: &str) -> Result<()> {
    fs::write(&path, contents).map_err(|e| HarnessError::Io { path, source: e })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

/// Writes `metrics.csv` and `run.json` into `dir`.
pub fn emit_report(m: &RunMetrics, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    write(dir.join(METRICS_FILE), &to_csv(&metric_rows(m)))?;
    let meta = RunMeta {
        scenario: m.scenario.clone(),
        method: m.method.label().into(),
        local_filter: m.local_filter.clone(),
        runs: m.runs,
        seed: m.seed,
        frames: m.frames,
        sensors: m.sensors,
        bias_dim: m.bias_dim,
    };
    let json =
        serde_json::to_string_pretty(&meta).map_err(|e| HarnessError::Report(e.to_string()))?;
    write(dir.join(META_FILE), &(json + "\n"))
}

pub fn emit_crlb(bound: &SqrtBound, runs: usize, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    write(dir.join(CRLB_FILE), &to_csv(&crlb_rows(bound, runs)))
}

/// Final-frame summary for one result directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub label: String,
    pub frame: usize,
    /// metric name → row, sensor 1, final frame.
    pub rows: BTreeMap<String, Row>,
}

fn summarize(dir: &Path) -> Result<Option<Summary>> {
    let metrics = dir.join(METRICS_FILE);
    let crlb = dir.join(CRLB_FILE);
    let mut rows = Vec::new();
    if metrics.exists() {
        rows.extend(read_csv(&metrics)?);
    }
    if crlb.exists() {
        rows.extend(read_csv(&crlb)?);
    }
    if rows.is_empty() {
        return Ok(None);
    }
    let label = fs::read_to_string(dir.join(META_FILE))
        .ok()
        .and_then(|t| serde_json::from_str::<RunMeta>(&t).ok())
        .map(|m| format!("{} / {}", m.local_filter, m.method))
        .unwrap_or_else(|| {
            dir.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default()
        });
    let frame = rows.iter().map(|r| r.frame).max().unwrap_or(0);
    let rows = rows
        .into_iter()
        .filter(|r| r.frame == frame && r.sensor == "1")
        .map(|r| (r.metric.clone(), r))
        .collect();
    Ok(Some(Summary { label, frame, rows }))
}

/// Summaries for `dir` itself and each immediate subdirectory holding results.
pub fn collect_summaries(dir: &Path) -> Result<Vec<Summary>> {
    let mut out = Vec::new();
    if let Some(s) = summarize(dir)? {
        out.push(s);
    }
    let mut subdirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| HarnessError::Io {
            path: dir.to_path_buf(),
            source: e,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    for d in subdirs {
        if let Some(s) = summarize(&d)? {
            out.push(s);
        }
    }
    if out.is_empty() {
        return Err(HarnessError::Report(format!(
            "no {METRICS_FILE} or {CRLB_FILE} under {}",
            dir.display()
        )));
    }
    Ok(out)
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4e}")).unwrap_or_else(|| "-".into())
}

/// Tables of RMSE, `√Σ`, `√CRLB` and the bound's 95% interval at the final
/// frame for sensor 1, one column per result directory.
pub fn tables(summaries: &[Summary]) -> String {
    let mut out = String::new();
    for comp in ["b_r", "b_theta"] {
        let _ = writeln!(out, "Offset bias {comp}, sensor 1, final frame");
        let mut header = format!("{:<24}", "");
        for s in summaries {
            let _ = write!(header, " | {:>24}", format!("{} (k={})", s.label, s.frame));
        }
        let _ = writeln!(out, "{header}");
        let get = |s: &Summary, m: &str| s.rows.get(&format!("{m}_{comp}")).cloned();
        let lines: [(&str, Box<dyn Fn(&Summary) -> Option<f64>>); 5] = [
            ("RMSE", Box::new(|s| get(s, "bias_rmse").map(|r| r.value))),
            (
                "sqrt(Sigma_ii)",
                Box::new(|s| get(s, "bias_sqrt_sigma").map(|r| r.value)),
            ),
            (
                "sqrt(CRLB)",
                Box::new(|s| get(s, "crlb_sqrt").map(|r| r.value)),
            ),
            (
                "Upper 95% interval",
                Box::new(|s| get(s, "crlb_sqrt").and_then(|r| r.ci_high)),
            ),
            (
                "Lower 95% interval",
                Box::new(|s| get(s, "crlb_sqrt").and_then(|r| r.ci_low)),
            ),
        ];
        for (name, f) in lines.iter() {
            let mut line = format!("{name:<24}");
            for s in summaries {
                let _ = write!(line, " | {:>24}", cell(f(s)));
            }
            let _ = writeln!(out, "{line}");
        }
        out.push('\n');
    }
    out
}
