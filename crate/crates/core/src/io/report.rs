//! Report tables: per-case rows and per-(method, gamma) summaries as CSV or
//! markdown. Per-case rows are kept so paired tests can be rerun from files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{mean_and_sd, summarize, DiceScores, Method, MetricsReport, Summary, SurfaceDistance};

use super::config::AssdUnit;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            _ => Err(Error::InvalidConfig(format!("unknown report format {s:?}"))),
        }
    }
}

pub const CSV_HEADER: [&str; 19] = [
    "row", "method", "gamma", "case_id", "n", "bg", "bg_sd", "em", "em_sd", "im", "im_sd", "wt", "wt_sd", "assd_mm",
    "assd_voxels", "assd_median", "assd_p25", "assd_p75", "n_inf",
];

/// Aggregate of one (method, gamma) group.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupSummary {
    pub method: Method,
    pub gamma: Option<f64>,
    pub n: usize,
    /// Mean and sample SD per class.
    pub bg: (f64, f64),
    pub em: Option<(f64, f64)>,
    pub im: Option<(f64, f64)>,
    pub wt: (f64, f64),
    /// `None` when the group has no ASSD or no finite one.
    pub assd: Option<Summary>,
    pub n_inf: usize,
}

fn assd_value(r: &MetricsReport, unit: AssdUnit) -> Option<SurfaceDistance> {
    match unit {
        AssdUnit::Mm => r.assd_mm,
        AssdUnit::Voxels => r.assd_voxels,
    }
}

/// Groups in method order, then ascending gamma.
pub fn summarize_groups(reports: &[MetricsReport], unit: AssdUnit) -> Result<Vec<GroupSummary>> {
    if reports.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut keys: Vec<(Method, Option<f64>)> = reports.iter().map(|r| (r.method, r.gamma)).collect();
    let cmp = |a: &(Method, Option<f64>), b: &(Method, Option<f64>)| {
        a.0.cmp(&b.0).then_with(|| match (a.1, b.1) {
            (Some(x), Some(y)) => x.total_cmp(&y),
            (x, y) => x.is_some().cmp(&y.is_some()),
        })
    };
    keys.sort_by(cmp);
    keys.dedup_by(|a, b| cmp(a, b).is_eq());
    keys.into_iter()
        .map(|(method, gamma)| {
            let group: Vec<&MetricsReport> = reports
                .iter()
                .filter(|r| r.method == method && r.gamma.map(f64::to_bits) == gamma.map(f64::to_bits))
                .collect();
            let col = |f: &dyn Fn(&DiceScores) -> Option<f64>| -> Option<(f64, f64)> {
                let v: Option<Vec<f64>> = group.iter().map(|r| f(&r.dice)).collect();
                v.and_then(|v| mean_and_sd(&v))
            };
            let distances: Vec<f64> = group.iter().filter_map(|r| assd_value(r, unit)).map(SurfaceDistance::as_f64).collect();
            let n_inf = distances.iter().filter(|v| !v.is_finite()).count();
            let assd = match summarize(&distances) {
                Ok(s) => Some(s),
                Err(Error::EmptySample) => None,
                Err(e) => return Err(e),
            };
            Ok(GroupSummary {
                method,
                gamma,
                n: group.len(),
                bg: col(&|d| Some(d.bg)).expect("non-empty group"),
                em: col(&|d| d.em),
                im: col(&|d| d.im),
                wt: col(&|d| Some(d.wt)).expect("non-empty group"),
                assd,
                n_inf,
            })
        })
        .collect()
}

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "inf".into()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn dist(v: Option<SurfaceDistance>) -> String {
    v.map(|d| d.to_string()).unwrap_or_default()
}

pub fn to_csv(reports: &[MetricsReport], unit: AssdUnit) -> Result<String> {
    let groups = summarize_groups(reports, unit)?;
    let mut out = CSV_HEADER.join(",");
    out.push('\n');
    let mut line = |cells: [String; 19]| {
        out.push_str(&cells.join(","));
        out.push('\n');
    };
    for r in reports {
        line([
            "case".into(),
            r.method.as_str().into(),
            opt(r.gamma),
            csv_field(&r.case_id),
            "1".into(),
            num(r.dice.bg),
            String::new(),
            opt(r.dice.em),
            String::new(),
            opt(r.dice.im),
            String::new(),
            num(r.dice.wt),
            String::new(),
            dist(r.assd_mm),
            dist(r.assd_voxels),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
        ]);
    }
    for g in &groups {
        let has_assd = reports.iter().any(|r| r.method == g.method && assd_value(r, unit).is_some());
        line([
            "summary".into(),
            g.method.as_str().into(),
            opt(g.gamma),
            String::new(),
            g.n.to_string(),
            num(g.bg.0),
            num(g.bg.1),
            opt(g.em.map(|m| m.0)),
            opt(g.em.map(|m| m.1)),
            opt(g.im.map(|m| m.0)),
            opt(g.im.map(|m| m.1)),
            num(g.wt.0),
            num(g.wt.1),
            String::new(),
            String::new(),
            opt(g.assd.map(|s| s.median)),
            opt(g.assd.map(|s| s.p25)),
            opt(g.assd.map(|s| s.p75)),
            if has_assd { g.n_inf.to_string() } else { String::new() },
        ]);
    }
    Ok(out)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn pm(v: Option<(f64, f64)>) -> String {
    v.map(|(m, s)| format!("{m:.4} ± {s:.4}")).unwrap_or_else(|| "-".into())
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

/// One table per method with columns gamma, BG, EM, IM, WT, ASSD median,
/// p25, p75 and the count of infinite ASSDs.
pub fn to_markdown(reports: &[MetricsReport], unit: AssdUnit) -> Result<String> {
    let groups = summarize_groups(reports, unit)?;
    let unit_name = match unit {
        AssdUnit::Mm => "mm",
        AssdUnit::Voxels => "voxels",
    };
    let mut out = String::new();
    let mut current = None;
    for g in &groups {
        if current != Some(g.method) {
            if current.is_some() {
                out.push('\n');
            }
            current = Some(g.method);
            let _ = writeln!(out, "### {} (n = {}, ASSD in {unit_name})\n", g.method.as_str(), g.n);
            out.push_str("| γ | BG | EM | IM | WT | ASSD-median | p25 | p75 | n_inf |\n");
            out.push_str("|---|---|---|---|---|---|---|---|---|\n");
        }
        let has_assd = reports.iter().any(|r| r.method == g.method && assd_value(r, unit).is_some());
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            g.gamma.map(num).unwrap_or_else(|| "-".into()),
            pm(Some(g.bg)),
            pm(g.em),
            pm(g.im),
            pm(Some(g.wt)),
            cell(g.assd.map(|s| s.median)),
            cell(g.assd.map(|s| s.p25)),
            cell(g.assd.map(|s| s.p75)),
            if has_assd { g.n_inf.to_string() } else { "-".into() },
        );
    }
    Ok(out)
}

pub fn emit_report(reports: &[MetricsReport], format: ReportFormat, unit: AssdUnit) -> Result<String> {
    match format {
        ReportFormat::Csv => to_csv(reports, unit),
        ReportFormat::Markdown => to_markdown(reports, unit),
    }
}

fn parse_num(s: &str, what: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| Error::Format(format!("bad {what} value {s:?}")))
}

fn parse_dist(s: &str, what: &str) -> Result<Option<SurfaceDistance>> {
    Ok(parse_num(s, what)?.map(SurfaceDistance::from_f64))
}

/// Reads back the per-case rows of a CSV written by [`to_csv`]; summary
/// rows are skipped.
pub fn parse_csv(text: &str) -> Result<Vec<MetricsReport>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| Error::Format(e.to_string()))?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Format(format!("unexpected report header {header:?}")));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        match &rec[0] {
            "summary" => continue,
            "case" => {}
            other => return Err(Error::Format(format!("unknown row kind {other:?}"))),
        }
        let method = Method::parse(&rec[1]).ok_or_else(|| Error::Format(format!("unknown method {:?}", &rec[1])))?;
        let need = |i: usize| parse_num(&rec[i], CSV_HEADER[i])?.ok_or_else(|| Error::Format(format!("missing {}", CSV_HEADER[i])));
        out.push(MetricsReport {
            case_id: rec[3].to_string(),
            method,
            gamma: parse_num(&rec[2], "gamma")?,
            dice: DiceScores {
                bg: need(5)?,
                em: parse_num(&rec[7], "em")?,
                im: parse_num(&rec[9], "im")?,
                wt: need(11)?,
            },
            assd_mm: parse_dist(&rec[13], "assd_mm")?,
            assd_voxels: parse_dist(&rec[14], "assd_voxels")?,
        });
    }
    Ok(out)
}

pub fn read_report(path: &Path) -> Result<Vec<MetricsReport>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn write_report(reports: &[MetricsReport], path: &Path, unit: AssdUnit) -> Result<()> {
    fs::write(path, to_csv(reports, unit)?).map_err(|e| Error::io(path, e))
}
