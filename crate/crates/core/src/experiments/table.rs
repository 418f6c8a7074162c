//! Result rows, grouped summaries and the CSV format.
//!
//! The CSV starts with `# key=value` metadata lines, then the header
//! `scenario,scheme,snr_db,alpha,trial,seed,sum_rate,min_rate,rate_user_1..rate_user_K,power_used,iterations,status`.
//! Reals carry 12 significant digits; lines end with LF. Perfect CSIT is
//! written as `alpha = inf`, rates of failed cells as `NaN`.

use std::io::Write;
use std::path::Path;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scenario: String,
    pub scheme: String,
    pub snr_db: f64,
    /// `None` for perfect CSIT.
    pub alpha: Option<f64>,
    pub trial: usize,
    pub seed: u64,
    pub user_rates: Vec<f64>,
    pub sum_rate: f64,
    pub min_rate: f64,
    pub power_used: f64,
    pub iterations: usize,
    pub status: String,
}

impl ResultRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub n_users: usize,
    pub metadata: Vec<(String, String)>,
    pub rows: Vec<ResultRow>,
}

/// `x` with 12 significant digits, shortest of fixed or scientific notation
/// in the manner of C's `%.12g`.
pub fn format_sig(x: f64) -> String {
    const DIGITS: i32 = 12;
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..DIGITS).contains(&exp) {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{}", trim_zeros(mantissa.to_string()), exp)
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn parse_real(field: &str, text: &str) -> Result<f64> {
    text.parse::<f64>()
        .map_err(|_| Error::invalid(format!("column {field}: cannot parse `{text}` as a number")))
}

pub fn header(n_users: usize) -> Vec<String> {
    let mut h: Vec<String> = ["scenario", "scheme", "snr_db", "alpha", "trial", "seed", "sum_rate", "min_rate"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((1..=n_users).map(|k| format!("rate_user_{k}")));
    h.extend(["power_used", "iterations", "status"].iter().map(|s| s.to_string()));
    h
}

/// Serializes the table to the CSV text format.
pub fn to_csv_string(table: &ResultTable) -> String {
    let mut out = String::new();
    for (k, v) in &table.metadata {
        out.push_str(&format!("# {k}={v}\n"));
    }
    out.push_str(&header(table.n_users).join(","));
    out.push('\n');
    for r in &table.rows {
        let mut fields = vec![
            r.scenario.clone(),
            r.scheme.clone(),
            format_sig(r.snr_db),
            format_sig(r.alpha.unwrap_or(f64::INFINITY)),
            r.trial.to_string(),
            r.seed.to_string(),
            format_sig(r.sum_rate),
            format_sig(r.min_rate),
        ];
        fields.extend(r.user_rates.iter().map(|&x| format_sig(x)));
        fields.push(format_sig(r.power_used));
        fields.push(r.iterations.to_string());
        fields.push(r.status.clone());
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn write_csv(table: &ResultTable, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(to_csv_string(table).as_bytes()).map_err(|e| Error::io(path, e))
}

/// Parses the CSV text format back into a table.
pub fn from_csv_str(text: &str) -> Result<ResultTable> {
    let mut metadata = Vec::new();
    let mut lines = text.lines();
    let header_line = loop {
        match lines.next() {
            Some(l) if l.starts_with('#') => {
                let body = l.trim_start_matches('#').trim();
                let (k, v) = body.split_once('=').unwrap_or((body, ""));
                metadata.push((k.to_string(), v.to_string()));
            }
            Some(l) => break l,
            None => return Err(Error::invalid("CSV has no header line")),
        }
    };
    let cols: Vec<&str> = header_line.split(',').collect();
    let n_users = cols.iter().filter(|c| c.starts_with("rate_user_")).count();
    if cols != header(n_users).iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(Error::invalid(format!("unexpected CSV header `{header_line}`")));
    }
    let mut rows = Vec::new();
    for line in lines.filter(|l| !l.is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != cols.len() {
            return Err(Error::invalid(format!("row has {} fields, expected {}", f.len(), cols.len())));
        }
        let alpha = parse_real("alpha", f[3])?;
        let user_rates = (0..n_users)
            .map(|k| parse_real("rate_user", f[8 + k]))
            .collect::<Result<Vec<_>>>()?;
        let tail = 8 + n_users;
        rows.push(ResultRow {
            scenario: f[0].to_string(),
            scheme: f[1].to_string(),
            snr_db: parse_real("snr_db", f[2])?,
            alpha: if alpha.is_infinite() { None } else { Some(alpha) },
            trial: f[4].parse().map_err(|_| Error::invalid("column trial"))?,
            seed: f[5].parse().map_err(|_| Error::invalid("column seed"))?,
            sum_rate: parse_real("sum_rate", f[6])?,
            min_rate: parse_real("min_rate", f[7])?,
            user_rates,
            power_used: parse_real("power_used", f[tail])?,
            iterations: f[tail + 1].parse().map_err(|_| Error::invalid("column iterations"))?,
            status: f[tail + 2].to_string(),
        });
    }
    Ok(ResultTable { n_users, metadata, rows })
}

pub fn read_csv(path: &Path) -> Result<ResultTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_csv_str(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupKey {
    Scenario,
    Scheme,
    SnrDb,
    Alpha,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    SumRate,
    MinRate,
    PowerUsed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    /// Group values in `group_by` order, formatted as in the CSV.
    pub key: Vec<String>,
    /// Rows in the group with status `ok`.
    pub count: usize,
    /// Rows in the group with any other status.
    pub failed: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1); zero for a single row.
    pub std: f64,
    pub p05: f64,
    pub p50: f64,
    pub p95: f64,
}

fn key_of(row: &ResultRow, group_by: &[GroupKey]) -> Vec<String> {
    group_by
        .iter()
        .map(|g| match g {
            GroupKey::Scenario => row.scenario.clone(),
            GroupKey::Scheme => row.scheme.clone(),
            GroupKey::SnrDb => format_sig(row.snr_db),
            GroupKey::Alpha => format_sig(row.alpha.unwrap_or(f64::INFINITY)),
        })
        .collect()
}

/// Linear-interpolation percentile of sorted data, `q` in [0, 1].
fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Groups rows by `group_by` (groups in order of first appearance) and
/// aggregates `metric` over the rows with status `ok`.
pub fn summarize(table: &ResultTable, group_by: &[GroupKey], metric: Metric) -> Result<Vec<AggregateRow>> {
    if table.rows.is_empty() {
        return Err(Error::EmptyInput("result table has no rows".into()));
    }
    let mut groups: Vec<(Vec<String>, Vec<f64>, usize)> = Vec::new();
    for row in &table.rows {
        let key = key_of(row, group_by);
        let idx = match groups.iter().position(|(k, _, _)| *k == key) {
            Some(i) => i,
            None => {
                groups.push((key, Vec::new(), 0));
                groups.len() - 1
            }
        };
        if row.is_ok() {
            groups[idx].1.push(match metric {
                Metric::SumRate => row.sum_rate,
                Metric::MinRate => row.min_rate,
                Metric::PowerUsed => row.power_used,
            });
        } else {
            groups[idx].2 += 1;
        }
    }
    Ok(groups
        .into_iter()
        .map(|(key, mut values, failed)| {
            let n = values.len();
            let mean = values.iter().sum::<f64>() / n as f64;
            let std = if n > 1 {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else if n == 1 {
                0.0
            } else {
                f64::NAN
            };
            values.sort_by(f64::total_cmp);
            AggregateRow {
                key,
                count: n,
                failed,
                mean,
                std,
                p05: percentile(&values, 0.05),
                p50: percentile(&values, 0.5),
                p95: percentile(&values, 0.95),
            }
        })
        .collect())
}

/// CSV text for aggregate rows.
pub fn summary_csv_string(group_by: &[GroupKey], metric: Metric, rows: &[AggregateRow]) -> String {
    let names: Vec<&str> = group_by
        .iter()
        .map(|g| match g {
            GroupKey::Scenario => "scenario",
            GroupKey::Scheme => "scheme",
            GroupKey::SnrDb => "snr_db",
            GroupKey::Alpha => "alpha",
        })
        .collect();
    let metric_name = match metric {
        Metric::SumRate => "sum_rate",
        Metric::MinRate => "min_rate",
        Metric::PowerUsed => "power_used",
    };
    let mut out = format!("{},metric,count,failed,mean,std,p05,p50,p95\n", names.join(","));
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.key.join(","),
            metric_name,
            r.count,
            r.failed,
            format_sig(r.mean),
            format_sig(r.std),
            format_sig(r.p05),
            format_sig(r.p50),
            format_sig(r.p95)
        ));
    }
    out
}
