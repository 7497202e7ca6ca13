//! Result files: delimited traces, key-value summaries, order tables and
//! histogram grids.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::data::format_value;
use crate::diagnostics::PosteriorSummary;
use crate::error::{Error, Result};
use crate::evidence::EvidenceReport;
use crate::model::{MAX_DOF, MIN_DOF};
use crate::order::OrderSelection;
use crate::sampler::ChainTrace;

pub const DEFAULT_BINS: usize = 50;

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn join_orders(orders: &[usize]) -> String {
    orders.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(",")
}

/// Trace as comma-separated text: a header `iteration,<names>` and one row
/// per retained draw.
pub fn trace_text(trace: &ChainTrace) -> String {
    let names = trace.parameter_names();
    let mut out = String::with_capacity(trace.len() * names.len() * 24);
    out.push_str("iteration");
    for n in &names {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    for (i, row) in trace.rows().iter().enumerate() {
        let _ = write!(out, "{i}");
        for v in row {
            out.push(',');
            out.push_str(&format_value(*v));
        }
        out.push('\n');
    }
    out
}

pub fn write_trace(path: &Path, trace: &ChainTrace) -> Result<()> {
    write_file(path, &trace_text(trace))
}

/// A trace read back from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceTable {
    pub names: Vec<String>,
    pub iterations: Vec<u64>,
    pub rows: Vec<Vec<f64>>,
}

impl TraceTable {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.names.iter().position(|n| n == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

pub fn parse_trace(text: &str, path: &Path) -> Result<TraceTable> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Data(format!("{}: empty trace file", path.display())))?;
    let fields: Vec<&str> = header.split(',').map(str::trim).collect();
    if fields.len() < 2 || fields[0] != "iteration" {
        return Err(err(1, "header must start with 'iteration' followed by parameter names".into()));
    }
    let names: Vec<String> = fields[1..].iter().map(|s| s.to_string()).collect();
    let mut table = TraceTable {
        names,
        iterations: Vec::new(),
        rows: Vec::new(),
    };
    for (i, line) in lines {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != fields.len() {
            return Err(err(
                i + 1,
                format!("expected {} fields, found {}", fields.len(), cells.len()),
            ));
        }
        let it = cells[0]
            .parse::<u64>()
            .map_err(|_| err(i + 1, format!("bad iteration index '{}'", cells[0])))?;
        let row = cells[1..]
            .iter()
            .map(|c| {
                c.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(i + 1, format!("non-numeric value '{c}'")))
            })
            .collect::<Result<Vec<f64>>>()?;
        table.iterations.push(it);
        table.rows.push(row);
    }
    if table.rows.is_empty() {
        return Err(Error::Data(format!("{}: trace has no draws", path.display())));
    }
    Ok(table)
}

pub fn read_trace(path: &Path) -> Result<TraceTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trace(&text, path)
}

pub type KeyValues = Vec<(String, String)>;

pub fn key_value_text(entries: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in entries {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

pub fn write_key_values(path: &Path, entries: &[(String, String)]) -> Result<()> {
    write_file(path, &key_value_text(entries))
}

/// Parse `key = value` lines, keeping file order.
pub fn parse_key_values(text: &str, path: &Path) -> Result<KeyValues> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: format!("expected 'key = value', found '{line}'"),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn lookup<'a>(entries: &'a [(String, String)], key: &str) -> Option<&'a str> {
    entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

fn kv(entries: &mut KeyValues, key: impl Into<String>, value: impl ToString) {
    entries.push((key.into(), value.to_string()));
}

pub fn summary_entries(summary: &PosteriorSummary) -> KeyValues {
    let mut e = Vec::new();
    kv(&mut e, "relabelled", summary.relabelled);
    kv(&mut e, "identity_share", summary.identity_share);
    kv(&mut e, "acceptance.pi", summary.weight_acceptance);
    for (k, a) in summary.ar_acceptance.iter().enumerate() {
        kv(&mut e, format!("acceptance.phi_{}", k + 1), a);
    }
    for (k, a) in summary.dof_acceptance.iter().enumerate() {
        kv(&mut e, format!("acceptance.nu_{}", k + 1), a);
    }
    for p in &summary.parameters {
        kv(&mut e, format!("{}.mean", p.name), p.mean);
        kv(&mut e, format!("{}.sd", p.name), p.sd);
        kv(&mut e, format!("{}.hdi_lower", p.name), p.hdi_lower);
        kv(&mut e, format!("{}.hdi_upper", p.name), p.hdi_upper);
        kv(&mut e, format!("{}.ess", p.name), p.ess);
    }
    e
}

/// Tab-separated `orders  count  share`, most visited first.
pub fn selection_table_text(selection: &OrderSelection) -> String {
    let mut out = String::from("orders\tcount\tshare\n");
    for (orders, count, share) in selection.table() {
        let _ = writeln!(out, "{}\t{count}\t{share:.6}", join_orders(&orders));
    }
    out
}

pub fn evidence_entries(report: &EvidenceReport) -> KeyValues {
    let mut e = Vec::new();
    kv(&mut e, "g", report.g);
    kv(&mut e, "orders", join_orders(&report.orders));
    kv(&mut e, "marginal_ln_likelihood", report.marginal_ln_likelihood);
    kv(&mut e, "ln_label_permutations", report.ln_label_permutations);
    kv(&mut e, "ln_likelihood_at_anchor", report.ln_likelihood);
    kv(&mut e, "ln_prior_at_anchor", report.ln_prior);
    kv(&mut e, "ln_order_prior", report.ln_order_prior);
    kv(&mut e, "ln_order_posterior", report.ln_order_posterior);
    kv(&mut e, "ln_ordinate.phi", report.blocks.ar);
    kv(&mut e, "ln_ordinate.nu", report.blocks.dofs);
    kv(&mut e, "ln_ordinate.mu", report.blocks.means);
    kv(&mut e, "ln_ordinate.tau", report.blocks.precisions);
    kv(&mut e, "ln_ordinate.pi", report.blocks.weights);
    let names = crate::sampler::parameter_names(&report.orders);
    let values = crate::sampler::flatten_params(&report.anchor);
    for (n, v) in names.iter().zip(values) {
        kv(&mut e, format!("anchor.{n}"), format_value(v));
    }
    e
}

/// One histogram bin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// Count normalised so the histogram integrates to one.
    pub density: f64,
}

/// Histogram over `[lower, upper]` with `bins` equal bins; values outside
/// are ignored, the last bin is closed.
pub fn histogram(values: &[f64], lower: f64, upper: f64, bins: usize) -> Vec<Bin> {
    let bins = bins.max(1);
    let width = (upper - lower) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        if v < lower || v > upper {
            continue;
        }
        let i = (((v - lower) / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    let total = values.len().max(1) as f64;
    counts
        .iter()
        .enumerate()
        .map(|(i, &c)| Bin {
            lower: lower + i as f64 * width,
            upper: lower + (i + 1) as f64 * width,
            count: c,
            density: c as f64 / (total * width),
        })
        .collect()
}

/// Histogram grid for a named trace column: dof columns get unit bins over
/// their support, everything else `bins` bins over the observed range.
pub fn column_histogram(name: &str, values: &[f64], bins: usize) -> Vec<Bin> {
    if name.starts_with("nu_") {
        return histogram(values, MIN_DOF, MAX_DOF, (MAX_DOF - MIN_DOF) as usize);
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        histogram(values, lo, hi, bins)
    } else {
        histogram(values, lo - 0.5, lo + 0.5, 1)
    }
}

pub fn histogram_text(bins: &[Bin]) -> String {
    let mut out = String::from("lower,upper,count,density\n");
    for b in bins {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            format_value(b.lower),
            format_value(b.upper),
            b.count,
            format_value(b.density)
        );
    }
    out
}

/// Per-parameter `<name>.trace.csv` and `<name>.hist.csv` under `dir`.
/// Returns the written paths.
pub fn write_plot_data(table: &TraceTable, dir: &Path, bins: usize) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for (j, name) in table.names.iter().enumerate() {
        let col: Vec<f64> = table.rows.iter().map(|r| r[j]).collect();
        let mut t = String::from("iteration,value\n");
        for (it, v) in table.iterations.iter().zip(&col) {
            let _ = writeln!(t, "{it},{}", format_value(*v));
        }
        let trace_path = dir.join(format!("{name}.trace.csv"));
        write_file(&trace_path, &t)?;
        let hist_path = dir.join(format!("{name}.hist.csv"));
        write_file(&hist_path, &histogram_text(&column_histogram(name, &col, bins)))?;
        written.push(trace_path);
        written.push(hist_path);
    }
    Ok(written)
}
