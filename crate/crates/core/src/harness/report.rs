//! CSV and plot-data output, and re-aggregation of per-instance files.
//!
//! Layout under the output directory:
//!
//! - `cell_bench.csv`, `calibration_checks.csv`, `calibrated_device.toml`
//! - `quant_sweep.csv`, `quant_sweep_summary.csv`
//! - `curves/{method}_b{bits}_s{seed}.csv`, `checkpoints/*.mxbr`
//! - `memristor_eval_b{bits}.csv`, `memristor_eval_summary.csv`
//!
//! Floats are written in shortest round-trip form, so re-reading a file
//! recovers the exact values and aggregates recompute bit for bit.

use std::fs;
use std::path::{Path, PathBuf};

use crate::checkpoint;
use crate::convert::SaturationTally;
use crate::error::{Error, Result};
use crate::harness::cellbench::{CellBenchRow, WindowCheck, CELL_OPS};
use crate::harness::montecarlo::{InstanceResult, RunReport};
use crate::harness::sweep::{Method, SweepResult, SweepRow};
use crate::qat::train::EpochStat;
use crate::stats::Summary;

pub const CELL_BENCH_FILE: &str = "cell_bench.csv";
pub const CALIBRATION_CHECKS_FILE: &str = "calibration_checks.csv";
pub const SWEEP_FILE: &str = "quant_sweep.csv";
pub const SWEEP_SUMMARY_FILE: &str = "quant_sweep_summary.csv";
pub const EVAL_SUMMARY_FILE: &str = "memristor_eval_summary.csv";

pub const EVAL_HEADER: [&str; 10] = [
    "kind",
    "instance",
    "error",
    "accuracy",
    "error_std",
    "error_min",
    "error_max",
    "digital_error",
    "adc_conversions",
    "adc_saturated",
];

pub fn eval_file_name(bits: u32) -> String {
    format!("memristor_eval_b{bits}.csv")
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    fs::write(path, csv_bytes(header, rows)).map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

fn f(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(f).unwrap_or_default()
}

pub fn write_cell_bench(dir: &Path, rows: &[CellBenchRow]) -> Result<PathBuf> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let reference = CELL_OPS.iter().find(|op| op.name == r.operation).map(|op| op.reference);
            vec![
                r.operation.to_string(),
                f(r.mean),
                f(r.std),
                f(r.min),
                f(r.max),
                opt(reference.map(|x| x.0)),
                opt(reference.map(|x| x.1)),
            ]
        })
        .collect();
    write_csv(
        &dir.join(CELL_BENCH_FILE),
        &["operation", "mean", "std", "min", "max", "reference_mean", "reference_std"],
        &body,
    )
}

pub fn write_checks(dir: &Path, checks: &[WindowCheck]) -> Result<PathBuf> {
    let body: Vec<Vec<String>> = checks
        .iter()
        .map(|c| {
            vec![
                c.operation.to_string(),
                c.quantity.to_string(),
                f(c.value),
                f(c.lo),
                f(c.hi),
                c.pass.to_string(),
            ]
        })
        .collect();
    write_csv(
        &dir.join(CALIBRATION_CHECKS_FILE),
        &["operation", "quantity", "value", "lo", "hi", "pass"],
        &body,
    )
}

fn write_curve(path: &Path, curve: &[EpochStat]) -> Result<PathBuf> {
    let body: Vec<Vec<String>> = curve
        .iter()
        .map(|e| vec![e.epoch.to_string(), f(e.loss), f(e.accuracy)])
        .collect();
    write_csv(path, &["epoch", "loss", "accuracy"], &body)
}

fn sweep_row_record(r: &SweepRow) -> Vec<String> {
    vec![
        r.method.as_str().to_string(),
        r.bits.to_string(),
        r.seed_index.to_string(),
        opt(r.accuracy),
        opt(r.loss),
        opt(r.train_loss),
        r.note.clone(),
    ]
}

const SWEEP_HEADER: [&str; 7] = ["method", "bits", "seed", "accuracy", "loss", "train_loss", "note"];

/// Sweep table, its summary, training curves and model checkpoints.
pub fn write_sweep(dir: &Path, sweep: &SweepResult) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let body: Vec<Vec<String>> = sweep.rows.iter().map(sweep_row_record).collect();
    out.push(write_csv(&dir.join(SWEEP_FILE), &SWEEP_HEADER, &body)?);
    out.push(write_sweep_summary(dir, &sweep.rows)?);
    let ckpt = dir.join("checkpoints");
    ensure_dir(&ckpt)?;
    for (s, net, curve) in &sweep.float_nets {
        out.push(write_curve(&dir.join(format!("curves/float_s{s}.csv")), curve)?);
        let path = ckpt.join(format!("float_s{s}.mxbr"));
        checkpoint::write_file(&path, &checkpoint::encode_network(net, None))?;
        out.push(path);
    }
    for (bits, s, qnet, curve) in &sweep.qat_nets {
        out.push(write_curve(&dir.join(format!("curves/qat_b{bits}_s{s}.csv")), curve)?);
        let path = ckpt.join(qat_checkpoint_name(*bits, *s));
        checkpoint::write_file(&path, &checkpoint::encode_network(&qnet.net, Some(&qnet.quant)))?;
        out.push(path);
    }
    Ok(out)
}

pub fn qat_checkpoint_name(bits: u32, seed_index: usize) -> String {
    format!("qat_b{bits}_s{seed_index}.mxbr")
}

/// Per (method, bits): accuracy statistics over seeds.
pub fn write_sweep_summary(dir: &Path, rows: &[SweepRow]) -> Result<PathBuf> {
    let mut keys: Vec<(Method, u32)> = rows.iter().map(|r| (r.method, r.bits)).collect();
    keys.sort();
    keys.dedup();
    let body: Vec<Vec<String>> = keys
        .into_iter()
        .map(|(m, b)| {
            let acc: Vec<f64> = rows
                .iter()
                .filter(|r| r.method == m && r.bits == b)
                .filter_map(|r| r.accuracy)
                .collect();
            let s = Summary::of(&acc);
            vec![
                m.as_str().to_string(),
                b.to_string(),
                acc.len().to_string(),
                opt(s.map(|s| s.mean)),
                opt(s.map(|s| s.std)),
                opt(s.map(|s| s.min)),
                opt(s.map(|s| s.max)),
            ]
        })
        .collect();
    write_csv(
        &dir.join(SWEEP_SUMMARY_FILE),
        &["method", "bits", "seeds", "mean_accuracy", "std_accuracy", "min_accuracy", "max_accuracy"],
        &body,
    )
}

pub fn eval_records(report: &RunReport) -> Vec<Vec<String>> {
    let mut body: Vec<Vec<String>> = report
        .instances
        .iter()
        .map(|r| {
            vec![
                "instance".into(),
                r.instance.to_string(),
                f(r.error),
                f(r.accuracy),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                r.saturation.conversions.to_string(),
                r.saturation.saturated.to_string(),
            ]
        })
        .collect();
    let a = &report.aggregate;
    let mean_acc = report.instances.iter().map(|r| r.accuracy).sum::<f64>() / report.instances.len() as f64;
    body.push(vec![
        "aggregate".into(),
        String::new(),
        f(a.mean),
        f(mean_acc),
        f(a.std),
        f(a.min),
        f(a.max),
        f(report.digital_error),
        report.saturation.conversions.to_string(),
        report.saturation.saturated.to_string(),
    ]);
    body
}

/// One CSV per bit width plus the summary. An empty report list writes
/// nothing.
pub fn write_memristor_reports(dir: &Path, reports: &[RunReport]) -> Result<Vec<PathBuf>> {
    if reports.is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for r in reports {
        out.push(write_csv(&dir.join(eval_file_name(r.bits)), &EVAL_HEADER, &eval_records(r))?);
    }
    out.push(write_eval_summary(dir, reports)?);
    Ok(out)
}

fn write_eval_summary(dir: &Path, reports: &[RunReport]) -> Result<PathBuf> {
    let mut sorted: Vec<&RunReport> = reports.iter().collect();
    sorted.sort_by_key(|r| r.bits);
    let body: Vec<Vec<String>> = sorted
        .iter()
        .map(|r| {
            vec![
                r.bits.to_string(),
                r.instances.len().to_string(),
                f(r.digital_error),
                f(r.aggregate.mean),
                f(r.aggregate.std),
                f(r.aggregate.min),
                f(r.aggregate.max),
                f(r.relative_spread()),
                f(r.relative_degradation()),
                f(r.saturation.ratio()),
            ]
        })
        .collect();
    write_csv(
        &dir.join(EVAL_SUMMARY_FILE),
        &[
            "bits",
            "instances",
            "digital_error",
            "mean_error",
            "std_error",
            "min_error",
            "max_error",
            "relative_spread",
            "relative_degradation",
            "adc_saturation_ratio",
        ],
        &body,
    )
}

fn field(rec: &csv::StringRecord, i: usize, line: usize) -> Result<&str> {
    rec.get(i)
        .ok_or_else(|| Error::Report(format!("line {line}: missing column {}", EVAL_HEADER.get(i).unwrap_or(&"?"))))
}

fn num<T: std::str::FromStr>(s: &str, what: &str, line: usize) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Report(format!("line {line}: bad {what} {s:?}")))
}

/// Parse a per-bit-width evaluation file and recompute its aggregate from
/// the instance rows. The stored aggregate row must agree exactly.
pub fn parse_eval_csv(bits: u32, text: &str) -> Result<RunReport> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| Error::Report(e.to_string()))?.clone();
    if header.iter().ne(EVAL_HEADER.iter().copied()) {
        return Err(Error::Report(format!("unexpected header {:?}", header)));
    }
    let mut instances = Vec::new();
    let mut stored: Option<(f64, f64, f64, f64, f64)> = None;
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::Report(e.to_string()))?;
        match field(&rec, 0, line)? {
            "instance" => {
                let error: f64 = num(field(&rec, 2, line)?, "error", line)?;
                let accuracy: f64 = num(field(&rec, 3, line)?, "accuracy", line)?;
                if !(0.0..=1.0).contains(&error) || !(0.0..=1.0).contains(&accuracy) {
                    return Err(Error::Report(format!("line {line}: rate outside [0, 1]")));
                }
                instances.push(InstanceResult {
                    instance: num(field(&rec, 1, line)?, "instance", line)?,
                    accuracy,
                    error,
                    saturation: SaturationTally {
                        conversions: num(field(&rec, 8, line)?, "adc_conversions", line)?,
                        saturated: num(field(&rec, 9, line)?, "adc_saturated", line)?,
                    },
                });
            }
            "aggregate" => {
                if stored.is_some() {
                    return Err(Error::Report(format!("line {line}: second aggregate row")));
                }
                stored = Some((
                    num(field(&rec, 2, line)?, "error", line)?,
                    num(field(&rec, 4, line)?, "error_std", line)?,
                    num(field(&rec, 5, line)?, "error_min", line)?,
                    num(field(&rec, 6, line)?, "error_max", line)?,
                    num(field(&rec, 7, line)?, "digital_error", line)?,
                ));
            }
            other => return Err(Error::Report(format!("line {line}: unknown row kind {other:?}"))),
        }
    }
    let (mean, std, min, max, digital) =
        stored.ok_or_else(|| Error::Report("missing aggregate row".into()))?;
    let report = RunReport::from_instances(bits, digital, instances, 0.0)?;
    let a = report.aggregate;
    if (a.mean, a.std, a.min, a.max) != (mean, std, min, max) {
        return Err(Error::Report(format!(
            "stored aggregate ({mean}, {std}, {min}, {max}) disagrees with instance rows ({}, {}, {}, {})",
            a.mean, a.std, a.min, a.max
        )));
    }
    Ok(report)
}

/// Parse the sweep table.
pub fn parse_sweep_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| Error::Report(e.to_string()))?.clone();
    if header.iter().ne(SWEEP_HEADER.iter().copied()) {
        return Err(Error::Report(format!("unexpected header {:?}", header)));
    }
    let optf = |s: &str, what: &str, line: usize| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            num(s, what, line).map(Some)
        }
    };
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::Report(e.to_string()))?;
        if rec.len() != SWEEP_HEADER.len() {
            return Err(Error::Report(format!("line {line}: expected {} columns", SWEEP_HEADER.len())));
        }
        rows.push(SweepRow {
            method: Method::parse(&rec[0])
                .ok_or_else(|| Error::Report(format!("line {line}: unknown method {:?}", &rec[0])))?,
            bits: num(&rec[1], "bits", line)?,
            seed_index: num(&rec[2], "seed", line)?,
            accuracy: optf(&rec[3], "accuracy", line)?,
            loss: optf(&rec[4], "loss", line)?,
            train_loss: optf(&rec[5], "train_loss", line)?,
            note: rec[6].to_string(),
        });
    }
    Ok(rows)
}

/// Rebuild the plot-data summaries from the per-run files in `dir`.
pub fn report_from_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let sweep = dir.join(SWEEP_FILE);
    if sweep.exists() {
        let text = fs::read_to_string(&sweep).map_err(|e| Error::io(&sweep, e))?;
        out.push(write_sweep_summary(dir, &parse_sweep_csv(&text)?)?);
    }
    let mut reports = Vec::new();
    for bits in 2..=8u32 {
        let path = dir.join(eval_file_name(bits));
        if path.exists() {
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            reports.push(parse_eval_csv(bits, &text).map_err(|e| match e {
                Error::Report(msg) => Error::Report(format!("{}: {msg}", path.display())),
                other => other,
            })?);
        }
    }
    if !reports.is_empty() {
        out.push(write_eval_summary(dir, &reports)?);
    }
    Ok(out)
}
