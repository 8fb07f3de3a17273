//! Result files: sweep records as CSV or JSON, per-class equilibrium
//! distributions as CSV, and regression summaries.
//!
//! Floats in CSV are written with 6 significant digits so that repeated runs
//! compare byte for byte.

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use kinetic_welfare_core::{Abscissa, ClassLadder, FitResult, SweepRecord};
use serde::Serialize;

use crate::SimError;

/// Column order of a records CSV.
pub const RECORD_HEADER: [&str; 8] = [
    "tau_min",
    "tau_max",
    "gamma",
    "w_ratio",
    "gini",
    "tax_revenue",
    "mu",
    "residual",
];

pub const DISTRIBUTION_HEADER: [&str; 3] = ["class_index", "r", "x_hat"];

pub const FIT_HEADER: [&str; 4] = ["abscissa", "slope", "intercept", "r_squared"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(&self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// `%g`-style formatting with 6 significant digits.
pub fn sig6(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exponent) = sci.split_once('e').expect("exponent present");
    let exponent: i32 = exponent.parse().expect("integer exponent");
    if (-5..6).contains(&exponent) {
        let fixed = format!("{:.*}", (5 - exponent) as usize, v);
        trim_zeros(&fixed).to_string()
    } else {
        format!("{}e{}", trim_zeros(mantissa), exponent)
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn write_records_csv<W: Write>(out: W, records: &[SweepRecord]) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RECORD_HEADER)?;
    for r in records {
        w.write_record(
            [
                r.tau_min,
                r.tau_max,
                r.gamma,
                r.w_ratio,
                r.gini,
                r.tax_revenue,
                r.mu,
                r.residual,
            ]
            .map(sig6),
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_records_json<W: Write>(mut out: W, records: &[SweepRecord]) -> Result<(), SimError> {
    serde_json::to_writer_pretty(&mut out, records)?;
    writeln!(out)?;
    Ok(())
}

pub fn write_records<W: Write>(
    out: W,
    records: &[SweepRecord],
    format: Format,
) -> Result<(), SimError> {
    match format {
        Format::Csv => write_records_csv(out, records),
        Format::Json => write_records_json(out, records),
    }
}

/// Parses a records file written by [`write_records_csv`] or
/// [`write_records_json`]. Rows with a NaN Gini index are marked failed.
pub fn read_records<R: Read>(input: R, format: Format) -> Result<Vec<SweepRecord>, SimError> {
    match format {
        Format::Json => Ok(serde_json::from_reader(input)?),
        Format::Csv => {
            let mut reader = csv::Reader::from_reader(input);
            let headers = reader.headers()?.clone();
            if headers.iter().ne(RECORD_HEADER) {
                return Err(SimError::Usage(format!(
                    "unexpected records header {:?}",
                    headers.iter().collect::<Vec<_>>()
                )));
            }
            let mut records = Vec::new();
            for (line, row) in reader.records().enumerate() {
                let row = row?;
                let mut v = [0.0; 8];
                for (slot, field) in v.iter_mut().zip(row.iter()) {
                    *slot = field.parse().map_err(|_| {
                        SimError::Usage(format!("row {}: cannot parse {field:?}", line + 1))
                    })?;
                }
                records.push(SweepRecord {
                    tau_min: v[0],
                    tau_max: v[1],
                    gamma: v[2],
                    w_ratio: v[3],
                    gini: v[4],
                    tax_revenue: v[5],
                    mu: v[6],
                    residual: v[7],
                    error: v[4].is_nan().then(|| "failed point".to_string()),
                });
            }
            Ok(records)
        }
    }
}

pub fn read_records_file(path: &Path) -> Result<Vec<SweepRecord>, SimError> {
    let format = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => Format::Json,
        _ => Format::Csv,
    };
    read_records(File::open(path)?, format)
}

/// One row per class with 1-based `class_index`.
pub fn write_distribution_csv<W: Write>(
    out: W,
    ladder: &ClassLadder,
    x_hat: &[f64],
) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DISTRIBUTION_HEADER)?;
    for (j, (r, x)) in ladder.incomes().iter().zip(x_hat).enumerate() {
        w.write_record([(j + 1).to_string(), sig6(*r), sig6(*x)])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct DistributionRow {
    pub class_index: usize,
    pub r: f64,
    pub x_hat: f64,
}

pub fn distribution_rows(ladder: &ClassLadder, x_hat: &[f64]) -> Vec<DistributionRow> {
    ladder
        .incomes()
        .iter()
        .zip(x_hat)
        .enumerate()
        .map(|(j, (r, x))| DistributionRow {
            class_index: j + 1,
            r: *r,
            x_hat: *x,
        })
        .collect()
}

pub fn abscissa_name(a: Abscissa) -> &'static str {
    match a {
        Abscissa::DeltaTau => "delta_tau",
        Abscissa::WRatio => "w_ratio",
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FitRow {
    pub abscissa: Abscissa,
    #[serde(flatten)]
    pub fit: FitResult,
}

pub fn write_fits<W: Write>(mut out: W, fits: &[FitRow], format: Format) -> Result<(), SimError> {
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, fits)?;
            writeln!(out)?;
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(FIT_HEADER)?;
            for row in fits {
                w.write_record([
                    abscissa_name(row.abscissa).to_string(),
                    sig6(row.fit.slope),
                    sig6(row.fit.intercept),
                    sig6(row.fit.r_squared),
                ])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

pub fn create_file(dir: &Path, name: &str) -> io::Result<File> {
    File::create(dir.join(name))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(0.368464270334), "0.368464");
        assert_eq!(sig6(0.0222491672), "0.0222492");
        assert_eq!(sig6(135.0), "135");
        assert_eq!(sig6(127.65), "127.65");
        assert_eq!(sig6(-0.30), "-0.3");
        assert_eq!(sig6(1e-10), "1e-10");
        assert_eq!(sig6(3.2748193e-11), "3.27482e-11");
        assert_eq!(sig6(999999.7), "1e6");
        assert_eq!(sig6(123456.0), "123456");
        assert_eq!(sig6(0.000123456789), "0.000123457");
        assert_eq!(sig6(f64::NAN), "NaN");
    }

    fn record(gini: f64) -> SweepRecord {
        SweepRecord {
            tau_min: 0.3,
            tau_max: 0.45,
            gamma: 0.5,
            w_ratio: 1.0,
            gini,
            tax_revenue: 0.0222,
            mu: 135.0,
            residual: 9.5e-11,
            error: None,
        }
    }

    #[test]
    fn csv_header_and_rows() {
        let mut buf = Vec::new();
        write_records_csv(&mut buf, &[record(0.368464)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "tau_min,tau_max,gamma,w_ratio,gini,tax_revenue,mu,residual\n\
             0.3,0.45,0.5,1,0.368464,0.0222,135,9.5e-11\n"
        );
    }

    #[test]
    fn csv_records_read_back() {
        let mut failed = record(f64::NAN);
        failed.error = Some("x".into());
        let mut buf = Vec::new();
        write_records_csv(&mut buf, &[record(0.368464), failed]).unwrap();
        let back = read_records(&buf[..], Format::Csv).unwrap();
        assert_eq!(back[0], record(0.368464));
        assert!(!back[1].is_ok());
    }

    #[test]
    fn json_records_round_trip() {
        let mut failed = record(f64::NAN);
        failed.error = Some("solver stalled".into());
        let mut buf = Vec::new();
        write_records_json(&mut buf, &[record(0.368464), failed.clone()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"error\": \"solver stalled\""));
        assert_eq!(text.matches("\"error\"").count(), 1);
        let back = read_records(&buf[..], Format::Json).unwrap();
        assert_eq!(back[0], record(0.368464));
        assert_eq!(back[1].error, failed.error);
    }

    #[test]
    fn distribution_csv_is_one_based() {
        let ladder = ClassLadder::linear(3, 10.0).unwrap();
        let mut buf = Vec::new();
        write_distribution_csv(&mut buf, &ladder, &[0.5, 0.25, 0.25]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "class_index,r,x_hat\n1,10,0.5\n2,20,0.25\n3,30,0.25\n"
        );
    }

    #[test]
    fn wrong_header_rejected() {
        let text = "a,b\n1,2\n";
        assert!(matches!(
            read_records(text.as_bytes(), Format::Csv),
            Err(SimError::Usage(_))
        ));
    }
}
