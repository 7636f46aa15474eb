//! Report files. The process writing them is their only writer.

use std::fs;
use std::path::{Path, PathBuf};

use imp_core::imp::ImpTrace;
use serde::Serialize;

use crate::comparison::{ComparisonReport, BASELINES_HEADER};
use crate::config::ExperimentSpec;
use crate::error::Result;
use crate::heuristic::{HeuristicReport, HEURISTIC_HEADER};
use crate::lemma1::{Lemma1Report, LEMMA1_HEADER};
use crate::recovery::{RecoveryReport, TrialRecord, TRIALS_HEADER};

/// Attached to every summary: nothing below is prescribed by the theory.
pub const PROTOCOL_NOTE: &str =
    "trial counts, sweeps, tolerances and pass gates are harness settings, not part of the analysed results";

#[derive(Serialize)]
struct Summary<'a, R: Serialize> {
    experiment: &'static str,
    note: &'static str,
    pass: bool,
    config: &'a ExperimentSpec,
    report: &'a R,
}

#[derive(Serialize)]
struct TraceFile<'a> {
    record: &'a TrialRecord,
    trace: &'a ImpTrace,
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One `trials.csv` row as written to disk, without the line terminator.
pub fn csv_line(fields: &[String]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(fields)?;
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    let text = String::from_utf8(bytes).expect("csv output of utf-8 fields is utf-8");
    Ok(text.trim_end_matches('\n').to_string())
}

fn summary<R: Serialize>(
    out: &Path,
    spec: &ExperimentSpec,
    experiment: &'static str,
    pass: bool,
    report: &R,
) -> Result<PathBuf> {
    fs::create_dir_all(out)?;
    let path = out.join("summary.json");
    write_json(
        &path,
        &Summary {
            experiment,
            note: PROTOCOL_NOTE,
            pass,
            config: spec,
            report,
        },
    )?;
    Ok(path)
}

pub fn write_recovery(out: &Path, spec: &ExperimentSpec, report: &RecoveryReport) -> Result<()> {
    summary(out, spec, "support_recovery", report.summary.pass, report)?;
    write_csv(
        &out.join("trials.csv"),
        &TRIALS_HEADER,
        report.records.iter().map(TrialRecord::csv_fields),
    )?;
    if !report.traces.is_empty() {
        let dir = out.join("trace");
        fs::create_dir_all(&dir)?;
        for (record, (trial, trace)) in report.records.iter().zip(&report.traces) {
            debug_assert_eq!(record.trial, *trial);
            write_json(&dir.join(format!("{trial}.json")), &TraceFile { record, trace })?;
        }
    }
    Ok(())
}

pub fn write_heuristic(out: &Path, spec: &ExperimentSpec, report: &HeuristicReport) -> Result<()> {
    summary(out, spec, "heuristic_equivalence", report.pass, report)?;
    write_csv(
        &out.join("heuristic.csv"),
        &HEURISTIC_HEADER,
        report.rows.iter().map(|r| r.csv_fields()),
    )
}

pub fn write_comparison(out: &Path, spec: &ExperimentSpec, report: &ComparisonReport) -> Result<()> {
    summary(out, spec, "baseline_comparison", report.pass, report)?;
    write_csv(
        &out.join("baselines.csv"),
        &BASELINES_HEADER,
        report.rows.iter().map(|r| r.csv_fields()),
    )
}

pub fn write_lemma1(out: &Path, spec: &ExperimentSpec, report: &Lemma1Report) -> Result<()> {
    summary(out, spec, "lemma1_check", report.pass, report)?;
    write_csv(
        &out.join("lemma1.csv"),
        &LEMMA1_HEADER,
        report.rows.iter().map(|r| r.csv_fields()),
    )
}

/// The row of `trial` in `trials.csv` text, as written on disk.
pub fn find_trial_row(csv_text: &str, trial: usize) -> Option<String> {
    let prefix = format!("{trial},");
    csv_text
        .lines()
        .skip(1)
        .find(|line| line.starts_with(&prefix))
        .map(str::to_string)
}

/// A row with its final `wall_ms` column removed.
pub fn without_wall_time(row: &str) -> &str {
    row.rsplit_once(',').map_or(row, |(head, _)| head)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_line_matches_writer() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let rows = vec![vec!["1".to_string(), "0.5".into(), "".into()], vec!["2".into(), "x".into(), "3".into()]];
        write_csv(&path, &["a", "b", "c"], rows.clone()).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(find_trial_row(&text, 1).unwrap(), csv_line(&rows[0]).unwrap());
        assert_eq!(find_trial_row(&text, 2).unwrap(), "2,x,3");
        assert_eq!(find_trial_row(&text, 3), None);
        assert_eq!(without_wall_time("2,x,3"), "2,x");
    }
}
