//! Text formats: problem instances, signals, run traces and the experiment
//! CSV files. All CSV output is comma-separated UTF-8 with a header row and
//! LF line endings; floats are written in shortest round-trip form.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::{BinaryMeasurements, EnsembleKind, SensingEnsemble, SignalVector};
use crate::solver::{IterationRecord, RunTrace};

/// One averaged per-iteration row of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub cost: f64,
    pub eta: f64,
    pub srer_db: f64,
    pub consistency: f64,
    pub algo: String,
    pub m_over_n: f64,
    /// `inf` for noiseless runs.
    pub snr_db: f64,
}

/// Final values of one run (one cell and trial).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalRow {
    pub algo: String,
    pub m_over_n: f64,
    pub snr_db: f64,
    pub ensemble: usize,
    pub trial: usize,
    pub cost: f64,
    pub srer_db: f64,
    pub consistency: f64,
}

/// SRER against the bound at one input SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrbRow {
    pub snr_db: f64,
    pub crb_srer_db: f64,
    pub bpr_srer_mean_db: f64,
    pub bpr_srer_std_db: f64,
}

/// Bound-only curve point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrbCurveRow {
    pub snr_db: f64,
    pub crb_srer_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMetricsRow {
    pub m_over_n: f64,
    pub psnr_db: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SignalRow {
    value: f64,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    csv::Reader::from_reader(file)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// RunTrace CSV: `iter, cost, eta, srer_db, consistency` (empty `srer_db`
/// when no ground truth was given).
pub fn write_run_trace(path: &Path, trace: &RunTrace) -> Result<()> {
    write_rows(path, &trace.records)
}

pub fn read_run_trace(path: &Path) -> Result<Vec<IterationRecord>> {
    read_rows(path)
}

pub fn write_signal(path: &Path, x: &SignalVector) -> Result<()> {
    let rows: Vec<_> = x
        .entries()
        .iter()
        .map(|&value| SignalRow { value })
        .collect();
    write_rows(path, &rows)
}

pub fn read_signal(path: &Path) -> Result<SignalVector> {
    let rows: Vec<SignalRow> = read_rows(path)?;
    if rows.is_empty() {
        return Err(Error::Parse(format!("{}: empty signal", path.display())));
    }
    Ok(SignalVector::from(
        rows.into_iter().map(|r| r.value).collect::<Vec<_>>(),
    ))
}

const PROBLEM_TAG: &str = "# bpr-problem";

/// Problem file: a metadata line
/// `# bpr-problem kind=… n=… m=… tau=… sigma=… seed=… noise_seed=…`
/// followed by a CSV table with columns `code, re_0…re_{n−1}` and, for
/// Fourier kinds, `im_0…im_{n−1}`.
pub fn write_problem(
    path: &Path,
    ensemble: &SensingEnsemble,
    y: &BinaryMeasurements,
) -> Result<()> {
    crate::error::check_dim(ensemble.m(), y.len())?;
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(
        file,
        "{PROBLEM_TAG} kind={} n={} m={} tau={} sigma={} seed={} noise_seed={}",
        ensemble.kind(),
        ensemble.n(),
        ensemble.m(),
        y.tau,
        y.noise_sigma,
        ensemble.seed(),
        y.seed
    )
    .map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file);
    let n = ensemble.n();
    let mut header = vec!["code".to_string()];
    header.extend((0..n).map(|j| format!("re_{j}")));
    if ensemble.imag_rows().is_some() {
        header.extend((0..n).map(|j| format!("im_{j}")));
    }
    w.write_record(&header)?;
    for i in 0..ensemble.m() {
        let mut rec = vec![y.codes[i].to_string()];
        rec.extend(ensemble.real_rows().row(i).iter().map(f64::to_string));
        if let Some(im) = ensemble.imag_rows() {
            rec.extend(im.row(i).iter().map(f64::to_string));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn parse_field<T: std::str::FromStr>(meta: &BTreeMap<String, String>, key: &str) -> Result<T> {
    meta.get(key)
        .ok_or_else(|| Error::Parse(format!("problem header lacks `{key}`")))?
        .parse()
        .map_err(|_| Error::Parse(format!("problem header has a malformed `{key}`")))
}

pub fn read_problem(path: &Path) -> Result<(SensingEnsemble, BinaryMeasurements)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    reader
        .read_line(&mut first)
        .map_err(|e| Error::io(path, e))?;
    let meta_text = first
        .trim_end()
        .strip_prefix(PROBLEM_TAG)
        .ok_or_else(|| Error::Parse(format!("{}: not a problem file", path.display())))?;
    let meta: BTreeMap<String, String> = meta_text
        .split_whitespace()
        .filter_map(|kv| kv.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    let kind: EnsembleKind = parse_field(&meta, "kind")?;
    let n: usize = parse_field(&meta, "n")?;
    let m: usize = parse_field(&meta, "m")?;
    let tau: f64 = parse_field(&meta, "tau")?;
    let sigma: f64 = parse_field(&meta, "sigma")?;
    let seed: u64 = parse_field(&meta, "seed")?;
    let noise_seed: u64 = parse_field(&meta, "noise_seed")?;

    let mut rest = String::new();
    reader
        .read_to_string(&mut rest)
        .map_err(|e| Error::io(path, e))?;
    let mut csv = csv::Reader::from_reader(rest.as_bytes());
    let width = 1 + if kind.is_complex() { 2 * n } else { n };
    if csv.headers()?.len() != width {
        return Err(Error::Parse(format!(
            "{}: expected {width} columns for n = {n}",
            path.display()
        )));
    }
    let mut codes = Vec::with_capacity(m);
    let mut re = Array2::zeros((m, n));
    let mut im = kind.is_complex().then(|| Array2::zeros((m, n)));
    for (i, rec) in csv.records().enumerate() {
        let rec = rec?;
        if i >= m {
            return Err(Error::Parse(format!(
                "{}: more than m = {m} rows",
                path.display()
            )));
        }
        let num = |k: usize| -> Result<f64> {
            rec[k].trim().parse().map_err(|_| {
                Error::Parse(format!(
                    "{}: row {i}: bad number `{}`",
                    path.display(),
                    &rec[k]
                ))
            })
        };
        codes.push(
            rec[0]
                .trim()
                .parse::<i8>()
                .map_err(|_| Error::Parse(format!("{}: row {i}: bad code", path.display())))?,
        );
        for j in 0..n {
            re[[i, j]] = num(1 + j)?;
            if let Some(im) = im.as_mut() {
                im[[i, j]] = num(1 + n + j)?;
            }
        }
    }
    if codes.len() != m {
        return Err(Error::Parse(format!(
            "{}: header says m = {m} but {} rows follow",
            path.display(),
            codes.len()
        )));
    }
    let ensemble = SensingEnsemble::from_rows(kind, seed, re, im)?;
    let y = BinaryMeasurements::new(codes, tau, sigma, noise_seed)?;
    Ok((ensemble, y))
}

/// Creates `dir` if needed and checks that files can be written into it.
pub fn ensure_writable_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let probe = dir.join(".bpr-write-probe");
    File::create(&probe).map_err(|e| Error::io(&probe, e))?;
    fs::remove_file(&probe).map_err(|e| Error::io(&probe, e))
}
