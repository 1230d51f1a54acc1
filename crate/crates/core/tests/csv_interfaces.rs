//! The CSV files consumed by the plotting scripts: column names, row counts
//! and byte-for-byte determinism.

use std::path::Path;

use bpr_core::experiment::{run_experiment, ExperimentConfig, ExperimentKind};
use bpr_core::io::{read_rows, FinalRow, TraceRow};

fn header(path: &Path) -> Vec<String> {
    let text = std::fs::read_to_string(path).unwrap();
    assert!(
        !text.contains('\r'),
        "{} must use LF line endings",
        path.display()
    );
    text.lines()
        .next()
        .unwrap()
        .split(',')
        .map(str::to_owned)
        .collect()
}

fn small(kind: ExperimentKind, out: &Path) -> ExperimentConfig {
    ExperimentConfig {
        n: 6,
        oversampling: vec![4.0, 8.0],
        iters: 7,
        trials: 2,
        out_dir: out.to_path_buf(),
        seed: 3,
        ..ExperimentConfig::new(kind)
    }
}

#[test]
fn trace_and_final_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        snr_db: vec![f64::INFINITY, 10.0],
        ..small(ExperimentKind::BaselineCompare, dir.path())
    };
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(
        header(&dir.path().join("trace.csv")),
        [
            "iter",
            "cost",
            "eta",
            "srer_db",
            "consistency",
            "algo",
            "m_over_n",
            "snr_db"
        ]
    );
    assert_eq!(
        header(&dir.path().join("final.csv")),
        [
            "algo",
            "m_over_n",
            "snr_db",
            "ensemble",
            "trial",
            "cost",
            "srer_db",
            "consistency"
        ]
    );
    // iterations x algorithms x (oversampling x SNR) cells
    let traces: Vec<TraceRow> = read_rows(&dir.path().join("trace.csv")).unwrap();
    assert_eq!(traces.len(), 7 * 2 * 2 * 2);
    assert_eq!(traces, out.traces);
    let finals: Vec<FinalRow> = read_rows(&dir.path().join("final.csv")).unwrap();
    assert_eq!(finals.len(), 2 * 2 * 2 * 2);
    assert!(traces.iter().any(|r| r.snr_db.is_infinite()));
    let text = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(text.contains(",inf\n"), "noiseless SNR is written as inf");
}

#[test]
fn crb_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        snr_db: vec![10.0, 20.0],
        ensembles: 2,
        oversampling: vec![8.0],
        ..small(ExperimentKind::CrbCompare, dir.path())
    };
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(
        header(&dir.path().join("crb.csv")),
        [
            "snr_db",
            "crb_srer_db",
            "bpr_srer_mean_db",
            "bpr_srer_std_db"
        ]
    );
    assert_eq!(
        header(&dir.path().join("crb_ensembles.csv")),
        [
            "snr_db",
            "ensemble",
            "crb_srer_db",
            "bpr_srer_mean_db",
            "bpr_srer_std_db"
        ]
    );
    assert_eq!(out.crb.len(), 2);
    assert_eq!(out.crb_ensembles.len(), 4);
}

#[test]
fn image_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let input = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/cameraman64.pgm");
    let cfg = ExperimentConfig {
        input: Some(input),
        oversampling: vec![3.0],
        iters: 3,
        out_dir: dir.path().to_path_buf(),
        ..ExperimentConfig::new(ExperimentKind::Image)
    };
    run_experiment(&cfg).unwrap();
    assert_eq!(
        header(&dir.path().join("image_metrics.csv")),
        ["m_over_n", "psnr_db", "ssim"]
    );
    let img = bpr_core::image::read_pgm(&dir.path().join("recon_mn3.pgm")).unwrap();
    assert_eq!(img.dimensions(), (64, 64));
}

#[test]
fn outputs_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_experiment(&small(ExperimentKind::NoiselessSweep, a.path())).unwrap();
    run_experiment(&small(ExperimentKind::NoiselessSweep, b.path())).unwrap();
    for name in ["trace.csv", "final.csv"] {
        assert_eq!(
            std::fs::read(a.path().join(name)).unwrap(),
            std::fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}
