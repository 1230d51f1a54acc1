//! Config-driven experiment harness. Each experiment expands into
//! independent cells (oversampling × SNR × ensemble × trial); cells run in
//! parallel, and results are aggregated in a fixed order so output files
//! are byte-identical for a given config.

use std::path::{Path, PathBuf};

use image::GrayImage;
use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{centroid_decode, phaselift_run};
use crate::crb::{crb_srer, fisher_information};
use crate::error::{Error, Result};
use crate::image::{read_pgm, resolve_signs, write_pgm, PatchGrid, PATCH};
use crate::io::{ensure_writable_dir, write_rows, CrbRow, FinalRow, ImageMetricsRow, TraceRow};
use crate::linalg::PowerOptions;
use crate::measurement::{
    chi1sq_quantile, empirical_median_threshold, encode_binary, gen_gaussian_ensemble,
    gen_structured_illumination_ensemble, gen_two_sinusoid_signal, gen_unit_sphere_signal,
    sigma_for_snr, SensingEnsemble, SignalVector,
};
use crate::metrics::{psnr, ssim, MetricReport};
use crate::solver::{apgd_run, LineSearchPoint, RunTrace, SolverConfig, StepRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// BPR on noiseless Gaussian measurements over several `m/n`.
    NoiselessSweep,
    /// BPR against PhaseLift with centroid decoding, Gaussian rows.
    BaselineCompare,
    /// BPR against PhaseLift with masked Fourier rows.
    Fourier,
    /// BPR against PhaseLift with the plain oversampled DFT.
    FourierPlainDft,
    /// BPR on noisy Gaussian measurements over `m/n` × SNR.
    NoisySweep,
    /// BPR on a two-sinusoid signal against the Cramér–Rao bound.
    CrbCompare,
    /// BPR with and without momentum.
    ApgdVsPgd,
    /// Patch-wise reconstruction of a grayscale image.
    Image,
}

impl ExperimentKind {
    fn tag(self) -> u64 {
        self as u64 + 1
    }
}

fn default_n() -> usize {
    64
}
fn default_oversampling() -> Vec<f64> {
    vec![20.0]
}
fn default_iters() -> usize {
    300
}
fn default_trials() -> usize {
    20
}
fn default_one() -> usize {
    1
}
fn default_range() -> f64 {
    0.0025
}
fn default_precision() -> f64 {
    1e-5
}
fn default_true() -> bool {
    true
}
fn default_line_search_at() -> LineSearchPoint {
    LineSearchPoint::Momentum
}
fn default_projection_tol() -> f64 {
    PowerOptions::default().tol
}
fn default_projection_max_iter() -> usize {
    PowerOptions::default().max_iter
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Flat key–value experiment description (TOML syntax).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Signal dimension (ignored by `image`, which uses 8×8 patches).
    #[serde(default = "default_n")]
    pub n: usize,
    /// Oversampling factors `m/n`.
    #[serde(default = "default_oversampling")]
    pub oversampling: Vec<f64>,
    /// Iteration budget `N_iter` for every solver.
    #[serde(default = "default_iters")]
    pub iters: usize,
    /// Input SNRs in dB; `inf` means noiseless. Empty means noiseless only.
    #[serde(default)]
    pub snr_db: Vec<f64>,
    /// Signal (or noise) realizations per ensemble.
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Independent sensing ensembles per cell.
    #[serde(default = "default_one")]
    pub ensembles: usize,
    #[serde(default = "default_range")]
    pub ls_range_max: f64,
    #[serde(default = "default_precision")]
    pub ls_precision: f64,
    #[serde(default = "default_true")]
    pub momentum: bool,
    #[serde(default = "default_line_search_at")]
    pub line_search_at: LineSearchPoint,
    #[serde(default = "default_projection_tol")]
    pub projection_tol: f64,
    #[serde(default = "default_projection_max_iter")]
    pub projection_max_iter: usize,
    /// Input image (`image` only).
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Master seed; every random stream is derived from it.
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    /// A config with every optional field at its default. Experiments with
    /// required fields (`crb-compare`, `image`) still need them set before
    /// [`validate`](Self::validate) passes.
    pub fn new(experiment: ExperimentKind) -> Self {
        toml::from_str(&format!(
            "experiment = \"{}\"",
            serde_plain_kind(experiment)
        ))
        .expect("every field but `experiment` has a default")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        // Relative input paths are taken relative to the config file.
        if let (Some(input), Some(parent)) = (&cfg.input, path.parent()) {
            if input.is_relative() && !input.exists() {
                cfg.input = Some(parent.join(input));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n == 0 || self.iters == 0 || self.trials == 0 || self.ensembles == 0 {
            return bad("n, iters, trials and ensembles must be positive".into());
        }
        if self.oversampling.is_empty() {
            return bad("oversampling list is empty".into());
        }
        for &k in &self.oversampling {
            if !(k >= 1.0 && k.is_finite()) {
                return bad(format!(
                    "oversampling factor {k} must be finite and at least 1"
                ));
            }
            let fourier = matches!(
                self.experiment,
                ExperimentKind::Fourier | ExperimentKind::FourierPlainDft
            );
            if fourier && k.fract() != 0.0 {
                return bad(format!("Fourier oversampling {k} must be an integer"));
            }
        }
        if self
            .snr_db
            .iter()
            .any(|s| s.is_nan() || *s == f64::NEG_INFINITY)
        {
            return bad("SNR values must be numbers or inf".into());
        }
        if self.experiment == ExperimentKind::CrbCompare
            && (self.snr_db.is_empty() || self.snr_db.iter().any(|s| s.is_infinite()))
        {
            return bad("crb-compare needs finite SNR values".into());
        }
        if self.experiment == ExperimentKind::Image && self.input.is_none() {
            return bad("image experiment needs `input`".into());
        }
        self.solver_config(0)
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }

    /// Solver settings shared by every run; `seed` seeds the projection.
    pub fn solver_config(&self, seed: u64) -> SolverConfig {
        SolverConfig {
            max_iters: self.iters,
            ls_range_max: self.ls_range_max,
            ls_precision: self.ls_precision,
            momentum: self.momentum,
            step_rule: StepRule::GridSearch,
            line_search_at: self.line_search_at,
            projection: PowerOptions {
                tol: self.projection_tol,
                max_iter: self.projection_max_iter,
                seed: 0,
            },
            seed,
        }
    }

    fn snr_list(&self) -> Vec<f64> {
        if self.snr_db.is_empty() {
            vec![f64::INFINITY]
        } else {
            self.snr_db.clone()
        }
    }
}

fn serde_plain_kind(kind: ExperimentKind) -> String {
    toml::Value::try_from(kind)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .expect("unit variants serialize as strings")
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&serde_plain_kind(*self))
    }
}

/// Independent random streams.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum Stream {
    Signal = 1,
    Ensemble = 2,
    Noise = 3,
    Solver = 4,
    Patch = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based seed derivation: the master seed and each path component
/// are folded through the SplitMix64 finalizer in order, so distinct paths
/// give independent-looking seeds and the same path always gives the same
/// seed.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |h, &p| splitmix64(h ^ splitmix64(p)))
}

/// Everything one experiment produced; the same rows are written to disk.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentOutput {
    /// Per-iteration means over ensembles and trials.
    pub traces: Vec<TraceRow>,
    /// Final values of every run.
    pub finals: Vec<FinalRow>,
    /// `crb-compare` only: one row per SNR.
    pub crb: Vec<CrbRow>,
    /// `crb-compare` only: one row per SNR and ensemble, with the SRER
    /// statistics over noise realizations.
    pub crb_ensembles: Vec<CrbEnsembleRow>,
    /// `image` only.
    pub image_metrics: Vec<ImageMetricsRow>,
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrbEnsembleRow {
    pub snr_db: f64,
    pub ensemble: usize,
    pub crb_srer_db: f64,
    pub bpr_srer_mean_db: f64,
    pub bpr_srer_std_db: f64,
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    k_idx: usize,
    snr_idx: usize,
    ensemble: usize,
    trial: usize,
}

struct CellResult {
    cell: Cell,
    runs: Vec<(&'static str, RunTrace)>,
    crb_db: Option<f64>,
}

fn measurement_count(n: usize, k: f64) -> usize {
    (n as f64 * k).round() as usize
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (0 for a single value).
fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn run_cell(cfg: &ExperimentConfig, cell: Cell) -> Result<CellResult> {
    let kind = cfg.experiment;
    let tag = kind.tag();
    let n = cfg.n;
    let k = cfg.oversampling[cell.k_idx];
    let snr = cfg.snr_list()[cell.snr_idx];
    let (e, t) = (cell.ensemble as u64, cell.trial as u64);

    // Signals depend on the trial, ensembles on (ensemble, trial) and not
    // on m/n: Gaussian rows are drawn row by row, so the sweeps use nested
    // ensembles. Noise additionally depends on the SNR.
    let x = match kind {
        ExperimentKind::CrbCompare => gen_two_sinusoid_signal(n)?,
        _ => gen_unit_sphere_signal(
            n,
            derive_seed(cfg.seed, &[tag, Stream::Signal as u64, e, t]),
        )?,
    };
    let ens_seed = match kind {
        // The bound is per ensemble, so noise realizations share the rows.
        ExperimentKind::CrbCompare => derive_seed(cfg.seed, &[tag, Stream::Ensemble as u64, e]),
        _ => derive_seed(cfg.seed, &[tag, Stream::Ensemble as u64, e, t]),
    };
    let ensemble: SensingEnsemble = match kind {
        ExperimentKind::Fourier => {
            gen_structured_illumination_ensemble(n, k as usize, ens_seed, true)?
        }
        ExperimentKind::FourierPlainDft => {
            gen_structured_illumination_ensemble(n, k as usize, ens_seed, false)?
        }
        _ => gen_gaussian_ensemble(n, measurement_count(n, k), ens_seed)?,
    };
    let tau = if ensemble.kind().is_complex() {
        empirical_median_threshold(&ensemble, &x)?
    } else {
        chi1sq_quantile(0.5)?
    };
    let sigma = if snr.is_finite() {
        sigma_for_snr(&ensemble, &x, snr)?
    } else {
        0.0
    };
    let noise_seed = derive_seed(
        cfg.seed,
        &[tag, Stream::Noise as u64, cell.snr_idx as u64, e, t],
    );
    let y = encode_binary(&ensemble, &x, tau, sigma, noise_seed)?;
    let solver = cfg.solver_config(derive_seed(cfg.seed, &[tag, Stream::Solver as u64, e, t]));

    let mut runs = Vec::new();
    match kind {
        ExperimentKind::BaselineCompare
        | ExperimentKind::Fourier
        | ExperimentKind::FourierPlainDft => {
            runs.push(("bpr", apgd_run(&ensemble, &y, &solver, Some(&x))?));
            let p = centroid_decode(&y)?;
            runs.push((
                "phaselift",
                phaselift_run(&ensemble, &p, &solver, Some(&x))?,
            ));
        }
        ExperimentKind::ApgdVsPgd => {
            let apgd = SolverConfig {
                momentum: true,
                ..solver.clone()
            };
            let pgd = SolverConfig {
                momentum: false,
                ..solver
            };
            runs.push(("apgd", apgd_run(&ensemble, &y, &apgd, Some(&x))?));
            runs.push(("pgd", apgd_run(&ensemble, &y, &pgd, Some(&x))?));
        }
        _ => runs.push(("bpr", apgd_run(&ensemble, &y, &solver, Some(&x))?)),
    }
    // The bound depends only on (ensemble, SNR); compute it once per pair.
    let crb_db = if kind == ExperimentKind::CrbCompare && cell.trial == 0 {
        Some(crb_srer(
            &fisher_information(&ensemble, &x, tau, sigma)?,
            &x,
        )?)
    } else {
        None
    };
    Ok(CellResult { cell, runs, crb_db })
}

fn cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for k_idx in 0..cfg.oversampling.len() {
        for snr_idx in 0..cfg.snr_list().len() {
            for ensemble in 0..cfg.ensembles {
                for trial in 0..cfg.trials {
                    out.push(Cell {
                        k_idx,
                        snr_idx,
                        ensemble,
                        trial,
                    });
                }
            }
        }
    }
    out
}

fn aggregate(cfg: &ExperimentConfig, results: &[CellResult]) -> Result<ExperimentOutput> {
    let snrs = cfg.snr_list();
    let mut out = ExperimentOutput::default();
    for r in results {
        for (algo, trace) in &r.runs {
            let last = trace
                .last()
                .ok_or_else(|| Error::invalid("solver produced no iterations"))?;
            out.finals.push(FinalRow {
                algo: (*algo).into(),
                m_over_n: cfg.oversampling[r.cell.k_idx],
                snr_db: snrs[r.cell.snr_idx],
                ensemble: r.cell.ensemble,
                trial: r.cell.trial,
                cost: last.cost,
                srer_db: last.srer_db.unwrap_or(f64::NAN),
                consistency: last.consistency,
            });
        }
    }

    // Results are in cell order, so each (m/n, SNR) group is contiguous.
    let group = cfg.ensembles * cfg.trials;
    for chunk in results.chunks(group) {
        let cell = chunk[0].cell;
        for (a, (algo, _)) in chunk[0].runs.iter().enumerate() {
            for it in 0..cfg.iters {
                let recs: Vec<_> = chunk.iter().map(|r| r.runs[a].1.records[it]).collect();
                let avg = |f: &dyn Fn(&crate::solver::IterationRecord) -> f64| {
                    recs.iter().map(f).sum::<f64>() / recs.len() as f64
                };
                out.traces.push(TraceRow {
                    iter: it + 1,
                    cost: avg(&|r| r.cost),
                    eta: avg(&|r| r.eta),
                    srer_db: avg(&|r| r.srer_db.unwrap_or(f64::NAN)),
                    consistency: avg(&|r| r.consistency),
                    algo: (*algo).into(),
                    m_over_n: cfg.oversampling[cell.k_idx],
                    snr_db: snrs[cell.snr_idx],
                });
            }
        }

        if cfg.experiment == ExperimentKind::CrbCompare {
            let mut ens_means = Vec::new();
            let mut bounds = Vec::new();
            for per_ens in chunk.chunks(cfg.trials) {
                let srers: Vec<f64> = per_ens
                    .iter()
                    .map(|r| {
                        r.runs[0]
                            .1
                            .last()
                            .and_then(|l| l.srer_db)
                            .unwrap_or(f64::NAN)
                    })
                    .collect();
                let bound = per_ens[0].crb_db.expect("first trial computes the bound");
                out.crb_ensembles.push(CrbEnsembleRow {
                    snr_db: snrs[cell.snr_idx],
                    ensemble: per_ens[0].cell.ensemble,
                    crb_srer_db: bound,
                    bpr_srer_mean_db: mean(&srers),
                    bpr_srer_std_db: std_dev(&srers),
                });
                ens_means.push(mean(&srers));
                bounds.push(bound);
            }
            out.crb.push(CrbRow {
                snr_db: snrs[cell.snr_idx],
                crb_srer_db: mean(&bounds),
                bpr_srer_mean_db: mean(&ens_means),
                bpr_srer_std_db: std_dev(&ens_means),
            });
        }
    }
    Ok(out)
}

/// Runs the experiment described by `cfg` and writes its CSV files (and
/// reconstructed images) into `cfg.out_dir`. The output directory is
/// checked before any computation.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    ensure_writable_dir(&cfg.out_dir)?;
    if cfg.experiment == ExperimentKind::Image {
        return run_image_experiment(cfg);
    }
    let results: Vec<CellResult> = cells(cfg)
        .into_par_iter()
        .map(|c| run_cell(cfg, c))
        .collect::<Result<_>>()?;
    let mut out = aggregate(cfg, &results)?;

    let dir = &cfg.out_dir;
    let trace_path = dir.join("trace.csv");
    write_rows(&trace_path, &out.traces)?;
    let final_path = dir.join("final.csv");
    write_rows(&final_path, &out.finals)?;
    out.files = vec![trace_path, final_path];
    if cfg.experiment == ExperimentKind::CrbCompare {
        let crb_path = dir.join("crb.csv");
        write_rows(&crb_path, &out.crb)?;
        let ens_path = dir.join("crb_ensembles.csv");
        write_rows(&ens_path, &out.crb_ensembles)?;
        out.files.extend([crb_path, ens_path]);
    }
    Ok(out)
}

fn run_image_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let input = cfg.input.as_ref().expect("validated");
    let img = read_pgm(input)?;
    let mut out = ExperimentOutput::default();
    for &k in &cfg.oversampling {
        let rec = image_reconstruct(&img, k, cfg)?;
        let path = cfg.out_dir.join(format!("recon_mn{k}.pgm"));
        write_pgm(&path, &rec.image)?;
        out.files.push(path);
        out.image_metrics.push(ImageMetricsRow {
            m_over_n: k,
            psnr_db: rec.report.psnr_db.expect("image report"),
            ssim: rec.report.ssim.expect("image report"),
        });
    }
    let path = cfg.out_dir.join("image_metrics.csv");
    write_rows(&path, &out.image_metrics)?;
    out.files.push(path);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageReconstruction {
    pub image: GrayImage,
    pub report: MetricReport,
}

/// Patch-wise reconstruction of `img` from `64·oversampling` binary
/// measurements per 8×8 patch.
///
/// Each patch is scaled to unit norm before encoding with the χ²₁ median
/// threshold; the norm is kept as side information and reapplied. Patch
/// ensembles are seeded from `(cfg.seed, patch index)` only, so different
/// oversampling factors use nested ensembles. Sign ambiguity is resolved
/// by [`resolve_signs`]. The report's SRER and consistency are averaged
/// over patches.
pub fn image_reconstruct(
    img: &GrayImage,
    oversampling: f64,
    cfg: &ExperimentConfig,
) -> Result<ImageReconstruction> {
    if !(oversampling >= 1.0 && oversampling.is_finite()) {
        return Err(Error::invalid("oversampling factor must be at least 1"));
    }
    let grid = PatchGrid::for_image(img)?;
    let n = PATCH * PATCH;
    let m = measurement_count(n, oversampling);
    let tau = chi1sq_quantile(0.5)?;
    let tag = ExperimentKind::Image.tag();

    let per_patch: Vec<(Array1<f64>, f64, f64)> = (0..grid.count())
        .into_par_iter()
        .map(|p| -> Result<_> {
            let patch = grid.extract(img, p);
            let norm = patch.dot(&patch).sqrt();
            if norm == 0.0 {
                return Ok((patch, f64::NAN, f64::NAN));
            }
            let x = SignalVector::new(&patch / norm);
            let seed = derive_seed(cfg.seed, &[tag, Stream::Patch as u64, p as u64]);
            let ensemble = gen_gaussian_ensemble(n, m, seed)?;
            let y = encode_binary(&ensemble, &x, tau, 0.0, 0)?;
            let trace = apgd_run(&ensemble, &y, &cfg.solver_config(seed), Some(&x))?;
            let last = trace.last().expect("at least one iteration");
            let (srer, cons) = (last.srer_db.unwrap_or(f64::NAN), last.consistency);
            Ok((trace.factor * norm, srer, cons))
        })
        .collect::<Result<_>>()?;

    let (srers, conss): (Vec<f64>, Vec<f64>) = per_patch
        .iter()
        .filter(|(_, s, _)| !s.is_nan())
        .map(|&(_, s, c)| (s, c))
        .unzip();
    let mut patches: Vec<Array1<f64>> = per_patch.into_iter().map(|(p, _, _)| p).collect();
    resolve_signs(&grid, &mut patches)?;
    let image = grid.assemble(&patches)?;
    let report = MetricReport {
        srer_db: if srers.is_empty() {
            f64::NAN
        } else {
            mean(&srers)
        },
        consistency: if conss.is_empty() { 1.0 } else { mean(&conss) },
        psnr_db: Some(psnr(img, &image)?),
        ssim: Some(ssim(img, &image)?),
    };
    Ok(ImageReconstruction { image, report })
}
