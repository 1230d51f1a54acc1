use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bpr_core::baselines::{centroid_decode, phaselift_run};
use bpr_core::crb::{crb_srer, fisher_information};
use bpr_core::experiment::{
    derive_seed, image_reconstruct, run_experiment, ExperimentConfig, ExperimentKind, Stream,
};
use bpr_core::io::{
    ensure_writable_dir, read_problem, read_signal, write_problem, write_rows, write_run_trace,
    write_signal, CrbCurveRow, ImageMetricsRow,
};
use bpr_core::measurement::{
    chi1sq_quantile, empirical_median_threshold, gen_two_sinusoid_signal, sigma_for_snr,
};
use bpr_core::metrics::INFINITE_DB;
use bpr_core::{
    apgd_run, encode_binary, gen_gaussian_ensemble, gen_structured_illumination_ensemble,
    gen_unit_sphere_signal, EnsembleKind, Result, SensingEnsemble, SignalVector, SolverConfig,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "bpr",
    version,
    about = "Phase retrieval from one-bit quadratic measurements"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Master seed for every random stream.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for output files (created if missing).
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SignalKind {
    /// Uniform on the unit sphere.
    Unit,
    /// Normalized sum of two sinusoids.
    TwoSinusoid,
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Bpr,
    Phaselift,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a signal, an ensemble and binary codes; writes problem.csv and signal.csv.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 64)]
        n: usize,
        /// Oversampling factor m/n (an integer for Fourier ensembles).
        #[arg(long, default_value_t = 20.0)]
        oversampling: f64,
        #[arg(long, default_value = "gaussian")]
        ensemble: EnsembleKind,
        #[arg(long, value_enum, default_value = "unit")]
        signal: SignalKind,
        /// Input SNR in dB (omit or `inf` for noiseless codes).
        #[arg(long)]
        snr_db: Option<f64>,
    },
    /// Reconstruct from a problem file; writes trace.csv and estimate.csv.
    Reconstruct {
        problem: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Ground-truth signal file, enabling the SRER column.
        #[arg(long)]
        signal: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "bpr")]
        algo: Algo,
        #[arg(long, default_value_t = 300)]
        iters: usize,
        /// Plain projected gradient descent.
        #[arg(long)]
        no_momentum: bool,
        #[arg(long, default_value_t = 0.0025)]
        ls_range_max: f64,
    },
    /// Cramér–Rao bound (as an SRER in dB) versus input SNR; writes crb_curve.csv.
    Crb {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long, default_value_t = 20.0)]
        oversampling: f64,
        #[arg(long, num_args = 1.., default_values_t = [20.0, 30.0, 40.0])]
        snr_db: Vec<f64>,
        /// Gaussian ensembles to average the bound (in dB) over.
        #[arg(long, default_value_t = 1)]
        ensembles: usize,
        #[arg(long, value_enum, default_value = "two-sinusoid")]
        signal: SignalKind,
    },
    /// Run an experiment config; flags override the file.
    Experiment {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long, num_args = 1..)]
        oversampling: Option<Vec<f64>>,
        #[arg(long, num_args = 1..)]
        snr_db: Option<Vec<f64>>,
        #[arg(long)]
        no_momentum: bool,
    },
    /// Patch-wise reconstruction of an 8-bit grayscale PGM image.
    Image {
        path: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long, num_args = 1.., default_values_t = [20.0])]
        oversampling: Vec<f64>,
        #[arg(long, default_value_t = 75)]
        iters: usize,
        #[arg(long, default_value_t = 0.0055)]
        ls_range_max: f64,
        #[arg(long)]
        no_momentum: bool,
    },
}

fn make_signal(kind: SignalKind, n: usize, seed: u64) -> Result<SignalVector> {
    match kind {
        SignalKind::Unit => gen_unit_sphere_signal(n, derive_seed(seed, &[Stream::Signal as u64])),
        SignalKind::TwoSinusoid => gen_two_sinusoid_signal(n),
    }
}

fn make_ensemble(kind: EnsembleKind, n: usize, k: f64, seed: u64) -> Result<SensingEnsemble> {
    let seed = derive_seed(seed, &[Stream::Ensemble as u64]);
    match kind {
        EnsembleKind::Gaussian => gen_gaussian_ensemble(n, (n as f64 * k).round() as usize, seed),
        EnsembleKind::FourierMask | EnsembleKind::PlainDft => {
            if k.fract() != 0.0 || k < 1.0 {
                return Err(bpr_core::Error::InvalidArgument(format!(
                    "Fourier oversampling must be a positive integer, got {k}"
                )));
            }
            gen_structured_illumination_ensemble(
                n,
                k as usize,
                seed,
                kind == EnsembleKind::FourierMask,
            )
        }
    }
}

fn fmt_db(v: f64) -> String {
    if v >= INFINITE_DB {
        format!(">= {INFINITE_DB} dB")
    } else {
        format!("{v:.2} dB")
    }
}

fn simulate(
    common: &Common,
    n: usize,
    k: f64,
    ensemble: EnsembleKind,
    signal: SignalKind,
    snr_db: Option<f64>,
) -> Result<()> {
    ensure_writable_dir(&common.out_dir)?;
    let x = make_signal(signal, n, common.seed)?;
    let e = make_ensemble(ensemble, n, k, common.seed)?;
    let tau = if e.kind().is_complex() {
        empirical_median_threshold(&e, &x)?
    } else {
        chi1sq_quantile(0.5)?
    };
    let sigma = match snr_db {
        Some(s) if s.is_finite() => sigma_for_snr(&e, &x, s)?,
        _ => 0.0,
    };
    let y = encode_binary(
        &e,
        &x,
        tau,
        sigma,
        derive_seed(common.seed, &[Stream::Noise as u64]),
    )?;
    let problem = common.out_dir.join("problem.csv");
    let signal_path = common.out_dir.join("signal.csv");
    write_problem(&problem, &e, &y)?;
    write_signal(&signal_path, &x)?;
    println!(
        "{} ensemble n={} m={} tau={tau:.6} sigma={sigma:.6}; wrote {} and {}",
        e.kind(),
        e.n(),
        e.m(),
        problem.display(),
        signal_path.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn reconstruct(
    problem: &Path,
    common: &Common,
    signal: Option<&Path>,
    algo: Algo,
    iters: usize,
    no_momentum: bool,
    ls_range_max: f64,
) -> Result<()> {
    ensure_writable_dir(&common.out_dir)?;
    let (e, y) = read_problem(problem)?;
    let truth = signal.map(read_signal).transpose()?;
    let cfg = SolverConfig {
        max_iters: iters,
        momentum: !no_momentum,
        ls_range_max,
        seed: common.seed,
        ..Default::default()
    };
    let trace = match algo {
        Algo::Bpr => apgd_run(&e, &y, &cfg, truth.as_ref())?,
        Algo::Phaselift => phaselift_run(&e, &centroid_decode(&y)?, &cfg, truth.as_ref())?,
    };
    let trace_path = common.out_dir.join("trace.csv");
    let est_path = common.out_dir.join("estimate.csv");
    write_run_trace(&trace_path, &trace)?;
    write_signal(&est_path, &trace.estimate())?;
    if let Some(last) = trace.last() {
        let srer = last.srer_db.map(fmt_db).unwrap_or_else(|| "n/a".into());
        println!(
            "iter {}: cost {:.6e}, consistency {:.4}, SRER {srer}; wrote {} and {}",
            last.iter,
            last.cost,
            last.consistency,
            trace_path.display(),
            est_path.display()
        );
    }
    Ok(())
}

fn crb(
    common: &Common,
    n: usize,
    k: f64,
    snrs: &[f64],
    ensembles: usize,
    signal: SignalKind,
) -> Result<()> {
    ensure_writable_dir(&common.out_dir)?;
    let x = make_signal(signal, n, common.seed)?;
    let tau = chi1sq_quantile(0.5)?;
    let mut rows = Vec::new();
    for &snr in snrs {
        let mut total = 0.0;
        for j in 0..ensembles.max(1) {
            let e = make_ensemble(
                EnsembleKind::Gaussian,
                n,
                k,
                derive_seed(common.seed, &[j as u64]),
            )?;
            let sigma = sigma_for_snr(&e, &x, snr)?;
            total += crb_srer(&fisher_information(&e, &x, tau, sigma)?, &x)?;
        }
        let row = CrbCurveRow {
            snr_db: snr,
            crb_srer_db: total / ensembles.max(1) as f64,
        };
        println!("SNR {snr:>6.2} dB: bound {}", fmt_db(row.crb_srer_db));
        rows.push(row);
    }
    write_rows(&common.out_dir.join("crb_curve.csv"), &rows)
}

fn image(
    path: &Path,
    common: &Common,
    oversampling: &[f64],
    iters: usize,
    ls_range_max: f64,
    no_momentum: bool,
) -> Result<()> {
    ensure_writable_dir(&common.out_dir)?;
    let img = bpr_core::image::read_pgm(path)?;
    let cfg = ExperimentConfig {
        iters,
        ls_range_max,
        momentum: !no_momentum,
        seed: common.seed,
        out_dir: common.out_dir.clone(),
        input: Some(path.to_path_buf()),
        ..ExperimentConfig::new(ExperimentKind::Image)
    };
    cfg.validate()?;
    let mut rows = Vec::new();
    for &k in oversampling {
        let rec = image_reconstruct(&img, k, &cfg)?;
        let out = common.out_dir.join(format!("recon_mn{k}.pgm"));
        bpr_core::image::write_pgm(&out, &rec.image)?;
        let (psnr, ssim) = (
            rec.report.psnr_db.unwrap_or(f64::NAN),
            rec.report.ssim.unwrap_or(f64::NAN),
        );
        println!(
            "m/n = {k}: PSNR {}, SSIM {ssim:.4}; wrote {}",
            fmt_db(psnr),
            out.display()
        );
        rows.push(ImageMetricsRow {
            m_over_n: k,
            psnr_db: psnr,
            ssim,
        });
    }
    write_rows(&common.out_dir.join("image_metrics.csv"), &rows)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            common,
            n,
            oversampling,
            ensemble,
            signal,
            snr_db,
        } => simulate(&common, n, oversampling, ensemble, signal, snr_db),
        Command::Reconstruct {
            problem,
            common,
            signal,
            algo,
            iters,
            no_momentum,
            ls_range_max,
        } => reconstruct(
            &problem,
            &common,
            signal.as_deref(),
            algo,
            iters,
            no_momentum,
            ls_range_max,
        ),
        Command::Crb {
            common,
            n,
            oversampling,
            snr_db,
            ensembles,
            signal,
        } => crb(&common, n, oversampling, &snr_db, ensembles, signal),
        Command::Experiment {
            config,
            seed,
            out_dir,
            iters,
            oversampling,
            snr_db,
            no_momentum,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(d) = out_dir {
                cfg.out_dir = d;
            }
            if let Some(i) = iters {
                cfg.iters = i;
            }
            if let Some(k) = oversampling {
                cfg.oversampling = k;
            }
            if let Some(s) = snr_db {
                cfg.snr_db = s;
            }
            if no_momentum {
                cfg.momentum = false;
            }
            let out = run_experiment(&cfg)?;
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            Ok(())
        }
        Command::Image {
            path,
            common,
            oversampling,
            iters,
            ls_range_max,
            no_momentum,
        } => image(
            &path,
            &common,
            &oversampling,
            iters,
            ls_range_max,
            no_momentum,
        ),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
