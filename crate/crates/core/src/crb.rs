//! Fisher information and Cramér–Rao bound for
//! `y_i = sgn(q_i(x) + w_i − τ)`, `w_i ~ N(0, σ²)`, `q_i(x) = xᵀA_i x`.
//!
//! With `v_i = τ − q_i`, `φ_i = Φ(v_i)` is the probability of a `−1` code
//! and `∇q_i = 2A_i x`, so
//! `I(x) = Σ φ′(v_i)² / (φ_i(1 − φ_i)) · (2A_i x)(2A_i x)ᵀ`.
//! For real rows `A_i x = u_i a_i` and each term is `4u_i²φ′²/(φ(1−φ))·A_i`.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{check_dim, Error, Result};
use crate::measurement::{BinaryMeasurements, SensingEnsemble, SignalVector};
use crate::special::{normal_cdf_pair, normal_pdf};

/// Below this `φ(1 − φ)` a measurement is saturated and carries no
/// information.
const SATURATION: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix {
    pub entries: Array2<f64>,
    pub tau: f64,
    pub sigma: f64,
}

impl FisherMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn from_entries(entries: Array2<f64>, tau: f64, sigma: f64) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::invalid("Fisher matrix must be square"));
        }
        Ok(Self {
            entries,
            tau,
            sigma,
        })
    }

    fn eigenvalues(&self) -> Vec<f64> {
        let n = self.dim();
        let m = DMatrix::from_fn(n, n, |r, c| self.entries[[r, c]]);
        SymmetricEigen::new(m).eigenvalues.iter().copied().collect()
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("noise level must be positive for the bound"))
    }
}

/// Per-measurement quantities at `x`: `∇q_i = 2A_i x`, `φ_i`, `1 − φ_i`
/// and `φ′(v_i)`.
struct Linearization {
    grads: Array2<f64>,
    low: Vec<f64>,
    high: Vec<f64>,
    density: Vec<f64>,
}

fn linearize(
    ensemble: &SensingEnsemble,
    x: ArrayView1<f64>,
    tau: f64,
    sigma: f64,
) -> Result<Linearization> {
    check_dim(ensemble.n(), x.len())?;
    let re = ensemble.real_rows();
    let u_re = re.dot(&x);
    // rows of 2A_i x: 2(u_re a_re + u_im a_im)
    let mut grads = re * &u_re.view().insert_axis(ndarray::Axis(1));
    let mut q = u_re.mapv(|u| u * u);
    if let Some(im) = ensemble.imag_rows() {
        let u_im = im.dot(&x);
        grads = grads + im * &u_im.view().insert_axis(ndarray::Axis(1));
        q = q + u_im.mapv(|u| u * u);
    }
    grads.mapv_inplace(|g| 2.0 * g);
    let mut low = Vec::with_capacity(q.len());
    let mut high = Vec::with_capacity(q.len());
    let mut density = Vec::with_capacity(q.len());
    for &qi in &q {
        let v = tau - qi;
        let (phi, phi_c) = normal_cdf_pair(v, sigma);
        low.push(phi);
        high.push(phi_c);
        density.push(normal_pdf(v, sigma));
    }
    Ok(Linearization {
        grads,
        low,
        high,
        density,
    })
}

/// Fisher information of the one-bit noisy model at `x`.
pub fn fisher_information(
    ensemble: &SensingEnsemble,
    x: &SignalVector,
    tau: f64,
    sigma: f64,
) -> Result<FisherMatrix> {
    check_sigma(sigma)?;
    let lin = linearize(ensemble, x.entries(), tau, sigma)?;
    let weights: Array1<f64> = (0..ensemble.m())
        .map(|i| {
            let var = lin.low[i] * lin.high[i];
            if var < SATURATION {
                0.0
            } else {
                lin.density[i] * lin.density[i] / var
            }
        })
        .collect();
    let weighted = &lin.grads * &weights.view().insert_axis(ndarray::Axis(1));
    let mut entries = lin.grads.t().dot(&weighted);
    // Exact symmetry for downstream eigen-solvers.
    let n = entries.nrows();
    for r in 0..n {
        for c in 0..r {
            let v = 0.5 * (entries[[r, c]] + entries[[c, r]]);
            entries[[r, c]] = v;
            entries[[c, r]] = v;
        }
    }
    FisherMatrix::from_entries(entries, tau, sigma)
}

/// Log-likelihood `Σ ȳ_i ln(1 − φ_i) + (1 − ȳ_i) ln φ_i`, `ȳ = (1 + y)/2`.
pub fn log_likelihood(
    y: &BinaryMeasurements,
    ensemble: &SensingEnsemble,
    x: ArrayView1<f64>,
    tau: f64,
    sigma: f64,
) -> Result<f64> {
    check_sigma(sigma)?;
    check_dim(ensemble.m(), y.len())?;
    let lin = linearize(ensemble, x, tau, sigma)?;
    Ok(y.codes
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            if c > 0 {
                lin.high[i].ln()
            } else {
                lin.low[i].ln()
            }
        })
        .sum())
}

/// Gradient of [`log_likelihood`] in `x`:
/// `Σ [ȳ_i/(1 − φ_i) − (1 − ȳ_i)/φ_i] φ′(v_i) · 2A_i x`.
pub fn score(
    y: &BinaryMeasurements,
    ensemble: &SensingEnsemble,
    x: &SignalVector,
    tau: f64,
    sigma: f64,
) -> Result<Array1<f64>> {
    check_sigma(sigma)?;
    check_dim(ensemble.m(), y.len())?;
    let lin = linearize(ensemble, x.entries(), tau, sigma)?;
    let coeffs: Array1<f64> = y
        .codes
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            if lin.low[i] * lin.high[i] < SATURATION {
                0.0
            } else if c > 0 {
                lin.density[i] / lin.high[i]
            } else {
                -lin.density[i] / lin.low[i]
            }
        })
        .collect();
    Ok(lin.grads.t().dot(&coeffs))
}

/// Relative eigenvalue floor below which the Fisher matrix is treated as
/// singular.
const SINGULAR_RATIO: f64 = 1e-12;

/// SRER (dB) of an efficient unbiased estimator:
/// `10 log₁₀(‖x‖² / Tr(I⁻¹))`.
pub fn crb_srer(fisher: &FisherMatrix, x: &SignalVector) -> Result<f64> {
    check_dim(fisher.dim(), x.dim())?;
    if fisher.dim() == 0 {
        return Err(Error::BoundUndefined("empty Fisher matrix".into()));
    }
    let eig = fisher.eigenvalues();
    let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || min <= SINGULAR_RATIO * max {
        return Err(Error::BoundUndefined(format!(
            "Fisher matrix is singular (eigenvalues in [{min:e}, {max:e}])"
        )));
    }
    let trace_inv: f64 = eig.iter().map(|l| 1.0 / l).sum();
    let energy = x.entries().dot(&x.entries());
    Ok(10.0 * (energy / trace_inv).log10())
}
