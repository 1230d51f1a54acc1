//! PhaseLift-style baseline: quadratic loss on centroid-decoded codes,
//! minimized with the same accelerated projected iteration as the
//! consistency solver and an exact closed-form step.

use ndarray::Array1;

use crate::error::{check_dim, Error, Result};
use crate::linalg::SymmetricMatrix;
use crate::measurement::{interval_centroids, BinaryMeasurements, SensingEnsemble, SignalVector};
use crate::solver::{projected_descent, LiftedObjective, RunTrace, SolverConfig};

/// Codes replaced by the conditional means of `χ²₁` below and above `τ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoMeasurements {
    pub values: Vec<f64>,
    pub source: BinaryMeasurements,
}

pub fn centroid_decode(y: &BinaryMeasurements) -> Result<PseudoMeasurements> {
    let (low, high) = interval_centroids(y.tau)?;
    let values = y
        .codes
        .iter()
        .map(|&c| if c > 0 { high } else { low })
        .collect();
    Ok(PseudoMeasurements {
        values,
        source: y.clone(),
    })
}

fn check_pseudo(ensemble: &SensingEnsemble, p: &PseudoMeasurements) -> Result<()> {
    check_dim(ensemble.m(), p.values.len())
}

fn residuals<'a>(forms: &'a [f64], p: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
    forms.iter().zip(p).map(|(&q, &v)| q - v)
}

/// `Q(X) = Σ (Tr(A_i X) − p_i)²`
pub fn phaselift_cost(
    x: &SymmetricMatrix,
    ensemble: &SensingEnsemble,
    p: &PseudoMeasurements,
) -> Result<f64> {
    check_pseudo(ensemble, p)?;
    let forms = ensemble.quadratic_forms(x)?;
    Ok(residuals(forms.as_slice().expect("contiguous"), &p.values)
        .map(|r| r * r)
        .sum())
}

/// `∇Q(X) = 2 Σ (Tr(A_i X) − p_i) A_i`
pub fn phaselift_gradient(
    x: &SymmetricMatrix,
    ensemble: &SensingEnsemble,
    p: &PseudoMeasurements,
) -> Result<SymmetricMatrix> {
    check_pseudo(ensemble, p)?;
    let forms = ensemble.quadratic_forms(x)?;
    let coeffs: Vec<f64> = residuals(forms.as_slice().expect("contiguous"), &p.values)
        .map(|r| 2.0 * r)
        .collect();
    ensemble.weighted_lift_sum(&coeffs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactStep {
    pub eta: f64,
    /// `Σ Tr(A_i G)²` vanished; `eta` is then 0.
    pub degenerate: bool,
}

const DEGENERATE_DENOMINATOR: f64 = 1e-30;

fn closed_form_step(forms: &[f64], dir_forms: &[f64], p: &[f64]) -> ExactStep {
    let num: f64 = residuals(forms, p)
        .zip(dir_forms)
        .map(|(r, &g)| r * g)
        .sum();
    let den: f64 = dir_forms.iter().map(|g| g * g).sum();
    if den < DEGENERATE_DENOMINATOR {
        ExactStep {
            eta: 0.0,
            degenerate: true,
        }
    } else {
        ExactStep {
            eta: num / den,
            degenerate: false,
        }
    }
}

/// Exact minimizer of `η ↦ Q(X − ηG)`:
/// `η = Σ (Tr(A_i X) − p_i) Tr(A_i G) / Σ Tr(A_i G)²`.
pub fn phaselift_step(
    x: &SymmetricMatrix,
    g: &SymmetricMatrix,
    ensemble: &SensingEnsemble,
    p: &PseudoMeasurements,
) -> Result<ExactStep> {
    check_pseudo(ensemble, p)?;
    let forms = ensemble.quadratic_forms(x)?;
    let dir = ensemble.quadratic_forms(g)?;
    Ok(closed_form_step(
        forms.as_slice().expect("contiguous"),
        dir.as_slice().expect("contiguous"),
        &p.values,
    ))
}

struct QuadraticObjective<'a> {
    values: &'a [f64],
}

impl LiftedObjective for QuadraticObjective<'_> {
    fn cost(&self, forms: &[f64]) -> f64 {
        residuals(forms, self.values).map(|r| r * r).sum()
    }

    fn gradient_coeffs(&self, forms: &[f64]) -> Vec<f64> {
        residuals(forms, self.values).map(|r| 2.0 * r).collect()
    }

    fn step(&self, forms: &[f64], dir_forms: &[f64], _config: &SolverConfig) -> f64 {
        closed_form_step(forms, dir_forms, self.values).eta
    }
}

/// PhaseLift baseline with the closed-form step. The line-search fields of
/// `config` are ignored unless it requests a fixed step.
pub fn phaselift_run(
    ensemble: &SensingEnsemble,
    p: &PseudoMeasurements,
    config: &SolverConfig,
    ground_truth: Option<&SignalVector>,
) -> Result<RunTrace> {
    check_pseudo(ensemble, p)?;
    if p.values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::invalid(
            "pseudo-measurements must be finite and nonnegative",
        ));
    }
    projected_descent(
        ensemble,
        &QuadraticObjective { values: &p.values },
        &p.source,
        config,
        ground_truth,
    )
}

/// Pseudo-measurements that are exactly `|⟨a_i, x⟩|²`; used to check the
/// baseline on realizable data.
pub fn exact_pseudo_measurements(
    ensemble: &SensingEnsemble,
    x: &SignalVector,
    source: &BinaryMeasurements,
) -> Result<PseudoMeasurements> {
    let q: Array1<f64> = ensemble.quadratic_measurements(x.entries())?;
    Ok(PseudoMeasurements {
        values: q.to_vec(),
        source: source.clone(),
    })
}
