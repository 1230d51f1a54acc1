//! Consistency-driven reconstruction over the lifted variable `X = xxᵀ`.
//!
//! The cost `F(X) = Σ f(y_i(Tr(A_i X) − τ))` with the one-sided quadratic
//! `f(u) = ½u²·𝟙(u ≤ 0)` penalizes only measurements that the current
//! iterate explains with the wrong sign. It is minimized by projected
//! gradient descent onto rank-1 PSD matrices, optionally with the
//! θ-momentum schedule
//!
//! ```text
//! θ⁺ = 2 / (1 + √(1 + 4/θ²))
//! Y⁺ = X⁺ + θ⁺(1/θ − 1)(X⁺ − X)
//! ```
//!
//! The iteration engine in this module is shared with the PhaseLift
//! baseline; only the loss and the step rule differ.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{rank1_psd_project_from, PowerOptions, SymmetricMatrix};
use crate::measurement::{BinaryMeasurements, SensingEnsemble, SignalVector};
use crate::metrics;

/// Largest `m` for which the `m x m` trace Gram matrix is cached and used
/// to evaluate `Tr(A_i G)`.
const GRAM_ROW_LIMIT: usize = 4096;

/// `f(u) = ½u²` for `u ≤ 0`, else 0.
pub fn one_sided_loss(u: f64) -> f64 {
    if u <= 0.0 {
        0.5 * u * u
    } else {
        0.0
    }
}

/// `f′(u) = u·𝟙(u ≤ 0)`; the subgradient at 0 is taken as 0.
pub fn one_sided_slope(u: f64) -> f64 {
    if u < 0.0 {
        u
    } else {
        0.0
    }
}

fn check_codes(ensemble: &SensingEnsemble, y: &BinaryMeasurements) -> Result<()> {
    check_dim(ensemble.m(), y.len())
}

fn cost_from_forms(forms: &[f64], y: &BinaryMeasurements) -> f64 {
    forms
        .iter()
        .zip(&y.codes)
        .map(|(&q, &c)| one_sided_loss(f64::from(c) * (q - y.tau)))
        .sum()
}

fn gradient_coeffs(forms: &[f64], y: &BinaryMeasurements) -> Vec<f64> {
    forms
        .iter()
        .zip(&y.codes)
        .map(|(&q, &c)| {
            let c = f64::from(c);
            one_sided_slope(c * (q - y.tau)) * c
        })
        .collect()
}

/// `F(X)`
pub fn bpr_cost(
    x: &SymmetricMatrix,
    ensemble: &SensingEnsemble,
    y: &BinaryMeasurements,
) -> Result<f64> {
    check_codes(ensemble, y)?;
    let forms = ensemble.quadratic_forms(x)?;
    Ok(cost_from_forms(forms.as_slice().expect("contiguous"), y))
}

/// `∇F(X) = Σ f′(u_i)·y_i·A_i`
pub fn bpr_gradient(
    x: &SymmetricMatrix,
    ensemble: &SensingEnsemble,
    y: &BinaryMeasurements,
) -> Result<SymmetricMatrix> {
    check_codes(ensemble, y)?;
    let forms = ensemble.quadratic_forms(x)?;
    ensemble.weighted_lift_sum(&gradient_coeffs(forms.as_slice().expect("contiguous"), y))
}

fn grid_points(range_max: f64, precision: f64) -> usize {
    (range_max / precision + 1e-9).floor() as usize + 1
}

/// Grid minimizer of `η ↦ Σ f(y_i(s_i − η g_i − τ))` over
/// `{0, δ, 2δ, …, range_max}`; ties go to the smallest `η`.
fn grid_line_search(
    forms: &[f64],
    dir_forms: &[f64],
    y: &BinaryMeasurements,
    range_max: f64,
    precision: f64,
) -> f64 {
    let base: Vec<f64> = forms
        .iter()
        .zip(&y.codes)
        .map(|(&s, &c)| f64::from(c) * (s - y.tau))
        .collect();
    let slope: Vec<f64> = dir_forms
        .iter()
        .zip(&y.codes)
        .map(|(&g, &c)| f64::from(c) * g)
        .collect();
    let mut best_eta = 0.0;
    let mut best_cost = f64::INFINITY;
    for k in 0..grid_points(range_max, precision) {
        let eta = k as f64 * precision;
        let cost: f64 = base
            .iter()
            .zip(&slope)
            .map(|(&a, &b)| one_sided_loss(a - eta * b))
            .sum();
        if cost < best_cost {
            best_cost = cost;
            best_eta = eta;
        }
    }
    best_eta
}

/// Grid line search for `min_η F(Y − ηG)`.
pub fn line_search(
    y_mat: &SymmetricMatrix,
    g: &SymmetricMatrix,
    ensemble: &SensingEnsemble,
    y: &BinaryMeasurements,
    range_max: f64,
    precision: f64,
) -> Result<f64> {
    if !(precision > 0.0 && range_max > precision) {
        return Err(Error::invalid(
            "line search needs range_max > precision > 0",
        ));
    }
    check_codes(ensemble, y)?;
    let s = ensemble.quadratic_forms(y_mat)?;
    let d = ensemble.quadratic_forms(g)?;
    Ok(grid_line_search(
        s.as_slice().expect("contiguous"),
        d.as_slice().expect("contiguous"),
        y,
        range_max,
        precision,
    ))
}

/// `C₀ = Σ_i (Tr A_i)²`, i.e. `Σ‖a_i‖⁴` for real rows: a Lipschitz
/// constant of `∇F` in Frobenius norm.
pub fn lipschitz_bound(ensemble: &SensingEnsemble) -> f64 {
    ensemble.lifted_traces().iter().map(|t| t * t).sum()
}

/// How the step size of each iteration is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// Grid search over `[0, ls_range_max]` at spacing `ls_precision`.
    GridSearch,
    Fixed(f64),
}

/// Where the grid line search is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LineSearchPoint {
    /// At the momentum point `Y` along `∇F(Y)`, the point actually stepped from.
    Momentum,
    /// At the current iterate `X` along `∇F(X)`, then applied at `Y`.
    Iterate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub ls_range_max: f64,
    pub ls_precision: f64,
    pub momentum: bool,
    pub step_rule: StepRule,
    pub line_search_at: LineSearchPoint,
    pub projection: PowerOptions,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 300,
            ls_range_max: 0.0025,
            ls_precision: 1e-5,
            momentum: true,
            step_rule: StepRule::GridSearch,
            line_search_at: LineSearchPoint::Momentum,
            projection: PowerOptions::default(),
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ls_precision > 0.0 && self.ls_precision < self.ls_range_max) {
            return Err(Error::invalid(format!(
                "line-search precision {} must be positive and below the range {}",
                self.ls_precision, self.ls_range_max
            )));
        }
        if let StepRule::Fixed(eta) = self.step_rule {
            if !(eta >= 0.0) || !eta.is_finite() {
                return Err(Error::invalid("fixed step must be finite and nonnegative"));
            }
        }
        if !(self.projection.tol > 0.0) || self.projection.max_iter == 0 {
            return Err(Error::invalid("projection needs tol > 0 and max_iter > 0"));
        }
        Ok(())
    }

    fn projection_options(&self) -> PowerOptions {
        PowerOptions {
            seed: self.seed ^ self.projection.seed,
            ..self.projection
        }
    }
}

/// Solver state: the projected iterate `X` (with its factor), the
/// momentum point `Y` and the momentum parameter `θ ∈ (0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedIterate {
    pub x: SymmetricMatrix,
    pub factor: Option<Array1<f64>>,
    pub y: SymmetricMatrix,
    pub theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based iteration count.
    pub iter: usize,
    /// Objective at the new iterate.
    pub cost: f64,
    pub eta: f64,
    /// Present when a ground truth was supplied.
    pub srer_db: Option<f64>,
    pub consistency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub records: Vec<IterationRecord>,
    /// Final estimate `x̂`; the zero vector when the last projection was zero.
    pub factor: Array1<f64>,
    pub final_state: LiftedIterate,
}

impl RunTrace {
    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    pub fn estimate(&self) -> SignalVector {
        SignalVector::new(self.factor.clone())
    }
}

/// A loss over the lifted variable, seen through the forms `Tr(A_i X)`.
pub(crate) trait LiftedObjective {
    fn cost(&self, forms: &[f64]) -> f64;

    /// Coefficients `c_i` with `∇ = Σ c_i A_i`.
    fn gradient_coeffs(&self, forms: &[f64]) -> Vec<f64>;

    /// Step size along `−G` from a point with forms `forms`, where
    /// `dir_forms[i] = Tr(A_i G)`.
    fn step(&self, forms: &[f64], dir_forms: &[f64], config: &SolverConfig) -> f64;
}

struct ConsistencyObjective<'a> {
    y: &'a BinaryMeasurements,
}

impl LiftedObjective for ConsistencyObjective<'_> {
    fn cost(&self, forms: &[f64]) -> f64 {
        cost_from_forms(forms, self.y)
    }

    fn gradient_coeffs(&self, forms: &[f64]) -> Vec<f64> {
        gradient_coeffs(forms, self.y)
    }

    fn step(&self, forms: &[f64], dir_forms: &[f64], config: &SolverConfig) -> f64 {
        match config.step_rule {
            StepRule::Fixed(eta) => eta,
            StepRule::GridSearch => grid_line_search(
                forms,
                dir_forms,
                self.y,
                config.ls_range_max,
                config.ls_precision,
            ),
        }
    }
}

/// `Tr(A_j · Σ_i c_i A_i)` for every `j`.
fn direction_forms(
    ensemble: &SensingEnsemble,
    coeffs: &[f64],
    g: Option<&SymmetricMatrix>,
) -> Result<Array1<f64>> {
    if ensemble.m() <= GRAM_ROW_LIMIT {
        let gram = ensemble.trace_gram();
        let mut out = Array1::zeros(ensemble.m());
        for (i, &c) in coeffs.iter().enumerate() {
            if c != 0.0 {
                out.scaled_add(c, &gram.row(i));
            }
        }
        Ok(out)
    } else {
        match g {
            Some(g) => ensemble.quadratic_forms(g),
            None => ensemble.quadratic_forms(&ensemble.weighted_lift_sum(coeffs)?),
        }
    }
}

fn consistency_from_forms(forms: &[f64], y: &BinaryMeasurements) -> f64 {
    let agree = forms
        .iter()
        .zip(&y.codes)
        .filter(|(&q, &c)| f64::from(c) * (q - y.tau) > 0.0)
        .count();
    agree as f64 / forms.len() as f64
}

/// Runs accelerated (or plain) projected gradient descent for `objective`.
/// `codes` is only used to report consistency.
pub(crate) fn projected_descent<O: LiftedObjective>(
    ensemble: &SensingEnsemble,
    objective: &O,
    codes: &BinaryMeasurements,
    config: &SolverConfig,
    truth: Option<&SignalVector>,
) -> Result<RunTrace> {
    config.validate()?;
    check_codes(ensemble, codes)?;
    if codes.is_empty() {
        return Err(Error::invalid("no measurements"));
    }
    let n = ensemble.n();
    if let Some(t) = truth {
        check_dim(n, t.dim())?;
    }
    let proj_opts = config.projection_options();

    let mut x = SymmetricMatrix::zeros(n);
    let mut x_forms = Array1::<f64>::zeros(ensemble.m());
    let mut prev_x = x.clone();
    let mut prev_forms = x_forms.clone();
    let mut factor = Array1::<f64>::zeros(n);
    let mut theta = 1.0f64;
    // Y = (1 + β) X − β X_prev
    let mut beta = 0.0f64;
    let mut records = Vec::with_capacity(config.max_iters);

    for t in 0..config.max_iters {
        let y_mat = if beta == 0.0 {
            x.clone()
        } else {
            x.lin_comb(1.0 + beta, &prev_x, -beta)?
        };
        let y_forms = if beta == 0.0 {
            x_forms.clone()
        } else {
            &x_forms * (1.0 + beta) - &prev_forms * beta
        };
        let y_slice = y_forms.as_slice().expect("contiguous");

        let coeffs = objective.gradient_coeffs(y_slice);
        let grad = ensemble.weighted_lift_sum(&coeffs)?;

        let eta = match (config.line_search_at, config.step_rule) {
            (_, StepRule::Fixed(eta)) => eta,
            (LineSearchPoint::Iterate, _) if beta != 0.0 => {
                let x_slice = x_forms.as_slice().expect("contiguous");
                let x_coeffs = objective.gradient_coeffs(x_slice);
                let dir = direction_forms(ensemble, &x_coeffs, None)?;
                objective.step(x_slice, dir.as_slice().expect("contiguous"), config)
            }
            _ => {
                let dir = direction_forms(ensemble, &coeffs, Some(&grad))?;
                objective.step(y_slice, dir.as_slice().expect("contiguous"), config)
            }
        };

        let target = y_mat.lin_comb(1.0, &grad, -eta)?;
        let proj = rank1_psd_project_from(&target, Some(factor.view()), &proj_opts)?;
        let new_forms = ensemble.quadratic_measurements(proj.factor.view())?;
        let new_slice = new_forms.as_slice().expect("contiguous");

        let srer_db = match truth {
            Some(t) => Some(metrics::srer_raw(t.entries(), proj.factor.view())?),
            None => None,
        };
        records.push(IterationRecord {
            iter: t + 1,
            cost: objective.cost(new_slice),
            eta,
            srer_db,
            consistency: consistency_from_forms(new_slice, codes),
        });

        prev_x = std::mem::replace(&mut x, proj.matrix);
        prev_forms = std::mem::replace(&mut x_forms, new_forms);
        factor = proj.factor;
        if config.momentum {
            let theta_next = 2.0 / (1.0 + (1.0 + 4.0 / (theta * theta)).sqrt());
            beta = theta_next * (1.0 / theta - 1.0);
            theta = theta_next;
        }
    }

    let y_final = if beta == 0.0 {
        x.clone()
    } else {
        x.lin_comb(1.0 + beta, &prev_x, -beta)?
    };
    let has_factor = factor.iter().any(|&v| v != 0.0);
    Ok(RunTrace {
        records,
        final_state: LiftedIterate {
            x,
            factor: has_factor.then(|| factor.clone()),
            y: y_final,
            theta,
        },
        factor,
    })
}

/// Binary phase retrieval: minimizes `F` over rank-1 PSD matrices from
/// `X⁰ = Y⁰ = 0`, `θ⁰ = 1`. With `momentum = false` this is plain
/// projected gradient descent.
pub fn apgd_run(
    ensemble: &SensingEnsemble,
    y: &BinaryMeasurements,
    config: &SolverConfig,
    ground_truth: Option<&SignalVector>,
) -> Result<RunTrace> {
    projected_descent(
        ensemble,
        &ConsistencyObjective { y },
        y,
        config,
        ground_truth,
    )
}

/// `θ⁺` for the momentum schedule.
pub fn next_theta(theta: f64) -> f64 {
    2.0 / (1.0 + (1.0 + 4.0 / (theta * theta)).sqrt())
}

/// `F(x xᵀ)` evaluated from the factor.
pub fn factor_cost(
    factor: ArrayView1<f64>,
    ensemble: &SensingEnsemble,
    y: &BinaryMeasurements,
) -> Result<f64> {
    check_codes(ensemble, y)?;
    let q = ensemble.quadratic_measurements(factor)?;
    Ok(cost_from_forms(q.as_slice().expect("contiguous"), y))
}
