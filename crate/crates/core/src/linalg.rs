//! Dense symmetric-matrix primitives: trace inner products and the
//! rank-1 positive-semidefinite projection used by every lifted solver.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};

/// A real symmetric `n x n` matrix.
///
/// Symmetry is exact: constructors either verify it bit-for-bit or
/// produce it by averaging with the transpose.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    data: Array2<f64>,
}

impl SymmetricMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            data: Array2::zeros((n, n)),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            data: Array2::eye(n),
        }
    }

    pub fn from_diag(values: &[f64]) -> Self {
        Self {
            data: Array2::from_diag(&Array1::from(values.to_vec())),
        }
    }

    /// `x xᵀ`
    pub fn outer(x: ArrayView1<f64>) -> Self {
        let n = x.len();
        let mut data = Array2::zeros((n, n));
        for j in 0..n {
            for k in 0..=j {
                let v = x[j] * x[k];
                data[[j, k]] = v;
                data[[k, j]] = v;
            }
        }
        Self { data }
    }

    /// Wraps `a` after checking that it is square and exactly symmetric.
    pub fn from_array(a: Array2<f64>) -> Result<Self> {
        let (r, c) = a.dim();
        if r != c {
            return Err(Error::invalid(format!("matrix is {r}x{c}, not square")));
        }
        for j in 0..r {
            for k in 0..j {
                if a[[j, k]] != a[[k, j]] {
                    return Err(Error::invalid(format!(
                        "matrix is not symmetric at ({j}, {k})"
                    )));
                }
            }
        }
        Ok(Self { data: a })
    }

    /// `(a + aᵀ) / 2`, which is exactly symmetric in floating point.
    pub fn symmetrize(a: Array2<f64>) -> Result<Self> {
        let (r, c) = a.dim();
        if r != c {
            return Err(Error::invalid(format!("matrix is {r}x{c}, not square")));
        }
        let mut data = a;
        for j in 0..r {
            for k in 0..j {
                let v = 0.5 * (data[[j, k]] + data[[k, j]]);
                data[[j, k]] = v;
                data[[k, j]] = v;
            }
        }
        Ok(Self { data })
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.data[[j, k]]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> f64 {
        self.data.diag().sum()
    }

    pub fn matvec(&self, v: ArrayView1<f64>) -> Array1<f64> {
        self.data.dot(&v)
    }

    /// `alpha * self + beta * other`
    pub fn lin_comb(&self, alpha: f64, other: &SymmetricMatrix, beta: f64) -> Result<Self> {
        check_dim(self.dim(), other.dim())?;
        let mut data = Array2::zeros(self.data.raw_dim());
        Zip::from(&mut data)
            .and(&self.data)
            .and(&other.data)
            .for_each(|d, &a, &b| *d = alpha * a + beta * b);
        Ok(Self { data })
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            data: self.data.mapv(|v| alpha * v),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    /// Gershgorin upper bound on `-λ_min`, clamped at zero.
    fn negative_spectrum_bound(&self) -> f64 {
        let n = self.dim();
        let mut bound = 0.0f64;
        for j in 0..n {
            let row = self.data.row(j);
            let off: f64 = row
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(_, v)| v.abs())
                .sum();
            bound = bound.max(-row[j] + off);
        }
        bound
    }
}

/// `Σ_{j,k} A[j,k]·X[j,k]`, equal to `Tr(AX)` for symmetric arguments.
pub fn trace_inner(a: &SymmetricMatrix, x: &SymmetricMatrix) -> Result<f64> {
    check_dim(a.dim(), x.dim())?;
    Ok(Zip::from(&a.data)
        .and(&x.data)
        .fold(0.0, |acc, &p, &q| acc + p * q))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    /// Unit-norm eigenvector.
    pub vector: Array1<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerOptions {
    /// Relative residual target: stop once `‖Sv − λv‖ ≤ tol·|λ|` (or the
    /// residual reaches the rounding floor of the matrix-vector product).
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 10_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerIteration {
    pub pair: EigenPair,
    pub iterations: usize,
    pub converged: bool,
    /// The iteration collapsed to the zero vector (e.g. `S = 0`); `pair`
    /// then holds value 0 and the start vector.
    pub degenerate: bool,
}

fn random_unit_vector(n: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
    loop {
        let v: Array1<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.dot(&v).sqrt();
        if norm > 0.0 {
            return v / norm;
        }
    }
}

fn norm2(v: ArrayView1<f64>) -> f64 {
    v.dot(&v).sqrt()
}

/// Core loop on `S + shift·I`. Returns the unit vector, the number of
/// iterations, whether the residual target was met and whether the
/// iteration degenerated to zero.
fn shifted_power_loop(
    s: &SymmetricMatrix,
    shift: f64,
    start: Option<ArrayView1<f64>>,
    opts: &PowerOptions,
) -> (Array1<f64>, usize, bool, bool) {
    let n = s.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let apply = |v: &Array1<f64>| -> Array1<f64> {
        let mut w = s.data.dot(v);
        if shift != 0.0 {
            w.scaled_add(shift, v);
        }
        w
    };
    let scale = s.data.iter().fold(0.0f64, |m, v| m.max(v.abs())) + shift.abs();
    let floor = 4.0 * f64::EPSILON * n as f64 * scale;

    let mut v = match start {
        Some(x0) if norm2(x0) > 0.0 => &x0 / norm2(x0),
        _ => random_unit_vector(n, &mut rng),
    };
    let mut w = apply(&v);
    // A start vector (numerically) orthogonal to the range gets one redraw.
    if norm2(w.view()) <= f64::EPSILON * scale {
        v = random_unit_vector(n, &mut rng);
        w = apply(&v);
        if norm2(w.view()) <= f64::EPSILON * scale {
            return (v, 0, false, true);
        }
    }

    for it in 1..=opts.max_iter {
        let rq_shifted = v.dot(&w);
        let rq = rq_shifted - shift;
        let mut r = w.clone();
        r.scaled_add(-rq_shifted, &v);
        let resid = norm2(r.view());
        if resid <= opts.tol * rq.abs()
            || resid <= floor
            || (rq <= 0.0 && resid <= opts.tol * rq_shifted.abs())
        {
            return (v, it, true, false);
        }
        let wn = norm2(w.view());
        if wn == 0.0 {
            return (v, it, false, true);
        }
        v = &w / wn;
        w = apply(&v);
    }
    (v, opts.max_iter, false, false)
}

/// Dominant eigenpair (largest `|λ|`) by plain power iteration from a
/// seeded random start.
pub fn power_iteration(s: &SymmetricMatrix, opts: &PowerOptions) -> Result<PowerIteration> {
    if s.dim() == 0 {
        return Err(Error::invalid("power iteration on an empty matrix"));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::invalid("power iteration tolerance must be positive"));
    }
    let (v, iterations, converged, degenerate) = shifted_power_loop(s, 0.0, None, opts);
    let value = if degenerate {
        0.0
    } else {
        v.dot(&s.matvec(v.view()))
    };
    Ok(PowerIteration {
        pair: EigenPair { value, vector: v },
        iterations,
        converged,
        degenerate,
    })
}

/// Result of projecting onto the rank-1 PSD cone.
#[derive(Debug, Clone, PartialEq)]
pub struct Rank1Projection {
    /// `λ₁ v₁ v₁ᵀ`, or zero when `λ₁ ≤ 0`.
    pub matrix: SymmetricMatrix,
    /// Algebraically largest eigenpair; zero-valued (with a zero vector)
    /// when the projection is zero.
    pub pair: EigenPair,
    /// `√λ₁ · v₁`, or the zero vector.
    pub factor: Array1<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl Rank1Projection {
    pub fn is_zero(&self) -> bool {
        self.pair.value == 0.0
    }
}

/// Nearest rank-1 PSD matrix in Frobenius norm.
///
/// Power iteration runs on `S + cI` with `c` a Gershgorin bound on
/// `-λ_min`, so the dominant eigenvalue of the shifted matrix is the
/// algebraically largest of `S`.
pub fn rank1_psd_project(s: &SymmetricMatrix, opts: &PowerOptions) -> Result<Rank1Projection> {
    rank1_psd_project_from(s, None, opts)
}

/// [`rank1_psd_project`] started from `start` instead of a seeded random
/// vector (a zero or absent `start` falls back to the seeded draw). Iterative
/// solvers pass the previous factor, which is usually close to the new
/// dominant eigenvector.
pub fn rank1_psd_project_from(
    s: &SymmetricMatrix,
    start: Option<ArrayView1<f64>>,
    opts: &PowerOptions,
) -> Result<Rank1Projection> {
    let n = s.dim();
    if let Some(x0) = start {
        check_dim(n, x0.len())?;
    }
    if n == 0 {
        return Err(Error::invalid("projection of an empty matrix"));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::invalid("power iteration tolerance must be positive"));
    }
    let shift = s.negative_spectrum_bound();
    let (v, iterations, converged, degenerate) = shifted_power_loop(s, shift, start, opts);
    let value = if degenerate {
        0.0
    } else {
        v.dot(&s.matvec(v.view()))
    };
    if value <= 0.0 {
        return Ok(Rank1Projection {
            matrix: SymmetricMatrix::zeros(n),
            pair: EigenPair {
                value: 0.0,
                vector: Array1::zeros(n),
            },
            factor: Array1::zeros(n),
            iterations,
            converged,
        });
    }
    let factor = &v * value.sqrt();
    Ok(Rank1Projection {
        matrix: SymmetricMatrix::outer(factor.view()),
        pair: EigenPair { value, vector: v },
        factor,
        iterations,
        converged,
    })
}
