//! Ground-truth signals, sensing ensembles, thresholds and the one-bit
//! encoder.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{check_dim, Error, Result};
use crate::linalg::SymmetricMatrix;
use crate::special::{adaptive_simpson, chi1sq_cdf_pair, chi1sq_first_moment_density};

// Independent ChaCha streams per generator so that reusing one seed for
// several generators does not correlate their outputs.
const STREAM_SIGNAL: u64 = 1;
const STREAM_ENSEMBLE: u64 = 2;
const STREAM_MASK: u64 = 3;
const STREAM_NOISE: u64 = 4;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A real signal in `Rⁿ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalVector(Array1<f64>);

impl SignalVector {
    pub fn new(entries: Array1<f64>) -> Self {
        Self(entries)
    }

    pub fn entries(&self) -> ArrayView1<'_, f64> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array1<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.dot(&self.0).sqrt()
    }

    pub fn negated(&self) -> Self {
        Self(-&self.0)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self(&self.0 * alpha)
    }
}

impl From<Vec<f64>> for SignalVector {
    fn from(v: Vec<f64>) -> Self {
        Self(Array1::from(v))
    }
}

/// Uniform draw from the unit sphere: i.i.d. normals, normalized.
pub fn gen_unit_sphere_signal(n: usize, seed: u64) -> Result<SignalVector> {
    if n == 0 {
        return Err(Error::invalid("signal dimension must be at least 1"));
    }
    let mut rng = rng_for(seed, STREAM_SIGNAL);
    loop {
        let v: Array1<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = v.dot(&v).sqrt();
        if norm > 0.0 {
            return Ok(SignalVector(v / norm));
        }
    }
}

/// `κ[1.5 sin(4πℓ/n) + 2.5 cos(14πℓ/n)]`, `ℓ = 0..n`, with `κ` making the
/// result unit-norm.
pub fn gen_two_sinusoid_signal(n: usize) -> Result<SignalVector> {
    if n < 2 {
        return Err(Error::invalid("two-sinusoid signal needs n >= 2"));
    }
    let nf = n as f64;
    let raw: Array1<f64> = (0..n)
        .map(|l| {
            let l = l as f64;
            1.5 * (4.0 * PI * l / nf).sin() + 2.5 * (14.0 * PI * l / nf).cos()
        })
        .collect();
    let kappa = 1.0 / raw.dot(&raw).sqrt();
    Ok(SignalVector(raw * kappa))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnsembleKind {
    Gaussian,
    /// Structured illumination: DFT rows through random binary masks.
    FourierMask,
    /// Oversampled DFT with no masks (every block is the plain DFT).
    PlainDft,
}

impl EnsembleKind {
    pub fn is_complex(self) -> bool {
        !matches!(self, EnsembleKind::Gaussian)
    }
}

impl fmt::Display for EnsembleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnsembleKind::Gaussian => "gaussian",
            EnsembleKind::FourierMask => "fourier-mask",
            EnsembleKind::PlainDft => "plain-dft",
        })
    }
}

impl FromStr for EnsembleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(EnsembleKind::Gaussian),
            "fourier-mask" => Ok(EnsembleKind::FourierMask),
            "plain-dft" => Ok(EnsembleKind::PlainDft),
            other => Err(Error::Parse(format!("unknown ensemble kind `{other}`"))),
        }
    }
}

/// `m` sensing vectors in `Rⁿ` or `Cⁿ`.
///
/// Rows are kept in factored form: `real` (and `imag` for Fourier kinds)
/// are `m x n`, and the lifted form of row `i` is
/// `A_i = re_i re_iᵀ + im_i im_iᵀ`. Dense `A_i` are built on demand.
#[derive(Debug)]
pub struct SensingEnsemble {
    kind: EnsembleKind,
    seed: u64,
    real: Array2<f64>,
    imag: Option<Array2<f64>>,
    gram: OnceLock<Array2<f64>>,
}

impl Clone for SensingEnsemble {
    fn clone(&self) -> Self {
        Self {
            kind: self.kind,
            seed: self.seed,
            real: self.real.clone(),
            imag: self.imag.clone(),
            gram: OnceLock::new(),
        }
    }
}

impl PartialEq for SensingEnsemble {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.seed == other.seed
            && self.real == other.real
            && self.imag == other.imag
    }
}

impl SensingEnsemble {
    /// Builds an ensemble from explicit rows. Fourier kinds require `imag`.
    pub fn from_rows(
        kind: EnsembleKind,
        seed: u64,
        real: Array2<f64>,
        imag: Option<Array2<f64>>,
    ) -> Result<Self> {
        if kind.is_complex() != imag.is_some() {
            return Err(Error::invalid(format!(
                "{kind} ensemble {} an imaginary part",
                if kind.is_complex() {
                    "requires"
                } else {
                    "cannot have"
                }
            )));
        }
        if let Some(im) = &imag {
            if im.dim() != real.dim() {
                return Err(Error::invalid("real and imaginary parts differ in shape"));
            }
        }
        if real.ncols() == 0 {
            return Err(Error::invalid("ensemble dimension must be at least 1"));
        }
        Ok(Self {
            kind,
            seed,
            real,
            imag,
            gram: OnceLock::new(),
        })
    }

    pub fn kind(&self) -> EnsembleKind {
        self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n(&self) -> usize {
        self.real.ncols()
    }

    pub fn m(&self) -> usize {
        self.real.nrows()
    }

    pub fn real_rows(&self) -> &Array2<f64> {
        &self.real
    }

    pub fn imag_rows(&self) -> Option<&Array2<f64>> {
        self.imag.as_ref()
    }

    fn factors(&self) -> impl Iterator<Item = &Array2<f64>> {
        std::iter::once(&self.real).chain(self.imag.iter())
    }

    /// Dense `A_i`.
    pub fn lifted_form(&self, i: usize) -> SymmetricMatrix {
        let n = self.n();
        let mut a = Array2::zeros((n, n));
        for f in self.factors() {
            let row = f.row(i);
            for j in 0..n {
                for k in 0..n {
                    a[[j, k]] += row[j] * row[k];
                }
            }
        }
        SymmetricMatrix::symmetrize(a).expect("square by construction")
    }

    /// `Tr(A_i)` for every row.
    pub fn lifted_traces(&self) -> Array1<f64> {
        let mut t = Array1::zeros(self.m());
        for f in self.factors() {
            t += &f.map_axis(Axis(1), |r| r.dot(&r));
        }
        t
    }

    /// `|⟨a_i, x⟩|²` for every row (squared modulus for complex rows).
    pub fn quadratic_measurements(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_dim(self.n(), x.len())?;
        let mut q = Array1::zeros(self.m());
        for f in self.factors() {
            let p = f.dot(&x);
            q.zip_mut_with(&p, |acc, &v| *acc += v * v);
        }
        Ok(q)
    }

    /// `Tr(A_i X)` for every row.
    pub fn quadratic_forms(&self, x: &SymmetricMatrix) -> Result<Array1<f64>> {
        check_dim(self.n(), x.dim())?;
        let mut q = Array1::zeros(self.m());
        for f in self.factors() {
            let fx = f.dot(&x.view());
            for (i, acc) in q.iter_mut().enumerate() {
                *acc += fx.row(i).dot(&f.row(i));
            }
        }
        Ok(q)
    }

    /// `Σ_i c_i A_i`. Rows with `c_i = 0` are skipped.
    pub fn weighted_lift_sum(&self, coeffs: &[f64]) -> Result<SymmetricMatrix> {
        check_dim(self.m(), coeffs.len())?;
        let n = self.n();
        let active: Vec<usize> = (0..coeffs.len()).filter(|&i| coeffs[i] != 0.0).collect();
        let mut g = Array2::zeros((n, n));
        if active.is_empty() {
            return Ok(SymmetricMatrix::zeros(n));
        }
        for f in self.factors() {
            let sub = f.select(Axis(0), &active);
            let mut weighted = sub.clone();
            for (r, &i) in active.iter().enumerate() {
                weighted.row_mut(r).mapv_inplace(|v| v * coeffs[i]);
            }
            g += &sub.t().dot(&weighted);
        }
        SymmetricMatrix::symmetrize(g)
    }

    /// Matrix of `Tr(A_i A_j)`, computed once and cached.
    ///
    /// With it, `Tr(A_j · Σ_i c_i A_i) = Σ_i T_ji c_i` costs `O(m·#active)`.
    pub fn trace_gram(&self) -> &Array2<f64> {
        self.gram.get_or_init(|| {
            let factors: Vec<&Array2<f64>> = self.factors().collect();
            let mut t = Array2::zeros((self.m(), self.m()));
            for a in &factors {
                for b in &factors {
                    let k = a.dot(&b.t());
                    t.zip_mut_with(&k, |acc, &v| *acc += v * v);
                }
            }
            t
        })
    }

    /// First `m` rows of a Gaussian ensemble; equals the ensemble generated
    /// with the same seed and `m` rows.
    pub fn truncated(&self, m: usize) -> Result<Self> {
        if self.kind != EnsembleKind::Gaussian {
            return Err(Error::invalid("only Gaussian ensembles can be truncated"));
        }
        if m == 0 || m > self.m() {
            return Err(Error::invalid(format!(
                "cannot truncate {} rows to {m}",
                self.m()
            )));
        }
        Self::from_rows(
            self.kind,
            self.seed,
            self.real.slice(ndarray::s![..m, ..]).to_owned(),
            None,
        )
    }
}

/// `m` i.i.d. `N(0, Iₙ)` rows, drawn row by row.
pub fn gen_gaussian_ensemble(n: usize, m: usize, seed: u64) -> Result<SensingEnsemble> {
    if n == 0 || m == 0 {
        return Err(Error::invalid("ensemble needs n >= 1 and m >= 1"));
    }
    let mut rng = rng_for(seed, STREAM_ENSEMBLE);
    let real = Array2::from_shape_simple_fn((m, n), || StandardNormal.sample(&mut rng));
    SensingEnsemble::from_rows(EnsembleKind::Gaussian, seed, real, None)
}

/// Rows of `[F W₁; …; F W_k]` with `F` the unnormalized DFT
/// (`F_{rc} = exp(−2πi·rc/n)`). With `randomize`, each `W_j` has i.i.d.
/// Bernoulli(½) diagonal entries; otherwise every `W_j = I`.
pub fn gen_structured_illumination_ensemble(
    n: usize,
    k: usize,
    seed: u64,
    randomize: bool,
) -> Result<SensingEnsemble> {
    if n < 2 || k == 0 {
        return Err(Error::invalid(
            "structured illumination needs n >= 2 and k >= 1",
        ));
    }
    let mut rng = rng_for(seed, STREAM_MASK);
    let mut real = Array2::zeros((k * n, n));
    let mut imag = Array2::zeros((k * n, n));
    for block in 0..k {
        let mask: Vec<f64> = (0..n)
            .map(|_| {
                if !randomize || rng.random_bool(0.5) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        for r in 0..n {
            let i = block * n + r;
            for c in 0..n {
                let angle = 2.0 * PI * ((r * c) % n) as f64 / n as f64;
                real[[i, c]] = angle.cos() * mask[c];
                imag[[i, c]] = -angle.sin() * mask[c];
            }
        }
    }
    let kind = if randomize {
        EnsembleKind::FourierMask
    } else {
        EnsembleKind::PlainDft
    };
    SensingEnsemble::from_rows(kind, seed, real, Some(imag))
}

/// `τ` with `P(χ²₁ ≤ τ) = p`, by bisection on `[0, 50]`.
pub fn chi1sq_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("probability {p} outside (0, 1)")));
    }
    let (mut lo, mut hi) = (0.0f64, 50.0f64);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if chi1sq_cdf_pair(mid).0 < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Conditional means of `χ²₁` on `[0, τ]` and `[τ, ∞)`.
pub fn interval_centroids(tau: f64) -> Result<(f64, f64)> {
    if !(tau > 0.0) {
        return Err(Error::invalid("threshold must be positive"));
    }
    let (p_low, p_high) = chi1sq_cdf_pair(tau);
    let f = |x: f64| chi1sq_first_moment_density(x);
    let low_mass = adaptive_simpson(&f, 0.0, tau, 1e-12);
    // The first-moment density is below e^-40 past τ + 80.
    let high_mass = adaptive_simpson(&f, tau, tau + 80.0, 1e-12);
    let c_low = low_mass / p_low;
    let c_high = if p_high > 0.0 {
        high_mass / p_high
    } else {
        // Asymptotic excess of a χ²₁ tail beyond a far threshold.
        tau + 2.0
    };
    Ok((c_low, c_high))
}

/// Noise level giving the requested input SNR,
/// `SNR_in = Σ q_i² / (m σ²)`.
pub fn sigma_for_snr(ensemble: &SensingEnsemble, x: &SignalVector, snr_db: f64) -> Result<f64> {
    let q = ensemble.quadratic_measurements(x.entries())?;
    let energy: f64 = q.iter().map(|v| v * v).sum();
    if energy == 0.0 {
        return Err(Error::invalid(
            "input SNR is undefined for zero measurements",
        ));
    }
    let m = ensemble.m() as f64;
    Ok((energy / (m * 10f64.powf(snr_db / 10.0))).sqrt())
}

/// One-bit codes together with the settings that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMeasurements {
    /// Each entry is exactly `-1` or `+1`.
    pub codes: Vec<i8>,
    pub tau: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl BinaryMeasurements {
    pub fn new(codes: Vec<i8>, tau: f64, noise_sigma: f64, seed: u64) -> Result<Self> {
        if let Some(bad) = codes.iter().find(|&&c| c != 1 && c != -1) {
            return Err(Error::invalid(format!("code {bad} is not ±1")));
        }
        Ok(Self {
            codes,
            tau,
            noise_sigma,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn code(&self, i: usize) -> f64 {
        f64::from(self.codes[i])
    }
}

/// Sign quantizer; zero maps to `-1`.
pub fn sgn(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else {
        -1
    }
}

/// `y_i = sgn(q_i + ξ_i − τ)` with `ξ_i ~ N(0, σ²)` i.i.d.; the noise is
/// not drawn at all when `σ = 0`.
pub fn encode_binary(
    ensemble: &SensingEnsemble,
    x: &SignalVector,
    tau: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<BinaryMeasurements> {
    if !(tau > 0.0) {
        return Err(Error::invalid("threshold must be positive"));
    }
    if !(noise_sigma >= 0.0) {
        return Err(Error::invalid("noise level must be nonnegative"));
    }
    let q = ensemble.quadratic_measurements(x.entries())?;
    let codes = if noise_sigma == 0.0 {
        q.iter().map(|&qi| sgn(qi - tau)).collect()
    } else {
        let mut rng = rng_for(seed, STREAM_NOISE);
        let noise = Normal::new(0.0, noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;
        q.iter()
            .map(|&qi| sgn(qi + noise.sample(&mut rng) - tau))
            .collect()
    };
    Ok(BinaryMeasurements {
        codes,
        tau,
        noise_sigma,
        seed,
    })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let m = values.len();
    if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

/// Median of the realized quadratic measurements.
pub fn empirical_median_threshold(ensemble: &SensingEnsemble, x: &SignalVector) -> Result<f64> {
    if ensemble.m() < 2 {
        return Err(Error::invalid(
            "median threshold needs at least two measurements",
        ));
    }
    let q = ensemble.quadratic_measurements(x.entries())?;
    Ok(median(&mut q.to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn third_largest_eigenvalue(a: &SymmetricMatrix) -> f64 {
        let n = a.dim();
        let m = nalgebra::DMatrix::from_fn(n, n, |j, k| a.get(j, k));
        let mut vals: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
        vals.sort_by(|a, b| b.total_cmp(a));
        vals[2]
    }

    #[test]
    fn unit_sphere_signal_is_normalized_and_deterministic() {
        let x = gen_unit_sphere_signal(64, 7).unwrap();
        assert!((x.norm() - 1.0).abs() < 1e-12);
        assert_eq!(x, gen_unit_sphere_signal(64, 7).unwrap());
        let one = gen_unit_sphere_signal(1, 3).unwrap();
        assert_eq!(one.entries()[0].abs(), 1.0);
        assert!(gen_unit_sphere_signal(0, 1).is_err());
    }

    #[test]
    fn two_sinusoid_signal() {
        let x = gen_two_sinusoid_signal(64).unwrap();
        assert!((x.norm() - 1.0).abs() < 1e-12);
        // ℓ = 0: only the cosine survives.
        let raw_norm: f64 = (0..64)
            .map(|l| {
                let l = l as f64;
                let v = 1.5 * (4.0 * PI * l / 64.0).sin() + 2.5 * (14.0 * PI * l / 64.0).cos();
                v * v
            })
            .sum::<f64>()
            .sqrt();
        assert!((x.entries()[0] - 2.5 / raw_norm).abs() < 1e-14);
        assert!(gen_two_sinusoid_signal(1).is_err());
    }

    #[test]
    fn gaussian_rows_are_rank_one_and_deterministic() {
        let e = gen_gaussian_ensemble(64, 1280, 1).unwrap();
        assert_eq!(e.m(), 1280);
        assert_eq!(e, gen_gaussian_ensemble(64, 1280, 1).unwrap());
        let small = gen_gaussian_ensemble(6, 4, 1).unwrap();
        for i in 0..4 {
            let a = small.lifted_form(i);
            let n = a.dim();
            let m = nalgebra::DMatrix::from_fn(n, n, |j, k| a.get(j, k));
            let mut vals: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
            vals.sort_by(|a, b| b.total_cmp(a));
            assert!(vals[1].abs() < 1e-10);
        }
    }

    #[test]
    fn gaussian_entries_have_zero_mean() {
        let e = gen_gaussian_ensemble(4, 100_000, 11).unwrap();
        let mean = e.real_rows().mean().unwrap();
        assert!(mean.abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn truncation_matches_fresh_generation() {
        let big = gen_gaussian_ensemble(5, 50, 3).unwrap();
        let small = gen_gaussian_ensemble(5, 20, 3).unwrap();
        assert_eq!(big.truncated(20).unwrap(), small);
    }

    #[test]
    fn plain_dft_measurements_equal_dft_magnitudes() {
        let e = gen_structured_illumination_ensemble(8, 1, 0, false).unwrap();
        assert_eq!(e.kind(), EnsembleKind::PlainDft);
        let x = gen_unit_sphere_signal(8, 4).unwrap();
        let xx = SymmetricMatrix::outer(x.entries());
        let forms = e.quadratic_forms(&xx).unwrap();
        for r in 0..8 {
            let (mut re, mut im) = (0.0, 0.0);
            for c in 0..8 {
                let angle = -2.0 * PI * (r * c) as f64 / 8.0;
                re += angle.cos() * x.entries()[c];
                im += angle.sin() * x.entries()[c];
            }
            assert!((forms[r] - (re * re + im * im)).abs() < 1e-10);
        }
    }

    #[test]
    fn masked_ensemble_shape_and_rank() {
        let e = gen_structured_illumination_ensemble(8, 3, 5, true).unwrap();
        assert_eq!(e.m(), 24);
        assert_eq!(e.kind(), EnsembleKind::FourierMask);
        for i in 0..e.m() {
            assert!(third_largest_eigenvalue(&e.lifted_form(i)).abs() < 1e-10);
        }
    }

    #[test]
    fn lifting_identity_every_kind() {
        let x = gen_unit_sphere_signal(8, 21).unwrap();
        let xx = SymmetricMatrix::outer(x.entries());
        let ensembles = [
            gen_gaussian_ensemble(8, 30, 2).unwrap(),
            gen_structured_illumination_ensemble(8, 2, 2, true).unwrap(),
            gen_structured_illumination_ensemble(8, 2, 2, false).unwrap(),
        ];
        for e in &ensembles {
            let q = e.quadratic_measurements(x.entries()).unwrap();
            let forms = e.quadratic_forms(&xx).unwrap();
            for i in 0..e.m() {
                let direct = crate::linalg::trace_inner(&e.lifted_form(i), &xx).unwrap();
                assert!((q[i] - direct).abs() < 1e-10);
                assert!((forms[i] - direct).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn trace_gram_matches_dense_products() {
        let e = gen_structured_illumination_ensemble(4, 2, 9, true).unwrap();
        let t = e.trace_gram();
        for i in 0..e.m() {
            for j in 0..e.m() {
                let direct =
                    crate::linalg::trace_inner(&e.lifted_form(i), &e.lifted_form(j)).unwrap();
                assert!((t[[i, j]] - direct).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn weighted_lift_sum_matches_dense_sum() {
        let e = gen_gaussian_ensemble(5, 12, 4).unwrap();
        let coeffs: Vec<f64> = (0..12)
            .map(|i| if i % 3 == 0 { 0.0 } else { i as f64 - 5.5 })
            .collect();
        let got = e.weighted_lift_sum(&coeffs).unwrap();
        let mut want = SymmetricMatrix::zeros(5);
        for (i, &c) in coeffs.iter().enumerate() {
            want = want.lin_comb(1.0, &e.lifted_form(i), c).unwrap();
        }
        assert!(got.lin_comb(1.0, &want, -1.0).unwrap().frobenius_norm() < 1e-10);
    }

    #[test]
    fn chi1sq_median_matches_reference_value() {
        // Reference median from an independent inverse-c.d.f. implementation.
        let tau = chi1sq_quantile(0.5).unwrap();
        assert!((tau - 0.454_936_423_119_572).abs() < 1e-8, "tau = {tau}");
        // Rounded to four places this is the customary 0.4549; the often
        // quoted 0.4550 is 6.4e-5 away.
        assert!((tau - 0.4550).abs() < 1e-4);
        assert!(chi1sq_quantile(1e-12).unwrap() < 1e-8);
        assert!(chi1sq_quantile(0.0).is_err());
        assert!(chi1sq_quantile(1.0).is_err());
    }

    #[test]
    fn chi1sq_quantile_matches_monte_carlo() {
        // Empirical 0.9-quantile of 10⁷ squared normals; the binomial
        // standard error in probability maps to ~4e-3 in τ.
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 10_000_000usize;
        let mut samples: Vec<f64> = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * z
            })
            .collect();
        let k = (0.9 * n as f64) as usize;
        let (_, &mut q, _) = samples.select_nth_unstable_by(k, |a, b| a.total_cmp(b));
        let density = chi1sq_first_moment_density(q) / q;
        let se = (0.9f64 * 0.1 / n as f64).sqrt() / density;
        let tau = chi1sq_quantile(0.9).unwrap();
        assert!((tau - q).abs() < 3.0 * se, "tau {tau} mc {q} se {se}");
    }

    #[test]
    fn centroid_golden_values() {
        let (lo, hi) = interval_centroids(0.4550).unwrap();
        assert!((lo - 0.1427).abs() < 1e-3, "{lo}");
        assert!((hi - 1.8573).abs() < 1e-3, "{hi}");
    }

    #[test]
    fn centroids_match_closed_form() {
        // ∫₀^τ x f(x) dx = erf(√(τ/2)) − √(2τ/π) e^{−τ/2}
        for &tau in &[0.1, 0.455, 1.0, 3.0] {
            let (p, q) = chi1sq_cdf_pair(tau);
            let mass = statrs::function::erf::erf((tau / 2.0).sqrt())
                - (2.0 * tau / PI).sqrt() * (-tau / 2.0).exp();
            let (lo, hi) = interval_centroids(tau).unwrap();
            assert!((lo - mass / p).abs() < 1e-6);
            assert!((hi - (1.0 - mass) / q).abs() < 1e-6);
        }
    }

    #[test]
    fn centroids_total_expectation() {
        for &tau in &[0.1, 0.455, 1.0, 3.0] {
            let p = chi1sq_cdf_pair(tau).0;
            let (lo, hi) = interval_centroids(tau).unwrap();
            assert!((p * lo + (1.0 - p) * hi - 1.0).abs() < 1e-5);
        }
        let (lo, _) = interval_centroids(40.0).unwrap();
        assert!((lo - 1.0).abs() < 1e-6);
    }

    #[test]
    fn sigma_for_snr_cases() {
        let e = SensingEnsemble::from_rows(EnsembleKind::Gaussian, 0, array![[1.0]], None).unwrap();
        let x = SignalVector::from(vec![1.0]);
        assert!((sigma_for_snr(&e, &x, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((sigma_for_snr(&e, &x, 20.0).unwrap() - 0.1).abs() < 1e-15);
        assert!(sigma_for_snr(&e, &SignalVector::from(vec![0.0]), 10.0).is_err());

        let e = gen_gaussian_ensemble(4, 40, 8).unwrap();
        let x = gen_unit_sphere_signal(4, 8).unwrap();
        let sigma = sigma_for_snr(&e, &x, 30.0).unwrap();
        let q = e.quadratic_measurements(x.entries()).unwrap();
        let snr = q.iter().map(|v| v * v).sum::<f64>() / (40.0 * sigma * sigma);
        assert!((10.0 * snr.log10() - 30.0).abs() < 1e-9);
    }

    #[test]
    fn encode_simple_cases() {
        let e = SensingEnsemble::from_rows(EnsembleKind::Gaussian, 0, array![[1.0]], None).unwrap();
        let y = encode_binary(&e, &SignalVector::from(vec![1.0]), 0.5, 0.0, 0).unwrap();
        assert_eq!(y.codes, vec![1]);
        // q = τ exactly encodes as -1.
        let y = encode_binary(&e, &SignalVector::from(vec![1.0]), 1.0, 0.0, 0).unwrap();
        assert_eq!(y.codes, vec![-1]);

        let e = gen_gaussian_ensemble(6, 50, 1).unwrap();
        let x = gen_unit_sphere_signal(6, 1).unwrap().scaled(1e-3);
        let y = encode_binary(&e, &x, 0.455, 0.0, 0).unwrap();
        assert!(y.codes.iter().all(|&c| c == -1));
        assert!(encode_binary(&e, &x, 0.0, 0.0, 0).is_err());
        assert!(encode_binary(&e, &x, 0.4, -1.0, 0).is_err());
    }

    #[test]
    fn equiprobable_threshold_balances_codes() {
        let tau = chi1sq_quantile(0.5).unwrap();
        let e = gen_gaussian_ensemble(8, 100_000, 5).unwrap();
        let x = gen_unit_sphere_signal(8, 5).unwrap();
        let y = encode_binary(&e, &x, tau, 0.0, 0).unwrap();
        let frac = y.codes.iter().filter(|&&c| c == 1).count() as f64 / 1e5;
        assert!((frac - 0.5).abs() < 0.01, "{frac}");
        let med = empirical_median_threshold(&e, &x).unwrap();
        assert!((med - 0.4550).abs() < 0.01, "{med}");
    }

    #[test]
    fn median_threshold_small_cases() {
        let e = SensingEnsemble::from_rows(
            EnsembleKind::Gaussian,
            0,
            array![[1.0], [3f64.sqrt()]],
            None,
        )
        .unwrap();
        let x = SignalVector::from(vec![1.0]);
        assert!((empirical_median_threshold(&e, &x).unwrap() - 2.0).abs() < 1e-12);
        let e = SensingEnsemble::from_rows(
            EnsembleKind::Gaussian,
            0,
            array![[2.0], [2.0], [2.0]],
            None,
        )
        .unwrap();
        assert_eq!(empirical_median_threshold(&e, &x).unwrap(), 4.0);
        let e = SensingEnsemble::from_rows(EnsembleKind::Gaussian, 0, array![[2.0]], None).unwrap();
        assert!(empirical_median_threshold(&e, &x).is_err());
    }

    proptest! {
        #[test]
        fn encoding_is_sign_blind_and_noiseless_seed_free(seed in 0u64..1000, s2 in 0u64..1000) {
            let e = gen_gaussian_ensemble(5, 40, seed).unwrap();
            let x = gen_unit_sphere_signal(5, seed + 1).unwrap();
            let a = encode_binary(&e, &x, 0.455, 0.0, seed).unwrap();
            let b = encode_binary(&e, &x.negated(), 0.455, 0.0, s2).unwrap();
            prop_assert_eq!(&a.codes, &b.codes);
            let na = encode_binary(&e, &x, 0.455, 0.3, s2).unwrap();
            let nb = encode_binary(&e, &x.negated(), 0.455, 0.3, s2).unwrap();
            prop_assert_eq!(na.codes, nb.codes);
        }
    }
}
