//! Reconstruction quality measures.

use image::GrayImage;
use ndarray::ArrayView1;

use crate::error::{check_dim, Error, Result};
use crate::measurement::{BinaryMeasurements, SensingEnsemble, SignalVector};

/// Reported in place of `+∞` for exact reconstructions, so CSV columns
/// stay numeric.
pub const INFINITE_DB: f64 = 300.0;

/// Summary of one reconstruction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub srer_db: f64,
    pub consistency: f64,
    pub psnr_db: Option<f64>,
    pub ssim: Option<f64>,
}

pub(crate) fn srer_raw(x_true: ArrayView1<f64>, x_hat: ArrayView1<f64>) -> Result<f64> {
    check_dim(x_true.len(), x_hat.len())?;
    let energy = x_true.dot(&x_true);
    if energy == 0.0 {
        return Err(Error::invalid("SRER is undefined for a zero ground truth"));
    }
    let err = |alpha: f64| -> f64 {
        x_true
            .iter()
            .zip(x_hat.iter())
            .map(|(&t, &h)| {
                let d = alpha * h - t;
                d * d
            })
            .sum()
    };
    let best = err(1.0).min(err(-1.0));
    if best < 1e-15 * energy {
        return Ok(INFINITE_DB);
    }
    Ok(10.0 * (energy / best).log10())
}

/// Sign-invariant signal-to-reconstruction error ratio in dB.
pub fn srer(x_true: &SignalVector, x_hat: &SignalVector) -> Result<f64> {
    srer_raw(x_true.entries(), x_hat.entries())
}

/// Fraction of codes that `x_hat` reproduces with strict inequality.
pub fn consistency(
    y: &BinaryMeasurements,
    ensemble: &SensingEnsemble,
    x_hat: &SignalVector,
) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::invalid("consistency needs at least one measurement"));
    }
    check_dim(ensemble.m(), y.len())?;
    let q = ensemble.quadratic_measurements(x_hat.entries())?;
    let agree = q
        .iter()
        .zip(&y.codes)
        .filter(|(&qi, &c)| f64::from(c) * (qi - y.tau) > 0.0)
        .count();
    Ok(agree as f64 / y.len() as f64)
}

fn check_same_shape(a: &GrayImage, b: &GrayImage) -> Result<()> {
    if a.dimensions() != b.dimensions() {
        return Err(Error::invalid(format!(
            "image shapes differ: {:?} vs {:?}",
            a.dimensions(),
            b.dimensions()
        )));
    }
    Ok(())
}

/// `20 log₁₀(255 √N / ‖I − Î‖_F)` with `N` the pixel count.
pub fn psnr(truth: &GrayImage, estimate: &GrayImage) -> Result<f64> {
    check_same_shape(truth, estimate)?;
    let sq: f64 = truth
        .as_raw()
        .iter()
        .zip(estimate.as_raw())
        .map(|(&a, &b)| {
            let d = f64::from(a) - f64::from(b);
            d * d
        })
        .sum();
    if sq == 0.0 {
        return Ok(INFINITE_DB);
    }
    let pixels = truth.as_raw().len() as f64;
    Ok(20.0 * (255.0 * pixels.sqrt() / sq.sqrt()).log10())
}

const SSIM_WINDOW: u32 = 8;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const SSIM_RANGE: f64 = 255.0;

/// Mean SSIM over all 8×8 windows at stride 1, uniform weights,
/// population (1/N) moments.
pub fn ssim(truth: &GrayImage, estimate: &GrayImage) -> Result<f64> {
    check_same_shape(truth, estimate)?;
    let (w, h) = truth.dimensions();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::invalid("SSIM needs images of at least 8x8 pixels"));
    }
    let c1 = (SSIM_K1 * SSIM_RANGE).powi(2);
    let c2 = (SSIM_K2 * SSIM_RANGE).powi(2);
    let count = f64::from(SSIM_WINDOW * SSIM_WINDOW);
    let a = truth.as_raw();
    let b = estimate.as_raw();
    let mut total = 0.0;
    let mut windows = 0usize;
    for top in 0..=(h - SSIM_WINDOW) {
        for left in 0..=(w - SSIM_WINDOW) {
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for r in top..top + SSIM_WINDOW {
                let base = (r * w) as usize;
                for c in left..left + SSIM_WINDOW {
                    let pa = f64::from(a[base + c as usize]);
                    let pb = f64::from(b[base + c as usize]);
                    sa += pa;
                    sb += pb;
                    saa += pa * pa;
                    sbb += pb * pb;
                    sab += pa * pb;
                }
            }
            let ma = sa / count;
            let mb = sb / count;
            let va = saa / count - ma * ma;
            let vb = sbb / count - mb * mb;
            let cov = sab / count - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            windows += 1;
        }
    }
    Ok(total / windows as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::{encode_binary, gen_gaussian_ensemble, gen_unit_sphere_signal};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: u32, h: u32, seed: u64) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GrayImage::from_fn(w, h, |_, _| image::Luma([rng.random::<u8>()]))
    }

    #[test]
    fn srer_cases() {
        let x = gen_unit_sphere_signal(10, 1).unwrap();
        assert_eq!(srer(&x, &x).unwrap(), INFINITE_DB);
        assert_eq!(srer(&x, &x.negated()).unwrap(), INFINITE_DB);
        let zero = SignalVector::from(vec![0.0; 10]);
        assert!(srer(&x, &zero).unwrap().abs() < 1e-12);
        assert!(srer(&zero, &x).is_err());
        let noisy = SignalVector::new(x.entries().to_owned() * 0.9);
        assert!((srer(&x, &noisy).unwrap() - 20.0).abs() < 1e-10);
    }

    #[test]
    fn consistency_cases() {
        let e = gen_gaussian_ensemble(6, 60, 2).unwrap();
        let x = gen_unit_sphere_signal(6, 2).unwrap();
        let y = encode_binary(&e, &x, 0.455, 0.0, 0).unwrap();
        assert_eq!(consistency(&y, &e, &x).unwrap(), 1.0);
        let flipped = BinaryMeasurements {
            codes: y.codes.iter().map(|c| -c).collect(),
            ..y.clone()
        };
        assert_eq!(consistency(&flipped, &e, &x).unwrap(), 0.0);
        let other = gen_unit_sphere_signal(6, 3).unwrap();
        let c = consistency(&y, &e, &other).unwrap();
        assert_eq!(c, consistency(&y, &e, &other.negated()).unwrap());
        assert_eq!((c * 60.0).fract(), 0.0);
        let empty = BinaryMeasurements::new(vec![], 0.455, 0.0, 0).unwrap();
        assert!(consistency(&empty, &e, &x).is_err());
    }

    #[test]
    fn psnr_cases() {
        let a = random_image(8, 8, 1);
        assert_eq!(psnr(&a, &a).unwrap(), INFINITE_DB);
        let black = GrayImage::new(8, 8);
        let white = GrayImage::from_pixel(8, 8, image::Luma([255]));
        assert!(psnr(&black, &white).unwrap().abs() < 1e-12);
        assert!(psnr(&black, &GrayImage::new(8, 9)).is_err());
    }

    #[test]
    fn psnr_matches_scalar_loop() {
        let a = random_image(8, 8, 2);
        let b = random_image(8, 8, 3);
        let mut sq = 0.0;
        for y in 0..8 {
            for x in 0..8 {
                let d = a.get_pixel(x, y)[0] as f64 - b.get_pixel(x, y)[0] as f64;
                sq += d * d;
            }
        }
        let want = 20.0 * (255.0 * 8.0 / sq.sqrt()).log10();
        assert!((psnr(&a, &b).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn psnr_falls_with_noise() {
        let base = GrayImage::from_fn(32, 32, |x, y| {
            image::Luma([((x * 5 + y * 3) % 200 + 20) as u8])
        });
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut last = f64::INFINITY;
        for amp in [2i32, 8, 32] {
            let noisy = GrayImage::from_fn(32, 32, |x, y| {
                let v = base.get_pixel(x, y)[0] as i32 + rng.random_range(-amp..=amp);
                image::Luma([v.clamp(0, 255) as u8])
            });
            let p = psnr(&base, &noisy).unwrap();
            assert!(p < last);
            last = p;
        }
    }

    /// Windowed SSIM written out directly, with centered second moments.
    fn ssim_oracle(a: &GrayImage, b: &GrayImage) -> f64 {
        let (w, h) = a.dimensions();
        let c1 = (0.01f64 * 255.0).powi(2);
        let c2 = (0.03f64 * 255.0).powi(2);
        let mut vals = Vec::new();
        for top in 0..=h - 8 {
            for left in 0..=w - 8 {
                let pa: Vec<f64> = (0..64)
                    .map(|k| a.get_pixel(left + k % 8, top + k / 8)[0] as f64)
                    .collect();
                let pb: Vec<f64> = (0..64)
                    .map(|k| b.get_pixel(left + k % 8, top + k / 8)[0] as f64)
                    .collect();
                let ma = pa.iter().sum::<f64>() / 64.0;
                let mb = pb.iter().sum::<f64>() / 64.0;
                let va = pa.iter().map(|v| (v - ma).powi(2)).sum::<f64>() / 64.0;
                let vb = pb.iter().map(|v| (v - mb).powi(2)).sum::<f64>() / 64.0;
                let cov = pa
                    .iter()
                    .zip(&pb)
                    .map(|(x, y)| (x - ma) * (y - mb))
                    .sum::<f64>()
                    / 64.0;
                vals.push(
                    ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                        / ((ma * ma + mb * mb + c1) * (va + vb + c2)),
                );
            }
        }
        vals.iter().sum::<f64>() / vals.len() as f64
    }

    #[test]
    fn ssim_cases() {
        let a = random_image(12, 10, 4);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let black = GrayImage::new(8, 8);
        let white = GrayImage::from_pixel(8, 8, image::Luma([255]));
        let got = ssim(&black, &white).unwrap();
        assert!((got - ssim_oracle(&black, &white)).abs() < 1e-12);
        let c1 = (0.01f64 * 255.0).powi(2);
        assert!((got - c1 / (255.0f64.powi(2) + c1)).abs() < 1e-12);
        assert!(ssim(&GrayImage::new(7, 8), &GrayImage::new(7, 8)).is_err());
        assert!(ssim(&black, &GrayImage::new(9, 8)).is_err());
    }

    #[test]
    fn ssim_matches_oracle_on_random_pairs() {
        let a = random_image(16, 12, 5);
        let b = random_image(16, 12, 6);
        assert!((ssim(&a, &b).unwrap() - ssim_oracle(&a, &b)).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn ssim_symmetric_and_bounded(s1 in 0u64..10_000, s2 in 0u64..10_000) {
            let a = random_image(10, 9, s1);
            let b = random_image(10, 9, s2);
            let ab = ssim(&a, &b).unwrap();
            let ba = ssim(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&ab));
            if s1 != s2 {
                prop_assert!(ab < 1.0 - 1e-12);
            }
        }

        #[test]
        fn srer_sign_invariant(seed in 0u64..10_000) {
            let x = gen_unit_sphere_signal(7, seed).unwrap();
            let h = gen_unit_sphere_signal(7, seed + 1).unwrap();
            prop_assert_eq!(srer(&x, &h).unwrap(), srer(&x, &h.negated()).unwrap());
        }
    }
}
