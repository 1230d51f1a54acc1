//! Patch-wise image reconstruction: 8-bit grayscale PGM I/O, the 8×8 patch
//! grid and per-patch sign resolution.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{GrayImage, ImageEncoder, ImageReader};
use ndarray::Array1;

use crate::error::{Error, Result};

pub const PATCH: usize = 8;

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let img = reader
        .decode()
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
    Ok(img.into_luma8())
}

/// Writes a binary (P5) graymap.
pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    PnmEncoder::new(BufWriter::new(file))
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(
            img.as_raw(),
            img.width(),
            img.height(),
            image::ExtendedColorType::L8,
        )
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))
}

/// Non-overlapping 8×8 tiling of a `height × width` image, in raster order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchGrid {
    pub height: usize,
    pub width: usize,
}

impl PatchGrid {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0
            || width == 0
            || !height.is_multiple_of(PATCH)
            || !width.is_multiple_of(PATCH)
        {
            return Err(Error::invalid(format!(
                "image dimensions {height}×{width} are not positive multiples of {PATCH}"
            )));
        }
        Ok(Self { height, width })
    }

    pub fn for_image(img: &GrayImage) -> Result<Self> {
        Self::new(img.height() as usize, img.width() as usize)
    }

    pub fn rows(&self) -> usize {
        self.height / PATCH
    }

    pub fn cols(&self) -> usize {
        self.width / PATCH
    }

    pub fn count(&self) -> usize {
        self.rows() * self.cols()
    }

    fn origin(&self, k: usize) -> (usize, usize) {
        ((k / self.cols()) * PATCH, (k % self.cols()) * PATCH)
    }

    /// Patch `k` as a length-64 vector, row-major within the patch.
    pub fn extract(&self, img: &GrayImage, k: usize) -> Array1<f64> {
        let (r0, c0) = self.origin(k);
        Array1::from_shape_fn(PATCH * PATCH, |p| {
            let (r, c) = (r0 + p / PATCH, c0 + p % PATCH);
            f64::from(img.get_pixel(c as u32, r as u32).0[0])
        })
    }

    /// Reassembles patch vectors, rounding and clamping to `[0, 255]`.
    pub fn assemble(&self, patches: &[Array1<f64>]) -> Result<GrayImage> {
        if patches.len() != self.count() {
            return Err(Error::DimensionMismatch {
                expected: self.count(),
                got: patches.len(),
            });
        }
        let mut img = GrayImage::new(self.width as u32, self.height as u32);
        for (k, patch) in patches.iter().enumerate() {
            let (r0, c0) = self.origin(k);
            for (p, &v) in patch.iter().enumerate() {
                let (r, c) = (r0 + p / PATCH, c0 + p % PATCH);
                img.put_pixel(
                    c as u32,
                    r as u32,
                    image::Luma([v.round().clamp(0.0, 255.0) as u8]),
                );
            }
        }
        Ok(img)
    }
}

/// Negative mass `Σ min(v, 0)²` of a de-normalized patch.
fn negative_energy(patch: &Array1<f64>) -> f64 {
    patch.iter().map(|&v| v.min(0.0).powi(2)).sum()
}

/// Squared mismatch between the borders of patch `k` and its already
/// resolved left and upper neighbours.
fn border_disagreement(grid: &PatchGrid, patches: &[Array1<f64>], k: usize, sign: f64) -> f64 {
    let cols = grid.cols();
    let cur = &patches[k];
    let mut d = 0.0;
    if !k.is_multiple_of(cols) {
        let left = &patches[k - 1];
        for r in 0..PATCH {
            d += (sign * cur[r * PATCH] - left[r * PATCH + PATCH - 1]).powi(2);
        }
    }
    if k >= cols {
        let up = &patches[k - cols];
        for c in 0..PATCH {
            d += (sign * cur[c] - up[(PATCH - 1) * PATCH + c]).powi(2);
        }
    }
    d
}

/// Fixes the global sign of each patch in raster order. The first patch
/// takes the sign with less negative mass; every later patch takes the sign
/// that agrees best with its resolved left/upper borders (ties fall back
/// to the negative-mass rule).
pub fn resolve_signs(grid: &PatchGrid, patches: &mut [Array1<f64>]) -> Result<()> {
    if patches.len() != grid.count() {
        return Err(Error::DimensionMismatch {
            expected: grid.count(),
            got: patches.len(),
        });
    }
    for k in 0..patches.len() {
        let keep = border_disagreement(grid, patches, k, 1.0);
        let flip = border_disagreement(grid, patches, k, -1.0);
        let should_flip = if keep != flip {
            flip < keep
        } else {
            negative_energy(&patches[k]) > negative_energy(&patches[k].mapv(|v| -v))
        };
        if should_flip {
            patches[k].mapv_inplace(|v| -v);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_image(h: u32, w: u32) -> GrayImage {
        GrayImage::from_fn(w, h, |c, r| image::Luma([((3 * r + 5 * c) % 256) as u8]))
    }

    #[test]
    fn grid_counts_and_validation() {
        let g = PatchGrid::new(64, 64).unwrap();
        assert_eq!(g.count(), 64);
        assert_eq!(PatchGrid::new(256, 256).unwrap().count(), 1024);
        assert_eq!(PatchGrid::new(16, 40).unwrap().count(), 10);
        assert!(PatchGrid::new(60, 64).is_err());
        assert!(PatchGrid::new(0, 8).is_err());
    }

    #[test]
    fn extract_assemble_round_trip() {
        let img = gradient_image(24, 32);
        let g = PatchGrid::for_image(&img).unwrap();
        let patches: Vec<_> = (0..g.count()).map(|k| g.extract(&img, k)).collect();
        assert_eq!(patches[0][1], f64::from(img.get_pixel(1, 0).0[0]));
        assert_eq!(patches[1][8], f64::from(img.get_pixel(8, 1).0[0]));
        assert_eq!(g.assemble(&patches).unwrap(), img);
    }

    #[test]
    fn assemble_clamps() {
        let g = PatchGrid::new(8, 8).unwrap();
        let mut p = Array1::from_elem(64, 300.0);
        p[0] = -4.0;
        p[1] = 12.4;
        let img = g.assemble(&[p]).unwrap();
        assert_eq!(img.get_pixel(0, 0).0[0], 0);
        assert_eq!(img.get_pixel(1, 0).0[0], 12);
        assert_eq!(img.get_pixel(2, 0).0[0], 255);
    }

    #[test]
    fn signs_are_recovered_for_random_flips() {
        let img = gradient_image(32, 32);
        let g = PatchGrid::for_image(&img).unwrap();
        let truth: Vec<_> = (0..g.count()).map(|k| g.extract(&img, k)).collect();
        let mut flipped: Vec<_> = truth
            .iter()
            .enumerate()
            .map(|(k, p)| {
                if k % 3 == 0 {
                    p.mapv(|v| -v)
                } else {
                    p.clone()
                }
            })
            .collect();
        resolve_signs(&g, &mut flipped).unwrap();
        assert_eq!(flipped, truth);
    }

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.pgm");
        let img = gradient_image(16, 24);
        write_pgm(&path, &img).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..2], b"P5");
        assert_eq!(read_pgm(&path).unwrap(), img);
    }
}
