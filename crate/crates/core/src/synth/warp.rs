//! Grid-based non-rigid deformation.
//!
//! Anchors sit on a regular grid with spacing `s` (anchor `i` at `x = i*s`,
//! the last row/column reaching at least the image border). Each anchor carries
//! a displacement; the dense field is the bilinear interpolation of the anchor
//! displacements and the output samples the input at `p + d(p)`, bilinearly,
//! with coordinates clamped to the image.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::{Error, ImageF, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorGrid {
    spacing: usize,
    nx: usize,
    ny: usize,
    /// Row-major (dx, dy) per anchor.
    offsets: Vec<(f64, f64)>,
}

fn anchors_along(len: usize, spacing: usize) -> usize {
    if len <= 1 {
        1
    } else {
        (len - 1).div_ceil(spacing) + 1
    }
}

impl AnchorGrid {
    pub fn uniform(width: usize, height: usize, spacing: usize, offset: (f64, f64)) -> Self {
        let (nx, ny) = (anchors_along(width, spacing), anchors_along(height, spacing));
        Self { spacing, nx, ny, offsets: vec![offset; nx * ny] }
    }

    /// Gaussian anchor displacements with standard deviation `sigma`, clamped
    /// to `+-3 sigma`.
    pub fn random<R: Rng + ?Sized>(
        width: usize,
        height: usize,
        spacing: usize,
        sigma: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(format!("warp sigma {sigma}: {e}")))?;
        let mut grid = Self::uniform(width, height, spacing, (0.0, 0.0));
        let limit = 3.0 * sigma;
        for o in &mut grid.offsets {
            let dx = normal.sample(rng).clamp(-limit, limit);
            let dy = normal.sample(rng).clamp(-limit, limit);
            *o = (dx, dy);
        }
        Ok(grid)
    }

    pub fn anchor_count(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    fn cell(coord: usize, spacing: usize, n: usize) -> (usize, f64) {
        if n == 1 {
            return (0, 0.0);
        }
        let i = (coord / spacing).min(n - 2);
        (i, (coord - i * spacing) as f64 / spacing as f64)
    }

    pub fn displacement_at(&self, x: usize, y: usize) -> (f64, f64) {
        let (i, fx) = Self::cell(x, self.spacing, self.nx);
        let (j, fy) = Self::cell(y, self.spacing, self.ny);
        let at = |a: usize, b: usize| self.offsets[b.min(self.ny - 1) * self.nx + a.min(self.nx - 1)];
        let (d00, d10, d01, d11) = (at(i, j), at(i + 1, j), at(i, j + 1), at(i + 1, j + 1));
        let interp = |a: f64, b: f64, c: f64, d: f64| {
            let top = lerp(a, b, fx);
            let bottom = lerp(c, d, fx);
            lerp(top, bottom, fy)
        };
        (interp(d00.0, d10.0, d01.0, d11.0), interp(d00.1, d10.1, d01.1, d11.1))
    }
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

fn sample_bilinear(img: &ImageF, x: f64, y: f64, c: usize) -> f64 {
    let x = x.clamp(0.0, (img.width() - 1) as f64);
    let y = y.clamp(0.0, (img.height() - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(img.width() - 1), (y0 + 1).min(img.height() - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let top = lerp(img.get(x0, y0, c), img.get(x1, y0, c), fx);
    let bottom = lerp(img.get(x0, y1, c), img.get(x1, y1, c), fx);
    lerp(top, bottom, fy)
}

/// Resamples `img` through the dense field interpolated from `grid`.
pub fn warp_with_grid(img: &ImageF, grid: &AnchorGrid) -> Result<ImageF> {
    let expected = (anchors_along(img.width(), grid.spacing), anchors_along(img.height(), grid.spacing));
    if expected != (grid.nx, grid.ny) {
        return Err(Error::shape("anchor grid does not match image size"));
    }
    let ch = img.channels();
    let mut data = Vec::with_capacity(img.data().len());
    for y in 0..img.height() {
        for x in 0..img.width() {
            let (dx, dy) = grid.displacement_at(x, y);
            for c in 0..ch {
                data.push(sample_bilinear(img, x as f64 + dx, y as f64 + dy, c));
            }
        }
    }
    Ok(ImageF::from_raw(img.width(), img.height(), ch, data))
}

/// Random smooth deformation of `img`. `sigma = 0` returns the input
/// unchanged and consumes no randomness.
pub fn nonrigid_warp<R: Rng + ?Sized>(
    img: &ImageF,
    grid_spacing: usize,
    sigma: f64,
    rng: &mut R,
) -> Result<ImageF> {
    if grid_spacing < 2 {
        return Err(Error::invalid(format!("grid spacing must be >= 2, got {grid_spacing}")));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("warp sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 || img.is_empty() {
        return Ok(img.clone());
    }
    let grid = AnchorGrid::random(img.width(), img.height(), grid_spacing, sigma, rng)?;
    warp_with_grid(img, &grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_image(seed: u64, w: usize, h: usize, c: usize) -> ImageF {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageF::from_fn(w, h, c, |_, _, _| rng.random::<f64>())
    }

    #[test]
    fn zero_sigma_is_identity() {
        let img = random_image(1, 31, 17, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(nonrigid_warp(&img, 8, 0.0, &mut rng).unwrap(), img);
        // a zero-displacement grid through the full resampling path is exact too
        let grid = AnchorGrid::uniform(31, 17, 8, (0.0, 0.0));
        assert_eq!(warp_with_grid(&img, &grid).unwrap(), img);
    }

    #[test]
    fn uniform_integer_offset_translates_interior() {
        let img = random_image(2, 40, 30, 3);
        let (dx, dy) = (3i64, -2i64);
        let grid = AnchorGrid::uniform(40, 30, 7, (dx as f64, dy as f64));
        let out = warp_with_grid(&img, &grid).unwrap();
        for y in 2..28 {
            for x in 0..37 {
                let (sx, sy) = ((x as i64 + dx) as usize, (y as i64 + dy) as usize);
                assert_eq!(out.pixel(x, y), img.pixel(sx, sy), "at ({x}, {y})");
            }
        }
    }

    #[test]
    fn seeded_warp_is_deterministic() {
        let img = random_image(3, 64, 64, 3);
        let run = || nonrigid_warp(&img, 16, 2.5, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        let a = run();
        assert_eq!(a, run());
        assert_ne!(a, img);
    }

    #[test]
    fn displacements_are_clamped() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let grid = AnchorGrid::random(128, 128, 16, 1.5, &mut rng).unwrap();
        assert_eq!(grid.anchor_count(), (9, 9));
        for y in 0..128 {
            for x in 0..128 {
                let (dx, dy) = grid.displacement_at(x, y);
                assert!(dx.abs() <= 4.5 && dy.abs() <= 4.5);
            }
        }
    }

    #[test]
    fn field_interpolates_between_anchors() {
        let mut grid = AnchorGrid::uniform(9, 1, 8, (0.0, 0.0));
        grid.offsets[1] = (4.0, 0.0);
        assert_eq!(grid.displacement_at(0, 0), (0.0, 0.0));
        assert_eq!(grid.displacement_at(4, 0), (2.0, 0.0));
        assert_eq!(grid.displacement_at(8, 0), (4.0, 0.0));
    }

    #[test]
    fn warp_output_stays_in_input_range() {
        let img = random_image(5, 50, 40, 1);
        let out = nonrigid_warp(&img, 10, 3.0, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn rejects_bad_parameters() {
        let img = random_image(6, 8, 8, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(nonrigid_warp(&img, 1, 1.0, &mut rng).is_err());
        assert!(nonrigid_warp(&img, 4, -1.0, &mut rng).is_err());
    }
}
