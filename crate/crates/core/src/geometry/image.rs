use nalgebra::{Matrix3, Vector3};

use crate::error::{ensure, Error, Result};
use crate::tensor::Tensor;

/// Single-channel float image with a per-pixel validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
    mask: Vec<bool>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        ensure!(
            data.len() == width * height,
            Shape,
            "{width}x{height} image needs {} values, got {}",
            width * height,
            data.len()
        );
        Ok(GrayImage {
            width,
            height,
            mask: vec![true; data.len()],
            data,
        })
    }

    pub fn with_mask(width: usize, height: usize, data: Vec<f32>, mask: Vec<bool>) -> Result<Self> {
        ensure!(mask.len() == width * height, Shape, "mask does not match image extents");
        let mut img = GrayImage::new(width, height, data)?;
        img.mask = mask;
        Ok(img)
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        GrayImage {
            width,
            height,
            data: vec![value; width * height],
            mask: vec![true; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        GrayImage::new(width, height, data).expect("extents match")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn valid(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    /// Bilinear sample at continuous pixel coordinates (pixel centres at
    /// integers). `None` outside `[0, w-1] x [0, h-1]` or next to an invalid pixel.
    #[inline]
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<f32> {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        if !(x >= 0.0 && y >= 0.0 && x <= max_x && y <= max_y) {
            return None;
        }
        let x0 = (x.floor() as usize).min(self.width - 1);
        let y0 = (y.floor() as usize).min(self.height - 1);
        let fx = (x - x0 as f64) as f32;
        let fy = (y - y0 as f64) as f32;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let w = self.width;
        let idx = [y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1];
        let wts = [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy];
        let mut acc = 0.0f32;
        for (&i, &wt) in idx.iter().zip(&wts) {
            if wt > 0.0 {
                if !self.mask[i] {
                    return None;
                }
                acc += wt * self.data[i];
            }
        }
        Some(acc)
    }

    /// Copy of a rectangular window; pixels outside the image are invalid.
    pub fn crop(&self, x0: isize, y0: isize, width: usize, height: usize) -> GrayImage {
        let mut data = vec![0.0; width * height];
        let mut mask = vec![false; width * height];
        for y in 0..height {
            let sy = y0 + y as isize;
            if sy < 0 || sy >= self.height as isize {
                continue;
            }
            for x in 0..width {
                let sx = x0 + x as isize;
                if sx < 0 || sx >= self.width as isize {
                    continue;
                }
                let i = sy as usize * self.width + sx as usize;
                data[y * width + x] = self.data[i];
                mask[y * width + x] = self.mask[i];
            }
        }
        GrayImage {
            width,
            height,
            data,
            mask,
        }
    }

    pub fn all_valid(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    /// `1 x h x w` network input.
    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::from_vec(&[1, self.height, self.width], self.data.clone()).expect("image extents")
    }
}

fn check_invertible(h: &Matrix3<f64>) -> Result<()> {
    let det = h.determinant();
    let scale = h.abs().max().powi(3);
    if !(det.is_finite() && det.abs() > 1e-12 * scale.max(f64::MIN_POSITIVE)) {
        return Err(Error::Degenerate(format!("homography is singular (det = {det:e})")));
    }
    Ok(())
}

/// Warp a window of the output grid: output pixel `(x0 + u, y0 + v)` samples
/// `src` at `H * (x0 + u, y0 + v, 1)`. Out-of-bounds samples are 0 and masked.
///
/// Whole-image warps and patch extraction for training both go through here.
pub fn warp_region(src: &GrayImage, h: &Matrix3<f64>, x0: isize, y0: isize, width: usize, height: usize) -> Result<GrayImage> {
    check_invertible(h)?;
    let mut data = vec![0.0f32; width * height];
    let mut mask = vec![false; width * height];
    for v in 0..height {
        let py = (y0 + v as isize) as f64;
        // Incremental evaluation of H * (x, y, 1) along the row.
        let row = h * Vector3::new(x0 as f64, py, 1.0);
        let col = h.column(0);
        for u in 0..width {
            let uf = u as f64;
            let qx = row.x + uf * col[0];
            let qy = row.y + uf * col[1];
            let qz = row.z + uf * col[2];
            if qz.abs() <= f64::EPSILON {
                continue;
            }
            if let Some(val) = src.sample_bilinear(qx / qz, qy / qz) {
                data[v * width + u] = val;
                mask[v * width + u] = true;
            }
        }
    }
    GrayImage::with_mask(width, height, data, mask)
}

/// Warp `src` into the output grid of the same size.
pub fn warp_image(src: &GrayImage, h: &Matrix3<f64>) -> Result<GrayImage> {
    warp_region(src, h, 0, 0, src.width(), src.height())
}
