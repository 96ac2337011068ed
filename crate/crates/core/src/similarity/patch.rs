use crate::error::{ensure, Result};
use crate::geometry::GrayImage;
use crate::tensor::Tensor;

/// Square patch of intensities with a validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    side: usize,
    data: Vec<f32>,
    mask: Vec<bool>,
}

impl Patch {
    pub fn new(side: usize, data: Vec<f32>) -> Result<Self> {
        let mask = vec![true; data.len()];
        Patch::with_mask(side, data, mask)
    }

    pub fn with_mask(side: usize, data: Vec<f32>, mask: Vec<bool>) -> Result<Self> {
        ensure!(side > 0, Shape, "patch side must be positive");
        ensure!(
            data.len() == side * side && mask.len() == side * side,
            Shape,
            "{side}x{side} patch needs {} values and mask entries, got {} and {}",
            side * side,
            data.len(),
            mask.len()
        );
        Ok(Patch { side, data, mask })
    }

    pub fn from_image(img: &GrayImage) -> Result<Self> {
        ensure!(
            img.width() == img.height(),
            Shape,
            "patch must be square, got {}x{}",
            img.width(),
            img.height()
        );
        Patch::with_mask(img.width(), img.data().to_vec(), img.mask().to_vec())
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn all_valid(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    /// `1 x side x side` network input.
    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::from_vec(&[1, self.side, self.side], self.data.clone()).expect("square patch")
    }
}
