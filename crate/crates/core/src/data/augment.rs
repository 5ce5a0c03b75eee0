use rand::Rng;

use super::LabelMask;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Element of the dihedral group of the square: an optional horizontal
/// flip followed by `rot` quarter turns counter-clockwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct D4 {
    pub flip: bool,
    pub rot: u8,
}

impl D4 {
    pub const IDENTITY: D4 = D4 {
        flip: false,
        rot: 0,
    };

    /// All eight elements; index `i` has `flip = i ≥ 4`, `rot = i % 4`.
    pub fn all() -> [D4; 8] {
        std::array::from_fn(|i| D4::from_index(i as u8))
    }

    pub fn from_index(i: u8) -> D4 {
        D4 {
            flip: i >= 4,
            rot: i % 4,
        }
    }

    pub fn index(self) -> u8 {
        self.rot + if self.flip { 4 } else { 0 }
    }

    /// Destination of pixel `(i, j)` in an `n × n` grid.
    fn map(self, n: usize, i: usize, j: usize) -> (usize, usize) {
        let (mut i, mut j) = (i, j);
        if self.flip {
            j = n - 1 - j;
        }
        for _ in 0..self.rot {
            (i, j) = (n - 1 - j, i);
        }
        (i, j)
    }

    /// Transforms a row-major `n × n` grid.
    pub fn apply<T: Copy>(self, values: &[T], n: usize) -> Vec<T> {
        assert_eq!(values.len(), n * n, "D4 needs a square grid");
        let mut out = values.to_vec();
        for i in 0..n {
            for j in 0..n {
                let (a, b) = self.map(n, i, j);
                out[a * n + b] = values[i * n + j];
            }
        }
        out
    }

    pub fn apply_image(self, image: &Tensor) -> Result<Tensor> {
        let s = image.shape();
        if s.len() != 2 || s[0] != s[1] {
            return Err(Error::Shape(format!(
                "augmentation needs a square [H, W] image, got {s:?}"
            )));
        }
        Tensor::new(self.apply(image.data(), s[0]), s)
    }

    pub fn apply_mask(self, mask: &LabelMask) -> Result<LabelMask> {
        if mask.height() != mask.width() {
            return Err(Error::Shape("augmentation needs a square mask".into()));
        }
        LabelMask::new(
            mask.height(),
            mask.width(),
            mask.num_classes() as u8,
            self.apply(mask.labels(), mask.height()),
        )
    }
}

/// Applies one uniformly drawn D4 element to the image and its mask.
pub fn augment<R: Rng + ?Sized>(
    image: &Tensor,
    mask: &LabelMask,
    rng: &mut R,
) -> Result<(Tensor, LabelMask)> {
    let g = D4::from_index(rng.random_range(0..8));
    if image.shape() != [mask.height(), mask.width()] {
        return Err(Error::Shape("image and mask extents differ".into()));
    }
    Ok((g.apply_image(image)?, g.apply_mask(mask)?))
}
