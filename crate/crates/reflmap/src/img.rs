//! Shared in-memory representation for decoded HDR images.

use crate::{Error, Result};

/// Caps applied by the decoders so hostile headers cannot demand huge
/// allocations before any pixel data has been seen.
pub const MAX_DIM: usize = 1 << 16;
pub const MAX_TEXELS: usize = 1 << 24;

/// Linear radiance image, rows stored top to bottom.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearImage {
    pub width: usize,
    pub height: usize,
    /// Row-major RGB radiance, `width * height` texels.
    pub texels: Vec<[f64; 3]>,
}

impl LinearImage {
    pub fn new(width: usize, height: usize, texels: Vec<[f64; 3]>) -> Result<Self> {
        check_dims(width, height)?;
        if texels.len() != width * height {
            return Err(Error::Argument(format!(
                "texel count {} does not match {}x{}",
                texels.len(),
                width,
                height
            )));
        }
        Ok(LinearImage {
            width,
            height,
            texels,
        })
    }

    #[inline]
    pub fn texel(&self, x: usize, y: usize) -> [f64; 3] {
        self.texels[y * self.width + x]
    }
}

pub(crate) fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::Argument("zero-area image".into()));
    }
    if width > MAX_DIM || height > MAX_DIM || width * height > MAX_TEXELS {
        return Err(Error::Format(format!(
            "image dimensions {width}x{height} exceed supported size"
        )));
    }
    Ok(())
}
