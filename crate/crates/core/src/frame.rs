use crate::error::GeometryError;
use crate::geometry::Intrinsics;
use crate::image::{DepthMap, RgbImage};

/// One input image with its pseudo-depth.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: usize,
    pub timestamp: f64,
    pub rgb: RgbImage,
    pub depth: DepthMap,
    pub intrinsics: Intrinsics,
}

impl Frame {
    pub fn new(
        index: usize,
        timestamp: f64,
        rgb: RgbImage,
        depth: DepthMap,
        intrinsics: Intrinsics,
    ) -> Result<Self, GeometryError> {
        let dims = intrinsics.dims();
        for actual in [(rgb.width(), rgb.height()), (depth.width(), depth.height())] {
            if actual != dims {
                return Err(GeometryError::DimensionMismatch { expected: dims, actual });
            }
        }
        Ok(Self {
            index,
            timestamp,
            rgb,
            depth,
            intrinsics,
        })
    }
}
