//! Dense image containers and PNG import/export.

use std::path::Path;

use crate::error::IoError;

/// Row-major `width × height` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

pub type RgbImage = Grid<[f64; 3]>;
pub type GrayImage = Grid<f64>;

impl<T: Clone> Grid<T> {
    pub fn new(width: usize, height: usize, fill: T) -> Self {
        Self {
            width,
            height,
            data: vec![fill; width * height],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height, "grid data length mismatch");
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn get_mut(&mut self, x: usize, y: usize) -> &mut T {
        &mut self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn same_shape<U>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }
}

/// Depth in meters with an explicit validity mask. Valid entries are finite
/// and strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    depth: Grid<f64>,
    valid: Grid<bool>,
}

impl DepthMap {
    /// Builds a depth map; any non-finite or non-positive value is marked invalid.
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Self {
        let valid = values.iter().map(|d| d.is_finite() && *d > 0.0).collect();
        let depth = values
            .into_iter()
            .map(|d| if d.is_finite() && d > 0.0 { d } else { 0.0 })
            .collect();
        Self {
            depth: Grid::from_vec(width, height, depth),
            valid: Grid::from_vec(width, height, valid),
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Option<f64>) -> Self {
        let grid = Grid::from_fn(width, height, |x, y| f(x, y).unwrap_or(f64::NAN));
        Self::from_values(width, height, grid.into_vec())
    }

    pub fn invalid(width: usize, height: usize) -> Self {
        Self {
            depth: Grid::new(width, height, 0.0),
            valid: Grid::new(width, height, false),
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.depth.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.depth.height()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let i = self.depth.index(x, y);
        self.valid.data()[i].then(|| self.depth.data()[i])
    }

    #[inline]
    pub fn get_index(&self, i: usize) -> Option<f64> {
        self.valid.data()[i].then(|| self.depth.data()[i])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.data().iter().filter(|v| **v).count()
    }

    pub fn values(&self) -> &Grid<f64> {
        &self.depth
    }

    pub fn mask(&self) -> &Grid<bool> {
        &self.valid
    }

    /// Point-samples the map on the coarse grid of `divisor`: coarse pixel
    /// `(u, v)` reads fine pixel `(divisor·u + divisor/2, divisor·v + divisor/2)`,
    /// matching [`crate::geometry::Intrinsics::coarse`].
    pub fn downsample(&self, divisor: usize) -> DepthMap {
        let off = divisor / 2;
        let w = self.width() / divisor;
        let h = self.height() / divisor;
        DepthMap::from_fn(w, h, |u, v| self.get(divisor * u + off, divisor * v + off))
    }
}

/// Point-samples an arbitrary grid on the coarse grid of `divisor`.
pub fn downsample_grid<T: Clone>(grid: &Grid<T>, divisor: usize) -> Grid<T> {
    let off = divisor / 2;
    Grid::from_fn(grid.width() / divisor, grid.height() / divisor, |u, v| {
        grid.get(divisor * u + off, divisor * v + off).clone()
    })
}

/// TUM depth PNG convention: 5000 counts per meter, 0 = invalid.
pub const DEPTH_PNG_SCALE: f64 = 5000.0;

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn save_rgb_png(img: &RgbImage, path: &Path) -> Result<(), IoError> {
    let mut buf = image::RgbImage::new(img.width() as u32, img.height() as u32);
    for (i, px) in buf.pixels_mut().enumerate() {
        let c = img.data()[i];
        *px = image::Rgb([to_u8(c[0]), to_u8(c[1]), to_u8(c[2])]);
    }
    buf.save(path).map_err(|e| IoError::image(path, e))
}

pub fn save_gray_png(img: &GrayImage, path: &Path) -> Result<(), IoError> {
    let mut buf = image::GrayImage::new(img.width() as u32, img.height() as u32);
    for (i, px) in buf.pixels_mut().enumerate() {
        *px = image::Luma([to_u8(img.data()[i])]);
    }
    buf.save(path).map_err(|e| IoError::image(path, e))
}

/// Writes a 16-bit depth PNG at [`DEPTH_PNG_SCALE`]; invalid pixels and
/// depths beyond the 16-bit range are written as 0.
pub fn save_depth_png(depth: &DepthMap, path: &Path) -> Result<(), IoError> {
    let mut buf: image::ImageBuffer<image::Luma<u16>, Vec<u16>> =
        image::ImageBuffer::new(depth.width() as u32, depth.height() as u32);
    for (i, px) in buf.pixels_mut().enumerate() {
        let counts = depth
            .get_index(i)
            .map(|d| (d * DEPTH_PNG_SCALE).round())
            .filter(|c| *c <= u16::MAX as f64)
            .unwrap_or(0.0);
        *px = image::Luma([counts as u16]);
    }
    buf.save(path).map_err(|e| IoError::image(path, e))
}

pub fn load_rgb_png(path: &Path) -> Result<RgbImage, IoError> {
    let img = image::open(path).map_err(|e| IoError::image(path, e))?.to_rgb8();
    let (w, h) = img.dimensions();
    let data = img
        .pixels()
        .map(|p| {
            [
                p[0] as f64 / 255.0,
                p[1] as f64 / 255.0,
                p[2] as f64 / 255.0,
            ]
        })
        .collect();
    Ok(Grid::from_vec(w as usize, h as usize, data))
}

pub fn load_depth_png(path: &Path) -> Result<DepthMap, IoError> {
    let img = image::open(path).map_err(|e| IoError::image(path, e))?.to_luma16();
    let (w, h) = img.dimensions();
    let values = img
        .pixels()
        .map(|p| {
            if p[0] == 0 {
                f64::NAN
            } else {
                p[0] as f64 / DEPTH_PNG_SCALE
            }
        })
        .collect();
    Ok(DepthMap::from_values(w as usize, h as usize, values))
}
