//! Plain floating-point grayscale images.

/// Row-major grayscale image; pixel `(i, j)` is column `i`, row `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

/// One image per camera.
pub type ImageTriplet = [Image; 3];

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for j in 0..height {
            for i in 0..width {
                data.push(f(i, j));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.width + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.width + i] = v;
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Copies the `size`x`size` window whose top-left pixel is `(i0, j0)`;
    /// pixels outside the source read as `fill`.
    pub fn crop(&self, i0: i64, j0: i64, size: usize, fill: f64) -> Image {
        Image::from_fn(size, size, |i, j| {
            let (si, sj) = (i0 + i as i64, j0 + j as i64);
            if si >= 0 && sj >= 0 && (si as usize) < self.width && (sj as usize) < self.height {
                self.get(si as usize, sj as usize)
            } else {
                fill
            }
        })
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}
