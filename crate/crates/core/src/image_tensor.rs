//! RGB image payload: `height × width × 3` values in [0, 1].

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor4};

/// An RGB raster with interleaved channels, values normalized to [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor {
    width: usize,
    height: usize,
    /// Row-major HWC data, length `height * width * 3`.
    data: Vec<f32>,
}

impl ImageTensor {
    pub fn zeros(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "image dims must be positive");
        Self {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Shape(format!(
                "image dims must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height * 3 {
            return Err(Error::Shape(format!(
                "image data length {} does not match {width}x{height}x3",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
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
    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    #[inline]
    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Mean luminance (average of the three channels) at a pixel.
    #[inline]
    pub fn luminance(&self, x: usize, y: usize) -> f32 {
        let [r, g, b] = self.pixel(x, y);
        (r + g + b) / 3.0
    }

    pub fn clamp_unit(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    pub fn all_in_unit_range(&self) -> bool {
        self.data.iter().all(|&v| (0.0..=1.0).contains(&v))
    }

    /// Mean squared difference against another image of the same size.
    pub fn mse(&self, other: &Self) -> Result<f64> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::Shape(format!(
                "mse: image sizes differ, {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| {
                let d = (a - b) as f64;
                d * d
            })
            .sum();
        Ok(sum / self.data.len() as f64)
    }

    /// Packs images of identical size into an `(n, 3, h, w)` batch tensor.
    pub fn batch_to_tensor4<S: Scalar>(images: &[&ImageTensor]) -> Result<Tensor4<S>> {
        let first = images
            .first()
            .ok_or_else(|| Error::Parameter("cannot batch zero images".into()))?;
        let (w, h) = (first.width, first.height);
        for (i, img) in images.iter().enumerate() {
            if img.width != w || img.height != h {
                return Err(Error::Shape(format!(
                    "batch image {i} is {}x{}, expected {w}x{h}",
                    img.width, img.height
                )));
            }
        }
        let mut t = Tensor4::zeros([images.len(), 3, h, w]);
        for (n, img) in images.iter().enumerate() {
            for c in 0..3 {
                for y in 0..h {
                    for x in 0..w {
                        *t.at_mut(n, c, y, x) = S::from_f64(img.data[(y * w + x) * 3 + c] as f64);
                    }
                }
            }
        }
        Ok(t)
    }

    pub fn to_tensor4<S: Scalar>(&self) -> Tensor4<S> {
        Self::batch_to_tensor4(&[self]).expect("single image batch")
    }

    /// Extracts sample `n` of an `(n, 3, h, w)` tensor, clamping to [0, 1].
    pub fn from_tensor4<S: Scalar>(t: &Tensor4<S>, n: usize) -> Result<ImageTensor> {
        if t.c() != 3 {
            return Err(Error::Shape(format!(
                "expected 3 channels, tensor has {}",
                t.c()
            )));
        }
        if n >= t.n() {
            return Err(Error::Shape(format!(
                "sample {n} out of range for batch of {}",
                t.n()
            )));
        }
        let (h, w) = (t.h(), t.w());
        let mut img = ImageTensor::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                let px = [
                    (t.at(n, 0, y, x).to_f64() as f32).clamp(0.0, 1.0),
                    (t.at(n, 1, y, x).to_f64() as f32).clamp(0.0, 1.0),
                    (t.at(n, 2, y, x).to_f64() as f32).clamp(0.0, 1.0),
                ];
                img.set_pixel(x, y, px);
            }
        }
        Ok(img)
    }
}
