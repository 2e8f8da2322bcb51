use ndarray::{Array2, Array3};

use crate::error::{Error, Result};

/// A `(height, width, channels)` feature map from an image or video encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap(pub Array3<f64>);

impl FeatureMap {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self(Array3::zeros((height, width, channels)))
    }

    pub fn from_elem(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self(Array3::from_elem((height, width, channels), value))
    }

    pub fn height(&self) -> usize {
        self.0.dim().0
    }

    pub fn width(&self) -> usize {
        self.0.dim().1
    }

    pub fn channels(&self) -> usize {
        self.0.dim().2
    }

    pub fn check(&self, height: usize, width: usize, channels: usize, what: &str) -> Result<()> {
        if self.0.dim() != (height, width, channels) {
            return Err(Error::Shape(format!(
                "{what}: expected {height}x{width}x{channels}, got {:?}",
                self.0.dim()
            )));
        }
        if self.0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(what.to_string()));
        }
        Ok(())
    }

    /// Row-major flatten of the spatial grid: `(height * width, channels)`.
    pub fn flatten(&self) -> Array2<f64> {
        let (h, w, c) = self.0.dim();
        self.0
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((h * w, c))
            .expect("contiguous map")
    }
}

/// Non-overlapping `sigma x sigma` mean pooling over height and width.
pub fn avg_pool_2d(map: &FeatureMap, sigma: usize) -> Result<FeatureMap> {
    let (h, w, c) = map.0.dim();
    if sigma == 0 || h % sigma != 0 || w % sigma != 0 {
        return Err(Error::Config(format!("pool size {sigma} does not divide a {h}x{w} map")));
    }
    let (oh, ow) = (h / sigma, w / sigma);
    let norm = 1.0 / (sigma * sigma) as f64;
    let mut out = Array3::zeros((oh, ow, c));
    for i in 0..oh {
        for j in 0..ow {
            for di in 0..sigma {
                for dj in 0..sigma {
                    let src = map.0.slice(ndarray::s![i * sigma + di, j * sigma + dj, ..]);
                    let mut dst = out.slice_mut(ndarray::s![i, j, ..]);
                    dst += &src;
                }
            }
            out.slice_mut(ndarray::s![i, j, ..]).mapv_inplace(|v| v * norm);
        }
    }
    Ok(FeatureMap(out))
}
