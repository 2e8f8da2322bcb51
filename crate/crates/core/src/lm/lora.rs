use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Backbone matrices an adapter can attach to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdapterTarget {
    Query,
    Key,
    Value,
    Output,
    FfnUp,
    FfnDown,
}

impl AdapterTarget {
    pub const ALL: [AdapterTarget; 6] = [
        AdapterTarget::Query,
        AdapterTarget::Key,
        AdapterTarget::Value,
        AdapterTarget::Output,
        AdapterTarget::FfnUp,
        AdapterTarget::FfnDown,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AdapterTarget::Query => "wq",
            AdapterTarget::Key => "wk",
            AdapterTarget::Value => "wv",
            AdapterTarget::Output => "wo",
            AdapterTarget::FfnUp => "w1",
            AdapterTarget::FfnDown => "w2",
        }
    }
}

/// Low-rank pair: `A` is `(r, d_in)`, `B` is `(d_out, r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Adapter {
    pub a: Array2<f64>,
    pub b: Array2<f64>,
}

impl Adapter {
    /// Gaussian `A`, zero `B`: the adapted map starts equal to the base map.
    pub fn new(d_in: usize, d_out: usize, rank: usize, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0, (1.0 / d_in as f64).sqrt()).expect("valid std");
        Self { a: Array2::from_shape_fn((rank, d_in), |_| normal.sample(rng)), b: Array2::zeros((d_out, rank)) }
    }

    pub fn zeros(d_in: usize, d_out: usize, rank: usize) -> Self {
        Self { a: Array2::zeros((rank, d_in)), b: Array2::zeros((d_out, rank)) }
    }

    pub fn rank(&self) -> usize {
        self.a.nrows()
    }

    pub fn parameter_count(&self) -> usize {
        self.a.len() + self.b.len()
    }
}

/// `alpha / r`.
pub fn adapter_scale(alpha: f64, rank: usize) -> f64 {
    alpha / rank as f64
}

/// `y = x W^T + (alpha / r) * x A^T B^T`.
pub fn adapter_forward(x: &Array2<f64>, weight: &Array2<f64>, adapter: &Adapter, alpha: f64) -> Result<Array2<f64>> {
    let rank = adapter.rank();
    if rank == 0 || adapter.b.ncols() != rank {
        return Err(Error::Shape(format!("adapter A has rank {rank}, B has {} columns", adapter.b.ncols())));
    }
    if x.ncols() != weight.ncols() || adapter.a.ncols() != weight.ncols() || adapter.b.nrows() != weight.nrows() {
        return Err(Error::Shape(format!(
            "input {:?}, base {:?}, A {:?}, B {:?} do not chain",
            x.dim(),
            weight.dim(),
            adapter.a.dim(),
            adapter.b.dim()
        )));
    }
    if alpha <= 0.0 {
        return Err(Error::InvalidInput("adapter alpha must be positive".into()));
    }
    let scale = adapter_scale(alpha, rank);
    Ok(x.dot(&weight.t()) + x.dot(&adapter.a.t()).dot(&adapter.b.t()) * scale)
}
