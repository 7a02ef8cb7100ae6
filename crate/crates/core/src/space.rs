//! Points and boxes of the parametric input domain.

use serde::{Deserialize, Serialize};
use std::ops::Deref;

use crate::error::{BsvError, Result};

/// A point in the n-dimensional design space, in problem units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DesignPoint(pub Vec<f64>);

impl DesignPoint {
    pub fn new(coords: impl Into<Vec<f64>>) -> Self {
        DesignPoint(coords.into())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl Deref for DesignPoint {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for DesignPoint {
    fn from(v: Vec<f64>) -> Self {
        DesignPoint(v)
    }
}

impl From<&[f64]> for DesignPoint {
    fn from(v: &[f64]) -> Self {
        DesignPoint(v.to_vec())
    }
}

/// Closed interval `[lo, hi]` with `lo < hi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(BsvError::InvalidParameter(format!(
                "interval requires finite lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Interval { lo, hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

/// Axis-aligned box bounding the design space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignSpace {
    pub bounds: Vec<Interval>,
}

impl DesignSpace {
    pub fn new(bounds: Vec<Interval>) -> Self {
        DesignSpace { bounds }
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && self.bounds.iter().zip(x).all(|(b, &v)| b.contains(v))
    }

    pub fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(BsvError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Maps a point of the unit cube onto the box.
    pub fn from_unit(&self, u: &[f64]) -> DesignPoint {
        self.bounds
            .iter()
            .zip(u)
            .map(|(b, &v)| b.lo + v * b.width())
            .collect::<Vec<_>>()
            .into()
    }

    /// Maps a point of the box onto the unit cube.
    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        self.bounds
            .iter()
            .zip(x)
            .map(|(b, &v)| (v - b.lo) / b.width())
            .collect()
    }
}
