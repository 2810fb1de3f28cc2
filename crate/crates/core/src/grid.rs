//! Uniform closed grid on the phenotype interval `[0, 1]`, composite
//! trapezoid quadrature and pointwise evaluation of model functions.
//!
//! The same grid type discretizes both the tumour trait `x` and the immune
//! trait `y`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PhenotypeGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl PhenotypeGrid {
    /// Builds `n_points` equally spaced nodes with `node_0 = 0` and
    /// `node_{N-1} = 1`, and trapezoid weights (`Δ/2` at both ends).
    pub fn new(n_points: usize) -> Result<Self> {
        if n_points < 3 {
            return Err(Error::InvalidGrid(n_points));
        }
        let last = (n_points - 1) as f64;
        let spacing = 1.0 / last;
        let nodes: Vec<f64> = (0..n_points).map(|i| i as f64 / last).collect();
        let mut weights = vec![spacing; n_points];
        weights[0] = 0.5 * spacing;
        weights[n_points - 1] = 0.5 * spacing;
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.len() - 1) as f64
    }

    pub fn node(&self, index: usize) -> f64 {
        self.nodes[index]
    }

    /// Index of the node closest to `x` (clamped to `[0, 1]`).
    pub fn nearest_index(&self, x: f64) -> usize {
        let last = self.len() - 1;
        let pos = (x.clamp(0.0, 1.0) * last as f64).round();
        (pos as usize).min(last)
    }

    /// `Σ wᵢ·vᵢ`, the discrete counterpart of `∫₀¹ v`.
    pub fn quad(&self, values: &[f64]) -> Result<f64> {
        self.check_len("quadrature values", values.len())?;
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid("values", format!("non-finite entry {bad}")));
        }
        Ok(self.quad_unchecked(values))
    }

    pub(crate) fn quad_unchecked(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    pub(crate) fn check_len(&self, what: &'static str, found: usize) -> Result<()> {
        if found != self.len() {
            return Err(Error::Dimension {
                what,
                expected: self.len(),
                found,
            });
        }
        Ok(())
    }
}

/// A scalar function on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionSpec {
    /// Coefficients in ascending degree: `c₀ + c₁x + c₂x² + …`.
    Polynomial(Vec<f64>),
    /// Samples aligned with the nodes of a grid.
    Tabulated(Vec<f64>),
}

impl FunctionSpec {
    pub fn constant(value: f64) -> Self {
        FunctionSpec::Polynomial(vec![value])
    }

    pub fn polynomial(coeffs: &[f64]) -> Self {
        FunctionSpec::Polynomial(coeffs.to_vec())
    }

    /// Values at every grid node.
    pub fn evaluate(&self, grid: &PhenotypeGrid) -> Result<Vec<f64>> {
        match self {
            FunctionSpec::Polynomial(c) => Ok(grid.nodes().iter().map(|&x| horner(c, x)).collect()),
            FunctionSpec::Tabulated(samples) => {
                grid.check_len("tabulated function", samples.len())?;
                Ok(samples.clone())
            }
        }
    }

    /// Value at an arbitrary phenotype. Tabulated functions are linearly
    /// interpolated on their own uniform sample spacing.
    pub fn value_at(&self, x: f64) -> f64 {
        match self {
            FunctionSpec::Polynomial(c) => horner(c, x),
            FunctionSpec::Tabulated(samples) => {
                let last = samples.len().saturating_sub(1);
                if last == 0 {
                    return samples.first().copied().unwrap_or(0.0);
                }
                let pos = x.clamp(0.0, 1.0) * last as f64;
                let i = (pos.floor() as usize).min(last - 1);
                let frac = pos - i as f64;
                samples[i] * (1.0 - frac) + samples[i + 1] * frac
            }
        }
    }

    /// Adds `slope·x` to the function.
    pub fn tilted(&self, slope: f64) -> Self {
        match self {
            FunctionSpec::Polynomial(c) => {
                let mut c = c.clone();
                if c.len() < 2 {
                    c.resize(2, 0.0);
                }
                c[1] += slope;
                FunctionSpec::Polynomial(c)
            }
            FunctionSpec::Tabulated(samples) => {
                let last = (samples.len().max(2) - 1) as f64;
                FunctionSpec::Tabulated(
                    samples
                        .iter()
                        .enumerate()
                        .map(|(i, v)| v + slope * i as f64 / last)
                        .collect(),
                )
            }
        }
    }
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Index of the largest entry; ties go to the smallest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
