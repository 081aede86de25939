//! The finite measure space `(Ω, μ)` and the center `Z ≅ L_∞(Ω)`.
//!
//! On a finite atomic `Ω` every function is measurable and bounded, so
//! `L_∞(Ω)` and `L_0(Ω)` coincide and (o)-convergence is pointwise
//! convergence on the atoms.

use std::ops::{Add, Mul};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute slack for pointwise order comparisons.
pub const ORDER_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureSpace {
    labels: Vec<String>,
    weights: Vec<f64>,
}

impl MeasureSpace {
    pub fn new(labels: Vec<String>, weights: Vec<f64>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Usage("measure space needs at least one atom".into()));
        }
        if labels.len() != weights.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} atom labels but {} weights",
                labels.len(),
                weights.len()
            )));
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Usage(format!(
                "atom {:?} has weight {}, must be finite and > 0",
                labels[i], weights[i]
            )));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::Usage(format!("duplicate atom label {l:?}")));
            }
        }
        Ok(MeasureSpace { labels, weights })
    }

    /// `m` atoms with unit weight, labelled `w0, w1, …`.
    pub fn uniform(m: usize) -> Result<Self> {
        Self::new((0..m).map(|i| format!("w{i}")).collect(), vec![1.0; m])
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::Usage(format!("unknown atom {label:?}")))
    }

    /// The one-atom space `{ω_i}` with its original weight.
    pub fn restrict(&self, i: usize) -> MeasureSpace {
        MeasureSpace {
            labels: vec![self.labels[i].clone()],
            weights: vec![self.weights[i]],
        }
    }
}

/// An element of the center: one scalar per atom.
#[derive(Clone, Debug)]
pub struct CenterElement<T = f64> {
    space: Arc<MeasureSpace>,
    values: Vec<T>,
}

/// Values of `Φ(x)` for non-Hermitian `x` are complex.
pub type ComplexCenter = CenterElement<Complex64>;

impl<T: PartialEq> PartialEq for CenterElement<T> {
    fn eq(&self, other: &Self) -> bool {
        same_space(&self.space, &other.space) && self.values == other.values
    }
}

fn same_space(a: &Arc<MeasureSpace>, b: &Arc<MeasureSpace>) -> bool {
    Arc::ptr_eq(a, b) || a == b
}

impl<T: Copy> CenterElement<T> {
    pub fn new(space: Arc<MeasureSpace>, values: Vec<T>) -> Result<Self> {
        if values.len() != space.len() {
            return Err(Error::ShapeMismatch(format!(
                "center element has {} values for {} atoms",
                values.len(),
                space.len()
            )));
        }
        Ok(CenterElement { space, values })
    }

    pub fn constant(space: Arc<MeasureSpace>, v: T) -> Self {
        let values = vec![v; space.len()];
        CenterElement { space, values }
    }

    pub fn from_fn(space: Arc<MeasureSpace>, f: impl FnMut(usize) -> T) -> Self {
        let values = (0..space.len()).map(f).collect();
        CenterElement { space, values }
    }

    pub fn space(&self) -> &Arc<MeasureSpace> {
        &self.space
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn get(&self, i: usize) -> T {
        self.values[i]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> CenterElement<U> {
        CenterElement {
            space: self.space.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with<U: Copy, V: Copy>(
        &self,
        other: &CenterElement<U>,
        f: impl Fn(T, U) -> V,
    ) -> Result<CenterElement<V>> {
        if !same_space(&self.space, &other.space) {
            return Err(Error::StructureMismatch(
                "center elements over different measure spaces".into(),
            ));
        }
        Ok(CenterElement {
            space: self.space.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }
}

impl<T: Copy + Add<Output = T>> CenterElement<T> {
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }
}

impl<T: Copy + Mul<Output = T>> CenterElement<T> {
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }
}

impl CenterElement<f64> {
    pub fn abs(&self) -> Self {
        self.map(f64::abs)
    }

    pub fn powf(&self, e: f64) -> Self {
        self.map(|v| v.powf(e))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    /// `f ≤ g` pointwise, with [`ORDER_TOL`] slack.
    pub fn leq(&self, other: &Self) -> Result<bool> {
        Ok(self
            .zip_with(other, |a, b| a <= b + ORDER_TOL)?
            .values
            .iter()
            .all(|&b| b))
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `max_ω |f(ω) − g(ω)|`.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        Ok(self
            .zip_with(other, |a, b| (a - b).abs())?
            .values
            .iter()
            .copied()
            .fold(0.0, f64::max))
    }

    pub fn to_complex(&self) -> ComplexCenter {
        self.map(|v| Complex64::new(v, 0.0))
    }
}

impl CenterElement<Complex64> {
    pub fn abs(&self) -> CenterElement<f64> {
        self.map(|v| v.norm())
    }

    pub fn re(&self) -> CenterElement<f64> {
        self.map(|v| v.re)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        Ok(self.sub(other)?.abs().values.iter().copied().fold(0.0, f64::max))
    }
}

/// Pointwise supremum of a finite non-empty sequence.
pub fn center_sup(fs: &[CenterElement<f64>]) -> Result<CenterElement<f64>> {
    let (first, rest) = fs
        .split_first()
        .ok_or_else(|| Error::Usage("supremum of an empty sequence".into()))?;
    rest.iter()
        .try_fold(first.clone(), |acc, f| acc.zip_with(f, f64::max))
}

/// Outcome of an (o)-convergence test.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OConvergence {
    pub converged: bool,
    /// `max_ω |f_n(ω) − target(ω)|` for each `n`.
    pub residuals: Vec<f64>,
}

/// (o)-convergence of `fs` to `target`, judged by the last residual.
pub fn o_converges(
    fs: &[CenterElement<f64>],
    target: &CenterElement<f64>,
    tol: f64,
) -> Result<OConvergence> {
    let residuals = fs
        .iter()
        .map(|f| f.max_abs_diff(target))
        .collect::<Result<Vec<_>>>()?;
    let converged = residuals.last().is_some_and(|&r| r <= tol);
    Ok(OConvergence {
        converged,
        residuals,
    })
}
