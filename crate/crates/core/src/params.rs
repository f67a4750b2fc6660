//! Flat parameter vectors with named layout.
//!
//! All meta-updates operate on [`ParamVector`]s: models unpack them into
//! named tensors for a forward pass and pack gradients back into the same
//! layout.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl LayoutEntry {
    pub fn extent(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Ordered `(name, shape, offset)` table; entries are contiguous.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Layout {
    entries: Vec<LayoutEntry>,
}

impl Layout {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a block and returns its offset.
    pub fn push(&mut self, name: impl Into<String>, shape: &[usize]) -> usize {
        let offset = self.total();
        self.entries.push(LayoutEntry {
            name: name.into(),
            shape: shape.to_vec(),
            offset,
        });
        offset
    }

    pub fn entries(&self) -> &[LayoutEntry] {
        &self.entries
    }

    pub fn total(&self) -> usize {
        self.entries.last().map_or(0, |e| e.offset + e.extent())
    }

    pub fn get(&self, name: &str) -> Option<&LayoutEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Checks offsets are contiguous from zero.
    pub fn validate(&self) -> Result<()> {
        let mut next = 0;
        for e in &self.entries {
            if e.offset != next {
                return Err(Error::LayoutMismatch(format!(
                    "entry {} starts at {} but previous block ends at {}",
                    e.name, e.offset, next
                )));
            }
            next += e.extent();
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    layout: Arc<Layout>,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn new(layout: Arc<Layout>, values: Vec<f64>) -> Result<Self> {
        layout.validate()?;
        if layout.total() != values.len() {
            return Err(Error::LayoutMismatch(format!(
                "layout covers {} values, got {}",
                layout.total(),
                values.len()
            )));
        }
        Ok(Self { layout, values })
    }

    pub fn zeros(layout: Arc<Layout>) -> Self {
        let values = vec![0.0; layout.total()];
        Self { layout, values }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.layout.clone())
    }

    /// Same layout, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.layout.clone(), values)
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.layout, &other.layout) || self.layout == other.layout
    }

    pub fn check_layout(&self, other: &Self) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::LayoutMismatch(format!(
                "{} entries ({} values) vs {} entries ({} values)",
                self.layout.entries.len(),
                self.len(),
                other.layout.entries.len(),
                other.len()
            )))
        }
    }

    /// Values of one named block.
    pub fn block(&self, name: &str) -> Option<&[f64]> {
        let e = self.layout.get(name)?;
        Some(&self.values[e.offset..e.offset + e.extent()])
    }

    pub fn block_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let e = self.layout.get(name)?.clone();
        Some(&mut self.values[e.offset..e.offset + e.extent()])
    }

    /// One named block as a tensor.
    pub fn tensor(&self, name: &str) -> Result<Tensor> {
        let e = self
            .layout
            .get(name)
            .ok_or_else(|| Error::LayoutMismatch(format!("no block named {name}")))?;
        Tensor::new(
            e.shape.clone(),
            self.values[e.offset..e.offset + e.extent()].to_vec(),
        )
    }

    /// `self - other`.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        param_axpy(-1.0, other, self)
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            layout: self.layout.clone(),
            values: self.values.iter().map(|v| a * v).collect(),
        }
    }

    /// In-place `self += a * x`.
    pub fn axpy_assign(&mut self, a: f64, x: &Self) -> Result<()> {
        self.check_layout(x)?;
        for (y, xv) in self.values.iter_mut().zip(&x.values) {
            *y += a * xv;
        }
        Ok(())
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.check_layout(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum())
    }

    pub fn norm2(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// `a * x + y`, elementwise.
pub fn param_axpy(a: f64, x: &ParamVector, y: &ParamVector) -> Result<ParamVector> {
    x.check_layout(y)?;
    Ok(ParamVector {
        layout: y.layout.clone(),
        values: x
            .values
            .iter()
            .zip(&y.values)
            .map(|(xv, yv)| a * xv + yv)
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two(values: Vec<f64>) -> ParamVector {
        let mut l = Layout::new();
        l.push("w", &[values.len()]);
        ParamVector::new(Arc::new(l), values).unwrap()
    }

    #[test]
    fn axpy_examples() {
        let x = two(vec![1.0, 2.0]);
        let y = two(vec![3.0, 4.0]);
        assert_eq!(param_axpy(1.0, &x, &y).unwrap().values(), &[4.0, 6.0]);
        assert_eq!(param_axpy(0.0, &x, &y).unwrap().values(), y.values());
        assert_eq!(param_axpy(-1.0, &x, &x).unwrap().values(), &[0.0, 0.0]);
    }

    #[test]
    fn layout_mismatch() {
        let x = two(vec![1.0, 2.0]);
        let mut l = Layout::new();
        l.push("w", &[1]);
        l.push("b", &[1]);
        let y = ParamVector::new(Arc::new(l), vec![0.0, 0.0]).unwrap();
        assert!(matches!(param_axpy(1.0, &x, &y), Err(Error::LayoutMismatch(_))));
    }

    #[test]
    fn extents_must_cover_values() {
        let mut l = Layout::new();
        l.push("w", &[2, 3]);
        l.push("b", &[3]);
        assert_eq!(l.total(), 9);
        assert!(ParamVector::new(Arc::new(l.clone()), vec![0.0; 8]).is_err());
        let p = ParamVector::new(Arc::new(l), (0..9).map(f64::from).collect()).unwrap();
        assert_eq!(p.block("b").unwrap(), &[6.0, 7.0, 8.0]);
        assert_eq!(p.tensor("w").unwrap().shape(), &[2, 3]);
    }
}
