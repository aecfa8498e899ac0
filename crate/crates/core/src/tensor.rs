//! Dense n-dimensional array, the value type of the layer engine.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major tensor. Shapes of rank 1..=3 are what the layer engine
/// actually uses ([batch], [batch, features], [batch, channels, time]).
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![S::zero(); shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: S) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<S>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if expect != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} needs {} values, got {}",
                shape,
                expect,
                data.len()
            )));
        }
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!("zero extent in shape {:?}", shape)));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn scalar(value: S) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
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
    pub fn data(&self) -> &[S] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    /// Extent of dimension `i`.
    #[inline]
    pub fn dim(&self, i: usize) -> usize {
        self.shape[i]
    }

    #[inline]
    pub fn at2(&self, i: usize, j: usize) -> S {
        debug_assert_eq!(self.shape.len(), 2);
        self.data[i * self.shape[1] + j]
    }

    #[inline]
    pub fn at3(&self, i: usize, j: usize, k: usize) -> S {
        debug_assert_eq!(self.shape.len(), 3);
        self.data[(i * self.shape[1] + j) * self.shape[2] + k]
    }

    #[inline]
    pub fn set2(&mut self, i: usize, j: usize, v: S) {
        let cols = self.shape[1];
        self.data[i * cols + j] = v;
    }

    #[inline]
    pub fn set3(&mut self, i: usize, j: usize, k: usize, v: S) {
        let (d1, d2) = (self.shape[1], self.shape[2]);
        self.data[(i * d1 + j) * d2 + k] = v;
    }

    /// Contiguous innermost row `[i, j, ..]` of a rank-3 tensor.
    #[inline]
    pub fn row3(&self, i: usize, j: usize) -> &[S] {
        let d2 = self.shape[2];
        let start = (i * self.shape[1] + j) * d2;
        &self.data[start..start + d2]
    }

    #[inline]
    pub fn row3_mut(&mut self, i: usize, j: usize) -> &mut [S] {
        let d2 = self.shape[2];
        let start = (i * self.shape[1] + j) * d2;
        &mut self.data[start..start + d2]
    }

    /// Contiguous row `[i, ..]` of a rank-2 tensor.
    #[inline]
    pub fn row2(&self, i: usize) -> &[S] {
        let d1 = self.shape[1];
        &self.data[i * d1..(i + 1) * d1]
    }

    pub fn fill(&mut self, v: S) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Errors if shapes differ.
    pub fn same_shape(&self, other: &Self, what: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "{}: {:?} vs {:?}",
                what, self.shape, other.shape
            )));
        }
        Ok(())
    }

    /// Errors if any element is NaN or infinite.
    pub fn ensure_finite(&self, context: &'static str) -> Result<()> {
        if self.data.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(context))
        }
    }

    pub fn iter(&self) -> std::slice::Iter<'_, S> {
        self.data.iter()
    }

    /// Same data viewed under a new shape of equal volume.
    pub fn reshaped(&self, shape: &[usize]) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if expect != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {:?}",
                self.shape, shape
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::from_vec(&[2, 3], vec![0.0f64; 6]).is_ok());
        assert!(Tensor::from_vec(&[2, 3], vec![0.0f64; 5]).is_err());
        assert!(Tensor::<f64>::from_vec(&[2, 0], vec![]).is_err());
    }

    #[test]
    fn rank3_indexing_is_row_major() {
        let t = Tensor::from_vec(&[2, 2, 3], (0..12).map(|i| i as f64).collect()).unwrap();
        assert_eq!(t.at3(0, 0, 0), 0.0);
        assert_eq!(t.at3(0, 1, 2), 5.0);
        assert_eq!(t.at3(1, 0, 1), 7.0);
        assert_eq!(t.row3(1, 1), &[9.0, 10.0, 11.0]);
    }

    #[test]
    fn ensure_finite_flags_nan_and_inf() {
        let mut t = Tensor::<f64>::zeros(&[3]);
        assert!(t.ensure_finite("ok").is_ok());
        t.data_mut()[1] = f64::NAN;
        assert!(matches!(
            t.ensure_finite("ctx"),
            Err(Error::NonFinite("ctx"))
        ));
        t.data_mut()[1] = f64::INFINITY;
        assert!(t.ensure_finite("ctx").is_err());
    }
}
