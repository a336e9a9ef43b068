//! Dense double-precision tensor with row-major storage.

use std::sync::Arc;

use smallvec::SmallVec;

use crate::error::{Error, Result};

type Shape = SmallVec<[usize; 3]>;

/// Shape-tagged contiguous array of `f64` in row-major order.
///
/// The unit of all numeric computation in this crate. Shapes are kept
/// small (rank 1 to 3) and all arithmetic is double precision. Cloning
/// is cheap: the data buffer is shared copy-on-write, so value
/// semantics are preserved while computation records can snapshot
/// parameter tensors without copying them.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Arc<Vec<f64>>,
}

impl Tensor {
    /// Builds a tensor, rejecting shape/data length mismatches and
    /// non-finite values.
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Dimension(format!(
                "shape {:?} expects {} values, got {}",
                shape,
                expected,
                data.len()
            )));
        }
        let t = Tensor {
            shape: Shape::from_slice(shape),
            data: Arc::new(data),
        };
        t.validate_finite()?;
        Ok(t)
    }

    /// Zero-filled tensor of the given shape.
    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape: Shape::from_slice(shape),
            data: Arc::new(vec![0.0; n]),
        }
    }

    /// 1-D tensor from a value list; no finiteness check, see
    /// [`Tensor::new`] for validated construction.
    pub fn from_vec(data: Vec<f64>) -> Self {
        Tensor {
            shape: SmallVec::from_slice(&[data.len()]),
            data: Arc::new(data),
        }
    }

    /// Single-element tensor holding `v`.
    pub fn scalar(v: f64) -> Self {
        Tensor::from_vec(vec![v])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable view of the values; copies the buffer first if it is
    /// currently shared with a clone.
    pub fn data_mut(&mut self) -> &mut [f64] {
        Arc::make_mut(&mut self.data).as_mut_slice()
    }

    /// True when the tensor holds exactly one value.
    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single value of a scalar tensor.
    ///
    /// Panics if the tensor is not scalar; callers check `is_scalar` or
    /// construct via [`Tensor::scalar`].
    pub fn item(&self) -> f64 {
        assert!(self.is_scalar(), "item() on non-scalar tensor");
        self.data[0]
    }

    /// Same data viewed under a new shape with equal element count.
    pub fn reshaped(&self, shape: &[usize]) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() {
            return Err(Error::Dimension(format!(
                "cannot reshape {} elements to {:?}",
                self.data.len(),
                shape
            )));
        }
        Ok(Tensor {
            shape: Shape::from_slice(shape),
            data: Arc::clone(&self.data),
        })
    }

    /// Rejects NaN or infinite entries.
    pub fn validate_finite(&self) -> Result<()> {
        if let Some(pos) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite value {} at flat index {}",
                self.data[pos], pos
            )));
        }
        Ok(())
    }

    /// Element at a 2-D index, row-major.
    pub fn at2(&self, i: usize, j: usize) -> f64 {
        debug_assert_eq!(self.shape.len(), 2);
        self.data[i * self.shape[1] + j]
    }

    /// In-place elementwise addition.
    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data_mut().iter_mut().zip(other.data.iter()) {
            *a += b;
        }
    }

    /// In-place scaling.
    pub fn scale(&mut self, c: f64) {
        for v in self.data_mut() {
            *v *= c;
        }
    }

    /// Zeroes every entry, keeping the allocation when unshared.
    pub fn fill_zero(&mut self) {
        for v in self.data_mut() {
            *v = 0.0;
        }
    }

    /// Mean of absolute values; 0 for an empty tensor.
    pub fn mean_abs(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|v| v.abs()).sum::<f64>() / self.data.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_product_must_match_data_length() {
        assert!(Tensor::new(&[2, 3], vec![0.0; 6]).is_ok());
        let err = Tensor::new(&[2, 3], vec![0.0; 5]).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn non_finite_values_rejected() {
        assert!(matches!(
            Tensor::new(&[2], vec![1.0, f64::NAN]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            Tensor::new(&[1], vec![f64::INFINITY]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn reshape_preserves_data() {
        let t = Tensor::new(&[2, 3], (0..6).map(|i| i as f64).collect()).unwrap();
        let r = t.reshaped(&[6]).unwrap();
        assert_eq!(r.shape(), &[6]);
        assert_eq!(r.data(), t.data());
        assert!(t.reshaped(&[4]).is_err());
    }

    #[test]
    fn scalar_accessors() {
        let s = Tensor::scalar(2.5);
        assert!(s.is_scalar());
        assert_eq!(s.item(), 2.5);
    }

    #[test]
    fn clone_is_copy_on_write() {
        let mut a = Tensor::from_vec(vec![1.0, 2.0]);
        let b = a.clone();
        a.data_mut()[0] = 9.0;
        assert_eq!(a.data(), &[9.0, 2.0]);
        assert_eq!(b.data(), &[1.0, 2.0], "clone must be unaffected by mutation");
    }
}
