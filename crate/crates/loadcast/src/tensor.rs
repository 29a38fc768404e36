//! Dense row-major tensors with an optional gradient buffer.

use rand::Rng;

use crate::scalar::Scalar;

/// A dense array of scalars in row-major order.
///
/// The gradient buffer, when present, always has the same number of elements
/// as the data. Parameters carry gradients; inputs and activations outside
/// the tape do not.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
    grad: Option<Vec<S>>,
}

impl<S: Scalar> Tensor<S> {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        assert!(shape.iter().all(|&d| d > 0), "tensor extents must be positive");
        Tensor {
            shape: shape.to_vec(),
            data: vec![S::zero(); len],
            grad: None,
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<S>) -> Self {
        assert!(shape.iter().all(|&d| d > 0), "tensor extents must be positive");
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {:?} does not match data length {}",
            shape,
            data.len()
        );
        Tensor {
            shape: shape.to_vec(),
            data,
            grad: None,
        }
    }

    pub fn scalar(v: S) -> Self {
        Tensor::from_vec(&[1], vec![v])
    }

    pub fn vector(data: Vec<S>) -> Self {
        let len = data.len();
        Tensor::from_vec(&[len], data)
    }

    /// Uniform random tensor with entries drawn in `[lo, hi)`.
    pub fn uniform<R: Rng>(shape: &[usize], rng: &mut R, lo: f64, hi: f64) -> Self {
        let len: usize = shape.iter().product();
        let data = (0..len)
            .map(|_| S::from_f64(rng.gen_range(lo..hi)))
            .collect();
        Tensor::from_vec(shape, data)
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

    /// Row count of a 2-D tensor.
    pub fn rows(&self) -> usize {
        assert_eq!(self.shape.len(), 2, "rows() requires a 2-D tensor");
        self.shape[0]
    }

    /// Column count of a 2-D tensor.
    pub fn cols(&self) -> usize {
        assert_eq!(self.shape.len(), 2, "cols() requires a 2-D tensor");
        self.shape[1]
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn grad(&self) -> Option<&[S]> {
        self.grad.as_deref()
    }

    /// Mutable data alongside the (read-only) gradient buffer.
    pub fn data_and_grad(&mut self) -> (&mut [S], Option<&[S]>) {
        (&mut self.data, self.grad.as_deref())
    }

    /// Gradient buffer, allocated as zeros on first access.
    pub fn grad_mut(&mut self) -> &mut [S] {
        if self.grad.is_none() {
            self.grad = Some(vec![S::zero(); self.data.len()]);
        }
        self.grad.as_mut().unwrap()
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.fill(S::zero());
        }
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    /// Adds `scale * g` into the gradient buffer.
    pub fn accumulate_grad(&mut self, g: &[S], scale: S) {
        assert_eq!(g.len(), self.data.len(), "gradient length mismatch");
        let buf = self.grad_mut();
        for (b, &gi) in buf.iter_mut().zip(g) {
            *b += scale * gi;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.as_f64()).collect()
    }

    pub fn from_f64_vec(shape: &[usize], data: &[f64]) -> Self {
        Tensor::from_vec(shape, data.iter().map(|&v| S::from_f64(v)).collect())
    }

    /// Order- and bit-sensitive checksum over shape and values (FNV-1a).
    pub fn checksum(&self) -> u64 {
        let mut h = fnv_init();
        for &d in &self.shape {
            h = fnv_u64(h, d as u64);
        }
        for v in &self.data {
            h = fnv_u64(h, v.as_f64().to_bits());
        }
        h
    }
}

pub(crate) fn fnv_init() -> u64 {
    0xcbf2_9ce4_8422_2325
}

pub(crate) fn fnv_u64(mut h: u64, v: u64) -> u64 {
    for b in v.to_le_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h
}

pub(crate) fn fnv_bytes(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_data_invariant() {
        let t = Tensor::<f64>::zeros(&[3, 4]);
        assert_eq!(t.len(), 12);
        assert_eq!(t.shape(), &[3, 4]);
    }

    #[test]
    #[should_panic]
    fn mismatched_shape_panics() {
        let _ = Tensor::<f64>::from_vec(&[2, 2], vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn grad_mirrors_shape() {
        let mut t = Tensor::<f64>::zeros(&[2, 3]);
        t.accumulate_grad(&[1.0; 6], 2.0);
        assert_eq!(t.grad().unwrap(), &[2.0; 6]);
        t.zero_grad();
        assert_eq!(t.grad().unwrap(), &[0.0; 6]);
    }

    #[test]
    fn checksum_is_value_sensitive() {
        let a = Tensor::<f64>::from_vec(&[2], vec![1.0, 2.0]);
        let b = Tensor::<f64>::from_vec(&[2], vec![1.0, 2.0 + 1e-15]);
        assert_ne!(a.checksum(), b.checksum());
        assert_eq!(a.checksum(), a.clone().checksum());
    }
}
