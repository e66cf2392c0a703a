//! Dense rank-4 tensors in row-major (n, c, h, w) layout.
//!
//! One fixed layout is used everywhere: element (n, c, y, x) lives at offset
//! `((n*C + c)*H + y)*W + x`. Tensors are plain owned buffers; layers treat
//! them as immutable values outside their own update step.

use crate::{Error, Real, Result};

/// Dimensions of a [`Tensor`]: batch, channels, height, width.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Shape {
        Shape { n, c, h, w }
    }

    /// Total element count, rejecting empty or overflowing dimensions.
    pub fn checked_len(&self) -> Result<usize> {
        if self.n == 0 || self.c == 0 || self.h == 0 || self.w == 0 {
            return Err(Error::Shape(format!("dimensions must be >= 1, got {self:?}")));
        }
        self.n
            .checked_mul(self.c)
            .and_then(|v| v.checked_mul(self.h))
            .and_then(|v| v.checked_mul(self.w))
            .ok_or_else(|| Error::Shape(format!("dimension product overflows: {self:?}")))
    }

    pub fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Elements per example.
    pub fn features(&self) -> usize {
        self.c * self.h * self.w
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

/// Dense rank-4 array of [`Real`] values.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<Real>,
}

impl Tensor {
    /// All-zero tensor of the given shape.
    pub fn zeros(shape: Shape) -> Result<Tensor> {
        let len = shape.checked_len()?;
        Ok(Tensor { shape, data: vec![0.0; len] })
    }

    /// Tensor filled with a constant.
    pub fn filled(shape: Shape, value: Real) -> Result<Tensor> {
        let len = shape.checked_len()?;
        Ok(Tensor { shape, data: vec![value; len] })
    }

    /// Wrap an existing buffer; its length must match the shape.
    pub fn from_vec(shape: Shape, data: Vec<Real>) -> Result<Tensor> {
        let len = shape.checked_len()?;
        if data.len() != len {
            return Err(Error::Shape(format!(
                "buffer of {} elements does not fill shape {shape}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[Real] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Real] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Real> {
        self.data
    }

    /// Flat offset of element (n, c, y, x).
    #[inline]
    pub fn offset(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.shape.c + c) * self.shape.h + y) * self.shape.w + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> Real {
        self.data[self.offset(n, c, y, x)]
    }

    #[inline]
    pub fn at_mut(&mut self, n: usize, c: usize, y: usize, x: usize) -> &mut Real {
        let i = self.offset(n, c, y, x);
        &mut self.data[i]
    }

    /// The (c, h, w) block of one example.
    pub fn example(&self, n: usize) -> &[Real] {
        let f = self.shape.features();
        &self.data[n * f..(n + 1) * f]
    }

    /// Apply a scalar function elementwise, preserving shape.
    pub fn map(&self, f: impl Fn(Real) -> Real) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Reinterpret the buffer under a new shape with the same element count.
    pub fn reshape(self, shape: Shape) -> Result<Tensor> {
        let len = shape.checked_len()?;
        if len != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {} to {shape}",
                self.shape
            )));
        }
        Ok(Tensor { shape, data: self.data })
    }
}

/// `y + alpha * x`, elementwise.
pub fn axpy(alpha: Real, x: &Tensor, y: &Tensor) -> Result<Tensor> {
    if x.shape != y.shape {
        return Err(Error::Shape(format!(
            "axpy operands disagree: {} vs {}",
            x.shape, y.shape
        )));
    }
    let data = x
        .data
        .iter()
        .zip(&y.data)
        .map(|(&xv, &yv)| yv + alpha * xv)
        .collect();
    Ok(Tensor { shape: x.shape, data })
}

/// Inner product of two tensors of identical shape.
pub fn dot(a: &Tensor, b: &Tensor) -> Result<Real> {
    if a.shape != b.shape {
        return Err(Error::Shape(format!(
            "dot operands disagree: {} vs {}",
            a.shape, b.shape
        )));
    }
    Ok(a.data.iter().zip(&b.data).map(|(&x, &y)| x * y).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zeros_by_definition() {
        let t = Tensor::zeros(Shape::new(1, 1, 2, 2)).unwrap();
        assert_eq!(t.data(), &[0.0; 4]);
        let t = Tensor::zeros(Shape::new(2, 3, 4, 4)).unwrap();
        assert_eq!(t.data().len(), 96);
        assert!(t.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(matches!(
            Tensor::zeros(Shape::new(1, 0, 2, 2)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn overflowing_dimension_rejected() {
        let s = Shape::new(usize::MAX, 2, 2, 2);
        assert!(matches!(Tensor::zeros(s), Err(Error::Shape(_))));
    }

    #[test]
    fn map_identity_and_relu_and_square() {
        let t = Tensor::from_vec(Shape::new(1, 1, 1, 2), vec![-1.0, 2.0]).unwrap();
        assert_eq!(t.map(|v| v), t);
        assert_eq!(t.map(|v| v.max(0.0)).data(), &[0.0, 2.0]);
        let s = Tensor::from_vec(Shape::new(1, 1, 1, 1), vec![3.0]).unwrap();
        assert_eq!(s.map(|v| v * v).data(), &[9.0]);
    }

    #[test]
    fn axpy_identity_double_and_mismatch() {
        let shape = Shape::new(1, 1, 2, 2);
        let x = Tensor::from_vec(shape, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = x.clone();
        assert_eq!(axpy(0.0, &x, &y).unwrap(), y);
        assert_eq!(
            axpy(1.0, &x, &y).unwrap().data(),
            &[2.0, 4.0, 6.0, 8.0]
        );
        let z = Tensor::zeros(Shape::new(1, 1, 1, 4)).unwrap();
        assert!(matches!(axpy(1.0, &x, &z), Err(Error::Shape(_))));
    }

    #[test]
    fn flatten_reshape_round_trip() {
        let shape = Shape::new(2, 3, 2, 2);
        let data: Vec<Real> = (0..24).map(|i| i as Real).collect();
        let t = Tensor::from_vec(shape, data.clone()).unwrap();
        let flat = t.clone().reshape(Shape::new(1, 1, 1, 24)).unwrap();
        let back = flat.reshape(shape).unwrap();
        assert_eq!(back.data(), &data[..]);
    }

    // Scan the buffer with nested loops and a running counter; every element
    // must appear exactly where `at` finds it.
    #[test]
    fn indexing_matches_scalar_loop_oracle() {
        let shape = Shape::new(3, 4, 5, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data: Vec<Real> = (0..shape.len()).map(|_| rng.gen::<Real>()).collect();
        let t = Tensor::from_vec(shape, data.clone()).unwrap();
        let mut flat = 0usize;
        for n in 0..shape.n {
            for c in 0..shape.c {
                for y in 0..shape.h {
                    for x in 0..shape.w {
                        assert_eq!(t.at(n, c, y, x), data[flat]);
                        assert_eq!(t.offset(n, c, y, x), flat);
                        flat += 1;
                    }
                }
            }
        }
        assert_eq!(flat, shape.len());
    }
}
