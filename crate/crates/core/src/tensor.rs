//! Dense row-major `f64` tensors and the small set of numeric kernels the
//! pipeline stages are built from.
//!
//! There is no broadcasting and no strided view: every binary operation
//! requires identical shapes, and every result owns fresh storage.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

fn numel(shape: &[usize]) -> Option<usize> {
    shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected = numel(&shape)
            .ok_or_else(|| Error::contract(format!("shape {shape:?} overflows usize")))?;
        if expected != data.len() {
            return Err(Error::contract(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::contract(format!("non-finite value at flat index {i}")));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = numel(shape).expect("shape overflow");
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        assert!(value.is_finite());
        let n = numel(shape).expect("shape overflow");
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn identity(k: usize) -> Self {
        let mut t = Tensor::zeros(&[k, k]);
        for i in 0..k {
            t.data[i * k + i] = 1.0;
        }
        t
    }

    /// Builds a tensor by evaluating `f` at each flat index.
    pub fn from_fn(shape: &[usize], f: impl FnMut(usize) -> f64) -> Result<Self> {
        let n = numel(shape)
            .ok_or_else(|| Error::contract(format!("shape {shape:?} overflows usize")))?;
        Tensor::new(shape.to_vec(), (0..n).map(f).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.shape.len()];
        for i in (0..self.shape.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.shape[i + 1];
        }
        strides
    }

    fn flat_index(&self, index: &[usize]) -> Option<usize> {
        if index.len() != self.shape.len() {
            return None;
        }
        let mut flat = 0;
        for ((&i, &d), s) in index.iter().zip(&self.shape).zip(self.strides()) {
            if i >= d {
                return None;
            }
            flat += i * s;
        }
        Some(flat)
    }

    pub fn get(&self, index: &[usize]) -> Option<f64> {
        self.flat_index(index).map(|i| self.data[i])
    }

    /// Same data under a new shape with equal element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        Tensor::new(shape.to_vec(), self.data.clone())
    }

    /// Removes `axis`, replacing each line along it by its arithmetic mean.
    pub fn mean_axis(&self, axis: usize) -> Result<Tensor> {
        if axis >= self.rank() {
            return Err(Error::contract(format!(
                "axis {axis} out of range for rank {}",
                self.rank()
            )));
        }
        let len = self.shape[axis];
        if len == 0 {
            return Err(Error::contract(format!("cannot average over empty axis {axis}")));
        }
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            let base = o * len * inner;
            let row = &mut out[o * inner..(o + 1) * inner];
            for a in 0..len {
                let src = &self.data[base + a * inner..base + (a + 1) * inner];
                for (acc, v) in row.iter_mut().zip(src) {
                    *acc += v;
                }
            }
            for acc in row.iter_mut() {
                *acc /= len as f64;
            }
        }
        let mut shape = self.shape.clone();
        shape.remove(axis);
        Ok(Tensor { shape, data: out })
    }

    /// Stacks the rows of `other` below the rows of `self`.
    pub fn concat_axis0(&self, other: &Tensor) -> Result<Tensor> {
        if self.rank() == 0 || other.rank() == 0 || self.shape[1..] != other.shape[1..] {
            return Err(Error::contract(format!(
                "cannot concatenate shapes {:?} and {:?} along axis 0",
                self.shape, other.shape
            )));
        }
        let mut shape = self.shape.clone();
        shape[0] += other.shape[0];
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(Tensor { shape, data })
    }

    /// Inverse of [`Tensor::concat_axis0`]: the first `at` rows and the rest.
    pub fn split_axis0(&self, at: usize) -> Result<(Tensor, Tensor)> {
        if self.rank() == 0 || at > self.shape[0] {
            return Err(Error::contract(format!(
                "cannot split shape {:?} at row {at}",
                self.shape
            )));
        }
        let row: usize = self.shape[1..].iter().product();
        let (head, tail) = self.data.split_at(at * row);
        let mut hs = self.shape.clone();
        hs[0] = at;
        let mut ts = self.shape.clone();
        ts[0] -= at;
        Ok((
            Tensor { shape: hs, data: head.to_vec() },
            Tensor { shape: ts, data: tail.to_vec() },
        ))
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.rank() != 2 || other.rank() != 2 || self.shape[1] != other.shape[0] {
            return Err(Error::contract(format!(
                "matmul needs [m,k] x [k,n], got {:?} x {:?}",
                self.shape, other.shape
            )));
        }
        let (m, k, n) = (self.shape[0], self.shape[1], other.shape[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let out_row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Tensor::new(vec![m, n], out)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn zip_with(&self, other: &Tensor, op: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::contract(format!(
                "{op} needs identical shapes, got {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn sigmoid(&self) -> Tensor {
        self.map(sigmoid)
    }

    pub fn elementwise_mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "elementwise_mul", |a, b| a * b)
    }

    pub fn elementwise_max(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "elementwise_max", f64::max)
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

/// Logistic function, evaluated in a form that cannot overflow.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn new_rejects_length_mismatch_and_nan() {
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::new(vec![1], vec![f64::NAN]).is_err());
    }

    #[test]
    fn mean_axis_examples() {
        let m = t(&[2, 2], &[1.0, 3.0, 5.0, 7.0]).mean_axis(0).unwrap();
        assert_eq!(m.shape(), &[2]);
        assert_eq!(m.data(), &[3.0, 5.0]);

        let x = t(&[3, 1, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let y = x.mean_axis(1).unwrap();
        assert_eq!(y.shape(), &[3, 2]);
        assert_eq!(y.data(), x.data());

        let c = Tensor::full(&[3, 4, 2], 2.5);
        for axis in 0..3 {
            assert!(c.mean_axis(axis).unwrap().data().iter().all(|&v| v == 2.5));
        }
        assert!(matches!(c.mean_axis(3), Err(Error::Contract(_))));
    }

    #[test]
    fn concat_examples() {
        let a = t(&[2, 1], &[2.0, 6.0]);
        let b = t(&[2, 1], &[3.0, 5.0]);
        let c = a.concat_axis0(&b).unwrap();
        assert_eq!(c.shape(), &[4, 1]);
        assert_eq!(c.data(), &[2.0, 6.0, 3.0, 5.0]);

        let empty = Tensor::zeros(&[0, 1]);
        assert_eq!(a.concat_axis0(&empty).unwrap(), a);

        let bad = t(&[1, 3], &[0.0; 3]);
        assert!(t(&[1, 2], &[0.0; 2]).concat_axis0(&bad).is_err());
    }

    #[test]
    fn matmul_examples() {
        let a = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(a.matmul(&Tensor::identity(2)).unwrap(), a);
        assert_eq!(a.matmul(&Tensor::zeros(&[2, 3])).unwrap(), Tensor::zeros(&[2, 3]));
        let ones = t(&[2, 1], &[1.0, 1.0]);
        assert_eq!(a.matmul(&ones).unwrap().data(), &[3.0, 7.0]);
        assert!(a.matmul(&Tensor::zeros(&[3, 1])).is_err());
    }

    #[test]
    fn sigmoid_and_binary_ops() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(1.0) - 0.7310585786).abs() < 1e-9);
        let a = t(&[2], &[-1.0, 4.0]);
        assert_eq!(a.elementwise_max(&a).unwrap(), a);
        assert!(a.elementwise_mul(&t(&[1], &[1.0])).is_err());
        assert_eq!(
            a.elementwise_mul(&t(&[2], &[2.0, 0.5])).unwrap().data(),
            &[-2.0, 2.0]
        );
    }

    fn tensor3() -> impl Strategy<Value = Tensor> {
        (1usize..=4, 1usize..=4, 1usize..=4).prop_flat_map(|(a, b, c)| {
            prop::collection::vec(-10.0f64..10.0, a * b * c)
                .prop_map(move |d| Tensor::new(vec![a, b, c], d).unwrap())
        })
    }

    fn matrix(m: usize, k: usize) -> impl Strategy<Value = Tensor> {
        prop::collection::vec(-5.0f64..5.0, m * k)
            .prop_map(move |d| Tensor::new(vec![m, k], d).unwrap())
    }

    proptest! {
        #[test]
        fn mean_axis_order_commutes(x in tensor3()) {
            let a = x.mean_axis(0).unwrap().mean_axis(0).unwrap();
            let b = x.mean_axis(1).unwrap().mean_axis(0).unwrap();
            prop_assert_eq!(a.shape(), b.shape());
            for (p, q) in a.data().iter().zip(b.data()) {
                prop_assert!((p - q).abs() < 1e-9);
            }
        }

        #[test]
        fn matmul_is_linear_in_left_argument(
            (a1, a2, b) in (1usize..4, 1usize..4, 1usize..4)
                .prop_flat_map(|(m, k, n)| (matrix(m, k), matrix(m, k), matrix(k, n)))
        ) {
            let lhs = a1.add(&a2).unwrap().matmul(&b).unwrap();
            let rhs = a1.matmul(&b).unwrap().add(&a2.matmul(&b).unwrap()).unwrap();
            for (p, q) in lhs.data().iter().zip(rhs.data()) {
                prop_assert!((p - q).abs() < 1e-9);
            }
        }

        #[test]
        fn concat_then_split_recovers_parts(
            (a, b) in (0usize..4, 0usize..4, 1usize..4)
                .prop_flat_map(|(m, n, w)| (matrix(m, w), matrix(n, w)))
        ) {
            let c = a.concat_axis0(&b).unwrap();
            let (x, y) = c.split_axis0(a.shape()[0]).unwrap();
            prop_assert_eq!(x, a);
            prop_assert_eq!(y, b);
        }

        #[test]
        fn sigmoid_in_open_unit_interval(x in -30.0f64..30.0) {
            let s = sigmoid(x);
            prop_assert!(s > 0.0 && s < 1.0);
        }
    }
}
