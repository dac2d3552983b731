//! Dense row-major `f64` tensors.
//!
//! `Tensor` is the sole value carrier: activations, weights, mask scores,
//! gradients. Operations allocate fresh tensors; summation order is fixed so
//! results are bit-identical across runs of the same build.

use crate::error::{Error, Result};
use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor; `data.len()` must equal the shape product.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::dimension(format_args!(
                "shape {:?} implies {} elements, got {}",
                shape,
                numel,
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; numel],
        }
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; numel],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::dimension("ragged rows"));
        }
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            data.extend_from_slice(row);
        }
        Tensor::new(vec![r, c], data)
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
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
    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != self.data.len() {
            return Err(Error::dimension(format_args!(
                "cannot reshape {} elements to {:?}",
                self.data.len(),
                shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.shape == other.shape
    }

    /// Elementwise product (`a ⊙ b`).
    pub fn hadamard(&self, other: &Tensor) -> Result<Tensor> {
        if !self.same_shape(other) {
            return Err(Error::dimension(format_args!(
                "hadamard shapes {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Matrix product of 2-D tensors `[r, k] x [k, c] -> [r, c]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (&[r, k], &[k2, c]) = (&self.shape[..], &other.shape[..]) else {
            return Err(Error::dimension(format_args!(
                "matmul needs 2-D operands, got {:?} and {:?}",
                self.shape, other.shape
            )));
        };
        if k != k2 {
            return Err(Error::dimension(format_args!(
                "matmul inner dimensions {k} vs {k2}"
            )));
        }
        let mut out = vec![0.0; r * c];
        mm(&self.data, r, k, &other.data, c, &mut out);
        Ok(Tensor {
            shape: vec![r, c],
            data: out,
        })
    }

    /// 2-D transpose.
    pub fn transpose(&self) -> Result<Tensor> {
        let &[r, c] = &self.shape[..] else {
            return Err(Error::dimension("transpose needs a 2-D tensor"));
        };
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(Tensor {
            shape: vec![c, r],
            data,
        })
    }
}

/// `out += a[r x k] * b[k x c]`, row-major. i-k-j loop order keeps the inner
/// loop contiguous in both `b` and `out`.
pub(crate) fn mm(a: &[f64], r: usize, k: usize, b: &[f64], c: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), r * k);
    debug_assert_eq!(b.len(), k * c);
    debug_assert_eq!(out.len(), r * c);
    for i in 0..r {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * c..(i + 1) * c];
        for (l, &av) in a_row.iter().enumerate() {
            let b_row = &b[l * c..(l + 1) * c];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// `out += a^T * b` where `a` is `[k x r]`, `b` is `[k x c]`, `out` is `[r x c]`.
pub(crate) fn mm_at_b(a: &[f64], k: usize, r: usize, b: &[f64], c: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), k * r);
    debug_assert_eq!(b.len(), k * c);
    debug_assert_eq!(out.len(), r * c);
    for l in 0..k {
        let a_row = &a[l * r..(l + 1) * r];
        let b_row = &b[l * c..(l + 1) * c];
        for (i, &av) in a_row.iter().enumerate() {
            let out_row = &mut out[i * c..(i + 1) * c];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// `out += a * b^T` where `a` is `[r x k]`, `b` is `[c x k]`, `out` is `[r x c]`.
pub(crate) fn mm_a_bt(a: &[f64], r: usize, k: usize, b: &[f64], c: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), r * k);
    debug_assert_eq!(b.len(), c * k);
    debug_assert_eq!(out.len(), r * c);
    for i in 0..r {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * c..(i + 1) * c];
        for (j, o) in out_row.iter_mut().enumerate() {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (&av, &bv) in a_row.iter().zip(b_row) {
                acc += av * bv;
            }
            *o += acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let a = t2(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let eye = t2(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(a.matmul(&eye).unwrap(), a);
    }

    #[test]
    fn matmul_annihilator() {
        let a = t2(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let zero = Tensor::zeros(vec![2, 2]);
        assert_eq!(a.matmul(&zero).unwrap(), zero);
    }

    #[test]
    fn matmul_hand_product() {
        // [[1,2],[3,4]] x [[5,6],[7,8]] worked out by hand.
        let a = t2(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = t2(&[&[5.0, 6.0], &[7.0, 8.0]]);
        let expect = t2(&[&[19.0, 22.0], &[43.0, 50.0]]);
        assert_eq!(a.matmul(&b).unwrap(), expect);
    }

    #[test]
    fn matmul_shape_mismatch() {
        let a = Tensor::zeros(vec![2, 3]);
        let b = Tensor::zeros(vec![2, 2]);
        assert!(matches!(a.matmul(&b), Err(Error::Dimension(_))));
    }

    #[test]
    fn matmul_deterministic() {
        let mut rng = crate::rng::Rng::seeded(11);
        let a = Tensor::new(vec![7, 5], (0..35).map(|_| rng.normal()).collect()).unwrap();
        let b = Tensor::new(vec![5, 9], (0..45).map(|_| rng.normal()).collect()).unwrap();
        let x = a.matmul(&b).unwrap();
        let y = a.matmul(&b).unwrap();
        assert_eq!(x.data(), y.data());
    }

    #[test]
    fn transpose_round_trip() {
        let a = t2(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        let tt = a.transpose().unwrap().transpose().unwrap();
        assert_eq!(a, tt);
    }

    #[test]
    fn mm_variants_agree() {
        let mut rng = crate::rng::Rng::seeded(5);
        let a: Vec<f64> = (0..12).map(|_| rng.normal()).collect(); // 3x4
        let b: Vec<f64> = (0..20).map(|_| rng.normal()).collect(); // 4x5
        let mut base = vec![0.0; 15];
        mm(&a, 3, 4, &b, 5, &mut base);

        // a^T laid out as [4 x 3]
        let mut at = vec![0.0; 12];
        for i in 0..3 {
            for l in 0..4 {
                at[l * 3 + i] = a[i * 4 + l];
            }
        }
        let mut out = vec![0.0; 15];
        mm_at_b(&at, 4, 3, &b, 5, &mut out);
        for (x, y) in base.iter().zip(&out) {
            assert!((x - y).abs() < 1e-12);
        }

        // b^T laid out as [5 x 4]
        let mut bt = vec![0.0; 20];
        for l in 0..4 {
            for j in 0..5 {
                bt[j * 4 + l] = b[l * 5 + j];
            }
        }
        let mut out2 = vec![0.0; 15];
        mm_a_bt(&a, 3, 4, &bt, 5, &mut out2);
        for (x, y) in base.iter().zip(&out2) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn new_rejects_bad_length() {
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
    }

    #[test]
    fn hadamard_by_hand() {
        let a = Tensor::new(vec![3], vec![1.0, -2.0, 3.0]).unwrap();
        let m = Tensor::new(vec![3], vec![1.0, 0.0, 1.0]).unwrap();
        assert_eq!(a.hadamard(&m).unwrap().data(), &[1.0, 0.0, 3.0]);
    }
}
