use crate::Scalar;

/// Dense row-major 2-D tensor. Vectors are `1 x n`, scalars `1 x 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![S::zero(); rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, value: S) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Self {
        assert_eq!(rows * cols, data.len(), "tensor data length does not match shape");
        Self { rows, cols, data }
    }

    pub fn scalar(value: S) -> Self {
        Self::from_vec(1, 1, vec![value])
    }

    pub fn column(values: Vec<S>) -> Self {
        let n = values.len();
        Self::from_vec(n, 1, values)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [S] {
        let cols = self.cols;
        &mut self.data[r * cols..(r + 1) * cols]
    }

    pub fn item(&self) -> S {
        assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn add_assign(&mut self, other: &Tensor<S>) {
        assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale_in_place(&mut self, s: S) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> S {
        self.data.iter().copied().sum()
    }

    /// Converts element-wise into another scalar type.
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| T::lit(v.as_f64())).collect(),
        }
    }
}

/// `out = a · b` for `a: m x k`, `b: k x n`.
pub fn matmul<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Tensor<S> {
    assert_eq!(a.cols, b.rows, "matmul inner dimensions differ");
    let mut out = Tensor::zeros(a.rows, b.cols);
    matmul_acc(&a.data, &b.data, &mut out.data, a.rows, a.cols, b.cols);
    out
}

/// `out += a · b` on raw row-major slices.
pub fn matmul_acc<S: Scalar>(a: &[S], b: &[S], out: &mut [S], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &av) in a_row.iter().enumerate() {
            if av == S::zero() {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// `out += g · bᵀ` for `g: m x n`, `b: k x n`, `out: m x k`.
pub fn matmul_bt_acc<S: Scalar>(g: &[S], b: &[S], out: &mut [S], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let b_row = &b[p * n..(p + 1) * n];
            let mut acc = S::zero();
            for (&x, &y) in g_row.iter().zip(b_row) {
                acc += x * y;
            }
            out[i * k + p] += acc;
        }
    }
}

/// `out += aᵀ · g` for `a: m x k`, `g: m x n`, `out: k x n`.
pub fn matmul_at_acc<S: Scalar>(a: &[S], g: &[S], out: &mut [S], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == S::zero() {
                continue;
            }
            let out_row = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in out_row.iter_mut().zip(g_row) {
                *o += av * gv;
            }
        }
    }
}

/// Numerically stable in-place softmax over a slice.
pub fn softmax_in_place<S: Scalar>(xs: &mut [S]) {
    let max = xs.iter().copied().fold(S::neg_infinity(), S::max);
    let mut total = S::zero();
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in xs.iter_mut() {
        *x /= total;
    }
}

/// Log-softmax of a slice.
pub fn log_softmax<S: Scalar>(xs: &[S]) -> Vec<S> {
    let max = xs.iter().copied().fold(S::neg_infinity(), S::max);
    let lse = max + xs.iter().map(|&x| (x - max).exp()).sum::<S>().ln();
    xs.iter().map(|&x| x - lse).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        let a = Tensor::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Tensor::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = matmul(&a, &b);
        assert_eq!(c.data, vec![58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn transposed_products_match_explicit() {
        let a: Tensor<f64> = Tensor::from_vec(2, 3, vec![1.0, -2.0, 0.5, 3.0, 1.0, -1.0]);
        let g: Tensor<f64> = Tensor::from_vec(2, 2, vec![0.1, 0.2, -0.3, 0.4]);
        // aᵀ g : 3 x 2
        let mut at = vec![0.0; 6];
        matmul_at_acc(&a.data, &g.data, &mut at, 2, 3, 2);
        for p in 0..3 {
            for j in 0..2 {
                let want: f64 = (0..2).map(|i| a.at(i, p) * g.at(i, j)).sum();
                assert!((at[p * 2 + j] - want).abs() < 1e-15);
            }
        }
        // g bᵀ with b: 3 x 2 -> 2 x 3
        let b: Tensor<f64> = Tensor::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut gbt = vec![0.0; 6];
        matmul_bt_acc(&g.data, &b.data, &mut gbt, 2, 3, 2);
        for i in 0..2 {
            for p in 0..3 {
                let want: f64 = (0..2).map(|j| g.at(i, j) * b.at(p, j)).sum();
                assert!((gbt[i * 3 + p] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut xs = vec![1.0f64, -3.0, 200.0, 0.5];
        softmax_in_place(&mut xs);
        assert!((xs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let ls = log_softmax(&[0.0f64; 16]);
        assert!((ls[3] + 16f64.ln()).abs() < 1e-15);
    }
}
