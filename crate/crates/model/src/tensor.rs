//! Dense row-major f64 matrices and the numeric kernels shared by the
//! autograd tape and the incremental decoder.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "tensor data does not match {rows}x{cols}");
        Self { rows, cols, data }
    }

    pub fn scalar(v: f64) -> Self {
        Self::from_vec(1, 1, vec![v])
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

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() needs a 1x1 tensor");
        self.data[0]
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scaled(&self, s: f64) -> Tensor {
        Tensor::from_vec(self.rows, self.cols, self.data.iter().map(|v| v * s).collect())
    }

    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Strided view of a matrix for [`gemm`].
#[derive(Clone, Copy)]
pub struct View<'a> {
    pub data: &'a [f64],
    pub offset: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a> View<'a> {
    pub fn of(t: &'a Tensor) -> Self {
        View {
            data: &t.data,
            offset: 0,
            rs: t.cols,
            cs: 1,
        }
    }

    pub fn t(t: &'a Tensor) -> Self {
        View {
            data: &t.data,
            offset: 0,
            rs: 1,
            cs: t.cols,
        }
    }

    pub fn slice(data: &'a [f64], offset: usize, rs: usize, cs: usize) -> Self {
        View { data, offset, rs, cs }
    }
}

/// `C[m,n] = alpha * A[m,k] B[k,n] + beta * C` with arbitrary strides.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: View,
    b: View,
    beta: f64,
    c: &mut [f64],
    c_offset: usize,
    rsc: usize,
    csc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    let span = |rows: usize, cols: usize, rs: usize, cs: usize| {
        if rows == 0 || cols == 0 {
            0
        } else {
            (rows - 1) * rs + (cols - 1) * cs + 1
        }
    };
    assert!(a.offset + span(m, k, a.rs, a.cs) <= a.data.len(), "gemm A out of bounds");
    assert!(b.offset + span(k, n, b.rs, b.cs) <= b.data.len(), "gemm B out of bounds");
    assert!(c_offset + span(m, n, rsc, csc) <= c.len(), "gemm C out of bounds");
    // SAFETY: the asserts above keep every strided access inside the slices,
    // and `c` is borrowed mutably so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr().add(a.offset),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr().add(b.offset),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr().add(c_offset),
            rsc as isize,
            csc as isize,
        );
    }
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.cols, b.rows, "matmul shape mismatch {:?} x {:?}", a.shape(), b.shape());
    let mut out = Tensor::zeros(a.rows, b.cols);
    gemm(a.rows, a.cols, b.cols, 1.0, View::of(a), View::of(b), 0.0, &mut out.data, 0, b.cols, 1);
    out
}

/// `out += A^T B`.
pub fn matmul_tn_acc(a: &Tensor, b: &Tensor, out: &mut Tensor) {
    assert_eq!(a.rows, b.rows);
    assert_eq!(out.shape(), (a.cols, b.cols));
    let cols = out.cols;
    gemm(a.cols, a.rows, b.cols, 1.0, View::t(a), View::of(b), 1.0, &mut out.data, 0, cols, 1);
}

/// `out += A B^T`.
pub fn matmul_nt_acc(a: &Tensor, b: &Tensor, out: &mut Tensor) {
    assert_eq!(a.cols, b.cols);
    assert_eq!(out.shape(), (a.rows, b.rows));
    let cols = out.cols;
    gemm(a.rows, a.cols, b.rows, 1.0, View::of(a), View::t(b), 1.0, &mut out.data, 0, cols, 1);
}

pub const LN_EPS: f64 = 1e-5;

/// Row-wise layer norm; returns output, per-row mean and reciprocal std.
pub fn layer_norm(x: &Tensor, gamma: &[f64], beta: &[f64]) -> (Tensor, Vec<f64>, Vec<f64>) {
    let n = x.cols;
    let mut out = Tensor::zeros(x.rows, n);
    let mut means = Vec::with_capacity(x.rows);
    let mut rstds = Vec::with_capacity(x.rows);
    for i in 0..x.rows {
        let r = x.row(i);
        let mean = r.iter().sum::<f64>() / n as f64;
        let var = r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let rstd = 1.0 / (var + LN_EPS).sqrt();
        for (j, o) in out.row_mut(i).iter_mut().enumerate() {
            *o = (r[j] - mean) * rstd * gamma[j] + beta[j];
        }
        means.push(mean);
        rstds.push(rstd);
    }
    (out, means, rstds)
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

fn tanh_fast(u: f64) -> f64 {
    1.0 - 2.0 / ((2.0 * u).exp() + 1.0)
}

fn gelu_inner(x: f64) -> f64 {
    tanh_fast(GELU_C * (x + 0.044715 * x * x * x))
}

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + gelu_inner(x))
}

/// GELU value and the tanh term its derivative needs.
pub fn gelu_with_tanh(x: f64) -> (f64, f64) {
    let t = gelu_inner(x);
    (0.5 * x * (1.0 + t), t)
}

/// Derivative of [`gelu`] given the tanh term from [`gelu_with_tanh`].
pub fn gelu_grad_from(x: f64, t: f64) -> f64 {
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

pub fn gelu_grad(x: f64) -> f64 {
    gelu_grad_from(x, gelu_inner(x))
}

/// In-place numerically stable softmax of a slice.
pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Tensor, b: &Tensor) -> Tensor {
        let mut out = Tensor::zeros(a.rows, b.cols);
        for i in 0..a.rows {
            for j in 0..b.cols {
                let mut s = 0.0;
                for k in 0..a.cols {
                    s += a.get(i, k) * b.get(k, j);
                }
                out.data[i * b.cols + j] = s;
            }
        }
        out
    }

    fn seq(r: usize, c: usize, f: f64) -> Tensor {
        Tensor::from_vec(r, c, (0..r * c).map(|i| ((i as f64) * f).sin()).collect())
    }

    #[test]
    fn gemm_variants_match_naive() {
        let a = seq(5, 7, 0.3);
        let b = seq(7, 4, 0.7);
        let c = matmul(&a, &b);
        let n = naive(&a, &b);
        assert!(c.data.iter().zip(&n.data).all(|(x, y)| (x - y).abs() < 1e-12));

        let at = seq(7, 5, 0.3);
        let mut out = Tensor::zeros(5, 4);
        matmul_tn_acc(&at, &b, &mut out);
        let mut at_t = Tensor::zeros(5, 7);
        for i in 0..7 {
            for j in 0..5 {
                at_t.data[j * 7 + i] = at.get(i, j);
            }
        }
        let n = naive(&at_t, &b);
        assert!(out.data.iter().zip(&n.data).all(|(x, y)| (x - y).abs() < 1e-12));

        let bt = seq(4, 7, 0.7);
        let mut out = Tensor::zeros(5, 4);
        matmul_nt_acc(&a, &bt, &mut out);
        let mut bt_t = Tensor::zeros(7, 4);
        for i in 0..4 {
            for j in 0..7 {
                bt_t.data[j * 4 + i] = bt.get(i, j);
            }
        }
        let n = naive(&a, &bt_t);
        assert!(out.data.iter().zip(&n.data).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn gelu_grad_matches_differences() {
        for &x in &[-3.0, -0.5, 0.0, 0.3, 2.0] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn fast_tanh_matches_std() {
        for i in -400..=400 {
            let u = i as f64 * 0.05;
            assert!((tanh_fast(u) - u.tanh()).abs() < 1e-15, "{u}");
        }
        assert_eq!(tanh_fast(1e4), 1.0);
        assert_eq!(tanh_fast(-1e4), -1.0);
    }

    #[test]
    fn softmax_sums_to_one() {
        let mut v = vec![1000.0, 1001.0, 999.0];
        softmax_in_place(&mut v);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(v[1] > v[0] && v[0] > v[2]);
    }
}
